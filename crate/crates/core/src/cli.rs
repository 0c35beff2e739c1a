//! Command-line interface.
//!
//! Every output file starts with the resolved configuration (a `# ` comment
//! line for CSV files, a `config` record for JSON Lines files) so a run can
//! be repeated exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{load_dataset, standardize_covariates, write_dataset, Dataset, Schema};
use crate::em::{bootstrap_se, fit_em, EmConfig, FitResult, IncidenceKind};
use crate::error::{CureError, Result};
use crate::evaluation::{monte_carlo_study, write_roc, write_table1, write_table2, write_table3, StudyOutcome};
use crate::seeding::substream;
use crate::simulation::{generate_dataset, Scenario, ScenarioSpec};
use crate::svm::{default_grid, grid_from};

#[derive(Debug, Parser)]
#[command(name = "svmcure", version, about = "SVM-based mixture cure model for interval-censored data")]
pub struct Cli {
    /// Worker threads (default: all available cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a simulated scenario dataset as CSV.
    Simulate(SimulateArgs),
    /// Fit the cure model and write a JSON Lines result file.
    Fit(FitArgs),
    /// Fit, then add bootstrap standard errors and p-values.
    Bootstrap(BootstrapArgs),
    /// Run the Monte Carlo study behind one of the comparison tables.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Incidence {
    Svm,
    Logistic,
}

impl From<Incidence> for IncidenceKind {
    fn from(i: Incidence) -> Self {
        match i {
            Incidence::Svm => IncidenceKind::Svm,
            Incidence::Logistic => IncidenceKind::Logistic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Table {
    Table1,
    Table2,
    Table3,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 1)]
    pub scenario: u8,
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EmArgs {
    #[arg(long, value_enum, default_value_t = Incidence::Svm)]
    pub incidence: Incidence,
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    #[arg(long = "max-iter", default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 5)]
    pub imputations: usize,
    /// Comma-separated C values for the tuning grid.
    #[arg(long = "grid-c", value_delimiter = ',')]
    pub grid_c: Vec<f64>,
    /// Comma-separated kernel widths for the tuning grid.
    #[arg(long = "grid-sigma2", value_delimiter = ',')]
    pub grid_sigma2: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl EmArgs {
    fn em_config(&self, bootstrap_b: usize) -> Result<EmConfig> {
        let grid = match (self.grid_c.is_empty(), self.grid_sigma2.is_empty()) {
            (true, true) => default_grid(),
            (false, false) => grid_from(&self.grid_c, &self.grid_sigma2),
            _ => {
                return Err(CureError::Config(
                    "--grid-c and --grid-sigma2 must be given together".into(),
                ))
            }
        };
        let cfg = EmConfig {
            incidence: self.incidence.into(),
            epsilon: self.epsilon,
            max_iter: self.max_iter,
            n_impute: self.imputations,
            grid,
            folds: self.folds,
            bootstrap_b,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Column mapping, e.g. `L=left,R=right,delta=d,x=age+sex,z=age+sex`.
    #[arg(long, default_value = "")]
    pub schema: String,
    #[command(flatten)]
    pub em: EmArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    /// Number of bootstrap resamples.
    #[arg(long, default_value_t = 300)]
    pub bootstrap: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub table: Table,
    /// Scenario to run; all three when omitted.
    #[arg(long)]
    pub scenario: Option<u8>,
    /// Sample size (default 300, or 400 for table3).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub runs: usize,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub em: EmArgs,
}

fn with_path(path: &Path, e: CureError) -> CureError {
    match e {
        CureError::Io(io) => CureError::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| with_path(path, e.into()))
}

fn config_comment<T: Serialize>(command: &str, args: &T) -> Result<String> {
    Ok(serde_json::to_string(&json!({ "command": command, "args": args }))?)
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let spec = ScenarioSpec::new(Scenario::from_id(args.scenario)?, args.n);
    spec.validate()?;
    let d = generate_dataset(&spec, &mut substream(args.seed, 0))?;
    let comment = config_comment("simulate", args)?;
    let mut out = create(&args.output)?;
    write_dataset(&d, &mut out, Some(&comment))?;
    out.flush()?;
    Ok(())
}

/// Loads the input and, for the SVM, standardizes the incidence covariates.
fn prepare(args: &FitArgs) -> Result<(Dataset, EmConfig)> {
    let schema = Schema::parse(&args.schema)?;
    let cfg = args.em.em_config(0)?;
    let d = load_dataset(&args.input, &schema).map_err(|e| with_path(&args.input, e))?;
    let d = match cfg.incidence {
        IncidenceKind::Svm => standardize_covariates(&d)?,
        IncidenceKind::Logistic => d,
    };
    Ok((d, cfg))
}

fn write_line<W: Write>(out: &mut W, value: &serde_json::Value) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn write_fit<W: Write>(out: &mut W, d: &Dataset, fit: &FitResult) -> Result<()> {
    write_line(
        out,
        &json!({
            "type": "estimates",
            "alpha": fit.latency.alpha,
            "gamma": fit.latency.gamma,
            "x_names": d.x_names,
            "mean_pi": fit.mean_pi(),
            "converged": fit.converged,
            "iterations": fit.iterations,
            "hyper_params": fit.hyper_params,
            "logistic_beta": fit.logistic.as_ref().map(|b| &b.beta),
            "z_names": d.z_names,
            "z_scaling": d.scaling,
        }),
    )?;
    for t in &fit.trace {
        let mut v = serde_json::to_value(t)?;
        v["type"] = json!("trace");
        write_line(out, &v)?;
    }
    for (i, (pi, w)) in fit.pi_hat.iter().zip(&fit.weights).enumerate() {
        write_line(out, &json!({ "type": "subject", "index": i, "pi_hat": pi, "weight": w }))?;
    }
    let mut diag = serde_json::to_value(&fit.diagnostics)?;
    diag["type"] = json!("diagnostics");
    write_line(out, &diag)
}

fn fit(args: &FitArgs) -> Result<()> {
    let (d, cfg) = prepare(args)?;
    let result = fit_em(&d, &cfg)?;
    let mut out = create(&args.output)?;
    write_line(&mut out, &json!({ "type": "config", "command": "fit", "args": args }))?;
    write_fit(&mut out, &d, &result)?;
    out.flush()?;
    Ok(())
}

/// Two-sided normal-approximation p-value of `estimate / se`.
pub fn wald_p_value(estimate: f64, se: f64) -> f64 {
    if !(se > 0.0) {
        return f64::NAN;
    }
    let normal = Normal::standard();
    2.0 * normal.sf((estimate / se).abs())
}

fn bootstrap(args: &BootstrapArgs) -> Result<()> {
    let (d, mut cfg) = prepare(&args.fit)?;
    cfg.bootstrap_b = args.bootstrap;
    let result = fit_em(&d, &cfg)?;
    let summary = bootstrap_se(&d, &cfg)?;
    let mut out = create(&args.fit.output)?;
    write_line(&mut out, &json!({ "type": "config", "command": "bootstrap", "args": args }))?;
    write_fit(&mut out, &d, &result)?;
    write_line(
        &mut out,
        &json!({ "type": "bootstrap", "parameter": "alpha", "estimate": result.latency.alpha, "se": summary.se_alpha }),
    )?;
    for (k, name) in d.x_names.iter().enumerate() {
        let est = result.latency.gamma[k];
        let se = summary.se_gamma[k];
        write_line(
            &mut out,
            &json!({
                "type": "bootstrap",
                "parameter": format!("gamma_{name}"),
                "estimate": est,
                "se": se,
                "p_value": wald_p_value(est, se),
            }),
        )?;
    }
    write_line(
        &mut out,
        &json!({ "type": "bootstrap", "parameter": "mean_pi", "estimate": result.mean_pi(), "se": summary.se_mean_pi }),
    )?;
    write_line(
        &mut out,
        &json!({
            "type": "bootstrap_summary",
            "replicates": summary.replicates.len(),
            "unconverged": summary.unconverged,
            "redraws": summary.redraws,
            "failed": summary.failed,
        }),
    )?;
    out.flush()?;
    Ok(())
}

/// `dir/stem_roc.csv` next to `path`.
pub fn roc_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("table3");
    path.with_file_name(format!("{stem}_roc.csv"))
}

fn reproduce(args: &ReproduceArgs) -> Result<()> {
    let cfg = args.em.em_config(0)?;
    let n = args.n.unwrap_or(match args.table {
        Table::Table3 => 400,
        _ => 300,
    });
    let scenarios = match args.scenario {
        Some(id) => vec![Scenario::from_id(id)?],
        None => Scenario::all().to_vec(),
    };
    let outcomes = scenarios
        .iter()
        .map(|&s| monte_carlo_study(&ScenarioSpec::new(s, n), &cfg, args.runs))
        .collect::<Result<Vec<StudyOutcome>>>()?;
    let comment = config_comment("reproduce", args)?;
    let mut out = create(&args.output)?;
    match args.table {
        Table::Table1 => write_table1(&outcomes, &mut out, Some(&comment))?,
        Table::Table2 => write_table2(&outcomes, &mut out, Some(&comment))?,
        Table::Table3 => {
            write_table3(&outcomes, &mut out, Some(&comment))?;
            let mut roc = create(&roc_path(&args.output))?;
            write_roc(&outcomes, &mut roc, Some(&comment))?;
            roc.flush()?;
        }
    }
    out.flush()?;
    Ok(())
}

fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Bootstrap(a) => bootstrap(a),
        Command::Reproduce(a) => reproduce(a),
    }
}

fn error_line(kind: &str, message: &str) -> String {
    json!({ "error": kind, "message": message }).to_string()
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
/// Failures are reported as one JSON line on stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", error_line("usage", first.trim_start_matches("error: ")));
            return 2;
        }
    };
    let result = match cli.jobs {
        Some(0) => Err(CureError::Config("--jobs must be >= 1".into())),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| CureError::Config(e.to_string()))
            .and_then(|pool| pool.install(|| dispatch(&cli.command))),
        None => dispatch(&cli.command),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_value_reference_points() {
        assert!((wald_p_value(1.959963984540054, 1.0) - 0.05).abs() < 1e-9);
        assert_eq!(wald_p_value(0.0, 2.0), 1.0);
        assert!(wald_p_value(1.0, 0.0).is_nan());
    }

    #[test]
    fn grid_flags_must_pair() {
        let cli = Cli::try_parse_from(["svmcure", "fit", "--input", "a", "--output", "b", "--grid-c", "1,2"]).unwrap();
        let Command::Fit(args) = cli.command else { panic!() };
        assert!(args.em.em_config(0).is_err());
    }

    #[test]
    fn roc_file_name() {
        assert_eq!(roc_path(Path::new("out/t3.csv")), PathBuf::from("out/t3_roc.csv"));
    }
}
