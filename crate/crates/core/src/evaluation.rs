//! Accuracy metrics and the Monte Carlo study harness.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{midpoint_times, standardize_covariates, Dataset};
use crate::em::{fit_em, EmConfig, FitResult, IncidenceKind};
use crate::error::{CureError, Result};
use crate::latency::{survival_u, LatencyParams};
use crate::seeding::substream;
use crate::simulation::{generate_dataset, ScenarioSpec};

/// Share of failed runs a study tolerates before giving up.
pub const MAX_RUN_FAILURE_FRACTION: f64 = 0.05;

fn check_shape(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(CureError::Shape { expected, actual })
    }
}

/// Per-run mean difference and mean squared difference of `est - truth`.
fn run_bias_mse(truth: &[f64], est: &[f64]) -> Result<(f64, f64)> {
    check_shape(truth.len(), est.len())?;
    if truth.is_empty() {
        return Err(CureError::Shape { expected: 1, actual: 0 });
    }
    let n = truth.len() as f64;
    let (mut bias, mut mse) = (0.0, 0.0);
    for (t, e) in truth.iter().zip(est) {
        let diff = e - t;
        bias += diff;
        mse += diff * diff;
    }
    Ok((bias / n, mse / n))
}

fn average_runs(per_run: &[(f64, f64)]) -> (f64, f64) {
    let m = per_run.len() as f64;
    let bias = per_run.iter().map(|r| r.0).sum::<f64>() / m;
    let mse = per_run.iter().map(|r| r.1).sum::<f64>() / m;
    (bias, mse)
}

/// Bias and MSE of the uncured probability, averaged within then across runs.
pub fn bias_mse_pi(true_pi: &[Vec<f64>], est_pi: &[Vec<f64>]) -> Result<(f64, f64)> {
    check_shape(true_pi.len(), est_pi.len())?;
    if true_pi.is_empty() {
        return Err(CureError::Shape { expected: 1, actual: 0 });
    }
    let per_run = true_pi
        .iter()
        .zip(est_pi)
        .map(|(t, e)| run_bias_mse(t, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(average_runs(&per_run))
}

fn survival_at_midpoints(d: &Dataset, p: &LatencyParams) -> Result<Vec<f64>> {
    midpoint_times(d)
        .iter()
        .zip(&d.observations)
        .map(|(&t, o)| survival_u(t, &o.x, p))
        .collect()
}

fn run_survival_bias_mse(d: &Dataset, est: &LatencyParams, truth: &LatencyParams) -> Result<(f64, f64)> {
    run_bias_mse(&survival_at_midpoints(d, truth)?, &survival_at_midpoints(d, est)?)
}

/// Bias and MSE of the susceptible survival at each subject's representative time.
pub fn bias_mse_survival(
    datasets: &[Dataset],
    est: &[LatencyParams],
    truth: &LatencyParams,
) -> Result<(f64, f64)> {
    check_shape(datasets.len(), est.len())?;
    if datasets.is_empty() {
        return Err(CureError::Shape { expected: 1, actual: 0 });
    }
    let per_run = datasets
        .iter()
        .zip(est)
        .map(|(d, e)| run_survival_bias_mse(d, e, truth))
        .collect::<Result<Vec<_>>>()?;
    Ok(average_runs(&per_run))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)` from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC curve of `scores` against `status` (true = uncured is the positive class).
///
/// Tied scores cross the threshold together, so the trapezoidal area equals
/// the Mann-Whitney statistic with ties counted as one half. The area is
/// accumulated in integer pair counts so that equality is exact.
pub fn roc_auc(status: &[bool], scores: &[f64]) -> Result<RocCurve> {
    check_shape(status.len(), scores.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(CureError::Numeric("NaN score".into()));
    }
    let positives = status.iter().filter(|&&s| s).count() as u64;
    let negatives = status.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(CureError::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    // twice the number of concordant pairs, ties counting once
    let mut twice_area: u128 = 0;
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        let (mut dtp, mut dfp) = (0u64, 0u64);
        while k < order.len() && scores[order[k]] == s {
            if status[order[k]] {
                dtp += 1;
            } else {
                dfp += 1;
            }
            k += 1;
        }
        twice_area += u128::from(dfp) * u128::from(2 * tp + dtp);
        tp += dtp;
        fp += dfp;
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
    }
    let auc = twice_area as f64 / (2 * u128::from(positives) * u128::from(negatives)) as f64;
    Ok(RocCurve { points, auc })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub truth: f64,
    pub bias: f64,
    pub sd: f64,
    pub mse: f64,
}

fn param_summary(name: String, truth: f64, estimates: &[f64]) -> ParamSummary {
    let m = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / m;
    let sd = if estimates.len() > 1 {
        (estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    let mse = estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / m;
    ParamSummary {
        name,
        truth,
        bias: mean - truth,
        sd,
        mse,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub model: IncidenceKind,
    pub bias_pi: f64,
    pub mse_pi: f64,
    pub bias_su: f64,
    pub mse_su: f64,
    /// `alpha`, then each `gamma` coefficient.
    pub params: Vec<ParamSummary>,
    pub auc: f64,
    pub roc: Vec<(f64, f64)>,
    pub runs: usize,
    pub unconverged: usize,
}

impl MetricsSummary {
    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// What one fitted model contributes to the aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub pi: (f64, f64),
    pub su: (f64, f64),
    pub latency: LatencyParams,
    pub converged: bool,
    pub status: Vec<bool>,
    pub scores: Vec<f64>,
}

/// Scores one fit against a dataset with truth columns.
pub fn run_metrics(d: &Dataset, fit: &FitResult, truth: &LatencyParams) -> Result<RunMetrics> {
    if !d.has_truth() {
        return Err(CureError::Config("dataset has no truth columns".into()));
    }
    let true_pi: Vec<f64> = d.observations.iter().map(|o| o.true_pi.unwrap_or(f64::NAN)).collect();
    Ok(RunMetrics {
        pi: run_bias_mse(&true_pi, &fit.pi_hat)?,
        su: run_survival_bias_mse(d, &fit.latency, truth)?,
        latency: fit.latency.clone(),
        converged: fit.converged,
        status: d.observations.iter().map(|o| o.true_status == Some(true)).collect(),
        scores: fit.pi_hat.clone(),
    })
}

/// Aggregates per-run metrics for one model.
pub fn summarise_runs(model: IncidenceKind, runs: &[RunMetrics], truth: &LatencyParams) -> Result<MetricsSummary> {
    if runs.is_empty() {
        return Err(CureError::Shape { expected: 1, actual: 0 });
    }
    let (bias_pi, mse_pi) = average_runs(&runs.iter().map(|r| r.pi).collect::<Vec<_>>());
    let (bias_su, mse_su) = average_runs(&runs.iter().map(|r| r.su).collect::<Vec<_>>());
    let alphas: Vec<f64> = runs.iter().map(|r| r.latency.alpha).collect();
    let mut params = vec![param_summary("alpha".into(), truth.alpha, &alphas)];
    for (k, &g) in truth.gamma.iter().enumerate() {
        let est: Vec<f64> = runs.iter().map(|r| r.latency.gamma[k]).collect();
        params.push(param_summary(format!("gamma{}", k + 1), g, &est));
    }
    let status: Vec<bool> = runs.iter().flat_map(|r| r.status.iter().copied()).collect();
    let scores: Vec<f64> = runs.iter().flat_map(|r| r.scores.iter().copied()).collect();
    let roc = roc_auc(&status, &scores)?;
    Ok(MetricsSummary {
        model,
        bias_pi,
        mse_pi,
        bias_su,
        mse_su,
        params,
        auc: roc.auc,
        roc: roc.points,
        runs: runs.len(),
        unconverged: runs.iter().filter(|r| !r.converged).count(),
    })
}

/// Fits one model the way the study does: SVM incidence sees standardized `z`.
pub fn fit_for_study(d: &Dataset, cfg: &EmConfig) -> Result<FitResult> {
    match cfg.incidence {
        IncidenceKind::Svm => fit_em(&standardize_covariates(d)?, cfg),
        IncidenceKind::Logistic => fit_em(d, cfg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOutcome {
    pub spec: ScenarioSpec,
    pub svm: MetricsSummary,
    pub logistic: MetricsSummary,
    pub failed_runs: usize,
}

/// Dataset and fit seeds of run `k`.
pub fn run_dataset(spec: &ScenarioSpec, seed: u64, k: usize) -> Result<(Dataset, u64)> {
    let mut rng = substream(seed, k as u64);
    let d = generate_dataset(spec, &mut rng)?;
    Ok((d, rng.random()))
}

fn run_once(spec: &ScenarioSpec, cfg: &EmConfig, k: usize) -> Result<(RunMetrics, RunMetrics)> {
    let (d, fit_seed) = run_dataset(spec, cfg.seed, k)?;
    let truth = &spec.latency_truth;
    let svm_cfg = EmConfig {
        seed: fit_seed,
        ..cfg.clone().with_incidence(IncidenceKind::Svm)
    };
    let log_cfg = EmConfig {
        seed: fit_seed,
        ..cfg.clone().with_incidence(IncidenceKind::Logistic)
    };
    let svm = run_metrics(&d, &fit_for_study(&d, &svm_cfg)?, truth)?;
    let logistic = run_metrics(&d, &fit_for_study(&d, &log_cfg)?, truth)?;
    Ok((svm, logistic))
}

/// Generates `runs` datasets, fits both incidence models on each, and
/// aggregates. Run `k` draws from stream `k` of `cfg.seed`; a run that fails
/// for either model is dropped for both.
pub fn monte_carlo_study(spec: &ScenarioSpec, cfg: &EmConfig, runs: usize) -> Result<StudyOutcome> {
    if runs == 0 {
        return Err(CureError::Config("runs must be >= 1".into()));
    }
    spec.validate()?;
    cfg.validate()?;
    let results: Vec<Result<(RunMetrics, RunMetrics)>> =
        (0..runs).into_par_iter().map(|k| run_once(spec, cfg, k)).collect();
    let mut svm = Vec::with_capacity(runs);
    let mut logistic = Vec::with_capacity(runs);
    let mut failed = 0;
    for r in results {
        match r {
            Ok((s, l)) => {
                svm.push(s);
                logistic.push(l);
            }
            Err(_) => failed += 1,
        }
    }
    if failed as f64 > MAX_RUN_FAILURE_FRACTION * runs as f64 || svm.is_empty() {
        return Err(CureError::StudyUnstable { failed, total: runs });
    }
    let truth = &spec.latency_truth;
    Ok(StudyOutcome {
        spec: spec.clone(),
        svm: summarise_runs(IncidenceKind::Svm, &svm, truth)?,
        logistic: summarise_runs(IncidenceKind::Logistic, &logistic, truth)?,
        failed_runs: failed,
    })
}

fn comment_line<W: Write>(w: &mut W, comment: Option<&str>) -> Result<()> {
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    Ok(())
}

/// Bias and MSE of `pi` and `S_u`, one row per scenario and model.
pub fn write_table1<W: Write>(outcomes: &[StudyOutcome], mut w: W, comment: Option<&str>) -> Result<()> {
    comment_line(&mut w, comment)?;
    writeln!(w, "scenario,n,runs,model,bias_pi,mse_pi,bias_su,mse_su")?;
    for o in outcomes {
        for s in [&o.svm, &o.logistic] {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                o.spec.scenario.id(),
                o.spec.n,
                s.runs,
                s.model,
                s.bias_pi,
                s.mse_pi,
                s.bias_su,
                s.mse_su
            )?;
        }
    }
    Ok(())
}

/// Latency parameter bias, SD and MSE.
pub fn write_table2<W: Write>(outcomes: &[StudyOutcome], mut w: W, comment: Option<&str>) -> Result<()> {
    comment_line(&mut w, comment)?;
    writeln!(w, "scenario,n,runs,model,parameter,truth,bias,sd,mse")?;
    for o in outcomes {
        for s in [&o.svm, &o.logistic] {
            for p in &s.params {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{}",
                    o.spec.scenario.id(),
                    o.spec.n,
                    s.runs,
                    s.model,
                    p.name,
                    p.truth,
                    p.bias,
                    p.sd,
                    p.mse
                )?;
            }
        }
    }
    Ok(())
}

/// Pooled AUC per scenario and model.
pub fn write_table3<W: Write>(outcomes: &[StudyOutcome], mut w: W, comment: Option<&str>) -> Result<()> {
    comment_line(&mut w, comment)?;
    writeln!(w, "scenario,n,runs,model,auc")?;
    for o in outcomes {
        for s in [&o.svm, &o.logistic] {
            writeln!(w, "{},{},{},{},{}", o.spec.scenario.id(), o.spec.n, s.runs, s.model, s.auc)?;
        }
    }
    Ok(())
}

/// Pooled ROC points per scenario and model.
pub fn write_roc<W: Write>(outcomes: &[StudyOutcome], mut w: W, comment: Option<&str>) -> Result<()> {
    comment_line(&mut w, comment)?;
    writeln!(w, "scenario,model,fpr,tpr")?;
    for o in outcomes {
        for s in [&o.svm, &o.logistic] {
            for (fpr, tpr) in &s.roc {
                writeln!(w, "{},{},{},{}", o.spec.scenario.id(), s.model, fpr, tpr)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bias_mse_small_cases() {
        assert_eq!(bias_mse_pi(&[vec![0.3, 0.4]], &[vec![0.3, 0.4]]).unwrap(), (0.0, 0.0));
        let (b, m) = bias_mse_pi(&[vec![0.5]], &[vec![0.7]]).unwrap();
        assert!((b - 0.2).abs() < 1e-15 && (m - 0.04).abs() < 1e-15);
        let (b, m) = bias_mse_pi(&[vec![0.5], vec![0.5]], &[vec![0.6], vec![0.4]]).unwrap();
        assert!(b.abs() < 1e-15 && (m - 0.01).abs() < 1e-15);
        assert!(bias_mse_pi(&[vec![0.5]], &[vec![0.5, 0.1]]).is_err());
        assert!(bias_mse_pi(&[vec![0.5]], &[]).is_err());
    }

    #[test]
    fn survival_bias_single_subject() {
        use crate::data::IntervalObservation;
        // midpoint T = 1 and x = 1, so H(1) = e^gamma whatever the shape
        let obs = vec![IntervalObservation::new(0.5, 1.5, vec![1.0], vec![1.0]).unwrap()];
        let d = Dataset::new(obs, vec!["x".into()], vec!["z".into()]).unwrap();
        let truth = LatencyParams::new(1.0, vec![0.0]).unwrap();
        let est = LatencyParams::new(2.0, vec![0.0]).unwrap();
        let (b, _) = bias_mse_survival(&[d.clone()], &[est], &truth).unwrap();
        assert!(b.abs() < 1e-15);
        let est = LatencyParams::new(1.0, vec![2f64.ln()]).unwrap();
        let (b, m) = bias_mse_survival(&[d], &[est], &truth).unwrap();
        let expect = (-2f64).exp() - (-1f64).exp();
        assert!((b - expect).abs() < 1e-12);
        assert!((m - expect * expect).abs() < 1e-12);
        assert!((b + 0.2325).abs() < 1e-4);
    }

    #[test]
    fn roc_known_values() {
        let status = [true, true, true, false, false, false];
        let scores = [0.9, 0.8, 0.4, 0.7, 0.3, 0.2];
        let roc = roc_auc(&status, &scores).unwrap();
        assert_eq!(roc.auc, 8.0 / 9.0);
        assert_eq!(roc.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.points.last(), Some(&(1.0, 1.0)));
        assert_eq!(roc_auc(&status, &[0.5; 6]).unwrap().auc, 0.5);
        assert_eq!(roc_auc(&status, &[3.0, 3.0, 3.0, 1.0, 1.0, 1.0]).unwrap().auc, 1.0);
        assert!(matches!(roc_auc(&[true, true], &[0.1, 0.2]), Err(CureError::DegenerateLabels)));
    }

    #[test]
    fn param_summary_moments() {
        let s = param_summary("a".into(), 1.0, &[1.0, 2.0, 3.0]);
        assert_eq!(s.bias, 1.0);
        assert_eq!(s.sd, 1.0);
        assert!((s.mse - 5.0 / 3.0).abs() < 1e-15);
    }
}
