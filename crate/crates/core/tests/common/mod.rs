//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use rand::Rng;
use svmcure::data::{Dataset, IntervalObservation};

pub fn rbf(a: &[f64], b: &[f64], sigma2: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-d2 / sigma2).exp()
}

/// SVM dual objective written out term by term.
pub fn dual_value(z: &[Vec<f64>], y: &[f64], sigma2: f64, d: &[f64]) -> f64 {
    let n = d.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += d[i] * d[j] * y[i] * y[j] * rbf(&z[i], &z[j], sigma2);
        }
    }
    d.iter().sum::<f64>() - 0.5 * quad
}

/// Euclidean projection onto `{d : y'd = 0, 0 <= d <= c}` by bisection on
/// the multiplier of the equality constraint.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |mu: f64| -> Vec<f64> {
        v.iter().zip(y).map(|(vi, yi)| (vi - mu * yi).clamp(0.0, c)).collect()
    };
    let balance = |d: &[f64]| -> f64 { d.iter().zip(y).map(|(a, b)| a * b).sum() };
    let spread = v.iter().map(|x| x.abs()).fold(0.0, f64::max) + c + 1.0;
    let (mut lo, mut hi) = (-spread, spread);
    // balance is non-increasing in mu
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if balance(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Maximizes the SVM dual by projected gradient ascent.
pub fn projected_gradient_dual(z: &[Vec<f64>], y: &[f64], sigma2: f64, c: f64, max_iter: usize) -> (Vec<f64>, f64) {
    let n = y.len();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| y[i] * y[j] * rbf(&z[i], &z[j], sigma2)).collect())
        .collect();
    // the trace bounds the largest eigenvalue of a PSD matrix
    let step = 1.0 / (0..n).map(|i| q[i][i]).sum::<f64>();
    let mut d = vec![0.0; n];
    for _ in 0..max_iter {
        let grad: Vec<f64> = (0..n)
            .map(|i| 1.0 - (0..n).map(|j| q[i][j] * d[j]).sum::<f64>())
            .collect();
        let trial: Vec<f64> = d.iter().zip(&grad).map(|(a, g)| a + step * g).collect();
        let next = project(&trial, y, c);
        let moved = next.iter().zip(&d).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        d = next;
        if moved < 1e-15 {
            break;
        }
    }
    let value = dual_value(z, y, sigma2, &d);
    (d, value)
}

/// Platt negative log-likelihood written directly.
pub fn platt_nll(a: f64, b: f64, psi: &[f64], t: &[f64]) -> f64 {
    psi.iter()
        .zip(t)
        .map(|(&s, &ti)| {
            let p = 1.0 / (1.0 + (a * s + b).exp());
            -(ti * p.ln() + (1.0 - ti) * (1.0 - p).ln())
        })
        .sum()
}

/// Grid search over `[-20, 20]^2`, refined twice down to step `1e-3`.
pub fn platt_grid(psi: &[f64], t: &[f64]) -> (f64, f64) {
    let mut best = (0.0, 0.0, f64::INFINITY);
    let scan = |ca: f64, cb: f64, half: f64, step: f64, best: &mut (f64, f64, f64)| {
        let k = (half / step).round() as i64;
        for i in -k..=k {
            for j in -k..=k {
                let a = ca + i as f64 * step;
                let b = cb + j as f64 * step;
                if a.abs() > 20.0 || b.abs() > 20.0 {
                    continue;
                }
                let v = platt_nll(a, b, psi, t);
                if v < best.2 {
                    *best = (a, b, v);
                }
            }
        }
    };
    scan(0.0, 0.0, 20.0, 0.1, &mut best);
    let (a, b) = (best.0, best.1);
    scan(a, b, 0.2, 0.01, &mut best);
    let (a, b) = (best.0, best.1);
    scan(a, b, 0.02, 0.001, &mut best);
    (best.0, best.1)
}

/// Weibull susceptible survival written from the definition.
pub fn weibull_survival(t: f64, x: &[f64], alpha: f64, gamma: &[f64]) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let eta: f64 = x.iter().zip(gamma).map(|(a, b)| a * b).sum();
    (-(t.powf(alpha)) * eta.exp()).exp()
}

/// The latency part of the complete-data log-likelihood summed directly.
pub fn q2_direct(d: &Dataset, w: &[f64], alpha: f64, gamma: &[f64]) -> f64 {
    d.observations
        .iter()
        .zip(w)
        .map(|(o, &wi)| {
            let sl = weibull_survival(o.left, &o.x, alpha, gamma);
            if o.event {
                (sl - weibull_survival(o.right, &o.x, alpha, gamma)).ln()
            } else {
                wi * sl.ln()
            }
        })
        .sum()
}

/// Twice the Mann-Whitney count over every (positive, negative) pair.
pub fn mann_whitney_auc(status: &[bool], scores: &[f64]) -> f64 {
    let mut twice = 0u64;
    let mut pairs = 0u64;
    for i in 0..status.len() {
        for j in 0..status.len() {
            if status[i] && !status[j] {
                pairs += 1;
                if scores[i] > scores[j] {
                    twice += 2;
                } else if scores[i] == scores[j] {
                    twice += 1;
                }
            }
        }
    }
    twice as f64 / (2 * pairs) as f64
}

/// Small random interval-censored dataset with `p` covariates used for both parts.
pub fn random_dataset<R: Rng>(rng: &mut R, n: usize, p: usize) -> Dataset {
    let mut obs = Vec::with_capacity(n);
    for i in 0..n {
        let x: Vec<f64> = (0..p).map(|_| rng.random_range(-1.5..1.5)).collect();
        let left = rng.random_range(0.05..3.0);
        // keep at least one event and one censored subject
        let event = match i {
            0 => true,
            1 => false,
            _ => rng.random_bool(0.5),
        };
        let right = if event { left + rng.random_range(0.1..1.5) } else { f64::INFINITY };
        obs.push(IntervalObservation::new(left, right, x.clone(), x).unwrap());
    }
    let names: Vec<String> = (0..p).map(|k| format!("v{k}")).collect();
    Dataset::new(obs, names.clone(), names).unwrap()
}

/// Runs the installed binary with `args`, returning (exit code, stdout, stderr).
pub fn svmcure(args: &[&str]) -> (i32, String, String) {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_svmcure"))
        .args(args)
        .output()
        .expect("spawn svmcure");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// Runs every subcommand twice with identical arguments and compares the
/// produced files byte for byte. Returns the list of compared files.
pub fn cli_reruns_identical(dir: &std::path::Path) -> Result<Vec<String>, String> {
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let data = p("data.csv");
    let small = ["--grid-c", "1", "--grid-sigma2", "1", "--seed", "3", "--max-iter", "20"];
    let mut jobs: Vec<(Vec<String>, Vec<String>)> = Vec::new();
    let owned = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();

    jobs.push((owned(&["simulate", "--scenario", "2", "--n", "60", "--seed", "4", "--output", &data]), vec![data.clone()]));
    let fit_svm = p("fit_svm.jsonl");
    let mut a = owned(&["fit", "--input", &data, "--output", &fit_svm]);
    a.extend(owned(&small));
    jobs.push((a, vec![fit_svm]));
    let fit_log = p("fit_logistic.jsonl");
    jobs.push((
        owned(&["fit", "--input", &data, "--output", &fit_log, "--incidence", "logistic", "--seed", "3"]),
        vec![fit_log],
    ));
    let boot = p("boot.jsonl");
    let mut a = owned(&["--jobs", "2", "bootstrap", "--input", &data, "--output", &boot, "--bootstrap", "4"]);
    a.extend(owned(&small));
    jobs.push((a, vec![boot]));
    for table in ["table1", "table2", "table3"] {
        let out = p(&format!("{table}.csv"));
        let mut a = owned(&["--jobs", "2", "reproduce", table, "--scenario", "1", "--n", "50", "--runs", "2", "--output", &out]);
        a.extend(owned(&small));
        let mut files = vec![out];
        if table == "table3" {
            files.push(p("table3_roc.csv"));
        }
        jobs.push((a, files));
    }

    let mut compared = Vec::new();
    for (args, files) in &jobs {
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        let mut snapshots = Vec::new();
        for _ in 0..2 {
            let (code, _, err) = svmcure(&argv);
            if code != 0 {
                return Err(format!("{} exited {code}: {err}", args.join(" ")));
            }
            let bytes: Vec<Vec<u8>> = files
                .iter()
                .map(|f| std::fs::read(f).map_err(|e| format!("{f}: {e}")))
                .collect::<Result<_, _>>()?;
            snapshots.push(bytes);
        }
        if snapshots[0] != snapshots[1] {
            return Err(format!("outputs differ for: {}", args.join(" ")));
        }
        compared.extend(files.iter().cloned());
    }
    Ok(compared)
}
