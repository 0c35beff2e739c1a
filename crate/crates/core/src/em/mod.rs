//! EM estimation of the mixture cure model.
//!
//! Each iteration computes the posterior uncured weights, refits the
//! incidence model (SVM with multiple imputation, or weighted logistic
//! regression), refits the Weibull latency, and stops once the squared
//! change of `(mean pi, alpha, gamma)` drops below `epsilon`.

mod bootstrap;
mod init;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CureError, Result};
use crate::latency::{maximize_q2, LatencyParams};
use crate::logistic::{fit_weighted_logistic, logistic_pi, LogisticParams};
use crate::seeding::substream;
use crate::svm::{default_grid, tune_hyperparams, HyperParams, IncidenceSvm};

pub use bootstrap::{
    bootstrap_from_resamples, bootstrap_se, BootstrapSummary, ReplicateEstimate, MAX_FAILURE_FRACTION,
    MAX_REPLICATE_REDRAWS,
};
pub use init::{
    initial_latency, initial_pi_svm, initial_shape, initial_values, kaplan_meier, log_log_regression,
    FALLBACK_SHAPE,
};

const LOG_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IncidenceKind {
    Svm,
    Logistic,
}

impl std::fmt::Display for IncidenceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            IncidenceKind::Svm => "svm",
            IncidenceKind::Logistic => "logistic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub incidence: IncidenceKind,
    /// Threshold on the squared parameter change.
    pub epsilon: f64,
    pub max_iter: usize,
    /// Imputations per incidence update (SVM only).
    pub n_impute: usize,
    pub grid: Vec<HyperParams>,
    pub folds: usize,
    pub bootstrap_b: usize,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            incidence: IncidenceKind::Svm,
            epsilon: 1e-3,
            max_iter: 200,
            n_impute: 5,
            grid: default_grid(),
            folds: 5,
            bootstrap_b: 300,
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn with_incidence(mut self, incidence: IncidenceKind) -> Self {
        self.incidence = incidence;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(CureError::Config("epsilon must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(CureError::Config("max_iter must be >= 1".into()));
        }
        if self.n_impute == 0 {
            return Err(CureError::Config("n_impute must be >= 1".into()));
        }
        if self.incidence == IncidenceKind::Svm {
            if self.grid.is_empty() {
                return Err(CureError::Config("hyperparameter grid is empty".into()));
            }
            for hp in &self.grid {
                hp.validate()?;
            }
            if self.grid.len() > 1 && self.folds < 2 {
                return Err(CureError::Config("folds must be >= 2".into()));
            }
        }
        Ok(())
    }
}

/// Summary of one EM iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub mean_pi: f64,
    pub alpha: f64,
    pub gamma: Vec<f64>,
    /// Squared Euclidean change of `(mean pi, alpha, gamma)`.
    pub change: f64,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub imputation_redraws: usize,
    pub imputation_fallbacks: usize,
    /// Starting incidence was constant because all subjects had events.
    pub initial_pi_fallback: bool,
    /// Cross-validation was impossible and the default point was used.
    pub tuning_fallback: bool,
    pub tuning_accuracy: Option<f64>,
    pub latency_simplex_fallbacks: usize,
    pub latency_unconverged: usize,
    pub logistic_capped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub pi_hat: Vec<f64>,
    pub latency: LatencyParams,
    /// Posterior uncured weights at the returned estimates.
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
    pub diagnostics: FitDiagnostics,
    pub hyper_params: Option<HyperParams>,
    pub logistic: Option<LogisticParams>,
    pub initial_latency: LatencyParams,
}

impl FitResult {
    pub fn mean_pi(&self) -> f64 {
        mean(&self.pi_hat)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Posterior probability of being uncured given the observed data.
pub fn e_step(d: &Dataset, pi: &[f64], p: &LatencyParams) -> Result<Vec<f64>> {
    if pi.len() != d.len() {
        return Err(CureError::Shape {
            expected: d.len(),
            actual: pi.len(),
        });
    }
    d.observations
        .iter()
        .zip(pi)
        .map(|(o, &pi_i)| {
            if !(0.0..=1.0).contains(&pi_i) {
                return Err(CureError::Domain(format!("uncured probability {pi_i}")));
            }
            let s = if o.event {
                0.0
            } else {
                (-p.cumulative_hazard(o.left, &o.x)).exp()
            };
            Ok(posterior_weight(o.event, pi_i, s))
        })
        .collect()
}

/// `delta + (1 - delta) pi S(L) / (1 - pi + pi S(L))`.
pub fn posterior_weight(event: bool, pi: f64, s_left: f64) -> f64 {
    if event {
        return 1.0;
    }
    let num = pi * s_left;
    let den = 1.0 - pi + num;
    if den > 0.0 {
        (num / den).clamp(0.0, 1.0)
    } else {
        1.0
    }
}

/// Observed-data log-likelihood of the mixture cure model.
pub fn observed_log_likelihood(d: &Dataset, pi: &[f64], p: &LatencyParams) -> f64 {
    d.observations
        .iter()
        .zip(pi)
        .map(|(o, &pi_i)| {
            let h_left = p.cumulative_hazard(o.left, &o.x);
            let s_left = (-h_left).exp();
            if o.event {
                let h_right = p.cumulative_hazard(o.right, &o.x);
                let mass = s_left * -(-(h_right - h_left)).exp_m1();
                (pi_i * mass).max(LOG_FLOOR).ln()
            } else {
                (1.0 - pi_i + pi_i * s_left).max(LOG_FLOOR).ln()
            }
        })
        .sum()
}

fn theta(pi: &[f64], p: &LatencyParams) -> Vec<f64> {
    let mut t = Vec::with_capacity(p.gamma.len() + 2);
    t.push(mean(pi));
    t.push(p.alpha);
    t.extend_from_slice(&p.gamma);
    t
}

fn squared_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

enum Incidence {
    Svm(IncidenceSvm),
    Logistic,
}

/// Runs the EM loop to convergence or `cfg.max_iter` iterations.
pub fn fit_em(d: &Dataset, cfg: &EmConfig) -> Result<FitResult> {
    cfg.validate()?;
    let n = d.len();
    let z = d.z_rows();
    let events = d.events();
    let mut rng = substream(cfg.seed, 0);
    let mut diagnostics = FitDiagnostics::default();

    let initial_lat = initial_latency(d)?;
    let (incidence, mut pi, hyper_params, mut logistic) = match cfg.incidence {
        IncidenceKind::Svm => {
            let hp = if cfg.grid.len() == 1 {
                cfg.grid[0]
            } else {
                match tune_hyperparams(&events, &z, &cfg.grid, cfg.folds) {
                    Ok(t) => {
                        diagnostics.tuning_accuracy = Some(t.accuracy);
                        t.best
                    }
                    Err(CureError::DegenerateFold(_)) | Err(CureError::DegenerateLabels) => {
                        diagnostics.tuning_fallback = true;
                        HyperParams::default()
                    }
                    Err(e) => return Err(e),
                }
            };
            let svm = IncidenceSvm::new(&z, hp)?;
            let (pi0, fallback) = initial_pi_svm(d, &svm)?;
            diagnostics.initial_pi_fallback = fallback;
            (Incidence::Svm(svm), pi0, Some(hp), None)
        }
        IncidenceKind::Logistic => {
            let labels: Vec<f64> = events.iter().map(|&e| f64::from(u8::from(e))).collect();
            let fit = fit_weighted_logistic(&z, &labels)?;
            let pi0 = z
                .iter()
                .map(|zi| logistic_pi(&fit.params, zi))
                .collect::<Result<Vec<_>>>()?;
            (Incidence::Logistic, pi0, None, Some(fit.params))
        }
    };
    let mut latency = initial_lat.clone();
    let mut prev = theta(&pi, &latency);
    let needed_streak = match cfg.incidence {
        IncidenceKind::Svm => 2,
        IncidenceKind::Logistic => 1,
    };

    let mut trace = Vec::new();
    let mut streak = 0;
    let mut converged = false;
    // (log-likelihood, pi, latency, logistic) of the best iterate so far
    let mut best: Option<(f64, Vec<f64>, LatencyParams, Option<LogisticParams>)> = None;

    for iteration in 1..=cfg.max_iter {
        let at = |e: CureError| CureError::AtIteration {
            iteration,
            source: Box::new(e),
        };
        let w = e_step(d, &pi, &latency).map_err(at)?;
        pi = match &incidence {
            Incidence::Svm(svm) => {
                let out = svm.estimate(&w, cfg.n_impute, &mut rng).map_err(at)?;
                diagnostics.imputation_redraws += out.diagnostics.redraws;
                diagnostics.imputation_fallbacks += out.diagnostics.fallbacks;
                out.pi
            }
            Incidence::Logistic => {
                let fit = fit_weighted_logistic(&z, &w).map_err(at)?;
                if fit.capped {
                    diagnostics.logistic_capped += 1;
                }
                let p = z
                    .iter()
                    .map(|zi| logistic_pi(&fit.params, zi))
                    .collect::<Result<Vec<_>>>()
                    .map_err(at)?;
                logistic = Some(fit.params);
                p
            }
        };
        let lat_fit = maximize_q2(d, &w, &latency).map_err(at)?;
        if lat_fit.used_fallback {
            diagnostics.latency_simplex_fallbacks += 1;
        }
        if !lat_fit.converged {
            diagnostics.latency_unconverged += 1;
        }
        latency = lat_fit.params;

        let current = theta(&pi, &latency);
        let change = squared_change(&current, &prev);
        prev = current;
        let log_likelihood = observed_log_likelihood(d, &pi, &latency);
        trace.push(TraceEntry {
            iteration,
            mean_pi: mean(&pi),
            alpha: latency.alpha,
            gamma: latency.gamma.clone(),
            change,
            log_likelihood,
        });
        if best.as_ref().is_none_or(|b| log_likelihood > b.0) {
            best = Some((log_likelihood, pi.clone(), latency.clone(), logistic.clone()));
        }
        streak = if change < cfg.epsilon { streak + 1 } else { 0 };
        if streak >= needed_streak {
            converged = true;
            break;
        }
    }

    if !converged {
        if let Some((_, b_pi, b_lat, b_log)) = best {
            pi = b_pi;
            latency = b_lat;
            logistic = b_log;
        }
    }
    let weights = e_step(d, &pi, &latency)?;
    debug_assert_eq!(weights.len(), n);
    Ok(FitResult {
        pi_hat: pi,
        latency,
        weights,
        iterations: trace.len(),
        converged,
        trace,
        diagnostics,
        hyper_params,
        logistic,
        initial_latency: initial_lat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::IntervalObservation;

    fn tiny() -> Dataset {
        let obs = vec![
            IntervalObservation::new(1.0, 2.0, vec![0.0], vec![0.0]).unwrap(),
            IntervalObservation::new(2.0, f64::INFINITY, vec![1.0], vec![0.0]).unwrap(),
            IntervalObservation::new(0.5, f64::INFINITY, vec![1.0], vec![1.0]).unwrap(),
        ];
        Dataset::new(obs, vec!["x".into()], vec!["z".into()]).unwrap()
    }

    #[test]
    fn e_step_closed_forms() {
        let d = tiny();
        // S_u(2) = 0.5 with alpha = 1: 2 e^gamma = ln 2
        let p = LatencyParams::new(1.0, vec![(2f64.ln() / 2.0).ln()]).unwrap();
        let w = e_step(&d, &[0.3, 0.5, 0.0], &p).unwrap();
        assert_eq!(w[0], 1.0);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(w[2], 0.0);
        let w = e_step(&d, &[0.3, 1.0, 1.0], &p).unwrap();
        assert_eq!(w[1], 1.0);
        assert_eq!(w[2], 1.0);
    }

    #[test]
    fn posterior_weight_exact_cases() {
        assert_eq!(posterior_weight(false, 0.5, 0.5), 1.0 / 3.0);
        assert_eq!(posterior_weight(true, 0.1, 0.9), 1.0);
        assert_eq!(posterior_weight(false, 1.0, 0.2), 1.0);
        assert_eq!(posterior_weight(false, 0.0, 0.2), 0.0);
    }

    #[test]
    fn e_step_rejects_bad_probabilities() {
        let p = LatencyParams::new(1.0, vec![0.0]).unwrap();
        assert!(e_step(&tiny(), &[0.3, 1.5, 0.0], &p).is_err());
        assert!(e_step(&tiny(), &[0.3], &p).is_err());
    }

    #[test]
    fn config_validation() {
        let cfg = EmConfig { epsilon: 0.0, ..EmConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = EmConfig { max_iter: 0, ..EmConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(EmConfig::default().validate().is_ok());
    }
}
