//! Multiple-imputation estimate of the uncured probability.
//!
//! Unknown cure indicators are drawn as `J_i ~ Bernoulli(w_i)`, an SVM is
//! trained and Platt-calibrated on each draw, and the calibrated
//! probabilities at the training points are averaged over draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernel::Gram;
use super::platt::platt_fit;
use super::smo::{solve_dual, training_decisions, DEFAULT_KKT_TOLERANCE};
use super::HyperParams;
use crate::error::{CureError, Result};

/// Redraws attempted before a single-class draw falls back to a constant.
pub const MAX_REDRAWS: usize = 10;
const FALLBACK_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImputationDiagnostics {
    /// Imputations that drew a single class and were redrawn.
    pub redraws: usize,
    /// Imputations that ended on the constant fallback.
    pub fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationOutcome {
    pub pi: Vec<f64>,
    pub diagnostics: ImputationDiagnostics,
}

/// Incidence estimator bound to one covariate matrix and frozen hyperparameters.
#[derive(Debug, Clone)]
pub struct IncidenceSvm {
    gram: Gram,
    hp: HyperParams,
}

impl IncidenceSvm {
    pub fn new(z: &[Vec<f64>], hp: HyperParams) -> Result<Self> {
        hp.validate()?;
        if z.iter().flatten().any(|v| !v.is_finite()) {
            return Err(CureError::Numeric("incidence covariates".into()));
        }
        Ok(IncidenceSvm {
            gram: Gram::rbf(z, hp.sigma2),
            hp,
        })
    }

    pub fn hyper_params(&self) -> HyperParams {
        self.hp
    }

    pub fn len(&self) -> usize {
        self.gram.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gram.is_empty()
    }

    /// SVM + Platt on fixed labels, evaluated at the training points.
    pub fn calibrated_probabilities(&self, labels: &[bool]) -> Result<Vec<f64>> {
        if labels.len() != self.len() {
            return Err(CureError::Shape {
                expected: self.len(),
                actual: labels.len(),
            });
        }
        let sol = solve_dual(&self.gram, labels, self.hp.c, DEFAULT_KKT_TOLERANCE)?;
        let psi = training_decisions(&self.gram, labels, &sol);
        let cal = platt_fit(&psi, labels)?;
        Ok(psi.iter().map(|&s| cal.probability(s)).collect())
    }

    /// Averages `n_impute` calibrated fits on labels drawn from `weights`.
    pub fn estimate<R: Rng + ?Sized>(
        &self,
        weights: &[f64],
        n_impute: usize,
        rng: &mut R,
    ) -> Result<ImputationOutcome> {
        let n = self.len();
        if weights.len() != n {
            return Err(CureError::Shape {
                expected: n,
                actual: weights.len(),
            });
        }
        if n_impute == 0 {
            return Err(CureError::Config("number of imputations must be >= 1".into()));
        }
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(CureError::Domain("imputation weights must lie in [0, 1]".into()));
        }
        let mean_w = weights.iter().sum::<f64>() / n as f64;
        let fallback = mean_w.clamp(FALLBACK_CLAMP, 1.0 - FALLBACK_CLAMP);

        // one sub-stream per imputation
        let seeds: Vec<u64> = (0..n_impute).map(|_| rng.random()).collect();
        let mut diagnostics = ImputationDiagnostics::default();
        let mut total = vec![0.0; n];
        for seed in seeds {
            let mut sub = ChaCha8Rng::seed_from_u64(seed);
            let mut labels = vec![false; n];
            let mut drawn = false;
            for attempt in 0..=MAX_REDRAWS {
                for (l, &w) in labels.iter_mut().zip(weights) {
                    *l = sub.random::<f64>() < w;
                }
                let pos = labels.iter().filter(|&&j| j).count();
                if pos > 0 && pos < n {
                    drawn = true;
                    break;
                }
                if attempt < MAX_REDRAWS {
                    diagnostics.redraws += 1;
                }
            }
            if drawn {
                let p = self.calibrated_probabilities(&labels)?;
                for (t, v) in total.iter_mut().zip(p) {
                    *t += v;
                }
            } else {
                diagnostics.fallbacks += 1;
                for t in total.iter_mut() {
                    *t += fallback;
                }
            }
        }
        let pi = total.into_iter().map(|t| t / n_impute as f64).collect();
        Ok(ImputationOutcome { pi, diagnostics })
    }
}

/// Convenience wrapper building the kernel matrix for a single call.
pub fn impute_and_estimate_pi<R: Rng + ?Sized>(
    weights: &[f64],
    z: &[Vec<f64>],
    n_impute: usize,
    hp: HyperParams,
    rng: &mut R,
) -> Result<ImputationOutcome> {
    if weights.len() != z.len() {
        return Err(CureError::Shape {
            expected: z.len(),
            actual: weights.len(),
        });
    }
    IncidenceSvm::new(z, hp)?.estimate(weights, n_impute, rng)
}
