//! Logistic incidence model, the standard mixture-cure comparator.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CureError, Result};

const RIDGE: f64 = 1e-8;
const SCORE_TOLERANCE: f64 = 1e-8;
/// Coefficient norm beyond which the fit is treated as separated.
pub const NORM_CAP: f64 = 30.0;
const MAX_NEWTON_STEPS: usize = 200;

/// Coefficients `(beta_0, beta_1, ..., beta_q)`, intercept first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub params: LogisticParams,
    /// The coefficient norm cap was hit (quasi-separation).
    pub capped: bool,
    pub iterations: usize,
}

/// Numerically stable `e^eta / (1 + e^eta)`.
pub(crate) fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn linear_predictor(beta: &[f64], z: &[f64]) -> f64 {
    beta[0] + beta[1..].iter().zip(z).map(|(b, v)| b * v).sum::<f64>()
}

/// Uncured probability under the logistic link.
pub fn logistic_pi(b: &LogisticParams, z: &[f64]) -> Result<f64> {
    if b.beta.len() != z.len() + 1 {
        return Err(CureError::Shape {
            expected: b.beta.len().saturating_sub(1),
            actual: z.len(),
        });
    }
    Ok(sigmoid(linear_predictor(&b.beta, z)))
}

/// `log(1 + e^eta)`.
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// `sum w log pi + (1 - w) log(1 - pi)`.
pub fn weighted_log_likelihood(beta: &[f64], z: &[Vec<f64>], w: &[f64]) -> f64 {
    z.iter()
        .zip(w)
        .map(|(zi, &wi)| {
            let eta = linear_predictor(beta, zi);
            wi * eta - softplus(eta)
        })
        .sum()
}

/// Weighted score vector.
pub fn weighted_score(beta: &[f64], z: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; beta.len()];
    for (zi, &wi) in z.iter().zip(w) {
        let r = wi - sigmoid(linear_predictor(beta, zi));
        g[0] += r;
        for (gk, v) in g[1..].iter_mut().zip(zi) {
            *gk += r * v;
        }
    }
    g
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Maximises the fractional-weight logistic likelihood by Newton's method.
pub fn fit_weighted_logistic(z: &[Vec<f64>], w: &[f64]) -> Result<LogisticFit> {
    let n = z.len();
    if w.len() != n {
        return Err(CureError::Shape {
            expected: n,
            actual: w.len(),
        });
    }
    if n == 0 {
        return Err(CureError::Config("logistic fit needs at least one row".into()));
    }
    let q = z[0].len();
    if z.iter().any(|r| r.len() != q) {
        return Err(CureError::Config("ragged covariate rows".into()));
    }
    if z.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CureError::Numeric("incidence covariates".into()));
    }
    if w.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(CureError::Domain("weights must lie in [0, 1]".into()));
    }

    let first = w[0];
    if w.iter().all(|&v| v == first) {
        // intercept-only closed form
        let mut beta = vec![0.0; q + 1];
        let raw = logit(first);
        let capped = !(raw.abs() <= NORM_CAP);
        beta[0] = raw.clamp(-NORM_CAP, NORM_CAP);
        return Ok(LogisticFit {
            params: LogisticParams { beta },
            capped,
            iterations: 0,
        });
    }
    if n < q + 1 {
        return Err(CureError::Config(format!(
            "logistic fit needs at least {} rows, got {n}",
            q + 1
        )));
    }

    let dim = q + 1;
    let mean_w = w.iter().sum::<f64>() / n as f64;
    let mut beta = vec![0.0; dim];
    beta[0] = logit(mean_w.clamp(1e-6, 1.0 - 1e-6));
    let mut value = weighted_log_likelihood(&beta, z, w);
    let mut capped = false;
    let mut iterations = 0;

    while iterations < MAX_NEWTON_STEPS {
        let score = weighted_score(&beta, z, w);
        if score.iter().map(|s| s * s).sum::<f64>().sqrt() < SCORE_TOLERANCE {
            break;
        }
        let mut info = DMatrix::<f64>::zeros(dim, dim);
        for zi in z {
            let p = sigmoid(linear_predictor(&beta, zi));
            let v = p * (1.0 - p);
            for a in 0..dim {
                let za = if a == 0 { 1.0 } else { zi[a - 1] };
                for b in a..dim {
                    let zb = if b == 0 { 1.0 } else { zi[b - 1] };
                    info[(a, b)] += v * za * zb;
                }
            }
        }
        for a in 0..dim {
            for b in 0..a {
                info[(a, b)] = info[(b, a)];
            }
            info[(a, a)] += RIDGE;
        }
        let rhs = DVector::from_vec(score.clone());
        let step = match info.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => info
                .lu()
                .solve(&rhs)
                .ok_or_else(|| CureError::Numeric("singular logistic information".into()))?,
        };
        let slope: f64 = step.iter().zip(&score).map(|(a, b)| a * b).sum();

        let mut next = None;
        if 0.5 * slope <= 1e-12 * value.abs().max(1.0) {
            // the predicted gain is below rounding in the objective
            let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + s).collect();
            let v = weighted_log_likelihood(&trial, z, w);
            next = Some((trial, v));
        } else {
            let mut t = 1.0;
            while t > 1e-14 {
                let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
                let v = weighted_log_likelihood(&trial, z, w);
                if v >= value + 1e-4 * t * slope {
                    next = Some((trial, v));
                    break;
                }
                t *= 0.5;
            }
        }
        iterations += 1;
        let Some((trial, v)) = next else { break };
        let norm = trial.iter().map(|b| b * b).sum::<f64>().sqrt();
        if norm > NORM_CAP {
            let s = NORM_CAP / norm;
            beta = trial.iter().map(|b| b * s).collect();
            capped = true;
            break;
        }
        beta = trial;
        value = v;
    }
    Ok(LogisticFit {
        params: LogisticParams { beta },
        capped,
        iterations,
    })
}
