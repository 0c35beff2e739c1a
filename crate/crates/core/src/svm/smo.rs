//! Sequential minimal optimization for the soft-margin RBF dual.
//!
//! We solve the equivalent minimisation
//!
//! ```text
//! min_a  1/2 a^T Q a - e^T a,   Q_ij = y_i y_j K(z_i, z_j)
//! s.t.   y^T a = 0,  0 <= a_i <= C
//! ```
//!
//! two coordinates at a time, choosing the maximal violating pair on the
//! first-order KKT conditions. Labels are encoded `y = 2J - 1`.

use serde::{Deserialize, Serialize};

use super::kernel::{rbf_kernel, Gram};
use super::HyperParams;
use crate::error::{CureError, Result};

pub const DEFAULT_KKT_TOLERANCE: f64 = 1e-3;

/// Iteration cap is this multiple of the training-set size.
pub const ITERATIONS_PER_POINT: usize = 100_000;

const TAU: f64 = 1e-12;

/// A trained classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// Dual coefficients, one per training point.
    pub duals: Vec<f64>,
    /// `+1` for susceptible, `-1` for cured.
    pub labels: Vec<f64>,
    pub support_z: Vec<Vec<f64>>,
    pub b: f64,
    pub sigma2: f64,
    pub c: f64,
    /// Final maximal KKT violation.
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Raw solution of the dual on a precomputed Gram matrix.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub b: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

pub(crate) fn encode_labels(labels: &[bool]) -> Vec<f64> {
    labels.iter().map(|&j| if j { 1.0 } else { -1.0 }).collect()
}

fn check_classes(labels: &[bool]) -> Result<()> {
    let pos = labels.iter().filter(|&&j| j).count();
    if pos == 0 || pos == labels.len() {
        return Err(CureError::DegenerateLabels);
    }
    Ok(())
}

/// Trains on covariate rows `z` with cure indicators `labels` (`true` = susceptible).
pub fn smo_train(labels: &[bool], z: &[Vec<f64>], hp: HyperParams, tol: f64) -> Result<SvmModel> {
    if labels.len() != z.len() {
        return Err(CureError::Shape {
            expected: labels.len(),
            actual: z.len(),
        });
    }
    hp.validate()?;
    if z.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CureError::Numeric("training covariates".into()));
    }
    let gram = Gram::rbf(z, hp.sigma2);
    let sol = solve_dual(&gram, labels, hp.c, tol)?;
    Ok(SvmModel {
        duals: sol.alpha,
        labels: encode_labels(labels),
        support_z: z.to_vec(),
        b: sol.b,
        sigma2: hp.sigma2,
        c: hp.c,
        kkt_residual: sol.kkt_residual,
        iterations: sol.iterations,
    })
}

/// SMO on a precomputed Gram matrix.
pub fn solve_dual(gram: &Gram, labels: &[bool], c: f64, tol: f64) -> Result<DualSolution> {
    let n = labels.len();
    if n < 2 {
        return Err(CureError::Config("SMO needs at least two points".into()));
    }
    if gram.len() != n {
        return Err(CureError::Shape {
            expected: n,
            actual: gram.len(),
        });
    }
    if !(tol > 0.0) {
        return Err(CureError::Config(format!("KKT tolerance {tol} must be positive")));
    }
    check_classes(labels)?;
    let y = encode_labels(labels);
    let mut alpha = vec![0.0; n];
    // gradient of the minimised objective: Q a - e
    let mut grad = vec![-1.0; n];
    let max_iter = ITERATIONS_PER_POINT.saturating_mul(n);
    let mut iterations = 0;

    loop {
        let (i, j, residual) = select_pair(&alpha, &grad, &y, c);
        if residual < tol {
            let b = threshold(&alpha, &grad, &y, c);
            return Ok(DualSolution {
                alpha,
                b,
                kkt_residual: residual.max(0.0),
                iterations,
            });
        }
        if iterations >= max_iter {
            return Err(CureError::IterationLimit {
                iterations,
                residual,
            });
        }
        iterations += 1;

        let (i, j) = (i.expect("violating pair"), j.expect("violating pair"));
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let mut quad = gram.get(i, i) + gram.get(j, j) - 2.0 * gram.get(i, j);
        if quad <= 0.0 {
            quad = TAU;
        }
        let (mut ai, mut aj) = (old_i, old_j);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;

        let di = (ai - old_i) * y[i];
        let dj = (aj - old_j) * y[j];
        let (ki, kj) = (gram.row(i), gram.row(j));
        for t in 0..n {
            grad[t] += y[t] * (ki[t] * di + kj[t] * dj);
        }
    }
}

/// Maximal violating pair `(i in I_up, j in I_low)` and the gap `m - M`.
fn select_pair(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> (Option<usize>, Option<usize>, f64) {
    let mut up_max = f64::NEG_INFINITY;
    let mut low_min = f64::INFINITY;
    let (mut i, mut j) = (None, None);
    for t in 0..alpha.len() {
        let v = -y[t] * grad[t];
        let in_up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
        let in_low = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c);
        if in_up && v >= up_max {
            up_max = v;
            i = Some(t);
        }
        if in_low && v <= low_min {
            low_min = v;
            j = Some(t);
        }
    }
    if i.is_none() || j.is_none() {
        return (i, j, 0.0);
    }
    (i, j, up_max - low_min)
}

/// Offset `b` of the decision function, averaged over margin support
/// vectors (`0 < a < C`), else the midpoint of the feasible interval.
fn threshold(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    if free > 0 {
        free_sum / free as f64
    } else {
        0.5 * (upper + lower)
    }
}

/// Value of the maximised dual `sum a - 1/2 sum a_i a_j y_i y_j K_ij`.
pub fn dual_objective(gram: &Gram, labels: &[bool], alpha: &[f64]) -> f64 {
    let y = encode_labels(labels);
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        let row = gram.row(i);
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * row[j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Decision values `psi` at every training point.
pub fn training_decisions(gram: &Gram, labels: &[bool], sol: &DualSolution) -> Vec<f64> {
    let y = encode_labels(labels);
    let n = labels.len();
    let mut psi = vec![-sol.b; n];
    for i in 0..n {
        let coef = sol.alpha[i] * y[i];
        if coef == 0.0 {
            continue;
        }
        for (p, k) in psi.iter_mut().zip(gram.row(i)) {
            *p += coef * k;
        }
    }
    psi
}

/// `psi(z) = sum_i d_i y_i K(z_i, z) - b`; positive means susceptible.
pub fn decision_value(model: &SvmModel, z_new: &[f64]) -> Result<f64> {
    let q = model.support_z.first().map_or(z_new.len(), Vec::len);
    if z_new.len() != q {
        return Err(CureError::Shape {
            expected: q,
            actual: z_new.len(),
        });
    }
    let mut psi = -model.b;
    for ((d, y), zi) in model.duals.iter().zip(&model.labels).zip(&model.support_z) {
        if *d != 0.0 {
            psi += d * y * rbf_kernel(zi, z_new, model.sigma2)?;
        }
    }
    Ok(psi)
}

/// Hard classification; a zero decision value counts as susceptible.
pub fn classify(psi: f64) -> bool {
    psi >= 0.0
}

impl SvmModel {
    pub fn decision_value(&self, z_new: &[f64]) -> Result<f64> {
        decision_value(self, z_new)
    }

    pub fn predict(&self, z_new: &[f64]) -> Result<bool> {
        decision_value(self, z_new).map(classify)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mirror_pair_has_equal_duals_and_zero_offset() {
        let z = vec![vec![-1.0], vec![1.0]];
        let labels = [false, true];
        let hp = HyperParams { c: 10.0, sigma2: 1.0 };
        let m = smo_train(&labels, &z, hp, DEFAULT_KKT_TOLERANCE).unwrap();
        assert!((m.duals[0] - m.duals[1]).abs() < 1e-12);
        assert!(m.b.abs() < 1e-12);
        assert!(m.decision_value(&[1.0]).unwrap() > 0.0);
        assert!(m.decision_value(&[-1.0]).unwrap() < 0.0);
    }

    #[test]
    fn separates_xor() {
        let z = vec![vec![1.0, 1.0], vec![-1.0, -1.0], vec![1.0, -1.0], vec![-1.0, 1.0]];
        let labels = [true, true, false, false];
        let hp = HyperParams { c: 100.0, sigma2: 1.0 };
        let m = smo_train(&labels, &z, hp, DEFAULT_KKT_TOLERANCE).unwrap();
        for (zi, &j) in z.iter().zip(&labels) {
            assert_eq!(m.predict(zi).unwrap(), j);
        }
    }

    #[test]
    fn empty_expansion_gives_zero() {
        let m = SvmModel {
            duals: vec![0.0, 0.0],
            labels: vec![1.0, -1.0],
            support_z: vec![vec![0.0], vec![1.0]],
            b: 0.0,
            sigma2: 1.0,
            c: 1.0,
            kkt_residual: 0.0,
            iterations: 0,
        };
        assert_eq!(m.decision_value(&[3.7]).unwrap(), 0.0);
        assert!(classify(0.0));
        assert!(matches!(
            m.decision_value(&[1.0, 2.0]),
            Err(CureError::Shape { .. })
        ));
    }

    #[test]
    fn single_class_is_rejected() {
        let z = vec![vec![0.0], vec![1.0]];
        let hp = HyperParams { c: 1.0, sigma2: 1.0 };
        assert!(matches!(
            smo_train(&[true, true], &z, hp, 1e-3),
            Err(CureError::DegenerateLabels)
        ));
    }

    #[test]
    fn margin_vectors_reproduce_labels() {
        let z: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = i as f64 * 0.37;
                vec![t.sin() * 2.0, (t * 1.3).cos()]
            })
            .collect();
        let labels: Vec<bool> = z.iter().map(|r| r[0] * r[1] > 0.0).collect();
        let hp = HyperParams { c: 5.0, sigma2: 0.5 };
        let m = smo_train(&labels, &z, hp, 1e-3).unwrap();
        let constraint: f64 = m.duals.iter().zip(&m.labels).map(|(d, y)| d * y).sum();
        assert!(constraint.abs() <= 1e-8 * 20.0 * hp.c);
        assert!(m.kkt_residual <= 1e-3);
        for (i, zi) in z.iter().enumerate() {
            let d = m.duals[i];
            assert!((0.0..=hp.c).contains(&d));
            if d > 0.0 && d < hp.c {
                let margin = m.labels[i] * m.decision_value(zi).unwrap();
                assert!(margin >= -1e-3);
                assert!((margin - 1.0).abs() < 1e-2);
            }
        }
    }
}
