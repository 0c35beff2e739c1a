//! Platt scaling: sigmoid calibration of SVM decision values.

use serde::{Deserialize, Serialize};

use crate::error::{CureError, Result};

const EXPONENT_CLAMP: f64 = 500.0;
const GRADIENT_TOLERANCE: f64 = 1e-8;
const MAX_NEWTON_STEPS: usize = 200;

/// `pi = 1 / (1 + exp(A psi + B))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattCalibration {
    pub a: f64,
    pub b: f64,
}

/// Smoothed targets: `(n1 + 1)/(n1 + 2)` for susceptible, `1/(n0 + 2)` for cured.
pub fn platt_targets(labels: &[bool]) -> Result<Vec<f64>> {
    let n1 = labels.iter().filter(|&&j| j).count();
    let n0 = labels.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(CureError::DegenerateLabels);
    }
    let hi = (n1 as f64 + 1.0) / (n1 as f64 + 2.0);
    let lo = 1.0 / (n0 as f64 + 2.0);
    Ok(labels.iter().map(|&j| if j { hi } else { lo }).collect())
}

/// `log(1 + e^f)` without overflow.
fn softplus(f: f64) -> f64 {
    if f > 0.0 {
        f + (-f).exp().ln_1p()
    } else {
        f.exp().ln_1p()
    }
}

/// `e^f / (1 + e^f)`.
fn logistic(f: f64) -> f64 {
    if f >= 0.0 {
        1.0 / (1.0 + (-f).exp())
    } else {
        let e = f.exp();
        e / (1.0 + e)
    }
}

/// Concave calibration objective `sum (1 - t_i) f_i - log(1 + e^{f_i})`, `f = A psi + B`.
pub fn platt_objective(cal: PlattCalibration, psi: &[f64], targets: &[f64]) -> f64 {
    psi.iter()
        .zip(targets)
        .map(|(&s, &t)| {
            let f = cal.a * s + cal.b;
            (1.0 - t) * f - softplus(f)
        })
        .sum()
}

fn gradient_hessian(cal: PlattCalibration, psi: &[f64], targets: &[f64]) -> ([f64; 2], [f64; 3]) {
    let (mut ga, mut gb) = (0.0, 0.0);
    let (mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0);
    for (&s, &t) in psi.iter().zip(targets) {
        let sig = logistic(cal.a * s + cal.b);
        let r = (1.0 - t) - sig;
        ga += s * r;
        gb += r;
        let v = sig * (1.0 - sig);
        haa += v * s * s;
        hab += v * s;
        hbb += v;
    }
    // negated Hessian (positive semi-definite)
    ([ga, gb], [haa, hab, hbb])
}

/// Maximises the calibration objective by damped Newton with backtracking.
pub fn platt_fit(psi: &[f64], labels: &[bool]) -> Result<PlattCalibration> {
    if psi.len() != labels.len() {
        return Err(CureError::Shape {
            expected: labels.len(),
            actual: psi.len(),
        });
    }
    if psi.iter().any(|v| !v.is_finite()) {
        return Err(CureError::Numeric("decision values".into()));
    }
    let targets = platt_targets(labels)?;
    let n1 = labels.iter().filter(|&&j| j).count() as f64;
    let n0 = labels.len() as f64 - n1;
    let mut cal = PlattCalibration {
        a: 0.0,
        b: ((n0 + 1.0) / (n1 + 1.0)).ln(),
    };
    let mut value = platt_objective(cal, psi, &targets);
    for _ in 0..MAX_NEWTON_STEPS {
        let (g, h) = gradient_hessian(cal, psi, &targets);
        if g[0].hypot(g[1]) < GRADIENT_TOLERANCE {
            break;
        }
        // solve (H + ridge I) d = g, H = -Hessian
        let ridge = 1e-12 * (1.0 + h[0] + h[2]);
        let (a11, a12, a22) = (h[0] + ridge, h[1], h[2] + ridge);
        let det = a11 * a22 - a12 * a12;
        let (da, db) = if det > 0.0 {
            ((a22 * g[0] - a12 * g[1]) / det, (a11 * g[1] - a12 * g[0]) / det)
        } else {
            (g[0], g[1])
        };
        let slope = g[0] * da + g[1] * db;
        let mut step = 1.0;
        let mut improved = false;
        while step > 1e-14 {
            let trial = PlattCalibration {
                a: cal.a + step * da,
                b: cal.b + step * db,
            };
            let v = platt_objective(trial, psi, &targets);
            if v >= value + 1e-4 * step * slope {
                cal = trial;
                value = v;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(cal)
}

/// Calibrated uncured probability, kept strictly inside (0, 1).
pub fn platt_probability(cal: PlattCalibration, psi: f64) -> f64 {
    let f = (cal.a * psi + cal.b).clamp(-EXPONENT_CLAMP, EXPONENT_CLAMP);
    let p = 1.0 / (1.0 + f.exp());
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

impl PlattCalibration {
    pub fn probability(&self, psi: f64) -> f64 {
        platt_probability(*self, psi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets_follow_smoothed_counts() {
        let t = platt_targets(&[true, true, true, false, false, false]).unwrap();
        assert_eq!(t[0], 4.0 / 5.0);
        assert_eq!(t[5], 1.0 / 5.0);
        assert!(matches!(platt_targets(&[true, true]), Err(CureError::DegenerateLabels)));
    }

    #[test]
    fn flat_and_limiting_probabilities() {
        let flat = PlattCalibration { a: 0.0, b: 0.0 };
        assert_eq!(flat.probability(12.3), 0.5);
        let inc = PlattCalibration { a: -1.0, b: 0.0 };
        assert_eq!(inc.probability(0.0), 0.5);
        assert!(inc.probability(1e6) > 1.0 - 1e-12);
        assert!(inc.probability(1e6) < 1.0);
        assert!(inc.probability(-1e6) > 0.0);
        let cancel = PlattCalibration { a: -2.0, b: 1.0 };
        assert_eq!(cancel.probability(0.5), 0.5);
    }

    #[test]
    fn monotonicity_follows_sign_of_a() {
        let inc = PlattCalibration { a: -1.5, b: 0.2 };
        let dec = PlattCalibration { a: 1.5, b: 0.2 };
        assert!(inc.probability(1.0) > inc.probability(0.0));
        assert!(dec.probability(1.0) < dec.probability(0.0));
    }

    #[test]
    fn fit_reaches_stationary_point() {
        let psi = [-2.1, -1.3, -0.2, 0.4, 0.9, 1.8, -0.7, 0.1, 2.5, -1.9];
        let labels = [false, false, true, true, true, true, false, false, true, false];
        let cal = platt_fit(&psi, &labels).unwrap();
        let t = platt_targets(&labels).unwrap();
        let (g, _) = gradient_hessian(cal, &psi, &t);
        assert!(g[0].hypot(g[1]) < 1e-8);
        assert!(cal.a < 0.0);
    }

    #[test]
    fn constant_decision_values_still_fit() {
        let psi = [0.3; 6];
        let labels = [true, false, true, false, false, false];
        let cal = platt_fit(&psi, &labels).unwrap();
        let p = cal.probability(0.3);
        // mean of the smoothed targets
        let t = platt_targets(&labels).unwrap();
        let mean = t.iter().sum::<f64>() / 6.0;
        assert!((p - mean).abs() < 1e-6);
    }
}
