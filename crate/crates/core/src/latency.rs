//! Weibull proportional-hazards latency model.
//!
//! For a susceptible subject with covariates `x` the cumulative hazard is
//! `H(t) = t^alpha * exp(x' gamma)` and `S_u(t) = exp(-H(t))`. The M-step
//! maximises the weighted interval-censored objective
//!
//! ```text
//! Q2 = sum_i delta_i log{S_u(L_i) - S_u(R_i)} + (1 - delta_i) w_i log S_u(L_i)
//! ```
//!
//! over `(log alpha, gamma)`.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, IntervalObservation};
use crate::error::{CureError, Result};
use crate::optim::{bfgs, nelder_mead};

/// Lower bound applied to every log argument.
pub const LOG_FLOOR: f64 = 1e-300;
pub const GRADIENT_TOLERANCE: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyParams {
    /// Weibull shape.
    pub alpha: f64,
    /// Proportional-hazards coefficients.
    pub gamma: Vec<f64>,
}

impl LatencyParams {
    pub fn new(alpha: f64, gamma: Vec<f64>) -> Result<Self> {
        let p = LatencyParams { alpha, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(CureError::Domain(format!("Weibull shape {} must be positive", self.alpha)));
        }
        if self.gamma.iter().any(|g| !g.is_finite()) {
            return Err(CureError::Numeric("latency coefficients".into()));
        }
        Ok(())
    }

    /// Unconstrained coordinates `(log alpha, gamma)`.
    pub fn to_unconstrained(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.gamma.len() + 1);
        v.push(self.alpha.ln());
        v.extend_from_slice(&self.gamma);
        v
    }

    pub fn from_unconstrained(theta: &[f64]) -> LatencyParams {
        LatencyParams {
            alpha: theta[0].exp(),
            gamma: theta[1..].to_vec(),
        }
    }

    fn linear_predictor(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.gamma).map(|(a, b)| a * b).sum()
    }

    /// `t^alpha exp(x' gamma)`; infinite at `t = inf`.
    pub fn cumulative_hazard(&self, t: f64, x: &[f64]) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        t.powf(self.alpha) * self.linear_predictor(x).exp()
    }
}

/// Susceptible survival `exp{-t^alpha exp(x' gamma)}`.
pub fn survival_u(t: f64, x: &[f64], p: &LatencyParams) -> Result<f64> {
    if t.is_nan() || t < 0.0 {
        return Err(CureError::Domain(format!("survival evaluated at t = {t}")));
    }
    if x.len() != p.gamma.len() {
        return Err(CureError::Shape {
            expected: p.gamma.len(),
            actual: x.len(),
        });
    }
    Ok((-p.cumulative_hazard(t, x)).exp())
}

fn check_weights(d: &Dataset, w: &[f64], p: &LatencyParams) -> Result<()> {
    if w.len() != d.len() {
        return Err(CureError::Shape {
            expected: d.len(),
            actual: w.len(),
        });
    }
    if d.p() != p.gamma.len() {
        return Err(CureError::Shape {
            expected: d.p(),
            actual: p.gamma.len(),
        });
    }
    if w.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(CureError::Domain("weights must lie in [0, 1]".into()));
    }
    Ok(())
}

/// `S_u(L) - S_u(R)` computed as `S_u(L) (1 - exp(-(H_R - H_L)))`.
fn interval_mass(h_left: f64, h_right: f64) -> f64 {
    if h_right.is_infinite() {
        return (-h_left).exp();
    }
    (-h_left).exp() * -(-(h_right - h_left)).exp_m1()
}

fn term(o: &IntervalObservation, w: f64, p: &LatencyParams) -> f64 {
    let h_left = p.cumulative_hazard(o.left, &o.x);
    if o.event {
        let h_right = p.cumulative_hazard(o.right, &o.x);
        interval_mass(h_left, h_right).max(LOG_FLOOR).ln()
    } else if w == 0.0 {
        0.0
    } else {
        w * (-h_left).exp().max(LOG_FLOOR).ln()
    }
}

/// Weighted interval-censored latency objective.
pub fn q2_objective(p: &LatencyParams, d: &Dataset, w: &[f64]) -> Result<f64> {
    check_weights(d, w, p)?;
    Ok(d.observations.iter().zip(w).map(|(o, &wi)| term(o, wi, p)).sum())
}

/// Derivatives of `H(t)` with respect to `(log alpha, gamma)`.
fn hazard_derivative(t: f64, h: f64, x: &[f64], p: &LatencyParams, out: &mut [f64], scale: f64) {
    if t == 0.0 || h == 0.0 {
        return;
    }
    out[0] += scale * p.alpha * t.ln() * h;
    for (o, xk) in out[1..].iter_mut().zip(x) {
        *o += scale * xk * h;
    }
}

/// Analytic gradient of [`q2_objective`] in `(log alpha, gamma)` coordinates.
///
/// Fails with [`CureError::GradientUnreliable`] when a log argument hits
/// the floor, since the floored objective is flat there.
pub fn q2_gradient(p: &LatencyParams, d: &Dataset, w: &[f64]) -> Result<Vec<f64>> {
    check_weights(d, w, p)?;
    let mut grad = vec![0.0; p.gamma.len() + 1];
    for (o, &wi) in d.observations.iter().zip(w) {
        let h_left = p.cumulative_hazard(o.left, &o.x);
        if o.event {
            let h_right = p.cumulative_hazard(o.right, &o.x);
            if interval_mass(h_left, h_right) <= LOG_FLOOR {
                return Err(CureError::GradientUnreliable);
            }
            // d log(S_L - S_R) = (-dH_L + r dH_R) / (1 - r),  r = S_R / S_L
            let gap = h_right - h_left;
            let r = (-gap).exp();
            let denom = -(-gap).exp_m1();
            hazard_derivative(o.left, h_left, &o.x, p, &mut grad, -1.0 / denom);
            hazard_derivative(o.right, h_right, &o.x, p, &mut grad, r / denom);
        } else if wi > 0.0 {
            if (-h_left).exp() <= LOG_FLOOR {
                return Err(CureError::GradientUnreliable);
            }
            hazard_derivative(o.left, h_left, &o.x, p, &mut grad, -wi);
        }
    }
    Ok(grad)
}

/// Result of the latency M-step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyFit {
    pub params: LatencyParams,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The simplex search was used because the gradient was unreliable.
    pub used_fallback: bool,
}

/// Maximises [`q2_objective`] starting from `init`. Never returns a point
/// worse than `init`.
pub fn maximize_q2(d: &Dataset, w: &[f64], init: &LatencyParams) -> Result<LatencyFit> {
    init.validate()?;
    check_weights(d, w, init)?;
    let start_value = q2_objective(init, d, w)?;
    let theta0 = init.to_unconstrained();
    let value_and_grad = |theta: &[f64]| -> Result<(f64, Vec<f64>)> {
        let p = LatencyParams::from_unconstrained(theta);
        if !p.alpha.is_finite() || p.alpha <= 0.0 {
            return Err(CureError::Numeric("shape overflow".into()));
        }
        let v = q2_objective(&p, d, w)?;
        let g = q2_gradient(&p, d, w)?;
        Ok((-v, g.into_iter().map(|c| -c).collect()))
    };

    let (theta, converged, iterations, used_fallback) =
        match bfgs(value_and_grad, &theta0, GRADIENT_TOLERANCE, MAX_ITERATIONS) {
            Ok(m) => (m.x, m.converged, m.iterations, false),
            Err(CureError::GradientUnreliable) | Err(CureError::Numeric(_)) => {
                let simplex = nelder_mead(
                    |theta| {
                        let p = LatencyParams::from_unconstrained(theta);
                        if !(p.alpha > 0.0 && p.alpha.is_finite()) {
                            return f64::INFINITY;
                        }
                        q2_objective(&p, d, w).map(|v| -v).unwrap_or(f64::INFINITY)
                    },
                    &theta0,
                    0.1,
                    1e-12,
                    200 * (theta0.len() + 1) * (theta0.len() + 1),
                );
                // polish with gradients once the floor is no longer active
                match bfgs(value_and_grad, &simplex.x, GRADIENT_TOLERANCE, MAX_ITERATIONS) {
                    Ok(m) => (m.x, m.converged, simplex.iterations + m.iterations, true),
                    Err(_) => (simplex.x, false, simplex.iterations, true),
                }
            }
            Err(e) => return Err(e),
        };

    let params = LatencyParams::from_unconstrained(&theta);
    let objective = q2_objective(&params, d, w)?;
    if objective < start_value || !objective.is_finite() {
        return Ok(LatencyFit {
            params: init.clone(),
            objective: start_value,
            iterations,
            converged: false,
            used_fallback,
        });
    }
    Ok(LatencyFit {
        params,
        objective,
        iterations,
        converged,
        used_fallback,
    })
}
