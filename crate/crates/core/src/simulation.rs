//! Synthetic interval-censored mixture-cure data.
//!
//! Covariates are two independent standard normals shared by both model
//! parts. Cure status follows one of three incidence scenarios, susceptible
//! lifetimes are Weibull proportional hazards, censoring is uniform, and
//! event times are coarsened onto a random inspection grid.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, IntervalObservation};
use crate::error::{CureError, Result};
use crate::latency::LatencyParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// Logistic, linear boundary.
    Linear = 1,
    /// Logistic in squared covariates.
    Quadratic = 2,
    /// Complementary log-log style in trigonometric covariates.
    Trigonometric = 3,
}

impl Scenario {
    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Scenario::Linear),
            2 => Ok(Scenario::Quadratic),
            3 => Ok(Scenario::Trigonometric),
            _ => Err(CureError::Domain(format!("unknown scenario {id}"))),
        }
    }

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn all() -> [Scenario; 3] {
        [Scenario::Linear, Scenario::Quadratic, Scenario::Trigonometric]
    }
}

fn logistic(eta: f64) -> f64 {
    crate::logistic::sigmoid(eta)
}

/// True uncured probability under a scenario.
pub fn scenario_pi(scenario: Scenario, z: &[f64]) -> Result<f64> {
    if z.len() != 2 {
        return Err(CureError::Shape {
            expected: 2,
            actual: z.len(),
        });
    }
    let (z1, z2) = (z[0], z[1]);
    Ok(match scenario {
        Scenario::Linear => logistic(0.3 - 5.0 * z1 - 3.0 * z2),
        Scenario::Quadratic => logistic(0.3 + 10.0 * z1 * z1 - 5.0 * z2 * z2),
        Scenario::Trigonometric => (-(0.3 - 4.0 * z1.cos() - 5.0 * z2.sin()).exp()).exp(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub latency_truth: LatencyParams,
    /// Censoring times are Uniform(0, censor_upper).
    pub censor_upper: f64,
    pub n: usize,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, n: usize) -> Self {
        ScenarioSpec {
            scenario,
            latency_truth: LatencyParams {
                alpha: 0.5,
                gamma: vec![1.0, 0.5],
            },
            censor_upper: 20.0,
            n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(CureError::Config("n must be >= 1".into()));
        }
        if !(self.censor_upper > 0.0 && self.censor_upper.is_finite()) {
            return Err(CureError::Config("censor_upper must be positive".into()));
        }
        if self.latency_truth.gamma.len() != 2 {
            return Err(CureError::Shape {
                expected: 2,
                actual: self.latency_truth.gamma.len(),
            });
        }
        self.latency_truth.validate()
    }
}

/// Inspection interval `(L, R]` containing `t` on the grid
/// `0, first, first + width, first + 2 width, ...`.
pub fn inspection_interval(t: f64, first: f64, width: f64) -> (f64, f64) {
    if t <= first {
        return (0.0, first);
    }
    let mut k = ((t - first) / width).ceil().max(1.0);
    // guard against rounding at cell edges
    while first + (k - 1.0) * width >= t {
        k -= 1.0;
    }
    while first + k * width < t {
        k += 1.0;
    }
    (first + (k - 1.0) * width, first + k * width)
}

/// Draws one dataset with truth columns filled in.
pub fn generate_dataset<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<Dataset> {
    spec.validate()?;
    let truth = &spec.latency_truth;
    let mut observations = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let z = vec![z1, z2];
        let pi = scenario_pi(spec.scenario, &z)?;
        let u: f64 = rng.random();
        let censor = rng.random::<f64>() * spec.censor_upper;

        let (left, right, susceptible) = if u <= 1.0 - pi {
            (censor, f64::INFINITY, false)
        } else {
            // inverse CDF of S_u(t) = exp(-t^alpha e^eta)
            let eta = truth.gamma[0] * z1 + truth.gamma[1] * z2;
            let v: f64 = 1.0 - rng.random::<f64>();
            let t = (-v.ln() * (-eta).exp()).powf(1.0 / truth.alpha);
            if t > censor {
                (censor, f64::INFINITY, true)
            } else {
                let width = 0.2 + 0.5 * rng.random::<f64>();
                let first = rng.random::<f64>();
                let (l, r) = inspection_interval(t, first, width);
                (l, r, true)
            }
        };
        observations.push(IntervalObservation {
            left,
            right,
            event: right.is_finite(),
            x: z.clone(),
            z,
            true_status: Some(susceptible),
            true_pi: Some(pi),
        });
    }
    Dataset::new(observations, vec!["z1".into(), "z2".into()], vec!["z1".into(), "z2".into()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::substream;

    #[test]
    fn scenario_values_at_origin() {
        let e = 0.3f64.exp() / (1.0 + 0.3f64.exp());
        assert!((scenario_pi(Scenario::Linear, &[0.0, 0.0]).unwrap() - e).abs() < 1e-15);
        assert!((scenario_pi(Scenario::Quadratic, &[0.0, 0.0]).unwrap() - e).abs() < 1e-15);
        let s3 = scenario_pi(Scenario::Trigonometric, &[0.0, 0.0]).unwrap();
        assert!((s3 - (-(-3.7f64).exp()).exp()).abs() < 1e-15);
        assert!((s3 - 0.97559).abs() < 5e-5);
        assert!(Scenario::from_id(4).is_err());
        assert!(scenario_pi(Scenario::Linear, &[0.0]).is_err());
    }

    #[test]
    fn interval_grid_contains_time() {
        assert_eq!(inspection_interval(0.3, 0.5, 0.4), (0.0, 0.5));
        let (l, r) = inspection_interval(1.2, 0.5, 0.4);
        assert!((l - 0.9).abs() < 1e-12 && (r - 1.3).abs() < 1e-12);
        // exactly on a grid point belongs to the cell it closes
        let (l, r) = inspection_interval(0.9, 0.5, 0.4);
        assert!(l < 0.9 && r >= 0.9);
    }

    #[test]
    fn generated_records_respect_construction() {
        let spec = ScenarioSpec::new(Scenario::Quadratic, 2000);
        let d = generate_dataset(&spec, &mut substream(5, 0)).unwrap();
        for o in &d.observations {
            assert_eq!(o.event, o.right.is_finite());
            if o.true_status == Some(false) {
                assert!(!o.event);
            }
            if o.event {
                let width = o.right - o.left;
                if o.left == 0.0 {
                    assert!(o.right <= 1.0);
                } else {
                    assert!(width > 0.2 && width <= 0.7 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_data() {
        let spec = ScenarioSpec::new(Scenario::Linear, 50);
        let a = generate_dataset(&spec, &mut substream(9, 2)).unwrap();
        let b = generate_dataset(&spec, &mut substream(9, 2)).unwrap();
        assert_eq!(a, b);
    }
}
