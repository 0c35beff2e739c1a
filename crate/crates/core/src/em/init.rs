//! Starting values for the EM loop.
//!
//! Latency: Kaplan-Meier on midpoint times, then least squares of
//! `log(-log S(t))` on `(log t, x)`. Incidence: the event indicator is used
//! as a provisional cure label.

use nalgebra::{DMatrix, DVector};

use crate::data::{midpoint_times, Dataset};
use crate::error::{CureError, Result};
use crate::latency::LatencyParams;
use crate::svm::IncidenceSvm;

/// Shape used when the regression slope is not positive.
pub const FALLBACK_SHAPE: f64 = 0.1;

/// Product-limit estimate evaluated at each requested time.
///
/// At tied times events are removed before censorings.
pub fn kaplan_meier(times: &[f64], events: &[bool], at: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    // (event time, survival just after it)
    let mut steps: Vec<(f64, f64)> = Vec::new();
    let mut at_risk = times.len();
    let mut surv = 1.0;
    let mut k = 0;
    while k < order.len() {
        let t = times[order[k]];
        let mut deaths = 0;
        let mut total = 0;
        while k < order.len() && times[order[k]] == t {
            if events[order[k]] {
                deaths += 1;
            }
            total += 1;
            k += 1;
        }
        if deaths > 0 {
            surv *= 1.0 - deaths as f64 / at_risk as f64;
            steps.push((t, surv));
        }
        at_risk -= total;
    }
    at.iter()
        .map(|&t| {
            let idx = steps.partition_point(|&(s, _)| s <= t);
            if idx == 0 {
                1.0
            } else {
                steps[idx - 1].1
            }
        })
        .collect()
}

/// Applies the positivity rule to a regression shape estimate.
pub fn initial_shape(raw: f64) -> f64 {
    if raw > 0.0 && raw.is_finite() {
        raw
    } else {
        FALLBACK_SHAPE
    }
}

/// Raw least-squares coefficients `(alpha, gamma)` before the shape rule.
pub fn log_log_regression(d: &Dataset) -> Result<Vec<f64>> {
    let events = d.events();
    let times = midpoint_times(d);
    let event_times: Vec<f64> = times
        .iter()
        .zip(&events)
        .filter(|(_, &e)| e)
        .map(|(&t, _)| t)
        .collect();
    if event_times.is_empty() {
        return Err(CureError::NoEvents);
    }
    let first = event_times[0];
    if event_times.iter().all(|&t| t == first) {
        return Err(CureError::Domain(
            "need at least two distinct event midpoints for starting values".into(),
        ));
    }
    let surv = kaplan_meier(&times, &events, &times);
    let rows: Vec<usize> = (0..d.len())
        .filter(|&i| times[i] > 0.0 && surv[i] > 0.0 && surv[i] < 1.0)
        .collect();
    let p = d.p();
    if rows.len() < p + 1 {
        return Err(CureError::Domain(format!(
            "only {} usable Kaplan-Meier points for {} coefficients",
            rows.len(),
            p + 1
        )));
    }
    let design = DMatrix::from_fn(rows.len(), p + 1, |r, c| {
        let i = rows[r];
        if c == 0 {
            times[i].ln()
        } else {
            d.observations[i].x[c - 1]
        }
    });
    let response = DVector::from_iterator(rows.len(), rows.iter().map(|&i| (-surv[i].ln()).ln()));
    let coef = design
        .svd(true, true)
        .solve(&response, 1e-12)
        .map_err(|e| CureError::Numeric(format!("starting-value regression: {e}")))?;
    Ok(coef.iter().copied().collect())
}

/// Starting latency parameters.
pub fn initial_latency(d: &Dataset) -> Result<LatencyParams> {
    let coef = log_log_regression(d)?;
    LatencyParams::new(initial_shape(coef[0]), coef[1..].to_vec())
}

/// Starting incidence from an SVM trained on event indicators; a single
/// observed class yields the constant `mean(delta)` clamped into (0, 1).
pub fn initial_pi_svm(d: &Dataset, svm: &IncidenceSvm) -> Result<(Vec<f64>, bool)> {
    let events = d.events();
    match svm.calibrated_probabilities(&events) {
        Ok(p) => Ok((p, false)),
        Err(CureError::DegenerateLabels) => {
            let mean = events.iter().filter(|&&e| e).count() as f64 / d.len() as f64;
            Ok((vec![mean.clamp(1e-6, 1.0 - 1e-6); d.len()], true))
        }
        Err(e) => Err(e),
    }
}

/// Initial `(pi, latency)` for the SVM incidence model.
pub fn initial_values(d: &Dataset, svm: &IncidenceSvm) -> Result<(Vec<f64>, LatencyParams)> {
    let latency = initial_latency(d)?;
    let (pi, _) = initial_pi_svm(d, svm)?;
    Ok((pi, latency))
}
