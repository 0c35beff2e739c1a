//! Non-parametric bootstrap standard errors.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_em, EmConfig};
use crate::data::Dataset;
use crate::error::{CureError, Result};
use crate::seeding::substream;

/// Redraws allowed after a replicate raises a hard error.
pub const MAX_REPLICATE_REDRAWS: usize = 5;
/// Failed-replicate fraction beyond which the bootstrap is rejected.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateEstimate {
    pub alpha: f64,
    pub gamma: Vec<f64>,
    pub mean_pi: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub se_alpha: f64,
    pub se_gamma: Vec<f64>,
    pub se_mean_pi: f64,
    pub replicates: Vec<ReplicateEstimate>,
    /// Replicates kept despite hitting `max_iter`.
    pub unconverged: usize,
    pub redraws: usize,
    pub failed: usize,
}

fn fit_replicate(d: &Dataset, cfg: &EmConfig, indices: &[usize]) -> Result<ReplicateEstimate> {
    let sample = d.resample(indices);
    let fit = fit_em(&sample, cfg)?;
    Ok(ReplicateEstimate {
        alpha: fit.latency.alpha,
        gamma: fit.latency.gamma.clone(),
        mean_pi: fit.mean_pi(),
        converged: fit.converged,
    })
}

fn sample_sd(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    (values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn summarise(
    outcomes: Vec<(Option<ReplicateEstimate>, usize)>,
    p: usize,
) -> Result<BootstrapSummary> {
    let total = outcomes.len();
    let redraws = outcomes.iter().map(|(_, r)| r).sum();
    let replicates: Vec<ReplicateEstimate> = outcomes.into_iter().filter_map(|(e, _)| e).collect();
    let failed = total - replicates.len();
    if failed as f64 > MAX_FAILURE_FRACTION * total as f64 || replicates.len() < 2 {
        return Err(CureError::BootstrapUnstable { failed, total });
    }
    let se_alpha = sample_sd(replicates.iter().map(|r| r.alpha));
    let se_gamma = (0..p)
        .map(|k| sample_sd(replicates.iter().map(move |r| r.gamma[k])))
        .collect();
    let se_mean_pi = sample_sd(replicates.iter().map(|r| r.mean_pi));
    let unconverged = replicates.iter().filter(|r| !r.converged).count();
    Ok(BootstrapSummary {
        se_alpha,
        se_gamma,
        se_mean_pi,
        replicates,
        unconverged,
        redraws,
        failed,
    })
}

/// Bootstrap over `cfg.bootstrap_b` resamples of size `n`.
///
/// Replicate `b` uses stream `b + 1` of `cfg.seed` for both its resample
/// and its own fit seed, so results do not depend on scheduling.
pub fn bootstrap_se(d: &Dataset, cfg: &EmConfig) -> Result<BootstrapSummary> {
    if cfg.bootstrap_b < 2 {
        return Err(CureError::Config("bootstrap needs at least 2 replicates".into()));
    }
    cfg.validate()?;
    let n = d.len();
    let outcomes: Vec<(Option<ReplicateEstimate>, usize)> = (0..cfg.bootstrap_b)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(cfg.seed, b as u64 + 1);
            for attempt in 0..=MAX_REPLICATE_REDRAWS {
                let indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let replicate_cfg = EmConfig {
                    seed: rng.random(),
                    ..cfg.clone()
                };
                if let Ok(est) = fit_replicate(d, &replicate_cfg, &indices) {
                    return (Some(est), attempt);
                }
            }
            (None, MAX_REPLICATE_REDRAWS)
        })
        .collect();
    summarise(outcomes, d.p())
}

/// Bootstrap over caller-supplied resamples, each fitted with `cfg` as is.
pub fn bootstrap_from_resamples(
    d: &Dataset,
    cfg: &EmConfig,
    resamples: &[Vec<usize>],
) -> Result<BootstrapSummary> {
    if resamples.len() < 2 {
        return Err(CureError::Config("bootstrap needs at least 2 replicates".into()));
    }
    if resamples.iter().flatten().any(|&i| i >= d.len()) {
        return Err(CureError::Config("resample index out of range".into()));
    }
    let outcomes = resamples
        .par_iter()
        .map(|idx| (fit_replicate(d, cfg, idx).ok(), 0))
        .collect();
    summarise(outcomes, d.p())
}
