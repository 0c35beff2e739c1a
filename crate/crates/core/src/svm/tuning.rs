//! Stratified k-fold grid search over `(C, sigma2)`.

use serde::{Deserialize, Serialize};

use super::kernel::SquaredDistances;
use super::smo::{classify, solve_dual, DEFAULT_KKT_TOLERANCE};
use super::HyperParams;
use crate::error::{CureError, Result};

/// Default search grid on standardized covariates.
pub fn default_grid() -> Vec<HyperParams> {
    grid_from(&[0.1, 1.0, 10.0, 100.0], &[0.25, 0.5, 1.0, 2.0, 4.0])
}

/// Cartesian product of the two axes.
pub fn grid_from(cs: &[f64], sigma2s: &[f64]) -> Vec<HyperParams> {
    cs.iter()
        .flat_map(|&c| sigma2s.iter().map(move |&sigma2| HyperParams { c, sigma2 }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub params: HyperParams,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningOutcome {
    pub best: HyperParams,
    pub accuracy: f64,
    pub scores: Vec<GridScore>,
}

/// Fold index per subject. Each class is dealt round-robin over the folds,
/// so every fold holds both classes whenever each class has at least
/// `folds` members.
pub fn stratified_folds(labels: &[bool], folds: usize) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(CureError::Config(format!("folds = {folds}, need at least 2")));
    }
    let n1 = labels.iter().filter(|&&j| j).count();
    let n0 = labels.len() - n1;
    if n1 < folds || n0 < folds {
        return Err(CureError::DegenerateFold(format!(
            "{n1} susceptible / {n0} cured labels cannot fill {folds} folds"
        )));
    }
    let (mut next_pos, mut next_neg) = (0, 0);
    Ok(labels
        .iter()
        .map(|&j| {
            let counter = if j { &mut next_pos } else { &mut next_neg };
            let f = *counter % folds;
            *counter += 1;
            f
        })
        .collect())
}

/// Mean held-out accuracy across folds.
pub fn cross_validated_accuracy(
    labels: &[bool],
    dists: &SquaredDistances,
    fold_of: &[usize],
    folds: usize,
    hp: HyperParams,
) -> Result<f64> {
    let mut total = 0.0;
    for f in 0..folds {
        let train: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] != f).collect();
        let test: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] == f).collect();
        let train_labels: Vec<bool> = train.iter().map(|&i| labels[i]).collect();
        let gram = dists.subset(&train).gram(hp.sigma2);
        let sol = solve_dual(&gram, &train_labels, hp.c, DEFAULT_KKT_TOLERANCE)?;
        let mut correct = 0usize;
        for &t in &test {
            let mut psi = -sol.b;
            for (k, &i) in train.iter().enumerate() {
                let a = sol.alpha[k];
                if a != 0.0 {
                    let y = if train_labels[k] { 1.0 } else { -1.0 };
                    psi += a * y * (-dists.get(i, t) / hp.sigma2).exp();
                }
            }
            if classify(psi) == labels[t] {
                correct += 1;
            }
        }
        total += correct as f64 / test.len() as f64;
    }
    Ok(total / folds as f64)
}

/// Grid point with the best cross-validated accuracy; ties go to the
/// smaller `C`, then the smaller `sigma2`.
pub fn tune_hyperparams(
    labels: &[bool],
    z: &[Vec<f64>],
    grid: &[HyperParams],
    folds: usize,
) -> Result<TuningOutcome> {
    if grid.is_empty() {
        return Err(CureError::Config("hyperparameter grid is empty".into()));
    }
    if labels.len() != z.len() {
        return Err(CureError::Shape {
            expected: labels.len(),
            actual: z.len(),
        });
    }
    for hp in grid {
        hp.validate()?;
    }
    let fold_of = stratified_folds(labels, folds)?;
    let dists = SquaredDistances::new(z);
    let mut order: Vec<HyperParams> = grid.to_vec();
    order.sort_by(|a, b| a.c.total_cmp(&b.c).then(a.sigma2.total_cmp(&b.sigma2)));

    let mut scores = Vec::with_capacity(order.len());
    for hp in order {
        let accuracy = cross_validated_accuracy(labels, &dists, &fold_of, folds, hp)?;
        scores.push(GridScore { params: hp, accuracy });
    }
    let mut best = scores[0];
    for s in &scores[1..] {
        if s.accuracy > best.accuracy + 1e-12 {
            best = *s;
        }
    }
    Ok(TuningOutcome {
        best: best.params,
        accuracy: best.accuracy,
        scores,
    })
}
