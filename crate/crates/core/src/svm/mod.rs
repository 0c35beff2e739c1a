//! RBF-kernel SVM incidence model.

mod imputation;
mod kernel;
mod platt;
mod smo;
mod tuning;

use serde::{Deserialize, Serialize};

use crate::error::{CureError, Result};

pub use imputation::{
    impute_and_estimate_pi, ImputationDiagnostics, ImputationOutcome, IncidenceSvm, MAX_REDRAWS,
};
pub use kernel::{rbf_kernel, Gram, SquaredDistances};
pub use platt::{platt_fit, platt_objective, platt_probability, platt_targets, PlattCalibration};
pub use smo::{
    classify, decision_value, dual_objective, smo_train, solve_dual, training_decisions,
    DualSolution, SvmModel, DEFAULT_KKT_TOLERANCE, ITERATIONS_PER_POINT,
};
pub use tuning::{
    cross_validated_accuracy, default_grid, grid_from, stratified_folds, tune_hyperparams,
    GridScore, TuningOutcome,
};

/// Box constraint `C` and kernel width `sigma2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub c: f64,
    pub sigma2: f64,
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(CureError::Config(format!("C = {} must be positive", self.c)));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(CureError::Config(format!(
                "sigma2 = {} must be positive",
                self.sigma2
            )));
        }
        Ok(())
    }
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams { c: 1.0, sigma2: 1.0 }
    }
}
