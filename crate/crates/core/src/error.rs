use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum CureError {
    #[error("missing column `{column}`")]
    Schema { column: String },

    #[error("row {row}: {reason}")]
    Validation { row: usize, reason: String },

    #[error("covariate column `{column}` has zero variance")]
    DegenerateColumn { column: String },

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("labels contain a single class")]
    DegenerateLabels,

    #[error("SMO hit the iteration limit ({iterations}) with KKT residual {residual:.3e}")]
    IterationLimit { iterations: usize, residual: f64 },

    #[error("cross-validation fold without both classes: {0}")]
    DegenerateFold(String),

    #[error("dataset contains no events")]
    NoEvents,

    #[error("gradient unreliable: interval likelihood underflowed")]
    GradientUnreliable,

    #[error("bootstrap unstable: {failed} of {total} replicates failed")]
    BootstrapUnstable { failed: usize, total: usize },

    #[error("Monte Carlo study unstable: {failed} of {total} runs failed")]
    StudyUnstable { failed: usize, total: usize },

    #[error("EM iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<CureError>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CureError {
    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            CureError::Schema { .. } => "schema",
            CureError::Validation { .. } => "validation",
            CureError::DegenerateColumn { .. } => "degenerate_column",
            CureError::Numeric(_) => "numeric",
            CureError::Shape { .. } => "shape",
            CureError::Domain(_) => "domain",
            CureError::DegenerateLabels => "degenerate_labels",
            CureError::IterationLimit { .. } => "iteration_limit",
            CureError::DegenerateFold(_) => "degenerate_fold",
            CureError::NoEvents => "no_events",
            CureError::GradientUnreliable => "gradient_unreliable",
            CureError::BootstrapUnstable { .. } => "bootstrap_unstable",
            CureError::StudyUnstable { .. } => "study_unstable",
            CureError::AtIteration { source, .. } => source.kind(),
            CureError::Config(_) => "config",
            CureError::Io(_) => "io",
            CureError::Csv(_) => "csv",
            CureError::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, CureError>;
