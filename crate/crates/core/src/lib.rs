//! Mixture cure rate model for interval-censored survival data with an
//! SVM-based incidence component and a Weibull proportional-hazards latency.

pub mod cli;
pub mod data;
pub mod em;
pub mod evaluation;
pub mod error;
pub mod latency;
pub mod logistic;
pub mod optim;
pub mod seeding;
pub mod simulation;
pub mod svm;

pub use data::{Dataset, IntervalObservation, Schema};
pub use em::{fit_em, EmConfig, FitResult, IncidenceKind};
pub use error::{CureError, Result};
pub use latency::LatencyParams;
