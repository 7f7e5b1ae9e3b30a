//! Semi-supervised model-based clustering of multi-region epidemic time
//! series.
//!
//! Per-region daily cumulative case and death counts are standardized to
//! rates per 100,000 inhabitants, aligned at each region's onset time, and
//! clustered with a mixture of bivariate Gaussian nonlinear regressions whose
//! mean trends are four-parameter generalized logistic curves. Because all
//! observations of a region must share one cluster, the EM algorithm operates
//! on blocks (one per region) rather than individual points. The number of
//! clusters is chosen by BIC over seeded random-restart sweeps.
//!
//! Start with the runnable programs in `examples/`, one per capability:
//! ingestion, curve evaluation, fitting, order selection, classification,
//! warm refits and report export. The `epimix` binary wraps the same library
//! entry points behind `fit` / `classify` / `report` subcommands.

pub mod data;
pub mod em;
pub mod error;
pub mod growth;
pub mod mixture;
mod optim;
pub mod report;
pub mod selection;

pub use data::{Block, Dataset, PipelineConfig, RegionSeries, TimeScale};

/// `true` only for finite, strictly positive values (rejects NaN).
pub(crate) fn is_positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}
pub use em::{EmConfig, EmOutcome, EmTrace, FitResult, Termination};
pub use error::Error;
pub use growth::{BivariateCurve, LogisticParams};
pub use mixture::{Assignment, Component, Covariance2, MixtureModel, Posteriors};
pub use selection::{BicMode, SweepConfig, SweepResult};
