//! Experiment orchestration: sampling, the selection phase at T = 0, the
//! teaching-size phase at T = 1, and report generation from the caches.
//!
//! Output directory layout:
//!
//! ```text
//! manifest.json
//! samples/<concept>.ndjson
//! cache/selection.ndjson
//! cache/teaching.ndjson
//! reports/...
//! ```

mod config;
mod executor;
mod manifest;
mod report;
mod run;

use std::path::PathBuf;

use thiserror::Error;

use crate::drawing::DrawingError;
use crate::learner::LearnerError;

pub use config::{load_priors, read_priors, ExperimentConfig, ProtocolSection, SampleSection};
pub use executor::run_ordered;
pub use manifest::{PhaseState, RunManifest};
pub use report::{emit_reports, ReportSummary};
pub use run::{Experiment, IngestSummary, Layout, PhaseSummary, RunOptions, SELECT_PHASE, TEACH_PHASE};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("priors: {0}")]
    Priors(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Drawing(#[from] DrawingError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error("{missing} not found; run `{phase}` first")]
    PhaseMissing { phase: &'static str, missing: String },
    #[error("output directory belongs to a run with config {found}, current config is {expected}; use --fresh to start over")]
    ConfigChanged { expected: String, found: String },
    #[error("{failed} task(s) failed, progress is cached; first error: {first}")]
    Incomplete { failed: usize, first: String },
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_owned(),
        source,
    }
}
