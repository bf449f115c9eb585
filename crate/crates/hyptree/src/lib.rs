//! File formats, CSV ingestion, reports and the `hyptree` command line on top
//! of [`hyptree_core`].

pub mod cli;
pub mod error;
pub mod ingest;
pub mod model_file;
pub mod parallel;
pub mod report;

pub use crate::error::{Error, Result};
pub use crate::ingest::{load_csv, FeatureSpec, IngestSummary, LoadOptions};
pub use crate::model_file::{load_model, save_model, ModelFile};
pub use crate::report::{emit_report, Report};
