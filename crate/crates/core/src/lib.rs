//! Trains binary length-of-stay classifiers over coded categorical
//! treatment-episode data and audits them for group- and subgroup-level
//! bias, with optional reweighting and per-group threshold mitigation.

pub mod codebook;
pub mod error;
pub mod fairness;
pub mod feature_select;
pub mod ingest;
pub mod learners;
pub mod metrics;
pub mod mitigate;
pub mod oracle;
pub mod pipeline;
pub mod report;
pub mod sampling;
pub mod synth;
pub mod table;

pub use codebook::{load_codebook, Codebook, Role, VariableSpec};
pub use error::{Error, ErrorClass, Result};
pub use table::{CodedTable, Cohort, LabeledTable};
