//! The `qmap` command line: map documents, analysis reports and the regression corpus.

pub mod app;
pub mod commands;
pub mod corpus;
pub mod description;
pub mod report;

pub use app::{run, RunOutput};
pub use description::{emit_map, parse_map, MapDescription, SchemaError};
pub use report::{emit_report, parse_report, AnalysisReport, Format};
