//! Batch runners for the three studies (option distributions, coordination
//! cost, pose-optimized tracking cost), result tables and the `cotransport`
//! command line.

pub mod spec;
pub mod studies;
pub mod table;

pub use spec::{EnvSource, ExperimentSpec, Params, SpecError, Study};
pub use studies::{run_study, RecordSink, StudyError, StudyOutcome, TrialFailure};
pub use table::{emit_batch, result_path, Format, ResultRow, ResultTable, TableError};
