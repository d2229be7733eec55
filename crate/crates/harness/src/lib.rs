//! Config-driven experiment runner for tabular policy distillation.

pub mod aggregate;
pub mod config;
pub mod error;
pub mod prepare;
pub mod report;
pub mod run;
pub mod seeds;
pub mod sweep;
pub mod verify_report;

pub use aggregate::{aggregate, area_speedup, mean_sem, AggregateCurve, GroupKey, MeanSem, Metric};
pub use config::{ExperimentConfig, TeacherMethod, TeacherRecipe, ValueSource, WorldSource};
pub use error::HarnessError;
pub use prepare::{prepare, Prepared};
pub use report::{summarize, Summary};
pub use run::{read_csv, run_once, write_csv, RunRecord, CSV_COLUMNS};
pub use sweep::{run_sweep, write_outputs, RunFailure, SweepOutcome};
pub use verify_report::{verify_report, VerifyOptions, VerifyReport};
