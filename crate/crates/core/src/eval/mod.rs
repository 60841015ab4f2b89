//! Metrics, the placement executor and batch evaluation.

mod executor;
mod metrics;
mod suite;

pub use executor::{execute_placement, ExecutorModel, Placement, DEFAULT_EXEC_SIGMA};
pub use metrics::{coarse_accuracy, instruction_accuracy, IA_TOLERANCE};
pub use suite::{
    run_suite, write_run, BackendSpec, CategoryStats, EvalError, SuiteConfig, SuiteReport, SuiteRun,
    TrialRecord,
};
