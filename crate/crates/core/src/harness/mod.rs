//! Training loop, evaluation protocol, metrics, run outputs and sweeps.

mod metrics;
mod outputs;
mod run_config;
mod sweep;
mod train;

pub use metrics::{
    final_performance, select_best_variant, single_factor_analysis, worst_case_return, Cell, Factor,
    FactorMarginal, SeedCurve, VariantResultMatrix,
};
pub use outputs::{
    read_curve, read_tasks, CurvePoint, DiagnosticRow, RunWriter, CONFIG_FILE, CURVE_FILE, DIAGNOSTICS_FILE,
    TASKS_FILE,
};
pub use run_config::{key_values, RunConfig};
pub use sweep::{load_runs, report, result_matrix, run_all, thread_cap, Grid, ReportMetric, RunSummary};
pub use train::{evaluate, evaluate_tasks, in_final_window, train, train_agent, updates_owed, TrainingRunRecord};
