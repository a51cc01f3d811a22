//! Benchmark evaluation, simulated tracking experiments and report files.

pub mod bench;
pub mod experiment;
pub mod report;

pub use bench::{by_session, evaluate_policy, mean_se, run_episode, run_metrics, slice_indices, AlgorithmRow, RunMetrics, SLICE_PSI};
pub use experiment::{simulated_experiment, ExperimentConfig, Pattern, SimExperimentResult};
pub use report::{emit_report, table_header, EvalReport};
