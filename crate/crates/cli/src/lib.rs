//! Experiment driver for the AAP solver: single runs, plan-driven sweeps,
//! masked-kernel timings and offline verification of recorded traces.

pub mod experiment;
pub mod kernels;
pub mod plan;
pub mod run;
pub mod table;
pub mod trace;
pub mod verify;

pub use experiment::run_experiment;
pub use kernels::{bench_masked_kernels, BenchRecord, KernelBenchOptions, KernelOp, ThresholdSummary};
pub use plan::{parse_plan, ExperimentPlan, PlanError};
pub use run::{RunOutcome, RunSpec};
pub use table::{read_table, write_table, ResultRow, TableMeta};
pub use trace::{read_trace, write_trace, TraceLine};
pub use verify::{verify_theorem_trace, VerificationReport, VerifyError};
