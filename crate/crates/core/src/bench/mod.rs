//! Evaluation harness: task suites, the planners under comparison, and
//! aggregated reports.

pub mod metrics;
pub mod report;
pub mod run;
pub mod task;

pub use metrics::{goal_leaf_visibility, joint_distances, mje, JointSubset, MjeReport};
pub use report::{format_summary, quantile_buckets, summarize, write_report, BucketRow, SummaryRow};
pub use run::{
    read_csv, write_csv, write_jsonl, Bench, BenchConfig, BenchOutput, Method, PlanRecord, ResultRow, TaskFailure, CSV_COLUMNS,
};
pub use task::{generate_tasks, holdout_scenes, read_tasks, training_scenes, write_tasks, Task, TaskConfig};
