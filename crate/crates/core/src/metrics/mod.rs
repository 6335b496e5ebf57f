//! Relevance, P@k, AP, the exact signed-rank test and experiment evaluation.

mod evaluate;
mod precision;
mod relevance;
mod report;
mod wilcoxon;

pub use evaluate::{
    evaluate_experiment, evaluate_runs, run_plan, run_sweep, EvaluationConfig, EvaluationTables, ExperimentReport,
    MetricRow, PlanRun, SweepSpec, WilcoxonRow, ALL_GROUP,
};
pub use precision::{average_precision, precision_at_k, relevance_vector, MetricReport, AP_DEPTH};
pub use relevance::{is_relevant, judge, RelevanceJudgment, RelevanceTask};
pub use report::{format_summary_table, write_metrics_csv, write_wilcoxon_csv};
pub use wilcoxon::{wilcoxon_signed_rank_two_sided, WilcoxonResult, MAX_EXACT_PAIRS};
