//! Configuration, evaluation, reporting and the staged training pipeline.

mod config;
mod evaluate;
mod pipeline;
mod report;

pub use config::{ActionsConfig, AgentsConfig, BudgetConfig, CodecConfig, EvalConfig, RunConfig};
pub use evaluate::{
    evaluate, run_episode, scores_from_csv, scores_to_csv, seeds, Constant, Controller,
    EpisodeResult, Flat,
};
pub use pipeline::{
    baseline_stage, evaluate_stage, fit_actions, gen_demos, load_budget, load_choptree_table,
    load_demos, load_policy, load_scheduler, load_table, report_stage, run_pipeline, train_agent,
    train_scheduler_stage, BudgetState, PipelineSummary, ReportFormat, TrainSummary, Workspace,
    ARTIFACT_VERSION,
};
pub use report::{
    bucket_counts, bucket_of, compute_rates, report_from_scores, MilestoneReport, LADDER_AGENTS,
    LADDER_ITEMS, PHASE_COMPLETION, SCORE_LADDER,
};
