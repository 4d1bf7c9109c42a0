//! Configuration, batch commands and report documents.

pub mod commands;
pub mod config;
pub mod report;

pub use commands::{
    cmd_evaluate, cmd_grade, cmd_preprocess, cmd_train, render_report_file, worker_pool, write_synth_tree,
    FeatureExport, Grader, PreprocessOutcome, SynthTreeOptions, SynthTreeSummary, TrainOutcome,
};
pub use config::{FeatureBackend, PipelineConfig};
pub use report::{EvalReport, GradingReport, MetricsTable};
