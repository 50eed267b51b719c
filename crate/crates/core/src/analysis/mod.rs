//! Token-entropy study and evaluation: histograms, token-class statistics,
//! ranked token tables, heatmaps, pass@k and the `ρ` ablation grid.

mod ablation;
mod entropy;
mod eval;

pub use ablation::{ablation_csv, ablation_grid, AblationRow, AblationSetup, ABLATION_HEADER, TABLE_RHOS};
pub use entropy::{
    default_edges, entropy_histogram, entropy_report, heat_color, heatmap_csv, heatmap_export, heatmap_svg,
    token_class_stats, top_tokens_by_entropy, union_mean, ClassStats, EntropyReport, EntropyStudyConfig,
    EntropySummary, HeatRecord, TokenClass, TokenClassMap, TokenEntropy, TopTokens,
};
pub use eval::{eval_suite, pass_at_k, EvalConfig, EvalError, EvalReport, TaskEval};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("domain error: {0}")]
pub struct DomainError(pub String);
