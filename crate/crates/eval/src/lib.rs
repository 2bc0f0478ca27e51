//! Minimal-pair scoring against a trained model, external benchmark
//! adapters, and significance-tested report emission.

pub mod adapters;
pub mod report;
pub mod score;

pub use adapters::{
    read_blimp_jsonl, read_pairs_jsonl, read_scamp_jsonl, read_zorro_txt, write_pairs_jsonl,
    AdapterError,
};
pub use report::{
    aggregate_seeds, build_report, emit_report, export_items_csv, AggregateCategory,
    CategoryResult, EvalReport, ReportError,
};
pub use score::{
    score_pairs, sentence_perplexity, Norm, PairProblem, PairScore, ScoreConfig, ScoreError,
    ScoreOutcome,
};
