//! Corpus ablation: evidence predicates, filtering, re-injection at
//! controlled rates, and audit sampling.

mod filters;
mod inject;
mod io;
mod sample;

pub use filters::{
    filter_corpus, has_subject_relative, is_binding_evidence, is_interrogative, is_qf_evidence,
    FilterConfig, FilterOutcome, FilterStats, Phenomenon,
};
pub use inject::{inject_evidence, InjectError, InjectOutcome};
pub use io::{read_corpus_jsonl, write_corpus_jsonl, CorpusLine, RejectLine};
pub use sample::{sanity_sample, SanitySample, TriggerPredicate};
