//! Minimal-pair benchmark generation from declarative templates plus a
//! feature-bundled lexicon.

mod expand;
mod lexicon;
mod pattern;
mod verify;
mod vocab;

pub use expand::{
    expand_template, generate_benchmark, template_capacity, BenchmarkManifest,
    SubcategorySummary, TemplateCount,
};
pub use lexicon::{LexEntry, Lexicon, LexiconError};
pub use pattern::{Pattern, PatternWord, Piece, TemplateError, TemplateSet, TemplateSpec};
pub use verify::{check_lexical_closure, verify_pair, ClosureGap, PairViolation};
pub use vocab::{
    build_shared_vocab, count_token_frequencies, read_vocab, top_k_tokens, write_vocab,
    VocabError,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Phenomenon of a minimal pair. `Other` only ever comes from external
/// benchmark adapters; the shipped templates use the first four.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairPhenomenon {
    QuestionFormation,
    Island,
    Binding,
    Wanna,
    Other,
}

impl std::fmt::Display for PairPhenomenon {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PairPhenomenon::QuestionFormation => "question_formation",
            PairPhenomenon::Island => "island",
            PairPhenomenon::Binding => "binding",
            PairPhenomenon::Wanna => "wanna",
            PairPhenomenon::Other => "other",
        };
        f.write_str(s)
    }
}

/// One benchmark item: a grammatical sentence and its minimally different
/// ungrammatical twin, with full provenance of how it was built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimalPair {
    pub sentence_good: String,
    pub sentence_bad: String,
    pub phenomenon: PairPhenomenon,
    pub subcategory: String,
    pub template_id: String,
    /// Slot name to chosen surface form. Inline choices appear under
    /// `alt@<pos>`, or `alt@<pos>:b` / `alt@<pos>:g` where the sides
    /// draw independently.
    pub slot_fill: BTreeMap<String, String>,
}
