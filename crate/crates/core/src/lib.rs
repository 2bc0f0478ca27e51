//! Data machinery for the posh workbench: CoNLL-U corpora and ablation
//! filters, templated minimal-pair benchmarks, shuffled bracket languages,
//! byte-pair encoding, and the small statistics kit used by evaluation.

pub mod bpe;
pub mod conllu;
pub mod corpus;
pub mod dyck;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod templates;

pub use conllu::{read_conllu, validate, DepRel, SentenceRecord, Token, Upos};
pub use corpus::{
    filter_corpus, inject_evidence, sanity_sample, FilterConfig, FilterOutcome, FilterStats,
    Phenomenon, TriggerPredicate,
};
pub use templates::{
    expand_template, generate_benchmark, Lexicon, MinimalPair, PairPhenomenon, TemplateSet,
};
