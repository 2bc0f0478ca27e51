//! Audit sampling: pull a deterministic uniform sample of trigger-bearing
//! sentences so a human can check what the filter left behind.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::conllu::{SentenceRecord, Upos};
use crate::corpus::filters::{
    is_binding_evidence, is_interrogative, is_qf_evidence, FilterConfig,
};
use crate::rng;

/// What counts as a trigger. The candidate predicates are the wide retrieval
/// nets used for manual audits; the evidence predicates are the exact filter
/// rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerPredicate {
    /// Question mark plus at least two auxiliaries.
    QuestionFormationCandidate,
    /// Contains a reflexive form.
    BindingCandidate,
    Interrogative,
    QuestionFormationEvidence,
    BindingEvidence,
}

impl TriggerPredicate {
    pub fn matches(self, rec: &SentenceRecord, cfg: &FilterConfig) -> bool {
        match self {
            TriggerPredicate::QuestionFormationCandidate => {
                rec.tokens.last().is_some_and(|t| t.form == "?")
                    && rec.tokens.iter().filter(|t| t.upos == Upos::AUX).count() >= 2
            }
            TriggerPredicate::BindingCandidate => rec.tokens.iter().any(|t| {
                let lower = t.form.to_lowercase();
                lower.ends_with("self") || lower.ends_with("selves")
            }),
            TriggerPredicate::Interrogative => is_interrogative(rec, cfg),
            TriggerPredicate::QuestionFormationEvidence => is_qf_evidence(rec, cfg),
            TriggerPredicate::BindingEvidence => is_binding_evidence(rec),
        }
    }
}

/// A drawn sample. `short` is set when fewer than `n` sentences matched, in
/// which case every match is returned.
#[derive(Debug, Clone)]
pub struct SanitySample {
    pub sentences: Vec<SentenceRecord>,
    pub matched: usize,
    pub short: bool,
}

/// Uniform sample without replacement of `n` matching sentences,
/// deterministic in `seed`. Sample order is corpus order.
pub fn sanity_sample(
    records: &[SentenceRecord],
    predicate: TriggerPredicate,
    n: usize,
    seed: u64,
    cfg: &FilterConfig,
) -> SanitySample {
    let matching: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| predicate.matches(r, cfg))
        .map(|(i, _)| i)
        .collect();
    let matched = matching.len();
    if matched <= n {
        return SanitySample {
            sentences: matching.iter().map(|&i| records[i].clone()).collect(),
            matched,
            short: matched < n,
        };
    }
    let mut rng = rng::stream(seed, "sanity-sample");
    let mut chosen: Vec<usize> = matching
        .choose_multiple(&mut rng, n)
        .copied()
        .collect();
    chosen.sort_unstable();
    SanitySample {
        sentences: chosen.into_iter().map(|i| records[i].clone()).collect(),
        matched,
        short: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::{DepRel, Token};

    fn reflexive_rec(i: usize) -> SentenceRecord {
        SentenceRecord {
            id: format!("r{i}"),
            text: "she saw herself".into(),
            source: "t".into(),
            tokens: vec![
                Token {
                    index: 1,
                    form: "she".into(),
                    upos: Upos::PRON,
                    head: 2,
                    deprel: DepRel::new("nsubj"),
                },
                Token {
                    index: 2,
                    form: "saw".into(),
                    upos: Upos::VERB,
                    head: 0,
                    deprel: DepRel::new("root"),
                },
                Token {
                    index: 3,
                    form: "herself".into(),
                    upos: Upos::PRON,
                    head: 2,
                    deprel: DepRel::new("obj"),
                },
            ],
        }
    }

    fn plain_rec(i: usize) -> SentenceRecord {
        SentenceRecord {
            id: format!("p{i}"),
            text: "it rains".into(),
            source: "t".into(),
            tokens: vec![
                Token {
                    index: 1,
                    form: "it".into(),
                    upos: Upos::PRON,
                    head: 2,
                    deprel: DepRel::new("nsubj"),
                },
                Token {
                    index: 2,
                    form: "rains".into(),
                    upos: Upos::VERB,
                    head: 0,
                    deprel: DepRel::new("root"),
                },
            ],
        }
    }

    #[test]
    fn sample_is_deterministic_and_matching_only() {
        let mut records = Vec::new();
        for i in 0..200 {
            records.push(reflexive_rec(i));
            records.push(plain_rec(i));
        }
        let cfg = FilterConfig::default();
        let a = sanity_sample(&records, TriggerPredicate::BindingCandidate, 10, 3, &cfg);
        let b = sanity_sample(&records, TriggerPredicate::BindingCandidate, 10, 3, &cfg);
        assert_eq!(a.sentences.len(), 10);
        assert!(!a.short);
        assert_eq!(a.matched, 200);
        assert!(a.sentences.iter().all(|r| r.id.starts_with('r')));
        let ids = |s: &SanitySample| s.sentences.iter().map(|r| r.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&a), ids(&b));
        let c = sanity_sample(&records, TriggerPredicate::BindingCandidate, 10, 4, &cfg);
        assert_ne!(ids(&a), ids(&c));
    }

    #[test]
    fn short_sample_is_flagged_and_complete() {
        let records = vec![reflexive_rec(0), plain_rec(0), reflexive_rec(1)];
        let cfg = FilterConfig::default();
        let s = sanity_sample(&records, TriggerPredicate::BindingCandidate, 10, 0, &cfg);
        assert!(s.short);
        assert_eq!(s.matched, 2);
        assert_eq!(s.sentences.len(), 2);
    }
}
