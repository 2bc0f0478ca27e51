//! Direct-positive-evidence predicates and the corpus filter built on them.
//!
//! The predicates deliberately over-match: the point of the ablation is that
//! *no* direct evidence survives, so anything that even looks like evidence
//! is removed. False positives cost a little data; false negatives void the
//! experiment.

use serde::{Deserialize, Serialize};

use crate::conllu::{SentenceRecord, Upos};

/// Phenomena the filter knows how to ablate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phenomenon {
    QuestionFormation,
    Binding,
}

/// Wh-words that mark a sentence as interrogative when they open it.
pub const DEFAULT_WH_WORDS: [&str; 9] = [
    "who", "what", "when", "where", "why", "how", "which", "whose", "whom",
];

/// Knobs for the evidence predicates. The wh-word list is configurable
/// because it is a heuristic, not a fact about the grammar.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterConfig {
    pub wh_words: Vec<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            wh_words: DEFAULT_WH_WORDS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// A sentence counts as a question if it ends in `?`, opens with a wh-word,
/// or has an auxiliary in its first two tokens.
pub fn is_interrogative(record: &SentenceRecord, cfg: &FilterConfig) -> bool {
    if record
        .tokens
        .last()
        .is_some_and(|t| t.form == "?")
    {
        return true;
    }
    record.tokens.iter().take(2).any(|t| {
        t.upos == Upos::AUX || cfg.wh_words.iter().any(|w| t.form.eq_ignore_ascii_case(w))
    })
}

/// Some `nsubj` token precedes some `acl:relcl` token. Positional, not
/// structural: cheap, and it over-matches in the safe direction.
pub fn has_subject_relative(record: &SentenceRecord) -> bool {
    let first_nsubj = record
        .tokens
        .iter()
        .filter(|t| t.deprel.is_nsubj())
        .map(|t| t.index)
        .min();
    let last_relcl = record
        .tokens
        .iter()
        .filter(|t| t.deprel.is_relative_clause())
        .map(|t| t.index)
        .max();
    matches!((first_nsubj, last_relcl), (Some(s), Some(r)) if s < r)
}

/// Direct evidence for auxiliary fronting across a subject relative clause:
/// an interrogative sentence containing a subject relative.
pub fn is_qf_evidence(record: &SentenceRecord, cfg: &FilterConfig) -> bool {
    is_interrogative(record, cfg) && has_subject_relative(record)
}

/// Direct evidence for reflexive binding: a reflexive form preceded by at
/// least two nominals, i.e. a context where the antecedent choice is
/// structurally informative.
pub fn is_binding_evidence(record: &SentenceRecord) -> bool {
    let mut nominals = 0usize;
    for tok in &record.tokens {
        let lower = tok.form.to_lowercase();
        if (lower.ends_with("self") || lower.ends_with("selves")) && nominals >= 2 {
            return true;
        }
        if matches!(tok.upos, Upos::NOUN | Upos::PROPN | Upos::PRON) {
            nominals += 1;
        }
    }
    false
}

fn matches_phenomenon(record: &SentenceRecord, ph: Phenomenon, cfg: &FilterConfig) -> bool {
    match ph {
        Phenomenon::QuestionFormation => is_qf_evidence(record, cfg),
        Phenomenon::Binding => is_binding_evidence(record),
    }
}

/// Per-rule match counts. A removed sentence can match several rules; the
/// counts are independent, so they can exceed `removed`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub input: usize,
    pub kept: usize,
    pub removed: usize,
    pub question_formation_matches: usize,
    pub binding_matches: usize,
}

/// Result of one filtering pass.
#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub kept: Vec<SentenceRecord>,
    pub removed: Vec<SentenceRecord>,
    pub stats: FilterStats,
}

/// Partition `records` into kept / removed under the selected phenomena.
/// Order is preserved on both sides; every input lands on exactly one side.
pub fn filter_corpus(
    records: Vec<SentenceRecord>,
    phenomena: &[Phenomenon],
    cfg: &FilterConfig,
) -> FilterOutcome {
    let mut stats = FilterStats {
        input: records.len(),
        ..FilterStats::default()
    };
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for rec in records {
        let qf = phenomena.contains(&Phenomenon::QuestionFormation)
            && matches_phenomenon(&rec, Phenomenon::QuestionFormation, cfg);
        let bind = phenomena.contains(&Phenomenon::Binding)
            && matches_phenomenon(&rec, Phenomenon::Binding, cfg);
        if qf {
            stats.question_formation_matches += 1;
        }
        if bind {
            stats.binding_matches += 1;
        }
        if qf || bind {
            removed.push(rec);
        } else {
            kept.push(rec);
        }
    }
    stats.kept = kept.len();
    stats.removed = removed.len();
    FilterOutcome { kept, removed, stats }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::{DepRel, Token};

    fn rec(forms: &[(&str, Upos, usize, &str)]) -> SentenceRecord {
        let tokens: Vec<Token> = forms
            .iter()
            .enumerate()
            .map(|(i, (form, upos, head, deprel))| Token {
                index: i + 1,
                form: form.to_string(),
                upos: *upos,
                head: *head,
                deprel: DepRel::new(*deprel),
            })
            .collect();
        let text = forms.iter().map(|f| f.0).collect::<Vec<_>>().join(" ");
        SentenceRecord {
            id: "t".into(),
            text,
            source: "test".into(),
            tokens,
        }
    }

    #[test]
    fn final_question_mark_is_interrogative() {
        let r = rec(&[
            ("he", Upos::PRON, 2, "nsubj"),
            ("left", Upos::VERB, 0, "root"),
            ("?", Upos::PUNCT, 2, "punct"),
        ]);
        assert!(is_interrogative(&r, &FilterConfig::default()));
    }

    #[test]
    fn declarative_mid_sentence_question_mark_is_not() {
        // "?" not sentence-final, no aux/wh-word up front.
        let r = rec(&[
            ("he", Upos::PRON, 3, "nsubj"),
            ("?", Upos::PUNCT, 3, "punct"),
            ("left", Upos::VERB, 0, "root"),
            (".", Upos::PUNCT, 3, "punct"),
        ]);
        assert!(!is_interrogative(&r, &FilterConfig::default()));
    }

    #[test]
    fn wh_word_in_first_two_tokens_is_interrogative() {
        let r = rec(&[
            ("so", Upos::ADV, 3, "advmod"),
            ("What", Upos::PRON, 3, "obj"),
            ("happened", Upos::VERB, 0, "root"),
        ]);
        assert!(is_interrogative(&r, &FilterConfig::default()));
        // Same wh-word at position 3 no longer counts.
        let r = rec(&[
            ("and", Upos::CCONJ, 4, "cc"),
            ("so", Upos::ADV, 4, "advmod"),
            ("what", Upos::PRON, 4, "obj"),
            ("happened", Upos::VERB, 0, "root"),
        ]);
        assert!(!is_interrogative(&r, &FilterConfig::default()));
    }

    #[test]
    fn leading_aux_is_interrogative() {
        let r = rec(&[
            ("Is", Upos::AUX, 3, "cop"),
            ("he", Upos::PRON, 3, "nsubj"),
            ("tall", Upos::ADJ, 0, "root"),
        ]);
        assert!(is_interrogative(&r, &FilterConfig::default()));
    }

    #[test]
    fn subject_relative_needs_nsubj_before_relcl() {
        // nsubj at 2, acl:relcl at 5.
        let r = rec(&[
            ("the", Upos::DET, 2, "det"),
            ("dog", Upos::NOUN, 6, "nsubj"),
            ("that", Upos::PRON, 5, "nsubj"),
            ("was", Upos::AUX, 5, "cop"),
            ("loud", Upos::ADJ, 2, "acl:relcl"),
            ("barked", Upos::VERB, 0, "root"),
        ]);
        assert!(has_subject_relative(&r));
        // relcl before every nsubj does not count.
        let r = rec(&[
            ("seen", Upos::VERB, 2, "acl:relcl"),
            ("dogs", Upos::NOUN, 3, "obj"),
            ("bark", Upos::VERB, 0, "root"),
            ("they", Upos::PRON, 5, "nsubj"),
            ("say", Upos::VERB, 3, "parataxis"),
        ]);
        assert!(!has_subject_relative(&r));
    }

    #[test]
    fn binding_needs_two_prior_nominals() {
        // "People like her don't often get themselves murdered": reflexive
        // with two nominals before it.
        let r = rec(&[
            ("People", Upos::NOUN, 7, "nsubj"),
            ("like", Upos::ADP, 3, "case"),
            ("her", Upos::PRON, 1, "nmod"),
            ("do", Upos::AUX, 7, "aux"),
            ("n't", Upos::PART, 7, "advmod"),
            ("often", Upos::ADV, 7, "advmod"),
            ("get", Upos::VERB, 0, "root"),
            ("themselves", Upos::PRON, 9, "obj"),
            ("murdered", Upos::VERB, 7, "xcomp"),
        ]);
        assert!(is_binding_evidence(&r));
        // One nominal is not enough.
        let r = rec(&[
            ("He", Upos::PRON, 2, "nsubj"),
            ("saw", Upos::VERB, 0, "root"),
            ("himself", Upos::PRON, 2, "obj"),
        ]);
        assert!(!is_binding_evidence(&r));
        // Reflexive itself counts as a nominal only for later reflexives.
        let r = rec(&[
            ("Myself", Upos::PRON, 3, "obj"),
            ("I", Upos::PRON, 3, "nsubj"),
            ("know", Upos::VERB, 0, "root"),
        ]);
        assert!(!is_binding_evidence(&r));
    }

    #[test]
    fn case_insensitive_reflexive_match() {
        let r = rec(&[
            ("John", Upos::PROPN, 3, "nsubj"),
            ("Mary", Upos::PROPN, 3, "obj"),
            ("HIMSELF", Upos::PRON, 3, "obj"),
        ]);
        assert!(is_binding_evidence(&r));
    }

    #[test]
    fn filter_partitions_and_counts() {
        let qf = rec(&[
            ("Is", Upos::AUX, 4, "cop"),
            ("he", Upos::PRON, 4, "nsubj"),
            ("seen", Upos::VERB, 2, "acl:relcl"),
            ("tall", Upos::ADJ, 0, "root"),
            ("?", Upos::PUNCT, 4, "punct"),
        ]);
        let plain = rec(&[
            ("dogs", Upos::NOUN, 2, "nsubj"),
            ("bark", Upos::VERB, 0, "root"),
        ]);
        let out = filter_corpus(
            vec![qf.clone(), plain.clone()],
            &[Phenomenon::QuestionFormation, Phenomenon::Binding],
            &FilterConfig::default(),
        );
        assert_eq!(out.kept.len(), 1);
        assert_eq!(out.removed.len(), 1);
        assert_eq!(out.stats.input, 2);
        assert_eq!(out.stats.question_formation_matches, 1);
        assert_eq!(out.stats.binding_matches, 0);
        assert_eq!(out.removed[0].tokens[0].form, "Is");
        // Filtering only for binding keeps the question.
        let out = filter_corpus(vec![qf, plain], &[Phenomenon::Binding], &FilterConfig::default());
        assert_eq!(out.kept.len(), 2);
    }
}
