//! Synthetic parsed corpora.
//!
//! The ablation pipeline needs corpora where ground truth is known exactly:
//! this module emits sentences with hand-built gold parses in a handful of
//! fixed frames, so tests can count evidence sentences instead of trusting a
//! parser. Frames vary only in lexical choices; head indices never move.
//!
//! `babble_text` is different: untagged word soup with a Zipf-ish unigram
//! distribution, for exercising the tokenizer on megabyte-scale input.

use rand::Rng;

use crate::conllu::{DepRel, SentenceRecord, Token, Upos};
use crate::rng::{stream, stream_indexed};

const NOUNS: &[&str] = &[
    "boy", "girl", "dog", "cat", "farmer", "teacher", "bird", "horse", "doctor", "child",
];
const ADJS: &[&str] = &[
    "tall", "happy", "tired", "old", "young", "quiet", "loud", "small", "brave", "calm",
];
const TRANS_VERBS: &[&str] = &["saw", "chased", "liked", "followed", "helped", "watched"];
const REFLEXIVES: &[&str] = &["himself", "herself", "themselves"];

/// Sentence frames the generator knows how to parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// Interrogative containing a subject relative clause.
    QfEvidence,
    /// Reflexive with two candidate antecedents before it.
    BindingEvidence,
    /// Interrogative, no relative clause.
    InterrogativeOnly,
    /// Declarative with a subject relative clause.
    RelativeOnly,
    /// Reflexive with only one nominal before it.
    ReflexiveNearMiss,
    /// Plain transitive declarative.
    Declarative,
}

fn tok(index: usize, form: &str, upos: Upos, head: usize, deprel: &str) -> Token {
    Token {
        index,
        form: form.to_string(),
        upos,
        head,
        deprel: DepRel::new(deprel),
    }
}

fn record(id: &str, tokens: Vec<Token>) -> SentenceRecord {
    let text = tokens
        .iter()
        .map(|t| t.form.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    SentenceRecord {
        id: id.to_string(),
        text,
        source: "synth".to_string(),
        tokens,
    }
}

fn pick<'a>(rng: &mut impl Rng, bank: &[&'a str]) -> &'a str {
    bank[rng.gen_range(0..bank.len())]
}

/// Two distinct draws from one bank.
fn pick2<'a>(rng: &mut impl Rng, bank: &[&'a str]) -> (&'a str, &'a str) {
    let a = rng.gen_range(0..bank.len());
    let b = (a + 1 + rng.gen_range(0..bank.len() - 1)) % bank.len();
    (bank[a], bank[b])
}

/// One sentence of the given frame with a gold parse.
pub fn synth_sentence(kind: SynthKind, rng: &mut impl Rng, id: &str) -> SentenceRecord {
    let tokens = match kind {
        SynthKind::QfEvidence => {
            // is the N who is A1 A2 ?
            let n = pick(rng, NOUNS);
            let (a1, a2) = pick2(rng, ADJS);
            vec![
                tok(1, "is", Upos::AUX, 7, "cop"),
                tok(2, "the", Upos::DET, 3, "det"),
                tok(3, n, Upos::NOUN, 7, "nsubj"),
                tok(4, "who", Upos::PRON, 6, "nsubj"),
                tok(5, "is", Upos::AUX, 6, "cop"),
                tok(6, a1, Upos::ADJ, 3, "acl:relcl"),
                tok(7, a2, Upos::ADJ, 0, "root"),
                tok(8, "?", Upos::PUNCT, 7, "punct"),
            ]
        }
        SynthKind::BindingEvidence => {
            // the N1 said the N2 hurt R .
            let (n1, n2) = pick2(rng, NOUNS);
            let r = pick(rng, REFLEXIVES);
            vec![
                tok(1, "the", Upos::DET, 2, "det"),
                tok(2, n1, Upos::NOUN, 3, "nsubj"),
                tok(3, "said", Upos::VERB, 0, "root"),
                tok(4, "the", Upos::DET, 5, "det"),
                tok(5, n2, Upos::NOUN, 6, "nsubj"),
                tok(6, "hurt", Upos::VERB, 3, "ccomp"),
                tok(7, r, Upos::PRON, 6, "obj"),
                tok(8, ".", Upos::PUNCT, 3, "punct"),
            ]
        }
        SynthKind::InterrogativeOnly => {
            // is the N A ?
            let n = pick(rng, NOUNS);
            let a = pick(rng, ADJS);
            vec![
                tok(1, "is", Upos::AUX, 4, "cop"),
                tok(2, "the", Upos::DET, 3, "det"),
                tok(3, n, Upos::NOUN, 4, "nsubj"),
                tok(4, a, Upos::ADJ, 0, "root"),
                tok(5, "?", Upos::PUNCT, 4, "punct"),
            ]
        }
        SynthKind::RelativeOnly => {
            // the N who is A slept .
            let n = pick(rng, NOUNS);
            let a = pick(rng, ADJS);
            vec![
                tok(1, "the", Upos::DET, 2, "det"),
                tok(2, n, Upos::NOUN, 6, "nsubj"),
                tok(3, "who", Upos::PRON, 5, "nsubj"),
                tok(4, "is", Upos::AUX, 5, "cop"),
                tok(5, a, Upos::ADJ, 2, "acl:relcl"),
                tok(6, "slept", Upos::VERB, 0, "root"),
                tok(7, ".", Upos::PUNCT, 6, "punct"),
            ]
        }
        SynthKind::ReflexiveNearMiss => {
            // the N hurt R .
            let n = pick(rng, NOUNS);
            let r = pick(rng, REFLEXIVES);
            vec![
                tok(1, "the", Upos::DET, 2, "det"),
                tok(2, n, Upos::NOUN, 3, "nsubj"),
                tok(3, "hurt", Upos::VERB, 0, "root"),
                tok(4, r, Upos::PRON, 3, "obj"),
                tok(5, ".", Upos::PUNCT, 3, "punct"),
            ]
        }
        SynthKind::Declarative => {
            // the N1 V the N2 .
            let (n1, n2) = pick2(rng, NOUNS);
            let v = pick(rng, TRANS_VERBS);
            vec![
                tok(1, "the", Upos::DET, 2, "det"),
                tok(2, n1, Upos::NOUN, 3, "nsubj"),
                tok(3, v, Upos::VERB, 0, "root"),
                tok(4, "the", Upos::DET, 5, "det"),
                tok(5, n2, Upos::NOUN, 3, "obj"),
                tok(6, ".", Upos::PUNCT, 3, "punct"),
            ]
        }
    };
    record(id, tokens)
}

/// A corpus with exactly `round(qf_rate*n)` question-formation evidence
/// sentences and `round(binding_rate*n)` binding evidence sentences, the
/// rest a fixed mix of distractors. Positions are shuffled.
pub fn babble_corpus(
    n: usize,
    seed: u64,
    qf_rate: f64,
    binding_rate: f64,
) -> Vec<SentenceRecord> {
    let n_qf = (qf_rate * n as f64).round() as usize;
    let n_bind = (binding_rate * n as f64).round() as usize;
    assert!(n_qf + n_bind <= n, "evidence rates exceed corpus size");
    let mut kinds = Vec::with_capacity(n);
    kinds.resize(n_qf, SynthKind::QfEvidence);
    kinds.resize(n_qf + n_bind, SynthKind::BindingEvidence);
    for i in kinds.len()..n {
        // Mostly declaratives, salted with near-miss distractors.
        kinds.push(match i % 10 {
            7 => SynthKind::InterrogativeOnly,
            8 => SynthKind::RelativeOnly,
            9 => SynthKind::ReflexiveNearMiss,
            _ => SynthKind::Declarative,
        });
    }
    use rand::seq::SliceRandom;
    kinds.shuffle(&mut stream(seed, "synth-kinds"));
    kinds
        .into_iter()
        .enumerate()
        .map(|(i, kind)| {
            let mut rng = stream_indexed(seed, "synth-sent", i as u64);
            synth_sentence(kind, &mut rng, &format!("synth-{i:06}"))
        })
        .collect()
}

/// Word types for `babble_text`, fixed independent of the caller's seed so
/// corpora drawn with different seeds share a vocabulary.
fn babble_vocab() -> Vec<String> {
    const ONSETS: &[&str] = &[
        "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z", "ch", "sh",
        "th", "br", "st",
    ];
    const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ee", "oo"];
    const CODAS: &[&str] = &["", "n", "t", "s", "r", "l", "m", "k"];
    let mut rng = stream(0, "babble-vocab");
    let mut seen = std::collections::BTreeSet::new();
    while seen.len() < 2000 {
        let syllables = rng.gen_range(1..=3);
        let mut word = String::new();
        for _ in 0..syllables {
            word.push_str(pick(&mut rng, ONSETS));
            word.push_str(pick(&mut rng, VOWELS));
            word.push_str(pick(&mut rng, CODAS));
        }
        seen.insert(word);
    }
    seen.into_iter().collect()
}

/// At least `target_chars` of newline-separated sentences over the fixed
/// babble vocabulary, unigram frequencies falling off as 1/rank.
pub fn babble_text(target_chars: usize, seed: u64) -> String {
    let vocab = babble_vocab();
    let mut cumulative = Vec::with_capacity(vocab.len());
    let mut total = 0.0f64;
    for rank in 0..vocab.len() {
        total += 1.0 / (rank + 1) as f64;
        cumulative.push(total);
    }
    let mut rng = stream(seed, "babble-text");
    let mut out = String::new();
    while out.len() < target_chars {
        let words = rng.gen_range(8..=16);
        for i in 0..words {
            if i > 0 {
                out.push(' ');
            }
            let u: f64 = rng.gen::<f64>() * total;
            let idx = cumulative.partition_point(|&c| c <= u);
            out.push_str(&vocab[idx.min(vocab.len() - 1)]);
        }
        out.push_str(if rng.gen::<f64>() < 0.1 { " ?" } else { " ." });
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::validate;
    use crate::corpus::{
        filter_corpus, is_binding_evidence, is_qf_evidence, FilterConfig, Phenomenon,
    };

    #[test]
    fn frames_carry_valid_parses() {
        let cfg = FilterConfig::default();
        let kinds = [
            SynthKind::QfEvidence,
            SynthKind::BindingEvidence,
            SynthKind::InterrogativeOnly,
            SynthKind::RelativeOnly,
            SynthKind::ReflexiveNearMiss,
            SynthKind::Declarative,
        ];
        let mut rng = stream(1, "t");
        for kind in kinds {
            for i in 0..20 {
                let s = synth_sentence(kind, &mut rng, &format!("t-{i}"));
                assert!(validate(&s).is_ok(), "{kind:?}: {:?}", validate(&s));
                let qf = is_qf_evidence(&s, &cfg);
                let bind = is_binding_evidence(&s);
                match kind {
                    SynthKind::QfEvidence => assert!(qf && !bind, "{}", s.text),
                    SynthKind::BindingEvidence => assert!(bind && !qf, "{}", s.text),
                    _ => assert!(!qf && !bind, "{}", s.text),
                }
            }
        }
    }

    #[test]
    fn babble_corpus_hits_exact_evidence_counts() {
        let corpus = babble_corpus(1000, 42, 0.01, 0.005);
        let cfg = FilterConfig::default();
        let qf = corpus.iter().filter(|s| is_qf_evidence(s, &cfg)).count();
        let bind = corpus.iter().filter(|s| is_binding_evidence(s)).count();
        assert_eq!(qf, 10);
        assert_eq!(bind, 5);
        let outcome = filter_corpus(
            corpus.clone(),
            &[Phenomenon::QuestionFormation, Phenomenon::Binding],
            &cfg,
        );
        assert_eq!(outcome.removed.len(), 15);
        assert_eq!(outcome.kept.len(), 985);
        // Shuffling must not lose anyone.
        assert_eq!(corpus.len(), 1000);
        assert!(corpus.iter().all(|s| s.source == "synth"));
    }

    #[test]
    fn babble_corpus_is_deterministic() {
        let a = babble_corpus(50, 7, 0.1, 0.1);
        let b = babble_corpus(50, 7, 0.1, 0.1);
        assert_eq!(a, b);
        let c = babble_corpus(50, 8, 0.1, 0.1);
        assert_ne!(a, c);
    }

    #[test]
    fn babble_text_meets_target_and_replays() {
        let text = babble_text(10_000, 3);
        assert!(text.len() >= 10_000);
        assert_eq!(text, babble_text(10_000, 3));
        assert_ne!(text, babble_text(10_000, 4));
        for line in text.lines() {
            assert!(line.ends_with(" .") || line.ends_with(" ?"));
            let words = line.split_whitespace().count();
            assert!((9..=17).contains(&words));
        }
    }

    #[test]
    fn babble_vocab_is_fixed() {
        let v = babble_vocab();
        assert_eq!(v.len(), 2000);
        assert_eq!(v, babble_vocab());
    }
}
