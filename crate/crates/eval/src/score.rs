//! Perplexity scoring of minimal pairs.
//!
//! Evaluation always runs at f64; f32 checkpoints are widened first. The
//! math is position-local and causal, so scores do not depend on batch
//! shape or pair order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use posh_core::bpe::{BpeModel, BOS_ID, UNK_ID};
use posh_core::templates::MinimalPair;
use posh_model::config::AttentionBiasMode;
use posh_model::transformer::{Batch, Model, ModelError, IGNORE};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("sentence is empty after tokenization")]
    EmptySentence,
    #[error("sentence has characters outside the tokenizer alphabet")]
    UnknownChars,
    #[error("sentence needs {got} positions, model context is {context}")]
    TooLong { got: usize, context: usize },
}

/// How per-sentence log-probabilities turn into the compared quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    /// exp(mean negative log-prob): geometric-mean perplexity per token.
    #[default]
    PerToken,
    /// Total negative log-probability in nats.
    TotalNll,
}

#[derive(Debug, Clone, Copy)]
pub struct ScoreConfig {
    pub mode: AttentionBiasMode,
    pub epoch: u32,
    pub norm: Norm,
    pub batch_size: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            mode: AttentionBiasMode::None,
            epoch: 0,
            norm: Norm::PerToken,
            batch_size: 64,
        }
    }
}

/// Relative tie tolerance on the compared quantity.
pub const TIE_REL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub index: usize,
    /// Total log-probability in nats, BOS-conditioned.
    pub logprob_good: f64,
    pub logprob_bad: f64,
    pub tokens_good: usize,
    pub tokens_bad: usize,
    /// The compared quantity under the configured normalization.
    pub ppl_good: f64,
    pub ppl_bad: f64,
    pub correct: bool,
    pub tie: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairProblem {
    pub index: usize,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ScoreOutcome {
    pub scores: Vec<PairScore>,
    /// Pairs excluded from scoring, with why.
    pub problems: Vec<PairProblem>,
}

/// Tokenizes for scoring: non-empty and fully in-alphabet.
pub fn encode_checked(tok: &BpeModel, sentence: &str) -> Result<Vec<u32>, ScoreError> {
    let ids = tok.encode(sentence);
    if ids.is_empty() {
        return Err(ScoreError::EmptySentence);
    }
    if ids.contains(&UNK_ID) {
        return Err(ScoreError::UnknownChars);
    }
    Ok(ids)
}

/// Total log-probability (nats) of `ids` given a BOS prefix, and the token
/// count N (excluding BOS).
pub fn score_ids(
    model: &Model<f64>,
    ids: &[u32],
    mode: AttentionBiasMode,
    epoch: u32,
) -> Result<(f64, usize), ScoreError> {
    if ids.is_empty() {
        return Err(ScoreError::EmptySentence);
    }
    if ids.len() > model.cfg.context_len {
        return Err(ScoreError::TooLong {
            got: ids.len(),
            context: model.cfg.context_len,
        });
    }
    let t = ids.len();
    let mut inputs = Vec::with_capacity(t);
    inputs.push(BOS_ID);
    inputs.extend_from_slice(&ids[..t - 1]);
    let batch = Batch {
        b: 1,
        t,
        inputs,
        targets: ids.to_vec(),
        trees: None,
    };
    let lps = model.target_logprobs(&batch, mode, epoch)?;
    Ok((lps.iter().sum(), t))
}

/// Sentence perplexity: exp of the mean negative log-probability over the
/// sentence's N tokens, the first conditioned on BOS.
pub fn sentence_perplexity(
    model: &Model<f64>,
    tok: &BpeModel,
    sentence: &str,
    mode: AttentionBiasMode,
    epoch: u32,
) -> Result<f64, ScoreError> {
    let ids = encode_checked(tok, sentence)?;
    let (lp, n) = score_ids(model, &ids, mode, epoch)?;
    Ok((-lp / n as f64).exp())
}

fn compared(norm: Norm, total_lp: f64, n: usize) -> f64 {
    match norm {
        Norm::PerToken => (-total_lp / n as f64).exp(),
        Norm::TotalNll => -total_lp,
    }
}

/// True when the two compared values are equal within `TIE_REL` relative.
pub fn is_tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_REL * a.abs().max(b.abs())
}

/// Scores every pair; tokenization failures become problems, not scores.
/// Sentences are batched `batch_size` at a time, padded on the right; the
/// causal mask makes padding invisible to real positions.
pub fn score_pairs(
    model: &Model<f64>,
    tok: &BpeModel,
    pairs: &[MinimalPair],
    cfg: &ScoreConfig,
) -> Result<ScoreOutcome, ScoreError> {
    // Tokenize everything first so problems are known before batching.
    let mut encoded: Vec<Option<(Vec<u32>, Vec<u32>)>> = Vec::with_capacity(pairs.len());
    let mut problems = Vec::new();
    for (index, pair) in pairs.iter().enumerate() {
        let good = encode_checked(tok, &pair.sentence_good);
        let bad = encode_checked(tok, &pair.sentence_bad);
        let check_len = |ids: &Vec<u32>| {
            if ids.len() > model.cfg.context_len {
                Err(ScoreError::TooLong {
                    got: ids.len(),
                    context: model.cfg.context_len,
                })
            } else {
                Ok(())
            }
        };
        let both = good.and_then(|g| {
            let b = bad?;
            check_len(&g)?;
            check_len(&b)?;
            Ok((g, b))
        });
        match both {
            Ok(gb) => encoded.push(Some(gb)),
            Err(e) => {
                problems.push(PairProblem {
                    index,
                    detail: e.to_string(),
                });
                encoded.push(None);
            }
        }
    }

    // Flat list of sentences to score: (pair index, is_good, ids).
    let jobs: Vec<(usize, bool, &[u32])> = encoded
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.as_ref().map(|(g, b)| (i, g, b)))
        .flat_map(|(i, g, b)| [(i, true, g.as_slice()), (i, false, b.as_slice())])
        .collect();
    let mut totals: Vec<(f64, usize)> = vec![(0.0, 0); jobs.len()];
    for (chunk_start, chunk) in jobs.chunks(cfg.batch_size.max(1)).enumerate().map(|(ci, c)| (ci * cfg.batch_size.max(1), c)) {
        let t = chunk.iter().map(|(_, _, ids)| ids.len()).max().unwrap_or(0);
        let mut inputs = Vec::with_capacity(chunk.len() * t);
        let mut targets = Vec::with_capacity(chunk.len() * t);
        for (_, _, ids) in chunk {
            inputs.push(BOS_ID);
            inputs.extend_from_slice(&ids[..ids.len() - 1]);
            inputs.resize(inputs.len() + t - ids.len(), posh_core::bpe::PAD_ID);
            targets.extend_from_slice(ids);
            targets.resize(targets.len() + t - ids.len(), IGNORE);
        }
        let batch = Batch {
            b: chunk.len(),
            t,
            inputs,
            targets,
            trees: None,
        };
        let lps = model.target_logprobs(&batch, cfg.mode, cfg.epoch)?;
        for (row, (_, _, ids)) in chunk.iter().enumerate() {
            let lp: f64 = lps[row * t..row * t + ids.len()].iter().sum();
            totals[chunk_start + row] = (lp, ids.len());
        }
    }

    let mut scores = Vec::new();
    for pair_jobs in jobs.chunks(2).zip(totals.chunks(2)) {
        let ([(index, true_good, _), _], [(lp_g, n_g), (lp_b, n_b)]) = pair_jobs else {
            unreachable!("jobs come in good/bad pairs");
        };
        debug_assert!(*true_good);
        let ppl_good = compared(cfg.norm, *lp_g, *n_g);
        let ppl_bad = compared(cfg.norm, *lp_b, *n_b);
        let tie = is_tie(ppl_good, ppl_bad);
        scores.push(PairScore {
            index: *index,
            logprob_good: *lp_g,
            logprob_bad: *lp_b,
            tokens_good: *n_g,
            tokens_bad: *n_b,
            ppl_good,
            ppl_bad,
            correct: !tie && ppl_good < ppl_bad,
            tie,
        });
    }
    Ok(ScoreOutcome { scores, problems })
}

#[cfg(test)]
mod tests {
    use super::*;
    use posh_core::rng::stream;
    use posh_model::config::ModelConfig;
    use posh_model::params::{Layout, Tensors};

    fn cfg(vocab: usize) -> ModelConfig {
        ModelConfig {
            hidden_size: 8,
            n_heads: 2,
            n_layers: 1,
            ffn_dim: 16,
            vocab_size: vocab,
            context_len: 16,
            dropout_rate: 0.0,
        }
    }

    fn zero_model(vocab: usize) -> Model<f64> {
        Model::new(cfg(vocab), Tensors::zeros(Layout::for_config(&cfg(vocab))))
    }

    #[test]
    fn uniform_model_gives_vocab_perplexity() {
        let model = zero_model(40);
        let (lp, n) = score_ids(&model, &[5, 6, 7], AttentionBiasMode::None, 0).unwrap();
        assert_eq!(n, 3);
        let ppl = (-lp / 3.0).exp();
        assert!((ppl - 40.0).abs() < 1e-9, "{ppl}");
        // Self-concatenation leaves per-token perplexity unchanged.
        let (lp2, n2) = score_ids(&model, &[5, 6, 7, 5, 6, 7], AttentionBiasMode::None, 0).unwrap();
        let ppl2 = (-lp2 / n2 as f64).exp();
        assert!((ppl - ppl2).abs() < 1e-9);
    }

    #[test]
    fn hand_built_logits_match_arithmetic() {
        // Zero everything except the final shift and two embedding rows:
        // the residual stream stays at zero for token 0, so every position
        // sees logits (0, 0, c2, c3) with c2 = 2, c3 = -2.
        let mut model = zero_model(4);
        let d = model.cfg.hidden_size;
        model.params.view_mut("ln_f.b")[0] = 1.0;
        {
            let emb = model.params.view_mut("tok_emb");
            emb[2 * d] = 2.0;
            emb[3 * d] = -2.0;
        }
        let (lp, n) = score_ids(&model, &[0, 0, 0], AttentionBiasMode::None, 0).unwrap();
        let lse = (2.0 + 2f64.exp() + (-2f64).exp()).ln();
        assert_eq!(n, 3);
        assert!((lp - 3.0 * (0.0 - lse)).abs() < 1e-9, "lp {lp}");
    }

    #[test]
    fn identical_sentences_tie_and_count_incorrect() {
        let model = zero_model(300);
        let tok = toy_tok();
        let pair = MinimalPair {
            sentence_good: "aba ab".into(),
            sentence_bad: "aba ab".into(),
            phenomenon: posh_core::templates::PairPhenomenon::Other,
            subcategory: "x".into(),
            template_id: "t".into(),
            slot_fill: Default::default(),
        };
        let out = score_pairs(&model, &tok, &[pair], &ScoreConfig::default()).unwrap();
        assert_eq!(out.scores.len(), 1);
        assert!(out.scores[0].tie);
        assert!(!out.scores[0].correct);
    }

    fn toy_tok() -> BpeModel {
        let lines: Vec<String> = ["ab ba aba", "ba ab bab", "abab baba"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        posh_core::bpe::train_bpe(lines.iter().map(|s| s.as_str()), 280, &[]).unwrap()
    }

    #[test]
    fn unknown_chars_become_problems() {
        let model = zero_model(300);
        let tok = toy_tok();
        let good = MinimalPair {
            sentence_good: "ab ba".into(),
            sentence_bad: "ba ab".into(),
            phenomenon: posh_core::templates::PairPhenomenon::Other,
            subcategory: "x".into(),
            template_id: "t".into(),
            slot_fill: Default::default(),
        };
        let mut with_unk = good.clone();
        with_unk.sentence_bad = "zq zz".into();
        let out = score_pairs(&model, &tok, &[good, with_unk], &ScoreConfig::default()).unwrap();
        assert_eq!(out.scores.len(), 1);
        assert_eq!(out.problems.len(), 1);
        assert_eq!(out.problems[0].index, 1);
    }

    #[test]
    fn batched_equals_one_by_one() {
        let model: Model<f64> = Model::init(cfg(300), &mut stream(5, "init"));
        let tok = toy_tok();
        let pairs: Vec<MinimalPair> = (0..7)
            .map(|i| MinimalPair {
                sentence_good: ["ab ba", "aba ab ba", "ba ba"][i % 3].into(),
                sentence_bad: ["ba ab ab", "ab", "ab aba"][i % 3].into(),
                phenomenon: posh_core::templates::PairPhenomenon::Other,
                subcategory: format!("s{}", i % 2),
                template_id: "t".into(),
                slot_fill: Default::default(),
            })
            .collect();
        let big = ScoreConfig {
            batch_size: 64,
            ..ScoreConfig::default()
        };
        let one = ScoreConfig {
            batch_size: 1,
            ..ScoreConfig::default()
        };
        let a = score_pairs(&model, &tok, &pairs, &big).unwrap();
        let b = score_pairs(&model, &tok, &pairs, &one).unwrap();
        for (x, y) in a.scores.iter().zip(&b.scores) {
            assert!((x.logprob_good - y.logprob_good).abs() < 1e-9);
            assert!((x.logprob_bad - y.logprob_bad).abs() < 1e-9);
        }
        // Order invariance: reversing the pairs reverses the scores.
        let rev: Vec<MinimalPair> = pairs.iter().rev().cloned().collect();
        let c = score_pairs(&model, &tok, &rev, &big).unwrap();
        for (x, y) in a.scores.iter().zip(c.scores.iter().rev()) {
            assert!((x.logprob_good - y.logprob_good).abs() < 1e-9);
        }
    }

    #[test]
    fn total_nll_norm_changes_comparison_basis() {
        let model = zero_model(300);
        let tok = toy_tok();
        // Uniform model: shorter sentence wins under total NLL, ties under
        // per-token perplexity.
        let pair = MinimalPair {
            sentence_good: "ab".into(),
            sentence_bad: "ab ba aba".into(),
            phenomenon: posh_core::templates::PairPhenomenon::Other,
            subcategory: "x".into(),
            template_id: "t".into(),
            slot_fill: Default::default(),
        };
        let per_token = score_pairs(&model, &tok, std::slice::from_ref(&pair), &ScoreConfig::default()).unwrap();
        assert!(per_token.scores[0].tie);
        let total = score_pairs(
            &model,
            &tok,
            &[pair],
            &ScoreConfig {
                norm: Norm::TotalNll,
                ..ScoreConfig::default()
            },
        )
        .unwrap();
        assert!(total.scores[0].correct);
    }
}
