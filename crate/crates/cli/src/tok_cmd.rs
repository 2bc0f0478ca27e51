//! Tokenizer commands: train, corpus token count, vocab-size selection.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use posh_core::bpe::{select_vocab_size, train_bpe, BpeModel, SelectionOutcome};
use posh_core::dyck::bracket_vocab;
use serde::Serialize;

use crate::ioutil::{read_text_lines, write_json_pretty};

#[derive(Debug, Clone, Serialize)]
pub struct TokSummary {
    pub vocab_len: usize,
    pub alphabet_size: usize,
    pub merges: usize,
    pub corpus_tokens: u64,
}

fn gather_lines(inputs: &[PathBuf]) -> Result<Vec<String>> {
    let mut lines = Vec::new();
    for path in inputs {
        lines.extend(read_text_lines(path)?);
    }
    Ok(lines)
}

/// `tok train`: fit a byte-pair model on the input text. `reserve_brackets`
/// adds the bracket tokens of a k-type Dyck language as reserved words.
pub fn train(
    inputs: &[PathBuf],
    size: usize,
    reserve_brackets: Option<usize>,
    extra_reserved: &[String],
    out_dir: &Path,
) -> Result<TokSummary> {
    let lines = gather_lines(inputs)?;
    let mut reserved: Vec<String> = extra_reserved.to_vec();
    if let Some(k) = reserve_brackets {
        reserved.extend(bracket_vocab(k));
    }
    let model = train_bpe(lines.iter(), size, &reserved)?;
    model.save(out_dir).with_context(|| format!("{}", out_dir.display()))?;
    Ok(TokSummary {
        vocab_len: model.vocab_len(),
        alphabet_size: model.alphabet_size(),
        merges: model.merges().len(),
        corpus_tokens: model.corpus_token_count(lines.iter()),
    })
}

/// `tok ctc`: token count of a corpus under a trained model.
pub fn ctc(model_dir: &Path, inputs: &[PathBuf]) -> Result<u64> {
    let model = BpeModel::load(model_dir)?;
    let lines = gather_lines(inputs)?;
    Ok(model.corpus_token_count(lines.iter()))
}

/// `tok select`: pick the vocab size whose per-corpus token counts agree
/// best across the given corpora.
pub fn select(
    corpora: &[PathBuf],
    sizes: &[usize],
    out: Option<&Path>,
) -> Result<SelectionOutcome> {
    let mut texts = Vec::new();
    for path in corpora {
        texts.push(read_text_lines(path)?);
    }
    let outcome = select_vocab_size(&texts, sizes, &[])?;
    if let Some(p) = out {
        write_json_pretty(p, &outcome)?;
    }
    Ok(outcome)
}
