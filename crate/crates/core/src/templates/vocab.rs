//! Shared vocabulary construction.
//!
//! The benchmark may only use words every training corpus has seen often.
//! Each corpus nominates its top-k token types by frequency; the shared
//! vocabulary is the intersection, sorted lexicographically.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("shared vocabulary needs at least one corpus")]
    NoCorpora,
    #[error("corpus {index} has an empty frequency table")]
    EmptyTable { index: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Whitespace-token frequencies over a corpus of lines.
pub fn count_token_frequencies<I, S>(lines: I) -> BTreeMap<String, u64>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut counts = BTreeMap::new();
    for line in lines {
        for token in line.as_ref().split_whitespace() {
            *counts.entry(token.to_string()).or_insert(0) += 1;
        }
    }
    counts
}

/// Top `k` types by count, ties broken toward the lexicographically
/// smaller token. Shorter corpora just return all their types.
pub fn top_k_tokens(counts: &BTreeMap<String, u64>, k: usize) -> Vec<String> {
    let mut ranked: Vec<(&String, &u64)> = counts.iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    ranked.into_iter().take(k).map(|(t, _)| t.clone()).collect()
}

/// Intersection of each corpus's top-k types, sorted lexicographically.
pub fn build_shared_vocab(
    corpora: &[BTreeMap<String, u64>],
    k: usize,
) -> Result<Vec<String>, VocabError> {
    if let Some(index) = corpora.iter().position(BTreeMap::is_empty) {
        return Err(VocabError::EmptyTable { index });
    }
    let mut iter = corpora.iter();
    let first = iter.next().ok_or(VocabError::NoCorpora)?;
    let mut shared: BTreeSet<String> = top_k_tokens(first, k).into_iter().collect();
    for counts in iter {
        let top: BTreeSet<String> = top_k_tokens(counts, k).into_iter().collect();
        shared.retain(|t| top.contains(t));
    }
    Ok(shared.into_iter().collect())
}

/// One token per line, blank lines and `#` comments skipped.
pub fn read_vocab(reader: impl BufRead) -> Result<BTreeSet<String>, VocabError> {
    let mut vocab = BTreeSet::new();
    for line in reader.lines() {
        let line = line?;
        let token = line.trim();
        if token.is_empty() || token.starts_with('#') {
            continue;
        }
        vocab.insert(token.to_string());
    }
    Ok(vocab)
}

pub fn write_vocab(mut writer: impl Write, vocab: &[String]) -> Result<(), VocabError> {
    for token in vocab {
        writeln!(writer, "{token}")?;
    }
    Ok(())
}
