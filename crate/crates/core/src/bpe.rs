//! Byte-pair encoding with whitespace pre-tokenization.
//!
//! Scheme: lines are split on whitespace; each inter-word space becomes a
//! `▁` (U+2581) symbol attached to the start of the following word, words are
//! further split into alphanumeric and non-alphanumeric runs, and merges
//! never cross run boundaries. Decoding concatenates token strings and turns
//! `▁` back into spaces, so encode/decode is the identity on single-spaced
//! text over the training charset (input must not itself contain `▁`).
//!
//! `vocab_size` counts alphabet plus merges; the four specials and any
//! reserved tokens sit on top of it. Training stops early once no pair
//! occurs twice, so a huge requested size degrades gracefully.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MARKER: char = '\u{2581}';
pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const BOS_ID: u32 = 2;
pub const EOS_ID: u32 = 3;

#[derive(Debug, Error)]
pub enum BpeError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("vocab_size {requested} is below the base alphabet size {alphabet}")]
    VocabTooSmall { requested: usize, alphabet: usize },
    #[error("vocabulary selection needs at least two corpora, got {0}")]
    TooFewCorpora(usize),
    #[error("no candidate vocabulary sizes given")]
    NoCandidates,
    #[error("model file is inconsistent: {0}")]
    BadModel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A trained tokenizer. Token ids are dense: `tokens[id]` is the surface
/// string and specials occupy ids 0..=3.
#[derive(Debug, Clone)]
pub struct BpeModel {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    merges: Vec<(String, String)>,
    /// (left id, right id) -> (rank, merged id)
    ranks: HashMap<(u32, u32), (u32, u32)>,
    reserved: Vec<String>,
    alphabet_size: usize,
}

/// One word as fed to the merge machinery: its runs of symbols.
fn word_units(word: &str, marked: bool) -> Vec<Vec<String>> {
    let mut units: Vec<Vec<String>> = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let mut current_alnum: Option<bool> = None;
    for ch in word.chars() {
        let alnum = ch.is_alphanumeric();
        if current_alnum != Some(alnum) && !current.is_empty() {
            units.push(std::mem::take(&mut current));
        }
        current_alnum = Some(alnum);
        current.push(ch.to_string());
    }
    if !current.is_empty() {
        units.push(current);
    }
    if marked {
        if units.is_empty() {
            units.push(vec![MARKER.to_string()]);
        } else {
            units[0].insert(0, MARKER.to_string());
        }
    }
    units
}

/// Pre-tokenize a line into (word, marked) pairs; `marked` means the word
/// follows whitespace and carries the space marker.
fn pre_tokenize(line: &str) -> Vec<(&str, bool)> {
    line.split_whitespace()
        .enumerate()
        .map(|(i, w)| (w, i > 0))
        .collect()
}

/// Training-table entry: one distinct (word, marked) shape.
struct TableEntry {
    units: Vec<Vec<u32>>,
    count: u64,
}

pub fn train_bpe(
    lines: impl IntoIterator<Item = impl AsRef<str>>,
    vocab_size: usize,
    reserved: &[String],
) -> Result<BpeModel, BpeError> {
    // Count distinct (word, marked) shapes.
    let mut word_counts: HashMap<(String, bool), u64> = HashMap::new();
    let reserved_set: HashSet<&str> = reserved.iter().map(String::as_str).collect();
    for line in lines {
        for (word, marked) in pre_tokenize(line.as_ref()) {
            if reserved_set.contains(word) {
                continue;
            }
            *word_counts.entry((word.to_string(), marked)).or_insert(0) += 1;
        }
    }
    if word_counts.is_empty() && reserved.is_empty() {
        return Err(BpeError::EmptyCorpus);
    }

    // Alphabet: every distinct symbol, plus the marker unconditionally so
    // multi-word text can always be encoded.
    let mut alphabet: HashSet<String> = HashSet::new();
    alphabet.insert(MARKER.to_string());
    for (word, marked) in word_counts.keys() {
        for unit in word_units(word, *marked) {
            for sym in unit {
                alphabet.insert(sym);
            }
        }
    }
    let mut alphabet: Vec<String> = alphabet.into_iter().collect();
    alphabet.sort();
    if vocab_size < alphabet.len() {
        return Err(BpeError::VocabTooSmall {
            requested: vocab_size,
            alphabet: alphabet.len(),
        });
    }
    let target_merges = vocab_size - alphabet.len();

    // Id space: specials, reserved, alphabet, then merged symbols.
    let mut tokens: Vec<String> = vec![PAD.into(), UNK.into(), BOS.into(), EOS.into()];
    tokens.extend(reserved.iter().cloned());
    tokens.extend(alphabet.iter().cloned());
    let mut ids: HashMap<String, u32> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i as u32))
        .collect();

    let mut table: Vec<TableEntry> = word_counts
        .iter()
        .map(|((word, marked), &count)| TableEntry {
            units: word_units(word, *marked)
                .into_iter()
                .map(|unit| unit.into_iter().map(|s| ids[&s]).collect())
                .collect(),
            count,
        })
        .collect();
    // Deterministic table order (HashMap iteration order must not matter).
    table.sort_by(|a, b| (&a.units, a.count).cmp(&(&b.units, b.count)));

    // Incremental pair counts with a lazily invalidated heap. Heap entries
    // order by count, then lexicographically smallest (left, right) strings.
    let mut pair_counts: HashMap<(u32, u32), i64> = HashMap::new();
    let mut pair_entries: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
    for (idx, entry) in table.iter().enumerate() {
        for unit in &entry.units {
            for w in unit.windows(2) {
                let pair = (w[0], w[1]);
                *pair_counts.entry(pair).or_insert(0) += entry.count as i64;
                pair_entries.entry(pair).or_default().push(idx);
            }
        }
    }
    for occ in pair_entries.values_mut() {
        occ.dedup();
    }
    let mut heap: BinaryHeap<(i64, Reverse<(String, String)>, (u32, u32))> = pair_counts
        .iter()
        .map(|(&(a, b), &c)| {
            (
                c,
                Reverse((tokens[a as usize].clone(), tokens[b as usize].clone())),
                (a, b),
            )
        })
        .collect();

    let mut merges: Vec<(String, String)> = Vec::new();
    let mut ranks: HashMap<(u32, u32), (u32, u32)> = HashMap::new();
    while merges.len() < target_merges {
        // Pop until a live entry shows up.
        let pair = loop {
            match heap.pop() {
                None => break None,
                Some((count, _, pair)) => {
                    if pair_counts.get(&pair) == Some(&count) && count >= 2 {
                        break Some(pair);
                    }
                    // Stale or below the repeat threshold; a live version of
                    // the same pair is still in the heap if its count grew.
                }
            }
        };
        let Some((left, right)) = pair else { break };
        let new_token = format!("{}{}", tokens[left as usize], tokens[right as usize]);
        let new_id = tokens.len() as u32;
        tokens.push(new_token.clone());
        ids.insert(new_token, new_id);
        ranks.insert((left, right), (merges.len() as u32, new_id));
        merges.push((
            tokens[left as usize].clone(),
            tokens[right as usize].clone(),
        ));

        // Rewrite only the table entries that contain the pair, updating
        // counts around each replacement.
        let affected = pair_entries.remove(&(left, right)).unwrap_or_default();
        pair_counts.remove(&(left, right));
        let mut touched: HashSet<(u32, u32)> = HashSet::new();
        for idx in affected {
            let count = table[idx].count as i64;
            for unit in &mut table[idx].units {
                let mut i = 0;
                while i + 1 < unit.len() {
                    if unit[i] == left && unit[i + 1] == right {
                        if i > 0 {
                            let p = (unit[i - 1], left);
                            if let Some(c) = pair_counts.get_mut(&p) {
                                *c -= count;
                                touched.insert(p);
                            }
                        }
                        if i + 2 < unit.len() {
                            let p = (right, unit[i + 2]);
                            if let Some(c) = pair_counts.get_mut(&p) {
                                *c -= count;
                                touched.insert(p);
                            }
                        }
                        unit[i] = new_id;
                        unit.remove(i + 1);
                        if i > 0 {
                            let p = (unit[i - 1], new_id);
                            *pair_counts.entry(p).or_insert(0) += count;
                            touched.insert(p);
                            pair_entries.entry(p).or_default().push(idx);
                        }
                        if i + 1 < unit.len() {
                            let p = (new_id, unit[i + 1]);
                            *pair_counts.entry(p).or_insert(0) += count;
                            touched.insert(p);
                            pair_entries.entry(p).or_default().push(idx);
                        }
                    } else {
                        i += 1;
                    }
                }
            }
        }
        for pair in touched {
            if let Some(&c) = pair_counts.get(&pair) {
                if c >= 2 {
                    heap.push((
                        c,
                        Reverse((
                            tokens[pair.0 as usize].clone(),
                            tokens[pair.1 as usize].clone(),
                        )),
                        pair,
                    ));
                }
            }
        }
    }

    Ok(BpeModel {
        tokens,
        ids,
        merges,
        ranks,
        reserved: reserved.to_vec(),
        alphabet_size: alphabet.len(),
    })
}

impl BpeModel {
    pub fn vocab_len(&self) -> usize {
        self.tokens.len()
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    fn encode_word(&self, word: &str, marked: bool) -> Vec<u32> {
        if self.reserved.iter().any(|r| r == word) {
            let mut out = Vec::with_capacity(2);
            if marked {
                out.push(self.ids[&MARKER.to_string()]);
            }
            out.push(self.ids[word]);
            return out;
        }
        let mut out = Vec::new();
        for unit in word_units(word, marked) {
            let mut syms: Vec<u32> = unit
                .iter()
                .map(|s| self.ids.get(s).copied().unwrap_or(UNK_ID))
                .collect();
            // Apply the lowest-ranked available merge until none fits.
            loop {
                let mut best: Option<(u32, usize, u32)> = None;
                for i in 0..syms.len().saturating_sub(1) {
                    if let Some(&(rank, id)) = self.ranks.get(&(syms[i], syms[i + 1])) {
                        if best.map_or(true, |(r, _, _)| rank < r) {
                            best = Some((rank, i, id));
                        }
                    }
                }
                let Some((_, at, id)) = best else { break };
                let (left, right) = (syms[at], syms[at + 1]);
                // Replace every occurrence of this pair, left to right.
                let mut i = 0;
                while i + 1 < syms.len() {
                    if syms[i] == left && syms[i + 1] == right {
                        syms[i] = id;
                        syms.remove(i + 1);
                    } else {
                        i += 1;
                    }
                }
            }
            out.extend(syms);
        }
        out
    }

    /// Token ids for one line. No specials are added.
    pub fn encode(&self, line: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for (word, marked) in pre_tokenize(line) {
            out.extend(self.encode_word(word, marked));
        }
        out
    }

    /// Inverse of `encode` on training-charset text. Pad/bos/eos are
    /// skipped; unknown ids render as the unk literal.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut s = String::new();
        for &id in ids {
            if id == PAD_ID || id == BOS_ID || id == EOS_ID {
                continue;
            }
            match self.tokens.get(id as usize) {
                Some(tok) => s.push_str(tok),
                None => s.push_str(UNK),
            }
        }
        s.replace(MARKER, " ")
    }

    /// Total token count of a corpus under this model.
    pub fn corpus_token_count(&self, lines: impl IntoIterator<Item = impl AsRef<str>>) -> u64 {
        let mut cache: HashMap<(String, bool), u64> = HashMap::new();
        let mut total = 0u64;
        for line in lines {
            for (word, marked) in pre_tokenize(line.as_ref()) {
                let key = (word.to_string(), marked);
                let n = *cache
                    .entry(key)
                    .or_insert_with(|| self.encode_word(word, marked).len() as u64);
                total += n;
            }
        }
        total
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), BpeError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let vocab = VocabFile {
            version: 1,
            scheme: "whitespace-prefix-space".into(),
            specials: Specials::default(),
            reserved: self.reserved.clone(),
            alphabet_size: self.alphabet_size,
            tokens: self.tokens.clone(),
        };
        fs::write(dir.join("vocab.json"), serde_json::to_string_pretty(&vocab)?)?;
        let mut merges = String::new();
        for (a, b) in &self.merges {
            merges.push_str(a);
            merges.push(' ');
            merges.push_str(b);
            merges.push('\n');
        }
        fs::write(dir.join("merges.txt"), merges)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<BpeModel, BpeError> {
        let dir = dir.as_ref();
        let vocab: VocabFile = serde_json::from_str(&fs::read_to_string(dir.join("vocab.json"))?)?;
        let merge_text = fs::read_to_string(dir.join("merges.txt"))?;
        let mut merges = Vec::new();
        for (no, line) in merge_text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, ' ');
            match (parts.next(), parts.next()) {
                (Some(a), Some(b)) => merges.push((a.to_string(), b.to_string())),
                _ => {
                    return Err(BpeError::BadModel(format!(
                        "merges.txt line {}: expected two space-separated symbols",
                        no + 1
                    )))
                }
            }
        }
        let ids: HashMap<String, u32> = vocab
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        if ids.len() != vocab.tokens.len() {
            return Err(BpeError::BadModel("duplicate token strings".into()));
        }
        for (special, id) in [(PAD, PAD_ID), (UNK, UNK_ID), (BOS, BOS_ID), (EOS, EOS_ID)] {
            if vocab.tokens.get(id as usize).map(String::as_str) != Some(special) {
                return Err(BpeError::BadModel(format!("special {special} missing at id {id}")));
            }
        }
        let mut ranks = HashMap::new();
        for (rank, (a, b)) in merges.iter().enumerate() {
            let (Some(&ia), Some(&ib)) = (ids.get(a), ids.get(b)) else {
                return Err(BpeError::BadModel(format!("merge {rank} references unknown symbol")));
            };
            let merged = format!("{a}{b}");
            let Some(&im) = ids.get(&merged) else {
                return Err(BpeError::BadModel(format!("merged symbol {merged:?} not in vocab")));
            };
            ranks.insert((ia, ib), (rank as u32, im));
        }
        Ok(BpeModel {
            tokens: vocab.tokens,
            ids,
            merges,
            ranks,
            reserved: vocab.reserved,
            alphabet_size: vocab.alphabet_size,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Specials {
    pad: String,
    unk: String,
    bos: String,
    eos: String,
}

impl Default for Specials {
    fn default() -> Self {
        Specials {
            pad: PAD.into(),
            unk: UNK.into(),
            bos: BOS.into(),
            eos: EOS.into(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct VocabFile {
    version: u32,
    scheme: String,
    specials: Specials,
    reserved: Vec<String>,
    alphabet_size: usize,
    tokens: Vec<String>,
}

/// Relative corpus-token-count discrepancy: worst pairwise
/// `|a - b| / min(a, b)`.
pub fn ctc_discrepancy(ctcs: &[u64]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..ctcs.len() {
        for j in i + 1..ctcs.len() {
            let (a, b) = (ctcs[i] as f64, ctcs[j] as f64);
            let d = (a - b).abs() / a.min(b);
            worst = worst.max(d);
        }
    }
    worst
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionRow {
    pub vocab_size: usize,
    pub ctcs: Vec<u64>,
    pub discrepancy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub chosen: usize,
    pub rows: Vec<SelectionRow>,
}

/// Pick the candidate size minimizing CTC discrepancy from a precomputed
/// table; ties go to the smallest size.
pub fn select_from_ctc_table(rows: Vec<SelectionRow>) -> Result<SelectionOutcome, BpeError> {
    if rows.is_empty() {
        return Err(BpeError::NoCandidates);
    }
    let mut best: Option<(f64, usize)> = None;
    for row in &rows {
        let candidate = (row.discrepancy, row.vocab_size);
        best = Some(match best {
            None => candidate,
            Some(cur) => {
                if candidate.0 < cur.0 || (candidate.0 == cur.0 && candidate.1 < cur.1) {
                    candidate
                } else {
                    cur
                }
            }
        });
    }
    Ok(SelectionOutcome {
        chosen: best.expect("nonempty").1,
        rows,
    })
}

/// Train one tokenizer per corpus at each candidate size and pick the size
/// whose per-corpus token counts agree best.
pub fn select_vocab_size(
    corpora: &[Vec<String>],
    candidate_sizes: &[usize],
    reserved: &[String],
) -> Result<SelectionOutcome, BpeError> {
    if corpora.len() < 2 {
        return Err(BpeError::TooFewCorpora(corpora.len()));
    }
    if candidate_sizes.is_empty() {
        return Err(BpeError::NoCandidates);
    }
    let mut rows = Vec::new();
    for &size in candidate_sizes {
        let mut ctcs = Vec::new();
        for corpus in corpora {
            let model = train_bpe(corpus.iter(), size, reserved)?;
            ctcs.push(model.corpus_token_count(corpus.iter()));
        }
        rows.push(SelectionRow {
            vocab_size: size,
            discrepancy: ctc_discrepancy(&ctcs),
            ctcs,
        });
    }
    select_from_ctc_table(rows)
}
