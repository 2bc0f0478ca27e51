//! CoNLL-U reading, writing, and parse-invariant validation.
//!
//! The reader is deliberately narrow: it keeps the columns the ablation
//! filters need (index, form, upos, head, deprel) and skips multiword-token
//! and empty-node rows. Syntax errors (wrong column count, non-integer head)
//! abort with a line number; *semantic* problems (head out of range, zero or
//! several roots, unreachable tokens) are reported by [`validate`] so callers
//! can quarantine bad parses instead of dying mid-corpus.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Universal POS tags (the closed UD v2 set), plus `Unspecified` for `_` and
/// for values outside the set; the latter are reported by [`validate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[allow(clippy::upper_case_acronyms)]
pub enum Upos {
    ADJ,
    ADP,
    ADV,
    AUX,
    CCONJ,
    DET,
    INTJ,
    NOUN,
    NUM,
    PART,
    PRON,
    PROPN,
    PUNCT,
    SCONJ,
    SYM,
    VERB,
    X,
    Unspecified,
}

impl FromStr for Upos {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "ADJ" => Upos::ADJ,
            "ADP" => Upos::ADP,
            "ADV" => Upos::ADV,
            "AUX" => Upos::AUX,
            "CCONJ" => Upos::CCONJ,
            "DET" => Upos::DET,
            "INTJ" => Upos::INTJ,
            "NOUN" => Upos::NOUN,
            "NUM" => Upos::NUM,
            "PART" => Upos::PART,
            "PRON" => Upos::PRON,
            "PROPN" => Upos::PROPN,
            "PUNCT" => Upos::PUNCT,
            "SCONJ" => Upos::SCONJ,
            "SYM" => Upos::SYM,
            "VERB" => Upos::VERB,
            "X" => Upos::X,
            "_" => Upos::Unspecified,
            _ => return Err(()),
        })
    }
}

impl fmt::Display for Upos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Upos::Unspecified => "_",
            other => {
                return write!(f, "{:?}", other);
            }
        };
        f.write_str(s)
    }
}

/// Universal dependency relations (base labels, UD v2).
const UD_DEPRELS: &[&str] = &[
    "acl", "advcl", "advmod", "amod", "appos", "aux", "case", "cc", "ccomp", "clf", "compound",
    "conj", "cop", "csubj", "dep", "det", "discourse", "dislocated", "expl", "fixed", "flat",
    "goeswith", "iobj", "list", "mark", "nmod", "nsubj", "nummod", "obj", "obl", "orphan",
    "parataxis", "punct", "reparandum", "root", "vocative", "xcomp",
];

/// Dependency relation label, kept verbatim. Unknown labels are preserved and
/// flagged during validation rather than rejected at parse time.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DepRel(pub String);

impl DepRel {
    pub fn new(label: impl Into<String>) -> Self {
        DepRel(label.into())
    }

    /// Base relation, i.e. the part before any `:` subtype.
    pub fn base(&self) -> &str {
        self.0.split(':').next().unwrap_or(&self.0)
    }

    /// True when the base relation is in the UD v2 inventory (subtypes allowed).
    pub fn is_known(&self) -> bool {
        self.0 == "_" || UD_DEPRELS.binary_search(&self.base()).is_ok()
    }

    pub fn is_nsubj(&self) -> bool {
        self.base() == "nsubj"
    }

    pub fn is_relative_clause(&self) -> bool {
        self.0 == "acl:relcl"
    }
}

impl fmt::Display for DepRel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One syntactic word. `index` is 1-based as in the file; `head` is 0 for the
/// root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub index: usize,
    pub form: String,
    pub upos: Upos,
    pub head: usize,
    pub deprel: DepRel,
}

/// A parsed sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub id: String,
    pub text: String,
    pub source: String,
    pub tokens: Vec<Token>,
}

impl SentenceRecord {
    /// Sentence text: the `# text` comment when present, otherwise the forms
    /// joined by single spaces.
    pub fn surface(&self) -> &str {
        &self.text
    }
}

#[derive(Debug, Error)]
pub enum ConlluError {
    #[error("line {line}: expected 10 tab-separated columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: token index is not an integer: {value:?}")]
    BadIndex { line: usize, value: String },
    #[error("line {line}: head is not an integer: {value:?}")]
    BadHead { line: usize, value: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Why a record failed invariant validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValidationIssue {
    /// Token indices are not 1..=n in order.
    NonContiguousIndices { position: usize, found: usize },
    /// Head points outside 0..=n.
    HeadOutOfRange { token: usize, head: usize },
    /// Token is its own head.
    SelfHead { token: usize },
    /// Number of tokens with head 0; exactly one is required.
    RootCount { found: usize },
    /// Token cannot reach the root by following heads (cycle).
    Unreachable { token: usize },
    /// Deprel whose base label is not in the UD inventory.
    UnknownDeprel { token: usize, label: String },
    /// Upos value outside the UD tag set (parsed as `Unspecified`).
    UnknownUpos { token: usize },
    /// Sentence has no tokens.
    Empty,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::NonContiguousIndices { position, found } => {
                write!(f, "token at position {position} has index {found}")
            }
            ValidationIssue::HeadOutOfRange { token, head } => {
                write!(f, "token {token} has out-of-range head {head}")
            }
            ValidationIssue::SelfHead { token } => write!(f, "token {token} is its own head"),
            ValidationIssue::RootCount { found } => write!(f, "{found} roots (need exactly 1)"),
            ValidationIssue::Unreachable { token } => {
                write!(f, "token {token} does not reach the root")
            }
            ValidationIssue::UnknownDeprel { token, label } => {
                write!(f, "token {token} has unknown deprel {label:?}")
            }
            ValidationIssue::UnknownUpos { token } => {
                write!(f, "token {token} has an unknown upos tag")
            }
            ValidationIssue::Empty => write!(f, "empty sentence"),
        }
    }
}

/// Check the parse invariants for one record. `Ok(())` means the record is
/// safe for every downstream consumer (filters, tree distances).
pub fn validate(record: &SentenceRecord) -> Result<(), Vec<ValidationIssue>> {
    let mut issues = Vec::new();
    let n = record.tokens.len();
    if n == 0 {
        return Err(vec![ValidationIssue::Empty]);
    }
    for (pos, tok) in record.tokens.iter().enumerate() {
        if tok.index != pos + 1 {
            issues.push(ValidationIssue::NonContiguousIndices {
                position: pos + 1,
                found: tok.index,
            });
        }
        if tok.head > n {
            issues.push(ValidationIssue::HeadOutOfRange {
                token: pos + 1,
                head: tok.head,
            });
        } else if tok.head == pos + 1 {
            issues.push(ValidationIssue::SelfHead { token: pos + 1 });
        }
        if !tok.deprel.is_known() {
            issues.push(ValidationIssue::UnknownDeprel {
                token: pos + 1,
                label: tok.deprel.0.clone(),
            });
        }
    }
    let roots = record.tokens.iter().filter(|t| t.head == 0).count();
    if roots != 1 {
        issues.push(ValidationIssue::RootCount { found: roots });
    }
    // Reachability only makes sense once heads are structurally sound.
    if issues.is_empty() {
        for start in 0..n {
            let mut cur = start + 1;
            let mut steps = 0;
            while cur != 0 {
                cur = record.tokens[cur - 1].head;
                steps += 1;
                if steps > n {
                    issues.push(ValidationIssue::Unreachable { token: start + 1 });
                    break;
                }
            }
        }
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(issues)
    }
}

/// Parse CoNLL-U from a reader. Multiword-token ranges (`i-j`) and empty
/// nodes (`i.j`) are skipped; comments other than `sent_id` / `text` are
/// ignored. `source` is recorded on every sentence and used to synthesize ids
/// when the file has no `sent_id` comments.
pub fn read_conllu<R: BufRead>(reader: R, source: &str) -> Result<Vec<SentenceRecord>, ConlluError> {
    let mut records = Vec::new();
    let mut tokens: Vec<Token> = Vec::new();
    let mut sent_id: Option<String> = None;
    let mut text: Option<String> = None;
    let mut seen = 0usize;

    let mut flush = |tokens: &mut Vec<Token>, sent_id: &mut Option<String>, text: &mut Option<String>, seen: &mut usize| {
        if tokens.is_empty() {
            return;
        }
        *seen += 1;
        let id = sent_id.take().unwrap_or_else(|| format!("{source}:{seen}"));
        let text = text.take().unwrap_or_else(|| {
            tokens.iter().map(|t| t.form.as_str()).collect::<Vec<_>>().join(" ")
        });
        records.push(SentenceRecord {
            id,
            text,
            source: source.to_string(),
            tokens: std::mem::take(tokens),
        });
    };

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.is_empty() {
            flush(&mut tokens, &mut sent_id, &mut text, &mut seen);
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(v) = comment.strip_prefix("sent_id =") {
                sent_id = Some(v.trim().to_string());
            } else if let Some(v) = comment.strip_prefix("text =") {
                text = Some(v.trim().to_string());
            }
            continue;
        }
        let cols: Vec<&str> = trimmed.split('\t').collect();
        if cols.len() != 10 {
            return Err(ConlluError::ColumnCount {
                line: lineno,
                found: cols.len(),
            });
        }
        // Multiword tokens and empty nodes carry range/decimal ids.
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let index: usize = cols[0].parse().map_err(|_| ConlluError::BadIndex {
            line: lineno,
            value: cols[0].to_string(),
        })?;
        let head: usize = cols[6].parse().map_err(|_| ConlluError::BadHead {
            line: lineno,
            value: cols[6].to_string(),
        })?;
        tokens.push(Token {
            index,
            form: cols[1].to_string(),
            upos: cols[3].parse().unwrap_or(Upos::Unspecified),
            head,
            deprel: DepRel::new(cols[7]),
        });
    }
    flush(&mut tokens, &mut sent_id, &mut text, &mut seen);
    Ok(records)
}

/// Open a CoNLL-U file, transparently decompressing when the gzip magic bytes
/// are present, and parse it. The file stem becomes the `source`.
pub fn read_conllu_file(path: impl AsRef<Path>) -> Result<Vec<SentenceRecord>, ConlluError> {
    let path = path.as_ref();
    let source = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".to_string());
    let mut file = File::open(path)?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic)?;
    let file = File::open(path)?;
    if n == 2 && magic == [0x1f, 0x8b] {
        read_conllu(BufReader::new(flate2::read::GzDecoder::new(file)), &source)
    } else {
        read_conllu(BufReader::new(file), &source)
    }
}

/// Serialize records back to CoNLL-U (the five columns this crate tracks;
/// the rest are `_`).
pub fn write_conllu<W: Write>(w: &mut W, records: &[SentenceRecord]) -> std::io::Result<()> {
    for rec in records {
        writeln!(w, "# sent_id = {}", rec.id)?;
        writeln!(w, "# text = {}", rec.text)?;
        for t in &rec.tokens {
            writeln!(
                w,
                "{}\t{}\t_\t{}\t_\t_\t{}\t{}\t_\t_",
                t.index, t.form, t.upos, t.head, t.deprel
            )?;
        }
        writeln!(w)?;
    }
    Ok(())
}
