//! JSON-lines corpus serialization: `{id, text, source}` per line, plus the
//! reject-file line format used when parses fail validation.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::conllu::SentenceRecord;

/// One line of a serialized corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusLine {
    pub id: String,
    pub text: String,
    pub source: String,
}

impl From<&SentenceRecord> for CorpusLine {
    fn from(rec: &SentenceRecord) -> Self {
        CorpusLine {
            id: rec.id.clone(),
            text: rec.text.clone(),
            source: rec.source.clone(),
        }
    }
}

/// One line of a reject file: the quarantined record plus why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectLine {
    pub id: String,
    pub text: String,
    pub source: String,
    pub reasons: Vec<String>,
}

pub fn write_corpus_jsonl<W: Write>(
    w: &mut W,
    records: &[SentenceRecord],
) -> Result<(), serde_json::Error> {
    for rec in records {
        serde_json::to_writer(&mut *w, &CorpusLine::from(rec))?;
        writeln!(w).map_err(serde_json::Error::io)?;
    }
    Ok(())
}

pub fn read_corpus_jsonl<R: BufRead>(r: R) -> Result<Vec<CorpusLine>, std::io::Error> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(std::io::Error::other)?);
    }
    Ok(out)
}
