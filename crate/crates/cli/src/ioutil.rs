//! File plumbing shared by the subcommands: text-line and parsed-corpus
//! readers that dispatch on extension, and jsonl writers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use posh_core::conllu::{read_conllu_file, SentenceRecord};

/// Sentence lines from a `.txt` file (one sentence per line) or the `text`
/// field of each object in a `.jsonl` file. Blank lines are dropped.
pub fn read_text_lines(path: &Path) -> Result<Vec<String>> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let file = File::open(path).with_context(|| format!("open {}", path.display()))?;
    let reader = BufReader::new(file);
    let mut lines = Vec::new();
    match ext {
        "jsonl" => {
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let value: serde_json::Value = serde_json::from_str(&line)
                    .with_context(|| format!("{} line {}", path.display(), i + 1))?;
                match value.get("text").and_then(|t| t.as_str()) {
                    Some(text) => lines.push(text.to_string()),
                    None => bail!("{} line {}: no \"text\" field", path.display(), i + 1),
                }
            }
        }
        _ => {
            for line in reader.lines() {
                let line = line?;
                if !line.trim().is_empty() {
                    lines.push(line);
                }
            }
        }
    }
    if lines.is_empty() {
        bail!("{}: no sentences", path.display());
    }
    Ok(lines)
}

/// Parsed sentences from a `.conllu` file or a jsonl of full records.
pub fn read_parsed(path: &Path) -> Result<Vec<SentenceRecord>> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if ext == "conllu" {
        return read_conllu_file(path).with_context(|| format!("read {}", path.display()));
    }
    let file = File::open(path).with_context(|| format!("open {}", path.display()))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SentenceRecord = serde_json::from_str(&line)
            .with_context(|| format!("{} line {}", path.display(), i + 1))?;
        records.push(rec);
    }
    if records.is_empty() {
        bail!("{}: no records", path.display());
    }
    Ok(records)
}

/// Full records as jsonl, loadable by `read_parsed` and, through the `text`
/// field, by `read_text_lines`.
pub fn write_parsed_jsonl(path: &Path, records: &[SentenceRecord]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for line in lines {
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json_pretty<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("write {}", path.display()))?;
    Ok(())
}
