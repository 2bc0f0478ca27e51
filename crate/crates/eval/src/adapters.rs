//! Benchmark file IO: the native JSON-lines pair format, plus adapters
//! that bring three external suites into the same schema.
//!
//! Field mappings:
//! - BLiMP jsonl: `sentence_good`/`sentence_bad` carried over,
//!   `linguistics_term` becomes the subcategory (and picks the phenomenon:
//!   island_effects -> island, binding -> binding, anything else -> other),
//!   `UID` becomes the template id.
//! - Zorro txt: consecutive line pairs, ungrammatical first by default
//!   (pass `good_first` for suites written the other way round); the file
//!   stem becomes both subcategory and template id; phenomenon is other.
//! - SCaMP jsonl: `good`/`bad` carried over, `category` becomes the
//!   subcategory, `id` the template id; phenomenon is other.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use posh_core::templates::{MinimalPair, PairPhenomenon};

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path} line {line}: {detail}")]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("{path}: odd number of sentences ({count}); pair files need an even count")]
    OddLineCount { path: String, count: usize },
    #[error("{path}: no pairs found")]
    EmptyFile { path: String },
}

fn io_err(path: &Path, source: std::io::Error) -> AdapterError {
    AdapterError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads the native format: one `MinimalPair` JSON object per line.
pub fn read_pairs_jsonl(path: &Path) -> Result<Vec<MinimalPair>, AdapterError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: MinimalPair = serde_json::from_str(&line).map_err(|e| AdapterError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            detail: e.to_string(),
        })?;
        pairs.push(pair);
    }
    if pairs.is_empty() {
        return Err(AdapterError::EmptyFile {
            path: path.display().to_string(),
        });
    }
    Ok(pairs)
}

/// Writes pairs in the native format, one JSON object per line.
pub fn write_pairs_jsonl(path: &Path, pairs: &[MinimalPair]) -> Result<(), AdapterError> {
    let mut file = File::create(path).map_err(|e| io_err(path, e))?;
    for pair in pairs {
        let line = serde_json::to_string(pair).expect("pair serializes");
        writeln!(file, "{line}").map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct BlimpRow {
    sentence_good: String,
    sentence_bad: String,
    linguistics_term: String,
    #[serde(rename = "UID")]
    uid: String,
}

fn blimp_phenomenon(term: &str) -> PairPhenomenon {
    match term {
        "island_effects" => PairPhenomenon::Island,
        "binding" => PairPhenomenon::Binding,
        _ => PairPhenomenon::Other,
    }
}

/// BLiMP adapter. See the module docs for the field mapping.
pub fn read_blimp_jsonl(path: &Path) -> Result<Vec<MinimalPair>, AdapterError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: BlimpRow = serde_json::from_str(&line).map_err(|e| AdapterError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            detail: e.to_string(),
        })?;
        pairs.push(MinimalPair {
            sentence_good: row.sentence_good,
            sentence_bad: row.sentence_bad,
            phenomenon: blimp_phenomenon(&row.linguistics_term),
            subcategory: row.linguistics_term,
            template_id: row.uid,
            slot_fill: BTreeMap::new(),
        });
    }
    if pairs.is_empty() {
        return Err(AdapterError::EmptyFile {
            path: path.display().to_string(),
        });
    }
    Ok(pairs)
}

/// Zorro adapter. See the module docs for the line convention.
pub fn read_zorro_txt(path: &Path, good_first: bool) -> Result<Vec<MinimalPair>, AdapterError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "zorro".into());
    let mut sentences = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| io_err(path, e))?;
        let trimmed = line.trim();
        if !trimmed.is_empty() {
            sentences.push(trimmed.to_string());
        }
    }
    if sentences.len() % 2 != 0 {
        return Err(AdapterError::OddLineCount {
            path: path.display().to_string(),
            count: sentences.len(),
        });
    }
    let mut pairs = Vec::new();
    for chunk in sentences.chunks_exact(2) {
        let (good, bad) = if good_first {
            (chunk[0].clone(), chunk[1].clone())
        } else {
            (chunk[1].clone(), chunk[0].clone())
        };
        pairs.push(MinimalPair {
            sentence_good: good,
            sentence_bad: bad,
            phenomenon: PairPhenomenon::Other,
            subcategory: stem.clone(),
            template_id: stem.clone(),
            slot_fill: BTreeMap::new(),
        });
    }
    if pairs.is_empty() {
        return Err(AdapterError::EmptyFile {
            path: path.display().to_string(),
        });
    }
    Ok(pairs)
}

#[derive(Deserialize)]
struct ScampRow {
    good: String,
    bad: String,
    category: String,
    id: String,
}

/// SCaMP adapter. See the module docs for the field mapping.
pub fn read_scamp_jsonl(path: &Path) -> Result<Vec<MinimalPair>, AdapterError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ScampRow = serde_json::from_str(&line).map_err(|e| AdapterError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            detail: e.to_string(),
        })?;
        pairs.push(MinimalPair {
            sentence_good: row.good,
            sentence_bad: row.bad,
            phenomenon: PairPhenomenon::Other,
            subcategory: row.category,
            template_id: row.id,
            slot_fill: BTreeMap::new(),
        });
    }
    if pairs.is_empty() {
        return Err(AdapterError::EmptyFile {
            path: path.display().to_string(),
        });
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(dir: &tempfile::TempDir, name: &str, content: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, content).unwrap();
        p
    }

    #[test]
    fn native_roundtrip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let pairs = vec![MinimalPair {
            sentence_good: "the cat sleeps".into(),
            sentence_bad: "the cat sleep".into(),
            phenomenon: PairPhenomenon::QuestionFormation,
            subcategory: "agreement".into(),
            template_id: "t1".into(),
            slot_fill: [("noun".to_string(), "cat".to_string())].into(),
        }];
        let p = dir.path().join("pairs.jsonl");
        write_pairs_jsonl(&p, &pairs).unwrap();
        let back = read_pairs_jsonl(&p).unwrap();
        assert_eq!(back, pairs);
    }

    #[test]
    fn blimp_maps_terms_to_phenomena() {
        let dir = tempfile::tempdir().unwrap();
        let content = concat!(
            r#"{"sentence_good":"who did you see","sentence_bad":"who did you see him","linguistics_term":"island_effects","UID":"wh_island","extra_field":1}"#,
            "\n",
            r#"{"sentence_good":"she saw herself","sentence_bad":"herself saw she","linguistics_term":"binding","UID":"principle_a"}"#,
            "\n",
            r#"{"sentence_good":"a","sentence_bad":"b","linguistics_term":"quantifiers","UID":"scope"}"#,
            "\n",
        );
        let p = write_tmp(&dir, "blimp.jsonl", content);
        let pairs = read_blimp_jsonl(&p).unwrap();
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[0].phenomenon, PairPhenomenon::Island);
        assert_eq!(pairs[0].subcategory, "island_effects");
        assert_eq!(pairs[0].template_id, "wh_island");
        assert_eq!(pairs[1].phenomenon, PairPhenomenon::Binding);
        assert_eq!(pairs[2].phenomenon, PairPhenomenon::Other);
    }

    #[test]
    fn zorro_defaults_to_bad_first() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            &dir,
            "agreement_subject_verb.txt",
            "the dogs barks .\nthe dogs bark .\n\nthe cat sleep .\nthe cat sleeps .\n",
        );
        let pairs = read_zorro_txt(&p, false).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].sentence_good, "the dogs bark .");
        assert_eq!(pairs[0].sentence_bad, "the dogs barks .");
        assert_eq!(pairs[0].subcategory, "agreement_subject_verb");
        let flipped = read_zorro_txt(&p, true).unwrap();
        assert_eq!(flipped[0].sentence_good, "the dogs barks .");
    }

    #[test]
    fn zorro_odd_count_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "odd.txt", "one\ntwo\nthree\n");
        assert!(matches!(
            read_zorro_txt(&p, false),
            Err(AdapterError::OddLineCount { count: 3, .. })
        ));
    }

    #[test]
    fn scamp_rows_map_through() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            &dir,
            "scamp.jsonl",
            concat!(
                r#"{"good":"g one","bad":"b one","category":"recursion","id":"r-001"}"#,
                "\n"
            ),
        );
        let pairs = read_scamp_jsonl(&p).unwrap();
        assert_eq!(pairs[0].sentence_good, "g one");
        assert_eq!(pairs[0].subcategory, "recursion");
        assert_eq!(pairs[0].template_id, "r-001");
    }

    #[test]
    fn adapter_output_reserialized_is_fixed_point() {
        let dir = tempfile::tempdir().unwrap();
        let blimp = write_tmp(
            &dir,
            "b.jsonl",
            concat!(
                r#"{"sentence_good":"g","sentence_bad":"b","linguistics_term":"binding","UID":"u"}"#,
                "\n"
            ),
        );
        let zorro = write_tmp(&dir, "z.txt", "bad line\ngood line\n");
        let scamp = write_tmp(
            &dir,
            "s.jsonl",
            concat!(r#"{"good":"g","bad":"b","category":"c","id":"i"}"#, "\n"),
        );
        for pairs in [
            read_blimp_jsonl(&blimp).unwrap(),
            read_zorro_txt(&zorro, false).unwrap(),
            read_scamp_jsonl(&scamp).unwrap(),
        ] {
            let p = dir.path().join("native.jsonl");
            write_pairs_jsonl(&p, &pairs).unwrap();
            let once = read_pairs_jsonl(&p).unwrap();
            assert_eq!(once, pairs);
            write_pairs_jsonl(&p, &once).unwrap();
            assert_eq!(read_pairs_jsonl(&p).unwrap(), once);
        }
    }

    #[test]
    fn missing_file_and_empty_file_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            read_pairs_jsonl(&dir.path().join("nope.jsonl")),
            Err(AdapterError::Io { .. })
        ));
        let p = write_tmp(&dir, "empty.jsonl", "\n\n");
        assert!(matches!(
            read_pairs_jsonl(&p),
            Err(AdapterError::EmptyFile { .. })
        ));
    }
}
