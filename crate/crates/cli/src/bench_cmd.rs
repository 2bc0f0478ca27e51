//! Benchmark commands: generate from templates, adapt external suites,
//! audit invariants over a pair file.

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{bail, Context, Result};
use posh_core::templates::{
    check_lexical_closure, generate_benchmark, read_vocab, verify_pair, BenchmarkManifest,
    Lexicon, TemplateSet,
};
use posh_eval::adapters::{
    read_blimp_jsonl, read_pairs_jsonl, read_scamp_jsonl, read_zorro_txt, write_pairs_jsonl,
};

use crate::ioutil::write_json_pretty;

/// `bench generate`: expand templates against the lexicon into a verified
/// pair file.
pub fn generate(
    templates: &Path,
    lexicon: &Path,
    n: usize,
    seed: u64,
    out: &Path,
    manifest_out: Option<&Path>,
) -> Result<BenchmarkManifest> {
    let set = TemplateSet::load(templates).with_context(|| format!("{}", templates.display()))?;
    let lex = Lexicon::load(lexicon).with_context(|| format!("{}", lexicon.display()))?;
    let (pairs, manifest) = generate_benchmark(&set, &lex, n, seed)?;
    write_pairs_jsonl(out, &pairs)?;
    if let Some(p) = manifest_out {
        write_json_pretty(p, &manifest)?;
    }
    Ok(manifest)
}

/// `bench adapt`: convert an external suite into the native pair format.
pub fn adapt(format: &str, input: &Path, out: &Path, good_first: bool) -> Result<usize> {
    let pairs = match format {
        "blimp" => read_blimp_jsonl(input)?,
        "zorro" => read_zorro_txt(input, good_first)?,
        "scamp" => read_scamp_jsonl(input)?,
        other => bail!("unknown benchmark format {other:?} (expected blimp, zorro, or scamp)"),
    };
    write_pairs_jsonl(out, &pairs)?;
    Ok(pairs.len())
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct AuditReport {
    pub pairs: usize,
    pub checked_against_template: usize,
    pub template_violations: usize,
    pub closure_gaps: usize,
    pub details: Vec<String>,
}

/// `bench audit`: re-verify a pair file against its templates and, when a
/// vocabulary file is given, the lexical-closure invariant.
pub fn audit(
    pairs_path: &Path,
    templates: Option<&Path>,
    lexicon: Option<&Path>,
    vocab: Option<&Path>,
) -> Result<AuditReport> {
    let pairs = read_pairs_jsonl(pairs_path)?;
    let mut report = AuditReport {
        pairs: pairs.len(),
        checked_against_template: 0,
        template_violations: 0,
        closure_gaps: 0,
        details: Vec::new(),
    };
    if let (Some(tp), Some(lp)) = (templates, lexicon) {
        let set = TemplateSet::load(tp)?;
        let lex = Lexicon::load(lp)?;
        for (i, pair) in pairs.iter().enumerate() {
            let Some(template) = set.templates.iter().find(|t| t.id == pair.template_id) else {
                continue;
            };
            report.checked_against_template += 1;
            for v in verify_pair(template, pair, &lex) {
                report.template_violations += 1;
                if report.details.len() < 50 {
                    report.details.push(format!("pair {i}: {v}"));
                }
            }
        }
    }
    if let Some(vp) = vocab {
        let file = std::fs::File::open(vp).with_context(|| format!("{}", vp.display()))?;
        let vocab: BTreeSet<String> = read_vocab(std::io::BufReader::new(file))?;
        for gap in check_lexical_closure(&pairs, &vocab) {
            report.closure_gaps += 1;
            if report.details.len() < 50 {
                report
                    .details
                    .push(format!("pair {}: {:?} not in vocab", gap.pair_index, gap.token));
            }
        }
    }
    Ok(report)
}
