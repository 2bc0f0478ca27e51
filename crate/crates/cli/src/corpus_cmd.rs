//! Corpus ablation commands: filter, inject, sample.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use posh_core::corpus::{
    filter_corpus, inject_evidence, sanity_sample, FilterConfig, FilterStats, Phenomenon,
    TriggerPredicate,
};

use crate::ioutil::{read_parsed, write_json_pretty, write_parsed_jsonl};

pub fn parse_phenomena(spec: &str) -> Result<Vec<Phenomenon>> {
    let mut out = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        let ph = match part {
            "qf" | "question_formation" => Phenomenon::QuestionFormation,
            "binding" => Phenomenon::Binding,
            "all" => {
                out = vec![Phenomenon::QuestionFormation, Phenomenon::Binding];
                continue;
            }
            other => bail!("unknown phenomenon {other:?} (expected qf, binding, or all)"),
        };
        if !out.contains(&ph) {
            out.push(ph);
        }
    }
    if out.is_empty() {
        bail!("no phenomena selected");
    }
    Ok(out)
}

pub fn parse_predicate(spec: &str) -> Result<TriggerPredicate> {
    Ok(match spec {
        "interrogative" => TriggerPredicate::Interrogative,
        "qf-evidence" => TriggerPredicate::QuestionFormationEvidence,
        "binding-evidence" => TriggerPredicate::BindingEvidence,
        "qf-candidate" => TriggerPredicate::QuestionFormationCandidate,
        "binding-candidate" => TriggerPredicate::BindingCandidate,
        other => bail!("unknown predicate {other:?}"),
    })
}

/// `corpus filter`: split a parsed corpus into kept and removed files.
pub fn filter(
    input: &Path,
    out_kept: &Path,
    out_removed: &Path,
    phenomena: &[Phenomenon],
    stats_out: Option<&Path>,
) -> Result<FilterStats> {
    let records = read_parsed(input)?;
    let outcome = filter_corpus(records, phenomena, &FilterConfig::default());
    write_parsed_jsonl(out_kept, &outcome.kept)?;
    write_parsed_jsonl(out_removed, &outcome.removed)?;
    if let Some(p) = stats_out {
        write_json_pretty(p, &outcome.stats)?;
    }
    Ok(outcome.stats)
}

/// `corpus inject`: replace sentences with evidence sentences at fixed rates.
pub fn inject(
    base: &Path,
    pools: &BTreeMap<Phenomenon, std::path::PathBuf>,
    rates: &BTreeMap<Phenomenon, f64>,
    seed: u64,
    out: &Path,
) -> Result<BTreeMap<Phenomenon, usize>> {
    let corpus = read_parsed(base)?;
    let mut pool_records = BTreeMap::new();
    for (&ph, path) in pools {
        pool_records.insert(
            ph,
            read_parsed(path).with_context(|| format!("{ph:?} pool"))?,
        );
    }
    let outcome = inject_evidence(
        corpus,
        &pool_records,
        rates,
        seed,
        &FilterConfig::default(),
    )?;
    write_parsed_jsonl(out, &outcome.corpus)?;
    Ok(outcome
        .injected_positions
        .iter()
        .map(|(&ph, v)| (ph, v.len()))
        .collect())
}

/// `corpus sample`: draw trigger-bearing sentences for manual audit.
pub fn sample(
    input: &Path,
    predicate: TriggerPredicate,
    n: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<(usize, usize)> {
    let records = read_parsed(input)?;
    let s = sanity_sample(&records, predicate, n, seed, &FilterConfig::default());
    match out {
        Some(path) => write_parsed_jsonl(path, &s.sentences)?,
        None => {
            for rec in &s.sentences {
                println!("{}\t{}", rec.id, rec.text);
            }
        }
    }
    Ok((s.sentences.len(), s.matched))
}
