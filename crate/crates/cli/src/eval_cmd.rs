//! The eval command: score a benchmark with one or more trained models,
//! report per-seed results, aggregate across seeds, compare variants.

use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use posh_core::bpe::BpeModel;
use posh_eval::adapters::read_pairs_jsonl;
use posh_eval::{
    aggregate_seeds, build_report, emit_report, export_items_csv, score_pairs, AggregateCategory,
    EvalReport, Norm, ScoreConfig,
};
use posh_model::{load_checkpoint_f64, Model};
use serde::{Deserialize, Serialize};

use crate::ioutil::write_json_pretty;

/// Substitutes `{seed}`, yielding one model path per seed; a literal path
/// stands for a single model.
pub fn expand_model_paths(pattern: &str, seeds: &[u64]) -> Result<Vec<(u64, PathBuf)>> {
    if pattern.contains("{seed}") {
        Ok(seeds
            .iter()
            .map(|&s| (s, PathBuf::from(pattern.replace("{seed}", &s.to_string()))))
            .collect())
    } else if seeds.len() <= 1 {
        let seed = seeds.first().copied().unwrap_or(0);
        Ok(vec![(seed, PathBuf::from(pattern))])
    } else {
        bail!("several seeds but the model path has no {{seed}} placeholder: {pattern}")
    }
}

fn score_one(
    model_path: &Path,
    tok: &BpeModel,
    pairs: &[posh_core::templates::MinimalPair],
    norm: Norm,
) -> Result<(EvalReport, posh_eval::ScoreOutcome)> {
    let (meta, params) = load_checkpoint_f64(model_path)
        .with_context(|| format!("load {}", model_path.display()))?;
    let model = Model::new(meta.config, params);
    let cfg = ScoreConfig {
        norm,
        ..ScoreConfig::default()
    };
    let outcome = score_pairs(&model, tok, pairs, &cfg)?;
    let report = build_report(pairs, &outcome)?;
    Ok((report, outcome))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n_pairs: usize,
    pub per_seed_overall: Vec<(u64, f64)>,
    pub aggregate: Option<Vec<AggregateCategory>>,
}

/// `eval`: score the benchmark with each seed's model, write per-seed
/// reports plus item CSVs into `out_dir`, and aggregate when there are
/// several seeds.
pub fn run_eval(
    model_pattern: &str,
    bench: &Path,
    tokenizer: &Path,
    seeds: &[u64],
    norm: Norm,
    out_dir: &Path,
) -> Result<EvalSummary> {
    let tok = BpeModel::load(tokenizer).with_context(|| format!("{}", tokenizer.display()))?;
    let pairs = read_pairs_jsonl(bench)?;
    std::fs::create_dir_all(out_dir)?;
    let models = expand_model_paths(model_pattern, seeds)?;
    let mut reports = Vec::new();
    let mut per_seed_overall = Vec::new();
    for (seed, path) in &models {
        let (report, outcome) = score_one(path, &tok, &pairs, norm)?;
        let tag = if models.len() == 1 {
            String::new()
        } else {
            format!("-s{seed}")
        };
        std::fs::write(
            out_dir.join(format!("report{tag}.json")),
            emit_report(&report, "json")?,
        )?;
        std::fs::write(
            out_dir.join(format!("report{tag}.txt")),
            emit_report(&report, "text")?,
        )?;
        let csv = File::create(out_dir.join(format!("items{tag}.csv")))?;
        export_items_csv(&pairs, &outcome, csv)?;
        let overall = report.categories.last().expect("overall row").accuracy;
        per_seed_overall.push((*seed, overall));
        reports.push(report);
    }
    let aggregate = if reports.len() > 1 {
        let agg = aggregate_seeds(&reports)?;
        write_json_pretty(&out_dir.join("aggregate.json"), &agg)?;
        Some(agg)
    } else {
        None
    };
    Ok(EvalSummary {
        n_pairs: pairs.len(),
        per_seed_overall,
        aggregate,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantAggregate {
    pub label: String,
    pub categories: Vec<AggregateCategory>,
}

/// Joins per-seed reports of several training variants into one
/// comparative table (JSON plus aligned text).
pub fn compare(
    variants: &[(String, Vec<PathBuf>)],
    out_json: &Path,
    out_text: &Path,
) -> Result<Vec<VariantAggregate>> {
    if variants.is_empty() {
        bail!("nothing to compare");
    }
    let mut rows = Vec::new();
    for (label, report_paths) in variants {
        let mut reports = Vec::new();
        for p in report_paths {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("read {}", p.display()))?;
            reports.push(serde_json::from_str::<EvalReport>(&text)?);
        }
        if reports.is_empty() {
            bail!("variant {label}: no reports");
        }
        rows.push(VariantAggregate {
            label: label.clone(),
            categories: aggregate_seeds(&reports)?,
        });
    }
    for v in &rows[1..] {
        let same = v.categories.len() == rows[0].categories.len()
            && v
                .categories
                .iter()
                .zip(&rows[0].categories)
                .all(|(a, b)| a.phenomenon == b.phenomenon && a.subcategory == b.subcategory);
        if !same {
            bail!(
                "variant {} was scored on a different benchmark than {}",
                v.label,
                rows[0].label
            );
        }
    }
    write_json_pretty(out_json, &rows)?;
    std::fs::write(out_text, render_compare(&rows))?;
    Ok(rows)
}

fn render_compare(rows: &[VariantAggregate]) -> String {
    let mut table: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["phenomenon".to_string(), "subcategory".to_string()];
    for v in rows {
        header.push(v.label.clone());
    }
    table.push(header);
    let reference = &rows[0].categories;
    for (i, cat) in reference.iter().enumerate() {
        let mut line = vec![
            cat.phenomenon.clone(),
            cat.subcategory.clone().unwrap_or_else(|| "(all)".into()),
        ];
        for v in rows {
            let c = &v.categories[i];
            let cell = match c.sd {
                Some(sd) => format!("{:.3} ±{:.3}", c.mean, sd),
                None => format!("{:.3}", c.mean),
            };
            line.push(cell);
        }
        table.push(line);
    }
    let cols = table[0].len();
    let mut widths = vec![0usize; cols];
    for row in &table {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for (i, row) in table.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (cols - 1)));
            out.push('\n');
        }
    }
    out
}
