//! Accuracy tables: per-subcategory and per-phenomenon rows, significance
//! against chance, multi-seed aggregation, and the three output formats
//! (JSON, aligned text, item-level CSV).

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use posh_core::stats::{chi2_vs_chance, mean_sd, significance_stars, StatsError};
use posh_core::templates::MinimalPair;

use crate::score::{PairScore, ScoreOutcome};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("stats: {0}")]
    Stats(#[from] StatsError),
    #[error("no results to report")]
    Empty,
    #[error("unknown report format {0:?}")]
    UnknownFormat(String),
    #[error("seed {seed} is missing category {category:?}")]
    CategoryMismatch { seed: usize, category: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// One benchmark slice: a subcategory row or a phenomenon rollup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryResult {
    pub phenomenon: String,
    /// None marks a phenomenon-level rollup.
    pub subcategory: Option<String>,
    pub n_items: usize,
    pub n_correct: usize,
    pub n_ties: usize,
    /// Pairs dropped for tokenization problems; not part of n_items.
    pub n_excluded: usize,
    pub accuracy: f64,
    pub chi2: f64,
    pub p_value: f64,
    pub stars: String,
}

fn make_result(
    phenomenon: &str,
    subcategory: Option<&str>,
    scores: &[&PairScore],
    excluded: usize,
) -> Result<CategoryResult, ReportError> {
    let n_items = scores.len();
    let n_correct = scores.iter().filter(|s| s.correct).count();
    let n_ties = scores.iter().filter(|s| s.tie).count();
    let (chi2, p_value) = chi2_vs_chance(n_correct, n_items)?;
    Ok(CategoryResult {
        phenomenon: phenomenon.to_string(),
        subcategory: subcategory.map(str::to_string),
        n_items,
        n_correct,
        n_ties,
        n_excluded: excluded,
        accuracy: n_correct as f64 / n_items as f64,
        chi2,
        p_value,
        stars: significance_stars(p_value).to_string(),
    })
}

/// Per-seed evaluation report over one benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Subcategory rows, then phenomenon rollups, then one overall row.
    pub categories: Vec<CategoryResult>,
    pub n_pairs: usize,
    pub n_excluded: usize,
    pub warnings: Vec<String>,
}

/// Builds the report for one scored benchmark. Pairs and scores correspond
/// through `PairScore::index`.
pub fn build_report(pairs: &[MinimalPair], outcome: &ScoreOutcome) -> Result<EvalReport, ReportError> {
    if outcome.scores.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut by_sub: BTreeMap<(String, String), Vec<&PairScore>> = BTreeMap::new();
    let mut by_phen: BTreeMap<String, Vec<&PairScore>> = BTreeMap::new();
    let mut all: Vec<&PairScore> = Vec::new();
    for s in &outcome.scores {
        let pair = &pairs[s.index];
        by_sub
            .entry((pair.phenomenon.to_string(), pair.subcategory.clone()))
            .or_default()
            .push(s);
        by_phen.entry(pair.phenomenon.to_string()).or_default().push(s);
        all.push(s);
    }
    let mut excluded_sub: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut excluded_phen: BTreeMap<String, usize> = BTreeMap::new();
    for p in &outcome.problems {
        let pair = &pairs[p.index];
        *excluded_sub
            .entry((pair.phenomenon.to_string(), pair.subcategory.clone()))
            .or_default() += 1;
        *excluded_phen.entry(pair.phenomenon.to_string()).or_default() += 1;
    }
    let mut categories = Vec::new();
    for ((phen, sub), scores) in &by_sub {
        let excl = excluded_sub.get(&(phen.clone(), sub.clone())).copied().unwrap_or(0);
        categories.push(make_result(phen, Some(sub), scores, excl)?);
    }
    for (phen, scores) in &by_phen {
        let excl = excluded_phen.get(phen).copied().unwrap_or(0);
        categories.push(make_result(phen, None, scores, excl)?);
    }
    categories.push(make_result("overall", None, &all, outcome.problems.len())?);
    let warnings = if outcome.problems.is_empty() {
        Vec::new()
    } else {
        vec![format!(
            "{} pair(s) excluded for tokenization problems",
            outcome.problems.len()
        )]
    };
    Ok(EvalReport {
        categories,
        n_pairs: outcome.scores.len() + outcome.problems.len(),
        n_excluded: outcome.problems.len(),
        warnings,
    })
}

/// Multi-seed aggregate for one category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCategory {
    pub phenomenon: String,
    pub subcategory: Option<String>,
    pub per_seed_accuracy: Vec<f64>,
    pub per_seed_p: Vec<f64>,
    pub mean: f64,
    /// Sample SD (n - 1); null for a single seed.
    pub sd: Option<f64>,
}

/// Combines per-seed reports category by category. Tests against chance
/// stay within seeds; only accuracies are averaged.
pub fn aggregate_seeds(reports: &[EvalReport]) -> Result<Vec<AggregateCategory>, ReportError> {
    let first = reports.first().ok_or(ReportError::Empty)?;
    let key = |c: &CategoryResult| (c.phenomenon.clone(), c.subcategory.clone());
    let reference: Vec<(String, Option<String>)> = first.categories.iter().map(key).collect();
    for (seed, rep) in reports.iter().enumerate().skip(1) {
        let got: Vec<(String, Option<String>)> = rep.categories.iter().map(key).collect();
        if got != reference {
            let missing = reference
                .iter()
                .find(|k| !got.contains(k))
                .or_else(|| got.iter().find(|k| !reference.contains(k)))
                .expect("sets differ");
            return Err(ReportError::CategoryMismatch {
                seed,
                category: format!("{}/{}", missing.0, missing.1.as_deref().unwrap_or("-")),
            });
        }
    }
    let mut out = Vec::new();
    for (i, (phen, sub)) in reference.into_iter().enumerate() {
        let accs: Vec<f64> = reports.iter().map(|r| r.categories[i].accuracy).collect();
        let ps: Vec<f64> = reports.iter().map(|r| r.categories[i].p_value).collect();
        let ms = mean_sd(&accs)?;
        out.push(AggregateCategory {
            phenomenon: phen,
            subcategory: sub,
            per_seed_accuracy: accs,
            per_seed_p: ps,
            mean: ms.mean,
            sd: ms.sd,
        });
    }
    Ok(out)
}

/// Renders a report in the named format: "json" or "text".
pub fn emit_report(report: &EvalReport, format: &str) -> Result<String, ReportError> {
    if report.categories.is_empty() {
        return Err(ReportError::Empty);
    }
    match format {
        "json" => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            Ok(s)
        }
        "text" => Ok(render_text(report)),
        other => Err(ReportError::UnknownFormat(other.to_string())),
    }
}

fn render_text(report: &EvalReport) -> String {
    let mut rows: Vec<[String; 7]> = vec![[
        "phenomenon".into(),
        "subcategory".into(),
        "n".into(),
        "correct".into(),
        "accuracy".into(),
        "chi2".into(),
        "p".into(),
    ]];
    for c in &report.categories {
        rows.push([
            c.phenomenon.clone(),
            c.subcategory.clone().unwrap_or_else(|| "(all)".into()),
            c.n_items.to_string(),
            c.n_correct.to_string(),
            format!("{:.3}", c.accuracy),
            format!("{:.2}", c.chi2),
            format!("{:.3e}{}", c.p_value, c.stars),
        ]);
    }
    let mut widths = [0usize; 7];
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    for w in &report.warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    out
}

/// Item-level CSV for external statistics.
pub fn export_items_csv(
    pairs: &[MinimalPair],
    outcome: &ScoreOutcome,
    w: impl Write,
) -> Result<(), ReportError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "index",
        "phenomenon",
        "subcategory",
        "template_id",
        "tokens_good",
        "tokens_bad",
        "logprob_good",
        "logprob_bad",
        "ppl_good",
        "ppl_bad",
        "correct",
        "tie",
    ])?;
    for s in &outcome.scores {
        let pair = &pairs[s.index];
        wtr.write_record([
            s.index.to_string(),
            pair.phenomenon.to_string(),
            pair.subcategory.clone(),
            pair.template_id.clone(),
            s.tokens_good.to_string(),
            s.tokens_bad.to_string(),
            format!("{}", s.logprob_good),
            format!("{}", s.logprob_bad),
            format!("{}", s.ppl_good),
            format!("{}", s.ppl_bad),
            s.correct.to_string(),
            s.tie.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
