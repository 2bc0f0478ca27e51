//! Declarative experiment recipes: named stages over the library commands,
//! content-addressed caching, and a provenance log.
//!
//! A stage reruns only when its identity hash changes; the hash covers the
//! tool version, the stage kind and resolved parameters, and the bytes of
//! every input file. Upstream changes therefore ripple downstream through
//! the changed intermediate files, never through timestamps.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use posh_core::corpus::Phenomenon;
use posh_core::dyck::DyckConfig;
use posh_core::synth::{babble_corpus, babble_text};
use posh_eval::Norm;
use posh_model::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{bench_cmd, corpus_cmd, dyck_cmd, eval_cmd, tok_cmd, train_cmd};
use crate::ioutil::write_json_pretty;

/// Overrides the recipe's output root when set.
pub const OUT_ROOT_ENV: &str = "POSH_OUT_ROOT";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecipeFile {
    out_root: String,
    #[serde(default)]
    seeds: Vec<u64>,
    #[serde(default, rename = "stage")]
    stages: Vec<toml::Table>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthTextParams {
    chars: usize,
    seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthParsedParams {
    n: usize,
    seed: u64,
    #[serde(default)]
    qf_rate: f64,
    #[serde(default)]
    binding_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilterParams {
    input: String,
    phenomena: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InjectParams {
    input: String,
    pools: BTreeMap<String, String>,
    rates: BTreeMap<String, f64>,
    seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchParams {
    templates: String,
    lexicon: String,
    n: usize,
    seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DyckParams {
    #[serde(default)]
    config: DyckConfig,
    n: usize,
    seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TokParams {
    inputs: Vec<String>,
    size: usize,
    #[serde(default)]
    reserve_brackets: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainParams {
    corpus: String,
    tokenizer: String,
    #[serde(default)]
    dyck: Option<String>,
    config: TrainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalParams {
    model: String,
    bench: String,
    tokenizer: String,
    #[serde(default)]
    total_nll: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareVariant {
    label: String,
    /// Per-seed report path; `{seed}` expands over the recipe's seed list.
    report: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareParams {
    variants: Vec<CompareVariant>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Params {
    SynthText(SynthTextParams),
    SynthParsed(SynthParsedParams),
    Filter(FilterParams),
    Inject(InjectParams),
    Bench(BenchParams),
    Dyck(DyckParams),
    Tok(TokParams),
    Train(TrainParams),
    Eval(EvalParams),
    Compare(CompareParams),
}

#[derive(Debug, Clone)]
struct Stage {
    name: String,
    per_seed: bool,
    params: Params,
}

/// One stage execution (a per-seed stage yields one per seed).
#[derive(Debug, Clone, Serialize)]
pub struct ExecRecord {
    pub stage: String,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub dir: String,
    pub config_hash: String,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<String>,
    pub cached: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
struct Provenance<'a> {
    tool: &'static str,
    version: &'static str,
    recipe: String,
    seeds: &'a [u64],
    executions: &'a [ExecRecord],
}

#[derive(Debug, Deserialize, Serialize)]
struct Stamp {
    hash: String,
}

pub struct RecipeOutcome {
    pub out_root: PathBuf,
    pub executions: Vec<ExecRecord>,
}

fn parse_stage(table: &toml::Table, index: usize) -> Result<Stage> {
    let name = table
        .get("name")
        .and_then(|v| v.as_str())
        .ok_or_else(|| anyhow!("stage {index}: missing name"))?
        .to_string();
    if name.is_empty()
        || !name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
    {
        bail!("stage {name:?}: names must be nonempty [A-Za-z0-9_-]");
    }
    let per_seed = table
        .get("per_seed")
        .map(|v| {
            v.as_bool()
                .ok_or_else(|| anyhow!("stage {name}: per_seed must be a boolean"))
        })
        .transpose()?
        .unwrap_or(false);
    let kind = table
        .get("kind")
        .and_then(|v| v.as_str())
        .ok_or_else(|| anyhow!("stage {name}: missing kind"))?
        .to_string();
    let mut rest = table.clone();
    rest.remove("name");
    rest.remove("per_seed");
    rest.remove("kind");
    let value = toml::Value::Table(rest);
    let params = match kind.as_str() {
        "synth_text" => Params::SynthText(SynthTextParams::deserialize(value)?),
        "synth_parsed" => Params::SynthParsed(SynthParsedParams::deserialize(value)?),
        "filter" => Params::Filter(FilterParams::deserialize(value)?),
        "inject" => Params::Inject(InjectParams::deserialize(value)?),
        "bench" => Params::Bench(BenchParams::deserialize(value)?),
        "dyck" => Params::Dyck(DyckParams::deserialize(value)?),
        "tok" => Params::Tok(TokParams::deserialize(value)?),
        "train" => Params::Train(TrainParams::deserialize(value)?),
        "eval" => Params::Eval(EvalParams::deserialize(value)?),
        "compare" => Params::Compare(CompareParams::deserialize(value)?),
        other => bail!("stage {name}: unknown kind {other:?}"),
    };
    Ok(Stage {
        name,
        per_seed,
        params,
    })
}

impl Params {
    fn kind(&self) -> &'static str {
        match self {
            Params::SynthText(_) => "synth_text",
            Params::SynthParsed(_) => "synth_parsed",
            Params::Filter(_) => "filter",
            Params::Inject(_) => "inject",
            Params::Bench(_) => "bench",
            Params::Dyck(_) => "dyck",
            Params::Tok(_) => "tok",
            Params::Train(_) => "train",
            Params::Eval(_) => "eval",
            Params::Compare(_) => "compare",
        }
    }

    /// Paths of strings the stage reads, before resolution.
    fn raw_inputs(&self) -> Vec<String> {
        match self {
            Params::SynthText(_) | Params::SynthParsed(_) | Params::Dyck(_) => Vec::new(),
            Params::Filter(p) => vec![p.input.clone()],
            Params::Inject(p) => {
                let mut v = vec![p.input.clone()];
                v.extend(p.pools.values().cloned());
                v
            }
            Params::Bench(p) => vec![p.templates.clone(), p.lexicon.clone()],
            Params::Tok(p) => p.inputs.clone(),
            Params::Train(p) => {
                let mut v = vec![
                    p.corpus.clone(),
                    format!("{}/vocab.json", p.tokenizer),
                    format!("{}/merges.txt", p.tokenizer),
                ];
                if let Some(d) = &p.dyck {
                    v.push(d.clone());
                }
                v
            }
            Params::Eval(p) => vec![
                p.model.clone(),
                p.bench.clone(),
                format!("{}/vocab.json", p.tokenizer),
                format!("{}/merges.txt", p.tokenizer),
            ],
            Params::Compare(_) => Vec::new(), // expanded separately over seeds
        }
    }

    fn outputs(&self) -> Vec<&'static str> {
        match self {
            Params::SynthText(_) => vec!["corpus.txt"],
            Params::SynthParsed(_) => vec!["corpus.jsonl"],
            Params::Filter(_) => vec!["kept.jsonl", "removed.jsonl", "stats.json"],
            Params::Inject(_) => vec!["corpus.jsonl"],
            Params::Bench(_) => vec!["pairs.jsonl", "manifest.json"],
            Params::Dyck(_) => vec!["dyck.txt"],
            Params::Tok(_) => vec!["vocab.json", "merges.txt"],
            Params::Train(_) => vec!["manifest.json", "final.ckpt"],
            Params::Eval(_) => vec!["report.json", "report.txt", "items.csv"],
            Params::Compare(_) => vec!["compare.json", "compare.txt"],
        }
    }
}

fn substitute(s: &str, out_root: &Path, seed: Option<u64>) -> Result<String> {
    let mut out = s.replace("{out}", &out_root.to_string_lossy());
    if out.contains("{seed}") {
        match seed {
            Some(v) => out = out.replace("{seed}", &v.to_string()),
            None => bail!("{s:?} uses {{seed}} outside a per-seed stage"),
        }
    }
    Ok(out)
}

fn resolve_params(p: &Params, out_root: &Path, seed: Option<u64>) -> Result<Params> {
    let sub = |s: &str| substitute(s, out_root, seed);
    Ok(match p {
        Params::SynthText(_) | Params::SynthParsed(_) | Params::Dyck(_) => p.clone(),
        Params::Filter(x) => Params::Filter(FilterParams {
            input: sub(&x.input)?,
            phenomena: x.phenomena.clone(),
        }),
        Params::Inject(x) => {
            let mut pools = BTreeMap::new();
            for (k, v) in &x.pools {
                pools.insert(k.clone(), sub(v)?);
            }
            Params::Inject(InjectParams {
                input: sub(&x.input)?,
                pools,
                rates: x.rates.clone(),
                seed: x.seed,
            })
        }
        Params::Bench(x) => Params::Bench(BenchParams {
            templates: sub(&x.templates)?,
            lexicon: sub(&x.lexicon)?,
            n: x.n,
            seed: x.seed,
        }),
        Params::Tok(x) => Params::Tok(TokParams {
            inputs: x.inputs.iter().map(|s| sub(s)).collect::<Result<_>>()?,
            size: x.size,
            reserve_brackets: x.reserve_brackets,
        }),
        Params::Train(x) => {
            let mut config = x.config.clone();
            if let Some(s) = seed {
                config.seed = s;
            }
            Params::Train(TrainParams {
                corpus: sub(&x.corpus)?,
                tokenizer: sub(&x.tokenizer)?,
                dyck: x.dyck.as_deref().map(sub).transpose()?,
                config,
            })
        }
        Params::Eval(x) => Params::Eval(EvalParams {
            model: sub(&x.model)?,
            bench: sub(&x.bench)?,
            tokenizer: sub(&x.tokenizer)?,
            total_nll: x.total_nll,
        }),
        Params::Compare(x) => Params::Compare(CompareParams {
            variants: x.variants.clone(), // report patterns keep {seed}
        }),
    })
}

fn compare_report_paths(
    p: &CompareParams,
    out_root: &Path,
    seeds: &[u64],
) -> Result<Vec<(String, Vec<PathBuf>)>> {
    let mut variants = Vec::new();
    for v in &p.variants {
        let mut reports = Vec::new();
        if v.report.contains("{seed}") {
            for &s in seeds {
                reports.push(PathBuf::from(substitute(&v.report, out_root, Some(s))?));
            }
        } else {
            reports.push(PathBuf::from(substitute(&v.report, out_root, None)?));
        }
        variants.push((v.label.clone(), reports));
    }
    Ok(variants)
}

fn sha_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex_string(&h.finalize())
}

fn hex_string(digest: &[u8]) -> String {
    let mut s = String::with_capacity(digest.len() * 2);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

fn hash_inputs(paths: &[String]) -> Result<Vec<InputRecord>> {
    let mut records = Vec::new();
    for p in paths {
        let bytes =
            std::fs::read(p).with_context(|| format!("missing input {p}"))?;
        records.push(InputRecord {
            path: p.clone(),
            sha256: sha_hex(&bytes),
        });
    }
    Ok(records)
}

fn identity_hash(params: &Params, seed: Option<u64>, inputs: &[InputRecord]) -> String {
    let mut h = Sha256::new();
    h.update(env!("CARGO_PKG_VERSION").as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(params).expect("params serialize"));
    h.update([0]);
    if let Some(s) = seed {
        h.update(s.to_le_bytes());
    }
    h.update([0]);
    for rec in inputs {
        h.update(rec.path.as_bytes());
        h.update([0]);
        h.update(rec.sha256.as_bytes());
        h.update([0]);
    }
    hex_string(&h.finalize())
}

fn parse_rate_key(key: &str) -> Result<Phenomenon> {
    Ok(match key {
        "qf" | "question_formation" => Phenomenon::QuestionFormation,
        "binding" => Phenomenon::Binding,
        other => bail!("unknown phenomenon key {other:?}"),
    })
}

fn execute(params: &Params, dir: &Path, out_root: &Path, seeds: &[u64]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    match params {
        Params::SynthText(p) => {
            let text = babble_text(p.chars, p.seed);
            std::fs::write(dir.join("corpus.txt"), text)?;
        }
        Params::SynthParsed(p) => {
            let records = babble_corpus(p.n, p.seed, p.qf_rate, p.binding_rate);
            crate::ioutil::write_parsed_jsonl(&dir.join("corpus.jsonl"), &records)?;
        }
        Params::Filter(p) => {
            let phenomena = corpus_cmd::parse_phenomena(&p.phenomena)?;
            corpus_cmd::filter(
                Path::new(&p.input),
                &dir.join("kept.jsonl"),
                &dir.join("removed.jsonl"),
                &phenomena,
                Some(&dir.join("stats.json")),
            )?;
        }
        Params::Inject(p) => {
            let mut pools = BTreeMap::new();
            for (k, v) in &p.pools {
                pools.insert(parse_rate_key(k)?, PathBuf::from(v));
            }
            let mut rates = BTreeMap::new();
            for (k, v) in &p.rates {
                rates.insert(parse_rate_key(k)?, *v);
            }
            corpus_cmd::inject(
                Path::new(&p.input),
                &pools,
                &rates,
                p.seed,
                &dir.join("corpus.jsonl"),
            )?;
        }
        Params::Bench(p) => {
            bench_cmd::generate(
                Path::new(&p.templates),
                Path::new(&p.lexicon),
                p.n,
                p.seed,
                &dir.join("pairs.jsonl"),
                Some(&dir.join("manifest.json")),
            )?;
        }
        Params::Dyck(p) => {
            dyck_cmd::generate(&p.config, p.n, p.seed, &dir.join("dyck.txt"))?;
        }
        Params::Tok(p) => {
            let inputs: Vec<PathBuf> = p.inputs.iter().map(PathBuf::from).collect();
            tok_cmd::train(&inputs, p.size, p.reserve_brackets, &[], dir)?;
        }
        Params::Train(p) => {
            train_cmd::run_train(
                &p.config,
                Path::new(&p.corpus),
                Path::new(&p.tokenizer),
                p.dyck.as_deref().map(Path::new),
                dir,
            )?;
        }
        Params::Eval(p) => {
            let norm = if p.total_nll { Norm::TotalNll } else { Norm::PerToken };
            // One already-resolved model per execution; seed naming is the
            // stage directory's job here, not the eval layer's.
            eval_cmd::run_eval(
                &p.model,
                Path::new(&p.bench),
                Path::new(&p.tokenizer),
                &[],
                norm,
                dir,
            )?;
        }
        Params::Compare(p) => {
            let variants = compare_report_paths(p, out_root, seeds)?;
            eval_cmd::compare(&variants, &dir.join("compare.json"), &dir.join("compare.txt"))?;
        }
    }
    Ok(())
}

/// Executes (or plans, under `dry_run`) every stage of a recipe in file
/// order. Cached executions are skipped; the provenance log is rewritten
/// either way.
pub fn run_recipe(path: &Path, dry_run: bool) -> Result<RecipeOutcome> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("read {}", path.display()))?;
    let recipe: RecipeFile =
        toml::from_str(&text).with_context(|| format!("parse {}", path.display()))?;
    let out_root = match std::env::var_os(OUT_ROOT_ENV) {
        Some(v) => PathBuf::from(v),
        None => PathBuf::from(&recipe.out_root),
    };
    let mut stages = Vec::new();
    for (i, table) in recipe.stages.iter().enumerate() {
        let stage = parse_stage(table, i)?;
        if stages.iter().any(|s: &Stage| s.name == stage.name) {
            bail!("stage {}: duplicate name", stage.name);
        }
        if stage.per_seed && recipe.seeds.is_empty() {
            bail!("stage {}: per_seed with an empty seed list", stage.name);
        }
        stages.push(stage);
    }
    let mut executions: Vec<ExecRecord> = Vec::new();
    for stage in &stages {
        let seed_slots: Vec<Option<u64>> = if stage.per_seed {
            recipe.seeds.iter().map(|&s| Some(s)).collect()
        } else {
            vec![None]
        };
        for seed in seed_slots {
            let dir_name = match seed {
                Some(s) => format!("{}-s{s}", stage.name),
                None => stage.name.clone(),
            };
            let dir = out_root.join(&dir_name);
            let step = || -> Result<ExecRecord> {
                let resolved = resolve_params(&stage.params, &out_root, seed)?;
                let mut raw_inputs = resolved.raw_inputs();
                if let Params::Compare(p) = &resolved {
                    for (_, reports) in compare_report_paths(p, &out_root, &recipe.seeds)? {
                        raw_inputs
                            .extend(reports.iter().map(|p| p.to_string_lossy().into_owned()));
                    }
                }
                if dry_run {
                    let ready = raw_inputs.iter().all(|p| Path::new(p).exists());
                    let inputs = if ready {
                        hash_inputs(&raw_inputs)?
                    } else {
                        Vec::new()
                    };
                    let hash = identity_hash(&resolved, seed, &inputs);
                    let cached = ready && stamp_matches(&dir, &hash, &resolved);
                    return Ok(ExecRecord {
                        stage: stage.name.clone(),
                        kind: resolved.kind().into(),
                        seed,
                        dir: dir_name.clone(),
                        config_hash: hash,
                        inputs,
                        outputs: resolved.outputs().iter().map(|s| s.to_string()).collect(),
                        cached,
                    });
                }
                let inputs = hash_inputs(&raw_inputs)?;
                let hash = identity_hash(&resolved, seed, &inputs);
                let cached = stamp_matches(&dir, &hash, &resolved);
                if !cached {
                    execute(&resolved, &dir, &out_root, &recipe.seeds)?;
                    let missing: Vec<&str> = resolved
                        .outputs()
                        .iter()
                        .copied()
                        .filter(|o| !dir.join(o).exists())
                        .collect();
                    if !missing.is_empty() {
                        bail!("outputs not produced: {}", missing.join(", "));
                    }
                    write_json_pretty(&dir.join(".stamp.json"), &Stamp { hash: hash.clone() })?;
                }
                Ok(ExecRecord {
                    stage: stage.name.clone(),
                    kind: resolved.kind().into(),
                    seed,
                    dir: dir_name.clone(),
                    config_hash: hash,
                    inputs,
                    outputs: resolved.outputs().iter().map(|s| s.to_string()).collect(),
                    cached,
                })
            };
            let record = step().with_context(|| format!("stage {}", stage.name))?;
            executions.push(record);
        }
    }
    if !dry_run {
        std::fs::create_dir_all(&out_root)?;
        let prov = Provenance {
            tool: "posh",
            version: env!("CARGO_PKG_VERSION"),
            recipe: path.display().to_string(),
            seeds: &recipe.seeds,
            executions: &executions,
        };
        write_json_pretty(&out_root.join("provenance.json"), &prov)?;
    }
    Ok(RecipeOutcome {
        out_root,
        executions,
    })
}

fn stamp_matches(dir: &Path, hash: &str, params: &Params) -> bool {
    let Ok(text) = std::fs::read_to_string(dir.join(".stamp.json")) else {
        return false;
    };
    let Ok(stamp) = serde_json::from_str::<Stamp>(&text) else {
        return false;
    };
    stamp.hash == hash && params.outputs().iter().all(|o| dir.join(o).exists())
}
