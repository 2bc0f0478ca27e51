use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};
use posh_core::dyck::DyckConfig;
use posh_eval::Norm;

use posh_cli::{bench_cmd, corpus_cmd, dyck_cmd, eval_cmd, recipe, tok_cmd, train_cmd};

#[derive(Parser)]
#[command(
    name = "posh",
    version,
    about = "Corpus surgery, minimal-pair benchmarks, and small transformer runs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Filter, inject, or sample a parsed corpus.
    Corpus {
        #[command(subcommand)]
        cmd: CorpusCmd,
    },
    /// Generate, adapt, or audit minimal-pair benchmarks.
    Bench {
        #[command(subcommand)]
        cmd: BenchCmd,
    },
    /// Sample shuffled bracket-language strings.
    Dyck(DyckArgs),
    /// Train or apply a byte-pair tokenizer.
    Tok {
        #[command(subcommand)]
        cmd: TokCmd,
    },
    /// Train a model from a config file.
    Train(TrainArgs),
    /// Score a benchmark with one or more trained models.
    Eval(EvalArgs),
    /// Run an experiment recipe end to end.
    Run(RunArgs),
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Split a corpus into kept and removed halves by evidence filters.
    Filter {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        kept: PathBuf,
        #[arg(long)]
        removed: PathBuf,
        /// Comma list: qf, binding, or all.
        #[arg(long, default_value = "all")]
        phenomena: String,
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Replace sentences with evidence sentences at fixed rates.
    Inject {
        #[arg(long)]
        base: PathBuf,
        /// Evidence pool per phenomenon, as qf=PATH or binding=PATH.
        #[arg(long = "pool", value_parser = parse_key_path)]
        pools: Vec<(String, PathBuf)>,
        /// Replacement rate per phenomenon, as qf=0.01.
        #[arg(long = "rate", value_parser = parse_key_rate)]
        rates: Vec<(String, f64)>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw random sentences matching a trigger predicate for hand review.
    Sample {
        #[arg(long)]
        input: PathBuf,
        /// interrogative, qf-evidence, binding-evidence, qf-candidate, or
        /// binding-candidate.
        #[arg(long)]
        predicate: String,
        #[arg(short, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Fill templates from a lexicon into minimal pairs.
    Generate {
        #[arg(long)]
        templates: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        /// Pairs per subcategory.
        #[arg(short, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Convert an external benchmark into the native pair format.
    Adapt {
        /// blimp, zorro, or scamp.
        #[arg(long)]
        format: String,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// For zorro: the first line of each pair is the good one.
        #[arg(long)]
        good_first: bool,
    },
    /// Re-verify a pair file against templates, lexicon, and a vocabulary.
    Audit {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DyckArgs {
    #[arg(short, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Number of bracket types.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    len_min: Option<usize>,
    #[arg(long)]
    len_max: Option<usize>,
    #[arg(long)]
    open_prob: Option<f64>,
}

#[derive(Subcommand)]
enum TokCmd {
    /// Learn merges from text corpora.
    Train {
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        size: usize,
        /// Reserve bracket-language tokens for this many bracket types.
        #[arg(long)]
        reserve_brackets: Option<usize>,
        /// Additional reserved tokens.
        #[arg(long = "reserve")]
        extra_reserved: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Count corpus tokens under a trained tokenizer.
    Ctc {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Pick a vocabulary size by cross-corpus token-count agreement.
    Select {
        #[arg(long = "corpus", required = true)]
        corpora: Vec<PathBuf>,
        /// Comma list of candidate sizes.
        #[arg(long, value_parser = parse_usize_list)]
        sizes: SizeList,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// TOML (or JSON) training config.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Directory holding vocab.json and merges.txt.
    #[arg(long)]
    tokenizer: PathBuf,
    /// Bracket-language corpus for pretraining, when the config asks for it.
    #[arg(long)]
    dyck: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint path; {seed} expands over --seeds.
    #[arg(long)]
    model: String,
    #[arg(long)]
    bench: PathBuf,
    #[arg(long)]
    tokenizer: PathBuf,
    /// Comma list of seeds to expand {seed} with.
    #[arg(long, value_parser = parse_u64_list, default_value = "")]
    seeds: SeedList,
    /// Rank pair members by total NLL instead of per-token perplexity.
    #[arg(long)]
    total_nll: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    recipe: PathBuf,
    /// Print the plan without executing anything.
    #[arg(long)]
    dry_run: bool,
}

// Newtypes so clap's value_parser has concrete, Clone-able targets.
#[derive(Clone)]
struct SeedList(Vec<u64>);
#[derive(Clone)]
struct SizeList(Vec<usize>);

fn parse_u64_list(s: &str) -> Result<SeedList, String> {
    if s.trim().is_empty() {
        return Ok(SeedList(Vec::new()));
    }
    s.split(',')
        .map(|p| p.trim().parse::<u64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()
        .map(SeedList)
}

fn parse_usize_list(s: &str) -> Result<SizeList, String> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()
        .map(SizeList)
}

fn parse_key_path(s: &str) -> Result<(String, PathBuf), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("{s:?}: expected KEY=PATH"))?;
    Ok((k.to_string(), PathBuf::from(v)))
}

fn parse_key_rate(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("{s:?}: expected KEY=RATE"))?;
    let rate: f64 = v.parse().map_err(|e| format!("{v:?}: {e}"))?;
    Ok((k.to_string(), rate))
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Corpus { cmd } => run_corpus(cmd),
        Cmd::Bench { cmd } => run_bench(cmd),
        Cmd::Dyck(args) => run_dyck(args),
        Cmd::Tok { cmd } => run_tok(cmd),
        Cmd::Train(args) => run_train(args),
        Cmd::Eval(args) => run_eval(args),
        Cmd::Run(args) => run_recipe(args),
    }
}

fn run_corpus(cmd: CorpusCmd) -> Result<()> {
    match cmd {
        CorpusCmd::Filter {
            input,
            kept,
            removed,
            phenomena,
            stats,
        } => {
            let phenomena = corpus_cmd::parse_phenomena(&phenomena)?;
            let s = corpus_cmd::filter(&input, &kept, &removed, &phenomena, stats.as_deref())?;
            println!(
                "kept {} of {} sentences; removed {} ({} question-formation, {} binding)",
                s.kept, s.input, s.removed, s.question_formation_matches, s.binding_matches
            );
        }
        CorpusCmd::Inject {
            base,
            pools,
            rates,
            seed,
            out,
        } => {
            let pools = keyed_map(pools)?;
            let rates = keyed_map(rates)?;
            let counts = corpus_cmd::inject(&base, &pools, &rates, seed, &out)?;
            for (ph, n) in counts {
                println!("{ph:?}: injected {n}");
            }
        }
        CorpusCmd::Sample {
            input,
            predicate,
            n,
            seed,
            out,
        } => {
            let pred = corpus_cmd::parse_predicate(&predicate)?;
            let (drawn, matched) = corpus_cmd::sample(&input, pred, n, seed, out.as_deref())?;
            eprintln!("drew {drawn} of {matched} matches");
        }
    }
    Ok(())
}

fn keyed_map<V>(entries: Vec<(String, V)>) -> Result<BTreeMap<posh_core::corpus::Phenomenon, V>> {
    use posh_core::corpus::Phenomenon;
    let mut map = BTreeMap::new();
    for (k, v) in entries {
        let ph = match k.as_str() {
            "qf" | "question_formation" => Phenomenon::QuestionFormation,
            "binding" => Phenomenon::Binding,
            other => return Err(anyhow!("unknown phenomenon key {other:?}")),
        };
        map.insert(ph, v);
    }
    Ok(map)
}

fn run_bench(cmd: BenchCmd) -> Result<()> {
    match cmd {
        BenchCmd::Generate {
            templates,
            lexicon,
            n,
            seed,
            out,
            manifest,
        } => {
            let m = bench_cmd::generate(&templates, &lexicon, n, seed, &out, manifest.as_deref())?;
            println!(
                "{} pairs across {} subcategories",
                m.total_pairs,
                m.subcategories.len()
            );
        }
        BenchCmd::Adapt {
            format,
            input,
            out,
            good_first,
        } => {
            let n = bench_cmd::adapt(&format, &input, &out, good_first)?;
            println!("adapted {n} pairs");
        }
        BenchCmd::Audit {
            pairs,
            templates,
            lexicon,
            vocab,
        } => {
            let report = bench_cmd::audit(
                &pairs,
                templates.as_deref(),
                lexicon.as_deref(),
                vocab.as_deref(),
            )?;
            println!(
                "{} pairs, {} checked against templates, {} violations, {} closure gaps",
                report.pairs,
                report.checked_against_template,
                report.template_violations,
                report.closure_gaps
            );
            for d in &report.details {
                println!("  {d}");
            }
            if report.template_violations > 0 || report.closure_gaps > 0 {
                return Err(anyhow!("audit failed"));
            }
        }
    }
    Ok(())
}

fn run_dyck(args: DyckArgs) -> Result<()> {
    let mut cfg = DyckConfig::default();
    if let Some(v) = args.k {
        cfg.k = v;
    }
    if let Some(v) = args.max_depth {
        cfg.max_depth = v;
    }
    if let Some(v) = args.len_min {
        cfg.len_min = v;
    }
    if let Some(v) = args.len_max {
        cfg.len_max = v;
    }
    if let Some(v) = args.open_prob {
        cfg.open_prob = v;
    }
    let n = dyck_cmd::generate(&cfg, args.n, args.seed, &args.out)?;
    println!("wrote {n} strings to {}", args.out.display());
    Ok(())
}

fn run_tok(cmd: TokCmd) -> Result<()> {
    match cmd {
        TokCmd::Train {
            inputs,
            size,
            reserve_brackets,
            extra_reserved,
            out,
        } => {
            let s = tok_cmd::train(&inputs, size, reserve_brackets, &extra_reserved, &out)?;
            println!(
                "vocab {} ({} alphabet, {} merges); corpus is {} tokens",
                s.vocab_len, s.alphabet_size, s.merges, s.corpus_tokens
            );
        }
        TokCmd::Ctc { model, inputs } => {
            let n = tok_cmd::ctc(&model, &inputs)?;
            println!("{n}");
        }
        TokCmd::Select { corpora, sizes, out } => {
            let outcome = tok_cmd::select(&corpora, &sizes.0, out.as_deref())?;
            for row in &outcome.rows {
                println!(
                    "{}: discrepancy {:.4} (ctcs {:?})",
                    row.vocab_size, row.discrepancy, row.ctcs
                );
            }
            println!("chosen: {}", outcome.chosen);
        }
    }
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<()> {
    let cfg = train_cmd::load_train_config(&args.config)?;
    let manifest = train_cmd::run_train(
        &cfg,
        &args.corpus,
        &args.tokenizer,
        args.dyck.as_deref(),
        &args.out,
    )?;
    let last_step = manifest.train_loss.last().map(|&(s, _)| s).unwrap_or(0);
    println!(
        "stopped after step {last_step} ({:?}); best dev loss {}",
        manifest.stopping,
        manifest
            .best_dev
            .map(|(_, v)| format!("{v:.4}"))
            .unwrap_or_else(|| "n/a".into())
    );
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let norm = if args.total_nll {
        Norm::TotalNll
    } else {
        Norm::PerToken
    };
    let summary = eval_cmd::run_eval(
        &args.model,
        &args.bench,
        &args.tokenizer,
        &args.seeds.0,
        norm,
        &args.out,
    )?;
    for (seed, acc) in &summary.per_seed_overall {
        println!("seed {seed}: overall accuracy {acc:.4} on {} pairs", summary.n_pairs);
    }
    if summary.aggregate.is_some() {
        println!("aggregate written to {}", args.out.join("aggregate.json").display());
    }
    Ok(())
}

fn run_recipe(args: RunArgs) -> Result<()> {
    let outcome = recipe::run_recipe(&args.recipe, args.dry_run)?;
    let verb = if args.dry_run { "would run" } else { "ran" };
    for exec in &outcome.executions {
        let status = if exec.cached { "cached" } else { verb };
        println!("{:>9}  {} ({})", status, exec.dir, exec.kind);
    }
    if !args.dry_run {
        println!(
            "provenance written to {}",
            outcome.out_root.join("provenance.json").display()
        );
    }
    Ok(())
}
