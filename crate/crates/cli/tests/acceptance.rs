//! Whole-toolchain acceptance checks, one test per shipped criterion.
//! Every test prints one `acceptance N <name>: PASS` line on success, with
//! its wall time, so a log scan shows the full scorecard. Tolerances and
//! sizes here are contractual; loosening them to get green is never the
//! fix.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use posh_core::corpus::{filter_corpus, FilterConfig, Phenomenon};
use posh_core::dyck::{bracket_vocab, generate_dyck, validate_dyck, DyckConfig};
use posh_core::bpe::{ctc_discrepancy, select_vocab_size, train_bpe};
use posh_core::rng::stream;
use posh_core::synth::{babble_corpus, babble_text};
use posh_core::templates::verify::{check_lexical_closure, verify_pair};
use posh_core::templates::vocab::read_vocab;
use posh_core::{generate_benchmark, Lexicon, MinimalPair, PairPhenomenon, TemplateSet};
use posh_eval::{aggregate_seeds, build_report, EvalReport, PairScore, ScoreOutcome};
use posh_model::config::{AttentionBiasMode, ModelConfig};
use posh_model::fd::check_all;
use posh_model::optim::AdamConfig;
use posh_model::transformer::{recency_bias_row, tree_kl_row, tree_target_row, Batch, Model, IGNORE};
use posh_model::tree::TreeDistanceMatrix;
use posh_model::{SchedulerKind, StopReason, TrainConfig};
use rand::Rng;

use posh_cli::{ioutil, recipe, tok_cmd, train_cmd};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .expect("workspace root")
}

fn pass(n: usize, name: &str, t0: Instant) {
    println!("acceptance {n} {name}: PASS ({:.1}s)", t0.elapsed().as_secs_f64());
}

fn within(t0: Instant, budget: Duration, what: &str) {
    assert!(
        t0.elapsed() < budget,
        "{what} took {:.1}s, budget {:.0}s",
        t0.elapsed().as_secs_f64(),
        budget.as_secs_f64()
    );
}

#[test]
fn acceptance_01_filter_soundness() {
    let t0 = Instant::now();
    let mut corpus = Vec::new();
    let mut evidence_ids = BTreeSet::new();
    let mut distractor_ids = BTreeSet::new();
    for (tag, seed, qf, bind) in [("qf", 101u64, 1.0, 0.0), ("bind", 202, 0.0, 1.0)] {
        for mut rec in babble_corpus(1000, seed, qf, bind) {
            rec.id = format!("{tag}-{}", rec.id);
            evidence_ids.insert(rec.id.clone());
            corpus.push(rec);
        }
    }
    for mut rec in babble_corpus(1000, 303, 0.0, 0.0) {
        rec.id = format!("dx-{}", rec.id);
        distractor_ids.insert(rec.id.clone());
        corpus.push(rec);
    }
    let out = filter_corpus(
        corpus,
        &[Phenomenon::QuestionFormation, Phenomenon::Binding],
        &FilterConfig::default(),
    );
    let removed: BTreeSet<String> = out.removed.iter().map(|r| r.id.clone()).collect();
    let missed: Vec<&String> = evidence_ids.difference(&removed).take(5).collect();
    assert!(
        missed.is_empty(),
        "evidence sentences survived the filter: {missed:?}"
    );
    let fp = distractor_ids.intersection(&removed).count();
    // Over-filtering is acceptable by design; the rate is reported, not bounded.
    println!("filter false positives: {fp}/1000 distractors removed");
    within(t0, Duration::from_secs(10), "filter soundness");
    pass(1, "filter soundness", t0);
}

#[test]
fn acceptance_02_benchmark_generation() {
    let t0 = Instant::now();
    let assets = root().join("assets");
    let set = TemplateSet::load(assets.join("templates.txt")).expect("templates");
    let lex = Lexicon::load(assets.join("lexicon.json")).expect("lexicon");
    let (pairs, manifest) = generate_benchmark(&set, &lex, 500, 7).expect("generate");
    let subcats = set.subcategories();
    assert!(subcats.len() >= 9, "only {} subcategories", subcats.len());
    assert_eq!(manifest.total_pairs, subcats.len() * 500);
    let mut by_cat: BTreeMap<(String, String), usize> = BTreeMap::new();
    for p in &pairs {
        *by_cat
            .entry((p.phenomenon.to_string(), p.subcategory.clone()))
            .or_default() += 1;
    }
    assert_eq!(by_cat.len(), subcats.len());
    for ((ph, sub), n) in &by_cat {
        assert_eq!(*n, 500, "{ph}/{sub} has {n} pairs");
    }
    let by_id: HashMap<&str, _> = set.templates.iter().map(|t| (t.id.as_str(), t)).collect();
    for pair in &pairs {
        let template = by_id[pair.template_id.as_str()];
        let violations = verify_pair(template, pair, &lex);
        assert!(
            violations.is_empty(),
            "{}: {:?} / {:?}: {violations:?}",
            pair.template_id,
            pair.sentence_good,
            pair.sentence_bad
        );
    }
    let vocab_file = std::fs::File::open(assets.join("shared_vocab.txt")).expect("vocab");
    let vocab = read_vocab(BufReader::new(vocab_file)).expect("vocab parse");
    let gaps = check_lexical_closure(&pairs, &vocab);
    assert!(gaps.is_empty(), "closure gaps: {gaps:?}");
    within(t0, Duration::from_secs(30), "benchmark generation");
    pass(2, "benchmark generation", t0);
}

fn grad_cfg() -> ModelConfig {
    ModelConfig {
        hidden_size: 8,
        n_heads: 2,
        n_layers: 2,
        ffn_dim: 16,
        vocab_size: 50,
        context_len: 8,
        dropout_rate: 0.0,
    }
}

fn grad_batch() -> Batch {
    let inputs: Vec<u32> = vec![2, 10, 20, 30, 40, 49, 2, 5, 6, 7, 8, 9];
    let mut targets = Vec::with_capacity(12);
    for row in inputs.chunks(6) {
        targets.extend_from_slice(&row[1..]);
        targets.push(IGNORE);
    }
    Batch {
        b: 2,
        t: 6,
        inputs,
        targets,
        trees: None,
    }
}

fn chain_tree(n: usize) -> TreeDistanceMatrix {
    let mut d = vec![0u16; n * n];
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] = (i as i32 - j as i32).unsigned_abs() as u16;
        }
    }
    TreeDistanceMatrix { n, d }
}

#[test]
fn acceptance_03_gradient_correctness() {
    let t0 = Instant::now();
    let cases = [
        (AttentionBiasMode::None, 0, false),
        (AttentionBiasMode::recency(0.6), 0, false),
        (AttentionBiasMode::recency(0.6), 3, false),
        (AttentionBiasMode::tree_planted(1.0), 0, true),
    ];
    for (mode, epoch, with_tree) in cases {
        let mut model: Model<f64> = Model::init(grad_cfg(), &mut stream(42, "init"));
        let mut b = grad_batch();
        if with_tree {
            let mut t = chain_tree(6);
            for j in 0..6 {
                t.d[j] = posh_model::tree::EXCLUDED;
                t.d[j * 6] = posh_model::tree::EXCLUDED;
            }
            b.trees = Some(vec![t, chain_tree(6)]);
        }
        let report = check_all(&mut model, &b, mode, epoch, 1e-5, 1e-4);
        assert!(
            report.fraction_within() >= 0.99,
            "{mode:?} t={epoch}: {}/{} within tolerance, worst {:?}",
            report.within_tol,
            report.checked,
            report.worst
        );
        assert!(
            report.max_rel < 1e-3,
            "{mode:?} t={epoch}: max relative error {}",
            report.max_rel
        );
    }
    within(t0, Duration::from_secs(120), "gradient check");
    pass(3, "gradient correctness", t0);
}

#[test]
fn acceptance_04_recency_limit_equivalence() {
    let t0 = Instant::now();
    // Third query position, r = 0.6 after one decay step.
    assert_eq!(recency_bias_row(2, 0.6, 1), vec![-1.2, -0.6, 0.0]);

    // 0.6^60 ~ 5e-14, far under the 1e-12 switch-off threshold.
    let model: Model<f64> = Model::init(grad_cfg(), &mut stream(42, "init"));
    let b = grad_batch();
    let vanilla = AttentionBiasMode::None;
    let faded = AttentionBiasMode::recency(0.6);
    let (_, dbg_v) = model.debug_forward(&b, vanilla, 0).expect("forward");
    let (_, dbg_f) = model.debug_forward(&b, faded, 60).expect("forward");
    let logit_gap = dbg_v
        .logits
        .iter()
        .zip(&dbg_f.logits)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(logit_gap < 1e-9, "logit gap {logit_gap}");

    let (_, gv) = model
        .loss_and_grad::<rand::rngs::StdRng>(&b, vanilla, 0, None)
        .expect("grad");
    let (_, gf) = model
        .loss_and_grad::<rand::rngs::StdRng>(&b, faded, 60, None)
        .expect("grad");
    let grad_gap = gv
        .data
        .iter()
        .zip(&gf.data)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(grad_gap < 1e-9, "grad gap {grad_gap}");
    pass(4, "recency limit equivalence", t0);
}

#[test]
fn acceptance_05_tree_planting_loss() {
    let t0 = Instant::now();
    // Three-token chain: distances from the last query are (2, 1, 0).
    let target = tree_target_row::<f64>(&chain_tree(3), 2).expect("in-tree query");
    let raw = [(-2.0f64).exp(), (-1.0f64).exp(), 1.0];
    let z: f64 = raw.iter().sum();
    for (got, want) in target.iter().zip(raw.iter().map(|x| x / z)) {
        assert!((got - want).abs() < 1e-12, "target {got} vs {want}");
    }
    // Zero at the target itself.
    let at_target = tree_kl_row(&target, &target);
    assert!(at_target.abs() <= 1e-10, "KL at target {at_target}");
    // Nonnegative against random attention rows of varied width.
    let mut rng = stream(5, "kl-rand");
    for n in 2..=8usize {
        let target = tree_target_row::<f64>(&chain_tree(n), n - 1).expect("in-tree");
        for _ in 0..50 {
            let raw: Vec<f64> = (0..n).map(|_| (rng.gen::<f64>() * 4.0 - 2.0).exp()).collect();
            let z: f64 = raw.iter().sum();
            let att: Vec<f64> = raw.iter().map(|x| x / z).collect();
            let kl = tree_kl_row(&att, &target);
            assert!(kl >= -1e-12, "negative KL {kl}");
        }
    }
    pass(5, "tree planting loss", t0);
}

#[test]
fn acceptance_06_overfit_sanity() {
    let t0 = Instant::now();
    let tmp = tempfile::tempdir().expect("tempdir");
    let corpus_path = tmp.path().join("corpus.jsonl");
    ioutil::write_parsed_jsonl(&corpus_path, &babble_corpus(200, 55, 0.05, 0.05)).expect("corpus");
    let tok_dir = tmp.path().join("tok");
    tok_cmd::train(&[corpus_path.clone()], 256, None, &[], &tok_dir).expect("tokenizer");
    let cfg = TrainConfig {
        model: ModelConfig {
            hidden_size: 128,
            n_heads: 8,
            n_layers: 2,
            ffn_dim: 512,
            vocab_size: 320,
            context_len: 64,
            dropout_rate: 0.0,
        },
        bias: AttentionBiasMode::None,
        optimizer: AdamConfig::default(),
        lr: 1e-3,
        warmup: 20,
        max_steps: 2000,
        batch_size: 8,
        seq_len: 32,
        eval_interval: 500,
        patience: None,
        train_target: Some(0.1),
        dev_permille: 50,
        scheduler: Some(SchedulerKind::WarmupConstant),
        epochs: None,
        pre_pretrain_steps: None,
        bias_t_start: 0,
        seed: 1234,
    };
    let run_a = tmp.path().join("run-a");
    let manifest = train_cmd::run_train(&cfg, &corpus_path, &tok_dir, None, &run_a).expect("train");
    let (last_step, last_loss) = *manifest.train_loss.last().expect("steps taken");
    assert!(
        last_loss < 0.1,
        "train loss {last_loss} at step {last_step} (stop: {:?})",
        manifest.stopping
    );
    assert!(last_step <= 2000);
    assert_eq!(manifest.stopping, StopReason::TrainTarget);
    within(t0, Duration::from_secs(600), "overfit run");

    // Same seed, fresh directory: byte-identical artifacts.
    let run_b = tmp.path().join("run-b");
    train_cmd::run_train(&cfg, &corpus_path, &tok_dir, None, &run_b).expect("retrain");
    for file in ["manifest.json", "final.ckpt"] {
        let a = std::fs::read(run_a.join(file)).expect(file);
        let b = std::fs::read(run_b.join(file)).expect(file);
        assert!(a == b, "{file} differs between same-seed reruns");
    }
    pass(6, "overfit sanity", t0);
}

fn oracle_pairs(n: usize) -> Vec<MinimalPair> {
    (0..n)
        .map(|i| MinimalPair {
            sentence_good: format!("good {i}"),
            sentence_bad: format!("bad {i}"),
            phenomenon: PairPhenomenon::QuestionFormation,
            subcategory: "s1".into(),
            template_id: "t1".into(),
            slot_fill: BTreeMap::new(),
        })
        .collect()
}

fn oracle_outcome(n: usize, n_correct: usize) -> ScoreOutcome {
    let scores = (0..n)
        .map(|i| {
            let correct = i < n_correct;
            let (g, b) = if correct { (-1.0, -2.0) } else { (-2.0, -1.0) };
            PairScore {
                index: i,
                logprob_good: g * 5.0,
                logprob_bad: b * 5.0,
                tokens_good: 5,
                tokens_bad: 5,
                ppl_good: (-g).exp(),
                ppl_bad: (-b).exp(),
                correct,
                tie: false,
            }
        })
        .collect();
    ScoreOutcome {
        scores,
        problems: Vec::new(),
    }
}

/// Survival function of the 1-dof chi-square at `x`, by brute-force Simpson
/// integration of the density. Independent of the library's implementation.
fn chi2_survival_oracle(x: f64) -> f64 {
    let density = |t: f64| t.powf(-0.5) * (-t / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let (lo, hi, steps) = (x, x + 200.0, 400_000usize);
    let h = (hi - lo) / steps as f64;
    let mut acc = density(lo) + density(hi);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * density(lo + i as f64 * h);
    }
    acc * h / 3.0
}

#[test]
fn acceptance_07_evaluation_oracle() {
    let t0 = Instant::now();
    let pairs = oracle_pairs(500);

    // 300/500 correct: chi2 exactly 20, p near 7.74e-6.
    let report = build_report(&pairs, &oracle_outcome(500, 300)).expect("report");
    let overall = report
        .categories
        .iter()
        .find(|c| c.phenomenon == "overall")
        .expect("overall row");
    assert_eq!(overall.accuracy, 300.0 / 500.0);
    assert_eq!(overall.chi2, 20.0);
    let p_oracle = chi2_survival_oracle(20.0);
    assert!(
        (overall.p_value - p_oracle).abs() < 1e-6,
        "p {} vs oracle {p_oracle}",
        overall.p_value
    );

    // 250/500 correct: exactly chance, p = 1.
    let report = build_report(&pairs, &oracle_outcome(500, 250)).expect("report");
    let overall = report
        .categories
        .iter()
        .find(|c| c.phenomenon == "overall")
        .expect("overall row");
    assert_eq!(overall.accuracy, 0.5);
    assert_eq!(overall.chi2, 0.0);
    assert_eq!(overall.p_value, 1.0);

    // Seed aggregation over accuracies {0.6, 0.7, 0.8}.
    let reports: Vec<EvalReport> = [300, 350, 400]
        .iter()
        .map(|&k| build_report(&pairs, &oracle_outcome(500, k)).expect("report"))
        .collect();
    let agg = aggregate_seeds(&reports).expect("aggregate");
    let overall = agg
        .iter()
        .find(|c| c.phenomenon == "overall")
        .expect("overall aggregate");
    assert!((overall.mean - 0.7).abs() < 1e-12, "mean {}", overall.mean);
    let sd = overall.sd.expect("three seeds");
    assert!((sd - 0.1).abs() < 1e-12, "sd {sd}");
    pass(7, "evaluation oracle", t0);
}

/// Independent acceptor for the shuffled bracket language: per type, closes
/// never outrun opens, every type ends balanced, depth and length stay inside
/// the configured bounds.
fn accepts(tokens: &[&str], cfg: &DyckConfig) -> bool {
    if tokens.len() < cfg.len_min || tokens.len() > cfg.len_max {
        return false;
    }
    let mut depth = vec![0i64; cfg.k];
    for tok in tokens {
        let (kind, idx) = match tok.strip_prefix("<o:") {
            Some(rest) => ('o', rest),
            None => match tok.strip_prefix("<c:") {
                Some(rest) => ('c', rest),
                None => return false,
            },
        };
        let Some(i) = idx
            .strip_suffix('>')
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|&i| i < cfg.k)
        else {
            return false;
        };
        if kind == 'o' {
            depth[i] += 1;
            if depth[i] > cfg.max_depth as i64 {
                return false;
            }
        } else {
            depth[i] -= 1;
            if depth[i] < 0 {
                return false;
            }
        }
    }
    depth.iter().all(|&d| d == 0)
}

#[test]
fn acceptance_08_dyck_validity() {
    let t0 = Instant::now();
    let cfg = DyckConfig::default();
    let strings = generate_dyck(&cfg, 10_000, 99).expect("generate");
    assert_eq!(strings.len(), 10_000);
    for s in &strings {
        let tokens: Vec<&str> = s.split_whitespace().collect();
        assert!(accepts(&tokens, &cfg), "rejected by independent acceptor: {s}");
    }

    let vocab = bracket_vocab(cfg.k);
    let mut rng = stream(9, "mutate");
    let mut rejected = 0usize;
    let samples = 10_000;
    for _ in 0..samples {
        let s = &strings[rng.gen_range(0..strings.len())];
        let mut tokens: Vec<&str> = s.split_whitespace().collect();
        let pos = rng.gen_range(0..tokens.len());
        let replacement = loop {
            let cand = &vocab[rng.gen_range(0..vocab.len())];
            if cand != tokens[pos] {
                break cand;
            }
        };
        tokens[pos] = replacement;
        let mutated = tokens.join(" ");
        if validate_dyck(&mutated, &cfg) {
            // A mutation the library accepts must actually be in the language.
            assert!(
                accepts(&tokens, &cfg),
                "library accepted an invalid mutant: {mutated}"
            );
        } else {
            rejected += 1;
        }
    }
    let rate = rejected as f64 / samples as f64;
    assert!(rate >= 0.999, "only {rate:.4} of mutations rejected");
    pass(8, "dyck validity", t0);
}

#[test]
fn acceptance_09_tokenizer() {
    let t0 = Instant::now();
    let text = babble_text(1_000_000, 77);
    let lines: Vec<String> = text.lines().map(str::to_string).collect();

    // Round-trip identity on 1,000 samples.
    let model = train_bpe(lines.iter(), 2048, &[]).expect("train");
    for line in lines.iter().take(1000) {
        let decoded = model.decode(&model.encode(line));
        assert_eq!(&decoded, line, "round trip changed the text");
    }

    // Corpus token count never rises with vocabulary size.
    let sizes = [8192usize, 32768, 49152, 65536];
    let mut ctcs = Vec::new();
    for &size in &sizes {
        let m = train_bpe(lines.iter(), size, &[]).expect("train");
        ctcs.push(m.corpus_token_count(lines.iter()));
    }
    for pair in ctcs.windows(2) {
        assert!(pair[1] <= pair[0], "CTC rose across sizes: {ctcs:?}");
    }

    // The documented discrepancy metric, recomputed by hand.
    assert_eq!(ctc_discrepancy(&[100, 110]), 0.1);
    assert_eq!(ctc_discrepancy(&[110, 100, 105]), 0.1);

    // Selection returns the argmin of that metric, ties to the smaller size.
    let corpora = vec![
        babble_text(150_000, 7).lines().map(str::to_string).collect::<Vec<_>>(),
        babble_text(80_000, 8).lines().map(str::to_string).collect::<Vec<_>>(),
    ];
    let candidate_sizes = [300usize, 600, 1200];
    let outcome = select_vocab_size(&corpora, &candidate_sizes, &[]).expect("select");
    let mut best = (f64::INFINITY, usize::MAX);
    for row in &outcome.rows {
        let d = ctc_discrepancy(&row.ctcs);
        assert!((d - row.discrepancy).abs() < 1e-12);
        if d < best.0 || (d == best.0 && row.vocab_size < best.1) {
            best = (d, row.vocab_size);
        }
    }
    assert_eq!(outcome.chosen, best.1);
    pass(9, "tokenizer", t0);
}

#[test]
fn acceptance_10_end_to_end_biases() {
    let t0 = Instant::now();
    let root = root();
    let recipe_text =
        std::fs::read_to_string(root.join("recipes/exp3-biases-toy.toml")).expect("recipe");
    let tmp = tempfile::tempdir().expect("tempdir");
    let out_root = tmp.path().join("out");
    let patched = recipe_text
        .replace(
            "out_root = \"runs/exp3\"",
            &format!("out_root = \"{}\"", out_root.display()),
        )
        .replace("\"assets/", &format!("\"{}/assets/", root.display()));
    assert_ne!(patched, recipe_text, "recipe patch did not apply");
    let recipe_path = tmp.path().join("exp3.toml");
    std::fs::write(&recipe_path, patched).expect("write recipe");

    let outcome = recipe::run_recipe(&recipe_path, false).expect("recipe run");
    // 4 shared stages, 3 variants x 3 seeds + 1 control, 10 evals, 1 compare.
    assert_eq!(outcome.executions.len(), 25);

    for variant in ["vanilla", "recency", "dyck"] {
        for seed in [1u64, 2, 3] {
            let report = out_root.join(format!("eval-{variant}-s{seed}/report.json"));
            assert!(report.exists(), "missing {}", report.display());
        }
    }
    let compare = std::fs::read_to_string(out_root.join("compare/compare.txt")).expect("compare");
    for label in ["vanilla", "recency", "dyck-pretrained", "control"] {
        assert!(compare.contains(label), "compare table lacks {label}");
    }

    // The untrained control must sit inside the 99% binomial band around 0.5.
    let control: EvalReport = serde_json::from_str(
        &std::fs::read_to_string(out_root.join("eval-control/report.json")).expect("control"),
    )
    .expect("control report");
    let overall = control
        .categories
        .iter()
        .find(|c| c.phenomenon == "overall")
        .expect("overall row");
    let half_width = 2.5758 * (0.25 / overall.n_items as f64).sqrt();
    assert!(
        (overall.accuracy - 0.5).abs() <= half_width,
        "control accuracy {} outside 0.5 +/- {half_width:.4} (n = {})",
        overall.accuracy,
        overall.n_items
    );
    within(t0, Duration::from_secs(3600), "end-to-end recipe");
    pass(10, "end-to-end biases", t0);
}
