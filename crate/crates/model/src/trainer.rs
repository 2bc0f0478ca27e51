//! Training loops and the run manifest.
//!
//! Reproducibility contract: one seed drives three named streams (init,
//! order, dropout:<step>), every reduction runs on one thread in a fixed
//! order, and the manifest stores no wall-clock and no absolute paths, so a
//! rerun with the same seed writes byte-identical manifests. Timing lives
//! in the meta.json sidecar.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use posh_core::rng::{stream, stream_indexed};

use crate::checkpoint::{save_checkpoint, CheckpointMeta, CkptError};
use crate::config::{AttentionBiasMode, ModelConfig};
use crate::data::{
    fixed_stream_batches, hash_split, hash_split_stream, sample_stream_batch, sentence_batches,
    Sequence,
};
use crate::optim::{AdamConfig, AdamW};
use crate::schedule::LrSchedule;
use crate::transformer::{Batch, Model, ModelError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("checkpoint: {0}")]
    Ckpt(#[from] CkptError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("training stream has {got} tokens, need more than {need}")]
    StreamTooShort { need: usize, got: usize },
    #[error("no sentences to train on")]
    NoSentences,
    #[error("tree-planted training needs sentence batches, not a token stream")]
    TreeNeedsSentences,
    #[error("dev split is empty; lower seq_len or raise dev_permille")]
    DevEmpty,
    #[error("bad config: {0}")]
    BadConfig(String),
}

fn default_eval_interval() -> u64 {
    500
}

fn default_dev_permille() -> u64 {
    10
}

/// Which learning-rate shape to use. Left unset, stream training decays
/// linearly to zero and epochwise training holds the rate constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    WarmupLinearDecay,
    WarmupConstant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub bias: AttentionBiasMode,
    #[serde(default)]
    pub optimizer: AdamConfig,
    pub lr: f64,
    #[serde(default)]
    pub warmup: u64,
    pub max_steps: u64,
    pub batch_size: usize,
    pub seq_len: usize,
    #[serde(default = "default_eval_interval")]
    pub eval_interval: u64,
    /// Steps without a dev improvement before stopping early.
    #[serde(default)]
    pub patience: Option<u64>,
    /// Stop once a step's training loss drops below this.
    #[serde(default)]
    pub train_target: Option<f64>,
    /// Dev fraction in thousandths, keyed by content hash.
    #[serde(default = "default_dev_permille")]
    pub dev_permille: u64,
    #[serde(default)]
    pub scheduler: Option<SchedulerKind>,
    /// Passes over the corpus in epochwise mode.
    #[serde(default)]
    pub epochs: Option<u32>,
    /// Steps of bracket-language pretraining before the main phase.
    #[serde(default)]
    pub pre_pretrain_steps: Option<u64>,
    /// Offset added to the epoch index t that decays the recency bias.
    #[serde(default)]
    pub bias_t_start: u32,
    pub seed: u64,
}

impl TrainConfig {
    /// Invariants: warmup never exceeds max_steps, patience is positive,
    /// and batch shape is nonzero.
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.warmup > self.max_steps {
            return Err(TrainError::BadConfig(format!(
                "warmup {} exceeds max_steps {}",
                self.warmup, self.max_steps
            )));
        }
        if self.patience == Some(0) {
            return Err(TrainError::BadConfig("patience must be positive".into()));
        }
        if self.batch_size == 0 || self.seq_len == 0 {
            return Err(TrainError::BadConfig(
                "batch_size and seq_len must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxSteps,
    EarlyStop,
    EpochsDone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub name: String,
    pub start_step: u64,
    pub end_step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: TrainConfig,
    /// (step, total loss) for every optimizer step taken.
    pub train_loss: Vec<(u64, f64)>,
    /// (step, mean dev loss) at every dev evaluation.
    pub dev_loss: Vec<(u64, f64)>,
    pub stopping: StopReason,
    pub stop_detail: Option<String>,
    /// File names relative to the run directory.
    pub checkpoints: Vec<String>,
    pub phases: Vec<Phase>,
    pub best_dev: Option<(u64, f64)>,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub out_dir: PathBuf,
}

struct Engine {
    cfg: TrainConfig,
    model: Model<f32>,
    opt: AdamW<f32>,
    step: u64,
    train_loss: Vec<(u64, f64)>,
    dev_loss: Vec<(u64, f64)>,
    best: Option<(u64, f64)>,
    checkpoints: Vec<String>,
    phases: Vec<Phase>,
    out_dir: PathBuf,
    order: rand_chacha::ChaCha8Rng,
}

enum PhaseEnd {
    Exhausted,
    Early(String),
}

impl Engine {
    fn new(cfg: &TrainConfig, out_dir: &Path) -> Engine {
        let model = Model::init(cfg.model.clone(), &mut stream(cfg.seed, "init"));
        let n = model.params.data.len();
        Engine {
            cfg: cfg.clone(),
            model,
            opt: AdamW::new(cfg.optimizer, n),
            step: 0,
            train_loss: Vec::new(),
            dev_loss: Vec::new(),
            best: None,
            checkpoints: Vec::new(),
            phases: Vec::new(),
            out_dir: out_dir.to_path_buf(),
            order: stream(cfg.seed, "order"),
        }
    }

    fn epoch_for_bias(&self, tokens_per_step: usize, corpus_tokens: usize, phase_start: u64) -> u32 {
        // Stream phases have no epochs; reuse the decay clock by counting
        // full passes over the phase's corpus.
        let seen = (self.step - phase_start) as u128 * tokens_per_step as u128;
        let passes = (seen / corpus_tokens.max(1) as u128).min(u32::MAX as u128) as u32;
        self.cfg.bias_t_start.saturating_add(passes)
    }

    fn one_step(
        &mut self,
        batch: &Batch,
        lr: f64,
        bias: AttentionBiasMode,
        epoch: u32,
    ) -> Result<f64, TrainError> {
        let mut dropout = stream_indexed(self.cfg.seed, "dropout", self.step);
        let (stats, grads) =
            self.model
                .loss_and_grad(batch, bias, epoch, Some(&mut dropout))?;
        self.opt.step(&mut self.model.params, &grads, lr);
        self.train_loss.push((self.step, stats.total_loss));
        self.step += 1;
        Ok(stats.total_loss)
    }

    fn eval_dev(
        &mut self,
        dev: &[Batch],
        bias: AttentionBiasMode,
        epoch: u32,
    ) -> Result<Option<f64>, TrainError> {
        if dev.is_empty() {
            return Ok(None);
        }
        let mut loss_sum = 0.0;
        let mut n = 0usize;
        for batch in dev {
            let stats = self.model.loss(batch, bias, epoch)?;
            loss_sum += stats.total_loss * stats.n_targets as f64;
            n += stats.n_targets;
        }
        let mean = loss_sum / n as f64;
        self.dev_loss.push((self.step, mean));
        if self.best.map_or(true, |(_, b)| mean < b) {
            self.best = Some((self.step, mean));
            self.save("best.ckpt")?;
        }
        Ok(Some(mean))
    }

    fn save(&mut self, name: &str) -> Result<(), TrainError> {
        let meta = CheckpointMeta {
            config: self.cfg.model.clone(),
            step: self.step,
            epoch: 0,
        };
        save_checkpoint(self.out_dir.join(name), &meta, &self.model.params)?;
        if !self.checkpoints.iter().any(|c| c == name) {
            self.checkpoints.push(name.to_string());
        }
        Ok(())
    }

    fn patience_exceeded(&self) -> bool {
        match (self.cfg.patience, self.best) {
            (Some(p), Some((best_step, _))) => self.step - best_step >= p,
            _ => false,
        }
    }

    /// Runs `steps` stream steps; returns why the phase ended.
    fn stream_phase(
        &mut self,
        name: &str,
        tokens: &[u32],
        dev: &[Batch],
        steps: u64,
        schedule: LrSchedule,
        bias: AttentionBiasMode,
    ) -> Result<PhaseEnd, TrainError> {
        let start = self.step;
        let tokens_per_step = self.cfg.batch_size * self.cfg.seq_len;
        let mut end = PhaseEnd::Exhausted;
        for local in 0..steps {
            let batch = sample_stream_batch(
                tokens,
                self.cfg.batch_size,
                self.cfg.seq_len,
                &mut self.order,
            );
            let epoch = self.epoch_for_bias(tokens_per_step, tokens.len(), start);
            let loss = self.one_step(&batch, schedule.lr_at(local), bias, epoch)?;
            if let Some(target) = self.cfg.train_target {
                if loss < target {
                    end = PhaseEnd::Early("train_target".into());
                    break;
                }
            }
            if self.step % self.cfg.eval_interval == 0 || local + 1 == steps {
                let epoch = self.epoch_for_bias(tokens_per_step, tokens.len(), start);
                self.eval_dev(dev, bias, epoch)?;
                if self.patience_exceeded() {
                    end = PhaseEnd::Early("dev_patience".into());
                    break;
                }
            }
        }
        self.phases.push(Phase {
            name: name.to_string(),
            start_step: start,
            end_step: self.step,
        });
        Ok(end)
    }

    fn finish(
        mut self,
        stopping: StopReason,
        stop_detail: Option<String>,
        started: SystemTime,
    ) -> Result<RunManifest, TrainError> {
        self.save("final.ckpt")?;
        let manifest = RunManifest {
            config: self.cfg.clone(),
            train_loss: self.train_loss,
            dev_loss: self.dev_loss,
            stopping,
            stop_detail,
            checkpoints: self.checkpoints,
            phases: self.phases,
            best_dev: self.best,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.out_dir.join("manifest.json"), text)?;
        let finished = SystemTime::now();
        let secs = |t: SystemTime| {
            t.duration_since(SystemTime::UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0)
        };
        let meta = serde_json::json!({
            "started_unix": secs(started),
            "finished_unix": secs(finished),
            "wall_seconds": secs(finished) - secs(started),
        });
        fs::write(
            self.out_dir.join("meta.json"),
            format!("{}\n", serde_json::to_string_pretty(&meta)?),
        )?;
        Ok(manifest)
    }
}

impl Trainer {
    pub fn new(cfg: TrainConfig, out_dir: impl Into<PathBuf>) -> Trainer {
        Trainer {
            cfg,
            out_dir: out_dir.into(),
        }
    }

    fn check_stream(&self, tokens: &[u32]) -> Result<(), TrainError> {
        if tokens.len() <= self.cfg.seq_len {
            return Err(TrainError::StreamTooShort {
                need: self.cfg.seq_len,
                got: tokens.len(),
            });
        }
        Ok(())
    }

    fn split_stream(&self, tokens: &[u32]) -> Result<(Vec<u32>, Vec<Batch>), TrainError> {
        let (train, dev_tokens) =
            hash_split_stream(tokens, self.cfg.seq_len + 1, self.cfg.dev_permille);
        self.check_stream(&train)?;
        let dev = fixed_stream_batches(&dev_tokens, self.cfg.batch_size, self.cfg.seq_len);
        if dev.is_empty() {
            return Err(TrainError::DevEmpty);
        }
        Ok((train, dev))
    }

    fn stream_schedule(&self) -> LrSchedule {
        match self.cfg.scheduler {
            Some(SchedulerKind::WarmupConstant) => LrSchedule::WarmupConstant {
                lr: self.cfg.lr,
                warmup: self.cfg.warmup,
            },
            _ => LrSchedule::WarmupLinearDecay {
                lr: self.cfg.lr,
                warmup: self.cfg.warmup,
                max_steps: self.cfg.max_steps,
            },
        }
    }

    /// Next-token training on a flat token stream with linear warmup and,
    /// by default, linear decay to zero at max_steps.
    pub fn train_stream(&self, tokens: &[u32]) -> Result<RunManifest, TrainError> {
        self.cfg.validate()?;
        if self.cfg.bias.needs_tree() {
            return Err(TrainError::TreeNeedsSentences);
        }
        let started = SystemTime::now();
        fs::create_dir_all(&self.out_dir)?;
        let (train, dev) = self.split_stream(tokens)?;
        let mut engine = Engine::new(&self.cfg, &self.out_dir);
        let end = engine.stream_phase(
            "main",
            &train,
            &dev,
            self.cfg.max_steps,
            self.stream_schedule(),
            self.cfg.bias,
        )?;
        let (stopping, detail) = match end {
            PhaseEnd::Exhausted => (StopReason::MaxSteps, None),
            PhaseEnd::Early(d) => (StopReason::EarlyStop, Some(d)),
        };
        engine.finish(stopping, detail, started)
    }

    /// Bracket-language pretraining for `pre_pretrain_steps` steps (2000
    /// when unset), an optimizer reset, then the main stream. Zero steps
    /// reduces to plain stream training. The first phase holds the rate
    /// constant, with warmup clipped to a quarter of its steps.
    pub fn pre_pretrain_then_train(
        &self,
        dyck_tokens: &[u32],
        tokens: &[u32],
    ) -> Result<RunManifest, TrainError> {
        self.cfg.validate()?;
        if self.cfg.bias.needs_tree() {
            return Err(TrainError::TreeNeedsSentences);
        }
        let dyck_steps = self.cfg.pre_pretrain_steps.unwrap_or(2000);
        if dyck_steps == 0 {
            return self.train_stream(tokens);
        }
        let started = SystemTime::now();
        fs::create_dir_all(&self.out_dir)?;
        self.check_stream(dyck_tokens)?;
        let (train, dev) = self.split_stream(tokens)?;
        let mut engine = Engine::new(&self.cfg, &self.out_dir);
        let dyck_schedule = LrSchedule::WarmupConstant {
            lr: self.cfg.lr,
            warmup: self.cfg.warmup.min(dyck_steps / 4),
        };
        engine.stream_phase("dyck", dyck_tokens, &[], dyck_steps, dyck_schedule, self.cfg.bias)?;
        engine.opt.reset();
        let end = engine.stream_phase(
            "main",
            &train,
            &dev,
            self.cfg.max_steps,
            self.stream_schedule(),
            self.cfg.bias,
        )?;
        let (stopping, detail) = match end {
            PhaseEnd::Exhausted => (StopReason::MaxSteps, None),
            PhaseEnd::Early(d) => (StopReason::EarlyStop, Some(d)),
        };
        engine.finish(stopping, detail, started)
    }

    /// Whole-sentence training for `cfg.epochs` passes, by default with a
    /// constant rate and no warmup. The bias decay clock t is bias_t_start
    /// plus the 0-based epoch index.
    pub fn train_epochwise(&self, seqs: &[Sequence]) -> Result<RunManifest, TrainError> {
        use rand::seq::SliceRandom;
        self.cfg.validate()?;
        let epochs = match self.cfg.epochs {
            Some(e) if e > 0 => e,
            _ => {
                return Err(TrainError::BadConfig(
                    "epochwise training needs epochs >= 1".into(),
                ))
            }
        };
        let started = SystemTime::now();
        fs::create_dir_all(&self.out_dir)?;
        if seqs.is_empty() {
            return Err(TrainError::NoSentences);
        }
        let with_trees = self.cfg.bias.needs_tree();
        let indices: Vec<usize> = (0..seqs.len()).collect();
        let (train_idx, dev_idx) = hash_split(
            indices,
            |&i| {
                let mut bytes = Vec::with_capacity(seqs[i].ids.len() * 4);
                for id in &seqs[i].ids {
                    bytes.extend_from_slice(&id.to_le_bytes());
                }
                bytes
            },
            self.cfg.dev_permille,
        );
        let train_idx = if train_idx.is_empty() {
            // Degenerate corpora where everything hashed to dev.
            (0..seqs.len()).collect()
        } else {
            train_idx
        };
        let dev = sentence_batches(
            seqs,
            &dev_idx,
            self.cfg.batch_size,
            self.cfg.seq_len,
            posh_core::bpe::PAD_ID,
            with_trees,
        );
        let mut engine = Engine::new(&self.cfg, &self.out_dir);
        let schedule = match self.cfg.scheduler {
            Some(SchedulerKind::WarmupLinearDecay) => LrSchedule::WarmupLinearDecay {
                lr: self.cfg.lr,
                warmup: self.cfg.warmup,
                max_steps: self.cfg.max_steps,
            },
            Some(SchedulerKind::WarmupConstant) => LrSchedule::WarmupConstant {
                lr: self.cfg.lr,
                warmup: self.cfg.warmup,
            },
            None => LrSchedule::WarmupConstant {
                lr: self.cfg.lr,
                warmup: 0,
            },
        };
        let mut stopping = StopReason::EpochsDone;
        let mut detail = None;
        'outer: for epoch in 0..epochs {
            let mut order = train_idx.clone();
            order.shuffle(&mut engine.order);
            let batches = sentence_batches(
                seqs,
                &order,
                self.cfg.batch_size,
                self.cfg.seq_len,
                posh_core::bpe::PAD_ID,
                with_trees,
            );
            let t = self.cfg.bias_t_start.saturating_add(epoch);
            for batch in &batches {
                if engine.step >= self.cfg.max_steps {
                    stopping = StopReason::MaxSteps;
                    break 'outer;
                }
                let loss = engine.one_step(batch, schedule.lr_at(engine.step), self.cfg.bias, t)?;
                if let Some(target) = self.cfg.train_target {
                    if loss < target {
                        stopping = StopReason::EarlyStop;
                        detail = Some("train_target".into());
                        break 'outer;
                    }
                }
                if engine.step % self.cfg.eval_interval == 0 {
                    engine.eval_dev(&dev, self.cfg.bias, t)?;
                    if engine.patience_exceeded() {
                        stopping = StopReason::EarlyStop;
                        detail = Some("dev_patience".into());
                        break 'outer;
                    }
                }
            }
        }
        let t_last = self.cfg.bias_t_start.saturating_add(epochs - 1);
        engine.eval_dev(&dev, self.cfg.bias, t_last)?;
        engine.phases.push(Phase {
            name: "main".into(),
            start_step: 0,
            end_step: engine.step,
        });
        engine.finish(stopping, detail, started)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            model: ModelConfig {
                hidden_size: 16,
                n_heads: 2,
                n_layers: 1,
                ffn_dim: 32,
                vocab_size: 12,
                context_len: 8,
                dropout_rate: 0.0,
            },
            bias: AttentionBiasMode::None,
            optimizer: AdamConfig::default(),
            lr: 1e-2,
            warmup: 5,
            max_steps: 60,
            batch_size: 4,
            seq_len: 8,
            eval_interval: 20,
            patience: None,
            train_target: None,
            dev_permille: 100,
            scheduler: None,
            epochs: None,
            pre_pretrain_steps: None,
            bias_t_start: 0,
            seed,
        }
    }

    fn toy_tokens() -> Vec<u32> {
        // A periodic stream: predictable next tokens.
        (0..4000).map(|i| (i % 12) as u32).collect()
    }

    #[test]
    fn stream_training_learns_and_logs() {
        let dir = tempfile::tempdir().unwrap();
        let tr = Trainer::new(toy_cfg(7), dir.path());
        let m = tr.train_stream(&toy_tokens()).unwrap();
        assert_eq!(m.train_loss.len(), 60);
        assert_eq!(m.stopping, StopReason::MaxSteps);
        let first = m.train_loss[0].1;
        let last = m.train_loss.last().unwrap().1;
        assert!(last < first, "loss {first} -> {last}");
        assert!(!m.dev_loss.is_empty());
        assert!(dir.path().join("final.ckpt").exists());
        assert!(dir.path().join("best.ckpt").exists());
        assert!(dir.path().join("meta.json").exists());
        assert_eq!(m.phases.len(), 1);
        assert_eq!(m.phases[0].end_step, 60);
    }

    #[test]
    fn same_seed_manifests_are_byte_identical() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let tokens = toy_tokens();
        let mut cfg = toy_cfg(11);
        cfg.model.dropout_rate = 0.1;
        cfg.max_steps = 30;
        Trainer::new(cfg.clone(), d1.path()).train_stream(&tokens).unwrap();
        Trainer::new(cfg, d2.path()).train_stream(&tokens).unwrap();
        let m1 = std::fs::read(d1.path().join("manifest.json")).unwrap();
        let m2 = std::fs::read(d2.path().join("manifest.json")).unwrap();
        assert_eq!(m1, m2);
        let c1 = std::fs::read(d1.path().join("final.ckpt")).unwrap();
        let c2 = std::fs::read(d2.path().join("final.ckpt")).unwrap();
        assert_eq!(c1, c2);
        let mut cfg2 = toy_cfg(12);
        cfg2.model.dropout_rate = 0.1;
        cfg2.max_steps = 30;
        let d3 = tempfile::tempdir().unwrap();
        Trainer::new(cfg2, d3.path()).train_stream(&tokens).unwrap();
        let m3 = std::fs::read(d3.path().join("manifest.json")).unwrap();
        assert_ne!(m1, m3);
    }

    #[test]
    fn train_target_stops_early() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = toy_cfg(3);
        cfg.train_target = Some(100.0); // trivially met at step 0
        let m = Trainer::new(cfg, dir.path()).train_stream(&toy_tokens()).unwrap();
        assert_eq!(m.stopping, StopReason::EarlyStop);
        assert_eq!(m.stop_detail.as_deref(), Some("train_target"));
        assert_eq!(m.train_loss.len(), 1);
    }

    #[test]
    fn patience_stops_on_flat_dev() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = toy_cfg(5);
        cfg.lr = 0.0; // nothing improves
        cfg.eval_interval = 5;
        cfg.patience = Some(10);
        cfg.max_steps = 1000;
        let m = Trainer::new(cfg, dir.path()).train_stream(&toy_tokens()).unwrap();
        assert_eq!(m.stopping, StopReason::EarlyStop);
        assert_eq!(m.stop_detail.as_deref(), Some("dev_patience"));
        assert!(m.train_loss.len() < 30);
    }

    #[test]
    fn pre_pretraining_records_phases_and_boundary() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = toy_cfg(9);
        cfg.max_steps = 20;
        cfg.pre_pretrain_steps = Some(15);
        let dyck: Vec<u32> = (0..500).map(|i| (i % 4) as u32).collect();
        let m = Trainer::new(cfg, dir.path())
            .pre_pretrain_then_train(&dyck, &toy_tokens())
            .unwrap();
        assert_eq!(m.phases.len(), 2);
        assert_eq!(m.phases[0].name, "dyck");
        assert_eq!((m.phases[0].start_step, m.phases[0].end_step), (0, 15));
        assert_eq!(m.phases[1].name, "main");
        assert_eq!((m.phases[1].start_step, m.phases[1].end_step), (15, 35));
        assert_eq!(m.train_loss.len(), 35);
    }

    #[test]
    fn zero_pre_pretrain_steps_reduces_to_plain_train() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let tokens = toy_tokens();
        let mut cfg = toy_cfg(21);
        cfg.max_steps = 25;
        let plain = Trainer::new(cfg.clone(), d1.path()).train_stream(&tokens).unwrap();
        cfg.pre_pretrain_steps = Some(0);
        let merged = Trainer::new(cfg, d2.path())
            .pre_pretrain_then_train(&[], &tokens)
            .unwrap();
        assert_eq!(plain.train_loss, merged.train_loss);
        assert_eq!(plain.dev_loss, merged.dev_loss);
        assert_eq!(plain.phases, merged.phases);
        let c1 = std::fs::read(d1.path().join("final.ckpt")).unwrap();
        let c2 = std::fs::read(d2.path().join("final.ckpt")).unwrap();
        assert_eq!(c1, c2);
    }

    #[test]
    fn epochwise_runs_and_counts_epochs() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = toy_cfg(13);
        cfg.max_steps = 10_000;
        cfg.seq_len = 8;
        cfg.epochs = Some(3);
        let seqs: Vec<Sequence> = (0..40)
            .map(|i| Sequence::plain(vec![2, 4 + (i % 8) as u32, 5, 6, 3]))
            .collect();
        let m = Trainer::new(cfg, dir.path()).train_epochwise(&seqs).unwrap();
        assert_eq!(m.stopping, StopReason::EpochsDone);
        // Three identical passes over whatever survived the dev split.
        assert_eq!(m.train_loss.len() % 3, 0);
        assert!(m.train_loss.len() >= 21, "steps {}", m.train_loss.len());
        assert_eq!(m.phases.len(), 1);
    }

    #[test]
    fn epochwise_needs_positive_epochs() {
        let seqs = vec![Sequence::plain(vec![2, 4, 5, 3])];
        for epochs in [None, Some(0)] {
            let dir = tempfile::tempdir().unwrap();
            let mut cfg = toy_cfg(13);
            cfg.epochs = epochs;
            let err = Trainer::new(cfg, dir.path()).train_epochwise(&seqs);
            assert!(matches!(err, Err(TrainError::BadConfig(_))), "{epochs:?}");
        }
    }

    #[test]
    fn tree_bias_rejects_stream_mode() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = toy_cfg(1);
        cfg.bias = AttentionBiasMode::tree_planted(1.0);
        let err = Trainer::new(cfg, dir.path()).train_stream(&toy_tokens());
        assert!(matches!(err, Err(TrainError::TreeNeedsSentences)));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let tokens = toy_tokens();
        let mut warmup_heavy = toy_cfg(2);
        warmup_heavy.warmup = 100;
        warmup_heavy.max_steps = 50;
        let mut no_patience = toy_cfg(2);
        no_patience.patience = Some(0);
        for cfg in [warmup_heavy, no_patience] {
            let dir = tempfile::tempdir().unwrap();
            let err = Trainer::new(cfg, dir.path()).train_stream(&tokens);
            assert!(matches!(err, Err(TrainError::BadConfig(_))));
        }
    }

    #[test]
    fn empty_dev_split_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = toy_cfg(2);
        cfg.dev_permille = 0;
        let err = Trainer::new(cfg, dir.path()).train_stream(&toy_tokens());
        assert!(matches!(err, Err(TrainError::DevEmpty)));
    }

    #[test]
    fn bias_t_start_shifts_the_decay_clock() {
        // With r=0.5 and t_start large, the recency run matches vanilla on
        // the same seed because the bias underflows to nothing.
        let tokens = toy_tokens();
        let mut vanilla = toy_cfg(17);
        vanilla.max_steps = 10;
        let mut shifted = vanilla.clone();
        shifted.bias = AttentionBiasMode::recency(0.5);
        shifted.bias_t_start = 2000;
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let m1 = Trainer::new(vanilla, d1.path()).train_stream(&tokens).unwrap();
        let m2 = Trainer::new(shifted, d2.path()).train_stream(&tokens).unwrap();
        let l1: Vec<f64> = m1.train_loss.iter().map(|x| x.1).collect();
        let l2: Vec<f64> = m2.train_loss.iter().map(|x| x.1).collect();
        assert_eq!(l1, l2);
        // At t_start 0 the bias is live and the trajectory differs.
        let mut live = toy_cfg(17);
        live.max_steps = 10;
        live.bias = AttentionBiasMode::recency(0.5);
        let d3 = tempfile::tempdir().unwrap();
        let m3 = Trainer::new(live, d3.path()).train_stream(&tokens).unwrap();
        let l3: Vec<f64> = m3.train_loss.iter().map(|x| x.1).collect();
        assert_ne!(l1, l3);
    }
}
