//! Decoder-only transformer: pre-norm blocks, causal attention, tied
//! embeddings, and hand-written reverse-mode gradients.
//!
//! One fused pass computes loss, optional gradients, and optional debug
//! tensors. Kernels are plain loops; everything runs on one thread with a
//! fixed summation order, so a fixed seed gives a bit-identical trajectory.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{AttentionBiasMode, ModelConfig};
use crate::params::{Layout, Tensors};
use crate::real::{rf, Real};
use crate::tree::{TreeDistanceMatrix, EXCLUDED};

/// Target id that excludes a position from the LM loss.
pub const IGNORE: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("token id {id} at position {position} exceeds vocab {vocab}")]
    BadToken {
        position: usize,
        id: u32,
        vocab: usize,
    },
    #[error("sequence length {t} exceeds context {context}")]
    TooLong { t: usize, context: usize },
    #[error("tree-planted mode needs distance matrices")]
    MissingTree,
    #[error("tree matrix is {got}x{got}, batch rows are {expected}")]
    TreeShape { expected: usize, got: usize },
    #[error("batch has no loss targets")]
    NoTargets,
    #[error("non-finite loss: {detail}")]
    NonFinite { detail: String },
}

/// One training batch, row-major `b` sequences of `t` positions.
#[derive(Debug, Clone)]
pub struct Batch {
    pub b: usize,
    pub t: usize,
    pub inputs: Vec<u32>,
    /// Next-token targets; `IGNORE` masks a position out of the loss.
    pub targets: Vec<u32>,
    /// Per-sequence distances expanded to t x t, for tree-planted runs.
    pub trees: Option<Vec<TreeDistanceMatrix>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    /// Mean nats per target token.
    pub lm_loss: f64,
    /// Mean KL over supervised (layer, head, query) cells.
    pub tree_loss: f64,
    /// lm_loss + lambda * tree_loss.
    pub total_loss: f64,
    pub n_targets: usize,
}

pub struct DebugTensors<F> {
    /// b*t*v, every position.
    pub logits: Vec<F>,
    /// Per layer: b*h*t*t post-softmax, pre-dropout.
    pub attention: Vec<Vec<F>>,
}

pub struct Model<F> {
    pub cfg: ModelConfig,
    pub params: Tensors<F>,
}

/// Additive recency penalty for query position `i` (0-based), one entry per
/// key position 0..=i: r^t * [-(i), ..., -1, 0].
pub fn recency_bias_row(i: usize, r: f64, t: u32) -> Vec<f64> {
    let rt = r.powi(t as i32);
    (0..=i).map(|j| -((i - j) as f64) * rt).collect()
}

/// Supervision target over key positions 0..=i: proportional to
/// exp(-d(i,j)) on positions inside the tree, zero elsewhere. None when the
/// query itself is outside the tree.
pub fn tree_target_row<F: Real>(dist: &TreeDistanceMatrix, i: usize) -> Option<Vec<F>> {
    if dist.get(i, i) == EXCLUDED {
        return None;
    }
    let mut row = vec![F::zero(); i + 1];
    let mut sum = F::zero();
    for (j, slot) in row.iter_mut().enumerate() {
        let d = dist.get(i, j);
        if d != EXCLUDED {
            *slot = rf::<F>(-(d as f64)).exp();
            sum = sum + *slot;
        }
    }
    for x in row.iter_mut() {
        *x = *x / sum;
    }
    Some(row)
}

/// KL(target || attention) over one query row; zero-mass targets contribute
/// nothing.
pub fn tree_kl_row<F: Real>(att_row: &[F], target: &[F]) -> F {
    let mut kl = F::zero();
    for (&t, &p) in target.iter().zip(att_row) {
        if t > F::zero() {
            kl = kl + t * (t.ln() - p.max(rf::<F>(1e-300)).ln());
        }
    }
    kl
}

const GELU_A: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_B: f64 = 0.044_715;

fn gelu<F: Real>(x: F) -> F {
    let a = rf::<F>(GELU_A);
    let b = rf::<F>(GELU_B);
    let u = a * (x + b * x * x * x);
    rf::<F>(0.5) * x * (F::one() + u.tanh())
}

fn gelu_grad<F: Real>(x: F) -> F {
    let a = rf::<F>(GELU_A);
    let b = rf::<F>(GELU_B);
    let u = a * (x + b * x * x * x);
    let th = u.tanh();
    let sech2 = F::one() - th * th;
    rf::<F>(0.5) * (F::one() + th)
        + rf::<F>(0.5) * x * sech2 * a * (F::one() + rf::<F>(3.0) * b * x * x)
}

/// y = x @ w + bias, x: [n, din], w: [din, dout].
fn linear_fwd<F: Real>(x: &[F], w: &[F], bias: &[F], n: usize, din: usize, dout: usize) -> Vec<F> {
    let mut y = vec![F::zero(); n * dout];
    for row in 0..n {
        let yr = &mut y[row * dout..(row + 1) * dout];
        yr.copy_from_slice(bias);
        let xr = &x[row * din..(row + 1) * din];
        for (i, &xi) in xr.iter().enumerate() {
            let wr = &w[i * dout..(i + 1) * dout];
            for (yv, &wv) in yr.iter_mut().zip(wr) {
                *yv = *yv + xi * wv;
            }
        }
    }
    y
}

/// Backward of `linear_fwd`: returns dx, accumulates dw and dbias.
fn linear_bwd<F: Real>(
    dy: &[F],
    x: &[F],
    w: &[F],
    n: usize,
    din: usize,
    dout: usize,
    dw: &mut [F],
    dbias: &mut [F],
) -> Vec<F> {
    let mut dx = vec![F::zero(); n * din];
    for row in 0..n {
        let dyr = &dy[row * dout..(row + 1) * dout];
        let xr = &x[row * din..(row + 1) * din];
        for (dbv, &dyv) in dbias.iter_mut().zip(dyr) {
            *dbv = *dbv + dyv;
        }
        let dxr = &mut dx[row * din..(row + 1) * din];
        for i in 0..din {
            let wr = &w[i * dout..(i + 1) * dout];
            let dwr = &mut dw[i * dout..(i + 1) * dout];
            let xi = xr[i];
            let mut acc = F::zero();
            for ((&dyv, &wv), dwv) in dyr.iter().zip(wr).zip(dwr.iter_mut()) {
                acc = acc + dyv * wv;
                *dwv = *dwv + dyv * xi;
            }
            dxr[i] = acc;
        }
    }
    dx
}

const LN_EPS: f64 = 1e-5;

/// Row-wise layernorm; returns (y, xhat, rstd).
fn layernorm_fwd<F: Real>(
    x: &[F],
    gain: &[F],
    shift: &[F],
    n: usize,
    d: usize,
) -> (Vec<F>, Vec<F>, Vec<F>) {
    let mut y = vec![F::zero(); n * d];
    let mut xhat = vec![F::zero(); n * d];
    let mut rstd = vec![F::zero(); n];
    let inv_d = rf::<F>(1.0 / d as f64);
    for row in 0..n {
        let xr = &x[row * d..(row + 1) * d];
        let mut mean = F::zero();
        for &v in xr {
            mean = mean + v;
        }
        mean = mean * inv_d;
        let mut var = F::zero();
        for &v in xr {
            let c = v - mean;
            var = var + c * c;
        }
        var = var * inv_d;
        let rs = (var + rf::<F>(LN_EPS)).sqrt().recip();
        rstd[row] = rs;
        let xh = &mut xhat[row * d..(row + 1) * d];
        let yr = &mut y[row * d..(row + 1) * d];
        for c in 0..d {
            xh[c] = (xr[c] - mean) * rs;
            yr[c] = gain[c] * xh[c] + shift[c];
        }
    }
    (y, xhat, rstd)
}

/// Backward of `layernorm_fwd`: returns dx, accumulates dgain and dshift.
fn layernorm_bwd<F: Real>(
    dy: &[F],
    xhat: &[F],
    rstd: &[F],
    gain: &[F],
    n: usize,
    d: usize,
    dgain: &mut [F],
    dshift: &mut [F],
) -> Vec<F> {
    let mut dx = vec![F::zero(); n * d];
    let inv_d = rf::<F>(1.0 / d as f64);
    for row in 0..n {
        let dyr = &dy[row * d..(row + 1) * d];
        let xh = &xhat[row * d..(row + 1) * d];
        let mut sum_dxhat = F::zero();
        let mut sum_dxhat_xhat = F::zero();
        for c in 0..d {
            dgain[c] = dgain[c] + dyr[c] * xh[c];
            dshift[c] = dshift[c] + dyr[c];
            let dxh = dyr[c] * gain[c];
            sum_dxhat = sum_dxhat + dxh;
            sum_dxhat_xhat = sum_dxhat_xhat + dxh * xh[c];
        }
        let dxr = &mut dx[row * d..(row + 1) * d];
        for c in 0..d {
            let dxh = dyr[c] * gain[c];
            dxr[c] = rstd[row] * (dxh - inv_d * sum_dxhat - xh[c] * inv_d * sum_dxhat_xhat);
        }
    }
    dx
}

struct LayerCache<F> {
    xhat1: Vec<F>,
    rstd1: Vec<F>,
    a: Vec<F>,
    q: Vec<F>,
    k: Vec<F>,
    v: Vec<F>,
    /// b*h*t*t post-softmax, pre-dropout.
    att: Vec<F>,
    /// Dropout multipliers for att, empty in eval mode.
    att_mask: Vec<F>,
    ctx: Vec<F>,
    xhat2: Vec<F>,
    rstd2: Vec<F>,
    bnorm: Vec<F>,
    h_pre: Vec<F>,
    /// Dropout multipliers for FFN activations, empty in eval mode.
    ffn_mask: Vec<F>,
    h_drop: Vec<F>,
}

struct Pass<'m, F> {
    model: &'m Model<F>,
    mode: AttentionBiasMode,
    epoch: u32,
}

struct PassRequest<'r, R> {
    dropout: Option<&'r mut R>,
    want_debug: bool,
    want_grads: bool,
    want_logprobs: bool,
}

struct PassOutput<F> {
    stats: StepStats,
    grads: Option<Tensors<F>>,
    debug: Option<DebugTensors<F>>,
    /// Per position: ln p(target); zero where the target is IGNORE.
    logprobs: Option<Vec<F>>,
}

impl<F: Real> Model<F> {
    pub fn new(cfg: ModelConfig, params: Tensors<F>) -> Model<F> {
        Model { cfg, params }
    }

    pub fn init(cfg: ModelConfig, rng: &mut impl Rng) -> Model<F> {
        let params = Tensors::init(&cfg, rng);
        Model { cfg, params }
    }

    pub fn layout(&self) -> &Layout {
        &self.params.layout
    }

    /// Eval-mode loss (no dropout).
    pub fn loss(
        &self,
        batch: &Batch,
        mode: AttentionBiasMode,
        epoch: u32,
    ) -> Result<StepStats, ModelError> {
        let out = Pass {
            model: self,
            mode,
            epoch,
        }
        .run::<rand::rngs::StdRng>(
            batch,
            PassRequest {
                dropout: None,
                want_debug: false,
                want_grads: false,
                want_logprobs: false,
            },
        )?;
        Ok(out.stats)
    }

    /// Training step: loss plus exact gradients. Dropout is active iff an
    /// RNG is supplied and the configured rate is positive.
    pub fn loss_and_grad<R: Rng>(
        &self,
        batch: &Batch,
        mode: AttentionBiasMode,
        epoch: u32,
        dropout: Option<&mut R>,
    ) -> Result<(StepStats, Tensors<F>), ModelError> {
        let out = Pass {
            model: self,
            mode,
            epoch,
        }
        .run(
            batch,
            PassRequest {
                dropout,
                want_debug: false,
                want_grads: true,
                want_logprobs: false,
            },
        )?;
        Ok((out.stats, out.grads.expect("grads requested")))
    }

    /// Eval-mode logits and attention maps, for inspection and tests.
    pub fn debug_forward(
        &self,
        batch: &Batch,
        mode: AttentionBiasMode,
        epoch: u32,
    ) -> Result<(StepStats, DebugTensors<F>), ModelError> {
        let out = Pass {
            model: self,
            mode,
            epoch,
        }
        .run::<rand::rngs::StdRng>(
            batch,
            PassRequest {
                dropout: None,
                want_debug: true,
                want_grads: false,
                want_logprobs: false,
            },
        )?;
        Ok((out.stats, out.debug.expect("debug requested")))
    }

    /// Eval-mode per-position target log-probabilities (nats), zero at
    /// IGNORE positions.
    pub fn target_logprobs(
        &self,
        batch: &Batch,
        mode: AttentionBiasMode,
        epoch: u32,
    ) -> Result<Vec<F>, ModelError> {
        let out = Pass {
            model: self,
            mode,
            epoch,
        }
        .run::<rand::rngs::StdRng>(
            batch,
            PassRequest {
                dropout: None,
                want_debug: false,
                want_grads: false,
                want_logprobs: true,
            },
        )?;
        Ok(out.logprobs.expect("logprobs requested"))
    }
}

impl<'m, F: Real> Pass<'m, F> {
    fn run<R: Rng>(
        &self,
        batch: &Batch,
        mut req: PassRequest<'_, R>,
    ) -> Result<PassOutput<F>, ModelError> {
        let cfg = &self.model.cfg;
        let p = &self.model.params;
        let (b, t) = (batch.b, batch.t);
        let (d, nh, dh, f, v) = (
            cfg.hidden_size,
            cfg.n_heads,
            cfg.head_dim(),
            cfg.ffn_dim,
            cfg.vocab_size,
        );
        let n = b * t;
        assert_eq!(batch.inputs.len(), n, "input shape");
        assert_eq!(batch.targets.len(), n, "target shape");
        if t > cfg.context_len {
            return Err(ModelError::TooLong {
                t,
                context: cfg.context_len,
            });
        }
        for (position, &id) in batch.inputs.iter().enumerate() {
            if id as usize >= v {
                return Err(ModelError::BadToken {
                    position,
                    id,
                    vocab: v,
                });
            }
        }
        let (lambda, supervised_heads) = match self.mode {
            AttentionBiasMode::TreePlanted {
                lambda,
                heads_per_layer,
            } => (lambda, heads_per_layer.min(nh)),
            _ => (0.0, 0),
        };
        let trees: Option<&[TreeDistanceMatrix]> = if self.mode.needs_tree() {
            let trees = batch.trees.as_deref().ok_or(ModelError::MissingTree)?;
            for m in trees {
                if m.n != t {
                    return Err(ModelError::TreeShape {
                        expected: t,
                        got: m.n,
                    });
                }
            }
            Some(trees)
        } else {
            None
        };
        let recency: Option<(f64, bool)> = match self.mode {
            AttentionBiasMode::Recency { r, post_scale } => Some((r.powi(self.epoch as i32), post_scale)),
            _ => None,
        };
        let scale = rf::<F>(1.0 / (dh as f64).sqrt());
        let keep = 1.0 - cfg.dropout_rate;
        let dropout_on = req.dropout.is_some() && cfg.dropout_rate > 0.0;

        // Embeddings.
        let tok_emb = p.view("tok_emb");
        let pos_emb = p.view("pos_emb");
        let mut x = vec![F::zero(); n * d];
        for row in 0..n {
            let id = batch.inputs[row] as usize;
            let pos = row % t;
            let xr = &mut x[row * d..(row + 1) * d];
            let te = &tok_emb[id * d..(id + 1) * d];
            let pe = &pos_emb[pos * d..(pos + 1) * d];
            for c in 0..d {
                xr[c] = te[c] + pe[c];
            }
        }

        // Decoder stack.
        let mut caches: Vec<LayerCache<F>> = Vec::with_capacity(cfg.n_layers);
        let mut tree_loss_sum = F::zero();
        let mut tree_cells = 0usize;
        for l in 0..cfg.n_layers {
            let name = |s: &str| format!("l{l}.{s}");
            let (a, xhat1, rstd1) =
                layernorm_fwd(&x, p.view(&name("ln1.g")), p.view(&name("ln1.b")), n, d);
            let q = linear_fwd(&a, p.view(&name("attn.wq")), p.view(&name("attn.bq")), n, d, d);
            let k = linear_fwd(&a, p.view(&name("attn.wk")), p.view(&name("attn.bk")), n, d, d);
            let vv = linear_fwd(&a, p.view(&name("attn.wv")), p.view(&name("attn.bv")), n, d, d);

            let mut att = vec![F::zero(); b * nh * t * t];
            for seq in 0..b {
                for head in 0..nh {
                    let hoff = head * dh;
                    for i in 0..t {
                        let qrow = &q[(seq * t + i) * d + hoff..(seq * t + i) * d + hoff + dh];
                        let arow = &mut att[((seq * nh + head) * t + i) * t..((seq * nh + head) * t + i) * t + t];
                        let mut maxv = F::neg_infinity();
                        for j in 0..=i {
                            let krow = &k[(seq * t + j) * d + hoff..(seq * t + j) * d + hoff + dh];
                            let mut dot = F::zero();
                            for c in 0..dh {
                                dot = dot + qrow[c] * krow[c];
                            }
                            let s = if let Some((rt, post_scale)) = recency {
                                let bias = rf::<F>(-((i - j) as f64) * rt);
                                if post_scale {
                                    dot * scale + bias
                                } else {
                                    (dot + bias) * scale
                                }
                            } else {
                                dot * scale
                            };
                            if s > maxv {
                                maxv = s;
                            }
                            arow[j] = s;
                        }
                        let mut denom = F::zero();
                        for j in 0..=i {
                            let e = (arow[j] - maxv).exp();
                            arow[j] = e;
                            denom = denom + e;
                        }
                        for j in 0..=i {
                            arow[j] = arow[j] / denom;
                        }
                        // Tree supervision reads pre-dropout rows.
                        if head < supervised_heads {
                            if let Some(trees) = trees {
                                if let Some(target) = tree_target_row::<F>(&trees[seq], i) {
                                    tree_loss_sum =
                                        tree_loss_sum + tree_kl_row(&arow[..=i], &target);
                                    tree_cells += 1;
                                }
                            }
                        }
                    }
                }
            }

            // Dropout over attention probabilities.
            let mut att_mask = Vec::new();
            let mut att_used = att.clone();
            if dropout_on {
                let rng = req.dropout.as_mut().expect("dropout rng");
                att_mask = vec![F::zero(); b * nh * t * t];
                for seq in 0..b {
                    for head in 0..nh {
                        for i in 0..t {
                            let base = ((seq * nh + head) * t + i) * t;
                            for j in 0..=i {
                                let m = if rng.gen::<f64>() < keep {
                                    rf::<F>(1.0 / keep)
                                } else {
                                    F::zero()
                                };
                                att_mask[base + j] = m;
                                att_used[base + j] = att_used[base + j] * m;
                            }
                        }
                    }
                }
            }

            // Context = att @ v, heads re-interleaved.
            let mut ctx = vec![F::zero(); n * d];
            for seq in 0..b {
                for head in 0..nh {
                    let hoff = head * dh;
                    for i in 0..t {
                        let arow = &att_used[((seq * nh + head) * t + i) * t..((seq * nh + head) * t + i) * t + t];
                        let crow = &mut ctx[(seq * t + i) * d + hoff..(seq * t + i) * d + hoff + dh];
                        for j in 0..=i {
                            let w = arow[j];
                            if w != F::zero() {
                                let vrow = &vv[(seq * t + j) * d + hoff..(seq * t + j) * d + hoff + dh];
                                for c in 0..dh {
                                    crow[c] = crow[c] + w * vrow[c];
                                }
                            }
                        }
                    }
                }
            }

            let attn_proj = linear_fwd(
                &ctx,
                p.view(&name("attn.wo")),
                p.view(&name("attn.bo")),
                n,
                d,
                d,
            );
            let mut x_mid = x.clone();
            for (xm, ap) in x_mid.iter_mut().zip(&attn_proj) {
                *xm = *xm + *ap;
            }

            let (bnorm, xhat2, rstd2) =
                layernorm_fwd(&x_mid, p.view(&name("ln2.g")), p.view(&name("ln2.b")), n, d);
            let h_pre = linear_fwd(
                &bnorm,
                p.view(&name("ffn.w1")),
                p.view(&name("ffn.b1")),
                n,
                d,
                f,
            );
            let mut h_drop: Vec<F> = h_pre.iter().map(|&z| gelu(z)).collect();
            let mut ffn_mask = Vec::new();
            if dropout_on {
                let rng = req.dropout.as_mut().expect("dropout rng");
                ffn_mask = vec![F::zero(); n * f];
                for (hd, m) in h_drop.iter_mut().zip(ffn_mask.iter_mut()) {
                    *m = if rng.gen::<f64>() < keep {
                        rf::<F>(1.0 / keep)
                    } else {
                        F::zero()
                    };
                    *hd = *hd * *m;
                }
            }
            let ffn_out = linear_fwd(
                &h_drop,
                p.view(&name("ffn.w2")),
                p.view(&name("ffn.b2")),
                n,
                f,
                d,
            );
            let mut x_out = x_mid.clone();
            for (xo, fo) in x_out.iter_mut().zip(&ffn_out) {
                *xo = *xo + *fo;
            }

            x = x_out;
            caches.push(LayerCache {
                xhat1,
                rstd1,
                a,
                q,
                k,
                v: vv,
                att,
                att_mask,
                ctx,
                xhat2,
                rstd2,
                bnorm,
                h_pre,
                ffn_mask,
                h_drop,
            });
        }

        let (hf, xhatf, rstdf) = layernorm_fwd(&x, p.view("ln_f.g"), p.view("ln_f.b"), n, d);

        // Tied output head, streamed per position.
        let n_targets = batch.targets.iter().filter(|&&y| y != IGNORE).count();
        if n_targets == 0 {
            return Err(ModelError::NoTargets);
        }
        let inv_nt = rf::<F>(1.0 / n_targets as f64);
        let mut grads = if req.want_grads {
            Some(Tensors::<F>::zeros(p.layout.clone()))
        } else {
            None
        };
        let mut debug_logits = if req.want_debug {
            Some(vec![F::zero(); n * v])
        } else {
            None
        };
        let mut logprobs = if req.want_logprobs {
            Some(vec![F::zero(); n])
        } else {
            None
        };
        let mut dhf = if req.want_grads {
            vec![F::zero(); n * d]
        } else {
            Vec::new()
        };
        let mut lm_loss_sum = F::zero();
        let mut row_logits = vec![F::zero(); v];
        for row in 0..n {
            let target = batch.targets[row];
            if target == IGNORE && debug_logits.is_none() && logprobs.is_none() {
                continue;
            }
            let hr = &hf[row * d..(row + 1) * d];
            let mut maxv = F::neg_infinity();
            for (w, slot) in tok_emb.chunks_exact(d).zip(row_logits.iter_mut()) {
                let mut dot = F::zero();
                for c in 0..d {
                    dot = dot + hr[c] * w[c];
                }
                *slot = dot;
                if dot > maxv {
                    maxv = dot;
                }
            }
            if let Some(dl) = debug_logits.as_mut() {
                dl[row * v..(row + 1) * v].copy_from_slice(&row_logits);
            }
            if target == IGNORE {
                continue;
            }
            let mut denom = F::zero();
            for &z in row_logits.iter() {
                denom = denom + (z - maxv).exp();
            }
            let lse = maxv + denom.ln();
            let lp = row_logits[target as usize] - lse;
            lm_loss_sum = lm_loss_sum - lp;
            if let Some(lps) = logprobs.as_mut() {
                lps[row] = lp;
            }
            if let Some(g) = grads.as_mut() {
                let demb = g.view_mut("tok_emb");
                let dhr = &mut dhf[row * d..(row + 1) * d];
                for (vi, (w, &z)) in tok_emb.chunks_exact(d).zip(row_logits.iter()).enumerate() {
                    let mut dl = (z - lse).exp() * inv_nt;
                    if vi == target as usize {
                        dl = dl - inv_nt;
                    }
                    if dl != F::zero() {
                        let dw = &mut demb[vi * d..(vi + 1) * d];
                        for c in 0..d {
                            dhr[c] = dhr[c] + dl * w[c];
                            dw[c] = dw[c] + dl * hr[c];
                        }
                    }
                }
            }
        }

        let lm_loss = (lm_loss_sum * inv_nt).as_f64();
        let tree_loss = if tree_cells > 0 {
            tree_loss_sum.as_f64() / tree_cells as f64
        } else {
            0.0
        };
        let total_loss = lm_loss + lambda * tree_loss;
        if !total_loss.is_finite() {
            return Err(ModelError::NonFinite {
                detail: format!("lm={lm_loss} tree={tree_loss}"),
            });
        }
        let stats = StepStats {
            lm_loss,
            tree_loss,
            total_loss,
            n_targets,
        };
        let debug = debug_logits.map(|logits| DebugTensors {
            logits,
            attention: caches.iter().map(|c| c.att.clone()).collect(),
        });
        if !req.want_grads {
            return Ok(PassOutput {
                stats,
                grads: None,
                debug,
                logprobs,
            });
        }

        // Backward.
        let g = grads.as_mut().expect("grads");
        let mut dx = {
            let (dgf, dbf) = (vec![F::zero(); d], vec![F::zero(); d]);
            let mut dgf = dgf;
            let mut dbf = dbf;
            let dx = layernorm_bwd(
                &dhf,
                &xhatf,
                &rstdf,
                p.view("ln_f.g"),
                n,
                d,
                &mut dgf,
                &mut dbf,
            );
            g.view_mut("ln_f.g").copy_from_slice(&dgf);
            g.view_mut("ln_f.b").copy_from_slice(&dbf);
            dx
        };

        let tree_grad_scale = if tree_cells > 0 {
            rf::<F>(lambda / tree_cells as f64)
        } else {
            F::zero()
        };
        for l in (0..cfg.n_layers).rev() {
            let cache = &caches[l];
            let name = |s: &str| format!("l{l}.{s}");

            // FFN branch.
            let mut dw2 = vec![F::zero(); f * d];
            let mut db2 = vec![F::zero(); d];
            let dh_drop = linear_bwd(
                &dx,
                &cache.h_drop,
                p.view(&name("ffn.w2")),
                n,
                f,
                d,
                &mut dw2,
                &mut db2,
            );
            g.view_mut(&name("ffn.w2")).copy_from_slice(&dw2);
            g.view_mut(&name("ffn.b2")).copy_from_slice(&db2);
            let mut dh_pre = vec![F::zero(); n * f];
            for idx in 0..n * f {
                let mut dv = dh_drop[idx];
                if !cache.ffn_mask.is_empty() {
                    dv = dv * cache.ffn_mask[idx];
                }
                dh_pre[idx] = dv * gelu_grad(cache.h_pre[idx]);
            }
            let mut dw1 = vec![F::zero(); d * f];
            let mut db1 = vec![F::zero(); f];
            let dbnorm = linear_bwd(
                &dh_pre,
                &cache.bnorm,
                p.view(&name("ffn.w1")),
                n,
                d,
                f,
                &mut dw1,
                &mut db1,
            );
            g.view_mut(&name("ffn.w1")).copy_from_slice(&dw1);
            g.view_mut(&name("ffn.b1")).copy_from_slice(&db1);
            let mut dg2 = vec![F::zero(); d];
            let mut db2s = vec![F::zero(); d];
            let dx_mid_ln = layernorm_bwd(
                &dbnorm,
                &cache.xhat2,
                &cache.rstd2,
                p.view(&name("ln2.g")),
                n,
                d,
                &mut dg2,
                &mut db2s,
            );
            g.view_mut(&name("ln2.g")).copy_from_slice(&dg2);
            g.view_mut(&name("ln2.b")).copy_from_slice(&db2s);
            // dx so far is d(x_out); residual carries it into x_mid too.
            let mut dx_mid = dx;
            for (xm, ln) in dx_mid.iter_mut().zip(&dx_mid_ln) {
                *xm = *xm + *ln;
            }

            // Attention branch.
            let mut dwo = vec![F::zero(); d * d];
            let mut dbo = vec![F::zero(); d];
            let dctx = linear_bwd(
                &dx_mid,
                &cache.ctx,
                p.view(&name("attn.wo")),
                n,
                d,
                d,
                &mut dwo,
                &mut dbo,
            );
            g.view_mut(&name("attn.wo")).copy_from_slice(&dwo);
            g.view_mut(&name("attn.bo")).copy_from_slice(&dbo);

            let mut dq = vec![F::zero(); n * d];
            let mut dk = vec![F::zero(); n * d];
            let mut dv = vec![F::zero(); n * d];
            let mut dp_row = vec![F::zero(); t];
            for seq in 0..b {
                for head in 0..nh {
                    let hoff = head * dh;
                    let supervise = head < supervised_heads;
                    for i in 0..t {
                        let base = ((seq * nh + head) * t + i) * t;
                        let arow = &cache.att[base..base + t];
                        let dcrow = &dctx[(seq * t + i) * d + hoff..(seq * t + i) * d + hoff + dh];
                        // d(att_used) then through dropout to d(att).
                        for j in 0..=i {
                            let vrow =
                                &cache.v[(seq * t + j) * d + hoff..(seq * t + j) * d + hoff + dh];
                            let mut acc = F::zero();
                            for c in 0..dh {
                                acc = acc + dcrow[c] * vrow[c];
                            }
                            let mask = if cache.att_mask.is_empty() {
                                F::one()
                            } else {
                                cache.att_mask[base + j]
                            };
                            dp_row[j] = acc * mask;
                            let used = arow[j] * mask;
                            if used != F::zero() {
                                let dvrow = &mut dv
                                    [(seq * t + j) * d + hoff..(seq * t + j) * d + hoff + dh];
                                for c in 0..dh {
                                    dvrow[c] = dvrow[c] + used * dcrow[c];
                                }
                            }
                        }
                        // Softmax backward plus the tree term at the scores.
                        let mut dot = F::zero();
                        for j in 0..=i {
                            dot = dot + dp_row[j] * arow[j];
                        }
                        let target = if supervise {
                            trees.and_then(|trees| tree_target_row::<F>(&trees[seq], i))
                        } else {
                            None
                        };
                        let qrow = &cache.q[(seq * t + i) * d + hoff..(seq * t + i) * d + hoff + dh];
                        let dqrow_base = (seq * t + i) * d + hoff;
                        for j in 0..=i {
                            let mut ds = arow[j] * (dp_row[j] - dot);
                            if let Some(target) = &target {
                                ds = ds + tree_grad_scale * (arow[j] - target[j]);
                            }
                            if ds == F::zero() {
                                continue;
                            }
                            let ds_scaled = ds * scale;
                            let krow =
                                &cache.k[(seq * t + j) * d + hoff..(seq * t + j) * d + hoff + dh];
                            let dkrow = &mut dk
                                [(seq * t + j) * d + hoff..(seq * t + j) * d + hoff + dh];
                            for c in 0..dh {
                                dq[dqrow_base + c] = dq[dqrow_base + c] + ds_scaled * krow[c];
                                dkrow[c] = dkrow[c] + ds_scaled * qrow[c];
                            }
                        }
                    }
                }
            }

            let mut da = vec![F::zero(); n * d];
            for (proj, dy_branch) in [("attn.wq", &dq), ("attn.wk", &dk), ("attn.wv", &dv)] {
                let wname = name(proj);
                let bname = name(&proj.replace(".w", ".b"));
                let mut dw = vec![F::zero(); d * d];
                let mut db = vec![F::zero(); d];
                let da_part = linear_bwd(dy_branch, &cache.a, p.view(&wname), n, d, d, &mut dw, &mut db);
                g.view_mut(&wname).copy_from_slice(&dw);
                g.view_mut(&bname).copy_from_slice(&db);
                for (x1, x2) in da.iter_mut().zip(&da_part) {
                    *x1 = *x1 + *x2;
                }
            }
            let mut dg1 = vec![F::zero(); d];
            let mut db1s = vec![F::zero(); d];
            let dx_in_ln = layernorm_bwd(
                &da,
                &cache.xhat1,
                &cache.rstd1,
                p.view(&name("ln1.g")),
                n,
                d,
                &mut dg1,
                &mut db1s,
            );
            g.view_mut(&name("ln1.g")).copy_from_slice(&dg1);
            g.view_mut(&name("ln1.b")).copy_from_slice(&db1s);
            for (xm, ln) in dx_mid.iter_mut().zip(&dx_in_ln) {
                *xm = *xm + *ln;
            }
            dx = dx_mid;
        }

        // Embedding gradients.
        {
            let demb = g.view_mut("tok_emb");
            for row in 0..n {
                let id = batch.inputs[row] as usize;
                let dxr = &dx[row * d..(row + 1) * d];
                let dw = &mut demb[id * d..(id + 1) * d];
                for c in 0..d {
                    dw[c] = dw[c] + dxr[c];
                }
            }
        }
        {
            let dpos = g.view_mut("pos_emb");
            for row in 0..n {
                let pos = row % t;
                let dxr = &dx[row * d..(row + 1) * d];
                let dw = &mut dpos[pos * d..(pos + 1) * d];
                for c in 0..d {
                    dw[c] = dw[c] + dxr[c];
                }
            }
        }

        Ok(PassOutput {
            stats,
            grads,
            debug,
            logprobs,
        })
    }
}
