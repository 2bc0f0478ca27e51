//! Flat parameter storage with a named-tensor layout.
//!
//! Every weight lives in one contiguous vector; the layout maps names to
//! (offset, shape) slices. The optimizer, the finite-difference checker,
//! and the checkpoint format all walk the same flat view.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::real::{rf, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl LayoutEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub entries: Vec<LayoutEntry>,
    pub total: usize,
}

impl Layout {
    fn push(&mut self, name: String, shape: Vec<usize>) {
        let len: usize = shape.iter().product();
        self.entries.push(LayoutEntry {
            name,
            offset: self.total,
            shape,
        });
        self.total += len;
    }

    /// Weight layout of the decoder stack. Order is load-bearing: the
    /// checkpoint body stores blobs in exactly this order.
    pub fn for_config(cfg: &ModelConfig) -> Layout {
        let (d, f, v, c) = (cfg.hidden_size, cfg.ffn_dim, cfg.vocab_size, cfg.context_len);
        let mut layout = Layout {
            entries: Vec::new(),
            total: 0,
        };
        layout.push("tok_emb".into(), vec![v, d]);
        layout.push("pos_emb".into(), vec![c, d]);
        for l in 0..cfg.n_layers {
            for (suffix, shape) in [
                ("ln1.g", vec![d]),
                ("ln1.b", vec![d]),
                ("attn.wq", vec![d, d]),
                ("attn.bq", vec![d]),
                ("attn.wk", vec![d, d]),
                ("attn.bk", vec![d]),
                ("attn.wv", vec![d, d]),
                ("attn.bv", vec![d]),
                ("attn.wo", vec![d, d]),
                ("attn.bo", vec![d]),
                ("ln2.g", vec![d]),
                ("ln2.b", vec![d]),
                ("ffn.w1", vec![d, f]),
                ("ffn.b1", vec![f]),
                ("ffn.w2", vec![f, d]),
                ("ffn.b2", vec![d]),
            ] {
                layout.push(format!("l{l}.{suffix}"), shape);
            }
        }
        layout.push("ln_f.g".into(), vec![d]);
        layout.push("ln_f.b".into(), vec![d]);
        layout
    }

    pub fn entry(&self, name: &str) -> Option<&LayoutEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// A layout-shaped flat value vector: parameters, gradients, or optimizer
/// moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensors<F> {
    pub layout: Layout,
    pub data: Vec<F>,
}

impl<F: Real> Tensors<F> {
    pub fn zeros(layout: Layout) -> Tensors<F> {
        let data = vec![F::zero(); layout.total];
        Tensors { layout, data }
    }

    pub fn view(&self, name: &str) -> &[F] {
        let e = self.layout.entry(name).expect("unknown tensor");
        let len: usize = e.shape.iter().product();
        &self.data[e.offset..e.offset + len]
    }

    pub fn view_mut(&mut self, name: &str) -> &mut [F] {
        let e = self.layout.entry(name).expect("unknown tensor").clone();
        let len: usize = e.shape.iter().product();
        &mut self.data[e.offset..e.offset + len]
    }

    /// GPT-2 style init: N(0, 0.02) for matrices and embeddings, zero
    /// biases, unit layernorm gains.
    pub fn init(cfg: &ModelConfig, rng: &mut impl Rng) -> Tensors<F> {
        let layout = Layout::for_config(cfg);
        let mut t = Tensors::zeros(layout);
        let entries = t.layout.entries.clone();
        for e in &entries {
            let len: usize = e.shape.iter().product();
            let slice = &mut t.data[e.offset..e.offset + len];
            if e.name.ends_with(".g") {
                slice.fill(F::one());
            } else if e.shape.len() == 1 {
                // biases and layernorm shifts stay zero
            } else {
                for x in slice.iter_mut() {
                    *x = rf::<F>(0.02 * normal(rng));
                }
            }
        }
        t
    }

    pub fn widen(&self) -> Tensors<f64> {
        Tensors {
            layout: self.layout.clone(),
            data: self.data.iter().map(|x| x.as_f64()).collect(),
        }
    }

    pub fn narrow(&self) -> Tensors<f32> {
        Tensors {
            layout: self.layout.clone(),
            data: self.data.iter().map(|x| x.as_f64() as f32).collect(),
        }
    }
}

/// Standard normal via Box-Muller; two uniforms per draw keeps the stream
/// layout independent of call pattern.
pub fn normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use posh_core::rng::stream;

    fn tiny() -> ModelConfig {
        ModelConfig {
            hidden_size: 8,
            n_heads: 2,
            n_layers: 2,
            ffn_dim: 16,
            vocab_size: 50,
            context_len: 12,
            dropout_rate: 0.0,
        }
    }

    #[test]
    fn layout_covers_expected_parameter_count() {
        let cfg = tiny();
        let layout = Layout::for_config(&cfg);
        // embeddings: 50*8 + 12*8; per layer: 2*8 (ln1) + 4*(8*8+8) + 2*8 (ln2)
        // + 8*16+16 + 16*8+8; final ln: 2*8
        let per_layer = 16 + 4 * 72 + 16 + 144 + 136;
        assert_eq!(layout.total, 400 + 96 + 2 * per_layer + 16);
        assert_eq!(layout.entries.len(), 2 + 2 * 16 + 2);
        let e = layout.entry("l1.ffn.w1").unwrap();
        assert_eq!(e.shape, vec![8, 16]);
    }

    #[test]
    fn init_is_deterministic_and_structured() {
        let cfg = tiny();
        let a: Tensors<f64> = Tensors::init(&cfg, &mut stream(9, "init"));
        let b: Tensors<f64> = Tensors::init(&cfg, &mut stream(9, "init"));
        assert_eq!(a.data, b.data);
        assert!(a.view("ln_f.g").iter().all(|&x| x == 1.0));
        assert!(a.view("l0.attn.bq").iter().all(|&x| x == 0.0));
        assert!(a.view("tok_emb").iter().any(|&x| x != 0.0));
        let c: Tensors<f64> = Tensors::init(&cfg, &mut stream(10, "init"));
        assert_ne!(a.data, c.data);
    }
}
