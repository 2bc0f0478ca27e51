//! Batch assembly: hash-based dev splits, stream windows, and padded
//! sentence batches.

use rand::Rng;

use crate::transformer::{Batch, IGNORE};
use crate::tree::TreeDistanceMatrix;

/// FNV-1a over bytes; the split key, so membership depends on content, not
/// on position or shuffle order.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn ids_bytes(ids: &[u32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(ids.len() * 4);
    for id in ids {
        out.extend_from_slice(&id.to_le_bytes());
    }
    out
}

/// Splits indexed items into (train, dev) with roughly `permille`/1000 of
/// them in dev, keyed by content hash.
pub fn hash_split<T>(items: Vec<T>, key: impl Fn(&T) -> Vec<u8>, permille: u64) -> (Vec<T>, Vec<T>) {
    let mut train = Vec::new();
    let mut dev = Vec::new();
    for item in items {
        if fnv1a(&key(&item)) % 1000 < permille {
            dev.push(item);
        } else {
            train.push(item);
        }
    }
    (train, dev)
}

/// Splits a flat token stream into train and dev tokens by hashing
/// fixed-size blocks. Blocks stay contiguous inside each half.
pub fn hash_split_stream(tokens: &[u32], block: usize, permille: u64) -> (Vec<u32>, Vec<u32>) {
    assert!(block > 0);
    let mut train = Vec::new();
    let mut dev = Vec::new();
    for chunk in tokens.chunks(block) {
        if fnv1a(&ids_bytes(chunk)) % 1000 < permille {
            dev.extend_from_slice(chunk);
        } else {
            train.extend_from_slice(chunk);
        }
    }
    (train, dev)
}

/// Samples `b` windows of `t`+1 tokens at uniform offsets; inputs are the
/// first `t`, targets the last `t`.
pub fn sample_stream_batch(tokens: &[u32], b: usize, t: usize, rng: &mut impl Rng) -> Batch {
    assert!(tokens.len() > t, "stream shorter than one window");
    let mut inputs = Vec::with_capacity(b * t);
    let mut targets = Vec::with_capacity(b * t);
    for _ in 0..b {
        let start = rng.gen_range(0..tokens.len() - t);
        inputs.extend_from_slice(&tokens[start..start + t]);
        targets.extend_from_slice(&tokens[start + 1..start + t + 1]);
    }
    Batch {
        b,
        t,
        inputs,
        targets,
        trees: None,
    }
}

/// Non-overlapping windows covering the stream, for fixed dev evaluation.
/// The tail shorter than a window is dropped.
pub fn fixed_stream_batches(tokens: &[u32], b: usize, t: usize) -> Vec<Batch> {
    let mut windows: Vec<(Vec<u32>, Vec<u32>)> = Vec::new();
    let mut start = 0;
    while start + t < tokens.len() {
        windows.push((
            tokens[start..start + t].to_vec(),
            tokens[start + 1..start + t + 1].to_vec(),
        ));
        start += t;
    }
    windows
        .chunks(b)
        .map(|group| Batch {
            b: group.len(),
            t,
            inputs: group.iter().flat_map(|(i, _)| i.iter().copied()).collect(),
            targets: group.iter().flat_map(|(_, y)| y.iter().copied()).collect(),
            trees: None,
        })
        .collect()
}

/// One tokenized sentence, optionally with token-level tree distances and
/// the subword-to-token alignment needed to expand them.
#[derive(Debug, Clone)]
pub struct Sequence {
    /// Ids including any BOS/EOS framing the caller applied.
    pub ids: Vec<u32>,
    /// For each id, the source token it came from; None for specials.
    pub token_of: Option<Vec<Option<usize>>>,
    pub tree: Option<TreeDistanceMatrix>,
}

impl Sequence {
    pub fn plain(ids: Vec<u32>) -> Sequence {
        Sequence {
            ids,
            token_of: None,
            tree: None,
        }
    }
}

/// Packs sentences `order[i]` into padded batches of at most `b` sequences.
/// Each sequence contributes inputs ids[..n-1] and targets ids[1..]; pads
/// take target IGNORE. Sequences longer than `ctx`+1 ids are truncated.
pub fn sentence_batches(
    seqs: &[Sequence],
    order: &[usize],
    b: usize,
    ctx: usize,
    pad: u32,
    with_trees: bool,
) -> Vec<Batch> {
    let mut out = Vec::new();
    for group in order.chunks(b) {
        let rows: Vec<&Sequence> = group.iter().map(|&i| &seqs[i]).collect();
        let t = rows
            .iter()
            .map(|s| s.ids.len().saturating_sub(1).min(ctx))
            .max()
            .unwrap_or(0);
        if t == 0 {
            continue;
        }
        let mut inputs = Vec::with_capacity(rows.len() * t);
        let mut targets = Vec::with_capacity(rows.len() * t);
        let mut trees = Vec::new();
        for s in &rows {
            let n_in = s.ids.len().saturating_sub(1).min(ctx);
            for i in 0..t {
                if i < n_in {
                    inputs.push(s.ids[i]);
                    targets.push(s.ids[i + 1]);
                } else {
                    inputs.push(pad);
                    targets.push(IGNORE);
                }
            }
            if with_trees {
                let mapping: Vec<Option<usize>> = match &s.token_of {
                    Some(m) => m.iter().take(n_in).copied().collect(),
                    None => vec![None; n_in],
                };
                let mut padded = mapping;
                padded.resize(t, None);
                let tree = s
                    .tree
                    .as_ref()
                    .map(|tr| tr.expand(&padded))
                    .unwrap_or_else(|| TreeDistanceMatrix::excluded(t));
                trees.push(tree);
            }
        }
        out.push(Batch {
            b: rows.len(),
            t,
            inputs,
            targets,
            trees: if with_trees { Some(trees) } else { None },
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use posh_core::rng::stream;

    #[test]
    fn fnv_vector() {
        // Reference values for the 64-bit FNV-1a test vectors.
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn hash_split_is_stable_and_order_free() {
        let items: Vec<u32> = (0..10_000).collect();
        let key = |x: &u32| x.to_le_bytes().to_vec();
        let (train, dev) = hash_split(items.clone(), key, 10);
        let frac = dev.len() as f64 / 10_000.0;
        assert!((frac - 0.01).abs() < 0.005, "dev fraction {frac}");
        let mut shuffled = items;
        shuffled.reverse();
        let (_, dev2) = hash_split(shuffled, key, 10);
        let mut a = dev.clone();
        let mut b = dev2;
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
    }

    #[test]
    fn stream_batches_shift_by_one() {
        let tokens: Vec<u32> = (0..100).collect();
        let mut rng = stream(1, "order");
        let batch = sample_stream_batch(&tokens, 4, 8, &mut rng);
        for row in 0..4 {
            for i in 0..8 {
                assert_eq!(batch.targets[row * 8 + i], batch.inputs[row * 8 + i] + 1);
            }
        }
        let fixed = fixed_stream_batches(&tokens, 3, 8);
        // 12 full windows, batches of 3.
        assert_eq!(fixed.len(), 4);
        assert_eq!(fixed[0].inputs[..8], (0..8).collect::<Vec<u32>>()[..]);
        assert_eq!(fixed[1].inputs[..8], (24..32).collect::<Vec<u32>>()[..]);
    }

    #[test]
    fn sentence_batches_pad_and_truncate() {
        let seqs = vec![
            Sequence::plain(vec![2, 10, 11, 3]),
            Sequence::plain(vec![2, 20, 3]),
            Sequence::plain(vec![2, 30, 31, 32, 33, 34, 3]),
        ];
        let order = [0, 1, 2];
        let batches = sentence_batches(&seqs, &order, 2, 4, 0, false);
        assert_eq!(batches.len(), 2);
        let b0 = &batches[0];
        assert_eq!((b0.b, b0.t), (2, 3));
        assert_eq!(b0.inputs, vec![2, 10, 11, 2, 20, 0]);
        assert_eq!(b0.targets, vec![10, 11, 3, 20, 3, IGNORE]);
        // ctx 4 truncates the long sentence to 4 inputs.
        let b1 = &batches[1];
        assert_eq!((b1.b, b1.t), (1, 4));
        assert_eq!(b1.inputs, vec![2, 30, 31, 32]);
    }

    #[test]
    fn sentence_batches_carry_expanded_trees() {
        use crate::tree::EXCLUDED;
        // Two source tokens at distance 1; ids = BOS tokA tokA tokB EOS.
        let tree = TreeDistanceMatrix {
            n: 2,
            d: vec![0, 1, 1, 0],
        };
        let seq = Sequence {
            ids: vec![2, 10, 11, 12, 3],
            token_of: Some(vec![None, Some(0), Some(0), Some(1), None]),
            tree: Some(tree),
        };
        let batches = sentence_batches(&[seq], &[0], 1, 8, 0, true);
        let tr = &batches[0].trees.as_ref().unwrap()[0];
        assert_eq!(tr.n, 4);
        assert_eq!(tr.get(0, 0), EXCLUDED); // BOS
        assert_eq!(tr.get(1, 2), 0); // same token
        assert_eq!(tr.get(1, 3), 1);
        assert_eq!(tr.get(3, 3), 0);
    }
}
