//! Shuffled k-Dyck strings: k bracket types interleave freely, but each
//! type's subsequence must be balanced and well-nested on its own.
//!
//! Tokens render as `<o:i>` / `<c:i>` so a corpus of these strings can share
//! a vocabulary with ordinary text without colliding.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyckConfig {
    /// Number of bracket types.
    pub k: usize,
    /// Maximum nesting depth per type.
    pub max_depth: usize,
    /// Inclusive bounds on string length (token count).
    pub len_min: usize,
    pub len_max: usize,
    /// Probability of opening when both opening and closing are possible.
    pub open_prob: f64,
}

impl Default for DyckConfig {
    fn default() -> Self {
        DyckConfig {
            k: 8,
            max_depth: 10,
            len_min: 16,
            len_max: 128,
            open_prob: 0.5,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DyckError {
    #[error("k = {0}; must be in 1..=64")]
    BadK(usize),
    #[error("max_depth must be at least 1")]
    BadDepth,
    #[error("length bounds [{min}, {max}] admit no even length >= 2")]
    InfeasibleLengths { min: usize, max: usize },
    #[error("open_prob = {0}; must be strictly between 0 and 1")]
    BadOpenProb(f64),
}

impl DyckConfig {
    pub fn validate(&self) -> Result<(), DyckError> {
        if self.k == 0 || self.k > 64 {
            return Err(DyckError::BadK(self.k));
        }
        if self.max_depth == 0 {
            return Err(DyckError::BadDepth);
        }
        if self.even_lengths().is_none() {
            return Err(DyckError::InfeasibleLengths {
                min: self.len_min,
                max: self.len_max,
            });
        }
        if !(self.open_prob > 0.0 && self.open_prob < 1.0) {
            return Err(DyckError::BadOpenProb(self.open_prob));
        }
        Ok(())
    }

    /// Inclusive range of admissible even lengths, when nonempty.
    fn even_lengths(&self) -> Option<(usize, usize)> {
        if self.len_min > self.len_max {
            return None;
        }
        let lo = self.len_min.max(2);
        let lo = lo + (lo % 2);
        let hi = self.len_max - (self.len_max % 2);
        if lo > hi {
            None
        } else {
            Some((lo, hi))
        }
    }
}

/// Token strings for every bracket of the configured types, opens before
/// closes; used to reserve tokenizer rows.
pub fn bracket_vocab(k: usize) -> Vec<String> {
    let mut v = Vec::with_capacity(2 * k);
    for i in 0..k {
        v.push(format!("<o:{i}>"));
    }
    for i in 0..k {
        v.push(format!("<c:{i}>"));
    }
    v
}

fn parse_token(tok: &str, k: usize) -> Option<(usize, bool)> {
    let rest = tok.strip_prefix("<o:").map(|r| (r, true)).or_else(|| {
        tok.strip_prefix("<c:").map(|r| (r, false))
    })?;
    let (body, open) = rest;
    let ty: usize = body.strip_suffix('>')?.parse().ok()?;
    (ty < k).then_some((ty, open))
}

/// Per-type stack acceptance: every token parses, no type's counter goes
/// negative, and all counters end at zero. Depth and length bounds are the
/// generator's contract, not part of language membership, so they are not
/// checked here.
pub fn validate_dyck(string: &str, cfg: &DyckConfig) -> bool {
    let mut depth = vec![0i64; cfg.k];
    for tok in string.split_whitespace() {
        match parse_token(tok, cfg.k) {
            Some((ty, true)) => depth[ty] += 1,
            Some((ty, false)) => {
                depth[ty] -= 1;
                if depth[ty] < 0 {
                    return false;
                }
            }
            None => return false,
        }
    }
    depth.iter().all(|&d| d == 0)
}

/// Generate `n` strings. Each string draws from its own RNG stream derived
/// from `(seed, index)`, so regenerating any prefix of the corpus yields the
/// same strings.
pub fn generate_dyck(cfg: &DyckConfig, n: usize, seed: u64) -> Result<Vec<String>, DyckError> {
    cfg.validate()?;
    let (lo, hi) = cfg.even_lengths().expect("validated");
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = rng::stream_indexed(seed, "dyck", i as u64);
        let len = lo + 2 * rng.gen_range(0..=(hi - lo) / 2);
        let mut depth = vec![0usize; cfg.k];
        let mut total_open = 0usize;
        let mut tokens: Vec<String> = Vec::with_capacity(len);
        for pos in 0..len {
            let slots_left = len - pos;
            let openable: Vec<usize> = (0..cfg.k).filter(|&t| depth[t] < cfg.max_depth).collect();
            // Opening is safe only if everything can still be closed in time.
            let can_open = !openable.is_empty() && total_open + 2 <= slots_left;
            let can_close = total_open > 0;
            let open = match (can_open, can_close) {
                (true, false) => true,
                (false, true) => false,
                (true, true) => rng.gen::<f64>() < cfg.open_prob,
                (false, false) => unreachable!("parity keeps one move available"),
            };
            if open {
                let ty = openable[rng.gen_range(0..openable.len())];
                depth[ty] += 1;
                total_open += 1;
                tokens.push(format!("<o:{ty}>"));
            } else {
                let closable: Vec<usize> = (0..cfg.k).filter(|&t| depth[t] > 0).collect();
                let ty = closable[rng.gen_range(0..closable.len())];
                depth[ty] -= 1;
                total_open -= 1;
                tokens.push(format!("<c:{ty}>"));
            }
        }
        out.push(tokens.join(" "));
    }
    Ok(out)
}
