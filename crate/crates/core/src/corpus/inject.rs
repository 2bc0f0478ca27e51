//! Controlled re-injection of evidence sentences into a filtered corpus.
//!
//! Replacement, not insertion: corpus size and token budget stay comparable
//! across conditions. Positions are sampled uniformly without replacement and
//! are disjoint across phenomena; replacement sentences are drawn without
//! replacement from the pool while it lasts, then with replacement.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::conllu::SentenceRecord;
use crate::corpus::filters::{
    is_binding_evidence, is_qf_evidence, FilterConfig, Phenomenon,
};
use crate::rng;

#[derive(Debug, Error)]
pub enum InjectError {
    #[error("injection rate for {phenomenon:?} is {rate}; must be in [0, 0.01]")]
    RateOutOfRange { phenomenon: Phenomenon, rate: f64 },
    #[error("empty evidence pool for {phenomenon:?} with nonzero rate {rate}")]
    EmptyPool { phenomenon: Phenomenon, rate: f64 },
    #[error("pool sentence {id:?} does not satisfy the {phenomenon:?} evidence predicate")]
    PoolMismatch { phenomenon: Phenomenon, id: String },
    #[error("requested {requested} replacements but the corpus has {corpus} sentences")]
    CorpusTooSmall { requested: usize, corpus: usize },
}

/// One injection pass. `injected_ids` maps each phenomenon to the corpus
/// positions that were replaced (sorted), for provenance.
#[derive(Debug, Clone)]
pub struct InjectOutcome {
    pub corpus: Vec<SentenceRecord>,
    pub injected_positions: BTreeMap<Phenomenon, Vec<usize>>,
}

fn satisfies(ph: Phenomenon, rec: &SentenceRecord, cfg: &FilterConfig) -> bool {
    match ph {
        Phenomenon::QuestionFormation => is_qf_evidence(rec, cfg),
        Phenomenon::Binding => is_binding_evidence(rec),
    }
}

/// Replace `round(rate * n)` sentences per phenomenon with pool sentences.
/// Deterministic in `seed`; phenomena are processed in a fixed order so rate
/// maps with the same contents always produce the same corpus.
pub fn inject_evidence(
    mut corpus: Vec<SentenceRecord>,
    pools: &BTreeMap<Phenomenon, Vec<SentenceRecord>>,
    rates: &BTreeMap<Phenomenon, f64>,
    seed: u64,
    cfg: &FilterConfig,
) -> Result<InjectOutcome, InjectError> {
    let n = corpus.len();
    let mut counts: Vec<(Phenomenon, usize)> = Vec::new();
    for (&ph, &rate) in rates {
        if !(0.0..=0.01).contains(&rate) || !rate.is_finite() {
            return Err(InjectError::RateOutOfRange { phenomenon: ph, rate });
        }
        let k = (rate * n as f64).round() as usize;
        if k == 0 {
            continue;
        }
        let pool = pools.get(&ph).map(Vec::as_slice).unwrap_or(&[]);
        if pool.is_empty() {
            return Err(InjectError::EmptyPool { phenomenon: ph, rate });
        }
        for rec in pool {
            if !satisfies(ph, rec, cfg) {
                return Err(InjectError::PoolMismatch {
                    phenomenon: ph,
                    id: rec.id.clone(),
                });
            }
        }
        counts.push((ph, k));
    }
    let total: usize = counts.iter().map(|(_, k)| k).sum();
    if total > n {
        return Err(InjectError::CorpusTooSmall { requested: total, corpus: n });
    }

    // One shuffled position list shared by all phenomena keeps the chosen
    // positions disjoint while each phenomenon still gets exactly its count.
    let mut pos_rng = rng::stream(seed, "inject-positions");
    let mut positions: Vec<usize> = (0..n).collect();
    positions.shuffle(&mut pos_rng);
    let mut cursor = 0usize;

    let mut injected_positions = BTreeMap::new();
    for (ph, k) in counts {
        let label = match ph {
            Phenomenon::QuestionFormation => "inject-pool-qf",
            Phenomenon::Binding => "inject-pool-binding",
        };
        let mut pool_rng = rng::stream(seed, label);
        let pool = &pools[&ph];
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.shuffle(&mut pool_rng);
        let mut taken: Vec<usize> = positions[cursor..cursor + k].to_vec();
        cursor += k;
        taken.sort_unstable();
        for (i, &pos) in taken.iter().enumerate() {
            // Without replacement while the pool lasts, then uniform with
            // replacement.
            let pick = if i < order.len() {
                order[i]
            } else {
                pool_rng.gen_range(0..pool.len())
            };
            corpus[pos] = pool[pick].clone();
        }
        injected_positions.insert(ph, taken);
    }
    Ok(InjectOutcome {
        corpus,
        injected_positions,
    })
}
