//! Central-difference gradient checking against the analytic backward pass.
//! Only meaningful at f64 with dropout disabled.

use crate::config::AttentionBiasMode;
use crate::transformer::{Batch, Model};

#[derive(Debug, Clone)]
pub struct FdReport {
    pub checked: usize,
    pub within_tol: usize,
    pub max_rel: f64,
    /// (tensor name, offset within it, analytic, numeric) for the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

impl FdReport {
    pub fn fraction_within(&self) -> f64 {
        if self.checked == 0 {
            1.0
        } else {
            self.within_tol as f64 / self.checked as f64
        }
    }
}

/// rel = |a - n| / max(|a| + |n|, 1e-6); the floor keeps genuinely zero
/// gradients from amplifying finite-difference noise.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6)
}

/// Checks every coordinate of every tensor. `eps` is the half-step of the
/// central difference; `tol` the relative-error bound counted as passing.
pub fn check_all(
    model: &mut Model<f64>,
    batch: &Batch,
    mode: AttentionBiasMode,
    epoch: u32,
    eps: f64,
    tol: f64,
) -> FdReport {
    let (_, grads) = model
        .loss_and_grad::<rand::rngs::StdRng>(batch, mode, epoch, None)
        .expect("analytic pass");
    let mut report = FdReport {
        checked: 0,
        within_tol: 0,
        max_rel: 0.0,
        worst: None,
    };
    let n = model.params.data.len();
    for flat in 0..n {
        let orig = model.params.data[flat];
        model.params.data[flat] = orig + eps;
        let up = model.loss(batch, mode, epoch).expect("fd +eps").total_loss;
        model.params.data[flat] = orig - eps;
        let down = model.loss(batch, mode, epoch).expect("fd -eps").total_loss;
        model.params.data[flat] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let analytic = grads.data[flat];
        let rel = rel_err(analytic, numeric);
        report.checked += 1;
        if rel <= tol {
            report.within_tol += 1;
        }
        if rel > report.max_rel {
            report.max_rel = rel;
            let entry = model
                .params
                .layout
                .entries
                .iter()
                .find(|e| flat >= e.offset && flat < e.offset + e.len())
                .expect("flat index inside layout");
            report.worst = Some((entry.name.clone(), flat - entry.offset, analytic, numeric));
        }
    }
    report
}
