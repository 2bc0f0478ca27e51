//! Learning-rate schedules. Steps are 0-based; `lr_at(step)` is the rate
//! applied by the update performed at that step.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    /// Linear 0 -> lr over `warmup` steps, then linear lr -> 0 at `max_steps`.
    WarmupLinearDecay { lr: f64, warmup: u64, max_steps: u64 },
    /// Linear 0 -> lr over `warmup` steps, then flat.
    WarmupConstant { lr: f64, warmup: u64 },
}

impl LrSchedule {
    pub fn lr_at(&self, step: u64) -> f64 {
        match *self {
            LrSchedule::WarmupLinearDecay {
                lr,
                warmup,
                max_steps,
            } => {
                if warmup > 0 && step < warmup {
                    lr * step as f64 / warmup as f64
                } else if step >= max_steps {
                    0.0
                } else {
                    let span = (max_steps - warmup).max(1);
                    lr * (max_steps - step) as f64 / span as f64
                }
            }
            LrSchedule::WarmupConstant { lr, warmup } => {
                if warmup > 0 && step < warmup {
                    lr * step as f64 / warmup as f64
                } else {
                    lr
                }
            }
        }
    }

    pub fn peak(&self) -> f64 {
        match *self {
            LrSchedule::WarmupLinearDecay { lr, .. } => lr,
            LrSchedule::WarmupConstant { lr, .. } => lr,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchor_points() {
        let s = LrSchedule::WarmupLinearDecay {
            lr: 3e-4,
            warmup: 100,
            max_steps: 1000,
        };
        assert_eq!(s.lr_at(0), 0.0);
        assert_eq!(s.lr_at(50), 1.5e-4);
        assert_eq!(s.lr_at(100), 3e-4);
        assert_eq!(s.lr_at(550), 1.5e-4);
        assert_eq!(s.lr_at(1000), 0.0);
        assert_eq!(s.lr_at(2000), 0.0);
    }

    #[test]
    fn no_warmup_starts_at_peak() {
        let s = LrSchedule::WarmupLinearDecay {
            lr: 1e-3,
            warmup: 0,
            max_steps: 10,
        };
        assert_eq!(s.lr_at(0), 1e-3);
        assert_eq!(s.lr_at(5), 5e-4);
    }

    #[test]
    fn constant_holds_after_warmup() {
        let s = LrSchedule::WarmupConstant { lr: 1e-3, warmup: 4 };
        assert_eq!(s.lr_at(0), 0.0);
        assert_eq!(s.lr_at(2), 5e-4);
        assert_eq!(s.lr_at(4), 1e-3);
        assert_eq!(s.lr_at(40000), 1e-3);
    }
}
