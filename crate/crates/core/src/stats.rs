//! Small statistics kit: one-degree-of-freedom goodness-of-fit against
//! chance, its survival function, and seed aggregation helpers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("chi-square test needs at least one item")]
    NoItems,
    #[error("n_correct {correct} exceeds n_items {items}")]
    CorrectExceedsItems { correct: usize, items: usize },
    #[error("aggregation needs at least one value")]
    NoValues,
}

/// Goodness-of-fit statistic and p-value for `n_correct` successes out of
/// `n_items` against a chance rate of one half (1 degree of freedom).
pub fn chi2_vs_chance(n_correct: usize, n_items: usize) -> Result<(f64, f64), StatsError> {
    if n_items == 0 {
        return Err(StatsError::NoItems);
    }
    if n_correct > n_items {
        return Err(StatsError::CorrectExceedsItems {
            correct: n_correct,
            items: n_items,
        });
    }
    let n = n_items as f64;
    let expected = n / 2.0;
    let a = n_correct as f64 - expected;
    let b = (n_items - n_correct) as f64 - expected;
    let stat = a * a / expected + b * b / expected;
    Ok((stat, chi2_survival(stat, 1.0)))
}

/// Survival function of the chi-square distribution: `P(X > x)` with `df`
/// degrees of freedom, via the regularized upper incomplete gamma function.
pub fn chi2_survival(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    upper_regularized_gamma(df / 2.0, x / 2.0)
}

/// Q(a, x) = Γ(a, x) / Γ(a), computed by the series for x < a + 1 and the
/// Lentz continued fraction otherwise.
fn upper_regularized_gamma(a: f64, x: f64) -> f64 {
    if x < a + 1.0 {
        1.0 - lower_gamma_series(a, x)
    } else {
        upper_gamma_continued_fraction(a, x)
    }
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation, g = 7, n = 9.
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        pi.ln() - (pi * x).sin().ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = COEF[0];
        for (i, &c) in COEF.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + 7.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

fn lower_gamma_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut n = a;
    for _ in 0..500 {
        n += 1.0;
        term *= x / n;
        sum += term;
        if term.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn upper_gamma_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Significance stars at the conventional thresholds.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// Mean and sample standard deviation (n - 1 denominator); SD is `None` for a
/// single value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: Option<f64>,
}

pub fn mean_sd(values: &[f64]) -> Result<MeanSd, StatsError> {
    if values.is_empty() {
        return Err(StatsError::NoValues);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok(MeanSd { mean, sd: None });
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(MeanSd {
        mean,
        sd: Some(var.sqrt()),
    })
}
