use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Result, StatsError};

/// Below this many discordant pairs the exact binomial test is used.
pub const MCNEMAR_EXACT_BELOW: u64 = 25;
/// Up to this many non-zero differences (without ties) the signed-rank
/// distribution is enumerated exactly.
pub const WILCOXON_EXACT_MAX: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum McNemarMethod {
    Exact,
    ChiSquareCorrected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    pub b: u64,
    pub c: u64,
    /// `min(b, c)` for the exact test, the corrected chi-square otherwise.
    pub statistic: f64,
    pub p_value: f64,
    pub method: McNemarMethod,
}

fn ln_choose(n: u64, k: u64) -> f64 {
    statrs::function::factorial::ln_binomial(n, k)
}

/// `P(X <= k)` for `X ~ Binomial(n, 1/2)`.
fn binomial_half_cdf(k: u64, n: u64) -> f64 {
    let ln_half_n = -(n as f64) * std::f64::consts::LN_2;
    (0..=k).map(|i| (ln_choose(n, i) + ln_half_n).exp()).sum()
}

/// McNemar's test on the discordant counts of a paired 2×2 table.
pub fn mcnemar(b: u64, c: u64) -> Result<McNemarResult> {
    let n = b + c;
    if n == 0 {
        return Err(StatsError::Undefined("no discordant pairs".into()));
    }
    if n < MCNEMAR_EXACT_BELOW {
        let k = b.min(c);
        Ok(McNemarResult {
            b,
            c,
            statistic: k as f64,
            p_value: (2.0 * binomial_half_cdf(k, n)).min(1.0),
            method: McNemarMethod::Exact,
        })
    } else {
        let d = (b as f64 - c as f64).abs() - 1.0;
        let stat = d * d / n as f64;
        let chi = ChiSquared::new(1.0).expect("valid degrees of freedom");
        Ok(McNemarResult {
            b,
            c,
            statistic: stat,
            p_value: chi.sf(stat).clamp(0.0, 1.0),
            method: McNemarMethod::ChiSquareCorrected,
        })
    }
}

/// Two-sided tail probability of a standard normal deviate.
pub fn two_sided_normal_p(z: f64) -> f64 {
    (2.0 * std_normal().sf(z.abs())).min(1.0)
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WilcoxonMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Pairs left after dropping zero differences.
    pub n_effective: usize,
    /// Sum of ranks of the positive differences `x - y`.
    pub w_plus: f64,
    /// Standardized statistic with continuity correction; its sign follows
    /// `w_plus` relative to its null mean.
    pub z: f64,
    pub p_value: f64,
    pub method: WilcoxonMethod,
}

/// Midranks of `values` (1-based) and the sizes of tied groups.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

/// Null distribution of the signed-rank sum for ranks `1..=n`: entry `w`
/// counts the sign patterns with `W+ = w`.
fn signed_rank_counts(n: usize) -> Vec<f64> {
    let max = n * (n + 1) / 2;
    let mut counts = vec![0.0; max + 1];
    counts[0] = 1.0;
    for r in 1..=n {
        for w in (r..=max).rev() {
            counts[w] += counts[w - r];
        }
    }
    counts
}

/// Wilcoxon signed-rank test on paired samples, two-sided.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<WilcoxonResult> {
    if x.len() != y.len() {
        return Err(StatsError::Shape(format!("paired samples of {} and {}", x.len(), y.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|v| *v != 0.0).collect();
    if d.is_empty() {
        return Err(StatsError::Undefined("all differences are zero".into()));
    }
    let n = d.len();
    if n < 3 {
        return Err(StatsError::Size { n, min: 3, max: usize::MAX });
    }
    let (ranks, ties) = midranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let sd = (nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term).sqrt();
    let diff = w_plus - mean;
    let z = if sd > 0.0 && diff.abs() >= 0.5 {
        (diff - 0.5 * diff.signum()) / sd
    } else {
        0.0
    };

    let (p_value, method) = if n <= WILCOXON_EXACT_MAX && ties.is_empty() {
        let counts = signed_rank_counts(n);
        let total = 2f64.powi(n as i32);
        let w = w_plus.round() as usize;
        let lower: f64 = counts[..=w].iter().sum::<f64>() / total;
        let upper: f64 = counts[w..].iter().sum::<f64>() / total;
        ((2.0 * lower.min(upper)).min(1.0), WilcoxonMethod::Exact)
    } else {
        (two_sided_normal_p(z), WilcoxonMethod::NormalApprox)
    };
    Ok(WilcoxonResult {
        n_effective: n,
        w_plus,
        z,
        p_value,
        method,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapiroResult {
    pub n: usize,
    pub w: f64,
    pub p_value: f64,
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const C3: [f64; 4] = [0.544, -0.39978, 0.025054, -6.714e-4];
const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
const G: [f64; 2] = [-2.273, 0.459];

/// Coefficients for the upper half of the order statistics, largest first.
fn shapiro_coefficients(n: usize) -> Vec<f64> {
    let half = n / 2;
    if n == 3 {
        return vec![std::f64::consts::FRAC_1_SQRT_2];
    }
    let normal = std_normal();
    let nf = n as f64;
    let m: Vec<f64> = (1..=half)
        .map(|i| -normal.inverse_cdf((i as f64 - 0.375) / (nf + 0.25)))
        .collect();
    let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / nf.sqrt();
    let a1 = poly(&C1, rsn) + m[0] / ssumm2;
    let mut a = vec![0.0; half];
    a[0] = a1;
    let (start, fac) = if n > 5 {
        let a2 = m[1] / ssumm2 + poly(&C2, rsn);
        a[1] = a2;
        let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2)).sqrt();
        (2, fac)
    } else {
        let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
        (1, fac)
    };
    for i in start..half {
        a[i] = m[i] / fac;
    }
    a
}

/// Shapiro-Wilk test of normality using Royston's approximations for the
/// coefficients and the null distribution of W.
pub fn shapiro_wilk(sample: &[f64]) -> Result<ShapiroResult> {
    let n = sample.len();
    if !(3..=5000).contains(&n) {
        return Err(StatsError::Size { n, min: 3, max: 5000 });
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let mean = x.iter().sum::<f64>() / n as f64;
    let ss: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let range = x[n - 1] - x[0];
    if range <= 0.0 || ss <= f64::MIN_POSITIVE {
        return Err(StatsError::ZeroVariance);
    }
    let a = shapiro_coefficients(n);
    let num: f64 = a.iter().enumerate().map(|(i, ai)| ai * (x[n - 1 - i] - x[i])).sum();
    let w = (num * num / ss).min(1.0);

    let p_value = if n == 3 {
        let six_over_pi = 6.0 / std::f64::consts::PI;
        (six_over_pi * (w.sqrt().asin() - std::f64::consts::FRAC_PI_3)).clamp(0.0, 1.0)
    } else {
        let nf = n as f64;
        let y = (1.0 - w).ln();
        let (y, m, s) = if n <= 11 {
            let gamma = poly(&G, nf);
            if y >= gamma {
                return Ok(ShapiroResult { n, w, p_value: 1e-99 });
            }
            (-(gamma - y).ln(), poly(&C3, nf), poly(&C4, nf).exp())
        } else {
            let ln_n = nf.ln();
            (y, poly(&C5, ln_n), poly(&C6, ln_n).exp())
        };
        std_normal().sf((y - m) / s)
    };
    Ok(ShapiroResult {
        n,
        w,
        p_value: p_value.clamp(0.0, 1.0),
    })
}
