//! Estimators for the verification sweeps.

use alloc::vec::Vec;

use crate::error::{domain, Result};
use crate::linalg::pairwise_sum;

/// Result of fitting `observed ≈ c · predicted` in log space.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConstantFit {
    pub constant: f64,
    /// Root-mean-square log residual.
    pub residual_spread: f64,
}

/// Least squares for `ln observed = ln c + ln predicted`. Needs at least three
/// strictly positive pairs.
pub fn fit_constant(samples: &[(f64, f64)]) -> Result<ConstantFit> {
    if samples.len() < 3 {
        return Err(domain("sample count for constant fit (need ≥ 3)", samples.len() as f64));
    }
    let mut logs = Vec::with_capacity(samples.len());
    for &(p, o) in samples {
        if !(p > 0.0 && p.is_finite()) {
            return Err(domain("predicted value (need > 0)", p));
        }
        if !(o > 0.0 && o.is_finite()) {
            return Err(domain("observed value (need > 0)", o));
        }
        logs.push(libm::log(o) - libm::log(p));
    }
    let m = samples.len() as f64;
    let ln_c = pairwise_sum(&logs) / m;
    let sq: Vec<f64> = logs.iter().map(|l| (l - ln_c) * (l - ln_c)).collect();
    Ok(ConstantFit { constant: libm::exp(ln_c), residual_spread: libm::sqrt(pairwise_sum(&sq) / m) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Ordinary least-squares line through `(x, y)`.
pub fn ols(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(domain("regression sample count (need ≥ 2 matched pairs)", xs.len().min(ys.len()) as f64));
    }
    let m = xs.len() as f64;
    let mx = pairwise_sum(xs) / m;
    let my = pairwise_sum(ys) / m;
    let sxy: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let sxx: Vec<f64> = xs.iter().map(|x| (x - mx) * (x - mx)).collect();
    let sxx = pairwise_sum(&sxx);
    if !(sxx > 0.0) {
        return Err(domain("regressor variance", sxx));
    }
    let slope = pairwise_sum(&sxy) / sxx;
    Ok(LineFit { slope, intercept: my - slope * mx })
}

/// Linear-interpolated quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Sorts a copy and returns its median.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// Minimum, median and maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Summary {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

pub fn summarize(xs: &[f64]) -> Summary {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Summary { min: v[0], median: quantile_sorted(&v, 0.5), max: v[v.len() - 1] }
}

fn ln_binom_pmf(k: u64, n: u64, p: f64) -> f64 {
    let (k_f, n_f) = (k as f64, n as f64);
    libm::lgamma(n_f + 1.0) - libm::lgamma(k_f + 1.0) - libm::lgamma(n_f - k_f + 1.0)
        + k_f * libm::log(p)
        + (n_f - k_f) * libm::log1p(-p)
}

/// `P(X ≥ k)` for `X ~ Binomial(n, p)`.
pub fn binomial_upper_tail(k: u64, n: u64, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let terms: Vec<f64> = (k..=n).map(|j| libm::exp(ln_binom_pmf(j, n, p))).collect();
    pairwise_sum(&terms).min(1.0)
}

/// Two-sided Clopper–Pearson interval for `k` successes in `n` trials at
/// the given confidence (e.g. `0.99`).
pub fn clopper_pearson(k: u64, n: u64, confidence: f64) -> Result<(f64, f64)> {
    if n == 0 || k > n {
        return Err(domain("binomial counts", k as f64));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(domain("confidence level", confidence));
    }
    let alpha = 1.0 - confidence;
    let lower = if k == 0 {
        0.0
    } else {
        // P(X ≥ k; p) increases with p
        bisect(|p| binomial_upper_tail(k, n, p) - 0.5 * alpha)
    };
    let upper = if k == n {
        1.0
    } else {
        // P(X ≤ k; p) = 1 − P(X ≥ k+1; p) decreases with p
        bisect(|p| 0.5 * alpha - (1.0 - binomial_upper_tail(k + 1, n, p)))
    };
    Ok((lower, upper))
}

/// Root of an increasing function on `(0, 1)`.
fn bisect(f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}
