//! Closed-form eigenvalue bounds, truncation-degree selection and width
//! requirements. Every suppressed universal constant is an explicit input.

use alloc::vec::Vec;
use core::f64::consts::SQRT_2;

use crate::error::{domain, Result};
use crate::specfun::{self, Activation};

/// Universal constants hidden behind `≳`/`≲`. All default to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct BoundConstants {
    /// `C` in the truncation-degree case split.
    pub regime: f64,
    /// Multiplier of the shallow width requirement.
    pub shallow_width: f64,
    /// Multiplier of the deep first-layer width requirement.
    pub deep_width_first: f64,
    /// Multiplier of the deep last-hidden-layer width requirement.
    pub deep_width_last: f64,
    /// `C` in the spherical-cap upper bound.
    pub cap: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        BoundConstants { regime: 1.0, shallow_width: 1.0, deep_width_first: 1.0, deep_width_last: 1.0, cap: 1.0 }
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d < 3 {
        return Err(domain("input dimension d (need ≥ 3)", d as f64));
    }
    Ok(())
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(domain("failure probability ε (need 0 < ε < 1)", eps));
    }
    Ok(())
}

/// `(1 + d·ln(1/δ)/ln d)^{−3}` with `ln(1/δ)` floored at 0, so that the
/// prefactor stays in `(0, 1]` for `δ ≥ 1`.
fn log_prefactor(d: usize, delta: f64) -> f64 {
    let d_f = d as f64;
    let base = 1.0 + d_f * libm::log(1.0 / delta).max(0.0) / libm::log(d_f);
    1.0 / (base * base * base)
}

/// `λ = (1 + d ln(1/δ)/ln d)^{−3} δ²` for `δ ∈ (0, √2)`.
pub fn shallow_lambda_lower(d: usize, delta: f64) -> Result<f64> {
    check_dim(d)?;
    if !(delta > 0.0 && delta < SQRT_2) {
        return Err(domain("separation δ (need 0 < δ < √2)", delta));
    }
    Ok(log_prefactor(d, delta) * delta * delta)
}

/// `λ = (1 + d₀ ln(1/δ)/ln d₀)^{−3} δ⁴` for `δ ∈ (0, √2]`.
pub fn deep_lambda_lower(d0: usize, delta: f64) -> Result<f64> {
    check_dim(d0)?;
    if !(delta > 0.0 && delta <= SQRT_2) {
        return Err(domain("separation δ (need 0 < δ ≤ √2)", delta));
    }
    let sq = delta * delta;
    Ok(log_prefactor(d0, delta) * sq * sq)
}

/// Lower and upper rates for uniform data.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UniformBounds {
    /// `(1 + ln(n/ε)/ln d)^{−3} (ε²/n⁴)^{1/(d−1)}`
    pub lambda: f64,
    /// `(ln(1/ε)/n²)^{1/(d−1)}`
    pub upper: f64,
}

pub fn uniform_bounds(d: usize, n: usize, eps: f64) -> Result<UniformBounds> {
    check_dim(d)?;
    check_eps(eps)?;
    if n < 2 {
        return Err(domain("number of points n (need ≥ 2)", n as f64));
    }
    let (d_f, n_f) = (d as f64, n as f64);
    let e = 1.0 / (d_f - 1.0);
    let base = 1.0 + libm::log(n_f / eps) / libm::log(d_f);
    let lambda = libm::pow(eps * eps / libm::pow(n_f, 4.0), e) / (base * base * base);
    let upper = libm::pow(libm::log(1.0 / eps) / (n_f * n_f), e);
    Ok(UniformBounds { lambda, upper })
}

/// Truncation degree `R` and harmonic count `N = C(2R+β+d−1, d−1)` chosen by
/// the three-case analysis of the hemisphere transform.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegimePlan {
    pub case_id: u8,
    pub truncation: u64,
    pub beta: u8,
    /// `N`, exact while below 2^53.
    pub harmonic_count: f64,
    pub universal_const: f64,
}

/// Evaluates the case guards in order:
///
/// 1. `d ≥ C(δ⁴/2)^{−(d−2)/2}`: `R = 1`.
/// 2. `√d ln d ≥ (8 ln(1+C) + 16d) ln(2/δ)`: `R = ⌈(ln(1+C) + 2d ln(2/δ))/ln d⌉`.
/// 3. otherwise `R = ⌈(1+2C) d (2/δ)^{2(d−2)/(d−1)}⌉`.
///
/// Case 2 needs `ln d/√d ≥ 16 ln √2 ≈ 5.5`, which no `d` satisfies when
/// `δ < √2`; it is kept for completeness.
pub fn select_truncation(d: usize, delta: f64, beta: u8, universal_const: f64) -> Result<RegimePlan> {
    check_dim(d)?;
    if !(delta > 0.0 && delta < SQRT_2) {
        return Err(domain("separation δ (need 0 < δ < √2)", delta));
    }
    if beta > 1 {
        return Err(domain("parity β (need 0 or 1)", beta as f64));
    }
    if !(universal_const > 0.0 && universal_const.is_finite()) {
        return Err(domain("universal constant C", universal_const));
    }
    let (d_f, c) = (d as f64, universal_const);
    let ln_2_delta = libm::log(2.0 / delta);
    let (case_id, truncation) = if d_f >= cap_threshold(d, delta, c) {
        (1, 1.0)
    } else if libm::sqrt(d_f) * libm::log(d_f) >= (8.0 * libm::log(1.0 + c) + 16.0 * d_f) * ln_2_delta {
        (2, libm::ceil((libm::log(1.0 + c) + 2.0 * d_f * ln_2_delta) / libm::log(d_f)))
    } else {
        let e = 2.0 * (d_f - 2.0) / (d_f - 1.0);
        (3, libm::ceil((1.0 + 2.0 * c) * d_f * libm::pow(2.0 / delta, e)))
    };
    if !(truncation < 1e15) {
        return Err(domain("truncation degree R (too large)", truncation));
    }
    let truncation = truncation as u64;
    Ok(RegimePlan {
        case_id,
        truncation,
        beta,
        harmonic_count: harmonic_count(truncation, beta, d as u64),
        universal_const,
    })
}

/// `C (δ⁴/2)^{−(d−2)/2}`, the harmonic count needed by the Gershgorin argument.
pub fn cap_threshold(d: usize, delta: f64, universal_const: f64) -> f64 {
    universal_const * libm::pow(libm::pow(delta, 4.0) / 2.0, -(d as f64 - 2.0) / 2.0)
}

fn harmonic_count(truncation: u64, beta: u8, d: u64) -> f64 {
    let top = 2 * truncation + beta as u64 + d - 1;
    match specfun::binomial(top, d - 1) {
        Ok(v) => v as f64,
        Err(_) => libm::round(libm::exp(specfun::ln_binomial(top as f64, (d - 1) as f64))),
    }
}

/// `(d+R)^{1/2} d^{−1/2} R^{−3/2}` for `σ̇`, `(d+R)^{−1/2} d^{1/2} R^{−3/2}` for `√d·σ`.
pub fn implicit_transform_rate(d: usize, truncation: u64, psi: Activation) -> Result<f64> {
    if truncation == 0 {
        return Err(domain("truncation degree R (need ≥ 1)", 0.0));
    }
    if d == 0 {
        return Err(domain("dimension d", 0.0));
    }
    let (d_f, r) = (d as f64, truncation as f64);
    let ratio = libm::sqrt((d_f + r) / d_f);
    let tail = libm::pow(r, -1.5);
    Ok(match psi {
        Activation::ReluDerivative => ratio * tail,
        Activation::ScaledRelu => tail / ratio,
    })
}

/// Width requirements at or above this are reported as saturated.
pub const WIDTH_SATURATION: u64 = 1 << 31;

/// A ceiling-rounded width requirement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Width {
    pub value: u64,
    pub saturated: bool,
}

impl Width {
    fn from_real(x: f64) -> Width {
        let c = libm::ceil(x);
        if c >= WIDTH_SATURATION as f64 {
            Width { value: WIDTH_SATURATION, saturated: true }
        } else {
            Width { value: c.max(0.0) as u64, saturated: false }
        }
    }
}

/// `⌈const · ‖X‖²/λ · ln(n/ε)⌉` with `λ = shallow_lambda_lower(d, δ)`.
pub fn width_requirement_shallow(
    n: usize,
    d: usize,
    delta: f64,
    opnorm_sq: f64,
    eps: f64,
    constant: f64,
) -> Result<Width> {
    check_eps(eps)?;
    if n == 0 {
        return Err(domain("number of points n", 0.0));
    }
    if !(opnorm_sq > 0.0) {
        return Err(domain("squared operator norm ‖X‖²", opnorm_sq));
    }
    if !(constant > 0.0) {
        return Err(domain("width constant", constant));
    }
    let lambda = shallow_lambda_lower(d, delta)?;
    Ok(Width::from_real(constant * opnorm_sq / lambda * libm::log(n as f64 / eps)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DeepWidths {
    /// `d₁ ≥ (n/λ) ln(n/λ) ln(n/ε)`
    pub first: Width,
    /// `d_{L−1} ≥ 2^L ln(nL/ε)`
    pub last: Width,
}

pub fn width_requirement_deep(
    n: usize,
    d0: usize,
    delta: f64,
    depth: usize,
    eps: f64,
    consts: &BoundConstants,
) -> Result<DeepWidths> {
    check_eps(eps)?;
    if n == 0 {
        return Err(domain("number of points n", 0.0));
    }
    if depth < 3 {
        return Err(domain("depth L (need ≥ 3)", depth as f64));
    }
    if !(consts.deep_width_first > 0.0 && consts.deep_width_last > 0.0) {
        return Err(domain("deep width constant", consts.deep_width_first.min(consts.deep_width_last)));
    }
    let lambda = deep_lambda_lower(d0, delta)?;
    let n_f = n as f64;
    let ratio = n_f / lambda;
    let first = consts.deep_width_first * ratio * libm::log(ratio) * libm::log(n_f / eps);
    let last = consts.deep_width_last * libm::pow(2.0, depth as f64) * libm::log(n_f * depth as f64 / eps);
    Ok(DeepWidths { first: Width::from_real(first), last: Width::from_real(last) })
}

/// `(N/2) · min_{r ≤ R} c_{2r+β,d}²` for the plan's `R` and `β`, the lower
/// bound on `‖T_ψ μ_z‖²` before asymptotic simplification.
pub fn hemisphere_lower_exact(plan: &RegimePlan, d: usize, psi: Activation) -> Result<f64> {
    let beta = plan.beta as usize;
    let mut c_min_sq = f64::INFINITY;
    for r in 0..=plan.truncation as usize {
        let c = specfun::funk_hecke_coeff(2 * r + beta, d, psi)?;
        c_min_sq = c_min_sq.min(c * c);
    }
    Ok(0.5 * plan.harmonic_count * c_min_sq)
}

/// Which theorem a [`BoundReport`] instantiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Architecture {
    Shallow,
    Deep,
}

/// Everything needed to audit one bound evaluation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundReport {
    pub architecture: Architecture,
    pub n: usize,
    pub d0: usize,
    pub delta: f64,
    /// `δ′` for shallow networks, absent for deep ones.
    pub delta_prime: Option<f64>,
    pub depth: usize,
    pub eps: f64,
    pub opnorm_sq: Option<f64>,
    pub constants: BoundConstants,
    pub lambda_lower: f64,
    /// `δ′` (shallow) or `L` (deep), constant 1.
    pub lambda_upper: f64,
    pub d1_required: Width,
    pub d_last_required: Option<Width>,
    pub regime: RegimePlan,
    /// `min_{r ≤ R} c_{2r+β,d}²`
    pub c_min_sq: f64,
    pub hemisphere_lower_exact: f64,
    pub empirical_lambda_min: Option<f64>,
    pub ratio_lower: Option<f64>,
    pub ratio_upper: Option<f64>,
}

fn c_min_sq(plan: &RegimePlan, d: usize, psi: Activation) -> Result<f64> {
    Ok(2.0 * hemisphere_lower_exact(plan, d, psi)? / plan.harmonic_count)
}

impl BoundReport {
    /// Theorem for one-hidden-layer networks on `n` points in `R^{d0}`.
    pub fn shallow(
        n: usize,
        d0: usize,
        delta: f64,
        delta_prime: f64,
        opnorm_sq: f64,
        eps: f64,
        constants: BoundConstants,
    ) -> Result<Self> {
        let lambda_lower = shallow_lambda_lower(d0, delta)?;
        let d1_required = width_requirement_shallow(n, d0, delta, opnorm_sq, eps, constants.shallow_width)?;
        let psi = Activation::ReluDerivative;
        let regime = select_truncation(d0, delta, psi.beta(), constants.regime)?;
        let c_min_sq = c_min_sq(&regime, d0, psi)?;
        Ok(BoundReport {
            architecture: Architecture::Shallow,
            n,
            d0,
            delta,
            delta_prime: Some(delta_prime),
            depth: 2,
            eps,
            opnorm_sq: Some(opnorm_sq),
            constants,
            lambda_lower,
            lambda_upper: delta_prime,
            d1_required,
            d_last_required: None,
            regime,
            c_min_sq,
            hemisphere_lower_exact: 0.5 * regime.harmonic_count * c_min_sq,
            empirical_lambda_min: None,
            ratio_lower: None,
            ratio_upper: None,
        })
    }

    /// Theorem for depth-`L` pyramidal networks.
    pub fn deep(n: usize, d0: usize, delta: f64, depth: usize, eps: f64, constants: BoundConstants) -> Result<Self> {
        let lambda_lower = deep_lambda_lower(d0, delta)?;
        let widths = width_requirement_deep(n, d0, delta, depth, eps, &constants)?;
        let psi = Activation::ScaledRelu;
        // the regime analysis is stated for δ < √2
        let regime = select_truncation(d0, delta.min(SQRT_2 * (1.0 - 1e-12)), psi.beta(), constants.regime)?;
        let c_min_sq = c_min_sq(&regime, d0, psi)?;
        Ok(BoundReport {
            architecture: Architecture::Deep,
            n,
            d0,
            delta,
            delta_prime: None,
            depth,
            eps,
            opnorm_sq: None,
            constants,
            lambda_lower,
            lambda_upper: depth as f64,
            d1_required: widths.first,
            d_last_required: Some(widths.last),
            regime,
            c_min_sq,
            hemisphere_lower_exact: 0.5 * regime.harmonic_count * c_min_sq,
            empirical_lambda_min: None,
            ratio_lower: None,
            ratio_upper: None,
        })
    }

    /// Attaches a measured smallest eigenvalue and the two ratios.
    pub fn with_empirical(mut self, lambda_min: f64) -> Self {
        self.empirical_lambda_min = Some(lambda_min);
        self.ratio_lower = Some(lambda_min / self.lambda_lower);
        self.ratio_upper = Some(lambda_min / self.lambda_upper);
        self
    }
}

/// Regime plans for a grid of separations, for sweep reporting.
pub fn regime_table(d: usize, deltas: &[f64], beta: u8, universal_const: f64) -> Result<Vec<RegimePlan>> {
    deltas.iter().map(|&delta| select_truncation(d, delta, beta, universal_const)).collect()
}
