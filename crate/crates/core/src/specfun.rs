//! Gamma ratios, Gegenbauer polynomials, spherical-harmonic dimensions and
//! the Funk–Hecke coefficients of the two activations.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use crate::error::{domain, Error, Result};

pub mod quadrature;

/// `ln Γ(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(domain("log_gamma argument (need x > 0)", x));
    }
    Ok(libm::lgamma_r(x).0)
}

/// `ln |Γ(x)|` and the sign of `Γ(x)`, or `None` at a pole.
fn signed_log_gamma(x: f64) -> Option<(f64, f64)> {
    if x <= 0.0 && x == libm::floor(x) {
        return None;
    }
    let (lg, sign) = libm::lgamma_r(x);
    Some((lg, if sign < 0 { -1.0 } else { 1.0 }))
}

/// `C_r^ν(t)` by the three-term recurrence.
pub fn gegenbauer(r: usize, nu: f64, t: f64) -> f64 {
    let mut prev = 1.0;
    if r == 0 {
        return prev;
    }
    let mut cur = 2.0 * nu * t;
    for k in 2..=r {
        let k_f = k as f64;
        let next = (2.0 * (k_f + nu - 1.0) * t * cur - (k_f + 2.0 * nu - 2.0) * prev) / k_f;
        prev = cur;
        cur = next;
    }
    cur
}

/// `C_0^ν(t), …, C_{r_max}^ν(t)`.
pub fn gegenbauer_all(r_max: usize, nu: f64, t: f64) -> Vec<f64> {
    let mut out = vec![1.0; r_max + 1];
    if r_max >= 1 {
        out[1] = 2.0 * nu * t;
    }
    for k in 2..=r_max {
        let k_f = k as f64;
        out[k] = (2.0 * (k_f + nu - 1.0) * t * out[k - 1] - (k_f + 2.0 * nu - 2.0) * out[k - 2]) / k_f;
    }
    out
}

/// `C_r^ν(t)` from the explicit finite sum
/// `Σ_k (−1)^k Γ(r−k+ν) / (Γ(ν) k! (r−2k)!) (2t)^{r−2k}`.
///
/// Slow and less stable than [`gegenbauer`]; kept as a cross-check.
pub fn gegenbauer_explicit(r: usize, nu: f64, t: f64) -> f64 {
    let mut terms = Vec::with_capacity(r / 2 + 1);
    for k in 0..=r / 2 {
        let m = r - 2 * k;
        // (ν)_{r−k} / (k! m!) as a running product
        let mut coeff = 1.0;
        for j in 0..(r - k) {
            coeff *= nu + j as f64;
        }
        for j in 1..=k {
            coeff /= j as f64;
        }
        for j in 1..=m {
            coeff /= j as f64;
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        terms.push(sign * coeff * libm::pow(2.0 * t, m as f64));
    }
    crate::linalg::pairwise_sum(&terms)
}

fn binomial_u128(n: i64, k: i64) -> Option<u128> {
    if n < 0 || k < 0 || k > n {
        return Some(0);
    }
    let k = k.min(n - k) as u128;
    let n = n as u128;
    let mut acc: u128 = 1;
    for i in 1..=k {
        // acc * (n - k + i) / i stays an integer at every step
        acc = acc.checked_mul(n - k + i)? / i;
    }
    Some(acc)
}

/// Exact binomial coefficient; zero when `k > n`.
pub fn binomial(n: u64, k: u64) -> Result<u64> {
    binomial_u128(n as i64, k as i64)
        .and_then(|v| u64::try_from(v).ok())
        .ok_or(Error::Overflow("binomial coefficient"))
}

/// `ln C(n, k)` for real arguments.
pub fn ln_binomial(n: f64, k: f64) -> f64 {
    libm::lgamma(n + 1.0) - libm::lgamma(k + 1.0) - libm::lgamma(n - k + 1.0)
}

/// `dim H_r^d = C(r+d−1, d−1) − C(r+d−3, d−1)`.
pub fn harmonic_dim(r: u64, d: u64) -> Result<u64> {
    if d < 2 {
        return Err(domain("sphere dimension d (need ≥ 2)", d as f64));
    }
    let (r, d) = (r as i64, d as i64);
    let a = binomial_u128(r + d - 1, d - 1);
    let b = binomial_u128(r + d - 3, d - 1);
    match (a, b) {
        (Some(a), Some(b)) => u64::try_from(a - b).map_err(|_| Error::Overflow("harmonic_dim")),
        _ => Err(Error::Overflow("harmonic_dim")),
    }
}

/// Zonal kernel `G_{r,d}(t) = (2r+d−2)/(d−2) · C_r^{(d−2)/2}(t)`, equal to
/// `Σ_s Y_{r,s}(x) Y_{r,s}(x′)` when `⟨x, x′⟩ = t`.
///
/// # Panics
/// If `d < 3`.
pub fn addition_kernel(r: usize, d: usize, t: f64) -> f64 {
    assert!(d >= 3, "addition_kernel needs d ≥ 3");
    let nu = 0.5 * (d as f64 - 2.0);
    (2 * r + d - 2) as f64 / (d - 2) as f64 * gegenbauer(r, nu, t)
}

/// `(δ⁴/2)^{−(d−2)/4} · C(2R+β+d−1, d−1)^{1/2}`.
pub fn addition_tail_bound(truncation: u64, beta: u8, d: u64, delta: f64) -> Result<f64> {
    if beta > 1 {
        return Err(domain("parity β (need 0 or 1)", beta as f64));
    }
    if d < 3 {
        return Err(domain("sphere dimension d (need ≥ 3)", d as f64));
    }
    if !(delta > 0.0 && delta < core::f64::consts::SQRT_2) {
        return Err(domain("separation δ (need 0 < δ < √2)", delta));
    }
    let d_f = d as f64;
    let top = (2 * truncation + beta as u64 + d - 1) as f64;
    let ln = -(d_f - 2.0) / 4.0 * libm::log(libm::pow(delta, 4.0) / 2.0) + 0.5 * ln_binomial(top, d_f - 1.0);
    Ok(libm::exp(ln))
}

/// The function `ψ` whose integral operator is diagonalized by spherical
/// harmonics: `σ̇` (with `σ̇(0) = 0`) or `√d·σ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Activation {
    ReluDerivative,
    ScaledRelu,
}

impl Activation {
    pub const ALL: [Activation; 2] = [Activation::ReluDerivative, Activation::ScaledRelu];

    /// `ψ(t)` in dimension `d`.
    pub fn eval(self, t: f64, d: usize) -> f64 {
        match self {
            Activation::ReluDerivative => {
                if t > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::ScaledRelu => libm::sqrt(d as f64) * t.max(0.0),
        }
    }

    /// Parity of the degrees with nonzero coefficients (beyond the first few).
    pub fn beta(self) -> u8 {
        match self {
            Activation::ReluDerivative => 1,
            Activation::ScaledRelu => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::ReluDerivative => "relu_derivative",
            Activation::ScaledRelu => "scaled_relu",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu_derivative" | "relu-derivative" | "step" => Ok(Activation::ReluDerivative),
            "scaled_relu" | "scaled-relu" | "relu" => Ok(Activation::ScaledRelu),
            _ => Err(domain("activation name", f64::NAN)),
        }
    }
}

fn check_funk_hecke_dim(d: usize) -> Result<()> {
    if d < 3 {
        return Err(domain("sphere dimension d (need ≥ 3)", d as f64));
    }
    Ok(())
}

/// Closed-form Funk–Hecke coefficient `c_{r,d}` of `ψ`.
///
/// Evaluated as a signed exponential of log-Gamma sums; a pole of a
/// reciprocal Gamma yields exactly `0`.
pub fn funk_hecke_coeff(r: usize, d: usize, psi: Activation) -> Result<f64> {
    check_funk_hecke_dim(d)?;
    let (r_f, d_f) = (r as f64, d as f64);
    let lg_half_d = libm::lgamma(0.5 * d_f);
    let (prefactor, a, b) = match psi {
        Activation::ReluDerivative => (0.5, 1.0 - 0.5 * r_f, 0.5 * (r_f + d_f)),
        Activation::ScaledRelu => (0.25 * libm::sqrt(d_f), 0.5 * (3.0 - r_f), 0.5 * (d_f + r_f + 1.0)),
    };
    let Some((lg_a, sign_a)) = signed_log_gamma(a) else {
        return Ok(0.0);
    };
    let lg_b = libm::lgamma(b);
    Ok(sign_a * prefactor * libm::exp(lg_half_d - lg_a - lg_b))
}

/// Numerical Funk–Hecke coefficient
/// `Γ(r+1)Γ(d−2)Γ(d/2) / (√π Γ(d−2+r) Γ((d−1)/2)) · ∫_0^1 ψ(t) C_r^{(d−2)/2}(t) (1−t²)^{(d−3)/2} dt`,
/// accurate to `tol` in absolute terms.
pub fn funk_hecke_quadrature(r: usize, d: usize, psi: Activation, tol: f64) -> Result<f64> {
    check_funk_hecke_dim(d)?;
    if !(tol > 0.0) {
        return Err(domain("quadrature tolerance", tol));
    }
    let (r_f, d_f) = (r as f64, d as f64);
    let ln_pre = libm::lgamma(r_f + 1.0) + libm::lgamma(d_f - 2.0) + libm::lgamma(0.5 * d_f)
        - 0.5 * libm::log(PI)
        - libm::lgamma(d_f - 2.0 + r_f)
        - libm::lgamma(0.5 * (d_f - 1.0));
    let pre = libm::exp(ln_pre);
    let nu = 0.5 * (d_f - 2.0);
    let w = 0.5 * (d_f - 3.0);
    let integrand = |t: f64| {
        let weight = if w == 0.0 { 1.0 } else { libm::pow((1.0 - t * t).max(0.0), w) };
        psi.eval(t, d) * gegenbauer(r, nu, t) * weight
    };
    let integral = quadrature::integrate(integrand, 0.0, 1.0, 0.5 * tol / pre, quadrature::MAX_EVALUATIONS)?;
    Ok(pre * integral.value)
}

/// `|c_{2r+1,d}|` lower bound for `ψ = σ̇` valid for all `r ≤ R`:
/// `Γ(d/2)Γ((2R+1)/2) / (2π Γ((d+2R+1)/2))`.
pub fn relu_derivative_coeff_lower(truncation: usize, d: usize) -> f64 {
    let (rr, d_f) = (truncation as f64, d as f64);
    libm::exp(libm::lgamma(0.5 * d_f) + libm::lgamma(rr + 0.5) - libm::lgamma(0.5 * (d_f + 2.0 * rr + 1.0)))
        / (2.0 * PI)
}

/// Default number of tabulated degrees.
pub const DEFAULT_R_MAX: usize = 64;

/// Funk–Hecke coefficients `c_{0,d}, …, c_{r_max,d}` for one activation.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTable {
    dim: usize,
    activation: Activation,
    coeffs: Vec<f64>,
}

impl SpectrumTable {
    pub fn new(dim: usize, activation: Activation, r_max: usize) -> Result<Self> {
        check_funk_hecke_dim(dim)?;
        let coeffs = (0..=r_max)
            .map(|r| funk_hecke_coeff(r, dim, activation))
            .collect::<Result<Vec<_>>>()?;
        Ok(SpectrumTable { dim, activation, coeffs })
    }

    pub fn with_default_range(dim: usize, activation: Activation) -> Result<Self> {
        Self::new(dim, activation, DEFAULT_R_MAX)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn r_max(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Tabulated coefficients indexed by degree.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `c_{r,d}`; degrees past `r_max` are computed on demand.
    pub fn get(&self, r: usize) -> f64 {
        match self.coeffs.get(r) {
            Some(&c) => c,
            None => funk_hecke_coeff(r, self.dim, self.activation).expect("dimension validated at construction"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn log_gamma_examples() {
        assert_eq!(log_gamma(1.0).unwrap(), 0.0);
        assert_relative_eq!(log_gamma(0.5).unwrap(), 0.5 * libm::log(PI), max_relative = 1e-14);
        assert_relative_eq!(log_gamma(10.0).unwrap(), libm::log(362_880.0), max_relative = 1e-14);
        assert!(log_gamma(0.0).is_err());
        assert!(log_gamma(-2.5).is_err());
    }

    #[test]
    fn log_gamma_matches_stirling_series_at_large_x() {
        // ln Γ(x) = (x−½)ln x − x + ½ln 2π + 1/(12x) − 1/(360x³) + 1/(1260x⁵)
        for &x in &[50.0, 1e3, 1e5, 1e6] {
            let f: f64 = x;
            let s = (f - 0.5) * f.ln() - f + 0.5 * (2.0 * PI).ln() + 1.0 / (12.0 * f) - 1.0 / (360.0 * f.powi(3))
                + 1.0 / (1260.0 * f.powi(5));
            assert_relative_eq!(log_gamma(x).unwrap(), s, max_relative = 1e-13);
        }
    }

    #[test]
    fn gegenbauer_examples() {
        assert_eq!(gegenbauer(0, 3.7, -0.3), 1.0);
        assert_abs_diff_eq!(gegenbauer(1, 1.5, 0.2), 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(gegenbauer(2, 0.5, 0.5), -0.125, epsilon = 1e-15);
        let all = gegenbauer_all(20, 1.25, 0.3);
        for (r, v) in all.iter().enumerate() {
            assert_eq!(*v, gegenbauer(r, 1.25, 0.3));
        }
    }

    #[test]
    fn chebyshev_second_kind_at_nu_one() {
        // C_r^1(cos θ) = sin((r+1)θ)/sin θ
        let theta: f64 = 0.7;
        for r in 0..25 {
            let want = ((r as f64 + 1.0) * theta).sin() / theta.sin();
            assert_abs_diff_eq!(gegenbauer(r, 1.0, theta.cos()), want, epsilon = 1e-12);
        }
    }

    #[test]
    fn harmonic_dim_examples() {
        for d in 2..10 {
            assert_eq!(harmonic_dim(0, d).unwrap(), 1);
        }
        assert_eq!(harmonic_dim(2, 3).unwrap(), 5);
        assert_eq!(harmonic_dim(3, 5).unwrap(), 30);
        assert_eq!(harmonic_dim(5, 2).unwrap(), 2);
        assert!(matches!(harmonic_dim(1 << 40, 40), Err(Error::Overflow(_))));
    }

    #[test]
    fn addition_kernel_examples() {
        assert_abs_diff_eq!(addition_kernel(2, 3, 1.0), 5.0, epsilon = 1e-13);
        assert_eq!(addition_kernel(0, 7, -0.4), 1.0);
        assert_abs_diff_eq!(addition_kernel(1, 3, 0.5), 1.5, epsilon = 1e-15);
    }

    #[test]
    fn tail_bound_examples() {
        let b1 = addition_tail_bound(1, 0, 3, 1.0).unwrap();
        assert_abs_diff_eq!(b1, 0.5f64.powf(-0.25) * 6f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(b1, 2.9130, epsilon = 1e-4);
        // C(2,2) = 1 at R = 0
        assert_abs_diff_eq!(addition_tail_bound(0, 0, 3, 1.0).unwrap(), 0.5f64.powf(-0.25), epsilon = 1e-12);
        assert!(addition_tail_bound(0, 2, 3, 1.0).is_err());
        assert!(addition_tail_bound(0, 0, 3, 1.5).is_err());
    }

    #[test]
    fn closed_form_examples() {
        for d in 3..20 {
            assert_abs_diff_eq!(funk_hecke_coeff(0, d, Activation::ReluDerivative).unwrap(), 0.5, epsilon = 1e-14);
            assert_eq!(funk_hecke_coeff(2, d, Activation::ReluDerivative).unwrap(), 0.0);
        }
        assert_abs_diff_eq!(funk_hecke_coeff(1, 3, Activation::ReluDerivative).unwrap(), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(funk_hecke_coeff(1, 4, Activation::ScaledRelu).unwrap(), 0.25, epsilon = 1e-15);
        assert!(funk_hecke_coeff(0, 2, Activation::ScaledRelu).is_err());
    }

    #[test]
    fn quadrature_examples() {
        let q = funk_hecke_quadrature(0, 5, Activation::ReluDerivative, 1e-10).unwrap();
        assert_abs_diff_eq!(q, 0.5, epsilon = 1e-10);
        let q = funk_hecke_quadrature(2, 3, Activation::ReluDerivative, 1e-10).unwrap();
        assert_abs_diff_eq!(q, 0.0, epsilon = 1e-10);
        let q = funk_hecke_quadrature(1, 4, Activation::ScaledRelu, 1e-10).unwrap();
        assert_abs_diff_eq!(q, 0.25, epsilon = 1e-10);
    }

    #[test]
    fn activation_names_round_trip() {
        for a in Activation::ALL {
            assert_eq!(a.name().parse::<Activation>().unwrap(), a);
        }
        assert!("tanh".parse::<Activation>().is_err());
    }

    #[test]
    fn table_extends_on_demand() {
        let t = SpectrumTable::new(5, Activation::ScaledRelu, 4).unwrap();
        assert_eq!(t.r_max(), 4);
        assert_eq!(t.get(10), funk_hecke_coeff(10, 5, Activation::ScaledRelu).unwrap());
        assert_eq!(t.get(7), 0.0);
    }
}
