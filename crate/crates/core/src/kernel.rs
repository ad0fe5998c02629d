//! Infinite-width limiting kernels on the sphere, their harmonic expansion,
//! and the evaluation Gram matrix of a truncated spherical-harmonic basis.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{domain, Error, Result};
use crate::linalg;
use crate::rng;
use crate::specfun::{self, Activation};
use crate::sphere::Dataset;

/// Absolute symmetry tolerance accepted by [`KernelMatrix::new`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;
/// Smallest eigenvalues below this are reported as zero.
pub const EIGEN_CLAMP: f64 = 1e-12;

/// Dense symmetric `n × n` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl KernelMatrix {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: entries.len() });
        }
        let asym = linalg::max_asymmetry(&entries, n);
        if !(asym <= SYMMETRY_TOLERANCE) {
            return Err(Error::Asymmetric(asym));
        }
        Ok(KernelMatrix { n, entries })
    }

    /// Fills the upper triangle from `f(i, k)` and mirrors it.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for k in i..n {
                let v = f(i, k);
                entries[i * n + k] = v;
                entries[k * n + i] = v;
            }
        }
        KernelMatrix { n, entries }
    }

    pub(crate) fn from_symmetric_unchecked(n: usize, entries: Vec<f64>) -> Self {
        debug_assert_eq!(entries.len(), n * n);
        KernelMatrix { n, entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.entries[i * self.n + k]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    /// `zᵀ K z`.
    pub fn quadratic_form(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: z.len() });
        }
        let terms: Vec<f64> = (0..self.n).map(|i| z[i] * linalg::dot(self.row(i), z)).collect();
        Ok(linalg::pairwise_sum(&terms))
    }

    /// All eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::symmetric_eigenvalues(&self.entries, self.n)
    }

    pub fn eigen_report(&self) -> EigenReport {
        EigenReport::from_raw(self.eigenvalues()[0])
    }

    /// True when the smallest eigenvalue is at least `-tol`.
    pub fn is_psd(&self, tol: f64) -> bool {
        self.eigenvalues()[0] >= -tol
    }

    /// Entrywise sum.
    pub fn add(&self, other: &KernelMatrix) -> Result<KernelMatrix> {
        self.zip_with(other, |a, b| a + b)
    }

    /// Entrywise product.
    pub fn hadamard(&self, other: &KernelMatrix) -> Result<KernelMatrix> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> KernelMatrix {
        KernelMatrix { n: self.n, entries: self.entries.iter().map(|x| c * x).collect() }
    }

    fn zip_with(&self, other: &KernelMatrix, f: impl Fn(f64, f64) -> f64) -> Result<KernelMatrix> {
        if other.n != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: other.n });
        }
        let entries = self.entries.iter().zip(&other.entries).map(|(&a, &b)| f(a, b)).collect();
        Ok(KernelMatrix { n: self.n, entries })
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(linalg::norm_sq(&self.entries))
    }

    pub fn max_abs_diff(&self, other: &KernelMatrix) -> f64 {
        self.entries.iter().zip(&other.entries).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn into_entries(self) -> Vec<f64> {
        self.entries
    }
}

/// Smallest eigenvalue with the clamp applied.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EigenReport {
    pub lambda_min: f64,
    /// Unclamped solver output.
    pub raw: f64,
    pub clamped: bool,
}

impl EigenReport {
    pub fn from_raw(raw: f64) -> Self {
        let clamped = raw < EIGEN_CLAMP;
        EigenReport { lambda_min: if clamped { 0.0 } else { raw }, raw, clamped }
    }
}

/// Closed-form `K^∞_ψ` as a function of `t = ⟨x, x′⟩`, with `θ = arccos t`:
/// `(π − θ)/(2π)` for `σ̇` and `(sin θ + (π − θ) cos θ)/(2π)` for `√d·σ`.
pub fn limiting_kernel_entry(psi: Activation, t: f64) -> f64 {
    let t = t.clamp(-1.0, 1.0);
    let theta = libm::acos(t);
    match psi {
        Activation::ReluDerivative => (PI - theta) / (2.0 * PI),
        Activation::ScaledRelu => (libm::sin(theta) + (PI - theta) * t) / (2.0 * PI),
    }
}

/// `K^∞_ψ` on a dataset. Unit norms are guaranteed by [`Dataset`].
pub fn limiting_kernel_matrix(psi: Activation, data: &Dataset) -> KernelMatrix {
    KernelMatrix::from_fn(data.n(), |i, k| {
        if i == k {
            limiting_kernel_entry(psi, 1.0)
        } else {
            limiting_kernel_entry(psi, data.inner(i, k))
        }
    })
}

/// Directions drawn per Monte Carlo shard; shard `s` reads stream `s`.
pub const MC_SHARD_LEN: usize = 1 << 16;
const MC_BLOCK: usize = 256;

/// Partial Monte Carlo sums over one shard, upper triangle row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct McShard {
    pub count: usize,
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
}

/// Monte Carlo estimate of `K^∞_ψ` with per-entry standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct McKernel {
    pub kernel: KernelMatrix,
    /// Row-major `n × n`.
    pub std_err: Vec<f64>,
    pub samples: usize,
}

impl McKernel {
    pub fn std_err(&self, i: usize, k: usize) -> f64 {
        self.std_err[i * self.kernel.n() + k]
    }
}

/// Number of shards needed for `samples` directions.
pub fn mc_shard_count(samples: usize) -> usize {
    samples.div_ceil(MC_SHARD_LEN)
}

/// Sums for shard `shard` of a run with `samples` directions in total.
pub fn mc_shard(psi: Activation, data: &Dataset, samples: usize, seed: u64, shard: usize) -> McShard {
    let (n, d) = (data.n(), data.dim());
    let tri = n * (n + 1) / 2;
    let start = shard * MC_SHARD_LEN;
    let count = samples.saturating_sub(start).min(MC_SHARD_LEN);
    let mut r = rng::stream_rng(seed, shard as u64);
    let mut u = vec![0.0; d];
    let mut feat = vec![0.0; n];
    let blocks = count.div_ceil(MC_BLOCK);
    let mut block_sum = vec![0.0; blocks * tri];
    let mut block_sq = vec![0.0; blocks * tri];
    for j in 0..count {
        rng::fill_uniform_sphere(&mut r, &mut u);
        for (f, x) in feat.iter_mut().zip(data.iter()) {
            *f = psi.eval(linalg::dot(x, &u), d);
        }
        let b = j / MC_BLOCK;
        let (s, q) = (&mut block_sum[b * tri..(b + 1) * tri], &mut block_sq[b * tri..(b + 1) * tri]);
        let mut idx = 0;
        for i in 0..n {
            for k in i..n {
                let v = feat[i] * feat[k];
                s[idx] += v;
                q[idx] += v * v;
                idx += 1;
            }
        }
    }
    let reduce = |blocked: &[f64]| -> Vec<f64> {
        let mut column = vec![0.0; blocks];
        (0..tri)
            .map(|e| {
                for b in 0..blocks {
                    column[b] = blocked[b * tri + e];
                }
                linalg::pairwise_sum(&column)
            })
            .collect()
    };
    McShard { count, sum: reduce(&block_sum), sum_sq: reduce(&block_sq) }
}

/// Combines shards (in index order) into the final estimate.
pub fn mc_combine(n: usize, shards: &[McShard]) -> McKernel {
    let tri = n * (n + 1) / 2;
    let m: usize = shards.iter().map(|s| s.count).sum();
    let m_f = m as f64;
    let mut mean = vec![0.0; n * n];
    let mut std_err = vec![0.0; n * n];
    let mut column = vec![0.0; shards.len()];
    let mut column_sq = vec![0.0; shards.len()];
    let mut idx = 0;
    for i in 0..n {
        for k in i..n {
            for (s, shard) in shards.iter().enumerate() {
                column[s] = shard.sum[idx];
                column_sq[s] = shard.sum_sq[idx];
            }
            let mu = linalg::pairwise_sum(&column) / m_f;
            let second = linalg::pairwise_sum(&column_sq) / m_f;
            let var = if m > 1 { ((second - mu * mu) * m_f / (m_f - 1.0)).max(0.0) } else { 0.0 };
            let se = libm::sqrt(var / m_f);
            mean[i * n + k] = mu;
            mean[k * n + i] = mu;
            std_err[i * n + k] = se;
            std_err[k * n + i] = se;
            idx += 1;
        }
    }
    debug_assert_eq!(idx, tri);
    McKernel { kernel: KernelMatrix::from_symmetric_unchecked(n, mean), std_err, samples: m }
}

/// `(1/m) Σ_j ψ(Xᵀu_j) ψ(u_jᵀX)` over `m = samples` uniform directions.
///
/// Sharded by [`MC_SHARD_LEN`]; parallel callers can evaluate
/// [`mc_shard`] independently and pass the results to [`mc_combine`] to get
/// the same bits.
pub fn limiting_kernel_mc(psi: Activation, data: &Dataset, samples: usize, seed: u64) -> Result<McKernel> {
    if samples == 0 {
        return Err(domain("Monte Carlo sample count", 0.0));
    }
    let shards: Vec<McShard> =
        (0..mc_shard_count(samples)).map(|s| mc_shard(psi, data, samples, seed, s)).collect();
    Ok(mc_combine(data.n(), &shards))
}

/// Truncated harmonic expansion `Σ_{r=0}^{R} c_{r,d}² G_{r,d}(t)`.
pub fn mercer_series_entry(psi: Activation, d: usize, t: f64, truncation: usize) -> Result<f64> {
    if d < 3 {
        return Err(domain("sphere dimension d (need ≥ 3)", d as f64));
    }
    let nu = 0.5 * (d as f64 - 2.0);
    let gegen = specfun::gegenbauer_all(truncation, nu, t.clamp(-1.0, 1.0));
    let mut terms = Vec::with_capacity(truncation + 1);
    for (r, g) in gegen.iter().enumerate() {
        let c = specfun::funk_hecke_coeff(r, d, psi)?;
        let weight = (2 * r + d - 2) as f64 / (d - 2) as f64;
        terms.push(c * c * weight * g);
    }
    Ok(linalg::pairwise_sum(&terms))
}

/// `μ_z = Σ_i z_i δ_{x_i}`.
#[derive(Debug, Clone, Copy)]
pub struct DiscreteMeasure<'a> {
    data: &'a Dataset,
    weights: &'a [f64],
}

impl<'a> DiscreteMeasure<'a> {
    pub fn new(data: &'a Dataset, weights: &'a [f64]) -> Result<Self> {
        if weights.len() != data.n() {
            return Err(Error::DimensionMismatch { expected: data.n(), got: weights.len() });
        }
        if let Some(&w) = weights.iter().find(|w| !w.is_finite()) {
            return Err(domain("measure weight", w));
        }
        Ok(DiscreteMeasure { data, weights })
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn weights(&self) -> &[f64] {
        self.weights
    }
}

/// `‖T_ψ μ_z‖² = zᵀ K^∞_ψ z`.
pub fn hemisphere_norm_sq(psi: Activation, mu: &DiscreteMeasure<'_>) -> f64 {
    limiting_kernel_matrix(psi, mu.data)
        .quadratic_form(mu.weights)
        .expect("weights length checked at construction")
}

/// `DᵀD` for the evaluation matrix `D_{ai} = g_a(x_i)` of an orthonormal
/// basis of `⊕_{r ≤ R} H_{2r+β}`, built through the addition formula.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicGram {
    pub truncation: usize,
    pub beta: u8,
    /// `N = Σ_{r ≤ R} dim H_{2r+β}`.
    pub harmonic_count: u64,
    pub gram: KernelMatrix,
}

/// `Σ_{r=0}^{R} G_{2r+β,d}(t)`.
pub fn harmonic_gram_entry(truncation: usize, beta: u8, d: usize, t: f64) -> f64 {
    let top = 2 * truncation + beta as usize;
    let nu = 0.5 * (d as f64 - 2.0);
    let gegen = specfun::gegenbauer_all(top, nu, t.clamp(-1.0, 1.0));
    let terms: Vec<f64> = (beta as usize..=top)
        .step_by(2)
        .map(|r| (2 * r + d - 2) as f64 / (d - 2) as f64 * gegen[r])
        .collect();
    linalg::pairwise_sum(&terms)
}

pub fn harmonic_gram(data: &Dataset, truncation: usize, beta: u8) -> Result<HarmonicGram> {
    let d = data.dim();
    if d < 3 {
        return Err(domain("sphere dimension d0 (need ≥ 3)", d as f64));
    }
    if beta > 1 {
        return Err(domain("parity β (need 0 or 1)", beta as f64));
    }
    let harmonic_count = specfun::binomial((2 * truncation + beta as usize + d - 1) as u64, (d - 1) as u64)?;
    let gram = KernelMatrix::from_fn(data.n(), |i, k| {
        let t = if i == k { 1.0 } else { data.inner(i, k) };
        harmonic_gram_entry(truncation, beta, d, t)
    });
    Ok(HarmonicGram { truncation, beta, harmonic_count, gram })
}

/// `σ_min(D) = √λ_min(DᵀD)`, clamped at 0.
pub fn harmonic_min_sv(hg: &HarmonicGram) -> f64 {
    libm::sqrt(hg.gram.eigenvalues()[0].max(0.0))
}

/// Gershgorin lower bound `min_i (K_ii − Σ_{k≠i} |K_ik|)` on the smallest eigenvalue.
pub fn gershgorin_lower(k: &KernelMatrix) -> f64 {
    (0..k.n())
        .map(|i| {
            let off: f64 = k.row(i).iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v.abs()).sum();
            k.get(i, i) - off
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn e(dim: usize, idx: &[usize]) -> Dataset {
        let pts: Vec<Vec<f64>> = idx
            .iter()
            .map(|&i| {
                let mut p = vec![0.0; dim];
                p[i] = 1.0;
                p
            })
            .collect();
        Dataset::from_points(dim, pts).unwrap()
    }

    #[test]
    fn entry_examples() {
        let rd = Activation::ReluDerivative;
        assert_abs_diff_eq!(limiting_kernel_entry(rd, 1.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(limiting_kernel_entry(rd, -1.0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(limiting_kernel_entry(rd, 0.0), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(limiting_kernel_entry(Activation::ScaledRelu, 0.0), 1.0 / (2.0 * PI), epsilon = 1e-15);
        assert_abs_diff_eq!(limiting_kernel_entry(Activation::ScaledRelu, 1.0), 0.5, epsilon = 1e-15);
        // 1-ulp overshoot
        assert_eq!(limiting_kernel_entry(rd, 1.0 + 1e-16), limiting_kernel_entry(rd, 1.0));
    }

    #[test]
    fn matrix_examples() {
        for psi in Activation::ALL {
            let k = limiting_kernel_matrix(psi, &e(3, &[0]));
            assert_abs_diff_eq!(k.get(0, 0), 0.5, epsilon = 1e-15);
        }
        let k = limiting_kernel_matrix(Activation::ReluDerivative, &e(3, &[0, 1]));
        assert_eq!(k.entries(), &[0.5, 0.25, 0.25, 0.5]);
    }

    #[test]
    fn asymmetric_input_rejected() {
        assert!(matches!(KernelMatrix::new(2, vec![1.0, 0.0, 1.0, 1.0]), Err(Error::Asymmetric(_))));
        assert!(KernelMatrix::new(2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn eigen_report_clamps() {
        let r = EigenReport::from_raw(-3e-15);
        assert!(r.clamped && r.lambda_min == 0.0 && r.raw < 0.0);
        let r = EigenReport::from_raw(0.5);
        assert!(!r.clamped && r.lambda_min == 0.5);
    }

    #[test]
    fn mc_single_sample_is_bernoulli() {
        let data = e(3, &[2]);
        for seed in 0..20 {
            let mc = limiting_kernel_mc(Activation::ReluDerivative, &data, 1, seed).unwrap();
            let v = mc.kernel.get(0, 0);
            assert!(v == 0.0 || v == 1.0);
        }
        assert!(limiting_kernel_mc(Activation::ReluDerivative, &data, 0, 0).is_err());
    }

    #[test]
    fn mc_is_deterministic_and_shard_combinable() {
        let data = e(3, &[0, 1, 2]);
        let m = MC_SHARD_LEN + 1000;
        let a = limiting_kernel_mc(Activation::ScaledRelu, &data, m, 4).unwrap();
        let shards: Vec<_> = (0..2).rev().map(|s| (s, mc_shard(Activation::ScaledRelu, &data, m, 4, s))).collect();
        let mut ordered: Vec<_> = shards.into_iter().collect();
        ordered.sort_by_key(|(s, _)| *s);
        let b = mc_combine(3, &ordered.into_iter().map(|(_, s)| s).collect::<Vec<_>>());
        assert_eq!(a, b);
        assert_eq!(a.samples, m);
    }

    #[test]
    fn mercer_examples() {
        let rd = Activation::ReluDerivative;
        assert_abs_diff_eq!(mercer_series_entry(rd, 3, 1.0, 1).unwrap(), 0.4375, epsilon = 1e-15);
        for psi in Activation::ALL {
            for d in 3..8 {
                let c0 = specfun::funk_hecke_coeff(0, d, psi).unwrap();
                assert_abs_diff_eq!(mercer_series_entry(psi, d, 0.3, 0).unwrap(), c0 * c0, epsilon = 1e-15);
            }
        }
        assert_abs_diff_eq!(mercer_series_entry(rd, 3, 1.0, 200).unwrap(), 0.5, epsilon = 1e-3);
    }

    #[test]
    fn hemisphere_examples() {
        let data = e(3, &[0, 1]);
        let z = [1.0, 0.0];
        let mu = DiscreteMeasure::new(&data, &z).unwrap();
        assert_abs_diff_eq!(hemisphere_norm_sq(Activation::ReluDerivative, &mu), 0.5, epsilon = 1e-15);
        let h = 1.0 / 2f64.sqrt();
        let z = [h, -h];
        let mu = DiscreteMeasure::new(&data, &z).unwrap();
        assert_abs_diff_eq!(hemisphere_norm_sq(Activation::ReluDerivative, &mu), 0.25, epsilon = 1e-15);
        assert!(DiscreteMeasure::new(&data, &[1.0]).is_err());
    }

    #[test]
    fn harmonic_gram_examples() {
        let one = e(3, &[0]);
        let hg = harmonic_gram(&one, 3, 1).unwrap();
        // C(2·3+1+2, 2) = 36
        assert_eq!(hg.harmonic_count, 36);
        assert_abs_diff_eq!(hg.gram.get(0, 0), 36.0, epsilon = 36.0 * 1e-12);

        let anti = Dataset::from_points(3, [[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]).unwrap();
        let hg = harmonic_gram(&anti, 4, 1).unwrap();
        let n_f = hg.harmonic_count as f64;
        assert_abs_diff_eq!(hg.gram.get(0, 1), -n_f, epsilon = n_f * 1e-12);
        assert_abs_diff_eq!(harmonic_min_sv(&hg), 0.0, epsilon = 1e-6);

        let orth = e(4, &[0, 1]);
        let hg = harmonic_gram(&orth, 5, 1).unwrap();
        let n_f = hg.harmonic_count as f64;
        assert_abs_diff_eq!(hg.gram.get(0, 1), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(harmonic_min_sv(&hg), n_f.sqrt(), epsilon = 1e-9);
        assert_abs_diff_eq!(gershgorin_lower(&hg.gram), n_f, epsilon = 1e-9);
    }
}
