//! Finite-width ReLU networks at Gaussian initialization and their NTK Gram
//! matrices.
//!
//! Shallow networks are `f(x) = d₁^{−1/2} Σ_j v_j σ(w_j·x)`. Hidden units are
//! drawn in chunks of [`UNIT_CHUNK`]: chunk `c` reads stream `c` of the seed,
//! producing `w_j` then `v_j` for each unit in order. This lets the NTK of a
//! very wide network be streamed without storing `W`.
//!
//! Deep networks are `f = ∏_{l=1}^{L−1} √(2/d_l) · W_L σ(W_{L−1} ⋯ σ(W₁x))`,
//! with layer `l` read row-major from stream `l`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{domain, Error, Result};
use crate::kernel::{EigenReport, KernelMatrix};
use crate::linalg;
use crate::rng;
use crate::sphere::Dataset;

/// Hidden units per random stream.
pub const UNIT_CHUNK: usize = 4096;
/// Hidden units summed sequentially before entering the pairwise tree.
const UNIT_BLOCK: usize = 64;

fn relu(z: f64) -> f64 {
    z.max(0.0)
}

/// `σ̇` with `σ̇(0) = 0`.
fn step(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Parameters of a one-hidden-layer network.
#[derive(Debug, Clone, PartialEq)]
pub struct ShallowParams {
    pub d0: usize,
    pub d1: usize,
    /// `d1 × d0`, row-major.
    pub w: Vec<f64>,
    pub v: Vec<f64>,
    pub seed: u64,
}

impl ShallowParams {
    /// Explicit parameters; `seed` is recorded as 0.
    pub fn from_parts(d0: usize, w: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if d0 == 0 || v.is_empty() {
            return Err(domain("network width", 0.0));
        }
        check_len(v.len() * d0, w.len())?;
        Ok(ShallowParams { d0, d1: v.len(), w, v, seed: 0 })
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.w[j * self.d0..(j + 1) * self.d0]
    }

    pub fn param_count(&self) -> usize {
        self.d1 * (self.d0 + 1)
    }
}

/// Units `[start, end)` of chunk `chunk`, drawn in place.
fn draw_chunk(d0: usize, d1: usize, seed: u64, chunk: usize, mut visit: impl FnMut(&[f64], f64)) {
    let start = chunk * UNIT_CHUNK;
    let end = (start + UNIT_CHUNK).min(d1);
    let mut r = rng::stream_rng(seed, chunk as u64);
    let mut w = vec![0.0; d0];
    for _ in start..end {
        w.iter_mut().for_each(|x| *x = rng::gaussian(&mut r));
        let v = rng::gaussian(&mut r);
        visit(&w, v);
    }
}

pub fn init_shallow(d0: usize, d1: usize, seed: u64) -> Result<ShallowParams> {
    if d0 == 0 || d1 == 0 {
        return Err(domain("network width", 0.0));
    }
    let mut w = Vec::with_capacity(d0 * d1);
    let mut v = Vec::with_capacity(d1);
    for c in 0..d1.div_ceil(UNIT_CHUNK) {
        draw_chunk(d0, d1, seed, c, |row, vj| {
            w.extend_from_slice(row);
            v.push(vj);
        });
    }
    Ok(ShallowParams { d0, d1, w, v, seed })
}

pub fn shallow_forward(p: &ShallowParams, x: &[f64]) -> Result<f64> {
    check_len(p.d0, x.len())?;
    let terms: Vec<f64> = (0..p.d1).map(|j| p.v[j] * relu(linalg::dot(p.row(j), x))).collect();
    Ok(linalg::pairwise_sum(&terms) / libm::sqrt(p.d1 as f64))
}

/// `∇_θ f(x)` ordered as `W` (row-major) then `v`.
pub fn shallow_gradient(p: &ShallowParams, x: &[f64]) -> Result<Vec<f64>> {
    check_len(p.d0, x.len())?;
    let scale = 1.0 / libm::sqrt(p.d1 as f64);
    let mut g = vec![0.0; p.param_count()];
    let (gw, gv) = g.split_at_mut(p.d0 * p.d1);
    for j in 0..p.d1 {
        let z = linalg::dot(p.row(j), x);
        let a = scale * p.v[j] * step(z);
        for (gi, xi) in gw[j * p.d0..(j + 1) * p.d0].iter_mut().zip(x) {
            *gi = a * xi;
        }
        gv[j] = scale * relu(z);
    }
    Ok(g)
}

/// `‖∇_θ f(x) − ∇_θ f(x′)‖`.
pub fn gradient_distance(p: &ShallowParams, x: &[f64], x_prime: &[f64]) -> Result<f64> {
    let a = shallow_gradient(p, x)?;
    let b = shallow_gradient(p, x_prime)?;
    let sq: Vec<f64> = a.iter().zip(&b).map(|(u, v)| (u - v) * (u - v)).collect();
    Ok(libm::sqrt(linalg::pairwise_sum(&sq)))
}

/// `‖∇f(x_i) − ∇f(x_k)‖² = K_ii + K_kk − 2K_ik` read off a gradient Gram.
pub fn kernel_gradient_distance_sq(k: &KernelMatrix, i: usize, j: usize) -> f64 {
    (k.get(i, i) + k.get(j, j) - 2.0 * k.get(i, j)).max(0.0)
}

/// Shallow NTK and its two blocks: `K1` from the `W` gradients, `K2` from `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct NtkParts {
    pub k: KernelMatrix,
    pub k1: KernelMatrix,
    pub k2: KernelMatrix,
}

/// Unnormalized sums `Σ_j v_j² σ̇σ̇` and `Σ_j σσ`, `n × n` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSums {
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
}

impl PairSums {
    fn zeros(len: usize) -> Self {
        PairSums { k1: vec![0.0; len], k2: vec![0.0; len] }
    }

    fn add(&mut self, other: &PairSums) {
        self.k1.iter_mut().zip(&other.k1).for_each(|(a, b)| *a += b);
        self.k2.iter_mut().zip(&other.k2).for_each(|(a, b)| *a += b);
    }
}

/// Pairwise summation of a stream of [`PairSums`] with logarithmic memory:
/// equal-sized partial sums merge like carries in a binary counter.
#[derive(Debug, Clone, Default)]
pub struct PairwiseTree {
    levels: Vec<Option<PairSums>>,
}

impl PairwiseTree {
    pub fn push(&mut self, mut carry: PairSums) {
        for slot in self.levels.iter_mut() {
            match slot.take() {
                None => {
                    *slot = Some(carry);
                    return;
                }
                Some(mut held) => {
                    held.add(&carry);
                    carry = held;
                }
            }
        }
        self.levels.push(Some(carry));
    }

    pub fn finish(self, len: usize) -> PairSums {
        let mut acc: Option<PairSums> = None;
        for held in self.levels.into_iter().flatten() {
            acc = Some(match acc {
                None => held,
                Some(mut a) => {
                    a.add(&held);
                    a
                }
            });
        }
        acc.unwrap_or_else(|| PairSums::zeros(len))
    }
}

/// Accumulates hidden units of one chunk. Units are buffered column-wise in
/// blocks of [`UNIT_BLOCK`]; each full block contributes its Gram matrices to
/// a [`PairwiseTree`].
struct UnitAccumulator<'a> {
    data: &'a Dataset,
    /// `σ(w_u·x_i)` at `i * UNIT_BLOCK + u`
    h: Vec<f64>,
    /// `v_u σ̇(w_u·x_i)` at `i * UNIT_BLOCK + u`
    av: Vec<f64>,
    in_block: usize,
    tree: PairwiseTree,
}

impl<'a> UnitAccumulator<'a> {
    fn new(data: &'a Dataset) -> Self {
        let n = data.n();
        UnitAccumulator {
            data,
            h: vec![0.0; n * UNIT_BLOCK],
            av: vec![0.0; n * UNIT_BLOCK],
            in_block: 0,
            tree: PairwiseTree::default(),
        }
    }

    fn push(&mut self, w: &[f64], v: f64) {
        let u = self.in_block;
        for (i, x) in self.data.iter().enumerate() {
            let z = linalg::dot(w, x);
            self.h[i * UNIT_BLOCK + u] = relu(z);
            self.av[i * UNIT_BLOCK + u] = v * step(z);
        }
        self.in_block += 1;
        if self.in_block == UNIT_BLOCK {
            self.flush();
        }
    }

    fn flush(&mut self) {
        let m = self.in_block;
        if m == 0 {
            return;
        }
        let n = self.data.n();
        let mut sums = PairSums::zeros(n * n);
        for i in 0..n {
            let (hi, ai) = (&self.h[i * UNIT_BLOCK..i * UNIT_BLOCK + m], &self.av[i * UNIT_BLOCK..i * UNIT_BLOCK + m]);
            for k in i..n {
                let hk = &self.h[k * UNIT_BLOCK..k * UNIT_BLOCK + m];
                let ak = &self.av[k * UNIT_BLOCK..k * UNIT_BLOCK + m];
                let (s1, s2) = (dot4(ai, ak), dot4(hi, hk));
                sums.k1[i * n + k] = s1;
                sums.k1[k * n + i] = s1;
                sums.k2[i * n + k] = s2;
                sums.k2[k * n + i] = s2;
            }
        }
        self.tree.push(sums);
        self.in_block = 0;
    }

    fn finish(mut self) -> PairSums {
        self.flush();
        let n = self.data.n();
        self.tree.finish(n * n)
    }
}

/// Dot product with four interleaved accumulators.
fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Pair sums of chunk `chunk` of a seeded network, without storing weights.
pub fn shallow_chunk_seeded(d1: usize, seed: u64, data: &Dataset, chunk: usize) -> PairSums {
    let mut acc = UnitAccumulator::new(data);
    draw_chunk(data.dim(), d1, seed, chunk, |w, v| acc.push(w, v));
    acc.finish()
}

fn shallow_chunk_stored(p: &ShallowParams, data: &Dataset, chunk: usize) -> PairSums {
    let mut acc = UnitAccumulator::new(data);
    let start = chunk * UNIT_CHUNK;
    for j in start..(start + UNIT_CHUNK).min(p.d1) {
        acc.push(p.row(j), p.v[j]);
    }
    acc.finish()
}

/// Number of chunks for `d1` hidden units.
pub fn shallow_chunk_count(d1: usize) -> usize {
    d1.div_ceil(UNIT_CHUNK)
}

/// Assembles `K1 = d₁^{−1}(Σ_j v_j² σ̇σ̇) ⊙ XᵀX`, `K2 = d₁^{−1} Σ_j σσ` and
/// `K = K1 + K2` from chunk sums listed in chunk order.
pub fn shallow_ntk_from_chunks(d1: usize, data: &Dataset, chunks: impl IntoIterator<Item = PairSums>) -> NtkParts {
    let n = data.n();
    let mut tree = PairwiseTree::default();
    for c in chunks {
        tree.push(c);
    }
    let sums = tree.finish(n * n);
    let inv = 1.0 / d1 as f64;
    let k1 = KernelMatrix::from_fn(n, |i, k| {
        let t = if i == k { 1.0 } else { data.inner(i, k) };
        inv * sums.k1[i * n + k] * t
    });
    let k2 = KernelMatrix::from_fn(n, |i, k| inv * sums.k2[i * n + k]);
    let k = k1.add(&k2).expect("same size");
    NtkParts { k, k1, k2 }
}

pub fn shallow_ntk(p: &ShallowParams, data: &Dataset) -> Result<NtkParts> {
    check_len(p.d0, data.dim())?;
    let chunks = (0..shallow_chunk_count(p.d1)).map(|c| shallow_chunk_stored(p, data, c));
    Ok(shallow_ntk_from_chunks(p.d1, data, chunks))
}

/// Same bits as `shallow_ntk(&init_shallow(d0, d1, seed)?, data)` in
/// `O(n²)` memory.
pub fn shallow_ntk_seeded(d1: usize, seed: u64, data: &Dataset) -> Result<NtkParts> {
    if d1 == 0 {
        return Err(domain("network width", 0.0));
    }
    let chunks = (0..shallow_chunk_count(d1)).map(|c| shallow_chunk_seeded(d1, seed, data, c));
    Ok(shallow_ntk_from_chunks(d1, data, chunks))
}

/// Smallest eigenvalue with the near-zero clamp.
pub fn min_eigenvalue(k: &KernelMatrix) -> EigenReport {
    k.eigen_report()
}

/// Parameters of a depth-`L` network, `widths = [d₀, …, d_{L−1}, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepParams {
    pub widths: Vec<usize>,
    /// `weights[l−1] = W_l`, `d_l × d_{l−1}` row-major.
    pub weights: Vec<Vec<f64>>,
    pub seed: u64,
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(domain("depth L (need ≥ 1)", 0.0));
    }
    if let Some(&z) = widths.iter().find(|&&w| w == 0) {
        return Err(domain("layer width", z as f64));
    }
    if *widths.last().expect("non-empty") != 1 {
        return Err(domain("output width d_L (need 1)", *widths.last().expect("non-empty") as f64));
    }
    Ok(())
}

impl DeepParams {
    /// Explicit weights; `seed` is recorded as 0.
    pub fn from_weights(widths: Vec<usize>, weights: Vec<Vec<f64>>) -> Result<Self> {
        check_widths(&widths)?;
        check_len(widths.len() - 1, weights.len())?;
        for (l, w) in weights.iter().enumerate() {
            check_len(widths[l + 1] * widths[l], w.len())?;
        }
        Ok(DeepParams { widths, weights, seed: 0 })
    }

    /// `L`.
    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum()
    }

    /// `∏_{l=1}^{L−1} d_l/2`.
    pub fn raw_scale(&self) -> f64 {
        self.widths[1..self.depth()].iter().map(|&d| d as f64 / 2.0).product()
    }

    fn layer(&self, l: usize) -> &[f64] {
        &self.weights[l - 1]
    }
}

pub fn init_deep(widths: &[usize], seed: u64) -> Result<DeepParams> {
    check_widths(widths)?;
    let weights = (1..widths.len())
        .map(|l| {
            let mut r = rng::stream_rng(seed, l as u64);
            rng::gaussian_vec(&mut r, widths[l] * widths[l - 1])
        })
        .collect();
    Ok(DeepParams { widths: widths.to_vec(), weights, seed })
}

/// `W z` for row-major `W` with `rows` rows.
fn matvec(w: &[f64], rows: usize, z: &[f64]) -> Vec<f64> {
    w.chunks_exact(z.len()).take(rows).map(|row| linalg::dot(row, z)).collect()
}

/// Pre-activations `W_l f_{l−1}(x)` for `l = 1..=L` (index `l−1`).
fn preactivations(p: &DeepParams, x: &[f64]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(p.depth());
    let mut f = x.to_vec();
    for l in 1..=p.depth() {
        let z = matvec(p.layer(l), p.widths[l], &f);
        f = z.iter().map(|&v| relu(v)).collect();
        out.push(z);
    }
    out
}

/// Normalized output `∏ √(2/d_l) · f_L(x)`.
pub fn deep_forward(p: &DeepParams, x: &[f64]) -> Result<f64> {
    check_len(p.widths[0], x.len())?;
    let z = preactivations(p, x);
    Ok(z[p.depth() - 1][0] / libm::sqrt(p.raw_scale()))
}

/// Per-layer intermediates of a deep network on a dataset.
///
/// Indexing: `features[l]` is `F_l` for `l = 0..L` (`F_0 = X`);
/// `patterns[l−1]` and `s_mats[l−1]` are `Σ_l` and `S_l` for
/// `l = 1..L−1`; `backprop[l−1]` is `B_l` for `l = 1..=L` with `B_L = 1`.
/// Each per-point block is stored contiguously, point after point.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub widths: Vec<usize>,
    pub n: usize,
    pub features: Vec<Vec<f64>>,
    pub patterns: Vec<Vec<bool>>,
    /// `S_l(x_i)` is `d_l × d_{L−1}` row-major.
    pub s_mats: Vec<Vec<f64>>,
    pub backprop: Vec<Vec<f64>>,
}

impl LayerTrace {
    /// `f_l(x_i)`.
    pub fn feature(&self, l: usize, i: usize) -> &[f64] {
        let d = self.widths[l];
        &self.features[l][i * d..(i + 1) * d]
    }

    /// `B_l(x_i)`.
    pub fn backprop_row(&self, l: usize, i: usize) -> &[f64] {
        let d = self.widths[l];
        &self.backprop[l - 1][i * d..(i + 1) * d]
    }

    /// `S_l(x_i)`.
    pub fn s_mat(&self, l: usize, i: usize) -> &[f64] {
        let size = self.widths[l] * self.widths[self.widths.len() - 2];
        &self.s_mats[l - 1][i * size..(i + 1) * size]
    }
}

/// `S_l` for one point, `l = 1..L−1`, from its pre-activations.
fn s_matrices(p: &DeepParams, z: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let depth = p.depth();
    if depth < 2 {
        return Vec::new();
    }
    let last = p.widths[depth - 1];
    let mut out = vec![Vec::new(); depth - 1];
    let mut s = vec![0.0; last * last];
    for (a, &za) in z[depth - 2].iter().enumerate() {
        s[a * last + a] = step(za);
    }
    out[depth - 2] = s;
    for l in (1..depth - 1).rev() {
        let (dl, dn) = (p.widths[l], p.widths[l + 1]);
        let w = p.layer(l + 1);
        let next = &out[l];
        let mut s = vec![0.0; dl * last];
        for a in 0..dl {
            if z[l - 1][a] <= 0.0 {
                continue;
            }
            let row = &mut s[a * last..(a + 1) * last];
            for b in 0..dn {
                let wba = w[b * dl + a];
                if wba == 0.0 {
                    continue;
                }
                for (r, sn) in row.iter_mut().zip(&next[b * last..(b + 1) * last]) {
                    *r += wba * sn;
                }
            }
        }
        out[l - 1] = s;
    }
    out
}

/// Backpropagation vectors `B_l(x) = S_l(x) W_Lᵀ` for `l = 1..=L`, without
/// forming `S_l`.
fn backprop_vectors(p: &DeepParams, z: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let depth = p.depth();
    let mut out = vec![Vec::new(); depth];
    out[depth - 1] = vec![1.0];
    for l in (1..depth).rev() {
        let (dl, dn) = (p.widths[l], p.widths[l + 1]);
        let w = p.layer(l + 1);
        let next = &out[l];
        let mut g = vec![0.0; dl];
        for (a, ga) in g.iter_mut().enumerate() {
            if z[l - 1][a] > 0.0 {
                let terms: Vec<f64> = (0..dn).map(|b| w[b * dl + a] * next[b]).collect();
                *ga = linalg::pairwise_sum(&terms);
            }
        }
        out[l - 1] = g;
    }
    out
}

pub fn deep_trace(p: &DeepParams, data: &Dataset) -> Result<LayerTrace> {
    check_len(p.widths[0], data.dim())?;
    let depth = p.depth();
    let n = data.n();
    let mut features: Vec<Vec<f64>> = vec![data.as_slice().to_vec()];
    features.extend((1..depth).map(|l| Vec::with_capacity(n * p.widths[l])));
    let mut patterns: Vec<Vec<bool>> = (1..depth).map(|l| Vec::with_capacity(n * p.widths[l])).collect();
    let mut s_mats: Vec<Vec<f64>> = vec![Vec::new(); depth.saturating_sub(1)];
    let mut backprop: Vec<Vec<f64>> = vec![Vec::new(); depth];
    for x in data.iter() {
        let z = preactivations(p, x);
        for l in 1..depth {
            features[l].extend(z[l - 1].iter().map(|&v| relu(v)));
            patterns[l - 1].extend(z[l - 1].iter().map(|&v| v > 0.0));
        }
        for (l, s) in s_matrices(p, &z).into_iter().enumerate() {
            s_mats[l].extend(s);
        }
        for (l, b) in backprop_vectors(p, &z).into_iter().enumerate() {
            backprop[l].extend(b);
        }
    }
    Ok(LayerTrace { widths: p.widths.clone(), n, features, patterns, s_mats, backprop })
}

/// Deep NTK from the layerwise decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepNtk {
    /// `K` of the normalized network.
    pub normalized: KernelMatrix,
    /// `Σ_{l=0}^{L−1} (F_lᵀF_l) ⊙ (B_{l+1}B_{l+1}ᵀ) = (∏ d_l/2) K`.
    pub raw: KernelMatrix,
}

pub fn deep_ntk_decomposed(p: &DeepParams, data: &Dataset) -> Result<DeepNtk> {
    check_len(p.widths[0], data.dim())?;
    let depth = p.depth();
    let n = data.n();
    let mut feats: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n);
    let mut backs: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n);
    for x in data.iter() {
        let z = preactivations(p, x);
        let mut f = vec![x.to_vec()];
        f.extend(z[..depth - 1].iter().map(|zl| zl.iter().map(|&v| relu(v)).collect::<Vec<_>>()));
        feats.push(f);
        backs.push(backprop_vectors(p, &z));
    }
    let raw = KernelMatrix::from_fn(n, |i, k| {
        let terms: Vec<f64> = (0..depth)
            .map(|l| linalg::dot(&feats[i][l], &feats[k][l]) * linalg::dot(&backs[i][l], &backs[k][l]))
            .collect();
        linalg::pairwise_sum(&terms)
    });
    let normalized = raw.scale(1.0 / p.raw_scale());
    Ok(DeepNtk { normalized, raw })
}

/// Default finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Central-difference Jacobian Gram of the normalized network. Fails with
/// [`Error::NearKink`] when a hidden pre-activation lies within `10h` of 0
/// or when a perturbation changes an activation pattern.
pub fn deep_ntk_fd(p: &DeepParams, data: &Dataset, h: f64) -> Result<KernelMatrix> {
    check_len(p.widths[0], data.dim())?;
    if !(h > 0.0) {
        return Err(domain("finite-difference step h", h));
    }
    let depth = p.depth();
    let patterns: Vec<Vec<Vec<bool>>> = data
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let z = preactivations(p, x);
            for (l, zl) in z[..depth - 1].iter().enumerate() {
                if let Some(&v) = zl.iter().find(|v| v.abs() < 10.0 * h) {
                    return Err(Error::NearKink { layer: l + 1, point: i, value: v });
                }
            }
            Ok(pattern_of(&z, depth))
        })
        .collect::<Result<_>>()?;

    let n = data.n();
    let count = p.param_count();
    let mut jac = vec![0.0; n * count];
    let mut q = p.clone();
    let mut col = 0;
    for l in 0..depth {
        for e in 0..p.weights[l].len() {
            let orig = p.weights[l][e];
            for (i, x) in data.iter().enumerate() {
                q.weights[l][e] = orig + h;
                let (up, pat_up) = forward_with_pattern(&q, x);
                q.weights[l][e] = orig - h;
                let (down, pat_down) = forward_with_pattern(&q, x);
                if pat_up != patterns[i] || pat_down != patterns[i] {
                    return Err(Error::NearKink { layer: l + 1, point: i, value: h });
                }
                jac[i * count + col] = (up - down) / (2.0 * h);
            }
            q.weights[l][e] = orig;
            col += 1;
        }
    }
    let g = linalg::gram_of_rows(&jac, n, count);
    Ok(KernelMatrix::from_fn(n, |i, k| g[i * n + k]))
}

fn pattern_of(z: &[Vec<f64>], depth: usize) -> Vec<Vec<bool>> {
    z[..depth - 1].iter().map(|zl| zl.iter().map(|&v| v > 0.0).collect()).collect()
}

fn forward_with_pattern(p: &DeepParams, x: &[f64]) -> (f64, Vec<Vec<bool>>) {
    let z = preactivations(p, x);
    let depth = p.depth();
    (z[depth - 1][0] / libm::sqrt(p.raw_scale()), pattern_of(&z, depth))
}

/// `∏_{h=1}^{l} d_h/2`.
pub fn feature_scale(widths: &[usize], l: usize) -> f64 {
    widths[1..=l].iter().map(|&d| d as f64 / 2.0).product()
}

/// `2^{−L+l+1} ∏_{k=l}^{L−1} d_k`.
pub fn backprop_scale(widths: &[usize], l: usize) -> f64 {
    let depth = widths.len() - 1;
    let prod: f64 = widths[l..depth].iter().map(|&d| d as f64).product();
    libm::pow(2.0, l as f64 + 1.0 - depth as f64) * prod
}

/// `‖f_l(x)‖² / ∏_{h ≤ l}(d_h/2)` for `l = 1..L−1`.
pub fn feature_norm_profile(p: &DeepParams, x: &[f64]) -> Result<Vec<f64>> {
    check_len(p.widths[0], x.len())?;
    let z = preactivations(p, x);
    Ok((1..p.depth())
        .map(|l| {
            let sq: f64 = z[l - 1].iter().map(|&v| relu(v) * relu(v)).sum();
            sq / feature_scale(&p.widths, l)
        })
        .collect())
}

/// Norms of `S_l(x)` at one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BackpropNorms {
    pub layer: usize,
    /// `‖S_l W_Lᵀ‖²`
    pub s_w_sq: f64,
    /// `‖S_l‖_F²`
    pub frobenius_sq: f64,
    /// `‖S_l‖²` (spectral)
    pub operator_sq: f64,
}

/// Backpropagation norms for `l = 1..L−1`.
pub fn backprop_norm_profile(p: &DeepParams, x: &[f64]) -> Result<Vec<BackpropNorms>> {
    check_len(p.widths[0], x.len())?;
    let depth = p.depth();
    let z = preactivations(p, x);
    let s_mats = s_matrices(p, &z);
    if depth < 2 {
        return Ok(Vec::new());
    }
    let last = p.widths[depth - 1];
    let w_last = p.layer(depth);
    Ok(s_mats
        .iter()
        .enumerate()
        .map(|(idx, s)| {
            let dl = p.widths[idx + 1];
            let sw = matvec(s, dl, w_last);
            let gram = if dl <= last {
                linalg::gram_of_rows(s, dl, last)
            } else {
                linalg::gram_of_columns(s, dl, last)
            };
            let m = dl.min(last);
            BackpropNorms {
                layer: idx + 1,
                s_w_sq: linalg::norm_sq(&sw),
                frobenius_sq: linalg::norm_sq(s),
                operator_sq: linalg::symmetric_eigenvalues(&gram, m)[m - 1].max(0.0),
            }
        })
        .collect())
}

/// `‖S_l W_Lᵀ‖²` for `l = 1..L−1`, the `s_w_sq` column of
/// [`backprop_norm_profile`] without forming `S_l`.
pub fn backprop_sq_profile(p: &DeepParams, x: &[f64]) -> Result<Vec<f64>> {
    check_len(p.widths[0], x.len())?;
    let depth = p.depth();
    let z = preactivations(p, x);
    let mut b = backprop_vectors(p, &z);
    b.truncate(depth - 1);
    Ok(b.iter().map(|v| linalg::norm_sq(v)).collect())
}

/// Empirical `P(σ̇(w·x) ≠ σ̇(w·x′))` over Gaussian `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FlipRate {
    pub rate: f64,
    pub std_err: f64,
    /// `θ/π` with `θ` the angle between the inputs.
    pub expected: f64,
}

pub fn flip_rate(x: &[f64], x_prime: &[f64], samples: usize, seed: u64) -> Result<FlipRate> {
    check_len(x.len(), x_prime.len())?;
    if samples == 0 {
        return Err(domain("sample count", 0.0));
    }
    let mut r = rng::stream_rng(seed, 0);
    let mut w = vec![0.0; x.len()];
    let mut flips = 0usize;
    for _ in 0..samples {
        w.iter_mut().for_each(|v| *v = rng::gaussian(&mut r));
        if step(linalg::dot(&w, x)) != step(linalg::dot(&w, x_prime)) {
            flips += 1;
        }
    }
    let rate = flips as f64 / samples as f64;
    let cos = linalg::dot(x, x_prime) / libm::sqrt(linalg::norm_sq(x) * linalg::norm_sq(x_prime));
    Ok(FlipRate {
        rate,
        std_err: libm::sqrt(rate * (1.0 - rate) / samples as f64),
        expected: libm::acos(cos.clamp(-1.0, 1.0)) / PI,
    })
}
