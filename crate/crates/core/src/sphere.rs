//! Datasets on the unit sphere, their separation statistics and the
//! conditioning of the data matrix.

use alloc::vec;
use alloc::vec::Vec;
use crate::error::{domain, Error, Result};
use crate::linalg;
use crate::rng;

/// Maximum deviation of a point norm from 1.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-12;

/// `n` unit vectors in `R^dim`, stored point-contiguous (the columns of the
/// `dim × n` data matrix).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    points: Vec<f64>,
}

impl Dataset {
    /// Validates shape and unit norms. Points are never renormalized here;
    /// use [`Dataset::normalized`] for that.
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        check_shape(dim, &points)?;
        for (index, p) in points.chunks_exact(dim).enumerate() {
            let norm = libm::sqrt(linalg::norm_sq(p));
            if !((norm - 1.0).abs() <= UNIT_NORM_TOLERANCE) {
                return Err(Error::NotUnitNorm { index, norm });
            }
        }
        Ok(Dataset { dim, points })
    }

    /// Rescales every point to unit norm. Zero or non-finite points are rejected.
    pub fn normalized(dim: usize, mut points: Vec<f64>) -> Result<Self> {
        check_shape(dim, &points)?;
        for (index, p) in points.chunks_exact_mut(dim).enumerate() {
            let norm = libm::sqrt(linalg::norm_sq(p));
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::NotUnitNorm { index, norm });
            }
            p.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(Dataset { dim, points })
    }

    pub fn from_points<I, P>(dim: usize, points: I) -> Result<Self>
    where
        I: IntoIterator<Item = P>,
        P: AsRef<[f64]>,
    {
        Self::new(dim, flatten(dim, points)?)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Flat point-contiguous storage.
    pub fn as_slice(&self) -> &[f64] {
        &self.points
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn inner(&self, i: usize, k: usize) -> f64 {
        linalg::dot(self.point(i), self.point(k))
    }

    /// `XᵀX`, row-major `n × n`.
    pub fn gram(&self) -> Vec<f64> {
        linalg::gram_of_rows(&self.points, self.n(), self.dim)
    }

    /// Negate point `i` (used by symmetry checks; keeps unit norm).
    pub fn with_flipped(&self, i: usize) -> Dataset {
        let mut out = self.clone();
        let d = self.dim;
        out.points[i * d..(i + 1) * d].iter_mut().for_each(|x| *x = -*x);
        out
    }
}

fn check_shape(dim: usize, points: &[f64]) -> Result<()> {
    if dim == 0 {
        return Err(domain("dimension d0", 0.0));
    }
    if points.is_empty() {
        return Err(domain("number of points n", 0.0));
    }
    if points.len() % dim != 0 {
        return Err(Error::DimensionMismatch { expected: dim, got: points.len() % dim });
    }
    Ok(())
}

fn flatten<I, P>(dim: usize, points: I) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = P>,
    P: AsRef<[f64]>,
{
    let mut flat = Vec::new();
    for p in points {
        let p = p.as_ref();
        if p.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
        }
        flat.extend_from_slice(p);
    }
    Ok(flat)
}

/// `n` independent uniform draws from `S^{d0-1}`. Point `i` is read from
/// stream `i` of `seed`.
pub fn sample_uniform_sphere(d0: usize, n: usize, seed: u64) -> Result<Dataset> {
    if d0 == 0 {
        return Err(domain("dimension d0", 0.0));
    }
    if n == 0 {
        return Err(domain("number of points n", 0.0));
    }
    let mut points = vec![0.0; d0 * n];
    for (i, p) in points.chunks_exact_mut(d0).enumerate() {
        let mut r = rng::stream_rng(seed, i as u64);
        rng::fill_uniform_sphere(&mut r, p);
    }
    Ok(Dataset { dim: d0, points })
}

/// Pairwise separation of a dataset.
///
/// `delta` is the sign-insensitive separation `min ‖x_i ∓ x_k‖`, `delta_prime`
/// the plain minimum distance. With a single point both are `+∞` and
/// `argmin_pair` is `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SeparationStats {
    pub delta: f64,
    pub delta_prime: f64,
    pub argmin_pair: Option<(usize, usize)>,
}

pub fn separation_stats(data: &Dataset) -> SeparationStats {
    let n = data.n();
    let mut delta_sq = f64::INFINITY;
    let mut delta_prime_sq = f64::INFINITY;
    let mut argmin_pair = None;
    for i in 0..n {
        let xi = data.point(i);
        for k in (i + 1)..n {
            let xk = data.point(k);
            let (mut minus, mut plus) = (0.0, 0.0);
            for (a, b) in xi.iter().zip(xk) {
                minus += (a - b) * (a - b);
                plus += (a + b) * (a + b);
            }
            if minus < delta_prime_sq {
                delta_prime_sq = minus;
                argmin_pair = Some((i, k));
            }
            delta_sq = delta_sq.min(minus.min(plus));
        }
    }
    SeparationStats {
        delta: libm::sqrt(delta_sq),
        delta_prime: libm::sqrt(delta_prime_sq),
        argmin_pair,
    }
}

/// Largest singular value of the `d0 × n` data matrix.
///
/// Uses whichever of `XᵀX` and `XXᵀ` is smaller; both share the top eigenvalue.
pub fn operator_norm(data: &Dataset) -> f64 {
    let (n, d) = (data.n(), data.dim());
    let gram = if n <= d {
        data.gram()
    } else {
        linalg::gram_of_columns(data.as_slice(), n, d)
    };
    let m = n.min(d);
    let top = linalg::symmetric_eigenvalues(&gram, m)[m - 1];
    libm::sqrt(top.max(0.0))
}

/// Closed-form bounds on the normalized surface measure of
/// `Cap(x, δ) = {y : ‖y − x‖ ≤ δ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapBounds {
    pub lower: f64,
    pub upper: f64,
}

/// `lower = ½(δ/2)^{d−1}`, `upper = 4√π (Cδ)^{d−1}/d²` with `C = cap_const`.
pub fn cap_volume_bounds(d0: usize, delta: f64, cap_const: f64) -> Result<CapBounds> {
    if d0 < 2 {
        return Err(domain("dimension d0 (need ≥ 2)", d0 as f64));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(domain("cap radius δ (need 0 < δ < 1/2)", delta));
    }
    if !(cap_const > 0.0) {
        return Err(domain("cap constant C", cap_const));
    }
    let e = (d0 - 1) as f64;
    let d = d0 as f64;
    Ok(CapBounds {
        lower: 0.5 * libm::pow(0.5 * delta, e),
        upper: 4.0 * libm::sqrt(core::f64::consts::PI) * libm::pow(cap_const * delta, e) / (d * d),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use core::f64::consts::SQRT_2;

    fn ds(dim: usize, pts: &[&[f64]]) -> Dataset {
        Dataset::from_points(dim, pts.iter().copied()).unwrap()
    }

    #[test]
    fn rejects_empty_and_zero_dim() {
        assert!(sample_uniform_sphere(0, 3, 1).is_err());
        assert!(sample_uniform_sphere(3, 0, 1).is_err());
    }

    #[test]
    fn single_draw_is_unit_norm() {
        let d = sample_uniform_sphere(3, 1, 11).unwrap();
        assert_abs_diff_eq!(linalg::norm_sq(d.point(0)).sqrt(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_uniform_sphere(3, 10, 99).unwrap();
        let b = sample_uniform_sphere(3, 10, 99).unwrap();
        assert!(a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn empirical_mean_is_small() {
        // |mean| has scale 1/sqrt(n) = 0.014; 0.05 is >3.5 of those
        for seed in 0..5 {
            let d = sample_uniform_sphere(3, 5000, seed).unwrap();
            let mut mean = [0.0; 3];
            for p in d.iter() {
                for (m, x) in mean.iter_mut().zip(p) {
                    *m += x / 5000.0;
                }
            }
            assert!(linalg::norm_sq(&mean).sqrt() < 0.05);
        }
    }

    #[test]
    fn non_unit_points_are_rejected_unless_normalized() {
        assert!(matches!(
            Dataset::new(2, vec![1.0, 1.0]),
            Err(Error::NotUnitNorm { index: 0, .. })
        ));
        let d = Dataset::normalized(2, vec![3.0, 4.0]).unwrap();
        assert_abs_diff_eq!(d.point(0)[0], 0.6, epsilon = 1e-15);
        assert!(Dataset::normalized(2, vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn antipodal_pair() {
        let s = separation_stats(&ds(3, &[&[1.0, 0.0, 0.0], &[-1.0, 0.0, 0.0]]));
        assert_eq!(s.delta, 0.0);
        assert_eq!(s.delta_prime, 2.0);
    }

    #[test]
    fn orthogonal_pair() {
        let s = separation_stats(&ds(3, &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]));
        assert_abs_diff_eq!(s.delta, SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(s.delta_prime, SQRT_2, epsilon = 1e-15);
        assert_eq!(s.argmin_pair, Some((0, 1)));
    }

    #[test]
    fn three_points_in_a_plane() {
        let h = 1.0 / SQRT_2;
        let s = separation_stats(&ds(3, &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[h, h, 0.0]]));
        let expected = (2.0 - SQRT_2).sqrt();
        assert_abs_diff_eq!(s.delta, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(s.delta_prime, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 0.7654, epsilon = 1e-4);
    }

    #[test]
    fn single_point_uses_infinity_sentinel() {
        let s = separation_stats(&ds(2, &[&[1.0, 0.0]]));
        assert!(s.delta.is_infinite() && s.delta_prime.is_infinite());
        assert_eq!(s.argmin_pair, None);
    }

    #[test]
    fn operator_norm_examples() {
        assert_abs_diff_eq!(
            operator_norm(&ds(2, &[&[1.0, 0.0], &[1.0, 0.0]])),
            SQRT_2,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(operator_norm(&ds(2, &[&[1.0, 0.0], &[0.0, 1.0]])), 1.0, epsilon = 1e-14);
        let h = 1.0 / SQRT_2;
        let got = operator_norm(&ds(2, &[&[1.0, 0.0], &[h, h]]));
        assert_abs_diff_eq!(got, (1.0 + h).sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(got, 1.3066, epsilon = 1e-4);
    }

    #[test]
    fn operator_norm_both_orientations_agree() {
        // n > d and n < d paths
        let wide = sample_uniform_sphere(3, 20, 5).unwrap();
        let sq = operator_norm(&wide).powi(2);
        let g = wide.gram();
        let top = *linalg::symmetric_eigenvalues(&g, 20).last().unwrap();
        assert_abs_diff_eq!(sq, top, epsilon = 1e-10);
        assert!(sq <= 20.0 + 1e-10);
    }

    #[test]
    fn cap_bounds_examples() {
        let b = cap_volume_bounds(3, 0.25, 1.0).unwrap();
        assert_abs_diff_eq!(b.lower, 0.0078125, epsilon = 1e-15);
        assert_abs_diff_eq!(b.upper, 4.0 * core::f64::consts::PI.sqrt() * 0.0625 / 9.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.upper, 0.04924, epsilon = 1e-5);
        assert!(cap_volume_bounds(3, 0.5, 1.0).is_err());
        assert!(cap_volume_bounds(3, 0.0, 1.0).is_err());
        assert!(cap_volume_bounds(1, 0.2, 1.0).is_err());
    }
}
