//! Dense helpers: pairwise summation, Gram products and a cyclic Jacobi
//! eigensolver for small symmetric matrices.
//!
//! Matrices are flat row-major `&[f64]` slices.

use alloc::vec;
use alloc::vec::Vec;
const PAIRWISE_BLOCK: usize = 16;

/// Pairwise (cascade) summation. The result depends only on the input order,
/// never on how a caller chose to split the work.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `MᵀM` for a row-major `rows × cols` matrix.
pub fn gram_of_columns(m: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut g = vec![0.0; cols * cols];
    for i in 0..cols {
        for k in i..cols {
            let s: f64 = (0..rows).map(|r| m[r * cols + i] * m[r * cols + k]).sum();
            g[i * cols + k] = s;
            g[k * cols + i] = s;
        }
    }
    g
}

/// `MMᵀ` for a row-major `rows × cols` matrix.
pub fn gram_of_rows(m: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut g = vec![0.0; rows * rows];
    for i in 0..rows {
        let ri = &m[i * cols..(i + 1) * cols];
        for k in i..rows {
            let s = dot(ri, &m[k * cols..(k + 1) * cols]);
            g[i * rows + k] = s;
            g[k * rows + i] = s;
        }
    }
    g
}

/// Largest `|a_ik - a_ki|`.
pub fn max_asymmetry(a: &[f64], n: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for k in (i + 1)..n {
            worst = worst.max((a[i * n + k] - a[k * n + i]).abs());
        }
    }
    worst
}

/// Stopping rule for the Jacobi sweeps: off-diagonal Frobenius norm relative
/// to the full Frobenius norm.
pub const JACOBI_TOLERANCE: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Column-major `n × n`; column `j` is the eigenvector of `values[j]`.
    pub vectors: Vec<f64>,
}

/// Eigenvalues (ascending) of a symmetric matrix via cyclic Jacobi.
pub fn symmetric_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    jacobi(a, n, false).values
}

/// Eigenvalues and eigenvectors of a symmetric matrix via cyclic Jacobi.
pub fn symmetric_eigen(a: &[f64], n: usize) -> SymmetricEigen {
    jacobi(a, n, true)
}

fn jacobi(a: &[f64], n: usize, want_vectors: bool) -> SymmetricEigen {
    assert_eq!(a.len(), n * n, "matrix must be n × n");
    let mut m = a.to_vec();
    // symmetrize so the sweeps see an exactly symmetric input
    for i in 0..n {
        for k in (i + 1)..n {
            let s = 0.5 * (m[i * n + k] + m[k * n + i]);
            m[i * n + k] = s;
            m[k * n + i] = s;
        }
    }
    let mut v = if want_vectors {
        let mut id = vec![0.0; n * n];
        for i in 0..n {
            id[i * n + i] = 1.0;
        }
        id
    } else {
        Vec::new()
    };

    let frob = libm::sqrt(m.iter().map(|x| x * x).sum::<f64>());
    let target = JACOBI_TOLERANCE * frob;

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = libm::sqrt(
            (0..n)
                .flat_map(|i| ((i + 1)..n).map(move |k| (i, k)))
                .map(|(i, k)| 2.0 * m[i * n + k] * m[i * n + k])
                .sum::<f64>(),
        );
        if off <= target || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = libm::copysign(1.0, theta) / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for r in 0..n {
                    let rp = m[r * n + p];
                    let rq = m[r * n + q];
                    m[r * n + p] = c * rp - s * rq;
                    m[r * n + q] = s * rp + c * rq;
                }
                for r in 0..n {
                    let pr = m[p * n + r];
                    let qr = m[q * n + r];
                    m[p * n + r] = c * pr - s * qr;
                    m[q * n + r] = s * pr + c * qr;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                if want_vectors {
                    for r in 0..n {
                        let rp = v[r * n + p];
                        let rq = v[r * n + q];
                        v[r * n + p] = c * rp - s * rq;
                        v[r * n + q] = s * rp + c * rq;
                    }
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &k| m[i * n + i].total_cmp(&m[k * n + k]));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors = if want_vectors {
        // v is row-major with eigenvectors as columns; emit column-major
        let mut out = vec![0.0; n * n];
        for (j, &src) in order.iter().enumerate() {
            for r in 0..n {
                out[j * n + r] = v[r * n + src];
            }
        }
        out
    } else {
        Vec::new()
    };
    SymmetricEigen { values, vectors }
}
