//! Adaptive Gauss–Kronrod (7/15) quadrature on a finite interval.

use alloc::collections::BinaryHeap;
use core::cmp::Ordering;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Default evaluation budget.
pub const MAX_EVALUATIONS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Piece {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Piece { a, b, value: kronrod * h, error: ((kronrod - gauss) * h).abs() }
}

/// Integrates `f` over `[a, b]` to absolute accuracy `abs_tol`, bisecting the
/// subinterval with the largest error estimate until the summed estimate
/// drops below the tolerance or `max_evaluations` is exhausted.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_evaluations: usize,
) -> Result<Integral> {
    let first = gk15(&f, a, b);
    let mut evaluations = 15;
    let mut value = first.value;
    let mut error = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    while error > abs_tol {
        if evaluations + 30 > max_evaluations {
            return Err(Error::NoConvergence { evaluations, estimate: error });
        }
        let worst = heap.pop().expect("heap holds at least one piece");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // interval can no longer be split in floating point
            return Err(Error::NoConvergence { evaluations, estimate: error });
        }
        let left = gk15(&f, worst.a, mid);
        let right = gk15(&f, mid, worst.b);
        evaluations += 30;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        // refresh sums occasionally to stop drift from incremental updates
        if heap.len() % 256 == 0 {
            value = crate::linalg::pairwise_sum(&heap.iter().map(|p| p.value).collect::<alloc::vec::Vec<_>>());
            error = heap.iter().map(|p| p.error).sum();
        }
    }
    Ok(Integral { value, error, evaluations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn polynomials_are_exact() {
        let r = integrate(|x| x.powi(10), 0.0, 1.0, 1e-14, MAX_EVALUATIONS).unwrap();
        assert_abs_diff_eq!(r.value, 1.0 / 11.0, epsilon = 1e-15);
        assert_eq!(r.evaluations, 15);
    }

    #[test]
    fn sqrt_endpoint() {
        let r = integrate(|x: f64| (1.0 - x * x).max(0.0).sqrt(), 0.0, 1.0, 1e-12, MAX_EVALUATIONS)
            .unwrap();
        assert_abs_diff_eq!(r.value, core::f64::consts::FRAC_PI_4, epsilon = 1e-12);
    }

    #[test]
    fn budget_is_enforced() {
        let r = integrate(|x: f64| x.sqrt(), 0.0, 1.0, 1e-15, 100);
        assert!(matches!(r, Err(Error::NoConvergence { .. })));
    }
}
