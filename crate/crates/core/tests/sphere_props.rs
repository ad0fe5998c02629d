use ntk_eigen_core::rng;
use ntk_eigen_core::sphere::{cap_volume_bounds, operator_norm, sample_uniform_sphere, separation_stats, Dataset};
use proptest::prelude::*;

fn dataset_strategy() -> impl Strategy<Value = Dataset> {
    (3usize..7, 2usize..12, any::<u64>()).prop_map(|(d, n, seed)| sample_uniform_sphere(d, n, seed).unwrap())
}

proptest! {
    #[test]
    fn separation_is_permutation_invariant(data in dataset_strategy(), rot in 1usize..11) {
        let n = data.n();
        let perm: Vec<Vec<f64>> = (0..n).map(|i| data.point((i + rot) % n).to_vec()).collect();
        let shuffled = Dataset::from_points(data.dim(), perm).unwrap();
        let (a, b) = (separation_stats(&data), separation_stats(&shuffled));
        prop_assert_eq!(a.delta, b.delta);
        prop_assert_eq!(a.delta_prime, b.delta_prime);
    }

    #[test]
    fn sign_flip_leaves_delta_unchanged(data in dataset_strategy(), idx in 0usize..12) {
        let i = idx % data.n();
        let a = separation_stats(&data);
        let b = separation_stats(&data.with_flipped(i));
        prop_assert!((a.delta - b.delta).abs() <= 1e-15);
    }

    #[test]
    fn delta_bounded_by_delta_prime(data in dataset_strategy()) {
        let s = separation_stats(&data);
        prop_assert!(s.delta <= s.delta_prime);
        prop_assert!(s.delta <= std::f64::consts::SQRT_2 + 1e-15);
        let (i, k) = s.argmin_pair.unwrap();
        let dist: f64 = data.point(i).iter().zip(data.point(k)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        prop_assert_eq!(dist, s.delta_prime);
    }

    #[test]
    fn operator_norm_trace_bound(data in dataset_strategy()) {
        let sq = operator_norm(&data).powi(2);
        prop_assert!(sq <= data.n() as f64 + 1e-10);
        prop_assert!(sq >= 1.0 - 1e-10);
    }
}

#[test]
fn operator_norm_concentrates() {
    // For uniform columns (1 + √(n/d))² ≤ 2(1 + n/d) is the typical size;
    // allow twice that.
    for &(d0, n) in &[(50usize, 10usize), (20, 40), (8, 64), (100, 100)] {
        for seed in 0..20 {
            let data = sample_uniform_sphere(d0, n, seed).unwrap();
            let sq = operator_norm(&data).powi(2);
            assert!(sq <= 4.0 * (1.0 + n as f64 / d0 as f64), "d0={d0} n={n} seed={seed}: {sq}");
        }
    }
}

#[test]
fn cap_bounds_bracket_monte_carlo_fraction() {
    let samples = 2_000_000;
    for &d0 in &[3usize, 4, 5] {
        for &delta in &[0.2, 0.3, 0.45] {
            let mut r = rng::stream_rng(77, d0 as u64);
            let mut y = vec![0.0; d0];
            let mut hits = 0usize;
            for _ in 0..samples {
                rng::fill_uniform_sphere(&mut r, &mut y);
                // x = e1: ‖y − e1‖² = 2 − 2y₁
                if 2.0 - 2.0 * y[0] <= delta * delta {
                    hits += 1;
                }
            }
            let frac = hits as f64 / samples as f64;
            let se = (frac * (1.0 - frac) / samples as f64).sqrt();
            let b = cap_volume_bounds(d0, delta, 1.0).unwrap();
            assert!(b.lower <= frac + 4.0 * se, "d0={d0} δ={delta}: {} > {frac}", b.lower);
            assert!(frac - 4.0 * se <= b.upper, "d0={d0} δ={delta}: {frac} > {}", b.upper);
            if d0 == 3 {
                // on S² the normalized cap area is exactly δ²/4
                assert!((frac - delta * delta / 4.0).abs() <= 4.0 * se);
            }
        }
    }
}

#[test]
fn separation_slope_small_run() {
    // smaller version of the acceptance run: d0 = 5, slope −1/2
    let ns = [32usize, 64, 128, 256];
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &n in &ns {
        let vals: Vec<f64> = (0..60)
            .map(|t| separation_stats(&sample_uniform_sphere(5, n, rng::derive_seed(3, n as u64, t)).unwrap()).delta_prime)
            .collect();
        xs.push((n as f64).ln());
        ys.push(ntk_eigen_core::stats::median(&vals).ln());
    }
    let slope = ntk_eigen_core::stats::ols(&xs, &ys).unwrap().slope;
    assert!((slope + 0.5).abs() <= 0.125 * 1.5, "slope {slope}");
}
