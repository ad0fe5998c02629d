use ntk_eigen_core::kernel::{limiting_kernel_entry, KernelMatrix};
use ntk_eigen_core::ntk::*;
use ntk_eigen_core::rng::derive_seed;
use ntk_eigen_core::sphere::{sample_uniform_sphere, separation_stats, Dataset};
use ntk_eigen_core::stats::{median, ols};
use ntk_eigen_core::{Activation, Error};
use proptest::prelude::*;

fn rel_frobenius(a: &KernelMatrix, b: &KernelMatrix) -> f64 {
    let diff: f64 = a.entries().iter().zip(b.entries()).map(|(x, y)| (x - y) * (x - y)).sum();
    diff.sqrt() / b.frobenius_norm()
}

/// Decomposed and finite-difference NTK for the first seed at or after
/// `seed` whose parameters are in general position.
fn fd_pair(widths: &[usize], n: usize, seed: u64) -> (KernelMatrix, KernelMatrix) {
    for attempt in 0..100 {
        let s = derive_seed(seed, attempt, 0);
        let p = init_deep(widths, s).unwrap();
        let data = sample_uniform_sphere(widths[0], n, s).unwrap();
        match deep_ntk_fd(&p, &data, FD_STEP) {
            Ok(fd) => return (deep_ntk_decomposed(&p, &data).unwrap().normalized, fd),
            Err(Error::NearKink { .. }) => continue,
            Err(e) => panic!("{e}"),
        }
    }
    panic!("no general-position draw");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shallow_parts_are_psd_and_add_up(d0 in 2usize..6, d1 in 1usize..40, n in 1usize..7, seed in any::<u64>()) {
        let data = sample_uniform_sphere(d0, n, seed).unwrap();
        let parts = shallow_ntk_seeded(d1, seed, &data).unwrap();
        for (a, (b, c)) in parts.k.entries().iter().zip(parts.k1.entries().iter().zip(parts.k2.entries())) {
            prop_assert!((a - b - c).abs() <= 1e-10);
        }
        for m in [&parts.k, &parts.k1, &parts.k2] {
            prop_assert!(m.is_psd(1e-10));
        }
    }

    #[test]
    fn shallow_ntk_is_gradient_gram(d0 in 2usize..5, d1 in 1usize..30, n in 1usize..6, seed in any::<u64>()) {
        let data = sample_uniform_sphere(d0, n, seed).unwrap();
        let p = init_shallow(d0, d1, seed).unwrap();
        let k = shallow_ntk(&p, &data).unwrap().k;
        let grads: Vec<Vec<f64>> = data.iter().map(|x| shallow_gradient(&p, x).unwrap()).collect();
        for i in 0..n {
            for j in 0..n {
                let g: f64 = grads[i].iter().zip(&grads[j]).map(|(a, b)| a * b).sum();
                prop_assert!((g - k.get(i, j)).abs() <= 1e-12 * (1.0 + g.abs()));
            }
        }
    }

    #[test]
    fn closest_pair_rayleigh_bound(d0 in 2usize..5, d1 in 4usize..64, n in 2usize..8, seed in any::<u64>()) {
        let data = sample_uniform_sphere(d0, n, seed).unwrap();
        let p = init_shallow(d0, d1, seed).unwrap();
        let k = shallow_ntk(&p, &data).unwrap().k;
        let (i, j) = separation_stats(&data).argmin_pair.unwrap();
        let g = gradient_distance(&p, data.point(i), data.point(j)).unwrap();
        prop_assert!(min_eigenvalue(&k).raw <= 0.5 * g * g + 1e-12);
        prop_assert!((kernel_gradient_distance_sq(&k, i, j) - g * g).abs() <= 1e-10 * (1.0 + g * g));
    }

    #[test]
    fn shallow_forward_is_homogeneous(d0 in 2usize..6, seed in any::<u64>(), alpha in 0.01f64..50.0) {
        let p = init_shallow(d0, 17, seed).unwrap();
        let data = sample_uniform_sphere(d0, 1, seed).unwrap();
        let x = data.point(0);
        let scaled: Vec<f64> = x.iter().map(|v| alpha * v).collect();
        let (a, b) = (shallow_forward(&p, &scaled).unwrap(), shallow_forward(&p, x).unwrap());
        prop_assert!((a - alpha * b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn deep_trace_matches_recursion(seed in any::<u64>(), n in 1usize..5) {
        let widths = [3usize, 6, 5, 1];
        let p = init_deep(&widths, seed).unwrap();
        let data = sample_uniform_sphere(3, n, seed).unwrap();
        let tr = deep_trace(&p, &data).unwrap();
        for l in 1..3 {
            let (rows, cols) = (widths[l], widths[l - 1]);
            for i in 0..n {
                let prev = tr.feature(l - 1, i);
                let cur = tr.feature(l, i);
                for r in 0..rows {
                    let z: f64 = (0..cols).map(|c| p.weights[l - 1][r * cols + c] * prev[c]).sum();
                    prop_assert!((cur[r] - z.max(0.0)).abs() <= 1e-12);
                }
            }
        }
        prop_assert!(deep_ntk_decomposed(&p, &data).unwrap().normalized.is_psd(1e-10));
    }

    #[test]
    fn backprop_operator_bound(seed in any::<u64>()) {
        let widths = [4usize, 12, 10, 8, 1];
        let p = init_deep(&widths, seed).unwrap();
        let data = sample_uniform_sphere(4, 1, seed).unwrap();
        let w_last_sq: f64 = p.weights[3].iter().map(|v| v * v).sum();
        for b in backprop_norm_profile(&p, data.point(0)).unwrap() {
            prop_assert!(b.s_w_sq <= b.operator_sq * w_last_sq * (1.0 + 1e-10) + 1e-12);
            prop_assert!(b.operator_sq <= b.frobenius_sq * (1.0 + 1e-10) + 1e-12);
        }
    }

    #[test]
    fn backprop_vectors_match_s_matrices(seed in any::<u64>()) {
        let p = init_deep(&[3, 11, 9, 7, 1], seed).unwrap();
        let data = sample_uniform_sphere(3, 1, seed).unwrap();
        let full = backprop_norm_profile(&p, data.point(0)).unwrap();
        let fast = backprop_sq_profile(&p, data.point(0)).unwrap();
        prop_assert_eq!(full.len(), fast.len());
        for (b, &sq) in full.iter().zip(&fast) {
            prop_assert!((b.s_w_sq - sq).abs() <= 1e-12 * (1.0 + sq));
        }
    }

    #[test]
    fn feature_ratios_scale_quadratically(seed in any::<u64>(), alpha in 0.1f64..10.0) {
        let p = init_deep(&[3, 9, 7, 1], seed).unwrap();
        let data = sample_uniform_sphere(3, 1, seed).unwrap();
        let x = data.point(0);
        let scaled: Vec<f64> = x.iter().map(|v| alpha * v).collect();
        let a = feature_norm_profile(&p, x).unwrap();
        let b = feature_norm_profile(&p, &scaled).unwrap();
        for (u, w) in a.iter().zip(&b) {
            prop_assert!((w - alpha * alpha * u).abs() <= 1e-10 * (1.0 + w.abs()));
        }
    }
}

#[test]
fn initialization_moments() {
    let p = init_shallow(10, 100_000, 123).unwrap();
    let n = p.w.len() as f64;
    let mean = p.w.iter().sum::<f64>() / n;
    let var = p.w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() < 5.0 / n.sqrt(), "mean {mean}");
    assert!((var - 1.0).abs() < 0.01, "var {var}");
}

#[test]
fn duplicate_points_give_singular_kernel() {
    let data = Dataset::from_points(3, [[0.0, 0.6, 0.8], [0.0, 0.6, 0.8]]).unwrap();
    let k = shallow_ntk_seeded(50, 4, &data).unwrap().k;
    let rep = min_eigenvalue(&k);
    assert_eq!(rep.lambda_min, 0.0);
}

#[test]
fn decomposition_matches_finite_differences() {
    let cases: [&[usize]; 4] = [&[3, 8, 1], &[2, 5, 4, 1], &[4, 6, 6, 5, 1], &[3, 16, 1]];
    for (c, widths) in cases.iter().enumerate() {
        for seed in 0..3 {
            let (dec, fd) = fd_pair(widths, 4, derive_seed(99, c as u64, seed));
            let err = rel_frobenius(&fd, &dec);
            assert!(err <= 1e-4, "{widths:?} seed {seed}: {err}");
        }
    }
}

#[test]
fn two_layer_deep_is_twice_shallow() {
    let (d0, d1) = (3, 24);
    let s = init_shallow(d0, d1, 5).unwrap();
    let p = DeepParams::from_weights(vec![d0, d1, 1], vec![s.w.clone(), s.v.clone()]).unwrap();
    let data = sample_uniform_sphere(d0, 5, 5).unwrap();
    let deep = deep_ntk_decomposed(&p, &data).unwrap().normalized;
    let shallow = shallow_ntk(&s, &data).unwrap().k;
    assert!(rel_frobenius(&deep, &shallow.scale(2.0)) <= 1e-12);
    for x in data.iter() {
        let f = deep_forward(&p, x).unwrap();
        assert!((f - 2f64.sqrt() * shallow_forward(&s, x).unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn dead_input_zeroes_backprop() {
    let p = DeepParams::from_weights(vec![2, 2, 3, 1], vec![vec![-1.0, 0.0, -1.0, 0.0], vec![1.0; 6], vec![1.0; 3]]).unwrap();
    let x = [1.0, 0.0];
    for b in backprop_norm_profile(&p, &x).unwrap() {
        assert_eq!((b.s_w_sq, b.frobenius_sq, b.operator_sq), (0.0, 0.0, 0.0));
    }
    assert!(feature_norm_profile(&p, &x).unwrap().iter().all(|&r| r == 0.0));
}

#[test]
fn first_layer_feature_ratio_has_unit_mean() {
    let x = [0.6, 0.0, 0.8];
    let ratios: Vec<f64> = (0..10_000)
        .map(|s| feature_norm_profile(&init_deep(&[3, 16, 16, 1], s).unwrap(), &x).unwrap()[0])
        .collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((mean - 1.0).abs() <= 0.02, "mean {mean}");
}

#[test]
fn backprop_ratio_medians_near_one() {
    let widths = [8usize, 128, 128, 1];
    let x = [0.5; 8].map(|v: f64| v / 2f64.sqrt());
    let mut per_layer = vec![Vec::new(); 2];
    for s in 0..60 {
        let p = init_deep(&widths, s).unwrap();
        for b in backprop_norm_profile(&p, &x).unwrap() {
            per_layer[b.layer - 1].push(b.s_w_sq / backprop_scale(&widths, b.layer));
        }
    }
    for (l, r) in per_layer.iter().enumerate() {
        let m = median(r);
        assert!((0.25..=4.0).contains(&m), "layer {}: {m}", l + 1);
    }
}

#[test]
fn finite_width_kernel_converges_at_root_rate() {
    let data = sample_uniform_sphere(3, 4, 8).unwrap();
    let widths = [256usize, 1024, 4096, 16384];
    let (mut xs, mut y1, mut y2) = (Vec::new(), Vec::new(), Vec::new());
    for &d1 in &widths {
        let mut e1 = Vec::new();
        let mut e2 = Vec::new();
        for s in 0..24 {
            let parts = shallow_ntk_seeded(d1, derive_seed(1, d1 as u64, s), &data).unwrap();
            let (mut m1, mut m2): (f64, f64) = (0.0, 0.0);
            for i in 0..4 {
                for k in 0..4 {
                    let t = data.inner(i, k);
                    let lim1 = limiting_kernel_entry(Activation::ReluDerivative, t) * t;
                    let lim2 = limiting_kernel_entry(Activation::ScaledRelu, t);
                    m1 = m1.max((parts.k1.get(i, k) - lim1).abs());
                    m2 = m2.max((parts.k2.get(i, k) - lim2).abs());
                }
            }
            e1.push(m1);
            e2.push(m2);
        }
        xs.push((d1 as f64).ln());
        y1.push(median(&e1).ln());
        y2.push(median(&e2).ln());
    }
    for ys in [y1, y2] {
        let slope = ols(&xs, &ys).unwrap().slope;
        assert!((slope + 0.5).abs() <= 0.15, "slope {slope}");
    }
}

#[test]
fn flip_rate_matches_angle() {
    let theta = std::f64::consts::PI / 3.0;
    let fr = flip_rate(&[1.0, 0.0, 0.0], &[theta.cos(), theta.sin(), 0.0], 40_000, 3).unwrap();
    assert!((fr.expected - 1.0 / 3.0).abs() <= 1e-12);
    assert!((fr.rate - fr.expected).abs() <= 3.0 * fr.std_err);
}
