//! The verification sweeps behind `verify <experiment>`.
//!
//! Every `(cell, trial)` pair draws from its own derived seed:
//! `cell_seed = derive_seed(cfg.seed, kind, cell)` and
//! `trial_seed = derive_seed(cell_seed, trial, 0)`. Trials run on the rayon
//! pool and are collected in index order, so reports do not depend on the
//! thread count.

use std::time::{Instant, SystemTime, UNIX_EPOCH};

use ntk_eigen_core::bounds::{
    deep_lambda_lower, select_truncation, shallow_lambda_lower, width_requirement_deep, width_requirement_shallow,
    BoundConstants,
};
use ntk_eigen_core::kernel::{
    gershgorin_lower, harmonic_gram, harmonic_min_sv, limiting_kernel_entry, limiting_kernel_mc, mercer_series_entry,
};
use ntk_eigen_core::ntk::{self, DeepParams};
use ntk_eigen_core::rng::derive_seed;
use ntk_eigen_core::specfun::{addition_tail_bound, funk_hecke_coeff, funk_hecke_quadrature, Activation};
use ntk_eigen_core::sphere::{operator_norm, sample_uniform_sphere, separation_stats, Dataset};
use ntk_eigen_core::stats::{clopper_pearson, median, ols, summarize};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::report::{Metadata, Record, SweepReport};
use crate::{HarnessError, Result};

/// Confidence level of every binomial band in the harness.
pub const BAND_CONFIDENCE: f64 = 0.99;
/// Fitted bracket constants must land in `[FIT_FLOOR, FIT_CEIL]`.
pub const FIT_FLOOR: f64 = 0.01;
pub const FIT_CEIL: f64 = 100.0;
/// Funk–Hecke closed form vs quadrature.
pub const AUDIT_TOLERANCE: f64 = 1e-8;
pub const MERCER_LADDER: [usize; 5] = [10, 25, 50, 100, 200];
pub const MERCER_TOLERANCE: f64 = 1e-3;
/// Entries further than this many standard errors count as MC failures.
pub const MC_SIGMAS: f64 = 4.0;
pub const MC_FAILURE_RATE: f64 = 0.01;
pub const CONVERGENCE_SLOPE_TOL: f64 = 0.15;
pub const SEPARATION_SLOPE_REL_TOL: f64 = 0.25;

pub fn cell_seed(root: u64, kind: ExperimentKind, cell: usize) -> u64 {
    derive_seed(root, kind as u64, cell as u64)
}

pub fn trial_seed(cell_seed: u64, trial: usize) -> u64 {
    derive_seed(cell_seed, trial as u64, 0)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let start = Instant::now();
    let rows = match cfg.kind {
        ExperimentKind::ShallowVerify => shallow_verify(cfg),
        ExperimentKind::DeepVerify => deep_verify(cfg),
        ExperimentKind::KernelConvergence => kernel_convergence(cfg),
        ExperimentKind::SeparationScaling => separation_scaling(cfg),
        ExperimentKind::FunkHeckeAudit => funk_hecke_audit(cfg),
        ExperimentKind::GramGuarantee => gram_guarantee(cfg),
    };
    let metadata = Metadata {
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        threads: rayon::current_num_threads(),
        wall_time_secs: start.elapsed().as_secs_f64(),
        finished_unix_secs: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };
    Ok(SweepReport::new(cfg.kind, metadata, rows))
}

fn run_trials<T: Send>(trials: usize, seed: u64, f: impl Fn(u64) -> Result<T> + Sync) -> (Vec<T>, usize) {
    let results: Vec<Result<T>> = (0..trials).into_par_iter().map(|t| f(trial_seed(seed, t))).collect();
    let total = results.len();
    let ok: Vec<T> = results.into_iter().filter_map(|r| r.ok()).collect();
    let failed = total - ok.len();
    (ok, failed)
}

fn grid2<A: Copy, B: Copy>(a: &[A], b: &[B]) -> Vec<(A, B)> {
    a.iter().flat_map(|&x| b.iter().map(move |&y| (x, y))).collect()
}

fn median_of(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = xs.collect();
    (!v.is_empty()).then(|| median(&v))
}

fn in_range(v: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&v)
}

// ---------------------------------------------------------------------------
// shallow-verify

/// One shallow run at the computed width requirement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShallowTrial {
    pub delta: f64,
    pub delta_prime: f64,
    pub lambda: f64,
    pub d1: u64,
    /// Width was saturated or clipped by `max_width`.
    pub capped: bool,
    pub lambda_min: f64,
    /// `λ_min(K) ≤ ½‖∇f(x_i) − ∇f(x_k)‖²` at the closest pair.
    pub rayleigh_ok: bool,
}

pub fn shallow_trial(n: usize, d0: usize, eps: f64, consts: &BoundConstants, max_width: Option<u64>, seed: u64) -> Result<ShallowTrial> {
    let data = sample_uniform_sphere(d0, n, seed)?;
    let sep = separation_stats(&data);
    let opnorm_sq = operator_norm(&data).powi(2);
    let lambda = shallow_lambda_lower(d0, sep.delta)?;
    let width = width_requirement_shallow(n, d0, sep.delta, opnorm_sq, eps, consts.shallow_width)?;
    let d1 = max_width.map_or(width.value, |cap| width.value.min(cap));
    let parts = ntk::shallow_ntk_seeded(d1 as usize, seed, &data)?;
    let eig = ntk::min_eigenvalue(&parts.k);
    let (i, k) = sep.argmin_pair.ok_or_else(|| HarnessError::Numerical("dataset has fewer than two points".into()))?;
    let rayleigh_ok = eig.raw <= 0.5 * ntk::kernel_gradient_distance_sq(&parts.k, i, k) + 1e-12;
    Ok(ShallowTrial {
        delta: sep.delta,
        delta_prime: sep.delta_prime,
        lambda,
        d1,
        capped: width.saturated || d1 < width.value,
        lambda_min: eig.lambda_min,
        rayleigh_ok,
    })
}

/// Bracket `c_low·λ ≤ λ_min ≤ c_up·δ′` fitted on even-indexed trials and
/// checked on the odd-indexed ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketFit {
    pub c_low: f64,
    pub c_up: f64,
    pub heldout_trials: usize,
    pub heldout_violations: usize,
    /// Lower end of the two-sided 99% Clopper–Pearson interval for the
    /// held-out violation rate.
    pub violation_cp_lower: f64,
}

impl BracketFit {
    pub fn passes(&self, eps: f64) -> bool {
        self.c_low >= FIT_FLOOR && self.c_up <= FIT_CEIL && self.violation_cp_lower <= eps
    }
}

pub fn fit_shallow_bracket(trials: &[ShallowTrial]) -> Result<BracketFit> {
    let calib: Vec<&ShallowTrial> = trials.iter().step_by(2).collect();
    if calib.is_empty() {
        return Err(HarnessError::Numerical("no trials to fit".into()));
    }
    let c_low = calib.iter().map(|t| t.lambda_min / t.lambda).fold(f64::INFINITY, f64::min);
    let c_up = calib.iter().map(|t| t.lambda_min / t.delta_prime).fold(0.0, f64::max);
    let heldout: Vec<&ShallowTrial> = trials.iter().skip(1).step_by(2).collect();
    let violations = heldout
        .iter()
        .filter(|t| t.lambda_min < c_low * t.lambda || t.lambda_min > c_up * t.delta_prime)
        .count();
    let cp_lower = if heldout.is_empty() {
        0.0
    } else {
        clopper_pearson(violations as u64, heldout.len() as u64, BAND_CONFIDENCE)?.0
    };
    Ok(BracketFit { c_low, c_up, heldout_trials: heldout.len(), heldout_violations: violations, violation_cp_lower: cp_lower })
}

fn shallow_verify(cfg: &ExperimentConfig) -> Vec<Record> {
    grid2(&cfg.n, &cfg.d0)
        .into_iter()
        .enumerate()
        .map(|(cell, (n, d0))| {
            let seed = cell_seed(cfg.seed, cfg.kind, cell);
            let (trials, failed) = run_trials(cfg.trials, seed, |s| shallow_trial(n, d0, cfg.eps, &cfg.constants, cfg.max_width, s));
            let fit = fit_shallow_bracket(&trials).ok();
            let lam = summarize(&trials.iter().map(|t| t.lambda_min).collect::<Vec<_>>());
            let rayleigh_ok = trials.iter().all(|t| t.rayleigh_ok);
            let pass = failed == 0 && rayleigh_ok && fit.is_some_and(|f| f.passes(cfg.eps));
            Record::new()
                .with("cell", cell)
                .with("cell_seed", seed)
                .with("n", n)
                .with("d0", d0)
                .with("trials", cfg.trials)
                .with("failed_trials", failed)
                .with("d1_median", median_of(trials.iter().map(|t| t.d1 as f64)))
                .with("d1_max", trials.iter().map(|t| t.d1).max())
                .with("width_capped", trials.iter().filter(|t| t.capped).count())
                .with("delta_median", median_of(trials.iter().map(|t| t.delta)))
                .with("delta_prime_median", median_of(trials.iter().map(|t| t.delta_prime)))
                .with("lambda_median", median_of(trials.iter().map(|t| t.lambda)))
                .with("lambda_min_min", (!trials.is_empty()).then_some(lam.min))
                .with("lambda_min_median", (!trials.is_empty()).then_some(lam.median))
                .with("lambda_min_max", (!trials.is_empty()).then_some(lam.max))
                .with("c_low", fit.map(|f| f.c_low))
                .with("c_up", fit.map(|f| f.c_up))
                .with("heldout_trials", fit.map(|f| f.heldout_trials))
                .with("heldout_violations", fit.map(|f| f.heldout_violations))
                .with("violation_cp_lower", fit.map(|f| f.violation_cp_lower))
                .with("rayleigh_ok", rayleigh_ok)
                .with("pass", pass)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// deep-verify

/// Feature ratios in `[e^{−1}, e]` and backprop ratios
/// `‖S_l W_Lᵀ‖² / (2^{−L+l+1}∏d_k)` in `[1/4, 4]` at every layer.
pub fn concentration_ok(p: &DeepParams, x: &[f64]) -> Result<(bool, bool)> {
    let e = std::f64::consts::E;
    let features = ntk::feature_norm_profile(p, x)?.iter().all(|&r| in_range(r, 1.0 / e, e));
    let backprop = ntk::backprop_sq_profile(p, x)?
        .iter()
        .enumerate()
        .all(|(i, &sq)| in_range(sq / ntk::backprop_scale(&p.widths, i + 1), 0.25, 4.0));
    Ok((features, backprop))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeepTrial {
    pub delta: f64,
    pub lambda: f64,
    pub lambda_min: f64,
    pub depth: usize,
    pub feature_ok: bool,
    pub backprop_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
enum DeepWidthSpec {
    Fixed(Vec<usize>),
    Required(usize),
}

impl DeepWidthSpec {
    fn label(&self) -> String {
        match self {
            DeepWidthSpec::Fixed(w) => w.iter().map(usize::to_string).collect::<Vec<_>>().join("x"),
            DeepWidthSpec::Required(l) => format!("required(L={l})"),
        }
    }
}

/// Geometric interpolation between the first and last required widths.
fn required_hidden_widths(n: usize, d0: usize, delta: f64, depth: usize, cfg: &ExperimentConfig) -> Result<Vec<usize>> {
    let req = width_requirement_deep(n, d0, delta, depth, cfg.eps, &cfg.constants)?;
    let cap = cfg.max_width.unwrap_or(u64::MAX) as f64;
    let (first, last) = ((req.first.value as f64).min(cap), (req.last.value as f64).min(cap));
    let hidden = depth - 1;
    Ok((0..hidden)
        .map(|j| {
            let t = if hidden == 1 { 0.0 } else { j as f64 / (hidden - 1) as f64 };
            (first.powf(1.0 - t) * last.powf(t)).round().max(1.0) as usize
        })
        .collect())
}

fn deep_trial(n: usize, d0: usize, spec: &DeepWidthSpec, cfg: &ExperimentConfig, seed: u64) -> Result<DeepTrial> {
    let data = sample_uniform_sphere(d0, n, seed)?;
    let delta = separation_stats(&data).delta;
    let hidden = match spec {
        DeepWidthSpec::Fixed(w) => w.clone(),
        DeepWidthSpec::Required(depth) => required_hidden_widths(n, d0, delta, *depth, cfg)?,
    };
    let widths: Vec<usize> = std::iter::once(d0).chain(hidden).chain(std::iter::once(1)).collect();
    let p = ntk::init_deep(&widths, derive_seed(seed, 1, 0))?;
    let k = ntk::deep_ntk_decomposed(&p, &data)?.normalized;
    let (mut feature_ok, mut backprop_ok) = (true, true);
    for x in data.iter() {
        let (f, b) = concentration_ok(&p, x)?;
        feature_ok &= f;
        backprop_ok &= b;
    }
    Ok(DeepTrial {
        delta,
        lambda: deep_lambda_lower(d0, delta)?,
        lambda_min: ntk::min_eigenvalue(&k).lambda_min,
        depth: p.depth(),
        feature_ok,
        backprop_ok,
    })
}

fn deep_verify(cfg: &ExperimentConfig) -> Vec<Record> {
    let specs: Vec<DeepWidthSpec> = if cfg.widths.is_empty() {
        cfg.depth.iter().map(|&l| DeepWidthSpec::Required(l)).collect()
    } else {
        cfg.widths.iter().cloned().map(DeepWidthSpec::Fixed).collect()
    };
    let mut rows = Vec::new();
    for (n, d0) in grid2(&cfg.n, &cfg.d0) {
        for spec in &specs {
            let cell = rows.len();
            let seed = cell_seed(cfg.seed, cfg.kind, cell);
            let (trials, failed) = run_trials(cfg.trials, seed, |s| deep_trial(n, d0, spec, cfg, s));
            let m = trials.len() as u64;
            let depth = trials.first().map(|t| t.depth).unwrap_or(match spec {
                DeepWidthSpec::Fixed(w) => w.len() + 1,
                DeepWidthSpec::Required(l) => *l,
            });
            let c_low = trials.iter().map(|t| t.lambda_min / t.lambda).fold(f64::INFINITY, f64::min);
            let c_up = trials.iter().map(|t| t.lambda_min / t.depth as f64).fold(0.0, f64::max);
            let feat = trials.iter().filter(|t| t.feature_ok).count() as u64;
            let back = trials.iter().filter(|t| t.backprop_ok).count() as u64;
            let cp_upper = |k: u64| (m > 0).then(|| clopper_pearson(k, m, BAND_CONFIDENCE).map(|c| c.1).unwrap_or(0.0));
            let (feat_up, back_up) = (cp_upper(feat), cp_upper(back));
            let lam = summarize(&trials.iter().map(|t| t.lambda_min).collect::<Vec<_>>());
            let some = !trials.is_empty();
            let pass = failed == 0
                && some
                && c_low >= FIT_FLOOR
                && c_up <= FIT_CEIL
                && feat_up.is_some_and(|u| u >= 1.0 - cfg.eps)
                && back_up.is_some_and(|u| u >= 1.0 - cfg.eps);
            rows.push(
                Record::new()
                    .with("cell", cell)
                    .with("cell_seed", seed)
                    .with("n", n)
                    .with("d0", d0)
                    .with("depth", depth)
                    .with("widths", spec.label())
                    .with("trials", cfg.trials)
                    .with("failed_trials", failed)
                    .with("delta_median", median_of(trials.iter().map(|t| t.delta)))
                    .with("lambda_median", median_of(trials.iter().map(|t| t.lambda)))
                    .with("lambda_min_min", some.then_some(lam.min))
                    .with("lambda_min_median", some.then_some(lam.median))
                    .with("lambda_min_max", some.then_some(lam.max))
                    .with("c_low", some.then_some(c_low))
                    .with("c_up", some.then_some(c_up))
                    .with("feature_in_band", some.then(|| feat as f64 / m as f64))
                    .with("backprop_in_band", some.then(|| back as f64 / m as f64))
                    .with("feature_cp_upper", feat_up)
                    .with("backprop_cp_upper", back_up)
                    .with("pass", pass),
            );
        }
    }
    rows
}

// ---------------------------------------------------------------------------
// kernel-convergence

/// Largest entrywise deviations of `K1` from `K^∞_{σ̇} ⊙ XᵀX` and of `K2`
/// from `K^∞_{√dσ}` at width `d1`.
pub fn limit_errors(data: &Dataset, d1: usize, seed: u64) -> Result<(f64, f64)> {
    let parts = ntk::shallow_ntk_seeded(d1, seed, data)?;
    let n = data.n();
    let (mut e1, mut e2) = (0.0f64, 0.0f64);
    for i in 0..n {
        for k in i..n {
            let t = data.inner(i, k);
            e1 = e1.max((parts.k1.get(i, k) - limiting_kernel_entry(Activation::ReluDerivative, t) * t).abs());
            e2 = e2.max((parts.k2.get(i, k) - limiting_kernel_entry(Activation::ScaledRelu, t)).abs());
        }
    }
    Ok((e1, e2))
}

/// Upper-triangle entries checked and the number outside `MC_SIGMAS`
/// standard errors of the closed form, over both activations.
pub fn mc_check(data: &Dataset, samples: usize, seed: u64) -> Result<(usize, usize)> {
    let n = data.n();
    let (mut entries, mut failures) = (0, 0);
    for (a, psi) in Activation::ALL.into_iter().enumerate() {
        let mc = limiting_kernel_mc(psi, data, samples, derive_seed(seed, a as u64, 0))?;
        for i in 0..n {
            for k in i..n {
                let exact = limiting_kernel_entry(psi, data.inner(i, k));
                let err = (mc.kernel.get(i, k) - exact).abs();
                entries += 1;
                if err > MC_SIGMAS * mc.std_err(i, k) && err > 1e-12 {
                    failures += 1;
                }
            }
        }
    }
    Ok((entries, failures))
}

struct ConvergenceTrial {
    errors: Vec<(f64, f64)>,
    mc: (usize, usize),
}

fn kernel_convergence(cfg: &ExperimentConfig) -> Vec<Record> {
    let d1s: Vec<usize> = cfg.widths.iter().map(|w| w[0]).collect();
    let mut rows = Vec::new();
    for (group, (d0, n)) in grid2(&cfg.d0, &cfg.n).into_iter().enumerate() {
        let seed = cell_seed(cfg.seed, cfg.kind, group);
        let (trials, failed) = run_trials(cfg.trials, seed, |s| {
            let data = sample_uniform_sphere(d0, n, s)?;
            let errors = d1s
                .iter()
                .map(|&d1| limit_errors(&data, d1, derive_seed(s, d1 as u64, 1)))
                .collect::<Result<Vec<_>>>()?;
            Ok(ConvergenceTrial { errors, mc: mc_check(&data, cfg.mc_samples, derive_seed(s, 0, 2))? })
        });
        let med = |j: usize, second: bool| median_of(trials.iter().map(|t| if second { t.errors[j].1 } else { t.errors[j].0 }));
        let xs: Vec<f64> = d1s.iter().map(|&d| (d as f64).ln()).collect();
        let slope = |second: bool| -> Option<f64> {
            let ys: Option<Vec<f64>> = (0..d1s.len()).map(|j| med(j, second).map(f64::ln)).collect();
            ols(&xs, &ys?).ok().map(|f| f.slope)
        };
        let (s1, s2) = (slope(false), slope(true));
        let mc_entries: usize = trials.iter().map(|t| t.mc.0).sum();
        let mc_failures: usize = trials.iter().map(|t| t.mc.1).sum();
        let slope_ok = |s: Option<f64>| s.is_some_and(|s| (s + 0.5).abs() <= CONVERGENCE_SLOPE_TOL);
        let pass = failed == 0
            && slope_ok(s1)
            && slope_ok(s2)
            && mc_entries > 0
            && (mc_failures as f64) <= MC_FAILURE_RATE * mc_entries as f64;
        for (j, &d1) in d1s.iter().enumerate() {
            rows.push(
                Record::new()
                    .with("cell", rows.len())
                    .with("cell_seed", seed)
                    .with("d0", d0)
                    .with("n", n)
                    .with("d1", d1)
                    .with("trials", cfg.trials)
                    .with("failed_trials", failed)
                    .with("k1_err_median", med(j, false))
                    .with("k2_err_median", med(j, true))
                    .with("k1_slope", s1)
                    .with("k2_slope", s2)
                    .with("mc_samples", cfg.mc_samples)
                    .with("mc_entries", mc_entries)
                    .with("mc_failures", mc_failures)
                    .with("pass", pass),
            );
        }
    }
    rows
}

// ---------------------------------------------------------------------------
// separation-scaling

/// Slope of `log δ′ ~ log n` predicted by the packing argument.
pub fn expected_separation_slope(d0: usize) -> f64 {
    -2.0 / (d0 as f64 - 1.0)
}

fn separation_scaling(cfg: &ExperimentConfig) -> Vec<Record> {
    let mut rows = Vec::new();
    for (di, &d0) in cfg.d0.iter().enumerate() {
        let cells: Vec<(usize, u64, f64, f64)> = cfg
            .n
            .iter()
            .enumerate()
            .map(|(ni, &n)| {
                let cell = di * cfg.n.len() + ni;
                let seed = cell_seed(cfg.seed, cfg.kind, cell);
                let (stats, _) = run_trials(cfg.trials, seed, |s| Ok(separation_stats(&sample_uniform_sphere(d0, n, s)?)));
                (n, seed, median(&stats.iter().map(|s| s.delta).collect::<Vec<_>>()), median(&stats.iter().map(|s| s.delta_prime).collect::<Vec<_>>()))
            })
            .collect();
        let xs: Vec<f64> = cells.iter().map(|c| (c.0 as f64).ln()).collect();
        let ys: Vec<f64> = cells.iter().map(|c| c.3.ln()).collect();
        let slope = ols(&xs, &ys).ok().map(|f| f.slope);
        let expected = expected_separation_slope(d0);
        let pass = slope.is_some_and(|s| (s - expected).abs() <= SEPARATION_SLOPE_REL_TOL * expected.abs());
        for (n, seed, delta_med, delta_prime_med) in cells {
            rows.push(
                Record::new()
                    .with("cell", rows.len())
                    .with("cell_seed", seed)
                    .with("d0", d0)
                    .with("n", n)
                    .with("trials", cfg.trials)
                    .with("delta_median", delta_med)
                    .with("delta_prime_median", delta_prime_med)
                    .with("slope", slope)
                    .with("expected_slope", expected)
                    .with("pass", pass),
            );
        }
    }
    rows
}

// ---------------------------------------------------------------------------
// funk-hecke-audit

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditCell {
    pub max_abs_err: f64,
    pub parity_exact: bool,
    /// Sup over the t grid of the Mercer deviation at each ladder rung.
    pub mercer_sup: [f64; MERCER_LADDER.len()],
}

impl AuditCell {
    pub fn mercer_monotone(&self) -> bool {
        self.mercer_sup.windows(2).all(|w| w[1] < w[0])
    }

    pub fn passes(&self) -> bool {
        self.max_abs_err <= AUDIT_TOLERANCE
            && self.parity_exact
            && self.mercer_monotone()
            && self.mercer_sup[MERCER_LADDER.len() - 1] <= MERCER_TOLERANCE
    }
}

/// The 19-point grid `t ∈ {−0.9, −0.8, …, 0.9}`.
pub fn mercer_grid() -> Vec<f64> {
    (0..19).map(|i| -0.9 + 0.1 * i as f64).collect()
}

pub fn audit_cell(d: usize, psi: Activation, r_max: usize) -> Result<AuditCell> {
    let mut max_abs_err = 0.0f64;
    let mut parity_exact = true;
    for r in 0..=r_max {
        let closed = funk_hecke_coeff(r, d, psi)?;
        let quad = funk_hecke_quadrature(r, d, psi, 1e-11)?;
        max_abs_err = max_abs_err.max((closed - quad).abs());
        let vanishes = match psi {
            Activation::ReluDerivative => r >= 2 && r % 2 == 0,
            Activation::ScaledRelu => r >= 3 && r % 2 == 1,
        };
        if vanishes && closed != 0.0 {
            parity_exact = false;
        }
    }
    let grid = mercer_grid();
    let mut mercer_sup = [0.0f64; MERCER_LADDER.len()];
    for (slot, &rr) in mercer_sup.iter_mut().zip(&MERCER_LADDER) {
        for &t in &grid {
            let dev = (mercer_series_entry(psi, d, t, rr)? - limiting_kernel_entry(psi, t)).abs();
            *slot = slot.max(dev);
        }
    }
    Ok(AuditCell { max_abs_err, parity_exact, mercer_sup })
}

fn funk_hecke_audit(cfg: &ExperimentConfig) -> Vec<Record> {
    let cells: Vec<(usize, Activation)> = grid2(&cfg.d0, &Activation::ALL);
    let results: Vec<Result<AuditCell>> = cells.par_iter().map(|&(d, psi)| audit_cell(d, psi, cfg.r_max)).collect();
    cells
        .iter()
        .zip(results)
        .enumerate()
        .map(|(cell, (&(d, psi), res))| {
            let ok = res.as_ref().ok();
            Record::new()
                .with("cell", cell)
                .with("d", d)
                .with("activation", psi.name())
                .with("r_max", cfg.r_max)
                .with("max_abs_err", ok.map(|a| a.max_abs_err))
                .with("parity_exact", ok.map(|a| a.parity_exact))
                .with("mercer_sup_r200", ok.map(|a| a.mercer_sup[MERCER_LADDER.len() - 1]))
                .with("mercer_monotone", ok.map(AuditCell::mercer_monotone))
                .with("pass", ok.is_some_and(AuditCell::passes))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// gram-guarantee

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GramTrial {
    pub delta: f64,
    pub case_id: u8,
    pub truncation: u64,
    /// `σ_min(D) / √(N/2)`.
    pub sv_ratio: f64,
    pub gershgorin_ok: bool,
    /// `max_{i≠k} |gram[i][k]| / addition_tail_bound(R, 1, d, δ_ik)`.
    pub offdiag_const: f64,
}

const MAX_RESAMPLES: u64 = 10_000;
const MAX_TRUNCATION: u64 = 1 << 20;

pub fn gram_trial(d0: usize, n: usize, target: Option<f64>, consts: &BoundConstants, seed: u64) -> Result<GramTrial> {
    let mut data = sample_uniform_sphere(d0, n, seed)?;
    let mut delta = separation_stats(&data).delta;
    if let Some(target) = target {
        let mut attempt = 0;
        while delta < target {
            attempt += 1;
            if attempt > MAX_RESAMPLES {
                return Err(HarnessError::Numerical(format!("no {target}-separated draw in {MAX_RESAMPLES} attempts")));
            }
            data = sample_uniform_sphere(d0, n, derive_seed(seed, attempt, 2))?;
            delta = separation_stats(&data).delta;
        }
        delta = target;
    }
    let plan = select_truncation(d0, delta, 1, consts.regime)?;
    if plan.truncation > MAX_TRUNCATION {
        return Err(HarnessError::Numerical(format!("truncation degree {} too large", plan.truncation)));
    }
    let hg = harmonic_gram(&data, plan.truncation as usize, 1)?;
    let need = (hg.harmonic_count as f64 / 2.0).sqrt();
    let lam = hg.gram.eigenvalues()[0];
    let gershgorin_ok = gershgorin_lower(&hg.gram) <= lam + 1e-9 * hg.harmonic_count as f64;
    let mut offdiag_const = 0.0f64;
    for i in 0..n {
        for k in 0..i {
            let t = data.inner(i, k).clamp(-1.0, 1.0);
            let pair_delta = (2.0 - 2.0 * t.abs()).max(0.0).sqrt();
            if pair_delta > 0.0 {
                let bound = addition_tail_bound(plan.truncation, 1, d0 as u64, pair_delta)?;
                offdiag_const = offdiag_const.max(hg.gram.get(i, k).abs() / bound);
            }
        }
    }
    Ok(GramTrial {
        delta,
        case_id: plan.case_id,
        truncation: plan.truncation,
        sv_ratio: harmonic_min_sv(&hg) / need,
        gershgorin_ok,
        offdiag_const,
    })
}

fn gram_guarantee(cfg: &ExperimentConfig) -> Vec<Record> {
    let targets: Vec<Option<f64>> = if cfg.delta.is_empty() { vec![None] } else { cfg.delta.iter().copied().map(Some).collect() };
    let mut rows = Vec::new();
    for (d0, n) in grid2(&cfg.d0, &cfg.n) {
        for &target in &targets {
            let cell = rows.len();
            let seed = cell_seed(cfg.seed, cfg.kind, cell);
            let (trials, failed) = run_trials(cfg.trials, seed, |s| gram_trial(d0, n, target, &cfg.constants, s));
            let some = !trials.is_empty();
            let sv_min = trials.iter().map(|t| t.sv_ratio).fold(f64::INFINITY, f64::min);
            let gersh = trials.iter().all(|t| t.gershgorin_ok);
            rows.push(
                Record::new()
                    .with("cell", cell)
                    .with("cell_seed", seed)
                    .with("d0", d0)
                    .with("n", n)
                    .with("delta_target", target)
                    .with("trials", cfg.trials)
                    .with("failed_trials", failed)
                    .with("case_id_max", trials.iter().map(|t| t.case_id as usize).max())
                    .with("truncation_max", trials.iter().map(|t| t.truncation).max())
                    .with("sv_ratio_min", some.then_some(sv_min))
                    .with("gershgorin_ok", gersh)
                    .with("offdiag_const", some.then(|| trials.iter().map(|t| t.offdiag_const).fold(0.0, f64::max)))
                    .with("pass", failed == 0 && some && gersh && sv_min >= 1.0),
            );
        }
    }
    rows
}
