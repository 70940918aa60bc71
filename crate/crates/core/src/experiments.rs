//! Reproducible experiment harness: synthetic data, gradient cross-checks,
//! discrete-vs-continuous gradient comparison under refinement, inversion
//! recovery runs, and the stability demonstration. Every run is a pure
//! function of (inputs, seed) and reports through `ExperimentReport`, which
//! serializes byte-identically for identical inputs.

use std::collections::BTreeMap;

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::adjoint::{residual, solve_adjoint_continuous, solve_adjoint_discrete};
use crate::error::{Error, Result};
use crate::forward::{solve_forward, trace_at_zero, InitialData, SchemeOptions};
use crate::gradient::{
    gradient_continuous, gradient_discrete, gradient_discrete_split, gradient_fd_oracle,
    GradientBoundary,
};
use crate::grid::{coeff_norm_l2, CoefficientVector, Grid, ObservedTrace};
use crate::objective::{log_decay_rate, run_inversion, DescentConfig, InversionState, StopReason};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentReport {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub metrics: BTreeMap<String, f64>,
    pub series: BTreeMap<String, Vec<f64>>,
    pub seed: u64,
}

impl ExperimentReport {
    pub fn new(name: &str, grid: Grid, seed: u64) -> Self {
        let mut params = BTreeMap::new();
        params.insert("L".into(), grid.length);
        params.insert("T".into(), grid.duration);
        params.insert("N".into(), grid.n as f64);
        params.insert("M".into(), grid.m as f64);
        params.insert("cfl_ratio".into(), grid.cfl_ratio);
        ExperimentReport {
            name: name.to_string(),
            params,
            metrics: BTreeMap::new(),
            series: BTreeMap::new(),
            seed,
        }
    }

    /// Reports must not carry NaN/inf; fail loudly at insertion time.
    pub fn put_metric(&mut self, key: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "metric {key} is not finite: {value}"
            )));
        }
        self.metrics.insert(key.to_string(), value);
        Ok(())
    }
}

fn stop_reason_code(r: Option<StopReason>) -> f64 {
    match r {
        Some(StopReason::MaxIter) => 0.0,
        Some(StopReason::JTolerance) => 1.0,
        Some(StopReason::GradTolerance) => 2.0,
        Some(StopReason::LineSearchFailure) => 3.0,
        None => -1.0,
    }
}

/// Coefficient carried to the doubled grid: old nodes copied, new midpoints
/// linearly interpolated.
pub fn refine_linear_2x(v: &CoefficientVector) -> Result<CoefficientVector> {
    let fine = v.grid.refined(2)?;
    let mut out = Array1::zeros(fine.nodes());
    for i in 0..=v.grid.n {
        out[2 * i] = v.values[i];
    }
    for i in 0..v.grid.n {
        out[2 * i + 1] = 0.5 * (v.values[i] + v.values[i + 1]);
    }
    CoefficientVector::new(fine, out)
}

/// Where the synthetic trace is computed before sampling onto the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SynthesisMode {
    /// Solve on the inversion grid itself.
    #[default]
    SameGrid,
    /// Solve on a 2x refined grid and keep every second time sample, so the
    /// data does not inherit the inversion grid's discretization error.
    Refined2x,
}

/// Boundary data for a known coefficient, optionally noisy. Noise is
/// additive Gaussian with standard deviation noise_level * max |trace|,
/// drawn from a counter-based generator seeded by `seed`; noise_level = 0
/// touches no randomness at all.
pub fn synthesize_data(
    grid: Grid,
    q_true: &CoefficientVector,
    noise_level: f64,
    seed: u64,
    mode: SynthesisMode,
    opts: SchemeOptions,
) -> Result<ObservedTrace> {
    if noise_level < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "noise level must be nonnegative, got {noise_level}"
        )));
    }
    let mut values = match mode {
        SynthesisMode::SameGrid => {
            let y = solve_forward(grid, q_true, &InitialData::CoefficientAsInitial, opts)?;
            y.left_trace()
        }
        SynthesisMode::Refined2x => {
            let q_fine = refine_linear_2x(q_true)?;
            let y = solve_forward(
                q_fine.grid,
                &q_fine,
                &InitialData::CoefficientAsInitial,
                opts,
            )?;
            let fine_trace = y.left_trace();
            Array1::from_iter((0..=grid.m).map(|j| fine_trace[2 * j]))
        }
    };
    if noise_level > 0.0 {
        let amp = noise_level
            * values
                .iter()
                .fold(0.0f64, |a, v| a.max(v.abs()));
        if amp > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dist = Normal::new(0.0, amp).expect("amplitude is finite and positive");
            for v in values.iter_mut() {
                *v += dist.sample(&mut rng);
            }
        }
    }
    ObservedTrace::new(grid, values)
}

/// Adjoint-vs-central-difference agreement across a sweep of FD steps.
pub fn gradcheck_report(
    grid: Grid,
    p: &CoefficientVector,
    f: &ObservedTrace,
    eps_list: &[f64],
    opts: SchemeOptions,
) -> Result<ExperimentReport> {
    if eps_list.is_empty() {
        return Err(Error::InvalidConfig("need at least one fd step".into()));
    }
    let y = solve_forward(grid, p, &InitialData::CoefficientAsInitial, opts)?;
    let r = residual(&trace_at_zero(&y), f)?;
    let phi = solve_adjoint_discrete(grid, p, &r, opts)?;
    let adj = gradient_discrete(&y, &phi, opts, GradientBoundary::HalfCellExact)?;

    let mut eps_sorted: Vec<f64> = eps_list.to_vec();
    eps_sorted.sort_by(|a, b| b.partial_cmp(a).expect("fd steps are comparable"));
    let mut errs = Vec::with_capacity(eps_sorted.len());
    for &eps in &eps_sorted {
        let fd = gradient_fd_oracle(grid, p, f, eps, opts)?;
        let scale = fd.values.iter().fold(0.0f64, |a, v| a.max(v.abs())) + 1e-30;
        let err = adj
            .values
            .iter()
            .zip(fd.values.iter())
            .fold(0.0f64, |a, (u, v)| a.max((u - v).abs()))
            / scale;
        errs.push(err);
    }

    let mut report = ExperimentReport::new("gradcheck", grid, 0);
    report.put_metric("max_rel_err_best", errs.iter().cloned().fold(f64::INFINITY, f64::min))?;
    report.put_metric("max_rel_err_at_largest_eps", errs[0])?;
    if eps_sorted.len() >= 2 && errs[0] > 0.0 && errs[1] > 0.0 {
        // Step-size order from the two largest steps, where truncation
        // (not cancellation) dominates.
        let order = (errs[0] / errs[1]).ln() / (eps_sorted[0] / eps_sorted[1]).ln();
        report.put_metric("eps_order", order)?;
    }
    report.series.insert("eps".into(), eps_sorted);
    report.series.insert("max_rel_err".into(), errs);
    Ok(report)
}

/// Discrete vs continuous gradient across grid doublings at a fixed
/// (interpolated) evaluation point. Also tracks the size of the discrete
/// formula's initial-layer term, the piece with no counterpart in the plain
/// time-integral formula.
pub fn gradient_comparison_study(
    base_grid: Grid,
    refinements: usize,
    p: &CoefficientVector,
    q_true: &CoefficientVector,
    opts: SchemeOptions,
) -> Result<ExperimentReport> {
    let mut p_l = p.clone();
    let mut q_l = q_true.clone();
    let mut discrepancies = Vec::new();
    let mut init_norms = Vec::new();
    let mut n_values = Vec::new();

    for level in 0..=refinements {
        if level > 0 {
            p_l = refine_linear_2x(&p_l)?;
            q_l = refine_linear_2x(&q_l)?;
        }
        let g = p_l.grid;
        let f = synthesize_data(g, &q_l, 0.0, 0, SynthesisMode::SameGrid, opts)?;
        let y = solve_forward(g, &p_l, &InitialData::CoefficientAsInitial, opts)?;
        let r = residual(&trace_at_zero(&y), &f)?;
        let phi = solve_adjoint_discrete(g, &p_l, &r, opts)?;
        let psi = solve_adjoint_continuous(g, &p_l, &r)?;
        let gd = gradient_discrete(&y, &phi, opts, GradientBoundary::HalfCellExact)?;
        let gc = gradient_continuous(&y, &psi, GradientBoundary::HalfCellExact)?;
        let (_, init_part) = gradient_discrete_split(&y, &phi, opts)?;

        let denom = gd.norm_l2();
        let diff = &gd.values - &gc.values;
        let disc = if denom > 0.0 {
            coeff_norm_l2(&g, diff.view()) / denom
        } else {
            0.0
        };
        discrepancies.push(disc);
        init_norms.push(init_part.norm_l2());
        n_values.push(g.n as f64);
    }

    // Least-squares slope of -log2(discrepancy) against the level index.
    let mut order = f64::NAN;
    let logs: Vec<f64> = discrepancies
        .iter()
        .filter(|v| **v > 0.0)
        .map(|v| -v.log2())
        .collect();
    if logs.len() == discrepancies.len() && logs.len() >= 2 {
        let n = logs.len() as f64;
        let mean_x = (logs.len() - 1) as f64 / 2.0;
        let mean_y = logs.iter().sum::<f64>() / n;
        let mut num = 0.0;
        let mut den = 0.0;
        for (k, y) in logs.iter().enumerate() {
            num += (k as f64 - mean_x) * (y - mean_y);
            den += (k as f64 - mean_x) * (k as f64 - mean_x);
        }
        order = num / den;
    }

    let mut report = ExperimentReport::new("gradient_comparison", base_grid, 0);
    report.put_metric(
        "final_discrepancy",
        *discrepancies.last().expect("at least one level"),
    )?;
    report.put_metric("initial_term_norm_coarse", init_norms[0])?;
    if order.is_finite() {
        report.put_metric("fitted_order", order)?;
    }
    report
        .series
        .insert("rel_discrepancy".into(), discrepancies);
    report.series.insert("initial_term_norm".into(), init_norms);
    report.series.insert("n_values".into(), n_values);
    Ok(report)
}

/// Package a finished inversion as a report. When the generating coefficient
/// is known, adds the recovery-error metric and the target series.
pub fn inversion_report(
    name: &str,
    grid: Grid,
    seed: u64,
    state: InversionState,
    q_true: Option<&CoefficientVector>,
) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new(name, grid, seed);
    let j0 = state.j_history[0];
    let jf = state.current_j();
    report.put_metric("j_initial", j0)?;
    report.put_metric("j_final", jf)?;
    report.put_metric("j_ratio", if j0 > 0.0 { jf / j0 } else { 0.0 })?;
    if let Some(q) = q_true {
        let diff = &state.iterate.values - &q.values;
        let qn = q.norm_l2();
        report.put_metric(
            "rel_l2_error",
            if qn > 0.0 {
                coeff_norm_l2(&grid, diff.view()) / qn
            } else {
                coeff_norm_l2(&grid, diff.view())
            },
        )?;
    }
    report.put_metric("iterations", state.n as f64)?;
    report.put_metric("stop_reason_code", stop_reason_code(state.stop_reason))?;
    if let Some(rate) = log_decay_rate(&state.j_history, 50) {
        report.put_metric("log_decay_rate_tail", rate)?;
    }
    report.series.insert("j_history".into(), state.j_history);
    report
        .series
        .insert("alpha_history".into(), state.alpha_history);
    report
        .series
        .insert("grad_norm_history".into(), state.grad_norm_history);
    report
        .series
        .insert("p_final".into(), state.iterate.values.to_vec());
    if let Some(q) = q_true {
        report.series.insert("q_true".into(), q.values.to_vec());
    }
    Ok(report)
}

/// Full inversion run against synthetic data from a known coefficient.
pub fn recovery_study(
    grid: Grid,
    q_true: &CoefficientVector,
    p0: CoefficientVector,
    noise_level: f64,
    seed: u64,
    mode: SynthesisMode,
    cfg: &DescentConfig,
) -> Result<ExperimentReport> {
    let f = synthesize_data(grid, q_true, noise_level, seed, mode, cfg.scheme)?;
    let state = run_inversion(grid, p0, &f, cfg)?;
    let mut report = inversion_report("recovery", grid, seed, state, Some(q_true))?;
    report.params.insert("noise_level".into(), noise_level);
    Ok(report)
}

/// Bounded march just under the stability bound, blow-up just over it.
/// Runs a fixed Gaussian pulse with zero potential on both grids; the
/// unstable grid must carry `allow_unstable`.
pub fn stability_study(grid_stable: Grid, grid_unstable: Grid) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("stability", grid_stable, 0);
    report
        .params
        .insert("stable_cfl_ratio".into(), grid_stable.cfl_ratio);
    report
        .params
        .insert("unstable_cfl_ratio".into(), grid_unstable.cfl_ratio);
    report
        .params
        .insert("unstable_M".into(), grid_unstable.m as f64);

    let run = |g: Grid| -> Result<f64> {
        let p = CoefficientVector::zeros(g);
        let pulse = fixtures::gaussian(g, 0.5, 50.0);
        let y = solve_forward(
            g,
            &p,
            &InitialData::Explicit(pulse.values),
            SchemeOptions::default(),
        )?;
        let peak = y.data.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let init = y.layer(0).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Ok(peak / init)
    };

    report.put_metric("stable_growth_factor", run(grid_stable)?)?;
    match run(grid_unstable) {
        Ok(growth) => {
            report.put_metric("unstable_blew_up", 0.0)?;
            report.put_metric("unstable_growth_factor", growth)?;
        }
        Err(Error::NonFiniteBlowup { i, j }) => {
            report.put_metric("unstable_blew_up", 1.0)?;
            report.put_metric("unstable_blowup_layer", j as f64)?;
            report.put_metric("unstable_blowup_node", i as f64)?;
        }
        Err(other) => return Err(other),
    }
    Ok(report)
}

/// Shared test fixtures; also used by the command-line presets.
pub mod fixtures {
    use super::*;

    /// L = 1, T = 2 (one full traverse and return), N = 50, M = 200.
    pub fn canonical_grid() -> Grid {
        Grid::new(1.0, 2.0, 50, 200).expect("canonical grid parameters are valid")
    }

    /// Gaussian bump exp(-sharp (x - center)^2) sampled on the grid.
    pub fn gaussian(grid: Grid, center: f64, sharp: f64) -> CoefficientVector {
        CoefficientVector::from_fn(grid, |x| (-sharp * (x - center) * (x - center)).exp())
    }

    /// The reconstruction target used across the recovery experiments.
    pub fn canonical_q_true(grid: Grid) -> CoefficientVector {
        gaussian(grid, 0.4, 50.0)
    }

    /// Smooth random coefficient: a low-order cosine series with decaying
    /// seeded Gaussian weights, rescaled to the requested sup norm.
    pub fn random_bandlimited(
        grid: Grid,
        k_max: usize,
        amplitude: f64,
        seed: u64,
    ) -> CoefficientVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let weights: Vec<f64> = (0..=k_max)
            .map(|k| normal.sample(&mut rng) / (1.0 + (k * k) as f64))
            .collect();
        let l = grid.length;
        let mut v = CoefficientVector::from_fn(grid, |x| {
            weights
                .iter()
                .enumerate()
                .map(|(k, w)| w * (k as f64 * std::f64::consts::PI * x / l).cos())
                .sum()
        });
        let peak = v.values.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if peak > 0.0 {
            v.values *= amplitude / peak;
        }
        v
    }
}
