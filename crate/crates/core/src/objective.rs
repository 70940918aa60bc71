//! Misfit evaluation and descent loops.
//!
//! The misfit is J(p) = tau * sum_{j=1}^{M} (y_0^j - f_j)^2 with y the
//! forward solution for p (layer 0 is excluded: it is data, not prediction).
//! Descent moves along the exact discrete gradient; the line searches differ
//! only in how the step length is picked. Accepted steps never increase J
//! except under the fixed-step iteration, which records increases honestly.

use crate::adjoint::{residual, solve_adjoint_discrete};
use crate::error::{Error, Result};
use crate::forward::{solve_forward, trace_at_zero, InitialData, SchemeOptions};
use crate::gradient::{gradient_discrete, GradientBoundary};
use crate::grid::{coeff_norm_l2, CoefficientVector, Grid, ObservedTrace, Residual};

/// tau-weighted sum of squared residuals over layers 1..=M.
pub fn misfit_of_residual(r: &Residual) -> f64 {
    let s: f64 = r.values.iter().skip(1).map(|v| v * v).sum();
    r.grid.tau * s
}

pub fn objective(
    grid: Grid,
    p: &CoefficientVector,
    f: &ObservedTrace,
    opts: SchemeOptions,
) -> Result<f64> {
    let y = solve_forward(grid, p, &InitialData::CoefficientAsInitial, opts)?;
    let r = residual(&trace_at_zero(&y), f)?;
    Ok(misfit_of_residual(&r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LineSearch {
    #[default]
    Backtracking,
    GoldenSection,
    QuadraticFit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIter,
    JTolerance,
    GradTolerance,
    LineSearchFailure,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, w: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StopReason::MaxIter => "max_iter",
            StopReason::JTolerance => "j_tolerance",
            StopReason::GradTolerance => "grad_tolerance",
            StopReason::LineSearchFailure => "line_search_failure",
        };
        w.write_str(s)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DescentConfig {
    pub max_iter: usize,
    /// Absolute stop threshold on J; `None` means 1e-12 * J(p0).
    pub j_tol: Option<f64>,
    pub grad_tol: f64,
    pub line_search: LineSearch,
    pub alpha_init: f64,
    pub armijo_c: f64,
    pub shrink: f64,
    /// Fixed step for `landweber_run` only.
    pub landweber_alpha: f64,
    pub gradient_boundary: GradientBoundary,
    pub scheme: SchemeOptions,
}

impl Default for DescentConfig {
    fn default() -> Self {
        DescentConfig {
            max_iter: 500,
            j_tol: None,
            grad_tol: 1e-8,
            line_search: LineSearch::Backtracking,
            alpha_init: 1.0,
            armijo_c: 1e-4,
            shrink: 0.5,
            landweber_alpha: 0.1,
            gradient_boundary: GradientBoundary::default(),
            scheme: SchemeOptions::default(),
        }
    }
}

impl DescentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_init > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha_init must be positive, got {}",
                self.alpha_init
            )));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "shrink must lie in (0, 1), got {}",
                self.shrink
            )));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "armijo_c must lie in (0, 1), got {}",
                self.armijo_c
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct InversionState {
    pub iterate: CoefficientVector,
    pub n: usize,
    pub j_history: Vec<f64>,
    pub alpha_history: Vec<f64>,
    pub grad_norm_history: Vec<f64>,
    pub stop_reason: Option<StopReason>,
}

impl InversionState {
    /// Fresh state at iterate p0 with J(p0) evaluated.
    pub fn start(
        grid: Grid,
        p0: CoefficientVector,
        f: &ObservedTrace,
        cfg: &DescentConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let j0 = objective(grid, &p0, f, cfg.scheme)?;
        Ok(InversionState {
            iterate: p0,
            n: 0,
            j_history: vec![j0],
            alpha_history: Vec::new(),
            grad_norm_history: Vec::new(),
            stop_reason: None,
        })
    }

    pub fn current_j(&self) -> f64 {
        *self.j_history.last().expect("history is never empty")
    }
}

/// Bounded max shrinks for the backtracking loop; 60 halvings take the step
/// below 1e-18 * alpha_init, past any useful scale.
const MAX_SHRINKS: usize = 60;

fn backtrack<F: FnMut(f64) -> Result<f64>>(
    mut eval: F,
    j0: f64,
    slope_sq: f64,
    cfg: &DescentConfig,
) -> Result<Option<(f64, f64)>> {
    let mut alpha = cfg.alpha_init;
    for _ in 0..=MAX_SHRINKS {
        let j = eval(alpha)?;
        if j <= j0 - cfg.armijo_c * alpha * slope_sq {
            return Ok(Some((alpha, j)));
        }
        alpha *= cfg.shrink;
    }
    Ok(None)
}

/// Golden-section minimization on [lo, hi] to |interval| <= tol.
/// Returns the midpoint of the final bracket and its value.
fn golden_minimize<F: FnMut(f64) -> Result<f64>>(
    mut eval: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut a = hi - INV_PHI * (hi - lo);
    let mut b = lo + INV_PHI * (hi - lo);
    let mut fa = eval(a)?;
    let mut fb = eval(b)?;
    while hi - lo > tol {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - INV_PHI * (hi - lo);
            fa = eval(a)?;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + INV_PHI * (hi - lo);
            fb = eval(b)?;
        }
    }
    let mid = 0.5 * (lo + hi);
    let fm = eval(mid)?;
    Ok((mid, fm))
}

fn golden_search<F: FnMut(f64) -> Result<f64>>(
    mut eval: F,
    j0: f64,
    cfg: &DescentConfig,
) -> Result<Option<(f64, f64)>> {
    // Expand the bracket while the misfit keeps dropping at its right end.
    let mut hi = cfg.alpha_init;
    let mut j_hi = eval(hi)?;
    let mut expansions = 0;
    while j_hi < j0 && expansions < 40 {
        let next = 2.0 * hi;
        let j_next = eval(next)?;
        if j_next >= j_hi {
            break;
        }
        hi = next;
        j_hi = j_next;
        expansions += 1;
    }
    let (alpha, j) = golden_minimize(&mut eval, 0.0, hi, 1e-4 * hi)?;
    if j < j0 && alpha > 0.0 {
        Ok(Some((alpha, j)))
    } else if j_hi < j0 {
        Ok(Some((hi, j_hi)))
    } else {
        // No decrease anywhere on the bracket; fall back to backtracking so
        // a too-large alpha_init does not strand the iteration.
        backtrack(eval, j0, 0.0, cfg)
    }
}

fn quadratic_fit_search<F: FnMut(f64) -> Result<f64>>(
    mut eval: F,
    j0: f64,
    slope_sq: f64,
    cfg: &DescentConfig,
) -> Result<Option<(f64, f64)>> {
    let a0 = cfg.alpha_init;
    let j_a0 = eval(a0)?;
    // Parabola through (0, j0) with slope -slope_sq and through (a0, j_a0).
    let curve = (j_a0 - j0 + slope_sq * a0) / (a0 * a0);
    let mut best = (a0, j_a0);
    if curve > 0.0 {
        let alpha = (0.5 * slope_sq / curve).clamp(0.1 * a0, 10.0 * a0);
        let j = eval(alpha)?;
        if j < best.1 {
            best = (alpha, j);
        }
    }
    if best.1 < j0 {
        return Ok(Some(best));
    }
    backtrack(eval, j0, slope_sq, cfg)
}

/// One descent step: gradient, line search, update, history bookkeeping.
/// On GradTolerance or LineSearchFailure the iterate is left unchanged and
/// only `stop_reason` is set.
pub fn descent_step(
    mut state: InversionState,
    f: &ObservedTrace,
    cfg: &DescentConfig,
) -> Result<InversionState> {
    cfg.validate()?;
    let grid = state.iterate.grid;
    let y = solve_forward(
        grid,
        &state.iterate,
        &InitialData::CoefficientAsInitial,
        cfg.scheme,
    )?;
    let r = residual(&trace_at_zero(&y), f)?;
    let j0 = misfit_of_residual(&r);
    let phi = solve_adjoint_discrete(grid, &state.iterate, &r, cfg.scheme)?;
    let grad = gradient_discrete(&y, &phi, cfg.scheme, cfg.gradient_boundary)?;
    let gnorm = coeff_norm_l2(&grid, grad.values.view());
    if gnorm <= cfg.grad_tol {
        state.stop_reason = Some(StopReason::GradTolerance);
        return Ok(state);
    }

    // Slope of alpha -> J(p - alpha G) at 0 is -h * sum G_i^2 = -gnorm^2.
    let slope_sq = gnorm * gnorm;
    let p = state.iterate.values.clone();
    let mut eval = |alpha: f64| -> Result<f64> {
        let trial = CoefficientVector {
            grid,
            values: &p - &(alpha * &grad.values),
        };
        objective(grid, &trial, f, cfg.scheme)
    };
    let accepted = match cfg.line_search {
        LineSearch::Backtracking => backtrack(&mut eval, j0, slope_sq, cfg)?,
        LineSearch::GoldenSection => golden_search(&mut eval, j0, cfg)?,
        LineSearch::QuadraticFit => quadratic_fit_search(&mut eval, j0, slope_sq, cfg)?,
    };
    match accepted {
        Some((alpha, j_new)) => {
            state.iterate.values = &p - &(alpha * &grad.values);
            state.n += 1;
            state.j_history.push(j_new);
            state.alpha_history.push(alpha);
            state.grad_norm_history.push(gnorm);
            Ok(state)
        }
        None => {
            state.stop_reason = Some(StopReason::LineSearchFailure);
            Ok(state)
        }
    }
}

/// Descent until a stop criterion fires; returns the full trajectory.
pub fn run_inversion(
    grid: Grid,
    p0: CoefficientVector,
    f: &ObservedTrace,
    cfg: &DescentConfig,
) -> Result<InversionState> {
    let mut state = InversionState::start(grid, p0, f, cfg)?;
    let j_tol = cfg.j_tol.unwrap_or(1e-12 * state.current_j());
    loop {
        if state.current_j() <= j_tol {
            state.stop_reason = Some(StopReason::JTolerance);
            return Ok(state);
        }
        if state.n >= cfg.max_iter {
            state.stop_reason = Some(StopReason::MaxIter);
            return Ok(state);
        }
        state = descent_step(state, f, cfg)?;
        if state.stop_reason.is_some() {
            return Ok(state);
        }
    }
}

/// Fixed-step iteration p <- p - alpha * grad J(p). No line search: J may
/// rise and the history records it. Stops on the same J / gradient / count
/// criteria as the descent loop.
pub fn landweber_run(
    grid: Grid,
    p0: CoefficientVector,
    f: &ObservedTrace,
    cfg: &DescentConfig,
) -> Result<InversionState> {
    if cfg.landweber_alpha < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "landweber_alpha must be nonnegative, got {}",
            cfg.landweber_alpha
        )));
    }
    let mut state = InversionState::start(grid, p0, f, cfg)?;
    let j_tol = cfg.j_tol.unwrap_or(1e-12 * state.current_j());
    loop {
        if state.current_j() <= j_tol {
            state.stop_reason = Some(StopReason::JTolerance);
            return Ok(state);
        }
        if state.n >= cfg.max_iter {
            state.stop_reason = Some(StopReason::MaxIter);
            return Ok(state);
        }
        let y = solve_forward(
            grid,
            &state.iterate,
            &InitialData::CoefficientAsInitial,
            cfg.scheme,
        )?;
        let r = residual(&trace_at_zero(&y), f)?;
        let phi = solve_adjoint_discrete(grid, &state.iterate, &r, cfg.scheme)?;
        let grad = gradient_discrete(&y, &phi, cfg.scheme, cfg.gradient_boundary)?;
        let gnorm = coeff_norm_l2(&grid, grad.values.view());
        if gnorm <= cfg.grad_tol {
            state.stop_reason = Some(StopReason::GradTolerance);
            return Ok(state);
        }
        state.iterate.values =
            &state.iterate.values - &(cfg.landweber_alpha * &grad.values);
        let j_new = objective(grid, &state.iterate, f, cfg.scheme)?;
        state.n += 1;
        state.j_history.push(j_new);
        state.alpha_history.push(cfg.landweber_alpha);
        state.grad_norm_history.push(gnorm);
    }
}

/// Least-squares slope of log J over the last `window` accepted iterations;
/// a crude convergence-rate diagnostic for reports.
pub fn log_decay_rate(j_history: &[f64], window: usize) -> Option<f64> {
    let tail: Vec<f64> = j_history
        .iter()
        .rev()
        .take(window)
        .rev()
        .filter(|v| **v > 0.0)
        .map(|v| v.ln())
        .collect();
    if tail.len() < 2 {
        return None;
    }
    let n = tail.len() as f64;
    let mean_x = (tail.len() - 1) as f64 / 2.0;
    let mean_y = tail.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, y) in tail.iter().enumerate() {
        let dx = k as f64 - mean_x;
        num += dx * (y - mean_y);
        den += dx * dx;
    }
    Some(num / den)
}
