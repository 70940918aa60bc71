//! Three independent routes to the derivative of the misfit with respect to
//! the potential, pairwise reconcilable:
//!
//! * `gradient_discrete` - assembled from the forward field and the exact
//!   transpose adjoint; equals the true derivative of the discrete misfit to
//!   roundoff. The duality identity tau * sum_j 2 r_j dy_0^j = h * <dp, G>
//!   with dy from `solve_perturbation` is the certificate.
//! * `gradient_continuous` - quadrature of the continuous gradient formula
//!   integral(psi u dt) + psi_t(x, 0) using the optimize-then-discretize
//!   adjoint; agrees with the discrete route only in the grid limit.
//! * `gradient_fd_oracle` - central differences of the misfit itself; slow,
//!   assumption-free ground truth.
//!
//! All three return node values of the h-weighted derivative: the misfit
//! change for a perturbation dp is h * sum_i dp_i G_i. Node 0 controls only
//! half a grid cell, hence the half weight there; node N is pinned by the
//! Dirichlet end and its component is identically zero.

use ndarray::Array1;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::{FirstLayer, SchemeOptions, SchemeVariant};
use crate::grid::{CoefficientVector, Field, Grid, ObservedTrace, Residual};
use crate::objective::objective;

/// What to report for the half-cell component G_0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientBoundary {
    /// The exact value: half the bracket, because node 0 owns half a cell.
    #[default]
    HalfCellExact,
    /// Copy G_1 into G_0 (legacy full-cell convention).
    ReplicateFirstInterior,
    /// Zero G_0, freezing the boundary value during descent.
    ZeroBoundary,
}

fn check_same_shape(a: &Field, b: &Field) -> Result<Grid> {
    if a.data.dim() != b.data.dim() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "fields have shapes {:?} and {:?}",
                a.data.dim(),
                b.data.dim()
            ),
        });
    }
    Ok(a.grid)
}

fn apply_boundary(g: &mut Array1<f64>, boundary: GradientBoundary) {
    match boundary {
        GradientBoundary::HalfCellExact => {}
        GradientBoundary::ReplicateFirstInterior => g[0] = g[1],
        GradientBoundary::ZeroBoundary => g[0] = 0.0,
    }
}

/// Correlation and initial-layer parts of the discrete gradient, half-cell
/// weighted, before any boundary override. Their sum is the exact derivative;
/// the initial-layer part (the term with no continuous counterpart in the
/// time-integral alone) is reported separately by the comparison study.
pub fn gradient_discrete_split(
    y: &Field,
    phi: &Field,
    opts: SchemeOptions,
) -> Result<(CoefficientVector, CoefficientVector)> {
    let grid = check_same_shape(y, phi)?;
    let n = grid.n;
    let m = grid.m;
    let tau = grid.tau;

    let mut corr = Array1::<f64>::zeros(n + 1);
    {
        let acc = corr.as_slice_mut().unwrap();
        for j in 1..m {
            let yr = match opts.variant {
                // The hat scheme applies the potential to the produced layer,
                // so its transpose pairs the adjoint with that same layer.
                SchemeVariant::Plain => y.layer(j),
                SchemeVariant::HatPotential => y.layer(j + 1),
            };
            let pr = phi.layer(j + 1);
            let yr = yr.as_slice().unwrap();
            let pr = pr.as_slice().unwrap();
            for i in 0..n {
                acc[i] += yr[i] * pr[i];
            }
        }
        for v in acc[..n].iter_mut() {
            *v *= tau;
        }
        acc[0] *= 0.5;
        acc[n] = 0.0;
    }

    let mut init = Array1::<f64>::zeros(n + 1);
    {
        let acc = init.as_slice_mut().unwrap();
        for i in 0..n {
            let mut v = -phi.at(i, 0) / tau;
            if opts.first_layer == FirstLayer::TaylorSecondOrder {
                v += 0.5 * tau * y.at(i, 0) * phi.at(i, 1);
            }
            acc[i] = v;
        }
        acc[0] *= 0.5;
        acc[n] = 0.0;
    }

    Ok((
        CoefficientVector { grid, values: corr },
        CoefficientVector { grid, values: init },
    ))
}

/// Exact derivative of the discrete misfit, from one forward and one adjoint
/// solve. `phi` must come from `solve_adjoint_discrete` with the same `opts`.
pub fn gradient_discrete(
    y: &Field,
    phi: &Field,
    opts: SchemeOptions,
    boundary: GradientBoundary,
) -> Result<CoefficientVector> {
    let (corr, init) = gradient_discrete_split(y, phi, opts)?;
    let mut g = corr.values + &init.values;
    apply_boundary(&mut g, boundary);
    Ok(CoefficientVector {
        grid: corr.grid,
        values: g,
    })
}

/// Quadrature of integral(psi u dt) + psi_t(x, 0) with `psi` from
/// `solve_adjoint_continuous`: trapezoid in time plus a one-sided
/// second-order time derivative at t = 0. Same half-cell weighting as the
/// discrete route so the two are comparable node by node.
pub fn gradient_continuous(
    y: &Field,
    psi: &Field,
    boundary: GradientBoundary,
) -> Result<CoefficientVector> {
    let grid = check_same_shape(y, psi)?;
    let n = grid.n;
    let m = grid.m;
    let tau = grid.tau;
    let mut g = Array1::<f64>::zeros(n + 1);
    for i in 0..n {
        let mut s = 0.5 * (y.at(i, 0) * psi.at(i, 0) + y.at(i, m) * psi.at(i, m));
        for j in 1..m {
            s += y.at(i, j) * psi.at(i, j);
        }
        let psi_t0 = (-3.0 * psi.at(i, 0) + 4.0 * psi.at(i, 1) - psi.at(i, 2)) / (2.0 * tau);
        let w = if i == 0 { 0.5 } else { 1.0 };
        g[i] = w * (tau * s + psi_t0);
    }
    apply_boundary(&mut g, boundary);
    Ok(CoefficientVector { grid, values: g })
}

/// Central-difference derivative of the misfit, h-normalized to match the
/// adjoint routes: G_i = [J(p + eps e_i) - J(p - eps e_i)] / (2 eps h).
/// Runs 2(N+1) forward solves, parallelized across components.
pub fn gradient_fd_oracle(
    grid: Grid,
    p: &CoefficientVector,
    f: &ObservedTrace,
    eps: f64,
    opts: SchemeOptions,
) -> Result<CoefficientVector> {
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "fd step must be positive, got {eps}"
        )));
    }
    let values = (0..=grid.n)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut plus = p.values.clone();
            plus[i] += eps;
            let mut minus = p.values.clone();
            minus[i] -= eps;
            let jp = objective(grid, &CoefficientVector { grid, values: plus }, f, opts)?;
            let jm = objective(
                grid,
                &CoefficientVector {
                    grid,
                    values: minus,
                },
                f,
                opts,
            )?;
            Ok((jp - jm) / (2.0 * eps * grid.h))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(CoefficientVector {
        grid,
        values: Array1::from_vec(values),
    })
}

/// Left side of the duality identity: tau * sum_{j>=1} 2 r_j dy_0^j, the
/// first variation of the misfit through the perturbation field. The right
/// side is inner_h(grid, dp, G); the two agreeing to roundoff is what makes
/// the discrete adjoint "exact".
pub fn duality_lhs(r: &Residual, dy: &Field) -> f64 {
    let m = dy.grid.m;
    let mut s = 0.0;
    for j in 1..=m {
        s += 2.0 * r.values[j] * dy.at(0, j);
    }
    dy.grid.tau * s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjoint::{residual, solve_adjoint_discrete};
    use crate::forward::{solve_forward, solve_perturbation, trace_at_zero, InitialData};
    use crate::grid::inner_h;

    fn misfit_fixture(
        g: Grid,
        opts: SchemeOptions,
    ) -> (CoefficientVector, ObservedTrace, Field, Residual) {
        // Data from a shifted coefficient so the residual is smooth, O(1),
        // and not an exact minimum.
        let q = CoefficientVector::from_fn(g, |x| (-50.0 * (x - 0.4) * (x - 0.4)).exp());
        let f = trace_at_zero(
            &solve_forward(g, &q, &InitialData::CoefficientAsInitial, opts).unwrap(),
        );
        let p = CoefficientVector::from_fn(g, |x| 0.3 * (3.0 * x).cos());
        let y = solve_forward(g, &p, &InitialData::CoefficientAsInitial, opts).unwrap();
        let r = residual(&trace_at_zero(&y), &f).unwrap();
        (p, f, y, r)
    }

    #[test]
    fn zero_adjoint_gives_zero_gradient() {
        let g = Grid::new(1.0, 1.0, 10, 20).unwrap();
        let y = Field::zeros(g);
        let phi = Field::zeros(g);
        let grad =
            gradient_discrete(&y, &phi, SchemeOptions::default(), GradientBoundary::default())
                .unwrap();
        assert!(grad.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duality_identity_holds_to_roundoff() {
        let g = Grid::new(1.0, 1.0, 24, 48).unwrap();
        let opts = SchemeOptions::default();
        let (p, _f, y, r) = misfit_fixture(g, opts);
        let phi = solve_adjoint_discrete(g, &p, &r, opts).unwrap();
        let grad = gradient_discrete(&y, &phi, opts, GradientBoundary::HalfCellExact).unwrap();

        let dp = CoefficientVector::from_fn(g, |x| (5.0 * x).sin() + 0.2);
        let dy = solve_perturbation(g, &p, &y, &dp, opts).unwrap();
        let lhs = duality_lhs(&r, &dy);
        let rhs = inner_h(&g, dp.values.view(), grad.values.view());
        assert!(
            (lhs - rhs).abs() <= 1e-11 * lhs.abs().max(rhs.abs()).max(1e-300),
            "duality gap: lhs {lhs}, rhs {rhs}"
        );
    }

    #[test]
    fn split_parts_sum_to_the_gradient() {
        let g = Grid::new(1.0, 1.0, 16, 32).unwrap();
        let opts = SchemeOptions::default();
        let (p, _f, y, r) = misfit_fixture(g, opts);
        let phi = solve_adjoint_discrete(g, &p, &r, opts).unwrap();
        let (corr, init) = gradient_discrete_split(&y, &phi, opts).unwrap();
        let total = gradient_discrete(&y, &phi, opts, GradientBoundary::HalfCellExact).unwrap();
        for i in 0..=g.n {
            let sum = corr.values[i] + init.values[i];
            assert!((sum - total.values[i]).abs() <= 1e-15 * (1.0 + total.values[i].abs()));
        }
        // The initial-layer part is a real contribution, not noise.
        assert!(init.norm_l2() > 1e-6);
    }

    #[test]
    fn continuous_gradient_normalization_on_injected_constants() {
        // y = psi = 1 everywhere, T = 1: the time integral contributes 1,
        // the one-sided time derivative of a constant is 0.
        let g = Grid::new(1.0, 1.0, 8, 16).unwrap();
        let mut y = Field::zeros(g);
        y.data.fill(1.0);
        let mut psi = Field::zeros(g);
        psi.data.fill(1.0);
        let grad = gradient_continuous(&y, &psi, GradientBoundary::HalfCellExact).unwrap();
        for i in 1..g.n {
            assert!((grad.values[i] - 1.0).abs() <= 1e-13, "i = {i}");
        }
        assert!((grad.values[0] - 0.5).abs() <= 1e-13);
        assert_eq!(grad.values[g.n], 0.0);
    }

    #[test]
    fn fd_oracle_vanishes_at_the_data() {
        let g = Grid::new(1.0, 1.0, 12, 24).unwrap();
        let opts = SchemeOptions::default();
        let p = CoefficientVector::from_fn(g, |x| (-20.0 * (x - 0.5) * (x - 0.5)).exp());
        let f = trace_at_zero(
            &solve_forward(g, &p, &InitialData::CoefficientAsInitial, opts).unwrap(),
        );
        let grad = gradient_fd_oracle(g, &p, &f, 1e-5, opts).unwrap();
        let worst = grad.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(worst <= 1e-7, "gradient at the minimum: {worst}");
    }

    #[test]
    fn fd_oracle_error_is_quadratic_in_eps() {
        let g = Grid::new(1.0, 1.0, 12, 24).unwrap();
        let opts = SchemeOptions::default();
        let (p, f, y, r) = misfit_fixture(g, opts);
        let phi = solve_adjoint_discrete(g, &p, &r, opts).unwrap();
        let exact = gradient_discrete(&y, &phi, opts, GradientBoundary::HalfCellExact).unwrap();
        let err = |eps: f64| -> f64 {
            let fd = gradient_fd_oracle(g, &p, &f, eps, opts).unwrap();
            fd.values
                .iter()
                .zip(exact.values.iter())
                .fold(0.0f64, |a, (u, v)| a.max((u - v).abs()))
        };
        let e1 = err(1e-3);
        let e2 = err(5e-4);
        assert!(
            e1 / e2 > 3.0 && e1 / e2 < 5.0,
            "fd error ratio {} not quadratic",
            e1 / e2
        );
    }

    #[test]
    fn boundary_overrides_apply() {
        let g = Grid::new(1.0, 1.0, 16, 32).unwrap();
        let opts = SchemeOptions::default();
        let (p, _f, y, r) = misfit_fixture(g, opts);
        let phi = solve_adjoint_discrete(g, &p, &r, opts).unwrap();
        let exact = gradient_discrete(&y, &phi, opts, GradientBoundary::HalfCellExact).unwrap();
        let rep =
            gradient_discrete(&y, &phi, opts, GradientBoundary::ReplicateFirstInterior).unwrap();
        let zero = gradient_discrete(&y, &phi, opts, GradientBoundary::ZeroBoundary).unwrap();
        assert_eq!(rep.values[0], rep.values[1]);
        assert_eq!(zero.values[0], 0.0);
        assert_eq!(rep.values[5], exact.values[5]);
        assert!(exact.values[0] != 0.0);
    }
}
