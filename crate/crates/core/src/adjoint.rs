//! Backward-in-time companion problems for the misfit functional.
//!
//! Two solvers live here. `solve_adjoint_discrete` is the exact transpose of
//! the forward march: its output, paired with the forward field in
//! `gradient_discrete`, reproduces the derivative of the discrete misfit to
//! roundoff (the duality identity tests enforce this). `solve_adjoint_continuous`
//! discretizes the continuous dual problem
//!
//!   psi_tt = psi_xx - p psi,  psi(x,T) = psi_t(x,T) = 0,
//!   psi_x(0,t) = 2 r(t),      psi(L,t) = 0
//!
//! with the plain cross stencil regardless of the forward variant; the two
//! agree only in the grid limit, which the comparison study measures.
//!
//! How the transpose works: write the forward march as
//! y^{j+1} = B y^j - y^{j-1} with B = 2I + tau^2 (D2 - P) on the nodes
//! i = 0..N-1 (node N is pinned to zero), where row 0 of D2 carries the
//! mirror ghost. B is symmetric under conjugation by W = diag(1/2, 1, .., 1),
//! and the Taylor start operator is exactly B/2. Transposing the whole
//! space-time system and rescaling the multipliers by -(tau/h) W^{-1} turns
//! the misfit's trace sources into a boundary injection of -(4 tau^2 / h) r_j
//! at node 0 of the layer being produced, and the backward march uses the
//! same B. Equivalently: the mirror ghost becomes
//! phi_{-1} = phi_1 - 2h * (2 r_j) with the residual indexed by the
//! destination layer. Layer 0 is closed with the half-weight rule
//! phi^0 = (1/2) B phi^1 - phi^2 coming from the Taylor start; the first
//! order start closes with phi^0 = phi^1 - phi^2 instead.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::forward::{cross_step, scan_finite, FirstLayer, NeumannMode, SchemeOptions, SchemeVariant};
use crate::grid::{CoefficientVector, Field, Grid, ObservedTrace, Residual};

pub fn residual(trace: &ObservedTrace, f: &ObservedTrace) -> Result<Residual> {
    if trace.values.len() != f.values.len() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "trace has {} samples, data has {}",
                trace.values.len(),
                f.values.len()
            ),
        });
    }
    Ok(Residual {
        grid: trace.grid,
        values: &trace.values - &f.values,
    })
}

fn check_adjoint_shapes(grid: &Grid, p: &CoefficientVector, r: &Residual) -> Result<()> {
    if p.values.len() != grid.nodes() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "coefficient has {} entries but the grid has {} nodes",
                p.values.len(),
                grid.nodes()
            ),
        });
    }
    if r.values.len() != grid.layers() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "residual has {} entries but the grid has {} layers",
                r.values.len(),
                grid.layers()
            ),
        });
    }
    Ok(())
}

/// Exact transpose of the forward march for the active scheme options.
///
/// Mirror-ghost mode is transposed exactly (this is what the duality identity
/// certifies). One-sided mode instead applies the literal recipe - terminal
/// layers zero, interior cross march, boundary row phi_0 = phi_1 - 2h r_j -
/// which is only an O(h) adjoint; the tests bound its duality gap loosely.
pub fn solve_adjoint_discrete(
    grid: Grid,
    p: &CoefficientVector,
    r: &Residual,
    opts: SchemeOptions,
) -> Result<Field> {
    check_adjoint_shapes(&grid, p, r)?;
    match opts.neumann {
        NeumannMode::MirrorGhost => transpose_march(grid, p, r, opts),
        NeumannMode::OneSidedFirstOrder => one_sided_march(grid, p, r, opts),
    }
}

fn transpose_march(
    grid: Grid,
    p: &CoefficientVector,
    r: &Residual,
    opts: SchemeOptions,
) -> Result<Field> {
    let n = grid.n;
    let t2 = grid.tau * grid.tau;
    let k = t2 / (grid.h * grid.h);
    let source = 4.0 * t2 / grid.h;
    let pv = p.values.as_slice().unwrap();
    let zero_p = vec![0.0; grid.nodes()];
    let plain = SchemeOptions {
        variant: SchemeVariant::Plain,
        ..opts
    };

    let mut field = Field::zeros(grid);
    // old = phi^{j+2}, mid = phi^{j+1}; both start as the virtual zero
    // layers above the final time.
    let mut old: Array1<f64> = Array1::zeros(grid.nodes());
    let mut mid: Array1<f64> = Array1::zeros(grid.nodes());

    for j in (1..=grid.m).rev() {
        let mut next = vec![0.0; grid.nodes()];
        match opts.variant {
            SchemeVariant::Plain => {
                cross_step(old.view(), mid.view(), &mut next, pv, k, t2, plain);
                next[0] -= source * r.values[j];
            }
            SchemeVariant::HatPotential => {
                // The hat march keeps the potential on the produced layer,
                // so the stencil part is potential-free and the divide by
                // (1 + tau^2 p) lands on every produced layer except j = 1,
                // whose forward counterpart is the start rule, not a march.
                cross_step(old.view(), mid.view(), &mut next, &zero_p, k, t2, plain);
                next[0] -= source * r.values[j];
                if j >= 2 {
                    for i in 0..n {
                        next[i] /= 1.0 + t2 * pv[i];
                    }
                }
            }
        }
        next[n] = 0.0;
        field
            .data
            .row_mut(j)
            .assign(&ndarray::ArrayView1::from(&next[..]));
        std::mem::swap(&mut old, &mut mid);
        mid.as_slice_mut().unwrap().copy_from_slice(&next);
    }

    // Layer 0 closes the sum against the start rule; no residual enters.
    let mut closure = vec![0.0; grid.nodes()];
    match opts.first_layer {
        FirstLayer::TaylorSecondOrder => {
            // (1/2) B phi^1 - phi^2, with the full potential-bearing B in
            // both variants (the Taylor start always carries the potential).
            let zero: Array1<f64> = Array1::zeros(grid.nodes());
            cross_step(zero.view(), field.data.row(1), &mut closure, pv, k, t2, plain);
            for i in 0..grid.nodes() {
                closure[i] = 0.5 * closure[i] - field.data[[2, i]];
            }
        }
        FirstLayer::EulerFirstOrder => {
            for i in 0..grid.nodes() {
                closure[i] = field.data[[1, i]] - field.data[[2, i]];
            }
        }
    }
    closure[n] = 0.0;
    field
        .data
        .row_mut(0)
        .assign(&ndarray::ArrayView1::from(&closure[..]));

    scan_finite(&field, 0, grid.m)?;
    Ok(field)
}

fn one_sided_march(
    grid: Grid,
    p: &CoefficientVector,
    r: &Residual,
    opts: SchemeOptions,
) -> Result<Field> {
    // Same skeleton as transpose_march (virtual zero layers above M,
    // destination-layer residual, layer-0 closure) so the gradient formula
    // reads layers with the meaning it expects; node 0 is slaved to node 1
    // through the one-sided boundary datum phi_0 = phi_1 - 2h r_j instead of
    // receiving the mirror injection. The forward projection row is not a
    // cross row, so this is a consistent pairing rather than an exact
    // transpose: the duality identity holds to O(h) only.
    let n = grid.n;
    let t2 = grid.tau * grid.tau;
    let k = t2 / (grid.h * grid.h);
    let pv = p.values.as_slice().unwrap();
    let zero_p = vec![0.0; grid.nodes()];
    let plain = SchemeOptions {
        variant: SchemeVariant::Plain,
        ..opts
    };

    let mut field = Field::zeros(grid);
    let mut old: Array1<f64> = Array1::zeros(grid.nodes());
    let mut mid: Array1<f64> = Array1::zeros(grid.nodes());

    for j in (1..=grid.m).rev() {
        let mut next = vec![0.0; grid.nodes()];
        match opts.variant {
            SchemeVariant::Plain => {
                cross_step(old.view(), mid.view(), &mut next, pv, k, t2, plain);
            }
            SchemeVariant::HatPotential => {
                cross_step(old.view(), mid.view(), &mut next, &zero_p, k, t2, plain);
                if j >= 2 {
                    for i in 1..n {
                        next[i] /= 1.0 + t2 * pv[i];
                    }
                }
            }
        }
        next[0] = next[1] - 2.0 * grid.h * r.values[j];
        next[n] = 0.0;
        field
            .data
            .row_mut(j)
            .assign(&ndarray::ArrayView1::from(&next[..]));
        std::mem::swap(&mut old, &mut mid);
        mid.as_slice_mut().unwrap().copy_from_slice(&next);
    }

    let mut closure = vec![0.0; grid.nodes()];
    match opts.first_layer {
        FirstLayer::TaylorSecondOrder => {
            let zero: Array1<f64> = Array1::zeros(grid.nodes());
            cross_step(zero.view(), field.data.row(1), &mut closure, pv, k, t2, plain);
            for i in 0..grid.nodes() {
                closure[i] = 0.5 * closure[i] - field.data[[2, i]];
            }
        }
        FirstLayer::EulerFirstOrder => {
            for i in 0..grid.nodes() {
                closure[i] = field.data[[1, i]] - field.data[[2, i]];
            }
        }
    }
    closure[0] = closure[1];
    closure[n] = 0.0;
    field
        .data
        .row_mut(0)
        .assign(&ndarray::ArrayView1::from(&closure[..]));

    scan_finite(&field, 0, grid.m)?;
    Ok(field)
}

/// Optimize-then-discretize path: plain cross stencil for the continuous
/// dual problem, terminal layers literally zero, boundary source applied
/// through the mirror ghost at the middle layer of each cross.
pub fn solve_adjoint_continuous(
    grid: Grid,
    p: &CoefficientVector,
    r: &Residual,
) -> Result<Field> {
    check_adjoint_shapes(&grid, p, r)?;
    let t2 = grid.tau * grid.tau;
    let k = t2 / (grid.h * grid.h);
    let source = 4.0 * t2 / grid.h;
    let pv = p.values.as_slice().unwrap();
    let plain = SchemeOptions::default();
    let mut field = Field::zeros(grid);
    for j in (0..=grid.m.saturating_sub(2)).rev() {
        let (mut write, read) = field.data.view_mut().split_at(ndarray::Axis(0), j + 1);
        let mut next = write.row_mut(j);
        cross_step(
            read.row(1),
            read.row(0),
            next.as_slice_mut().unwrap(),
            pv,
            k,
            t2,
            plain,
        );
        // Ghost psi_{-1}^{j+1} = psi_1^{j+1} - 2h * 2 r_{j+1}: the residual
        // is sampled where the spatial operator acts.
        next[0] -= source * r.values[j + 1];
    }
    scan_finite(&field, 0, grid.m)?;
    Ok(field)
}

/// Plain backward cross march from injected terminal layers, no sources.
/// Exists for the time-reversal consistency test.
#[doc(hidden)]
pub fn cross_march_backward(
    grid: Grid,
    p: &CoefficientVector,
    terminal: &Array1<f64>,
    subterminal: &Array1<f64>,
    opts: SchemeOptions,
) -> Result<Field> {
    if terminal.len() != grid.nodes() || subterminal.len() != grid.nodes() {
        return Err(Error::ShapeMismatch {
            context: "terminal layers must match the grid".into(),
        });
    }
    let t2 = grid.tau * grid.tau;
    let k = t2 / (grid.h * grid.h);
    let pv = p.values.as_slice().unwrap();
    let mut field = Field::zeros(grid);
    field.data.row_mut(grid.m).assign(terminal);
    field.data.row_mut(grid.m - 1).assign(subterminal);
    field.data[[grid.m, grid.n]] = 0.0;
    field.data[[grid.m - 1, grid.n]] = 0.0;
    for j in (0..=grid.m - 2).rev() {
        let (mut write, read) = field.data.view_mut().split_at(ndarray::Axis(0), j + 1);
        cross_step(
            read.row(1),
            read.row(0),
            write.row_mut(j).as_slice_mut().unwrap(),
            pv,
            k,
            t2,
            opts,
        );
    }
    scan_finite(&field, 0, grid.m)?;
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::march_from_two_layers;
    use ndarray::Array1;

    fn tiny_grid() -> Grid {
        Grid::new(1.0, 1.0, 2, 4).unwrap()
    }

    #[test]
    fn residual_is_pointwise_difference() {
        let g = tiny_grid();
        let a = ObservedTrace::new(g, Array1::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0])).unwrap();
        let b = ObservedTrace::new(g, Array1::from_vec(vec![1.0, 1.0, 1.0, 1.0, 1.0])).unwrap();
        let r = residual(&a, &b).unwrap();
        assert_eq!(r.values.to_vec(), vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn zero_residual_gives_zero_fields() {
        let g = Grid::new(1.0, 1.0, 10, 20).unwrap();
        let p = CoefficientVector::from_fn(g, |x| 1.0 + x);
        let r = Residual {
            grid: g,
            values: Array1::zeros(g.layers()),
        };
        let a = solve_adjoint_discrete(g, &p, &r, SchemeOptions::default()).unwrap();
        let c = solve_adjoint_continuous(g, &p, &r).unwrap();
        assert!(a.data.iter().all(|&v| v == 0.0));
        assert!(c.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_marched_adjoint_fixture() {
        // Unit potential, unit residual spike at layer 2 on the tiny grid.
        // Source coefficient 4 tau^2 / h = 0.5; reduced march operator
        // B = [[1.4375, 0.5], [0.25, 1.4375]]. All arithmetic is dyadic.
        let g = tiny_grid();
        let p = CoefficientVector::new(g, Array1::from_vec(vec![1.0, 1.0, 1.0])).unwrap();
        let r = Residual {
            grid: g,
            values: Array1::from_vec(vec![0.0, 0.0, 1.0, 0.0, 0.0]),
        };
        let phi = solve_adjoint_discrete(g, &p, &r, SchemeOptions::default()).unwrap();
        let expected = [
            [-0.0478515625, -0.1796875, 0.0],
            [-0.71875, -0.125, 0.0],
            [-0.5, 0.0, 0.0],
            [0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0],
        ];
        for (j, row) in expected.iter().enumerate() {
            for (i, want) in row.iter().enumerate() {
                assert!(
                    (phi.at(i, j) - want).abs() <= 1e-15,
                    "mismatch at (i={i}, j={j}): got {}, want {want}",
                    phi.at(i, j)
                );
            }
        }
    }

    #[test]
    fn continuous_terminal_layers_are_zero_for_any_residual() {
        let g = Grid::new(1.0, 1.0, 12, 24).unwrap();
        let p = CoefficientVector::from_fn(g, |x| x);
        let r = Residual {
            grid: g,
            values: Array1::from_iter((0..g.layers()).map(|j| (j as f64 * 0.3).sin() + 0.7)),
        };
        let psi = solve_adjoint_continuous(g, &p, &r).unwrap();
        assert!(psi.layer(g.m).iter().all(|&v| v == 0.0));
        assert!(psi.layer(g.m - 1).iter().all(|&v| v == 0.0));
        // The discrete transpose matches that only when the residual
        // vanishes on the last two layers.
        let mut rv = r.values.clone();
        rv[g.m] = 0.0;
        rv[g.m - 1] = 0.0;
        let r2 = Residual { grid: g, values: rv };
        let phi = solve_adjoint_discrete(g, &p, &r2, SchemeOptions::default()).unwrap();
        assert!(phi.layer(g.m).iter().all(|&v| v == 0.0));
        assert!(phi.layer(g.m - 1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn both_solvers_are_linear_in_the_residual() {
        let g = Grid::new(1.0, 1.0, 10, 20).unwrap();
        let p = CoefficientVector::from_fn(g, |x| 1.0 - 0.5 * x);
        let r1 = Residual {
            grid: g,
            values: Array1::from_iter((0..g.layers()).map(|j| ((j * j) as f64).sin())),
        };
        let r3 = Residual {
            grid: g,
            values: 3.0 * &r1.values,
        };
        let check = |a: &Field, b: &Field| {
            for (u, v) in a.data.iter().zip(b.data.iter()) {
                assert!((3.0 * u - v).abs() <= 1e-12 * (1.0 + v.abs()));
            }
        };
        check(
            &solve_adjoint_discrete(g, &p, &r1, SchemeOptions::default()).unwrap(),
            &solve_adjoint_discrete(g, &p, &r3, SchemeOptions::default()).unwrap(),
        );
        check(
            &solve_adjoint_continuous(g, &p, &r1).unwrap(),
            &solve_adjoint_continuous(g, &p, &r3).unwrap(),
        );
    }

    #[test]
    fn backward_march_is_the_time_reflection_of_the_forward_march() {
        let g = Grid::new(1.0, 1.0, 14, 28).unwrap();
        let p = CoefficientVector::from_fn(g, |x| 0.5 + (2.0 * x).sin().powi(2));
        let a = Array1::from_iter((0..g.nodes()).map(|i| (-30.0 * (g.x(i) - 0.4).powi(2)).exp()));
        let b = Array1::from_iter((0..g.nodes()).map(|i| (3.0 * g.x(i)).cos() * 0.2));
        let opts = SchemeOptions::default();
        let fwd = march_from_two_layers(g, &p, a.view(), b.view(), opts).unwrap();
        let bwd = cross_march_backward(g, &p, &a, &b, opts).unwrap();
        for j in 0..=g.m {
            for i in 0..=g.n {
                assert_eq!(fwd.at(i, j), bwd.at(i, g.m - j), "(i={i}, j={j})");
            }
        }
    }
}
