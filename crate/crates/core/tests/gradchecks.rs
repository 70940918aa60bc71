//! Cross-validation of the three gradient routes against each other and
//! against independent finite differences, across every scheme variant.
//! The h-weighted duality identity
//!     tau * sum_j 2 r_j dy_0^j  ==  h * sum_i dp_i G_i
//! is the defining property of an exact discrete adjoint; it must hold to
//! roundoff for the mirror modes and to O(h) for the one-sided flag.

use acougrad_core::adjoint::{residual, solve_adjoint_continuous, solve_adjoint_discrete};
use acougrad_core::experiments::fixtures;
use acougrad_core::experiments::{synthesize_data, SynthesisMode};
use acougrad_core::forward::{
    solve_forward, solve_perturbation, trace_at_zero, FirstLayer, InitialData, NeumannMode,
    SchemeOptions, SchemeVariant,
};
use acougrad_core::gradient::{
    duality_lhs, gradient_discrete, gradient_fd_oracle, GradientBoundary,
};
use acougrad_core::grid::{field_norm_l2, inner_h, CoefficientVector, Grid, ObservedTrace, Residual};
use acougrad_core::objective::objective;
use ndarray::Array1;

fn duality_gap(grid: Grid, p: &CoefficientVector, f: &ObservedTrace, opts: SchemeOptions, seed: u64) -> f64 {
    let y = solve_forward(grid, p, &InitialData::CoefficientAsInitial, opts).unwrap();
    let r = residual(&trace_at_zero(&y), f).unwrap();
    let phi = solve_adjoint_discrete(grid, p, &r, opts).unwrap();
    let g = gradient_discrete(&y, &phi, opts, GradientBoundary::HalfCellExact).unwrap();
    let dp = fixtures::random_bandlimited(grid, 8, 1.0, seed);
    let dy = solve_perturbation(grid, p, &y, &dp, opts).unwrap();
    let lhs = duality_lhs(&r, &dy);
    let rhs = inner_h(&grid, dp.values.view(), g.values.view());
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs())
}

#[test]
fn duality_holds_for_every_variant_and_start() {
    let grid = Grid::new(1.0, 1.0, 30, 60).unwrap();
    let q = fixtures::canonical_q_true(grid);
    let p = fixtures::random_bandlimited(grid, 6, 0.8, 3);
    for variant in [SchemeVariant::Plain, SchemeVariant::HatPotential] {
        for first_layer in [FirstLayer::TaylorSecondOrder, FirstLayer::EulerFirstOrder] {
            let opts = SchemeOptions {
                variant,
                first_layer,
                neumann: NeumannMode::MirrorGhost,
            };
            let f = synthesize_data(grid, &q, 0.0, 0, SynthesisMode::SameGrid, opts).unwrap();
            for seed in 1..=3u64 {
                let gap = duality_gap(grid, &p, &f, opts, seed);
                assert!(
                    gap <= 1e-10,
                    "{variant:?}/{first_layer:?} seed {seed}: duality gap {gap:.3e}"
                );
            }
        }
    }
}

#[test]
fn one_sided_neumann_duality_gap_is_first_order() {
    // The one-sided flag is a consistent discretization but not the exact
    // transpose pairing, so the identity only holds to O(h).
    let gap_at = |n: usize| {
        let grid = Grid::new(1.0, 1.0, n, 2 * n).unwrap();
        let q = fixtures::canonical_q_true(grid);
        let opts = SchemeOptions {
            neumann: NeumannMode::OneSidedFirstOrder,
            ..SchemeOptions::default()
        };
        let f = synthesize_data(grid, &q, 0.0, 0, SynthesisMode::SameGrid, opts).unwrap();
        let p = CoefficientVector::zeros(grid);
        duality_gap(grid, &p, &f, opts, 1)
    };
    let coarse = gap_at(20);
    let fine = gap_at(40);
    println!("one-sided duality gaps: coarse {coarse:.6e}, fine {fine:.6e}");
    assert!(coarse < 0.1, "gap should still be small: {coarse}");
    assert!(
        fine < coarse / 1.5,
        "gap should shrink roughly linearly: {coarse:.3e} -> {fine:.3e}"
    );
}

#[test]
fn adjoint_matches_fd_at_a_random_smooth_point() {
    let grid = Grid::new(1.0, 1.0, 20, 40).unwrap();
    let q = fixtures::canonical_q_true(grid);
    let opts = SchemeOptions::default();
    let f = synthesize_data(grid, &q, 0.0, 0, SynthesisMode::SameGrid, opts).unwrap();
    for (label, p) in [
        ("zero start", CoefficientVector::zeros(grid)),
        ("random smooth", fixtures::random_bandlimited(grid, 8, 2.0, 17)),
    ] {
        let peak = p.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let eps = 1e-5 * peak.max(1.0);
        let y = solve_forward(grid, &p, &InitialData::CoefficientAsInitial, opts).unwrap();
        let r = residual(&trace_at_zero(&y), &f).unwrap();
        let phi = solve_adjoint_discrete(grid, &p, &r, opts).unwrap();
        let adj = gradient_discrete(&y, &phi, opts, GradientBoundary::HalfCellExact).unwrap();
        let fd = gradient_fd_oracle(grid, &p, &f, eps, opts).unwrap();
        let scale = fd.values.iter().fold(0.0f64, |a, v| a.max(v.abs())) + 1e-30;
        let err = adj
            .values
            .iter()
            .zip(fd.values.iter())
            .fold(0.0f64, |a, (u, v)| a.max((u - v).abs()))
            / scale;
        assert!(err <= 1e-4, "{label}: adjoint-vs-fd max rel {err:.3e}");
    }
}

#[test]
fn gradient_gives_the_directional_derivative() {
    let grid = Grid::new(1.0, 1.0, 25, 50).unwrap();
    let q = fixtures::canonical_q_true(grid);
    let opts = SchemeOptions::default();
    let f = synthesize_data(grid, &q, 0.0, 0, SynthesisMode::SameGrid, opts).unwrap();
    let p = fixtures::random_bandlimited(grid, 6, 0.5, 5);
    let y = solve_forward(grid, &p, &InitialData::CoefficientAsInitial, opts).unwrap();
    let r = residual(&trace_at_zero(&y), &f).unwrap();
    let phi = solve_adjoint_discrete(grid, &p, &r, opts).unwrap();
    let g = gradient_discrete(&y, &phi, opts, GradientBoundary::HalfCellExact).unwrap();
    let s = 1e-5;
    for seed in 1..=10u64 {
        let dp = fixtures::random_bandlimited(grid, 8, 1.0, seed);
        let predicted = inner_h(&grid, g.values.view(), dp.values.view());
        let plus = CoefficientVector::new(grid, &p.values + &(s * &dp.values)).unwrap();
        let minus = CoefficientVector::new(grid, &p.values - &(s * &dp.values)).unwrap();
        let observed =
            (objective(grid, &plus, &f, opts).unwrap() - objective(grid, &minus, &f, opts).unwrap())
                / (2.0 * s);
        let rel = (predicted - observed).abs() / predicted.abs().max(observed.abs());
        assert!(rel <= 1e-3, "seed {seed}: directional check rel {rel:.3e}");
    }
}

#[test]
fn fd_oracle_sees_the_quadratic_rise_from_zero_data() {
    // f == 0 and p == 0 zero out the gradient, but the oracle's quotient is
    // a genuine second difference of J(eps e_i) = O(eps^2), not zero.
    let grid = Grid::new(1.0, 1.0, 8, 16).unwrap();
    let p = CoefficientVector::zeros(grid);
    let f = ObservedTrace::zeros(grid);
    let opts = SchemeOptions::default();
    let coarse = gradient_fd_oracle(grid, &p, &f, 1e-2, opts).unwrap();
    let fine = gradient_fd_oracle(grid, &p, &f, 5e-3, opts).unwrap();
    let peak = |v: &CoefficientVector| v.values.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    // J(eps e_i) is purely quadratic to leading order, so the quotient
    // scales as eps^2: halving eps divides the oracle by 4.
    let pinned_peak = 1.254169560114e-6;
    assert!(
        (peak(&coarse) - pinned_peak).abs() <= 1e-9 * pinned_peak,
        "peak {:.12e}",
        peak(&coarse)
    );
    let ratio = peak(&coarse) / peak(&fine);
    assert!((ratio - 4.0).abs() <= 0.01, "eps^2 scaling ratio {ratio}");
}

#[test]
fn doubling_the_residual_doubles_adjoint_and_gradient_exactly() {
    let grid = Grid::new(1.0, 1.0, 12, 24).unwrap();
    let q = fixtures::canonical_q_true(grid);
    let opts = SchemeOptions::default();
    let f = synthesize_data(grid, &q, 0.0, 0, SynthesisMode::SameGrid, opts).unwrap();
    let p = fixtures::random_bandlimited(grid, 4, 0.3, 9);
    let y = solve_forward(grid, &p, &InitialData::CoefficientAsInitial, opts).unwrap();
    let r = residual(&trace_at_zero(&y), &f).unwrap();
    let r2 = Residual {
        grid,
        values: Array1::from_iter(r.values.iter().map(|v| 2.0 * v)),
    };
    let phi = solve_adjoint_discrete(grid, &p, &r, opts).unwrap();
    let phi2 = solve_adjoint_discrete(grid, &p, &r2, opts).unwrap();
    // scaling by 2 is exact in binary floating point, so equality is bitwise
    for (a, b) in phi.data.iter().zip(phi2.data.iter()) {
        assert_eq!(2.0 * a, *b);
    }
    let g = gradient_discrete(&y, &phi, opts, GradientBoundary::HalfCellExact).unwrap();
    let g2 = gradient_discrete(&y, &phi2, opts, GradientBoundary::HalfCellExact).unwrap();
    for (a, b) in g.values.iter().zip(g2.values.iter()) {
        assert_eq!(2.0 * a, *b);
    }
}

#[test]
fn continuous_adjoint_field_approaches_the_discrete_one() {
    let mut rels = Vec::new();
    for n in [25usize, 50, 100] {
        let grid = Grid::new(1.0, 2.0, n, 4 * n).unwrap();
        let q = fixtures::canonical_q_true(grid);
        let opts = SchemeOptions::default();
        let f = synthesize_data(grid, &q, 0.0, 0, SynthesisMode::SameGrid, opts).unwrap();
        let p = CoefficientVector::zeros(grid);
        let y = solve_forward(grid, &p, &InitialData::CoefficientAsInitial, opts).unwrap();
        let r = residual(&trace_at_zero(&y), &f).unwrap();
        let phi = solve_adjoint_discrete(grid, &p, &r, opts).unwrap();
        let psi = solve_adjoint_continuous(grid, &p, &r).unwrap();
        let mut diff = phi.clone();
        diff.data -= &psi.data;
        let rel = field_norm_l2(&diff) / field_norm_l2(&phi);
        rels.push(rel);
    }
    assert!(rels[1] < rels[0] && rels[2] < rels[1], "{rels:?}");
    // roughly first order: measured 0.059 / 0.031 / 0.017
    assert!(rels[2] < rels[0] / 2.5, "{rels:?}");
}
