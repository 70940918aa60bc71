//! Uniform space-time grid and the vectors/fields that live on it.
//!
//! Space nodes x_i = i*h for i = 0..=N cover [0, L]; time layers t_j = j*tau
//! for j = 0..=M cover [0, T]. The explicit cross scheme is stable for
//! tau/h <= 1 when the potential is small; construction rejects ratios above
//! `cfl_max` unless the caller opts out.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default stability margin: reject tau/h above this at construction.
pub const DEFAULT_CFL_MAX: f64 = 0.95;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridOptions {
    /// Largest admissible tau/h.
    pub cfl_max: f64,
    /// Build the grid even when tau/h exceeds `cfl_max` (stability studies).
    pub allow_unstable: bool,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            cfl_max: DEFAULT_CFL_MAX,
            allow_unstable: false,
        }
    }
}

/// Discretization of [0, L] x [0, T] with N space intervals and M time layers.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Grid {
    pub length: f64,
    pub duration: f64,
    pub n: usize,
    pub m: usize,
    pub h: f64,
    pub tau: f64,
    pub cfl_ratio: f64,
}

impl Grid {
    pub fn new(length: f64, duration: f64, n: usize, m: usize) -> Result<Self> {
        Self::with_options(length, duration, n, m, GridOptions::default())
    }

    pub fn with_options(
        length: f64,
        duration: f64,
        n: usize,
        m: usize,
        opts: GridOptions,
    ) -> Result<Self> {
        if !(length > 0.0) {
            return Err(Error::NonPositiveExtent {
                name: "L",
                value: length,
            });
        }
        if !(duration > 0.0) {
            return Err(Error::NonPositiveExtent {
                name: "T",
                value: duration,
            });
        }
        if n < 2 || m < 2 {
            return Err(Error::TooFewIntervals { n, m });
        }
        let h = length / n as f64;
        let tau = duration / m as f64;
        let cfl_ratio = tau / h;
        if cfl_ratio > opts.cfl_max && !opts.allow_unstable {
            return Err(Error::CflViolation {
                ratio: cfl_ratio,
                max: opts.cfl_max,
            });
        }
        Ok(Grid {
            length,
            duration,
            n,
            m,
            h,
            tau,
            cfl_ratio,
        })
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    #[inline]
    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.tau
    }

    /// Number of space nodes, N + 1.
    #[inline]
    pub fn nodes(&self) -> usize {
        self.n + 1
    }

    /// Number of time layers, M + 1.
    #[inline]
    pub fn layers(&self) -> usize {
        self.m + 1
    }

    /// Same domain with every interval split by `factor` in both directions.
    /// The CFL ratio is unchanged, so refinement never trips the guard.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::with_options(
            self.length,
            self.duration,
            self.n * factor,
            self.m * factor,
            GridOptions {
                allow_unstable: true,
                ..GridOptions::default()
            },
        )
    }
}

/// Space-time field y_i^j stored time-major: row j is the whole layer j,
/// so marching touches contiguous memory.
#[derive(Debug, Clone)]
pub struct Field {
    pub grid: Grid,
    /// Shape (M+1, N+1); entry [[j, i]] is the value at (x_i, t_j).
    pub data: Array2<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Field {
            data: Array2::zeros((grid.layers(), grid.nodes())),
            grid,
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[[j, i]]
    }

    /// Contiguous view of layer j.
    #[inline]
    pub fn layer(&self, j: usize) -> ArrayView1<'_, f64> {
        self.data.row(j)
    }

    /// Trace at the left boundary: the vector (y_0^j)_{j=0..=M}.
    pub fn left_trace(&self) -> Array1<f64> {
        self.data.column(0).to_owned()
    }

    pub fn norm_l2(&self) -> f64 {
        field_norm_l2(self)
    }
}

/// Grid function of space alone: one value per node, length N + 1.
#[derive(Debug, Clone)]
pub struct CoefficientVector {
    pub grid: Grid,
    pub values: Array1<f64>,
}

impl CoefficientVector {
    pub fn new(grid: Grid, values: Array1<f64>) -> Result<Self> {
        if values.len() != grid.nodes() {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "coefficient vector has {} entries but the grid has {} nodes",
                    values.len(),
                    grid.nodes()
                ),
            });
        }
        Ok(CoefficientVector { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        CoefficientVector {
            values: Array1::zeros(grid.nodes()),
            grid,
        }
    }

    /// Sample a function of x at every node.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = Array1::from_iter((0..grid.nodes()).map(|i| f(grid.x(i))));
        CoefficientVector { grid, values }
    }

    pub fn norm_l2(&self) -> f64 {
        coeff_norm_l2(&self.grid, self.values.view())
    }
}

/// Boundary observation g_j = u(0, t_j), length M + 1.
#[derive(Debug, Clone)]
pub struct ObservedTrace {
    pub grid: Grid,
    pub values: Array1<f64>,
}

impl ObservedTrace {
    pub fn new(grid: Grid, values: Array1<f64>) -> Result<Self> {
        if values.len() != grid.layers() {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "trace has {} entries but the grid has {} layers",
                    values.len(),
                    grid.layers()
                ),
            });
        }
        Ok(ObservedTrace { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        ObservedTrace {
            values: Array1::zeros(grid.layers()),
            grid,
        }
    }
}

/// Trace misfit r_j = y_0^j - g_j, length M + 1.
#[derive(Debug, Clone)]
pub struct Residual {
    pub grid: Grid,
    pub values: Array1<f64>,
}

/// Discrete L2 norm of a space-time field: sqrt(h * tau * sum y_i^j ^ 2).
pub fn field_norm_l2(field: &Field) -> f64 {
    let s: f64 = field.data.iter().map(|v| v * v).sum();
    (field.grid.h * field.grid.tau * s).sqrt()
}

/// Discrete L2 norm of a space grid function: sqrt(h * sum v_i ^ 2).
pub fn coeff_norm_l2(grid: &Grid, values: ArrayView1<'_, f64>) -> f64 {
    let s: f64 = values.iter().map(|v| v * v).sum();
    (grid.h * s).sqrt()
}

/// h-weighted inner product of two space grid functions.
pub fn inner_h(grid: &Grid, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    grid.h * a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spacings_come_out_exact() {
        let g = Grid::new(1.0, 2.0, 100, 400).unwrap();
        assert_relative_eq!(g.h, 0.01, max_relative = 1e-15);
        assert_relative_eq!(g.tau, 0.005, max_relative = 1e-15);
        assert_relative_eq!(g.cfl_ratio, 0.5, max_relative = 1e-15);
        assert_relative_eq!(g.x(100), 1.0, max_relative = 1e-15);
        assert_relative_eq!(g.time(400), 2.0, max_relative = 1e-15);
    }

    #[test]
    fn cfl_guard_rejects_and_opt_out_allows() {
        // N = 50, M = 40 over the unit square: tau/h = 1.25.
        let err = Grid::new(1.0, 1.0, 50, 40).unwrap_err();
        match err {
            Error::CflViolation { ratio, max } => {
                assert_relative_eq!(ratio, 1.25, max_relative = 1e-15);
                assert_eq!(max, DEFAULT_CFL_MAX);
            }
            other => panic!("expected CflViolation, got {other:?}"),
        }
        let g = Grid::with_options(
            1.0,
            1.0,
            50,
            40,
            GridOptions {
                allow_unstable: true,
                ..GridOptions::default()
            },
        )
        .unwrap();
        assert_relative_eq!(g.cfl_ratio, 1.25, max_relative = 1e-15);
    }

    #[test]
    fn bad_extents_and_sizes_are_rejected() {
        assert!(matches!(
            Grid::new(0.0, 1.0, 10, 10),
            Err(Error::NonPositiveExtent { name: "L", .. })
        ));
        assert!(matches!(
            Grid::new(1.0, -2.0, 10, 10),
            Err(Error::NonPositiveExtent { name: "T", .. })
        ));
        assert!(matches!(
            Grid::new(1.0, 1.0, 1, 10),
            Err(Error::TooFewIntervals { .. })
        ));
    }

    #[test]
    fn refinement_preserves_ratio_and_domain() {
        let g = Grid::new(2.0, 1.0, 10, 10).unwrap();
        let f = g.refined(4).unwrap();
        assert_eq!(f.n, 40);
        assert_eq!(f.m, 40);
        assert_relative_eq!(f.cfl_ratio, g.cfl_ratio, max_relative = 1e-15);
        assert_relative_eq!(f.length, g.length);
        assert_relative_eq!(f.duration, g.duration);
    }

    #[test]
    fn field_layout_is_time_major() {
        let g = Grid::new(1.0, 1.0, 4, 8).unwrap();
        let mut field = Field::zeros(g);
        field.data[[3, 2]] = 7.5;
        assert_eq!(field.at(2, 3), 7.5);
        assert_eq!(field.layer(3)[2], 7.5);
        assert_eq!(field.layer(3).len(), 5);
        assert_eq!(field.left_trace().len(), 9);
    }

    #[test]
    fn shape_checks_fire() {
        let g = Grid::new(1.0, 1.0, 4, 8).unwrap();
        assert!(CoefficientVector::new(g, Array1::zeros(4)).is_err());
        assert!(CoefficientVector::new(g, Array1::zeros(5)).is_ok());
        assert!(ObservedTrace::new(g, Array1::zeros(8)).is_err());
        assert!(ObservedTrace::new(g, Array1::zeros(9)).is_ok());
    }

    #[test]
    fn norms_match_hand_sums() {
        let g = Grid::new(1.0, 0.5, 2, 2).unwrap();
        let mut field = Field::zeros(g);
        field.data.fill(2.0);
        // 9 entries of 4, weighted by h*tau = 0.125.
        assert_relative_eq!(field_norm_l2(&field), 4.5f64.sqrt(), max_relative = 1e-15);
        let v = Array1::from_vec(vec![3.0, 4.0, 0.0]);
        assert_relative_eq!(
            coeff_norm_l2(&g, v.view()),
            (0.5 * 25.0f64).sqrt(),
            max_relative = 1e-15
        );
        let w = Array1::from_vec(vec![1.0, 2.0, 3.0]);
        assert_relative_eq!(inner_h(&g, v.view(), w.view()), 0.5 * 11.0, max_relative = 1e-15);
    }
}
