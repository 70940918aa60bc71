//! Physical-medium reductions: travel-time reparameterization and the
//! impedance-to-potential map, so (c, rho) depth profiles can feed the
//! dimensionless solvers. In travel-time coordinates x = integral(dz / c) the
//! wave speed is 1, and the impedance sigma = rho c enters the equation only
//! through q(x) = -1/2 (ln sigma)'' + 1/4 ((ln sigma)')^2.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::grid::{CoefficientVector, Grid};

/// Depth-sampled medium: strictly increasing depths starting at the surface,
/// positive sound speed and density.
#[derive(Debug, Clone)]
pub struct MediumProfile {
    pub z: Array1<f64>,
    pub c: Array1<f64>,
    pub rho: Array1<f64>,
}

impl MediumProfile {
    pub fn new(z: Array1<f64>, c: Array1<f64>, rho: Array1<f64>) -> Result<Self> {
        if z.len() != c.len() || z.len() != rho.len() || z.len() < 3 {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "medium profile needs >= 3 samples of equal length, got z: {}, c: {}, rho: {}",
                    z.len(),
                    c.len(),
                    rho.len()
                ),
            });
        }
        if z[0] != 0.0 {
            return Err(Error::InvalidConfig(format!(
                "depth samples must start at the surface z = 0, got {}",
                z[0]
            )));
        }
        for k in 1..z.len() {
            if !(z[k] > z[k - 1]) {
                return Err(Error::InvalidConfig(format!(
                    "depth samples must be strictly increasing, violated at sample {k}"
                )));
            }
        }
        for (k, &v) in c.iter().enumerate() {
            if !(v > 0.0) {
                return Err(Error::NonPositiveSpeed { index: k, value: v });
            }
        }
        for (k, &v) in rho.iter().enumerate() {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "density must be strictly positive: rho = {v} at sample {k}"
                )));
            }
        }
        Ok(MediumProfile { z, c, rho })
    }
}

/// Impedance sampled on a strictly increasing travel-time axis.
#[derive(Debug, Clone)]
pub struct ImpedanceProfile {
    pub x: Array1<f64>,
    pub sigma: Array1<f64>,
}

impl ImpedanceProfile {
    pub fn new(x: Array1<f64>, sigma: Array1<f64>) -> Result<Self> {
        if x.len() != sigma.len() || x.len() < 2 {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "impedance profile needs >= 2 samples of equal length, got x: {}, sigma: {}",
                    x.len(),
                    sigma.len()
                ),
            });
        }
        for k in 1..x.len() {
            if !(x[k] > x[k - 1]) {
                return Err(Error::InvalidConfig(format!(
                    "travel-time samples must be strictly increasing, violated at sample {k}"
                )));
            }
        }
        for (k, &v) in sigma.iter().enumerate() {
            if !(v > 0.0) {
                return Err(Error::NonPositiveImpedance { index: k, value: v });
            }
        }
        Ok(ImpedanceProfile { x, sigma })
    }
}

/// Travel time to each depth sample: x_k = integral_0^{z_k} dz / c by
/// composite trapezoid. Positivity of c is enforced at profile construction,
/// so the output is strictly increasing with x_0 = 0.
pub fn travel_time_map(m: &MediumProfile) -> Array1<f64> {
    let mut x = Array1::zeros(m.z.len());
    for k in 1..m.z.len() {
        let dz = m.z[k] - m.z[k - 1];
        x[k] = x[k - 1] + 0.5 * dz * (1.0 / m.c[k] + 1.0 / m.c[k - 1]);
    }
    x
}

/// Impedance sigma = rho * c carried onto the travel-time axis.
pub fn impedance_profile(m: &MediumProfile) -> Result<ImpedanceProfile> {
    let x = travel_time_map(m);
    let sigma = Array1::from_iter(m.c.iter().zip(m.rho.iter()).map(|(c, r)| c * r));
    ImpedanceProfile::new(x, sigma)
}

fn interp_linear(xs: &Array1<f64>, ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    // First sample strictly above x; xs is strictly increasing.
    let hi = xs.as_slice().unwrap().partition_point(|v| *v <= x);
    let lo = hi - 1;
    let t = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + t * (ys[hi] - ys[lo])
}

/// Potential q(x) = -1/2 (ln sigma)'' + 1/4 ((ln sigma)')^2 resampled onto
/// the solver grid. ln sigma is interpolated linearly (differencing the log
/// keeps the map invariant under sigma -> k sigma) and differentiated with
/// central stencils inside, one-sided second-order stencils at the ends.
pub fn impedance_to_potential(s: &ImpedanceProfile, grid: Grid) -> Result<CoefficientVector> {
    let n = grid.n;
    if n < 3 {
        return Err(Error::InvalidConfig(format!(
            "potential extraction needs at least 3 space intervals, grid has {n}"
        )));
    }
    let lo = s.x[0];
    let hi = s.x[s.x.len() - 1];
    let slack = 1e-9 * grid.length.max(1.0);
    if lo > slack || hi < grid.length - slack {
        return Err(Error::DomainTooShort {
            lo,
            hi,
            needed: grid.length,
        });
    }

    let log_sigma: Vec<f64> = s.sigma.iter().map(|v| v.ln()).collect();
    let g: Vec<f64> = (0..=n)
        .map(|i| interp_linear(&s.x, &log_sigma, grid.x(i)))
        .collect();

    let h = grid.h;
    let h2 = h * h;
    let d1 = |i: usize| -> f64 {
        if i == 0 {
            (-3.0 * g[0] + 4.0 * g[1] - g[2]) / (2.0 * h)
        } else if i == n {
            (3.0 * g[n] - 4.0 * g[n - 1] + g[n - 2]) / (2.0 * h)
        } else {
            (g[i + 1] - g[i - 1]) / (2.0 * h)
        }
    };
    let d2 = |i: usize| -> f64 {
        if i == 0 {
            (2.0 * g[0] - 5.0 * g[1] + 4.0 * g[2] - g[3]) / h2
        } else if i == n {
            (2.0 * g[n] - 5.0 * g[n - 1] + 4.0 * g[n - 2] - g[n - 3]) / h2
        } else {
            (g[i + 1] - 2.0 * g[i] + g[i - 1]) / h2
        }
    };
    let values = Array1::from_iter((0..=n).map(|i| {
        let s1 = d1(i);
        -0.5 * d2(i) + 0.25 * s1 * s1
    }));
    Ok(CoefficientVector { grid, values })
}
