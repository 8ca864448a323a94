//! Self-consistent Thomas-Fermi density along the 1D channel.
//!
//! With a constant density of states `g0` the occupation integral has the
//! closed form `n = (g0 / beta) * ln(1 + exp(-beta (eps - mu)))`, and the band
//! minimum is shifted by the softened Coulomb interaction with the density
//! itself. The loop starts from `n = 0`, ramps the interaction linearly over
//! the first iterations and mixes each update with the previous density.
//!
//! Integrals over the grid use trapezoid cells: point `i` owns
//! `[x_i - h/2, x_i + h/2]` clipped to the integration range. Plain
//! integrals are therefore the trapezoid rule, while the kernel is integrated
//! exactly over each cell, since `sigma` is comparable to the grid pitch.

use serde::{Deserialize, Serialize};

use crate::device::PhysicsParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Tolerance on `max |F(n) - n|` (1/nm).
    pub tol: f64,
    pub max_iter: usize,
    /// Linear mixing factor in (0, 1].
    pub mix: f64,
    /// Iterations over which the interaction rises to full strength.
    pub ramp_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 2000,
            mix: 0.1,
            ramp_iters: 50,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::param("tol", "must be positive"));
        }
        if !(self.mix > 0.0 && self.mix <= 1.0) {
            return Err(Error::param("mix", "must lie in (0, 1]"));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    /// Electron density per grid point (1/nm).
    pub n: Vec<f64>,
    /// Band minimum at `n` with the full interaction (eV).
    pub band_min: Vec<f64>,
    /// `max |F(n) - n|` at the returned density.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl DensityProfile {
    pub fn total_charge(&self, grid: &[f64]) -> f64 {
        trapezoid_weights(grid).iter().zip(&self.n).map(|(w, n)| w * n).sum()
    }
}

/// `ln(1 + e^a)` without overflow.
#[inline]
fn softplus(a: f64) -> f64 {
    if a > 0.0 {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn fermi_density_at(band_min: f64, params: &PhysicsParams) -> f64 {
    params.g0 / params.beta * softplus(-params.beta * (band_min - params.mu))
}

/// Occupied density (1/nm) for band minima in eV.
pub fn fermi_density(band_min: &[f64], params: &PhysicsParams) -> Vec<f64> {
    band_min.iter().map(|&e| fermi_density_at(e, params)).collect()
}

/// Softened Coulomb kernel `K0 / sqrt((x - x')^2 + sigma^2)` in meV.
pub fn coulomb_kernel(x: f64, xp: f64, params: &PhysicsParams) -> f64 {
    params.k0 / ((x - xp).powi(2) + params.sigma.powi(2)).sqrt()
}

/// Trapezoid weights of a grid.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    (0..n)
        .map(|i| {
            let lo = if i == 0 { grid[0] } else { 0.5 * (grid[i - 1] + grid[i]) };
            let hi = if i + 1 == n { grid[n - 1] } else { 0.5 * (grid[i] + grid[i + 1]) };
            hi - lo
        })
        .collect()
}

/// Dual cells `[lo, hi]` of the points in `range`: each point owns the span
/// between the midpoints to its neighbours, clamped at the grid ends. Over
/// the whole grid the cell widths are the trapezoid weights.
pub(crate) fn cells(grid: &[f64], range: std::ops::Range<usize>) -> Vec<(f64, f64)> {
    let n = grid.len();
    range
        .map(|i| {
            let lo = if i == 0 { grid[0] } else { 0.5 * (grid[i - 1] + grid[i]) };
            let hi = if i + 1 == n { grid[n - 1] } else { 0.5 * (grid[i] + grid[i + 1]) };
            (lo, hi)
        })
        .collect()
}

/// Cell-integrated interaction operator for one grid and parameter set.
///
/// `weights[i * n + j] = ∫_{cell j} K(x_i, x') dx'`, so the interaction
/// potential of a density is a single matrix-vector product.
#[derive(Debug, Clone)]
pub struct InteractionKernel {
    n: usize,
    weights: Vec<f64>,
}

impl InteractionKernel {
    pub fn new(grid: &[f64], params: &PhysicsParams) -> Self {
        let n = grid.len();
        let sigma = params.sigma;
        let cells = cells(grid, 0..n);
        let mut weights = vec![0.0; n * n];
        for (i, &x) in grid.iter().enumerate() {
            for (j, &(lo, hi)) in cells.iter().enumerate() {
                weights[i * n + j] = params.k0 * (((hi - x) / sigma).asinh() - ((lo - x) / sigma).asinh());
            }
        }
        Self { n, weights }
    }

    /// `∫ K(x_i, x') n(x') dx'` in meV.
    pub fn apply(&self, density: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.weights[i * self.n..(i + 1) * self.n];
            *o = row.iter().zip(density).map(|(w, d)| w * d).sum();
        }
    }
}

/// Pointwise kernel matrix `K(x_i, x_j)`.
pub fn kernel_matrix(grid: &[f64], params: &PhysicsParams) -> Vec<Vec<f64>> {
    grid.iter()
        .map(|&x| grid.iter().map(|&xp| coulomb_kernel(x, xp, params)).collect())
        .collect()
}

/// Thomas-Fermi solver bound to one device grid and parameter set.
#[derive(Debug, Clone)]
pub struct TfSolver {
    kernel: InteractionKernel,
    params: PhysicsParams,
}

impl TfSolver {
    pub fn new(grid: &[f64], params: &PhysicsParams) -> Self {
        Self {
            kernel: InteractionKernel::new(grid, params),
            params: params.clone(),
        }
    }

    /// `eps0 + U(x) + ramp * ∫K n`, with `U` in meV and the result in eV.
    pub fn band_min_into(&self, density: &[f64], potential: &[f64], ramp: f64, out: &mut [f64]) {
        self.kernel.apply(density, out);
        for (o, u) in out.iter_mut().zip(potential) {
            *o = self.params.epsilon0 + 1e-3 * (u + ramp * *o);
        }
    }

    pub fn band_min(&self, density: &[f64], potential: &[f64], ramp: f64) -> Vec<f64> {
        let mut out = vec![0.0; density.len()];
        self.band_min_into(density, potential, ramp, &mut out);
        out
    }

    /// Largest `|F(n) - n|` for the full interaction.
    pub fn fixed_point_residual(&self, density: &[f64], potential: &[f64]) -> f64 {
        let eps = self.band_min(density, potential, 1.0);
        eps.iter()
            .zip(density)
            .map(|(&e, &d)| (fermi_density_at(e, &self.params) - d).abs())
            .fold(0.0, f64::max)
    }

    pub fn solve(&self, potential: &[f64], config: &SolverConfig) -> Result<DensityProfile> {
        config.validate()?;
        let len = potential.len();
        if len != self.kernel.n {
            return Err(Error::DimensionMismatch {
                expected: self.kernel.n,
                got: len,
            });
        }
        let mut n = vec![0.0; len];
        let mut eps = vec![0.0; len];
        let mut update = vec![0.0; len];
        let mut residual = f64::INFINITY;
        for it in 0..config.max_iter {
            let ramp = if config.ramp_iters == 0 {
                1.0
            } else {
                ((it + 1) as f64 / config.ramp_iters as f64).min(1.0)
            };
            self.band_min_into(&n, potential, ramp, &mut eps);
            residual = 0.0;
            for (u, &e) in update.iter_mut().zip(&eps) {
                *u = fermi_density_at(e, &self.params);
            }
            for (u, &d) in update.iter().zip(&n) {
                residual = f64::max(residual, (u - d).abs());
            }
            if ramp == 1.0 && residual < config.tol {
                return Ok(DensityProfile {
                    n,
                    band_min: eps,
                    residual,
                    iterations: it + 1,
                    converged: true,
                });
            }
            for (d, u) in n.iter_mut().zip(&update) {
                *d += config.mix * (u - *d);
            }
        }
        self.band_min_into(&n, potential, 1.0, &mut eps);
        residual = residual.min(self.fixed_point_residual(&n, potential));
        Ok(DensityProfile {
            n,
            band_min: eps,
            residual,
            iterations: config.max_iter,
            converged: false,
        })
    }
}

/// `eps0 + U(x) + ramp * ∫K(x, x') n(x') dx'` in eV for a potential in meV.
pub fn modified_band_min(
    density: &[f64],
    potential: &[f64],
    grid: &[f64],
    params: &PhysicsParams,
    ramp: f64,
) -> Vec<f64> {
    TfSolver::new(grid, params).band_min(density, potential, ramp)
}

/// Solves the density for a potential profile (meV) on `grid`.
pub fn solve_self_consistent(
    potential: &[f64],
    grid: &[f64],
    params: &PhysicsParams,
    config: &SolverConfig,
) -> Result<DensityProfile> {
    TfSolver::new(grid, params).solve(potential, config)
}
