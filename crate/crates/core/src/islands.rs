//! Island segmentation, capacitance model and ground-state charges.

use std::ops::Range;

use nalgebra::DMatrix;

use crate::device::PhysicsParams;
use crate::error::{Error, Result};
use crate::tf::cells;

/// Default density threshold separating islands from barriers (1/nm).
pub const DEFAULT_ISLAND_THRESHOLD: f64 = 1e-6;

/// Half-width of the initial charge search box around `Z`.
const SEARCH_MARGIN: i64 = 2;
/// Upper bound on candidates for the widened search.
const MAX_CANDIDATES: usize = 1 << 20;

/// Maximal runs of `n > threshold` that do not touch either end of the
/// grid. Runs touching an end belong to the leads.
pub fn segment_islands(n: &[f64], threshold: f64) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < n.len() {
        if n[i] > threshold {
            let start = i;
            while i < n.len() && n[i] > threshold {
                i += 1;
            }
            if start > 0 && i < n.len() {
                out.push(start..i);
            }
        } else {
            i += 1;
        }
    }
    out
}

fn island_integral(values: impl Iterator<Item = f64>, grid: &[f64], island: &Range<usize>) -> f64 {
    cells(grid, island.clone())
        .iter()
        .zip(values)
        .map(|((lo, hi), v)| (hi - lo) * v)
        .sum()
}

/// `Z_i`: integral of the density over the dual cells of each island.
pub fn induced_charges(n: &[f64], grid: &[f64], islands: &[Range<usize>]) -> Vec<f64> {
    islands
        .iter()
        .map(|r| island_integral(n[r.clone()].iter().copied(), grid, r))
        .collect()
}

/// Second antiderivative of `1 / sqrt(u^2 + sigma^2)`.
#[inline]
fn g2(u: f64, sigma: f64) -> f64 {
    u * (u / sigma).asinh() - (u * u + sigma * sigma).sqrt()
}

/// `∫_{a}∫_{b} K(x, x') dx dx'` over two cells.
fn cell_pair(a: (f64, f64), b: (f64, f64), params: &PhysicsParams) -> f64 {
    let s = params.sigma;
    params.k0 * (g2(a.1 - b.0, s) - g2(a.1 - b.1, s) - g2(a.0 - b.0, s) + g2(a.0 - b.1, s))
}

/// Inverse-capacitance estimate
/// `E_ij = [c_k δ_ij ∫_i n² + ∫_i∫_j K n n] / (∫_i n · ∫_j n)` in meV.
pub fn inverse_capacitance(
    n: &[f64],
    grid: &[f64],
    islands: &[Range<usize>],
    params: &PhysicsParams,
) -> Result<DMatrix<f64>> {
    let charges = induced_charges(n, grid, islands);
    if let Some(i) = charges.iter().position(|&z| !(z > 0.0)) {
        return Err(Error::EmptyIsland(i));
    }
    let cell_sets: Vec<Vec<(f64, f64)>> = islands.iter().map(|r| cells(grid, r.clone())).collect();
    let k = islands.len();
    let mut e = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let mut coulomb = 0.0;
            for (a, &ca) in islands[i].clone().zip(&cell_sets[i]) {
                for (b, &cb) in islands[j].clone().zip(&cell_sets[j]) {
                    coulomb += n[a] * n[b] * cell_pair(ca, cb, params);
                }
            }
            let kinetic = if i == j {
                params.c_k * island_integral(n[islands[i].clone()].iter().map(|v| v * v), grid, &islands[i])
            } else {
                0.0
            };
            let v = (kinetic + coulomb) / (charges[i] * charges[j]);
            e[(i, j)] = v;
            e[(j, i)] = v;
        }
    }
    Ok(e)
}

/// Capacitance model of the islands in one density profile.
#[derive(Debug, Clone, PartialEq)]
pub struct IslandModel {
    pub islands: Vec<Range<usize>>,
    /// Continuous island charges (electrons).
    pub z: Vec<f64>,
    /// Inverse-capacitance matrix (meV).
    pub e: DMatrix<f64>,
    /// Position of the density maximum of each island (nm).
    pub dot_positions: Vec<f64>,
}

impl IslandModel {
    pub fn from_density(n: &[f64], grid: &[f64], params: &PhysicsParams, threshold: f64) -> Result<Self> {
        let islands = segment_islands(n, threshold);
        let z = induced_charges(n, grid, &islands);
        let e = if islands.is_empty() {
            DMatrix::zeros(0, 0)
        } else {
            inverse_capacitance(n, grid, &islands, params)?
        };
        let dot_positions = islands
            .iter()
            .map(|r| {
                let best = r
                    .clone()
                    .max_by(|&a, &b| n[a].total_cmp(&n[b]).then(b.cmp(&a)))
                    .expect("islands are non-empty");
                grid[best]
            })
            .collect();
        Ok(Self {
            islands,
            z,
            e,
            dot_positions,
        })
    }

    /// Model from explicit `Z` and `E`, without islands on a grid.
    pub fn from_parts(z: Vec<f64>, e: DMatrix<f64>) -> Self {
        let k = z.len();
        Self {
            islands: vec![0..0; k],
            z,
            e,
            dot_positions: vec![0.0; k],
        }
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.e.clone().cholesky().is_some()
    }
}

/// Integer island charges and their charging energy (meV).
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeState {
    pub q: Vec<u32>,
    pub energy: f64,
}

fn quadratic_form(e: &DMatrix<f64>, z: &[f64], q: &[i64]) -> f64 {
    let k = z.len();
    let mut total = 0.0;
    for i in 0..k {
        let di = q[i] as f64 - z[i];
        for j in 0..k {
            total += e[(i, j)] * di * (q[j] as f64 - z[j]);
        }
    }
    total
}

/// `Σ_ij E_ij (Q - Z)_i (Q - Z)_j`.
pub fn charging_energy(q: &[u32], model: &IslandModel) -> Result<f64> {
    if q.len() != model.len() {
        return Err(Error::DimensionMismatch {
            expected: model.len(),
            got: q.len(),
        });
    }
    let q: Vec<i64> = q.iter().map(|&v| v as i64).collect();
    Ok(quadratic_form(&model.e, &model.z, &q))
}

pub(crate) fn charging_energy_signed(q: &[i64], model: &IslandModel) -> f64 {
    quadratic_form(&model.e, &model.z, q)
}

/// Strict ordering: lower energy, then smaller total charge, then
/// lexicographically smaller.
fn better(energy: f64, q: &[i64], best_energy: f64, best: &[i64]) -> bool {
    if energy != best_energy {
        return energy < best_energy;
    }
    let (t, bt): (i64, i64) = (q.iter().sum(), best.iter().sum());
    if t != bt {
        return t < bt;
    }
    q < best
}

fn search_box(model: &IslandModel, lo: &[i64], hi: &[i64]) -> (Vec<i64>, f64) {
    let k = lo.len();
    let mut q = lo.to_vec();
    let mut best = q.clone();
    let mut best_energy = f64::INFINITY;
    loop {
        let energy = quadratic_form(&model.e, &model.z, &q);
        if better(energy, &q, best_energy, &best) {
            best_energy = energy;
            best.copy_from_slice(&q);
        }
        let mut i = k;
        loop {
            if i == 0 {
                return (best, best_energy);
            }
            i -= 1;
            if q[i] < hi[i] {
                q[i] += 1;
                break;
            }
            q[i] = lo[i];
        }
    }
}

/// Non-negative integer charges minimizing [`charging_energy`].
///
/// The search starts on `[max(0, floor(Z_i) - 2), ceil(Z_i) + 2]`. When `E`
/// is positive definite the box is then widened to the ellipsoid bound
/// `|Q_i - Z_i| <= sqrt(E_best (E^-1)_ii)`, which contains every lattice
/// point that could beat the initial minimum.
pub fn ground_state_charges(model: &IslandModel) -> ChargeState {
    let k = model.len();
    if k == 0 {
        return ChargeState { q: vec![], energy: 0.0 };
    }
    let lo: Vec<i64> = model.z.iter().map(|z| (z.floor() as i64 - SEARCH_MARGIN).max(0)).collect();
    let hi: Vec<i64> = model.z.iter().map(|z| z.ceil() as i64 + SEARCH_MARGIN).collect();
    let (mut best, mut energy) = search_box(model, &lo, &hi);

    match model.e.clone().cholesky() {
        Some(chol) => {
            let inv = chol.inverse();
            let slack = 1.0 + 1e-9;
            let mut wide_lo = Vec::with_capacity(k);
            let mut wide_hi = Vec::with_capacity(k);
            for i in 0..k {
                let reach = (energy.max(0.0) * inv[(i, i)] * slack).sqrt() + 1e-9;
                wide_lo.push(((model.z[i] - reach).ceil() as i64).max(0).min(lo[i]));
                wide_hi.push(((model.z[i] + reach).floor() as i64).max(hi[i]));
            }
            let count = wide_lo
                .iter()
                .zip(&wide_hi)
                .map(|(l, h)| (h - l + 1) as usize)
                .try_fold(1usize, |acc, c| acc.checked_mul(c));
            if wide_lo != lo || wide_hi != hi {
                match count {
                    Some(c) if c <= MAX_CANDIDATES => {
                        let (q, e) = search_box(model, &wide_lo, &wide_hi);
                        best = q;
                        energy = e;
                    }
                    _ => log::warn!("charge search box too large; keeping the local minimum"),
                }
            }
        }
        None => log::warn!("inverse-capacitance matrix is not positive definite: {:?}", model.e),
    }
    ChargeState {
        q: best.iter().map(|&v| v as u32).collect(),
        energy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::uniform_grid;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    fn grid() -> Vec<f64> {
        uniform_grid(-60.0, 60.0, 121)
    }

    #[test]
    fn segmentation_edge_cases() {
        assert!(segment_islands(&[0.0; 10], 1e-6).is_empty());
        let n = [0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.2, 0.3, 0.2, 0.0];
        assert_eq!(segment_islands(&n, 1e-6), vec![2..4, 6..9]);
        assert!(segment_islands(&n, 1.0).is_empty());
        // runs touching the ends are leads
        let leads = [0.5, 0.5, 0.0, 0.4, 0.0, 0.5];
        assert_eq!(segment_islands(&leads, 1e-6), vec![3..4]);
    }

    #[test]
    fn rectangle_charge() {
        let g = grid();
        let mut n = vec![0.0; g.len()];
        n[50..71].fill(1.0 / 21.0);
        let islands = segment_islands(&n, 1e-6);
        assert_eq!(islands, vec![50..71]);
        assert_relative_eq!(induced_charges(&n, &g, &islands)[0], 1.0, max_relative = 1e-14);
        let zero = vec![0.0; g.len()];
        assert_eq!(induced_charges(&zero, &g, &islands), vec![0.0]);
    }

    #[test]
    fn gaussian_charge_matches_quadrature() {
        let g = grid();
        let bump = |x: f64| 0.3 * (-(x + 20.0).powi(2) / (2.0 * 4.0f64.powi(2))).exp();
        let n: Vec<f64> = g.iter().map(|&x| bump(x)).collect();
        let islands = vec![1..100];
        // composite Gauss-Legendre (5 nodes) over the dual cells of x_1..x_99
        let nodes = [0.0, 0.538_469_310_105_683_1, -0.538_469_310_105_683_1, 0.906_179_845_938_664, -0.906_179_845_938_664];
        let weights = [0.568_888_888_888_888_9, 0.478_628_670_499_366_5, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1, 0.236_926_885_056_189_1];
        let mut quad = 0.0;
        for c in 0..9900 {
            let (a, b) = (-59.5 + c as f64 * 0.01, -59.5 + (c + 1) as f64 * 0.01);
            for (t, w) in nodes.iter().zip(&weights) {
                quad += 0.5 * (b - a) * w * bump(0.5 * (a + b) + 0.5 * (b - a) * t);
            }
        }
        let z = induced_charges(&n, &g, &islands)[0];
        // the midpoint rule on a smooth bump spanning many widths is exponentially accurate
        assert!((z - quad).abs() < 1e-10, "{z} vs {quad}");
    }

    #[test]
    fn uniform_island_closed_form() {
        let g = grid();
        let p = PhysicsParams::default();
        let n0 = 0.2;
        let mut n = vec![0.0; g.len()];
        for v in &mut n[40..61] {
            *v = n0;
        }
        let islands = segment_islands(&n, 1e-6);
        let e = inverse_capacitance(&n, &g, &islands, &p).unwrap();
        let (len, s) = (21.0, p.sigma);
        let self_coulomb = 2.0 * (len * (len / s).asinh() - (len * len + s * s).sqrt() + s);
        let expected = (p.c_k * n0 * n0 * len + p.k0 * n0 * n0 * self_coulomb) / (n0 * len).powi(2);
        assert_relative_eq!(e[(0, 0)], expected, max_relative = 1e-8);
    }

    #[test]
    fn separated_islands_approach_point_charges() {
        let g = uniform_grid(-300.0, 300.0, 601);
        let p = PhysicsParams::default();
        let mut n = vec![0.0; g.len()];
        n[100..106].fill(0.2);
        n[495..501].fill(0.2);
        let islands = segment_islands(&n, 1e-6);
        let e = inverse_capacitance(&n, &g, &islands, &p).unwrap();
        let d = g[497] - g[102] + 0.5;
        assert!((e[(0, 1)] - p.k0 / d).abs() < 0.2 * p.k0 / d, "{} vs {}", e[(0, 1)], p.k0 / d);
        assert_eq!(e[(0, 1)], e[(1, 0)]);
        assert!(e[(0, 0)] > e[(0, 1)]);
    }

    #[test]
    fn no_interaction_gives_zero_matrix() {
        let g = grid();
        let p = PhysicsParams {
            k0: 0.0,
            c_k: 0.0,
            ..PhysicsParams::default()
        };
        let n: Vec<f64> = g.iter().map(|&x| if x.abs() < 10.0 { 0.1 } else { 0.0 }).collect();
        let islands = segment_islands(&n, 1e-6);
        let e = inverse_capacitance(&n, &g, &islands, &p).unwrap();
        assert!(e.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_island_is_rejected() {
        let g = grid();
        let n = vec![0.0; g.len()];
        assert!(matches!(
            inverse_capacitance(&n, &g, &[10..20], &PhysicsParams::default()),
            Err(Error::EmptyIsland(0))
        ));
    }

    #[test]
    fn charging_energy_examples() {
        let one = IslandModel::from_parts(vec![0.0], dmatrix![5.0]);
        assert_eq!(charging_energy(&[2], &one).unwrap(), 20.0);
        let two = IslandModel::from_parts(vec![1.0, 2.0], dmatrix![5.0, 1.0; 1.0, 5.0]);
        assert_eq!(charging_energy(&[2, 1], &two).unwrap(), 8.0);
        let at_z = IslandModel::from_parts(vec![3.0, 4.0], dmatrix![5.0, 1.0; 1.0, 5.0]);
        assert_eq!(charging_energy(&[3, 4], &at_z).unwrap(), 0.0);
        assert!(matches!(charging_energy(&[1], &two), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn ground_state_examples() {
        let m = IslandModel::from_parts(vec![0.2], dmatrix![5.0]);
        assert_eq!(ground_state_charges(&m).q, vec![0]);
        let m = IslandModel::from_parts(vec![0.5], dmatrix![5.0]);
        assert_eq!(ground_state_charges(&m).q, vec![0]);
        let m = IslandModel::from_parts(vec![1.6, 2.4], dmatrix![3.0, 0.0; 0.0, 4.0]);
        assert_eq!(ground_state_charges(&m).q, vec![2, 2]);
    }

    #[test]
    fn ground_state_shifts_with_offset() {
        let e = dmatrix![4.0, 1.5; 1.5, 3.0];
        for z in [[0.3, 2.7], [4.45, 1.2], [6.9, 6.1]] {
            let a = ground_state_charges(&IslandModel::from_parts(z.to_vec(), e.clone()));
            let b = ground_state_charges(&IslandModel::from_parts(vec![z[0] + 1.0, z[1]], e.clone()));
            assert_eq!(b.q[0], a.q[0] + 1);
            assert_eq!(b.q[1], a.q[1]);
        }
    }

    #[test]
    fn strongly_coupled_minimum_outside_initial_box() {
        // nearly singular coupling: the valley along (1, -1) is shallow
        let e = dmatrix![1.0, 0.999; 0.999, 1.0];
        let m = IslandModel::from_parts(vec![8.3, 0.2], e);
        let got = ground_state_charges(&m);
        let mut best = (f64::INFINITY, vec![]);
        for a in 0..30u32 {
            for b in 0..30u32 {
                let en = charging_energy(&[a, b], &m).unwrap();
                if en < best.0 {
                    best = (en, vec![a, b]);
                }
            }
        }
        assert_eq!(got.q, best.1);
    }
}
