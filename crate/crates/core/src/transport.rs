//! State classification, WKB tunnel rates and sequential-tunneling current.
//!
//! Barriers are numbered from the left lead: barrier `0` separates the left
//! lead from island `0`, barrier `i` separates islands `i - 1` and `i`, and
//! barrier `k` separates the last island from the right lead. A transition
//! moves one electron across one barrier, rightwards (`+1`) or leftwards
//! (`-1`).

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::device::PhysicsParams;
use crate::error::{Error, Result};
use crate::islands::{charging_energy_signed, ChargeState, IslandModel};

/// Device state. The discriminant is the stored integer label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
#[repr(i8)]
pub enum StateLabel {
    ShortCircuit = -1,
    /// No islands: pinched-off channel or point contact.
    Barrier = 0,
    SingleDot = 1,
    DoubleDot = 2,
}

impl StateLabel {
    pub const ALL: [StateLabel; 4] = [
        StateLabel::ShortCircuit,
        StateLabel::Barrier,
        StateLabel::SingleDot,
        StateLabel::DoubleDot,
    ];

    pub fn value(self) -> i8 {
        self as i8
    }

    /// Position in the `[SC, QPC, SD, DD]` fraction vector.
    pub fn class_index(self) -> usize {
        (self as i8 + 1) as usize
    }

    pub fn from_class_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn short_name(self) -> &'static str {
        match self {
            StateLabel::ShortCircuit => "SC",
            StateLabel::Barrier => "QPC",
            StateLabel::SingleDot => "SD",
            StateLabel::DoubleDot => "DD",
        }
    }

    /// Number of charge entries stored for this state.
    pub fn charge_arity(self) -> usize {
        match self {
            StateLabel::DoubleDot => 2,
            _ => 1,
        }
    }
}

impl From<StateLabel> for i8 {
    fn from(s: StateLabel) -> i8 {
        s as i8
    }
}

impl TryFrom<i8> for StateLabel {
    type Error = Error;

    fn try_from(v: i8) -> Result<Self> {
        match v {
            -1 => Ok(StateLabel::ShortCircuit),
            0 => Ok(StateLabel::Barrier),
            1 => Ok(StateLabel::SingleDot),
            2 => Ok(StateLabel::DoubleDot),
            other => Err(Error::Schema(format!("unknown state label {other}"))),
        }
    }
}

/// Short circuit when the band minimum stays below `mu` along the whole
/// channel, otherwise the island count.
pub fn classify_state(islands: &[Range<usize>], band_min: &[f64], params: &PhysicsParams) -> Result<StateLabel> {
    let top = band_min.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top < params.mu {
        return Ok(StateLabel::ShortCircuit);
    }
    match islands.len() {
        0 => Ok(StateLabel::Barrier),
        1 => Ok(StateLabel::SingleDot),
        2 => Ok(StateLabel::DoubleDot),
        k => Err(Error::TooManyIslands(k)),
    }
}

/// `attempt_rate_coef * exp(-WKB_coeff * ∫ sqrt(eps - mu) dx)` over the
/// points of `band_min` (eV) at positions `x` (nm). Only the part above
/// `mu` contributes; an empty barrier is transparent.
pub fn wkb_rate(band_min: &[f64], x: &[f64], params: &PhysicsParams) -> f64 {
    let action: f64 = band_min
        .windows(2)
        .zip(x.windows(2))
        .map(|(e, x)| {
            let f0 = (e[0] - params.mu).max(0.0).sqrt();
            let f1 = (e[1] - params.mu).max(0.0).sqrt();
            0.5 * (f0 + f1) * (x[1] - x[0])
        })
        .sum();
    params.attempt_rate_coef * (-params.wkb_coeff * action).exp()
}

/// Grid ranges of the `k + 1` tunnel barriers around `k` islands.
pub fn barrier_segments(islands: &[Range<usize>], grid_len: usize) -> Vec<Range<usize>> {
    let Some(first) = islands.first() else {
        return vec![0..grid_len];
    };
    let mut out = vec![0..first.start + 1];
    for w in islands.windows(2) {
        out.push(w[0].end - 1..w[1].start + 1);
    }
    let last = islands.last().expect("non-empty");
    out.push(last.end - 1..grid_len);
    out
}

/// Tunnel rates of every barrier for a density profile.
pub fn barrier_rates(islands: &[Range<usize>], band_min: &[f64], grid: &[f64], params: &PhysicsParams) -> Vec<f64> {
    barrier_segments(islands, grid.len())
        .into_iter()
        .map(|r| wkb_rate(&band_min[r.clone()], &grid[r], params))
        .collect()
}

/// Thermal acceptance `1 / (1 + exp(dE / kT))`.
#[inline]
pub fn thermal_factor(delta: f64, kt: f64) -> f64 {
    let a = delta / kt;
    if a > 0.0 {
        let t = (-a).exp();
        t / (1.0 + t)
    } else {
        1.0 / (1.0 + a.exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub barrier: usize,
    /// `+1` for an electron moving right, `-1` for left.
    pub direction: i8,
    pub rate: f64,
}

/// Continuous-time chain over island charge states.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    pub states: Vec<Vec<u32>>,
    /// `generator[(a, b)]` is the rate `a -> b`; rows sum to zero.
    pub generator: DMatrix<f64>,
    pub transitions: Vec<Transition>,
    pub n_barriers: usize,
}

impl MarkovChain {
    /// Chain over `Q_i ∈ {g_i - 1, g_i, g_i + 1} ∩ [0, ∞)` around `ground`.
    ///
    /// `rates` holds one tunnel rate per barrier. The left and right leads
    /// sit at `mu + bias/2` and `mu - bias/2`.
    pub fn from_rates(ground: &[u32], model: &IslandModel, rates: &[f64], params: &PhysicsParams) -> Result<Self> {
        let k = ground.len();
        if model.len() != k {
            return Err(Error::DimensionMismatch {
                expected: model.len(),
                got: k,
            });
        }
        if rates.len() != k + 1 {
            return Err(Error::DimensionMismatch {
                expected: k + 1,
                got: rates.len(),
            });
        }
        let mut states: Vec<Vec<i64>> = vec![vec![]];
        for &g in ground {
            let g = g as i64;
            states = states
                .into_iter()
                .flat_map(|s| {
                    (g - 1..=g + 1).filter(|&v| v >= 0).map(move |v| {
                        let mut t = s.clone();
                        t.push(v);
                        t
                    })
                })
                .collect();
        }
        let index = |q: &[i64]| states.iter().position(|s| s.as_slice() == q);
        let energies: Vec<f64> = states.iter().map(|q| charging_energy_signed(q, model)).collect();
        let kt = params.kt * 1e3;
        let half_bias = 0.5 * params.bias * 1e3;

        let mut transitions = Vec::new();
        for (a, q) in states.iter().enumerate() {
            for barrier in 0..=k {
                // electron crossing `barrier` rightwards
                let mut target = q.clone();
                let mut lead_shift = 0.0;
                if barrier > 0 {
                    target[barrier - 1] -= 1;
                } else {
                    lead_shift -= half_bias;
                }
                if barrier < k {
                    target[barrier] += 1;
                } else {
                    lead_shift -= half_bias;
                }
                for (direction, shift) in [(1i8, lead_shift), (-1i8, -lead_shift)] {
                    let dest: Vec<i64> = if direction == 1 {
                        target.clone()
                    } else {
                        q.iter().zip(&target).map(|(s, t)| 2 * s - t).collect()
                    };
                    if let Some(b) = index(&dest) {
                        let delta = energies[b] - energies[a] + shift;
                        transitions.push(Transition {
                            from: a,
                            to: b,
                            barrier,
                            direction,
                            rate: rates[barrier] * thermal_factor(delta, kt),
                        });
                    }
                }
            }
        }
        let n = states.len();
        let mut generator = DMatrix::zeros(n, n);
        for t in &transitions {
            generator[(t.from, t.to)] += t.rate;
            generator[(t.from, t.from)] -= t.rate;
        }
        Ok(Self {
            states: states.into_iter().map(|s| s.into_iter().map(|v| v as u32).collect()).collect(),
            generator,
            transitions,
            n_barriers: k + 1,
        })
    }

    /// Net rightward electron flow through `barrier` under distribution `pi`.
    pub fn barrier_current(&self, pi: &[f64], barrier: usize) -> f64 {
        self.transitions
            .iter()
            .filter(|t| t.barrier == barrier)
            .map(|t| t.direction as f64 * pi[t.from] * t.rate)
            .sum()
    }

    /// Total probability flow through `barrier` in both directions.
    pub fn barrier_traffic(&self, pi: &[f64], barrier: usize) -> f64 {
        self.transitions
            .iter()
            .filter(|t| t.barrier == barrier)
            .map(|t| pi[t.from] * t.rate)
            .sum()
    }

    /// Steady-state current. Every barrier carries the same net flow, so it
    /// is read at the barrier with the least traffic, where the two
    /// directions cancel least.
    pub fn steady_current(&self, pi: &[f64]) -> f64 {
        let bottleneck = (0..self.n_barriers)
            .min_by(|&a, &b| {
                self.barrier_traffic(pi, a)
                    .total_cmp(&self.barrier_traffic(pi, b))
                    .then(a.cmp(&b))
            })
            .unwrap_or(0);
        self.barrier_current(pi, bottleneck)
    }
}

/// Builds the chain around `ground` with WKB rates read off `band_min`.
pub fn build_markov_chain(
    ground: &ChargeState,
    model: &IslandModel,
    band_min: &[f64],
    grid: &[f64],
    params: &PhysicsParams,
) -> Result<MarkovChain> {
    if model.is_empty() {
        return Err(Error::DimensionMismatch { expected: 1, got: 0 });
    }
    let rates = barrier_rates(&model.islands, band_min, grid, params);
    MarkovChain::from_rates(&ground.q, model, &rates, params)
}

/// Stationary distribution by Grassmann-Taksar-Heyman state reduction,
/// which involves no subtractions and stays accurate when rates span many
/// orders of magnitude.
///
/// The state with the smallest exit rate is kept as the reference and
/// reduced last, so that underflowing rates of unlikely states do not cut
/// it off from the rest of the chain.
pub fn stationary_distribution(chain: &MarkovChain) -> Result<Vec<f64>> {
    let n = chain.states.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let g = &chain.generator;
    let reference = (0..n)
        .min_by(|&a, &b| (-g[(a, a)]).total_cmp(&-g[(b, b)]).then(a.cmp(&b)))
        .expect("non-empty chain");
    // order[new] = old
    let order: Vec<usize> = std::iter::once(reference).chain((0..n).filter(|&i| i != reference)).collect();
    let mut p = DMatrix::from_fn(n, n, |i, j| g[(order[i], order[j])]);
    for k in (1..n).rev() {
        let s: f64 = (0..k).map(|j| p[(k, j)]).sum();
        if !(s > 0.0) {
            return Err(Error::ReducibleChain(order[k]));
        }
        for i in 0..k {
            p[(i, k)] /= s;
        }
        for i in 0..k {
            let pik = p[(i, k)];
            if pik == 0.0 {
                continue;
            }
            for j in 0..k {
                if j != i {
                    p[(i, j)] += pik * p[(k, j)];
                }
            }
        }
    }
    // weights relative to the reference can still overflow; rescaling by a
    // power of two is exact
    const LARGE: f64 = 1e200;
    let shrink = 2f64.powi(-700);
    let mut w = vec![0.0; n];
    w[0] = 1.0;
    for k in 1..n {
        let mut v: f64 = (0..k).map(|i| w[i] * p[(i, k)]).sum();
        while v.is_infinite() {
            w[..k].iter_mut().for_each(|x| *x *= shrink);
            v = (0..k).map(|i| w[i] * p[(i, k)]).sum();
        }
        w[k] = v;
        if v > LARGE {
            w[..=k].iter_mut().for_each(|x| *x *= shrink);
        }
    }
    let total: f64 = w.iter().sum();
    let mut pi = vec![0.0; n];
    for (new, &old) in order.iter().enumerate() {
        pi[old] = w[new] / total;
    }
    Ok(pi)
}

/// Device current in arbitrary units, positive for electrons entering
/// from the left lead.
///
/// Short circuit gives `short_circuit_current` and a channel without
/// islands gives `barrier_current * barrier_tunnel_rate * wkb_rate(channel)`;
/// both carry the sign of the bias. With islands the current is the net
/// steady-state probability flow through the device.
pub fn compute_current(
    label: StateLabel,
    chain: Option<(&MarkovChain, &[f64])>,
    band_min: &[f64],
    grid: &[f64],
    params: &PhysicsParams,
) -> f64 {
    let sign = if params.bias > 0.0 {
        1.0
    } else if params.bias < 0.0 {
        -1.0
    } else {
        0.0
    };
    match (label, chain) {
        (StateLabel::ShortCircuit, _) => sign * params.short_circuit_current,
        (StateLabel::Barrier, _) => {
            sign * params.barrier_current * params.barrier_tunnel_rate * wkb_rate(band_min, grid, params)
        }
        (_, Some((chain, pi))) => chain.steady_current(pi),
        (_, None) => 0.0,
    }
}
