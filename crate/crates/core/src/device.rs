//! Device geometry, gate model and ensemble sampling.
//!
//! Gate `peak` values are electron potential energies in meV. A barrier gate
//! stores `+200` (a bump), and a plunger held at `+V` mV becomes a well of
//! depth `-alpha * V` meV.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gate order along the channel.
pub const GATE_NAMES: [&str; 5] = ["B1", "P1", "B2", "P2", "B3"];
/// Indices of the two plunger gates in [`DeviceSpec::gates`].
pub const PLUNGERS: [usize; 2] = [1, 3];

/// Relative standard deviation used when sampling device realizations.
pub const DEFAULT_REL_STD: f64 = 0.05;
const MAX_SAMPLING_ATTEMPTS: usize = 100;

/// One cylindrical gate above the 2DEG.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateSpec {
    /// Potential energy at the gate center before the lever arm (meV).
    pub peak: f64,
    /// Position along the channel (nm).
    pub x0: f64,
    /// Height above the 2DEG (nm).
    pub h: f64,
    /// Gate radius (nm).
    pub r0: f64,
    /// Screening length (nm).
    pub screen: f64,
    /// Lever arm.
    pub alpha: f64,
}

impl GateSpec {
    pub fn validate(&self, index: usize) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidGate { index, reason });
        let finite = [self.peak, self.x0, self.h, self.r0, self.screen, self.alpha]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return bad("non-finite parameter".into());
        }
        if self.r0 <= 0.0 {
            return bad(format!("radius {} must be positive", self.r0));
        }
        if self.h <= self.r0 {
            return bad(format!("height {} must exceed radius {}", self.h, self.r0));
        }
        if self.screen <= 0.0 {
            return bad(format!("screening length {} must be positive", self.screen));
        }
        if self.alpha <= 0.0 {
            return bad(format!("lever arm {} must be positive", self.alpha));
        }
        Ok(())
    }

    /// Profile without validation; callers check the gate once up front.
    #[inline]
    pub(crate) fn potential_unchecked(&self, x: f64) -> f64 {
        let d = x - self.x0;
        let shape = ((d * d + self.h * self.h).sqrt() / self.r0).ln() / (self.h / self.r0).ln();
        self.alpha * self.peak * shape * (-d.abs() / self.screen).exp()
    }
}

/// Potential energy (meV) produced by `gate` at channel position `x` (nm).
pub fn gate_potential(x: f64, gate: &GateSpec) -> Result<f64> {
    gate.validate(0)?;
    Ok(gate.potential_unchecked(x))
}

/// Physical constants of one device. Field units follow the stored dataset
/// dictionary: energies of the density solve and transport in eV, `K_0` in
/// meV, lengths in nm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicsParams {
    /// Coulomb interaction strength (meV).
    pub k0: f64,
    /// Softening length of the interaction (nm).
    pub sigma: f64,
    /// Density of states ((eV nm)^-1).
    pub g0: f64,
    /// Kinetic coefficient of the capacitance estimate (meV nm).
    pub c_k: f64,
    /// Inverse temperature for the density solve (1/eV).
    pub beta: f64,
    /// Lead chemical potential (eV).
    pub mu: f64,
    /// Transport temperature (eV).
    pub kt: f64,
    /// Source-drain bias (eV), equal to `v_l - v_r`.
    pub bias: f64,
    /// Left lead voltage (V).
    pub v_l: f64,
    /// Right lead voltage (V).
    pub v_r: f64,
    pub wkb_coeff: f64,
    pub attempt_rate_coef: f64,
    pub barrier_tunnel_rate: f64,
    pub barrier_current: f64,
    pub short_circuit_current: f64,
    pub sensor_gate_coeff: f64,
    /// Sensor positions `(x, y)` in nm; `y` is the offset from the channel.
    pub sensors: Vec<[f64; 2]>,
    /// Unperturbed conduction band minimum (eV).
    pub epsilon0: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            k0: 10.0,
            sigma: 2.0,
            g0: 0.5,
            c_k: 1.0,
            beta: 1000.0,
            mu: 0.1,
            kt: 50e-6,
            bias: 100e-6,
            v_l: 50e-6,
            v_r: -50e-6,
            wkb_coeff: 0.5,
            attempt_rate_coef: 1.0,
            barrier_tunnel_rate: 10.0,
            barrier_current: 1.0,
            short_circuit_current: 100.0,
            sensor_gate_coeff: 0.1,
            sensors: vec![[-20.0, 50.0], [20.0, 50.0]],
            epsilon0: 0.0,
        }
    }
}

impl PhysicsParams {
    /// Values of the stored-dataset dictionary, which differ from the
    /// defaults in `g0` and `sigma`.
    pub fn table_dataset() -> Self {
        Self {
            g0: 1.0,
            sigma: 3.0,
            ..Self::default()
        }
    }

    /// Sets the bias and splits it symmetrically across the leads.
    pub fn with_bias(mut self, bias: f64) -> Self {
        self.bias = bias;
        self.v_l = bias / 2.0;
        self.v_r = -bias / 2.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let scalars = [
            ("K_0", self.k0),
            ("sigma", self.sigma),
            ("g_0", self.g0),
            ("c_k", self.c_k),
            ("beta", self.beta),
            ("mu", self.mu),
            ("kT", self.kt),
            ("bias", self.bias),
            ("V_L", self.v_l),
            ("V_R", self.v_r),
            ("WKB_coeff", self.wkb_coeff),
            ("attempt_rate_coef", self.attempt_rate_coef),
            ("barrier_tunnel_rate", self.barrier_tunnel_rate),
            ("barrier_current", self.barrier_current),
            ("short_circuit_current", self.short_circuit_current),
            ("sensor_gate_coeff", self.sensor_gate_coeff),
            ("epsilon0", self.epsilon0),
        ];
        for (name, v) in scalars {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        for (name, v) in [("beta", self.beta), ("kT", self.kt), ("mu", self.mu), ("sigma", self.sigma)] {
            if v <= 0.0 {
                return Err(Error::param(name, format!("{v} must be positive")));
            }
        }
        if self.k0 < 0.0 {
            return Err(Error::param("K_0", "must be non-negative"));
        }
        let split = self.v_l - self.v_r;
        if (split - self.bias).abs() > 1e-9 * self.bias.abs().max(1e-12) {
            return Err(Error::param(
                "bias",
                format!("{} differs from V_L - V_R = {}", self.bias, split),
            ));
        }
        for (i, s) in self.sensors.iter().enumerate() {
            if !s[0].is_finite() || !s[1].is_finite() || s[1] == 0.0 {
                return Err(Error::SensorOnChannel(i));
            }
        }
        Ok(())
    }
}

/// Uniform grid of `points` samples from `start` to `stop` inclusive.
pub fn uniform_grid(start: f64, stop: f64, points: usize) -> Vec<f64> {
    let step = (stop - start) / (points - 1) as f64;
    (0..points).map(|i| start + step * i as f64).collect()
}

/// Geometry, gates and physics constants of one device realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    /// B1, P1, B2, P2, B3 in channel order.
    pub gates: Vec<GateSpec>,
    /// Channel sample points (nm).
    pub grid: Vec<f64>,
    pub physics: PhysicsParams,
}

impl Default for DeviceSpec {
    /// The mean five-gate device on a 1 nm grid over (-60, 60) nm.
    fn default() -> Self {
        let gate = |peak, x0| GateSpec {
            peak,
            x0,
            h: 50.0,
            r0: 5.0,
            screen: 20.0,
            alpha: 1.0,
        };
        Self {
            gates: vec![
                gate(200.0, -40.0),
                gate(-400.0, -20.0),
                gate(200.0, 0.0),
                gate(-400.0, 20.0),
                gate(200.0, 40.0),
            ],
            grid: uniform_grid(-60.0, 60.0, 121),
            physics: PhysicsParams::default(),
        }
    }
}

impl DeviceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gates.len() != GATE_NAMES.len() {
            return Err(Error::InvalidDevice(format!(
                "expected {} gates, got {}",
                GATE_NAMES.len(),
                self.gates.len()
            )));
        }
        for (i, g) in self.gates.iter().enumerate() {
            g.validate(i)?;
        }
        if self.gates.windows(2).any(|w| w[0].x0 >= w[1].x0) {
            return Err(Error::InvalidDevice("gates must be ordered by position".into()));
        }
        let grid = &self.grid;
        if grid.len() < 3 || grid.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidDevice("grid needs at least 3 finite points".into()));
        }
        let step = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
        if step <= 0.0 {
            return Err(Error::InvalidDevice("grid must be increasing".into()));
        }
        for w in grid.windows(2) {
            let d = w[1] - w[0];
            if d <= 0.0 || (d - step).abs() > 1e-9 * step {
                return Err(Error::InvalidDevice("grid must be strictly increasing and uniform".into()));
            }
        }
        let (lo, hi) = (grid[0], grid[grid.len() - 1]);
        if self.gates.iter().any(|g| g.x0 < lo || g.x0 > hi) {
            return Err(Error::InvalidDevice("grid does not cover every gate".into()));
        }
        self.physics.validate()
    }

    /// Gates with the plunger peaks set from applied voltages in mV.
    pub fn gates_at(&self, plungers: (f64, f64)) -> Vec<GateSpec> {
        let mut gates = self.gates.clone();
        gates[PLUNGERS[0]].peak = -plungers.0;
        gates[PLUNGERS[1]].peak = -plungers.1;
        gates
    }

    pub fn grid_step(&self) -> f64 {
        (self.grid[self.grid.len() - 1] - self.grid[0]) / (self.grid.len() - 1) as f64
    }
}

/// Electron potential energy (meV) on the device grid for plunger voltages
/// `(V_P1, V_P2)` in mV.
pub fn total_potential(spec: &DeviceSpec, plungers: (f64, f64)) -> Result<Vec<f64>> {
    for (i, g) in spec.gates.iter().enumerate() {
        g.validate(i)?;
    }
    if !plungers.0.is_finite() || !plungers.1.is_finite() {
        return Err(Error::param("plunger_voltages", "must be finite"));
    }
    Ok(potential_profile(&spec.gates_at(plungers), &spec.grid))
}

pub(crate) fn potential_profile(gates: &[GateSpec], grid: &[f64]) -> Vec<f64> {
    grid.iter()
        .map(|&x| gates.iter().map(|g| g.potential_unchecked(x)).sum())
        .collect()
}

/// Draws one device realization around `mean` with the default 5% spread.
pub fn sample_device(mean: &DeviceSpec, seed: u64) -> Result<DeviceSpec> {
    sample_device_with(mean, seed, DEFAULT_REL_STD)
}

/// Draws each varied parameter from `N(m, rel_std * |m|)`.
///
/// Varied: `K_0`, `g_0`, `c_k`, each gate position and peak, and the lever
/// arm, height, radius and screening length shared by all gates. Everything
/// else is copied. Draws violating an invariant are redrawn, up to 100 times.
pub fn sample_device_with(mean: &DeviceSpec, seed: u64, rel_std: f64) -> Result<DeviceSpec> {
    mean.validate()?;
    if !(rel_std >= 0.0 && rel_std.is_finite()) {
        return Err(Error::param("rel_std", "must be finite and non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |m: f64| -> f64 {
        let sd = rel_std * m.abs();
        if sd == 0.0 {
            return m;
        }
        // sd > 0 and finite, so construction cannot fail
        Normal::new(m, sd).expect("valid normal").sample(&mut rng)
    };
    for _ in 0..MAX_SAMPLING_ATTEMPTS {
        let mut dev = mean.clone();
        let p = &mut dev.physics;
        p.k0 = draw(p.k0);
        p.g0 = draw(p.g0);
        p.c_k = draw(p.c_k);
        let g0 = mean.gates[0];
        let (alpha, h, r0, screen) = (draw(g0.alpha), draw(g0.h), draw(g0.r0), draw(g0.screen));
        for (g, m) in dev.gates.iter_mut().zip(&mean.gates) {
            g.x0 = draw(m.x0);
            g.peak = draw(m.peak);
            g.alpha = alpha;
            g.h = h;
            g.r0 = r0;
            g.screen = screen;
        }
        if dev.validate().is_ok() && dev.physics.g0 > 0.0 && dev.physics.c_k >= 0.0 {
            return Ok(dev);
        }
    }
    Err(Error::SamplingExhausted(MAX_SAMPLING_ATTEMPTS))
}
