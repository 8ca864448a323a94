//! Plain-text `key = value` device configuration.
//!
//! ```text
//! # mean five-gate device
//! K_0 = 10.0
//! sigma = 2.0
//! kT = 5e-5
//! sensors = (-20, 50), (20, 50)
//! gates.mean = -40, -20, 0, 20, 40
//! gates.peak = 200, -400, 200, -400, 200
//! gates.h = 50
//! ```
//!
//! Keys use the stored-dataset names. `gates.*` take either one value shared
//! by all five gates or five values in channel order. Optional extras are
//! `V_L`, `V_R`, `epsilon0` and `x = start, stop, points`. Missing keys keep
//! the [`DeviceSpec::default`] value; unknown keys are rejected. When only
//! `bias` is given the lead voltages are set to `+bias/2` and `-bias/2`.

use std::fmt::Write as _;
use std::path::Path;

use crate::device::{uniform_grid, DeviceSpec};
use crate::error::{Error, Result};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "QDSIM_CONFIG";

pub fn load_config(path: impl AsRef<Path>) -> Result<DeviceSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

fn numbers(line: usize, value: &str) -> Result<Vec<f64>> {
    value
        .split(|c: char| c == ',' || c == '(' || c == ')' || c == '[' || c == ']' || c == ';' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>().map_err(|_| Error::Config {
                line,
                reason: format!("`{t}` is not a number"),
            })
        })
        .collect()
}

pub fn parse_config(text: &str) -> Result<DeviceSpec> {
    let mut dev = DeviceSpec::default();
    let mut saw_bias = false;
    let mut saw_leads = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            reason: "expected `key = value`".into(),
        })?;
        let key = key.trim();
        let nums = numbers(line, value)?;
        let scalar = || -> Result<f64> {
            match nums.as_slice() {
                [v] => Ok(*v),
                _ => Err(Error::Config {
                    line,
                    reason: format!("`{key}` takes one value"),
                }),
            }
        };
        let p = &mut dev.physics;
        match key {
            "K_0" => p.k0 = scalar()?,
            "sigma" => p.sigma = scalar()?,
            "g_0" => p.g0 = scalar()?,
            "c_k" => p.c_k = scalar()?,
            "beta" => p.beta = scalar()?,
            "kT" => p.kt = scalar()?,
            "mu" => p.mu = scalar()?,
            "bias" => {
                p.bias = scalar()?;
                saw_bias = true;
            }
            "V_L" => {
                p.v_l = scalar()?;
                saw_leads = true;
            }
            "V_R" => {
                p.v_r = scalar()?;
                saw_leads = true;
            }
            "epsilon0" => p.epsilon0 = scalar()?,
            "WKB_coeff" => p.wkb_coeff = scalar()?,
            "attempt_rate_coef" => p.attempt_rate_coef = scalar()?,
            "barrier_tunnel_rate" => p.barrier_tunnel_rate = scalar()?,
            "barrier_current" => p.barrier_current = scalar()?,
            "short_circuit_current" => p.short_circuit_current = scalar()?,
            "sensor_gate_coeff" => p.sensor_gate_coeff = scalar()?,
            "sensors" => {
                if nums.is_empty() || nums.len() % 2 != 0 {
                    return Err(Error::Config {
                        line,
                        reason: "sensors need (x, y) pairs".into(),
                    });
                }
                p.sensors = nums.chunks(2).map(|c| [c[0], c[1]]).collect();
            }
            "x" => match nums.as_slice() {
                [start, stop, points] if *points >= 3.0 && points.fract() == 0.0 => {
                    dev.grid = uniform_grid(*start, *stop, *points as usize);
                }
                _ => {
                    return Err(Error::Config {
                        line,
                        reason: "x takes `start, stop, points`".into(),
                    })
                }
            },
            k if k.starts_with("gates.") => {
                let n = dev.gates.len();
                let values = match nums.len() {
                    1 => vec![nums[0]; n],
                    m if m == n => nums.clone(),
                    _ => {
                        return Err(Error::Config {
                            line,
                            reason: format!("`{k}` takes 1 or {n} values"),
                        })
                    }
                };
                for (g, v) in dev.gates.iter_mut().zip(values) {
                    match &k[6..] {
                        "alpha" => g.alpha = v,
                        "h" => g.h = v,
                        "mean" => g.x0 = v,
                        "peak" => g.peak = v,
                        "rho" => g.r0 = v,
                        "screen" => g.screen = v,
                        other => {
                            return Err(Error::Config {
                                line,
                                reason: format!("unknown gate key `{other}`"),
                            })
                        }
                    }
                }
            }
            other => {
                return Err(Error::Config {
                    line,
                    reason: format!("unknown key `{other}`"),
                })
            }
        }
    }
    if saw_bias && !saw_leads {
        let bias = dev.physics.bias;
        dev.physics = dev.physics.with_bias(bias);
    }
    dev.validate()?;
    Ok(dev)
}

/// Writes `dev` in the format read by [`parse_config`].
pub fn to_config_string(dev: &DeviceSpec) -> String {
    let p = &dev.physics;
    let mut s = String::new();
    let scalars = [
        ("K_0", p.k0),
        ("sigma", p.sigma),
        ("g_0", p.g0),
        ("c_k", p.c_k),
        ("beta", p.beta),
        ("kT", p.kt),
        ("mu", p.mu),
        ("bias", p.bias),
        ("V_L", p.v_l),
        ("V_R", p.v_r),
        ("epsilon0", p.epsilon0),
        ("WKB_coeff", p.wkb_coeff),
        ("attempt_rate_coef", p.attempt_rate_coef),
        ("barrier_tunnel_rate", p.barrier_tunnel_rate),
        ("barrier_current", p.barrier_current),
        ("short_circuit_current", p.short_circuit_current),
        ("sensor_gate_coeff", p.sensor_gate_coeff),
    ];
    for (k, v) in scalars {
        let _ = writeln!(s, "{k} = {v:?}");
    }
    let sensors: Vec<String> = p.sensors.iter().map(|[x, y]| format!("({x:?}, {y:?})")).collect();
    let _ = writeln!(s, "sensors = {}", sensors.join(", "));
    let n = dev.grid.len();
    let _ = writeln!(s, "x = {:?}, {:?}, {n}", dev.grid[0], dev.grid[n - 1]);
    let gate_keys: [(&str, fn(&crate::device::GateSpec) -> f64); 6] = [
        ("alpha", |g| g.alpha),
        ("h", |g| g.h),
        ("mean", |g| g.x0),
        ("peak", |g| g.peak),
        ("rho", |g| g.r0),
        ("screen", |g| g.screen),
    ];
    for (k, get) in gate_keys {
        let vals: Vec<String> = dev.gates.iter().map(|g| format!("{:?}", get(g))).collect();
        let _ = writeln!(s, "gates.{k} = {}", vals.join(", "));
    }
    s
}
