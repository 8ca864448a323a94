//! JSON container for device maps.
//!
//! Voltage axes and the physics record are plain JSON. Per-pixel columns
//! are little-endian binary, base64 encoded:
//!
//! | column    | type | values per pixel |
//! |-----------|------|------------------|
//! | `charge`  | u32  | 2 (zero padded)  |
//! | `current` | f64  | 1                |
//! | `sensor`  | f64  | `n_sensors`      |
//! | `state`   | i8   | 1                |
//! | `flags`   | u8   | 1                |
//!
//! Pixels are row-major with `V_P1` as the row. Writing is deterministic, so
//! equal maps give byte-identical files.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::device::{DeviceSpec, GateSpec, PhysicsParams};
use crate::error::{Error, Result};
use crate::transport::StateLabel;

use super::map::{DeviceMap, PixelRecord};

pub const SCHEMA_VERSION: u32 = 1;
pub const MAP_TYPE: &str = "qdsim.device_map";
const ORDER: &str = "row-major, V_P1 rows, V_P2 columns";

#[derive(Debug, Serialize, Deserialize)]
struct MapFile {
    schema_version: u32,
    #[serde(rename = "type")]
    kind: String,
    seed: Option<u64>,
    #[serde(rename = "V_P1_vec")]
    v_p1: Vec<f64>,
    #[serde(rename = "V_P2_vec")]
    v_p2: Vec<f64>,
    voltage_unit: String,
    output: Output,
    physics: PhysicsRecord,
}

#[derive(Debug, Serialize, Deserialize)]
struct Output {
    length: usize,
    n_sensors: usize,
    order: String,
    charge: String,
    current: String,
    sensor: String,
    state: String,
    flags: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct GatesRecord {
    alpha: Vec<f64>,
    h: Vec<f64>,
    mean: Vec<f64>,
    peak: Vec<f64>,
    rho: Vec<f64>,
    screen: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[allow(non_snake_case)]
struct PhysicsRecord {
    K_0: f64,
    sigma: f64,
    g_0: f64,
    c_k: f64,
    beta: f64,
    kT: f64,
    mu: f64,
    bias: f64,
    V_L: f64,
    V_R: f64,
    epsilon0: f64,
    WKB_coeff: f64,
    attempt_rate_coef: f64,
    barrier_tunnel_rate: f64,
    barrier_current: f64,
    short_circuit_current: f64,
    sensor_gate_coeff: f64,
    sensors: Vec<[f64; 2]>,
    gates: GatesRecord,
    x: Vec<f64>,
}

impl From<&DeviceSpec> for PhysicsRecord {
    fn from(d: &DeviceSpec) -> Self {
        let p = &d.physics;
        let col = |f: fn(&GateSpec) -> f64| d.gates.iter().map(f).collect::<Vec<_>>();
        Self {
            K_0: p.k0,
            sigma: p.sigma,
            g_0: p.g0,
            c_k: p.c_k,
            beta: p.beta,
            kT: p.kt,
            mu: p.mu,
            bias: p.bias,
            V_L: p.v_l,
            V_R: p.v_r,
            epsilon0: p.epsilon0,
            WKB_coeff: p.wkb_coeff,
            attempt_rate_coef: p.attempt_rate_coef,
            barrier_tunnel_rate: p.barrier_tunnel_rate,
            barrier_current: p.barrier_current,
            short_circuit_current: p.short_circuit_current,
            sensor_gate_coeff: p.sensor_gate_coeff,
            sensors: p.sensors.clone(),
            gates: GatesRecord {
                alpha: col(|g| g.alpha),
                h: col(|g| g.h),
                mean: col(|g| g.x0),
                peak: col(|g| g.peak),
                rho: col(|g| g.r0),
                screen: col(|g| g.screen),
            },
            x: d.grid.clone(),
        }
    }
}

impl TryFrom<PhysicsRecord> for DeviceSpec {
    type Error = Error;

    fn try_from(r: PhysicsRecord) -> Result<Self> {
        let g = &r.gates;
        let n = g.mean.len();
        for len in [g.alpha.len(), g.h.len(), g.peak.len(), g.rho.len(), g.screen.len()] {
            if len != n {
                return Err(Error::Schema(format!("gate arrays differ in length ({len} vs {n})")));
            }
        }
        let gates = (0..n)
            .map(|i| GateSpec {
                peak: g.peak[i],
                x0: g.mean[i],
                h: g.h[i],
                r0: g.rho[i],
                screen: g.screen[i],
                alpha: g.alpha[i],
            })
            .collect();
        let dev = DeviceSpec {
            gates,
            grid: r.x,
            physics: PhysicsParams {
                k0: r.K_0,
                sigma: r.sigma,
                g0: r.g_0,
                c_k: r.c_k,
                beta: r.beta,
                mu: r.mu,
                kt: r.kT,
                bias: r.bias,
                v_l: r.V_L,
                v_r: r.V_R,
                wkb_coeff: r.WKB_coeff,
                attempt_rate_coef: r.attempt_rate_coef,
                barrier_tunnel_rate: r.barrier_tunnel_rate,
                barrier_current: r.barrier_current,
                short_circuit_current: r.short_circuit_current,
                sensor_gate_coeff: r.sensor_gate_coeff,
                sensors: r.sensors,
                epsilon0: r.epsilon0,
            },
        };
        dev.validate()?;
        Ok(dev)
    }
}

fn encode<const N: usize, T>(values: impl Iterator<Item = T>, to_le: impl Fn(T) -> [u8; N]) -> String {
    let bytes: Vec<u8> = values.flat_map(to_le).collect();
    STANDARD.encode(bytes)
}

fn decode<const N: usize, T>(
    name: &str,
    text: &str,
    expected: usize,
    from_le: impl Fn([u8; N]) -> T,
) -> Result<Vec<T>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Schema(format!("column `{name}`: {e}")))?;
    if bytes.len() != expected * N {
        return Err(Error::Schema(format!(
            "column `{name}` holds {} bytes, expected {}",
            bytes.len(),
            expected * N
        )));
    }
    Ok(bytes
        .chunks_exact(N)
        .map(|c| from_le(c.try_into().expect("exact chunk")))
        .collect())
}

/// Encodes `map` as a JSON document.
pub fn serialize(map: &DeviceMap) -> Result<String> {
    map.validate_shape()?;
    let n_sensors = map.device.physics.sensors.len();
    let recs = &map.records;
    let output = Output {
        length: recs.len(),
        n_sensors,
        order: ORDER.into(),
        charge: encode(recs.iter().flat_map(|r| r.padded_charge()), u32::to_le_bytes),
        current: encode(recs.iter().map(|r| r.current), f64::to_le_bytes),
        sensor: encode(recs.iter().flat_map(|r| r.sensor.iter().copied()), f64::to_le_bytes),
        state: encode(recs.iter().map(|r| r.state.value()), i8::to_le_bytes),
        flags: encode(map.flags.iter().copied(), u8::to_le_bytes),
    };
    let file = MapFile {
        schema_version: SCHEMA_VERSION,
        kind: MAP_TYPE.into(),
        seed: map.seed,
        v_p1: map.v_p1.clone(),
        v_p2: map.v_p2.clone(),
        voltage_unit: "mV".into(),
        output,
        physics: PhysicsRecord::from(&map.device),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

/// Decodes a document written by [`serialize`].
pub fn deserialize(text: &str) -> Result<DeviceMap> {
    let head: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("malformed or truncated map file: {e}")))?;
    match head.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => {
            return Err(Error::Schema(format!(
                "schema version {v} is not supported (expected {SCHEMA_VERSION})"
            )))
        }
        None => return Err(Error::Schema("missing schema_version".into())),
    }
    let file: MapFile = serde_json::from_value(head).map_err(|e| Error::Schema(e.to_string()))?;
    if file.kind != MAP_TYPE {
        return Err(Error::Schema(format!("unexpected type `{}`", file.kind)));
    }
    if file.voltage_unit != "mV" {
        return Err(Error::Schema(format!("unsupported voltage unit `{}`", file.voltage_unit)));
    }
    let out = &file.output;
    let n = file.v_p1.len() * file.v_p2.len();
    if out.length != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: out.length,
        });
    }
    let device = DeviceSpec::try_from(file.physics)?;
    if out.n_sensors != device.physics.sensors.len() {
        return Err(Error::Schema(format!(
            "n_sensors is {} but {} sensor positions are stored",
            out.n_sensors,
            device.physics.sensors.len()
        )));
    }
    let charge = decode("charge", &out.charge, 2 * n, u32::from_le_bytes)?;
    let current = decode("current", &out.current, n, f64::from_le_bytes)?;
    let sensor = decode("sensor", &out.sensor, n * out.n_sensors, f64::from_le_bytes)?;
    let state = decode("state", &out.state, n, i8::from_le_bytes)?;
    let flags = decode("flags", &out.flags, n, u8::from_le_bytes)?;
    let records = (0..n)
        .map(|i| {
            let state = StateLabel::try_from(state[i]).map_err(|_| Error::Schema(format!("bad state {}", state[i])))?;
            let q = &charge[2 * i..2 * i + 2];
            Ok(PixelRecord {
                charge: q[..state.charge_arity()].to_vec(),
                current: current[i],
                sensor: sensor[i * out.n_sensors..(i + 1) * out.n_sensors].to_vec(),
                state,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let map = DeviceMap {
        v_p1: file.v_p1,
        v_p2: file.v_p2,
        records,
        flags,
        device,
        seed: file.seed,
    };
    map.validate_shape()?;
    Ok(map)
}

pub fn save_map(map: &DeviceMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serialize(map)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_map(path: impl AsRef<Path>) -> Result<DeviceMap> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    deserialize(&text)
}
