//! Labeled sub-images for classifier training.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transport::StateLabel;

use super::map::DeviceMap;

pub const DEFAULT_PATCH_SIZE: usize = 30;
pub const PATCH_SET_TYPE: &str = "qdsim.patch_set";

/// Map channel a patch is cut from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    Current,
    /// Differential conductance of the given sensor.
    SensorGradient(usize),
}

impl Channel {
    pub fn values(self, map: &DeviceMap) -> Result<Vec<f64>> {
        match self {
            Channel::Current => Ok(map.currents()),
            Channel::SensorGradient(s) => differential_conductance(map, s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub size: usize,
    /// Top-left pixel `(row, col)` in the source map.
    pub origin: (usize, usize),
    /// `size * size` values, row-major.
    #[serde(with = "f64_base64")]
    pub pixels: Vec<f64>,
    /// Label fractions in class order (SC, QPC, SD, DD).
    pub fractions: [f64; 4],
    pub majority_label: StateLabel,
}

/// Fractions of each label in class order.
pub fn state_fractions(states: &[StateLabel]) -> [f64; 4] {
    let mut counts = [0usize; 4];
    for s in states {
        counts[s.class_index()] += 1;
    }
    let total = states.len().max(1) as f64;
    counts.map(|c| c as f64 / total)
}

/// Label with the largest fraction, ties going to the lower class index.
pub fn majority_label(fractions: &[f64; 4]) -> StateLabel {
    let mut best = 0;
    for i in 1..4 {
        if fractions[i] > fractions[best] {
            best = i;
        }
    }
    StateLabel::from_class_index(best).expect("class index below 4")
}

/// Cuts the `size x size` patch at `origin` from `values` laid out like `map`.
pub fn extract_patch(map: &DeviceMap, values: &[f64], size: usize, origin: (usize, usize)) -> Result<Patch> {
    let (rows, cols) = (map.rows(), map.cols());
    if size == 0 || origin.0 + size > rows || origin.1 + size > cols {
        return Err(Error::PatchTooLarge {
            size,
            grid: rows.min(cols),
        });
    }
    let mut pixels = Vec::with_capacity(size * size);
    let mut states = Vec::with_capacity(size * size);
    for r in origin.0..origin.0 + size {
        let start = map.index(r, origin.1);
        pixels.extend_from_slice(&values[start..start + size]);
        states.extend(map.records[start..start + size].iter().map(|p| p.state));
    }
    let fractions = state_fractions(&states);
    Ok(Patch {
        size,
        origin,
        pixels,
        fractions,
        majority_label: majority_label(&fractions),
    })
}

/// `count` patches at uniformly random top-left offsets.
pub fn sample_patches(map: &DeviceMap, channel: Channel, size: usize, count: usize, seed: u64) -> Result<Vec<Patch>> {
    let (rows, cols) = (map.rows(), map.cols());
    if size == 0 || size > rows || size > cols {
        return Err(Error::PatchTooLarge {
            size,
            grid: rows.min(cols),
        });
    }
    let values = channel.values(map)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let r = rng.random_range(0..=rows - size);
            let c = rng.random_range(0..=cols - size);
            extract_patch(map, &values, size, (r, c))
        })
        .collect()
}

fn derivative(f: &[f64], v: &[f64], i: usize) -> f64 {
    let n = f.len();
    if n < 2 {
        return 0.0;
    }
    let (a, b) = match i {
        0 => (0, 1),
        i if i == n - 1 => (n - 2, n - 1),
        i => (i - 1, i + 1),
    };
    (f[b] - f[a]) / (v[b] - v[a])
}

/// Magnitude of the voltage gradient of sensor `sensor_index`, per mV.
/// Central differences inside the map and one-sided ones at the edges.
pub fn differential_conductance(map: &DeviceMap, sensor_index: usize) -> Result<Vec<f64>> {
    let g = map.sensor_channel(sensor_index)?;
    let (rows, cols) = (map.rows(), map.cols());
    let mut out = vec![0.0; rows * cols];
    let mut column = vec![0.0; rows];
    for c in 0..cols {
        for r in 0..rows {
            column[r] = g[r * cols + c];
        }
        for r in 0..rows {
            let row = &g[r * cols..(r + 1) * cols];
            let d1 = derivative(&column, &map.v_p1, r);
            let d2 = derivative(row, &map.v_p2, c);
            out[r * cols + c] = d1.hypot(d2);
        }
    }
    Ok(out)
}

/// Patch export file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSet {
    pub schema_version: u32,
    #[serde(rename = "type")]
    pub kind: String,
    pub channel: Channel,
    pub size: usize,
    /// Map file each patch was cut from, parallel to `patches`.
    pub sources: Vec<String>,
    pub patches: Vec<Patch>,
}

impl PatchSet {
    pub fn new(channel: Channel, size: usize) -> Self {
        Self {
            schema_version: super::io::SCHEMA_VERSION,
            kind: PATCH_SET_TYPE.into(),
            channel,
            size,
            sources: Vec::new(),
            patches: Vec::new(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let set: Self = serde_json::from_str(&text).map_err(|e| Error::Schema(e.to_string()))?;
        if set.schema_version != super::io::SCHEMA_VERSION || set.kind != PATCH_SET_TYPE {
            return Err(Error::Schema(format!(
                "unsupported patch file (type `{}`, version {})",
                set.kind, set.schema_version
            )));
        }
        Ok(set)
    }
}

mod f64_base64 {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        use serde::de::Error as _;
        let text = String::deserialize(d)?;
        let bytes = STANDARD.decode(text).map_err(D::Error::custom)?;
        if bytes.len() % 8 != 0 {
            return Err(D::Error::custom("pixel data is not a whole number of f64 values"));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}
