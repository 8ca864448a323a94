//! Plunger-voltage sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::{uniform_grid, DeviceSpec};
use crate::error::{Error, Result};
use crate::transport::StateLabel;

use super::pipeline::{PipelineConfig, PixelFlags, PixelSimulator};

/// Default plunger range in mV.
pub const DEFAULT_V_RANGE: (f64, f64) = (0.0, 400.0);

/// Observables of one pixel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelRecord {
    /// Island charges, `[0]` when there are no islands.
    pub charge: Vec<u32>,
    pub current: f64,
    pub sensor: Vec<f64>,
    pub state: StateLabel,
}

impl PixelRecord {
    pub fn total_charge(&self) -> u32 {
        self.charge.iter().sum()
    }

    /// Charges padded with zeros to two slots.
    pub fn padded_charge(&self) -> [u32; 2] {
        let mut out = [0; 2];
        for (o, &q) in out.iter_mut().zip(&self.charge) {
            *o = q;
        }
        out
    }
}

/// A square sweep over `(V_P1, V_P2)`, row-major with `V_P1` as the row.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceMap {
    pub v_p1: Vec<f64>,
    pub v_p2: Vec<f64>,
    pub records: Vec<PixelRecord>,
    pub flags: Vec<u8>,
    pub device: DeviceSpec,
    pub seed: Option<u64>,
}

impl DeviceMap {
    pub fn rows(&self) -> usize {
        self.v_p1.len()
    }

    pub fn cols(&self) -> usize {
        self.v_p2.len()
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols() + col
    }

    pub fn get(&self, row: usize, col: usize) -> &PixelRecord {
        &self.records[self.index(row, col)]
    }

    pub fn states(&self) -> Vec<StateLabel> {
        self.records.iter().map(|r| r.state).collect()
    }

    /// Pixel counts per label in class order (SC, QPC, SD, DD).
    pub fn label_counts(&self) -> [u64; 4] {
        let mut c = [0; 4];
        for r in &self.records {
            c[r.state.class_index()] += 1;
        }
        c
    }

    pub fn flagged(&self) -> usize {
        self.flags.iter().filter(|&&f| f != 0).count()
    }

    pub fn max_charge(&self) -> u32 {
        self.records
            .iter()
            .flat_map(|r| r.charge.iter().copied())
            .max()
            .unwrap_or(0)
    }

    pub fn currents(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.current).collect()
    }

    pub fn sensor_channel(&self, index: usize) -> Result<Vec<f64>> {
        self.records
            .iter()
            .map(|r| {
                r.sensor.get(index).copied().ok_or(Error::DimensionMismatch {
                    expected: index + 1,
                    got: r.sensor.len(),
                })
            })
            .collect()
    }

    /// Checks lengths and per-record shapes.
    pub fn validate_shape(&self) -> Result<()> {
        let n = self.rows() * self.cols();
        for len in [self.records.len(), self.flags.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, got: len });
            }
        }
        let sensors = self.device.physics.sensors.len();
        for r in &self.records {
            if r.charge.len() != r.state.charge_arity() {
                return Err(Error::Schema(format!(
                    "{} pixel carries {} charges",
                    r.state.short_name(),
                    r.charge.len()
                )));
            }
            if r.sensor.len() != sensors {
                return Err(Error::DimensionMismatch {
                    expected: sensors,
                    got: r.sensor.len(),
                });
            }
        }
        Ok(())
    }
}

/// Sweeps `grid_size x grid_size` evenly spaced plunger voltages over
/// `v_range` (mV) on both plungers with the default pipeline settings.
pub fn sweep_map(device: &DeviceSpec, grid_size: usize, v_range: (f64, f64)) -> Result<DeviceMap> {
    if grid_size < 2 {
        return Err(Error::param("grid_size", format!("need at least 2 points, got {grid_size}")));
    }
    if !(v_range.0.is_finite() && v_range.1.is_finite() && v_range.0 < v_range.1) {
        return Err(Error::param("v_range", format!("{v_range:?} is not an increasing range")));
    }
    let v = uniform_grid(v_range.0, v_range.1, grid_size);
    sweep_map_with(device, &v, &v, PipelineConfig::default())
}

/// Sweeps arbitrary voltage axes. Pixels run in parallel on the current
/// rayon pool and are collected in order, so results do not depend on the
/// number of workers.
pub fn sweep_map_with(device: &DeviceSpec, v_p1: &[f64], v_p2: &[f64], config: PipelineConfig) -> Result<DeviceMap> {
    let sim = PixelSimulator::new(device, config)?;
    let cols = v_p2.len();
    let (records, flags): (Vec<PixelRecord>, Vec<u8>) = (0..v_p1.len() * cols)
        .into_par_iter()
        .map(|i| {
            let (rec, PixelFlags(f)) = sim.simulate((v_p1[i / cols], v_p2[i % cols]));
            (rec, f)
        })
        .unzip();
    Ok(DeviceMap {
        v_p1: v_p1.to_vec(),
        v_p2: v_p2.to_vec(),
        records,
        flags,
        device: device.clone(),
        seed: None,
    })
}
