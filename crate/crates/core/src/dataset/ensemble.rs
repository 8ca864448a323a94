//! Ensembles of sampled devices written to disk.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::device::{sample_device, DeviceSpec};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

use super::io::save_map;
use super::map::{sweep_map_with, DeviceMap, DEFAULT_V_RANGE};
use super::pipeline::PipelineConfig;
use crate::device::uniform_grid;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_TYPE: &str = "qdsim.ensemble_manifest";

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub count: usize,
    pub seed: u64,
    pub grid_size: usize,
    /// Plunger range in mV, shared by both plungers.
    pub v_range: (f64, f64),
    pub pipeline: PipelineConfig,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            count: 1,
            seed: 0,
            grid_size: 100,
            v_range: DEFAULT_V_RANGE,
            pipeline: PipelineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub seed: u64,
    pub file: String,
    /// Pixel counts in class order (SC, QPC, SD, DD).
    pub label_counts: [u64; 4],
    pub flagged_pixels: usize,
    pub max_charge: u32,
}

/// Index of an ensemble directory. Holds no timings or host details so that
/// reruns reproduce it byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    #[serde(rename = "type")]
    pub kind: String,
    pub seed: u64,
    pub count: usize,
    pub grid_size: usize,
    pub v_range: (f64, f64),
    /// False when generation stopped early on an error.
    pub complete: bool,
    pub devices: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn label_totals(&self) -> [u64; 4] {
        let mut t = [0; 4];
        for e in &self.devices {
            for (a, b) in t.iter_mut().zip(e.label_counts) {
                *a += b;
            }
        }
        t
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

pub fn device_file_name(index: usize) -> String {
    format!("device_{index:05}.json")
}

/// Simulates one sampled device of the ensemble.
pub fn simulate_member(mean: &DeviceSpec, cfg: &EnsembleConfig, index: usize) -> Result<DeviceMap> {
    let seed = derive_seed(cfg.seed, index as u64);
    let device = sample_device(mean, seed)?;
    let v = uniform_grid(cfg.v_range.0, cfg.v_range.1, cfg.grid_size);
    let mut map = sweep_map_with(&device, &v, &v, cfg.pipeline)?;
    map.seed = Some(seed);
    Ok(map)
}

/// Samples `cfg.count` devices around `mean`, sweeps each one and writes one
/// map file per device plus a manifest into `out_dir`. Device `i` uses seed
/// `derive_seed(cfg.seed, i)`, so output does not depend on scheduling. On
/// an I/O error the manifest written so far is kept, marked incomplete.
pub fn generate_ensemble(mean: &DeviceSpec, cfg: &EnsembleConfig, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir: PathBuf = out_dir.as_ref().to_path_buf();
    if cfg.grid_size < 2 {
        return Err(Error::param("grid_size", format!("need at least 2 points, got {}", cfg.grid_size)));
    }
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut manifest = Manifest {
        schema_version: super::io::SCHEMA_VERSION,
        kind: MANIFEST_TYPE.into(),
        seed: cfg.seed,
        count: cfg.count,
        grid_size: cfg.grid_size,
        v_range: cfg.v_range,
        complete: false,
        devices: Vec::with_capacity(cfg.count),
    };
    for index in 0..cfg.count {
        let map = simulate_member(mean, cfg, index)?;
        let file = device_file_name(index);
        if let Err(e) = save_map(&map, dir.join(&file)) {
            // best effort: the original error is the one worth reporting
            let _ = manifest.write(&dir);
            return Err(e);
        }
        log::info!("device {index}: labels {:?}, flagged {}", map.label_counts(), map.flagged());
        manifest.devices.push(ManifestEntry {
            index,
            seed: map.seed.expect("set by simulate_member"),
            file,
            label_counts: map.label_counts(),
            flagged_pixels: map.flagged(),
            max_charge: map.max_charge(),
        });
    }
    manifest.complete = true;
    manifest.write(&dir)?;
    Ok(manifest)
}
