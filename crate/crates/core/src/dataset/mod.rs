//! Voltage sweeps, device ensembles, training patches and file formats.

pub mod audit;
pub mod ensemble;
pub mod io;
pub mod map;
pub mod patches;
pub mod pipeline;

pub use ensemble::{generate_ensemble, EnsembleConfig, Manifest, ManifestEntry};
pub use io::{deserialize, load_map, save_map, serialize};
pub use map::{sweep_map, sweep_map_with, DeviceMap, PixelRecord};
pub use patches::{differential_conductance, sample_patches, Channel, Patch, PatchSet};
pub use pipeline::{PipelineConfig, PixelFlags, PixelSimulator};
