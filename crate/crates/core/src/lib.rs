//! Thomas-Fermi transport simulator for gate-defined quantum-dot devices.
//!
//! The pipeline for a single pair of plunger voltages is
//!
//! 1. [`device`]: gate voltages to the 1D electron potential energy `U(x)`,
//! 2. [`tf`]: self-consistent Thomas-Fermi density `n(x)`,
//! 3. [`islands`]: island segmentation, capacitance model and ground-state charges,
//! 4. [`transport`]: state label, WKB tunnel rates, charge-state Markov chain and current,
//! 5. [`sensor`]: charge-sensor response.
//!
//! [`dataset`] repeats the pipeline over a plunger-voltage grid and over sampled
//! device ensembles, and handles the on-disk map and patch formats.

pub mod config;
pub mod dataset;
pub mod device;
pub mod error;
pub mod islands;
pub mod seed;
pub mod sensor;
pub mod tf;
pub mod transport;

pub use device::{DeviceSpec, GateSpec, PhysicsParams};
pub use error::{Error, Result};
pub use islands::{ChargeState, IslandModel};
pub use tf::{DensityProfile, SolverConfig};
pub use transport::{MarkovChain, StateLabel};
