//! Per-pixel simulation: potential, density, islands, charges, current, sensor.

use serde::{Deserialize, Serialize};

use crate::device::DeviceSpec;
use crate::error::Result;
use crate::islands::{ground_state_charges, ChargeState, IslandModel, DEFAULT_ISLAND_THRESHOLD};
use crate::sensor::sensor_response;
use crate::tf::{DensityProfile, SolverConfig, TfSolver};
use crate::transport::{build_markov_chain, classify_state, compute_current, stationary_distribution, MarkovChain, StateLabel};

use super::map::PixelRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub solver: SolverConfig,
    pub island_threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            island_threshold: DEFAULT_ISLAND_THRESHOLD,
        }
    }
}

/// Diagnostic bits attached to a pixel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct PixelFlags(pub u8);

impl PixelFlags {
    pub const NOT_CONVERGED: u8 = 1;
    pub const NOT_POSITIVE_DEFINITE: u8 = 2;
    pub const LABEL_ERROR: u8 = 4;
    pub const CHAIN_ERROR: u8 = 8;

    pub fn contains(self, bit: u8) -> bool {
        self.0 & bit != 0
    }

    pub fn is_clean(self) -> bool {
        self.0 == 0
    }
}

/// Every intermediate of one pixel.
#[derive(Debug, Clone)]
pub struct PixelDetail {
    pub potential: Vec<f64>,
    pub density: DensityProfile,
    pub model: Option<IslandModel>,
    pub ground: Option<ChargeState>,
    pub chain: Option<(MarkovChain, Vec<f64>)>,
    pub record: PixelRecord,
    pub flags: PixelFlags,
}

/// Runs the pixel pipeline for one device.
#[derive(Debug, Clone)]
pub struct PixelSimulator {
    device: DeviceSpec,
    solver: TfSolver,
    config: PipelineConfig,
}

impl PixelSimulator {
    pub fn new(device: &DeviceSpec, config: PipelineConfig) -> Result<Self> {
        device.validate()?;
        config.solver.validate()?;
        Ok(Self {
            device: device.clone(),
            solver: TfSolver::new(&device.grid, &device.physics),
            config,
        })
    }

    pub fn device(&self) -> &DeviceSpec {
        &self.device
    }

    pub fn simulate(&self, plungers: (f64, f64)) -> (PixelRecord, PixelFlags) {
        let d = self.simulate_detailed(plungers);
        (d.record, d.flags)
    }

    pub fn simulate_detailed(&self, plungers: (f64, f64)) -> PixelDetail {
        let dev = &self.device;
        let params = &dev.physics;
        let gates = dev.gates_at(plungers);
        let potential = crate::device::potential_profile(&gates, &dev.grid);
        // the solver only fails on config or length errors, both checked in `new`
        let density = self
            .solver
            .solve(&potential, &self.config.solver)
            .expect("validated solver inputs");
        let mut flags = 0u8;
        if !density.converged {
            flags |= PixelFlags::NOT_CONVERGED;
        }
        let sensor_of = |q: &[u32], dots: &[f64], flags: &mut u8| match sensor_response(q, dots, &gates, params) {
            Ok(s) => s.values,
            Err(_) => {
                *flags |= PixelFlags::LABEL_ERROR;
                vec![f64::NAN; params.sensors.len()]
            }
        };

        let model = IslandModel::from_density(&density.n, &dev.grid, params, self.config.island_threshold).ok();
        let label = model
            .as_ref()
            .and_then(|m| classify_state(&m.islands, &density.band_min, params).ok());
        let (label, model) = match (label, model) {
            (Some(label), Some(model)) => (label, model),
            (_, model) => {
                flags |= PixelFlags::LABEL_ERROR;
                let sensor = sensor_of(&[], &[], &mut flags);
                return PixelDetail {
                    potential,
                    density,
                    model,
                    ground: None,
                    chain: None,
                    record: PixelRecord {
                        charge: vec![0],
                        current: 0.0,
                        sensor,
                        state: StateLabel::Barrier,
                    },
                    flags: PixelFlags(flags),
                };
            }
        };

        if matches!(label, StateLabel::ShortCircuit | StateLabel::Barrier) {
            let current = compute_current(label, None, &density.band_min, &dev.grid, params);
            let sensor = sensor_of(&[], &[], &mut flags);
            return PixelDetail {
                potential,
                density,
                model: Some(model),
                ground: None,
                chain: None,
                record: PixelRecord {
                    charge: vec![0],
                    current,
                    sensor,
                    state: label,
                },
                flags: PixelFlags(flags),
            };
        }

        if !model.is_positive_definite() {
            flags |= PixelFlags::NOT_POSITIVE_DEFINITE;
        }
        let ground = ground_state_charges(&model);
        let chain = build_markov_chain(&ground, &model, &density.band_min, &dev.grid, params)
            .and_then(|c| stationary_distribution(&c).map(|pi| (c, pi)));
        let (current, chain) = match chain {
            Ok((c, pi)) => {
                let i = compute_current(label, Some((&c, &pi)), &density.band_min, &dev.grid, params);
                (i, Some((c, pi)))
            }
            Err(e) => {
                log::warn!("pixel {plungers:?}: {e}");
                flags |= PixelFlags::CHAIN_ERROR;
                (0.0, None)
            }
        };
        let sensor = sensor_of(&ground.q, &model.dot_positions, &mut flags);
        PixelDetail {
            potential,
            density,
            record: PixelRecord {
                charge: ground.q.clone(),
                current,
                sensor,
                state: label,
            },
            model: Some(model),
            ground: Some(ground),
            chain,
            flags: PixelFlags(flags),
        }
    }
}
