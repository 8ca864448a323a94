//! Charge-sensor response.
//!
//! Each sensor reads the electrostatic potential of the island charges,
//! `Σ_i Q_i / r_i`, plus `sensor_gate_coeff` times the gate contribution
//! `Σ_g alpha_g peak_g / r_g` with gate energies in eV. Distances are in nm
//! from the sensor to points on the channel axis. Outputs are unitless.

use crate::device::{GateSpec, PhysicsParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SensorReadout {
    pub values: Vec<f64>,
}

fn distance(sensor: [f64; 2], x: f64) -> f64 {
    (sensor[0] - x).hypot(sensor[1])
}

/// Sensor readings for island charges `charges` located at `dot_positions`,
/// with `gates` carrying the peaks applied at this pixel.
pub fn sensor_response(
    charges: &[u32],
    dot_positions: &[f64],
    gates: &[GateSpec],
    params: &PhysicsParams,
) -> Result<SensorReadout> {
    if charges.len() != dot_positions.len() {
        return Err(Error::DimensionMismatch {
            expected: dot_positions.len(),
            got: charges.len(),
        });
    }
    let values = params
        .sensors
        .iter()
        .enumerate()
        .map(|(s, &pos)| {
            let mut dots = 0.0;
            for (&q, &x) in charges.iter().zip(dot_positions) {
                let r = distance(pos, x);
                if r == 0.0 {
                    return Err(Error::SensorOnChannel(s));
                }
                dots += q as f64 / r;
            }
            let mut gate_term = 0.0;
            for g in gates {
                let r = distance(pos, g.x0);
                if r == 0.0 {
                    return Err(Error::SensorOnChannel(s));
                }
                gate_term += g.alpha * g.peak * 1e-3 / r;
            }
            Ok(dots + params.sensor_gate_coeff * gate_term)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(SensorReadout { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dots_only(sensors: Vec<[f64; 2]>) -> PhysicsParams {
        PhysicsParams {
            sensors,
            sensor_gate_coeff: 0.0,
            ..PhysicsParams::default()
        }
    }

    #[test]
    fn single_dot_below_sensor() {
        let p = dots_only(vec![[20.0, 50.0]]);
        let r = sensor_response(&[1], &[20.0], &[], &p).unwrap();
        assert_relative_eq!(r.values[0], 1.0 / 50.0);
    }

    #[test]
    fn two_dots() {
        let p = dots_only(vec![[-20.0, 50.0]]);
        let r = sensor_response(&[1, 2], &[-20.0, 20.0], &[], &p).unwrap();
        assert_relative_eq!(r.values[0], 0.02 + 2.0 / 4100f64.sqrt(), max_relative = 1e-14);
        assert!((r.values[0] - 0.05124).abs() < 1e-5);
    }

    #[test]
    fn linear_in_charge() {
        let p = PhysicsParams::default();
        let gates = crate::device::DeviceSpec::default().gates_at((120.0, 300.0));
        let pos = [-18.0, 23.0];
        let g = |q: [u32; 2]| sensor_response(&q, &pos, &gates, &p).unwrap().values;
        let (zero, a, b, ab) = (g([0, 0]), g([2, 1]), g([1, 3]), g([3, 4]));
        for s in 0..2 {
            assert_relative_eq!(ab[s] - zero[s], (a[s] - zero[s]) + (b[s] - zero[s]), max_relative = 1e-12);
        }
        let double = g([4, 2]);
        for s in 0..2 {
            assert_relative_eq!(double[s] - zero[s], 2.0 * (a[s] - zero[s]), max_relative = 1e-12);
        }
    }

    #[test]
    fn gates_only_without_dots() {
        let p = PhysicsParams::default();
        let gates = crate::device::DeviceSpec::default().gates_at((0.0, 0.0));
        let r = sensor_response(&[], &[], &gates, &p).unwrap();
        assert_eq!(r.values.len(), 2);
        assert!(r.values.iter().all(|v| v.is_finite() && *v != 0.0));
    }

    #[test]
    fn sensor_on_channel_is_rejected() {
        let p = dots_only(vec![[5.0, 0.0]]);
        assert!(matches!(sensor_response(&[1], &[5.0], &[], &p), Err(Error::SensorOnChannel(0))));
        assert!(sensor_response(&[1, 2], &[5.0], &[], &p).is_err());
    }
}
