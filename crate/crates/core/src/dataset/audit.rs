//! Property audits over a generated map.

use serde::Serialize;

use crate::error::Result;

use super::map::{DeviceMap, PixelRecord};
use super::patches::{differential_conductance, majority_label, PatchSet};

/// Charge components must stay in the few-electron regime.
pub const MAX_CHARGE: u32 = 10;
/// Minimum share of transition pixels covered by sensor-gradient peaks.
pub const MIN_SENSOR_COVERAGE: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl AuditCheck {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

/// Whether moving between two pixels changes the charge state: the total
/// charge changes, or the island charges change at a fixed island count.
/// A dot splitting in two at fixed total charge is a relabeling, not a
/// charge transition.
pub fn is_charge_transition(a: &PixelRecord, b: &PixelRecord) -> bool {
    a.total_charge() != b.total_charge() || (a.charge.len() == b.charge.len() && a.charge != b.charge)
}

/// Pixels taking part in a charge transition with a horizontal or vertical
/// neighbour. Both pixels of each pair are marked.
pub fn charge_transition_mask(map: &DeviceMap) -> Vec<bool> {
    let (rows, cols) = (map.rows(), map.cols());
    let mut mask = vec![false; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let here = map.get(r, c);
            let i = map.index(r, c);
            if c + 1 < cols && is_charge_transition(here, map.get(r, c + 1)) {
                mask[i] = true;
                mask[i + 1] = true;
            }
            if r + 1 < rows && is_charge_transition(here, map.get(r + 1, c)) {
                mask[i] = true;
                mask[i + cols] = true;
            }
        }
    }
    mask
}

/// Pixels at or above the 90th percentile of `values`, excluding zeros.
pub fn top_decile_mask(values: &[f64]) -> Vec<bool> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    sorted.sort_by(f64::total_cmp);
    let k = ((sorted.len() as f64) * 0.9).floor() as usize;
    let threshold = sorted.get(k.min(sorted.len().saturating_sub(1))).copied().unwrap_or(f64::INFINITY);
    values.iter().map(|&v| v > 0.0 && v >= threshold).collect()
}

/// Dilates `mask` with a 3x3 window.
pub fn dilate(mask: &[bool], rows: usize, cols: usize) -> Vec<bool> {
    let mut out = vec![false; mask.len()];
    for r in 0..rows {
        for c in 0..cols {
            if !mask[r * cols + c] {
                continue;
            }
            for rr in r.saturating_sub(1)..=(r + 1).min(rows - 1) {
                for cc in c.saturating_sub(1)..=(c + 1).min(cols - 1) {
                    out[rr * cols + cc] = true;
                }
            }
        }
    }
    out
}

/// Share of charge-transition pixels lying within one pixel of the
/// top-decile differential conductance of sensor `sensor_index`. Returns
/// `(covered, transitions)`.
pub fn sensor_transition_coverage(map: &DeviceMap, sensor_index: usize) -> Result<(usize, usize)> {
    let grad = differential_conductance(map, sensor_index)?;
    let peaks = dilate(&top_decile_mask(&grad), map.rows(), map.cols());
    let transitions = charge_transition_mask(map);
    let total = transitions.iter().filter(|&&t| t).count();
    let covered = transitions.iter().zip(&peaks).filter(|(&t, &p)| t && p).count();
    Ok((covered, total))
}

/// Decreases of total charge between neighbours along a voltage axis that
/// share a state label and are not undone by the following pixel.
pub fn monotonicity_violations(map: &DeviceMap) -> usize {
    let (rows, cols) = (map.rows(), map.cols());
    let total = |r: usize, c: usize| map.get(r, c).total_charge();
    let mut count = 0;
    let mut scan = |len: usize, at: &dyn Fn(usize) -> (usize, usize)| {
        for i in 0..len.saturating_sub(1) {
            let (a, b) = (at(i), at(i + 1));
            if map.get(a.0, a.1).state != map.get(b.0, b.1).state {
                continue;
            }
            if total(b.0, b.1) < total(a.0, a.1) {
                let recovered = i + 2 < len && {
                    let c = at(i + 2);
                    total(c.0, c.1) >= total(a.0, a.1)
                };
                if !recovered {
                    count += 1;
                }
            }
        }
    };
    for r in 0..rows {
        scan(cols, &|c| (r, c));
    }
    for c in 0..cols {
        scan(rows, &|r| (r, c));
    }
    count
}

/// Runs every audit on `map`.
pub fn audit_map(map: &DeviceMap) -> Vec<AuditCheck> {
    let mut checks = Vec::new();
    let n = map.rows() * map.cols();

    let shape = map.validate_shape();
    checks.push(AuditCheck::new(
        "shape",
        shape.is_ok(),
        match &shape {
            Ok(()) => format!("{} x {} pixels, records match labels", map.rows(), map.cols()),
            Err(e) => e.to_string(),
        },
    ));
    if shape.is_err() {
        return checks;
    }

    let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
    checks.push(AuditCheck::new(
        "voltage axes",
        increasing(&map.v_p1) && increasing(&map.v_p2),
        "strictly increasing".into(),
    ));

    let max = map.max_charge();
    checks.push(AuditCheck::new(
        "charge range",
        max <= MAX_CHARGE,
        format!("max island charge {max} (limit {MAX_CHARGE})"),
    ));

    let finite = map
        .records
        .iter()
        .all(|r| r.current.is_finite() && r.sensor.iter().all(|s| s.is_finite()));
    checks.push(AuditCheck::new("finite outputs", finite, "current and sensor values".into()));

    let flagged = map.flagged();
    checks.push(AuditCheck::new(
        "flagged pixels",
        flagged == 0,
        format!("{flagged} of {n} pixels carry diagnostics"),
    ));

    let violations = monotonicity_violations(map);
    checks.push(AuditCheck::new(
        "charge monotonicity",
        violations == 0,
        format!("{violations} same-label decreases beyond single-pixel jitter"),
    ));

    for s in 0..map.device.physics.sensors.len() {
        let name = format!("sensor {s} coverage");
        match sensor_transition_coverage(map, s) {
            Ok((covered, total)) => {
                let share = if total == 0 { 1.0 } else { covered as f64 / total as f64 };
                checks.push(AuditCheck::new(
                    &name,
                    share >= MIN_SENSOR_COVERAGE,
                    format!("{covered} of {total} transition pixels ({:.1}%)", 100.0 * share),
                ));
            }
            Err(e) => checks.push(AuditCheck::new(&name, false, e.to_string())),
        }
    }
    checks
}

/// Checks patch shapes, fractions and majority labels.
pub fn audit_patch_set(set: &PatchSet) -> Vec<AuditCheck> {
    let n = set.patches.len();
    let shape_ok = set
        .patches
        .iter()
        .all(|p| p.size == set.size && p.pixels.len() == p.size * p.size);
    let fraction_err = set
        .patches
        .iter()
        .map(|p| (p.fractions.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    let fractions_ok = set.patches.iter().all(|p| p.fractions.iter().all(|&f| f >= 0.0)) && fraction_err <= 1e-12;
    let majority_ok = set.patches.iter().all(|p| majority_label(&p.fractions) == p.majority_label);
    vec![
        AuditCheck::new(
            "patch shape",
            shape_ok && set.sources.len() == n,
            format!("{n} patches of {0}x{0}", set.size),
        ),
        AuditCheck::new("fractions", fractions_ok, format!("max |sum - 1| = {fraction_err:.1e}")),
        AuditCheck::new("majority label", majority_ok, "argmax of fractions, ties to the lower class".into()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_decile_of_ramp() {
        let v: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let m = top_decile_mask(&v);
        assert_eq!(m.iter().filter(|&&b| b).count(), 10);
        assert!(m[90] && !m[89]);
    }

    #[test]
    fn zeros_never_count_as_peaks() {
        assert!(top_decile_mask(&[0.0; 20]).iter().all(|&b| !b));
    }

    #[test]
    fn dilation_of_corner() {
        let mut m = vec![false; 9];
        m[0] = true;
        let d = dilate(&m, 3, 3);
        assert_eq!(d, vec![true, true, false, true, true, false, false, false, false]);
    }
}
