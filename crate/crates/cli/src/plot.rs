//! PNG rendering of device maps.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use qdsim::dataset::DeviceMap;
use qdsim::{Error, Result, StateLabel};

/// Display scale applied to currents before rendering.
pub const CURRENT_DISPLAY_SCALE: f64 = 1e4;
const MIN_SIDE: usize = 400;

// viridis anchors at 0, 0.25, 0.5, 0.75, 1
const VIRIDIS: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

fn colormap(t: f64) -> Rgb<u8> {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let pos = t * (VIRIDIS.len() - 1) as f64;
    let i = (pos.floor() as usize).min(VIRIDIS.len() - 2);
    let f = pos - i as f64;
    let c = |k: usize| (VIRIDIS[i][k] + f * (VIRIDIS[i + 1][k] - VIRIDIS[i][k])).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

fn state_color(s: StateLabel) -> Rgb<u8> {
    match s {
        StateLabel::ShortCircuit => Rgb([230, 230, 230]),
        StateLabel::Barrier => Rgb([60, 60, 60]),
        StateLabel::SingleDot => Rgb([230, 120, 40]),
        StateLabel::DoubleDot => Rgb([40, 110, 200]),
    }
}

fn normalize(values: &[f64]) -> Vec<f64> {
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    values
        .iter()
        .map(|&v| if span > 0.0 { (v - lo) / span } else { 0.0 })
        .collect()
}

/// Renders per-pixel colors with `V_P1` along x and `V_P2` increasing upward.
fn render(map: &DeviceMap, color: impl Fn(usize) -> Rgb<u8>) -> RgbImage {
    let (rows, cols) = (map.rows(), map.cols());
    let scale = MIN_SIDE.div_ceil(rows.max(cols)).max(1);
    let (w, h) = ((rows * scale) as u32, (cols * scale) as u32);
    RgbImage::from_fn(w, h, |px, py| {
        let r = px as usize / scale;
        let c = cols - 1 - py as usize / scale;
        color(map.index(r, c))
    })
}

/// Writes `current.png`, `charge.png`, `sensor.png` and `state.png` into
/// `dir` and returns their paths.
pub fn plot_map(map: &DeviceMap, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let current: Vec<f64> = map
        .records
        .iter()
        .map(|r| (r.current.max(0.0) * CURRENT_DISPLAY_SCALE).ln_1p())
        .collect();
    let current = normalize(&current);
    let charge = normalize(&map.records.iter().map(|r| r.total_charge() as f64).collect::<Vec<_>>());
    let sensor = normalize(&map.sensor_channel(0)?);

    let images = [
        ("current.png", render(map, |i| colormap(current[i]))),
        ("charge.png", render(map, |i| colormap(charge[i]))),
        ("sensor.png", render(map, |i| colormap(sensor[i]))),
        ("state.png", render(map, |i| state_color(map.records[i].state))),
    ];
    let mut paths = Vec::new();
    for (name, img) in images {
        let path = dir.join(name);
        img.save(&path).map_err(|e| match e {
            image::ImageError::IoError(source) => Error::Io {
                path: path.clone(),
                source,
            },
            other => Error::Schema(other.to_string()),
        })?;
        paths.push(path);
    }
    Ok(paths)
}
