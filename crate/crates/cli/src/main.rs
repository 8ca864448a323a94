//! `qdsim` command-line front end.
//!
//! Exit status: 0 on success, 1 for bad arguments, configuration or input
//! data, 2 for I/O failures and 3 when `validate` finds a failing check.

mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use qdsim::config::{load_config, CONFIG_ENV};
use qdsim::dataset::audit::{audit_map, audit_patch_set, AuditCheck};
use qdsim::dataset::ensemble::{Manifest, MANIFEST_FILE};
use qdsim::dataset::map::DEFAULT_V_RANGE;
use qdsim::dataset::patches::{sample_patches, Channel, PatchSet, DEFAULT_PATCH_SIZE, PATCH_SET_TYPE};
use qdsim::dataset::{generate_ensemble, load_map, save_map, sweep_map, EnsembleConfig};
use qdsim::device::sample_device;
use qdsim::seed::derive_seed;
use qdsim::{DeviceSpec, Error, Result};

const EXIT_CONFIG: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_AUDIT: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "qdsim", version, about = "Quantum-dot device simulator and dataset generator")]
struct Cli {
    /// Device config file; the mean device when omitted.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores). Never changes output.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct SweepArgs {
    /// Pixels per voltage axis.
    #[arg(long, default_value_t = 100)]
    grid: usize,
    /// Lowest plunger voltage (mV).
    #[arg(long, default_value_t = DEFAULT_V_RANGE.0)]
    v_min: f64,
    /// Highest plunger voltage (mV).
    #[arg(long, default_value_t = DEFAULT_V_RANGE.1)]
    v_max: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ChannelArg {
    Current,
    Sensor,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sweep one device and write its map file.
    Simulate {
        /// Sample a device around the config with this seed instead of
        /// using the config as is.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample and sweep an ensemble of devices into a directory.
    Ensemble {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cut labeled training patches from map files or ensemble directories.
    Patches {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_PATCH_SIZE)]
        patch_size: usize,
        #[arg(long, default_value_t = 10)]
        patches_per_device: usize,
        #[arg(long, value_enum, default_value = "current")]
        channel: ChannelArg,
        /// Sensor used by `--channel sensor`.
        #[arg(long, default_value_t = 0)]
        sensor_index: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render current, charge, sensor and state images of a map.
    Plot {
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the property audits on a map file, patch file or ensemble directory.
    Validate { input: PathBuf },
}

fn base_device(config: Option<&Path>) -> Result<DeviceSpec> {
    match config {
        Some(path) => load_config(path),
        None => Ok(DeviceSpec::default()),
    }
}

fn positive(name: &'static str, value: usize) -> Result<()> {
    if value == 0 {
        return Err(Error::InvalidParameter {
            name,
            reason: "must be positive".into(),
        });
    }
    Ok(())
}

/// Map files named by `inputs`, expanding ensemble directories through
/// their manifests.
fn map_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let manifest = Manifest::load(input)?;
            files.extend(manifest.devices.iter().map(|d| input.join(&d.file)));
        } else {
            files.push(input.clone());
        }
    }
    Ok(files)
}

fn report(label: &str, checks: &[AuditCheck]) -> bool {
    let mut ok = true;
    for c in checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        println!("{status} {label}: {}: {}", c.name, c.detail);
        ok &= c.passed;
    }
    ok
}

fn validate(input: &Path) -> Result<bool> {
    if input.is_dir() {
        let mut ok = true;
        for file in map_files(&[input.to_path_buf()])? {
            ok &= report(&file.display().to_string(), &audit_map(&load_map(&file)?));
        }
        println!("checked {} ({})", input.display(), MANIFEST_FILE);
        return Ok(ok);
    }
    let text = std::fs::read_to_string(input).map_err(|e| Error::Io {
        path: input.to_path_buf(),
        source: e,
    })?;
    let kind = serde_json::from_str::<serde_json::Value>(&text)
        .ok()
        .and_then(|v| v.get("type").and_then(|t| t.as_str()).map(str::to_owned));
    let label = input.display().to_string();
    if kind.as_deref() == Some(PATCH_SET_TYPE) {
        Ok(report(&label, &audit_patch_set(&PatchSet::load(input)?)))
    } else {
        Ok(report(&label, &audit_map(&qdsim::dataset::deserialize(&text)?)))
    }
}

fn run(cli: Cli) -> Result<u8> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Simulate { seed, sweep, out } => {
            let base = base_device(config)?;
            let device = match seed {
                Some(s) => sample_device(&base, s)?,
                None => base,
            };
            let mut map = sweep_map(&device, sweep.grid, (sweep.v_min, sweep.v_max))?;
            map.seed = seed;
            save_map(&map, &out)?;
            println!(
                "wrote {}: labels [SC, QPC, SD, DD] = {:?}, flagged {}",
                out.display(),
                map.label_counts(),
                map.flagged()
            );
        }
        Command::Ensemble { count, seed, sweep, out } => {
            positive("count", count)?;
            let mean = base_device(config)?;
            let cfg = EnsembleConfig {
                count,
                seed,
                grid_size: sweep.grid,
                v_range: (sweep.v_min, sweep.v_max),
                ..EnsembleConfig::default()
            };
            let manifest = generate_ensemble(&mean, &cfg, &out)?;
            println!(
                "wrote {} devices to {}: labels [SC, QPC, SD, DD] = {:?}",
                manifest.devices.len(),
                out.display(),
                manifest.label_totals()
            );
        }
        Command::Patches {
            inputs,
            patch_size,
            patches_per_device,
            channel,
            sensor_index,
            seed,
            out,
        } => {
            positive("patch-size", patch_size)?;
            positive("patches-per-device", patches_per_device)?;
            let channel = match channel {
                ChannelArg::Current => Channel::Current,
                ChannelArg::Sensor => Channel::SensorGradient(sensor_index),
            };
            let mut set = PatchSet::new(channel, patch_size);
            for (k, file) in map_files(&inputs)?.into_iter().enumerate() {
                let map = load_map(&file)?;
                let patches = sample_patches(&map, channel, patch_size, patches_per_device, derive_seed(seed, k as u64))?;
                set.sources.extend(std::iter::repeat_n(file.display().to_string(), patches.len()));
                set.patches.extend(patches);
            }
            set.save(&out)?;
            println!("wrote {} patches to {}", set.patches.len(), out.display());
        }
        Command::Plot { input, out } => {
            let map = load_map(&input)?;
            for path in plot::plot_map(&map, &out)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Validate { input } => {
            if !validate(&input)? {
                return Ok(EXIT_AUDIT);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let pool = match cli.workers {
        Some(0) => {
            eprintln!("error: --workers must be positive");
            return ExitCode::from(EXIT_CONFIG);
        }
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitCode::from(EXIT_IO);
        }
    };
    match pool.install(|| run(cli)) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { EXIT_IO } else { EXIT_CONFIG })
        }
    }
}
