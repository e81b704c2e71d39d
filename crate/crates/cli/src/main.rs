use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use ckmplace::ckm::{generate_synthetic_ckm, load_scene, save_ckm};
use ckmplace::Point3;
use ckmplace_cli::config::{self, ExperimentConfig, RunMode, Scheme, SweepRange};
use ckmplace_cli::experiment::{run_experiment, RunOptions};

/// Placement experiments on channel-knowledge-map driven UAV uplinks.
#[derive(Parser)]
#[command(name = "ckmplace", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate map CSVs from a building-scene file.
    GenerateCkm {
        /// Scene description (TOML).
        #[arg(long)]
        scene: PathBuf,
        /// 1-based station index, or "all".
        #[arg(long)]
        gbs: String,
        /// Node spacing in metres.
        #[arg(long)]
        spacing: f64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the trust-region search on a configured scene.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to run.output_dir from the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record measured wall times in result.csv (breaks byte-for-byte
        /// reproducibility across runs).
        #[arg(long)]
        timing: bool,
    },
    /// Evaluate every lattice placement and keep the best.
    Exhaustive {
        #[arg(long)]
        config: PathBuf,
        /// Lattice step in metres (defaults to run.grid_step_m).
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        timing: bool,
    },
    /// Run a baseline placement scheme.
    Baseline {
        #[arg(long)]
        config: PathBuf,
        /// hover|los (defaults to run.scheme).
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        timing: bool,
    },
    /// Sweep transmit power and run every scheme at each level.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// start:step:stop in dBm (defaults to run.sweep_dbm).
        #[arg(long = "power-dbm")]
        power_dbm: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        timing: bool,
    },
}

fn load(config: &PathBuf) -> anyhow::Result<ExperimentConfig> {
    config::parse_config(config).with_context(|| format!("reading {}", config.display()))
}

fn dispatch(
    mut cfg: ExperimentConfig,
    out: Option<PathBuf>,
    timing: bool,
) -> anyhow::Result<()> {
    let out_dir = match out {
        Some(dir) => dir,
        None => match &cfg.run.output_dir {
            Some(dir) => cfg.resolve(dir),
            None => bail!("no output directory: pass --out or set run.output_dir"),
        },
    };
    cfg.run.output_dir = Some(out_dir.clone());
    let opts = RunOptions {
        timing_in_csv: timing,
    };
    let files = run_experiment(&cfg, &out_dir, &opts)?;
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().cmd {
        Cmd::GenerateCkm {
            scene,
            gbs,
            spacing,
            out,
        } => {
            let sf = load_scene(&scene).with_context(|| format!("reading {}", scene.display()))?;
            if sf.gbs.is_empty() {
                bail!("{}: scene lists no stations", scene.display());
            }
            let picked: Vec<usize> = if gbs.trim().eq_ignore_ascii_case("all") {
                (0..sf.gbs.len()).collect()
            } else {
                let idx: usize = gbs
                    .trim()
                    .parse()
                    .with_context(|| format!("--gbs must be a 1-based index or \"all\", got {gbs:?}"))?;
                if idx == 0 || idx > sf.gbs.len() {
                    bail!(
                        "--gbs {idx} out of range; the scene lists {} stations",
                        sf.gbs.len()
                    );
                }
                vec![idx - 1]
            };
            std::fs::create_dir_all(&out)
                .with_context(|| format!("creating {}", out.display()))?;
            for i in picked {
                let site = sf.gbs[i];
                let map = generate_synthetic_ckm(
                    &sf.scene,
                    Point3::new(site.pos.x, site.pos.y, site.height_m),
                    sf.altitude_m,
                    spacing,
                    sf.allow_low_altitude,
                )?;
                let path = out.join(format!("gbs{}.csv", i + 1));
                save_ckm(&map, &path)?;
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Cmd::Optimize {
            config,
            out,
            timing,
        } => {
            let mut cfg = load(&config)?;
            cfg.run.mode = RunMode::Optimize;
            dispatch(cfg, out, timing)
        }
        Cmd::Exhaustive {
            config,
            step,
            out,
            timing,
        } => {
            let mut cfg = load(&config)?;
            cfg.run.mode = RunMode::Exhaustive;
            if let Some(step) = step {
                if !(step.is_finite() && step > 0.0) {
                    bail!("--step must be positive, got {step}");
                }
                cfg.run.grid_step_m = step;
            }
            dispatch(cfg, out, timing)
        }
        Cmd::Baseline {
            config,
            scheme,
            out,
            timing,
        } => {
            let mut cfg = load(&config)?;
            cfg.run.mode = RunMode::Baseline;
            if let Some(s) = scheme {
                cfg.run.scheme = Some(match s.trim() {
                    "hover" => Scheme::Hover,
                    "los" => Scheme::Los,
                    other => bail!("--scheme must be hover or los, got {other:?}"),
                });
            }
            dispatch(cfg, out, timing)
        }
        Cmd::Sweep {
            config,
            power_dbm,
            out,
            timing,
        } => {
            let mut cfg = load(&config)?;
            cfg.run.mode = RunMode::Sweep;
            if let Some(range) = power_dbm {
                cfg.run.sweep_dbm = Some(SweepRange::parse(&range)?);
            }
            dispatch(cfg, out, timing)
        }
    }
}
