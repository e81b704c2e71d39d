//! Turns a parsed config into runs and CSV artifacts.
//!
//! Every mode writes `result.csv` (one row per finished run); `optimize`
//! additionally writes `convergence.csv`, and single-placement modes write
//! `placement.csv`. All files are deterministic functions of the config and
//! seed: the `wall_ms` column stays 0 unless timing capture is requested,
//! and measured times go to stderr either way.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ckmplace::baselines::{exhaustive_search, hovering_placement, los_design, SearchGrid};
use ckmplace::ckm::{generate_synthetic_ckm, load_ckm, load_scene, GridCkm};
use ckmplace::net::NetworkScene;
use ckmplace::optimizer::{self, IterationRecord, TrustRegionState};
use ckmplace::{Error, Objective, Placement, Point3, Result};

use crate::config::{CkmSource, ExperimentConfig, InitialPlacement, RunMode, Scheme};

/// Decouples the initial-placement draw from the search's own random stream.
const START_SEED_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// Output knobs that are not part of the experiment definition.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Write measured wall times into `result.csv` instead of 0. Off by
    /// default so identical configs produce identical bytes.
    pub timing_in_csv: bool,
}

/// One `result.csv` row.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub scheme: &'static str,
    pub power_dbm: f64,
    pub sum_rate_bps_hz: f64,
    pub rates: Vec<f64>,
    pub eval_count: u64,
    pub wall_ms: u128,
}

/// Loads or generates every station's map, in station order.
pub fn load_maps(cfg: &ExperimentConfig) -> Result<Vec<GridCkm>> {
    cfg.scene
        .gbs
        .iter()
        .map(|g| match &g.source {
            CkmSource::Csv(p) => load_ckm(&cfg.resolve(p)),
            CkmSource::Synthetic { scene, spacing_m } => {
                let sf = load_scene(&cfg.resolve(scene))?;
                generate_synthetic_ckm(
                    &sf.scene,
                    Point3::new(g.pos.x, g.pos.y, g.height_m),
                    cfg.scene.altitude_m,
                    *spacing_m,
                    sf.allow_low_altitude,
                )
            }
        })
        .collect()
}

fn assemble(cfg: &ExperimentConfig, ckms: Vec<GridCkm>, power_w: Vec<f64>) -> Result<NetworkScene> {
    NetworkScene::new(
        cfg.scene.gbs.iter().map(|g| g.pos).collect(),
        cfg.scene.gbs[0].height_m,
        cfg.scene.altitude_m,
        ckms,
        power_w,
        cfg.scene.noise_w.clone(),
        cfg.uav.weights.clone(),
        cfg.scene.area,
        cfg.optimizer.lookup,
    )
}

/// Builds the scene exactly as configured.
pub fn build_network_scene(cfg: &ExperimentConfig) -> Result<NetworkScene> {
    assemble(cfg, load_maps(cfg)?, cfg.uav.power_w.clone())
}

fn trust_state(cfg: &ExperimentConfig) -> Result<TrustRegionState> {
    let o = &cfg.optimizer;
    TrustRegionState::new(o.delta0_m, o.beta, o.epsilon_m, o.max_iters)
}

fn start_placement(cfg: &ExperimentConfig, scene: &NetworkScene) -> Placement {
    match cfg.optimizer.initial {
        InitialPlacement::Hover => scene.hover_start(),
        InitialPlacement::Random => optimizer::uniform_placement(
            &cfg.scene.area,
            cfg.uav.count,
            cfg.optimizer.seed ^ START_SEED_GAMMA,
        ),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for line in lines {
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn convergence_header(uavs: usize) -> String {
    let mut h = String::from("iter,objective_bps_hz,delta_m,accepted,eval_count");
    for k in 1..=uavs {
        h.push_str(&format!(",q{k}x_m,q{k}y_m"));
    }
    h
}

fn write_convergence_csv(path: &Path, uavs: usize, records: &[IterationRecord]) -> Result<()> {
    let rows = records.iter().map(|r| {
        let mut row = format!(
            "{},{},{},{},{}",
            r.iteration, r.objective, r.delta, r.accepted, r.eval_count
        );
        for q in r.placement.positions() {
            row.push_str(&format!(",{},{}", q.x, q.y));
        }
        row
    });
    write_lines(path, std::iter::once(convergence_header(uavs)).chain(rows))
}

fn result_header(uavs: usize) -> String {
    let mut h = String::from("scheme,power_dbm,sum_rate_bps_hz");
    for k in 1..=uavs {
        h.push_str(&format!(",rate_k{k}"));
    }
    h.push_str(",eval_count,wall_ms");
    h
}

fn write_result_csv(path: &Path, uavs: usize, rows: &[ResultRow]) -> Result<()> {
    let lines = rows.iter().map(|r| {
        let mut row = format!("{},{},{}", r.scheme, r.power_dbm, r.sum_rate_bps_hz);
        for rate in &r.rates {
            row.push_str(&format!(",{rate}"));
        }
        row.push_str(&format!(",{},{}", r.eval_count, r.wall_ms));
        row
    });
    write_lines(path, std::iter::once(result_header(uavs)).chain(lines))
}

fn write_placement_csv(path: &Path, placement: &Placement) -> Result<()> {
    let rows = placement
        .positions()
        .iter()
        .enumerate()
        .map(|(k, q)| format!("{},{},{}", k + 1, q.x, q.y));
    write_lines(path, std::iter::once(String::from("uav,x_m,y_m")).chain(rows))
}

struct Finished {
    row: ResultRow,
    placement: Placement,
    records: Option<Vec<IterationRecord>>,
}

fn run_scheme(
    cfg: &ExperimentConfig,
    scene: &NetworkScene,
    scheme: &'static str,
    power_dbm: f64,
    keep_timing: bool,
) -> Result<Finished> {
    scene.reset_eval_count();
    let t0 = Instant::now();
    let (placement, value, records) = match scheme {
        "dfo" => {
            let run = optimizer::run(scene, &start_placement(cfg, scene), trust_state(cfg)?, cfg.optimizer.seed)?;
            (run.placement, run.value, Some(run.records))
        }
        "hover" => {
            let placement = hovering_placement(scene)?;
            let value = scene.weighted_sum_rate(&placement)?;
            (placement, value, None)
        }
        "los" => {
            let grid = SearchGrid::new(&cfg.scene.area, cfg.run.grid_step_m)?;
            // The lattice cross-check is a quality aid, not a requirement;
            // drop it rather than fail when the lattice outgrows the budget.
            let lattice_evals = (grid.point_count() as u128).checked_pow(cfg.uav.count as u32);
            let cross_check = lattice_evals
                .filter(|&n| n <= cfg.run.budget as u128)
                .map(|_| (&grid, cfg.run.budget));
            let design = los_design(
                scene,
                cfg.run.los_ref_gain_db,
                trust_state(cfg)?,
                cfg.optimizer.seed,
                cross_check,
            )?;
            (design.placement, design.map_value, None)
        }
        "exhaustive" => {
            let grid = SearchGrid::new(&cfg.scene.area, cfg.run.grid_step_m)?;
            let (placement, value) = exhaustive_search(scene, &grid, cfg.run.budget)?;
            (placement, value, None)
        }
        other => unreachable!("unknown scheme {other}"),
    };
    let wall = t0.elapsed().as_millis();
    let eval_count = scene.eval_count();
    eprintln!(
        "{scheme} @ {power_dbm} dBm: sum rate {value} bps/Hz, {eval_count} evaluations, {wall} ms"
    );
    let rates = scene.per_uav_rates(&placement)?;
    Ok(Finished {
        row: ResultRow {
            scheme,
            power_dbm,
            sum_rate_bps_hz: value,
            rates,
            eval_count,
            wall_ms: if keep_timing { wall } else { 0 },
        },
        placement,
        records,
    })
}

/// Runs the configured mode and writes its artifacts under `out_dir`.
/// Returns the files written.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    opts: &RunOptions,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let power_dbm = cfg.uav.power_dbm[0];
    let mut written = Vec::new();

    match cfg.run.mode {
        RunMode::Optimize | RunMode::Exhaustive | RunMode::Baseline => {
            let scene = build_network_scene(cfg)?;
            let scheme = match cfg.run.mode {
                RunMode::Optimize => "dfo",
                RunMode::Exhaustive => "exhaustive",
                RunMode::Baseline => match cfg.run.scheme {
                    Some(Scheme::Hover) => "hover",
                    Some(Scheme::Los) => "los",
                    None => {
                        return Err(Error::Invalid {
                            what: "run.scheme",
                            msg: "baseline mode needs a scheme (hover or los)".into(),
                        })
                    }
                },
                RunMode::Sweep => unreachable!("handled by the outer match"),
            };
            let done = run_scheme(cfg, &scene, scheme, power_dbm, opts.timing_in_csv)?;

            if let Some(records) = &done.records {
                let path = out_dir.join("convergence.csv");
                write_convergence_csv(&path, cfg.uav.count, records)?;
                written.push(path);
            }
            let placement_path = out_dir.join("placement.csv");
            write_placement_csv(&placement_path, &done.placement)?;
            written.push(placement_path);
            let result_path = out_dir.join("result.csv");
            write_result_csv(&result_path, cfg.uav.count, &[done.row])?;
            written.push(result_path);
        }
        RunMode::Sweep => {
            let range = cfg.run.sweep_dbm.ok_or(Error::Invalid {
                what: "run.sweep_dbm",
                msg: "sweep mode needs a power range (start:step:stop)".into(),
            })?;
            let ckms = load_maps(cfg)?;
            let mut rows = Vec::new();
            for level in range.levels() {
                let watts = crate::config::dbm_to_watts(level);
                for scheme in ["dfo", "hover", "los"] {
                    let scene = assemble(cfg, ckms.clone(), vec![watts; cfg.uav.count])?;
                    rows.push(run_scheme(cfg, &scene, scheme, level, opts.timing_in_csv)?.row);
                }
            }
            let result_path = out_dir.join("result.csv");
            write_result_csv(&result_path, cfg.uav.count, &rows)?;
            written.push(result_path);
        }
    }
    Ok(written)
}
