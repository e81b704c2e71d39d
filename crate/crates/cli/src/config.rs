//! Experiment configuration: one TOML file describes the scene, the UAVs,
//! the optimizer controls, and what to run.
//!
//! ```toml
//! [scene]
//! area = { xmin_m = -100.0, xmax_m = 100.0, ymin_m = -100.0, ymax_m = 100.0 }
//! altitude_m = 50.0
//! noise_dbm = -100.0
//!
//! [[scene.gbs]]
//! x_m = -60.0
//! y_m = 0.0
//! height_m = 25.0
//! ckm = "maps/gbs1.csv"           # or: scene = "city.toml", spacing_m = 5.0
//!
//! [uav]
//! count = 2
//! power_dbm = 30.0
//!
//! [run]
//! mode = "optimize"
//! output_dir = "out"
//! ```
//!
//! Powers and noise are written in dBm and converted to watts at parse time.
//! Omitted `[optimizer]` fields fall back to documented defaults; unknown
//! keys anywhere are rejected. The `CKMPLACE_SEED` environment variable, when
//! set, overrides the configured seed.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use ckmplace::ckm::LookupMode;
use ckmplace::{Error, Point2, Rect, Result};

/// Environment variable that overrides `optimizer.seed`.
pub const SEED_ENV_VAR: &str = "CKMPLACE_SEED";

/// dBm to watts: 30 dBm is one watt.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

fn invalid(what: &'static str, msg: impl Into<String>) -> Error {
    Error::Invalid {
        what,
        msg: msg.into(),
    }
}

/// What an experiment run produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Optimize,
    Exhaustive,
    Baseline,
    Sweep,
}

/// Baseline placement rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Each UAV directly above its station.
    Hover,
    /// Placement optimized under a free-space channel, scored on the maps.
    Los,
}

/// How the initial placement is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialPlacement {
    /// Above the stations, clamped into the area.
    Hover,
    /// Uniform draw over the area from the run seed.
    Random,
}

/// Where one station's gain map comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum CkmSource {
    /// A map CSV on disk.
    Csv(PathBuf),
    /// Generated from a building-scene file at the given node spacing.
    Synthetic { scene: PathBuf, spacing_m: f64 },
}

/// One base station: where it is and where its map comes from.
#[derive(Debug, Clone, PartialEq)]
pub struct GbsConfig {
    pub pos: Point2,
    pub height_m: f64,
    pub source: CkmSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub area: Rect,
    pub altitude_m: f64,
    /// Per-station receiver noise, watts.
    pub noise_w: Vec<f64>,
    pub gbs: Vec<GbsConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UavConfig {
    pub count: usize,
    /// Transmit powers as configured, dBm (kept for result rows).
    pub power_dbm: Vec<f64>,
    /// The same powers in watts.
    pub power_w: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub delta0_m: f64,
    pub beta: f64,
    pub epsilon_m: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub initial: InitialPlacement,
    pub lookup: LookupMode,
}

/// Inclusive dBm sweep `start:step:stop`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRange {
    pub start_dbm: f64,
    pub step_dbm: f64,
    pub stop_dbm: f64,
}

impl SweepRange {
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(invalid(
                "sweep range",
                format!("expected start:step:stop, got {text:?}"),
            ));
        }
        let mut nums = [0.0f64; 3];
        for (slot, part) in nums.iter_mut().zip(&parts) {
            *slot = part.trim().parse().map_err(|_| {
                invalid("sweep range", format!("{part:?} is not a number in {text:?}"))
            })?;
        }
        let range = SweepRange {
            start_dbm: nums[0],
            step_dbm: nums[1],
            stop_dbm: nums[2],
        };
        range.validate()?;
        Ok(range)
    }

    fn validate(&self) -> Result<()> {
        if !(self.step_dbm.is_finite() && self.step_dbm > 0.0) {
            return Err(invalid(
                "sweep range",
                format!("step must be positive (got {})", self.step_dbm),
            ));
        }
        if !(self.start_dbm.is_finite() && self.stop_dbm.is_finite()) || self.stop_dbm < self.start_dbm {
            return Err(invalid(
                "sweep range",
                format!("stop must be >= start (got {}:{}:{})", self.start_dbm, self.step_dbm, self.stop_dbm),
            ));
        }
        Ok(())
    }

    /// The dBm levels, start first, stop included up to rounding slack.
    pub fn levels(&self) -> Vec<f64> {
        let count = ((self.stop_dbm - self.start_dbm) / self.step_dbm + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| self.start_dbm + i as f64 * self.step_dbm)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: RunMode,
    pub grid_step_m: f64,
    pub sweep_dbm: Option<SweepRange>,
    pub output_dir: Option<PathBuf>,
    pub scheme: Option<Scheme>,
    /// Evaluation cap for exhaustive search.
    pub budget: u64,
    /// Reference gain (dB at 1 m) the free-space baseline assumes.
    pub los_ref_gain_db: f64,
}

/// A fully validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scene: SceneConfig,
    pub uav: UavConfig,
    pub optimizer: OptimizerConfig,
    pub run: RunConfig,
    /// Directory the config file lives in; relative paths resolve here.
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    /// Resolves a config-relative path.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn broadcast(&self, what: &'static str, count: usize) -> Result<Vec<f64>> {
        match self {
            OneOrMany::One(v) => Ok(vec![*v; count]),
            OneOrMany::Many(vs) => {
                if vs.len() != count {
                    return Err(invalid(
                        what,
                        format!("{} values for {count} UAVs", vs.len()),
                    ));
                }
                Ok(vs.clone())
            }
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scene: RawScene,
    uav: RawUav,
    #[serde(default)]
    optimizer: RawOptimizer,
    #[serde(default)]
    run: RawRun,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScene {
    area: RawArea,
    altitude_m: f64,
    noise_dbm: OneOrMany,
    gbs: Vec<RawGbs>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArea {
    xmin_m: f64,
    xmax_m: f64,
    ymin_m: f64,
    ymax_m: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGbs {
    x_m: f64,
    y_m: f64,
    height_m: f64,
    ckm: Option<PathBuf>,
    scene: Option<PathBuf>,
    spacing_m: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUav {
    count: usize,
    power_dbm: OneOrMany,
    weights: Option<Vec<f64>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOptimizer {
    delta0_m: Option<f64>,
    beta: Option<f64>,
    epsilon_m: Option<f64>,
    max_iters: Option<usize>,
    seed: Option<u64>,
    initial: Option<InitialPlacement>,
    lookup: Option<RawLookup>,
}

#[derive(Deserialize, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum RawLookup {
    Nearest,
    Bilinear,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawRun {
    mode: Option<RunMode>,
    grid_step_m: Option<f64>,
    sweep_dbm: Option<String>,
    output_dir: Option<PathBuf>,
    scheme: Option<Scheme>,
    budget: Option<u64>,
    los_ref_gain_db: Option<f64>,
}

/// Reads, parses, and validates a config file. Syntax and type errors carry
/// the TOML line and column; semantic errors name the offending field.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let raw: RawConfig = toml::from_str(&text).map_err(|e| Error::SceneFormat {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let base_dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    validate(raw, base_dir)
}

fn validate(raw: RawConfig, base_dir: PathBuf) -> Result<ExperimentConfig> {
    let a = &raw.scene.area;
    let area = Rect::new(a.xmin_m, a.xmax_m, a.ymin_m, a.ymax_m);
    if !area.is_proper() {
        return Err(invalid(
            "scene.area",
            format!("{area}; needs positive extent on both axes"),
        ));
    }
    if !(raw.scene.altitude_m.is_finite() && raw.scene.altitude_m > 0.0) {
        return Err(invalid(
            "scene.altitude_m",
            format!("must be positive (got {})", raw.scene.altitude_m),
        ));
    }

    let count = raw.uav.count;
    if count == 0 {
        return Err(invalid("uav.count", "needs at least one UAV"));
    }
    if raw.scene.gbs.len() != count {
        return Err(invalid(
            "scene.gbs",
            format!("{} stations listed for {count} UAVs", raw.scene.gbs.len()),
        ));
    }

    let mut gbs = Vec::with_capacity(count);
    for (i, g) in raw.scene.gbs.iter().enumerate() {
        let station = i + 1;
        if !(g.x_m.is_finite() && g.y_m.is_finite()) {
            return Err(invalid(
                "scene.gbs",
                format!("station {station}: coordinates must be finite"),
            ));
        }
        if !(g.height_m.is_finite() && g.height_m >= 0.0) {
            return Err(invalid(
                "scene.gbs",
                format!("station {station}: height_m must be >= 0 (got {})", g.height_m),
            ));
        }
        let source = match (&g.ckm, &g.scene) {
            (Some(_), Some(_)) => {
                return Err(invalid(
                    "scene.gbs",
                    format!("station {station}: give either ckm or scene, not both"),
                ))
            }
            (None, None) => {
                return Err(invalid(
                    "scene.gbs",
                    format!("station {station}: needs a ckm path or a scene reference"),
                ))
            }
            (Some(csv), None) => {
                if g.spacing_m.is_some() {
                    return Err(invalid(
                        "scene.gbs",
                        format!("station {station}: spacing_m only applies to scene references"),
                    ));
                }
                CkmSource::Csv(csv.clone())
            }
            (None, Some(scene)) => {
                let spacing = g.spacing_m.unwrap_or(5.0);
                if !(spacing.is_finite() && spacing > 0.0) {
                    return Err(invalid(
                        "scene.gbs",
                        format!("station {station}: spacing_m must be positive (got {spacing})"),
                    ));
                }
                CkmSource::Synthetic {
                    scene: scene.clone(),
                    spacing_m: spacing,
                }
            }
        };
        gbs.push(GbsConfig {
            pos: Point2::new(g.x_m, g.y_m),
            height_m: g.height_m,
            source,
        });
    }
    let h0 = gbs[0].height_m;
    if let Some(bad) = gbs.iter().find(|g| g.height_m != h0) {
        return Err(invalid(
            "scene.gbs",
            format!("stations must share one antenna height (got {h0} and {})", bad.height_m),
        ));
    }

    let noise_dbm = raw.scene.noise_dbm.broadcast("scene.noise_dbm", count)?;
    for &n in &noise_dbm {
        if !n.is_finite() {
            return Err(invalid("scene.noise_dbm", "must be finite"));
        }
    }
    let noise_w = noise_dbm.iter().map(|&d| dbm_to_watts(d)).collect();

    let power_dbm = raw.uav.power_dbm.broadcast("uav.power_dbm", count)?;
    for &p in &power_dbm {
        if !p.is_finite() {
            return Err(invalid("uav.power_dbm", "must be finite"));
        }
    }
    let power_w: Vec<f64> = power_dbm.iter().map(|&d| dbm_to_watts(d)).collect();

    let weights = raw.uav.weights.clone().unwrap_or_else(|| vec![1.0; count]);
    if weights.len() != count {
        return Err(invalid(
            "uav.weights",
            format!("{} values for {count} UAVs", weights.len()),
        ));
    }
    if let Some((i, &w)) = weights
        .iter()
        .enumerate()
        .find(|(_, w)| !(w.is_finite() && **w > 0.0))
    {
        return Err(invalid(
            "uav.weights",
            format!("every weight must be positive (got {w} at position {})", i + 1),
        ));
    }

    let o = &raw.optimizer;
    let delta0_m = o.delta0_m.unwrap_or(area.shorter_side() / 4.0);
    if !(delta0_m.is_finite() && delta0_m > 0.0) {
        return Err(invalid(
            "optimizer.delta0_m",
            format!("must be positive (got {delta0_m})"),
        ));
    }
    let beta = o.beta.unwrap_or(0.5);
    if !(beta.is_finite() && beta > 0.0 && beta < 1.0) {
        return Err(invalid(
            "optimizer.beta",
            format!("must lie strictly between 0 and 1 (got {beta})"),
        ));
    }
    let epsilon_m = o.epsilon_m.unwrap_or(1.0);
    if !(epsilon_m.is_finite() && epsilon_m > 0.0) {
        return Err(invalid(
            "optimizer.epsilon_m",
            format!("must be positive (got {epsilon_m})"),
        ));
    }
    let max_iters = o.max_iters.unwrap_or(500);
    if max_iters == 0 {
        return Err(invalid("optimizer.max_iters", "needs at least one iteration"));
    }
    let mut seed = o.seed.unwrap_or(1);
    if let Ok(env_seed) = std::env::var(SEED_ENV_VAR) {
        seed = env_seed.trim().parse().map_err(|_| {
            invalid(
                "optimizer.seed",
                format!("{SEED_ENV_VAR} must be an unsigned integer (got {env_seed:?})"),
            )
        })?;
    }
    let optimizer = OptimizerConfig {
        delta0_m,
        beta,
        epsilon_m,
        max_iters,
        seed,
        initial: o.initial.unwrap_or(InitialPlacement::Hover),
        lookup: match o.lookup.unwrap_or(RawLookup::Nearest) {
            RawLookup::Nearest => LookupMode::Nearest,
            RawLookup::Bilinear => LookupMode::Bilinear,
        },
    };

    let r = &raw.run;
    let grid_step_m = r.grid_step_m.unwrap_or(5.0);
    if !(grid_step_m.is_finite() && grid_step_m > 0.0) {
        return Err(invalid(
            "run.grid_step_m",
            format!("must be positive (got {grid_step_m})"),
        ));
    }
    let budget = r.budget.unwrap_or(1_000_000_000);
    if budget == 0 {
        return Err(invalid("run.budget", "needs at least one evaluation"));
    }
    let los_ref_gain_db = r.los_ref_gain_db.unwrap_or(-30.0);
    if !(los_ref_gain_db.is_finite() && los_ref_gain_db <= 0.0) {
        return Err(invalid(
            "run.los_ref_gain_db",
            format!("reference gain must be <= 0 dB (got {los_ref_gain_db})"),
        ));
    }
    let sweep_dbm = match &r.sweep_dbm {
        Some(text) => Some(SweepRange::parse(text)?),
        None => None,
    };
    let run = RunConfig {
        mode: r.mode.unwrap_or(RunMode::Optimize),
        grid_step_m,
        sweep_dbm,
        output_dir: r.output_dir.clone(),
        scheme: r.scheme,
        budget,
        los_ref_gain_db,
    };

    Ok(ExperimentConfig {
        scene: SceneConfig {
            area,
            altitude_m: raw.scene.altitude_m,
            noise_w,
            gbs,
        },
        uav: UavConfig {
            count,
            power_dbm,
            power_w,
            weights,
        },
        optimizer,
        run,
        base_dir,
    })
}
