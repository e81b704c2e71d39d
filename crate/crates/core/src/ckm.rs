//! Discrete channel-gain maps: CSV input/output, node lookup, and a synthetic
//! map generator for box-city scenes.
//!
//! A map stores large-scale channel gains in dB on a uniform horizontal grid
//! at a fixed altitude. Values stay in dB on disk and in memory; conversion
//! to linear power gain happens only at lookup time.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geom::{segment_prism_overlap, Point2, Point3, Prism, Rect};

/// Relative tolerance for spacing uniformity when loading a map.
pub const SPACING_REL_TOL: f64 = 1e-6;

const CSV_HEADER: &str = "x_m,y_m,gain_db";

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Off-grid lookup policy. `Nearest` keeps the map an honest discrete
/// database; `Bilinear` blends the four surrounding nodes for experiments
/// that prefer a continuous landscape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LookupMode {
    #[default]
    Nearest,
    Bilinear,
}

/// Uniform grid of channel gains for one base station.
///
/// Nodes live at `origin + (ix, iy) * spacing` for `ix in 0..nx`,
/// `iy in 0..ny`. Gains are stored row-major with `y` as the outer index,
/// matching the on-disk row order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCkm {
    origin: Point2,
    spacing_m: f64,
    nx: usize,
    ny: usize,
    // Node coordinates kept verbatim (as parsed or as constructed) so that
    // save() reproduces its input bytes exactly.
    xs: Vec<f64>,
    ys: Vec<f64>,
    gains_db: Vec<f64>,
}

impl GridCkm {
    /// Builds a map from its grid parameters. `gains_db` is row-major with
    /// `y` outer, `len == nx * ny`; every gain must be finite and `<= 0` dB.
    pub fn new(
        origin: Point2,
        spacing_m: f64,
        nx: usize,
        ny: usize,
        gains_db: Vec<f64>,
    ) -> Result<Self> {
        if !(spacing_m.is_finite() && spacing_m > 0.0) {
            return Err(Error::invalid(
                "grid spacing",
                format!("{spacing_m} m; must be finite and positive"),
            ));
        }
        if nx < 2 || ny < 2 {
            return Err(Error::invalid(
                "grid size",
                format!("{nx} x {ny}; need at least 2 nodes per axis"),
            ));
        }
        if !(origin.x.is_finite() && origin.y.is_finite()) {
            return Err(Error::invalid("grid origin", "coordinates must be finite"));
        }
        let xs = (0..nx).map(|i| origin.x + i as f64 * spacing_m).collect();
        let ys = (0..ny).map(|i| origin.y + i as f64 * spacing_m).collect();
        Self::from_axes(xs, ys, spacing_m, gains_db)
    }

    fn from_axes(xs: Vec<f64>, ys: Vec<f64>, spacing_m: f64, gains_db: Vec<f64>) -> Result<Self> {
        let (nx, ny) = (xs.len(), ys.len());
        if gains_db.len() != nx * ny {
            return Err(Error::invalid(
                "gain table",
                format!("{} values for a {nx} x {ny} grid", gains_db.len()),
            ));
        }
        for &g in &gains_db {
            if !g.is_finite() {
                return Err(Error::invalid("channel gain", "non-finite value"));
            }
            if g > 0.0 {
                return Err(Error::invalid(
                    "channel gain",
                    format!("{g} dB; passive large-scale gains cannot exceed 0 dB"),
                ));
            }
        }
        Ok(Self {
            origin: Point2::new(xs[0], ys[0]),
            spacing_m,
            nx,
            ny,
            xs,
            ys,
            gains_db,
        })
    }

    pub fn origin(&self) -> Point2 {
        self.origin
    }

    pub fn spacing_m(&self) -> f64 {
        self.spacing_m
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn node(&self, ix: usize, iy: usize) -> Point2 {
        Point2::new(self.xs[ix], self.ys[iy])
    }

    pub fn gain_db_at(&self, ix: usize, iy: usize) -> f64 {
        self.gains_db[iy * self.nx + ix]
    }

    /// Hull of the node lattice.
    pub fn node_bounds(&self) -> Rect {
        Rect::new(
            self.xs[0],
            *self.xs.last().unwrap(),
            self.ys[0],
            *self.ys.last().unwrap(),
        )
    }

    /// Region the map can answer queries for: the node hull expanded by half
    /// a spacing on every side, so every point has a defined nearest node.
    pub fn extent(&self) -> Rect {
        let h = 0.5 * self.spacing_m;
        let b = self.node_bounds();
        Rect::new(b.xmin - h, b.xmax + h, b.ymin - h, b.ymax + h)
    }

    pub fn covers(&self, area: &Rect) -> bool {
        self.extent().contains_rect(area, 1e-9)
    }

    fn snap(t: f64, n: usize) -> usize {
        // Round half toward the smaller index, so midpoints between nodes
        // resolve to the lower coordinate.
        let i = (t - 0.5).ceil().max(0.0).min((n - 1) as f64);
        i as usize
    }

    /// Indices of the nearest node; ties snap toward smaller x, then smaller y.
    pub fn nearest_node(&self, q: Point2) -> Result<(usize, usize)> {
        self.check_extent(q)?;
        let tx = (q.x - self.origin.x) / self.spacing_m;
        let ty = (q.y - self.origin.y) / self.spacing_m;
        Ok((Self::snap(tx, self.nx), Self::snap(ty, self.ny)))
    }

    fn check_extent(&self, q: Point2) -> Result<()> {
        if !q.x.is_finite() || !q.y.is_finite() || !self.extent().contains(q, 0.0) {
            return Err(Error::OutsideMap {
                x: q.x,
                y: q.y,
                bounds: self.extent().to_string(),
            });
        }
        Ok(())
    }

    /// Gain at the node the query snaps to, still in dB.
    pub fn gain_db_nearest(&self, q: Point2) -> Result<f64> {
        let (ix, iy) = self.nearest_node(q)?;
        Ok(self.gain_db_at(ix, iy))
    }

    fn gain_db_bilinear(&self, q: Point2) -> Result<f64> {
        self.check_extent(q)?;
        let tx = ((q.x - self.origin.x) / self.spacing_m).clamp(0.0, (self.nx - 1) as f64);
        let ty = ((q.y - self.origin.y) / self.spacing_m).clamp(0.0, (self.ny - 1) as f64);
        let ix = (tx.floor() as usize).min(self.nx - 2);
        let iy = (ty.floor() as usize).min(self.ny - 2);
        let fx = tx - ix as f64;
        let fy = ty - iy as f64;
        let g00 = self.gain_db_at(ix, iy);
        let g10 = self.gain_db_at(ix + 1, iy);
        let g01 = self.gain_db_at(ix, iy + 1);
        let g11 = self.gain_db_at(ix + 1, iy + 1);
        let gx0 = g00 + fx * (g10 - g00);
        let gx1 = g01 + fx * (g11 - g01);
        Ok(gx0 + fy * (gx1 - gx0))
    }

    /// Linear power gain at an arbitrary query point using nearest-node
    /// lookup. Queries outside [`GridCkm::extent`] are rejected.
    pub fn lookup_gain(&self, q: Point2) -> Result<f64> {
        self.lookup_gain_with(q, LookupMode::Nearest)
    }

    pub fn lookup_gain_with(&self, q: Point2, mode: LookupMode) -> Result<f64> {
        let db = match mode {
            LookupMode::Nearest => self.gain_db_nearest(q)?,
            LookupMode::Bilinear => self.gain_db_bilinear(q)?,
        };
        Ok(db_to_linear(db))
    }

    /// Node with the largest stored gain; ties keep the first node in row
    /// order (smaller y, then smaller x).
    pub fn strongest_node(&self) -> (Point2, f64) {
        let mut best = 0;
        for i in 1..self.gains_db.len() {
            if self.gains_db[i] > self.gains_db[best] {
                best = i;
            }
        }
        (
            self.node(best % self.nx, best / self.nx),
            self.gains_db[best],
        )
    }
}

/// Parses a map CSV. The expected layout is a `x_m,y_m,gain_db` header and
/// one row per node, y ascending in the outer loop and x ascending in the
/// inner loop, with no gaps.
pub fn load_ckm(path: &Path) -> Result<GridCkm> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })?;
    let fmt = |line: usize, msg: String| Error::CkmFormat {
        path: path.into(),
        line,
        msg,
    };

    let mut lines = text.lines().enumerate();
    let header = match lines.next() {
        Some((_, h)) => h,
        None => return Err(fmt(1, "empty file".into())),
    };
    if header.trim_end_matches('\r') != CSV_HEADER {
        return Err(fmt(1, format!("expected header '{CSV_HEADER}', found '{header}'")));
    }

    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    for (idx, raw) in lines {
        let lineno = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let mut next = |name: &str| -> Result<f64> {
            let field = fields
                .next()
                .ok_or_else(|| fmt(lineno, format!("missing {name} field")))?;
            field
                .trim()
                .parse::<f64>()
                .map_err(|e| fmt(lineno, format!("bad {name} value '{field}': {e}")))
        };
        let x = next("x_m")?;
        let y = next("y_m")?;
        let g = next("gain_db")?;
        if fields.next().is_some() {
            return Err(fmt(lineno, "more than three fields".into()));
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(fmt(lineno, "non-finite coordinate".into()));
        }
        if !g.is_finite() {
            return Err(Error::NonFiniteGain {
                path: path.into(),
                line: lineno,
            });
        }
        rows.push((x, y, g));
    }

    if rows.len() < 4 {
        return Err(fmt(
            rows.len() + 1,
            format!("{} data rows; a grid needs at least 2 x 2 nodes", rows.len()),
        ));
    }

    // The first block of rows sharing the initial y value fixes nx.
    let y0 = rows[0].1;
    let nx = rows.iter().take_while(|r| r.1 == y0).count();
    if nx < 2 {
        return Err(fmt(2, "fewer than 2 nodes along x".into()));
    }
    if rows.len() % nx != 0 {
        return Err(fmt(
            rows.len() + 1,
            format!("{} rows is not a multiple of the row width {nx}", rows.len()),
        ));
    }
    let ny = rows.len() / nx;
    if ny < 2 {
        return Err(fmt(rows.len() + 1, "fewer than 2 nodes along y".into()));
    }

    let xs: Vec<f64> = rows[..nx].iter().map(|r| r.0).collect();
    let ys: Vec<f64> = (0..ny).map(|iy| rows[iy * nx].1).collect();

    // Every row must sit exactly where the lattice expects it.
    for (t, &(x, y, _)) in rows.iter().enumerate() {
        let (ex, ey) = (xs[t % nx], ys[t / nx]);
        if x != ex || y != ey {
            return Err(Error::MissingNode {
                path: path.into(),
                line: t + 2,
                x: ex,
                y: ey,
                found_x: x,
                found_y: y,
            });
        }
    }

    let spacing = uniform_spacing(path, &xs, &ys)?;
    let gains = rows.into_iter().map(|r| r.2).collect();
    GridCkm::from_axes(xs, ys, spacing, gains)
}

fn uniform_spacing(path: &Path, xs: &[f64], ys: &[f64]) -> Result<f64> {
    let err = |msg: String| Error::NonUniformGrid {
        path: path.into(),
        msg,
    };
    let mut diffs = Vec::with_capacity(xs.len() + ys.len());
    for (axis, vals) in [("x", xs), ("y", ys)] {
        for w in vals.windows(2) {
            let d = w[1] - w[0];
            if !(d > 0.0) {
                return Err(err(format!(
                    "{axis} coordinates not strictly ascending near {}",
                    w[0]
                )));
            }
            diffs.push(d);
        }
    }
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    for &d in &diffs {
        if (d - mean).abs() > SPACING_REL_TOL * mean {
            return Err(err(format!(
                "step {d} m deviates from the mean spacing {mean} m"
            )));
        }
    }
    Ok(mean)
}

/// Writes a map in the exact format [`load_ckm`] reads. A load/save round
/// trip reproduces the input byte for byte.
pub fn save_ckm(ckm: &GridCkm, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(24 * ckm.nx * ckm.ny + 16);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for iy in 0..ckm.ny {
        for ix in 0..ckm.nx {
            let _ = writeln!(
                out,
                "{},{},{}",
                ckm.xs[ix],
                ckm.ys[iy],
                ckm.gain_db_at(ix, iy)
            );
        }
    }
    fs::write(path, out).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })
}

/// Propagation constants for the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthParams {
    /// Gain in dB at 1 m separation on an unobstructed path.
    pub ref_gain_db: f64,
    /// Flat penalty in dB applied once to any obstructed link.
    pub blockage_db: f64,
    /// Additional penalty per metre of path inside a building.
    pub penetration_db_per_m: f64,
}

/// Box-city scene: an area, the buildings in it, and propagation constants.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildingScene {
    pub area: Rect,
    pub buildings: Vec<Prism>,
    pub params: SynthParams,
}

impl BuildingScene {
    pub fn validate(&self) -> Result<()> {
        if !self.area.is_proper() {
            return Err(Error::invalid(
                "scene area",
                format!("{}; needs positive extent on both axes", self.area),
            ));
        }
        for (i, b) in self.buildings.iter().enumerate() {
            if !b.footprint.is_proper() {
                return Err(Error::invalid(
                    "building footprint",
                    format!("building {i}: {}", b.footprint),
                ));
            }
            if !self.area.contains_rect(&b.footprint, 1e-9) {
                return Err(Error::invalid(
                    "building footprint",
                    format!("building {i} extends outside the scene area"),
                ));
            }
            if !(b.height_m.is_finite() && b.height_m > 0.0) {
                return Err(Error::invalid(
                    "building height",
                    format!("building {i}: {} m", b.height_m),
                ));
            }
        }
        let p = self.params;
        if !p.ref_gain_db.is_finite() || p.ref_gain_db > 0.0 {
            return Err(Error::invalid(
                "reference gain",
                format!("{} dB; must be finite and <= 0", p.ref_gain_db),
            ));
        }
        if !(p.blockage_db >= 0.0) || !(p.penetration_db_per_m >= 0.0) {
            return Err(Error::invalid(
                "propagation penalties",
                "blockage and penetration penalties must be non-negative",
            ));
        }
        Ok(())
    }

    pub fn max_building_height(&self) -> f64 {
        self.buildings
            .iter()
            .map(|b| b.height_m)
            .fold(0.0, f64::max)
    }
}

/// Generates the gain map of one base station over the scene area.
///
/// Nodes lie on a lattice anchored at the area's lower-left corner with the
/// given spacing, covering the area. For each node the link to `gbs` is
/// traced against every building: an obstructed link pays the flat blockage
/// penalty once plus the per-metre penetration penalty along all interior
/// crossings; a clear link follows the inverse-square law exactly.
///
/// `altitude_m` must clear every building top unless `allow_low_altitude` is
/// set; maps for flight levels inside the skyline are almost always a
/// configuration mistake.
pub fn generate_synthetic_ckm(
    scene: &BuildingScene,
    gbs: Point3,
    altitude_m: f64,
    spacing_m: f64,
    allow_low_altitude: bool,
) -> Result<GridCkm> {
    scene.validate()?;
    if !(spacing_m.is_finite() && spacing_m > 0.0) {
        return Err(Error::invalid(
            "grid spacing",
            format!("{spacing_m} m; must be finite and positive"),
        ));
    }
    if !(altitude_m.is_finite() && altitude_m > 0.0) {
        return Err(Error::invalid(
            "flight altitude",
            format!("{altitude_m} m; must be finite and positive"),
        ));
    }
    if !allow_low_altitude && altitude_m <= scene.max_building_height() {
        return Err(Error::invalid(
            "flight altitude",
            format!(
                "{altitude_m} m does not clear the tallest building ({} m)",
                scene.max_building_height()
            ),
        ));
    }

    // Enough nodes to cover the area; the last node may overshoot the far
    // edge by less than one spacing.
    let count = |span: f64| ((span / spacing_m - 1e-9).ceil().max(1.0) as usize) + 1;
    let nx = count(scene.area.width()).max(2);
    let ny = count(scene.area.height()).max(2);

    let mut gains = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let node = Point3::new(
                scene.area.xmin + ix as f64 * spacing_m,
                scene.area.ymin + iy as f64 * spacing_m,
                altitude_m,
            );
            let h2 = (node.x - gbs.x).powi(2) + (node.y - gbs.y).powi(2);
            let d2 = h2 + (node.z - gbs.z).powi(2);
            if d2 == 0.0 {
                return Err(Error::ZeroDistance);
            }
            let mut inside_len = 0.0;
            let mut blocked = false;
            for prism in &scene.buildings {
                let (len, hit) = segment_prism_overlap(gbs, node, prism);
                if hit {
                    blocked = true;
                    inside_len += len;
                }
            }
            let loss = if blocked { scene.params.blockage_db } else { 0.0 }
                + scene.params.penetration_db_per_m * inside_len;
            gains.push(scene.params.ref_gain_db - 10.0 * d2.log10() - loss);
        }
    }

    GridCkm::new(
        Point2::new(scene.area.xmin, scene.area.ymin),
        spacing_m,
        nx,
        ny,
        gains,
    )
}

/// Base-station site listed in a scene file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbsSite {
    pub pos: Point2,
    pub height_m: f64,
}

/// A scene file: the box city plus the station sites and flight altitude the
/// maps should be generated for.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFile {
    pub scene: BuildingScene,
    pub gbs: Vec<GbsSite>,
    pub altitude_m: f64,
    pub allow_low_altitude: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneToml {
    area: AreaToml,
    generator: GeneratorToml,
    #[serde(default)]
    building: Vec<BuildingToml>,
    #[serde(default)]
    gbs: Vec<GbsToml>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AreaToml {
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratorToml {
    ref_gain_db: f64,
    blockage_db: f64,
    penetration_db_per_m: f64,
    altitude_m: f64,
    #[serde(default)]
    allow_low_altitude: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BuildingToml {
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
    height_m: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GbsToml {
    x_m: f64,
    y_m: f64,
    height_m: f64,
}

/// Loads a box-city scene description from TOML.
pub fn load_scene(path: &Path) -> Result<SceneFile> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })?;
    let raw: SceneToml = toml::from_str(&text).map_err(|e| Error::SceneFormat {
        path: path.into(),
        msg: e.to_string(),
    })?;
    let scene = BuildingScene {
        area: Rect::new(raw.area.xmin, raw.area.xmax, raw.area.ymin, raw.area.ymax),
        buildings: raw
            .building
            .iter()
            .map(|b| Prism {
                footprint: Rect::new(b.xmin, b.xmax, b.ymin, b.ymax),
                height_m: b.height_m,
            })
            .collect(),
        params: SynthParams {
            ref_gain_db: raw.generator.ref_gain_db,
            blockage_db: raw.generator.blockage_db,
            penetration_db_per_m: raw.generator.penetration_db_per_m,
        },
    };
    scene.validate().map_err(|e| Error::SceneFormat {
        path: path.into(),
        msg: e.to_string(),
    })?;
    Ok(SceneFile {
        scene,
        gbs: raw
            .gbs
            .iter()
            .map(|g| GbsSite {
                pos: Point2::new(g.x_m, g.y_m),
                height_m: g.height_m,
            })
            .collect(),
        altitude_m: raw.generator.altitude_m,
        allow_low_altitude: raw.generator.allow_low_altitude,
    })
}
