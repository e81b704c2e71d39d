//! Uplink network model: UAV placements, per-link SINR and rate, and the
//! weighted sum-rate objective with its evaluation counter.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DVector;

use crate::ckm::{GridCkm, LookupMode};
use crate::error::{Error, Result};
use crate::geom::{Point2, Rect};

/// Slack in metres when testing rectangle membership, absorbing solver
/// rounding at the area boundary.
pub const FEASIBILITY_TOL_M: f64 = 1e-9;

/// Horizontal positions of all UAVs, one per station, in station order.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    positions: Vec<Point2>,
}

impl Placement {
    pub fn new(positions: Vec<Point2>) -> Self {
        Self { positions }
    }

    pub fn uav_count(&self) -> usize {
        self.positions.len()
    }

    pub fn position(&self, k: usize) -> Point2 {
        self.positions[k]
    }

    pub fn positions(&self) -> &[Point2] {
        &self.positions
    }

    pub fn set_position(&mut self, k: usize, p: Point2) {
        self.positions[k] = p;
    }

    /// Stacked coordinate vector (x1, y1, x2, y2, ...).
    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(2 * self.positions.len());
        for (k, p) in self.positions.iter().enumerate() {
            v[2 * k] = p.x;
            v[2 * k + 1] = p.y;
        }
        v
    }

    /// Inverse of [`Placement::to_vector`]; the length must be even.
    pub fn from_vector(v: &DVector<f64>) -> Self {
        assert!(v.len() % 2 == 0, "stacked placement needs an even length");
        Self {
            positions: (0..v.len() / 2)
                .map(|k| Point2::new(v[2 * k], v[2 * k + 1]))
                .collect(),
        }
    }

    pub fn is_feasible(&self, area: &Rect) -> bool {
        self.positions
            .iter()
            .all(|p| area.contains(*p, FEASIBILITY_TOL_M))
    }

    fn check_feasible(&self, area: &Rect) -> Result<()> {
        for (k, p) in self.positions.iter().enumerate() {
            if !area.contains(*p, FEASIBILITY_TOL_M) {
                return Err(Error::InfeasiblePlacement {
                    uav: k + 1,
                    x: p.x,
                    y: p.y,
                });
            }
        }
        Ok(())
    }
}

/// Black-box placement objective: feasible placements of a fixed number of
/// UAVs over a rectangular area, scored by a scalar to maximize. Every call
/// to [`Objective::value`] counts one evaluation.
pub trait Objective: Sync {
    fn uav_count(&self) -> usize;
    fn area(&self) -> Rect;
    fn value(&self, placement: &Placement) -> Result<f64>;
    fn eval_count(&self) -> u64;
    fn reset_eval_count(&self);
}

/// Per-UAV rates for arbitrary link gains.
///
/// `gain(k, j)` is the linear power gain from UAV `j` to station `k`. UAV `k`
/// transmits at `power_w[k]`; station `k` sees the other UAVs as interference
/// over noise power `noise_w[k]`. Returns `log2(1 + sinr)` per UAV.
pub fn rates_from_gains(
    power_w: &[f64],
    noise_w: &[f64],
    gain: impl Fn(usize, usize) -> Result<f64>,
) -> Result<Vec<f64>> {
    let k_total = power_w.len();
    let mut rates = Vec::with_capacity(k_total);
    for k in 0..k_total {
        let desired = power_w[k] * gain(k, k)?;
        let mut interference = 0.0;
        for j in 0..k_total {
            if j != k {
                interference += power_w[j] * gain(k, j)?;
            }
        }
        let sinr = desired / (interference + noise_w[k]);
        rates.push((1.0 + sinr).log2());
    }
    Ok(rates)
}

pub fn weighted_sum(weights: &[f64], rates: &[f64]) -> f64 {
    weights.iter().zip(rates).map(|(w, r)| w * r).sum()
}

/// A concrete uplink scene: stations with their gain maps, UAV transmit
/// powers, receiver noise, and rate weights.
///
/// Station `k` serves UAV `k`. All gain lookups for station `k` go through
/// its map, so the landscape the optimizer sees is exactly as granular as
/// the maps themselves.
#[derive(Debug)]
pub struct NetworkScene {
    gbs: Vec<Point2>,
    gbs_height_m: f64,
    altitude_m: f64,
    ckms: Vec<GridCkm>,
    power_w: Vec<f64>,
    noise_w: Vec<f64>,
    weights: Vec<f64>,
    area: Rect,
    lookup: LookupMode,
    evals: AtomicU64,
}

impl NetworkScene {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        gbs: Vec<Point2>,
        gbs_height_m: f64,
        altitude_m: f64,
        ckms: Vec<GridCkm>,
        power_w: Vec<f64>,
        noise_w: Vec<f64>,
        weights: Vec<f64>,
        area: Rect,
        lookup: LookupMode,
    ) -> Result<Self> {
        let k = gbs.len();
        if k == 0 {
            return Err(Error::invalid("scene", "needs at least one station"));
        }
        if !area.is_proper() {
            return Err(Error::invalid(
                "target area",
                format!("{area}; needs positive extent on both axes"),
            ));
        }
        for (name, v) in [("ckms", ckms.len()), ("power_w", power_w.len()),
            ("noise_w", noise_w.len()), ("weights", weights.len())]
        {
            if v != k {
                return Err(Error::invalid(
                    "scene",
                    format!("{name} has {v} entries for {k} stations"),
                ));
            }
        }
        for (name, vals) in [("transmit power", &power_w), ("noise power", &noise_w),
            ("rate weight", &weights)]
        {
            for &v in vals.iter() {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::invalid(
                        "scene",
                        format!("{name} {v}; must be finite and positive"),
                    ));
                }
            }
        }
        if !(altitude_m.is_finite() && altitude_m > 0.0) {
            return Err(Error::invalid("flight altitude", format!("{altitude_m} m")));
        }
        if !(gbs_height_m.is_finite() && gbs_height_m >= 0.0) {
            return Err(Error::invalid("station height", format!("{gbs_height_m} m")));
        }
        for (i, ckm) in ckms.iter().enumerate() {
            if !ckm.covers(&area) {
                return Err(Error::invalid(
                    "gain map",
                    format!(
                        "map {} extent {} does not cover the target area {area}",
                        i + 1,
                        ckm.extent()
                    ),
                ));
            }
        }
        Ok(Self {
            gbs,
            gbs_height_m,
            altitude_m,
            ckms,
            power_w,
            noise_w,
            weights,
            area,
            lookup,
            evals: AtomicU64::new(0),
        })
    }

    pub fn gbs_positions(&self) -> &[Point2] {
        &self.gbs
    }

    pub fn gbs_height_m(&self) -> f64 {
        self.gbs_height_m
    }

    pub fn altitude_m(&self) -> f64 {
        self.altitude_m
    }

    pub fn power_w(&self) -> &[f64] {
        &self.power_w
    }

    pub fn noise_w(&self) -> &[f64] {
        &self.noise_w
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn lookup_mode(&self) -> LookupMode {
        self.lookup
    }

    pub fn ckm(&self, k: usize) -> &GridCkm {
        &self.ckms[k]
    }

    /// Linear gain from a UAV at `q` to station `k`, read from station `k`'s map.
    pub fn gain(&self, k: usize, q: Point2) -> Result<f64> {
        self.ckms[k].lookup_gain_with(q, self.lookup)
    }

    /// SINR of UAV `k`'s uplink under the given placement.
    pub fn sinr(&self, placement: &Placement, k: usize) -> Result<f64> {
        let desired = self.power_w[k] * self.gain(k, placement.position(k))?;
        let mut interference = 0.0;
        for j in 0..placement.uav_count() {
            if j != k {
                interference += self.power_w[j] * self.gain(k, placement.position(j))?;
            }
        }
        Ok(desired / (interference + self.noise_w[k]))
    }

    /// Spectral efficiency of UAV `k`'s uplink in bps/Hz.
    pub fn rate(&self, placement: &Placement, k: usize) -> Result<f64> {
        Ok((1.0 + self.sinr(placement, k)?).log2())
    }

    pub fn per_uav_rates(&self, placement: &Placement) -> Result<Vec<f64>> {
        rates_from_gains(&self.power_w, &self.noise_w, |k, j| {
            self.gain(k, placement.position(j))
        })
    }

    /// The objective: weighted sum of per-UAV rates. Rejects infeasible
    /// placements and increments the evaluation counter exactly once.
    pub fn weighted_sum_rate(&self, placement: &Placement) -> Result<f64> {
        placement.check_feasible(&self.area)?;
        self.evals.fetch_add(1, Ordering::Relaxed);
        let rates = self.per_uav_rates(placement)?;
        Ok(weighted_sum(&self.weights, &rates))
    }

    /// Default starting placement: each UAV above its station, projected
    /// into the target area when the station sits outside it.
    pub fn hover_start(&self) -> Placement {
        Placement::new(self.gbs.iter().map(|w| self.area.clamp(*w)).collect())
    }
}

impl Objective for NetworkScene {
    fn uav_count(&self) -> usize {
        self.gbs.len()
    }

    fn area(&self) -> Rect {
        self.area
    }

    fn value(&self, placement: &Placement) -> Result<f64> {
        self.weighted_sum_rate(placement)
    }

    fn eval_count(&self) -> u64 {
        self.evals.load(Ordering::Relaxed)
    }

    fn reset_eval_count(&self) {
        self.evals.store(0, Ordering::Relaxed);
    }
}
