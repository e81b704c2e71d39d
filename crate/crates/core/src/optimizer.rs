//! Derivative-free placement search.
//!
//! The driver keeps a quadratic surrogate interpolated on sampled placements
//! and repeats: fit the surrogate, maximize it inside the trust region, try
//! the resulting placement against the real objective. Improvements move the
//! centre and retire the farthest interpolation point; failures shrink the
//! radius and may still recycle the trial into the set. When the radius has
//! collapsed but the set is still spread out, the radius snaps back to its
//! initial value so the surrogate can be rebuilt from fresh geometry. The
//! incumbent objective value never decreases.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::Rect;
use crate::net::{Objective, Placement};
use crate::surrogate::{
    build_model, furthest_point, points_condition, points_nondegenerate, required_points,
    InterpolationSet,
};
use crate::trs::{self, TrsProblem};

/// Attempts to draw a non-degenerate initial interpolation set.
pub const INIT_DRAW_CAP: usize = 50;

/// Redraws allowed when repairing a degenerate set during the search.
pub const REPAIR_DRAW_CAP: usize = 50;

/// Rebuild attempts after a failed model fit, each preceded by one forced
/// point replacement.
pub const MODEL_REBUILD_CAP: usize = 8;

/// Steps at or below this length (metres) are treated as no movement; the
/// failed-trial recycling rule skips them, since inserting a copy of the
/// centre would make the interpolation system singular.
pub const ZERO_STEP_M: f64 = 1e-12;

/// Trust-region controls plus the current radius.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustRegionState {
    /// Current radius in metres.
    pub delta: f64,
    /// Initial radius; also the value the radius resets to.
    pub delta0: f64,
    /// Multiplicative radius shrink on a failed trial, in (0, 1).
    pub shrink: f64,
    /// Convergence scale in metres: the search stops once the radius and the
    /// whole interpolation set sit within this distance of the centre.
    pub tol: f64,
    /// Upper bound on the number of iterations.
    pub max_iters: usize,
}

impl TrustRegionState {
    pub fn new(delta0: f64, shrink: f64, tol: f64, max_iters: usize) -> Result<Self> {
        if !(delta0.is_finite() && delta0 > 0.0) {
            return Err(Error::invalid(
                "initial trust-region radius",
                format!("{delta0} m; must be finite and positive"),
            ));
        }
        if !(shrink > 0.0 && shrink < 1.0) {
            return Err(Error::invalid(
                "shrink factor",
                format!("{shrink}; must lie strictly between 0 and 1"),
            ));
        }
        if !(tol.is_finite() && tol > 0.0) {
            return Err(Error::invalid(
                "convergence tolerance",
                format!("{tol} m; must be finite and positive"),
            ));
        }
        if max_iters == 0 {
            return Err(Error::invalid("max_iters", "must be at least 1"));
        }
        Ok(Self {
            delta: delta0,
            delta0,
            shrink,
            tol,
            max_iters,
        })
    }

    /// Conventional controls for a given target area: the radius starts at a
    /// quarter of the shorter side, halves on failure, and the search stops
    /// at metre scale after at most 500 iterations.
    pub fn defaults_for(area: &Rect) -> Result<Self> {
        Self::new(area.shorter_side() / 4.0, 0.5, 1.0, 500)
    }
}

/// Snapshot of the search after an iteration (or of the initial state, with
/// `iteration == 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Objective value of the current centre.
    pub objective: f64,
    /// Trust-region radius after this iteration's update.
    pub delta: f64,
    /// Whether this iteration's trial replaced the centre.
    pub accepted: bool,
    /// Objective evaluations consumed so far (cumulative).
    pub eval_count: u64,
    pub placement: Placement,
}

/// Receives iteration records as they are produced.
pub trait IterationSink {
    fn record(&mut self, rec: &IterationRecord);
}

impl IterationSink for Vec<IterationRecord> {
    fn record(&mut self, rec: &IterationRecord) {
        self.push(rec.clone());
    }
}

/// Discards records; useful when only the final placement matters.
pub struct NoSink;

impl IterationSink for NoSink {
    fn record(&mut self, _rec: &IterationRecord) {}
}

fn sample_stacked(area: &Rect, uavs: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let mut v = DVector::zeros(2 * uavs);
    for k in 0..uavs {
        // Manual lerp instead of a range sample so degenerate (zero-width)
        // areas sample their single coordinate instead of panicking.
        let ux: f64 = rng.random();
        let uy: f64 = rng.random();
        v[2 * k] = area.xmin + ux * area.width();
        v[2 * k + 1] = area.ymin + uy * area.height();
    }
    v
}

/// Uniform placement draw over `area`, deterministic in `seed`. Callers
/// running a seeded search afterwards should derive a distinct seed for the
/// draw so the two streams stay independent.
pub fn uniform_placement(area: &Rect, uav_count: usize, seed: u64) -> Placement {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Placement::from_vector(&sample_stacked(area, uav_count, &mut rng))
}

/// Draws interpolation points uniformly over the area until their geometry
/// is non-degenerate, then evaluates the objective on them. Point geometry
/// is checked before spending evaluations.
pub fn initial_interpolation_set(
    centre: &DVector<f64>,
    obj: &dyn Objective,
    rng: &mut ChaCha8Rng,
) -> Result<InterpolationSet> {
    let n = centre.len();
    let need = required_points(n);
    let area = obj.area();
    let uavs = obj.uav_count();
    for _ in 0..INIT_DRAW_CAP {
        let points: Vec<DVector<f64>> =
            (0..need).map(|_| sample_stacked(&area, uavs, rng)).collect();
        if !points_nondegenerate(centre, &points) {
            continue;
        }
        let mut values = Vec::with_capacity(need);
        for p in &points {
            values.push(obj.value(&Placement::from_vector(p))?);
        }
        return Ok(InterpolationSet::new(points, values)?);
    }
    Err(Error::SetRepairExhausted {
        attempts: INIT_DRAW_CAP,
    })
}

/// Stateful driver owning the centre, its surrogate data, and the radius.
pub struct PlacementOptimizer<'a> {
    obj: &'a dyn Objective,
    state: TrustRegionState,
    centre: DVector<f64>,
    value: f64,
    sigma: InterpolationSet,
    rng: ChaCha8Rng,
    iteration: usize,
}

impl<'a> PlacementOptimizer<'a> {
    /// Evaluates the starting placement, draws the interpolation set, and
    /// leaves the driver ready to step. Costs `1 + set size` evaluations.
    pub fn new(
        obj: &'a dyn Objective,
        start: &Placement,
        state: TrustRegionState,
        seed: u64,
    ) -> Result<Self> {
        if start.uav_count() != obj.uav_count() {
            return Err(Error::invalid(
                "starting placement",
                format!(
                    "{} UAVs for an objective over {}",
                    start.uav_count(),
                    obj.uav_count()
                ),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let area = obj.area();
        let mut centre = start.to_vector();
        clamp_stacked(&mut centre, &area);
        let value = obj.value(&Placement::from_vector(&centre))?;
        let sigma = initial_interpolation_set(&centre, obj, &mut rng)?;
        Ok(Self {
            obj,
            state,
            centre,
            value,
            sigma,
            rng,
            iteration: 0,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn state(&self) -> &TrustRegionState {
        &self.state
    }

    pub fn objective_value(&self) -> f64 {
        self.value
    }

    pub fn placement(&self) -> Placement {
        Placement::from_vector(&self.centre)
    }

    pub fn interpolation_set(&self) -> &InterpolationSet {
        &self.sigma
    }

    /// Snapshot of the current state, tagged with the current iteration.
    pub fn record(&self) -> IterationRecord {
        self.record_with(false)
    }

    fn record_with(&self, accepted: bool) -> IterationRecord {
        IterationRecord {
            iteration: self.iteration,
            objective: self.value,
            delta: self.state.delta,
            accepted,
            eval_count: self.obj.eval_count(),
            placement: self.placement(),
        }
    }

    /// The search is converged when the radius is below tolerance and every
    /// interpolation point is within tolerance of the centre.
    pub fn converged(&self) -> bool {
        self.state.delta < self.state.tol
            && self.sigma.max_distance_from(&self.centre) <= self.state.tol
    }

    /// One trust-region iteration: fit, step, test, update. Exactly one new
    /// objective evaluation per call, plus any consumed by degeneracy repair.
    pub fn step(&mut self) -> Result<IterationRecord> {
        self.iteration += 1;
        let trs_seed: u64 = self.rng.random();

        // A fit can fail on a set that still passes the degeneracy gate (the
        // residual check is stricter), so each retry forces a replacement
        // instead of trusting the gate.
        let mut fit = build_model(&self.centre, self.value, &self.sigma);
        for _ in 0..MODEL_REBUILD_CAP {
            match fit {
                Err(Error::DegenerateSet { .. }) | Err(Error::InterpolationResidual { .. }) => {
                    self.improve_set_geometry()?;
                    fit = build_model(&self.centre, self.value, &self.sigma);
                }
                _ => break,
            }
        }
        let model = fit?;

        let problem = TrsProblem {
            model: &model,
            centre: self.centre.clone(),
            delta: self.state.delta,
            area: self.obj.area(),
        };
        let step = trs::solve(&problem, trs_seed);

        let mut trial = &self.centre + &step;
        clamp_stacked(&mut trial, &self.obj.area());
        let trial_value = self.obj.value(&Placement::from_vector(&trial))?;

        // The farthest point leaves the set regardless of the outcome; pick
        // it before the centre moves.
        let lout = furthest_point(&self.sigma, &self.centre);
        let step_len = (&trial - &self.centre).norm();

        let accepted = trial_value > self.value;
        if accepted {
            let old_centre = std::mem::replace(&mut self.centre, trial);
            let old_value = std::mem::replace(&mut self.value, trial_value);
            self.sigma.replace(lout, old_centre, old_value);
        } else {
            self.state.delta *= self.state.shrink;
            let lout_dist = (self.sigma.point(lout) - &self.centre).norm();
            // Recycle the failed trial when it tightens the set, never when
            // it would duplicate the centre.
            if step_len > ZERO_STEP_M && lout_dist >= step_len {
                self.sigma.replace(lout, trial, trial_value);
            }
        }

        self.repair_set()?;

        // A collapsed radius with a still-spread set means the surrogate
        // geometry is stale rather than converged: start a fresh cycle.
        if self.state.delta < self.state.tol
            && self.sigma.max_distance_from(&self.centre) > self.state.tol
        {
            self.state.delta = self.state.delta0;
        }

        Ok(self.record_with(accepted))
    }

    /// Restores set non-degeneracy by redrawing points, most recent
    /// insertion first. Replacing only the newest point cannot fix a row
    /// that duplicates the centre after an accepted step, so the fallback
    /// sweeps the whole set round-robin.
    fn repair_set(&mut self) -> Result<()> {
        if points_nondegenerate(&self.centre, self.sigma.points()) {
            return Ok(());
        }
        let area = self.obj.area();
        let uavs = self.obj.uav_count();
        let mut slot = self.sigma.last_inserted();
        for attempt in 0..REPAIR_DRAW_CAP {
            let cand = sample_stacked(&area, uavs, &mut self.rng);
            let mut points = self.sigma.points().to_vec();
            points[slot] = cand.clone();
            if points_nondegenerate(&self.centre, &points) {
                let value = self.obj.value(&Placement::from_vector(&cand))?;
                self.sigma.replace(slot, cand, value);
                return Ok(());
            }
            // Half the budget goes to the newest slot, then rotate.
            if attempt + 1 >= REPAIR_DRAW_CAP / 2 {
                slot = (slot + 1) % self.sigma.len();
            }
        }
        Err(Error::SetRepairExhausted {
            attempts: REPAIR_DRAW_CAP,
        })
    }

    /// Replaces whichever set point most lowers the scaled condition number
    /// when redrawn, trying every slot for each candidate draw. Costs one
    /// objective evaluation on success. Unlike [`Self::repair_set`] this
    /// never leaves the set untouched: it serves the case where a fit failed
    /// on geometry the degeneracy gate still accepts.
    fn improve_set_geometry(&mut self) -> Result<()> {
        let area = self.obj.area();
        let uavs = self.obj.uav_count();
        let mut best_cond = points_condition(&self.centre, self.sigma.points());
        let mut best: Option<(usize, DVector<f64>)> = None;
        let mut points = self.sigma.points().to_vec();
        for _ in 0..REPAIR_DRAW_CAP {
            let cand = sample_stacked(&area, uavs, &mut self.rng);
            for slot in 0..points.len() {
                let saved = std::mem::replace(&mut points[slot], cand.clone());
                let cond = points_condition(&self.centre, &points);
                points[slot] = saved;
                if cond < best_cond {
                    best_cond = cond;
                    best = Some((slot, cand.clone()));
                }
            }
        }
        match best {
            Some((slot, point)) => {
                let value = self.obj.value(&Placement::from_vector(&point))?;
                self.sigma.replace(slot, point, value);
                Ok(())
            }
            None => Err(Error::SetRepairExhausted {
                attempts: REPAIR_DRAW_CAP,
            }),
        }
    }
}

fn clamp_stacked(v: &mut DVector<f64>, area: &Rect) {
    for k in 0..v.len() / 2 {
        v[2 * k] = v[2 * k].clamp(area.xmin, area.xmax);
        v[2 * k + 1] = v[2 * k + 1].clamp(area.ymin, area.ymax);
    }
}

/// Everything a finished search produced.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub placement: Placement,
    pub value: f64,
    pub records: Vec<IterationRecord>,
}

/// Runs the search to convergence or the iteration cap, collecting records.
pub fn run(
    obj: &dyn Objective,
    start: &Placement,
    state: TrustRegionState,
    seed: u64,
) -> Result<RunResult> {
    let mut records = Vec::new();
    let (placement, value) = run_with_sink(obj, start, state, seed, &mut records)?;
    Ok(RunResult {
        placement,
        value,
        records,
    })
}

/// Like [`run`], streaming records into `sink`. The first record is the
/// initial state (iteration 0), then one record per iteration.
pub fn run_with_sink(
    obj: &dyn Objective,
    start: &Placement,
    state: TrustRegionState,
    seed: u64,
    sink: &mut dyn IterationSink,
) -> Result<(Placement, f64)> {
    let mut opt = PlacementOptimizer::new(obj, start, state, seed)?;
    sink.record(&opt.record());
    while opt.iteration() < opt.state().max_iters && !opt.converged() {
        let rec = opt.step()?;
        sink.record(&rec);
    }
    Ok((opt.placement(), opt.objective_value()))
}
