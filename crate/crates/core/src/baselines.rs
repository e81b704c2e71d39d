//! Comparison schemes: exhaustive lattice search, hovering above the
//! serving stations, and a free-space design re-scored against the maps.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{Point2, Rect};
use crate::net::{rates_from_gains, weighted_sum, NetworkScene, Objective, Placement};
use crate::optimizer::{self, TrustRegionState};

/// Candidate lattice for exhaustive search: area nodes spaced `step_m`
/// apart, anchored at the lower-left corner. Candidates are ordered x-major
/// (all y for the first x, then the next x), which together with station
/// order defines the lexicographic tie-break of the search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchGrid {
    step_m: f64,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl SearchGrid {
    pub fn new(area: &Rect, step_m: f64) -> Result<Self> {
        if !(step_m.is_finite() && step_m > 0.0) {
            return Err(Error::invalid(
                "lattice step",
                format!("{step_m} m; must be finite and positive"),
            ));
        }
        if !area.is_proper() {
            return Err(Error::invalid(
                "target area",
                format!("{area}; needs positive extent on both axes"),
            ));
        }
        let axis = |lo: f64, hi: f64| -> Vec<f64> {
            // Tolerate rounding at the far edge so spans that are an exact
            // multiple of the step include their endpoint.
            let count = ((hi - lo) / step_m + 1e-9).floor() as usize + 1;
            (0..count).map(|i| lo + i as f64 * step_m).collect()
        };
        Ok(Self {
            step_m,
            xs: axis(area.xmin, area.xmax),
            ys: axis(area.ymin, area.ymax),
        })
    }

    pub fn step_m(&self) -> f64 {
        self.step_m
    }

    pub fn point_count(&self) -> usize {
        self.xs.len() * self.ys.len()
    }

    /// Candidate by x-major rank.
    pub fn point(&self, idx: usize) -> Point2 {
        Point2::new(self.xs[idx / self.ys.len()], self.ys[idx % self.ys.len()])
    }

    pub fn points(&self) -> impl Iterator<Item = Point2> + '_ {
        (0..self.point_count()).map(|i| self.point(i))
    }
}

/// Scores every K-tuple of lattice candidates and returns the best placement.
///
/// The candidate count is `point_count()^K`, checked against `budget` before
/// any evaluation is spent. Exactly that many objective evaluations are
/// consumed. Ties keep the tuple whose stacked coordinates come first
/// lexicographically; the outermost station is sharded across threads, which
/// does not affect the result.
pub fn exhaustive_search(
    obj: &dyn Objective,
    grid: &SearchGrid,
    budget: u64,
) -> Result<(Placement, f64)> {
    let k = obj.uav_count();
    let c = grid.point_count();
    let mut required: u128 = 1;
    for _ in 0..k {
        required = required
            .checked_mul(c as u128)
            .ok_or(Error::BudgetExceeded {
                required: u128::MAX,
                budget,
            })?;
    }
    if required > budget as u128 {
        return Err(Error::BudgetExceeded { required, budget });
    }

    let shard = |i0: usize| -> Result<(f64, Placement)> {
        let mut placement = Placement::new(vec![grid.point(i0); k]);
        let mut best_val = f64::NEG_INFINITY;
        let mut best: Option<Placement> = None;
        if k == 1 {
            let v = obj.value(&placement)?;
            return Ok((v, placement));
        }
        // Odometer over stations 1..k, the last station fastest, matching
        // lexicographic order of the stacked coordinates.
        let mut idx = vec![0usize; k - 1];
        loop {
            for (d, &ci) in idx.iter().enumerate() {
                placement.set_position(d + 1, grid.point(ci));
            }
            let v = obj.value(&placement)?;
            if v > best_val {
                best_val = v;
                best = Some(placement.clone());
            }
            let mut d = k - 2;
            loop {
                idx[d] += 1;
                if idx[d] < c {
                    break;
                }
                idx[d] = 0;
                if d == 0 {
                    return Ok((best_val, best.expect("at least one candidate")));
                }
                d -= 1;
            }
        }
    };

    let shards: Vec<Result<(f64, Placement)>> = (0..c).into_par_iter().map(shard).collect();
    let mut best: Option<(f64, Placement)> = None;
    for s in shards {
        let (v, p) = s?;
        match &best {
            Some((bv, _)) if v <= *bv => {}
            _ => best = Some((v, p)),
        }
    }
    let (value, placement) = best.expect("grid has at least one candidate");
    Ok((placement, value))
}

/// Each UAV directly above its serving station. Fails when a station lies
/// outside the target area, since the hovering point would be infeasible.
pub fn hovering_placement(scene: &NetworkScene) -> Result<Placement> {
    let area = scene.area();
    for (k, w) in scene.gbs_positions().iter().enumerate() {
        if !area.contains(*w, crate::net::FEASIBILITY_TOL_M) {
            return Err(Error::InfeasiblePlacement {
                uav: k + 1,
                x: w.x,
                y: w.y,
            });
        }
    }
    Ok(Placement::new(scene.gbs_positions().to_vec()))
}

/// Free-space linear gain between a UAV at `q` (altitude `altitude_m`) and a
/// station at `w` (height `gbs_height_m`): `ref_gain_lin / distance^2` with
/// the reference gain taken at 1 m.
pub fn los_gain(
    q: Point2,
    w: Point2,
    altitude_m: f64,
    gbs_height_m: f64,
    ref_gain_lin: f64,
) -> Result<f64> {
    let h2 = (q.x - w.x).powi(2) + (q.y - w.y).powi(2);
    let d2 = h2 + (altitude_m - gbs_height_m).powi(2);
    if d2 == 0.0 {
        return Err(Error::ZeroDistance);
    }
    Ok(ref_gain_lin / d2)
}

/// The weighted sum-rate objective under free-space gains instead of the
/// maps: same stations, powers, noise, and weights as the scene it mirrors.
pub struct LosObjective {
    gbs: Vec<Point2>,
    altitude_m: f64,
    gbs_height_m: f64,
    power_w: Vec<f64>,
    noise_w: Vec<f64>,
    weights: Vec<f64>,
    area: Rect,
    ref_gain_lin: f64,
    evals: AtomicU64,
}

impl LosObjective {
    /// Mirrors `scene` with free-space propagation at the given reference
    /// gain (in dB at 1 m).
    pub fn from_scene(scene: &NetworkScene, ref_gain_db: f64) -> Self {
        Self {
            gbs: scene.gbs_positions().to_vec(),
            altitude_m: scene.altitude_m(),
            gbs_height_m: scene.gbs_height_m(),
            power_w: scene.power_w().to_vec(),
            noise_w: scene.noise_w().to_vec(),
            weights: scene.weights().to_vec(),
            area: scene.area(),
            ref_gain_lin: crate::ckm::db_to_linear(ref_gain_db),
            evals: AtomicU64::new(0),
        }
    }
}

impl Objective for LosObjective {
    fn uav_count(&self) -> usize {
        self.gbs.len()
    }

    fn area(&self) -> Rect {
        self.area
    }

    fn value(&self, placement: &Placement) -> Result<f64> {
        if !placement.is_feasible(&self.area) {
            for (k, p) in placement.positions().iter().enumerate() {
                if !self.area.contains(*p, crate::net::FEASIBILITY_TOL_M) {
                    return Err(Error::InfeasiblePlacement {
                        uav: k + 1,
                        x: p.x,
                        y: p.y,
                    });
                }
            }
        }
        self.evals.fetch_add(1, Ordering::Relaxed);
        let rates = rates_from_gains(&self.power_w, &self.noise_w, |k, j| {
            los_gain(
                placement.position(j),
                self.gbs[k],
                self.altitude_m,
                self.gbs_height_m,
                self.ref_gain_lin,
            )
        })?;
        Ok(weighted_sum(&self.weights, &rates))
    }

    fn eval_count(&self) -> u64 {
        self.evals.load(Ordering::Relaxed)
    }

    fn reset_eval_count(&self) {
        self.evals.store(0, Ordering::Relaxed);
    }
}

/// Outcome of the free-space design: the placement it chose, its value under
/// the free-space objective, and its value under the scene's maps.
#[derive(Debug, Clone)]
pub struct LosDesign {
    pub placement: Placement,
    /// Weighted sum rate the free-space model predicted.
    pub model_value: f64,
    /// Weighted sum rate the placement actually achieves on the maps.
    pub map_value: f64,
}

/// Optimizes the placement as if propagation were free-space, then re-scores
/// the chosen placement against the scene's maps.
///
/// The free-space objective is searched with the same trust-region method,
/// started from hovering. For one or two UAVs a lattice cross-check is also
/// run when `cross_check` provides a grid, and the better of the two
/// free-space designs is kept; this keeps the baseline from under-selling
/// free-space design through an unlucky local maximum.
pub fn los_design(
    scene: &NetworkScene,
    ref_gain_db: f64,
    state: TrustRegionState,
    seed: u64,
    cross_check: Option<(&SearchGrid, u64)>,
) -> Result<LosDesign> {
    let los = LosObjective::from_scene(scene, ref_gain_db);
    let area = scene.area();
    let start = Placement::new(
        scene
            .gbs_positions()
            .iter()
            .map(|w| area.clamp(*w))
            .collect(),
    );
    let run = optimizer::run(&los, &start, state, seed)?;
    let mut placement = run.placement;
    let mut model_value = run.value;
    if let Some((grid, budget)) = cross_check {
        if scene.uav_count() <= 2 {
            let (lattice_placement, lattice_value) = exhaustive_search(&los, grid, budget)?;
            if lattice_value > model_value {
                placement = lattice_placement;
                model_value = lattice_value;
            }
        }
    }
    let map_value = scene.weighted_sum_rate(&placement)?;
    Ok(LosDesign {
        placement,
        model_value,
        map_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ckm::{db_to_linear, GridCkm, LookupMode};

    fn area(w: f64) -> Rect {
        Rect::new(-w / 2.0, w / 2.0, -w / 2.0, w / 2.0)
    }

    /// Scene whose map gain equals the free-space law exactly at the nodes.
    fn los_like_scene(gbs: Vec<Point2>, side: f64, spacing: f64) -> NetworkScene {
        let a = area(side);
        let k = gbs.len();
        let nx = (side / spacing) as usize + 1;
        let ckms = gbs
            .iter()
            .map(|w| {
                let mut gains = Vec::with_capacity(nx * nx);
                for iy in 0..nx {
                    for ix in 0..nx {
                        let q = Point2::new(
                            a.xmin + ix as f64 * spacing,
                            a.ymin + iy as f64 * spacing,
                        );
                        let d2 = (q.x - w.x).powi(2) + (q.y - w.y).powi(2) + 48.0_f64.powi(2);
                        gains.push(-30.0 - 10.0 * d2.log10());
                    }
                }
                GridCkm::new(Point2::new(a.xmin, a.ymin), spacing, nx, nx, gains).unwrap()
            })
            .collect();
        NetworkScene::new(
            gbs,
            2.0,
            50.0,
            ckms,
            vec![1.0; k],
            vec![1e-13; k],
            vec![1.0; k],
            a,
            LookupMode::Nearest,
        )
        .unwrap()
    }

    #[test]
    fn grid_counts_and_orders_candidates_x_major() {
        let g = SearchGrid::new(&Rect::new(0.0, 10.0, 0.0, 5.0), 5.0).unwrap();
        assert_eq!(g.point_count(), 6);
        let pts: Vec<Point2> = g.points().collect();
        assert_eq!(pts[0], Point2::new(0.0, 0.0));
        assert_eq!(pts[1], Point2::new(0.0, 5.0));
        assert_eq!(pts[2], Point2::new(5.0, 0.0));
        assert_eq!(pts[5], Point2::new(10.0, 5.0));
    }

    #[test]
    fn grid_includes_far_edge_despite_float_rounding() {
        // 0.1 * 3 accumulates rounding; the far edge must still be a node.
        let g = SearchGrid::new(&Rect::new(0.0, 0.3, 0.0, 0.3), 0.1).unwrap();
        assert_eq!(g.point_count(), 16);
    }

    #[test]
    fn exhaustive_search_visits_exactly_the_tuple_count() {
        let scene = los_like_scene(vec![Point2::new(-20.0, 0.0), Point2::new(20.0, 0.0)], 100.0, 25.0);
        let grid = SearchGrid::new(&scene.area(), 25.0).unwrap();
        assert_eq!(grid.point_count(), 25);
        scene.reset_eval_count();
        exhaustive_search(&scene, &grid, 10_000).unwrap();
        assert_eq!(scene.eval_count(), 625, "25^2 tuples, one eval each");
    }

    #[test]
    fn exhaustive_search_beats_or_matches_every_lattice_tuple() {
        let scene = los_like_scene(vec![Point2::new(-20.0, 0.0)], 100.0, 20.0);
        let grid = SearchGrid::new(&scene.area(), 20.0).unwrap();
        let (best, best_val) = exhaustive_search(&scene, &grid, 10_000).unwrap();
        for q in grid.points() {
            let v = scene
                .weighted_sum_rate(&Placement::new(vec![q]))
                .unwrap();
            assert!(v <= best_val + 1e-12, "candidate {q:?} beats the reported best");
        }
        assert!(scene.area().contains(best.position(0), 0.0));
    }

    #[test]
    fn budget_is_checked_before_any_evaluation() {
        let scene = los_like_scene(vec![Point2::new(-20.0, 0.0), Point2::new(20.0, 0.0)], 100.0, 5.0);
        let grid = SearchGrid::new(&scene.area(), 5.0).unwrap();
        scene.reset_eval_count();
        let err = exhaustive_search(&scene, &grid, 100).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { required: 194_481, .. }), "got {err}");
        assert_eq!(scene.eval_count(), 0);
    }

    #[test]
    fn tie_break_is_lexicographic_in_stacked_coordinates() {
        // Flat maps make every tuple tie; the winner must be the first
        // candidate tuple: both UAVs at the lattice origin.
        let a = area(20.0);
        let flat = GridCkm::new(Point2::new(-10.0, -10.0), 10.0, 3, 3, vec![-60.0; 9]).unwrap();
        let scene = NetworkScene::new(
            vec![Point2::new(0.0, 0.0), Point2::new(5.0, 0.0)],
            2.0,
            50.0,
            vec![flat.clone(), flat],
            vec![1.0, 1.0],
            vec![1e-10, 1e-10],
            vec![1.0, 1.0],
            a,
            LookupMode::Nearest,
        )
        .unwrap();
        let grid = SearchGrid::new(&a, 10.0).unwrap();
        let (best, _) = exhaustive_search(&scene, &grid, 10_000).unwrap();
        assert_eq!(best.position(0), Point2::new(-10.0, -10.0));
        assert_eq!(best.position(1), Point2::new(-10.0, -10.0));
    }

    #[test]
    fn hovering_mirrors_the_stations_or_fails_outside() {
        let scene = los_like_scene(vec![Point2::new(-20.0, 12.0)], 100.0, 25.0);
        let p = hovering_placement(&scene).unwrap();
        assert_eq!(p.position(0), Point2::new(-20.0, 12.0));

        let outside = los_like_scene(vec![Point2::new(-20.0, 12.0)], 100.0, 25.0);
        // Shrink the area below the station by rebuilding the scene.
        let small = NetworkScene::new(
            vec![Point2::new(60.0, 0.0)],
            2.0,
            50.0,
            vec![outside.ckm(0).clone()],
            vec![1.0],
            vec![1e-13],
            vec![1.0],
            area(100.0),
            LookupMode::Nearest,
        )
        .unwrap();
        assert!(matches!(
            hovering_placement(&small),
            Err(Error::InfeasiblePlacement { uav: 1, .. })
        ));
    }

    #[test]
    fn los_gain_matches_inverse_square_hand_values() {
        let beta = db_to_linear(-30.0);
        // Directly overhead: d^2 = 48^2 = 2304.
        let g = los_gain(Point2::new(0.0, 0.0), Point2::new(0.0, 0.0), 50.0, 2.0, beta).unwrap();
        assert!((g - beta / 2304.0).abs() / g < 1e-12);
        // 48 m sideways: d^2 doubles, gain halves.
        let g2 = los_gain(Point2::new(48.0, 0.0), Point2::new(0.0, 0.0), 50.0, 2.0, beta).unwrap();
        assert!((g2 - g / 2.0).abs() / g2 < 1e-12);
        // Coincident endpoints are an error.
        assert!(matches!(
            los_gain(Point2::new(1.0, 2.0), Point2::new(1.0, 2.0), 5.0, 5.0, beta),
            Err(Error::ZeroDistance)
        ));
    }

    #[test]
    fn los_objective_counts_and_scores_like_a_scene() {
        let scene = los_like_scene(vec![Point2::new(0.0, 0.0)], 100.0, 5.0);
        let los = LosObjective::from_scene(&scene, -30.0);
        let p = Placement::new(vec![Point2::new(0.0, 0.0)]);
        assert_eq!(los.eval_count(), 0);
        let v = los.value(&p).unwrap();
        assert_eq!(los.eval_count(), 1);
        // On a node of a free-space-exact map both objectives agree.
        let w = scene.weighted_sum_rate(&p).unwrap();
        assert!((v - w).abs() < 1e-9, "los {v} vs map {w}");
    }

    #[test]
    fn los_design_on_a_free_space_scene_matches_the_map_score() {
        let scene = los_like_scene(vec![Point2::new(-10.0, 5.0)], 100.0, 5.0);
        let state = TrustRegionState::defaults_for(&scene.area()).unwrap();
        let grid = SearchGrid::new(&scene.area(), 5.0).unwrap();
        let design = los_design(&scene, -30.0, state, 3, Some((&grid, 1_000_000))).unwrap();
        // The map is the free-space law sampled on the same lattice, so the
        // re-scored value cannot be far from the model's own estimate.
        assert!(
            (design.model_value - design.map_value).abs() < 0.2,
            "model {} vs map {}",
            design.model_value,
            design.map_value
        );
        assert!(scene.area().contains(design.placement.position(0), 1e-9));
    }
}
