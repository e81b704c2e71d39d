//! Approximate maximizer for the trust-region step: an indefinite quadratic
//! over the intersection of a Euclidean ball with the feasible box.
//!
//! Exact corner-case handling of this problem is not worth its complexity
//! here; instead the solver assembles candidates from several cheap,
//! deterministic sources and keeps the best:
//!
//! * the projected Cauchy point (gradient ray capped by ball and box),
//! * truncated conjugate-gradient ascent with box faces pinned on contact
//!   and a bounded number of restarts,
//! * a circle search when the CG step lands on the ball with two free
//!   coordinates (always the case for a single UAV),
//! * the interior stationary point of the model,
//! * for two dimensions, the full stationary candidate set of the
//!   box-constrained problem (edges, corners, interior) plus the ball arc,
//! * a seeded multi-start over the box, each start refined by a monotone
//!   projected-gradient polish.
//!
//! The step returned is always feasible, never worse than the zero step, and
//! never worse than the Cauchy point.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::Rect;
use crate::surrogate::QuadraticModel;

/// Feasibility slack guaranteed by the solver, in the units of the step.
pub const STEP_FEAS_TOL: f64 = 1e-9;

const MULTISTART: usize = 32;
const CIRCLE_COARSE: usize = 1024;
const CIRCLE_ZOOM_ROUNDS: usize = 3;
const CIRCLE_ZOOM_POINTS: usize = 64;

/// One trust-region step problem, in absolute placement coordinates.
///
/// The step `s` is constrained by `|s| <= delta` and by the requirement that
/// every UAV of `centre + s` stays inside `area`. The centre itself must be
/// feasible, so the box always contains the zero step.
#[derive(Debug, Clone)]
pub struct TrsProblem<'a> {
    pub model: &'a QuadraticModel,
    pub centre: DVector<f64>,
    pub delta: f64,
    pub area: Rect,
}

impl TrsProblem<'_> {
    /// Per-coordinate step bounds induced by the area box.
    fn bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let n = self.centre.len();
        let mut lo = DVector::zeros(n);
        let mut hi = DVector::zeros(n);
        for k in 0..n / 2 {
            lo[2 * k] = self.area.xmin - self.centre[2 * k];
            hi[2 * k] = self.area.xmax - self.centre[2 * k];
            lo[2 * k + 1] = self.area.ymin - self.centre[2 * k + 1];
            hi[2 * k + 1] = self.area.ymax - self.centre[2 * k + 1];
        }
        // A feasible centre keeps 0 inside the box; enforce it against
        // rounding so clipping can rely on it.
        for i in 0..n {
            lo[i] = lo[i].min(0.0);
            hi[i] = hi[i].max(0.0);
        }
        (lo, hi)
    }
}

fn clip_feasible(s: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>, delta: f64) -> DVector<f64> {
    let mut c = s.clone();
    for i in 0..c.len() {
        c[i] = c[i].clamp(lo[i], hi[i]);
    }
    let norm = c.norm();
    if norm > delta {
        // Shrinking toward the origin stays inside the box because the box
        // contains the origin.
        c *= delta / norm;
    }
    c
}

/// Largest `t >= 0` with `s + t d` inside the box, and the first coordinate
/// that caps it. `s` must already be inside the box.
fn ray_box_limit(
    s: &DVector<f64>,
    d: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> (f64, Option<usize>) {
    let mut t = f64::INFINITY;
    let mut hit = None;
    for i in 0..s.len() {
        if d[i] == 0.0 {
            continue;
        }
        let ti = if d[i] > 0.0 {
            (hi[i] - s[i]) / d[i]
        } else {
            (lo[i] - s[i]) / d[i]
        };
        let ti = ti.max(0.0);
        if ti < t {
            t = ti;
            hit = Some(i);
        }
    }
    (t, hit)
}

/// Largest `t >= 0` with `|s + t d| <= delta`. `s` must be inside the ball.
fn ray_ball_limit(s: &DVector<f64>, d: &DVector<f64>, delta: f64) -> f64 {
    let a = d.dot(d);
    if a == 0.0 {
        return 0.0;
    }
    let b = s.dot(d);
    let c = (s.dot(s) - delta * delta).min(0.0);
    (-b + (b * b - a * c).sqrt()) / a
}

/// Truncated conjugate-gradient ascent from the zero step. Negative
/// curvature and ball contact stop the search at the ball; box contact pins
/// the offending coordinate and restarts in the reduced space. Returns the
/// step and the pinned-coordinate mask.
fn active_set_cg(
    model: &QuadraticModel,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    delta: f64,
) -> (DVector<f64>, Vec<bool>) {
    let n = model.dim();
    let mut s = DVector::zeros(n);
    let mut fixed = vec![false; n];
    let gscale = 1.0 + model.gradient.norm();

    'restart: for _ in 0..=n {
        let mut r = model.gradient_at(&s);
        for i in 0..n {
            if fixed[i] {
                r[i] = 0.0;
            }
        }
        if r.norm() <= 1e-13 * gscale {
            break;
        }
        let mut d = r.clone();
        let mut rr = r.dot(&r);

        for _ in 0..2 * n + 4 {
            let mut hd = &model.hessian * &d;
            for i in 0..n {
                if fixed[i] {
                    hd[i] = 0.0;
                }
            }
            let slope = r.dot(&d);
            if slope <= 0.0 {
                break 'restart;
            }
            let curv = d.dot(&hd);
            let (t_box, hit) = ray_box_limit(&s, &d, lo, hi);
            let t_ball = ray_ball_limit(&s, &d, delta);
            let t_lim = t_box.min(t_ball);
            let t_star = if curv < 0.0 {
                slope / (-curv)
            } else {
                f64::INFINITY
            };

            if t_star <= t_lim {
                s.axpy(t_star, &d, 1.0);
                r.axpy(t_star, &hd, 1.0);
                for i in 0..n {
                    if fixed[i] {
                        r[i] = 0.0;
                    }
                }
                let rr_new = r.dot(&r);
                if rr_new.sqrt() <= 1e-13 * gscale {
                    break 'restart;
                }
                let beta = rr_new / rr;
                rr = rr_new;
                d = &r + beta * d;
            } else if t_ball <= t_box {
                s.axpy(t_ball, &d, 1.0);
                break 'restart;
            } else {
                s.axpy(t_box, &d, 1.0);
                if let Some(i) = hit {
                    // Snap exactly onto the face before pinning it.
                    s[i] = if d[i] > 0.0 { hi[i] } else { lo[i] };
                    fixed[i] = true;
                    continue 'restart;
                }
                break 'restart;
            }
        }
        break;
    }
    (s, fixed)
}

/// Best point of the model on the circle of radius `radius` in coordinates
/// `(i, j)`, all other coordinates held at `base`. Returns `None` when no
/// sampled angle satisfies the box.
fn circle_max(
    model: &QuadraticModel,
    base: &DVector<f64>,
    i: usize,
    j: usize,
    radius: f64,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> Option<DVector<f64>> {
    if !(radius > 0.0) {
        return None;
    }
    let slack = 1e-12 * (1.0 + radius);
    let mut cand = base.clone();
    let eval_at = |theta: f64, cand: &mut DVector<f64>| -> Option<f64> {
        let (x, y) = (radius * theta.cos(), radius * theta.sin());
        if x < lo[i] - slack || x > hi[i] + slack || y < lo[j] - slack || y > hi[j] + slack {
            return None;
        }
        cand[i] = x.clamp(lo[i], hi[i]);
        cand[j] = y.clamp(lo[j], hi[j]);
        Some(model.eval_step(cand))
    };

    let two_pi = std::f64::consts::TAU;
    let mut best: Option<(f64, f64)> = None; // (value, theta)
    for k in 0..CIRCLE_COARSE {
        let theta = two_pi * k as f64 / CIRCLE_COARSE as f64;
        if let Some(v) = eval_at(theta, &mut cand) {
            if best.map_or(true, |(bv, _)| v > bv) {
                best = Some((v, theta));
            }
        }
    }
    let (_, mut theta0) = best?;
    let mut span = two_pi / CIRCLE_COARSE as f64;
    for _ in 0..CIRCLE_ZOOM_ROUNDS {
        for k in 0..=CIRCLE_ZOOM_POINTS {
            let theta = theta0 - span + 2.0 * span * k as f64 / CIRCLE_ZOOM_POINTS as f64;
            if let Some(v) = eval_at(theta, &mut cand) {
                if best.map_or(true, |(bv, _)| v > bv) {
                    best = Some((v, theta));
                }
            }
        }
        theta0 = best?.1;
        span /= CIRCLE_ZOOM_POINTS as f64 / 2.0;
    }
    let theta = best?.1;
    cand[i] = (radius * theta.cos()).clamp(lo[i], hi[i]);
    cand[j] = (radius * theta.sin()).clamp(lo[j], hi[j]);
    Some(cand)
}

/// Stationary candidates of the two-dimensional problem: the interior
/// stationary point and, per box edge, the edge endpoints inside the ball
/// and the one-dimensional stationary point on the edge.
fn exact_2d_candidates(
    model: &QuadraticModel,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    delta: f64,
) -> Vec<DVector<f64>> {
    let g = &model.gradient;
    let h = &model.hessian;
    let mut out = Vec::new();

    let det = h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)];
    let hscale = h.norm().max(1e-300);
    if det.abs() > 1e-14 * hscale * hscale {
        let sx = -(h[(1, 1)] * g[0] - h[(0, 1)] * g[1]) / det;
        let sy = -(-h[(1, 0)] * g[0] + h[(0, 0)] * g[1]) / det;
        out.push(DVector::from_vec(vec![sx, sy]));
    }

    for (i, b) in [(0, lo[0]), (0, hi[0]), (1, lo[1]), (1, hi[1])] {
        if b * b > delta * delta {
            continue;
        }
        let j = 1 - i;
        let half = (delta * delta - b * b).sqrt();
        let tlo = lo[j].max(-half);
        let thi = hi[j].min(half);
        if tlo > thi {
            continue;
        }
        let aa = h[(j, j)];
        let bb = g[j] + h[(i, j)] * b;
        let mut push = |t: f64| {
            let mut s = DVector::zeros(2);
            s[i] = b;
            s[j] = t;
            out.push(s);
        };
        push(tlo);
        push(thi);
        if aa < 0.0 {
            let t = -bb / aa;
            if t > tlo && t < thi {
                push(t);
            }
        }
    }
    out
}

/// Monotone projected-gradient polish: takes gradient steps clipped to the
/// feasible set, keeping only strict improvements, with an adaptive step.
fn polish(
    model: &QuadraticModel,
    start: DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    delta: f64,
    iters: usize,
) -> DVector<f64> {
    let mut s = start;
    let mut val = model.eval_step(&s);
    let mut step = 0.25 * delta;
    for _ in 0..iters {
        let grad = model.gradient_at(&s);
        let gn = grad.norm();
        if gn <= 1e-300 {
            break;
        }
        let cand = clip_feasible(&(&s + (step / gn) * &grad), lo, hi, delta);
        let v = model.eval_step(&cand);
        if v > val {
            s = cand;
            val = v;
            step *= 1.4;
        } else {
            step *= 0.45;
            if step <= 1e-13 * delta {
                break;
            }
        }
    }
    s
}

struct Incumbent<'a> {
    model: &'a QuadraticModel,
    lo: DVector<f64>,
    hi: DVector<f64>,
    delta: f64,
    best: DVector<f64>,
    best_val: f64,
}

impl Incumbent<'_> {
    fn consider(&mut self, cand: &DVector<f64>) {
        let c = clip_feasible(cand, &self.lo, &self.hi, self.delta);
        let v = self.model.eval_step(&c);
        if v > self.best_val {
            self.best_val = v;
            self.best = c;
        }
    }
}

/// Projected Cauchy point: the best point on the gradient ray inside ball
/// and box. Zero when the gradient vanishes or immediately leaves the box.
pub fn cauchy_point(problem: &TrsProblem<'_>) -> DVector<f64> {
    let model = problem.model;
    let n = model.dim();
    let zero = DVector::zeros(n);
    let g = &model.gradient;
    let gn = g.norm();
    if gn == 0.0 || !(problem.delta > 0.0) {
        return zero;
    }
    let (lo, hi) = problem.bounds();
    let (t_box, _) = ray_box_limit(&zero, g, &lo, &hi);
    let t_lim = t_box.min(problem.delta / gn);
    if t_lim <= 0.0 {
        return zero;
    }
    let curv = (&model.hessian * g).dot(g);
    let slope = gn * gn;
    let t_star = if curv < 0.0 {
        slope / (-curv)
    } else {
        f64::INFINITY
    };
    let t = t_star.min(t_lim);
    clip_feasible(&(g * t), &lo, &hi, problem.delta)
}

/// Returns an approximate maximizer of the model over ball and box. The
/// result is feasible (within [`STEP_FEAS_TOL`]), at least as good as the
/// zero step and the Cauchy point, and deterministic in `(problem, seed)`.
pub fn solve(problem: &TrsProblem<'_>, seed: u64) -> DVector<f64> {
    let model = problem.model;
    let n = model.dim();
    let (lo, hi) = problem.bounds();
    let delta = problem.delta;
    if !(delta > 0.0) {
        return DVector::zeros(n);
    }

    let zero = DVector::zeros(n);
    let mut inc = Incumbent {
        model,
        lo,
        hi,
        delta,
        best_val: model.eval_step(&zero),
        best: zero,
    };

    inc.consider(&cauchy_point(problem));

    let (cg, fixed) = active_set_cg(model, &inc.lo, &inc.hi, delta);
    inc.consider(&cg);
    let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
    if free.len() == 2 && cg.norm() >= delta * (1.0 - 1e-9) {
        let pinned2: f64 = (0..n)
            .filter(|i| fixed[*i])
            .map(|i| cg[i] * cg[i])
            .sum();
        let r2 = delta * delta - pinned2;
        if r2 > 0.0 {
            if let Some(c) = circle_max(model, &cg, free[0], free[1], r2.sqrt(), &inc.lo, &inc.hi)
            {
                inc.consider(&c);
            }
        }
    }

    if let Some(newton) = model.hessian.clone().lu().solve(&(-&model.gradient)) {
        inc.consider(&newton);
    }

    if n == 2 {
        let cands = exact_2d_candidates(model, &inc.lo, &inc.hi, delta);
        for c in &cands {
            inc.consider(c);
        }
        if let Some(c) = circle_max(model, &DVector::zeros(2), 0, 1, delta, &inc.lo, &inc.hi) {
            inc.consider(&c);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MULTISTART {
        let mut s0 = DVector::zeros(n);
        for i in 0..n {
            let u: f64 = rng.random();
            s0[i] = inc.lo[i] + u * (inc.hi[i] - inc.lo[i]);
        }
        let s0 = clip_feasible(&s0, &inc.lo, &inc.hi, delta);
        let refined = polish(model, s0, &inc.lo, &inc.hi, delta, 60);
        inc.consider(&refined);
    }

    let refined = polish(model, inc.best.clone(), &inc.lo, &inc.hi, delta, 120);
    inc.consider(&refined);

    inc.best
}
