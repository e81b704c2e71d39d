//! Quadratic surrogate models fitted by interpolation.
//!
//! A model around a centre point `c` has the form
//! `phi(c + s) = f(c) + g's + 0.5 s'Hs` with symmetric `H`. Its
//! `(n+1)(n+2)/2` coefficients are pinned down by the value at the centre
//! plus interpolation conditions on an auxiliary point set. The fit is a
//! dense linear solve; a scaled condition-number check guards against
//! near-degenerate point geometry before the solve is trusted.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Condition-number ceiling (on the displacement-scaled system) above which
/// a point set is treated as degenerate.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Relative tolerance on the post-fit interpolation residuals.
pub const RESIDUAL_REL_TOL: f64 = 1e-8;

/// Coefficients of a full quadratic in `n` variables: value, gradient, and
/// the upper triangle of the symmetric Hessian.
pub fn parameter_count(n: usize) -> usize {
    (n + 1) * (n + 2) / 2
}

/// Auxiliary interpolation points needed besides the centre itself.
pub fn required_points(n: usize) -> usize {
    parameter_count(n) - 1
}

/// Fitted quadratic around a centre point, expressed in step coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticModel {
    /// Objective value at the centre.
    pub value: f64,
    pub gradient: DVector<f64>,
    /// Symmetric; stored densely.
    pub hessian: DMatrix<f64>,
}

impl QuadraticModel {
    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    /// Model prediction at `centre + s`.
    pub fn eval_step(&self, s: &DVector<f64>) -> f64 {
        self.value + self.gradient.dot(s) + 0.5 * (&self.hessian * s).dot(s)
    }

    /// Model gradient at `centre + s`.
    pub fn gradient_at(&self, s: &DVector<f64>) -> DVector<f64> {
        &self.gradient + &self.hessian * s
    }
}

/// Auxiliary interpolation points with their objective values.
///
/// The set size is fixed at [`required_points`] for its dimension; points are
/// replaced in place as the search progresses and the most recent insertion
/// is remembered so degeneracy repair can target it first.
#[derive(Debug, Clone)]
pub struct InterpolationSet {
    points: Vec<DVector<f64>>,
    values: Vec<f64>,
    last_inserted: usize,
}

impl InterpolationSet {
    pub fn new(points: Vec<DVector<f64>>, values: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("interpolation set", "no points"));
        }
        let n = points[0].len();
        let need = required_points(n);
        if points.len() != need {
            return Err(Error::invalid(
                "interpolation set",
                format!("{} points; dimension {n} needs exactly {need}", points.len()),
            ));
        }
        if values.len() != points.len() {
            return Err(Error::invalid(
                "interpolation set",
                format!("{} values for {} points", values.len(), points.len()),
            ));
        }
        if points.iter().any(|p| p.len() != n) {
            return Err(Error::invalid("interpolation set", "mixed dimensions"));
        }
        Ok(Self {
            points,
            values,
            last_inserted: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn point(&self, l: usize) -> &DVector<f64> {
        &self.points[l]
    }

    pub fn value(&self, l: usize) -> f64 {
        self.values[l]
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    /// Replaces point `l` and records it as the most recent insertion.
    pub fn replace(&mut self, l: usize, point: DVector<f64>, value: f64) {
        self.points[l] = point;
        self.values[l] = value;
        self.last_inserted = l;
    }

    pub fn last_inserted(&self) -> usize {
        self.last_inserted
    }

    pub fn max_distance_from(&self, centre: &DVector<f64>) -> f64 {
        self.points
            .iter()
            .map(|p| (p - centre).norm())
            .fold(0.0, f64::max)
    }
}

/// Index of the set point farthest from the centre; ties keep the lowest
/// index.
pub fn furthest_point(set: &InterpolationSet, centre: &DVector<f64>) -> usize {
    let mut best = 0;
    let mut best_d = (set.point(0) - centre).norm();
    for l in 1..set.len() {
        let d = (set.point(l) - centre).norm();
        if d > best_d {
            best = l;
            best_d = d;
        }
    }
    best
}

/// One row of the interpolation system for a unit-scaled displacement `u`:
/// the `n` linear terms, then the upper-triangle quadratic terms row by row,
/// with halves on the diagonal so the unknowns are the Hessian entries.
fn fill_row(u: &DVector<f64>, row: &mut [f64]) {
    let n = u.len();
    for i in 0..n {
        row[i] = u[i];
    }
    let mut c = n;
    for i in 0..n {
        for j in i..n {
            row[c] = if i == j {
                0.5 * u[i] * u[i]
            } else {
                u[i] * u[j]
            };
            c += 1;
        }
    }
}

/// Builds the displacement-scaled interpolation matrix. Returns the matrix
/// and the scale (the largest displacement norm) used to normalize it.
pub fn interpolation_matrix(centre: &DVector<f64>, points: &[DVector<f64>]) -> (DMatrix<f64>, f64) {
    let n = centre.len();
    let cols = parameter_count(n) - 1;
    let scale = points
        .iter()
        .map(|p| (p - centre).norm())
        .fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut mat = DMatrix::zeros(points.len(), cols);
    let mut row = vec![0.0; cols];
    for (l, p) in points.iter().enumerate() {
        let u = (p - centre) / scale;
        fill_row(&u, &mut row);
        for (j, &v) in row.iter().enumerate() {
            mat[(l, j)] = v;
        }
    }
    (mat, scale)
}

/// Condition number of the scaled interpolation system for a candidate point
/// collection. Infinite for rank-deficient or wrongly sized collections.
pub fn points_condition(centre: &DVector<f64>, points: &[DVector<f64>]) -> f64 {
    let n = centre.len();
    if points.len() != required_points(n) {
        return f64::INFINITY;
    }
    let (mat, _) = interpolation_matrix(centre, points);
    let sv = mat.singular_values();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for &s in sv.iter() {
        lo = lo.min(s);
        hi = hi.max(s);
    }
    if lo <= 0.0 || !lo.is_finite() || !hi.is_finite() {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn points_nondegenerate(centre: &DVector<f64>, points: &[DVector<f64>]) -> bool {
    points_condition(centre, points) < CONDITION_LIMIT
}

/// Condition number of the system induced by an interpolation set.
pub fn condition_number(centre: &DVector<f64>, set: &InterpolationSet) -> f64 {
    points_condition(centre, set.points())
}

pub fn check_nondegenerate(centre: &DVector<f64>, set: &InterpolationSet) -> bool {
    points_nondegenerate(centre, set.points())
}

/// Fits the quadratic that matches `value_at_centre` at the centre and every
/// set point exactly. Fails on degenerate geometry or when the solved model
/// does not reproduce the interpolation data to [`RESIDUAL_REL_TOL`].
pub fn build_model(
    centre: &DVector<f64>,
    value_at_centre: f64,
    set: &InterpolationSet,
) -> Result<QuadraticModel> {
    let n = centre.len();
    if set.dim() != n {
        return Err(Error::invalid(
            "interpolation set",
            format!("dimension {} for a {n}-dimensional centre", set.dim()),
        ));
    }

    let (mat, scale) = interpolation_matrix(centre, set.points());
    let cond = {
        let sv = mat.singular_values();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
        for &s in sv.iter() {
            lo = lo.min(s);
            hi = hi.max(s);
        }
        if lo <= 0.0 { f64::INFINITY } else { hi / lo }
    };
    if !(cond < CONDITION_LIMIT) {
        return Err(Error::DegenerateSet { cond });
    }

    let rhs = DVector::from_iterator(
        set.len(),
        (0..set.len()).map(|l| set.value(l) - value_at_centre),
    );
    let sol = mat
        .lu()
        .solve(&rhs)
        .ok_or(Error::DegenerateSet { cond })?;

    let mut gradient = DVector::zeros(n);
    for i in 0..n {
        gradient[i] = sol[i] / scale;
    }
    let s2 = scale * scale;
    let mut hessian = DMatrix::zeros(n, n);
    let mut c = n;
    for i in 0..n {
        for j in i..n {
            let h = sol[c] / s2;
            hessian[(i, j)] = h;
            hessian[(j, i)] = h;
            c += 1;
        }
    }

    let model = QuadraticModel {
        value: value_at_centre,
        gradient,
        hessian,
    };

    for l in 0..set.len() {
        let s = set.point(l) - centre;
        let predicted = model.eval_step(&s);
        let residual = (predicted - set.value(l)).abs();
        let denom = set.value(l).abs().max(1.0);
        if residual > RESIDUAL_REL_TOL * denom {
            return Err(Error::InterpolationResidual {
                residual: residual / denom,
            });
        }
    }

    Ok(model)
}
