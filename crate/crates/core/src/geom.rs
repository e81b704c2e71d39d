//! Planar and spatial primitives: points, axis-aligned rectangles and prisms,
//! and the segment/prism intersection used for blockage tests.

use serde::{Deserialize, Serialize};

/// Horizontal position in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point2) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Spatial position in metres; `z` is height above ground.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dist(self, other: Point3) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2))
            .sqrt()
    }
}

/// Closed axis-aligned rectangle. Degenerate extents (`xmin == xmax`) are
/// representable; operations that need positive area reject them explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl Rect {
    pub const fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Self {
        Self {
            xmin,
            xmax,
            ymin,
            ymax,
        }
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn shorter_side(&self) -> f64 {
        self.width().min(self.height())
    }

    pub fn center(&self) -> Point2 {
        Point2::new(
            0.5 * (self.xmin + self.xmax),
            0.5 * (self.ymin + self.ymax),
        )
    }

    pub fn is_proper(&self) -> bool {
        self.xmin.is_finite()
            && self.xmax.is_finite()
            && self.ymin.is_finite()
            && self.ymax.is_finite()
            && self.xmin < self.xmax
            && self.ymin < self.ymax
    }

    /// Membership with a symmetric slack of `tol` metres on every side.
    pub fn contains(&self, p: Point2, tol: f64) -> bool {
        p.x >= self.xmin - tol
            && p.x <= self.xmax + tol
            && p.y >= self.ymin - tol
            && p.y <= self.ymax + tol
    }

    /// True when `inner` lies inside `self`, allowing `tol` metres of slack.
    pub fn contains_rect(&self, inner: &Rect, tol: f64) -> bool {
        inner.xmin >= self.xmin - tol
            && inner.xmax <= self.xmax + tol
            && inner.ymin >= self.ymin - tol
            && inner.ymax <= self.ymax + tol
    }

    /// Nearest point of the rectangle to `p`.
    pub fn clamp(&self, p: Point2) -> Point2 {
        Point2::new(p.x.clamp(self.xmin, self.xmax), p.y.clamp(self.ymin, self.ymax))
    }
}

impl std::fmt::Display for Rect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}, {}] x [{}, {}]",
            self.xmin, self.xmax, self.ymin, self.ymax
        )
    }
}

/// Rectangular building standing on the ground plane, occupying
/// `footprint x [0, height_m]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prism {
    pub footprint: Rect,
    pub height_m: f64,
}

/// Intersection of the segment `a -> b` with a prism.
///
/// Returns `(length_m, through_interior)`:
/// * `length_m` is the length of the part of the segment strictly inside the
///   prism. A segment that only touches a face, edge, or corner contributes
///   zero length.
/// * `through_interior` is true when the open segment (endpoints excluded)
///   passes through the open interior of the prism. Grazing contact does not
///   count; an endpoint buried inside the prism does.
pub fn segment_prism_overlap(a: Point3, b: Point3, prism: &Prism) -> (f64, bool) {
    let d = (b.x - a.x, b.y - a.y, b.z - a.z);
    let fp = prism.footprint;
    let axes = [
        (a.x, d.0, fp.xmin, fp.xmax),
        (a.y, d.1, fp.ymin, fp.ymax),
        (a.z, d.2, 0.0, prism.height_m),
    ];

    // Slab intersection of the parameter interval. Axes with zero direction
    // need strict containment: a segment running inside a face plane never
    // enters the interior.
    let mut t0 = 0.0_f64;
    let mut t1 = 1.0_f64;
    for &(p, dd, lo, hi) in &axes {
        if dd == 0.0 {
            if !(p > lo && p < hi) {
                return (0.0, false);
            }
        } else {
            let mut s0 = (lo - p) / dd;
            let mut s1 = (hi - p) / dd;
            if s0 > s1 {
                std::mem::swap(&mut s0, &mut s1);
            }
            t0 = t0.max(s0);
            t1 = t1.min(s1);
        }
    }

    if t0 >= t1 {
        return (0.0, false);
    }
    let seg_len = (d.0 * d.0 + d.1 * d.1 + d.2 * d.2).sqrt();
    ((t1 - t0) * seg_len, true)
}
