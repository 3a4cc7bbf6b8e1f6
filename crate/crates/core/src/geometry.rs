//! Homogeneous 2D primitives and cross-ratio algebra.
//!
//! Points and lines are kept in homogeneous form so that the parallel-tangent
//! case (vanishing point at infinity) needs no special representation: a point
//! with `w = 0` is a direction. Scalar positions along a sampling line use
//! signed arc length, with `f64::INFINITY` as the at-infinity marker for the
//! vanishing-point anchor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from cross-ratio algebra.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    /// Two of the anchors a, c, d (or b with c) coincide; the cross-ratio is undefined or infinite.
    #[error("coincident anchors: {0}")]
    CoincidentAnchors(&'static str),
    /// The fourth-point equation degenerates (solution escapes to infinity).
    #[error("no finite solution for the fourth point")]
    NoSolutionInSegment,
}

/// Homogeneous 2D point `(x, y, w)`; `w = 0` encodes a point at infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HPoint {
    pub x: f64,
    pub y: f64,
    pub w: f64,
}

impl HPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y, w: 1.0 }
    }

    /// Direction `(dx, dy)` as a point at infinity.
    pub fn at_infinity(dx: f64, dy: f64) -> Self {
        Self { x: dx, y: dy, w: 0.0 }
    }

    pub fn raw(x: f64, y: f64, w: f64) -> Self {
        Self { x, y, w }
    }

    /// True when `w` is negligible against the spatial part.
    pub fn is_at_infinity(&self) -> bool {
        self.w.abs() <= 1e-12 * self.x.hypot(self.y).max(1.0)
    }

    /// Euclidean coordinates, unless the point is at infinity.
    pub fn to_xy(&self) -> Option<(f64, f64)> {
        if self.is_at_infinity() {
            None
        } else {
            Some((self.x / self.w, self.y / self.w))
        }
    }

    /// Join of two points: the line through both.
    pub fn join(&self, other: &HPoint) -> HLine {
        HLine::from_raw(
            self.y * other.w - self.w * other.y,
            self.w * other.x - self.x * other.w,
            self.x * other.y - self.y * other.x,
        )
    }

    /// Scale so the largest component has unit magnitude.
    pub fn normalized(&self) -> HPoint {
        let m = self.x.abs().max(self.y.abs()).max(self.w.abs());
        if m == 0.0 {
            *self
        } else {
            HPoint { x: self.x / m, y: self.y / m, w: self.w / m }
        }
    }
}

/// Homogeneous 2D line `l1 x + l2 y + l3 w = 0`, normalized so `l1² + l2² = 1`
/// whenever the line is finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HLine {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

impl HLine {
    /// Build from raw coefficients, normalizing `l1² + l2² = 1` when possible.
    pub fn from_raw(l1: f64, l2: f64, l3: f64) -> Self {
        let n = l1.hypot(l2);
        if n > 1e-300 {
            Self { l1: l1 / n, l2: l2 / n, l3: l3 / n }
        } else {
            // Line at infinity; keep the scale of l3.
            Self { l1, l2, l3 }
        }
    }

    /// Line through two Euclidean points.
    pub fn through(p: (f64, f64), q: (f64, f64)) -> Self {
        HPoint::new(p.0, p.1).join(&HPoint::new(q.0, q.1))
    }

    /// Signed value of the line equation at a Euclidean point (signed distance
    /// for a normalized finite line).
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.l1 * x + self.l2 * y + self.l3
    }

    /// Intersection of two lines as a homogeneous point (`w = 0` if parallel).
    pub fn meet(&self, other: &HLine) -> HPoint {
        HPoint {
            x: self.l2 * other.l3 - self.l3 * other.l2,
            y: self.l3 * other.l1 - self.l1 * other.l3,
            w: self.l1 * other.l2 - self.l2 * other.l1,
        }
        .normalized()
    }

    /// Direction of the line as a unit vector `(dx, dy)`.
    pub fn direction(&self) -> (f64, f64) {
        (-self.l2, self.l1)
    }

    /// Line angle folded into `[0, π)`.
    pub fn angle(&self) -> f64 {
        let mut a = self.l2.atan2(self.l1); // normal angle
        // fold the normal into [0, pi) so l and -l agree
        if a < 0.0 {
            a += std::f64::consts::PI;
        }
        if a >= std::f64::consts::PI {
            a -= std::f64::consts::PI;
        }
        a
    }
}

/// Smallest angle between two lines, in `[0, π/2]`.
pub fn line_angle_between(a: &HLine, b: &HLine) -> f64 {
    let d = (a.angle() - b.angle()).abs();
    d.min(std::f64::consts::PI - d)
}

fn anchor_scale(vals: &[f64]) -> f64 {
    vals.iter().filter(|v| v.is_finite()).fold(1.0f64, |m, v| m.max(v.abs()))
}

fn coincident(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-13 * scale
}

/// Cross-ratio `κ = (AC·BD)/(AD·BC)` of four signed positions along a line.
///
/// `d` may be `±INFINITY`, in which case the limit form `κ = AC/BC` is used.
pub fn cross_ratio(a: f64, b: f64, c: f64, d: f64) -> Result<f64, GeometryError> {
    let s = anchor_scale(&[a, b, c, d]);
    if coincident(a, c, s) {
        return Err(GeometryError::CoincidentAnchors("a = c"));
    }
    if d.is_finite() {
        if coincident(a, d, s) {
            return Err(GeometryError::CoincidentAnchors("a = d"));
        }
        if coincident(c, d, s) {
            return Err(GeometryError::CoincidentAnchors("c = d"));
        }
    }
    if coincident(b, c, s) {
        return Err(GeometryError::CoincidentAnchors("b = c"));
    }
    if d.is_finite() {
        Ok(((c - a) * (d - b)) / ((d - a) * (c - b)))
    } else {
        Ok((c - a) / (c - b))
    }
}

/// Solve `cross_ratio(a, b, c, d) = κ` for `b`.
///
/// With `d` at infinity the ratio form inverts directly. A vanishing
/// denominator means the solution escapes to infinity.
pub fn solve_fourth_point(a: f64, c: f64, d: f64, kappa: f64) -> Result<f64, GeometryError> {
    let s = anchor_scale(&[a, c, d]);
    if coincident(a, c, s) {
        return Err(GeometryError::CoincidentAnchors("a = c"));
    }
    if !kappa.is_finite() {
        return Err(GeometryError::NoSolutionInSegment);
    }
    if d.is_finite() {
        if coincident(a, d, s) {
            return Err(GeometryError::CoincidentAnchors("a = d"));
        }
        if coincident(c, d, s) {
            return Err(GeometryError::CoincidentAnchors("c = d"));
        }
        let num = (c - a) * d - kappa * (d - a) * c;
        let den = (c - a) - kappa * (d - a);
        if den.abs() <= 1e-300 || !(num / den).is_finite() {
            return Err(GeometryError::NoSolutionInSegment);
        }
        Ok(num / den)
    } else {
        if kappa.abs() <= 1e-300 {
            return Err(GeometryError::NoSolutionInSegment);
        }
        Ok(c - (c - a) / kappa)
    }
}
