//! Ellipses as parametric and implicit conics: direct least-squares fitting,
//! tangents from a point, and common external tangents of two ellipses.
//!
//! The implicit form is the symmetric 3x3 matrix `C` with `p^T C p = 0` on the
//! boundary, scaled so the value at the center is -1 (negative inside,
//! positive outside). Tangency of a line `l` is tested against the adjugate
//! conic: `l^T C* l = 0`.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::geometry::{HLine, HPoint};

/// Residual below which a line counts as tangent to a conic (on the
/// normalized adjugate, see [`tangency_residual`]).
pub const TANGENCY_TOL: f64 = 1e-6;

/// Normalized-conic value below which a point counts as lying on the ellipse.
const ON_BOUNDARY_TOL: f64 = 1e-9;

/// Errors from conic construction, fitting and tangent searches.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConicError {
    /// Fewer than the 6 points needed to determine a conic.
    #[error("need at least 6 points to fit an ellipse, got {0}")]
    TooFewPoints(usize),
    /// The best-fit conic is not a real ellipse (degenerate or hyperbolic).
    #[error("degenerate fit: best conic through the points is not an ellipse")]
    DegenerateFit,
    /// Tangents from an interior point do not exist.
    #[error("point lies inside the ellipse")]
    PointInsideEllipse,
    /// The point lies on the ellipse; the tangent pair collapses to one line.
    #[error("point lies on the ellipse (single tangent)")]
    PointOnEllipse,
    /// The ellipses intersect or one contains the other.
    #[error("ellipses overlap or nest; no external tangents")]
    EllipsesOverlap,
    /// The tangent search exhausted its iteration budget without a verified line.
    #[error("tangent search did not converge")]
    NoConvergence,
}

/// Axis-aligned-free ellipse: center, semi-axes, rotation of the major axis.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    /// Semi-major axis, `a >= b`.
    pub a: f64,
    /// Semi-minor axis.
    pub b: f64,
    /// Rotation of the major axis, radians CCW from +x, folded into `[0, pi)`.
    pub theta: f64,
}

/// Result of [`fit_ellipse`]: the ellipse plus its mean Sampson residual.
#[derive(Debug, Clone, Copy)]
pub struct EllipseFit {
    pub ellipse: Ellipse,
    /// Mean Sampson distance of the input points, in pixels.
    pub residual: f64,
}

impl Ellipse {
    /// Build an ellipse, swapping axes and folding `theta` so the stored form
    /// satisfies `a >= b > 0` and `theta` in `[0, pi)`.
    pub fn new(cx: f64, cy: f64, a: f64, b: f64, theta: f64) -> Self {
        assert!(a > 0.0 && b > 0.0, "semi-axes must be positive");
        let (a, b, mut theta) = if a >= b {
            (a, b, theta)
        } else {
            (b, a, theta + std::f64::consts::FRAC_PI_2)
        };
        theta = theta.rem_euclid(std::f64::consts::PI);
        if theta >= std::f64::consts::PI {
            theta = 0.0;
        }
        Self { cx, cy, a, b, theta }
    }

    /// Unit directions of the major and minor axes.
    pub fn axes(&self) -> ((f64, f64), (f64, f64)) {
        let (s, c) = self.theta.sin_cos();
        ((c, s), (-s, c))
    }

    /// Implicit symmetric conic matrix, scaled to value -1 at the center.
    pub fn matrix(&self) -> Matrix3<f64> {
        let ((ux, uy), (vx, vy)) = self.axes();
        let (ia, ib) = (1.0 / (self.a * self.a), 1.0 / (self.b * self.b));
        // Q = u u^T / a^2  +  v v^T / b^2
        let q00 = ia * ux * ux + ib * vx * vx;
        let q01 = ia * ux * uy + ib * vx * vy;
        let q11 = ia * uy * uy + ib * vy * vy;
        let tx = -(q00 * self.cx + q01 * self.cy);
        let ty = -(q01 * self.cx + q11 * self.cy);
        let f = q00 * self.cx * self.cx + 2.0 * q01 * self.cx * self.cy + q11 * self.cy * self.cy
            - 1.0;
        Matrix3::new(q00, q01, tx, q01, q11, ty, tx, ty, f)
    }

    /// Adjugate (dual) conic `C*`; a line `l` is tangent iff `l^T C* l = 0`.
    pub fn adjugate(&self) -> Matrix3<f64> {
        adjugate3(&self.matrix())
    }

    /// Normalized implicit value: -1 at the center, 0 on the boundary,
    /// positive outside.
    pub fn normalized_value(&self, x: f64, y: f64) -> f64 {
        let ((ux, uy), (vx, vy)) = self.axes();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let pu = (dx * ux + dy * uy) / self.a;
        let pv = (dx * vx + dy * vy) / self.b;
        pu * pu + pv * pv - 1.0
    }

    /// Boundary point at parametric angle `t`.
    pub fn point_at(&self, t: f64) -> (f64, f64) {
        let ((ux, uy), (vx, vy)) = self.axes();
        let (st, ct) = t.sin_cos();
        (
            self.cx + self.a * ct * ux + self.b * st * vx,
            self.cy + self.a * ct * uy + self.b * st * vy,
        )
    }

    /// Support function: signed extent of the centered ellipse along the unit
    /// direction `(nx, ny)`.
    pub fn support(&self, nx: f64, ny: f64) -> f64 {
        let ((ux, uy), (vx, vy)) = self.axes();
        let du = self.a * (nx * ux + ny * uy);
        let dv = self.b * (nx * vx + ny * vy);
        du.hypot(dv)
    }

    /// First-order (Sampson) approximation of the geometric distance from a
    /// point to the conic.
    pub fn sampson_distance(&self, x: f64, y: f64) -> f64 {
        let c = self.matrix();
        let p = Vector3::new(x, y, 1.0);
        let cp = c * p;
        let val = p.dot(&cp);
        let grad = 2.0 * cp.xy().norm();
        if grad < 1e-300 {
            val.abs().sqrt()
        } else {
            val.abs() / grad
        }
    }

    /// Exact (unsigned) Euclidean distance from a point to the boundary.
    pub fn geometric_distance(&self, x: f64, y: f64) -> f64 {
        let ((ux, uy), (vx, vy)) = self.axes();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let px = (dx * ux + dy * uy).abs();
        let py = (dx * vx + dy * vy).abs();
        dist_to_axis_aligned(self.a, self.b, px, py)
    }

    /// Recover the parametric form from general-conic coefficients
    /// `A x^2 + B xy + C y^2 + D x + E y + F = 0`.
    pub fn from_implicit(co: [f64; 6]) -> Result<Self, ConicError> {
        let [a, b, c, d, e, f] = co;
        let scale = co.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale < 1e-300 {
            return Err(ConicError::DegenerateFit);
        }
        let disc = 4.0 * a * c - b * b;
        if disc <= 1e-14 * scale * scale {
            return Err(ConicError::DegenerateFit);
        }
        let cx = (b * e - 2.0 * c * d) / disc;
        let cy = (b * d - 2.0 * a * e) / disc;
        let f0 = a * cx * cx + b * cx * cy + c * cy * cy + d * cx + e * cy + f;
        // Eigenvalues of the quadratic part [[A, B/2], [B/2, C]].
        let tr = a + c;
        let det_root = ((a - c) * (a - c) + b * b).sqrt() * 0.5;
        let (lmin, lmax) = (0.5 * tr - det_root, 0.5 * tr + det_root);
        // Real ellipse: both eigenvalues share a sign opposite to F0.
        if lmin * lmax <= 0.0 || f0 * tr >= 0.0 {
            return Err(ConicError::DegenerateFit);
        }
        let semi_major = (-f0 / lmin).sqrt();
        let semi_minor = (-f0 / lmax).sqrt();
        if !semi_major.is_finite() || !semi_minor.is_finite() || semi_minor <= 0.0 {
            return Err(ConicError::DegenerateFit);
        }
        let theta = if det_root <= 1e-12 * tr.abs() {
            0.0 // circle: orientation unconstrained
        } else {
            // eigenvector of the smaller eigenvalue (major-axis direction)
            let (vx1, vy1) = (b * 0.5, lmin - a);
            let (vx2, vy2) = (lmin - c, b * 0.5);
            let (vx, vy) = if vx1.hypot(vy1) >= vx2.hypot(vy2) {
                (vx1, vy1)
            } else {
                (vx2, vy2)
            };
            vy.atan2(vx)
        };
        Ok(Ellipse::new(cx, cy, semi_major, semi_minor, theta))
    }

    /// General-conic coefficients `[A, B, C, D, E, F]` of this ellipse.
    pub fn implicit(&self) -> [f64; 6] {
        let m = self.matrix();
        [
            m[(0, 0)],
            2.0 * m[(0, 1)],
            m[(1, 1)],
            2.0 * m[(0, 2)],
            2.0 * m[(1, 2)],
            m[(2, 2)],
        ]
    }
}

fn adjugate3(m: &Matrix3<f64>) -> Matrix3<f64> {
    let c = |i: usize, j: usize| -> f64 {
        let (r0, r1) = match i {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let (c0, c1) = match j {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let minor = m[(r0, c0)] * m[(r1, c1)] - m[(r0, c1)] * m[(r1, c0)];
        if (i + j) % 2 == 0 {
            minor
        } else {
            -minor
        }
    };
    // transpose of the cofactor matrix
    Matrix3::new(
        c(0, 0),
        c(1, 0),
        c(2, 0),
        c(0, 1),
        c(1, 1),
        c(2, 1),
        c(0, 2),
        c(1, 2),
        c(2, 2),
    )
}

/// Distance from a first-quadrant point `(px, py)` to the axis-aligned
/// ellipse `x^2/a^2 + y^2/b^2 = 1`, valid inside and outside. Robust
/// bisection on the Lagrange parameter.
fn dist_to_axis_aligned(a: f64, b: f64, px: f64, py: f64) -> f64 {
    let tiny = 1e-14 * a;
    if py <= tiny {
        // on the major axis: the nearest point leaves the axis when px is
        // inside the evolute cusp (a^2 - b^2) / a
        let cusp = (a * a - b * b) / a;
        if px < cusp {
            let xr = a * a * px / (a * a - b * b);
            let yr = b * (1.0 - (xr / a) * (xr / a)).max(0.0).sqrt();
            return (px - xr).hypot(yr);
        }
        return (px - a).abs();
    }
    if px <= tiny {
        return (py - b).abs();
    }
    // F(t) = (a px / (t + a^2))^2 + (b py / (t + b^2))^2 - 1 is decreasing;
    // bracket from [-b^2 + b py, -b^2 + |(a px, b py)|]
    let mut lo = -b * b + b * py;
    let mut hi = -b * b + (a * px).hypot(b * py);
    let f = |t: f64| {
        let u = a * px / (t + a * a);
        let v = b * py / (t + b * b);
        u * u + v * v - 1.0
    };
    for _ in 0..120 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + hi.abs()) {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    let xr = a * a * px / (t + a * a);
    let yr = b * b * py / (t + b * b);
    (px - xr).hypot(py - yr)
}

/// Real roots of `x^3 + p x^2 + q x + r = 0` (trigonometric/Cardano form).
fn cubic_roots(p: f64, q: f64, r: f64) -> Vec<f64> {
    // depressed cubic t^3 + at + b with x = t - p/3
    let a = q - p * p / 3.0;
    let b = 2.0 * p * p * p / 27.0 - p * q / 3.0 + r;
    let shift = -p / 3.0;
    let disc = b * b / 4.0 + a * a * a / 27.0;
    if disc > 1e-14 * (b * b + a.abs().powi(3) + 1e-300) {
        // one real root
        let sq = disc.sqrt();
        let u = (-b / 2.0 + sq).cbrt();
        let v = (-b / 2.0 - sq).cbrt();
        vec![u + v + shift]
    } else if a.abs() < 1e-300 {
        vec![(-b).cbrt() + shift]
    } else {
        // three real roots
        let m = 2.0 * (-a / 3.0).sqrt();
        let arg = (3.0 * b / (a * m)).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        (0..3)
            .map(|k| m * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() + shift)
            .collect()
    }
}

/// Right null vector of a (near-)singular 3x3 matrix via row cross products.
fn null_vector(m: &Matrix3<f64>) -> Vector3<f64> {
    let r0 = Vector3::new(m[(0, 0)], m[(0, 1)], m[(0, 2)]);
    let r1 = Vector3::new(m[(1, 0)], m[(1, 1)], m[(1, 2)]);
    let r2 = Vector3::new(m[(2, 0)], m[(2, 1)], m[(2, 2)]);
    let cands = [r0.cross(&r1), r0.cross(&r2), r1.cross(&r2)];
    let best = cands
        .iter()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap();
    *best
}

/// Direct least-squares ellipse fit (conic fit constrained to ellipses),
/// followed by one Gauss-Newton refinement pass on geometric distance.
pub fn fit_ellipse(points: &[(f64, f64)]) -> Result<EllipseFit, ConicError> {
    let n = points.len();
    if n < 6 {
        return Err(ConicError::TooFewPoints(n));
    }
    // isotropic normalization for conditioning
    let (mut mx, mut my) = (0.0, 0.0);
    for &(x, y) in points {
        mx += x;
        my += y;
    }
    mx /= n as f64;
    my /= n as f64;
    let mut md = 0.0;
    for &(x, y) in points {
        md += (x - mx).hypot(y - my);
    }
    md /= n as f64;
    if md < 1e-12 {
        return Err(ConicError::DegenerateFit);
    }
    let s = std::f64::consts::SQRT_2 / md;

    // scatter matrices of the partitioned design [x^2 xy y^2 | x y 1]
    let mut s1 = Matrix3::zeros();
    let mut s2 = Matrix3::zeros();
    let mut s3 = Matrix3::zeros();
    for &(x, y) in points {
        let xn = (x - mx) * s;
        let yn = (y - my) * s;
        let d1 = Vector3::new(xn * xn, xn * yn, yn * yn);
        let d2 = Vector3::new(xn, yn, 1.0);
        s1 += d1 * d1.transpose();
        s2 += d1 * d2.transpose();
        s3 += d2 * d2.transpose();
    }
    let s3_inv = s3.try_inverse().ok_or(ConicError::DegenerateFit)?;
    let t = -s3_inv * s2.transpose();
    let m0 = s1 + s2 * t;
    // reduced system: C1^{-1} M0 with C1 the ellipse constraint matrix
    let m = Matrix3::from_rows(&[
        (m0.row(2) / 2.0).into_owned(),
        (-m0.row(1)).into_owned(),
        (m0.row(0) / 2.0).into_owned(),
    ]);

    // eigenvector of m with positive constraint value 4 a c - b^2
    let tr = m.trace();
    let p1 = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
        + m[(0, 0)] * m[(2, 2)] - m[(0, 2)] * m[(2, 0)]
        + m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)];
    let det = m.determinant();
    let mut best: Option<(f64, Vector3<f64>)> = None;
    for lambda in cubic_roots(-tr, p1, -det) {
        let v = null_vector(&(m - Matrix3::identity() * lambda));
        if v.norm() < 1e-300 {
            continue;
        }
        let cons = 4.0 * v[0] * v[2] - v[1] * v[1];
        if cons > 0.0 {
            let margin = cons / v.norm_squared();
            if best.map_or(true, |(b, _)| margin > b) {
                best = Some((margin, v));
            }
        }
    }
    let (_, a1) = best.ok_or(ConicError::DegenerateFit)?;
    let a2 = t * a1;
    let (ca, cb, cc, cd, ce, cf) = (a1[0], a1[1], a1[2], a2[0], a2[1], a2[2]);

    // undo the normalization u = s (x - mx), v = s (y - my)
    let s2_ = s * s;
    let co = [
        ca * s2_,
        cb * s2_,
        cc * s2_,
        -2.0 * ca * s2_ * mx - cb * s2_ * my + cd * s,
        -cb * s2_ * mx - 2.0 * cc * s2_ * my + ce * s,
        ca * s2_ * mx * mx + cb * s2_ * mx * my + cc * s2_ * my * my - cd * s * mx - ce * s * my
            + cf,
    ];
    let direct = Ellipse::from_implicit(co)?;
    let refined = gauss_newton_pass(&direct, points);
    let chosen = if rms_geometric(&refined, points) <= rms_geometric(&direct, points) {
        refined
    } else {
        direct
    };
    let residual =
        points.iter().map(|&(x, y)| chosen.sampson_distance(x, y)).sum::<f64>() / n as f64;
    Ok(EllipseFit { ellipse: chosen, residual })
}

fn rms_geometric(e: &Ellipse, points: &[(f64, f64)]) -> f64 {
    let ss: f64 = points
        .iter()
        .map(|&(x, y)| {
            let d = e.geometric_distance(x, y);
            d * d
        })
        .sum();
    (ss / points.len() as f64).sqrt()
}

/// One Gauss-Newton step on the signed geometric distance over the five
/// ellipse parameters, with a numeric Jacobian.
fn gauss_newton_pass(e: &Ellipse, points: &[(f64, f64)]) -> Ellipse {
    use nalgebra::{DMatrix, DVector};
    let n = points.len();
    let signed = |el: &Ellipse, x: f64, y: f64| -> f64 {
        el.geometric_distance(x, y) * el.normalized_value(x, y).signum()
    };
    let build = |p: &[f64; 5]| -> Option<Ellipse> {
        if p[2] <= 1e-9 || p[3] <= 1e-9 {
            return None;
        }
        Some(Ellipse::new(p[0], p[1], p[2].max(p[3]), p[2].min(p[3]), if p[2] >= p[3] {
            p[4]
        } else {
            p[4] + std::f64::consts::FRAC_PI_2
        }))
    };
    let p0 = [e.cx, e.cy, e.a, e.b, e.theta];
    let scale = e.a.max(1.0);
    let steps = [1e-5 * scale, 1e-5 * scale, 1e-5 * scale, 1e-5 * scale, 1e-7];
    let mut jac = DMatrix::zeros(n, 5);
    let mut res = DVector::zeros(n);
    for (i, &(x, y)) in points.iter().enumerate() {
        res[i] = signed(e, x, y);
        for j in 0..5 {
            let mut pp = p0;
            pp[j] += steps[j];
            let mut pm = p0;
            pm[j] -= steps[j];
            let (ep, em) = match (build(&pp), build(&pm)) {
                (Some(a), Some(b)) => (a, b),
                _ => return *e,
            };
            jac[(i, j)] = (signed(&ep, x, y) - signed(&em, x, y)) / (2.0 * steps[j]);
        }
    }
    let jtj = jac.transpose() * &jac;
    let jtr = jac.transpose() * &res;
    let ridge = 1e-10 * jtj.trace().max(1e-12);
    let lhs = jtj + DMatrix::identity(5, 5) * ridge;
    let delta = match lhs.lu().solve(&jtr) {
        Some(d) => d,
        None => return *e,
    };
    let p1 = [
        p0[0] - delta[0],
        p0[1] - delta[1],
        p0[2] - delta[2],
        p0[3] - delta[3],
        p0[4] - delta[4],
    ];
    build(&p1).unwrap_or(*e)
}

/// Tangency residual of a line against an ellipse: `|l^T C* l|` with `l`
/// normalized to `l1^2 + l2^2 = 1` and `C*` scaled to unit max entry.
pub fn tangency_residual(e: &Ellipse, l: &HLine) -> f64 {
    let mut cs = e.adjugate();
    let m = cs.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if m > 0.0 {
        cs /= m;
    }
    let lv = Vector3::new(l.l1, l.l2, l.l3);
    (lv.dot(&(cs * lv))).abs()
}

/// Point of tangency of a tangent line: the pole `C* l`.
pub fn tangent_pole(e: &Ellipse, l: &HLine) -> HPoint {
    let p = e.adjugate() * Vector3::new(l.l1, l.l2, l.l3);
    HPoint::raw(p[0], p[1], p[2]).normalized()
}

/// Intersections of a line with an ellipse, as homogeneous points
/// (0, 1 or 2 of them).
pub fn line_ellipse_intersections(e: &Ellipse, l: &HLine) -> Vec<HPoint> {
    let c = e.matrix();
    // span the line by a base point and its direction
    let n2 = l.l1 * l.l1 + l.l2 * l.l2;
    let (p0, d) = if n2 > 1e-300 {
        (
            Vector3::new(-l.l1 * l.l3 / n2, -l.l2 * l.l3 / n2, 1.0),
            Vector3::new(-l.l2, l.l1, 0.0),
        )
    } else {
        (Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0))
    };
    let qa = d.dot(&(c * d));
    let qb = 2.0 * p0.dot(&(c * d));
    let qc = p0.dot(&(c * p0));
    let scale = qa.abs().max(qb.abs()).max(qc.abs()).max(1e-300);
    if qa.abs() <= 1e-14 * scale {
        if qb.abs() <= 1e-14 * scale {
            return vec![];
        }
        let t = -qc / qb;
        let p = p0 + d * t;
        return vec![HPoint::raw(p[0], p[1], p[2]).normalized()];
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < -1e-12 * scale * scale {
        return vec![];
    }
    if disc <= 1e-12 * scale * scale {
        let t = -qb / (2.0 * qa);
        let p = p0 + d * t;
        return vec![HPoint::raw(p[0], p[1], p[2]).normalized()];
    }
    let sq = disc.sqrt();
    // numerically stable quadratic roots
    let qsign = if qb >= 0.0 { 1.0 } else { -1.0 };
    let big = -(qb + qsign * sq) / 2.0;
    let t1 = big / qa;
    let t2 = qc / big;
    [t1, t2]
        .iter()
        .map(|&t| {
            let p = p0 + d * t;
            HPoint::raw(p[0], p[1], p[2]).normalized()
        })
        .collect()
}

/// The two tangents to `e` through an exterior point `q` (which may be at
/// infinity), each with its point of tangency.
fn tangents_with_poles(e: &Ellipse, q: &HPoint) -> Result<[(HLine, HPoint); 2], ConicError> {
    if !q.is_at_infinity() {
        let (qx, qy) = q.to_xy().expect("finite point");
        let v = e.normalized_value(qx, qy);
        if v < -ON_BOUNDARY_TOL {
            return Err(ConicError::PointInsideEllipse);
        }
        if v <= ON_BOUNDARY_TOL {
            return Err(ConicError::PointOnEllipse);
        }
    }
    let c = e.matrix();
    let qv = Vector3::new(q.x, q.y, q.w);
    let pol = c * qv;
    let polar = HLine::from_raw(pol[0], pol[1], pol[2]);
    let touches = line_ellipse_intersections(e, &polar);
    if touches.len() != 2 {
        return Err(ConicError::PointOnEllipse);
    }
    let mut ts = touches;
    // deterministic ordering by image position of the tangency points
    ts.sort_by(|p, r| {
        let a = p.to_xy().unwrap_or((p.x, p.y));
        let b = r.to_xy().unwrap_or((r.x, r.y));
        (a.1, a.0).partial_cmp(&(b.1, b.0)).unwrap()
    });
    Ok([(q.join(&ts[0]), ts[0]), (q.join(&ts[1]), ts[1])])
}

/// Closed-form tangents from an exterior point: the polar line of `q` cuts
/// the ellipse at the two tangency points; joining them back to `q` gives the
/// tangent pair.
pub fn tangents_from_point(e: &Ellipse, q: &HPoint) -> Result<(HLine, HLine), ConicError> {
    let [(l1, _), (l2, _)] = tangents_with_poles(e, q)?;
    Ok((l1, l2))
}

/// Separating-axis test for two ellipses: disjoint iff some direction `n`
/// has the support intervals strictly apart.
fn strictly_separated(e1: &Ellipse, e2: &Ellipse) -> bool {
    let (dx, dy) = (e2.cx - e1.cx, e2.cy - e1.cy);
    let gap = |psi: f64| {
        let (sn, cn) = psi.sin_cos();
        (dx * cn + dy * sn).abs() - e1.support(cn, sn) - e2.support(cn, sn)
    };
    let n = 1024;
    let mut best_psi = 0.0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..n {
        let psi = std::f64::consts::PI * i as f64 / n as f64;
        let g = gap(psi);
        if g > best {
            best = g;
            best_psi = psi;
        }
    }
    // golden-section polish around the best sample
    let mut lo = best_psi - std::f64::consts::PI / n as f64;
    let mut hi = best_psi + std::f64::consts::PI / n as f64;
    let gr = 0.5 * (5.0f64.sqrt() - 1.0);
    for _ in 0..60 {
        let m1 = hi - gr * (hi - lo);
        let m2 = lo + gr * (hi - lo);
        if gap(m1) >= gap(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    best = best.max(gap(0.5 * (lo + hi)));
    best > 1e-9 * (e1.a + e2.a)
}

struct FamilyProbe {
    /// Angle mismatch between the two per-ellipse tangents from the probe
    /// point, folded into (-pi/2, pi/2].
    mismatch: f64,
    t1: HPoint,
    t2: HPoint,
}

/// Tangent from `q` to `e` whose tangency point lies on the requested side of
/// the center line (`side` = sign of the cross product with the line
/// direction).
fn family_tangent(
    e: &Ellipse,
    q: &HPoint,
    origin: (f64, f64),
    u: (f64, f64),
    side: f64,
) -> Option<(HLine, HPoint)> {
    let pairs = tangents_with_poles(e, q).ok()?;
    for (l, t) in pairs {
        let (tx, ty) = t.to_xy()?;
        let cross = u.0 * (ty - origin.1) - u.1 * (tx - origin.0);
        if cross * side > 1e-12 {
            return Some((l, t));
        }
    }
    None
}

fn probe(
    e1: &Ellipse,
    e2: &Ellipse,
    origin: (f64, f64),
    u: (f64, f64),
    side: f64,
    t: f64,
) -> Option<FamilyProbe> {
    let q = HPoint::new(origin.0 + t * u.0, origin.1 + t * u.1);
    let (l1, t1) = family_tangent(e1, &q, origin, u, side)?;
    let (l2, t2) = family_tangent(e2, &q, origin, u, side)?;
    let mut d = l1.angle() - l2.angle();
    while d > std::f64::consts::FRAC_PI_2 {
        d -= std::f64::consts::PI;
    }
    while d <= -std::f64::consts::FRAC_PI_2 {
        d += std::f64::consts::PI;
    }
    Some(FamilyProbe { mismatch: d, t1, t2 })
}

const SLOPE_TOL: f64 = 1e-10;
const BISECT_CAP: usize = 200;

/// Interval of `t` where `origin + t*u` lies inside the ellipse. The center
/// line passes through both ellipse centers, so the chord always exists.
fn chord_interval(e: &Ellipse, origin: (f64, f64), u: (f64, f64)) -> (f64, f64) {
    let c = e.matrix();
    let p = nalgebra::Vector3::new(origin.0, origin.1, 1.0);
    let dv = nalgebra::Vector3::new(u.0, u.1, 0.0);
    let qa = (dv.transpose() * c * dv)[0];
    let qb = 2.0 * (dv.transpose() * c * p)[0];
    let qc = (p.transpose() * c * p)[0];
    let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
    let (t1, t2) = ((-qb - disc) / (2.0 * qa), (-qb + disc) / (2.0 * qa));
    (t1.min(t2), t1.max(t2))
}

/// Find the external common tangent of one side family by root-finding the
/// tangent-angle mismatch along the line through the two centers. Outward
/// marches with doubling steps handle the common case of a crossing beyond
/// both ellipses (including nearly-parallel configurations with the root far
/// out). For thin tilted ellipses the tangent can instead cross the center
/// line close to an ellipse, between its chord and its support extent along
/// the line; a fine scan over those between-segments recovers such roots. A
/// true parallel family falls back to tangents from the direction at
/// infinity.
fn find_family_line(
    e1: &Ellipse,
    e2: &Ellipse,
    origin: (f64, f64),
    u: (f64, f64),
    d: f64,
    side: f64,
) -> Result<HLine, ConicError> {
    let (s1, s2) = (e1.support(u.0, u.1), e2.support(u.0, u.1));
    let start_right = (d + 1.001 * s2).max(1.001 * s1);
    let start_left = (-1.001 * s1).min(d - 1.001 * s2);
    let step0 = 0.01 * (d + s1 + s2);

    let eval = |t: f64| probe(e1, e2, origin, u, side, t);

    // Probes near an ellipse boundary can fail the side test when a tangency
    // point sits on the center line; nudge the midpoint off such slivers
    // instead of abandoning the bracket.
    let eval_near = |mid: f64, lo: f64, hi: f64| -> Option<(f64, FamilyProbe)> {
        let w = hi - lo;
        for k in [0.0, 1.0, -1.0, 2.0, -2.0, 3.0, -3.0] {
            let t = mid + k * w / 32.0;
            if t > lo && t < hi {
                if let Some(p) = eval(t) {
                    return Some((t, p));
                }
            }
        }
        None
    };

    let bisect = |mut lo: f64, mut hi: f64| -> Option<HLine> {
        let mut glo = eval(lo)?.mismatch;
        for _ in 0..BISECT_CAP {
            let (mid, pm) = eval_near(0.5 * (lo + hi), lo, hi)?;
            if pm.mismatch.abs() < SLOPE_TOL {
                return Some(pm.t1.join(&pm.t2));
            }
            if (pm.mismatch > 0.0) == (glo > 0.0) {
                lo = mid;
                glo = pm.mismatch;
            } else {
                hi = mid;
            }
        }
        let (_, pm) = eval_near(0.5 * (lo + hi), lo, hi)?;
        if pm.mismatch.abs() < 1e-6 {
            Some(pm.t1.join(&pm.t2))
        } else {
            None
        }
    };

    // A bracketed sign change may also be a fold discontinuity of the angle
    // mismatch (the difference wrapping past a half turn), or an internal
    // common tangent whose tangency points happen to share the requested
    // side. The residual check rejects folds; the same-side check rejects
    // internal tangents; the search then continues.
    let try_bracket = |lo: f64, hi: f64| -> Option<HLine> {
        let line = bisect(lo, hi)?;
        if tangency_residual(e1, &line) <= TANGENCY_TOL
            && tangency_residual(e2, &line) <= TANGENCY_TOL
            && line.eval(e1.cx, e1.cy) * line.eval(e2.cx, e2.cy) > 0.0
        {
            Some(line)
        } else {
            None
        }
    };

    for (start, dir) in [(start_right, 1.0), (start_left, -1.0)] {
        let mut step = step0;
        let mut t_prev = start;
        let mut last = eval(t_prev).map(|p| (t_prev, p.mismatch));
        for _ in 0..60 {
            let t = t_prev + dir * step;
            if let Some(p) = eval(t) {
                if let Some((tl, gl)) = last {
                    if gl == 0.0 || (gl > 0.0) != (p.mismatch > 0.0) {
                        let (lo, hi) = if tl < t { (tl, t) } else { (t, tl) };
                        if let Some(line) = try_bracket(lo, hi) {
                            return Ok(line);
                        }
                    }
                }
                last = Some((t, p.mismatch));
            }
            t_prev = t;
            step *= 2.0;
        }
    }

    // between-segments: outside each chord, inside the outward start points
    let c1 = chord_interval(e1, origin, u);
    let c2 = chord_interval(e2, origin, u);
    let segments = [
        (start_left, c1.0),
        (c1.1.max(start_left), c2.0.min(start_right)),
        (c2.1, start_right),
    ];
    for &(lo, hi) in &segments {
        if !(hi > lo) {
            continue;
        }
        for n in [96_usize, 768] {
            let mut last: Option<(f64, f64)> = None;
            for i in 0..=n {
                let t = lo + (hi - lo) * i as f64 / n as f64;
                match eval(t) {
                    Some(p) => {
                        if let Some((tl, gl)) = last {
                            if gl == 0.0 || (gl > 0.0) != (p.mismatch > 0.0) {
                                if let Some(line) = try_bracket(tl, t) {
                                    return Ok(line);
                                }
                            }
                        }
                        last = Some((t, p.mismatch));
                    }
                    // never bracket across probe failures: the mismatch can
                    // fold there without a root
                    None => last = None,
                }
            }
        }
    }

    // parallel family: both per-ellipse tangents share the direction u
    let q_inf = HPoint::at_infinity(u.0, u.1);
    if let Ok(pairs) = tangents_with_poles(e1, &q_inf) {
        for (l, t) in pairs {
            if let Some((tx, ty)) = t.to_xy() {
                let cross = u.0 * (ty - origin.1) - u.1 * (tx - origin.0);
                if cross * side > 0.0 && tangency_residual(e2, &l) <= TANGENCY_TOL {
                    return Ok(l);
                }
            }
        }
    }
    Err(ConicError::NoConvergence)
}

/// Point where a support line with outward normal `n` touches the ellipse.
fn support_point(e: &Ellipse, nx: f64, ny: f64) -> (f64, f64) {
    let ((ax, ay), (bx, by)) = e.axes();
    let du = e.a * (nx * ax + ny * ay);
    let dv = e.b * (nx * bx + ny * by);
    let h = du.hypot(dv);
    (
        e.cx + (e.a * du * ax + e.b * dv * bx) / h,
        e.cy + (e.a * du * ay + e.b * dv * by) / h,
    )
}

/// Deterministic fallback when the center-line search cannot pair the
/// tangents: an external tangent is a common supporting line, i.e. a zero of
/// the support gap `n.(c1 - c2) + h1(n) - h2(n)` over normal directions
/// `n(psi)`. Two disjoint convex conics have exactly two such lines. The
/// constructed line is tangent to the first ellipse by construction and the
/// bisection drives the gap on the second below rounding error.
fn external_tangents_support(
    e1: &Ellipse,
    e2: &Ellipse,
) -> Result<(HLine, HLine), ConicError> {
    let gap = |psi: f64| {
        let (nx, ny) = (psi.cos(), psi.sin());
        nx * (e1.cx - e2.cx) + ny * (e1.cy - e2.cy) + e1.support(nx, ny) - e2.support(nx, ny)
    };
    let line_at = |psi: f64| {
        let (nx, ny) = (psi.cos(), psi.sin());
        HLine::from_raw(nx, ny, -(nx * e1.cx + ny * e1.cy + e1.support(nx, ny)))
    };
    let tau = 2.0 * std::f64::consts::PI;
    const SAMPLES: usize = 1024;
    let mut found = Vec::new();
    let mut prev = gap(0.0);
    for i in 1..=SAMPLES {
        let cur = gap(tau * i as f64 / SAMPLES as f64);
        if (prev > 0.0) != (cur > 0.0) {
            let (mut lo, mut hi) = (tau * (i - 1) as f64 / SAMPLES as f64, tau * i as f64 / SAMPLES as f64);
            let glo = gap(lo);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if (gap(mid) > 0.0) == (glo > 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            found.push(line_at(0.5 * (lo + hi)));
        }
        prev = cur;
    }
    if found.len() == 2 {
        Ok((found[0], found[1]))
    } else {
        Err(ConicError::NoConvergence)
    }
}

/// Common external tangents of two disjoint ellipses, plus their intersection
/// as a homogeneous vanishing point (`w = 0` when the tangents are parallel).
pub fn common_external_tangents(
    e1: &Ellipse,
    e2: &Ellipse,
) -> Result<(HLine, HLine, HPoint), ConicError> {
    if !strictly_separated(e1, e2) {
        return Err(ConicError::EllipsesOverlap);
    }
    let (dx, dy) = (e2.cx - e1.cx, e2.cy - e1.cy);
    let d = dx.hypot(dy);
    let u = (dx / d, dy / d);
    let origin = (e1.cx, e1.cy);
    let (la, lb) = match (
        find_family_line(e1, e2, origin, u, d, 1.0),
        find_family_line(e1, e2, origin, u, d, -1.0),
    ) {
        (Ok(a), Ok(b)) => (a, b),
        // thin tilted pairs can defeat the side pairing of the center-line
        // search; recover both lines from the support gap and order them by
        // the side of the tangency on the first ellipse
        _ => {
            let (a, b) = external_tangents_support(e1, e2)?;
            let side_of = |l: &HLine| {
                let (tx, ty) = support_point(e1, l.l1, l.l2);
                u.0 * (ty - origin.1) - u.1 * (tx - origin.0)
            };
            if side_of(&a) >= side_of(&b) {
                (a, b)
            } else {
                (b, a)
            }
        }
    };
    // external means both centers end up strictly on the same side
    for l in [&la, &lb] {
        if l.eval(e1.cx, e1.cy) * l.eval(e2.cx, e2.cy) <= 0.0 {
            return Err(ConicError::NoConvergence);
        }
    }
    let vp = la.meet(&lb);
    Ok((la, lb, vp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::prelude::*;

    fn sample_points(e: &Ellipse, n: usize) -> Vec<(f64, f64)> {
        (0..n)
            .map(|i| e.point_at(2.0 * std::f64::consts::PI * i as f64 / n as f64))
            .collect()
    }

    #[test]
    fn matrix_is_negative_one_at_center() {
        let e = Ellipse::new(3.0, -2.0, 5.0, 2.0, 0.7);
        let m = e.matrix();
        let c = Vector3::new(3.0, -2.0, 1.0);
        assert_relative_eq!(c.dot(&(m * c)), -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.normalized_value(3.0, -2.0), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn implicit_round_trip() {
        let e = Ellipse::new(320.0, 150.0, 180.0, 12.0, 0.05);
        let back = Ellipse::from_implicit(e.implicit()).unwrap();
        assert_relative_eq!(back.cx, e.cx, epsilon = 1e-6);
        assert_relative_eq!(back.cy, e.cy, epsilon = 1e-6);
        assert_relative_eq!(back.a, e.a, epsilon = 1e-6);
        assert_relative_eq!(back.b, e.b, epsilon = 1e-6);
        assert_relative_eq!(back.theta, e.theta, epsilon = 1e-9);
    }

    #[test]
    fn fit_recovers_exact_samples() {
        let e = Ellipse::new(0.0, 0.0, 2.0, 1.0, 0.0);
        let fit = fit_ellipse(&sample_points(&e, 12)).unwrap();
        assert_abs_diff_eq!(fit.ellipse.cx, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.ellipse.cy, 0.0, epsilon = 1e-9);
        assert_relative_eq!(fit.ellipse.a, 2.0, epsilon = 1e-9);
        assert_relative_eq!(fit.ellipse.b, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.ellipse.theta, 0.0, epsilon = 1e-9);
        assert!(fit.residual < 1e-9);
    }

    #[test]
    fn fit_circle_reports_zero_theta() {
        let e = Ellipse::new(0.0, 0.0, 1.0, 1.0, 0.0);
        let fit = fit_ellipse(&sample_points(&e, 12)).unwrap();
        assert_relative_eq!(fit.ellipse.a, 1.0, epsilon = 1e-9);
        assert_relative_eq!(fit.ellipse.b, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.ellipse.cx, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.ellipse.theta, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn fit_rejects_too_few_and_degenerate() {
        let five = vec![(0.0, 0.0), (1.0, 0.1), (2.0, 0.3), (3.0, 0.2), (4.0, 0.0)];
        assert!(matches!(fit_ellipse(&five), Err(ConicError::TooFewPoints(5))));
        let line: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 2.0 * i as f64)).collect();
        assert!(matches!(fit_ellipse(&line), Err(ConicError::DegenerateFit)));
    }

    #[test]
    fn tangents_from_point_circle() {
        let e = Ellipse::new(0.0, 0.0, 1.0, 1.0, 0.0);
        let q = HPoint::new(2.0, 0.0);
        let [(l1, t1), (l2, t2)] = tangents_with_poles(&e, &q).unwrap();
        let (x1, y1) = t1.to_xy().unwrap();
        let (x2, y2) = t2.to_xy().unwrap();
        assert_relative_eq!(x1, 0.5, epsilon = 1e-9);
        assert_relative_eq!(x2, 0.5, epsilon = 1e-9);
        assert_relative_eq!(y1.abs(), 3.0f64.sqrt() / 2.0, epsilon = 1e-9);
        assert_relative_eq!(y2.abs(), 3.0f64.sqrt() / 2.0, epsilon = 1e-9);
        assert!(y1 * y2 < 0.0);
        for l in [l1, l2] {
            assert!(tangency_residual(&e, &l) < 1e-9);
            assert_abs_diff_eq!(l.eval(2.0, 0.0), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn tangents_from_point_slopes() {
        // x^2/9 + y^2 = 1 seen from (0, 5)
        let e = Ellipse::new(0.0, 0.0, 3.0, 1.0, 0.0);
        let q = HPoint::new(0.0, 5.0);
        let (l1, l2) = tangents_from_point(&e, &q).unwrap();
        let expect = 2.0 * 6.0f64.sqrt() / 3.0;
        for l in [l1, l2] {
            let slope = -l.l1 / l.l2;
            assert_relative_eq!(slope.abs(), expect, epsilon = 1e-9);
        }
        let s1 = -l1.l1 / l1.l2;
        let s2 = -l2.l1 / l2.l2;
        assert!(s1 * s2 < 0.0);
    }

    #[test]
    fn tangents_from_boundary_point_degenerate() {
        let e = Ellipse::new(0.0, 0.0, 3.0, 1.0, 0.0);
        let q = HPoint::new(3.0, 0.0);
        assert!(matches!(
            tangents_from_point(&e, &q),
            Err(ConicError::PointOnEllipse)
        ));
        let inside = HPoint::new(0.5, 0.0);
        assert!(matches!(
            tangents_from_point(&e, &inside),
            Err(ConicError::PointInsideEllipse)
        ));
    }

    #[test]
    fn tangent_lines_touch_once() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..50 {
            let e = Ellipse::new(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(1.0..6.0),
                rng.gen_range(0.3..1.0),
                rng.gen_range(0.0..std::f64::consts::PI),
            );
            let q = HPoint::new(e.cx + rng.gen_range(8.0..20.0), e.cy + rng.gen_range(8.0..20.0));
            let (l1, l2) = match tangents_from_point(&e, &q) {
                Ok(v) => v,
                Err(_) => continue,
            };
            for l in [l1, l2] {
                let hits = line_ellipse_intersections(&e, &l);
                assert_eq!(hits.len(), 1, "tangent must touch exactly once");
                assert!(tangency_residual(&e, &l) < 1e-6);
            }
        }
    }

    #[test]
    fn common_tangents_equal_circles_parallel() {
        let e1 = Ellipse::new(0.0, 0.0, 1.0, 1.0, 0.0);
        let e2 = Ellipse::new(4.0, 0.0, 1.0, 1.0, 0.0);
        let (la, lb, vp) = common_external_tangents(&e1, &e2).unwrap();
        // lines y = 1 and y = -1
        for l in [&la, &lb] {
            assert_abs_diff_eq!(l.l1, 0.0, epsilon = 1e-7);
            assert_relative_eq!(l.l3.abs(), 1.0, epsilon = 1e-7);
        }
        assert!((la.l3 + lb.l3).abs() < 1e-7, "one line on each side");
        assert!(vp.is_at_infinity());
        let n = vp.normalized();
        assert!(n.x.abs() > 1e6 * n.y.abs().max(1e-300));
    }

    #[test]
    fn common_tangents_homothety_center() {
        let e1 = Ellipse::new(0.0, 0.0, 1.0, 1.0, 0.0);
        let e2 = Ellipse::new(6.0, 0.0, 2.0, 2.0, 0.0);
        let (la, lb, vp) = common_external_tangents(&e1, &e2).unwrap();
        let (x, y) = vp.to_xy().expect("finite homothety center");
        assert_relative_eq!(x, -6.0, epsilon = 1e-6);
        assert_abs_diff_eq!(y, 0.0, epsilon = 1e-6);
        for l in [&la, &lb] {
            assert!(tangency_residual(&e1, l) <= TANGENCY_TOL);
            assert!(tangency_residual(&e2, l) <= TANGENCY_TOL);
        }
    }

    #[test]
    fn common_tangents_stacked_ellipses() {
        let e1 = Ellipse::new(0.0, 0.0, 5.0, 1.0, 0.0);
        let e2 = Ellipse::new(0.0, 10.0, 5.0, 1.0, 0.0);
        let (la, lb, vp) = common_external_tangents(&e1, &e2).unwrap();
        // tangents x = 5 and x = -5, vp = vertical direction
        for l in [&la, &lb] {
            assert_abs_diff_eq!(l.l2, 0.0, epsilon = 1e-7);
            assert_relative_eq!(l.l3.abs(), 5.0, epsilon = 1e-6);
        }
        assert!(vp.is_at_infinity());
        let n = vp.normalized();
        assert!(n.y.abs() > 1e6 * n.x.abs().max(1e-300));
    }

    #[test]
    fn common_tangents_rejects_overlap() {
        let e1 = Ellipse::new(0.0, 0.0, 2.0, 1.0, 0.0);
        let e2 = Ellipse::new(1.0, 0.0, 2.0, 1.0, 0.3);
        assert!(matches!(
            common_external_tangents(&e1, &e2),
            Err(ConicError::EllipsesOverlap)
        ));
        // nested
        let e3 = Ellipse::new(0.0, 0.0, 0.5, 0.2, 0.0);
        assert!(matches!(
            common_external_tangents(&e1, &e3),
            Err(ConicError::EllipsesOverlap)
        ));
    }

    #[test]
    fn geometric_distance_matches_known_values() {
        let e = Ellipse::new(0.0, 0.0, 2.0, 1.0, 0.0);
        assert_relative_eq!(e.geometric_distance(3.0, 0.0), 1.0, epsilon = 1e-9);
        assert_relative_eq!(e.geometric_distance(0.0, 3.0), 2.0, epsilon = 1e-9);
        assert_relative_eq!(e.geometric_distance(0.0, 0.5), 0.5, epsilon = 1e-9);
        // rotated copy must agree after rotating the query
        let er = Ellipse::new(0.0, 0.0, 2.0, 1.0, 0.4);
        let (s, c) = 0.4f64.sin_cos();
        let (x, y) = (3.0 * c, 3.0 * s);
        assert_relative_eq!(er.geometric_distance(x, y), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn support_function_bounds_the_ellipse() {
        let e = Ellipse::new(0.0, 0.0, 3.0, 1.0, 0.7);
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..200 {
            let t = rng.gen_range(0.0..std::f64::consts::TAU);
            let psi = rng.gen_range(0.0..std::f64::consts::TAU);
            let (x, y) = e.point_at(t);
            let (sn, cn) = psi.sin_cos();
            assert!(x * cn + y * sn <= e.support(cn, sn) + 1e-9);
        }
    }

    #[test]
    fn noisy_fit_within_tolerances() {
        // oracle: full nonlinear refinement from the ground truth
        let truth = Ellipse::new(320.0, 150.0, 180.0, 12.0, 0.05);
        let mut rng = StdRng::seed_from_u64(42);
        let pts: Vec<(f64, f64)> = (0..200)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / 200.0;
                let (x, y) = truth.point_at(t);
                // Box-Muller, sigma = 0.5 px
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                let r = (-2.0 * u1.ln()).sqrt() * 0.5;
                let phi = 2.0 * std::f64::consts::PI * u2;
                (x + r * phi.cos(), y + r * phi.sin())
            })
            .collect();
        let fit = fit_ellipse(&pts).unwrap().ellipse;
        assert!((fit.cx - truth.cx).hypot(fit.cy - truth.cy) < 1.0, "center {:?}", fit);
        assert!((fit.a - truth.a).abs() / truth.a < 0.02);
        assert!((fit.b - truth.b).abs() / truth.b < 0.02);
        assert!((fit.theta - truth.theta).abs() < 0.01);

        // independent oracle: iterate Gauss-Newton to convergence from truth
        let mut oracle = truth;
        for _ in 0..20 {
            oracle = gauss_newton_pass(&oracle, &pts);
        }
        assert!((fit.cx - oracle.cx).hypot(fit.cy - oracle.cy) < 1.0);
        assert!((fit.a - oracle.a).abs() / oracle.a < 0.02);
    }
}
