//! Virtual pinhole camera and posed cylinder: analytic projection of rim
//! circles to image ellipses, silhouette (occluding-contour) lines, and the
//! full target-region description used by view synthesis.
//!
//! Frames: camera at the origin, +z forward, +y down (matching image rows).
//! The bottle frame has its origin at the label's mid-height point on the
//! axis; the axis points along -y at the identity pose. A pose first rotates
//! about the camera x axis, then about z, then translates the mid-height
//! point to `t`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::{tangent_pole, ConicError, Ellipse};
use crate::geometry::{HLine, HPoint};

/// Errors from 3D projection and rendering.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CameraError {
    /// A point or part of the projected circle is at or behind the camera.
    #[error("geometry at or behind the camera plane")]
    BehindCamera,
    /// The camera center lies on the circle's supporting plane; the image
    /// conic collapses to a segment.
    #[error("degenerate view: camera center lies in the circle plane")]
    DegenerateView,
    /// The camera center is inside the infinite cylinder.
    #[error("camera center inside the cylinder")]
    CameraInsideCylinder,
    /// The reference renderer needs a non-empty texture.
    #[error("empty label texture")]
    EmptyTexture,
    /// A constituent conic computation failed.
    #[error("conic error: {0}")]
    Conic(#[from] ConicError),
}

/// Pinhole camera with square pixels (`fx = fy`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub focal_mm: f64,
    pub pixel_pitch_mm: f64,
    pub width: u32,
    pub height: u32,
    /// Principal point, pixels.
    pub cx: f64,
    pub cy: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            focal_mm: 6.8,
            pixel_pitch_mm: 0.0075,
            width: 640,
            height: 480,
            cx: 320.0,
            cy: 240.0,
        }
    }
}

impl CameraIntrinsics {
    /// Focal length in pixels (also `fy`).
    pub fn fx(&self) -> f64 {
        self.focal_mm / self.pixel_pitch_mm
    }

    /// Calibration matrix `K`.
    pub fn k(&self) -> Matrix3<f64> {
        let f = self.fx();
        Matrix3::new(f, 0.0, self.cx, 0.0, f, self.cy, 0.0, 0.0, 1.0)
    }

    /// Map a plane normal `n` (plane through the camera center) to its image
    /// line `K^{-T} n`.
    fn plane_to_line(&self, n: &Vector3<f64>) -> HLine {
        let f = self.fx();
        HLine::from_raw(n[0], n[1], -self.cx * n[0] - self.cy * n[1] + f * n[2])
    }
}

/// Cylinder radius plus the label band along the axis, all in millimetres.
/// Heights are measured from the label's mid-height point, positive toward
/// the bottle top.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylinderModel {
    pub radius_mm: f64,
    pub label_top_mm: f64,
    pub label_bottom_mm: f64,
}

impl Default for CylinderModel {
    fn default() -> Self {
        Self { radius_mm: 38.0, label_top_mm: 45.0, label_bottom_mm: -45.0 }
    }
}

impl CylinderModel {
    /// Height of the label band.
    pub fn band(&self) -> f64 {
        self.label_top_mm - self.label_bottom_mm
    }
}

/// Rigid placement of the bottle: tilt about camera x, roll about camera z,
/// then translation of the label mid-height point (mm). Rotation about the
/// bottle's own axis is intentionally absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rot_x_deg: f64,
    pub rot_z_deg: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
}

impl Pose {
    pub fn new(rot_x_deg: f64, rot_z_deg: f64, tx: f64, ty: f64, tz: f64) -> Self {
        Self { rot_x_deg, rot_z_deg, tx, ty, tz }
    }

    /// The canonical frontal pose: no rotation, 150 mm in front of the camera.
    pub fn identity() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0, 150.0)
    }

    /// Bottle-to-camera rotation: x-tilt applied first, then z-roll.
    /// The x-tilt sign is chosen so a positive angle leans the bottle top
    /// away from the camera (camera looks slightly down at the label).
    pub fn rotation(&self) -> Matrix3<f64> {
        let (sx, cx) = self.rot_x_deg.to_radians().sin_cos();
        let (sz, cz) = self.rot_z_deg.to_radians().sin_cos();
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cx, sx, 0.0, -sx, cx);
        let rz = Matrix3::new(cz, -sz, 0.0, sz, cz, 0.0, 0.0, 0.0, 1.0);
        rz * rx
    }

    /// Label mid-height point in camera coordinates.
    pub fn center(&self) -> Vector3<f64> {
        Vector3::new(self.tx, self.ty, self.tz)
    }

    /// Axis direction (toward the bottle top) in camera coordinates.
    pub fn axis_dir(&self) -> Vector3<f64> {
        self.rotation() * Vector3::new(0.0, -1.0, 0.0)
    }
}

/// Which rim of the label band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RimSide {
    Upper,
    Lower,
}

/// Full 2D description of a posed label region: both rim ellipses, the two
/// silhouette lines, the axis vanishing point, and per-rim visible-arc
/// endpoints (tangency points of the silhouette lines).
#[derive(Debug, Clone)]
pub struct TargetRegion {
    pub upper: Ellipse,
    pub lower: Ellipse,
    pub left: HLine,
    pub right: HLine,
    pub vp: HPoint,
    /// Rim with the larger visible pixel extent.
    pub wider: RimSide,
    /// Tangency points (left, right) of the silhouette lines on the upper rim.
    pub upper_arc: (HPoint, HPoint),
    /// Tangency points (left, right) on the lower rim.
    pub lower_arc: (HPoint, HPoint),
    /// Image of the upper rim point nearest the camera. It always lies on
    /// the visible arc, which flips between the two ellipse branches when
    /// the camera crosses the rim plane.
    pub upper_apex: HPoint,
    /// Image of the lower rim point nearest the camera.
    pub lower_apex: HPoint,
}

impl TargetRegion {
    pub fn wider_ellipse(&self) -> &Ellipse {
        match self.wider {
            RimSide::Upper => &self.upper,
            RimSide::Lower => &self.lower,
        }
    }

    pub fn narrower_ellipse(&self) -> &Ellipse {
        match self.wider {
            RimSide::Upper => &self.lower,
            RimSide::Lower => &self.upper,
        }
    }

    /// Visible-arc endpoints `(A'_1, A'_N)` on the wider rim.
    pub fn wider_arc(&self) -> (HPoint, HPoint) {
        match self.wider {
            RimSide::Upper => self.upper_arc,
            RimSide::Lower => self.lower_arc,
        }
    }

    pub fn narrower_arc(&self) -> (HPoint, HPoint) {
        match self.wider {
            RimSide::Upper => self.lower_arc,
            RimSide::Lower => self.upper_arc,
        }
    }

    /// Visible-arc apex of the wider rim.
    pub fn wider_apex(&self) -> HPoint {
        match self.wider {
            RimSide::Upper => self.upper_apex,
            RimSide::Lower => self.lower_apex,
        }
    }

    pub fn narrower_apex(&self) -> HPoint {
        match self.wider {
            RimSide::Upper => self.lower_apex,
            RimSide::Lower => self.upper_apex,
        }
    }
}

/// Standard pinhole projection of a camera-frame point (mm) to pixels.
pub fn project_point(p: Vector3<f64>, intr: &CameraIntrinsics) -> Result<(f64, f64), CameraError> {
    if p[2] <= 0.0 {
        return Err(CameraError::BehindCamera);
    }
    let f = intr.fx();
    Ok((f * p[0] / p[2] + intr.cx, f * p[1] / p[2] + intr.cy))
}

/// Exact image ellipse of the rim circle at axial height `h` (mm above the
/// label mid-height point).
///
/// The circle's supporting plane maps to the image through the homography
/// `K [r e1 | r e2 | c]`; pushing the unit circle's conic through it gives the
/// image conic, which is then converted back to parametric form.
pub fn project_rim_circle(
    pose: &Pose,
    h: f64,
    cyl: &CylinderModel,
    intr: &CameraIntrinsics,
) -> Result<Ellipse, CameraError> {
    let r = cyl.radius_mm;
    let rot = pose.rotation();
    let w = pose.axis_dir();
    let e1 = rot * Vector3::new(1.0, 0.0, 0.0);
    let e2 = rot * Vector3::new(0.0, 0.0, 1.0);
    let c = pose.center() + h * w;
    // camera center on the supporting plane
    if w.dot(&c).abs() <= 1e-9 * c.norm().max(1.0) {
        return Err(CameraError::DegenerateView);
    }
    // whole circle in front of the camera
    let z_min = c[2] - r * (e1[2] * e1[2] + e2[2] * e2[2]).sqrt();
    if z_min <= 0.0 {
        return Err(CameraError::BehindCamera);
    }
    let m = intr.k() * Matrix3::from_columns(&[r * e1, r * e2, c]);
    let m_inv = m.try_inverse().ok_or(CameraError::DegenerateView)?;
    let unit_circle = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
    let conic = m_inv.transpose() * unit_circle * m_inv;
    let co = [
        conic[(0, 0)],
        2.0 * conic[(0, 1)],
        conic[(1, 1)],
        2.0 * conic[(0, 2)],
        2.0 * conic[(1, 2)],
        conic[(2, 2)],
    ];
    Ellipse::from_implicit(co).map_err(|_| CameraError::DegenerateView)
}

/// Distance from the camera center to the cylinder axis.
fn axis_distance(pose: &Pose) -> f64 {
    let w = pose.axis_dir();
    let c = pose.center();
    (c - w * c.dot(&w)).norm()
}

/// Image lines of the two planes through the camera center tangent to the
/// cylinder, plus the vanishing point of 3D lines parallel to the axis.
/// Lines are ordered left-to-right in the image; the VP has `w = 0` when the
/// axis is parallel to the image plane.
pub fn silhouette_lines(
    pose: &Pose,
    cyl: &CylinderModel,
    intr: &CameraIntrinsics,
) -> Result<(HLine, HLine, HPoint), CameraError> {
    let r = cyl.radius_mm;
    let w = pose.axis_dir();
    let c0 = pose.center();
    let rho = axis_distance(pose);
    if rho <= r {
        return Err(CameraError::CameraInsideCylinder);
    }
    // orthonormal basis (p, q) of the plane perpendicular to the axis
    let seed = if w[0].abs() <= w[1].abs().min(w[2].abs()) {
        Vector3::x()
    } else if w[1].abs() <= w[2].abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let p = w.cross(&seed).normalize();
    let q = w.cross(&p);
    // tangent plane normals n = cos(b) p + sin(b) q with n . c0 = r
    let a = p.dot(&c0);
    let b = q.dot(&c0);
    let phi0 = b.atan2(a);
    let spread = (r / rho).clamp(-1.0, 1.0).acos();
    let mut lines: Vec<(f64, HLine, Vector3<f64>)> = Vec::with_capacity(2);
    for beta in [phi0 + spread, phi0 - spread] {
        let n = p * beta.cos() + q * beta.sin();
        let l = intr.plane_to_line(&n);
        // order key: image x near the projected mid-height point
        let key = if l.l1.abs() >= l.l2.abs() {
            -(l.l2 * intr.cy + l.l3) / l.l1
        } else {
            -(l.l1 * intr.cx + l.l3) / l.l2
        };
        lines.push((key, l, n));
    }
    lines.sort_by(|x, y| x.0.total_cmp(&y.0));
    let kw = intr.k() * w;
    let vp = HPoint::raw(kw[0], kw[1], kw[2]).normalized();
    Ok((lines[0].1, lines[1].1, vp))
}

/// Assemble the complete projected label region for a pose: rim ellipses at
/// the band heights, silhouette lines, the VP, and the tangency points that
/// bound the visible arc of each rim.
pub fn target_region(
    pose: &Pose,
    cyl: &CylinderModel,
    intr: &CameraIntrinsics,
) -> Result<TargetRegion, CameraError> {
    let upper = project_rim_circle(pose, cyl.label_top_mm, cyl, intr)?;
    let lower = project_rim_circle(pose, cyl.label_bottom_mm, cyl, intr)?;
    let (left, right, vp) = silhouette_lines(pose, cyl, intr)?;
    let touch = |e: &Ellipse| -> (HPoint, HPoint) {
        (tangent_pole(e, &left), tangent_pole(e, &right))
    };
    let upper_arc = touch(&upper);
    let lower_arc = touch(&lower);
    let extent = |arc: &(HPoint, HPoint)| -> f64 {
        match (arc.0.to_xy(), arc.1.to_xy()) {
            (Some(a), Some(b)) => (a.0 - b.0).hypot(a.1 - b.1),
            _ => 0.0,
        }
    };
    let wider = if extent(&upper_arc) >= extent(&lower_arc) {
        RimSide::Upper
    } else {
        RimSide::Lower
    };
    // rim point nearest the camera: center-to-camera direction, orthogonal
    // to the axis (shared by both rims)
    let w = pose.axis_dir();
    let c0 = pose.center();
    let to_cam = -c0 - (-c0.dot(&w)) * w;
    let u = to_cam / to_cam.norm();
    let apex = |h: f64| -> Result<HPoint, CameraError> {
        let p = project_point(c0 + h * w + cyl.radius_mm * u, intr)?;
        Ok(HPoint::new(p.0, p.1))
    };
    let upper_apex = apex(cyl.label_top_mm)?;
    let lower_apex = apex(cyl.label_bottom_mm)?;
    Ok(TargetRegion {
        upper,
        lower,
        left,
        right,
        vp,
        wider,
        upper_arc,
        lower_arc,
        upper_apex,
        lower_apex,
    })
}
