//! View synthesis: extract color line samples along the projected cylinder
//! generators of a detected label region, then re-project them onto the
//! region of any other pose so that every pixel keeps its cross-ratio
//! against the rim anchors and the axis vanishing point.
//!
//! Each generator of the cylinder projects to an image line through the
//! axis vanishing point D. The line meets the wider rim at A, the narrower
//! rim at C, and a label point at B; the cross-ratio of (A, B, C, D) is a
//! projective invariant of the label point, so equating it between source
//! and target lines transfers colors exactly.

use image::{GrayImage, Rgb, RgbImage};
use thiserror::Error;

use crate::camera::{target_region, CameraError, CameraIntrinsics, CylinderModel, Pose, RimSide, TargetRegion};
use crate::conic::{line_ellipse_intersections, tangent_pole, Ellipse};
use crate::geometry::{cross_ratio, solve_fourth_point, GeometryError, HPoint};
use crate::render::sample_bilinear;
use crate::rim::{detect_label_region, LabelRegion, RimDetectParams, RimError};

/// Errors from sampling and re-projection.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    /// The wider rim arc is shorter than 16 pixels.
    #[error("label region too narrow to sample")]
    RegionTooNarrow,
    /// A sample line misses the narrower rim: the region is inconsistent.
    #[error("sample line does not meet the narrower rim")]
    NoIntersection,
    /// The target region has no usable rim arc.
    #[error("target region is empty")]
    EmptyTarget,
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Rim(#[from] RimError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Colors along one segment A_kC_k, plus the scalar line coordinates of the
/// anchors: `a` at the wider rim, `c` at the narrower rim, `d` at the
/// vanishing point (`f64::INFINITY` when the tangents are parallel).
#[derive(Debug, Clone)]
pub struct LineSample {
    pub colors: Vec<[f32; 3]>,
    pub a: f64,
    pub c: f64,
    pub d: f64,
    /// Distance between adjacent color samples in line coordinates.
    pub spacing: f64,
}

impl LineSample {
    /// Color at line coordinate `b`, linearly interpolated between stored
    /// samples and clamped to the segment.
    pub fn color_at(&self, b: f64) -> [f64; 3] {
        let t = (b - self.a) / self.spacing;
        let last = self.colors.len() - 1;
        if t <= 0.0 {
            return self.colors[0].map(f64::from);
        }
        if t >= last as f64 {
            return self.colors[last].map(f64::from);
        }
        let i = t.floor() as usize;
        let f = t - i as f64;
        let (lo, hi) = (self.colors[i], self.colors[i + 1]);
        [0, 1, 2].map(|ch| (1.0 - f) * lo[ch] as f64 + f * hi[ch] as f64)
    }
}

/// All line samples of one source image, ordered left to right along the
/// wider rim, with the normalized transverse position of each sample.
#[derive(Debug, Clone)]
pub struct SampledLabel {
    pub lines: Vec<LineSample>,
    pub region: LabelRegion,
    /// u_1 = 0, u_N = 1, strictly increasing.
    pub us: Vec<f64>,
}

/// One written destination pixel with its scalar quadruples, for auditing
/// the cross-ratio transfer. Each quadruple is (a, b, c, d).
#[derive(Debug, Clone, Copy)]
pub struct TraceRecord {
    /// Index of the target rim line that wrote the pixel.
    pub line_index: usize,
    pub src: [f64; 4],
    pub dst: [f64; 4],
}

/// Geometry shared by detected and analytic regions: rim ellipses, wider-rim
/// arc endpoints ordered left to right, a point on each rim's visible arc,
/// and the vanishing point.
struct RegionFrame {
    wider: Ellipse,
    narrower: Ellipse,
    end_left: (f64, f64),
    end_right: (f64, f64),
    wider_apex: (f64, f64),
    narrower_apex: (f64, f64),
    vp: HPoint,
}

fn wrap_tau(x: f64) -> f64 {
    let t = x.rem_euclid(std::f64::consts::TAU);
    if t < 0.0 {
        t + std::f64::consts::TAU
    } else {
        t
    }
}

/// Parametric angle of a point on (or near) the ellipse.
fn point_angle(e: &Ellipse, x: f64, y: f64) -> f64 {
    let (dx, dy) = (x - e.cx, y - e.cy);
    let (ct, st) = (e.theta.cos(), e.theta.sin());
    let xe = ct * dx + st * dy;
    let ye = -st * dx + ct * dy;
    (ye / e.b).atan2(xe / e.a)
}

impl RegionFrame {
    fn from_label(region: &LabelRegion) -> Result<Self, SynthError> {
        let (wider, narrower, wa, na) = match region.wider {
            RimSide::Upper => (region.upper, region.lower, region.upper_apex, region.lower_apex),
            RimSide::Lower => (region.lower, region.upper, region.lower_apex, region.upper_apex),
        };
        let pl = tangent_pole(&wider, &region.left).to_xy().ok_or(SynthError::EmptyTarget)?;
        let pr = tangent_pole(&wider, &region.right).to_xy().ok_or(SynthError::EmptyTarget)?;
        Ok(Self {
            wider,
            narrower,
            end_left: pl,
            end_right: pr,
            wider_apex: wa.to_xy().ok_or(SynthError::EmptyTarget)?,
            narrower_apex: na.to_xy().ok_or(SynthError::EmptyTarget)?,
            vp: region.vp,
        })
    }

    fn from_target(target: &TargetRegion) -> Result<Self, SynthError> {
        let (left, right) = target.wider_arc();
        Ok(Self {
            wider: *target.wider_ellipse(),
            narrower: *target.narrower_ellipse(),
            end_left: left.to_xy().ok_or(SynthError::EmptyTarget)?,
            end_right: right.to_xy().ok_or(SynthError::EmptyTarget)?,
            wider_apex: target.wider_apex().to_xy().ok_or(SynthError::EmptyTarget)?,
            narrower_apex: target.narrower_apex().to_xy().ok_or(SynthError::EmptyTarget)?,
            vp: target.vp,
        })
    }

    /// Points on the wider rim's visible arc (the branch through the apex),
    /// evenly spaced in arc length at about one pixel, with the normalized
    /// transverse parameter of each point.
    fn arc_walk(&self) -> Vec<((f64, f64), f64)> {
        let e = &self.wider;
        let t1 = point_angle(e, self.end_left.0, self.end_left.1);
        let t2 = point_angle(e, self.end_right.0, self.end_right.1);
        let t_front = point_angle(e, self.wider_apex.0, self.wider_apex.1);
        let fwd = wrap_tau(t2 - t1);
        let delta = if wrap_tau(t_front - t1) <= fwd { fwd } else { fwd - std::f64::consts::TAU };
        // fine subdivision, then resample uniformly by chord length
        let fine = 4096usize;
        let mut pts = Vec::with_capacity(fine + 1);
        let mut cum = Vec::with_capacity(fine + 1);
        let mut len = 0.0;
        for i in 0..=fine {
            let p = e.point_at(t1 + delta * i as f64 / fine as f64);
            if let Some(&prev) = pts.last() {
                let prev: (f64, f64) = prev;
                len += ((p.0 - prev.0).powi(2) + (p.1 - prev.1).powi(2)).sqrt();
            }
            pts.push(p);
            cum.push(len);
        }
        let n = ((len.round() as usize) + 1).max(2);
        let mut out = Vec::with_capacity(n);
        let mut j = 0usize;
        for k in 0..n {
            // the ratio reaches exactly 1.0 at the last sample, so `s` can
            // never round above the final cumulative length
            let s = len * (k as f64 / (n - 1) as f64);
            while j + 2 < cum.len() && cum[j + 1] < s {
                j += 1;
            }
            let seg = cum[j + 1] - cum[j];
            let f = if seg > 0.0 { (s - cum[j]) / seg } else { 0.0 };
            let p = (
                pts[j].0 + f * (pts[j + 1].0 - pts[j].0),
                pts[j].1 + f * (pts[j + 1].1 - pts[j].1),
            );
            out.push((p, k as f64 / (n - 1) as f64));
        }
        out
    }

    /// For a wider-rim point A, intersect line(A, D) with the narrower rim
    /// and keep the crossing on the visible arc (the side of the apex).
    /// Returns the unit direction from A toward C, the length |AC| and the
    /// line coordinate of the vanishing point.
    fn chord(&self, a_pt: (f64, f64)) -> Result<((f64, f64), f64, f64), SynthError> {
        let line = HPoint::new(a_pt.0, a_pt.1).join(&self.vp);
        let hits = line_ellipse_intersections(&self.narrower, &line);
        let toward = (
            self.narrower_apex.0 - self.narrower.cx,
            self.narrower_apex.1 - self.narrower.cy,
        );
        let c_pt = hits
            .iter()
            .filter_map(|p| p.to_xy())
            .max_by(|p, q| {
                let sp = (p.0 - self.narrower.cx) * toward.0 + (p.1 - self.narrower.cy) * toward.1;
                let sq = (q.0 - self.narrower.cx) * toward.0 + (q.1 - self.narrower.cy) * toward.1;
                sp.total_cmp(&sq)
            })
            .ok_or(SynthError::NoIntersection)?;
        let (dx, dy) = (c_pt.0 - a_pt.0, c_pt.1 - a_pt.1);
        let len = (dx * dx + dy * dy).sqrt();
        if len <= 1e-9 {
            return Err(SynthError::NoIntersection);
        }
        let dir = (dx / len, dy / len);
        let d = match self.vp.to_xy() {
            None => f64::INFINITY,
            Some((vx, vy)) => (vx - a_pt.0) * dir.0 + (vy - a_pt.1) * dir.1,
        };
        if d.is_finite() && d > -1e-6 && d < len + 1e-6 {
            return Err(SynthError::NoIntersection);
        }
        Ok((dir, len, d))
    }
}

impl From<&TargetRegion> for LabelRegion {
    fn from(t: &TargetRegion) -> Self {
        LabelRegion {
            upper: t.upper,
            lower: t.lower,
            left: t.left,
            right: t.right,
            vp: t.vp,
            wider: t.wider,
            upper_apex: t.upper_apex,
            lower_apex: t.lower_apex,
            upper_residual: 0.0,
            lower_residual: 0.0,
        }
    }
}

/// Sample the source image along one line per wider-rim arc pixel.
pub fn extract_line_samples(
    image: &RgbImage,
    region: &LabelRegion,
    spacing: f64,
) -> Result<SampledLabel, SynthError> {
    assert!(spacing > 0.0, "sample spacing must be positive");
    let frame = RegionFrame::from_label(region)?;
    let walk = frame.arc_walk();
    if walk.len() < 16 {
        return Err(SynthError::RegionTooNarrow);
    }
    let mut lines = Vec::with_capacity(walk.len());
    let mut us = Vec::with_capacity(walk.len());
    for &(a_pt, u) in &walk {
        let (dir, len, d) = frame.chord(a_pt)?;
        let count = ((len / spacing).ceil() as usize).max(2);
        let step = len / (count - 1) as f64;
        let colors = (0..count)
            .map(|i| {
                // inset the taps so bilinear lookups at the rim endpoints do
                // not blend in background through antialiased boundary pixels
                let inset = (len / 2.0).min(1.5);
                let b = (i as f64 * step).clamp(inset, len - inset);
                let rgb =
                    sample_bilinear(image, a_pt.0 + dir.0 * b, a_pt.1 + dir.1 * b);
                rgb.map(|v| v as f32)
            })
            .collect();
        lines.push(LineSample { colors, a: 0.0, c: len, d, spacing: step });
        us.push(u);
    }
    Ok(SampledLabel { lines, region: region.clone(), us })
}

/// Solve the source position b whose cross-ratio against (a, c, d) equals
/// `kappa`; `None` means the destination pixel sits exactly on the narrower
/// rim, which maps to c.
fn source_position(line: &LineSample, kappa: Option<f64>) -> Result<f64, SynthError> {
    match kappa {
        None => Ok(line.c),
        Some(k) => Ok(solve_fourth_point(line.a, line.c, line.d, k)?),
    }
}

fn reproject_impl(
    samples: &SampledLabel,
    target: &TargetRegion,
    width: u32,
    height: u32,
    mut trace: Option<&mut Vec<TraceRecord>>,
) -> Result<(RgbImage, GrayImage), SynthError> {
    if samples.lines.len() < 2 {
        return Err(SynthError::RegionTooNarrow);
    }
    let frame = RegionFrame::from_target(target)?;
    let walk = frame.arc_walk();
    if walk.len() < 2 {
        return Err(SynthError::EmptyTarget);
    }
    let mut img = RgbImage::new(width, height);
    let mut mask = GrayImage::new(width, height);
    let us = &samples.us;
    for (j, &(a_pt, u)) in walk.iter().enumerate() {
        let (dir, len, d) = frame.chord(a_pt)?;
        // adjacent source samples around u, blended linearly
        let mut k = us.partition_point(|&v| v <= u);
        k = k.clamp(1, us.len() - 1);
        let (k0, k1) = (k - 1, k);
        let lambda = ((u - us[k0]) / (us[k1] - us[k0])).clamp(0.0, 1.0);
        let (line0, line1) = (&samples.lines[k0], &samples.lines[k1]);
        let steps = ((2.0 * len).ceil() as usize).max(2);
        for i in 0..=steps {
            let b_dst = len * i as f64 / steps as f64;
            let kappa =
                if i == steps { None } else { Some(cross_ratio(0.0, b_dst, len, d)?) };
            let b0 = source_position(line0, kappa)?;
            let b1 = source_position(line1, kappa)?;
            let (c0, c1) = (line0.color_at(b0), line1.color_at(b1));
            let px = a_pt.0 + dir.0 * b_dst;
            let py = a_pt.1 + dir.1 * b_dst;
            let (xi, yi) = (px.round() as i64, py.round() as i64);
            if xi < 0 || yi < 0 || xi >= width as i64 || yi >= height as i64 {
                continue;
            }
            let rgb = [0, 1, 2].map(|ch| {
                ((1.0 - lambda) * c0[ch] + lambda * c1[ch]).round().clamp(0.0, 255.0) as u8
            });
            img.put_pixel(xi as u32, yi as u32, Rgb(rgb));
            mask.put_pixel(xi as u32, yi as u32, image::Luma([255]));
            if let Some(t) = trace.as_mut() {
                let (line_s, b_s) = if lambda <= 0.5 { (line0, b0) } else { (line1, b1) };
                t.push(TraceRecord {
                    line_index: j,
                    src: [line_s.a, b_s, line_s.c, line_s.d],
                    dst: [0.0, b_dst, len, d],
                });
            }
        }
    }
    fill_gaps(&mut img, &mut mask);
    Ok((img, mask))
}

/// Close one-pixel horizontal gaps between adjacent rasterized lines: a
/// single pass writing the per-channel median of the written 3x1 neighbors,
/// computed entirely from the pre-pass state.
fn fill_gaps(img: &mut RgbImage, mask: &mut GrayImage) {
    let (w, h) = (img.width(), img.height());
    if w < 3 {
        return;
    }
    let pre_img = img.clone();
    let pre_mask = mask.clone();
    for y in 0..h {
        for x in 1..w - 1 {
            if pre_mask.get_pixel(x, y).0[0] != 0 {
                continue;
            }
            let left_on = pre_mask.get_pixel(x - 1, y).0[0] != 0;
            let right_on = pre_mask.get_pixel(x + 1, y).0[0] != 0;
            if left_on && right_on {
                let l = pre_img.get_pixel(x - 1, y).0;
                let r = pre_img.get_pixel(x + 1, y).0;
                let m = [0, 1, 2].map(|ch| ((l[ch] as u16 + r[ch] as u16 + 1) / 2) as u8);
                img.put_pixel(x, y, Rgb(m));
                mask.put_pixel(x, y, image::Luma([255]));
            }
        }
    }
}

/// Re-project the sampled label onto a target region, returning the image
/// and the mask of written pixels. Pixels outside the region stay black.
pub fn reproject(
    samples: &SampledLabel,
    target: &TargetRegion,
    width: u32,
    height: u32,
) -> Result<(RgbImage, GrayImage), SynthError> {
    reproject_impl(samples, target, width, height, None)
}

/// As [`reproject`], additionally recording the source and destination
/// scalar quadruples of every written pixel (before gap filling).
pub fn reproject_traced(
    samples: &SampledLabel,
    target: &TargetRegion,
    width: u32,
    height: u32,
) -> Result<(RgbImage, GrayImage, Vec<TraceRecord>), SynthError> {
    let mut trace = Vec::new();
    let (img, mask) = reproject_impl(samples, target, width, height, Some(&mut trace))?;
    Ok((img, mask, trace))
}

/// Extract line samples from `image` under `region` and re-project them onto
/// the analytic region of `pose`.
pub fn synthesize_view(
    image: &RgbImage,
    region: &LabelRegion,
    pose: &Pose,
    cylinder: &CylinderModel,
    intrinsics: &CameraIntrinsics,
) -> Result<(RgbImage, GrayImage), SynthError> {
    let samples = extract_line_samples(image, region, 1.0)?;
    let target = target_region(pose, cylinder, intrinsics)?;
    reproject(&samples, &target, intrinsics.width, intrinsics.height)
}

/// Detect the label region and re-synthesize the canonical front view at
/// the identity pose. This is the normalization applied to both gallery and
/// query photographs.
pub fn front_view(
    image: &RgbImage,
    params: &RimDetectParams,
    cylinder: &CylinderModel,
    intrinsics: &CameraIntrinsics,
) -> Result<(RgbImage, GrayImage), SynthError> {
    let region = detect_label_region(image, params)?;
    synthesize_view(image, &region, &Pose::identity(), cylinder, intrinsics)
}
