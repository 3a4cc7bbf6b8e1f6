//! Ray-cast reference renderer: physically correct perspective images of a
//! label texture wrapped on the posed cylinder.
//!
//! This is the independent oracle the test suite compares against. It shares
//! no code with the synthesis path: every pixel is an explicit ray/cylinder
//! intersection followed by a texture lookup, so agreement with the
//! projective construction is meaningful evidence.

use image::{GrayImage, Rgb, RgbImage};
use nalgebra::Vector3;
use rayon::prelude::*;

use crate::camera::{CameraError, CameraIntrinsics, CylinderModel, Pose};

/// Bilinear texture read with edge clamping; `x`, `y` in pixel coordinates.
pub(crate) fn sample_bilinear(tex: &RgbImage, x: f64, y: f64) -> [f64; 3] {
    let (w, h) = (tex.width() as i64, tex.height() as i64);
    let x0 = x.floor() as i64;
    let y0 = y.floor() as i64;
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let at = |xi: i64, yi: i64| -> [f64; 3] {
        let xi = xi.clamp(0, w - 1) as u32;
        let yi = yi.clamp(0, h - 1) as u32;
        let p = tex.get_pixel(xi, yi).0;
        [p[0] as f64, p[1] as f64, p[2] as f64]
    };
    let (p00, p10, p01, p11) = (at(x0, y0), at(x0 + 1, y0), at(x0, y0 + 1), at(x0 + 1, y0 + 1));
    let mut out = [0.0; 3];
    for c in 0..3 {
        let top = p00[c] * (1.0 - fx) + p10[c] * fx;
        let bot = p01[c] * (1.0 - fx) + p11[c] * fx;
        out[c] = top * (1.0 - fy) + bot * fy;
    }
    out
}

/// Render the wrapped label by per-pixel ray casting. Returns the image
/// (black outside the label) and the label mask (255 = label).
///
/// The texture spans the full circumference horizontally (u = azimuth) and
/// the label band vertically (v = 0 at the top rim). Rows are rendered in
/// parallel; output is deterministic.
pub fn render_reference(
    pose: &Pose,
    cyl: &CylinderModel,
    intr: &CameraIntrinsics,
    texture: &RgbImage,
) -> Result<(RgbImage, GrayImage), CameraError> {
    if texture.width() == 0 || texture.height() == 0 {
        return Err(CameraError::EmptyTexture);
    }
    let r = cyl.radius_mm;
    let w = pose.axis_dir();
    let c0 = pose.center();
    let rho = (c0 - w * c0.dot(&w)).norm();
    if rho <= r {
        return Err(CameraError::CameraInsideCylinder);
    }
    let rot_t = pose.rotation().transpose();
    let f = intr.fx();
    let (iw, ih) = (intr.width, intr.height);
    let (tw, th) = (texture.width() as f64, texture.height() as f64);
    let band = cyl.band();

    // axis-perpendicular decomposition reused by every ray
    let c_perp = c0 - w * c0.dot(&w);
    let cc = c_perp.norm_squared() - r * r;

    let mut img = RgbImage::new(iw, ih);
    let mut mask = GrayImage::new(iw, ih);
    let img_rows: Vec<(u32, &mut [u8])> = {
        let stride = (iw * 3) as usize;
        img.as_mut().chunks_mut(stride).enumerate().map(|(y, row)| (y as u32, row)).collect()
    };
    let mask_buf: &mut [u8] = mask.as_mut();
    let mask_rows: Vec<&mut [u8]> = mask_buf.chunks_mut(iw as usize).collect();

    img_rows
        .into_par_iter()
        .zip(mask_rows.into_par_iter())
        .for_each(|((y, row), mrow)| {
            for x in 0..iw {
                let v = Vector3::new((x as f64 - intr.cx) / f, (y as f64 - intr.cy) / f, 1.0);
                let v_perp = v - w * v.dot(&w);
                let qa = v_perp.norm_squared();
                if qa < 1e-300 {
                    continue; // ray parallel to the axis
                }
                let qb = v_perp.dot(&c_perp);
                let disc = qb * qb - qa * cc;
                if disc <= 0.0 {
                    continue;
                }
                let sq = disc.sqrt();
                // nearest intersection in front of the camera
                let s = (qb - sq) / qa;
                if s <= 0.0 {
                    continue;
                }
                let hit = v * s;
                let q = rot_t * (hit - c0);
                let height = -q[1];
                if height < cyl.label_bottom_mm || height > cyl.label_top_mm {
                    continue;
                }
                let alpha = q[0].atan2(-q[2]);
                let u = alpha / std::f64::consts::TAU + 0.5;
                let vt = (cyl.label_top_mm - height) / band;
                let col = sample_bilinear(texture, u * (tw - 1.0), vt * (th - 1.0));
                let i = (x * 3) as usize;
                row[i] = col[0].round().clamp(0.0, 255.0) as u8;
                row[i + 1] = col[1].round().clamp(0.0, 255.0) as u8;
                row[i + 2] = col[2].round().clamp(0.0, 255.0) as u8;
                mrow[x as usize] = 255;
            }
        });

    Ok((img, mask))
}

/// Paint the target-region mask by ray casting only (no texture); used by
/// mask-correctness tests.
pub fn render_mask(
    pose: &Pose,
    cyl: &CylinderModel,
    intr: &CameraIntrinsics,
) -> Result<GrayImage, CameraError> {
    let tex = RgbImage::from_pixel(2, 2, Rgb([255, 255, 255]));
    render_reference(pose, cyl, intr, &tex).map(|(_, m)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn narrow_cyl() -> CylinderModel {
        CylinderModel { radius_mm: 38.0, label_top_mm: 20.0, label_bottom_mm: -20.0 }
    }

    #[test]
    fn empty_texture_is_an_error() {
        let tex = RgbImage::new(0, 0);
        let r = render_reference(
            &Pose::identity(),
            &narrow_cyl(),
            &CameraIntrinsics::default(),
            &tex,
        );
        assert!(matches!(r, Err(CameraError::EmptyTexture)));
    }

    #[test]
    fn canonical_mask_width() {
        let intr = CameraIntrinsics::default();
        let (_, mask) =
            render_reference(&Pose::identity(), &narrow_cyl(), &intr, &white_tex()).unwrap();
        // width at mid-height equals the silhouette separation
        let y = 240u32;
        let xs: Vec<u32> = (0..intr.width).filter(|&x| mask.get_pixel(x, y).0[0] > 0).collect();
        let width = (*xs.last().unwrap() - xs[0] + 1) as f64;
        let half = 906.6666666666666 * 38.0 / (150.0f64 * 150.0 - 38.0 * 38.0).sqrt();
        assert!((width - 2.0 * half).abs() < 2.0, "mask width {width}");
        // symmetric about the principal point
        assert!(((xs[0] as f64 + *xs.last().unwrap() as f64) / 2.0 - 320.0).abs() < 1.0);
    }

    fn white_tex() -> RgbImage {
        RgbImage::from_pixel(64, 64, Rgb([255, 255, 255]))
    }

    #[test]
    fn determinism() {
        let intr = CameraIntrinsics::default();
        let pose = Pose::new(7.0, -3.0, 10.0, 5.0, 240.0);
        let tex = {
            let mut t = RgbImage::new(32, 32);
            for (x, y, p) in t.enumerate_pixels_mut() {
                *p = Rgb([(x * 8) as u8, (y * 8) as u8, ((x + y) * 4) as u8]);
            }
            t
        };
        let (a, ma) = render_reference(&pose, &narrow_cyl(), &intr, &tex).unwrap();
        let (b, mb) = render_reference(&pose, &narrow_cyl(), &intr, &tex).unwrap();
        assert_eq!(a.as_raw(), b.as_raw());
        assert_eq!(ma.as_raw(), mb.as_raw());
    }

    #[test]
    fn mask_restricted_to_band() {
        // shrinking the band shrinks the mask strictly
        let intr = CameraIntrinsics::default();
        let wide = narrow_cyl();
        let thin = CylinderModel { label_top_mm: 10.0, label_bottom_mm: -10.0, ..wide };
        let m_wide = render_mask(&Pose::identity(), &wide, &intr).unwrap();
        let m_thin = render_mask(&Pose::identity(), &thin, &intr).unwrap();
        let count = |m: &GrayImage| m.pixels().filter(|p| p.0[0] > 0).count();
        assert!(count(&m_thin) < count(&m_wide));
        // thin mask is a subset of the wide mask
        for (p_thin, p_wide) in m_thin.pixels().zip(m_wide.pixels()) {
            assert!(p_thin.0[0] == 0 || p_wide.0[0] > 0);
        }
    }
}
