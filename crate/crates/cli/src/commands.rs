//! One function per subcommand, returning printable reports or written
//! paths; `main` only parses flags and maps errors to exit codes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use labelwrap::camera::RimSide;
use labelwrap::retrieval::{rank_top_k, read_embeddings};
use labelwrap::rim::{detect_label_region, detect_label_region_debug};
use labelwrap::synth::{front_view, synthesize_view};
use labelwrap::{LabelRegion, Pose, RimDetectParams};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::augment::{composite_background, fit_background, list_images, load_rgb};
use crate::config::{AugmentConfig, CliError};

/// Plain-text region description: one `key: values` line per element.
pub fn region_report(region: &LabelRegion) -> String {
    let mut s = String::new();
    for (name, e) in [("upper", &region.upper), ("lower", &region.lower)] {
        writeln!(s, "{name}: {} {} {} {} {}", e.cx, e.cy, e.a, e.b, e.theta).unwrap();
    }
    for (name, l) in [("left", &region.left), ("right", &region.right)] {
        writeln!(s, "{name}: {} {} {}", l.l1, l.l2, l.l3).unwrap();
    }
    writeln!(s, "vp: {} {} {}", region.vp.x, region.vp.y, region.vp.w).unwrap();
    let wider = match region.wider {
        RimSide::Upper => "upper",
        RimSide::Lower => "lower",
    };
    writeln!(s, "wider: {wider}").unwrap();
    writeln!(s, "residuals: {} {}", region.upper_residual, region.lower_residual).unwrap();
    s
}

pub fn run_detect(image_path: &Path, debug: bool, out_dir: &Path) -> Result<String, CliError> {
    let img = load_rgb(image_path)?;
    let params = RimDetectParams::default();
    let region = if debug {
        std::fs::create_dir_all(out_dir)
            .map_err(|e| CliError::Processing(format!("{}: {e}", out_dir.display())))?;
        detect_label_region_debug(&img, &params, out_dir)
    } else {
        detect_label_region(&img, &params)
    }
    .map_err(|e| CliError::Processing(format!("{}: {e}", image_path.display())))?;
    Ok(region_report(&region))
}

fn output_file(out_dir: &Path, input: &Path, suffix: &str) -> Result<PathBuf, CliError> {
    let stem = input
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| CliError::Usage(format!("bad input file name {}", input.display())))?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Processing(format!("{}: {e}", out_dir.display())))?;
    Ok(out_dir.join(format!("{stem}_{suffix}.png")))
}

fn save(img: &image::RgbImage, path: &Path) -> Result<(), CliError> {
    img.save(path).map_err(|e| CliError::Processing(format!("{}: {e}", path.display())))
}

/// Detect, then synthesize one view at `pose`; optional background composite
/// (picked from the directory with `seed`), optional mask dump.
pub fn run_synth(
    image_path: &Path,
    pose: &Pose,
    cfg: &AugmentConfig,
    out_dir: &Path,
    backgrounds: Option<&Path>,
    seed: u64,
    debug: bool,
) -> Result<PathBuf, CliError> {
    let img = load_rgb(image_path)?;
    let region = detect_label_region(&img, &RimDetectParams::default())
        .map_err(|e| CliError::Processing(format!("{}: {e}", image_path.display())))?;
    let (mut out, mask) = synthesize_view(&img, &region, pose, &cfg.cylinder, &cfg.camera)
        .map_err(|e| CliError::Processing(format!("{}: {e}", image_path.display())))?;
    if let Some(dir) = backgrounds {
        let files = list_images(dir)?;
        if files.is_empty() {
            return Err(CliError::Usage(format!(
                "background directory {} holds no images",
                dir.display()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pick = rng.gen_range(0..files.len());
        let bg = fit_background(&load_rgb(&files[pick])?, cfg.camera.width, cfg.camera.height);
        out = composite_background(&out, &mask, &bg);
    }
    let path = output_file(out_dir, image_path, "synth")?;
    save(&out, &path)?;
    if debug {
        let mask_path = output_file(out_dir, image_path, "mask")?;
        image::DynamicImage::ImageLuma8(mask)
            .save(&mask_path)
            .map_err(|e| CliError::Processing(format!("{}: {e}", mask_path.display())))?;
    }
    Ok(path)
}

/// Normalize a photo to the canonical front view.
pub fn run_frontview(
    image_path: &Path,
    cfg: &AugmentConfig,
    out_dir: &Path,
) -> Result<PathBuf, CliError> {
    let img = load_rgb(image_path)?;
    let (out, _mask) = front_view(&img, &RimDetectParams::default(), &cfg.cylinder, &cfg.camera)
        .map_err(|e| CliError::Processing(format!("{}: {e}", image_path.display())))?;
    let path = output_file(out_dir, image_path, "front")?;
    save(&out, &path)?;
    Ok(path)
}

/// Rank the gallery against every query record; one block per query,
/// `rank class similarity` per line.
pub fn run_rank(query_path: &Path, gallery_path: &Path, k: usize) -> Result<String, CliError> {
    let queries = read_embeddings(query_path)
        .map_err(|e| CliError::Processing(format!("{}: {e}", query_path.display())))?;
    let gallery = read_embeddings(gallery_path)
        .map_err(|e| CliError::Processing(format!("{}: {e}", gallery_path.display())))?;
    if queries.is_empty() {
        return Err(CliError::Processing(format!(
            "{}: no embedding records",
            query_path.display()
        )));
    }
    if k > gallery.len() {
        eprintln!(
            "warning: k={k} exceeds the gallery size; returning all {} entries",
            gallery.len()
        );
    }
    let mut s = String::new();
    for q in &queries {
        writeln!(s, "query {}", q.class_id).unwrap();
        let top = rank_top_k(q, &gallery, k)
            .map_err(|e| CliError::Processing(format!("query {}: {e}", q.class_id)))?;
        for (rank, (class_id, sim)) in top.iter().enumerate() {
            writeln!(s, "{} {} {:.6}", rank + 1, class_id, sim).unwrap();
        }
    }
    Ok(s)
}
