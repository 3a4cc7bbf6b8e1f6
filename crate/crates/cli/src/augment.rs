//! The dataset generator: deterministic per-image seeding, pose and jitter
//! sampling, background compositing, resizing, and the replayable manifest.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::{GrayImage, RgbImage};
use labelwrap::camera::target_region;
use labelwrap::rim::detect_label_region;
use labelwrap::synth::{extract_line_samples, reproject};
use labelwrap::{Pose, RimDetectParams, SampledLabel};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{AugmentConfig, CliError, JitterParams};

/// Redraw budget per output before giving up on an input pose range.
const MAX_POSE_ATTEMPTS: usize = 32;

/// FNV-1a hash of (master seed, input name, output index). Every output
/// image draws all its randomness from this one seed, so any record can be
/// regenerated in isolation and generation order never matters.
pub fn per_image_seed(master_seed: u64, input_name: &str, index: u32) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |b: u8| {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    };
    for b in master_seed.to_le_bytes() {
        eat(b);
    }
    for &b in input_name.as_bytes() {
        eat(b);
    }
    for b in index.to_le_bytes() {
        eat(b);
    }
    h
}

/// Additive channel shift, then brightness, contrast (anchored at mid-gray)
/// and saturation scaling. All math in f32 with a single clamp-and-round at
/// the end, so values never wrap and dimensions never change.
pub fn apply_jitter(img: &mut RgbImage, j: &JitterParams) {
    let shift = [j.channel[0] as f32, j.channel[1] as f32, j.channel[2] as f32];
    let (bf, cf, sf) = (j.brightness as f32, j.contrast as f32, j.saturation as f32);
    for p in img.pixels_mut() {
        let mut c = [p.0[0] as f32, p.0[1] as f32, p.0[2] as f32];
        for k in 0..3 {
            c[k] = ((c[k] + shift[k]) * bf - 128.0) * cf + 128.0;
        }
        let gray = 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
        for k in 0..3 {
            c[k] = gray + (c[k] - gray) * sf;
        }
        p.0 = c.map(|v| v.round().clamp(0.0, 255.0) as u8);
    }
}

/// Sorted image files (png/jpg/jpeg, any case) directly inside `dir`.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| CliError::Processing(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| CliError::Processing(format!("{}: {e}", dir.display())))?
            .path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn load_rgb(path: &Path) -> Result<RgbImage, CliError> {
    image::open(path)
        .map(|i| i.to_rgb8())
        .map_err(|e| CliError::Processing(format!("{}: {e}", path.display())))
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Scale to cover `w`×`h` (preserving aspect ratio), then center-crop.
pub fn fit_background(bg: &RgbImage, w: u32, h: u32) -> RgbImage {
    let (bw, bh) = bg.dimensions();
    if (bw, bh) == (w, h) {
        return bg.clone();
    }
    let scale = (w as f64 / bw as f64).max(h as f64 / bh as f64);
    let sw = ((bw as f64 * scale).ceil() as u32).max(w);
    let sh = ((bh as f64 * scale).ceil() as u32).max(h);
    let scaled = imageops::resize(bg, sw, sh, FilterType::Triangle);
    imageops::crop_imm(&scaled, (sw - w) / 2, (sh - h) / 2, w, h).to_image()
}

/// Background everywhere the mask is unset, label pixels where it is set.
pub fn composite_background(
    label: &RgbImage,
    mask: &GrayImage,
    background: &RgbImage,
) -> RgbImage {
    assert_eq!(label.dimensions(), mask.dimensions());
    assert_eq!(label.dimensions(), background.dimensions());
    let mut out = background.clone();
    for (x, y, p) in label.enumerate_pixels() {
        if mask.get_pixel(x, y).0[0] != 0 {
            out.put_pixel(x, y, *p);
        }
    }
    out
}

/// One line of the dataset manifest; holds everything needed to rebuild its
/// output image bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub output: String,
    pub source: String,
    pub pose: Pose,
    /// Background file name, or `None` for the plain black background.
    pub background: Option<String>,
    pub jitter: JitterParams,
    pub seed: u64,
}

impl ManifestRecord {
    /// Tab-separated: output, source, 5 pose numbers, background or "none",
    /// 6 jitter numbers, seed.
    pub fn to_line(&self) -> String {
        let p = &self.pose;
        let j = &self.jitter;
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.output,
            self.source,
            p.rot_x_deg,
            p.rot_z_deg,
            p.tx,
            p.ty,
            p.tz,
            self.background.as_deref().unwrap_or("none"),
            j.channel[0],
            j.channel[1],
            j.channel[2],
            j.brightness,
            j.contrast,
            j.saturation,
            self.seed,
        )
    }

    pub fn parse_line(line: &str) -> Result<Self, String> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 15 {
            return Err(format!("expected 15 tab-separated fields, got {}", f.len()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| format!("{s:?}: {e}"));
        Ok(Self {
            output: f[0].to_string(),
            source: f[1].to_string(),
            pose: Pose::new(num(f[2])?, num(f[3])?, num(f[4])?, num(f[5])?, num(f[6])?),
            background: if f[7] == "none" { None } else { Some(f[7].to_string()) },
            jitter: JitterParams {
                channel: [num(f[8])?, num(f[9])?, num(f[10])?],
                brightness: num(f[11])?,
                contrast: num(f[12])?,
                saturation: num(f[13])?,
            },
            seed: f[14].parse().map_err(|e| format!("{:?}: {e}", f[14]))?,
        })
    }
}

/// A source photo after the one-time detection and line-sample extraction.
pub struct PreparedInput {
    pub name: String,
    pub stem: String,
    pub samples: SampledLabel,
}

pub fn prepare_input(path: &Path, params: &RimDetectParams) -> Result<PreparedInput, CliError> {
    let img = load_rgb(path)?;
    let region = detect_label_region(&img, params)
        .map_err(|e| CliError::Processing(format!("{}: {e}", path.display())))?;
    let samples = extract_line_samples(&img, &region, 1.0)
        .map_err(|e| CliError::Processing(format!("{}: {e}", path.display())))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into());
    Ok(PreparedInput { name: file_name(path), stem, samples })
}

/// Render one augmented view: re-project at `pose`, composite over the
/// (already frame-fitted) background, jitter, resize.
pub fn render_view(
    samples: &SampledLabel,
    pose: &Pose,
    background: Option<&RgbImage>,
    jitter: &JitterParams,
    cfg: &AugmentConfig,
) -> Result<RgbImage, CliError> {
    let target = target_region(pose, &cfg.cylinder, &cfg.camera)
        .map_err(|e| CliError::Processing(format!("pose {pose:?}: {e}")))?;
    let (img, mask) = reproject(samples, &target, cfg.camera.width, cfg.camera.height)
        .map_err(|e| CliError::Processing(format!("pose {pose:?}: {e}")))?;
    let mut frame = match background {
        Some(bg) => composite_background(&img, &mask, bg),
        None => img,
    };
    apply_jitter(&mut frame, jitter);
    Ok(imageops::resize(&frame, cfg.output_size[0], cfg.output_size[1], FilterType::Triangle))
}

/// Re-create the image of one manifest record from its source photo and the
/// same config. Bit-identical to the original output.
pub fn replay_record(
    record: &ManifestRecord,
    input_dir: &Path,
    cfg: &AugmentConfig,
) -> Result<RgbImage, CliError> {
    let prep = prepare_input(&input_dir.join(&record.source), &RimDetectParams::default())?;
    let background = match &record.background {
        None => None,
        Some(name) => {
            let dir = cfg.backgrounds.as_ref().ok_or_else(|| {
                CliError::Usage(format!("record references background {name} but no directory is configured"))
            })?;
            Some(fit_background(&load_rgb(&dir.join(name))?, cfg.camera.width, cfg.camera.height))
        }
    };
    render_view(&prep.samples, &record.pose, background.as_ref(), &record.jitter, cfg)
}

pub struct AugmentReport {
    pub inputs: usize,
    pub failed_inputs: Vec<(String, String)>,
    pub outputs: usize,
    pub manifest: PathBuf,
}

/// Generate `cfg.count` augmented images for every label photo in
/// `input_dir`, plus `manifest.tsv`. Failing inputs are logged and skipped;
/// the run only fails when every input does (or on config/IO problems).
pub fn run_augment(
    input_dir: &Path,
    out_dir: &Path,
    cfg: &AugmentConfig,
) -> Result<AugmentReport, CliError> {
    cfg.validate()?;
    let inputs = list_images(input_dir)?;
    if inputs.is_empty() {
        return Err(CliError::Processing(format!(
            "no input images (png/jpg) in {}",
            input_dir.display()
        )));
    }
    let backgrounds: Vec<(String, RgbImage)> = match &cfg.backgrounds {
        None => Vec::new(),
        Some(dir) => {
            let files = list_images(dir)?;
            if files.is_empty() {
                return Err(CliError::Usage(format!(
                    "background directory {} holds no images",
                    dir.display()
                )));
            }
            files
                .iter()
                .map(|p| {
                    Ok((
                        file_name(p),
                        fit_background(&load_rgb(p)?, cfg.camera.width, cfg.camera.height),
                    ))
                })
                .collect::<Result<_, CliError>>()?
        }
    };
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Processing(format!("{}: {e}", out_dir.display())))?;

    let params = RimDetectParams::default();
    let mut records = Vec::new();
    let mut failed_inputs = Vec::new();
    for path in &inputs {
        let name = file_name(path);
        let prep = match prepare_input(path, &params) {
            Ok(p) => p,
            Err(e) => {
                eprintln!("skipping {name}: {e}");
                failed_inputs.push((name, e.to_string()));
                continue;
            }
        };
        let results: Vec<Result<ManifestRecord, String>> = (0..cfg.count)
            .into_par_iter()
            .map(|i| {
                let seed = per_image_seed(cfg.master_seed, &prep.name, i);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                // some pose draws render degenerately (camera in a rim plane,
                // label arc out of view); redraw from the same stream until
                // one works so the requested count is actually delivered
                let mut last_err = String::new();
                for _ in 0..MAX_POSE_ATTEMPTS {
                    let pose = cfg.pose.sample(&mut rng);
                    let bg = if backgrounds.is_empty() {
                        None
                    } else {
                        Some(rng.gen_range(0..backgrounds.len()))
                    };
                    let jitter = cfg.jitter.sample(&mut rng);
                    let img = match render_view(
                        &prep.samples,
                        &pose,
                        bg.map(|b| &backgrounds[b].1),
                        &jitter,
                        cfg,
                    ) {
                        Ok(img) => img,
                        Err(e) => {
                            last_err = e.to_string();
                            continue;
                        }
                    };
                    let output = format!("{}_{i:04}.png", prep.stem);
                    img.save(out_dir.join(&output)).map_err(|e| e.to_string())?;
                    return Ok(ManifestRecord {
                        output,
                        source: prep.name.clone(),
                        pose,
                        background: bg.map(|b| backgrounds[b].0.clone()),
                        jitter,
                        seed,
                    });
                }
                Err(format!("no renderable pose after {MAX_POSE_ATTEMPTS} draws: {last_err}"))
            })
            .collect();
        for r in results {
            match r {
                Ok(rec) => records.push(rec),
                Err(e) => eprintln!("skipping one output of {}: {e}", prep.name),
            }
        }
    }
    if failed_inputs.len() == inputs.len() {
        return Err(CliError::Processing("all input images failed".into()));
    }

    let manifest = out_dir.join("manifest.tsv");
    let file = std::fs::File::create(&manifest)
        .map_err(|e| CliError::Processing(format!("{}: {e}", manifest.display())))?;
    let mut w = std::io::BufWriter::new(file);
    for r in &records {
        writeln!(w, "{}", r.to_line())
            .map_err(|e| CliError::Processing(format!("{}: {e}", manifest.display())))?;
    }
    w.flush().map_err(|e| CliError::Processing(format!("{}: {e}", manifest.display())))?;

    Ok(AugmentReport {
        inputs: inputs.len(),
        failed_inputs,
        outputs: records.len(),
        manifest,
    })
}
