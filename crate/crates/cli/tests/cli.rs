//! End-to-end checks of the `labelwrap` binary and the augment pipeline:
//! exit codes, report formats, determinism, and manifest replay.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::{Rgb, RgbImage};
use labelwrap::render::render_reference;
use labelwrap::{CameraIntrinsics, CylinderModel, Pose};
use labelwrap_cli::augment::{replay_record, run_augment, ManifestRecord};
use labelwrap_cli::config::{AugmentConfig, PoseRanges};

fn cyl() -> CylinderModel {
    CylinderModel { radius_mm: 38.0, label_top_mm: 20.0, label_bottom_mm: -20.0 }
}

fn texture(phase: f64) -> RgbImage {
    let (w, h) = (1024u32, 256u32);
    let mut img = RgbImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            let r = 210.0 + 24.0 * (xf / 40.0 + phase).sin() + 12.0 * (yf / 64.0).cos();
            let g = 210.0 + 24.0 * (xf / 23.0 + 2.0 * phase).cos() + 12.0 * (yf / 18.0).sin();
            let b = 210.0 + 24.0 * ((xf + yf) / 30.0).sin() + 12.0 * (yf / 35.0 + phase).cos();
            img.put_pixel(x, y, Rgb([r as u8, g as u8, b as u8]));
        }
    }
    img
}

/// Fresh scratch directory under the target-specific temp root.
fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("labelwrap-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Render a bottle photo at `pose` and save it under `dir`.
fn render_input(dir: &Path, name: &str, pose: &Pose, phase: f64) -> PathBuf {
    let intr = CameraIntrinsics::default();
    let (img, _) = render_reference(pose, &cyl(), &intr, &texture(phase)).unwrap();
    let path = dir.join(name);
    img.save(&path).unwrap();
    path
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_labelwrap"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed with {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Shared config for fast augment runs: narrow label band, tiny output.
fn fast_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.toml");
    let cyl = cyl();
    std::fs::write(
        &path,
        format!(
            "[cylinder]\nradius_mm = {}\nlabel_top_mm = {}\nlabel_bottom_mm = {}\n",
            cyl.radius_mm, cyl.label_top_mm, cyl.label_bottom_mm
        ),
    )
    .unwrap();
    path
}

#[test]
fn detect_prints_parsable_region() {
    let dir = scratch("detect");
    let input = render_input(&dir, "bottle.png", &Pose::identity(), 0.0);
    let out = run_ok(bin().arg("detect").arg(&input));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut upper = None;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("upper: ") {
            let nums: Vec<f64> =
                rest.split_whitespace().map(|f| f.parse().unwrap()).collect();
            assert_eq!(nums.len(), 5);
            upper = Some(nums);
        }
    }
    let upper = upper.expect("report contains the upper rim");
    // canonical view centers the rims on the principal axis
    assert!((upper[0] - 320.0).abs() < 2.0, "upper rim center x {}", upper[0]);
    for key in ["lower: ", "left: ", "right: ", "vp: ", "wider: ", "residuals: "] {
        assert!(text.contains(key), "report mentions {key}");
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn detect_debug_writes_stage_images() {
    let dir = scratch("detect-debug");
    let input = render_input(&dir, "bottle.png", &Pose::identity(), 0.3);
    let stages = dir.join("stages");
    run_ok(bin().arg("detect").arg(&input).arg("--debug").arg("--out").arg(&stages));
    let n = std::fs::read_dir(&stages)
        .unwrap()
        .filter(|e| {
            e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png")
        })
        .count();
    assert!(n >= 3, "expected several stage images, found {n}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn missing_file_is_processing_error() {
    let out = bin().arg("detect").arg("/nonexistent/q.png").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn blank_image_is_processing_error() {
    let dir = scratch("blank");
    let path = dir.join("blank.png");
    RgbImage::new(320, 240).save(&path).unwrap();
    let out = bin().arg("detect").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr).to_lowercase();
    assert!(err.contains("no rim"), "stderr: {err}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn malformed_pose_flag_is_usage_error() {
    let out = bin().args(["synth", "x.png", "--pose", "1,2,3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn malformed_config_is_usage_error() {
    let dir = scratch("badcfg");
    let input_dir = dir.join("in");
    std::fs::create_dir_all(&input_dir).unwrap();
    render_input(&input_dir, "bottle.png", &Pose::identity(), 0.0);
    let cfg = dir.join("bad.toml");
    std::fs::write(&cfg, "count = \"many\"\n").unwrap();
    let out = bin()
        .arg("augment")
        .arg(&input_dir)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn synth_writes_image_and_mask() {
    let dir = scratch("synth");
    let input = render_input(&dir, "bottle.png", &Pose::identity(), 0.7);
    let cfg = fast_config(&dir);
    run_ok(
        bin()
            .arg("synth")
            .arg(&input)
            .args(["--pose", "12,-6,20,-5,245"])
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&dir)
            .arg("--debug"),
    );
    let synth = image::open(dir.join("bottle_synth.png")).unwrap().to_rgb8();
    assert_eq!(synth.dimensions(), (640, 480));
    assert!(synth.pixels().any(|p| p.0 != [0, 0, 0]), "synthesis produced content");
    let mask = image::open(dir.join("bottle_mask.png")).unwrap().to_luma8();
    assert!(mask.pixels().any(|p| p.0[0] != 0), "mask produced content");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn frontview_writes_image() {
    let dir = scratch("front");
    let input = render_input(&dir, "bottle.png", &Pose::new(10.0, 5.0, 15.0, -8.0, 240.0), 1.1);
    let cfg = fast_config(&dir);
    run_ok(bin().arg("frontview").arg(&input).arg("--config").arg(&cfg).arg("--out").arg(&dir));
    let front = image::open(dir.join("bottle_front.png")).unwrap().to_rgb8();
    assert_eq!(front.dimensions(), (640, 480));
    assert!(front.pixels().any(|p| p.0 != [0, 0, 0]));
    std::fs::remove_dir_all(&dir).unwrap();
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect()
}

#[test]
fn augment_runs_are_byte_identical() {
    let dir = scratch("augment-det");
    let input_dir = dir.join("in");
    std::fs::create_dir_all(&input_dir).unwrap();
    render_input(&input_dir, "bottle.png", &Pose::identity(), 0.0);
    let cfg = fast_config(&dir);
    for out in ["a", "b"] {
        run_ok(
            bin()
                .arg("augment")
                .arg(&input_dir)
                .arg("--config")
                .arg(&cfg)
                .arg("--out")
                .arg(dir.join(out))
                .args(["--seed", "11", "--count", "4", "--size", "96x96"]),
        );
    }
    let (a, b) = (dir_bytes(&dir.join("a")), dir_bytes(&dir.join("b")));
    assert_eq!(a.len(), 5, "4 images + manifest");
    assert_eq!(a, b, "same seed gives identical bytes");

    // manifest sanity: 4 records, poses inside the default ranges
    let manifest = std::fs::read_to_string(dir.join("a/manifest.tsv")).unwrap();
    let ranges = PoseRanges::default();
    let records: Vec<ManifestRecord> =
        manifest.lines().map(|l| ManifestRecord::parse_line(l).unwrap()).collect();
    assert_eq!(records.len(), 4);
    for r in &records {
        assert!(ranges.contains(&r.pose), "{:?}", r.pose);
        assert_eq!(r.source, "bottle.png");
        assert!(r.background.is_none());
    }
    // different seed changes the outputs
    run_ok(
        bin()
            .arg("augment")
            .arg(&input_dir)
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(dir.join("c"))
            .args(["--seed", "12", "--count", "4", "--size", "96x96"]),
    );
    assert_ne!(a, dir_bytes(&dir.join("c")));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn augment_composites_backgrounds() {
    let dir = scratch("augment-bg");
    let input_dir = dir.join("in");
    let bg_dir = dir.join("bg");
    std::fs::create_dir_all(&input_dir).unwrap();
    std::fs::create_dir_all(&bg_dir).unwrap();
    render_input(&input_dir, "bottle.png", &Pose::identity(), 0.5);
    RgbImage::from_pixel(400, 300, Rgb([90, 140, 200])).save(bg_dir.join("sky.png")).unwrap();
    RgbImage::from_fn(320, 480, |x, _| Rgb([120 + (x % 100) as u8, 180, 90]))
        .save(bg_dir.join("grass.png"))
        .unwrap();
    let cfg = fast_config(&dir);
    run_ok(
        bin()
            .arg("augment")
            .arg(&input_dir)
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(dir.join("out"))
            .arg("--backgrounds")
            .arg(&bg_dir)
            .args(["--seed", "3", "--count", "6", "--size", "96x96"]),
    );
    let manifest = std::fs::read_to_string(dir.join("out/manifest.tsv")).unwrap();
    let mut seen_bg = std::collections::BTreeSet::new();
    for line in manifest.lines() {
        let rec = ManifestRecord::parse_line(line).unwrap();
        let bg = rec.background.expect("every record names its background");
        assert!(bg == "sky.png" || bg == "grass.png");
        seen_bg.insert(bg);
        let img = image::open(dir.join("out").join(&rec.output)).unwrap().to_rgb8();
        assert_eq!(img.dimensions(), (96, 96));
        let black = img.pixels().filter(|p| p.0 == [0, 0, 0]).count();
        assert_eq!(black, 0, "no pure-black pixels survive compositing in {}", rec.output);
    }
    assert!(!seen_bg.is_empty());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn augment_skips_bad_inputs_and_fails_when_all_do() {
    let dir = scratch("augment-skip");
    let input_dir = dir.join("in");
    std::fs::create_dir_all(&input_dir).unwrap();
    render_input(&input_dir, "good.png", &Pose::identity(), 0.9);
    RgbImage::new(320, 240).save(input_dir.join("blank.png")).unwrap();
    let cfg = fast_config(&dir);
    let out = bin()
        .arg("augment")
        .arg(&input_dir)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(["--seed", "5", "--count", "2", "--size", "64x64"])
        .output()
        .unwrap();
    assert!(out.status.success(), "partial failure still succeeds");
    assert!(String::from_utf8_lossy(&out.stderr).contains("skipping blank.png"));
    let manifest = std::fs::read_to_string(dir.join("out/manifest.tsv")).unwrap();
    assert_eq!(manifest.lines().count(), 2, "only the good input produced records");

    // all inputs failing is a processing error
    let bad_dir = dir.join("allbad");
    std::fs::create_dir_all(&bad_dir).unwrap();
    RgbImage::new(320, 240).save(bad_dir.join("blank.png")).unwrap();
    let out = bin()
        .arg("augment")
        .arg(&bad_dir)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out2"))
        .args(["--count", "2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn manifest_records_replay_bit_exactly() {
    let dir = scratch("replay");
    let input_dir = dir.join("in");
    let bg_dir = dir.join("bg");
    std::fs::create_dir_all(&input_dir).unwrap();
    std::fs::create_dir_all(&bg_dir).unwrap();
    render_input(&input_dir, "bottle.png", &Pose::identity(), 1.4);
    RgbImage::from_pixel(640, 480, Rgb([60, 90, 130])).save(bg_dir.join("wall.png")).unwrap();
    let mut cfg = AugmentConfig {
        count: 3,
        output_size: [128, 128],
        master_seed: 21,
        cylinder: cyl(),
        ..AugmentConfig::default()
    };
    cfg.backgrounds = Some(bg_dir.clone());
    let out_dir = dir.join("out");
    let report = run_augment(&input_dir, &out_dir, &cfg).unwrap();
    assert_eq!(report.outputs, 3);
    let manifest = std::fs::read_to_string(report.manifest).unwrap();
    for line in manifest.lines() {
        let rec = ManifestRecord::parse_line(line).unwrap();
        let replayed = replay_record(&rec, &input_dir, &cfg).unwrap();
        let saved = image::open(out_dir.join(&rec.output)).unwrap().to_rgb8();
        assert_eq!(replayed, saved, "replay of {} drifted", rec.output);
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn rank_reports_and_warns() {
    let dir = scratch("rank");
    let gallery = dir.join("gallery.txt");
    let query = dir.join("query.txt");
    std::fs::write(&gallery, "1 1 0 0\n2 0 1 0\n3 0 0 1\n").unwrap();
    std::fs::write(&query, "9 0.9 0.1 0\n").unwrap();
    let out = run_ok(bin().arg("rank").arg(&query).arg(&gallery).args(["--k", "5"]));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("query 9"));
    let first = lines.next().unwrap();
    assert!(first.starts_with("1 1 0.99"), "best match first: {first}");
    assert_eq!(text.lines().count(), 4, "header plus all three entries");
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"), "k beyond gallery warns");

    std::fs::write(dir.join("bad.txt"), "1 1 0\nnot-a-number 1 0\n").unwrap();
    let out = bin().arg("rank").arg(dir.join("bad.txt")).arg(&gallery).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"), "error names the line");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn help_and_version_exit_zero() {
    assert!(bin().arg("--help").output().unwrap().status.success());
    assert!(bin().arg("--version").output().unwrap().status.success());
    let out = bin().arg("nosuchcommand").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}
