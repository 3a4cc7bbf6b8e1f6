//! Tool configuration: augmentation parameters with their documented
//! defaults, TOML loading, flag parsing, and the exit-code error split.

use std::fmt;
use std::path::{Path, PathBuf};

use labelwrap::{CameraIntrinsics, CylinderModel, Pose};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Failures split by exit code: usage and configuration problems exit with
/// 1, processing problems with 2.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Processing(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Processing(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Processing(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

/// Uniform pose sampling ranges, one `[low, high]` pair per coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseRanges {
    pub rot_x_deg: [f64; 2],
    pub rot_z_deg: [f64; 2],
    pub tx_mm: [f64; 2],
    pub ty_mm: [f64; 2],
    pub tz_mm: [f64; 2],
}

impl Default for PoseRanges {
    fn default() -> Self {
        Self {
            rot_x_deg: [-15.0, 15.0],
            rot_z_deg: [-10.0, 10.0],
            tx_mm: [-40.0, 40.0],
            ty_mm: [-20.0, 20.0],
            tz_mm: [230.0, 270.0],
        }
    }
}

impl PoseRanges {
    /// One uniform draw per coordinate, in a fixed order.
    pub fn sample(&self, rng: &mut impl Rng) -> Pose {
        Pose::new(
            rng.gen_range(self.rot_x_deg[0]..=self.rot_x_deg[1]),
            rng.gen_range(self.rot_z_deg[0]..=self.rot_z_deg[1]),
            rng.gen_range(self.tx_mm[0]..=self.tx_mm[1]),
            rng.gen_range(self.ty_mm[0]..=self.ty_mm[1]),
            rng.gen_range(self.tz_mm[0]..=self.tz_mm[1]),
        )
    }

    pub fn contains(&self, pose: &Pose) -> bool {
        let inside = |r: [f64; 2], v: f64| r[0] <= v && v <= r[1];
        inside(self.rot_x_deg, pose.rot_x_deg)
            && inside(self.rot_z_deg, pose.rot_z_deg)
            && inside(self.tx_mm, pose.tx)
            && inside(self.ty_mm, pose.ty)
            && inside(self.tz_mm, pose.tz)
    }

    fn check(&self) -> Result<(), String> {
        for (name, r) in [
            ("rot_x_deg", self.rot_x_deg),
            ("rot_z_deg", self.rot_z_deg),
            ("tx_mm", self.tx_mm),
            ("ty_mm", self.ty_mm),
            ("tz_mm", self.tz_mm),
        ] {
            if !(r[0] <= r[1]) {
                return Err(format!("pose range {name}: low {} > high {}", r[0], r[1]));
            }
        }
        Ok(())
    }
}

/// Maximum jitter amplitudes; each image draws its own values uniformly
/// within them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JitterConfig {
    /// Additive per-channel shift bound, in 0..255 levels.
    pub channel_shift: f64,
    /// Relative brightness change bound (0.15 means ±15%).
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
}

impl Default for JitterConfig {
    fn default() -> Self {
        Self { channel_shift: 20.0, brightness: 0.15, contrast: 0.15, saturation: 0.15 }
    }
}

impl JitterConfig {
    /// One uniform draw per parameter, in a fixed order.
    pub fn sample(&self, rng: &mut impl Rng) -> JitterParams {
        let cs = self.channel_shift;
        JitterParams {
            channel: [
                rng.gen_range(-cs..=cs),
                rng.gen_range(-cs..=cs),
                rng.gen_range(-cs..=cs),
            ],
            brightness: rng.gen_range(1.0 - self.brightness..=1.0 + self.brightness),
            contrast: rng.gen_range(1.0 - self.contrast..=1.0 + self.contrast),
            saturation: rng.gen_range(1.0 - self.saturation..=1.0 + self.saturation),
        }
    }

    fn check(&self) -> Result<(), String> {
        for (name, v) in [
            ("channel_shift", self.channel_shift),
            ("brightness", self.brightness),
            ("contrast", self.contrast),
            ("saturation", self.saturation),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("jitter {name} must be >= 0, got {v}"));
            }
        }
        for (name, v) in [
            ("brightness", self.brightness),
            ("contrast", self.contrast),
            ("saturation", self.saturation),
        ] {
            if v > 1.0 {
                return Err(format!("jitter {name} above 1.0 would invert the image"));
            }
        }
        Ok(())
    }
}

/// One concrete jitter draw, as recorded in the manifest: additive channel
/// shifts plus brightness/contrast/saturation factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterParams {
    pub channel: [f64; 3],
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
}

impl JitterParams {
    /// No-op jitter.
    pub fn neutral() -> Self {
        Self { channel: [0.0; 3], brightness: 1.0, contrast: 1.0, saturation: 1.0 }
    }
}

/// Everything `augment` needs; also carries the camera and cylinder models
/// used by the single-image subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Outputs generated per input image.
    pub count: u32,
    /// Final width × height of every output.
    pub output_size: [u32; 2],
    pub master_seed: u64,
    /// Directory of replacement backgrounds; black background when absent.
    pub backgrounds: Option<PathBuf>,
    pub pose: PoseRanges,
    pub jitter: JitterConfig,
    pub camera: CameraIntrinsics,
    pub cylinder: CylinderModel,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            count: 320,
            output_size: [224, 224],
            master_seed: 0,
            backgrounds: None,
            pose: PoseRanges::default(),
            jitter: JitterConfig::default(),
            camera: CameraIntrinsics::default(),
            cylinder: CylinderModel::default(),
        }
    }
}

impl AugmentConfig {
    /// Defaults, or the TOML file at `path`. Unknown keys and invalid values
    /// are configuration errors.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let cfg = match path {
            None => Self::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: String| Err(CliError::Usage(m));
        if self.count < 1 {
            return fail("count must be at least 1".into());
        }
        if self.output_size.iter().any(|&s| s < 32) {
            return fail(format!(
                "output size {}x{} below the 32-pixel minimum",
                self.output_size[0], self.output_size[1]
            ));
        }
        if let Err(m) = self.pose.check() {
            return fail(m);
        }
        if let Err(m) = self.jitter.check() {
            return fail(m);
        }
        if self.camera.width == 0 || self.camera.height == 0 {
            return fail("camera frame must be non-empty".into());
        }
        if !(self.camera.focal_mm > 0.0 && self.camera.pixel_pitch_mm > 0.0) {
            return fail("camera focal length and pixel pitch must be positive".into());
        }
        if !(self.cylinder.radius_mm > 0.0) {
            return fail("cylinder radius must be positive".into());
        }
        if !(self.cylinder.label_top_mm > self.cylinder.label_bottom_mm) {
            return fail("label top must lie above label bottom".into());
        }
        Ok(())
    }
}

/// Parse the `--pose "rx,rz,tx,ty,tz"` flag (degrees, degrees, mm, mm, mm).
pub fn parse_pose(s: &str) -> Result<Pose, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 5 {
        return Err(format!("expected rx,rz,tx,ty,tz (5 numbers), got {} fields", parts.len()));
    }
    let mut v = [0.0f64; 5];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p.parse().map_err(|e| format!("{p:?}: {e}"))?;
    }
    Ok(Pose::new(v[0], v[1], v[2], v[3], v[4]))
}

/// Parse the `--size WxH` flag.
pub fn parse_size(s: &str) -> Result<[u32; 2], String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let w = w.trim().parse().map_err(|e| format!("width {w:?}: {e}"))?;
    let h = h.trim().parse().map_err(|e| format!("height {h:?}: {e}"))?;
    Ok([w, h])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    #[test]
    fn defaults_match_documented_values() {
        let cfg = AugmentConfig::default();
        assert_eq!(cfg.count, 320);
        assert_eq!(cfg.output_size, [224, 224]);
        assert_eq!(cfg.pose.rot_x_deg, [-15.0, 15.0]);
        assert_eq!(cfg.pose.rot_z_deg, [-10.0, 10.0]);
        assert_eq!(cfg.pose.tx_mm, [-40.0, 40.0]);
        assert_eq!(cfg.pose.ty_mm, [-20.0, 20.0]);
        assert_eq!(cfg.pose.tz_mm, [230.0, 270.0]);
        assert_eq!(cfg.jitter.channel_shift, 20.0);
        assert_eq!(cfg.jitter.brightness, 0.15);
        cfg.validate().unwrap();
    }

    #[test]
    fn sampled_poses_stay_inside_ranges() {
        let ranges = PoseRanges::default();
        let mut rng = StdRng::seed_from_u64(99);
        for _ in 0..100_000 {
            let pose = ranges.sample(&mut rng);
            assert!(ranges.contains(&pose), "{pose:?} outside {ranges:?}");
        }
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let cfg = AugmentConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: AugmentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        // partial files keep defaults for everything else
        let partial: AugmentConfig =
            toml::from_str("count = 5\n[pose]\nrot_z_deg = [-3.0, 3.0]\n").unwrap();
        assert_eq!(partial.count, 5);
        assert_eq!(partial.pose.rot_z_deg, [-3.0, 3.0]);
        assert_eq!(partial.pose.rot_x_deg, [-15.0, 15.0]);
        assert_eq!(partial.output_size, [224, 224]);
        // unknown keys are rejected
        assert!(toml::from_str::<AugmentConfig>("coutn = 5\n").is_err());
    }

    #[test]
    fn invalid_configs_are_usage_errors() {
        let mut cfg = AugmentConfig::default();
        cfg.count = 0;
        assert!(matches!(cfg.validate(), Err(CliError::Usage(_))));
        let mut cfg = AugmentConfig::default();
        cfg.output_size = [16, 224];
        assert!(matches!(cfg.validate(), Err(CliError::Usage(_))));
        let mut cfg = AugmentConfig::default();
        cfg.pose.tz_mm = [270.0, 230.0];
        assert!(matches!(cfg.validate(), Err(CliError::Usage(_))));
        let mut cfg = AugmentConfig::default();
        cfg.jitter.contrast = -0.1;
        assert!(matches!(cfg.validate(), Err(CliError::Usage(_))));
    }

    #[test]
    fn pose_and_size_flags_parse() {
        let p = parse_pose("10, -5, 1.5, -2, 240").unwrap();
        assert_eq!((p.rot_x_deg, p.rot_z_deg), (10.0, -5.0));
        assert_eq!((p.tx, p.ty, p.tz), (1.5, -2.0, 240.0));
        assert!(parse_pose("1,2,3,4").is_err());
        assert!(parse_pose("1,2,3,4,x").is_err());
        assert_eq!(parse_size("224x224").unwrap(), [224, 224]);
        assert_eq!(parse_size("64X48").unwrap(), [64, 48]);
        assert!(parse_size("224").is_err());
        assert!(parse_size("axb").is_err());
    }

    #[test]
    fn jitter_draws_respect_amplitudes() {
        let jc = JitterConfig::default();
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..10_000 {
            let j = jc.sample(&mut rng);
            for c in j.channel {
                assert!(c.abs() <= 20.0);
            }
            for f in [j.brightness, j.contrast, j.saturation] {
                assert!((0.85..=1.15).contains(&f));
            }
        }
    }
}
