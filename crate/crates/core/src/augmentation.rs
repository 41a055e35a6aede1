//! Online augmentation by in-plane rotation, crop scaling and 3D translation,
//! applied consistently to depth crops and joint annotations.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    backproject, extract_crop, normalize_joints, project, CameraIntrinsics, CropCube, CropWindow, DepthFrame,
    NormalizedPatch, Point3, Pose3D,
};
use crate::nn::{Sample, SampleStream};

/// How the configured scale/translation spreads are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadReading {
    /// The value is the standard deviation.
    #[default]
    StdDev,
    /// The value is the variance; its square root is the standard deviation.
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub enable_rotation: bool,
    pub enable_scale: bool,
    pub enable_translation: bool,
    /// In-plane rotation range in degrees.
    pub rotation_range: [f64; 2],
    pub scale_spread: f64,
    /// Per-axis translation spread in mm.
    pub translation_spread: f64,
    pub spread_reading: SpreadReading,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            enable_rotation: true,
            enable_scale: true,
            enable_translation: true,
            rotation_range: [-180.0, 180.0],
            scale_spread: 0.02,
            translation_spread: 5.0,
            spread_reading: SpreadReading::StdDev,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        Self { enable_rotation: false, enable_scale: false, enable_translation: false, ..Self::default() }
    }

    /// Enables the subset named by the letters `R`, `T`, `S` (e.g. `"R+T+S"`, `"T"`, `"none"`).
    pub fn from_flags(flags: &str) -> Result<Self> {
        let mut cfg = Self::none();
        if flags.eq_ignore_ascii_case("none") {
            return Ok(cfg);
        }
        for part in flags.split('+') {
            match part.trim() {
                "R" | "r" => cfg.enable_rotation = true,
                "T" | "t" => cfg.enable_translation = true,
                "S" | "s" => cfg.enable_scale = true,
                other => return Err(Error::Config(format!("unknown augmentation flag {other:?}"))),
            }
        }
        Ok(cfg)
    }

    pub fn is_identity(&self) -> bool {
        !(self.enable_rotation || self.enable_scale || self.enable_translation)
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.rotation_range;
        if !(self.scale_spread >= 0.0 && self.translation_spread >= 0.0) {
            return Err(Error::Config("augmentation spreads must be non-negative".into()));
        }
        if !(-180.0 <= lo && lo <= hi && hi <= 180.0) {
            return Err(Error::Config(format!("rotation range {lo}..{hi} is not within [-180, 180]")));
        }
        Ok(())
    }

    fn sigma(&self, value: f64) -> f64 {
        match self.spread_reading {
            SpreadReading::StdDev => value,
            SpreadReading::Variance => value.sqrt(),
        }
    }

    pub fn scale_sigma(&self) -> f64 {
        self.sigma(self.scale_spread)
    }

    pub fn translation_sigma(&self) -> f64 {
        self.sigma(self.translation_spread)
    }
}

/// One draw of augmentation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    /// In-plane rotation, degrees.
    pub angle: f64,
    pub scale: f64,
    /// Crop-centre offset in mm.
    pub offset: Point3,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams { angle: 0.0, scale: 1.0, offset: Point3::ORIGIN };
}

pub fn sample_params(cfg: &AugmentConfig, rng: &mut dyn RngCore) -> AugmentParams {
    let mut p = AugmentParams::IDENTITY;
    if cfg.enable_rotation {
        let [lo, hi] = cfg.rotation_range;
        p.angle = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    }
    if cfg.enable_scale {
        let normal = Normal::new(1.0, cfg.scale_sigma()).expect("validated sigma");
        // Non-positive draws are only possible for absurd spreads.
        p.scale = loop {
            let s = normal.sample(rng);
            if s > 1e-3 {
                break s;
            }
        };
    }
    if cfg.enable_translation {
        let normal = Normal::new(0.0, cfg.translation_sigma()).expect("validated sigma");
        p.offset = Point3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng));
    }
    p
}

fn rotate2d(u: f64, v: f64, uc: f64, vc: f64, angle_deg: f64) -> (f64, f64) {
    let (s, c) = angle_deg.to_radians().sin_cos();
    let (du, dv) = (u - uc, v - vc);
    (uc + c * du - s * dv, vc + s * du + c * dv)
}

/// Rotates each joint in the image plane about pixel `(uc, vc)`, keeping its depth.
pub fn rotate_annotations(
    pose: &Pose3D,
    uc: f64,
    vc: f64,
    angle_deg: f64,
    k: &CameraIntrinsics,
) -> Result<Pose3D> {
    let joints = pose
        .joints
        .iter()
        .map(|&j| {
            let p = project(j, k)?;
            let (u, v) = rotate2d(p.u, p.v, uc, vc, angle_deg);
            backproject(u, v, p.d, k)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Pose3D::new(joints))
}

/// Rotates patch content by `angle_deg` in image-pixel space about the
/// window centre. Nearest-neighbour; samples from outside the patch read 1.
pub fn rotate_patch(patch: &NormalizedPatch, angle_deg: f64) -> Result<NormalizedPatch> {
    let window = CropWindow::for_cube(&patch.cube, &patch.intrinsics)?;
    let r = patch.resolution;
    let rf = r as f64;
    let mut values = Vec::with_capacity(r * r);
    for row in 0..r {
        for col in 0..r {
            let (u, v) = window.source(col, row, r);
            let (su, sv) = rotate2d(u, v, window.u_center, window.v_center, -angle_deg);
            // Continuous patch coordinate whose pixel centres sit at integers.
            let pc = ((su - window.u_center) / window.half_u + 1.0) / 2.0 * rf - 0.5;
            let pr = ((sv - window.v_center) / window.half_v + 1.0) / 2.0 * rf - 0.5;
            let (ic, ir) = (pc.round(), pr.round());
            let value = if ic < 0.0 || ir < 0.0 || ic >= rf || ir >= rf {
                1.0
            } else {
                patch.values[ir as usize * r + ic as usize]
            };
            values.push(value);
        }
    }
    Ok(NormalizedPatch { values, ..patch.clone() })
}

/// Applies translation, then scale, then crop extraction, then in-plane
/// rotation; returns the patch and the normalized 3J target.
pub fn augment(
    frame: &DepthFrame,
    pose: &Pose3D,
    cube: &CropCube,
    k: &CameraIntrinsics,
    params: &AugmentParams,
    resolution: usize,
) -> Result<(NormalizedPatch, Vec<f64>)> {
    if !(params.scale > 0.0) {
        return Err(Error::Domain(format!("augmentation scale {} must be positive", params.scale)));
    }
    let moved = CropCube::new(cube.center.add(params.offset), cube.size * params.scale)?;
    let mut patch = extract_crop(frame, &moved, k, resolution)?;
    if params.angle == 0.0 {
        return Ok((patch, normalize_joints(pose, &moved)));
    }
    patch = rotate_patch(&patch, params.angle)?;
    let c = project(moved.center, k)?;
    let rotated = rotate_annotations(pose, c.u, c.v, params.angle, k)?;
    Ok((patch, normalize_joints(&rotated, &moved)))
}

/// 3D-only augmentation: rotation about the camera axis through `pivot`,
/// scaling about `pivot`, then translation by the offset.
pub fn augment_pose(pose: &Pose3D, params: &AugmentParams, pivot: Point3) -> Pose3D {
    let (s, c) = params.angle.to_radians().sin_cos();
    let joints = pose
        .joints
        .iter()
        .map(|j| {
            let d = j.sub(pivot);
            let r = Point3::new(c * d.x - s * d.y, s * d.x + c * d.y, d.z);
            pivot.add(r.scale(params.scale)).add(params.offset)
        })
        .collect();
    Pose3D::new(joints)
}

/// What a stream sample's target holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// All 3J normalized joint coordinates.
    Pose,
    /// Normalized offset of the reference joint from the crop centre, clipped to [-1, 1].
    ReferenceOffset,
}

/// A base training example.
#[derive(Debug, Clone, Copy)]
pub struct StreamItem<'a> {
    pub frame: &'a DepthFrame,
    pub pose: &'a Pose3D,
    pub cube: CropCube,
    pub intrinsics: CameraIntrinsics,
}

/// Epoch-indexed augmented samples. Each sample's parameters come from an
/// RNG keyed on `(seed, epoch, index)`, so any epoch can be regenerated.
#[derive(Debug, Clone)]
pub struct AugmentStream<'a> {
    pub items: Vec<StreamItem<'a>>,
    pub config: AugmentConfig,
    pub resolution: usize,
    pub target: TargetKind,
}

/// splitmix64 finalizer.
pub(crate) fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xd1b5_4a32_d192_ed03);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl<'a> AugmentStream<'a> {
    pub fn new(items: Vec<StreamItem<'a>>, config: AugmentConfig, resolution: usize, target: TargetKind) -> Result<Self> {
        config.validate()?;
        if items.is_empty() {
            return Err(Error::InsufficientData("augmentation stream needs at least one sample".into()));
        }
        Ok(Self { items, config, resolution, target })
    }

    pub fn params(&self, epoch: usize, index: usize) -> AugmentParams {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.config.seed, epoch as u64 + 1, index as u64));
        sample_params(&self.config, &mut rng)
    }

    pub fn sample(&self, epoch: usize, index: usize) -> Result<Sample> {
        let item = &self.items[index];
        let params = self.params(epoch, index);
        let (patch, target) = augment(item.frame, item.pose, &item.cube, &item.intrinsics, &params, self.resolution)?;
        let target = match self.target {
            TargetKind::Pose => target.iter().map(|&v| v as f32).collect(),
            TargetKind::ReferenceOffset => target[..3].iter().map(|&v| v.clamp(-1.0, 1.0) as f32).collect(),
        };
        Ok(Sample { id: index, input: patch.values, target })
    }
}

impl SampleStream for AugmentStream<'_> {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn epoch(&self, epoch: usize) -> Result<Vec<Sample>> {
        (0..self.items.len()).map(|i| self.sample(epoch, i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::new(140.0, 140.0, 80.0, 60.0, 160, 120).unwrap()
    }

    fn scene() -> (DepthFrame, Pose3D, CropCube) {
        // A tilted ramp so rotations and shifts change the crop.
        let mut f = DepthFrame::empty(160, 120);
        for r in 30..90 {
            for c in 50..110 {
                f.set(c, r, (480 + (c as i32 - 80) + 2 * (r as i32 - 60)) as u16);
            }
        }
        let pose = Pose3D::new(vec![
            Point3::new(0.0, 0.0, 500.0),
            Point3::new(30.0, -40.0, 490.0),
            Point3::new(-25.0, 35.0, 520.0),
        ]);
        let cube = CropCube::new(Point3::new(0.0, 0.0, 500.0), 300.0).unwrap();
        (f, pose, cube)
    }

    #[test]
    fn disabled_config_samples_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            assert_eq!(sample_params(&AugmentConfig::none(), &mut rng), AugmentParams::IDENTITY);
        }
    }

    #[test]
    fn flag_parsing() {
        let c = AugmentConfig::from_flags("R+T+S").unwrap();
        assert!(c.enable_rotation && c.enable_scale && c.enable_translation);
        let t = AugmentConfig::from_flags("T").unwrap();
        assert!(!t.enable_rotation && t.enable_translation && !t.enable_scale);
        assert!(AugmentConfig::from_flags("none").unwrap().is_identity());
        assert!(AugmentConfig::from_flags("X").is_err());
    }

    #[test]
    fn defaults_and_variance_reading() {
        let c = AugmentConfig::default();
        assert_eq!(c.rotation_range, [-180.0, 180.0]);
        assert_eq!((c.scale_sigma(), c.translation_sigma()), (0.02, 5.0));
        let v = AugmentConfig { spread_reading: SpreadReading::Variance, ..c };
        assert!((v.scale_sigma() - 0.02f64.sqrt()).abs() < 1e-15);
        assert!((v.translation_sigma() - 5.0f64.sqrt()).abs() < 1e-15);
        assert!(AugmentConfig { rotation_range: [-200.0, 0.0], ..c }.validate().is_err());
        assert!(AugmentConfig { scale_spread: -1.0, ..c }.validate().is_err());
    }

    #[test]
    fn monte_carlo_moments() {
        let cfg = AugmentConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 100_000;
        let (mut a, mut s, mut t) = (0.0, 0.0, 0.0);
        let mut t2 = 0.0;
        for _ in 0..n {
            let p = sample_params(&cfg, &mut rng);
            assert!((-180.0..=180.0).contains(&p.angle));
            a += p.angle;
            s += p.scale;
            t += p.offset.x;
            t2 += p.offset.x * p.offset.x;
        }
        let n = n as f64;
        assert!((a / n).abs() <= 3.0);
        assert!((s / n - 1.0).abs() <= 0.005);
        assert!((t / n).abs() <= 0.1);
        assert!(((t2 / n).sqrt() - 5.0).abs() <= 0.1);
    }

    #[test]
    fn identity_params_equal_plain_path() {
        let (f, pose, cube) = scene();
        let (patch, target) = augment(&f, &pose, &cube, &cam(), &AugmentParams::IDENTITY, 32).unwrap();
        let plain = extract_crop(&f, &cube, &cam(), 32).unwrap();
        assert_eq!(patch, plain);
        assert_eq!(target, normalize_joints(&pose, &cube));
    }

    #[test]
    fn four_quarter_turns_restore_annotations() {
        let (_, pose, cube) = scene();
        let k = cam();
        let c = project(cube.center, &k).unwrap();
        let mut p = pose.clone();
        for _ in 0..4 {
            p = rotate_annotations(&p, c.u, c.v, 90.0, &k).unwrap();
        }
        for (a, b) in p.joints.iter().zip(&pose.joints) {
            assert!(a.distance(*b) <= 1e-6);
        }
    }

    #[test]
    fn quarter_turn_rotates_patch_pixels() {
        let (f, pose, cube) = scene();
        let k = cam();
        let plain = extract_crop(&f, &cube, &k, 16).unwrap();
        let (rot, _) = augment(&f, &pose, &cube, &k, &AugmentParams { angle: 90.0, ..AugmentParams::IDENTITY }, 16).unwrap();
        // With u' = uc - dv, v' = vc + du, output (col, row) reads source (row, 15 - col).
        for row in 0..16 {
            for col in 0..16 {
                assert_eq!(rot.values[row * 16 + col], plain.values[(15 - col) * 16 + row]);
            }
        }
    }

    #[test]
    fn rotation_consistency_through_projection() {
        let (f, pose, cube) = scene();
        let k = cam();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let params = sample_params(&AugmentConfig::default(), &mut rng);
            let (patch, target) = augment(&f, &pose, &cube, &k, &params, 16).unwrap();
            let aug = crate::geometry::denormalize_joints(&target, &patch.cube).unwrap();
            let c = project(patch.cube.center, &k).unwrap();
            for (a, o) in aug.joints.iter().zip(&pose.joints) {
                let pa = project(*a, &k).unwrap();
                let po = project(*o, &k).unwrap();
                let (u, v) = rotate2d(po.u, po.v, c.u, c.v, params.angle);
                assert!((pa.u - u).abs() <= 1e-6 && (pa.v - v).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn augment_pose_similarity() {
        let (_, pose, _) = scene();
        let pivot = pose.reference();
        assert_eq!(augment_pose(&pose, &AugmentParams::IDENTITY, pivot), pose);
        let doubled = augment_pose(&pose, &AugmentParams { scale: 2.0, ..AugmentParams::IDENTITY }, pivot);
        for (a, b) in doubled.joints.iter().zip(&pose.joints) {
            assert!((a.distance(pivot) - 2.0 * b.distance(pivot)).abs() < 1e-9);
        }
        let params = AugmentParams { angle: 37.0, scale: 1.3, offset: Point3::new(4.0, -2.0, 7.5) };
        let fwd = augment_pose(&pose, &params, pivot);
        let untranslated = Pose3D::new(fwd.joints.iter().map(|j| j.sub(params.offset)).collect());
        let inverse = AugmentParams { angle: -37.0, scale: 1.0 / 1.3, offset: Point3::ORIGIN };
        let back = augment_pose(&untranslated, &inverse, pivot);
        for (a, b) in back.joints.iter().zip(&pose.joints) {
            assert!(a.distance(*b) <= 1e-9);
        }
    }

    #[test]
    fn stream_determinism_and_coverage() {
        let (f, pose, cube) = scene();
        let items: Vec<StreamItem> =
            (0..5).map(|_| StreamItem { frame: &f, pose: &pose, cube, intrinsics: cam() }).collect();
        let s = AugmentStream::new(items.clone(), AugmentConfig { seed: 3, ..Default::default() }, 16, TargetKind::Pose).unwrap();
        let e0 = s.epoch(0).unwrap();
        let e1 = s.epoch(1).unwrap();
        assert_eq!(e0, s.epoch(0).unwrap());
        assert_ne!(e0[0].target, e1[0].target);
        let mut ids: Vec<usize> = e1.iter().map(|x| x.id).collect();
        ids.sort();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
        let raw = AugmentStream::new(items, AugmentConfig::none(), 16, TargetKind::ReferenceOffset).unwrap();
        assert_eq!(raw.epoch(0).unwrap(), raw.epoch(7).unwrap());
        assert_eq!(raw.epoch(0).unwrap()[0].target, vec![0.0, 0.0, 0.0]);
    }
}
