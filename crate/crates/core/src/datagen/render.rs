//! Ray-cast z-buffer renderer for hands built from capsules and spheres.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::hand::{forward_kinematics, AngleLimits, HandAngles, HandModel, Placement};
use crate::error::{Error, Result};
use crate::geometry::{project, CameraIntrinsics, DepthFrame, Point3, Pose3D, MISSING_DEPTH};

/// Solid primitive in camera space, mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    Sphere { center: Point3, radius: f64 },
    Capsule { a: Point3, b: Point3, radius: f64 },
}

impl Primitive {
    /// Distance along the unit ray `dir` from the camera origin to the first
    /// surface hit.
    pub fn intersect(&self, dir: Point3) -> Option<f64> {
        match *self {
            Primitive::Sphere { center, radius } => ray_sphere(dir, center, radius),
            Primitive::Capsule { a, b, radius } => ray_capsule(dir, a, b, radius),
        }
    }

    fn bounds(&self) -> (Point3, Point3) {
        let (lo, hi, r) = match *self {
            Primitive::Sphere { center, radius } => (center, center, radius),
            Primitive::Capsule { a, b, radius } => (
                Point3::new(a.x.min(b.x), a.y.min(b.y), a.z.min(b.z)),
                Point3::new(a.x.max(b.x), a.y.max(b.y), a.z.max(b.z)),
                radius,
            ),
        };
        (Point3::new(lo.x - r, lo.y - r, lo.z - r), Point3::new(hi.x + r, hi.y + r, hi.z + r))
    }
}

fn ray_sphere(dir: Point3, c: Point3, r: f64) -> Option<f64> {
    let b = dir.dot(c);
    let h = b * b - (c.dot(c) - r * r);
    if h < 0.0 {
        return None;
    }
    let t = b - h.sqrt();
    (t > 0.0).then_some(t)
}

fn ray_capsule(dir: Point3, a: Point3, b: Point3, r: f64) -> Option<f64> {
    let ba = b.sub(a);
    let oa = a.scale(-1.0);
    let baba = ba.dot(ba);
    let bard = ba.dot(dir);
    let baoa = ba.dot(oa);
    let rdoa = dir.dot(oa);
    let oaoa = oa.dot(oa);
    let qa = baba - bard * bard;
    let qb = baba * rdoa - baoa * bard;
    let qc = baba * oaoa - baoa * baoa - r * r * baba;
    let h = qb * qb - qa * qc;
    // The capsule is the union of a finite cylinder and two end spheres; the
    // first hit of the union is the nearest first hit of its parts.
    let mut side = None;
    if h >= 0.0 && qa > 0.0 {
        let t = (-qb - h.sqrt()) / qa;
        let y = baoa + t * bard;
        if y > 0.0 && y < baba && t > 0.0 {
            side = Some(t);
        }
    }
    [side, ray_sphere(dir, a, r), ray_sphere(dir, b, r)].into_iter().flatten().reduce(f64::min)
}

/// Unit viewing ray through pixel centre `(col, row)`.
pub fn pixel_ray(col: usize, row: usize, k: &CameraIntrinsics) -> Point3 {
    Point3::new((col as f64 - k.cx) / k.fx, (row as f64 - k.cy) / k.fy, 1.0).normalized()
}

/// Nearest surface depth (`z`, mm) per pixel, `None` where nothing is hit.
pub fn render_primitives(prims: &[Primitive], k: &CameraIntrinsics) -> Vec<Option<f64>> {
    let (w, h) = (k.width, k.height);
    let mut zbuf: Vec<Option<f64>> = vec![None; w * h];
    for prim in prims {
        let Some((c0, c1, r0, r1)) = pixel_bounds(prim, k) else { continue };
        for row in r0..=r1 {
            for col in c0..=c1 {
                let dir = pixel_ray(col, row, k);
                if let Some(t) = prim.intersect(dir) {
                    let z = t * dir.z;
                    let cell = &mut zbuf[row * w + col];
                    if cell.is_none_or(|old| z < old) {
                        *cell = Some(z);
                    }
                }
            }
        }
    }
    zbuf
}

/// Inclusive pixel rectangle covering the projection of a primitive's box.
fn pixel_bounds(prim: &Primitive, k: &CameraIntrinsics) -> Option<(usize, usize, usize, usize)> {
    let (lo, hi) = prim.bounds();
    if hi.z <= 0.0 {
        return None;
    }
    let near = lo.z.max(1e-3);
    let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &x in &[lo.x, hi.x] {
        for &y in &[lo.y, hi.y] {
            for &z in &[near, hi.z] {
                let p = project(Point3::new(x, y, z), k).ok()?;
                u0 = u0.min(p.u);
                u1 = u1.max(p.u);
                v0 = v0.min(p.v);
                v1 = v1.max(p.v);
            }
        }
    }
    let clamp = |v: f64, max: usize| v.clamp(0.0, max as f64 - 1.0) as usize;
    if u1 < 0.0 || v1 < 0.0 || u0 > k.width as f64 - 1.0 || v0 > k.height as f64 - 1.0 {
        return None;
    }
    Some((clamp(u0.floor(), k.width), clamp(u1.ceil(), k.width), clamp(v0.floor(), k.height), clamp(v1.ceil(), k.height)))
}

/// Capsules for every bone plus a palm built from four thick capsules.
pub fn hand_primitives(model: &HandModel, pose: &Pose3D) -> Vec<Primitive> {
    let j = &pose.joints;
    let mut prims: Vec<Primitive> = (1..model.num_joints())
        .filter_map(|i| model.parents[i].map(|p| (p, i)))
        .map(|(p, i)| Primitive::Capsule { a: j[p], b: j[i], radius: model.radii[i] })
        .collect();
    // Palm: wrist (1) to each knuckle (0, 2, 3) and across the knuckles.
    for (a, b) in [(1, 0), (1, 2), (1, 3), (2, 3)] {
        prims.push(Primitive::Capsule { a: j[a], b: j[b], radius: model.palm_radius });
    }
    prims
}

/// Sensor and scene parameters of the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSceneConfig {
    pub intrinsics: CameraIntrinsics,
    pub placement: Placement,
    pub limits: AngleLimits,
    /// Per-pixel probability of a missing measurement.
    pub missing_probability: f64,
    /// Gaussian depth noise on valid pixels, mm.
    pub depth_jitter: f64,
    /// Depth of a fronto-parallel background plane; `None` leaves it empty.
    pub background_depth: Option<f64>,
    pub seed: u64,
}

impl Default for SyntheticSceneConfig {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics::new(150.0, 150.0, 79.5, 59.5, 160, 120).expect("valid default camera"),
            placement: Placement { distance: [450.0, 650.0], lateral: 40.0 },
            limits: AngleLimits::default(),
            missing_probability: 0.02,
            depth_jitter: 1.0,
            background_depth: Some(1100.0),
            seed: 0,
        }
    }
}

impl SyntheticSceneConfig {
    /// Same scene with noise disabled.
    pub fn noiseless(mut self) -> Self {
        self.missing_probability = 0.0;
        self.depth_jitter = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        self.limits.validate()?;
        if !(0.0..=1.0).contains(&self.missing_probability) {
            return Err(Error::Config("missing-pixel probability must lie in [0, 1]".into()));
        }
        if !(self.depth_jitter >= 0.0) {
            return Err(Error::Config("depth jitter must be non-negative".into()));
        }
        let [near, far] = self.placement.distance;
        if !(near > 0.0 && near <= far) || !(self.placement.lateral >= 0.0) {
            return Err(Error::Config("hand distance range must be positive and ordered".into()));
        }
        if self.background_depth.is_some_and(|d| !(d > 0.0)) {
            return Err(Error::Config("background depth must be positive".into()));
        }
        Ok(())
    }
}

/// Renders the hand posed by `angles`. Fails when any joint falls outside
/// the image or behind the camera.
pub fn render_depth(
    model: &HandModel,
    angles: &HandAngles,
    cfg: &SyntheticSceneConfig,
    noise: &mut dyn RngCore,
) -> Result<(DepthFrame, Pose3D)> {
    let k = &cfg.intrinsics;
    let pose = forward_kinematics(model, angles)?;
    for p in &pose.joints {
        let inside = project(*p, k).is_ok_and(|px| {
            px.u >= 0.0 && px.v >= 0.0 && px.u <= k.width as f64 - 1.0 && px.v <= k.height as f64 - 1.0
        });
        if !inside {
            return Err(Error::Domain("hand outside the camera frustum".into()));
        }
    }
    let zbuf = render_primitives(&hand_primitives(model, &pose), k);
    let jitter = Normal::new(0.0, cfg.depth_jitter.max(f64::MIN_POSITIVE)).expect("finite jitter");
    let depth = zbuf
        .into_iter()
        .map(|z| {
            let z = z.or(cfg.background_depth);
            let missing = cfg.missing_probability > 0.0 && noise.random::<f64>() < cfg.missing_probability;
            match z {
                Some(z) if !missing => {
                    let z = if cfg.depth_jitter > 0.0 { z + jitter.sample(noise) } else { z };
                    (z.round().clamp(1.0, u16::MAX as f64)) as u16
                }
                _ => MISSING_DEPTH,
            }
        })
        .collect();
    Ok((DepthFrame::new(k.width, k.height, depth)?, pose))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::hand::{sample_pose, NUM_JOINTS};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cam() -> CameraIntrinsics {
        SyntheticSceneConfig::default().intrinsics
    }

    #[test]
    fn sphere_matches_analytic_depth() {
        let k = cam();
        let c = Point3::new(10.0, -5.0, 500.0);
        let r = 40.0;
        let zbuf = render_primitives(&[Primitive::Sphere { center: c, radius: r }], &k);
        let mut hits = 0;
        for row in 0..k.height {
            for col in 0..k.width {
                let d = pixel_ray(col, row, &k);
                // Analytic oracle: nearest root of |t d - c|^2 = r^2.
                let b = d.dot(c);
                let disc = b * b - c.dot(c) + r * r;
                match zbuf[row * k.width + col] {
                    Some(z) => {
                        assert!(disc >= 0.0);
                        assert!((z - (b - disc.sqrt()) * d.z).abs() < 1e-9);
                        hits += 1;
                    }
                    None => assert!(disc < 0.0),
                }
            }
        }
        assert!(hits > 100);
    }

    #[test]
    fn capsule_side_and_cap_hits() {
        let a = Point3::new(-20.0, 0.0, 500.0);
        let b = Point3::new(20.0, 0.0, 500.0);
        let cap = Primitive::Capsule { a, b, radius: 10.0 };
        let t = cap.intersect(Point3::new(0.0, 0.0, 1.0)).unwrap();
        assert!((t - 490.0).abs() < 1e-9);
        let dir = Point3::new(25.0, 0.0, 500.0).normalized();
        let hit = dir.scale(cap.intersect(dir).unwrap());
        assert!((hit.distance(b) - 10.0).abs() < 1e-9);
        assert!(cap.intersect(Point3::new(0.0, 0.2, 1.0).normalized()).is_none());
        // Capsule viewed end-on behaves like its nearer cap sphere.
        let along = Primitive::Capsule { a: Point3::new(0.0, 0.0, 600.0), b: Point3::new(0.0, 0.0, 500.0), radius: 10.0 };
        assert!((along.intersect(Point3::new(0.0, 0.0, 1.0)).unwrap() - 490.0).abs() < 1e-9);
    }

    #[test]
    fn flat_hand_renders_in_front_of_background() {
        let cfg = SyntheticSceneConfig::default().noiseless();
        let m = HandModel::canonical();
        let angles = HandAngles::rest(Point3::new(0.0, 10.0, 500.0), NUM_JOINTS);
        let (f, pose) = render_depth(&m, &angles, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let px = project(pose.reference(), &cfg.intrinsics).unwrap();
        let d = f.get(px.u.round() as usize, px.v.round() as usize);
        assert!((d as f64 - (500.0 - m.palm_radius)).abs() <= 1.0, "depth {d}");
        assert_eq!(f.get(0, 0), 1100);
    }

    #[test]
    fn outside_frustum_is_an_error() {
        let cfg = SyntheticSceneConfig::default();
        let m = HandModel::canonical();
        let angles = HandAngles::rest(Point3::new(900.0, 0.0, 500.0), NUM_JOINTS);
        assert!(matches!(render_depth(&m, &angles, &cfg, &mut ChaCha8Rng::seed_from_u64(0)), Err(Error::Domain(_))));
    }

    #[test]
    fn missing_fraction_matches_probability() {
        let mut cfg = SyntheticSceneConfig::default();
        cfg.missing_probability = 0.3;
        let m = HandModel::canonical();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (mut missing, mut total) = (0usize, 0usize);
        while total < 100_000 {
            let (a, _) = sample_pose(&m, &cfg.limits, &cfg.placement, &mut rng).unwrap();
            let Ok((f, _)) = render_depth(&m, &a, &cfg, &mut rng) else { continue };
            missing += f.depth.iter().filter(|&&d| d == MISSING_DEPTH).count();
            total += f.depth.len();
        }
        assert!((missing as f64 / total as f64 - 0.3).abs() < 0.02);
    }

    #[test]
    fn joints_project_onto_hand_pixels() {
        let cfg = SyntheticSceneConfig::default().noiseless();
        let m = HandModel::canonical();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let (a, _) = sample_pose(&m, &cfg.limits, &cfg.placement, &mut rng).unwrap();
            let Ok((f, pose)) = render_depth(&m, &a, &cfg, &mut rng) else { continue };
            for p in &pose.joints {
                let px = project(*p, &cfg.intrinsics).unwrap();
                let (cu, cv) = (px.u.round() as i64, px.v.round() as i64);
                let mut near = false;
                for dv in -3..=3i64 {
                    for du in -3..=3i64 {
                        let (u, v) = (cu + du, cv + dv);
                        if u >= 0 && v >= 0 && (u as usize) < f.width && (v as usize) < f.height {
                            near |= f.get(u as usize, v as usize) < 1100;
                        }
                    }
                }
                assert!(near);
            }
        }
    }
}
