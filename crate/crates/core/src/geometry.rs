//! Pinhole camera math, crop cubes, and the depth/joint normalization that
//! turns sensor frames into network inputs and regression targets.
//!
//! Pixel `(i, j)` is centred at `(u, v) = (i, j)`; depth is the camera-space `z`
//! coordinate in millimetres, not the ray length.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default crop cube edge in mm.
pub const DEFAULT_CUBE_SIZE: f64 = 300.0;
/// Default side length of a normalized patch.
pub const DEFAULT_RESOLUTION: usize = 128;
/// Raw depth value marking a missing measurement.
pub const MISSING_DEPTH: u16 = 0;

/// A point (or offset) in camera space, millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn scale(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn dot(self, o: Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Point3) -> Point3 {
        Point3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Point3) -> f64 {
        self.sub(o).norm()
    }

    pub fn normalized(self) -> Point3 {
        let n = self.norm();
        if n == 0.0 {
            self
        } else {
            self.scale(1.0 / n)
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }
}

impl From<Point3> for [f64; 3] {
    fn from(p: Point3) -> Self {
        p.to_array()
    }
}

/// Pinhole intrinsics without distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid intrinsics {self:?}")))
        }
    }
}

/// Row-major depth map in millimetres; `0` marks a missing pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthFrame {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<u16>,
}

impl DepthFrame {
    pub fn new(width: usize, height: usize, depth: Vec<u16>) -> Result<Self> {
        if depth.len() != width * height {
            return Err(Error::Shape(format!(
                "depth grid has {} values, expected {width}x{height}",
                depth.len()
            )));
        }
        Ok(Self { width, height, depth })
    }

    /// A frame with every pixel missing.
    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, depth: vec![MISSING_DEPTH; width * height] }
    }

    pub fn get(&self, col: usize, row: usize) -> u16 {
        self.depth[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, d: u16) {
        self.depth[row * self.width + col] = d;
    }
}

/// Ordered joint positions in camera space (mm). Joint 0 is the middle-finger MCP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pose3D {
    pub joints: Vec<Point3>,
}

impl Pose3D {
    pub fn new(joints: Vec<Point3>) -> Self {
        Self { joints }
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    /// Middle-finger MCP, the hand's reference point.
    pub fn reference(&self) -> Point3 {
        self.joints[0]
    }

    pub fn centroid(&self) -> Point3 {
        let n = self.joints.len() as f64;
        self.joints.iter().fold(Point3::ORIGIN, |acc, &p| acc.add(p)).scale(1.0 / n)
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.joints.iter().flat_map(|p| p.to_array()).collect()
    }

    pub fn from_flat(v: &[f64]) -> Result<Self> {
        if v.is_empty() || v.len() % 3 != 0 {
            return Err(Error::Shape(format!("pose vector length {} is not 3J", v.len())));
        }
        Ok(Self { joints: v.chunks_exact(3).map(|c| Point3::new(c[0], c[1], c[2])).collect() })
    }
}

/// Axis-aligned cube in camera space around the hand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropCube {
    pub center: Point3,
    pub size: f64,
}

impl CropCube {
    pub fn new(center: Point3, size: f64) -> Result<Self> {
        if !(size > 0.0) {
            return Err(Error::Domain(format!("cube size must be positive, got {size}")));
        }
        if !(center.z > size / 2.0) {
            return Err(Error::Domain(format!(
                "cube at z={} with size {size} crosses the camera plane",
                center.z
            )));
        }
        Ok(Self { center, size })
    }

    pub fn half(&self) -> f64 {
        self.size / 2.0
    }

    pub fn corners(&self) -> [Point3; 8] {
        let h = self.half();
        let c = self.center;
        let mut out = [Point3::ORIGIN; 8];
        for (i, o) in out.iter_mut().enumerate() {
            let sx = if i & 1 == 0 { -h } else { h };
            let sy = if i & 2 == 0 { -h } else { h };
            let sz = if i & 4 == 0 { -h } else { h };
            *o = Point3::new(c.x + sx, c.y + sy, c.z + sz);
        }
        out
    }
}

/// Pixel coordinates plus depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelDepth {
    pub u: f64,
    pub v: f64,
    pub d: f64,
}

pub fn project(p: Point3, k: &CameraIntrinsics) -> Result<PixelDepth> {
    if !(p.z > 0.0) {
        return Err(Error::Domain(format!("cannot project point with z = {}", p.z)));
    }
    Ok(PixelDepth { u: p.x * k.fx / p.z + k.cx, v: p.y * k.fy / p.z + k.cy, d: p.z })
}

pub fn backproject(u: f64, v: f64, d: f64, k: &CameraIntrinsics) -> Result<Point3> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("cannot backproject depth {d}")));
    }
    Ok(Point3::new((u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, d))
}

/// Square image window (in normalized image coordinates) covering every
/// projected face of a cube, centred on the cube centre's projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropWindow {
    pub u_center: f64,
    pub v_center: f64,
    pub half_u: f64,
    pub half_v: f64,
}

impl CropWindow {
    pub fn for_cube(cube: &CropCube, k: &CameraIntrinsics) -> Result<Self> {
        let c = project(cube.center, k)?;
        let mut half = 0.0f64;
        for corner in cube.corners() {
            let p = project(corner, k)?;
            half = half.max((p.u - c.u).abs() / k.fx).max((p.v - c.v).abs() / k.fy);
        }
        Ok(Self { u_center: c.u, v_center: c.v, half_u: half * k.fx, half_v: half * k.fy })
    }

    /// Source pixel coordinate sampled by output pixel `(col, row)`.
    pub fn source(&self, col: usize, row: usize, resolution: usize) -> (f64, f64) {
        let r = resolution as f64;
        let u = self.u_center + ((col as f64 + 0.5) / r * 2.0 - 1.0) * self.half_u;
        let v = self.v_center + ((row as f64 + 0.5) / r * 2.0 - 1.0) * self.half_v;
        (u, v)
    }

    /// Whether any part of the window overlaps a `width x height` frame.
    pub fn intersects(&self, width: usize, height: usize) -> bool {
        self.u_center + self.half_u >= -0.5
            && self.u_center - self.half_u <= width as f64 - 0.5
            && self.v_center + self.half_v >= -0.5
            && self.v_center - self.half_v <= height as f64 - 0.5
    }
}

/// Depth crop normalized to `[-1, 1]`, far and missing pixels at exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPatch {
    pub resolution: usize,
    pub values: Vec<f32>,
    pub cube: CropCube,
    pub intrinsics: CameraIntrinsics,
}

fn normalize_depth(raw: u16, cube: &CropCube) -> f32 {
    if raw == MISSING_DEPTH {
        return 1.0;
    }
    let d = raw as f64;
    let half = cube.half();
    if d > cube.center.z + half {
        return 1.0;
    }
    ((d - cube.center.z) / half).clamp(-1.0, 1.0) as f32
}

pub fn extract_crop(
    frame: &DepthFrame,
    cube: &CropCube,
    k: &CameraIntrinsics,
    resolution: usize,
) -> Result<NormalizedPatch> {
    if resolution < 8 {
        return Err(Error::Domain(format!("patch resolution {resolution} is below 8")));
    }
    CropCube::new(cube.center, cube.size)?;
    let window = CropWindow::for_cube(cube, k)?;
    if !window.intersects(frame.width, frame.height) {
        return Err(Error::EmptyCrop);
    }
    let mut values = Vec::with_capacity(resolution * resolution);
    for row in 0..resolution {
        for col in 0..resolution {
            let (u, v) = window.source(col, row, resolution);
            let (iu, iv) = (u.round(), v.round());
            let raw = if iu < 0.0 || iv < 0.0 || iu >= frame.width as f64 || iv >= frame.height as f64
            {
                MISSING_DEPTH
            } else {
                frame.get(iu as usize, iv as usize)
            };
            values.push(normalize_depth(raw, cube));
        }
    }
    Ok(NormalizedPatch { resolution, values, cube: *cube, intrinsics: *k })
}

/// Joint coordinates relative to the cube centre in units of half the cube edge.
pub fn normalize_joints(pose: &Pose3D, cube: &CropCube) -> Vec<f64> {
    let h = cube.half();
    pose.joints
        .iter()
        .flat_map(|p| {
            let d = p.sub(cube.center);
            [d.x / h, d.y / h, d.z / h]
        })
        .collect()
}

pub fn denormalize_joints(v: &[f64], cube: &CropCube) -> Result<Pose3D> {
    let normalized = Pose3D::from_flat(v)?;
    let h = cube.half();
    Ok(Pose3D::new(normalized.joints.into_iter().map(|n| cube.center.add(n.scale(h))).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 160.0, 120.0, 320, 240).unwrap()
    }

    #[test]
    fn principal_axis_maps_to_principal_point() {
        let p = project(Point3::new(0.0, 0.0, 500.0), &cam()).unwrap();
        assert_eq!((p.u, p.v, p.d), (160.0, 120.0, 500.0));
        assert_eq!(backproject(160.0, 120.0, 700.0, &cam()).unwrap(), Point3::new(0.0, 0.0, 700.0));
    }

    #[test]
    fn hand_evaluated_pinhole() {
        assert_eq!(project(Point3::new(100.0, 0.0, 500.0), &cam()).unwrap().u, 260.0);
        assert_eq!(backproject(260.0, 120.0, 500.0, &cam()).unwrap(), Point3::new(100.0, 0.0, 500.0));
    }

    #[test]
    fn non_positive_depth_is_domain_error() {
        assert!(matches!(project(Point3::new(1.0, 1.0, 0.0), &cam()), Err(Error::Domain(_))));
        assert!(matches!(backproject(1.0, 1.0, -3.0, &cam()), Err(Error::Domain(_))));
    }

    #[test]
    fn invalid_intrinsics_rejected() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
    }

    #[test]
    fn cube_validation() {
        assert!(CropCube::new(Point3::new(0.0, 0.0, 100.0), 300.0).is_err());
        assert!(CropCube::new(Point3::new(0.0, 0.0, 500.0), 0.0).is_err());
    }

    fn flat_frame(d: u16) -> DepthFrame {
        DepthFrame::new(320, 240, vec![d; 320 * 240]).unwrap()
    }

    #[test]
    fn crop_normalization_levels() {
        // Far enough away that the window stays inside the frame.
        let cube = CropCube::new(Point3::new(0.0, 0.0, 1000.0), 300.0).unwrap();
        let p = extract_crop(&flat_frame(1000), &cube, &cam(), DEFAULT_RESOLUTION).unwrap();
        assert_eq!(p.resolution, 128);
        assert_eq!(p.values.len(), 128 * 128);
        assert!(p.values.iter().all(|&v| v == 0.0));
        let near = extract_crop(&flat_frame(850), &cube, &cam(), 16).unwrap();
        assert!(near.values.iter().all(|&v| v == -1.0));
        let back = extract_crop(&flat_frame(1150), &cube, &cam(), 16).unwrap();
        assert!(back.values.iter().all(|&v| v == 1.0));
        let far = extract_crop(&flat_frame(1151), &cube, &cam(), 16).unwrap();
        assert!(far.values.iter().all(|&v| v == 1.0));
        let closer = extract_crop(&flat_frame(300), &cube, &cam(), 16).unwrap();
        assert!(closer.values.iter().all(|&v| v == -1.0));
    }

    #[test]
    fn missing_pixels_become_one() {
        let cube = CropCube::new(Point3::new(0.0, 0.0, 500.0), 300.0).unwrap();
        let p = extract_crop(&flat_frame(MISSING_DEPTH), &cube, &cam(), 32).unwrap();
        assert!(p.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn crop_outside_frame_is_empty() {
        let cube = CropCube::new(Point3::new(5000.0, 0.0, 500.0), 300.0).unwrap();
        assert!(matches!(extract_crop(&flat_frame(500), &cube, &cam(), 32), Err(Error::EmptyCrop)));
        let cube = CropCube::new(Point3::new(0.0, 0.0, 500.0), 300.0).unwrap();
        assert!(extract_crop(&flat_frame(500), &cube, &cam(), 4).is_err());
    }

    #[test]
    fn partial_window_pads_missing() {
        // Cube near the left edge: the part of the window beyond the frame reads as missing.
        let cube = CropCube::new(Point3::new(-160.0 * 500.0 / 500.0, 0.0, 500.0), 300.0).unwrap();
        let p = extract_crop(&flat_frame(500), &cube, &cam(), 32).unwrap();
        let ones = p.values.iter().filter(|&&v| v == 1.0).count();
        let zeros = p.values.iter().filter(|&&v| v == 0.0).count();
        assert!(ones > 0 && zeros > 0);
        assert_eq!(ones + zeros, 32 * 32);
    }

    #[test]
    fn window_contains_projected_corners() {
        let k = cam();
        let cube = CropCube::new(Point3::new(80.0, -40.0, 450.0), 300.0).unwrap();
        let w = CropWindow::for_cube(&cube, &k).unwrap();
        for c in cube.corners() {
            let p = project(c, &k).unwrap();
            assert!((p.u - w.u_center).abs() <= w.half_u + 1e-9);
            assert!((p.v - w.v_center).abs() <= w.half_v + 1e-9);
        }
    }

    #[test]
    fn joint_normalization_examples() {
        let cube = CropCube::new(Point3::new(10.0, 20.0, 600.0), 300.0).unwrap();
        let pose = Pose3D::new(vec![cube.center, cube.corners()[7]]);
        assert_eq!(normalize_joints(&pose, &cube), vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let zero = denormalize_joints(&[0.0; 6], &cube).unwrap();
        assert_eq!(zero.joints, vec![cube.center; 2]);
        let shifted = denormalize_joints(&[1.0, 0.0, 0.0], &cube).unwrap();
        assert_eq!(shifted.joints[0], Point3::new(160.0, 20.0, 600.0));
        assert!(matches!(denormalize_joints(&[1.0, 2.0], &cube), Err(Error::Shape(_))));
    }

    fn point_strategy() -> impl Strategy<Value = Point3> {
        (-400.0..400.0f64, -400.0..400.0f64, 200.0..1500.0f64).prop_map(|(x, y, z)| Point3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn projection_round_trips(p in point_strategy()) {
            let k = cam();
            let q = project(p, &k).unwrap();
            let back = backproject(q.u, q.v, q.d, &k).unwrap();
            prop_assert!(back.distance(p) <= 1e-9 * p.norm());
            let again = project(back, &k).unwrap();
            prop_assert!((again.u - q.u).abs() <= 1e-9 * q.u.abs().max(1.0));
            prop_assert!((again.v - q.v).abs() <= 1e-9 * q.v.abs().max(1.0));
        }

        #[test]
        fn normalization_round_trips_and_is_affine(
            a in proptest::collection::vec(point_strategy(), 14),
            b in proptest::collection::vec(point_strategy(), 14),
            alpha in 0.0..1.0f64,
        ) {
            let cube = CropCube::new(Point3::new(5.0, -7.0, 700.0), 300.0).unwrap();
            let pa = Pose3D::new(a);
            let pb = Pose3D::new(b);
            let back = denormalize_joints(&normalize_joints(&pa, &cube), &cube).unwrap();
            for (x, y) in back.joints.iter().zip(&pa.joints) {
                prop_assert!(x.distance(*y) <= 1e-9);
            }
            let mix = Pose3D::new(pa.joints.iter().zip(&pb.joints)
                .map(|(p, q)| p.scale(alpha).add(q.scale(1.0 - alpha))).collect());
            let lhs = normalize_joints(&mix, &cube);
            let na = normalize_joints(&pa, &cube);
            let nb = normalize_joints(&pb, &cube);
            for i in 0..lhs.len() {
                prop_assert!((lhs[i] - (alpha * na[i] + (1.0 - alpha) * nb[i])).abs() <= 1e-9);
            }
        }

        #[test]
        fn crop_values_bounded_and_deterministic(
            seed in any::<u64>(),
            missing in 0.0..0.5f64,
            cx in -100.0..100.0f64,
            cz in 300.0..900.0f64,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let depth: Vec<u16> = (0..64 * 48)
                .map(|_| if rng.random::<f64>() < missing { 0 } else { rng.random_range(100..2000) })
                .collect();
            let frame = DepthFrame::new(64, 48, depth).unwrap();
            let k = CameraIntrinsics::new(60.0, 60.0, 32.0, 24.0, 64, 48).unwrap();
            let cube = CropCube::new(Point3::new(cx, 0.0, cz), 300.0).unwrap();
            let a = extract_crop(&frame, &cube, &k, 16);
            let b = extract_crop(&frame, &cube, &k, 16);
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    prop_assert!(a.values.iter().all(|v| (-1.0..=1.0).contains(v)));
                    prop_assert_eq!(
                        a.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        b.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
                    );
                    // Every sampled missing pixel yields exactly 1.
                    let w = CropWindow::for_cube(&cube, &k).unwrap();
                    let mut sampled_missing = 0;
                    for row in 0..16 {
                        for col in 0..16 {
                            let (u, v) = w.source(col, row, 16);
                            let (iu, iv) = (u.round(), v.round());
                            let inside = iu >= 0.0 && iv >= 0.0 && iu < 64.0 && iv < 48.0;
                            if !inside || frame.get(iu as usize, iv as usize) == 0 {
                                sampled_missing += 1;
                            }
                        }
                    }
                    prop_assert!(a.values.iter().filter(|&&v| v == 1.0).count() >= sampled_missing);
                }
                (Err(Error::EmptyCrop), Err(Error::EmptyCrop)) => {}
                other => prop_assert!(false, "unexpected {:?}", other.0.err()),
            }
        }
    }
}
