//! Hand localization: nearest-object depth segmentation, centre of mass, and
//! a learned refinement towards the middle-finger MCP joint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    backproject, extract_crop, CameraIntrinsics, CropCube, CropWindow, DepthFrame, Point3, MISSING_DEPTH,
};
use crate::nn::{NetKind, Network, Scalar, Tensor};

/// Default depth extent behind the nearest pixel kept by segmentation, mm.
pub const DEFAULT_SEGMENT_EXTENT: f64 = 250.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationSource {
    CenterOfMass,
    Refined,
    Tracked,
    GroundTruth,
}

/// How crop centres are obtained at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum LocalizationMode {
    /// Annotated middle-finger MCP.
    GroundTruth,
    /// Centre of mass followed by one refinement step.
    Refined,
    CenterOfMass,
}

impl LocalizationMode {
    pub fn label(self) -> &'static str {
        match self {
            LocalizationMode::GroundTruth => "Ground truth",
            LocalizationMode::Refined => "Refined",
            LocalizationMode::CenterOfMass => "Center of mass",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandLocation {
    pub point: Point3,
    pub source: LocationSource,
}

/// Pixel mask over a frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandMask {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<bool>,
}

impl HandMask {
    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&m| m).count()
    }

    pub fn is_subset_of(&self, other: &HandMask) -> bool {
        self.pixels.iter().zip(&other.pixels).all(|(&a, &b)| !a || b)
    }

    /// Masked pixel coordinates in row-major order.
    pub fn coords(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pixels.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| (i % self.width, i / self.width))
    }
}

/// Keeps pixels within `extent` mm behind the closest valid depth.
pub fn segment_hand(frame: &DepthFrame, extent: f64) -> Result<HandMask> {
    let nearest = frame
        .depth
        .iter()
        .copied()
        .filter(|&d| d != MISSING_DEPTH)
        .min()
        .ok_or_else(|| Error::NoHand("every pixel is missing".into()))?;
    let limit = nearest as f64 + extent;
    let pixels = frame.depth.iter().map(|&d| d != MISSING_DEPTH && (d as f64) <= limit).collect();
    Ok(HandMask { width: frame.width, height: frame.height, pixels })
}

/// Mean of the backprojected masked pixels.
pub fn center_of_mass(frame: &DepthFrame, mask: &HandMask, k: &CameraIntrinsics) -> Result<HandLocation> {
    if mask.width != frame.width || mask.height != frame.height {
        return Err(Error::Shape("mask does not match the frame".into()));
    }
    let mut sum = Point3::ORIGIN;
    let mut n = 0usize;
    for (c, r) in mask.coords() {
        let d = frame.get(c, r);
        if d == MISSING_DEPTH {
            continue;
        }
        sum = sum.add(backproject(c as f64, r as f64, d as f64, k)?);
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoHand("empty segmentation mask".into()));
    }
    Ok(HandLocation { point: sum.scale(1.0 / n as f64), source: LocationSource::CenterOfMass })
}

/// Segmentation followed by centre of mass.
pub fn locate_center_of_mass(frame: &DepthFrame, k: &CameraIntrinsics, extent: f64) -> Result<HandLocation> {
    center_of_mass(frame, &segment_hand(frame, extent)?, k)
}

/// Crops at `loc`, regresses a normalized offset, and moves the location by
/// the denormalized offset. `iterations` repeats the step from the updated point.
pub fn refine_location<T: Scalar>(
    frame: &DepthFrame,
    k: &CameraIntrinsics,
    loc: HandLocation,
    net: &Network<T>,
    cube_size: f64,
    iterations: usize,
) -> Result<HandLocation> {
    if net.output_dim() != 3 {
        return Err(Error::ArchitectureMismatch {
            expected: NetKind::RefineNet.name().into(),
            found: format!("{} with {} outputs", net.kind().name(), net.output_dim()),
        });
    }
    let res = net.input_resolution();
    let mut point = loc.point;
    for _ in 0..iterations.max(1) {
        let cube = CropCube::new(point, cube_size)?;
        let patch = extract_crop(frame, &cube, k, res)?;
        let x = Tensor::from_vec(&[1, 1, res, res], patch.values.iter().map(|&v| T::of(v as f64)).collect())?;
        let y = net.infer(&x)?;
        let h = cube_size / 2.0;
        let o = y.data();
        point = point.add(Point3::new(o[0].f64() * h, o[1].f64() * h, o[2].f64() * h));
    }
    Ok(HandLocation { point, source: LocationSource::Refined })
}

/// Refines from the previous frame's location instead of a fresh centre of mass.
pub fn track<T: Scalar>(
    prev: HandLocation,
    frame: &DepthFrame,
    k: &CameraIntrinsics,
    net: &Network<T>,
    cube_size: f64,
) -> Result<HandLocation> {
    let refined = refine_location(frame, k, prev, net, cube_size, 1)?;
    Ok(HandLocation { source: LocationSource::Tracked, ..refined })
}

/// Per-stream tracker: tracks from the last location and falls back to
/// centre of mass plus refinement when there is no previous location or
/// tracking fails. A location whose crop misses the frame counts as a
/// failure; if the refined centre of mass is unusable too, the plain centre
/// of mass is returned.
#[derive(Debug, Clone)]
pub struct Tracker {
    pub cube_size: f64,
    pub extent: f64,
    last: Option<HandLocation>,
}

impl Tracker {
    pub fn new(cube_size: f64, extent: f64) -> Self {
        Self { cube_size, extent, last: None }
    }

    pub fn last(&self) -> Option<HandLocation> {
        self.last
    }

    pub fn reset(&mut self) {
        self.last = None;
    }

    fn usable(&self, loc: &Result<HandLocation>, frame: &DepthFrame, k: &CameraIntrinsics) -> bool {
        let Ok(loc) = loc else { return false };
        CropCube::new(loc.point, self.cube_size)
            .and_then(|c| CropWindow::for_cube(&c, k))
            .is_ok_and(|w| w.intersects(frame.width, frame.height))
    }

    pub fn step<T: Scalar>(&mut self, frame: &DepthFrame, k: &CameraIntrinsics, net: &Network<T>) -> Result<HandLocation> {
        if let Some(prev) = self.last {
            let tracked = track(prev, frame, k, net, self.cube_size);
            if self.usable(&tracked, frame, k) {
                self.last = tracked.as_ref().ok().copied();
                return tracked;
            }
        }
        let com = match locate_center_of_mass(frame, k, self.extent) {
            Ok(c) => c,
            Err(e) => {
                self.last = None;
                return Err(e);
            }
        };
        let refined = refine_location(frame, k, com, net, self.cube_size, 1);
        let loc = if self.usable(&refined, frame, k) { refined? } else { com };
        self.last = Some(loc);
        Ok(loc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_refinenet, NetScale};

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::new(140.0, 140.0, 80.0, 60.0, 160, 120).unwrap()
    }

    fn two_planes() -> DepthFrame {
        let mut f = DepthFrame::new(160, 120, vec![1200; 160 * 120]).unwrap();
        for r in 40..70 {
            for c in 60..90 {
                f.set(c, r, 400 + ((c + r) % 20) as u16);
            }
        }
        f
    }

    #[test]
    fn segmentation_excludes_background() {
        let f = two_planes();
        let m = segment_hand(&f, 250.0).unwrap();
        assert_eq!(m.count(), 30 * 30);
        assert!(m.coords().all(|(c, r)| (60..90).contains(&c) && (40..70).contains(&r)));
    }

    #[test]
    fn single_object_mask() {
        let mut f = DepthFrame::empty(20, 10);
        f.set(3, 4, 500);
        f.set(4, 4, 510);
        let m = segment_hand(&f, 250.0).unwrap();
        assert_eq!(m.coords().collect::<Vec<_>>(), vec![(3, 4), (4, 4)]);
    }

    #[test]
    fn all_missing_is_no_hand() {
        assert!(matches!(segment_hand(&DepthFrame::empty(8, 8), 250.0), Err(Error::NoHand(_))));
        let f = two_planes();
        let empty = HandMask { width: 160, height: 120, pixels: vec![false; 160 * 120] };
        assert!(matches!(center_of_mass(&f, &empty, &cam()), Err(Error::NoHand(_))));
    }

    #[test]
    fn mask_monotone_in_extent() {
        let f = two_planes();
        let mut prev = segment_hand(&f, 0.0).unwrap();
        for e in [5.0, 10.0, 100.0, 799.0, 800.0, 2000.0] {
            let m = segment_hand(&f, e).unwrap();
            assert!(prev.is_subset_of(&m));
            prev = m;
        }
        assert_eq!(prev.count(), 160 * 120);
    }

    #[test]
    fn com_single_pixel_and_symmetry() {
        let k = cam();
        let mut f = DepthFrame::empty(160, 120);
        f.set(100, 20, 600);
        let m = segment_hand(&f, 250.0).unwrap();
        let loc = center_of_mass(&f, &m, &k).unwrap();
        assert_eq!(loc.point, backproject(100.0, 20.0, 600.0, &k).unwrap());
        assert_eq!(loc.source, LocationSource::CenterOfMass);
        let mut g = DepthFrame::empty(160, 120);
        g.set(70, 60, 500);
        g.set(90, 60, 500);
        let loc = center_of_mass(&g, &segment_hand(&g, 250.0).unwrap(), &k).unwrap();
        assert!(loc.point.distance(Point3::new(0.0, 0.0, 500.0)) < 1e-12);
    }

    #[test]
    fn com_permutation_invariant() {
        let k = cam();
        let f = two_planes();
        let m = segment_hand(&f, 250.0).unwrap();
        let forward = center_of_mass(&f, &m, &k).unwrap().point;
        let mut pts: Vec<Point3> =
            m.coords().map(|(c, r)| backproject(c as f64, r as f64, f.get(c, r) as f64, &k).unwrap()).collect();
        pts.reverse();
        let rev = pts.iter().fold(Point3::ORIGIN, |a, &p| a.add(p)).scale(1.0 / pts.len() as f64);
        assert!(forward.distance(rev) < 1e-9);
    }

    fn zero_refiner() -> Network<f32> {
        let mut net = Network::<f32>::from_spec(build_refinenet(NetScale::Desk), 1).unwrap();
        for p in net.params_mut() {
            p.fill(0.0);
        }
        net
    }

    #[test]
    fn zero_network_keeps_location() {
        let k = cam();
        let f = two_planes();
        let com = locate_center_of_mass(&f, &k, 250.0).unwrap();
        let net = zero_refiner();
        let r = refine_location(&f, &k, com, &net, 300.0, 1).unwrap();
        assert_eq!(r.point, com.point);
        assert_eq!(r.source, LocationSource::Refined);
        let t = track(com, &f, &k, &net, 300.0).unwrap();
        assert_eq!((t.point, t.source), (com.point, LocationSource::Tracked));
    }

    #[test]
    fn tracker_keeps_the_centre_of_mass_when_refinement_leaves_the_frame() {
        let (k, f) = (cam(), two_planes());
        let mut net = zero_refiner();
        // A constant offset of 50 half-cubes on every axis.
        net.params_mut().into_iter().last().unwrap().fill(50.0);
        let com = locate_center_of_mass(&f, &k, 250.0).unwrap();
        let mut tracker = Tracker::new(300.0, 250.0);
        for _ in 0..3 {
            let loc = tracker.step(&f, &k, &net).unwrap();
            assert_eq!((loc.point, loc.source), (com.point, LocationSource::CenterOfMass));
        }
    }

    #[test]
    fn tracker_falls_back_after_losing_the_hand() {
        let k = cam();
        let f = two_planes();
        let net = zero_refiner();
        let mut tracker = Tracker::new(300.0, 250.0);
        let first = tracker.step(&f, &k, &net).unwrap();
        assert_eq!(first.source, LocationSource::Refined);
        assert_eq!(tracker.step(&f, &k, &net).unwrap().source, LocationSource::Tracked);
        // Previous location far outside the frame: tracking fails, CoM path is used.
        tracker.last = Some(HandLocation { point: Point3::new(5000.0, 0.0, 500.0), source: LocationSource::Tracked });
        let recovered = tracker.step(&f, &k, &net).unwrap();
        assert_eq!(recovered.source, LocationSource::Refined);
        assert!(matches!(
            track(HandLocation { point: Point3::new(5000.0, 0.0, 500.0), source: LocationSource::Tracked }, &f, &k, &net, 300.0),
            Err(Error::EmptyCrop)
        ));
        let mut fresh = Tracker::new(300.0, 250.0);
        assert!(fresh.step(&DepthFrame::empty(160, 120), &k, &net).is_err());
        assert!(fresh.last().is_none());
    }
}
