//! Kinematic hand model and pose sampling.

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augmentation::mix_seed;
use crate::error::{Error, Result};
use crate::geometry::{Point3, Pose3D};

pub const NUM_JOINTS: usize = 14;

/// Joint 0 is the middle-finger MCP, the hand's reference point.
pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "middle_mcp",
    "wrist",
    "index_mcp",
    "pinky_mcp",
    "index_pip",
    "index_tip",
    "middle_pip",
    "middle_tip",
    "ring_pip",
    "ring_tip",
    "pinky_pip",
    "pinky_tip",
    "thumb_mcp",
    "thumb_tip",
];

const PARENTS: [Option<usize>; NUM_JOINTS] = [
    None,
    Some(0),
    Some(0),
    Some(0),
    Some(2),
    Some(4),
    Some(0),
    Some(6),
    Some(0),
    Some(8),
    Some(3),
    Some(10),
    Some(1),
    Some(12),
];

/// Degrees of freedom of a joint's incoming segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    Root,
    /// Rigid palm segment.
    Palm,
    /// Finger base: flexion and abduction.
    FingerBase,
    /// Distal finger segment: flexion only.
    FingerTip,
    ThumbBase,
    ThumbTip,
}

const KINDS: [JointKind; NUM_JOINTS] = [
    JointKind::Root,
    JointKind::Palm,
    JointKind::Palm,
    JointKind::Palm,
    JointKind::FingerBase,
    JointKind::FingerTip,
    JointKind::FingerBase,
    JointKind::FingerTip,
    JointKind::FingerBase,
    JointKind::FingerTip,
    JointKind::FingerBase,
    JointKind::FingerTip,
    JointKind::ThumbBase,
    JointKind::ThumbTip,
];

/// Per-subject hand geometry over a fixed kinematic tree.
///
/// The hand frame has fingers along `-y`, the palm facing `-z` (towards the
/// camera at identity orientation) and the pinky side at `+x`. Each joint
/// sits at its parent plus `length` along `direction`, both given in the
/// parent's frame before that joint's own rotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandModel {
    pub parents: Vec<Option<usize>>,
    pub kinds: Vec<JointKind>,
    pub directions: Vec<Point3>,
    /// Segment length from the parent, mm (0 for the root).
    pub lengths: Vec<f64>,
    /// Radius of the capsule ending at each joint, mm.
    pub radii: Vec<f64>,
    /// Half thickness of the palm, mm.
    pub palm_radius: f64,
}

impl HandModel {
    /// Adult-sized reference hand.
    pub fn canonical() -> Self {
        let raw: [(f64, f64, f64, f64); NUM_JOINTS] = [
            (0.0, 0.0, 0.0, 10.0),
            (0.0, 1.0, 80.0, 12.0),
            (-1.0, 0.1, 22.0, 9.0),
            (1.0, 0.25, 22.0, 8.0),
            (-0.08, -1.0, 42.0, 8.5),
            (0.0, -1.0, 42.0, 7.5),
            (0.0, -1.0, 46.0, 8.5),
            (0.0, -1.0, 48.0, 7.5),
            (0.4, -1.0, 52.0, 8.0),
            (0.0, -1.0, 44.0, 7.0),
            (0.12, -1.0, 34.0, 7.5),
            (0.0, -1.0, 34.0, 6.5),
            (-1.0, -0.5, 45.0, 10.0),
            (-0.45, -1.0, 52.0, 8.5),
        ];
        let directions = raw
            .iter()
            .map(|&(x, y, _, _)| if x == 0.0 && y == 0.0 { Point3::ORIGIN } else { Point3::new(x, y, 0.0).normalized() })
            .collect();
        Self {
            parents: PARENTS.to_vec(),
            kinds: KINDS.to_vec(),
            directions,
            lengths: raw.iter().map(|r| r.2).collect(),
            radii: raw.iter().map(|r| r.3).collect(),
            palm_radius: 12.0,
        }
    }

    /// Uniformly scaled copy.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut m = self.clone();
        m.lengths.iter_mut().for_each(|l| *l *= factor);
        m.radii.iter_mut().for_each(|r| *r *= factor);
        m.palm_radius *= factor;
        m
    }

    /// Deterministic per-subject geometry: a global scale in `[0.85, 1.15]`
    /// and independent per-segment length variation of up to 6%.
    pub fn for_subject(seed: u64, subject: u32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5ab1, subject as u64));
        let mut m = Self::canonical().scaled(rng.random_range(0.85..=1.15));
        for l in m.lengths.iter_mut().skip(1) {
            *l *= rng.random_range(0.94..=1.06);
        }
        m
    }

    pub fn num_joints(&self) -> usize {
        self.parents.len()
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.num_joints();
        if [self.kinds.len(), self.directions.len(), self.lengths.len(), self.radii.len()].iter().any(|&n| n != j) {
            return Err(Error::Config("hand model arrays differ in length".into()));
        }
        if j == 0 || self.parents[0].is_some() {
            return Err(Error::Config("joint 0 must be the only root".into()));
        }
        for i in 1..j {
            // Parents precede children: the tree is connected and acyclic.
            match self.parents[i] {
                Some(p) if p < i => {}
                _ => return Err(Error::Config(format!("joint {i} needs a parent with a smaller index"))),
            }
            if !(self.lengths[i] > 0.0) {
                return Err(Error::Config(format!("segment {i} has non-positive length")));
            }
        }
        if self.radii.iter().chain([&self.palm_radius]).any(|&r| !(r > 0.0)) {
            return Err(Error::Config("radii must be positive".into()));
        }
        Ok(())
    }
}

/// Joint angle limits in degrees, `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AngleLimits {
    pub finger_flexion: [f64; 2],
    pub finger_abduction: [f64; 2],
    pub tip_flexion: [f64; 2],
    pub thumb_flexion: [f64; 2],
    pub thumb_abduction: [f64; 2],
    pub thumb_tip_flexion: [f64; 2],
    /// In-plane rotation about the camera axis.
    pub roll: [f64; 2],
    pub pitch: [f64; 2],
    pub yaw: [f64; 2],
}

impl Default for AngleLimits {
    fn default() -> Self {
        Self {
            finger_flexion: [0.0, 80.0],
            finger_abduction: [-12.0, 12.0],
            tip_flexion: [0.0, 90.0],
            thumb_flexion: [-10.0, 40.0],
            thumb_abduction: [-20.0, 20.0],
            thumb_tip_flexion: [0.0, 60.0],
            roll: [-180.0, 180.0],
            pitch: [-30.0, 30.0],
            yaw: [-30.0, 30.0],
        }
    }
}

impl AngleLimits {
    /// All joints and the global orientation locked at zero.
    pub fn zero() -> Self {
        Self {
            finger_flexion: [0.0; 2],
            finger_abduction: [0.0; 2],
            tip_flexion: [0.0; 2],
            thumb_flexion: [0.0; 2],
            thumb_abduction: [0.0; 2],
            thumb_tip_flexion: [0.0; 2],
            roll: [0.0; 2],
            pitch: [0.0; 2],
            yaw: [0.0; 2],
        }
    }

    fn all(&self) -> [[f64; 2]; 9] {
        [
            self.finger_flexion,
            self.finger_abduction,
            self.tip_flexion,
            self.thumb_flexion,
            self.thumb_abduction,
            self.thumb_tip_flexion,
            self.roll,
            self.pitch,
            self.yaw,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for [lo, hi] in self.all() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!("angle limit [{lo}, {hi}] is not an interval")));
            }
        }
        Ok(())
    }

    /// `(flexion, abduction)` limits for a joint kind.
    fn joint(&self, kind: JointKind) -> ([f64; 2], [f64; 2]) {
        match kind {
            JointKind::Root | JointKind::Palm => ([0.0; 2], [0.0; 2]),
            JointKind::FingerBase => (self.finger_flexion, self.finger_abduction),
            JointKind::FingerTip => (self.tip_flexion, [0.0; 2]),
            JointKind::ThumbBase => (self.thumb_flexion, self.thumb_abduction),
            JointKind::ThumbTip => (self.thumb_tip_flexion, [0.0; 2]),
        }
    }
}

/// Full articulation of one hand instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandAngles {
    /// Position of the root joint, camera space mm.
    pub root: Point3,
    /// `[roll, pitch, yaw]` in degrees.
    pub orientation: [f64; 3],
    /// `[flexion, abduction]` per joint in degrees.
    pub joints: Vec<[f64; 2]>,
}

impl HandAngles {
    pub fn rest(root: Point3, num_joints: usize) -> Self {
        Self { root, orientation: [0.0; 3], joints: vec![[0.0; 2]; num_joints] }
    }
}

fn uniform(rng: &mut dyn RngCore, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn vec3(p: Point3) -> Vector3<f64> {
    Vector3::new(p.x, p.y, p.z)
}

fn point(v: Vector3<f64>) -> Point3 {
    Point3::new(v.x, v.y, v.z)
}

/// Forward kinematics over the tree.
pub fn forward_kinematics(model: &HandModel, angles: &HandAngles) -> Result<Pose3D> {
    let j = model.num_joints();
    if angles.joints.len() != j {
        return Err(Error::Shape(format!("{} joint angles for a {j}-joint model", angles.joints.len())));
    }
    let [roll, pitch, yaw] = angles.orientation.map(f64::to_radians);
    let global = Rotation3::from_axis_angle(&Vector3::z_axis(), roll)
        * Rotation3::from_axis_angle(&Vector3::x_axis(), pitch)
        * Rotation3::from_axis_angle(&Vector3::y_axis(), yaw);
    let mut frames = vec![global; j];
    let mut joints = vec![angles.root; j];
    for i in 1..j {
        let p = model.parents[i].ok_or_else(|| Error::Config(format!("joint {i} has no parent")))?;
        let [flex, abd] = angles.joints[i].map(f64::to_radians);
        // Flexion curls towards the palm side (-z); abduction swings in the palm plane.
        let local = Rotation3::from_axis_angle(&Vector3::z_axis(), abd)
            * Rotation3::from_axis_angle(&Vector3::x_axis(), flex);
        frames[i] = frames[p] * local;
        let offset = frames[i] * (vec3(model.directions[i]) * model.lengths[i]);
        joints[i] = joints[p].add(point(offset));
    }
    Ok(Pose3D::new(joints))
}

/// Hand placement ranges used by [`sample_pose`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    /// Root depth range, mm.
    pub distance: [f64; 2],
    /// Root `x` and `y` are uniform in `[-lateral, lateral]` mm, scaled by depth / mean depth.
    pub lateral: f64,
}

/// Samples angles uniformly within `limits` and places the hand.
pub fn sample_pose(
    model: &HandModel,
    limits: &AngleLimits,
    placement: &Placement,
    rng: &mut dyn RngCore,
) -> Result<(HandAngles, Pose3D)> {
    limits.validate()?;
    let z = uniform(rng, placement.distance);
    let spread = placement.lateral * z / (0.5 * (placement.distance[0] + placement.distance[1]));
    let x = uniform(rng, [-spread, spread]);
    let y = uniform(rng, [-spread, spread]);
    let orientation = [uniform(rng, limits.roll), uniform(rng, limits.pitch), uniform(rng, limits.yaw)];
    let joints = model
        .kinds
        .iter()
        .map(|&kind| {
            let (f, a) = limits.joint(kind);
            [uniform(rng, f), uniform(rng, a)]
        })
        .collect();
    let angles = HandAngles { root: Point3::new(x, y, z), orientation, joints };
    let pose = forward_kinematics(model, &angles)?;
    Ok((angles, pose))
}
