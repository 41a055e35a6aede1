//! Average joint error and fraction-of-frames curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose3D;

/// Which per-frame statistic a curve thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Worst joint of the frame.
    AllJoints,
    /// Mean joint error of the frame.
    PerFrameAverage,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::AllJoints => "all_joints",
            Variant::PerFrameAverage => "per_frame_average",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "all_joints" => Ok(Variant::AllJoints),
            "per_frame_average" => Ok(Variant::PerFrameAverage),
            other => Err(Error::Format(format!("unknown curve variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCurve {
    pub variant: Variant,
    /// Strictly increasing, mm.
    pub thresholds: Vec<f64>,
    pub fractions: Vec<f64>,
}

/// Per-frame, per-joint Euclidean distances.
pub fn joint_errors(preds: &[Pose3D], gts: &[Pose3D]) -> Result<Vec<Vec<f64>>> {
    if preds.len() != gts.len() {
        return Err(Error::Dimension(format!("{} predictions for {} ground-truth frames", preds.len(), gts.len())));
    }
    if preds.is_empty() {
        return Err(Error::InsufficientData("no frames to evaluate".into()));
    }
    let j = gts[0].num_joints();
    preds
        .iter()
        .zip(gts)
        .enumerate()
        .map(|(i, (p, g))| {
            if p.num_joints() != j || g.num_joints() != j || j == 0 {
                return Err(Error::Dimension(format!(
                    "frame {i}: {} predicted and {} annotated joints, expected {j}",
                    p.num_joints(),
                    g.num_joints()
                )));
            }
            Ok(p.joints.iter().zip(&g.joints).map(|(a, b)| a.distance(*b)).collect())
        })
        .collect()
}

pub fn average_3d_error(preds: &[Pose3D], gts: &[Pose3D]) -> Result<f64> {
    let errs = joint_errors(preds, gts)?;
    let n: usize = errs.iter().map(Vec::len).sum();
    Ok(errs.iter().flatten().sum::<f64>() / n as f64)
}

pub fn per_joint_error(preds: &[Pose3D], gts: &[Pose3D]) -> Result<Vec<f64>> {
    Ok(per_joint_from(&joint_errors(preds, gts)?))
}

fn per_joint_from(errs: &[Vec<f64>]) -> Vec<f64> {
    let j = errs[0].len();
    let mut sums = vec![0.0; j];
    for frame in errs {
        for (s, e) in sums.iter_mut().zip(frame) {
            *s += e;
        }
    }
    sums.into_iter().map(|s| s / errs.len() as f64).collect()
}

fn frame_statistic(frame: &[f64], variant: Variant) -> f64 {
    match variant {
        Variant::AllJoints => frame.iter().copied().fold(0.0, f64::max),
        Variant::PerFrameAverage => frame.iter().sum::<f64>() / frame.len() as f64,
    }
}

pub fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(Error::Domain("threshold grid is empty".into()));
    }
    if thresholds.iter().any(|t| !t.is_finite()) || thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("thresholds must be finite and strictly increasing".into()));
    }
    Ok(())
}

fn curve_from(errs: &[Vec<f64>], thresholds: &[f64], variant: Variant) -> MetricCurve {
    let mut stats: Vec<f64> = errs.iter().map(|f| frame_statistic(f, variant)).collect();
    stats.sort_by(f64::total_cmp);
    let n = stats.len() as f64;
    let fractions = thresholds.iter().map(|&t| stats.partition_point(|&s| s <= t) as f64 / n).collect();
    MetricCurve { variant, thresholds: thresholds.to_vec(), fractions }
}

/// Fraction of frames whose statistic (worst or mean joint error) is at most each threshold.
pub fn fraction_curve(preds: &[Pose3D], gts: &[Pose3D], thresholds: &[f64], variant: Variant) -> Result<MetricCurve> {
    check_thresholds(thresholds)?;
    Ok(curve_from(&joint_errors(preds, gts)?, thresholds, variant))
}

/// Everything reported for one evaluated prediction set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fingerprint: String,
    pub frames: usize,
    pub average_error_mm: f64,
    pub per_joint_error_mm: Vec<f64>,
    pub all_joints: MetricCurve,
    pub per_frame_average: MetricCurve,
}

impl EvalReport {
    pub fn compute(preds: &[Pose3D], gts: &[Pose3D], thresholds: &[f64], fingerprint: &str) -> Result<Self> {
        check_thresholds(thresholds)?;
        let errs = joint_errors(preds, gts)?;
        let per_joint = per_joint_from(&errs);
        // Every frame has J joints, so the mean of per-joint means is the overall mean.
        let average = per_joint.iter().sum::<f64>() / per_joint.len() as f64;
        Ok(Self {
            fingerprint: fingerprint.to_string(),
            frames: preds.len(),
            average_error_mm: average,
            per_joint_error_mm: per_joint,
            all_joints: curve_from(&errs, thresholds, Variant::AllJoints),
            per_frame_average: curve_from(&errs, thresholds, Variant::PerFrameAverage),
        })
    }

    pub fn curves(&self) -> [&MetricCurve; 2] {
        [&self.all_joints, &self.per_frame_average]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use proptest::prelude::*;

    fn pose(pts: &[[f64; 3]]) -> Pose3D {
        Pose3D::new(pts.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect())
    }

    #[test]
    fn three_four_five() {
        let gt = [pose(&[[0.0, 0.0, 500.0]])];
        let pr = [pose(&[[3.0, 4.0, 500.0]])];
        assert!((average_3d_error(&pr, &gt).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(average_3d_error(&gt, &gt).unwrap(), 0.0);
    }

    #[test]
    fn jumps_at_worst_and_mean_joint_error() {
        // Errors 10, 2, 0, 4 → worst 10, mean 4.
        let gt = [pose(&[[0.0; 3], [0.0; 3], [0.0; 3], [0.0; 3]])];
        let pr = [pose(&[[10.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0; 3], [0.0, 0.0, 4.0]])];
        let t: Vec<f64> = (0..=20).map(f64::from).collect();
        let all = fraction_curve(&pr, &gt, &t, Variant::AllJoints).unwrap();
        let avg = fraction_curve(&pr, &gt, &t, Variant::PerFrameAverage).unwrap();
        for (i, &th) in t.iter().enumerate() {
            assert_eq!(all.fractions[i], if th >= 10.0 { 1.0 } else { 0.0 });
            assert_eq!(avg.fractions[i], if th >= 4.0 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn mismatches_and_bad_grids_fail() {
        let a = [pose(&[[0.0; 3]])];
        let b = [pose(&[[0.0; 3], [1.0; 3]])];
        assert!(average_3d_error(&a, &b).is_err());
        assert!(average_3d_error(&a, &[]).is_err());
        assert!(fraction_curve(&a, &a, &[1.0, 1.0], Variant::AllJoints).is_err());
        assert!(fraction_curve(&a, &a, &[], Variant::AllJoints).is_err());
    }

    fn poses(n: usize, j: usize) -> impl Strategy<Value = Vec<Pose3D>> {
        prop::collection::vec(prop::collection::vec(prop::array::uniform3(-100.0..100.0f64), j), n)
            .prop_map(|v| v.iter().map(|p| pose(p)).collect())
    }

    proptest! {
        #[test]
        fn per_joint_matches_brute_force(pr in poses(10, 5), gt in poses(10, 5)) {
            let pj = per_joint_error(&pr, &gt).unwrap();
            for j in 0..5 {
                let brute: f64 = (0..10).map(|f| {
                    let (a, b) = (pr[f].joints[j], gt[f].joints[j]);
                    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt()
                }).sum::<f64>() / 10.0;
                prop_assert!((pj[j] - brute).abs() < 1e-9);
            }
            let avg = average_3d_error(&pr, &gt).unwrap();
            prop_assert!((pj.iter().sum::<f64>() / 5.0 - avg).abs() < 1e-9);
        }

        #[test]
        fn symmetric_and_translation_invariant(pr in poses(6, 4), gt in poses(6, 4), o in prop::array::uniform3(-1e3..1e3f64)) {
            let a = average_3d_error(&pr, &gt).unwrap();
            prop_assert!((a - average_3d_error(&gt, &pr).unwrap()).abs() < 1e-12);
            let off = Point3::new(o[0], o[1], o[2]);
            let shift = |v: &[Pose3D]| v.iter().map(|p| Pose3D::new(p.joints.iter().map(|q| q.add(off)).collect())).collect::<Vec<_>>();
            prop_assert!((a - average_3d_error(&shift(&pr), &shift(&gt)).unwrap()).abs() < 1e-9);
        }
    }
}
