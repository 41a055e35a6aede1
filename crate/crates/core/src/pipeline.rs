//! End-to-end glue: prior fitting, network training, localization of a
//! whole dataset, and batched pose prediction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::augmentation::{mix_seed, AugmentStream, StreamItem, TargetKind};
use crate::datagen::{Dataset, RunConfig};
use crate::error::{Error, Result};
use crate::geometry::{denormalize_joints, extract_crop, normalize_joints, CameraIntrinsics, CropCube, DepthFrame, Point3, Pose3D};
use crate::localization::{locate_center_of_mass, refine_location, HandLocation, LocalizationMode};
use crate::nn::{build_refinenet, posenet_spec, train, EpochStats, Network, Scalar, Tensor, TrainHistory};
use crate::prior::{fit_pca, fit_robust_prior, PcaPrior};

const INFERENCE_BATCH: usize = 64;

fn cubes_at(centers: &[Point3], size: f64) -> Result<Vec<CropCube>> {
    centers.iter().map(|&c| CropCube::new(c, size)).collect()
}

fn references(ds: &Dataset) -> Vec<Point3> {
    ds.annotations.iter().map(Pose3D::reference).collect()
}

/// PCA prior over the training poses, normalized against cubes at their
/// reference joints. With `prior_augmentation` and a non-identity
/// augmentation, poses are augmented in 3D before fitting.
pub fn fit_prior(train: &Dataset, cfg: &RunConfig) -> Result<PcaPrior> {
    let cubes = cubes_at(&references(train), cfg.cube_size)?;
    let aug = cfg.augment_config();
    if cfg.prior_augmentation && !aug.is_identity() {
        let pairs: Vec<(Pose3D, CropCube)> = train.annotations.iter().cloned().zip(cubes).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0x9c1a, 0));
        fit_robust_prior(&pairs, &aug, cfg.prior_samples, cfg.prior_dim, &mut rng)
    } else {
        let poses: Vec<Vec<f64>> = train.annotations.iter().zip(&cubes).map(|(p, c)| normalize_joints(p, c)).collect();
        fit_pca(&poses, cfg.prior_dim)
    }
}

/// Untrained pose network with the prior installed in its last layer and a
/// zeroed coefficient layer.
pub fn init_posenet(cfg: &RunConfig, num_joints: usize, prior: &PcaPrior) -> Result<Network<f32>> {
    let spec = posenet_spec(cfg.architecture, cfg.scale, num_joints, cfg.prior_dim, cfg.freeze_prior);
    let mut net = Network::from_spec(spec, mix_seed(cfg.seed, 0x1417, 0))?;
    net.install_prior(prior)?;
    // Zero coefficients make the untrained output the prior mean.
    let pen = net.penultimate_dense().expect("pose network has a coefficient layer");
    net.zero_layer(pen);
    Ok(net)
}

pub struct TrainedPoseNet {
    pub net: Network<f32>,
    pub prior: PcaPrior,
    pub history: TrainHistory,
}

/// Fits the prior and trains the pose network on crops centred at the
/// annotated reference joint, with online augmentation from `cfg`.
pub fn train_posenet(train_set: &Dataset, cfg: &RunConfig, progress: &mut dyn FnMut(&EpochStats)) -> Result<TrainedPoseNet> {
    cfg.validate()?;
    train_set.validate()?;
    if train_set.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    let prior = fit_prior(train_set, cfg)?;
    let mut net = init_posenet(cfg, train_set.num_joints(), &prior)?;
    let cubes = cubes_at(&references(train_set), cfg.cube_size)?;
    let items = stream_items(train_set, &cubes);
    let stream = AugmentStream::new(items, cfg.augment_config(), cfg.scale.input_resolution(), TargetKind::Pose)?;
    let history = train(&mut net, &stream, &cfg.train_config(), progress)?;
    Ok(TrainedPoseNet { net, prior, history })
}

fn stream_items<'a>(ds: &'a Dataset, cubes: &[CropCube]) -> Vec<StreamItem<'a>> {
    ds.frames
        .iter()
        .zip(&ds.annotations)
        .zip(cubes)
        .map(|((frame, pose), &cube)| StreamItem { frame, pose, cube, intrinsics: ds.intrinsics })
        .collect()
}

/// Centres of mass of every frame.
pub fn centers_of_mass(ds: &Dataset, extent: f64) -> Result<Vec<Point3>> {
    ds.frames.iter().map(|f| locate_center_of_mass(f, &ds.intrinsics, extent).map(|l| l.point)).collect()
}

/// Trains the refiner on crops centred at each frame's centre of mass; the
/// target is the offset to the reference joint.
pub fn train_refiner(train_set: &Dataset, cfg: &RunConfig, progress: &mut dyn FnMut(&EpochStats)) -> Result<(Network<f32>, TrainHistory)> {
    cfg.validate()?;
    train_set.validate()?;
    let mut net = Network::from_spec(build_refinenet(cfg.scale), mix_seed(cfg.seed, 0x2ef1, 0))?;
    let cubes = cubes_at(&centers_of_mass(train_set, cfg.segment_extent)?, cfg.cube_size)?;
    let items = stream_items(train_set, &cubes);
    let stream = AugmentStream::new(items, cfg.augment_config(), cfg.scale.input_resolution(), TargetKind::ReferenceOffset)?;
    let history = train(&mut net, &stream, &cfg.train_config(), progress)?;
    Ok((net, history))
}

/// Crop centres for every frame of `ds` under `mode`.
pub fn localize_dataset<T: Scalar>(
    ds: &Dataset,
    mode: LocalizationMode,
    refiner: Option<&Network<T>>,
    cube_size: f64,
    extent: f64,
) -> Result<Vec<Point3>> {
    match mode {
        LocalizationMode::GroundTruth => Ok(references(ds)),
        LocalizationMode::CenterOfMass => centers_of_mass(ds, extent),
        LocalizationMode::Refined => {
            let net = refiner.ok_or_else(|| Error::Config("refined localization needs a refiner network".into()))?;
            ds.frames
                .iter()
                .map(|f| {
                    let com: HandLocation = locate_center_of_mass(f, &ds.intrinsics, extent)?;
                    refine_location(f, &ds.intrinsics, com, net, cube_size, 1).map(|l| l.point)
                })
                .collect()
        }
    }
}

/// Adds isotropic Gaussian noise (`std` mm per axis) to crop centres.
pub fn perturb_centers(centers: &[Point3], std: f64, seed: u64) -> Result<Vec<Point3>> {
    if std == 0.0 {
        return Ok(centers.to_vec());
    }
    let normal = Normal::new(0.0, std).map_err(|e| Error::Config(format!("center noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x401e, 0));
    Ok(centers
        .iter()
        .map(|c| c.add(Point3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng))))
        .collect())
}

/// Eval-mode pose predictions for crops centred at `centers`.
pub fn predict_poses<T: Scalar>(
    net: &Network<T>,
    frames: &[DepthFrame],
    centers: &[Point3],
    k: &CameraIntrinsics,
    cube_size: f64,
) -> Result<Vec<Pose3D>> {
    if frames.len() != centers.len() {
        return Err(Error::Shape(format!("{} frames but {} centres", frames.len(), centers.len())));
    }
    if net.output_dim() % 3 != 0 {
        return Err(Error::ArchitectureMismatch {
            expected: "output of 3J joint coordinates".into(),
            found: format!("{} outputs", net.output_dim()),
        });
    }
    let res = net.input_resolution();
    let cubes = cubes_at(centers, cube_size)?;
    let mut out = Vec::with_capacity(frames.len());
    let idx: Vec<usize> = (0..frames.len()).collect();
    for chunk in idx.chunks(INFERENCE_BATCH) {
        let mut x = Vec::with_capacity(chunk.len() * res * res);
        for &i in chunk {
            let patch = extract_crop(&frames[i], &cubes[i], k, res)?;
            x.extend(patch.values.iter().map(|&v| T::of(v as f64)));
        }
        let y = net.infer(&Tensor::from_vec(&[chunk.len(), 1, res, res], x)?)?;
        for (row, &i) in y.data().chunks_exact(net.output_dim()).zip(chunk) {
            let v: Vec<f64> = row.iter().map(|t| t.f64()).collect();
            out.push(denormalize_joints(&v, &cubes[i])?);
        }
    }
    Ok(out)
}

/// The mean training pose (relative to the reference joint) placed at each centre.
pub fn mean_pose_baseline(train_set: &Dataset, centers: &[Point3]) -> Vec<Pose3D> {
    let j = train_set.num_joints();
    let mut mean = vec![Point3::ORIGIN; j];
    for pose in &train_set.annotations {
        let r = pose.reference();
        for (m, p) in mean.iter_mut().zip(&pose.joints) {
            *m = m.add(p.sub(r));
        }
    }
    let n = train_set.len().max(1) as f64;
    let mean: Vec<Point3> = mean.into_iter().map(|m| m.scale(1.0 / n)).collect();
    centers.iter().map(|&c| Pose3D::new(mean.iter().map(|&m| c.add(m)).collect())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, SyntheticSceneConfig};

    fn data() -> Dataset {
        generate_dataset(40, 2, &SyntheticSceneConfig { seed: 8, ..Default::default() }).unwrap()
    }

    #[test]
    fn untrained_posenet_predicts_prior_mean_at_zeroed_penultimate() {
        let ds = data();
        let cfg = RunConfig { prior_augmentation: false, ..Default::default() };
        let prior = fit_prior(&ds, &cfg).unwrap();
        let mut net = init_posenet(&cfg, ds.num_joints(), &prior).unwrap();
        let pen = net.penultimate_dense().unwrap();
        net.zero_layer(pen);
        let centers = references(&ds);
        let preds = predict_poses(&net, &ds.frames[..3], &centers[..3], &ds.intrinsics, cfg.cube_size).unwrap();
        let cube = CropCube::new(centers[0], cfg.cube_size).unwrap();
        let expected = denormalize_joints(&prior.mean, &cube).unwrap();
        for (a, b) in preds[0].joints.iter().zip(&expected.joints) {
            assert!(a.distance(*b) < 1e-3);
        }
    }

    #[test]
    fn localization_modes() {
        let ds = data();
        let gt = localize_dataset::<f32>(&ds, LocalizationMode::GroundTruth, None, 300.0, 250.0).unwrap();
        assert_eq!(gt[0], ds.annotations[0].reference());
        let com = localize_dataset::<f32>(&ds, LocalizationMode::CenterOfMass, None, 300.0, 250.0).unwrap();
        assert!(com.iter().zip(&gt).all(|(a, b)| a.distance(*b) < 100.0));
        assert!(localize_dataset::<f32>(&ds, LocalizationMode::Refined, None, 300.0, 250.0).is_err());
    }

    #[test]
    fn center_noise_is_seeded() {
        let c = vec![Point3::new(0.0, 0.0, 500.0); 100];
        let a = perturb_centers(&c, 5.0, 1).unwrap();
        assert_eq!(a, perturb_centers(&c, 5.0, 1).unwrap());
        assert_ne!(a, perturb_centers(&c, 5.0, 2).unwrap());
        assert_eq!(perturb_centers(&c, 0.0, 1).unwrap(), c);
    }

    #[test]
    fn baseline_is_translation_of_mean() {
        let ds = data();
        let centers = references(&ds);
        let base = mean_pose_baseline(&ds, &centers);
        assert_eq!(base.len(), ds.len());
        assert!(base[0].reference().distance(centers[0]) < 1e-9);
    }
}
