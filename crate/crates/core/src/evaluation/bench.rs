//! Throughput of the track→predict loop.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DepthFrame};
use crate::localization::Tracker;
use crate::nn::{Network, Scalar};
use crate::pipeline::predict_poses;

pub const FPS_RUNS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpsReport {
    /// Frames timed per run.
    pub frames: usize,
    pub runs: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over runs.
    pub std: f64,
}

impl FpsReport {
    pub fn relative_spread(&self) -> f64 {
        self.std / self.mean
    }
}

/// Runs the per-frame loop (tracker step, then pose prediction) `runs`
/// times. Each run resets the tracker, processes the first `warmup` frames
/// untimed and times the rest.
#[allow(clippy::too_many_arguments)]
pub fn fps_benchmark<T: Scalar>(
    posenet: &Network<T>,
    refiner: &Network<T>,
    frames: &[DepthFrame],
    k: &CameraIntrinsics,
    cube_size: f64,
    extent: f64,
    warmup: usize,
    runs: usize,
) -> Result<FpsReport> {
    if frames.len() <= warmup {
        return Err(Error::InsufficientData(format!("{} frames leave none to time after {warmup} warmup frames", frames.len())));
    }
    if runs == 0 {
        return Err(Error::Config("benchmark needs at least one run".into()));
    }
    let mut tracker = Tracker::new(cube_size, extent);
    let step = |f: &DepthFrame, tracker: &mut Tracker| -> Result<()> {
        let loc = tracker.step(f, k, refiner)?;
        predict_poses(posenet, std::slice::from_ref(f), &[loc.point], k, cube_size)?;
        Ok(())
    };
    let mut fps = Vec::with_capacity(runs);
    for _ in 0..runs {
        tracker.reset();
        for f in &frames[..warmup] {
            step(f, &mut tracker)?;
        }
        let start = Instant::now();
        for f in &frames[warmup..] {
            step(f, &mut tracker)?;
        }
        fps.push((frames.len() - warmup) as f64 / start.elapsed().as_secs_f64());
    }
    let mean = fps.iter().sum::<f64>() / runs as f64;
    let var = if runs > 1 { fps.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (runs - 1) as f64 } else { 0.0 };
    Ok(FpsReport { frames: frames.len() - warmup, runs: fps, mean, std: var.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, SyntheticSceneConfig};
    use crate::nn::{build_posenet, build_refinenet, ArchitectureSpec, LayerSpec, NetKind, NetScale};

    #[test]
    fn no_frames_after_warmup_is_an_error() {
        let ds = generate_dataset(3, 1, &SyntheticSceneConfig::default()).unwrap();
        let p = Network::<f32>::from_spec(build_posenet(NetScale::Desk, 14, 30), 0).unwrap();
        let mut r = Network::<f32>::from_spec(build_refinenet(NetScale::Desk), 0).unwrap();
        let last = r.layers().len() - 1;
        r.zero_layer(last);
        assert!(fps_benchmark(&p, &r, &ds.frames, &ds.intrinsics, 300.0, 250.0, 3, 5).is_err());
        let ok = fps_benchmark(&p, &r, &ds.frames, &ds.intrinsics, 300.0, 250.0, 1, 2).unwrap();
        assert_eq!((ok.frames, ok.runs.len()), (2, 2));
    }

    fn conv_net(kind: NetKind, res: usize, outputs: usize) -> ArchitectureSpec {
        ArchitectureSpec {
            kind,
            input: [1, res, res],
            layers: vec![
                LayerSpec::Conv { filters: 8, size: 5, stride: 1, padding: 2 },
                LayerSpec::Relu,
                LayerSpec::MaxPool { size: 4 },
                LayerSpec::FullyConnected { units: outputs },
            ],
        }
    }

    #[test]
    fn doubling_resolution_lowers_throughput() {
        let ds = generate_dataset(12, 1, &SyntheticSceneConfig::default()).unwrap();
        let run = |res: usize| {
            let p = Network::<f32>::from_spec(conv_net(NetKind::PoseNet, res, 42), 0).unwrap();
            let mut r = Network::<f32>::from_spec(conv_net(NetKind::RefineNet, res, 3), 0).unwrap();
            // Zero offsets keep the tracker on the hand.
            r.zero_layer(3);
            fps_benchmark(&p, &r, &ds.frames, &ds.intrinsics, 300.0, 250.0, 2, 3).unwrap().mean
        };
        assert!(run(128) < run(64));
    }
}
