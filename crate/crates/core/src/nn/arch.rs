//! Architecture presets for the pose regressor and the localization refiner.

use serde::{Deserialize, Serialize};

use super::network::{ArchitectureSpec, LayerSpec, NetKind};

/// Network size preset. `Full` follows the published layer widths with
/// 128px input; `Desk` keeps the topology at a quarter of the width and 64px input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum NetScale {
    Full,
    Desk,
}

impl NetScale {
    pub fn input_resolution(self) -> usize {
        match self {
            NetScale::Full => 128,
            NetScale::Desk => 64,
        }
    }

    fn fc_width(self) -> usize {
        match self {
            NetScale::Full => 1024,
            NetScale::Desk => 256,
        }
    }
}

/// Pose-network families compared in the architecture ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ArchPreset {
    /// Three conv/pool stages and two fully-connected layers.
    Original,
    /// `Original` with the residual network's filter counts.
    OriginalMoreFilters,
    ResNet,
}

impl ArchPreset {
    pub fn label(self) -> &'static str {
        match self {
            ArchPreset::Original => "Original",
            ArchPreset::OriginalMoreFilters => "Original with more filters",
            ArchPreset::ResNet => "ResNet",
        }
    }
}

pub const DROPOUT_RATE: f64 = 0.3;
/// Prior dimension used throughout the experiments.
pub const DEFAULT_PRIOR_DIM: usize = 30;

fn fc_head(layers: &mut Vec<LayerSpec>, width: usize) {
    for _ in 0..2 {
        layers.push(LayerSpec::FullyConnected { units: width });
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::Dropout { rate: DROPOUT_RATE });
    }
}

/// Pose regressor ending in `FC(prior_dim)` followed by the prior layer (`3J` outputs).
pub fn posenet_spec(
    preset: ArchPreset,
    scale: NetScale,
    num_joints: usize,
    prior_dim: usize,
    freeze_prior: bool,
) -> ArchitectureSpec {
    let res = scale.input_resolution();
    let stage_filters: [usize; 4] = match scale {
        NetScale::Full => [64, 128, 256, 256],
        NetScale::Desk => [16, 32, 64, 64],
    };
    let stem = stage_filters[0];
    let mut layers = Vec::new();
    match preset {
        ArchPreset::ResNet => {
            layers.push(LayerSpec::Conv { filters: stem, size: 5, stride: 1, padding: 2 });
            layers.push(LayerSpec::Relu);
            layers.push(LayerSpec::MaxPool { size: 2 });
            for f in stage_filters {
                let mid = match scale {
                    NetScale::Full => f / 4,
                    NetScale::Desk => f / 2,
                };
                layers.push(LayerSpec::Residual { filters: f, stride: 2, bottleneck: Some(mid) });
                layers.push(LayerSpec::Relu);
            }
        }
        ArchPreset::Original | ArchPreset::OriginalMoreFilters => {
            let filters = if preset == ArchPreset::Original {
                [8, 8, 8]
            } else {
                [stage_filters[0], stage_filters[1], stage_filters[2]]
            };
            layers.push(LayerSpec::Conv { filters: filters[0], size: 5, stride: 1, padding: 2 });
            layers.push(LayerSpec::Relu);
            layers.push(LayerSpec::MaxPool { size: 4 });
            layers.push(LayerSpec::Conv { filters: filters[1], size: 5, stride: 1, padding: 2 });
            layers.push(LayerSpec::Relu);
            layers.push(LayerSpec::MaxPool { size: 2 });
            layers.push(LayerSpec::Conv { filters: filters[2], size: 3, stride: 1, padding: 1 });
            layers.push(LayerSpec::Relu);
        }
    }
    fc_head(&mut layers, scale.fc_width());
    layers.push(LayerSpec::FullyConnected { units: prior_dim });
    layers.push(LayerSpec::PriorLayer { units: 3 * num_joints, frozen: freeze_prior });
    ArchitectureSpec { kind: NetKind::PoseNet, input: [1, res, res], layers }
}

/// Residual pose network with a trainable prior layer.
pub fn build_posenet(scale: NetScale, num_joints: usize, prior_dim: usize) -> ArchitectureSpec {
    posenet_spec(ArchPreset::ResNet, scale, num_joints, prior_dim, false)
}

/// Localization refiner: three conv+pool stages, two FC+dropout layers, and a
/// 3-unit output (normalized offset of the reference joint).
pub fn build_refinenet(scale: NetScale) -> ArchitectureSpec {
    let res = scale.input_resolution();
    let filters: [usize; 3] = match scale {
        NetScale::Full => [32, 64, 64],
        NetScale::Desk => [8, 16, 16],
    };
    let sizes = [5, 3, 3];
    let mut layers = Vec::new();
    for (f, s) in filters.into_iter().zip(sizes) {
        layers.push(LayerSpec::Conv { filters: f, size: s, stride: 1, padding: s / 2 });
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::MaxPool { size: 2 });
    }
    fc_head(&mut layers, scale.fc_width());
    layers.push(LayerSpec::FullyConnected { units: 3 });
    ArchitectureSpec { kind: NetKind::RefineNet, input: [1, res, res], layers }
}
