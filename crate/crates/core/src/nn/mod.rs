//! Minimal tensor and backpropagation engine with the layers the pose and
//! refinement networks need, plus ADAM training.

pub mod adam;
pub mod arch;
pub mod gradcheck;
pub mod layers;
pub mod network;
pub mod tensor;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use arch::{build_posenet, build_refinenet, posenet_spec, ArchPreset, NetScale, DEFAULT_PRIOR_DIM, DROPOUT_RATE};
pub use gradcheck::{gradient_check, GradCheckConfig, GradCheckReport};
pub use network::{ArchitectureSpec, LayerSpec, Mode, NetKind, Network};
pub use tensor::{Precision, Scalar, Tensor};
pub use train::{evaluate_loss, train, EpochStats, FixedSamples, Sample, SampleStream, TrainConfig, TrainHistory};
