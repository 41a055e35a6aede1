//! Synthetic articulated-hand data, the dataset and model file formats, and
//! run configuration.

mod binio;
pub mod config;
pub mod dataset;
pub mod hand;
pub mod model_io;
pub mod render;

pub use config::{EvalGrid, RunConfig};
pub use dataset::{
    annotation_path, decode_dataset, encode_dataset, generate_dataset, load_dataset, save_dataset, Dataset,
    DATASET_HEADER_BYTES, DATASET_MAGIC, DATASET_VERSION,
};
pub use hand::{
    forward_kinematics, sample_pose, AngleLimits, HandAngles, HandModel, JointKind, Placement, JOINT_NAMES,
    NUM_JOINTS,
};
pub use model_io::{decode_model, encode_model, load_model, save_model, ModelFile, ModelMeta, MODEL_MAGIC, MODEL_VERSION};
pub use render::{hand_primitives, pixel_ray, render_depth, render_primitives, Primitive, SyntheticSceneConfig};
