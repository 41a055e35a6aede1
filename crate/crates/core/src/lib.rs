//! Depth-image 3D hand pose estimation with a PCA pose prior.
//!
//! Pipeline: [`localization`] finds the hand, [`geometry`] crops and
//! normalizes a cube around it, a network from [`nn`] regresses the pose
//! through a final layer initialized from [`prior`], and [`evaluation`]
//! scores the predictions. [`augmentation`] drives online training-data
//! augmentation; [`datagen`] renders a synthetic articulated hand for
//! ground truth and owns the on-disk formats.

pub mod augmentation;
pub mod cli;
pub mod datagen;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod localization;
pub mod nn;
pub mod pipeline;
pub mod prior;

pub use error::{Error, Result};
