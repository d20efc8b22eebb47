//! Desk-scale laboratory for stereo self-supervised depth losses.
//!
//! The crate renders small synthetic rectified-stereo scenes with exact
//! ground truth, implements the photometric reconstruction loss and the
//! flow-distillation loss with their masks, and drives a per-pixel Adam
//! optimizer with analytic gradients. Loss-landscape sweeps show where the
//! photometric loss picks up spurious local minima and why the distillation
//! loss does not; the ablation harness reproduces the corresponding metric
//! orderings at desk scale.
//!
//! Conventions fixed across the crate: target = left image, source = right
//! image, horizontal flow is negative, rasters are row-major f64, and every
//! experiment is a pure function of its explicit seeds.

pub mod camera;
pub mod error;
pub mod grad;
pub mod kv;
pub mod loss;
pub mod optim;
pub mod pfm;
pub mod pgm;
pub mod raster;
pub mod rng;
pub mod scene;
pub mod warp;

pub use camera::{CameraRig, DepthMap, FlowField};
pub use error::{Error, Result};
pub use loss::{Configs, DepthActivation, LossConfig, MaskConfig, ScaleSet};
pub use optim::{
    AdamConfig, DepthField, EvalReport, GradCheckSample, LandscapeCurve, LossKind,
};
pub use raster::{reduce_masked_mean, Raster};
pub use scene::{DepthBox, DepthModel, RenderedScene, SceneSpec, TextureModel};
pub use warp::{PaddingMode, WarpResult, FLOW_EPSILON};
