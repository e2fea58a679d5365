//! A small fully equivariant point-set detector.
//!
//! * Backbone: lifting convolution (stride 2) and a strided group
//!   convolution, each input padded to odd size, giving a stride-4 grid.
//! * Localisation: three group convolutions produce `K` vector fields, the
//!   initial point set. A rotation-equivariant deformable convolution
//!   sampled at those points yields a second set of vector fields that is
//!   added as a refinement.
//! * Classification: three group convolutions, then a rotation-invariant
//!   deformable convolution aligned by `point₀ − hull centroid` of the
//!   refined set, then a 1×1 class head.
//!
//! Losses: focal classification, `1 − GIoU` between the refined point-set
//! hull and the ground-truth box, and the edge constraint on point 0.

mod checkpoint;
mod config;
mod decode;
mod loss;
mod model;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, MODEL_FILE, PARAMS_FILE};
pub use config::{load_config, parse_config, Ablation, DetectorConfig, FEATURE_STRIDE};
pub use decode::{decode_detections, rank_score, tie_key, Detection};
pub use loss::{assign_targets, focal_loss, focal_term, total_loss, CellTarget, GtObject, LossBreakdown};
pub use model::{point_template, points_in_pixels, reference_field, Detector, ForwardOutput, Prediction, MIN_IMAGE_SIDE};
pub use params::{init_params, ModelSummary, Param, ParamInfo, ParamStore, Role};
