//! Neural style transfer on height maps: a VGG-19 feature extractor, Gram-matrix
//! style statistics, content/style/TV losses and the descent loop.

mod linalg;
pub mod loss;
pub mod params;
mod tensor;
pub mod transfer;
pub mod vgg;
pub mod weights;

pub use linalg::Real;
pub use loss::{content_loss, gram, style_loss, tv_loss, FeatureActivations, GramMatrix};
pub use params::{InitMode, TransferParams};
pub use tensor::Tensor;
pub use transfer::{
    postprocess, preprocess, run_transfer, working_dims, LossBreakdown, Silent, TransferObjective,
    TransferObserver, TransferResult,
};
pub use vgg::{FeatureExtractor, VGG19};
pub use weights::{from_safetensors, load_weights, save_weights, to_safetensors, DEFAULT_WEIGHT_SEED, SEEDED_INPUT_GAIN};
