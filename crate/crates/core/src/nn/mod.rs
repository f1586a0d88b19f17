//! Layers, losses, optimiser, model builders and checkpoints.

pub mod checkpoint;
pub mod conv;
pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use conv::{conv2d, conv2d_backward, ConvGrads};
pub use loss::{mse, softmax_cross_entropy};
pub use model::{
    build_model, copy_weights, extract_features, Architecture, Conv, ForwardCtx, Layer, Model, ModelConfig,
    PadLayer, Param,
};
pub use optim::Sgd;
