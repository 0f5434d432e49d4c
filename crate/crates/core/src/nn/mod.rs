//! Dense autoencoder: layers, model, training.

pub mod autoencoder;
pub mod layer;
pub mod train;

pub use autoencoder::{init_autoencoder, AutoencoderModel, EncoderSpec, InputScaling, Standardizer};
pub use layer::{Activation, DenseLayer, LayerGrad};
pub use train::{train_autoencoder, LossRecord, Momentum, SgdConfig, TrainOutput, TrainPhase};
