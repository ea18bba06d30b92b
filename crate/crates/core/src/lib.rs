//! Fully binary neural networks trained by binary error propagation.
//!
//! Activations and visible weights are ±1 values packed one bit per entry;
//! forward passes, target back-projection and weight updates use XNOR,
//! popcount, comparisons and integer increments. Hidden weights are
//! bounded integers whose signs are the visible weights.

pub mod bep;
pub mod beptt;
pub mod bits;
pub mod checkpoint;
pub mod data;
pub mod encode;
pub mod error;
pub mod frames;
pub mod layer;
pub mod oracle;
pub mod run;
pub mod scalar;
pub mod train;

pub use bep::{Hyperparams, Network};
pub use beptt::{RnnDims, RnnModel};
pub use bits::{BitVector, GateVector, IntVector, PackedBitMatrix};
pub use checkpoint::{Checkpoint, Model, ModelKind};
pub use data::{BinaryDataset, Dataset};
pub use error::{Error, Result};
pub use frames::PrototypeFrame;
pub use layer::Layer;
pub use train::{evaluate, train_epoch, TrainState, Trainable};

/// Feedforward network with 16-bit hidden weights.
pub type Mlp = Network<i16>;
/// Feedforward network with 32-bit hidden weights.
pub type Mlp32 = Network<i32>;
/// Recurrent network with 16-bit hidden weights.
pub type Rnn = RnnModel<i16>;
pub type Rnn32 = RnnModel<i32>;
pub type Thermometer = encode::ThermometerCodec<f32>;
pub type Encoder = encode::InputEncoder<f32>;
