//! Dense numeric kernel: matrices, MLPs with exact backprop, Adam, seeded
//! randomness and finite-difference gradient checks.

pub mod gradcheck;
mod matrix;
mod net;
mod optim;
mod rng;

pub use matrix::Matrix;
pub use net::{sigmoid, Activation, DenseLayer, DenseNet, ForwardCache, NetGrads};
pub use optim::{AdamConfig, OptimState};
pub use rng::SeededRng;
