//! Tensors with reverse-mode differentiation, small MLPs, Adam and seeded
//! random streams.

pub mod adam;
pub mod mlp;
pub mod rng;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use mlp::{mlp_forward, BoundMlp, Dense, Mlp, MAX_HIDDEN_LAYERS};
pub use rng::{sample_poisson, RngStream};
pub use tensor::{log_mean_exp, Activation, Tape, Tensor, Var};
