//! Small differentiable substrate: dense/residual/GRU layers, losses, Adam.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod mlp;
pub mod params;

pub use adam::{AdamConfig, AdamState};
pub use layers::{dense_forward, gru_step, Activation, Dense, Gru, LayerKind, LayerSpec};
pub use loss::{clip_grad_norm, gaussian_nll, mse_rows, nll_rows, LOGVAR_MAX, LOGVAR_MIN};
pub use mlp::Mlp;
pub use params::{ParamSet, Slot, TrainableSelector};
