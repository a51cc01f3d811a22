pub mod config;
pub mod dataset;
pub mod env;
pub mod error;
pub mod eval;
pub mod export;
pub mod nn;
pub mod pca;
pub mod pipeline;
pub mod rpnn;
pub mod rl;
pub mod scalar;
pub mod schema;
pub mod seeding;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Ensemble32 = rpnn::DynamicsEnsemble<f32>;
pub type Ensemble64 = rpnn::DynamicsEnsemble<f64>;
pub type Rpnn32 = rpnn::Rpnn<f32>;
pub type Rpnn64 = rpnn::Rpnn<f64>;
pub type Mlp32 = nn::Mlp<f32>;
pub type Mlp64 = nn::Mlp<f64>;
