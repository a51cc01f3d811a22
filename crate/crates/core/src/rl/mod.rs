//! Policy learning: PPO in the learned-model environment, plus GCIL and TD3+BC
//! offline baselines.

pub mod gae;
pub mod offline;
pub mod policy;
pub mod ppo;
pub mod toy;

pub use gae::{gae, gae_segments};
pub use offline::{bc_fit, build_offline, gcil_train, td3bc_train, BcConfig, OfflineBatch, RelabelConfig, Td3BcConfig};
pub use policy::{Controller, Deterministic, Policy, PolicyConfig, RandomController};
pub use ppo::{ppo_train, PpoConfig, PpoLog};
