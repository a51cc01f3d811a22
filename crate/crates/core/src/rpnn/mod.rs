//! Recurrent probabilistic dynamics model, its trainer and the bootstrapped ensemble.

pub mod ensemble;
pub mod metrics;
pub mod model;
pub mod train;

pub use ensemble::{train_ensemble, DynamicsEnsemble, ModelPrediction, DYNAMICS_MANIFEST};
pub use metrics::{epistemic_probe, one_step_report, EpistemicProbe, OneStepReport};
pub use model::{Rpnn, RpnnConfig, SeqOutput};
pub use train::{prepare_sequences, train_member, DynamicsScaling, EpochLog, ShotSequence, TrainConfig, TrainLog};
