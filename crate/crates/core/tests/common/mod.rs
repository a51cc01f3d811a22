use std::sync::OnceLock;

use ndarray::Axis;
use rotctl::dataset::split_corpus;
use rotctl::env::ActionLimits;
use rotctl::pca::StateCodec;
use rotctl::rpnn::{train_ensemble, DynamicsEnsemble, RpnnConfig, TrainConfig};
use rotctl::schema::{MODEL_INPUT_DIM, REDUCED_STATE_DIM};
use rotctl::synth::{generate_sessions, Shot};

/// Four two-shot sessions and a barely trained five-member ensemble.
pub struct Fixture {
    pub shots: Vec<Shot>,
    pub ens: DynamicsEnsemble<f64>,
    pub limits: ActionLimits,
}

pub fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let shots: Vec<Shot> = generate_sessions(4, 2, 21).unwrap().into_iter().flat_map(|s| s.shots).collect();
        let split = split_corpus(&shots, 0.25, 0.25, 1).unwrap();
        let raw: Vec<_> = shots.iter().map(|s| s.states.view()).collect();
        let codec = StateCodec::fit(ndarray::concatenate(Axis(0), &raw).unwrap().view()).unwrap();
        let model = RpnnConfig {
            input_dim: MODEL_INPUT_DIM,
            output_dim: REDUCED_STATE_DIM,
            encoder: vec![32],
            gru_hidden: 16,
            decoder_width: 32,
            residual_blocks: 1,
            head_width: 32,
        };
        let train = TrainConfig {
            max_epochs: 3,
            patience: 3,
            stage2_max_epochs: 3,
            stage2_patience: 3,
            ..Default::default()
        };
        let ens = train_ensemble(&shots, &split, codec, &model, &train, 5, 8).unwrap();
        let refs: Vec<&Shot> = shots.iter().collect();
        let limits = ActionLimits::from_shots(&refs).unwrap();
        Fixture { shots, ens, limits }
    })
}

