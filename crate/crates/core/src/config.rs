//! Pipeline configuration: one TOML document with a section per stage.
//!
//! Every key has a default, so an empty file is a valid configuration. Unknown
//! keys are rejected with their dotted path.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::TestDynamics;
use crate::error::{Error, Result};
use crate::eval::ExperimentConfig;
use crate::rl::{BcConfig, PolicyConfig, PpoConfig, Td3BcConfig};
use crate::rpnn::{RpnnConfig, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub n_sessions: usize,
    pub shots_per_session: usize,
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            n_sessions: 60,
            shots_per_session: 5,
            val_fraction: 0.1,
            test_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaConfig {
    /// Fit on flat-top frames only, or on whole shots.
    pub flat_top_only: bool,
}

impl Default for PcaConfig {
    fn default() -> Self {
        PcaConfig { flat_top_only: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    /// `desk` or `full`.
    pub preset: String,
    pub members: usize,
    pub train: TrainConfig,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            preset: "desk".into(),
            members: 5,
            train: TrainConfig {
                lr: 1e-3,
                max_epochs: 30,
                patience: 6,
                stage2_lr: 3e-3,
                stage2_max_epochs: 200,
                stage2_patience: 20,
                bptt_window: 50,
                ..TrainConfig::default()
            },
        }
    }
}

impl DynamicsConfig {
    pub fn model(&self) -> Result<RpnnConfig> {
        RpnnConfig::preset(&self.preset)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub obs_noise: f64,
    pub lookahead: usize,
    pub warmup: usize,
    /// Episode length in steps; 0 uses the reference shot's flat-top length.
    pub horizon: usize,
    /// Test-mode dynamics for the benchmark.
    pub benchmark_dynamics: TestDynamics,
    /// Test-mode dynamics for the simulated experiments.
    pub experiment_dynamics: TestDynamics,
}

impl Default for EnvSection {
    fn default() -> Self {
        EnvSection {
            obs_noise: 0.1,
            lookahead: 10,
            warmup: 10,
            horizon: 0,
            benchmark_dynamics: TestDynamics::Mean,
            experiment_dynamics: TestDynamics::SampledMean,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub actor: PolicyConfig,
    pub ppo: PpoConfig,
    pub gcil: BcConfig,
    pub td3bc: Td3BcConfig,
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection {
            actor: PolicyConfig::desk(),
            ppo: PpoConfig {
                total_steps: 300_000,
                reward_scale: 0.01,
                critic_hidden: vec![64, 64],
                ..PpoConfig::default()
            },
            gcil: BcConfig {
                epochs: 100,
                ..BcConfig::default()
            },
            td3bc: Td3BcConfig {
                steps: 3000,
                reward_scale: 0.01,
                critic_hidden: vec![64, 64],
                ..Td3BcConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub n_seeds: usize,
    /// Seeds per validation shot when selecting PPO checkpoints.
    pub val_seeds: usize,
    pub algorithms: Vec<String>,
    /// Controllers run through the simulated experiments; `untrained` is the
    /// freshly initialized actor.
    pub experiment_controllers: Vec<String>,
    pub shotset: String,
    /// `YYYYMMDD` for report file names; empty uses the current date.
    pub date: String,
    pub experiment: ExperimentConfig,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            n_seeds: 10,
            val_seeds: 1,
            algorithms: vec!["ppo".into(), "gcil".into(), "td3bc".into(), "random".into()],
            experiment_controllers: vec!["untrained".into(), "ppo".into()],
            shotset: "heldout".into(),
            date: String::new(),
            experiment: ExperimentConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportSection {
    /// Policy to export.
    pub algorithm: String,
    pub parity_observations: usize,
    pub parity_seed: u64,
    pub cases: usize,
}

impl Default for ExportSection {
    fn default() -> Self {
        ExportSection {
            algorithm: "ppo".into(),
            parity_observations: 1000,
            parity_seed: 0,
            cases: 1000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub corpus: CorpusConfig,
    pub pca: PcaConfig,
    pub dynamics: DynamicsConfig,
    pub env: EnvSection,
    pub policy: PolicySection,
    pub eval: EvalSection,
    pub export: ExportSection,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let doc: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("invalid config: {}", e.message())))?;
        let reference = toml::Table::try_from(PipelineConfig::default()).expect("defaults serialize");
        if let Some(key) = unknown_key(&doc, &reference, "") {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        let cfg: Self = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("invalid config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Missing(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.dynamics.model()?;
        self.dynamics.train.validate()?;
        self.policy.ppo.validate()?;
        if self.dynamics.members == 0 {
            return Err(Error::Config("dynamics.members must be at least 1".into()));
        }
        for a in &self.eval.algorithms {
            if !ALGORITHMS.contains(&a.as_str()) {
                return Err(Error::Config(format!("unknown algorithm `{a}` in eval.algorithms")));
            }
        }
        for c in &self.eval.experiment_controllers {
            if c != "untrained" && !ALGORITHMS.contains(&c.as_str()) {
                return Err(Error::Config(format!("unknown controller `{c}` in eval.experiment_controllers")));
            }
        }
        if !ALGORITHMS[..3].contains(&self.export.algorithm.as_str()) {
            return Err(Error::Config(format!("cannot export `{}`", self.export.algorithm)));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        hash_json(self)
    }
}

pub const ALGORITHMS: [&str; 4] = ["ppo", "gcil", "td3bc", "random"];

/// SHA-256 hex digest of a value's JSON serialization.
pub fn hash_json<S: Serialize>(value: &S) -> String {
    let bytes = serde_json::to_vec(value).expect("value serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// First key of `doc` (depth first, dotted) that `reference` does not have.
fn unknown_key(doc: &toml::Table, reference: &toml::Table, prefix: &str) -> Option<String> {
    for (k, v) in doc {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (v, reference.get(k)) {
            (_, None) => return Some(path),
            (toml::Value::Table(sub), Some(toml::Value::Table(rsub))) => {
                if let Some(p) = unknown_key(sub, rsub, &path) {
                    return Some(p);
                }
            }
            _ => {}
        }
    }
    None
}
