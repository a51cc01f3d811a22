use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{bootstrap_resample, member_seed, Blob, SplitSpec};
use crate::error::{check_dim, Error, Result};
use crate::nn::loss::clamp_logvar;
use crate::pca::StateCodec;
use crate::scalar::Scalar;
use crate::schema::{MODEL_INPUT_DIM, REDUCED_STATE_DIM};
use crate::synth::Shot;

use super::model::{Rpnn, RpnnConfig};
use super::train::{prepare_sequences, train_member, DynamicsScaling, TrainConfig, TrainLog};

pub const DYNAMICS_MANIFEST: &str = "dynamics.json";
const FORMAT: &str = "rotctl-dynamics 1";

/// Next-state distribution in normalized state units: `z' = z + Δ`, `Δ ~ N(mean, exp(logvar))`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelPrediction<T> {
    pub mean: Vec<f64>,
    pub logvar: Vec<f64>,
    pub hidden: Array2<T>,
}

impl<T> ModelPrediction<T> {
    pub fn sample<R: Rng + ?Sized>(&self, z: &[f64], rng: &mut R) -> Vec<f64> {
        z.iter()
            .zip(&self.mean)
            .zip(&self.logvar)
            .map(|((&zi, &m), &lv)| {
                let e: f64 = rng.sample(StandardNormal);
                zi + m + (0.5 * lv).exp() * e
            })
            .collect()
    }

    pub fn mean_next(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.mean).map(|(a, b)| a + b).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsEnsemble<T> {
    pub config: RpnnConfig,
    pub train_config: TrainConfig,
    pub members: Vec<Rpnn<T>>,
    pub member_seeds: Vec<u64>,
    pub bootstraps: Vec<Vec<u32>>,
    pub logs: Vec<TrainLog>,
    pub scaling: DynamicsScaling,
    pub codec: StateCodec,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    dtype: String,
    config: RpnnConfig,
    train_config: TrainConfig,
    member_seeds: Vec<u64>,
    bootstraps: Vec<Vec<u32>>,
    logs: Vec<TrainLog>,
    scaling: DynamicsScaling,
}

/// Bootstrapped ensemble trained on the split's training sessions; validation uses the global split.
pub fn train_ensemble<T: Scalar>(
    shots: &[Shot],
    split: &SplitSpec,
    codec: StateCodec,
    model_cfg: &RpnnConfig,
    train_cfg: &TrainConfig,
    n_members: usize,
    seed: u64,
) -> Result<DynamicsEnsemble<T>> {
    if n_members == 0 {
        return Err(Error::Config("ensemble needs at least one member".into()));
    }
    let train_shots = SplitSpec::select(&split.train, shots);
    let val_shots = SplitSpec::select(&split.val, shots);
    if train_shots.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    let scaling = DynamicsScaling::fit(&train_shots, &codec, train_cfg.warmup)?;
    let all: Vec<&Shot> = train_shots.iter().chain(val_shots.iter()).copied().collect();
    let seqs = prepare_sequences::<T>(&all, &codec, &scaling, train_cfg.warmup)?;
    let n_train = train_shots.len();
    let val_idx: Vec<usize> = (n_train..all.len()).collect();
    let train_ids: Vec<u32> = train_shots.iter().map(|s| s.shot_id).collect();

    let seeds: Vec<u64> = (0..n_members).map(|i| member_seed(seed, i)).collect();
    let bootstraps: Vec<Vec<u32>> = seeds.iter().map(|&s| bootstrap_resample(&train_ids, s)).collect();
    let results: Vec<Result<(Rpnn<T>, TrainLog)>> = (0..n_members)
        .into_par_iter()
        .map(|i| {
            let idx: Vec<usize> = bootstraps[i]
                .iter()
                .map(|id| train_ids.iter().position(|t| t == id).expect("bootstrap id from train set"))
                .collect();
            log::info!("training ensemble member {i} on {} sequences", idx.len());
            train_member(model_cfg, train_cfg, &seqs, &idx, &val_idx, seeds[i], Some(i)).map_err(|e| {
                Error::Member {
                    member: i,
                    source: Box::new(e),
                }
            })
        })
        .collect();
    let mut members = Vec::with_capacity(n_members);
    let mut logs = Vec::with_capacity(n_members);
    for r in results {
        let (m, l) = r?;
        members.push(m);
        logs.push(l);
    }
    Ok(DynamicsEnsemble {
        config: model_cfg.clone(),
        train_config: train_cfg.clone(),
        members,
        member_seeds: seeds,
        bootstraps,
        logs,
        scaling,
        codec,
    })
}

impl<T: Scalar> DynamicsEnsemble<T> {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn zero_hidden(&self) -> Array2<T> {
        Array2::zeros((1, self.config.gru_hidden))
    }

    /// Model input row from a normalized state and raw actuator values.
    pub fn input(&self, z: &[f64], actuators_raw: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; MODEL_INPUT_DIM];
        self.scaling.input_row(z, actuators_raw, &mut x);
        x
    }

    fn to_row(x: &[f64]) -> Result<Array2<T>> {
        check_dim("model input", MODEL_INPUT_DIM, x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model input"));
        }
        Ok(Array2::from_shape_fn((1, x.len()), |(_, j)| T::of(x[j])))
    }

    /// Advances a member's hidden state on a real frame without predicting.
    pub fn advance(&self, member: usize, hidden: Array2<T>, x: &[f64]) -> Result<Array2<T>> {
        self.members[member].advance(hidden, Self::to_row(x)?.view())
    }

    /// One member's next-state distribution for a normalized input row.
    pub fn predict_member(&self, member: usize, hidden: Array2<T>, x: &[f64]) -> Result<ModelPrediction<T>> {
        let m = self
            .members
            .get(member)
            .ok_or_else(|| Error::Config(format!("member {member} out of range")))?;
        let (mean, lv, hidden) = m.step(hidden, Self::to_row(x)?.view())?;
        let d = &self.scaling.delta_std;
        let mean: Vec<f64> = (0..REDUCED_STATE_DIM).map(|j| mean[(0, j)].f64() * d[j]).collect();
        let logvar: Vec<f64> = (0..REDUCED_STATE_DIM)
            .map(|j| clamp_logvar(lv[(0, j)].f64()) + 2.0 * d[j].ln())
            .collect();
        if mean.iter().chain(&logvar).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model prediction"));
        }
        Ok(ModelPrediction { mean, logvar, hidden })
    }

    /// Steps every member in lockstep; `hiddens[i]` is replaced by its successor.
    pub fn predict_all(&self, hiddens: &mut [Array2<T>], x: &[f64]) -> Result<Vec<ModelPrediction<T>>> {
        if self.members.is_empty() {
            return Err(Error::Config("empty ensemble".into()));
        }
        check_dim("ensemble hidden states", self.members.len(), hiddens.len())?;
        let mut out = Vec::with_capacity(self.members.len());
        for (i, h) in hiddens.iter_mut().enumerate() {
            let p = self.predict_member(i, std::mem::take(h), x)?;
            *h = p.hidden.clone();
            out.push(p);
        }
        Ok(out)
    }

    /// Arithmetic mean of the member means.
    pub fn predict_ensemble_mean(&self, hiddens: &mut [Array2<T>], x: &[f64]) -> Result<Vec<f64>> {
        Ok(mean_of_means(&self.predict_all(hiddens, x)?))
    }

    /// Population standard deviation of member means, per dimension.
    pub fn epistemic_std(&self, hiddens: &mut [Array2<T>], x: &[f64]) -> Result<Vec<f64>> {
        if self.members.len() < 2 {
            return Err(Error::Config("epistemic spread needs at least two members".into()));
        }
        Ok(spread_of_means(&self.predict_all(hiddens, x)?))
    }

    /// Batched mean predictions of every member on `x` (rows of normalized inputs).
    pub fn member_means_batch(&self, hiddens: &[Array2<T>], x: ArrayView2<T>) -> Result<Vec<Array2<T>>> {
        self.members
            .iter()
            .zip(hiddens)
            .map(|(m, h)| m.step(h.clone(), x).map(|(mean, _, _)| mean))
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = Manifest {
            format: FORMAT.into(),
            dtype: T::dtype().into(),
            config: self.config.clone(),
            train_config: self.train_config.clone(),
            member_seeds: self.member_seeds.clone(),
            bootstraps: self.bootstraps.clone(),
            logs: self.logs.clone(),
            scaling: self.scaling.clone(),
        };
        let path = dir.join(DYNAMICS_MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Json {
            path: path.clone(),
            source: e,
        })?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.codec.to_blob().write(&dir.join("pca.blob"))?;
        for (i, m) in self.members.iter().enumerate() {
            Blob::new("rpnn-member", m.params.values())
                .with("member", i)
                .with("params", m.param_count())
                .write(&dir.join(format!("member_{i:02}.blob")))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(DYNAMICS_MANIFEST);
        if !path.exists() {
            return Err(Error::Missing(path));
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.clone(),
            source: e,
        })?;
        if manifest.format != FORMAT {
            return Err(Error::schema(&path, format!("unsupported format `{}`", manifest.format)));
        }
        let pca_path = dir.join("pca.blob");
        let codec = StateCodec::from_blob(&Blob::read_kind(&pca_path, "pca")?, &pca_path)?;
        let mut members = Vec::new();
        for i in 0..manifest.member_seeds.len() {
            let p = dir.join(format!("member_{i:02}.blob"));
            let blob = Blob::read_kind(&p, "rpnn-member")?;
            let mut m = Rpnn::<T>::new(&manifest.config, 0)?;
            if blob.data.len() != m.param_count() {
                return Err(Error::schema(&p, format!("{} values, model needs {}", blob.data.len(), m.param_count())));
            }
            m.params.load(&blob.values::<T>())?;
            members.push(m);
        }
        Ok(DynamicsEnsemble {
            config: manifest.config,
            train_config: manifest.train_config,
            members,
            member_seeds: manifest.member_seeds,
            bootstraps: manifest.bootstraps,
            logs: manifest.logs,
            scaling: manifest.scaling,
            codec,
        })
    }
}

pub fn mean_of_means<T>(preds: &[ModelPrediction<T>]) -> Vec<f64> {
    let n = preds.len() as f64;
    (0..REDUCED_STATE_DIM)
        .map(|j| preds.iter().map(|p| p.mean[j]).sum::<f64>() / n)
        .collect()
}

pub fn spread_of_means<T>(preds: &[ModelPrediction<T>]) -> Vec<f64> {
    let n = preds.len() as f64;
    let mu = mean_of_means(preds);
    (0..REDUCED_STATE_DIM)
        .map(|j| (preds.iter().map(|p| (p.mean[j] - mu[j]).powi(2)).sum::<f64>() / n).sqrt())
        .collect()
}
