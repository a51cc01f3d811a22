use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::schema::{POLICY_ACTUATORS, REDUCED_STATE_DIM};
use crate::synth::Shot;

use super::ensemble::{mean_of_means, spread_of_means, DynamicsEnsemble, ModelPrediction};

/// Teacher-forced one-step statistics on held-out shots, in normalized state units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneStepReport {
    pub frames: usize,
    /// Mean over channels of the next-state explained variance (ensemble mean).
    pub explained_variance: f64,
    pub per_channel_ev: Vec<f64>,
    /// `1 - mse / persistence mse` per channel.
    pub per_channel_skill: Vec<f64>,
    pub mse_model: f64,
    pub mse_persistence: f64,
    /// Fraction of residuals within one predicted standard deviation.
    pub calibration: f64,
    pub ensemble_rmse: f64,
    pub member_rmse: Vec<f64>,
}

struct Frame {
    z: Vec<f64>,
    z_next: Vec<f64>,
    preds: Vec<ModelPrediction<()>>,
}

fn strip<T>(p: ModelPrediction<T>) -> ModelPrediction<()> {
    ModelPrediction {
        mean: p.mean,
        logvar: p.logvar,
        hidden: Array2::from_shape_vec((0, 0), Vec::new()).expect("empty"),
    }
}

/// Runs every member over each shot's flat-top, warming on the preceding frames.
fn collect<T: Scalar>(ens: &DynamicsEnsemble<T>, shots: &[&Shot]) -> Result<Vec<Frame>> {
    let warm = ens.train_config.warmup;
    let mut frames = Vec::new();
    for shot in shots {
        let z = ens
            .scaling
            .state
            .apply(ens.codec.encode_rows(shot.states.view())?.view())?;
        let (a, b) = shot.flat_top;
        if a < warm {
            return Err(Error::Data(format!("shot {} too short for warmup", shot.shot_id)));
        }
        let mut hs = vec![ens.zero_hidden(); ens.len()];
        for t in a - warm..a {
            let x = ens.input(z.row(t).as_slice().unwrap(), shot.actuators.row(t).as_slice().unwrap());
            for (i, h) in hs.iter_mut().enumerate() {
                *h = ens.advance(i, std::mem::take(h), &x)?;
            }
        }
        for t in a..b - 1 {
            let zt = z.row(t).to_vec();
            let x = ens.input(&zt, shot.actuators.row(t).as_slice().unwrap());
            let preds = ens.predict_all(&mut hs, &x)?.into_iter().map(strip).collect();
            frames.push(Frame {
                z: zt,
                z_next: z.row(t + 1).to_vec(),
                preds,
            });
        }
    }
    if frames.is_empty() {
        return Err(Error::Data("no held-out frames".into()));
    }
    Ok(frames)
}

pub fn one_step_report<T: Scalar>(ens: &DynamicsEnsemble<T>, shots: &[&Shot]) -> Result<OneStepReport> {
    let frames = collect(ens, shots)?;
    let d = REDUCED_STATE_DIM;
    let n = frames.len() as f64;
    let mut mean_next = vec![0.0; d];
    for f in &frames {
        for j in 0..d {
            mean_next[j] += f.z_next[j] / n;
        }
    }
    let mut sse = vec![0.0; d];
    let mut sst = vec![0.0; d];
    let mut persist = vec![0.0; d];
    let mut inside = 0usize;
    let mut member_sse = vec![0.0; ens.len()];
    for f in &frames {
        let mu = mean_of_means(&f.preds);
        let spread = spread_of_means(&f.preds);
        for j in 0..d {
            let delta = f.z_next[j] - f.z[j];
            let r = delta - mu[j];
            sse[j] += r * r;
            sst[j] += (f.z_next[j] - mean_next[j]).powi(2);
            persist[j] += delta * delta;
            let alea = f.preds.iter().map(|p| p.logvar[j].exp()).sum::<f64>() / f.preds.len() as f64;
            let sigma = (alea + spread[j] * spread[j]).sqrt();
            if r.abs() <= sigma {
                inside += 1;
            }
            for (i, p) in f.preds.iter().enumerate() {
                member_sse[i] += (delta - p.mean[j]).powi(2);
            }
        }
    }
    let per_channel_ev: Vec<f64> = (0..d)
        .map(|j| if sst[j] > 0.0 { 1.0 - sse[j] / sst[j] } else { 1.0 })
        .collect();
    let total = n * d as f64;
    Ok(OneStepReport {
        frames: frames.len(),
        explained_variance: per_channel_ev.iter().sum::<f64>() / d as f64,
        per_channel_ev,
        per_channel_skill: (0..d)
            .map(|j| if persist[j] > 0.0 { 1.0 - sse[j] / persist[j] } else { 0.0 })
            .collect(),
        mse_model: sse.iter().sum::<f64>() / total,
        mse_persistence: persist.iter().sum::<f64>() / total,
        calibration: inside as f64 / total,
        ensemble_rmse: (sse.iter().sum::<f64>() / total).sqrt(),
        member_rmse: member_sse.iter().map(|s| (s / total).sqrt()).collect(),
    })
}

/// Mean epistemic spread on real inputs and on inputs whose policy actuators
/// are set to `factor` times their training maximum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpistemicProbe {
    pub in_distribution: f64,
    pub out_of_distribution: f64,
}

impl EpistemicProbe {
    pub fn ratio(&self) -> f64 {
        self.out_of_distribution / self.in_distribution
    }
}

pub fn epistemic_probe<T: Scalar>(
    ens: &DynamicsEnsemble<T>,
    shots: &[&Shot],
    train_shots: &[&Shot],
    factor: f64,
) -> Result<EpistemicProbe> {
    if ens.len() < 2 {
        return Err(Error::Config("epistemic probe needs at least two members".into()));
    }
    let mut maxima = [f64::NEG_INFINITY; 4];
    for s in train_shots {
        let (a, b) = s.flat_top;
        for (k, &c) in POLICY_ACTUATORS.iter().enumerate() {
            for v in s.actuators.slice(s![a..b, c]) {
                maxima[k] = maxima[k].max(*v);
            }
        }
    }
    let warm = ens.train_config.warmup;
    let (mut sum_in, mut sum_out, mut count) = (0.0, 0.0, 0usize);
    for shot in shots {
        let z = ens
            .scaling
            .state
            .apply(ens.codec.encode_rows(shot.states.view())?.view())?;
        let (a, b) = shot.flat_top;
        let mut hs = vec![ens.zero_hidden(); ens.len()];
        for t in a - warm..b - 1 {
            let zt = z.row(t).to_vec();
            let act = shot.actuators.row(t).to_vec();
            let x = ens.input(&zt, &act);
            if t >= a {
                let mut ood = act.clone();
                for (k, &c) in POLICY_ACTUATORS.iter().enumerate() {
                    ood[c] = factor * maxima[k];
                }
                let xo = ens.input(&zt, &ood);
                let mut hi = hs.clone();
                let mut ho = hs.clone();
                let si = ens.epistemic_std(&mut hi, &x)?;
                let so = ens.epistemic_std(&mut ho, &xo)?;
                sum_in += si.iter().sum::<f64>() / si.len() as f64;
                sum_out += so.iter().sum::<f64>() / so.len() as f64;
                count += 1;
            }
            for (i, h) in hs.iter_mut().enumerate() {
                *h = ens.advance(i, std::mem::take(h), &x)?;
            }
        }
    }
    if count == 0 {
        return Err(Error::Data("no frames for epistemic probe".into()));
    }
    Ok(EpistemicProbe {
        in_distribution: sum_in / count as f64,
        out_of_distribution: sum_out / count as f64,
    })
}
