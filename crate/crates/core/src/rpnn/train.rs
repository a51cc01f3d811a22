use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Normalizer, STD_FLOOR};
use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, nll_rows, AdamConfig, AdamState, TrainableSelector};
use crate::pca::StateCodec;
use crate::scalar::Scalar;
use crate::schema::{ACTUATOR_DIM, REDUCED_STATE_DIM};
use crate::seeding::derive;
use crate::synth::Shot;

use super::model::{Rpnn, RpnnConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Learning rate of the log-variance stage.
    pub stage2_lr: f64,
    pub stage2_max_epochs: usize,
    pub stage2_patience: usize,
    pub batch_size: usize,
    /// Truncated-BPTT window in frames; 0 trains on whole flat-top sequences.
    pub bptt_window: usize,
    /// Real frames fed before the first supervised step.
    pub warmup: usize,
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 3e-4,
            weight_decay: 1e-3,
            max_epochs: 1000,
            patience: 250,
            stage2_lr: 3e-4,
            stage2_max_epochs: 1000,
            stage2_patience: 250,
            batch_size: 16,
            bptt_window: 0,
            warmup: 10,
            grad_clip: 10.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience > self.max_epochs || self.stage2_patience > self.stage2_max_epochs {
            return Err(Error::Config("patience must not exceed max epochs".into()));
        }
        if self.batch_size == 0 || self.lr <= 0.0 || self.stage2_lr <= 0.0 {
            return Err(Error::Config("batch size and learning rates must be positive".into()));
        }
        Ok(())
    }
}

/// Normalization of the model's inputs and outputs.
///
/// States are z-scored reduced states. The network predicts `Δz / delta_std`,
/// so channels with very different step sizes contribute equally to the loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsScaling {
    pub state: Normalizer,
    pub actuator: Normalizer,
    pub delta_std: Vec<f64>,
}

impl DynamicsScaling {
    /// Fits on frames `[flat_top.0 - warmup, flat_top.1)` of the given shots.
    pub fn fit(shots: &[&Shot], codec: &StateCodec, warmup: usize) -> Result<Self> {
        let mut states = Vec::new();
        let mut acts = Vec::new();
        let mut segments = Vec::new();
        for shot in shots {
            let (a, b) = (shot.flat_top.0.saturating_sub(warmup), shot.flat_top.1.min(shot.len()));
            let red = codec.encode_rows(shot.states.slice(s![a..b, ..]))?;
            segments.push(red.clone());
            states.push(red);
            acts.push(shot.actuators.slice(s![a..b, ..]).to_owned());
        }
        let cat = |v: &[Array2<f64>]| -> Array2<f64> {
            let views: Vec<_> = v.iter().map(|a| a.view()).collect();
            ndarray::concatenate(Axis(0), &views).expect("equal widths")
        };
        let state = Normalizer::fit(cat(&states).view(), "train")?;
        let actuator = Normalizer::fit(cat(&acts).view(), "train")?;
        let mut sq = vec![0.0; REDUCED_STATE_DIM];
        let mut n = 0usize;
        for seg in &segments {
            let z = state.apply(seg.view())?;
            for t in 0..z.nrows().saturating_sub(1) {
                for j in 0..REDUCED_STATE_DIM {
                    let d = z[(t + 1, j)] - z[(t, j)];
                    sq[j] += d * d;
                }
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::Data("no consecutive frames to fit step scaling".into()));
        }
        let delta_std = sq.iter().map(|v| (v / n as f64).sqrt().max(STD_FLOOR)).collect();
        Ok(DynamicsScaling {
            state,
            actuator,
            delta_std,
        })
    }

    /// Model input row `[z_state, z_actuator]`.
    pub fn input_row(&self, z_state: &[f64], actuators_raw: &[f64], out: &mut [f64]) {
        out[..REDUCED_STATE_DIM].copy_from_slice(z_state);
        self.actuator
            .apply_slice(actuators_raw, &mut out[REDUCED_STATE_DIM..REDUCED_STATE_DIM + ACTUATOR_DIM]);
    }
}

/// One shot prepared for teacher-forced training.
#[derive(Clone, Debug)]
pub struct ShotSequence<T> {
    pub shot_id: u32,
    /// `n x 37` model inputs.
    pub x: Array2<T>,
    /// `n x 25` normalized states.
    pub z: Array2<T>,
    /// `(n-1) x 25` scaled step targets.
    pub y: Array2<T>,
    /// Supervised rows are `[first, last)`.
    pub first: usize,
    pub last: usize,
}

pub fn prepare_sequences<T: Scalar>(
    shots: &[&Shot],
    codec: &StateCodec,
    scaling: &DynamicsScaling,
    warmup: usize,
) -> Result<Vec<ShotSequence<T>>> {
    shots
        .iter()
        .map(|shot| {
            if shot.flat_top.0 < warmup || shot.flat_top.1 > shot.len() || shot.flat_top.1 < shot.flat_top.0 + 2 {
                return Err(Error::Data(format!(
                    "shot {} flat-top {:?} cannot host a {warmup}-frame warmup",
                    shot.shot_id, shot.flat_top
                )));
            }
            let z = scaling.state.apply(codec.encode_rows(shot.states.view())?.view())?;
            let u = scaling.actuator.apply(shot.actuators.view())?;
            let x = ndarray::concatenate(Axis(1), &[z.view(), u.view()]).expect("rows agree");
            let n = z.nrows();
            let mut y = Array2::zeros((n - 1, REDUCED_STATE_DIM));
            for t in 0..n - 1 {
                for j in 0..REDUCED_STATE_DIM {
                    y[(t, j)] = T::of((z[(t + 1, j)] - z[(t, j)]) / scaling.delta_std[j]);
                }
            }
            Ok(ShotSequence {
                shot_id: shot.shot_id,
                x: x.mapv(T::of),
                z: z.mapv(T::of),
                y,
                first: shot.flat_top.0,
                last: shot.flat_top.1 - 1,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Window {
    pub seq: usize,
    pub start: usize,
    pub len: usize,
}

pub(crate) fn windows<T>(seqs: &[ShotSequence<T>], ids: &[usize], bptt: usize) -> Vec<Window> {
    let mut out = Vec::new();
    for &i in ids {
        let s = &seqs[i];
        let total = s.last - s.first;
        let w = if bptt == 0 { total } else { bptt.min(total) };
        let mut start = s.first;
        while start < s.last {
            out.push(Window {
                seq: i,
                start,
                len: w.min(s.last - start),
            });
            start += w;
        }
    }
    out
}

/// Batched inputs for a group of windows, zero-padded to the longest one.
pub(crate) struct Batch<T> {
    pub warm: Vec<Array2<T>>,
    pub xs: Vec<Array2<T>>,
    pub ys: Vec<Array2<T>>,
    /// `mask[t][b]` is 1 for real steps.
    pub mask: Vec<Vec<T>>,
}

pub(crate) fn make_batch<T: Scalar>(seqs: &[ShotSequence<T>], wins: &[Window], warmup: usize) -> Batch<T> {
    let b = wins.len();
    let steps = wins.iter().map(|w| w.len).max().unwrap_or(0);
    let in_dim = seqs[wins[0].seq].x.ncols();
    let mut warm = vec![Array2::zeros((b, in_dim)); warmup];
    let mut xs = vec![Array2::zeros((b, in_dim)); steps];
    let mut ys = vec![Array2::zeros((b, REDUCED_STATE_DIM)); steps];
    let mut mask = vec![vec![T::zero(); b]; steps];
    for (k, w) in wins.iter().enumerate() {
        let s = &seqs[w.seq];
        for (t, row) in warm.iter_mut().enumerate() {
            row.row_mut(k).assign(&s.x.row(w.start - warmup + t));
        }
        for t in 0..w.len {
            xs[t].row_mut(k).assign(&s.x.row(w.start + t));
            ys[t].row_mut(k).assign(&s.y.row(w.start + t));
            mask[t][k] = T::one();
        }
    }
    Batch { warm, xs, ys, mask }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub stage1: Vec<EpochLog>,
    pub stage2: Vec<EpochLog>,
    pub best_epoch_stage1: usize,
    pub best_epoch_stage2: usize,
}

fn warm_hidden<T: Scalar>(model: &Rpnn<T>, batch: &Batch<T>) -> Result<Array2<T>> {
    let mut h = model.zero_hidden(batch.mask.first().map_or(0, |m| m.len()));
    for x in &batch.warm {
        h = model.advance(h, x.view())?;
    }
    Ok(h)
}

/// Masked mean squared error over all supervised entries, with gradients.
fn masked_mse<T: Scalar>(means: &[Array2<T>], batch: &Batch<T>) -> (f64, Vec<Array2<T>>) {
    let dim = REDUCED_STATE_DIM as f64;
    let count: f64 = batch.mask.iter().flatten().map(|m| m.f64()).sum::<f64>() * dim;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(means.len());
    for (t, m) in means.iter().enumerate() {
        let mut g = m - &batch.ys[t];
        for (k, mut row) in g.rows_mut().into_iter().enumerate() {
            let w = batch.mask[t][k];
            for v in row.iter_mut() {
                loss += w.f64() * v.f64() * v.f64();
                *v = *v * w * T::of(2.0 / count.max(1.0));
            }
        }
        grads.push(g);
    }
    (loss / count.max(1.0), grads)
}

/// Mean one-step MSE of the mean head over the given windows.
pub(crate) fn eval_mse<T: Scalar>(
    model: &Rpnn<T>,
    seqs: &[ShotSequence<T>],
    wins: &[Window],
    cfg: &TrainConfig,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0.0;
    for chunk in wins.chunks(64) {
        let batch = make_batch(seqs, chunk, cfg.warmup);
        let mut h = warm_hidden(model, &batch)?;
        let p = model.params.values();
        for (t, x) in batch.xs.iter().enumerate() {
            let (f, hn) = model.step_features(h, x.view())?;
            h = hn;
            let m = model.mean_head.forward(p, f.view())?;
            for k in 0..chunk.len() {
                let w = batch.mask[t][k].f64();
                if w > 0.0 {
                    for j in 0..REDUCED_STATE_DIM {
                        let d = m[(k, j)].f64() - batch.ys[t][(k, j)].f64();
                        total += d * d;
                    }
                    count += REDUCED_STATE_DIM as f64;
                }
            }
        }
    }
    Ok(if count > 0.0 { total / count } else { 0.0 })
}

/// Head features, mean predictions and targets for every supervised row.
pub(crate) struct FeatureSet<T> {
    pub features: Array2<T>,
    pub means: Array2<T>,
    pub targets: Array2<T>,
}

pub(crate) fn collect_features<T: Scalar>(
    model: &Rpnn<T>,
    seqs: &[ShotSequence<T>],
    wins: &[Window],
    cfg: &TrainConfig,
) -> Result<FeatureSet<T>> {
    let hw = model.config.head_width;
    let mut feats = Vec::new();
    let mut means = Vec::new();
    let mut targets = Vec::new();
    for chunk in wins.chunks(64) {
        let batch = make_batch(seqs, chunk, cfg.warmup);
        let mut h = warm_hidden(model, &batch)?;
        let p = model.params.values();
        for (t, x) in batch.xs.iter().enumerate() {
            let (f, hn) = model.step_features(h, x.view())?;
            h = hn;
            let m = model.mean_head.forward(p, f.view())?;
            for k in 0..chunk.len() {
                if batch.mask[t][k] > T::zero() {
                    feats.extend(f.row(k).iter().copied());
                    means.extend(m.row(k).iter().copied());
                    targets.extend(batch.ys[t].row(k).iter().copied());
                }
            }
        }
    }
    let n = feats.len() / hw;
    Ok(FeatureSet {
        features: Array2::from_shape_vec((n, hw), feats).expect("feature rows"),
        means: Array2::from_shape_vec((n, REDUCED_STATE_DIM), means).expect("mean rows"),
        targets: Array2::from_shape_vec((n, REDUCED_STATE_DIM), targets).expect("target rows"),
    })
}

/// Mean NLL of the log-variance head over a feature set.
pub(crate) fn feature_nll<T: Scalar>(model: &Rpnn<T>, fs: &FeatureSet<T>) -> Result<f64> {
    if fs.features.nrows() == 0 {
        return Ok(0.0);
    }
    let lv = model.logvar_head.forward(model.params.values(), fs.features.view())?;
    let w = vec![T::one(); fs.features.nrows()];
    let (loss, _, _) = nll_rows(&fs.targets, &fs.means, &lv, &w)?;
    Ok(loss.f64())
}

/// Two-stage training of one member. `train` and `val` index into `seqs`;
/// `train` may contain repeats (bootstrap).
pub fn train_member<T: Scalar>(
    model_cfg: &RpnnConfig,
    cfg: &TrainConfig,
    seqs: &[ShotSequence<T>],
    train: &[usize],
    val: &[usize],
    seed: u64,
    member: Option<usize>,
) -> Result<(Rpnn<T>, TrainLog)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("no training sequences".into()));
    }
    let mut model = Rpnn::<T>::new(model_cfg, derive(seed, "init", 0))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, "batches", 0));
    let mut log = TrainLog::default();
    let train_w = windows(seqs, train, cfg.bptt_window);
    let val_w = windows(seqs, val, 0);
    let val_or_train = if val_w.is_empty() { &train_w } else { &val_w };

    // stage 1: mean head and trunk
    model.params.set_trainable_where(|g| g != "logvar_head");
    let mut adam = AdamState::new(
        model.param_count(),
        AdamConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..Default::default()
        },
    );
    let mut order = train_w.clone();
    let mut best = (f64::INFINITY, model.params.clone(), 0usize);
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = make_batch(seqs, chunk, cfg.warmup);
            let h0 = warm_hidden(&model, &batch)?;
            let out = model.forward_sequence(h0, &batch.xs)?;
            let (loss, dmeans) = masked_mse(&out.means, &batch);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, member });
            }
            let mut grads = model.params.zeros_like();
            model.backward_sequence(&out, &dmeans, None, &mut grads);
            clip_grad_norm(&mut grads, cfg.grad_clip);
            adam.update(&mut model.params, &grads)?;
            epoch_loss += loss;
            batches += 1;
        }
        let val_loss = eval_mse(&model, seqs, val_or_train, cfg)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch, member });
        }
        log.stage1.push(EpochLog {
            epoch,
            train_loss: epoch_loss / batches.max(1) as f64,
            val_loss,
        });
        log::debug!("member {member:?} stage 1 epoch {epoch}: train {:.4} val {val_loss:.4}", epoch_loss / batches.max(1) as f64);
        if val_loss < best.0 {
            best = (val_loss, model.params.clone(), epoch);
        } else if epoch - best.2 >= cfg.patience {
            break;
        }
    }
    model.params = best.1;
    log.best_epoch_stage1 = best.2;

    // stage 2: log-variance head on frozen features
    model.set_trainable(TrainableSelector::LogvarHeadOnly);
    let train_f = collect_features(&model, seqs, &train_w, cfg)?;
    let val_f = collect_features(&model, seqs, val_or_train, cfg)?;
    let mut adam = AdamState::new(
        model.param_count(),
        AdamConfig {
            lr: cfg.stage2_lr,
            weight_decay: cfg.weight_decay,
            ..Default::default()
        },
    );
    let rows: Vec<usize> = (0..train_f.features.nrows()).collect();
    let mut order = rows;
    let mut best = (feature_nll(&model, &val_f)?, model.params.clone(), 0usize);
    let mb = 256;
    for epoch in 0..cfg.stage2_max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(mb) {
            let f = train_f.features.select(Axis(0), chunk);
            let m = train_f.means.select(Axis(0), chunk);
            let y = train_f.targets.select(Axis(0), chunk);
            let p = model.params.values();
            let (lv, cache) = model.logvar_head.forward_cached(p, f)?;
            let w = vec![T::one(); chunk.len()];
            let (loss, _, dlv) = nll_rows(&y, &m, &lv, &w)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, member });
            }
            let mut grads = model.params.zeros_like();
            model.logvar_head.backward(p, &cache, &dlv, &mut grads);
            adam.update(&mut model.params, &grads)?;
            epoch_loss += loss.f64();
            batches += 1;
        }
        let val_loss = feature_nll(&model, &val_f)?;
        log.stage2.push(EpochLog {
            epoch,
            train_loss: epoch_loss / batches.max(1) as f64,
            val_loss,
        });
        if val_loss < best.0 {
            best = (val_loss, model.params.clone(), epoch);
        } else if epoch - best.2 >= cfg.stage2_patience {
            break;
        }
    }
    model.params = best.1;
    log.best_epoch_stage2 = best.2;
    model.set_trainable(TrainableSelector::All);
    Ok((model, log))
}
