//! Central finite-difference checks of the analytic gradients on small random
//! models, in double precision.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rpnn::{Rpnn, RpnnConfig};
use crate::seeding::derive;

use super::layers::{Activation, Dense, Gru, LayerSpec};
use super::loss::{mse_rows, nll_rows};
use super::mlp::Mlp;
use super::params::ParamSet;

pub const FD_STEP: f64 = 1e-5;

/// Denominator floor of the relative error. At step 1e-5 the difference
/// quotient carries about 1e-10 of rounding noise for losses of order one, so
/// gradient entries below this are effectively held to an absolute 1e-9.
pub const REL_FLOOR: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Loss {
    Mse,
    /// Gaussian NLL with the output used as both mean and log-variance.
    Nll,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub case: String,
    pub params: usize,
    pub max_rel_err: f64,
}

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`, maximized over entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR))
        .fold(0.0, f64::max)
}

/// Central differences of `f` at `theta` with step `h`.
pub fn central_differences(theta: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> Result<f64>) -> Result<Vec<f64>> {
    let mut t = theta.to_vec();
    let mut out = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        let orig = t[i];
        t[i] = orig + h;
        let up = f(&t)?;
        t[i] = orig - h;
        let down = f(&t)?;
        t[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

fn loss_grad(loss: Loss, y: &Array2<f64>, target: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
    let w = vec![1.0; y.nrows()];
    match loss {
        Loss::Mse => mse_rows(y, target, &w),
        Loss::Nll => {
            let (l, dm, dl) = nll_rows(target, y, y, &w)?;
            Ok((l, dm + dl))
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

fn randomize(params: &mut ParamSet<f64>, rng: &mut ChaCha8Rng, scale: f64) {
    for v in params.values_mut() {
        *v = rng.random_range(-scale..scale);
    }
}

fn finish(case: String, analytic: &[f64], theta: &[f64], f: impl FnMut(&[f64]) -> Result<f64>) -> Result<GradCheck> {
    let numeric = central_differences(theta, FD_STEP, f)?;
    Ok(GradCheck {
        case,
        params: theta.len(),
        max_rel_err: max_relative_error(analytic, &numeric),
    })
}

/// One dense or residual-dense layer on a random batch.
pub fn check_dense(spec: LayerSpec, loss: Loss, seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ps = ParamSet::<f64>::new();
    let layer = Dense::new(&mut ps, "layer", spec)?;
    randomize(&mut ps, &mut rng, 0.8);
    let x = uniform(&mut rng, 3, spec.in_dim, 1.0);
    let target = uniform(&mut rng, 3, spec.out_dim, 1.0);
    let (y, cache) = layer.forward_cached(ps.values(), x.clone())?;
    let (_, dy) = loss_grad(loss, &y, &target)?;
    let mut g = vec![0.0; ps.len()];
    layer.backward(ps.values(), &cache, &dy, &mut g);
    let theta = ps.values().to_vec();
    finish(format!("{:?}/{:?}/{:?}", spec.kind, spec.activation, loss), &g, &theta, |t| {
        Ok(loss_grad(loss, &layer.forward(t, x.view())?, &target)?.0)
    })
}

/// A GRU unrolled over `steps`, loss summed over every hidden state.
pub fn check_gru(in_dim: usize, hidden: usize, steps: usize, loss: Loss, seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ps = ParamSet::<f64>::new();
    let gru = Gru::new(&mut ps, "gru", in_dim, hidden)?;
    randomize(&mut ps, &mut rng, 0.8);
    let xs: Vec<Array2<f64>> = (0..steps).map(|_| uniform(&mut rng, 2, in_dim, 1.0)).collect();
    let targets: Vec<Array2<f64>> = (0..steps).map(|_| uniform(&mut rng, 2, hidden, 1.0)).collect();
    let h0 = uniform(&mut rng, 2, hidden, 0.5);
    let run = |p: &[f64]| -> Result<f64> {
        let mut h = h0.clone();
        let mut total = 0.0;
        for (x, tg) in xs.iter().zip(&targets) {
            h = gru.forward(p, x.clone(), h)?;
            total += loss_grad(loss, &h, tg)?.0;
        }
        Ok(total)
    };
    let p = ps.values();
    let mut h = h0.clone();
    let mut caches = Vec::new();
    let mut dys = Vec::new();
    for (x, tg) in xs.iter().zip(&targets) {
        let (hn, c) = gru.forward_cached(p, x.clone(), h)?;
        dys.push(loss_grad(loss, &hn, tg)?.1);
        caches.push(c);
        h = hn;
    }
    let mut g = vec![0.0; ps.len()];
    let mut dh = Array2::zeros((2, hidden));
    for t in (0..steps).rev() {
        dh += &dys[t];
        let (_, prev) = gru.backward(p, &caches[t], &dh, &mut g);
        dh = prev;
    }
    finish(format!("Gru/{steps} steps/{loss:?}"), &g, p, run)
}

pub fn check_mlp(sizes: &[usize], hidden: Activation, loss: Loss, seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mlp = Mlp::<f64>::new(sizes, hidden, Activation::Identity, seed)?;
    randomize(&mut mlp.params, &mut rng, 0.8);
    let x = uniform(&mut rng, 4, sizes[0], 1.0);
    let target = uniform(&mut rng, 4, *sizes.last().expect("sizes"), 1.0);
    let (y, cache) = mlp.forward_cached(x.clone())?;
    let (_, dy) = loss_grad(loss, &y, &target)?;
    let mut g = vec![0.0; mlp.param_count()];
    mlp.backward(&cache, &dy, &mut g);
    let theta = mlp.params.values().to_vec();
    let mut probe = mlp.clone();
    finish(format!("Mlp/{hidden:?}/{loss:?}"), &g, &theta, |t| {
        probe.params.load(t)?;
        Ok(loss_grad(loss, &probe.forward(x.view())?, &target)?.0)
    })
}

/// Whole recurrent dynamics model through time. `Mse` trains the mean head;
/// `Nll` trains both heads.
pub fn check_rpnn(steps: usize, loss: Loss, seed: u64) -> Result<GradCheck> {
    let cfg = RpnnConfig {
        input_dim: 6,
        output_dim: 4,
        encoder: vec![7, 5],
        gru_hidden: 6,
        decoder_width: 8,
        residual_blocks: 2,
        head_width: 5,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Rpnn::<f64>::new(&cfg, seed)?;
    randomize(&mut model.params, &mut rng, 0.5);
    let xs: Vec<Array2<f64>> = (0..steps).map(|_| uniform(&mut rng, 2, cfg.input_dim, 1.0)).collect();
    let targets: Vec<Array2<f64>> = (0..steps).map(|_| uniform(&mut rng, 2, cfg.output_dim, 1.0)).collect();
    let w = vec![1.0; 2];
    let seq_loss = |m: &Rpnn<f64>| -> Result<(f64, Vec<Array2<f64>>, Vec<Array2<f64>>, _)> {
        let out = m.forward_sequence(m.zero_hidden(2), &xs)?;
        let (mut total, mut dms, mut dls) = (0.0, Vec::new(), Vec::new());
        for t in 0..steps {
            match loss {
                Loss::Mse => {
                    let (l, d) = mse_rows(&out.means[t], &targets[t], &w)?;
                    total += l;
                    dms.push(d);
                }
                Loss::Nll => {
                    let (l, dm, dl) = nll_rows(&targets[t], &out.means[t], &out.logvars[t], &w)?;
                    total += l;
                    dms.push(dm);
                    dls.push(dl);
                }
            }
        }
        Ok((total, dms, dls, out))
    };
    let (_, dms, dls, out) = seq_loss(&model)?;
    let mut g = vec![0.0; model.param_count()];
    let dl = (loss == Loss::Nll).then_some(dls.as_slice());
    model.backward_sequence(&out, &dms, dl, &mut g);
    let theta = model.params.values().to_vec();
    let mut probe = model.clone();
    finish(format!("Rpnn/{steps} steps/{loss:?}"), &g, &theta, |t| {
        probe.params.load(t)?;
        Ok(seq_loss(&probe)?.0)
    })
}

/// Every layer kind and activation under both losses, plus the composite models.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradCheck>> {
    let mut out = Vec::new();
    let mut k = 0;
    let mut next = || {
        k += 1;
        derive(seed, "gradcheck", k)
    };
    for loss in [Loss::Mse, Loss::Nll] {
        for act in [Activation::Relu, Activation::Tanh, Activation::Identity] {
            out.push(check_dense(LayerSpec::dense(5, 4, act), loss, next())?);
            out.push(check_dense(LayerSpec::residual(6, act), loss, next())?);
        }
        out.push(check_gru(4, 5, 5, loss, next())?);
        out.push(check_mlp(&[5, 8, 7, 3], Activation::Tanh, loss, next())?);
        out.push(check_mlp(&[5, 8, 7, 3], Activation::Relu, loss, next())?);
        out.push(check_rpnn(5, loss, next())?);
    }
    Ok(out)
}
