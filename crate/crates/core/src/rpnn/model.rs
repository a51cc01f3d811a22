use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::nn::layers::{DenseCache, GruCache};
use crate::nn::params::seeded_rng;
use crate::nn::{Activation, Dense, Gru, LayerSpec, ParamSet};
use crate::scalar::Scalar;
use crate::schema::{MODEL_INPUT_DIM, REDUCED_STATE_DIM};

/// Layer widths of the recurrent probabilistic network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RpnnConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    pub encoder: Vec<usize>,
    pub gru_hidden: usize,
    pub decoder_width: usize,
    pub residual_blocks: usize,
    pub head_width: usize,
}

impl RpnnConfig {
    pub fn full() -> Self {
        RpnnConfig {
            input_dim: MODEL_INPUT_DIM,
            output_dim: REDUCED_STATE_DIM,
            encoder: vec![512, 512],
            gru_hidden: 256,
            decoder_width: 512,
            residual_blocks: 8,
            head_width: 128,
        }
    }

    pub fn desk() -> Self {
        RpnnConfig {
            input_dim: MODEL_INPUT_DIM,
            output_dim: REDUCED_STATE_DIM,
            encoder: vec![128, 128],
            gru_hidden: 64,
            decoder_width: 128,
            residual_blocks: 2,
            head_width: 64,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::full()),
            "desk" => Ok(Self::desk()),
            other => Err(Error::Config(format!("unknown model preset `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.input_dim, self.output_dim, self.gru_hidden, self.decoder_width, self.head_width];
        if dims.contains(&0) || self.encoder.is_empty() || self.encoder.contains(&0) {
            return Err(Error::Config("model widths must be positive and the encoder non-empty".into()));
        }
        Ok(())
    }

    /// Parameter count from the layer shapes.
    pub fn param_count(&self) -> usize {
        let dense = |i: usize, o: usize| i * o + o;
        let mut n = 0;
        let mut prev = self.input_dim;
        for &w in &self.encoder {
            n += dense(prev, w);
            prev = w;
        }
        let h = self.gru_hidden;
        n += 3 * (prev * h + h * h + h);
        n += dense(h, self.decoder_width);
        n += self.residual_blocks * dense(self.decoder_width, self.decoder_width);
        n += dense(self.decoder_width, self.head_width);
        n += 2 * dense(self.head_width, self.output_dim);
        n
    }
}

/// Encoder MLP, GRU core, residual decoder and two linear heads (mean, log-variance).
#[derive(Clone, Debug, PartialEq)]
pub struct Rpnn<T> {
    pub config: RpnnConfig,
    pub encoder: Vec<Dense>,
    pub gru: Gru,
    /// `decoder.in`, residual blocks, `decoder.out`
    pub decoder: Vec<Dense>,
    pub mean_head: Dense,
    pub logvar_head: Dense,
    pub params: ParamSet<T>,
}

pub struct StepCache<T> {
    encoder: Vec<DenseCache<T>>,
    gru: GruCache<T>,
    decoder: Vec<DenseCache<T>>,
    mean: DenseCache<T>,
    logvar: DenseCache<T>,
}

/// Outputs of a cached sequence pass. Log-variances are raw (unclamped).
pub struct SeqOutput<T> {
    pub means: Vec<Array2<T>>,
    pub logvars: Vec<Array2<T>>,
    pub features: Vec<Array2<T>>,
    pub hidden: Array2<T>,
    steps: Vec<StepCache<T>>,
}

impl<T: Scalar> Rpnn<T> {
    pub fn new(config: &RpnnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let mut encoder = Vec::new();
        let mut prev = config.input_dim;
        for (i, &w) in config.encoder.iter().enumerate() {
            encoder.push(Dense::new(
                &mut params,
                &format!("encoder.{i}"),
                LayerSpec::dense(prev, w, Activation::Relu),
            )?);
            prev = w;
        }
        let gru = Gru::new(&mut params, "gru", prev, config.gru_hidden)?;
        let dw = config.decoder_width;
        let mut decoder = vec![Dense::new(
            &mut params,
            "decoder.in",
            LayerSpec::dense(config.gru_hidden, dw, Activation::Relu),
        )?];
        for i in 0..config.residual_blocks {
            decoder.push(Dense::new(
                &mut params,
                &format!("decoder.res.{i}"),
                LayerSpec::residual(dw, Activation::Relu),
            )?);
        }
        decoder.push(Dense::new(
            &mut params,
            "decoder.out",
            LayerSpec::dense(dw, config.head_width, Activation::Relu),
        )?);
        let mean_head = Dense::new(
            &mut params,
            "mean_head",
            LayerSpec::dense(config.head_width, config.output_dim, Activation::Identity),
        )?;
        let logvar_head = Dense::new(
            &mut params,
            "logvar_head",
            LayerSpec::dense(config.head_width, config.output_dim, Activation::Identity),
        )?;

        let mut rng = seeded_rng(seed);
        for l in &encoder {
            l.init(&mut params, &mut rng);
        }
        gru.init(&mut params, &mut rng);
        for l in &decoder {
            l.init(&mut params, &mut rng);
        }
        // residual branches start small so the stack begins near identity
        for l in &decoder[1..decoder.len() - 1] {
            params.scale(l.weight, 0.1);
        }
        mean_head.init(&mut params, &mut rng);
        params.scale(mean_head.weight, 0.1);
        logvar_head.init(&mut params, &mut rng);
        params.scale(logvar_head.weight, 0.1);

        Ok(Rpnn {
            config: config.clone(),
            encoder,
            gru,
            decoder,
            mean_head,
            logvar_head,
            params,
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.gru_hidden
    }

    pub fn zero_hidden(&self, batch: usize) -> Array2<T> {
        Array2::zeros((batch, self.hidden_dim()))
    }

    fn encode(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        let p = self.params.values();
        let mut e = self.encoder[0].forward(p, x)?;
        for l in &self.encoder[1..] {
            e = l.forward(p, e.view())?;
        }
        Ok(e)
    }

    fn decode(&self, h: ArrayView2<T>) -> Result<Array2<T>> {
        let p = self.params.values();
        let mut d = self.decoder[0].forward(p, h)?;
        for l in &self.decoder[1..] {
            d = l.forward(p, d.view())?;
        }
        Ok(d)
    }

    /// One recurrent step for a batch: returns `(head features, next hidden)`.
    pub fn step_features(&self, h: Array2<T>, x: ArrayView2<T>) -> Result<(Array2<T>, Array2<T>)> {
        check_dim("rpnn input", self.config.input_dim, x.ncols())?;
        let e = self.encode(x)?;
        let h = self.gru.forward(self.params.values(), e, h)?;
        let f = self.decode(h.view())?;
        Ok((f, h))
    }

    /// Advances the hidden state only.
    pub fn advance(&self, h: Array2<T>, x: ArrayView2<T>) -> Result<Array2<T>> {
        check_dim("rpnn input", self.config.input_dim, x.ncols())?;
        let e = self.encode(x)?;
        self.gru.forward(self.params.values(), e, h)
    }

    /// One step: `(mean, raw logvar, next hidden)`.
    pub fn step(&self, h: Array2<T>, x: ArrayView2<T>) -> Result<(Array2<T>, Array2<T>, Array2<T>)> {
        let (f, h) = self.step_features(h, x)?;
        let p = self.params.values();
        let m = self.mean_head.forward(p, f.view())?;
        let lv = self.logvar_head.forward(p, f.view())?;
        Ok((m, lv, h))
    }

    /// Cached pass over `xs[t]` (each `batch x input_dim`) starting from `h0`.
    pub fn forward_sequence(&self, h0: Array2<T>, xs: &[Array2<T>]) -> Result<SeqOutput<T>> {
        let p = self.params.values();
        let mut h = h0;
        let mut out = SeqOutput {
            means: Vec::with_capacity(xs.len()),
            logvars: Vec::with_capacity(xs.len()),
            features: Vec::with_capacity(xs.len()),
            hidden: Array2::zeros((0, 0)),
            steps: Vec::with_capacity(xs.len()),
        };
        for x in xs {
            check_dim("rpnn input", self.config.input_dim, x.ncols())?;
            let mut enc = Vec::with_capacity(self.encoder.len());
            let mut a = x.clone();
            for l in &self.encoder {
                let (y, c) = l.forward_cached(p, a)?;
                enc.push(c);
                a = y;
            }
            let (h_new, gc) = self.gru.forward_cached(p, a, h)?;
            h = h_new;
            let mut dec = Vec::with_capacity(self.decoder.len());
            let mut d = h.clone();
            for l in &self.decoder {
                let (y, c) = l.forward_cached(p, d)?;
                dec.push(c);
                d = y;
            }
            let (m, mc) = self.mean_head.forward_cached(p, d.clone())?;
            let (lv, lc) = self.logvar_head.forward_cached(p, d.clone())?;
            out.means.push(m);
            out.logvars.push(lv);
            out.features.push(d);
            out.steps.push(StepCache {
                encoder: enc,
                gru: gc,
                decoder: dec,
                mean: mc,
                logvar: lc,
            });
        }
        out.hidden = h;
        Ok(out)
    }

    /// Backpropagation through time. Accumulates into `grads`; returns `dh0`.
    pub fn backward_sequence(
        &self,
        out: &SeqOutput<T>,
        dmeans: &[Array2<T>],
        dlogvars: Option<&[Array2<T>]>,
        grads: &mut [T],
    ) -> Array2<T> {
        let p = self.params.values();
        let batch = out.hidden.nrows();
        let mut dh = Array2::zeros((batch, self.hidden_dim()));
        for t in (0..out.steps.len()).rev() {
            let c = &out.steps[t];
            let mut dd = self.mean_head.backward(p, &c.mean, &dmeans[t], grads);
            if let Some(dl) = dlogvars {
                dd += &self.logvar_head.backward(p, &c.logvar, &dl[t], grads);
            }
            for (l, lc) in self.decoder.iter().zip(&c.decoder).rev() {
                dd = l.backward(p, lc, &dd, grads);
            }
            dh += &dd;
            let (mut dx, dh_prev) = self.gru.backward(p, &c.gru, &dh, grads);
            dh = dh_prev;
            for (l, lc) in self.encoder.iter().zip(&c.encoder).rev() {
                dx = l.backward(p, lc, &dx, grads);
            }
        }
        dh
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Freezes everything except the log-variance head, or unfreezes all.
    pub fn set_trainable(&mut self, selector: crate::nn::TrainableSelector) {
        use crate::nn::TrainableSelector::*;
        match selector {
            All => self.params.set_trainable_where(|_| true),
            LogvarHeadOnly => self.params.set_trainable_where(|g| g == "logvar_head"),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Rpnn<U> {
        Rpnn {
            config: self.config.clone(),
            encoder: self.encoder.clone(),
            gru: self.gru.clone(),
            decoder: self.decoder.clone(),
            mean_head: self.mean_head.clone(),
            logvar_head: self.logvar_head.clone(),
            params: self.params.cast(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RpnnConfig {
        RpnnConfig {
            input_dim: 3,
            output_dim: 2,
            encoder: vec![4],
            gru_hidden: 3,
            decoder_width: 4,
            residual_blocks: 1,
            head_width: 3,
        }
    }

    #[test]
    fn param_count_matches_allocation() {
        for cfg in [tiny(), RpnnConfig::desk()] {
            let m = Rpnn::<f32>::new(&cfg, 0).unwrap();
            assert_eq!(m.param_count(), cfg.param_count());
        }
    }

    #[test]
    fn step_matches_sequence_pass() {
        let m = Rpnn::<f64>::new(&tiny(), 3).unwrap();
        let xs: Vec<Array2<f64>> = (0..4)
            .map(|t| Array2::from_shape_fn((2, 3), |(i, j)| (t + i * 3 + j) as f64 * 0.1 - 0.4))
            .collect();
        let out = m.forward_sequence(m.zero_hidden(2), &xs).unwrap();
        let mut h = m.zero_hidden(2);
        for (t, x) in xs.iter().enumerate() {
            let (mean, lv, hn) = m.step(h, x.view()).unwrap();
            h = hn;
            assert!((&mean - &out.means[t]).iter().all(|v| v.abs() < 1e-14));
            assert!((&lv - &out.logvars[t]).iter().all(|v| v.abs() < 1e-14));
        }
        assert!((&h - &out.hidden).iter().all(|v| v.abs() < 1e-14));
    }
}
