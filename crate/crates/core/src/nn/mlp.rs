use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::layers::{Activation, Dense, DenseCache, LayerSpec};
use super::params::{seeded_rng, ParamSet};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Plain feedforward stack used for actors and critics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    pub layers: Vec<Dense>,
    pub params: ParamSet<T>,
}

#[derive(Clone, Debug)]
pub struct MlpCache<T> {
    caches: Vec<DenseCache<T>>,
}

impl<T: Scalar> Mlp<T> {
    /// `sizes = [in, h1, ..., out]`; hidden layers use `hidden`, the last uses `output`.
    pub fn new(sizes: &[usize], hidden: Activation, output: Activation, seed: u64) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Config("an MLP needs at least input and output sizes".into()));
        }
        let mut params = ParamSet::new();
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for (i, w) in sizes.windows(2).enumerate() {
            let act = if i + 2 == sizes.len() { output } else { hidden };
            layers.push(Dense::new(&mut params, &format!("layer{i}"), LayerSpec::dense(w[0], w[1], act))?);
        }
        let mut rng = seeded_rng(seed);
        for l in &layers {
            l.init(&mut params, &mut rng);
        }
        Ok(Mlp { layers, params })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].spec.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").spec.out_dim
    }

    /// Multiplies the final layer's weights by `factor` (small-output init).
    pub fn scale_output_layer(&mut self, factor: f64) {
        let w = self.layers.last().expect("non-empty").weight;
        self.params.scale(w, factor);
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        let p = self.params.values();
        let mut h = self.layers[0].forward(p, x)?;
        for l in &self.layers[1..] {
            h = l.forward(p, h.view())?;
        }
        Ok(h)
    }

    pub fn forward_one(&self, x: &[T]) -> Result<Vec<T>> {
        let xv = ArrayView2::from_shape((1, x.len()), x).expect("row");
        Ok(self.forward(xv)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_cached(&self, x: Array2<T>) -> Result<(Array2<T>, MlpCache<T>)> {
        let p = self.params.values();
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x;
        for l in &self.layers {
            let (y, c) = l.forward_cached(p, h)?;
            caches.push(c);
            h = y;
        }
        Ok((h, MlpCache { caches }))
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&self, cache: &MlpCache<T>, dy: &Array2<T>, grads: &mut [T]) -> Array2<T> {
        let p = self.params.values();
        let mut d = dy.clone();
        for (l, c) in self.layers.iter().zip(&cache.caches).rev() {
            d = l.backward(p, c, &d, grads);
        }
        d
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_determinism() {
        let a = Mlp::<f64>::new(&[3, 5, 2], Activation::Tanh, Activation::Identity, 1).unwrap();
        let b = Mlp::<f64>::new(&[3, 5, 2], Activation::Tanh, Activation::Identity, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.param_count(), 3 * 5 + 5 + 5 * 2 + 2);
        assert_eq!(a.forward_one(&[0.1, 0.2, 0.3]).unwrap().len(), 2);
        assert!(Mlp::<f64>::new(&[3], Activation::Tanh, Activation::Identity, 1).is_err());
    }
}
