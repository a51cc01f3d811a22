//! Dense, residual-dense and GRU layers over batched row-major activations.
//!
//! Every layer reads its weights from a flat parameter slice and writes
//! gradients into a slice of the same layout, so a whole model is one
//! [`ParamSet`](super::ParamSet) and one gradient vector.

use ndarray::{linalg::general_mat_mul, s, Array2, ArrayView2, Axis, Zip};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParamSet, Slot};
use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    pub fn grad_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
            Activation::Identity => T::one(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    Gru,
    ResidualDense,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn dense(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        LayerSpec {
            kind: LayerKind::Dense,
            in_dim,
            out_dim,
            activation,
        }
    }

    pub fn residual(dim: usize, activation: Activation) -> Self {
        LayerSpec {
            kind: LayerKind::ResidualDense,
            in_dim: dim,
            out_dim: dim,
            activation,
        }
    }

    pub fn gru(in_dim: usize, hidden: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Gru,
            in_dim,
            out_dim: hidden,
            activation: Activation::Tanh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::Config(format!("layer dims must be >= 1: {self:?}")));
        }
        if self.kind == LayerKind::ResidualDense && self.in_dim != self.out_dim {
            return Err(Error::Config(format!(
                "residual-dense layer needs in_dim == out_dim, got {} != {}",
                self.in_dim, self.out_dim
            )));
        }
        Ok(())
    }

    /// Number of parameters this layer owns.
    pub fn param_count(&self) -> usize {
        match self.kind {
            LayerKind::Dense | LayerKind::ResidualDense => self.in_dim * self.out_dim + self.out_dim,
            LayerKind::Gru => 3 * (self.in_dim * self.out_dim + self.out_dim * self.out_dim + self.out_dim),
        }
    }
}

/// Fully connected layer `y = act(x W + b)`, or `y = x + act(x W + b)` when residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub spec: LayerSpec,
    /// `in_dim x out_dim`
    pub weight: Slot,
    /// `1 x out_dim`
    pub bias: Slot,
}

#[derive(Clone, Debug)]
pub struct DenseCache<T> {
    input: Array2<T>,
    act: Array2<T>,
}

impl Dense {
    pub fn new<T: Scalar>(params: &mut ParamSet<T>, group: &str, spec: LayerSpec) -> Result<Self> {
        spec.validate()?;
        if spec.kind == LayerKind::Gru {
            return Err(Error::Config("Dense::new called with a GRU spec".into()));
        }
        let weight = params.alloc(group, spec.in_dim, spec.out_dim);
        let bias = params.alloc(group, 1, spec.out_dim);
        Ok(Dense { spec, weight, bias })
    }

    pub fn init<T: Scalar>(&self, params: &mut ParamSet<T>, rng: &mut ChaCha8Rng) {
        params.init_fan_in(self.weight, rng);
    }

    fn affine<T: Scalar>(&self, p: &[T], x: ArrayView2<T>) -> Array2<T> {
        let w = self.weight.view(p);
        let b = self.bias.view(p);
        let mut out = Array2::zeros((x.nrows(), self.spec.out_dim));
        out.assign(&b.row(0).broadcast((x.nrows(), self.spec.out_dim)).expect("bias row broadcasts"));
        general_mat_mul(T::one(), &x, &w, T::one(), &mut out);
        out
    }

    /// Batched forward pass without caching.
    pub fn forward<T: Scalar>(&self, p: &[T], x: ArrayView2<T>) -> Result<Array2<T>> {
        check_dim("dense input", self.spec.in_dim, x.ncols())?;
        let act = self.spec.activation;
        let mut y = self.affine(p, x);
        y.mapv_inplace(|v| act.apply(v));
        if self.spec.kind == LayerKind::ResidualDense {
            y += &x;
        }
        Ok(y)
    }

    pub fn forward_cached<T: Scalar>(&self, p: &[T], x: Array2<T>) -> Result<(Array2<T>, DenseCache<T>)> {
        check_dim("dense input", self.spec.in_dim, x.ncols())?;
        let act = self.spec.activation;
        let mut a = self.affine(p, x.view());
        a.mapv_inplace(|v| act.apply(v));
        let y = if self.spec.kind == LayerKind::ResidualDense {
            &a + &x
        } else {
            a.clone()
        };
        Ok((y, DenseCache { input: x, act: a }))
    }

    /// Accumulates parameter gradients into `grads` and returns the input gradient.
    pub fn backward<T: Scalar>(&self, p: &[T], cache: &DenseCache<T>, dy: &Array2<T>, grads: &mut [T]) -> Array2<T> {
        let act = self.spec.activation;
        let mut da = dy.clone();
        if act != Activation::Identity {
            Zip::from(&mut da)
                .and(&cache.act)
                .for_each(|d, &y| *d *= act.grad_from_output(y));
        }
        {
            let mut gw = self.weight.view_mut(grads);
            general_mat_mul(T::one(), &cache.input.t(), &da, T::one(), &mut gw);
        }
        {
            let mut gb = self.bias.view_mut(grads);
            let colsum = da.sum_axis(Axis(0));
            gb.row_mut(0).zip_mut_with(&colsum, |g, &c| *g += c);
        }
        let w = self.weight.view(p);
        let mut dx = da.dot(&w.t());
        if self.spec.kind == LayerKind::ResidualDense {
            dx += dy;
        }
        dx
    }
}

/// Single-vector dense evaluation.
pub fn dense_forward<T: Scalar>(x: &[T], layer: &Dense, params: &[T]) -> Result<Vec<T>> {
    check_dim("dense input", layer.spec.in_dim, x.len())?;
    let xv = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
    Ok(layer.forward(params, xv)?.into_raw_vec_and_offset().0)
}

/// Gated recurrent unit.
///
/// Gate convention, with `x` the input row and `h` the previous hidden row:
///
/// ```text
/// z  = sigmoid(x Wz + h Uz + bz)          update gate
/// r  = sigmoid(x Wr + h Ur + br)          reset gate
/// n  = tanh(x Wn + (r * h) Un + bn)       candidate
/// h' = (1 - z) * h + z * n
/// ```
///
/// `Wx = [Wz | Wr | Wn]` is `in x 3h`, `Wh = [Uz | Ur | Un]` is `h x 3h`, `b` is `1 x 3h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gru {
    pub spec: LayerSpec,
    pub wx: Slot,
    pub wh: Slot,
    pub bias: Slot,
}

#[derive(Clone, Debug)]
pub struct GruCache<T> {
    x: Array2<T>,
    h: Array2<T>,
    z: Array2<T>,
    r: Array2<T>,
    n: Array2<T>,
    rh: Array2<T>,
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl Gru {
    pub fn new<T: Scalar>(params: &mut ParamSet<T>, group: &str, in_dim: usize, hidden: usize) -> Result<Self> {
        let spec = LayerSpec::gru(in_dim, hidden);
        spec.validate()?;
        let wx = params.alloc(group, in_dim, 3 * hidden);
        let wh = params.alloc(group, hidden, 3 * hidden);
        let bias = params.alloc(group, 1, 3 * hidden);
        Ok(Gru { spec, wx, wh, bias })
    }

    pub fn hidden(&self) -> usize {
        self.spec.out_dim
    }

    pub fn init<T: Scalar>(&self, params: &mut ParamSet<T>, rng: &mut ChaCha8Rng) {
        params.init_fan_in(self.wx, rng);
        params.init_fan_in(self.wh, rng);
    }

    pub fn forward_cached<T: Scalar>(&self, p: &[T], x: Array2<T>, h: Array2<T>) -> Result<(Array2<T>, GruCache<T>)> {
        check_dim("gru input", self.spec.in_dim, x.ncols())?;
        check_dim("gru hidden", self.hidden(), h.ncols())?;
        check_dim("gru batch", x.nrows(), h.nrows())?;
        let hd = self.hidden();
        let wx = self.wx.view(p);
        let wh = self.wh.view(p);
        let b = self.bias.view(p);

        // gates z|r
        let mut zr = Array2::zeros((x.nrows(), 2 * hd));
        zr.assign(&b.slice(s![0, ..2 * hd]).broadcast((x.nrows(), 2 * hd)).expect("broadcast"));
        general_mat_mul(T::one(), &x, &wx.slice(s![.., ..2 * hd]), T::one(), &mut zr);
        general_mat_mul(T::one(), &h, &wh.slice(s![.., ..2 * hd]), T::one(), &mut zr);
        zr.mapv_inplace(sigmoid);
        let z = zr.slice(s![.., ..hd]).to_owned();
        let r = zr.slice(s![.., hd..]).to_owned();

        let rh = &r * &h;
        let mut n = Array2::zeros((x.nrows(), hd));
        n.assign(&b.slice(s![0, 2 * hd..]).broadcast((x.nrows(), hd)).expect("broadcast"));
        general_mat_mul(T::one(), &x, &wx.slice(s![.., 2 * hd..]), T::one(), &mut n);
        general_mat_mul(T::one(), &rh, &wh.slice(s![.., 2 * hd..]), T::one(), &mut n);
        n.mapv_inplace(|v| v.tanh());

        let mut h_new = h.clone();
        Zip::from(&mut h_new)
            .and(&z)
            .and(&n)
            .for_each(|hv, &zv, &nv| *hv = (T::one() - zv) * *hv + zv * nv);
        Ok((h_new, GruCache { x, h, z, r, n, rh }))
    }

    pub fn forward<T: Scalar>(&self, p: &[T], x: Array2<T>, h: Array2<T>) -> Result<Array2<T>> {
        self.forward_cached(p, x, h).map(|(h, _)| h)
    }

    /// Returns `(dx, dh_prev)` and accumulates parameter gradients.
    pub fn backward<T: Scalar>(
        &self,
        p: &[T],
        c: &GruCache<T>,
        dh_new: &Array2<T>,
        grads: &mut [T],
    ) -> (Array2<T>, Array2<T>) {
        let hd = self.hidden();
        let one = T::one();
        let batch = dh_new.nrows();

        // dn pre-activation and gate pre-activations
        let mut dan = Array2::zeros((batch, hd));
        let mut dzr = Array2::zeros((batch, 2 * hd));
        let mut dh = Array2::zeros((batch, hd));
        Zip::from(&mut dan)
            .and(dh_new)
            .and(&c.z)
            .and(&c.n)
            .for_each(|d, &g, &z, &n| *d = g * z * (one - n * n));
        Zip::from(dzr.slice_mut(s![.., ..hd]))
            .and(dh_new)
            .and(&c.z)
            .and(&c.n)
            .and(&c.h)
            .for_each(|d, &g, &z, &n, &h| *d = g * (n - h) * z * (one - z));
        Zip::from(&mut dh)
            .and(dh_new)
            .and(&c.z)
            .for_each(|d, &g, &z| *d = g * (one - z));

        let wx = self.wx.view(p);
        let wh = self.wh.view(p);
        let d_rh = dan.dot(&wh.slice(s![.., 2 * hd..]).t());
        Zip::from(dzr.slice_mut(s![.., hd..]))
            .and(&d_rh)
            .and(&c.h)
            .and(&c.r)
            .for_each(|d, &g, &h, &r| *d = g * h * r * (one - r));
        Zip::from(&mut dh).and(&d_rh).and(&c.r).for_each(|d, &g, &r| *d += g * r);

        {
            let mut gwx = self.wx.view_mut(grads);
            general_mat_mul(one, &c.x.t(), &dzr, one, &mut gwx.slice_mut(s![.., ..2 * hd]));
            general_mat_mul(one, &c.x.t(), &dan, one, &mut gwx.slice_mut(s![.., 2 * hd..]));
        }
        {
            let mut gwh = self.wh.view_mut(grads);
            general_mat_mul(one, &c.h.t(), &dzr, one, &mut gwh.slice_mut(s![.., ..2 * hd]));
            general_mat_mul(one, &c.rh.t(), &dan, one, &mut gwh.slice_mut(s![.., 2 * hd..]));
        }
        {
            let mut gb = self.bias.view_mut(grads);
            let s_zr = dzr.sum_axis(Axis(0));
            let s_n = dan.sum_axis(Axis(0));
            gb.slice_mut(s![0, ..2 * hd]).zip_mut_with(&s_zr, |g, &v| *g += v);
            gb.slice_mut(s![0, 2 * hd..]).zip_mut_with(&s_n, |g, &v| *g += v);
        }

        let mut dx = dzr.dot(&wx.slice(s![.., ..2 * hd]).t());
        general_mat_mul(one, &dan, &wx.slice(s![.., 2 * hd..]).t(), one, &mut dx);
        general_mat_mul(one, &dzr, &wh.slice(s![.., ..2 * hd]).t(), one, &mut dh);
        (dx, dh)
    }
}

/// Single-vector GRU step.
pub fn gru_step<T: Scalar>(x: &[T], h: &[T], gru: &Gru, params: &[T]) -> Result<Vec<T>> {
    let xa = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row");
    let ha = Array2::from_shape_vec((1, h.len()), h.to_vec()).expect("row");
    Ok(gru.forward(params, xa, ha)?.into_raw_vec_and_offset().0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dense_2x2(w: [[f64; 2]; 2], b: [f64; 2], spec: LayerSpec) -> (Dense, ParamSet<f64>) {
        let mut p = ParamSet::new();
        let d = Dense::new(&mut p, "d", spec).unwrap();
        // weight is in x out, so W_math[o][i] sits at (i, o)
        let vals = p.values_mut();
        for o in 0..2 {
            for i in 0..2 {
                vals[d.weight.offset + i * 2 + o] = w[o][i];
            }
        }
        vals[d.bias.offset] = b[0];
        vals[d.bias.offset + 1] = b[1];
        (d, p)
    }

    #[test]
    fn dense_examples() {
        let id = LayerSpec::dense(2, 2, Activation::Identity);
        let (d, p) = dense_2x2([[0.0, 0.0], [0.0, 0.0]], [1.0, 2.0], id);
        assert_eq!(dense_forward(&[5.0, 5.0], &d, p.values()).unwrap(), vec![1.0, 2.0]);
        let (d, p) = dense_2x2([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0], id);
        assert_eq!(dense_forward(&[3.0, -4.0], &d, p.values()).unwrap(), vec![3.0, -4.0]);
        let (d, p) = dense_2x2([[1.0, 2.0], [3.0, 4.0]], [1.0, 0.0], id);
        assert_eq!(dense_forward(&[1.0, 1.0], &d, p.values()).unwrap(), vec![4.0, 7.0]);
    }

    #[test]
    fn dense_dimension_mismatch() {
        let (d, p) = dense_2x2([[0.0; 2]; 2], [0.0; 2], LayerSpec::dense(2, 2, Activation::Relu));
        assert!(matches!(
            dense_forward(&[1.0, 2.0, 3.0], &d, p.values()),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn residual_with_zero_weights_is_identity() {
        let mut p = ParamSet::<f64>::new();
        let d = Dense::new(&mut p, "r", LayerSpec::residual(3, Activation::Relu)).unwrap();
        let x = [0.3, -1.2, 7.0];
        assert_eq!(dense_forward(&x, &d, p.values()).unwrap(), x.to_vec());
    }

    #[test]
    fn residual_requires_square() {
        let spec = LayerSpec {
            kind: LayerKind::ResidualDense,
            in_dim: 3,
            out_dim: 2,
            activation: Activation::Relu,
        };
        assert!(spec.validate().is_err());
        assert!(LayerSpec::dense(0, 2, Activation::Relu).validate().is_err());
    }

    #[test]
    fn gru_zero_params() {
        let mut p = ParamSet::<f64>::new();
        let g = Gru::new(&mut p, "g", 3, 2).unwrap();
        assert_eq!(gru_step(&[1.0, -2.0, 0.5], &[0.0, 0.0], &g, p.values()).unwrap(), vec![0.0, 0.0]);
        assert_eq!(gru_step(&[0.0; 3], &[1.0, 1.0], &g, p.values()).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn gru_scalar_hand_evaluation() {
        // in = hidden = 1; Wx = [wz, wr, wn], Wh = [uz, ur, un], b = [bz, br, bn]
        let mut p = ParamSet::<f64>::new();
        let g = Gru::new(&mut p, "g", 1, 1).unwrap();
        let (wz, wr, wn, uz, ur, un, bz, br, bn) = (0.5, -0.3, 0.8, 0.2, 0.7, -0.6, 0.1, -0.2, 0.05);
        p.values_mut().copy_from_slice(&[wz, wr, wn, uz, ur, un, bz, br, bn]);
        let (x, h) = (0.9, -0.4);
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let z = sig(wz * x + uz * h + bz);
        let r = sig(wr * x + ur * h + br);
        let n = (wn * x + un * (r * h) + bn).tanh();
        let expected = (1.0 - z) * h + z * n;
        let got = gru_step(&[x], &[h], &g, p.values()).unwrap();
        assert_abs_diff_eq!(got[0], expected, epsilon = 1e-15);
    }

    #[test]
    fn param_counts_match_allocations() {
        let mut p = ParamSet::<f32>::new();
        let g = Gru::new(&mut p, "g", 5, 4).unwrap();
        assert_eq!(p.len(), g.spec.param_count());
        let d = Dense::new(&mut p, "d", LayerSpec::dense(4, 7, Activation::Tanh)).unwrap();
        assert_eq!(p.len(), g.spec.param_count() + d.spec.param_count());
    }
}
