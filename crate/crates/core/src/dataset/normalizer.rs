use ndarray::{Array1, Array2, ArrayView2, ArrayViewMut2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

pub const STD_FLOOR: f64 = 1e-6;

/// Per-channel z-scoring fitted on one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub fitted_on: String,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Normalizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
            fitted_on: "identity".into(),
        }
    }

    /// Fits on rows of `data`; channels below the std floor are clamped with a warning.
    pub fn fit(data: ArrayView2<f64>, fitted_on: &str) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::Data("cannot fit a normalizer on an empty split".into()));
        }
        let mean: Array1<f64> = data.mean_axis(Axis(0)).unwrap();
        let std = data.std_axis(Axis(0), 0.0);
        let mut out = Vec::with_capacity(std.len());
        for (j, &s) in std.iter().enumerate() {
            if !s.is_finite() || !mean[j].is_finite() {
                return Err(Error::NonFinite("normalizer fit"));
            }
            if s < STD_FLOOR {
                log::warn!("channel {j} is constant on `{fitted_on}` (std {s:e}); clamped to {STD_FLOOR:e}");
                out.push(STD_FLOOR);
            } else {
                out.push(s);
            }
        }
        Ok(Normalizer {
            mean: mean.to_vec(),
            std: out,
            fitted_on: fitted_on.to_string(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_in_place<T: Scalar>(&self, mut x: ArrayViewMut2<T>) -> Result<()> {
        check_dim("normalizer apply", self.dim(), x.ncols())?;
        for mut row in x.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = T::of((v.f64() - self.mean[j]) / self.std[j]);
            }
        }
        Ok(())
    }

    pub fn invert_in_place<T: Scalar>(&self, mut x: ArrayViewMut2<T>) -> Result<()> {
        check_dim("normalizer invert", self.dim(), x.ncols())?;
        for mut row in x.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = T::of(v.f64() * self.std[j] + self.mean[j]);
            }
        }
        Ok(())
    }

    pub fn apply<T: Scalar>(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        let mut out = x.to_owned();
        self.apply_in_place(out.view_mut())?;
        Ok(out)
    }

    pub fn invert<T: Scalar>(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        let mut out = x.to_owned();
        self.invert_in_place(out.view_mut())?;
        Ok(out)
    }

    pub fn apply_slice(&self, x: &[f64], out: &mut [f64]) {
        for j in 0..x.len() {
            out[j] = (x[j] - self.mean[j]) / self.std[j];
        }
    }

    pub fn invert_slice(&self, x: &[f64], out: &mut [f64]) {
        for j in 0..x.len() {
            out[j] = x[j] * self.std[j] + self.mean[j];
        }
    }

    /// Flattened `[mean.., std..]` for blob storage.
    pub fn to_flat(&self) -> Vec<f64> {
        self.mean.iter().chain(self.std.iter()).copied().collect()
    }

    pub fn from_flat(flat: &[f64], fitted_on: &str) -> Result<Self> {
        if flat.len() % 2 != 0 {
            return Err(Error::Data("normalizer payload has odd length".into()));
        }
        let d = flat.len() / 2;
        Ok(Normalizer {
            mean: flat[..d].to_vec(),
            std: flat[d..].to_vec(),
            fitted_on: fitted_on.to_string(),
        })
    }
}
