//! Per-quantity PCA of 33-point profiles and the raw ↔ reduced state codec.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::dataset::Blob;
use crate::error::{check_dim, Error, Result};
use crate::schema::{Profile, GRID, RAW_STATE_DIM, REDUCED_STATE_DIM, SCALAR_NAMES};

/// Eigenvalues below `RANK_TOL * largest` count as zero.
const RANK_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct ProfileBasis {
    pub quantity: String,
    pub mean: Array1<f64>,
    /// `k x grid`, orthonormal rows.
    pub components: Array2<f64>,
    pub singular_values: Vec<f64>,
    pub explained_variance: f64,
}

impl ProfileBasis {
    pub fn k(&self) -> usize {
        self.components.nrows()
    }

    pub fn grid(&self) -> usize {
        self.mean.len()
    }

    pub fn to_components(&self, profile: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_dim("pca to_components", self.grid(), profile.len())?;
        Ok(self.components.dot(&(&profile - &self.mean)))
    }

    pub fn from_components(&self, coeffs: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_dim("pca from_components", self.k(), coeffs.len())?;
        Ok(&self.mean + &self.components.t().dot(&coeffs))
    }

    /// Row-wise projection of `data` (n x grid) to `n x k`.
    pub fn project_rows(&self, data: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim("pca project", self.grid(), data.ncols())?;
        Ok((&data - &self.mean.view().insert_axis(Axis(0))).dot(&self.components.t()))
    }

    pub fn reconstruct_rows(&self, coeffs: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim("pca reconstruct", self.k(), coeffs.ncols())?;
        Ok(coeffs.dot(&self.components) + &self.mean.view().insert_axis(Axis(0)))
    }

    /// Same basis restricted to its leading `k` components.
    pub fn truncated(&self, k: usize) -> ProfileBasis {
        let k = k.min(self.k());
        ProfileBasis {
            quantity: self.quantity.clone(),
            mean: self.mean.clone(),
            components: self.components.slice(s![..k, ..]).to_owned(),
            singular_values: self.singular_values[..k].to_vec(),
            explained_variance: self.explained_variance,
        }
    }
}

/// Mean-centred PCA keeping the top `k` directions.
///
/// Computed from the eigendecomposition of the `grid x grid` scatter matrix, so the
/// cost is linear in the number of rows.
pub fn fit_pca(data: ArrayView2<f64>, k: usize, quantity: &str) -> Result<ProfileBasis> {
    let (n, d) = data.dim();
    if k > d {
        return Err(Error::Config(format!("k = {k} exceeds profile length {d}")));
    }
    if n <= k {
        return Err(Error::Data(format!("PCA for {quantity} needs more than {k} rows, got {n}")));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pca input"));
    }
    let mean = data.mean_axis(Axis(0)).unwrap();
    let centered = &data - &mean.view().insert_axis(Axis(0));
    let scatter = centered.t().dot(&centered);
    let m = DMatrix::from_fn(d, d, |i, j| scatter[(i, j)]);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();

    let mut components = Array2::zeros((k, d));
    let mut singular_values = Vec::with_capacity(k);
    for (row, &idx) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let pivot = (0..d)
            .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a)))
            .unwrap();
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[(row, j)] = sign * v[j];
        }
        singular_values.push(eig.eigenvalues[idx].max(0.0).sqrt());
    }

    if top <= 0.0 {
        log::warn!("{quantity}: data has zero variance; explained variance set to 1 by convention");
        return Ok(ProfileBasis {
            quantity: quantity.to_string(),
            mean,
            components,
            singular_values,
            explained_variance: 1.0,
        });
    }
    let rank = eig.eigenvalues.iter().filter(|&&v| v > RANK_TOL * top).count();
    if rank < k {
        return Err(Error::Data(format!(
            "PCA for {quantity}: data rank {rank} is below requested k = {k}"
        )));
    }
    let mut basis = ProfileBasis {
        quantity: quantity.to_string(),
        mean,
        components,
        singular_values,
        explained_variance: 0.0,
    };
    basis.explained_variance = if total > 0.0 {
        explained_variance(&basis, data)?
    } else {
        1.0
    };
    Ok(basis)
}

/// `1 - |X - recon|^2 / |X - mean|^2`, with 1 for zero-variance data.
pub fn explained_variance(basis: &ProfileBasis, data: ArrayView2<f64>) -> Result<f64> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("explained variance input"));
    }
    let recon = basis.reconstruct_rows(basis.project_rows(data)?.view())?;
    let resid: f64 = (&data - &recon).iter().map(|v| v * v).sum();
    let total: f64 = (&data - &basis.mean.view().insert_axis(Axis(0)))
        .iter()
        .map(|v| v * v)
        .sum();
    if total == 0.0 {
        log::warn!("explained variance of zero-variance data set to 1 by convention");
        return Ok(1.0);
    }
    Ok(1.0 - resid / total)
}

/// The six profile bases; maps the 203-column raw state to the 25-column reduced state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateCodec {
    pub bases: Vec<ProfileBasis>,
}

impl StateCodec {
    /// Fits each profile basis on the rows of `raw` (n x 203).
    pub fn fit(raw: ArrayView2<f64>) -> Result<Self> {
        check_dim("state codec fit", RAW_STATE_DIM, raw.ncols())?;
        let bases = Profile::ALL
            .iter()
            .map(|p| fit_pca(raw.slice(s![.., p.raw_range()]), p.components(), p.name()))
            .collect::<Result<Vec<_>>>()?;
        Ok(StateCodec { bases })
    }

    pub fn basis(&self, p: Profile) -> &ProfileBasis {
        &self.bases[p.index()]
    }

    pub fn rotation(&self) -> &ProfileBasis {
        self.basis(Profile::Rotation)
    }

    pub fn encode_rows(&self, raw: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim("state codec encode", RAW_STATE_DIM, raw.ncols())?;
        let mut out = Array2::zeros((raw.nrows(), REDUCED_STATE_DIM));
        let ns = SCALAR_NAMES.len();
        out.slice_mut(s![.., ..ns]).assign(&raw.slice(s![.., ..ns]));
        for p in Profile::ALL {
            let c = self.basis(p).project_rows(raw.slice(s![.., p.raw_range()]))?;
            out.slice_mut(s![.., p.reduced_range()]).assign(&c);
        }
        Ok(out)
    }

    pub fn encode(&self, raw: ArrayView1<f64>) -> Result<Array1<f64>> {
        Ok(self
            .encode_rows(raw.insert_axis(Axis(0)))?
            .index_axis_move(Axis(0), 0))
    }

    /// Raw 203-vector whose profiles are the reconstructions of the reduced coefficients.
    pub fn decode(&self, reduced: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_dim("state codec decode", REDUCED_STATE_DIM, reduced.len())?;
        let mut out = Array1::zeros(RAW_STATE_DIM);
        let ns = SCALAR_NAMES.len();
        out.slice_mut(s![..ns]).assign(&reduced.slice(s![..ns]));
        for p in Profile::ALL {
            let prof = self.basis(p).from_components(reduced.slice(s![p.reduced_range()]))?;
            out.slice_mut(s![p.raw_range()]).assign(&prof);
        }
        Ok(out)
    }

    /// 33-point rotation profile from a reduced state.
    pub fn rotation_profile(&self, reduced: &[f64]) -> Result<Array1<f64>> {
        check_dim("rotation decode", REDUCED_STATE_DIM, reduced.len())?;
        let r = Profile::Rotation.reduced_range();
        self.rotation().from_components(ArrayView1::from(&reduced[r]))
    }

    pub fn to_blob(&self) -> Blob {
        let mut data = Vec::new();
        for b in &self.bases {
            data.extend(b.mean.iter());
            data.extend(b.components.iter());
            data.extend(b.singular_values.iter());
            data.push(b.explained_variance);
        }
        let mut blob = Blob::new("pca", &data).with("grid", GRID);
        for b in &self.bases {
            blob = blob.with(&format!("k.{}", b.quantity), b.k());
        }
        blob
    }

    pub fn from_blob(blob: &Blob, path: &Path) -> Result<Self> {
        let grid: usize = blob.parse("grid", path)?;
        if grid != GRID {
            return Err(Error::schema(path, format!("grid {grid}, expected {GRID}")));
        }
        let mut pos = 0;
        let mut take = |n: usize| -> Result<&[f64]> {
            let end = pos + n;
            let out = blob
                .data
                .get(pos..end)
                .ok_or_else(|| Error::schema(path, "pca payload too short"))?;
            pos = end;
            Ok(out)
        };
        let mut bases = Vec::new();
        for p in Profile::ALL {
            let k: usize = blob.parse(&format!("k.{}", p.name()), path)?;
            if k != p.components() {
                return Err(Error::schema(path, format!("{} has k = {k}, expected {}", p.name(), p.components())));
            }
            let mean = Array1::from(take(grid)?.to_vec());
            let components = Array2::from_shape_vec((k, grid), take(k * grid)?.to_vec()).unwrap();
            let singular_values = take(k)?.to_vec();
            let explained_variance = take(1)?[0];
            bases.push(ProfileBasis {
                quantity: p.name().to_string(),
                mean,
                components,
                singular_values,
                explained_variance,
            });
        }
        if pos != blob.data.len() {
            return Err(Error::schema(path, "trailing values in pca payload"));
        }
        Ok(StateCodec { bases })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn affine_data(n: usize, d: usize, k: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dirs = Array2::from_shape_fn((k, d), |_| rng.random_range(-1.0..1.0));
        let offset = Array1::from_shape_fn(d, |_| rng.random_range(-5.0..5.0));
        let coeffs = Array2::from_shape_fn((n, k), |_| rng.random_range(-3.0..3.0));
        coeffs.dot(&dirs) + &offset.insert_axis(Axis(0))
    }

    #[test]
    fn affine_subspace_is_fully_explained() {
        let x = affine_data(200, 33, 3, 1);
        let b = fit_pca(x.view(), 3, "t").unwrap();
        assert!(b.explained_variance >= 1.0 - 1e-10);
        let gram = b.components.dot(&b.components.t());
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(gram[(i, j)], if i == j { 1.0 } else { 0.0 }, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn sign_convention_and_mean_coeffs() {
        let x = affine_data(100, 33, 2, 2);
        let b = fit_pca(x.view(), 2, "t").unwrap();
        for row in b.components.rows() {
            let (imax, _) = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .unwrap();
            assert!(row[imax] > 0.0);
        }
        let c = b.to_components(b.mean.view()).unwrap();
        assert!(c.iter().all(|v| v.abs() < 1e-12));
        let p = &b.mean + &b.components.row(0);
        let c = b.to_components(p.view()).unwrap();
        assert_abs_diff_eq!(c[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rank_deficiency_reports_rank() {
        let x = affine_data(50, 33, 2, 3);
        let err = fit_pca(x.view(), 4, "t").unwrap_err().to_string();
        assert!(err.contains("rank 2"), "{err}");
    }

    #[test]
    fn constant_data_convention() {
        let row = Array1::from_shape_fn(33, |j| j as f64 * 0.5);
        let x = Array2::from_shape_fn((10, 33), |(_, j)| row[j]);
        let b = fit_pca(x.view(), 1, "t").unwrap();
        assert_eq!(b.mean, row);
        assert_eq!(b.explained_variance, 1.0);
        assert_abs_diff_eq!(b.components.row(0).dot(&b.components.row(0)), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn complete_and_empty_bases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array2::from_shape_fn((80, 33), |_| rng.random_range(-1.0..1.0));
        let full = fit_pca(x.view(), 33, "t").unwrap();
        assert_abs_diff_eq!(explained_variance(&full, x.view()).unwrap(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(explained_variance(&full.truncated(0), x.view()).unwrap(), 0.0, epsilon = 1e-12);
    }
}
