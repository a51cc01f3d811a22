use ndarray::Array2;

use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

/// Log-variance outputs are clamped to this interval.
pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 4.0;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[inline]
pub fn clamp_logvar<T: Scalar>(lv: T) -> T {
    lv.max(T::of(LOGVAR_MIN)).min(T::of(LOGVAR_MAX))
}

/// Diagonal Gaussian negative log-likelihood summed over dimensions.
pub fn gaussian_nll<T: Scalar>(x: &[T], mean: &[T], logvar: &[T]) -> Result<T> {
    check_dim("nll mean", x.len(), mean.len())?;
    check_dim("nll logvar", x.len(), logvar.len())?;
    let half = T::of(0.5);
    let c = T::of(LN_2PI);
    let mut total = T::zero();
    for ((&xi, &mi), &li) in x.iter().zip(mean).zip(logvar) {
        if !(xi.is_finite() && mi.is_finite()) || li.is_nan() {
            return Err(Error::NonFinite("gaussian_nll input"));
        }
        let lv = clamp_logvar(li);
        let d = xi - mi;
        total += half * (lv + d * d * (-lv).exp() + c);
    }
    Ok(total)
}

/// Mean squared error over weighted rows: `sum_i w_i * |pred_i - target_i|^2 / (sum_i w_i * dim)`.
///
/// Returns the loss and its gradient with respect to `pred`.
pub fn mse_rows<T: Scalar>(pred: &Array2<T>, target: &Array2<T>, weights: &[T]) -> Result<(T, Array2<T>)> {
    check_dim("mse rows", pred.nrows(), target.nrows())?;
    check_dim("mse cols", pred.ncols(), target.ncols())?;
    check_dim("mse weights", pred.nrows(), weights.len())?;
    let wsum: T = weights.iter().copied().sum::<T>() * T::of(pred.ncols() as f64);
    let mut grad = pred - target;
    let mut loss = T::zero();
    if wsum <= T::zero() {
        grad.fill(T::zero());
        return Ok((loss, grad));
    }
    for (mut row, &w) in grad.rows_mut().into_iter().zip(weights) {
        for g in row.iter_mut() {
            loss += w * *g * *g;
            *g *= T::of(2.0) * w / wsum;
        }
    }
    Ok((loss / wsum, grad))
}

/// Weighted mean (over rows) of the per-row Gaussian NLL, with gradients for
/// mean and raw log-variance. Gradients vanish where the clamp is active.
pub fn nll_rows<T: Scalar>(
    target: &Array2<T>,
    mean: &Array2<T>,
    logvar_raw: &Array2<T>,
    weights: &[T],
) -> Result<(T, Array2<T>, Array2<T>)> {
    check_dim("nll rows", target.nrows(), mean.nrows())?;
    check_dim("nll rows", target.nrows(), logvar_raw.nrows())?;
    check_dim("nll weights", target.nrows(), weights.len())?;
    let wsum: T = weights.iter().copied().sum();
    let mut dmean = Array2::zeros(mean.raw_dim());
    let mut dlv = Array2::zeros(mean.raw_dim());
    if wsum <= T::zero() {
        return Ok((T::zero(), dmean, dlv));
    }
    let half = T::of(0.5);
    let c = T::of(LN_2PI);
    let (lo, hi) = (T::of(LOGVAR_MIN), T::of(LOGVAR_MAX));
    let mut loss = T::zero();
    for (i, &w) in weights.iter().enumerate() {
        if w == T::zero() {
            continue;
        }
        let scale = w / wsum;
        for j in 0..target.ncols() {
            let x = target[(i, j)];
            let m = mean[(i, j)];
            let raw = logvar_raw[(i, j)];
            if !(x.is_finite() && m.is_finite()) || raw.is_nan() {
                return Err(Error::NonFinite("nll_rows input"));
            }
            let lv = clamp_logvar(raw);
            let inv = (-lv).exp();
            let d = x - m;
            loss += scale * half * (lv + d * d * inv + c);
            dmean[(i, j)] = -scale * d * inv;
            if raw > lo && raw < hi {
                dlv[(i, j)] = scale * half * (T::one() - d * d * inv);
            }
        }
    }
    Ok((loss, dmean, dlv))
}

/// Scales `grads` so its L2 norm is at most `max_norm`; returns the pre-clip norm.
pub fn clip_grad_norm<T: Scalar>(grads: &mut [T], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.f64() * g.f64()).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let f = T::of(max_norm / norm);
        grads.iter_mut().for_each(|g| *g *= f);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn nll_examples() {
        let v = gaussian_nll(&[0.3], &[0.3], &[0.0]).unwrap();
        assert_abs_diff_eq!(v, 0.918_938_533_204_672_7, epsilon = 1e-12);
        let v = gaussian_nll(&[1.0], &[0.0], &[0.0]).unwrap();
        assert_abs_diff_eq!(v, 1.418_938_533_204_672_7, epsilon = 1e-12);
        let a = gaussian_nll(&[1.0], &[0.2], &[0.5]).unwrap();
        let b = gaussian_nll(&[-2.0], &[0.1], &[-1.0]).unwrap();
        let ab = gaussian_nll(&[1.0, -2.0], &[0.2, 0.1], &[0.5, -1.0]).unwrap();
        assert_abs_diff_eq!(ab, a + b, epsilon = 1e-12);
    }

    #[test]
    fn nll_rejects_nan() {
        assert!(matches!(gaussian_nll(&[f64::NAN], &[0.0], &[0.0]), Err(Error::NonFinite(_))));
        assert!(gaussian_nll(&[0.0], &[0.0], &[f64::NAN]).is_err());
    }

    #[test]
    fn nll_clamps_logvar() {
        let a = gaussian_nll(&[0.0], &[0.0], &[-50.0]).unwrap();
        let b = gaussian_nll(&[0.0], &[0.0], &[LOGVAR_MIN]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nll_minimized_at_mean() {
        let x = 0.7;
        let lv = 0.3;
        let best = (-400..=400)
            .map(|k| x + k as f64 * 0.005)
            .min_by(|a, b| {
                gaussian_nll(&[x], &[*a], &[lv])
                    .unwrap()
                    .partial_cmp(&gaussian_nll(&[x], &[*b], &[lv]).unwrap())
                    .unwrap()
            })
            .unwrap();
        assert_abs_diff_eq!(best, x, epsilon = 1e-12);
    }

    #[test]
    fn mse_rows_weights() {
        let p = Array2::from_shape_vec((2, 1), vec![1.0, 5.0]).unwrap();
        let t = Array2::from_shape_vec((2, 1), vec![0.0, 0.0]).unwrap();
        let (l, g) = mse_rows(&p, &t, &[1.0, 0.0]).unwrap();
        assert_eq!(l, 1.0);
        assert_eq!(g[(1, 0)], 0.0);
        assert_eq!(g[(0, 0)], 2.0);
    }

    #[test]
    fn clip_norm() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert_abs_diff_eq!(g[0], 0.6, epsilon = 1e-15);
    }
}
