use crate::error::{check_dim, Result};

/// Generalized advantage estimates for one uninterrupted trajectory.
///
/// `values` has one more entry than `rewards`: the last is the bootstrap value.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    check_dim("gae values", rewards.len() + 1, values.len())?;
    let n = rewards.len();
    let next: Vec<f64> = values[1..].to_vec();
    let mut ends = vec![false; n];
    if n > 0 {
        ends[n - 1] = true;
    }
    gae_segments(rewards, &values[..n], &next, &ends, gamma, lambda)
}

/// GAE over concatenated segments.
///
/// `next_values[t]` is the value of the state reached after step `t` (the
/// bootstrap at a truncation, zero at a true terminal). `ends[t]` cuts the
/// advantage recursion after step `t`.
pub fn gae_segments(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    ends: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<Vec<f64>> {
    let n = rewards.len();
    check_dim("gae values", n, values.len())?;
    check_dim("gae next values", n, next_values.len())?;
    check_dim("gae ends", n, ends.len())?;
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        if ends[t] {
            running = 0.0;
        }
        let delta = rewards[t] + gamma * next_values[t] - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    Ok(adv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limits() {
        let r = [1.0, -2.0, 0.5];
        let v = [0.3, 0.1, -0.4, 0.7];
        let a = gae(&r, &v, 0.9, 0.0).unwrap();
        for t in 0..3 {
            assert!((a[t] - (r[t] + 0.9 * v[t + 1] - v[t])).abs() < 1e-15);
        }
        let a = gae(&r, &v, 0.0, 0.7).unwrap();
        for t in 0..3 {
            assert!((a[t] - (r[t] - v[t])).abs() < 1e-15);
        }
        assert!(gae(&r, &v[..3], 0.9, 0.9).is_err());
    }

    #[test]
    fn segments_do_not_leak() {
        let r = [1.0, 1.0, 1.0, 1.0];
        let v = [0.0; 4];
        let nv = [0.0, 5.0, 0.0, 0.0];
        let a = gae_segments(&r, &v, &nv, &[false, true, false, true], 0.5, 1.0).unwrap();
        let first = gae(&r[..2], &[0.0, 0.0, 5.0], 0.5, 1.0).unwrap();
        let second = gae(&r[2..], &[0.0, 0.0, 0.0], 0.5, 1.0).unwrap();
        assert_eq!(&a[..2], &first[..]);
        assert_eq!(&a[2..], &second[..]);
    }
}
