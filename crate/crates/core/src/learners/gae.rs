//! Generalized advantage estimation.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Advantages over one reward/value stream. `values` carries one trailing
/// bootstrap entry; `dones[t]` cuts both the bootstrap and the trace after
/// step `t`.
pub fn gae_advantages<T: Real>(rewards: &[T], values: &[T], dones: &[bool], gamma: T, lambda: T) -> Result<Vec<T>> {
    let n = rewards.len();
    if values.len() != n + 1 {
        return Err(Error::Shape { expected: n + 1, got: values.len() });
    }
    if dones.len() != n {
        return Err(Error::Shape { expected: n, got: dones.len() });
    }
    let next: Vec<T> = (0..n).map(|t| if dones[t] { T::zero() } else { values[t + 1] }).collect();
    gae_with_bootstrap(rewards, &values[..n], &next, dones, gamma, lambda)
}

/// Advantages when each step carries its own bootstrap value
/// `next_values[t]` (zero at a terminal, the critic at a truncation or at
/// the end of the segment). `cut[t]` stops the trace after step `t`.
pub fn gae_with_bootstrap<T: Real>(
    rewards: &[T],
    values: &[T],
    next_values: &[T],
    cut: &[bool],
    gamma: T,
    lambda: T,
) -> Result<Vec<T>> {
    let n = rewards.len();
    for len in [values.len(), next_values.len(), cut.len()] {
        if len != n {
            return Err(Error::Shape { expected: n, got: len });
        }
    }
    let mut adv = vec![T::zero(); n];
    let mut running = T::zero();
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_values[t] - values[t];
        let carry = if cut[t] || t + 1 == n { T::zero() } else { running };
        running = delta + gamma * lambda * carry;
        adv[t] = running;
    }
    Ok(adv)
}

/// Mean zero, unit population variance; left as is when the spread is
/// negligible.
pub fn normalize_advantages<T: Real>(adv: &mut [T]) {
    if adv.len() < 2 {
        return;
    }
    let n = T::lit(adv.len() as f64);
    let mean = adv.iter().copied().sum::<T>() / n;
    let var = adv.iter().map(|&a| (a - mean) * (a - mean)).sum::<T>() / n;
    let std = var.sqrt();
    if std < T::lit(1e-8) {
        adv.iter_mut().for_each(|a| *a -= mean);
        return;
    }
    adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_recursion() {
        let a = gae_advantages::<f64>(&[1.0, 1.0], &[0.0, 0.0, 0.0], &[false, false], 0.9, 0.5).unwrap();
        assert!((a[1] - 1.0).abs() < 1e-15);
        assert!((a[0] - 1.45).abs() < 1e-15);
    }

    #[test]
    fn terminal_stops_bootstrap() {
        let a = gae_advantages::<f64>(&[1.0, 2.0], &[0.5, 0.25, 10.0], &[true, true], 0.9, 0.95).unwrap();
        assert!((a[0] - 0.5).abs() < 1e-15);
        assert!((a[1] - 1.75).abs() < 1e-15);
    }

    #[test]
    fn shape_errors() {
        assert!(gae_advantages(&[1.0], &[0.0], &[false], 0.9, 0.5).is_err());
        assert!(gae_with_bootstrap(&[1.0], &[0.0], &[0.0, 0.0], &[false], 0.9, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn lambda_zero_is_td_error(
            r in prop::collection::vec(-1.0f64..1.0, 1..8),
            seed in prop::collection::vec(-1.0f64..1.0, 9),
        ) {
            let v = &seed[..=r.len()];
            let dones = vec![false; r.len()];
            let a = gae_advantages(&r, v, &dones, 0.9, 0.0).unwrap();
            for t in 0..r.len() {
                prop_assert!((a[t] - (r[t] + 0.9 * v[t + 1] - v[t])).abs() < 1e-12);
            }
        }

        #[test]
        fn lambda_one_is_return_minus_value(
            r in prop::collection::vec(-1.0f64..1.0, 1..8),
            seed in prop::collection::vec(-1.0f64..1.0, 9),
        ) {
            let n = r.len();
            let v = &seed[..=n];
            let dones = vec![false; n];
            let a = gae_advantages(&r, v, &dones, 0.9, 1.0).unwrap();
            for t in 0..n {
                let mut g = 0.9f64.powi((n - t) as i32) * v[n];
                for k in t..n {
                    g += 0.9f64.powi((k - t) as i32) * r[k];
                }
                prop_assert!((a[t] - (g - v[t])).abs() < 1e-12);
            }
        }

        #[test]
        fn normalized_advantages_are_standardized(xs in prop::collection::vec(-5.0f64..5.0, 2..30)) {
            let mut a = xs.clone();
            normalize_advantages(&mut a);
            let mean = a.iter().sum::<f64>() / a.len() as f64;
            prop_assert!(mean.abs() < 1e-9);
        }
    }
}
