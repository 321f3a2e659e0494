use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::schedule::NoiseSchedule;
use crate::{ModelError, Result};

/// Forward Gaussian corruption: z_t = z_0 + sigma(t) * eps. Returns the
/// noise, which is the regression target.
pub fn forward_num(
    z0: &[f64],
    t: f64,
    schedule: &NoiseSchedule,
    rng: &mut impl Rng,
) -> (Vec<f64>, Vec<f64>) {
    let sigma = schedule.sigma_num(t);
    let mut z_t = Vec::with_capacity(z0.len());
    let mut eps = Vec::with_capacity(z0.len());
    for &z in z0 {
        let e: f64 = StandardNormal.sample(rng);
        eps.push(e);
        z_t.push(z + sigma * e);
    }
    (z_t, eps)
}

/// Forward masking: each value independently survives with probability
/// alpha_t, otherwise becomes `mask`.
pub fn forward_cat(c0: &[u32], t: f64, mask: u32, schedule: &NoiseSchedule, rng: &mut impl Rng) -> Vec<u32> {
    let alpha = schedule.alpha_cat(t);
    c0.iter()
        .map(|&c| {
            debug_assert_ne!(c, mask, "forward input must be unmasked");
            if rng.random::<f64>() < alpha {
                c
            } else {
                mask
            }
        })
        .collect()
}

/// One reverse transition for a single categorical state. Unmasked states
/// carry over unchanged; a masked state unmasks to category j with
/// probability ((alpha_s - alpha_t)/(1 - alpha_t)) * probs_c0[j] and stays
/// masked otherwise.
pub fn reverse_cat_step(
    c_t: u32,
    t: f64,
    s: f64,
    probs_c0: &[f64],
    mask: u32,
    schedule: &NoiseSchedule,
    rng: &mut impl Rng,
) -> Result<u32> {
    if c_t != mask {
        return Ok(c_t);
    }
    let sum: f64 = probs_c0.iter().sum();
    if !(0.999..=1.001).contains(&sum) || probs_c0.iter().any(|p| *p < -1e-12) {
        return Err(ModelError::InvalidSimplex { sum });
    }
    // s = 0 is the data endpoint: alpha = 1, unmasking is certain.
    let alpha_s = if s <= 0.0 { 1.0 } else { schedule.alpha_cat(s) };
    let alpha_t = schedule.alpha_cat(t);
    let p_unmask = ((alpha_s - alpha_t) / (1.0 - alpha_t)).clamp(0.0, 1.0);
    if rng.random::<f64>() >= p_unmask {
        return Ok(mask);
    }
    // Sample from probs_c0 (renormalized against float slack).
    let mut u = rng.random::<f64>() * sum;
    for (j, &p) in probs_c0.iter().enumerate() {
        u -= p;
        if u <= 0.0 {
            return Ok(j as u32);
        }
    }
    Ok((probs_c0.len() - 1) as u32)
}

/// Churn noise injection: lift the state from sigma(t) to
/// sigma_hat = sigma(t) * (1 + churn), capped at sigma_max. Returns the new
/// state and the effective time of sigma_hat.
pub fn churn_inject(
    z_t: &[f64],
    t: f64,
    churn: f64,
    schedule: &NoiseSchedule,
    rng: &mut impl Rng,
) -> (Vec<f64>, f64) {
    let sigma_t = schedule.sigma_num(t);
    let sigma_hat = (sigma_t * (1.0 + churn)).min(schedule.sigma_max);
    let extra = (sigma_hat * sigma_hat - sigma_t * sigma_t).max(0.0).sqrt();
    let z = z_t
        .iter()
        .map(|&z| {
            let xi: f64 = StandardNormal.sample(rng);
            z + extra * xi
        })
        .collect();
    (z, schedule.t_of_sigma(sigma_hat).min(1.0))
}

/// One reverse transition for the numeric coordinates, Euler-discretized
/// with the score expressed through the predicted noise. With churn > 0 the
/// state is first re-noised to sigma_hat = sigma_t * (1 + churn) and the
/// step runs from there (eps_pred is the caller's estimate at z_t).
#[allow(clippy::too_many_arguments)]
pub fn reverse_num_step(
    z_t: &[f64],
    t: f64,
    s: f64,
    eps_pred: &[f64],
    churn: f64,
    schedule: &NoiseSchedule,
    rng: &mut impl Rng,
) -> Vec<f64> {
    debug_assert_eq!(z_t.len(), eps_pred.len());
    let sigma_t = schedule.sigma_num(t);
    let sigma_s = if s <= 0.0 {
        schedule.sigma_min
    } else {
        schedule.sigma_num(s)
    };
    if churn > 0.0 {
        let sigma_hat = (sigma_t * (1.0 + churn)).min(schedule.sigma_max);
        let extra = (sigma_hat * sigma_hat - sigma_t * sigma_t).max(0.0).sqrt();
        z_t.iter()
            .zip(eps_pred)
            .map(|(&z, &e)| {
                let xi: f64 = StandardNormal.sample(rng);
                z + extra * xi - (sigma_hat - sigma_s) * e
            })
            .collect()
    } else {
        z_t.iter()
            .zip(eps_pred)
            .map(|(&z, &e)| z - (sigma_t - sigma_s) * e)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyper::HyperParams;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn schedule() -> NoiseSchedule {
        NoiseSchedule::from_hyper(&HyperParams::default())
    }

    #[test]
    fn forward_num_zero_noise_at_eps_zero() {
        // With eps = 0 the state is unchanged; check via the returned eps.
        let s = schedule();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (z_t, eps) = forward_num(&[1.0, -2.0], 0.7, &s, &mut rng);
        let sigma = s.sigma_num(0.7);
        for i in 0..2 {
            assert!((z_t[i] - ([1.0, -2.0][i] + sigma * eps[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_num_variance_matches_schedule() {
        let s = schedule();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let z0 = vec![0.5; n];
        let (z_t, _) = forward_num(&z0, 0.7, &s, &mut rng);
        let sigma2 = s.sigma_num(0.7).powi(2);
        let mean = z_t.iter().sum::<f64>() / n as f64;
        let var = z_t.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / n as f64;
        assert!(
            (var - sigma2).abs() / sigma2 < 0.02,
            "var {var} vs sigma^2 {sigma2}"
        );
    }

    #[test]
    fn forward_num_small_t_stays_close() {
        let s = schedule();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (z_t, _) = forward_num(&vec![3.0; 1000], 0.0, &s, &mut rng);
        for z in z_t {
            assert!((z - 3.0).abs() <= 5.0 * s.sigma_min);
        }
    }

    #[test]
    fn forward_cat_mask_fractions() {
        let s = schedule();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c0 = vec![1u32; 10_000];
        // t = delta: masked fraction about delta.
        let c = forward_cat(&c0, s.delta, 9, &s, &mut rng);
        let frac = c.iter().filter(|&&x| x == 9).count() as f64 / c.len() as f64;
        assert!(frac < 0.01, "masked fraction {frac} at t=delta");
        // t = 1: everything masked.
        let c = forward_cat(&c0, 1.0, 9, &s, &mut rng);
        assert!(c.iter().all(|&x| x == 9));
        // t = 0.5: masked fraction 0.5 +- 0.02.
        let c = forward_cat(&c0, 0.5, 9, &s, &mut rng);
        let frac = c.iter().filter(|&&x| x == 9).count() as f64 / c.len() as f64;
        assert!((frac - 0.5).abs() < 0.02, "masked fraction {frac} at t=0.5");
    }

    #[test]
    fn reverse_cat_carryover() {
        let s = schedule();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let c = reverse_cat_step(2, 0.8, 0.4, &[0.5, 0.25, 0.25], 3, &s, &mut rng).unwrap();
            assert_eq!(c, 2, "unmasked values never change");
        }
    }

    #[test]
    fn reverse_cat_plugin_probabilities() {
        // alpha_s = 0.6, alpha_t = 0.2 (t = 0.8, s = 0.4), one-hot on class
        // 1: P(mask) = 0.5, P(class 1) = 0.5.
        let s = schedule();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let mut mask_count = 0;
        let mut class1 = 0;
        for _ in 0..n {
            match reverse_cat_step(3, 0.8, 0.4, &[0.0, 1.0, 0.0], 3, &s, &mut rng).unwrap() {
                3 => mask_count += 1,
                1 => class1 += 1,
                other => panic!("impossible class {other}"),
            }
        }
        let p_mask = mask_count as f64 / n as f64;
        let p1 = class1 as f64 / n as f64;
        assert!((p_mask - 0.5).abs() < 0.005, "P(mask) = {p_mask}");
        assert!((p1 - 0.5).abs() < 0.005, "P(class1) = {p1}");
    }

    #[test]
    fn reverse_cat_final_step_unmasks() {
        let s = schedule();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        // Stepping to the data endpoint (s = 0) always unmasks.
        for _ in 0..1000 {
            let c = reverse_cat_step(2, 0.01, 0.0, &[0.7, 0.3], 2, &s, &mut rng).unwrap();
            assert_ne!(c, 2);
        }
    }

    #[test]
    fn reverse_cat_invalid_simplex_rejected() {
        let s = schedule();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let err = reverse_cat_step(2, 0.8, 0.4, &[0.9, 0.9], 2, &s, &mut rng).unwrap_err();
        assert!(matches!(err, ModelError::InvalidSimplex { .. }));
    }

    #[test]
    fn reverse_num_zero_pred_identity() {
        let s = schedule();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let z = reverse_num_step(&[1.0, -2.0], 0.8, 0.4, &[0.0, 0.0], 0.0, &s, &mut rng);
        assert_eq!(z, vec![1.0, -2.0]);
    }

    #[test]
    fn reverse_num_single_step_inversion() {
        // One step t=1 -> s=delta with the oracle eps recovers z0 up to
        // O(sigma_delta).
        let s = schedule();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z0 = 1.7;
        let (z1, eps) = forward_num(&[z0], 1.0, &s, &mut rng);
        let z = reverse_num_step(&z1, 1.0, s.delta, &eps, 0.0, &s, &mut rng);
        assert!((z[0] - z0).abs() <= 10.0 * s.sigma_num(s.delta));
    }
}
