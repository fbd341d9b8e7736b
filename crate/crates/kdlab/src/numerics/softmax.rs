//! Temperature-scaled softmax and log-softmax, stabilized by max subtraction.

use crate::error::{Error, Result};

fn check_inputs(z: &[f64], tau: f64) -> Result<()> {
    if z.is_empty() {
        return Err(Error::invalid("softmax input must be non-empty"));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("softmax input must be finite"));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid(format!(
            "temperature must be positive and finite, got {tau}"
        )));
    }
    Ok(())
}

/// Softened probability vector: `p_k = exp(z_k/tau) / sum_j exp(z_j/tau)`.
///
/// Max subtraction keeps the exponentials in range; it is exact because the
/// softmax is invariant under a constant shift of the scaled logits.
pub fn softened_softmax(z: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_inputs(z, tau)?;
    let scaled: Vec<f64> = z.iter().map(|v| v / tau).collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scaled.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    Ok(out)
}

/// Elementwise log of `softened_softmax`, via the log-sum-exp trick.
pub fn log_softmax(z: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_inputs(z, tau)?;
    let scaled: Vec<f64> = z.iter().map(|v| v / tau).collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = scaled
        .iter()
        .map(|v| (v - max).exp())
        .sum::<f64>()
        .ln();
    Ok(scaled.iter().map(|v| v - max - log_sum).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn uniform_logits_give_uniform_probabilities() {
        let p = softened_softmax(&[0.0, 0.0, 0.0], 1.0).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn ln2_logit_doubles_the_mass() {
        let p = softened_softmax(&[2.0_f64.ln(), 0.0], 1.0).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn huge_temperature_flattens_to_uniform() {
        let p = softened_softmax(&[5.0, -5.0], 1e9).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-8);
        assert!((p[1] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn log_softmax_matches_direct_evaluation() {
        // Two-class case evaluated by hand: z = [1, 0].
        let ls = log_softmax(&[1.0, 0.0], 1.0).unwrap();
        let expected0 = -(1.0 + (-1.0_f64).exp()).ln();
        let expected1 = -1.0 - (1.0 + (-1.0_f64).exp()).ln();
        assert!((ls[0] - expected0).abs() < 1e-12);
        assert!((ls[1] - expected1).abs() < 1e-12);

        let ls = log_softmax(&[0.0, 0.0], 1.0).unwrap();
        assert!((ls[0] + 2.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn exp_of_log_softmax_is_softmax() {
        let mut rng = Rng::new(17);
        for _ in 0..100 {
            let z: Vec<f64> = (0..6).map(|_| rng.uniform(-5.0, 5.0)).collect();
            let tau = rng.uniform(0.2, 8.0);
            let p = softened_softmax(&z, tau).unwrap();
            let ls = log_softmax(&z, tau).unwrap();
            for (pi, li) in p.iter().zip(ls.iter()) {
                assert!((pi - li.exp()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn probabilities_sum_to_one_and_stay_in_range() {
        let mut rng = Rng::new(4);
        for _ in 0..200 {
            let k = 2 + rng.index(9);
            let z: Vec<f64> = (0..k).map(|_| rng.uniform(-50.0, 50.0)).collect();
            let p = softened_softmax(&z, rng.uniform(0.01, 100.0)).unwrap();
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn shift_invariance() {
        let mut rng = Rng::new(9);
        for _ in 0..100 {
            let z: Vec<f64> = (0..5).map(|_| rng.uniform(-5.0, 5.0)).collect();
            let c = rng.uniform(-100.0, 100.0);
            let tau = rng.uniform(0.1, 10.0);
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let a = softened_softmax(&z, tau).unwrap();
            let b = softened_softmax(&shifted, tau).unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn temperature_equals_logit_rescaling() {
        let mut rng = Rng::new(13);
        for _ in 0..100 {
            let z: Vec<f64> = (0..7).map(|_| rng.uniform(-5.0, 5.0)).collect();
            let tau = rng.uniform(0.1, 50.0);
            let rescaled: Vec<f64> = z.iter().map(|v| v / tau).collect();
            let a = softened_softmax(&z, tau).unwrap();
            let b = softened_softmax(&rescaled, 1.0).unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(softened_softmax(&[0.0], 0.0).is_err());
        assert!(softened_softmax(&[0.0], -1.0).is_err());
        assert!(softened_softmax(&[f64::NAN], 1.0).is_err());
        assert!(log_softmax(&[], 1.0).is_err());
    }
}
