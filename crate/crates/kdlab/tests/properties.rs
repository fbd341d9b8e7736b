//! Randomized invariants for the numeric core.

use kdlab::data;
use kdlab::diagnostics::{ece, entropy, pcc};
use kdlab::losses::{
    delta_inf_grad, inf_grad_bound, kl_grad, kl_grad_inf, label_smooth_targets, mse_grad,
    mse_loss,
};
use kdlab::network::Mlp;
use kdlab::numerics::{softened_softmax, Matrix};
use proptest::prelude::*;

fn logits(k: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    k.prop_flat_map(|n| proptest::collection::vec(-5.0..5.0f64, n))
}

fn logit_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..10).prop_flat_map(|n| {
        (
            proptest::collection::vec(-5.0..5.0f64, n),
            proptest::collection::vec(-5.0..5.0f64, n),
        )
    })
}

proptest! {
    #[test]
    fn softmax_normalizes_and_shift_invariant(
        z in logits(2..12),
        tau in 0.05..50.0f64,
        c in -40.0..40.0f64,
    ) {
        let p = softened_softmax(&z, tau).unwrap();
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));

        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        let q = softened_softmax(&shifted, tau).unwrap();
        for (a, b) in p.iter().zip(q.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kl_gradient_is_zero_sum((z_s, z_t) in logit_pair(), tau in 0.5..20.0f64) {
        let g = kl_grad(&z_s, &z_t, tau).unwrap();
        prop_assert!(g.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn inf_gradient_respects_its_bound((z_s, z_t) in logit_pair()) {
        let g = kl_grad_inf(&z_s, &z_t).unwrap();
        let b = inf_grad_bound(&z_s, &z_t).unwrap();
        for (gi, bi) in g.iter().zip(b.iter()) {
            prop_assert!(gi.abs() <= *bi, "|{gi}| > {bi}");
        }
    }

    #[test]
    fn mse_plus_drift_term_is_the_inf_gradient((z_s, z_t) in logit_pair()) {
        let k = z_s.len() as f64;
        let g_mse = mse_grad(&z_s, &z_t).unwrap();
        let g_delta = delta_inf_grad(&z_s, &z_t).unwrap();
        let g_inf = kl_grad_inf(&z_s, &z_t).unwrap();
        for i in 0..z_s.len() {
            let surrogate = g_mse[i] / (2.0 * k) + g_delta[i];
            prop_assert!((surrogate - g_inf[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn mse_is_symmetric_and_non_negative((z_s, z_t) in logit_pair()) {
        let a = mse_loss(&z_s, &z_t).unwrap();
        let b = mse_loss(&z_t, &z_s).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn entropy_is_bounded_by_log_k(z in logits(2..12), tau in 0.1..20.0f64) {
        let p = softened_softmax(&z, tau).unwrap();
        let h = entropy(&p).unwrap();
        prop_assert!(h >= 0.0);
        prop_assert!(h <= (p.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn smoothed_targets_form_a_distribution(
        k in 2usize..12,
        y_frac in 0.0..1.0f64,
        beta in 0.0..0.99f64,
    ) {
        let y = ((y_frac * k as f64) as usize).min(k - 1);
        let t = label_smooth_targets(y, beta, k).unwrap();
        prop_assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(t.iter().all(|v| *v >= 0.0));
        prop_assert_eq!(t[y], 1.0 - beta);
        for (i, v) in t.iter().enumerate() {
            if i != y {
                prop_assert_eq!(*v, beta / (k - 1) as f64);
            }
        }
    }

    #[test]
    fn pcc_lies_in_unit_interval(
        pairs in proptest::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 3..50),
    ) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        if let Ok(r) = pcc(&a, &b) {
            prop_assert!(r.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn ece_lies_in_unit_interval(
        outcomes in proptest::collection::vec((0.0..=1.0f64, any::<bool>()), 1..100),
        bins in 1usize..20,
    ) {
        let (value, rel) = ece(&outcomes, bins).unwrap();
        prop_assert!((0.0..=1.0).contains(&value));
        prop_assert_eq!(rel.counts.iter().sum::<usize>(), outcomes.len());
    }

    #[test]
    fn dataset_csv_round_trips(
        rows in proptest::collection::vec(
            proptest::collection::vec(-100.0..100.0f64, 3),
            3..30,
        ),
        flip in any::<bool>(),
        seed in any::<u64>(),
    ) {
        // Labels cover all three classes, so the loader infers the same K.
        let n = rows.len();
        let x = Matrix::from_rows(&rows).unwrap();
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let ds = data::Dataset::new(x, labels, 3).unwrap();
        let ds = if flip {
            data::inject_symmetric_noise(&ds, 0.5, seed).unwrap()
        } else {
            ds
        };
        let restored = data::from_csv(&data::to_csv(&ds)).unwrap();
        prop_assert_eq!(ds, restored);
    }

    #[test]
    fn checkpoint_json_round_trips(seed in any::<u64>()) {
        let net = Mlp::init(&[3, 5, 4], seed).unwrap();
        let json = net.to_checkpoint_json();
        let restored = Mlp::from_checkpoint_json(&json).unwrap();
        prop_assert_eq!(&net, &restored);
        prop_assert_eq!(json, restored.to_checkpoint_json());
    }
}
