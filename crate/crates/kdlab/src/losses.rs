//! Distillation losses and their logit gradients: cross-entropy,
//! temperature-scaled KL with its small- and large-temperature limits, the
//! rescaled KL variant, direct logit regression (MSE), the logit-sum term
//! `delta_inf` separating the two, label smoothing, and the gradient bound
//! for the infinite-temperature limit.

use crate::error::{Error, Result};
use crate::numerics::{argmax, log_softmax, softened_softmax};
use serde::{Deserialize, Serialize};

/// Which distillation term drives the student.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    /// Plain cross-entropy on hard labels; no teacher term.
    #[serde(rename = "ce")]
    CeOnly,
    /// Temperature-scaled KL with the usual tau^2 factor.
    Kl { tau: f64 },
    /// KL with factor max(tau, tau^2), which keeps the gradient alive for tau < 1.
    RescaledKl { tau: f64 },
    /// The closed-form tau -> infinity gradient, used as a training signal directly.
    KlInfGrad,
    /// The tau -> 0 limit: indicator difference of the two argmax classes.
    LabelMatchGrad,
    /// Squared L2 distance between the raw logit vectors.
    Mse,
}

impl LossKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            LossKind::Kl { tau } | LossKind::RescaledKl { tau }
                if !(tau.is_finite() && *tau > 0.0) =>
            {
                Err(Error::invalid(format!(
                    "temperature must be positive and finite, got {tau}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::CeOnly => "ce",
            LossKind::Kl { .. } => "kl",
            LossKind::RescaledKl { .. } => "rescaled_kl",
            LossKind::KlInfGrad => "kl_inf_grad",
            LossKind::LabelMatchGrad => "label_match_grad",
            LossKind::Mse => "mse",
        }
    }

    pub fn tau(&self) -> Option<f64> {
        match self {
            LossKind::Kl { tau } | LossKind::RescaledKl { tau } => Some(*tau),
            _ => None,
        }
    }
}

/// Linear combination `(1 - alpha) * CE + alpha * <distillation term>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillObjective {
    pub alpha: f64,
    #[serde(flatten)]
    pub kind: LossKind,
}

impl DistillObjective {
    pub fn new(alpha: f64, kind: LossKind) -> Result<Self> {
        let obj = DistillObjective { alpha, kind };
        obj.validate()?;
        Ok(obj)
    }

    /// Pure cross-entropy training.
    pub fn ce() -> Self {
        DistillObjective {
            alpha: 0.0,
            kind: LossKind::CeOnly,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.kind == LossKind::CeOnly && self.alpha != 0.0 {
            return Err(Error::invalid(
                "a ce-only objective has no distillation term; alpha must be 0",
            ));
        }
        self.kind.validate()
    }
}

fn check_pair(z_s: &[f64], z_t: &[f64]) -> Result<usize> {
    if z_s.len() != z_t.len() {
        return Err(Error::shape(format!(
            "student has {} logits, teacher has {}",
            z_s.len(),
            z_t.len()
        )));
    }
    if z_s.is_empty() {
        return Err(Error::invalid("logit vectors must be non-empty"));
    }
    if z_s.iter().chain(z_t.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("logits must be finite"));
    }
    Ok(z_s.len())
}

fn check_probs(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::invalid("probability vector must be non-empty"));
    }
    if p.iter().any(|v| !(0.0..=1.0 + 1e-9).contains(v)) {
        return Err(Error::invalid("probabilities must lie in [0, 1]"));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "probabilities must sum to 1, got {sum}"
        )));
    }
    Ok(())
}

/// Cross-entropy against a hard label: `-ln p_y`.
///
/// Returns `+inf` when the label class carries zero mass; finite logits never
/// produce that in the training path.
pub fn ce_loss(p: &[f64], y_index: usize) -> Result<f64> {
    check_probs(p)?;
    if y_index >= p.len() {
        return Err(Error::invalid(format!(
            "label {y_index} out of range for {} classes",
            p.len()
        )));
    }
    Ok(-p[y_index].ln())
}

/// Gradient of the cross-entropy loss with respect to the logits:
/// `softmax(z, 1) - onehot(y)`.
pub fn ce_grad(z: &[f64], y_index: usize) -> Result<Vec<f64>> {
    if y_index >= z.len() {
        return Err(Error::invalid(format!(
            "label {y_index} out of range for {} classes",
            z.len()
        )));
    }
    let mut g = softened_softmax(z, 1.0)?;
    g[y_index] -= 1.0;
    Ok(g)
}

/// Raw KL divergence `KL(p_t(tau) || p_s(tau))` without any temperature factor.
fn base_kl(z_s: &[f64], z_t: &[f64], tau: f64) -> Result<f64> {
    let ls_s = log_softmax(z_s, tau)?;
    let ls_t = log_softmax(z_t, tau)?;
    let kl: f64 = ls_t
        .iter()
        .zip(ls_s.iter())
        .map(|(lt, ls)| lt.exp() * (lt - ls))
        .sum();
    // Non-negative by Gibbs' inequality; rounding can dip a hair below zero
    // when the inputs nearly coincide.
    Ok(kl.max(0.0))
}

/// Distillation loss `tau^2 * KL(p_t(tau) || p_s(tau))`.
pub fn kl_loss(z_s: &[f64], z_t: &[f64], tau: f64) -> Result<f64> {
    check_pair(z_s, z_t)?;
    Ok(tau * tau * base_kl(z_s, z_t, tau)?)
}

/// Gradient of `kl_loss` with respect to the student logits:
/// `tau * (p_s(tau) - p_t(tau))`.
pub fn kl_grad(z_s: &[f64], z_t: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_pair(z_s, z_t)?;
    let p_s = softened_softmax(z_s, tau)?;
    let p_t = softened_softmax(z_t, tau)?;
    Ok(p_s
        .iter()
        .zip(p_t.iter())
        .map(|(s, t)| tau * (s - t))
        .collect())
}

/// First-order expansion of `kl_grad` for large temperatures, with
/// `exp(z/tau)` replaced by `1 + z/tau`.
pub fn kl_grad_large_tau_approx(z_s: &[f64], z_t: &[f64], tau: f64) -> Result<Vec<f64>> {
    let k = check_pair(z_s, z_t)?;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid(format!(
            "temperature must be positive and finite, got {tau}"
        )));
    }
    let den_s = k as f64 + z_s.iter().map(|v| v / tau).sum::<f64>();
    let den_t = k as f64 + z_t.iter().map(|v| v / tau).sum::<f64>();
    if den_s == 0.0 || den_t == 0.0 {
        return Err(Error::degenerate(
            "K + sum(z)/tau vanished in the large-tau expansion",
        ));
    }
    Ok(z_s
        .iter()
        .zip(z_t.iter())
        .map(|(s, t)| tau * ((1.0 + s / tau) / den_s - (1.0 + t / tau) / den_t))
        .collect())
}

/// Per-network centered term `(K z_k - sum z) / K^2`. The infinite-
/// temperature gradient is the student term minus the teacher term, and the
/// gradient bound is the sum of their absolute values; sharing this
/// computation keeps the bound valid componentwise even at rounding level.
fn inf_grad_terms(z: &[f64]) -> Vec<f64> {
    let k = z.len() as f64;
    let sum: f64 = z.iter().sum();
    z.iter().map(|v| (k * v - sum) / (k * k)).collect()
}

/// Exact tau -> infinity limit of `kl_grad`:
/// `(z_s - z_t)/K - (sum_j (z_s_j - z_t_j)) / K^2`.
pub fn kl_grad_inf(z_s: &[f64], z_t: &[f64]) -> Result<Vec<f64>> {
    check_pair(z_s, z_t)?;
    let a = inf_grad_terms(z_s);
    let b = inf_grad_terms(z_t);
    Ok(a.iter().zip(b.iter()).map(|(x, y)| x - y).collect())
}

/// tau -> 0 limit of `(1/tau) * kl_grad`:
/// `onehot(argmax z_s) - onehot(argmax z_t)`. Ties break to the lowest index.
pub fn label_match_grad(z_s: &[f64], z_t: &[f64]) -> Result<Vec<f64>> {
    let k = check_pair(z_s, z_t)?;
    let mut g = vec![0.0; k];
    g[argmax(z_s)] += 1.0;
    g[argmax(z_t)] -= 1.0;
    Ok(g)
}

/// KL factor that stays useful below tau = 1: `max(tau, tau^2)`.
fn rescaled_factor(tau: f64) -> f64 {
    tau.max(tau * tau)
}

/// `max(tau, tau^2) * KL(p_t(tau) || p_s(tau))`; coincides with `kl_loss` for tau >= 1.
pub fn rescaled_kl_loss(z_s: &[f64], z_t: &[f64], tau: f64) -> Result<f64> {
    check_pair(z_s, z_t)?;
    Ok(rescaled_factor(tau) * base_kl(z_s, z_t, tau)?)
}

/// Gradient of `rescaled_kl_loss`: `max(tau, tau^2) * (1/tau) * (p_s - p_t)`.
pub fn rescaled_kl_grad(z_s: &[f64], z_t: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_pair(z_s, z_t)?;
    let p_s = softened_softmax(z_s, tau)?;
    let p_t = softened_softmax(z_t, tau)?;
    let factor = rescaled_factor(tau) / tau;
    Ok(p_s
        .iter()
        .zip(p_t.iter())
        .map(|(s, t)| factor * (s - t))
        .collect())
}

/// Direct logit regression: `|| z_s - z_t ||_2^2`.
pub fn mse_loss(z_s: &[f64], z_t: &[f64]) -> Result<f64> {
    check_pair(z_s, z_t)?;
    Ok(z_s
        .iter()
        .zip(z_t.iter())
        .map(|(s, t)| (s - t) * (s - t))
        .sum())
}

/// Gradient of `mse_loss`: `2 (z_s - z_t)`.
pub fn mse_grad(z_s: &[f64], z_t: &[f64]) -> Result<Vec<f64>> {
    check_pair(z_s, z_t)?;
    Ok(z_s
        .iter()
        .zip(z_t.iter())
        .map(|(s, t)| 2.0 * (s - t))
        .collect())
}

/// Logit-sum term separating the infinite-temperature KL limit from plain
/// logit regression: `-(1/2K^2) (sum z_s - sum z_t)^2`, constant dropped.
pub fn delta_inf(z_s: &[f64], z_t: &[f64]) -> Result<f64> {
    let k = check_pair(z_s, z_t)? as f64;
    let gap = z_s.iter().sum::<f64>() - z_t.iter().sum::<f64>();
    Ok(-gap * gap / (2.0 * k * k))
}

/// Gradient of `delta_inf`: `-(1/K^2)(sum z_s - sum z_t)` in every component.
pub fn delta_inf_grad(z_s: &[f64], z_t: &[f64]) -> Result<Vec<f64>> {
    let k = check_pair(z_s, z_t)? as f64;
    let gap = z_s.iter().sum::<f64>() - z_t.iter().sum::<f64>();
    Ok(vec![-gap / (k * k); z_s.len()])
}

/// Per-component bound on the infinite-temperature gradient:
/// `|K z_s_k - sum z_s| / K^2 + |K z_t_k - sum z_t| / K^2`.
pub fn inf_grad_bound(z_s: &[f64], z_t: &[f64]) -> Result<Vec<f64>> {
    check_pair(z_s, z_t)?;
    let a = inf_grad_terms(z_s);
    let b = inf_grad_terms(z_t);
    Ok(a.iter().zip(b.iter()).map(|(x, y)| x.abs() + y.abs()).collect())
}

/// Smoothed hard target: `1 - beta` at the label, `beta / (K - 1)` elsewhere.
pub fn label_smooth_targets(y_index: usize, beta: f64, k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::invalid("label smoothing needs at least 2 classes"));
    }
    if y_index >= k {
        return Err(Error::invalid(format!(
            "label {y_index} out of range for {k} classes"
        )));
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::invalid(format!("beta must lie in [0, 1), got {beta}")));
    }
    let mut t = vec![beta / (k - 1) as f64; k];
    t[y_index] = 1.0 - beta;
    Ok(t)
}

fn distill_grad(z_s: &[f64], z_t: &[f64], kind: &LossKind) -> Result<Vec<f64>> {
    match kind {
        LossKind::CeOnly => Ok(vec![0.0; z_s.len()]),
        LossKind::Kl { tau } => kl_grad(z_s, z_t, *tau),
        LossKind::RescaledKl { tau } => rescaled_kl_grad(z_s, z_t, *tau),
        LossKind::KlInfGrad => kl_grad_inf(z_s, z_t),
        LossKind::LabelMatchGrad => label_match_grad(z_s, z_t),
        LossKind::Mse => mse_grad(z_s, z_t),
    }
}

/// Loss value used for logging a distillation term.
///
/// The infinite-temperature gradient has no finite KL value, so its surrogate
/// `(1/2K) * mse + delta_inf` (same gradient) is logged instead; the label
/// match term logs the argmax mismatch indicator.
pub fn distill_loss_value(z_s: &[f64], z_t: &[f64], kind: &LossKind) -> Result<f64> {
    match kind {
        LossKind::CeOnly => Ok(0.0),
        LossKind::Kl { tau } => kl_loss(z_s, z_t, *tau),
        LossKind::RescaledKl { tau } => rescaled_kl_loss(z_s, z_t, *tau),
        LossKind::KlInfGrad => {
            let k = check_pair(z_s, z_t)? as f64;
            Ok(mse_loss(z_s, z_t)? / (2.0 * k) + delta_inf(z_s, z_t)?)
        }
        LossKind::LabelMatchGrad => {
            check_pair(z_s, z_t)?;
            Ok(if argmax(z_s) == argmax(z_t) { 0.0 } else { 1.0 })
        }
        LossKind::Mse => mse_loss(z_s, z_t),
    }
}

/// Logit gradient of the combined objective
/// `(1 - alpha) * CE(p_s(1), y) + alpha * <distillation term>`.
pub fn combined_grad(
    z_s: &[f64],
    z_t: Option<&[f64]>,
    y_index: usize,
    obj: &DistillObjective,
) -> Result<Vec<f64>> {
    obj.validate()?;
    let mut g: Vec<f64> = ce_grad(z_s, y_index)?
        .into_iter()
        .map(|v| (1.0 - obj.alpha) * v)
        .collect();
    if obj.alpha > 0.0 {
        let z_t = z_t.ok_or_else(|| {
            Error::invalid("teacher logits are required when alpha > 0")
        })?;
        let d = distill_grad(z_s, z_t, &obj.kind)?;
        for (gi, di) in g.iter_mut().zip(d.iter()) {
            *gi += obj.alpha * di;
        }
    }
    Ok(g)
}

/// Value of the combined objective, matching `combined_grad`.
pub fn combined_loss(
    z_s: &[f64],
    z_t: Option<&[f64]>,
    y_index: usize,
    obj: &DistillObjective,
) -> Result<f64> {
    obj.validate()?;
    let p = softened_softmax(z_s, 1.0)?;
    let mut loss = (1.0 - obj.alpha) * ce_loss(&p, y_index)?;
    if obj.alpha > 0.0 {
        let z_t = z_t.ok_or_else(|| {
            Error::invalid("teacher logits are required when alpha > 0")
        })?;
        loss += obj.alpha * distill_loss_value(z_s, z_t, &obj.kind)?;
    }
    Ok(loss)
}
