//! Training orchestration: teacher/student runs, sequential chains, the
//! alpha-tau grid sweep, noisy-label studies, and TLD-quantile bundles.

mod experiments;
pub(crate) mod results;

pub use experiments::{
    noisy_experiment, sequential, sweep_grid, tld_quantile_bundle, BundleOutcome, BundleReport,
    NoisyRow, StageSpec, SweepCell, TeacherSource,
};
pub use results::{loss_curve_csv, results_to_csv, split_csv_line, ResultRow, RESULTS_HEADER};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::{combined_grad, combined_loss, DistillObjective, LossKind};
use crate::network::{Mlp, SgdState};
use crate::numerics::{Matrix, Rng};
use serde::{Deserialize, Serialize};

/// A temperature axis point: a finite value or the infinite-temperature
/// limit, which trains with the closed-form gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauSpec {
    Finite(f64),
    Infinite,
}

impl TauSpec {
    pub fn loss_kind(&self) -> LossKind {
        match self {
            TauSpec::Finite(tau) => LossKind::Kl { tau: *tau },
            TauSpec::Infinite => LossKind::KlInfGrad,
        }
    }
}

impl std::fmt::Display for TauSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TauSpec::Finite(tau) => write!(f, "{tau}"),
            TauSpec::Infinite => write!(f, "inf"),
        }
    }
}

impl Serialize for TauSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TauSpec::Finite(tau) => s.serialize_f64(*tau),
            TauSpec::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for TauSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = TauSpec;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                write!(f, "a positive number or the string \"inf\"")
            }

            fn visit_f64<E: serde::de::Error>(self, v: f64) -> std::result::Result<TauSpec, E> {
                Ok(TauSpec::Finite(v))
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<TauSpec, E> {
                Ok(TauSpec::Finite(v as f64))
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<TauSpec, E> {
                Ok(TauSpec::Finite(v as f64))
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<TauSpec, E> {
                if v == "inf" {
                    Ok(TauSpec::Infinite)
                } else {
                    Err(E::custom(format!("expected a number or \"inf\", got {v:?}")))
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// One learning-rate decay: from `epoch` onward the base rate is multiplied
/// by `factor` (cumulatively with earlier decays).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrDecay {
    pub epoch: usize,
    pub factor: f64,
}

/// Full recipe for a single training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub objective: DistillObjective,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    #[serde(default)]
    pub lr_schedule: Vec<LrDecay>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub student_widths: Vec<usize>,
}

/// The conventional schedule for these setups: multiply the rate by 0.1 at
/// 50% and at 75% of the epochs.
pub fn default_lr_schedule(epochs: usize) -> Vec<LrDecay> {
    let mut schedule = Vec::new();
    let half = epochs / 2;
    let three_quarters = epochs * 3 / 4;
    if half > 0 {
        schedule.push(LrDecay {
            epoch: half,
            factor: 0.1,
        });
    }
    if three_quarters > half {
        schedule.push(LrDecay {
            epoch: three_quarters,
            factor: 0.1,
        });
    }
    schedule
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.objective.validate()?;
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::invalid(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        for pair in self.lr_schedule.windows(2) {
            if pair[1].epoch <= pair[0].epoch {
                return Err(Error::invalid(
                    "lr schedule epochs must be strictly increasing",
                ));
            }
        }
        if self
            .lr_schedule
            .iter()
            .any(|d| !(d.factor.is_finite() && d.factor > 0.0))
        {
            return Err(Error::invalid("lr decay factors must be positive"));
        }
        Ok(())
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        let mut lr = self.lr;
        for decay in &self.lr_schedule {
            if decay.epoch <= epoch {
                lr *= decay.factor;
            }
        }
        lr
    }
}

/// A frozen teacher: a single network or an ensemble whose logit predictions
/// are averaged.
#[derive(Debug, Clone)]
pub enum Teacher {
    Single(Mlp),
    Ensemble(Vec<Mlp>),
}

impl Teacher {
    pub fn members(&self) -> &[Mlp] {
        match self {
            Teacher::Single(net) => std::slice::from_ref(net),
            Teacher::Ensemble(nets) => nets,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let members = self.members();
        if members.is_empty() {
            return Err(Error::invalid("ensemble teacher needs at least one member"));
        }
        let (d, k) = (members[0].input_dim(), members[0].output_dim());
        for m in members {
            if m.input_dim() != d || m.output_dim() != k {
                return Err(Error::shape(
                    "ensemble members disagree on input or output dimension".to_string(),
                ));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.members()[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.members()[0].output_dim()
    }

    /// Mean of the members' logit matrices.
    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        self.validate()?;
        let members = self.members();
        let mut total: Option<Matrix> = None;
        for m in members {
            let (z, _) = m.forward(x)?;
            total = Some(match total {
                None => z,
                Some(t) => t.add(&z)?,
            });
        }
        Ok(total.unwrap().scale(1.0 / members.len() as f64))
    }
}

/// Outcome of one training run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub model: Mlp,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Mean combined loss per epoch, over the training set.
    pub epoch_losses: Vec<f64>,
    /// Mean `|| z_s - z_t ||_2` over the training set at the end of each
    /// epoch; empty when there is no teacher.
    pub epoch_mean_logit_distance: Vec<f64>,
}

/// Mini-batch SGD with seeded shuffling. The per-sample logit gradient is
/// [`combined_grad`]; teacher logits are computed once up front since the
/// teacher never changes.
pub fn train(
    ds_train: &Dataset,
    ds_test: &Dataset,
    teacher: Option<&Teacher>,
    cfg: &TrainConfig,
) -> Result<RunResult> {
    cfg.validate()?;
    let obj = &cfg.objective;
    if ds_train.dim() != ds_test.dim() || ds_train.classes() != ds_test.classes() {
        return Err(Error::shape(
            "train and test sets disagree on dimensions".to_string(),
        ));
    }
    if cfg.student_widths.first() != Some(&ds_train.dim())
        || cfg.student_widths.last() != Some(&ds_train.classes())
    {
        return Err(Error::shape(format!(
            "student widths {:?} do not map {} features to {} classes",
            cfg.student_widths,
            ds_train.dim(),
            ds_train.classes()
        )));
    }
    let teacher_logits = match teacher {
        Some(t) => {
            t.validate()?;
            if t.output_dim() != ds_train.classes() || t.input_dim() != ds_train.dim() {
                return Err(Error::shape(
                    "teacher dimensions do not match the dataset".to_string(),
                ));
            }
            Some(t.logits(ds_train.features())?)
        }
        None => {
            if obj.alpha > 0.0 {
                return Err(Error::invalid(
                    "objective has alpha > 0 but no teacher was provided",
                ));
            }
            None
        }
    };

    let mut rng = Rng::new(cfg.seed);
    let mut net = Mlp::init_with_rng(&cfg.student_widths, &mut rng)?;
    let mut sgd = SgdState::new(&net, cfg.lr, cfg.momentum, cfg.weight_decay)?;

    let n = ds_train.len();
    let k = ds_train.classes();
    let labels = ds_train.labels();
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut epoch_mean_logit_distance = Vec::new();

    for epoch in 0..cfg.epochs {
        sgd.set_lr(cfg.lr_at(epoch));
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let x = ds_train.features().gather_rows(batch);
            let (logits, cache) = net.forward(&x)?;
            let mut dl_dz = Matrix::zeros(batch.len(), k);
            for (row, &idx) in batch.iter().enumerate() {
                let z_s = logits.row(row);
                let z_t = teacher_logits.as_ref().map(|m| m.row(idx));
                let g = combined_grad(z_s, z_t, labels[idx], obj)?;
                loss_sum += combined_loss(z_s, z_t, labels[idx], obj)?;
                for (j, v) in g.iter().enumerate() {
                    dl_dz.set(row, j, *v);
                }
            }
            let grads = net.backward(&cache, &dl_dz)?;
            sgd.step(&mut net, &grads)?;
        }
        epoch_losses.push(loss_sum / n as f64);
        if let Some(z_t) = &teacher_logits {
            epoch_mean_logit_distance.push(mean_logit_distance(&net, ds_train, z_t)?);
        }
    }

    let train_accuracy = net.accuracy(ds_train.features(), ds_train.labels())?;
    let test_accuracy = net.accuracy(ds_test.features(), ds_test.labels())?;
    Ok(RunResult {
        model: net,
        train_accuracy,
        test_accuracy,
        epoch_losses,
        epoch_mean_logit_distance,
    })
}

fn mean_logit_distance(net: &Mlp, ds: &Dataset, teacher_logits: &Matrix) -> Result<f64> {
    let (z_s, _) = net.forward(ds.features())?;
    let mut total = 0.0;
    for i in 0..ds.len() {
        let sq: f64 = z_s
            .row(i)
            .iter()
            .zip(teacher_logits.row(i).iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        total += sq.sqrt();
    }
    Ok(total / ds.len() as f64)
}
