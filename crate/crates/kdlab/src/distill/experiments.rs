//! Experiment harnesses built on [`super::train`]: sequential chains, the
//! alpha-tau grid, noisy-label runs, and TLD-quantile bundles.
//!
//! Every run inside an experiment draws its seed as
//! `base_seed XOR mix64(counter)` with the counter assigned in a fixed,
//! documented enumeration order, so runs are independent yet the whole
//! experiment replays bit-identically.

use super::{train, RunResult, TauSpec, Teacher, TrainConfig};
use crate::data::{inject_symmetric_noise, Dataset};
use crate::diagnostics::tld;
use crate::error::{Error, Result};
use crate::losses::{DistillObjective, LossKind};
use crate::network::Mlp;
use crate::numerics::mix64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Where a chain stage gets its teacher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TeacherSource {
    /// No teacher; the stage trains from scratch with cross-entropy.
    FreshCe,
    /// The previous stage's student.
    PreviousStage,
    /// A checkpoint on disk.
    Checkpoint(PathBuf),
    /// Mean-logit ensemble of checkpoints on disk.
    Ensemble(Vec<PathBuf>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub teacher: TeacherSource,
    pub config: TrainConfig,
}

fn load_checkpoint(path: &PathBuf) -> Result<Mlp> {
    Mlp::from_checkpoint_json(&std::fs::read_to_string(path)?)
}

/// Run a chain of training stages; stage `i`'s student becomes stage
/// `i + 1`'s teacher when requested.
pub fn sequential(
    ds_train: &Dataset,
    ds_test: &Dataset,
    stages: &[StageSpec],
) -> Result<Vec<RunResult>> {
    if stages.is_empty() {
        return Err(Error::invalid("chain needs at least one stage"));
    }
    if stages[0].teacher == TeacherSource::PreviousStage {
        return Err(Error::invalid(
            "the first stage cannot reference the previous stage",
        ));
    }
    for (i, stage) in stages.iter().enumerate() {
        stage.config.validate()?;
        if stage.teacher == TeacherSource::FreshCe && stage.config.objective.alpha != 0.0 {
            return Err(Error::invalid(format!(
                "stage {i} trains without a teacher; its objective must have alpha = 0"
            )));
        }
    }

    let mut results: Vec<RunResult> = Vec::with_capacity(stages.len());
    for stage in stages {
        let teacher = match &stage.teacher {
            TeacherSource::FreshCe => None,
            TeacherSource::PreviousStage => Some(Teacher::Single(
                results.last().unwrap().model.clone(),
            )),
            TeacherSource::Checkpoint(path) => Some(Teacher::Single(load_checkpoint(path)?)),
            TeacherSource::Ensemble(paths) => {
                let members = paths.iter().map(load_checkpoint).collect::<Result<Vec<_>>>()?;
                Some(Teacher::Ensemble(members))
            }
        };
        results.push(train(ds_train, ds_test, teacher.as_ref(), &stage.config)?);
    }
    Ok(results)
}

/// One grid cell of the alpha-tau sweep.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub alpha: f64,
    pub tau: TauSpec,
    pub seed: u64,
    pub result: RunResult,
}

fn run_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot build thread pool: {e}")))
}

/// One run per `(alpha, tau)` pair, alpha-major; the infinite-temperature
/// cells train with the closed-form gradient. Cell `i` uses seed
/// `base.seed XOR mix64(i)`.
pub fn sweep_grid(
    ds_train: &Dataset,
    ds_test: &Dataset,
    teacher: &Teacher,
    alphas: &[f64],
    taus: &[TauSpec],
    base: &TrainConfig,
    jobs: usize,
) -> Result<Vec<SweepCell>> {
    if alphas.is_empty() || taus.is_empty() {
        return Err(Error::invalid("sweep axes must be non-empty"));
    }
    base.validate()?;
    let mut specs = Vec::with_capacity(alphas.len() * taus.len());
    for (ai, &alpha) in alphas.iter().enumerate() {
        for (ti, &tau) in taus.iter().enumerate() {
            let index = (ai * taus.len() + ti) as u64;
            let mut cfg = base.clone();
            cfg.objective = DistillObjective::new(alpha, tau.loss_kind())?;
            cfg.seed = base.seed ^ mix64(index);
            specs.push((alpha, tau, cfg));
        }
    }
    run_pool(jobs)?.install(|| {
        specs
            .par_iter()
            .map(|(alpha, tau, cfg)| {
                let teacher = if cfg.objective.alpha > 0.0 {
                    Some(teacher)
                } else {
                    None
                };
                Ok(SweepCell {
                    alpha: *alpha,
                    tau: *tau,
                    seed: cfg.seed,
                    result: train(ds_train, ds_test, teacher, cfg)?,
                })
            })
            .collect()
    })
}

/// One student run of the noisy-label experiment.
#[derive(Debug, Clone)]
pub struct NoisyRow {
    pub fraction: f64,
    pub kind: LossKind,
    pub seed: u64,
    /// Accuracy on the noisy training labels.
    pub train_accuracy: f64,
    /// Accuracy on the clean test set.
    pub test_accuracy: f64,
    /// Clean-test accuracy of the noisy-trained teacher for this fraction.
    pub teacher_test_accuracy: f64,
}

/// For each noise fraction: inject symmetric noise into the training labels,
/// train a fresh teacher with cross-entropy on the noisy labels, then distill
/// one student per temperature (rescaled KL below tau = 1) plus an MSE
/// student. All students are evaluated on the clean test set.
///
/// Seed counters per fraction block of size `taus.len() + 3`: noise
/// injection, teacher, then one per student.
pub fn noisy_experiment(
    ds_train: &Dataset,
    ds_test: &Dataset,
    fractions: &[f64],
    taus: &[f64],
    teacher_widths: &[usize],
    base: &TrainConfig,
    jobs: usize,
) -> Result<Vec<NoisyRow>> {
    if fractions.is_empty() {
        return Err(Error::invalid("need at least one noise fraction"));
    }
    base.validate()?;
    if base.objective.alpha <= 0.0 {
        return Err(Error::invalid(
            "noisy-label students distill from the teacher; alpha must be positive",
        ));
    }
    if taus.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::invalid("temperatures must be positive and finite"));
    }

    let pool = run_pool(jobs)?;
    let block = taus.len() as u64 + 3;
    let mut rows = Vec::new();
    for (fi, &fraction) in fractions.iter().enumerate() {
        let counter = |offset: u64| base.seed ^ mix64(fi as u64 * block + offset);

        let noisy_train = inject_symmetric_noise(ds_train, fraction, counter(0))?;

        let mut teacher_cfg = base.clone();
        teacher_cfg.objective = DistillObjective::ce();
        teacher_cfg.student_widths = teacher_widths.to_vec();
        teacher_cfg.seed = counter(1);
        let teacher_run = train(&noisy_train, ds_test, None, &teacher_cfg)?;
        let teacher_test_accuracy = teacher_run.test_accuracy;
        let teacher = Teacher::Single(teacher_run.model);

        let mut kinds: Vec<LossKind> = taus
            .iter()
            .map(|&tau| {
                // Rescaled KL at and below tau = 1 (identical to plain KL at 1).
                if tau <= 1.0 {
                    LossKind::RescaledKl { tau }
                } else {
                    LossKind::Kl { tau }
                }
            })
            .collect();
        kinds.push(LossKind::Mse);

        let students: Vec<(LossKind, TrainConfig)> = kinds
            .into_iter()
            .enumerate()
            .map(|(si, kind)| {
                let mut cfg = base.clone();
                cfg.objective = DistillObjective::new(base.objective.alpha, kind)?;
                cfg.seed = counter(2 + si as u64);
                Ok((kind, cfg))
            })
            .collect::<Result<Vec<_>>>()?;

        let fraction_rows: Vec<NoisyRow> = pool.install(|| {
            students
                .par_iter()
                .map(|(kind, cfg)| {
                    let run = train(&noisy_train, ds_test, Some(&teacher), cfg)?;
                    Ok(NoisyRow {
                        fraction,
                        kind: *kind,
                        seed: cfg.seed,
                        train_accuracy: run.train_accuracy,
                        test_accuracy: run.test_accuracy,
                        teacher_test_accuracy,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })?;
        rows.extend(fraction_rows);
    }
    Ok(rows)
}

/// Accuracies of one bundle student.
#[derive(Debug, Clone)]
pub struct BundleOutcome {
    pub run: RunResult,
    /// Accuracy on the training samples left out of the kept bundle; absent
    /// when the bundle keeps everything.
    pub undistilled_train_accuracy: Option<f64>,
}

/// Outcome of one TLD-quantile bundle experiment.
#[derive(Debug, Clone)]
pub struct BundleReport {
    pub q_lo: f64,
    pub q_hi: f64,
    pub kept: usize,
    pub ce: BundleOutcome,
    pub kd: BundleOutcome,
}

/// Rank training samples by the teacher's TLD (stable on ties by sample
/// index), keep those whose rank falls in `[q_lo, q_hi)` of the quantile
/// range (`q_hi = 1` closes the interval), and train one cross-entropy
/// student and one distilled student on the kept bundle.
pub fn tld_quantile_bundle(
    ds_train: &Dataset,
    ds_test: &Dataset,
    teacher: &Teacher,
    q_lo: f64,
    q_hi: f64,
    cfg_ce: &TrainConfig,
    cfg_kd: &TrainConfig,
) -> Result<BundleReport> {
    if !(0.0..=1.0).contains(&q_lo) || !(0.0..=1.0).contains(&q_hi) || q_lo >= q_hi {
        return Err(Error::invalid(format!(
            "quantile range must satisfy 0 <= q_lo < q_hi <= 1, got [{q_lo}, {q_hi}]"
        )));
    }
    teacher.validate()?;
    let logits = teacher.logits(ds_train.features())?;
    let scores = (0..ds_train.len())
        .map(|i| tld(logits.row(i), ds_train.labels()[i]))
        .collect::<Result<Vec<f64>>>()?;

    let mut order: Vec<usize> = (0..ds_train.len()).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .partial_cmp(&scores[b])
            .expect("tld values are finite")
            .then(a.cmp(&b))
    });

    let n = ds_train.len();
    let lo = (q_lo * n as f64).floor() as usize;
    let hi = if q_hi >= 1.0 {
        n
    } else {
        (q_hi * n as f64).floor() as usize
    };
    if lo >= hi {
        return Err(Error::invalid(format!(
            "quantile range [{q_lo}, {q_hi}] selects no samples out of {n}"
        )));
    }
    let kept: Vec<usize> = order[lo..hi].to_vec();
    let rest: Vec<usize> = order[..lo]
        .iter()
        .chain(order[hi..].iter())
        .copied()
        .collect();

    let ds_kept = ds_train.subset(&kept)?;
    let evaluate_rest = |model: &Mlp| -> Result<Option<f64>> {
        if rest.is_empty() {
            return Ok(None);
        }
        let ds_rest = ds_train.subset(&rest)?;
        Ok(Some(
            model.accuracy(ds_rest.features(), ds_rest.labels())?,
        ))
    };

    let ce_run = train(&ds_kept, ds_test, None, cfg_ce)?;
    let kd_run = train(&ds_kept, ds_test, Some(teacher), cfg_kd)?;
    let ce = BundleOutcome {
        undistilled_train_accuracy: evaluate_rest(&ce_run.model)?,
        run: ce_run,
    };
    let kd = BundleOutcome {
        undistilled_train_accuracy: evaluate_rest(&kd_run.model)?,
        run: kd_run,
    };
    Ok(BundleReport {
        q_lo,
        q_hi,
        kept: kept.len(),
        ce,
        kd,
    })
}
