//! JSON config schemas, one per subcommand. Unknown keys are rejected so a
//! typo fails loudly instead of silently falling back to a default.

use kdlab::distill::{
    default_lr_schedule, LrDecay, StageSpec, TauSpec, TeacherSource, TrainConfig,
};
use kdlab::losses::DistillObjective;
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDataConfig {
    pub classes: usize,
    pub features: usize,
    pub samples_per_class: usize,
    pub spread: f64,
    pub seed: u64,
    /// File name under the output directory.
    pub output: String,
}

/// Training recipe as written in configs; momentum, weight decay, and the
/// learning-rate schedule fall back to the conventional defaults (0.9, 5e-4,
/// and x0.1 at 50% and 75% of the epochs).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub objective: DistillObjective,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_schedule: Option<Vec<LrDecay>>,
    pub momentum: Option<f64>,
    pub weight_decay: Option<f64>,
    pub seed: u64,
    pub student_widths: Vec<usize>,
}

impl TrainSpec {
    pub fn into_config(self, seed_override: Option<u64>) -> TrainConfig {
        TrainConfig {
            objective: self.objective,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            lr_schedule: self
                .lr_schedule
                .unwrap_or_else(|| default_lr_schedule(self.epochs)),
            momentum: self.momentum.unwrap_or(0.9),
            weight_decay: self.weight_decay.unwrap_or(5e-4),
            seed: seed_override.unwrap_or(self.seed),
            student_widths: self.student_widths,
        }
    }
}

/// Dataset reference shared by the experiment commands: a CSV on disk plus a
/// seeded train/test split.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataRef {
    pub dataset: String,
    pub test_fraction: f64,
    pub split_seed: u64,
}

/// A teacher checkpoint, or several for a mean-logit ensemble.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum TeacherRef {
    Single(String),
    Ensemble(Vec<String>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainCommandConfig {
    #[serde(flatten)]
    pub data: DataRef,
    /// Required by `distill`, rejected by `train`.
    pub teacher: Option<TeacherRef>,
    pub train: TrainSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub teacher: TeacherSource,
    pub train: TrainSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequentialConfig {
    #[serde(flatten)]
    pub data: DataRef,
    pub stages: Vec<StageConfig>,
}

impl SequentialConfig {
    /// Stage seeds under `--seed s`: stage `i` uses `s XOR mix64(i)` so the
    /// stages stay independent.
    pub fn into_stages(self, seed_override: Option<u64>) -> Vec<StageSpec> {
        self.stages
            .into_iter()
            .enumerate()
            .map(|(i, s)| StageSpec {
                teacher: s.teacher,
                config: s
                    .train
                    .into_config(seed_override.map(|b| b ^ kdlab::numerics::mix64(i as u64))),
            })
            .collect()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(flatten)]
    pub data: DataRef,
    pub teacher: TeacherRef,
    pub alphas: Vec<f64>,
    pub taus: Vec<TauSpec>,
    pub base: TrainSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoisyConfig {
    #[serde(flatten)]
    pub data: DataRef,
    pub fractions: Vec<f64>,
    pub taus: Vec<f64>,
    pub teacher_widths: Vec<usize>,
    pub base: TrainSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundlesConfig {
    #[serde(flatten)]
    pub data: DataRef,
    pub teacher: TeacherRef,
    pub q_lo: f64,
    pub q_hi: f64,
    pub ce: TrainSpec,
    pub kd: TrainSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticKind {
    Tld,
    Entropy,
    Ece,
    LogitSum,
    LogitDistance,
    PrelogitNorm,
    Projection,
    Pcc,
}

impl DiagnosticKind {
    pub fn name(&self) -> &'static str {
        match self {
            DiagnosticKind::Tld => "tld",
            DiagnosticKind::Entropy => "entropy",
            DiagnosticKind::Ece => "ece",
            DiagnosticKind::LogitSum => "logit_sum",
            DiagnosticKind::LogitDistance => "logit_distance",
            DiagnosticKind::PrelogitNorm => "prelogit_norm",
            DiagnosticKind::Projection => "projection",
            DiagnosticKind::Pcc => "pcc",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    pub dataset: String,
    pub student: String,
    pub teacher: Option<TeacherRef>,
    pub which: Vec<DiagnosticKind>,
    pub bins: Option<usize>,
    /// The three classes whose templates span the projection plane.
    pub projection_classes: Option<[usize; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    Histogram,
    Line,
    GridHeat,
    Scatter,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotConfig {
    pub input: String,
    pub kind: PlotKind,
    pub output: String,
    pub title: Option<String>,
}
