//! Subcommand implementations. Each one validates its config fully, then
//! loads inputs, then computes, and only then writes under the output
//! directory, so a bad config never leaves partial outputs behind.

use crate::config::*;
use kdlab::data::{self, Dataset};
use kdlab::diagnostics::{self, Histogram, DEFAULT_ECE_BINS, DEFAULT_HISTOGRAM_BINS};
use kdlab::distill::{
    self, loss_curve_csv, results_to_csv, ResultRow, RunResult, TauSpec, Teacher, TrainConfig,
};
use kdlab::losses::LossKind;
use kdlab::network::Mlp;
use kdlab::plot;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Failure category, mapped to the process exit code.
pub enum CliError {
    /// Bad invocation or config: exit 1.
    Usage(String),
    /// Unreadable or invalid input data: exit 2.
    Data(String),
    /// Failure while computing or writing outputs: exit 3.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Runtime(m) => m,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub struct Context {
    pub out_dir: PathBuf,
    pub seed_override: Option<u64>,
    pub jobs: usize,
}

impl Context {
    fn write(&self, name: &str, content: &str) -> CliResult<()> {
        std::fs::create_dir_all(&self.out_dir).map_err(runtime)?;
        std::fs::write(self.out_dir.join(name), content).map_err(runtime)?;
        Ok(())
    }
}

fn parse_config<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| usage(format!("invalid config {}: {e}", path.display())))
}

fn load_dataset(path: &str) -> CliResult<Dataset> {
    data::load_csv(Path::new(path))
        .map_err(|e| data_err(format!("dataset {path}: {e}")))
}

fn load_model(path: &str) -> CliResult<Mlp> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| data_err(format!("checkpoint {path}: {e}")))?;
    Mlp::from_checkpoint_json(&text).map_err(|e| data_err(format!("checkpoint {path}: {e}")))
}

fn load_teacher(teacher: &TeacherRef) -> CliResult<Teacher> {
    Ok(match teacher {
        TeacherRef::Single(path) => Teacher::Single(load_model(path)?),
        TeacherRef::Ensemble(paths) => {
            let members = paths
                .iter()
                .map(|p| load_model(p))
                .collect::<CliResult<Vec<_>>>()?;
            Teacher::Ensemble(members)
        }
    })
}

fn validate_data_ref(data: &DataRef) -> CliResult<()> {
    if !(data.test_fraction > 0.0 && data.test_fraction < 1.0) {
        return Err(usage(format!(
            "test_fraction must lie in (0, 1), got {}",
            data.test_fraction
        )));
    }
    Ok(())
}

fn load_split(data: &DataRef) -> CliResult<(Dataset, Dataset)> {
    let ds = load_dataset(&data.dataset)?;
    data::split(&ds, data.test_fraction, data.split_seed).map_err(data_err)
}

pub fn gen_data(ctx: &Context, config_path: &Path) -> CliResult<()> {
    let mut cfg: GenDataConfig = parse_config(config_path)?;
    if let Some(seed) = ctx.seed_override {
        cfg.seed = seed;
    }
    let ds = data::gen_gaussian_mixture(
        cfg.classes,
        cfg.features,
        cfg.samples_per_class,
        cfg.spread,
        cfg.seed,
    )
    .map_err(usage)?;
    ctx.write(&cfg.output, &data::to_csv(&ds))?;
    println!(
        "wrote {} samples ({} classes, {} features) to {}",
        ds.len(),
        ds.classes(),
        ds.dim(),
        ctx.out_dir.join(&cfg.output).display()
    );
    Ok(())
}

fn write_run_outputs(ctx: &Context, cfg: &TrainConfig, run: &RunResult) -> CliResult<()> {
    let mut row = ResultRow::for_objective(&cfg.objective, cfg.seed);
    row.train_acc = run.train_accuracy;
    row.test_acc = run.test_accuracy;
    ctx.write("model.json", &run.model.to_checkpoint_json())?;
    ctx.write("results.csv", &results_to_csv(&[row]))?;
    ctx.write("loss_curve.csv", &loss_curve_csv(&run.epoch_losses))?;
    println!(
        "train_acc={} test_acc={}",
        run.train_accuracy, run.test_accuracy
    );
    Ok(())
}

pub fn train_cmd(ctx: &Context, config_path: &Path, with_teacher: bool) -> CliResult<()> {
    let cfg: TrainCommandConfig = parse_config(config_path)?;
    validate_data_ref(&cfg.data)?;
    if with_teacher && cfg.teacher.is_none() {
        return Err(usage("distill needs a \"teacher\" checkpoint in the config"));
    }
    if !with_teacher && cfg.teacher.is_some() {
        return Err(usage("train does not take a teacher; use distill"));
    }
    let train_cfg = cfg.train.into_config(ctx.seed_override);
    train_cfg.validate().map_err(usage)?;

    let (ds_train, ds_test) = load_split(&cfg.data)?;
    let teacher = cfg
        .teacher
        .as_ref()
        .map(load_teacher)
        .transpose()?;
    let run = distill::train(&ds_train, &ds_test, teacher.as_ref(), &train_cfg)
        .map_err(data_err)?;
    write_run_outputs(ctx, &train_cfg, &run)
}

pub fn sequential_cmd(ctx: &Context, config_path: &Path) -> CliResult<()> {
    let cfg: SequentialConfig = parse_config(config_path)?;
    validate_data_ref(&cfg.data)?;
    let data_ref = DataRef {
        dataset: cfg.data.dataset.clone(),
        test_fraction: cfg.data.test_fraction,
        split_seed: cfg.data.split_seed,
    };
    let stages = cfg.into_stages(ctx.seed_override);
    for stage in &stages {
        stage.config.validate().map_err(usage)?;
    }
    for stage in &stages {
        let missing: Vec<&PathBuf> = match &stage.teacher {
            distill::TeacherSource::Checkpoint(p) => vec![p],
            distill::TeacherSource::Ensemble(ps) => ps.iter().collect(),
            _ => vec![],
        }
        .into_iter()
        .filter(|p| !p.exists())
        .collect();
        if let Some(p) = missing.first() {
            return Err(data_err(format!("checkpoint {} does not exist", p.display())));
        }
    }

    let (ds_train, ds_test) = load_split(&data_ref)?;
    let results = distill::sequential(&ds_train, &ds_test, &stages).map_err(data_err)?;

    let mut rows = Vec::with_capacity(results.len());
    for (i, (stage, run)) in stages.iter().zip(results.iter()).enumerate() {
        ctx.write(&format!("stage_{}.json", i + 1), &run.model.to_checkpoint_json())?;
        ctx.write(
            &format!("stage_{}_loss.csv", i + 1),
            &loss_curve_csv(&run.epoch_losses),
        )?;
        let mut row = ResultRow::for_objective(&stage.config.objective, stage.config.seed);
        row.train_acc = run.train_accuracy;
        row.test_acc = run.test_accuracy;
        row.extra_json = format!("{{\"stage\":{}}}", i + 1);
        println!(
            "stage {} ({}): train_acc={} test_acc={}",
            i + 1,
            stage.config.objective.kind.name(),
            run.train_accuracy,
            run.test_accuracy
        );
        rows.push(row);
    }
    ctx.write("results.csv", &results_to_csv(&rows))
}

pub fn sweep_cmd(ctx: &Context, config_path: &Path) -> CliResult<()> {
    let cfg: SweepConfig = parse_config(config_path)?;
    validate_data_ref(&cfg.data)?;
    if cfg.alphas.is_empty() || cfg.taus.is_empty() {
        return Err(usage("sweep axes must be non-empty"));
    }
    let base = cfg.base.clone().into_config(ctx.seed_override);
    base.validate().map_err(usage)?;

    let (ds_train, ds_test) = load_split(&cfg.data)?;
    let teacher = load_teacher(&cfg.teacher)?;
    let cells = distill::sweep_grid(
        &ds_train,
        &ds_test,
        &teacher,
        &cfg.alphas,
        &cfg.taus,
        &base,
        ctx.jobs,
    )
    .map_err(data_err)?;

    let rows: Vec<ResultRow> = cells
        .iter()
        .map(|c| ResultRow {
            alpha: Some(c.alpha),
            tau: Some(c.tau),
            loss_kind: c.tau.loss_kind().name().to_string(),
            seed: c.seed,
            train_acc: c.result.train_accuracy,
            test_acc: c.result.test_accuracy,
            ..ResultRow::default()
        })
        .collect();
    println!("swept {} cells", rows.len());
    ctx.write("results.csv", &results_to_csv(&rows))
}

pub fn noisy_cmd(ctx: &Context, config_path: &Path) -> CliResult<()> {
    let cfg: NoisyConfig = parse_config(config_path)?;
    validate_data_ref(&cfg.data)?;
    let base = cfg.base.clone().into_config(ctx.seed_override);
    base.validate().map_err(usage)?;

    let (ds_train, ds_test) = load_split(&cfg.data)?;
    let rows_raw = distill::noisy_experiment(
        &ds_train,
        &ds_test,
        &cfg.fractions,
        &cfg.taus,
        &cfg.teacher_widths,
        &base,
        ctx.jobs,
    )
    .map_err(data_err)?;

    let rows: Vec<ResultRow> = rows_raw
        .iter()
        .map(|r| {
            let tau = r.kind.tau().map(TauSpec::Finite);
            ResultRow {
                alpha: Some(base.objective.alpha),
                tau,
                loss_kind: r.kind.name().to_string(),
                noise_fraction: Some(r.fraction),
                seed: r.seed,
                train_acc: r.train_accuracy,
                test_acc: r.test_accuracy,
                extra_json: format!("{{\"teacher_test_acc\":{}}}", r.teacher_test_accuracy),
                ..ResultRow::default()
            }
        })
        .collect();

    // Directional comparison the noisy-label study is after: low-temperature
    // rescaled KL vs direct logit regression, per fraction.
    for &fraction in &cfg.fractions {
        let low_kl = rows_raw.iter().find(|r| {
            r.fraction == fraction && matches!(r.kind, LossKind::RescaledKl { tau } if tau == 0.5)
        });
        let mse = rows_raw
            .iter()
            .find(|r| r.fraction == fraction && r.kind == LossKind::Mse);
        if let (Some(a), Some(b)) = (low_kl, mse) {
            println!(
                "fraction {}: rescaled_kl(tau=0.5) test_acc={} vs mse test_acc={}",
                fraction, a.test_accuracy, b.test_accuracy
            );
        }
    }
    println!("noisy experiment: {} rows", rows.len());
    ctx.write("results.csv", &results_to_csv(&rows))
}

pub fn bundles_cmd(ctx: &Context, config_path: &Path) -> CliResult<()> {
    let cfg: BundlesConfig = parse_config(config_path)?;
    validate_data_ref(&cfg.data)?;
    if !(0.0..=1.0).contains(&cfg.q_lo) || !(0.0..=1.0).contains(&cfg.q_hi) || cfg.q_lo >= cfg.q_hi
    {
        return Err(usage(format!(
            "quantile range must satisfy 0 <= q_lo < q_hi <= 1, got [{}, {}]",
            cfg.q_lo, cfg.q_hi
        )));
    }
    let ce_cfg = cfg.ce.clone().into_config(ctx.seed_override);
    let kd_cfg = cfg.kd.clone().into_config(ctx.seed_override);
    ce_cfg.validate().map_err(usage)?;
    kd_cfg.validate().map_err(usage)?;

    let (ds_train, ds_test) = load_split(&cfg.data)?;
    let teacher = load_teacher(&cfg.teacher)?;
    let report = distill::tld_quantile_bundle(
        &ds_train,
        &ds_test,
        &teacher,
        cfg.q_lo,
        cfg.q_hi,
        &ce_cfg,
        &kd_cfg,
    )
    .map_err(data_err)?;

    let mut rows = Vec::with_capacity(2);
    for (name, train_cfg, outcome) in [
        ("bundle_ce", &ce_cfg, &report.ce),
        ("bundle_kd", &kd_cfg, &report.kd),
    ] {
        ctx.write(
            &format!("{name}.json"),
            &outcome.run.model.to_checkpoint_json(),
        )?;
        let undistilled = outcome
            .undistilled_train_accuracy
            .map(|v| v.to_string())
            .unwrap_or_else(|| "null".to_string());
        let mut row = ResultRow::for_objective(&train_cfg.objective, train_cfg.seed);
        row.q_lo = Some(report.q_lo);
        row.q_hi = Some(report.q_hi);
        row.train_acc = outcome.run.train_accuracy;
        row.test_acc = outcome.run.test_accuracy;
        row.extra_json = format!(
            "{{\"distilled_train_acc\":{},\"undistilled_train_acc\":{},\"test_acc\":{},\"kept\":{}}}",
            outcome.run.train_accuracy, undistilled, outcome.run.test_accuracy, report.kept
        );
        println!(
            "{name}: distilled_train_acc={} undistilled_train_acc={} test_acc={}",
            outcome.run.train_accuracy, undistilled, outcome.run.test_accuracy
        );
        rows.push(row);
    }
    ctx.write("results.csv", &results_to_csv(&rows))
}

pub fn diagnose_cmd(ctx: &Context, config_path: &Path) -> CliResult<()> {
    let cfg: DiagnoseConfig = parse_config(config_path)?;
    if cfg.which.is_empty() {
        return Err(usage("\"which\" must list at least one diagnostic"));
    }
    let needs_teacher = cfg.which.contains(&DiagnosticKind::LogitDistance);
    if needs_teacher && cfg.teacher.is_none() {
        return Err(usage("logit-distance needs a \"teacher\" checkpoint"));
    }
    let bins = cfg.bins.unwrap_or(DEFAULT_HISTOGRAM_BINS);
    if bins == 0 {
        return Err(usage("bins must be at least 1"));
    }

    let ds = load_dataset(&cfg.dataset)?;
    let student = load_model(&cfg.student)?;
    let teacher = cfg.teacher.as_ref().map(load_teacher).transpose()?;

    let write_values = |name: &str, values: &[f64], hist: Option<&Histogram>| -> CliResult<()> {
        ctx.write(&format!("{name}.csv"), &diagnostics::values_to_csv(values))?;
        if let Some(h) = hist {
            ctx.write(&format!("{name}_hist.csv"), &h.to_csv())?;
        }
        Ok(())
    };

    for kind in &cfg.which {
        match kind {
            DiagnosticKind::Tld => {
                let (values, hist) =
                    diagnostics::tld_distribution(&student, &ds, bins).map_err(data_err)?;
                write_values(kind.name(), &values, Some(&hist))?;
            }
            DiagnosticKind::Entropy => {
                let values = diagnostics::entropy_distribution(&student, &ds).map_err(data_err)?;
                let hist = Histogram::build(&values, bins).map_err(data_err)?;
                write_values(kind.name(), &values, Some(&hist))?;
            }
            DiagnosticKind::Ece => {
                let outcomes =
                    diagnostics::confidence_outcomes(&student, &ds).map_err(data_err)?;
                let (value, rel) =
                    diagnostics::ece(&outcomes, DEFAULT_ECE_BINS).map_err(data_err)?;
                let mut csv = String::from("bin_left,bin_right,count,mean_confidence,accuracy\n");
                for b in 0..rel.bin_count {
                    let (left, right) = rel.bin_edges(b);
                    let _ = writeln!(
                        csv,
                        "{left},{right},{},{},{}",
                        rel.counts[b], rel.mean_confidence[b], rel.accuracy[b]
                    );
                }
                ctx.write("ece_bins.csv", &csv)?;
                ctx.write("ece.csv", &format!("ece,bins\n{value},{}\n", rel.bin_count))?;
            }
            DiagnosticKind::LogitSum => {
                let (values, hist) =
                    diagnostics::logit_sum_stats(&student, &ds, bins).map_err(data_err)?;
                write_values(kind.name(), &values, Some(&hist))?;
            }
            DiagnosticKind::LogitDistance => {
                let teacher = teacher.as_ref().unwrap();
                let teacher_net = match teacher {
                    Teacher::Single(m) => m.clone(),
                    Teacher::Ensemble(_) => {
                        return Err(usage(
                            "logit-distance compares against a single teacher checkpoint",
                        ))
                    }
                };
                let (values, hist) =
                    diagnostics::logit_distance_stats(&student, &teacher_net, &ds, bins)
                        .map_err(data_err)?;
                write_values(kind.name(), &values, Some(&hist))?;
            }
            DiagnosticKind::PrelogitNorm => {
                let values = diagnostics::prelogit_norm_stats(&student, &ds).map_err(data_err)?;
                let hist = Histogram::build(&values, bins).map_err(data_err)?;
                write_values(kind.name(), &values, Some(&hist))?;
            }
            DiagnosticKind::Projection => {
                let classes = cfg.projection_classes.unwrap_or([0, 1, 2]);
                let templates = diagnostics::class_templates(&student, &ds, &classes)
                    .map_err(data_err)?;
                let basis = diagnostics::projection_basis(&[
                    templates[0].clone(),
                    templates[1].clone(),
                    templates[2].clone(),
                ])
                .map_err(data_err)?;
                let (_, cache) = student.forward(ds.features()).map_err(data_err)?;
                let mut csv = String::from("x,y,label\n");
                for i in 0..ds.len() {
                    let (x, y) = diagnostics::project(&basis, cache.prelogits().row(i))
                        .map_err(data_err)?;
                    let _ = writeln!(csv, "{x},{y},{}", ds.labels()[i]);
                }
                ctx.write("projection.csv", &csv)?;
            }
            DiagnosticKind::Pcc => {
                let entropies =
                    diagnostics::entropy_distribution(&student, &ds).map_err(data_err)?;
                let (tlds, _) =
                    diagnostics::tld_distribution(&student, &ds, bins).map_err(data_err)?;
                let r = diagnostics::pcc(&entropies, &tlds).map_err(data_err)?;
                ctx.write("pcc.csv", &format!("pcc\n{r}\n"))?;
                println!("pcc(entropy, tld) = {r}");
            }
        }
    }
    Ok(())
}

pub fn plot_cmd(ctx: &Context, config_path: &Path) -> CliResult<()> {
    let cfg: PlotConfig = parse_config(config_path)?;
    let input = std::fs::read_to_string(&cfg.input)
        .map_err(|e| data_err(format!("plot input {}: {e}", cfg.input)))?;
    let title = cfg.title.as_deref().unwrap_or("");
    let svg = match cfg.kind {
        PlotKind::Histogram => plot::render_histogram(&input, title),
        PlotKind::Line => plot::render_line(&input, title),
        PlotKind::GridHeat => plot::render_grid_heat(&input, title),
        PlotKind::Scatter => plot::render_scatter(&input, title),
    }
    .map_err(data_err)?;
    ctx.write(&cfg.output, &svg)?;
    println!("wrote {}", ctx.out_dir.join(&cfg.output).display());
    Ok(())
}
