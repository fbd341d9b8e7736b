//! Measurement machinery: top-logit difference, entropy, Pearson
//! correlation, calibration (ECE and reliability bins), logit-sum and
//! logit-distance statistics, pre-logit norms, and the class-template
//! projection used for representation plots.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::Mlp;
use crate::numerics::{argmax, dot, l2_norm, softened_softmax};

pub const DEFAULT_HISTOGRAM_BINS: usize = 50;
pub const DEFAULT_ECE_BINS: usize = 10;

/// Top logit difference: the logit at the true class minus the largest other
/// logit. Positive exactly when the model predicts the class with a margin.
pub fn tld(z: &[f64], true_idx: usize) -> Result<f64> {
    if z.len() < 2 {
        return Err(Error::invalid("tld needs at least 2 classes"));
    }
    if true_idx >= z.len() {
        return Err(Error::invalid(format!(
            "label {true_idx} out of range for {} classes",
            z.len()
        )));
    }
    let best_other = z
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != true_idx)
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(z[true_idx] - best_other)
}

/// Shannon entropy `-sum p ln p` with `0 ln 0 = 0`; lies in `[0, ln K]`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::invalid("entropy needs a non-empty distribution"));
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
    Ok(p.iter()
        .map(|&v| if v > 0.0 { -v * v.ln() } else { 0.0 })
        .sum())
}

/// Sample Pearson correlation, two-pass.
pub fn pcc(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!(
            "arrays have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::invalid("correlation needs at least 2 points"));
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let dx = x - mean_a;
        let dy = y - mean_b;
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(Error::degenerate(
            "correlation is undefined for constant input",
        ));
    }
    Ok(cov / (var_a.sqrt() * var_b.sqrt()))
}

/// Equal-width confidence bins with right-inclusive edges; confidence 1.0
/// falls in the last bin.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityBins {
    pub bin_count: usize,
    pub counts: Vec<usize>,
    pub mean_confidence: Vec<f64>,
    pub accuracy: Vec<f64>,
}

impl ReliabilityBins {
    pub fn bin_edges(&self, b: usize) -> (f64, f64) {
        let w = 1.0 / self.bin_count as f64;
        (b as f64 * w, (b + 1) as f64 * w)
    }
}

fn confidence_bin(confidence: f64, bins: usize) -> usize {
    let idx = (confidence * bins as f64).ceil() as usize;
    idx.saturating_sub(1).min(bins - 1)
}

/// Expected calibration error over `(confidence, correct)` pairs:
/// `sum_b (n_b / N) |acc_b - conf_b|`.
pub fn ece(outputs: &[(f64, bool)], bins: usize) -> Result<(f64, ReliabilityBins)> {
    if outputs.is_empty() {
        return Err(Error::invalid("calibration needs at least one sample"));
    }
    if bins == 0 {
        return Err(Error::invalid("need at least one calibration bin"));
    }
    if outputs.iter().any(|(c, _)| !(0.0..=1.0).contains(c)) {
        return Err(Error::invalid("confidences must lie in [0, 1]"));
    }
    let mut counts = vec![0usize; bins];
    let mut conf_sums = vec![0.0; bins];
    let mut correct = vec![0usize; bins];
    for &(c, ok) in outputs {
        let b = confidence_bin(c, bins);
        counts[b] += 1;
        conf_sums[b] += c;
        if ok {
            correct[b] += 1;
        }
    }
    let n = outputs.len() as f64;
    let mut value = 0.0;
    let mut mean_confidence = vec![0.0; bins];
    let mut accuracy = vec![0.0; bins];
    for b in 0..bins {
        if counts[b] == 0 {
            continue;
        }
        mean_confidence[b] = conf_sums[b] / counts[b] as f64;
        accuracy[b] = correct[b] as f64 / counts[b] as f64;
        value += counts[b] as f64 / n * (accuracy[b] - mean_confidence[b]).abs();
    }
    Ok((
        value,
        ReliabilityBins {
            bin_count: bins,
            counts,
            mean_confidence,
            accuracy,
        },
    ))
}

/// `(max softmax probability at tau = 1, prediction correct)` per sample;
/// confidence is a deployment-time quantity, so the training temperature
/// plays no role here.
pub fn confidence_outcomes(net: &Mlp, ds: &Dataset) -> Result<Vec<(f64, bool)>> {
    let (logits, _) = net.forward(ds.features())?;
    let mut out = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        let z = logits.row(i);
        let p = softened_softmax(z, 1.0)?;
        let pred = argmax(z);
        out.push((p[pred], pred == ds.labels()[i]));
    }
    Ok(out)
}

/// Equal-width histogram over `[min, max]`; constant data collapses to a
/// single bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn build(values: &[f64], bins: usize) -> Result<Histogram> {
        if values.is_empty() {
            return Err(Error::invalid("histogram needs at least one value"));
        }
        if bins == 0 {
            return Err(Error::invalid("histogram needs at least one bin"));
        }
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if min == max {
            return Ok(Histogram {
                edges: vec![min, max],
                counts: vec![values.len()],
            });
        }
        let width = (max - min) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|b| min + b as f64 * width).collect();
        let mut counts = vec![0usize; bins];
        for &v in values {
            let idx = (((v - min) / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        Ok(Histogram { edges, counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `bin_left,bin_right,count` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_left,bin_right,count\n");
        for (b, &c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", self.edges[b], self.edges[b + 1], c));
        }
        out
    }
}

/// Per-sample `|sum_j z_j|` plus its histogram.
pub fn logit_sum_stats(net: &Mlp, ds: &Dataset, bins: usize) -> Result<(Vec<f64>, Histogram)> {
    let (logits, _) = net.forward(ds.features())?;
    let values: Vec<f64> = (0..ds.len())
        .map(|i| logits.row(i).iter().sum::<f64>().abs())
        .collect();
    let hist = Histogram::build(&values, bins)?;
    Ok((values, hist))
}

/// Per-sample `|| z_s - z_t ||_2` plus its histogram.
pub fn logit_distance_stats(
    student: &Mlp,
    teacher: &Mlp,
    ds: &Dataset,
    bins: usize,
) -> Result<(Vec<f64>, Histogram)> {
    if student.output_dim() != teacher.output_dim() {
        return Err(Error::shape(format!(
            "student has {} classes, teacher has {}",
            student.output_dim(),
            teacher.output_dim()
        )));
    }
    let (z_s, _) = student.forward(ds.features())?;
    let (z_t, _) = teacher.forward(ds.features())?;
    let values: Vec<f64> = (0..ds.len())
        .map(|i| {
            let diff: Vec<f64> = z_s
                .row(i)
                .iter()
                .zip(z_t.row(i).iter())
                .map(|(a, b)| a - b)
                .collect();
            l2_norm(&diff)
        })
        .collect();
    let hist = Histogram::build(&values, bins)?;
    Ok((values, hist))
}

/// Per-sample `|| r ||_2` of the pre-logit representation.
pub fn prelogit_norm_stats(net: &Mlp, ds: &Dataset) -> Result<Vec<f64>> {
    let (_, cache) = net.forward(ds.features())?;
    let r = cache.prelogits();
    Ok((0..ds.len()).map(|i| l2_norm(r.row(i))).collect())
}

/// Per-sample TLD over a dataset plus its histogram.
pub fn tld_distribution(net: &Mlp, ds: &Dataset, bins: usize) -> Result<(Vec<f64>, Histogram)> {
    let (logits, _) = net.forward(ds.features())?;
    let values = (0..ds.len())
        .map(|i| tld(logits.row(i), ds.labels()[i]))
        .collect::<Result<Vec<f64>>>()?;
    let hist = Histogram::build(&values, bins)?;
    Ok((values, hist))
}

/// Per-sample softmax entropy at tau = 1.
pub fn entropy_distribution(net: &Mlp, ds: &Dataset) -> Result<Vec<f64>> {
    let (logits, _) = net.forward(ds.features())?;
    (0..ds.len())
        .map(|i| entropy(&softened_softmax(logits.row(i), 1.0)?))
        .collect()
}

/// Mean pre-logit per requested class.
pub fn class_templates(net: &Mlp, ds: &Dataset, class_ids: &[usize]) -> Result<Vec<Vec<f64>>> {
    let (_, cache) = net.forward(ds.features())?;
    let r = cache.prelogits();
    let d = r.cols();
    let mut templates = Vec::with_capacity(class_ids.len());
    for &c in class_ids {
        if c >= ds.classes() {
            return Err(Error::invalid(format!(
                "class {c} out of range for {} classes",
                ds.classes()
            )));
        }
        let mut sum = vec![0.0; d];
        let mut count = 0usize;
        for i in 0..ds.len() {
            if ds.labels()[i] == c {
                for (s, v) in sum.iter_mut().zip(r.row(i).iter()) {
                    *s += v;
                }
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::invalid(format!("class {c} has no samples")));
        }
        for s in &mut sum {
            *s /= count as f64;
        }
        templates.push(sum);
    }
    Ok(templates)
}

/// Orthonormal basis of the plane spanned by three class templates, with the
/// first template as the origin.
#[derive(Debug, Clone)]
pub struct ProjectionBasis {
    origin: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl ProjectionBasis {
    pub fn basis_vectors(&self) -> (&[f64], &[f64]) {
        (&self.u, &self.v)
    }
}

/// Gram-Schmidt over `(t2 - t1, t3 - t1)`; collinear templates are rejected.
pub fn projection_basis(templates: &[Vec<f64>; 3]) -> Result<ProjectionBasis> {
    let d = templates[0].len();
    if templates.iter().any(|t| t.len() != d) {
        return Err(Error::shape("templates have differing lengths".to_string()));
    }
    let sub = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter().zip(b.iter()).map(|(x, y)| x - y).collect()
    };
    let a = sub(&templates[1], &templates[0]);
    let b = sub(&templates[2], &templates[0]);
    let scale = l2_norm(&a).max(l2_norm(&b));
    if scale == 0.0 {
        return Err(Error::degenerate("templates coincide"));
    }

    let norm_a = l2_norm(&a);
    if norm_a <= 1e-12 * scale {
        return Err(Error::degenerate("first two templates coincide"));
    }
    let u: Vec<f64> = a.iter().map(|x| x / norm_a).collect();

    let mut w = b;
    // Two projection passes keep the Gram matrix within 1e-10 of identity.
    for _ in 0..2 {
        let proj = dot(&w, &u);
        for (wi, ui) in w.iter_mut().zip(u.iter()) {
            *wi -= proj * ui;
        }
    }
    let norm_w = l2_norm(&w);
    if norm_w <= 1e-10 * scale {
        return Err(Error::degenerate("templates are collinear"));
    }
    let v: Vec<f64> = w.iter().map(|x| x / norm_w).collect();

    Ok(ProjectionBasis {
        origin: templates[0].clone(),
        u,
        v,
    })
}

/// Coordinates of `r` on the template plane:
/// `(<r - t1, u>, <r - t1, v>)`.
pub fn project(basis: &ProjectionBasis, r: &[f64]) -> Result<(f64, f64)> {
    if r.len() != basis.origin.len() {
        return Err(Error::shape(format!(
            "point has {} entries, basis expects {}",
            r.len(),
            basis.origin.len()
        )));
    }
    let centered: Vec<f64> = r
        .iter()
        .zip(basis.origin.iter())
        .map(|(x, o)| x - o)
        .collect();
    Ok((dot(&centered, &basis.u), dot(&centered, &basis.v)))
}

/// `value` column, one row per sample.
pub fn values_to_csv(values: &[f64]) -> String {
    let mut out = String::from("value\n");
    for v in values {
        out.push_str(&format!("{v}\n"));
    }
    out
}
