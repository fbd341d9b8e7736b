//! Synthetic classification data, CSV round-tripping, train/test splitting,
//! and symmetric label-noise injection.

use crate::error::{Error, Result};
use crate::numerics::{l2_norm, Matrix, Rng};
use std::path::Path;

/// Feature matrix plus labels; `clean_labels` is present exactly when noise
/// has been injected.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Matrix,
    labels: Vec<usize>,
    clean_labels: Option<Vec<usize>>,
    k: usize,
}

impl Dataset {
    pub fn new(x: Matrix, labels: Vec<usize>, k: usize) -> Result<Dataset> {
        if x.rows() == 0 {
            return Err(Error::invalid("dataset needs at least one sample"));
        }
        if x.rows() != labels.len() {
            return Err(Error::shape(format!(
                "{} rows but {} labels",
                x.rows(),
                labels.len()
            )));
        }
        if k < 2 {
            return Err(Error::invalid("dataset needs at least 2 classes"));
        }
        if labels.iter().any(|&y| y >= k) {
            return Err(Error::invalid(format!("labels must lie in [0, {k})")));
        }
        Ok(Dataset {
            x,
            labels,
            clean_labels: None,
            k,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn features(&self) -> &Matrix {
        &self.x
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn clean_labels(&self) -> Option<&[usize]> {
        self.clean_labels.as_deref()
    }

    /// New dataset holding the listed samples, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::invalid("subset needs at least one sample"));
        }
        if indices.iter().any(|&i| i >= self.len()) {
            return Err(Error::invalid("subset index out of range"));
        }
        Ok(Dataset {
            x: self.x.gather_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            clean_labels: self
                .clean_labels
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i]).collect()),
            k: self.k,
        })
    }
}

/// Deterministic unit-norm class directions, independent of the sampling
/// seed so experiments differing only in sample noise share their geometry.
/// The first min(K, d) directions are orthonormalized by Gram-Schmidt;
/// any remainder is only normalized.
fn class_directions(k: usize, d: usize) -> Vec<Vec<f64>> {
    const CENTER_STREAM_SEED: u64 = 0x6B64_6C61_625F_6374; // fixed, not user-seeded
    let mut rng = Rng::new(CENTER_STREAM_SEED);
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(k);
    while dirs.len() < k {
        let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        if dirs.len() < d {
            for u in &dirs {
                let proj = crate::numerics::dot(&v, u);
                for (vi, ui) in v.iter_mut().zip(u.iter()) {
                    *vi -= proj * ui;
                }
            }
        }
        let norm = l2_norm(&v);
        if norm > 1e-8 {
            for vi in &mut v {
                *vi /= norm;
            }
            dirs.push(v);
        }
    }
    dirs
}

/// Isotropic Gaussian blobs: class `c` is centered at its unit direction
/// scaled by 3.0, with noise standard deviation `spread`. Labels come out
/// class-major and balanced.
pub fn gen_gaussian_mixture(
    k: usize,
    d: usize,
    n_per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if k < 2 {
        return Err(Error::invalid("need at least 2 classes"));
    }
    if d < 2 {
        return Err(Error::invalid("need at least 2 features"));
    }
    if n_per_class < 1 {
        return Err(Error::invalid("need at least 1 sample per class"));
    }
    if !(spread.is_finite() && spread >= 0.0) {
        return Err(Error::invalid(format!(
            "spread must be non-negative and finite, got {spread}"
        )));
    }
    let dirs = class_directions(k, d);
    let mut rng = Rng::new(seed);
    let n = k * n_per_class;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for (c, dir) in dirs.iter().enumerate() {
        for _ in 0..n_per_class {
            for &dj in dir.iter() {
                data.push(3.0 * dj + spread * rng.normal());
            }
            labels.push(c);
        }
    }
    Dataset::new(Matrix::from_vec(n, d, data)?, labels, k)
}

/// Flip exactly `round(fraction * N)` labels, chosen uniformly without
/// replacement; each flipped label is redrawn uniformly over the other
/// `K - 1` classes, so a flip always changes the label.
pub fn inject_symmetric_noise(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!(
            "noise fraction must lie in [0, 1], got {fraction}"
        )));
    }
    let n = ds.len();
    let flip_count = (fraction * n as f64).round() as usize;
    let clean = ds
        .clean_labels
        .clone()
        .unwrap_or_else(|| ds.labels.clone());

    let mut rng = Rng::new(seed);
    let mut indices: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut indices);

    let mut labels = ds.labels.clone();
    for &i in indices.iter().take(flip_count) {
        let offset = rng.index(ds.k - 1);
        let old = labels[i];
        labels[i] = if offset >= old { offset + 1 } else { offset };
    }
    Ok(Dataset {
        x: ds.x.clone(),
        labels,
        clean_labels: Some(clean),
        k: ds.k,
    })
}

/// Seeded shuffled split; the test side takes `round(test_fraction * N)`
/// samples and both sides stay non-empty.
pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = ds.len();
    let n_test = (test_fraction * n as f64).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::invalid(format!(
            "test fraction {test_fraction} leaves an empty side for {n} samples"
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut indices);
    let test = ds.subset(&indices[..n_test])?;
    let train = ds.subset(&indices[n_test..])?;
    Ok((train, test))
}

/// Header `f0,...,f{d-1},label[,clean_label]`, floats in shortest
/// round-trip decimal.
pub fn to_csv(ds: &Dataset) -> String {
    let mut out = String::new();
    for j in 0..ds.dim() {
        if j > 0 {
            out.push(',');
        }
        out.push_str(&format!("f{j}"));
    }
    out.push_str(",label");
    if ds.clean_labels.is_some() {
        out.push_str(",clean_label");
    }
    out.push('\n');
    for i in 0..ds.len() {
        for (j, v) in ds.x.row(i).iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v}"));
        }
        out.push_str(&format!(",{}", ds.labels[i]));
        if let Some(clean) = &ds.clean_labels {
            out.push_str(&format!(",{}", clean[i]));
        }
        out.push('\n');
    }
    out
}

pub fn save_csv(ds: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, to_csv(ds))?;
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parse the CSV produced by [`to_csv`]. The class count is inferred as
/// `max label + 1` over both label columns.
pub fn from_csv(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty dataset file"))?;
    let cols: Vec<&str> = header.split(',').collect();

    let label_pos = cols
        .iter()
        .position(|c| *c == "label")
        .ok_or_else(|| parse_err(1, "missing \"label\" column"))?;
    let d = label_pos;
    if d == 0 {
        return Err(parse_err(1, "no feature columns before \"label\""));
    }
    for (j, c) in cols[..d].iter().enumerate() {
        if *c != format!("f{j}") {
            return Err(parse_err(1, format!("expected column f{j}, found {c:?}")));
        }
    }
    let has_clean = match cols.len() - (d + 1) {
        0 => false,
        1 if cols[d + 1] == "clean_label" => true,
        _ => {
            return Err(parse_err(
                1,
                "columns after \"label\" must be exactly \"clean_label\"",
            ))
        }
    };

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut clean = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(parse_err(
                line_no,
                format!("expected {} fields, found {}", cols.len(), fields.len()),
            ));
        }
        for f in &fields[..d] {
            let v: f64 = f
                .parse()
                .map_err(|_| parse_err(line_no, format!("invalid float {f:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(line_no, format!("non-finite feature {f:?}")));
            }
            data.push(v);
        }
        let y: usize = fields[d]
            .parse()
            .map_err(|_| parse_err(line_no, format!("invalid label {:?}", fields[d])))?;
        labels.push(y);
        if has_clean {
            let c: usize = fields[d + 1].parse().map_err(|_| {
                parse_err(line_no, format!("invalid clean_label {:?}", fields[d + 1]))
            })?;
            clean.push(c);
        }
    }
    if labels.is_empty() {
        return Err(parse_err(1, "dataset has no data rows"));
    }
    let k = labels
        .iter()
        .chain(clean.iter())
        .max()
        .map(|m| (m + 1).max(2))
        .unwrap();
    let x = Matrix::from_vec(labels.len(), d, data)?;
    let mut ds = Dataset::new(x, labels, k)?;
    if has_clean {
        ds.clean_labels = Some(clean);
    }
    Ok(ds)
}

pub fn load_csv(path: &Path) -> Result<Dataset> {
    from_csv(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixture_is_deterministic_and_balanced() {
        let a = gen_gaussian_mixture(4, 6, 25, 0.3, 9).unwrap();
        let b = gen_gaussian_mixture(4, 6, 25, 0.3, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_gaussian_mixture(4, 6, 25, 0.3, 10).unwrap());

        let mut counts = vec![0usize; 4];
        for &y in a.labels() {
            counts[y] += 1;
        }
        assert_eq!(counts, vec![25; 4]);
    }

    #[test]
    fn zero_spread_collapses_to_centers() {
        let ds = gen_gaussian_mixture(3, 5, 4, 0.0, 1).unwrap();
        for c in 0..3 {
            let rows: Vec<&[f64]> = (0..ds.len())
                .filter(|&i| ds.labels()[i] == c)
                .map(|i| ds.features().row(i))
                .collect();
            for r in &rows[1..] {
                assert_eq!(*r, rows[0]);
            }
            let norm = l2_norm(rows[0]);
            assert!((norm - 3.0).abs() < 1e-12, "center norm {norm}");
        }
    }

    #[test]
    fn centers_do_not_depend_on_sample_seed() {
        let a = gen_gaussian_mixture(3, 5, 1, 0.0, 1).unwrap();
        let b = gen_gaussian_mixture(3, 5, 1, 0.0, 999).unwrap();
        assert_eq!(a.features(), b.features());
    }

    #[test]
    fn invalid_dims_are_rejected() {
        assert!(gen_gaussian_mixture(1, 5, 4, 0.1, 1).is_err());
        assert!(gen_gaussian_mixture(3, 1, 4, 0.1, 1).is_err());
        assert!(gen_gaussian_mixture(3, 5, 0, 0.1, 1).is_err());
        assert!(gen_gaussian_mixture(3, 5, 4, -0.1, 1).is_err());
    }

    #[test]
    fn noise_flips_exact_count_and_never_self() {
        let ds = gen_gaussian_mixture(5, 4, 200, 0.5, 2).unwrap();
        let noisy = inject_symmetric_noise(&ds, 0.4, 3).unwrap();
        let clean = noisy.clean_labels().unwrap();
        assert_eq!(clean, ds.labels());
        let flipped = noisy
            .labels()
            .iter()
            .zip(clean.iter())
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(flipped, 400);
    }

    #[test]
    fn noise_extremes() {
        let ds = gen_gaussian_mixture(3, 4, 50, 0.5, 2).unwrap();
        let untouched = inject_symmetric_noise(&ds, 0.0, 7).unwrap();
        assert_eq!(untouched.labels(), ds.labels());
        assert_eq!(untouched.clean_labels().unwrap(), ds.labels());

        let all = inject_symmetric_noise(&ds, 1.0, 7).unwrap();
        assert!(all
            .labels()
            .iter()
            .zip(ds.labels().iter())
            .all(|(a, b)| a != b));

        assert!(inject_symmetric_noise(&ds, 1.5, 7).is_err());
    }

    #[test]
    fn noise_is_deterministic() {
        let ds = gen_gaussian_mixture(4, 4, 100, 0.5, 2).unwrap();
        let a = inject_symmetric_noise(&ds, 0.3, 11).unwrap();
        let b = inject_symmetric_noise(&ds, 0.3, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_partitions_the_dataset() {
        let ds = gen_gaussian_mixture(3, 4, 40, 0.5, 5).unwrap();
        let (train, test) = split(&ds, 0.25, 13).unwrap();
        assert_eq!(train.len() + test.len(), ds.len());
        assert_eq!(test.len(), 30);

        let (train2, test2) = split(&ds, 0.25, 13).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);

        // Union of both sides recovers the original multiset of rows.
        let mut seen: Vec<Vec<f64>> = Vec::new();
        for part in [&train, &test] {
            for i in 0..part.len() {
                seen.push(part.features().row(i).to_vec());
            }
        }
        let mut original: Vec<Vec<f64>> = (0..ds.len())
            .map(|i| ds.features().row(i).to_vec())
            .collect();
        let key = |v: &Vec<f64>| format!("{v:?}");
        seen.sort_by_key(key);
        original.sort_by_key(key);
        assert_eq!(seen, original);

        assert!(split(&ds, 0.0, 13).is_err());
        assert!(split(&ds, 1.0, 13).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let ds = gen_gaussian_mixture(3, 4, 10, 0.5, 6).unwrap();
        let restored = from_csv(&to_csv(&ds)).unwrap();
        assert_eq!(ds, restored);

        let noisy = inject_symmetric_noise(&ds, 0.5, 1).unwrap();
        let restored = from_csv(&to_csv(&noisy)).unwrap();
        assert_eq!(noisy, restored);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let err = from_csv("f0,f1\n1.0,2.0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");

        let err = from_csv("f0,label\n1.0,0\nbad,1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");

        let err = from_csv("f0,label\n1.0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }
}
