//! Dataset construction and retain/forget/test partitioning.

use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, LabError, Result};
use crate::nn::Batch;
use crate::rng::substream;

/// Labels at or above this value are treated as malformed input.
const MAX_LABEL: usize = 1000;

/// Features live in `[0, 1]^d`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    num_classes: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Vec<f64>, labels: Vec<usize>, dim: usize, num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return config_err("dataset needs at least one sample");
        }
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(LabError::Shape(format!(
                "{} labels with width {dim} need {} features, got {}",
                labels.len(),
                labels.len() * dim,
                features.len()
            )));
        }
        if num_classes < 2 {
            return config_err(format!("dataset needs at least 2 classes, got {num_classes}"));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= num_classes) {
            return config_err(format!("label {y} out of range for {num_classes} classes"));
        }
        if features.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return config_err("dataset features must lie in [0, 1]");
        }
        Ok(Self { name: name.into(), features, labels, dim, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Gathers the given rows into a batch.
    pub fn batch(&self, indices: &[usize]) -> Result<Batch> {
        let mut inputs = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(LabError::Shape(format!("row index {i} out of range for {} rows", self.len())));
            }
            inputs.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Batch::new(inputs, labels, self.dim)
    }

    pub fn class_count(&self, class: usize) -> usize {
        self.labels.iter().filter(|&&y| y == class).count()
    }
}

/// Per-column min-max scaling into `[0, 1]`; constant columns map to 0.
pub fn min_max_normalize(features: &mut [f64], dim: usize) {
    for c in 0..dim {
        let col = features.iter().skip(c).step_by(dim);
        let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let span = hi - lo;
        for v in features.iter_mut().skip(c).step_by(dim) {
            *v = if span > 0.0 { ((*v - lo) / span).clamp(0.0, 1.0) } else { 0.0 };
        }
    }
}

/// Isotropic Gaussian clusters around centers drawn in `[-1, 1]^dim`.
pub fn gen_blobs(num_classes: usize, per_class: usize, dim: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if num_classes < 2 || per_class < 2 || dim < 1 || !(spread > 0.0) {
        return config_err(format!(
            "blobs need num_classes >= 2, per_class >= 2, dim >= 1, spread > 0 (got {num_classes}, {per_class}, {dim}, {spread})"
        ));
    }
    let mut center_rng = substream(seed, &[0xB10B, 0]);
    let unit = rand_distr::Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    let centers: Vec<Vec<f64>> = (0..num_classes).map(|_| (0..dim).map(|_| unit.sample(&mut center_rng)).collect()).collect();
    let noise = Normal::new(0.0, spread).expect("positive spread");
    let mut rng = substream(seed, &[0xB10B, 1]);
    let mut features = Vec::with_capacity(num_classes * per_class * dim);
    let mut labels = Vec::with_capacity(num_classes * per_class);
    for (class, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            features.extend(center.iter().map(|&c| c + noise.sample(&mut rng)));
            labels.push(class);
        }
    }
    min_max_normalize(&mut features, dim);
    Dataset::new(format!("blobs-{num_classes}x{per_class}-d{dim}"), features, labels, dim, num_classes)
}

/// Two interleaving half circles in 2-D with Gaussian jitter.
pub fn gen_moons(per_class: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if per_class < 2 || noise < 0.0 {
        return config_err(format!("moons need per_class >= 2 and noise >= 0 (got {per_class}, {noise})"));
    }
    let jitter = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("valid std");
    let mut rng = substream(seed, &[0x300, 0]);
    let mut features = Vec::with_capacity(per_class * 4);
    let mut labels = Vec::with_capacity(per_class * 2);
    for i in 0..per_class {
        let t = std::f64::consts::PI * i as f64 / (per_class - 1) as f64;
        features.push(t.cos() + if noise > 0.0 { jitter.sample(&mut rng) } else { 0.0 });
        features.push(t.sin() + if noise > 0.0 { jitter.sample(&mut rng) } else { 0.0 });
        labels.push(0);
    }
    for i in 0..per_class {
        let t = std::f64::consts::PI * i as f64 / (per_class - 1) as f64;
        features.push(1.0 - t.cos() + if noise > 0.0 { jitter.sample(&mut rng) } else { 0.0 });
        features.push(0.5 - t.sin() + if noise > 0.0 { jitter.sample(&mut rng) } else { 0.0 });
        labels.push(1);
    }
    min_max_normalize(&mut features, 2);
    Dataset::new(format!("moons-{per_class}"), features, labels, 2, 2)
}

/// Parses `f1,...,fd,label` rows under a one-line header.
pub fn parse_csv(text: &str, name: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| LabError::Parse(format!("{name}: empty file")))?;
    let columns = header.split(',').count();
    if columns < 2 {
        return Err(LabError::Parse(format!("{name}: header needs at least one feature and a label column")));
    }
    let dim = columns - 1;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (line_no, line) in lines {
        let row = line_no + 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != columns {
            return Err(LabError::Parse(format!("{name}: row {row} has {} columns, expected {columns}", cells.len())));
        }
        for (c, cell) in cells[..dim].iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| LabError::Parse(format!("{name}: row {row}, column {}: `{cell}` is not a number", c + 1)))?;
            if !v.is_finite() {
                return Err(LabError::Parse(format!("{name}: row {row}, column {}: non-finite value", c + 1)));
            }
            features.push(v);
        }
        let label: usize = cells[dim]
            .parse()
            .map_err(|_| LabError::Parse(format!("{name}: row {row}: label `{}` is not a class index", cells[dim])))?;
        if label >= MAX_LABEL {
            return Err(LabError::Parse(format!("{name}: row {row}: label {label} exceeds {}", MAX_LABEL - 1)));
        }
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(LabError::Parse(format!("{name}: no data rows")));
    }
    let num_classes = labels.iter().max().copied().unwrap_or(0) + 1;
    if num_classes < 2 {
        return Err(LabError::Parse(format!("{name}: need at least two classes")));
    }
    min_max_normalize(&mut features, dim);
    Dataset::new(name, features, labels, dim, num_classes)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    parse_csv(&std::fs::read_to_string(path)?, &name)
}

/// The bundled UCI Iris table (150 rows, 4 features, 3 classes).
pub fn iris() -> Dataset {
    parse_csv(include_str!("../data/iris.csv"), "iris").expect("bundled iris table parses")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ForgetMode {
    #[default]
    Sample,
    Class,
}

/// Index partition of a dataset into retain, forget, and held-out test rows.
#[derive(Clone, Debug, PartialEq)]
pub struct UnlearnTask {
    pub dataset: Dataset,
    pub retain_idx: Vec<usize>,
    pub forget_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub mode: ForgetMode,
    pub forget_class: Option<usize>,
    pub forget_fraction: f64,
}

impl UnlearnTask {
    /// Builds a task from explicit index sets, checking disjointness.
    pub fn from_indices(
        dataset: Dataset,
        retain_idx: Vec<usize>,
        forget_idx: Vec<usize>,
        test_idx: Vec<usize>,
        mode: ForgetMode,
        forget_class: Option<usize>,
    ) -> Result<Self> {
        let n = dataset.len();
        let mut seen = vec![false; n];
        for &i in retain_idx.iter().chain(&forget_idx).chain(&test_idx) {
            if i >= n {
                return config_err(format!("index {i} out of range for {n} rows"));
            }
            if seen[i] {
                return config_err(format!("index {i} appears in more than one split"));
            }
            seen[i] = true;
        }
        if retain_idx.is_empty() {
            return config_err("retain set is empty");
        }
        let train = retain_idx.len() + forget_idx.len();
        let fraction = if forget_idx.is_empty() { 0.0 } else { forget_idx.len() as f64 / train as f64 };
        Ok(Self { dataset, retain_idx, forget_idx, test_idx, mode, forget_class, forget_fraction: fraction })
    }

    /// Retain and forget rows together, ascending.
    pub fn train_idx(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.retain_idx.iter().chain(&self.forget_idx).copied().collect();
        all.sort_unstable();
        all
    }
}

/// Class-stratified test split, then a forget set drawn from `forget_class`.
///
/// In class mode every remaining training row of `forget_class` is forgotten
/// and `forget_fraction` is ignored.
pub fn split_unlearn(
    dataset: &Dataset,
    mode: ForgetMode,
    forget_class: usize,
    forget_fraction: f64,
    test_fraction: f64,
    seed: u64,
) -> Result<UnlearnTask> {
    if !(forget_fraction > 0.0 && forget_fraction <= 1.0) {
        return config_err(format!("forget_fraction must be in (0, 1], got {forget_fraction}"));
    }
    if !(test_fraction > 0.0 && test_fraction <= 1.0) {
        return config_err(format!("test_fraction must be in (0, 1], got {test_fraction}"));
    }
    if forget_class >= dataset.num_classes() || dataset.class_count(forget_class) == 0 {
        return config_err(format!("forget_class {forget_class} has no samples in `{}`", dataset.name));
    }
    let mut test_idx = Vec::new();
    let mut train_by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes()];
    for (class, slot) in train_by_class.iter_mut().enumerate() {
        let mut members: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.label(i) == class).collect();
        members.shuffle(&mut substream(seed, &[0x5EED, 1, class as u64]));
        let n_test = ((members.len() as f64) * test_fraction).round() as usize;
        let n_test = n_test.min(members.len().saturating_sub(1));
        test_idx.extend_from_slice(&members[..n_test]);
        *slot = members[n_test..].to_vec();
    }
    let mut candidates = train_by_class[forget_class].clone();
    let (forget_idx, fraction) = match mode {
        ForgetMode::Class => (candidates, 1.0),
        ForgetMode::Sample => {
            candidates.sort_unstable();
            candidates.shuffle(&mut substream(seed, &[0x5EED, 2]));
            let k = ((candidates.len() as f64) * forget_fraction).round().max(1.0) as usize;
            (candidates[..k.min(candidates.len())].to_vec(), forget_fraction)
        }
    };
    let mut forget_idx = forget_idx;
    forget_idx.sort_unstable();
    test_idx.sort_unstable();
    let mut retain_idx: Vec<usize> =
        train_by_class.iter().flatten().copied().filter(|i| forget_idx.binary_search(i).is_err()).collect();
    retain_idx.sort_unstable();
    if retain_idx.is_empty() {
        return config_err("split leaves an empty retain set");
    }
    Ok(UnlearnTask {
        dataset: dataset.clone(),
        retain_idx,
        forget_idx,
        test_idx,
        mode,
        forget_class: Some(forget_class),
        forget_fraction: fraction,
    })
}
