//! Synthetic open-set datasets.
//!
//! Known classes are indexed `0..K` in memory and written as `1..=K` in
//! dataset files. Every unknown sample carries the same evaluation label but
//! remembers the generator class it was drawn from.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Known(usize),
    /// Any class outside the training alphabet; `source` is the generator
    /// class id, kept for analysis only.
    Unknown { source: usize },
}

impl Label {
    pub fn is_known(self) -> bool {
        matches!(self, Label::Known(_))
    }

    pub fn known(self) -> Option<usize> {
        match self {
            Label::Known(c) => Some(c),
            Label::Unknown { .. } => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Known(c) => write!(f, "{}", c + 1),
            Label::Unknown { source } => write!(f, "u{source}"),
        }
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if let Some(rest) = s.strip_prefix('u') {
            let source = rest.parse().map_err(|_| format!("bad unknown label {s:?}"))?;
            return Ok(Label::Unknown { source });
        }
        match s.parse::<usize>() {
            Ok(c) if c >= 1 => Ok(Label::Known(c - 1)),
            _ => Err(format!("bad label {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Feature matrix plus open-set labels.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenSetDataset<T> {
    features: Tensor<T>,
    labels: Vec<Label>,
    split: Split,
    known_classes: usize,
}

impl<T: Scalar> OpenSetDataset<T> {
    pub fn new(features: Tensor<T>, labels: Vec<Label>, split: Split, known_classes: usize) -> Result<Self> {
        if features.shape().len() != 2 || features.rows() != labels.len() {
            return Err(Error::Shape {
                op: "dataset",
                lhs: features.shape().to_vec(),
                rhs: vec![labels.len()],
            });
        }
        if known_classes < 2 {
            return Err(Error::validation("known_classes", "need at least 2 known classes"));
        }
        if !features.is_finite() {
            return Err(Error::validation("features", "must be finite"));
        }
        for label in &labels {
            match *label {
                Label::Known(c) if c >= known_classes => {
                    return Err(Error::validation("labels", format!("class {} exceeds K = {known_classes}", c + 1)));
                }
                Label::Unknown { .. } if split == Split::Train => {
                    return Err(Error::validation("labels", "train split cannot contain unknown samples"));
                }
                _ => {}
            }
        }
        Ok(Self {
            features,
            labels,
            split,
            known_classes,
        })
    }

    pub fn features(&self) -> &Tensor<T> {
        &self.features
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn known_classes(&self) -> usize {
        self.known_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn unknown_count(&self) -> usize {
        self.labels.iter().filter(|l| !l.is_known()).count()
    }

    /// Row subset with the same split and class count.
    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            split: self.split,
            known_classes: self.known_classes,
        }
    }

    /// Known class indices; panics on unknown rows, so only call on train data.
    pub fn known_labels(&self) -> Vec<usize> {
        self.labels
            .iter()
            .map(|l| l.known().expect("known label"))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    GaussianBlobs,
    ConcentricRings,
    HeldOutSplit,
}

/// Parameters of a synthetic dataset. A spec and its seed fix the data
/// bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: GeneratorKind,
    pub known_classes: usize,
    pub unknown_classes: usize,
    pub samples_per_class: usize,
    pub dim: usize,
    /// Standard deviation of every cluster (radial noise for rings).
    pub spread: f64,
    /// Distance of the known-class means from the origin.
    pub radius: f64,
    /// Unknown means sit at `unknown_radius * radius`, between known classes.
    pub unknown_radius: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            kind: GeneratorKind::GaussianBlobs,
            known_classes: 3,
            unknown_classes: 2,
            samples_per_class: 100,
            dim: 2,
            spread: 1.0,
            radius: 4.0,
            unknown_radius: 0.35,
            seed: 7,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::validation("dim", "must be at least 2"));
        }
        if self.known_classes < 2 {
            return Err(Error::validation("known_classes", "must be at least 2"));
        }
        if self.unknown_classes == 0 {
            return Err(Error::validation("unknown_classes", "must be positive"));
        }
        if self.samples_per_class == 0 {
            return Err(Error::validation("samples_per_class", "must be positive"));
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) {
            return Err(Error::validation("spread", "must be finite and nonnegative"));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::validation("radius", "must be finite and positive"));
        }
        if !(self.unknown_radius >= 0.0 && self.unknown_radius.is_finite()) {
            return Err(Error::validation("unknown_radius", "must be finite and nonnegative"));
        }
        Ok(())
    }

    /// Generates `(train, test)` according to `kind`.
    pub fn generate<T: Scalar>(&self) -> Result<(OpenSetDataset<T>, OpenSetDataset<T>)> {
        match self.kind {
            GeneratorKind::GaussianBlobs => gen_gaussian_blobs(self),
            GeneratorKind::ConcentricRings => gen_concentric_rings(self),
            GeneratorKind::HeldOutSplit => gen_held_out_split(self),
        }
    }
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn known_mean(spec: &DatasetSpec, class: usize) -> [f64; 2] {
    let angle = std::f64::consts::TAU * class as f64 / spec.known_classes as f64;
    [spec.radius * angle.cos(), spec.radius * angle.sin()]
}

fn unknown_mean(spec: &DatasetSpec, j: usize) -> [f64; 2] {
    // Midway between consecutive known means; later laps are rotated by a
    // quarter gap so no two unknown means coincide.
    let k = spec.known_classes as f64;
    let lap = (j / spec.known_classes) as f64;
    let angle = std::f64::consts::TAU * ((j % spec.known_classes) as f64 + 0.5 + 0.25 * lap) / k;
    let r = spec.radius * spec.unknown_radius * (1.0 + lap);
    [r * angle.cos(), r * angle.sin()]
}

fn sample_blob(rng: &mut ChaCha8Rng, mean: [f64; 2], spec: &DatasetSpec, n: usize, out: &mut Vec<f64>) {
    for _ in 0..n {
        for axis in 0..spec.dim {
            let centre = if axis < 2 { mean[axis] } else { 0.0 };
            let z: f64 = rng.sample(StandardNormal);
            out.push(centre + spec.spread * z);
        }
    }
}

fn to_dataset<T: Scalar>(
    values: Vec<f64>,
    labels: Vec<Label>,
    dim: usize,
    split: Split,
    known: usize,
) -> Result<OpenSetDataset<T>> {
    let n = labels.len();
    let features = Tensor::from_vec(&[n, dim], values.into_iter().map(T::of).collect())?;
    OpenSetDataset::new(features, labels, split, known)
}

/// Isotropic Gaussian clusters; train holds known classes only, test holds
/// fresh known samples plus every unknown cluster.
pub fn gen_gaussian_blobs<T: Scalar>(spec: &DatasetSpec) -> Result<(OpenSetDataset<T>, OpenSetDataset<T>)> {
    spec.validate()?;
    let mut rng = rng_for(spec.seed);
    let n = spec.samples_per_class;
    let k = spec.known_classes;

    let mut train_x = Vec::new();
    let mut train_y = Vec::new();
    for c in 0..k {
        sample_blob(&mut rng, known_mean(spec, c), spec, n, &mut train_x);
        train_y.extend(std::iter::repeat_n(Label::Known(c), n));
    }

    let mut test_x = Vec::new();
    let mut test_y = Vec::new();
    for c in 0..k {
        sample_blob(&mut rng, known_mean(spec, c), spec, n, &mut test_x);
        test_y.extend(std::iter::repeat_n(Label::Known(c), n));
    }
    for j in 0..spec.unknown_classes {
        sample_blob(&mut rng, unknown_mean(spec, j), spec, n, &mut test_x);
        test_y.extend(std::iter::repeat_n(Label::Unknown { source: k + j }, n));
    }

    Ok((
        to_dataset(train_x, train_y, spec.dim, Split::Train, k)?,
        to_dataset(test_x, test_y, spec.dim, Split::Test, k)?,
    ))
}

/// Known classes on the inner rings, unknown classes on the outer ones.
pub fn gen_concentric_rings<T: Scalar>(spec: &DatasetSpec) -> Result<(OpenSetDataset<T>, OpenSetDataset<T>)> {
    spec.validate()?;
    let mut rng = rng_for(spec.seed);
    let n = spec.samples_per_class;
    let k = spec.known_classes;

    let mut ring = |class: usize, out: &mut Vec<f64>| {
        let r0 = spec.radius * (class + 1) as f64;
        for _ in 0..n {
            let angle = rng.random::<f64>() * std::f64::consts::TAU;
            let z: f64 = rng.sample(StandardNormal);
            let r = r0 + spec.spread * z;
            out.push(r * angle.cos());
            out.push(r * angle.sin());
            for _ in 2..spec.dim {
                let z: f64 = rng.sample(StandardNormal);
                out.push(spec.spread * z);
            }
        }
    };

    let mut train_x = Vec::new();
    let mut train_y = Vec::new();
    for c in 0..k {
        ring(c, &mut train_x);
        train_y.extend(std::iter::repeat_n(Label::Known(c), n));
    }
    let mut test_x = Vec::new();
    let mut test_y = Vec::new();
    for c in 0..k {
        ring(c, &mut test_x);
        test_y.extend(std::iter::repeat_n(Label::Known(c), n));
    }
    for j in 0..spec.unknown_classes {
        ring(k + j, &mut test_x);
        test_y.extend(std::iter::repeat_n(Label::Unknown { source: k + j }, n));
    }

    Ok((
        to_dataset(train_x, train_y, spec.dim, Split::Train, k)?,
        to_dataset(test_x, test_y, spec.dim, Split::Test, k)?,
    ))
}

/// A pool of `K + U` equally spaced blobs; `K` of them are drawn as known at
/// random and split half/half between train and test.
pub fn gen_held_out_split<T: Scalar>(spec: &DatasetSpec) -> Result<(OpenSetDataset<T>, OpenSetDataset<T>)> {
    spec.validate()?;
    let mut rng = rng_for(spec.seed);
    let total = spec.known_classes + spec.unknown_classes;
    let per_class = 2 * spec.samples_per_class;

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for c in 0..total {
        let angle = std::f64::consts::TAU * c as f64 / total as f64;
        let mean = [spec.radius * angle.cos(), spec.radius * angle.sin()];
        sample_blob(&mut rng, mean, spec, per_class, &mut values);
        labels.extend(std::iter::repeat_n(c, per_class));
    }
    let features = Tensor::from_vec(&[labels.len(), spec.dim], values.into_iter().map(T::of).collect())?;

    let mut ids: Vec<usize> = (0..total).collect();
    ids.shuffle(&mut rng);
    let mut known = ids[..spec.known_classes].to_vec();
    known.sort_unstable();
    split_open_set(&features, &labels, &known, 0.5, &mut rng)
}

/// Splits a labelled pool into an open-set train/test pair.
///
/// Samples of `known_ids` are divided between train and test (the first
/// `round(train_fraction · n_c)` of a shuffled class go to train) and
/// relabelled `0..K` in the order of `known_ids`. Every other class appears
/// in test only, as unknown.
pub fn split_open_set<T: Scalar, R: Rng>(
    features: &Tensor<T>,
    labels: &[usize],
    known_ids: &[usize],
    train_fraction: f64,
    rng: &mut R,
) -> Result<(OpenSetDataset<T>, OpenSetDataset<T>)> {
    if features.rows() != labels.len() {
        return Err(Error::Shape {
            op: "split_open_set",
            lhs: features.shape().to_vec(),
            rhs: vec![labels.len()],
        });
    }
    let mut alphabet: Vec<usize> = labels.to_vec();
    alphabet.sort_unstable();
    alphabet.dedup();
    if known_ids.is_empty() {
        return Err(Error::validation("known_ids", "must not be empty"));
    }
    let mut known_sorted = known_ids.to_vec();
    known_sorted.sort_unstable();
    known_sorted.dedup();
    if known_sorted.len() != known_ids.len() {
        return Err(Error::validation("known_ids", "must not repeat a class"));
    }
    if let Some(missing) = known_ids.iter().find(|id| alphabet.binary_search(id).is_err()) {
        return Err(Error::validation("known_ids", format!("class {missing} is not in the label alphabet")));
    }
    if known_ids.len() == alphabet.len() {
        return Err(Error::validation("known_ids", "cannot select every class as known"));
    }
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::validation("train_fraction", "must lie in [0, 1]"));
    }

    let mut train_rows = Vec::new();
    let mut train_labels = Vec::new();
    let mut test_rows = Vec::new();
    let mut test_labels = Vec::new();
    for (new_id, &class) in known_ids.iter().enumerate() {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rows.shuffle(rng);
        let cut = (train_fraction * rows.len() as f64).round() as usize;
        for (pos, &r) in rows.iter().enumerate() {
            if pos < cut {
                train_rows.push(r);
                train_labels.push(Label::Known(new_id));
            } else {
                test_rows.push(r);
                test_labels.push(Label::Known(new_id));
            }
        }
    }
    for (r, &class) in labels.iter().enumerate() {
        if !known_ids.contains(&class) {
            test_rows.push(r);
            test_labels.push(Label::Unknown { source: class });
        }
    }

    let k = known_ids.len().max(2);
    Ok((
        OpenSetDataset::new(features.select_rows(&train_rows), train_labels, Split::Train, k)?,
        OpenSetDataset::new(features.select_rows(&test_rows), test_labels, Split::Test, k)?,
    ))
}

/// Labelled training rows injected into one adaptation batch.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionBatch<T> {
    pub features: Tensor<T>,
    pub labels: Vec<usize>,
}

impl<T: Scalar> InjectionBatch<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Uniform subset of `count` training rows, drawn without replacement.
pub fn sample_injection_batch<T: Scalar, R: Rng>(
    train: &OpenSetDataset<T>,
    count: usize,
    rng: &mut R,
) -> Result<InjectionBatch<T>> {
    if count > train.len() {
        return Err(Error::validation(
            "injection_count",
            format!("{count} exceeds the {} training samples", train.len()),
        ));
    }
    let rows = rand::seq::index::sample(rng, train.len(), count).into_vec();
    let labels = rows
        .iter()
        .map(|&r| {
            train.labels()[r]
                .known()
                .ok_or_else(|| Error::validation("train", "contains an unknown sample"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InjectionBatch {
        features: train.features().select_rows(&rows),
        labels,
    })
}

const MAGIC: &str = "ossl-dataset 1";

/// Writes the text format: a header then one `label,f1,..,fd` row per sample.
///
/// Values use the shortest representation that parses back to the same
/// bits, so the round trip is exact.
pub fn write_dataset<T: Scalar>(path: &Path, data: &OpenSetDataset<T>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "n {}", data.len())?;
    writeln!(w, "d {}", data.dim())?;
    writeln!(w, "k {}", data.known_classes())?;
    writeln!(w, "split {}", data.split())?;
    for (i, label) in data.labels().iter().enumerate() {
        write!(w, "{label}")?;
        for v in data.features().row(i) {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<T: Scalar + FromStr>(path: &Path) -> Result<OpenSetDataset<T>> {
    let shown = path.display().to_string();
    let err = |line: usize, reason: String| Error::Parse {
        path: shown.clone(),
        line,
        reason,
    };
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let mut next = |expect: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i + 1, l)),
            Some((i, Err(e))) => Err(err(i + 1, e.to_string())),
            None => Err(err(0, format!("missing {expect}"))),
        }
    };

    let (ln, magic) = next("header")?;
    if magic.trim() != MAGIC {
        return Err(err(ln, format!("expected {MAGIC:?}")));
    }
    let mut header = |key: &str| -> Result<String> {
        let (ln, line) = next(key)?;
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next()) {
            (Some(k), Some(v)) if k == key => Ok(v.to_string()),
            _ => Err(err(ln, format!("expected `{key} <value>`"))),
        }
    };
    let n: usize = header("n")?.parse().map_err(|_| err(2, "bad n".into()))?;
    let d: usize = header("d")?.parse().map_err(|_| err(3, "bad d".into()))?;
    let k: usize = header("k")?.parse().map_err(|_| err(4, "bad k".into()))?;
    let split = match header("split")?.as_str() {
        "train" => Split::Train,
        "test" => Split::Test,
        other => return Err(err(5, format!("unknown split {other:?}"))),
    };

    let mut values = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let (ln, line) = next("row")?;
        let mut fields = line.split(',');
        let label: Label = fields
            .next()
            .unwrap_or_default()
            .trim()
            .parse()
            .map_err(|e| err(ln, e))?;
        labels.push(label);
        let before = values.len();
        for f in fields {
            values.push(f.trim().parse::<T>().map_err(|_| err(ln, format!("bad value {f:?}")))?);
        }
        if values.len() - before != d {
            return Err(err(ln, format!("expected {d} features")));
        }
    }
    let features = Tensor::from_vec(&[n, d], values)?;
    OpenSetDataset::new(features, labels, split, k)
}
