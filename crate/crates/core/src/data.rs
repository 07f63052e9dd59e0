//! Synthetic cluster task, stratified splits, minibatching and a toy
//! corruption benchmark.

use std::f64::consts::TAU;
use std::io::{Read, Write};

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::{argmax, SoftLabels};
use crate::rng::{stream, tags};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Labels {
    Hard(Vec<usize>),
    Soft(Array2<f64>),
}

/// Feature rows with hard or soft labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub features: Array2<f64>,
    pub labels: Labels,
    pub n_classes: usize,
}

impl LabeledDataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if labels.len() != features.nrows() {
            return Err(Error::Shape(format!("{} labels for {} rows", labels.len(), features.nrows())));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::OutOfRange { index: y, len: n_classes });
        }
        Ok(Self {
            features,
            labels: Labels::Hard(labels),
            n_classes,
        })
    }

    pub fn with_soft_labels(features: Array2<f64>, soft: SoftLabels) -> Result<Self> {
        if soft.len() != features.nrows() {
            return Err(Error::Shape(format!("{} labels for {} rows", soft.len(), features.nrows())));
        }
        let n_classes = soft.n_classes();
        Ok(Self {
            features,
            labels: Labels::Soft(soft.into_array()),
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Hard labels; soft rows are reduced to their arg-max.
    pub fn hard_labels(&self) -> Vec<usize> {
        match &self.labels {
            Labels::Hard(v) => v.clone(),
            Labels::Soft(p) => p.outer_iter().map(|r| argmax(r.iter().copied())).collect(),
        }
    }

    pub fn targets(&self) -> SoftLabels {
        match &self.labels {
            Labels::Hard(v) => SoftLabels::from_hard(v, self.n_classes).expect("labels validated"),
            Labels::Soft(p) => SoftLabels::new_unchecked(p.clone()),
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let features = self.features.select(Axis(0), idx);
        let labels = match &self.labels {
            Labels::Hard(v) => Labels::Hard(idx.iter().map(|&i| v[i]).collect()),
            Labels::Soft(p) => Labels::Soft(p.select(Axis(0), idx)),
        };
        Self {
            features,
            labels,
            n_classes: self.n_classes,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for y in self.hard_labels() {
            c[y] += 1;
        }
        c
    }

    /// Writes `x0..x{d-1},label` (or `x..,y0..y{C-1}` for soft labels) with a header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        match &self.labels {
            Labels::Hard(_) => header.push("label".into()),
            Labels::Soft(_) => header.extend((0..self.n_classes).map(|c| format!("y{c}"))),
        }
        wr.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.features.row(i).iter().map(|v| v.to_string()).collect();
            match &self.labels {
                Labels::Hard(v) => rec.push(v[i].to_string()),
                Labels::Soft(p) => rec.extend(p.row(i).iter().map(|v| v.to_string())),
            }
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads the layout produced by [`LabeledDataset::write_csv`]. For hard
    /// labels the class count is `max label + 1` unless `n_classes` is given.
    pub fn read_csv<R: Read>(r: R, n_classes: Option<usize>) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        let d = header.iter().filter(|h| h.starts_with('x')).count();
        let soft_cols = header.iter().filter(|h| h.starts_with('y')).count();
        let mut feats = Vec::new();
        let mut hard = Vec::new();
        let mut soft = Vec::new();
        let mut rows = 0;
        for rec in rd.records() {
            let rec = rec?;
            for j in 0..d {
                feats.push(parse_f64(&rec[j])?);
            }
            if soft_cols > 0 {
                for c in 0..soft_cols {
                    soft.push(parse_f64(&rec[d + c])?);
                }
            } else {
                hard.push(
                    rec[d]
                        .parse::<usize>()
                        .map_err(|e| Error::Input(format!("bad label {:?}: {e}", &rec[d])))?,
                );
            }
            rows += 1;
        }
        let features = Array2::from_shape_vec((rows, d), feats).map_err(|e| Error::Shape(e.to_string()))?;
        if soft_cols > 0 {
            let p = Array2::from_shape_vec((rows, soft_cols), soft).map_err(|e| Error::Shape(e.to_string()))?;
            Self::with_soft_labels(features, SoftLabels::new(p)?)
        } else {
            let c = n_classes.unwrap_or_else(|| hard.iter().max().map_or(0, |m| m + 1));
            Self::new(features, hard, c)
        }
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|e| Error::Input(format!("bad number {s:?}: {e}")))
}

/// Isotropic Gaussian clusters in the plane, one class per cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterSpec {
    pub n_clusters: usize,
    pub centers: Vec<[f64; 2]>,
    pub radii: Vec<f64>,
    pub samples_per_cluster: usize,
    pub seed: u64,
}

impl Default for ClusterSpec {
    /// Five centers on a ring of radius 3 with radii 0.2 to 1.0.
    fn default() -> Self {
        let n = 5;
        let centers = (0..n)
            .map(|k| {
                let t = TAU * k as f64 / n as f64;
                [3.0 * t.cos(), 3.0 * t.sin()]
            })
            .collect();
        Self {
            n_clusters: n,
            centers,
            radii: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            samples_per_cluster: 100,
            seed: 0,
        }
    }
}

impl ClusterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 || self.samples_per_cluster == 0 {
            return Err(Error::Config("clusters must be non-empty".into()));
        }
        if self.centers.len() != self.n_clusters || self.radii.len() != self.n_clusters {
            return Err(Error::Config("centers and radii must have one entry per cluster".into()));
        }
        if self.radii.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::Config("radii must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Samples every cluster in order; label = cluster index.
pub fn make_clusters(spec: &ClusterSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let n = spec.n_clusters * spec.samples_per_cluster;
    let mut x = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    let mut rng = stream(spec.seed, &[tags::DATA]);
    let mut row = 0;
    for (k, (c, &r)) in spec.centers.iter().zip(&spec.radii).enumerate() {
        for _ in 0..spec.samples_per_cluster {
            let z0: f64 = StandardNormal.sample(&mut rng);
            let z1: f64 = StandardNormal.sample(&mut rng);
            x[[row, 0]] = c[0] + r * z0;
            x[[row, 1]] = c[1] + r * z1;
            labels.push(k);
            row += 1;
        }
    }
    LabeledDataset::new(x, labels, spec.n_clusters)
}

/// Disjoint train/validation subsets with the source row indices of each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub train_index: Vec<usize>,
    pub val_index: Vec<usize>,
}

/// Class-stratified split: each class contributes `round(count · val_fraction)`
/// examples to validation.
pub fn split(dataset: &LabeledDataset, val_fraction: f64, seed: u64) -> Result<Splits> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Config(format!("val_fraction {val_fraction} not in (0, 1)")));
    }
    let labels = dataset.hard_labels();
    let mut rng = stream(seed, &[tags::SPLIT]);
    let mut train_index = Vec::new();
    let mut val_index = Vec::new();
    for c in 0..dataset.n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let n_val = (members.len() as f64 * val_fraction).round() as usize;
        if n_val == 0 {
            return Err(Error::Config(format!("val_fraction {val_fraction} leaves class {c} without validation examples")));
        }
        if n_val == members.len() {
            return Err(Error::Config(format!("val_fraction {val_fraction} leaves class {c} without training examples")));
        }
        val_index.extend_from_slice(&members[..n_val]);
        train_index.extend_from_slice(&members[n_val..]);
    }
    train_index.sort_unstable();
    val_index.sort_unstable();
    Ok(Splits {
        train: dataset.subset(&train_index),
        val: dataset.subset(&val_index),
        train_index,
        val_index,
    })
}

/// One minibatch; `indices` refer to rows of the dataset being iterated.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub x: Array2<f64>,
    pub labels: Vec<usize>,
    pub targets: SoftLabels,
}

/// Seeded shuffled minibatches for one epoch, final partial batch included.
pub struct Minibatches<'a> {
    data: &'a LabeledDataset,
    order: Vec<usize>,
    labels: Vec<usize>,
    targets: SoftLabels,
    batch_size: usize,
    pos: usize,
}

pub fn minibatches(data: &LabeledDataset, batch_size: usize, seed: u64, epoch: usize) -> Minibatches<'_> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut stream(seed, &[tags::SHUFFLE, epoch as u64]));
    Minibatches {
        data,
        order,
        labels: data.hard_labels(),
        targets: data.targets(),
        batch_size: batch_size.max(1),
        pos: 0,
    }
}

impl Iterator for Minibatches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let indices = self.order[self.pos..end].to_vec();
        self.pos = end;
        Some(Batch {
            x: self.data.features.select(Axis(0), &indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            targets: SoftLabels::new_unchecked(self.targets.as_array().select(Axis(0), &indices)),
            indices,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionFamily {
    GaussianNoise,
    Rotation,
    CoordinateScale,
    Translation,
    FeatureDropout,
}

impl CorruptionFamily {
    pub const ALL: [CorruptionFamily; 5] = [
        CorruptionFamily::GaussianNoise,
        CorruptionFamily::Rotation,
        CorruptionFamily::CoordinateScale,
        CorruptionFamily::Translation,
        CorruptionFamily::FeatureDropout,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorruptionFamily::GaussianNoise => "gaussian_noise",
            CorruptionFamily::Rotation => "rotation",
            CorruptionFamily::CoordinateScale => "coordinate_scale",
            CorruptionFamily::Translation => "translation",
            CorruptionFamily::FeatureDropout => "feature_dropout",
        }
    }

    /// Magnitude at intensities 1 through 5; intensity 0 means identity.
    ///
    /// Noise: standard deviation. Rotation: radians. Coordinate scale: log
    /// scale factor per coordinate. Translation: shift length. Feature
    /// dropout: probability of zeroing each coordinate.
    pub fn magnitudes(self) -> [f64; 5] {
        match self {
            CorruptionFamily::GaussianNoise => [0.1, 0.25, 0.5, 1.0, 2.0],
            CorruptionFamily::Rotation => [0.1, 0.2, 0.35, 0.5, 0.7],
            CorruptionFamily::CoordinateScale => [0.2, 0.4, 0.6, 0.85, 1.2],
            CorruptionFamily::Translation => [0.5, 1.0, 1.5, 2.0, 2.5],
            CorruptionFamily::FeatureDropout => [0.05, 0.1, 0.2, 0.35, 0.5],
        }
    }
}

impl std::str::FromStr for CorruptionFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CorruptionFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown corruption family {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub family: CorruptionFamily,
    /// 0 (identity) through 5.
    pub intensity: usize,
}

impl CorruptionSpec {
    pub fn magnitude(&self) -> Result<f64> {
        match self.intensity {
            0 => Ok(0.0),
            i @ 1..=5 => Ok(self.family.magnitudes()[i - 1]),
            i => Err(Error::Config(format!("corruption intensity {i} outside 0..=5"))),
        }
    }
}

/// Applies a label-preserving covariate shift.
pub fn corrupt(dataset: &LabeledDataset, spec: &CorruptionSpec, seed: u64) -> Result<LabeledDataset> {
    let mag = spec.magnitude()?;
    let mut out = dataset.clone();
    if mag == 0.0 {
        return Ok(out);
    }
    let mut rng = stream(seed, &[tags::CORRUPT, spec.family as u64, spec.intensity as u64]);
    // Directions and signs depend on the seed and family only, so intensities differ in magnitude alone.
    let mut geometry = stream(seed, &[tags::CORRUPT, spec.family as u64]);
    let d = dataset.dim();
    let x = &mut out.features;
    match spec.family {
        CorruptionFamily::GaussianNoise => {
            let n = Normal::new(0.0, mag).map_err(|e| Error::Config(e.to_string()))?;
            x.mapv_inplace(|v| v + n.sample(&mut rng));
        }
        CorruptionFamily::Rotation => {
            // Rotation in the plane of the first two coordinates.
            if d >= 2 {
                let (s, c) = mag.sin_cos();
                for mut row in x.outer_iter_mut() {
                    let (a, b) = (row[0], row[1]);
                    row[0] = c * a - s * b;
                    row[1] = s * a + c * b;
                }
            }
        }
        CorruptionFamily::CoordinateScale => {
            // Alternate coordinates stretch and shrink; one random sign picks which.
            let sign = if geometry.random::<bool>() { 1.0 } else { -1.0 };
            let factors = Array1::from_shape_fn(d, |j| (if j % 2 == 0 { sign * mag } else { -sign * mag }).exp());
            *x *= &factors.view().insert_axis(Axis(0));
        }
        CorruptionFamily::Translation => {
            let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut geometry)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            let shift = Array1::from_shape_fn(d, |j| mag * dir[j] / norm);
            *x += &shift.view().insert_axis(Axis(0));
        }
        CorruptionFamily::FeatureDropout => {
            x.mapv_inplace(|v| if rng.random::<f64>() < mag { 0.0 } else { v });
        }
    }
    Ok(out)
}
