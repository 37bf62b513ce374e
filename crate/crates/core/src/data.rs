//! CSV ingestion, binarization, standardization and seeded splitting.
//!
//! Every [`Dataset`] keeps its rows ordered unprotected-first: the `n_u` rows
//! with `s = 0` come before the rows with `s = 1`, each block in a stable
//! order. The kernel code relies on this layout to read the group blocks of
//! the Gram matrix directly.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::scalar::Real;

/// Resampling cap for [`split`].
pub const MAX_SPLIT_ATTEMPTS: usize = 100;

/// Stable 64-bit seed derived from a base seed and an index.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Turns a raw cell into 0/1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinarizeRule {
    /// 1 iff the numeric value is strictly greater than the threshold.
    ThresholdAbove(f64),
    /// 1 iff the trimmed cell equals the string.
    ValueEquals(String),
}

impl BinarizeRule {
    /// `None` marks a missing or unparseable cell.
    fn apply(&self, column: &str, cell: &str) -> Result<Option<u8>> {
        let cell = cell.trim();
        if is_missing(cell) {
            return Ok(None);
        }
        match self {
            BinarizeRule::ThresholdAbove(t) => match cell.parse::<f64>() {
                Ok(v) if v.is_nan() => Err(Error::NonBinaryOutcome {
                    column: column.to_string(),
                    value: cell.to_string(),
                }),
                Ok(v) => Ok(Some(u8::from(v > *t))),
                Err(_) => Ok(None),
            },
            BinarizeRule::ValueEquals(want) => Ok(Some(u8::from(cell == want))),
        }
    }
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "?" || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan")
}

fn default_true() -> bool {
    true
}

/// Declarative description of how a CSV maps to `(x, s, y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    pub feature_columns: Vec<String>,
    pub sensitive_column: String,
    pub sensitive_rule: BinarizeRule,
    pub label_column: String,
    pub label_rule: BinarizeRule,
    /// Whether the model sees the sensitive attribute. If the sensitive column
    /// is not already a listed feature, its binarized value is appended as
    /// the last feature (and exempt from standardization).
    #[serde(default = "default_true")]
    pub keep_sensitive_in_features: bool,
    /// Optional seeded uniform down-sampling applied at load time.
    #[serde(default)]
    pub max_rows: Option<usize>,
    #[serde(default)]
    pub subsample_seed: u64,
}

impl DatasetSchema {
    pub fn from_json(text: &str) -> Result<Self> {
        let schema: DatasetSchema = serde_json::from_str(text).map_err(|e| Error::Config(format!("schema: {e}")))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_columns.is_empty() && !self.keep_sensitive_in_features {
            return Err(Error::Config("schema lists no feature columns".into()));
        }
        if self.feature_columns.contains(&self.label_column) {
            return Err(Error::Config(format!("label column `{}` is listed as a feature", self.label_column)));
        }
        if !self.keep_sensitive_in_features && self.feature_columns.contains(&self.sensitive_column) {
            return Err(Error::Config(format!(
                "sensitive column `{}` is listed as a feature but keep_sensitive_in_features is false",
                self.sensitive_column
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.feature_columns {
            if !seen.insert(c) {
                return Err(Error::Config(format!("feature column `{c}` listed twice")));
            }
        }
        if self.max_rows == Some(0) {
            return Err(Error::Config("max_rows must be positive".into()));
        }
        Ok(())
    }

    /// Whether a binarized sensitive column is appended to the features.
    pub fn appends_sensitive(&self) -> bool {
        self.keep_sensitive_in_features && !self.feature_columns.contains(&self.sensitive_column)
    }

    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("schema serializes");
        hex(&Sha256::digest(canonical))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub schema_hash: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T: Real> {
    pub features: Matrix<T>,
    pub s: Vec<u8>,
    pub y: Vec<u8>,
    pub n_u: usize,
    pub provenance: Provenance,
    /// Column holding the binarized sensitive attribute, if appended.
    pub sensitive_feature: Option<usize>,
}

impl<T: Real> Dataset<T> {
    /// Assembles a dataset, reordering rows unprotected-first (stable).
    pub fn new(features: Matrix<T>, s: Vec<u8>, y: Vec<u8>) -> Result<Self> {
        let n = features.rows();
        if s.len() != n || y.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} feature rows, {} group labels, {} labels",
                s.len(),
                y.len()
            )));
        }
        if let Some(&bad) = s.iter().chain(&y).find(|&&v| v > 1) {
            return Err(Error::InvalidArgument(format!("labels must be 0 or 1, got {bad}")));
        }
        let order = group_order(&s, 0..n);
        let n_u = s.iter().filter(|&&v| v == 0).count();
        Ok(Dataset {
            features: features.select_rows(&order),
            s: order.iter().map(|&i| s[i]).collect(),
            y: order.iter().map(|&i| y[i]).collect(),
            n_u,
            provenance: Provenance::default(),
            sensitive_feature: None,
        })
    }

    pub fn with_sensitive_feature(mut self, column: Option<usize>) -> Self {
        self.sensitive_feature = column;
        self
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn n_p(&self) -> usize {
        self.n() - self.n_u
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Labels as regression targets.
    pub fn targets(&self) -> Vec<T> {
        self.y.iter().map(|&v| T::of(f64::from(v))).collect()
    }

    pub fn sensitive(&self) -> Vec<T> {
        self.s.iter().map(|&v| T::of(f64::from(v))).collect()
    }

    /// Subset of rows (any order), regrouped unprotected-first.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let order = group_order(&self.s, rows.iter().copied());
        Dataset {
            features: self.features.select_rows(&order),
            s: order.iter().map(|&i| self.s[i]).collect(),
            y: order.iter().map(|&i| self.y[i]).collect(),
            n_u: order.iter().filter(|&&i| self.s[i] == 0).count(),
            provenance: self.provenance.clone(),
            sensitive_feature: self.sensitive_feature,
        }
    }

    fn has_both(&self) -> bool {
        let groups = self.n_u > 0 && self.n_p() > 0;
        let ones = self.y.iter().filter(|&&v| v == 1).count();
        groups && ones > 0 && ones < self.n()
    }

    pub fn cast<U: Real>(&self) -> Dataset<U> {
        Dataset {
            features: self.features.cast(),
            s: self.s.clone(),
            y: self.y.clone(),
            n_u: self.n_u,
            provenance: self.provenance.clone(),
            sensitive_feature: self.sensitive_feature,
        }
    }
}

fn group_order(s: &[u8], rows: impl Iterator<Item = usize> + Clone) -> Vec<usize> {
    let mut order: Vec<usize> = rows.clone().filter(|&i| s[i] == 0).collect();
    order.extend(rows.filter(|&i| s[i] == 1));
    order
}

/// Reads a CSV file according to `schema`.
pub fn load_csv<T: Real>(path: &Path, schema: &DatasetSchema) -> Result<Dataset<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut ds = read_csv(file, schema)?;
    ds.provenance.source = path.display().to_string();
    Ok(ds)
}

/// Like [`load_csv`] on any reader.
pub fn read_csv<T: Real, R: Read>(reader: R, schema: &DatasetSchema) -> Result<Dataset<T>> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: HashMap<String, usize> = rdr
        .headers()?
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim().to_string(), i))
        .collect();
    let col = |name: &str| header.get(name).copied().ok_or_else(|| Error::MissingColumn(name.to_string()));
    let feature_idx: Vec<usize> = schema.feature_columns.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let s_idx = col(&schema.sensitive_column)?;
    let y_idx = col(&schema.label_column)?;
    let append = schema.appends_sensitive();
    let d = feature_idx.len() + usize::from(append);

    let mut values: Vec<f64> = Vec::new();
    let (mut s, mut y) = (Vec::new(), Vec::new());
    let (mut total, mut dropped) = (0usize, 0usize);
    'rows: for record in rdr.records() {
        let record = record?;
        total += 1;
        let cell = |i: usize| record.get(i).unwrap_or("");
        let (Some(sv), Some(yv)) = (
            schema.sensitive_rule.apply(&schema.sensitive_column, cell(s_idx))?,
            schema.label_rule.apply(&schema.label_column, cell(y_idx))?,
        ) else {
            dropped += 1;
            continue;
        };
        let start = values.len();
        for &i in &feature_idx {
            let raw = cell(i).trim();
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() && !is_missing(raw) => values.push(v),
                _ => {
                    values.truncate(start);
                    dropped += 1;
                    continue 'rows;
                }
            }
        }
        if append {
            values.push(f64::from(sv));
        }
        s.push(sv);
        y.push(yv);
    }
    if dropped > 0 {
        log::info!("dropped {dropped} of {total} rows with missing or unparseable cells");
    }
    if s.is_empty() {
        return Err(Error::EmptyAfterFiltering(format!("{total} rows read")));
    }
    let n = s.len();
    let (n1, n0) = (s.iter().filter(|&&v| v == 1).count(), s.iter().filter(|&&v| v == 0).count());
    if n1 == 0 || n0 == 0 {
        return Err(Error::DegenerateGroup(format!(
            "after filtering, {n0} unprotected and {n1} protected rows"
        )));
    }
    let features = Matrix::from_vec(n, d, values.into_iter().map(T::of).collect())?;
    let mut ds = Dataset::new(features, s, y)?.with_sensitive_feature(append.then_some(d - 1));
    if let Some(max_rows) = schema.max_rows {
        ds = subsample(&ds, max_rows, schema.subsample_seed);
    }
    ds.provenance.schema_hash = schema.hash();
    Ok(ds)
}

/// Seeded uniform subsample of at most `max_rows` rows, keeping row order.
pub fn subsample<T: Real>(ds: &Dataset<T>, max_rows: usize, seed: u64) -> Dataset<T> {
    if ds.n() <= max_rows {
        return ds.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = rand::seq::index::sample(&mut rng, ds.n(), max_rows).into_vec();
    rows.sort_unstable();
    ds.subset(&rows)
}

/// Per-feature z-score parameters fitted on a training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    /// Population standard deviation; 0 marks a constant feature.
    pub std: Vec<f64>,
    pub exempt: Option<usize>,
}

impl Scaler {
    pub fn fit<T: Real>(ds: &Dataset<T>) -> Self {
        let n = ds.n().max(1) as f64;
        let d = ds.dim();
        let mut mean = vec![0.0; d];
        let mut std = vec![0.0; d];
        for j in 0..d {
            if Some(j) == ds.sensitive_feature {
                continue;
            }
            let col: Vec<f64> = ds.features.row_iter().map(|r| r[j].to_f64_lossy()).collect();
            let m = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            mean[j] = m;
            std[j] = var.sqrt();
        }
        Scaler {
            mean,
            std,
            exempt: ds.sensitive_feature,
        }
    }

    pub fn transform<T: Real>(&self, ds: &Dataset<T>) -> Result<Dataset<T>> {
        if ds.dim() != self.mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "scaler has {} features, dataset has {}",
                self.mean.len(),
                ds.dim()
            )));
        }
        let features = Matrix::from_fn(ds.n(), ds.dim(), |i, j| {
            let v = ds.features[(i, j)];
            if Some(j) == self.exempt {
                v
            } else if self.std[j] > 0.0 {
                T::of((v.to_f64_lossy() - self.mean[j]) / self.std[j])
            } else {
                T::zero()
            }
        });
        Ok(Dataset {
            features,
            ..ds.clone()
        })
    }
}

/// Z-scores both sets with parameters fitted on `train`.
pub fn standardize<T: Real>(train: &Dataset<T>, test: &Dataset<T>) -> Result<(Dataset<T>, Dataset<T>, Scaler)> {
    let scaler = Scaler::fit(train);
    Ok((scaler.transform(train)?, scaler.transform(test)?, scaler))
}

/// Random train/test partition with `floor(n · test_fraction)` test rows.
///
/// Draws are repeated with derived seeds until both sides contain both groups
/// and both label values.
pub fn split<T: Real>(ds: &Dataset<T>, test_fraction: f64, seed: u64) -> Result<(Dataset<T>, Dataset<T>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("test fraction must be in (0, 1), got {test_fraction}")));
    }
    let n = ds.n();
    let n_test = (n as f64 * test_fraction).floor() as usize;
    for attempt in 0..MAX_SPLIT_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, attempt as u64));
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let (test_rows, train_rows) = idx.split_at(n_test);
        let mut test_rows = test_rows.to_vec();
        let mut train_rows = train_rows.to_vec();
        test_rows.sort_unstable();
        train_rows.sort_unstable();
        let train = ds.subset(&train_rows);
        let test = ds.subset(&test_rows);
        if train.has_both() && test.has_both() {
            return Ok((train, test));
        }
    }
    Err(Error::DegenerateSplit {
        attempts: MAX_SPLIT_ATTEMPTS,
    })
}

/// Synthetic data resembling a credit-scoring population: a minority group
/// (30%) with a strongly group-dependent positive rate, five noisy views of a
/// latent score, two group proxies, pure noise in the remaining columns, and
/// the sensitive attribute itself as column 0. `dim` must be at least 3.
pub fn synthetic_credit<T: Real>(n: usize, dim: usize, seed: u64) -> Result<Dataset<T>> {
    if dim < 3 {
        return Err(Error::InvalidArgument(format!("synthetic data needs dim >= 3, got {dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = move || -> f64 { rng.sample(StandardNormal) };
    let n_views = ((dim - 1) / 2).max(1);
    let n_proxies = (dim - 1 - n_views).min(2);
    let mut values = Vec::with_capacity(n * dim);
    let (mut s, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut group_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
    for _ in 0..n {
        let g = u8::from(group_rng.gen::<f64>() < 0.3);
        let gs = f64::from(g);
        let z = normal();
        let label = 3.0 * (gs - 0.5) + z + normal() > 1.0;
        values.push(gs);
        for _ in 0..n_views {
            values.push(z + 0.5 * normal());
        }
        for _ in 0..n_proxies {
            values.push((gs - 0.5) * 1.6 + 0.7 * normal());
        }
        for _ in 1 + n_views + n_proxies..dim {
            values.push(normal());
        }
        s.push(g);
        y.push(u8::from(label));
    }
    let features = Matrix::from_vec(n, dim, values.into_iter().map(T::of).collect())?;
    let mut ds = Dataset::new(features, s, y)?.with_sensitive_feature(Some(0));
    ds.provenance.source = format!("synthetic_credit(n={n}, dim={dim}, seed={seed})");
    Ok(ds)
}

/// Pearson correlation between the label and the group indicator.
pub fn label_group_correlation<T: Real>(ds: &Dataset<T>) -> f64 {
    let n = ds.n() as f64;
    let ms = ds.s.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let my = ds.y.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let (mut c, mut vs, mut vy) = (0.0, 0.0, 0.0);
    for (&a, &b) in ds.s.iter().zip(&ds.y) {
        let (da, db) = (f64::from(a) - ms, f64::from(b) - my);
        c += da * db;
        vs += da * da;
        vy += db * db;
    }
    if vs == 0.0 || vy == 0.0 {
        0.0
    } else {
        c / (vs * vy).sqrt()
    }
}

/// Writes a dataset as CSV with the given feature column names, plus `s` and
/// `y` columns under the given names.
pub fn write_csv<T: Real, W: std::io::Write>(
    ds: &Dataset<T>,
    feature_names: &[String],
    sensitive_name: &str,
    label_name: &str,
    writer: W,
) -> Result<()> {
    if feature_names.len() != ds.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} names for {} features",
            feature_names.len(),
            ds.dim()
        )));
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = feature_names.iter().map(String::as_str).collect();
    header.push(sensitive_name);
    header.push(label_name);
    w.write_record(&header)?;
    for i in 0..ds.n() {
        let mut rec: Vec<String> = ds.features.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(ds.s[i].to_string());
        rec.push(ds.y[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
