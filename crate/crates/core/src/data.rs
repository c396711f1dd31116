//! Datasets with a declared column schema, CSV ingestion, train/test splits
//! and the synthetic xd6 generator.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Label::Pos => 1.0,
            Label::Neg => -1.0,
        }
    }

    pub fn from_sign(s: f64) -> Self {
        if s > 0.0 {
            Label::Pos
        } else {
            Label::Neg
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Pos => Label::Neg,
            Label::Neg => Label::Pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    /// Stored as 0.0 / 1.0.
    Boolean,
    /// Stored as the symbol's index in `alphabet`.
    Categorical { alphabet: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<Column>,
}

impl Schema {
    pub fn new(columns: Vec<Column>) -> Self {
        Self { columns }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn kind(&self, j: usize) -> &ColumnKind {
        &self.columns[j].kind
    }
}

/// Feature table (row-major) with labels in {−1, +1}. Immutable once built.
#[derive(Debug, Clone)]
pub struct Dataset {
    schema: Arc<Schema>,
    features: Vec<f64>,
    labels: Vec<Label>,
    // per-feature row order by ascending value, built on first use by the tree learner
    sorted: OnceLock<Arc<Vec<Vec<u32>>>>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema && self.features == other.features && self.labels == other.labels
    }
}

impl Dataset {
    pub fn new(schema: Schema, features: Vec<f64>, labels: Vec<Label>) -> Result<Self> {
        Self::with_schema(Arc::new(schema), features, labels)
    }

    fn with_schema(schema: Arc<Schema>, features: Vec<f64>, labels: Vec<Label>) -> Result<Self> {
        let d = schema.len();
        if features.len() != d * labels.len() {
            return Err(Error::Dataset(format!(
                "{} feature values for {} rows of {d} columns",
                features.len(),
                labels.len()
            )));
        }
        for (k, &x) in features.iter().enumerate() {
            let j = k % d;
            let ok = match &schema.columns[j].kind {
                ColumnKind::Numeric => x.is_finite(),
                ColumnKind::Boolean => x == 0.0 || x == 1.0,
                ColumnKind::Categorical { alphabet } => {
                    x >= 0.0 && x.fract() == 0.0 && (x as usize) < alphabet.len()
                }
            };
            if !ok {
                return Err(Error::Dataset(format!(
                    "value {x} in row {} is invalid for column '{}'",
                    k / d,
                    schema.columns[j].name
                )));
            }
        }
        Ok(Self {
            schema,
            features,
            labels,
            sorted: OnceLock::new(),
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    /// Number of rows.
    pub fn m(&self) -> usize {
        self.labels.len()
    }

    /// Number of feature columns.
    pub fn d(&self) -> usize {
        self.schema.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.d();
        &self.features[i * d..(i + 1) * d]
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.features[i * self.d() + j]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    #[inline]
    pub fn y(&self, i: usize) -> f64 {
        self.labels[i].sign()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let d = self.d();
        let mut features = Vec::with_capacity(rows.len() * d);
        for &i in rows {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            schema: Arc::clone(&self.schema),
            features,
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            sorted: OnceLock::new(),
        }
    }

    /// Same features and schema with new labels.
    pub fn with_labels(&self, labels: Vec<Label>) -> Result<Dataset> {
        if labels.len() != self.m() {
            return Err(Error::Dataset("label count changed".into()));
        }
        Ok(Dataset {
            schema: Arc::clone(&self.schema),
            features: self.features.clone(),
            labels,
            sorted: OnceLock::new(),
        })
    }

    /// Same labels and schema with new feature values (validated).
    pub fn with_features(&self, features: Vec<f64>) -> Result<Dataset> {
        Self::with_schema(Arc::clone(&self.schema), features, self.labels.clone())
    }

    /// Rows of each feature sorted by ascending value (stable in row index).
    pub fn sorted_rows(&self) -> Arc<Vec<Vec<u32>>> {
        Arc::clone(self.sorted.get_or_init(|| {
            let m = self.m();
            Arc::new(
                (0..self.d())
                    .map(|j| {
                        let mut idx: Vec<u32> = (0..m as u32).collect();
                        idx.sort_by(|&a, &b| {
                            self.value(a as usize, j).total_cmp(&self.value(b as usize, j))
                        });
                        idx
                    })
                    .collect(),
            )
        }))
    }

    /// FNV-1a hash of schema names, feature bits and labels.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for c in &self.schema.columns {
            eat(c.name.as_bytes());
        }
        for x in &self.features {
            eat(&x.to_bits().to_le_bytes());
        }
        for l in &self.labels {
            eat(&[*l as u8]);
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_dropped: usize,
}

fn parse_cell(kind: &ColumnKind, raw: &str) -> Option<f64> {
    let s = raw.trim();
    if s.is_empty() {
        return None;
    }
    match kind {
        ColumnKind::Numeric => s.parse::<f64>().ok().filter(|x| x.is_finite()),
        ColumnKind::Boolean => match s.to_ascii_lowercase().as_str() {
            "1" | "true" | "t" | "yes" => Some(1.0),
            "0" | "false" | "f" | "no" => Some(0.0),
            _ => None,
        },
        ColumnKind::Categorical { alphabet } => alphabet.iter().position(|a| a == s).map(|k| k as f64),
    }
}

/// Reads a headered CSV, keeping the schema's columns in schema order.
///
/// Rows with an empty or unparseable cell are dropped and counted in the
/// returned report. Labels equal to `positive_label` become +1, anything else −1.
pub fn load_csv(
    path: &Path,
    schema: &Schema,
    label_column: &str,
    positive_label: &str,
) -> Result<(Dataset, LoadReport)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::Dataset(format!("{}: empty file", path.display())));
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Dataset(format!("{}: missing column '{name}'", path.display())))
    };
    let label_idx = find(label_column)?;
    let feature_idx = schema
        .columns
        .iter()
        .map(|c| find(&c.name))
        .collect::<Result<Vec<_>>>()?;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut label_values = BTreeSet::new();
    let mut report = LoadReport::default();
    let mut row_values = Vec::with_capacity(schema.len());
    for record in reader.records() {
        let record = record?;
        report.rows_read += 1;
        row_values.clear();
        let mut ok = true;
        for (col, &k) in schema.columns.iter().zip(&feature_idx) {
            match record.get(k).and_then(|raw| parse_cell(&col.kind, raw)) {
                Some(x) => row_values.push(x),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        let label = record.get(label_idx).map(str::trim).unwrap_or("");
        if !ok || label.is_empty() {
            report.rows_dropped += 1;
            continue;
        }
        label_values.insert(label.to_string());
        if label_values.len() > 2 {
            return Err(Error::Dataset(format!(
                "{}: label column '{label_column}' is not binary (values {:?})",
                path.display(),
                label_values
            )));
        }
        labels.push(if label == positive_label { Label::Pos } else { Label::Neg });
        features.extend_from_slice(&row_values);
    }
    if labels.is_empty() {
        return Err(Error::Dataset(format!("{}: no usable rows", path.display())));
    }
    if report.rows_dropped > 0 {
        log::warn!(
            "{}: dropped {} of {} rows with missing or unparseable cells",
            path.display(),
            report.rows_dropped,
            report.rows_read
        );
    }
    Ok((Dataset::new(schema.clone(), features, labels)?, report))
}

/// Writes `ds` as CSV with a trailing label column holding `1` / `-1`.
pub fn write_csv(ds: &Dataset, path: &Path, label_column: &str) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header: Vec<&str> = ds.schema.columns.iter().map(|c| c.name.as_str()).collect();
    header.push(label_column);
    w.write_record(&header)?;
    let mut cells = Vec::with_capacity(ds.d() + 1);
    for i in 0..ds.m() {
        cells.clear();
        for (j, col) in ds.schema.columns.iter().enumerate() {
            let x = ds.value(i, j);
            cells.push(match &col.kind {
                ColumnKind::Numeric => format!("{x:?}"),
                ColumnKind::Boolean => (x as u8).to_string(),
                ColumnKind::Categorical { alphabet } => alphabet[x as usize].clone(),
            });
        }
        cells.push(if ds.labels[i] == Label::Pos { "1" } else { "-1" }.to_string());
        w.write_record(&cells)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    #[serde(default = "SplitPlan::default_fraction")]
    pub train_fraction: f64,
    #[serde(default = "SplitPlan::default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SplitPlan {
    fn default_fraction() -> f64 {
        0.7
    }

    fn default_folds() -> usize {
        10
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction {} must lie in (0, 1)",
                self.train_fraction
            )));
        }
        if self.folds == 0 {
            return Err(Error::Config("folds must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for SplitPlan {
    fn default() -> Self {
        Self {
            train_fraction: Self::default_fraction(),
            folds: Self::default_folds(),
            seed: 0,
        }
    }
}

/// Seeded shuffle of row indices cut into (train, test) index lists.
pub fn split_indices(m: usize, plan: &SplitPlan, fold: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    plan.validate()?;
    if fold >= plan.folds {
        return Err(Error::Precondition(format!(
            "fold {fold} out of range for {} folds",
            plan.folds
        )));
    }
    let mut idx: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(plan.seed, &[0x5EED, fold as u64]));
    idx.shuffle(&mut rng);
    let n_train = ((plan.train_fraction * m as f64).round() as usize).min(m);
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

pub fn split(ds: &Dataset, plan: &SplitPlan, fold: usize) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(ds.m(), plan, fold)?;
    Ok((ds.subset(&train), ds.subset(&test)))
}

/// The xd6 concept: `(x1∧x2∧x3) ∨ (x4∧x5∧x6) ∨ (x7∧x8∧x9)` over nine Booleans.
pub fn xd6_label(row: &[f64]) -> Label {
    let on = |k: usize| row[k] == 1.0;
    if (on(0) && on(1) && on(2)) || (on(3) && on(4) && on(5)) || (on(6) && on(7) && on(8)) {
        Label::Pos
    } else {
        Label::Neg
    }
}

pub fn xd6_schema() -> Schema {
    Schema::new(
        (1..=9)
            .map(|k| Column {
                name: format!("x{k}"),
                kind: ColumnKind::Boolean,
            })
            .collect(),
    )
}

/// `m` rows of nine fair coin features labelled by the noise-free xd6 formula.
pub fn synth_xd6(m: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x0d6]));
    let mut features = Vec::with_capacity(m * 9);
    let mut labels = Vec::with_capacity(m);
    for _ in 0..m {
        let start = features.len();
        for _ in 0..9 {
            features.push(if rng.gen::<bool>() { 1.0 } else { 0.0 });
        }
        labels.push(xd6_label(&features[start..]));
    }
    Dataset::new(xd6_schema(), features, labels).expect("xd6 rows are valid by construction")
}
