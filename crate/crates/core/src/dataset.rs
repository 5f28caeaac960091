//! CSV ingestion, stratified splitting, min-max scaling and class partitioning.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::rng;

/// Lower/upper clamp applied to scaled validation and test features.
pub const SCALE_CLAMP: (f64, f64) = (-0.5, 1.5);

/// Feature matrix plus binary labels (1 = minority/positive).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub feature_names: Vec<String>,
    features: Matrix,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Matrix, labels: Vec<u8>) -> Result<Self> {
        let feature_names = (0..features.cols()).map(|j| format!("f{j}")).collect();
        Dataset::with_feature_names(name, feature_names, features, labels)
    }

    pub fn with_feature_names(
        name: impl Into<String>,
        feature_names: Vec<String>,
        features: Matrix,
        labels: Vec<u8>,
    ) -> Result<Self> {
        let name = name.into();
        let invalid = |message: String| Error::InvalidDataset {
            name: name.clone(),
            message,
        };
        if features.rows() != labels.len() {
            return Err(invalid(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if feature_names.len() != features.cols() {
            return Err(invalid(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.cols()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(invalid(format!("label {bad} is not 0 or 1")));
        }
        if !features.all_finite() {
            return Err(invalid("non-finite feature value".into()));
        }
        Ok(Dataset {
            name,
            feature_names,
            features,
            labels,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature count `d`.
    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            feature_names: self.feature_names.clone(),
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Appends `rows` with the given label.
    pub fn append(&self, rows: &Matrix, label: u8) -> Result<Dataset> {
        if rows.is_empty() {
            return Ok(self.clone());
        }
        let features = self.features.vstack(rows)?;
        let mut labels = self.labels.clone();
        labels.extend(std::iter::repeat_n(label, rows.rows()));
        Dataset::with_feature_names(self.name.clone(), self.feature_names.clone(), features, labels)
    }

    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        let features = self.features.vstack(&other.features)?;
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Dataset::with_feature_names(self.name.clone(), self.feature_names.clone(), features, labels)
    }

    /// Labels as an (n × 1) matrix of 0.0/1.0.
    pub fn label_column(&self) -> Matrix {
        Matrix::from_vec(
            self.len(),
            1,
            self.labels.iter().map(|&l| l as f64).collect(),
        )
        .expect("length matches")
    }

    /// Writes features and a trailing `label` column.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut header = self.feature_names.clone();
        header.push("label".into());
        let rows = self
            .features
            .iter_rows()
            .zip(&self.labels)
            .map(|(r, &l)| {
                let mut cells: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
                cells.push(l.to_string());
                cells
            });
        write_rows(path, &header, rows)
    }
}

pub(crate) fn write_rows(
    path: &Path,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Which CSV column holds the class label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

/// One entry of a dataset manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSource {
    pub name: String,
    pub path: PathBuf,
    pub label_column: LabelColumn,
    pub positive_label: String,
    #[serde(default)]
    pub header: bool,
}

impl DatasetSource {
    pub fn load(&self) -> Result<Dataset> {
        let mut ds = load_csv(&self.path, &self.label_column, &self.positive_label, self.header)?;
        ds.name = self.name.clone();
        Ok(ds)
    }
}

/// Reads a JSON manifest (array of [`DatasetSource`]); relative paths are
/// resolved against the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Vec<DatasetSource>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut sources: Vec<DatasetSource> = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    for s in &mut sources {
        if s.path.is_relative() {
            s.path = base.join(&s.path);
        }
    }
    Ok(sources)
}

/// Loads a CSV file. Rows whose label equals `positive_label` (after
/// trimming) become 1, everything else 0.
pub fn load_csv(
    path: &Path,
    label_column: &LabelColumn,
    positive_label: &str,
    header: bool,
) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };

    let mut records = reader.records();
    let mut header_row: Option<Vec<String>> = None;
    if header {
        match records.next() {
            Some(r) => header_row = Some(r.map_err(csv_err)?.iter().map(str::to_owned).collect()),
            None => {
                return Err(Error::InvalidDataset {
                    name: path.display().to_string(),
                    message: "empty file".into(),
                })
            }
        }
    }

    let mut width: Option<usize> = header_row.as_ref().map(Vec::len);
    let mut label_idx: Option<usize> = None;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut distinct: Vec<String> = Vec::new();
    let first_data_row = if header { 2 } else { 1 };

    for (k, rec) in records.enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row_no = k + first_data_row;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(Error::RaggedRow {
                path: path.to_path_buf(),
                row: row_no,
                expected: w,
                found: rec.len(),
            });
        }
        let li = match label_idx {
            Some(i) => i,
            None => {
                let i = resolve_label_column(label_column, header_row.as_deref(), w)?;
                label_idx = Some(i);
                i
            }
        };
        for (j, cell) in rec.iter().enumerate() {
            if j == li {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::BadCell {
                path: path.to_path_buf(),
                row: row_no,
                column: j + 1,
                value: cell.to_owned(),
            })?;
            if !v.is_finite() {
                return Err(Error::BadCell {
                    path: path.to_path_buf(),
                    row: row_no,
                    column: j + 1,
                    value: cell.to_owned(),
                });
            }
            data.push(v);
        }
        let raw = &rec[li];
        if !distinct.iter().any(|d| d == raw) {
            distinct.push(raw.to_owned());
        }
        labels.push(u8::from(raw == positive_label));
    }

    let width = width.unwrap_or(0);
    if labels.is_empty() {
        return Err(Error::InvalidDataset {
            name: path.display().to_string(),
            message: "no data rows".into(),
        });
    }
    if distinct.len() < 2 {
        return Err(Error::SingleLabel(distinct.pop().unwrap_or_default()));
    }
    let li = label_idx.expect("set with first row");
    let feature_names = match header_row {
        Some(h) => h
            .into_iter()
            .enumerate()
            .filter(|&(j, _)| j != li)
            .map(|(_, n)| n)
            .collect(),
        None => (0..width).filter(|&j| j != li).map(|j| format!("f{j}")).collect(),
    };
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let features = Matrix::from_vec(labels.len(), width - 1, data)?;
    Dataset::with_feature_names(name, feature_names, features, labels)
}

fn resolve_label_column(col: &LabelColumn, header: Option<&[String]>, width: usize) -> Result<usize> {
    let idx = match col {
        LabelColumn::Index(i) => Some(*i),
        LabelColumn::Name(name) => header
            .and_then(|h| h.iter().position(|c| c == name))
            // a bare number given as a string is accepted as an index
            .or_else(|| name.parse::<usize>().ok()),
    };
    match idx {
        Some(i) if i < width => Ok(i),
        _ => Err(Error::MissingLabelColumn(match col {
            LabelColumn::Index(i) => i.to_string(),
            LabelColumn::Name(n) => n.clone(),
        })),
    }
}

/// Train/validation/test fractions and the shuffling seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("train", self.train),
            ("validation", self.validation),
            ("test", self.test),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!("{name} fraction {f} outside (0,1)")));
            }
        }
        let sum = self.train + self.validation + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    /// Source row indices of train, validation and test, ascending.
    pub indices: [Vec<usize>; 3],
}

/// Per-class shuffled split. Each class contributes `round(n·train)` rows to
/// train, `round(n·validation)` to validation and the rest to test, with at
/// least one row per split.
pub fn stratified_split(ds: &Dataset, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for class in [0u8, 1u8] {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
        let n = idx.len();
        if n < 3 {
            return Err(Error::ClassTooSmall {
                label: class,
                count: n,
                needed: 3,
            });
        }
        idx.shuffle(&mut rng);
        let mut n_val = ((n as f64 * spec.validation).round() as usize).max(1);
        let mut n_train = ((n as f64 * spec.train).round() as usize).max(1);
        while n_train + n_val >= n {
            if n_train >= n_val && n_train > 1 {
                n_train -= 1;
            } else {
                n_val -= 1;
            }
        }
        parts[0].extend_from_slice(&idx[..n_train]);
        parts[1].extend_from_slice(&idx[n_train..n_train + n_val]);
        parts[2].extend_from_slice(&idx[n_train + n_val..]);
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(Split {
        train: ds.select(&parts[0]),
        validation: ds.select(&parts[1]),
        test: ds.select(&parts[2]),
        indices: parts,
    })
}

/// Per-feature minimum and maximum of the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub fn fit_scale(train: &Dataset) -> ScaleParams {
    let d = train.dim();
    let mut min = vec![f64::INFINITY; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    for row in train.features.iter_rows() {
        for j in 0..d {
            min[j] = min[j].min(row[j]);
            max[j] = max[j].max(row[j]);
        }
    }
    if train.is_empty() {
        min.fill(0.0);
        max.fill(0.0);
    }
    ScaleParams { min, max }
}

impl ScaleParams {
    /// Maps one value of feature `j`; constant features map to 0.
    pub fn scale_value(&self, j: usize, v: f64) -> f64 {
        let range = self.max[j] - self.min[j];
        if range > 0.0 {
            ((v - self.min[j]) / range).clamp(SCALE_CLAMP.0, SCALE_CLAMP.1)
        } else {
            0.0
        }
    }

    pub fn scale_matrix(&self, m: &Matrix) -> Result<Matrix> {
        if m.cols() != self.min.len() {
            return Err(Error::shape("ScaleParams::scale_matrix", self.min.len(), m.cols()));
        }
        let mut out = m.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = self.scale_value(j, *v);
            }
        }
        Ok(out)
    }
}

pub fn apply_scale(ds: &Dataset, p: &ScaleParams) -> Result<Dataset> {
    let features = p.scale_matrix(&ds.features)?;
    Dataset::with_feature_names(ds.name.clone(), ds.feature_names.clone(), features, ds.labels.clone())
}

/// Splits rows by label into (minority = label 1, majority = label 0).
pub fn partition_by_class(ds: &Dataset) -> Result<(Dataset, Dataset)> {
    let pos: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == 1).collect();
    let neg: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == 0).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::InvalidDataset {
            name: ds.name.clone(),
            message: format!(
                "both classes required, found {} positive and {} negative rows",
                pos.len(),
                neg.len()
            ),
        });
    }
    if pos.len() > neg.len() {
        return Err(Error::MinorityLarger {
            minority: pos.len(),
            majority: neg.len(),
        });
    }
    Ok((ds.select(&pos), ds.select(&neg)))
}
