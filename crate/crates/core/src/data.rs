//! Multi-source dataset representation, validation and file ingestion.
//!
//! A dataset has one main feature matrix (always present) plus zero or more
//! auxiliary columns that may be missing per entry. Rows are ordered by
//! timestamp; the row index doubles as the temporal variable.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of main-source features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data has {} values, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::invalid(format!("row {i} has {} columns, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn rows_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Returns a copy with `column` appended as the last feature.
    pub fn with_column(&self, column: &[f64]) -> Result<Self> {
        if column.len() != self.rows {
            return Err(Error::invalid("appended column length differs from row count"));
        }
        let cols = self.cols + 1;
        let mut data = Vec::with_capacity(self.rows * cols);
        for (r, &v) in column.iter().enumerate() {
            data.extend_from_slice(self.row(r));
            data.push(v);
        }
        Ok(Self {
            rows: self.rows,
            cols,
            data,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Categorical,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDescriptor {
    pub name: String,
    pub kind: SourceKind,
    /// Category vocabulary; empty for continuous sources.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vocabulary: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_hint: Option<f64>,
}

impl SourceDescriptor {
    pub fn categorical(name: impl Into<String>, vocabulary: Vec<String>) -> Self {
        Self {
            name: name.into(),
            kind: SourceKind::Categorical,
            vocabulary,
            weight_hint: None,
        }
    }

    pub fn continuous(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: SourceKind::Continuous,
            vocabulary: Vec::new(),
            weight_hint: None,
        }
    }

    fn validate(&self) -> Result<()> {
        match self.kind {
            SourceKind::Categorical if self.vocabulary.is_empty() => Err(Error::invalid(format!(
                "categorical source {:?} declares no vocabulary",
                self.name
            ))),
            SourceKind::Continuous if !self.vocabulary.is_empty() => Err(Error::invalid(format!(
                "continuous source {:?} declares a vocabulary",
                self.name
            ))),
            _ => {
                let unique: HashSet<_> = self.vocabulary.iter().collect();
                if unique.len() != self.vocabulary.len() {
                    return Err(Error::invalid(format!(
                        "source {:?} has duplicate vocabulary entries",
                        self.name
                    )));
                }
                match self.weight_hint {
                    Some(w) if !(w.is_finite() && w >= 0.0) => Err(Error::invalid(format!(
                        "source {:?} has invalid weight hint {w}",
                        self.name
                    ))),
                    _ => Ok(()),
                }
            }
        }
    }
}

/// Per-entry values of one auxiliary source; `None` marks a missing entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AuxValues {
    /// Category indices into the descriptor vocabulary.
    Categorical(Vec<Option<u32>>),
    Continuous(Vec<Option<f64>>),
}

impl AuxValues {
    pub fn len(&self) -> usize {
        match self {
            AuxValues::Categorical(v) => v.len(),
            AuxValues::Continuous(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn is_missing(&self, i: usize) -> bool {
        match self {
            AuxValues::Categorical(v) => v[i].is_none(),
            AuxValues::Continuous(v) => v[i].is_none(),
        }
    }

    fn select(&self, indices: &[usize]) -> Self {
        match self {
            AuxValues::Categorical(v) => AuxValues::Categorical(indices.iter().map(|&i| v[i]).collect()),
            AuxValues::Continuous(v) => AuxValues::Continuous(indices.iter().map(|&i| v[i]).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxSource {
    pub descriptor: SourceDescriptor,
    pub values: AuxValues,
}

impl AuxSource {
    pub fn missing_count(&self) -> usize {
        (0..self.values.len()).filter(|&i| self.values.is_missing(i)).count()
    }
}

/// Main features plus auxiliary sources, one row per sample, ordered by time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSourceDataset {
    main: FeatureMatrix,
    feature_names: Vec<String>,
    aux: Vec<AuxSource>,
    time: Vec<f64>,
    sample_ids: Vec<String>,
}

impl MultiSourceDataset {
    pub fn new(
        main: FeatureMatrix,
        feature_names: Vec<String>,
        aux: Vec<AuxSource>,
        time: Vec<f64>,
        sample_ids: Vec<String>,
    ) -> Result<Self> {
        let n = main.nrows();
        if n < 2 {
            return Err(Error::invalid(format!("dataset needs at least 2 samples, got {n}")));
        }
        if main.ncols() == 0 {
            return Err(Error::invalid("dataset needs at least one main feature"));
        }
        if feature_names.len() != main.ncols() {
            return Err(Error::invalid("feature name count differs from feature column count"));
        }
        if time.len() != n || sample_ids.len() != n {
            return Err(Error::invalid("time or id column length differs from row count"));
        }
        for r in 0..n {
            for c in 0..main.ncols() {
                if !main.get(r, c).is_finite() {
                    return Err(Error::NonFinite { row: r, column: c });
                }
            }
        }
        if let Some(i) = time.iter().position(|t| !t.is_finite()) {
            return Err(Error::invalid(format!("non-finite timestamp at row {i}")));
        }
        if let Some(i) = time.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::invalid(format!("timestamps decrease at row {}", i + 1)));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &sample_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId {
                    id: id.clone(),
                    context: "main features".into(),
                });
            }
        }
        let mut names = HashSet::new();
        for src in &aux {
            src.descriptor.validate()?;
            if !names.insert(src.descriptor.name.as_str()) {
                return Err(Error::invalid(format!("duplicate source name {:?}", src.descriptor.name)));
            }
            if src.values.len() != n {
                return Err(Error::invalid(format!(
                    "source {:?} has {} entries, expected {n}",
                    src.descriptor.name,
                    src.values.len()
                )));
            }
            match (&src.values, src.descriptor.kind) {
                (AuxValues::Categorical(v), SourceKind::Categorical) => {
                    let k = src.descriptor.vocabulary.len() as u32;
                    if let Some(row) = v.iter().position(|x| matches!(x, Some(c) if *c >= k)) {
                        return Err(Error::VocabularyViolation {
                            row,
                            source_name: src.descriptor.name.clone(),
                            value: v[row].unwrap().to_string(),
                        });
                    }
                }
                (AuxValues::Continuous(v), SourceKind::Continuous) => {
                    if let Some(row) = v.iter().position(|x| matches!(x, Some(y) if !y.is_finite())) {
                        return Err(Error::invalid(format!(
                            "non-finite value at row {row} of source {:?}",
                            src.descriptor.name
                        )));
                    }
                }
                _ => {
                    return Err(Error::invalid(format!(
                        "source {:?} values do not match its declared kind",
                        src.descriptor.name
                    )))
                }
            }
        }
        Ok(Self {
            main,
            feature_names,
            aux,
            time,
            sample_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.main.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.main.ncols()
    }

    pub fn num_sources(&self) -> usize {
        self.aux.len()
    }

    pub fn main(&self) -> &FeatureMatrix {
        &self.main
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn aux(&self) -> &[AuxSource] {
        &self.aux
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn source_index(&self, name: &str) -> Option<usize> {
        self.aux.iter().position(|s| s.descriptor.name == name)
    }

    /// Rows at `indices` (must be increasing to keep time order).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("subset indices must be strictly increasing"));
        }
        Self::new(
            self.main.select_rows(indices),
            self.feature_names.clone(),
            self.aux
                .iter()
                .map(|s| AuxSource {
                    descriptor: s.descriptor.clone(),
                    values: s.values.select(indices),
                })
                .collect(),
            indices.iter().map(|&i| self.time[i]).collect(),
            indices.iter().map(|&i| self.sample_ids[i].clone()).collect(),
        )
    }

    /// Same samples with the main matrix replaced; used for feature augmentation experiments.
    pub fn with_main(&self, main: FeatureMatrix, feature_names: Vec<String>) -> Result<Self> {
        Self::new(main, feature_names, self.aux.clone(), self.time.clone(), self.sample_ids.clone())
    }

    /// Same samples with auxiliary sources replaced.
    pub fn with_aux(&self, aux: Vec<AuxSource>) -> Result<Self> {
        Self::new(
            self.main.clone(),
            self.feature_names.clone(),
            aux,
            self.time.clone(),
            self.sample_ids.clone(),
        )
    }
}

/// α_v, α_aux and α_t of the joint gain; they sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceWeights {
    pub alpha_v: f64,
    pub alpha_aux: Vec<f64>,
    pub alpha_t: f64,
}

impl SourceWeights {
    pub fn total(&self) -> f64 {
        self.alpha_v + self.alpha_aux.iter().sum::<f64>() + self.alpha_t
    }

    pub fn validate(&self) -> Result<()> {
        let all_ok = std::iter::once(self.alpha_v)
            .chain(self.alpha_aux.iter().copied())
            .chain(std::iter::once(self.alpha_t))
            .all(|w| w.is_finite() && w >= 0.0);
        if !all_ok || !(self.alpha_v > 0.0 && self.alpha_v <= 1.0) {
            return Err(Error::invalid(format!("invalid source weights {self:?}")));
        }
        if (self.total() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("source weights sum to {}", self.total())));
        }
        Ok(())
    }

    /// Weights where auxiliary sources and the temporal term share `1 - alpha_v`
    /// in proportion to `hints` (unhinted sources and the temporal term count 1).
    pub fn from_hints(alpha_v: f64, hints: &[Option<f64>]) -> Result<Self> {
        if hints.iter().all(Option::is_none) {
            return default_weights(alpha_v, hints.len());
        }
        check_alpha_v(alpha_v)?;
        let raw: Vec<f64> = hints.iter().map(|h| h.unwrap_or(1.0)).collect();
        if raw.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("weight hints must be nonnegative"));
        }
        let denom = raw.iter().sum::<f64>() + 1.0;
        let rest = 1.0 - alpha_v;
        let alpha_aux: Vec<f64> = raw.iter().map(|w| rest * w / denom).collect();
        let alpha_t = 1.0 - alpha_v - alpha_aux.iter().sum::<f64>();
        Ok(Self {
            alpha_v,
            alpha_aux,
            alpha_t: alpha_t.max(0.0),
        })
    }
}

fn check_alpha_v(alpha_v: f64) -> Result<()> {
    if alpha_v > 0.0 && alpha_v <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha_v must lie in (0, 1], got {alpha_v}")))
    }
}

/// Uniform split of `1 - alpha_v` over the `m` auxiliary sources and the temporal term.
pub fn default_weights(alpha_v: f64, m: usize) -> Result<SourceWeights> {
    check_alpha_v(alpha_v)?;
    let share = (1.0 - alpha_v) / (m as f64 + 1.0);
    Ok(SourceWeights {
        alpha_v,
        alpha_aux: vec![share; m],
        alpha_t: share,
    })
}

/// Fraction of missing entries per auxiliary source over `subset`.
///
/// `subset` may contain repeated indices (bootstrap bags); each occurrence counts.
pub fn missing_fractions(dataset: &MultiSourceDataset, subset: &[usize]) -> Result<Vec<f64>> {
    if subset.is_empty() {
        return Err(Error::invalid("missing_fractions over an empty subset"));
    }
    let n = subset.len() as f64;
    Ok(dataset
        .aux()
        .iter()
        .map(|src| subset.iter().filter(|&&i| src.values.is_missing(i)).count() as f64 / n)
        .collect())
}

// ---------------------------------------------------------------------------
// File ingestion

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub name: String,
    pub kind: SourceKind,
    pub csv: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_hint: Option<f64>,
}

/// Dataset manifest. Relative CSV paths resolve against the manifest directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub main_csv: PathBuf,
    pub time_column: String,
    pub id_column: String,
    #[serde(default)]
    pub sources: Vec<SourceEntry>,
}

/// Counts of auxiliary rows whose sample id matched no main row, per source.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoadReport {
    pub unmatched_rows: Vec<(String, usize)>,
}

fn is_missing_cell(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c == "NA"
}

fn csv_err(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line());
    match err.kind() {
        csv::ErrorKind::Io(_) => match err.into_kind() {
            csv::ErrorKind::Io(e) => Error::io(path, e),
            _ => unreachable!(),
        },
        _ => Error::MalformedCsv {
            path: path.to_path_buf(),
            line,
            message: err.to_string(),
        },
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(file))
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::MalformedJson {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load_dataset(manifest_path: &Path) -> Result<MultiSourceDataset> {
    load_dataset_with_report(manifest_path).map(|(d, _)| d)
}

pub fn load_dataset_with_report(manifest_path: &Path) -> Result<(MultiSourceDataset, LoadReport)> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };

    let main_path = resolve(&manifest.main_csv);
    let mut reader = open_csv(&main_path)?;
    let headers = reader.headers().map_err(|e| csv_err(&main_path, e))?.clone();
    let id_col = headers.iter().position(|h| h == manifest.id_column).ok_or_else(|| Error::MalformedCsv {
        path: main_path.clone(),
        line: 1,
        message: format!("missing id column {:?}", manifest.id_column),
    })?;
    let time_col = headers.iter().position(|h| h == manifest.time_column).ok_or_else(|| Error::MalformedCsv {
        path: main_path.clone(),
        line: 1,
        message: format!("missing time column {:?}", manifest.time_column),
    })?;
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != id_col && c != time_col).collect();
    let feature_names: Vec<String> = feature_cols.iter().map(|&c| headers[c].to_string()).collect();

    struct Row {
        id: String,
        time: f64,
        features: Vec<f64>,
    }
    let mut rows = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(&main_path, e))?;
        let line = rec.position().map_or(r as u64 + 2, |p| p.line());
        let parse = |c: usize| -> Result<f64> {
            rec[c].trim().parse::<f64>().map_err(|_| Error::MalformedCsv {
                path: main_path.clone(),
                line,
                message: format!("cannot parse {:?} in column {:?}", &rec[c], &headers[c]),
            })
        };
        let time = parse(time_col)?;
        let mut features = Vec::with_capacity(feature_cols.len());
        for (j, &c) in feature_cols.iter().enumerate() {
            let v = parse(c)?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row: r, column: j });
            }
            features.push(v);
        }
        rows.push(Row {
            id: rec[id_col].trim().to_string(),
            time,
            features,
        });
    }
    rows.sort_by(|a, b| a.time.total_cmp(&b.time));

    let n = rows.len();
    let mut index: HashMap<String, usize> = HashMap::with_capacity(n);
    for (i, row) in rows.iter().enumerate() {
        if index.insert(row.id.clone(), i).is_some() {
            return Err(Error::DuplicateId {
                id: row.id.clone(),
                context: main_path.display().to_string(),
            });
        }
    }

    let mut report = LoadReport::default();
    let mut aux = Vec::with_capacity(manifest.sources.len());
    for entry in &manifest.sources {
        let path = resolve(&entry.csv);
        let descriptor = SourceDescriptor {
            name: entry.name.clone(),
            kind: entry.kind,
            vocabulary: entry.vocabulary.clone().unwrap_or_default(),
            weight_hint: entry.weight_hint,
        };
        descriptor.validate()?;
        let vocab: HashMap<&str, u32> = descriptor
            .vocabulary
            .iter()
            .enumerate()
            .map(|(k, v)| (v.as_str(), k as u32))
            .collect();
        let mut reader = open_csv(&path)?;
        let hdr = reader.headers().map_err(|e| csv_err(&path, e))?.clone();
        if hdr.len() != 2 {
            return Err(Error::MalformedCsv {
                path: path.clone(),
                line: 1,
                message: format!("auxiliary CSV must have 2 columns, found {}", hdr.len()),
            });
        }
        let mut cat = vec![None; n];
        let mut cont = vec![None; n];
        let mut seen = HashSet::new();
        let mut unmatched = 0usize;
        for rec in reader.records() {
            let rec = rec.map_err(|e| csv_err(&path, e))?;
            let line = rec.position().map_or(0, |p| p.line());
            let id = rec[0].trim();
            if !seen.insert(id.to_string()) {
                return Err(Error::DuplicateId {
                    id: id.to_string(),
                    context: path.display().to_string(),
                });
            }
            let Some(&row) = index.get(id) else {
                unmatched += 1;
                continue;
            };
            let cell = &rec[1];
            if is_missing_cell(cell) {
                continue;
            }
            match entry.kind {
                SourceKind::Categorical => {
                    let code = vocab.get(cell.trim()).ok_or_else(|| Error::VocabularyViolation {
                        row,
                        source_name: entry.name.clone(),
                        value: cell.to_string(),
                    })?;
                    cat[row] = Some(*code);
                }
                SourceKind::Continuous => {
                    let v: f64 = cell.trim().parse().map_err(|_| Error::MalformedCsv {
                        path: path.clone(),
                        line,
                        message: format!("cannot parse {cell:?} as a number"),
                    })?;
                    cont[row] = Some(v);
                }
            }
        }
        if unmatched > 0 {
            warn!("source {:?}: dropped {unmatched} rows with unknown sample ids", entry.name);
        }
        report.unmatched_rows.push((entry.name.clone(), unmatched));
        let values = match entry.kind {
            SourceKind::Categorical => AuxValues::Categorical(cat),
            SourceKind::Continuous => AuxValues::Continuous(cont),
        };
        aux.push(AuxSource { descriptor, values });
    }

    let mut data = Vec::with_capacity(n * feature_names.len());
    let mut time = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    for row in rows {
        data.extend(row.features);
        time.push(row.time);
        ids.push(row.id);
    }
    let main = FeatureMatrix::new(n, feature_names.len(), data)?;
    let ds = MultiSourceDataset::new(main, feature_names, aux, time, ids)?;
    Ok((ds, report))
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `<dir>/manifest.json`, `<dir>/main.csv` and one CSV per auxiliary source.
///
/// Floats are written in shortest round-trip form, so reloading is bit-exact.
pub fn save_dataset(dataset: &MultiSourceDataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let main_name = PathBuf::from("main.csv");
    let mut header: Vec<&str> = vec!["sample_id", "time"];
    header.extend(dataset.feature_names().iter().map(String::as_str));
    write_csv(
        &dir.join(&main_name),
        &header,
        (0..dataset.len()).map(|i| {
            let mut r = vec![dataset.sample_ids()[i].clone(), format!("{}", dataset.time()[i])];
            r.extend(dataset.main().row(i).iter().map(|v| format!("{v}")));
            r
        }),
    )?;
    let mut sources = Vec::new();
    for src in dataset.aux() {
        let file = PathBuf::from(format!("{}.csv", src.descriptor.name));
        write_csv(
            &dir.join(&file),
            &["sample_id", &src.descriptor.name],
            (0..dataset.len()).map(|i| {
                let cell = match &src.values {
                    AuxValues::Categorical(v) => v[i].map(|c| src.descriptor.vocabulary[c as usize].clone()),
                    AuxValues::Continuous(v) => v[i].map(|x| format!("{x}")),
                };
                vec![dataset.sample_ids()[i].clone(), cell.unwrap_or_else(|| "NA".into())]
            }),
        )?;
        sources.push(SourceEntry {
            name: src.descriptor.name.clone(),
            kind: src.descriptor.kind,
            csv: file,
            vocabulary: (src.descriptor.kind == SourceKind::Categorical).then(|| src.descriptor.vocabulary.clone()),
            weight_hint: src.descriptor.weight_hint,
        });
    }
    let manifest = Manifest {
        main_csv: main_name,
        time_column: "time".into(),
        id_column: "sample_id".into(),
        sources,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
