//! Labeled stream data: CSV ingestion, validation, stratified splits, and a
//! synthetic drifting stream generator.
//!
//! The on-disk format is a single CSV shape with the exact header
//! `id,week,label,f1,...,fm`. A stream file is the same shape sorted by
//! `week`; weekly batches are formed by grouping rows with equal `week`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Errors raised while loading, validating, or generating datasets.
#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("bad value at data row {row}: {reason}")]
    BadValue { row: usize, reason: String },
    #[error("class \"{name}\" has {count} sample(s); stratified split needs at least 2")]
    ClassTooSmall { name: String, count: usize },
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// A class of the prediction target. Codes are dense `0..C-1`, assigned in
/// ascending order of class name so they do not depend on row order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClassLabel {
    pub code: u16,
    pub name: String,
}

/// Feature column names; arity is the column count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub feature_names: Vec<String>,
}

impl Schema {
    /// The canonical schema with features named `f1..fm`.
    pub fn numbered(arity: usize) -> Self {
        Schema {
            feature_names: (1..=arity).map(|i| format!("f{i}")).collect(),
        }
    }

    pub fn arity(&self) -> usize {
        self.feature_names.len()
    }
}

/// One student-week observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub week: u32,
    pub features: Vec<f64>,
    /// Class code into the owning dataset's label table.
    pub label: u16,
}

/// An ordered collection of samples sharing one schema and label table.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub schema: Schema,
    pub labels: Vec<ClassLabel>,
    pub samples: Vec<Sample>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    /// Feature rows in sample order.
    pub fn feature_rows(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.features.clone()).collect()
    }

    /// Label codes in sample order.
    pub fn label_codes(&self) -> Vec<u16> {
        self.samples.iter().map(|s| s.label).collect()
    }
}

/// All samples arriving in one week.
#[derive(Debug, Clone, PartialEq)]
pub struct WeeklyBatch {
    pub week: u32,
    pub samples: Vec<Sample>,
}

/// An ordered sequence of weekly batches with strictly increasing weeks.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSource {
    pub schema: Schema,
    pub labels: Vec<ClassLabel>,
    pub batches: Vec<WeeklyBatch>,
}

impl StreamSource {
    /// Groups a week-sorted dataset into batches. Rows are stably sorted by
    /// week first, so any ingestion order is accepted.
    pub fn from_dataset(ds: LabeledDataset) -> Result<StreamSource, DatasetError> {
        if ds.samples.is_empty() {
            return Err(DatasetError::BadParameter(
                "stream has no samples".to_string(),
            ));
        }
        let LabeledDataset {
            schema,
            labels,
            mut samples,
        } = ds;
        samples.sort_by_key(|s| s.week);
        let mut batches: Vec<WeeklyBatch> = Vec::new();
        for sample in samples {
            match batches.last_mut() {
                Some(batch) if batch.week == sample.week => batch.samples.push(sample),
                _ => batches.push(WeeklyBatch {
                    week: sample.week,
                    samples: vec![sample],
                }),
            }
        }
        Ok(StreamSource {
            schema,
            labels,
            batches,
        })
    }

    pub fn total_weeks(&self) -> usize {
        self.batches.len()
    }

    /// All batches flattened back into one dataset, in stream order.
    pub fn flatten(&self) -> LabeledDataset {
        LabeledDataset {
            schema: self.schema.clone(),
            labels: self.labels.clone(),
            samples: self
                .batches
                .iter()
                .flat_map(|b| b.samples.iter().cloned())
                .collect(),
        }
    }
}

fn expected_header(arity: usize) -> Vec<String> {
    let mut cols = vec!["id".to_string(), "week".to_string(), "label".to_string()];
    cols.extend((1..=arity).map(|i| format!("f{i}")));
    cols
}

/// Loads a sample CSV (`id,week,label,f1,...,fm`).
///
/// When `expected_arity` is given the header must carry exactly that many
/// feature columns; otherwise the arity is inferred from the header. Rows
/// with missing, non-numeric, or non-finite feature values are rejected
/// with the offending data row number (1-based, header excluded).
pub fn load_samples_csv(
    path: &Path,
    expected_arity: Option<usize>,
) -> Result<LabeledDataset, DatasetError> {
    let file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            DatasetError::MissingFile(path.to_path_buf())
        } else {
            DatasetError::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);

    let header: Vec<String> = reader
        .headers()
        .map_err(|e| DatasetError::SchemaMismatch(format!("unreadable header: {e}")))?
        .iter()
        .map(|c| c.trim().to_string())
        .collect();
    if header.len() < 4 {
        return Err(DatasetError::SchemaMismatch(format!(
            "expected header id,week,label,f1,... but found {} column(s)",
            header.len()
        )));
    }
    let arity = match expected_arity {
        Some(m) => m,
        None => header.len() - 3,
    };
    let expected = expected_header(arity);
    if header != expected {
        return Err(DatasetError::SchemaMismatch(format!(
            "expected header `{}`, found `{}`",
            expected.join(","),
            header.join(",")
        )));
    }

    struct RawRow {
        id: String,
        week: u32,
        label_name: String,
        features: Vec<f64>,
    }

    let mut rows: Vec<RawRow> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| DatasetError::BadValue {
            row,
            reason: format!("unreadable record: {e}"),
        })?;
        if record.len() != 3 + arity {
            return Err(DatasetError::BadValue {
                row,
                reason: format!("expected {} fields, found {}", 3 + arity, record.len()),
            });
        }
        let id = record[0].trim().to_string();
        if id.is_empty() {
            return Err(DatasetError::BadValue {
                row,
                reason: "empty id".to_string(),
            });
        }
        let week: u32 = record[1].trim().parse().map_err(|_| DatasetError::BadValue {
            row,
            reason: format!("week `{}` is not a nonnegative integer", &record[1]),
        })?;
        let label_name = record[2].trim().to_string();
        if label_name.is_empty() {
            return Err(DatasetError::BadValue {
                row,
                reason: "empty label".to_string(),
            });
        }
        let mut features = Vec::with_capacity(arity);
        for k in 0..arity {
            let cell = record[3 + k].trim();
            let value: f64 = cell.parse().map_err(|_| DatasetError::BadValue {
                row,
                reason: format!("feature f{} value `{}` is not numeric", k + 1, cell),
            })?;
            if !value.is_finite() {
                return Err(DatasetError::BadValue {
                    row,
                    reason: format!("feature f{} value `{}` is not finite", k + 1, cell),
                });
            }
            features.push(value);
        }
        rows.push(RawRow {
            id,
            week,
            label_name,
            features,
        });
    }

    // Class codes are assigned by ascending name so reloading a rewritten
    // file reproduces identical codes regardless of row order.
    let mut names: Vec<String> = rows.iter().map(|r| r.label_name.clone()).collect();
    names.sort();
    names.dedup();
    let labels: Vec<ClassLabel> = names
        .iter()
        .enumerate()
        .map(|(code, name)| ClassLabel {
            code: code as u16,
            name: name.clone(),
        })
        .collect();
    let code_of = |name: &str| -> u16 {
        names.binary_search_by(|n| n.as_str().cmp(name)).unwrap() as u16
    };

    let samples = rows
        .into_iter()
        .map(|r| Sample {
            label: code_of(&r.label_name),
            id: r.id,
            week: r.week,
            features: r.features,
        })
        .collect();

    Ok(LabeledDataset {
        schema: Schema::numbered(arity),
        labels,
        samples,
    })
}

/// Renders a dataset in the sample CSV format, rows in dataset order.
pub fn samples_to_csv_string(ds: &LabeledDataset) -> String {
    let mut out = String::new();
    out.push_str(&expected_header(ds.schema.arity()).join(","));
    out.push('\n');
    for s in &ds.samples {
        let name = &ds.labels[s.label as usize].name;
        let _ = write!(out, "{},{},{}", s.id, s.week, name);
        for v in &s.features {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Writes a dataset as a sample CSV.
pub fn write_samples_csv(ds: &LabeledDataset, path: &Path) -> Result<(), DatasetError> {
    std::fs::write(path, samples_to_csv_string(ds)).map_err(|e| DatasetError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Per-class sample counts, indexed by class code. Counts sum to the
/// dataset size.
pub fn class_counts(ds: &LabeledDataset) -> Vec<usize> {
    let mut counts = vec![0usize; ds.labels.len()];
    for s in &ds.samples {
        counts[s.label as usize] += 1;
    }
    counts
}

/// Splits a dataset into a pool and a stratified test set.
///
/// The test set holds `ceil(fraction * count_c)` samples of each class,
/// drawn uniformly without replacement; both halves keep the original
/// sample order. Deterministic for a given seed.
pub fn stratified_holdout(
    ds: &LabeledDataset,
    fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset), DatasetError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DatasetError::BadParameter(format!(
            "holdout fraction must be in (0,1), got {fraction}"
        )));
    }
    let counts = class_counts(ds);
    for label in &ds.labels {
        let count = counts[label.code as usize];
        if count < 2 {
            return Err(DatasetError::ClassTooSmall {
                name: label.name.clone(),
                count,
            });
        }
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.labels.len()];
    for (i, s) in ds.samples.iter().enumerate() {
        by_class[s.label as usize].push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_test = vec![false; ds.samples.len()];
    for positions in &by_class {
        let take = (fraction * positions.len() as f64).ceil() as usize;
        let chosen = rand::seq::index::sample(&mut rng, positions.len(), take);
        for j in chosen.iter() {
            in_test[positions[j]] = true;
        }
    }

    let split = |keep_test: bool| LabeledDataset {
        schema: ds.schema.clone(),
        labels: ds.labels.clone(),
        samples: ds
            .samples
            .iter()
            .enumerate()
            .filter(|(i, _)| in_test[*i] == keep_test)
            .map(|(_, s)| s.clone())
            .collect(),
    };
    Ok((split(false), split(true)))
}

/// Generates a two-class synthetic stream for desk-scale experiments.
///
/// Each student gets a final label (`fail` or `pass`, fail fraction
/// `class_ratio`) and a base point drawn from its class Gaussian: 5
/// dimensions, unit variance, class means at -1 and +1 on the first
/// coordinate (separation 2.0). Every week re-emits each student's current
/// snapshot; both class means shift by `drift_rate` per week on the first
/// coordinate, so a stale model degrades under nonzero drift. Bit-identical
/// for a given seed.
pub fn synth_stream(
    n_students: usize,
    weeks: usize,
    class_ratio: f64,
    drift_rate: f64,
    seed: u64,
) -> Result<StreamSource, DatasetError> {
    if weeks < 1 {
        return Err(DatasetError::BadParameter(format!(
            "weeks must be >= 1, got {weeks}"
        )));
    }
    if n_students < 2 {
        return Err(DatasetError::BadParameter(format!(
            "n_students must be >= 2, got {n_students}"
        )));
    }
    if !(class_ratio > 0.0 && class_ratio < 1.0) {
        return Err(DatasetError::BadParameter(format!(
            "class_ratio must be in (0,1), got {class_ratio}"
        )));
    }
    if !drift_rate.is_finite() {
        return Err(DatasetError::BadParameter(
            "drift_rate must be finite".to_string(),
        ));
    }

    const DIMS: usize = 5;
    let labels = vec![
        ClassLabel {
            code: 0,
            name: "fail".to_string(),
        },
        ClassLabel {
            code: 1,
            name: "pass".to_string(),
        },
    ];
    let fail_count = ((n_students as f64) * class_ratio)
        .round()
        .clamp(1.0, (n_students - 1) as f64) as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    struct Student {
        id: String,
        label: u16,
        base: [f64; DIMS],
    }
    let students: Vec<Student> = (0..n_students)
        .map(|i| {
            let label = if i < fail_count { 0 } else { 1 };
            let class_mean0 = if label == 0 { -1.0 } else { 1.0 };
            let mut base = [0.0; DIMS];
            for (d, slot) in base.iter_mut().enumerate() {
                let noise: f64 = rng.sample(StandardNormal);
                *slot = noise + if d == 0 { class_mean0 } else { 0.0 };
            }
            Student {
                id: format!("s{i:05}"),
                label,
                base,
            }
        })
        .collect();

    let batches = (0..weeks as u32)
        .map(|week| WeeklyBatch {
            week,
            samples: students
                .iter()
                .map(|st| {
                    let mut features = st.base.to_vec();
                    features[0] += drift_rate * week as f64;
                    Sample {
                        id: st.id.clone(),
                        week,
                        features,
                        label: st.label,
                    }
                })
                .collect(),
        })
        .collect();

    Ok(StreamSource {
        schema: Schema::numbered(DIMS),
        labels,
        batches,
    })
}

/// Per-class counts keyed by class name, for display.
pub fn class_counts_by_name(ds: &LabeledDataset) -> BTreeMap<String, usize> {
    let counts = class_counts(ds);
    ds.labels
        .iter()
        .map(|l| (l.name.clone(), counts[l.code as usize]))
        .collect()
}
