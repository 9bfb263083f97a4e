//! The bounded, class-balanced exemplar store and its update strategies.
//!
//! Each update rebuilds the store from the candidate pool (the deduplicated
//! union of the current store and the newest batch, newest observation per
//! student winning). Selection is either uniform per-class random sampling
//! or a genetic search driven by accuracy or log loss.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::classifier::TrainedModel;
use crate::dataset::{class_counts, ClassLabel, LabeledDataset, Sample, Schema, WeeklyBatch};
use crate::ga::{self, ClassLayout, GaConfig, GaResult, Quota};
use crate::seeding;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("cannot update the exemplar store from an empty candidate pool")]
    EmptyPool,
    #[error(transparent)]
    Ga(#[from] ga::GaError),
}

/// How the exemplar store is rebuilt on update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UpdateStrategy {
    GaAccuracy,
    GaLoss,
    Random,
}

impl UpdateStrategy {
    pub const ALL: [UpdateStrategy; 3] = [
        UpdateStrategy::GaAccuracy,
        UpdateStrategy::GaLoss,
        UpdateStrategy::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            UpdateStrategy::GaAccuracy => "ga_accuracy",
            UpdateStrategy::GaLoss => "ga_loss",
            UpdateStrategy::Random => "random",
        }
    }
}

impl fmt::Display for UpdateStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UpdateStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ga_accuracy" => Ok(UpdateStrategy::GaAccuracy),
            "ga_loss" => Ok(UpdateStrategy::GaLoss),
            "random" => Ok(UpdateStrategy::Random),
            other => Err(format!(
                "unknown strategy `{other}` (expected ga_accuracy, ga_loss, or random)"
            )),
        }
    }
}

/// The bounded training memory. Per-class counts always equal the quota
/// computed from the pool the store was last built from.
#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarStore {
    pub samples: Vec<Sample>,
    pub capacity: usize,
    pub quota: Quota,
}

impl ExemplarStore {
    /// The week-0 store: empty, awaiting the first update.
    pub fn empty(capacity: usize) -> Self {
        ExemplarStore {
            samples: Vec::new(),
            capacity,
            quota: ga::class_quota(capacity, &[]),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Per-class sample counts, indexed by class code.
    pub fn class_counts(&self, n_classes: usize) -> Vec<usize> {
        let mut counts = vec![0usize; n_classes];
        for s in &self.samples {
            counts[s.label as usize] += 1;
        }
        counts
    }

    /// The store as a trainable dataset.
    pub fn to_dataset(&self, schema: &Schema, labels: &[ClassLabel]) -> LabeledDataset {
        LabeledDataset {
            schema: schema.clone(),
            labels: labels.to_vec(),
            samples: self.samples.clone(),
        }
    }

    /// Audit snapshot: the dataset schema plus a `selected_week` column.
    pub fn snapshot_csv(&self, schema: &Schema, labels: &[ClassLabel]) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("id,week,label");
        for name in &schema.feature_names {
            let _ = write!(out, ",{name}");
        }
        out.push_str(",selected_week\n");
        for s in &self.samples {
            let _ = write!(out, "{},{},{}", s.id, s.week, labels[s.label as usize].name);
            for v in &s.features {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{}", s.week);
        }
        out
    }

    fn assert_invariants(&self, pool_counts: &[usize]) {
        assert!(
            self.samples.len() <= self.capacity,
            "store of {} exceeds capacity {}",
            self.samples.len(),
            self.capacity
        );
        let counts = self.class_counts(pool_counts.len());
        assert_eq!(
            counts,
            self.quota.per_class(),
            "store counts diverged from quota"
        );
    }
}

/// The deduplicated union of the store and the incoming batch, grouped by
/// class (ascending code) then student id, ready for the GA layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    pub dataset: LabeledDataset,
}

impl CandidatePool {
    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }

    /// Wraps an already class-grouped dataset (as produced by
    /// [`build_candidate_pool`] or a stratified split of its output).
    pub fn from_grouped(dataset: LabeledDataset) -> Result<Self, MemoryError> {
        ClassLayout::from_grouped(&dataset)?;
        Ok(CandidatePool { dataset })
    }
}

/// Merges the store with the newest batch, keyed by student id; when an id
/// appears in both, the batch version wins (it carries the newest
/// observation).
pub fn build_candidate_pool(
    store: &ExemplarStore,
    batch: &WeeklyBatch,
    schema: &Schema,
    labels: &[ClassLabel],
) -> CandidatePool {
    let mut by_id: BTreeMap<String, Sample> = store
        .samples
        .iter()
        .map(|s| (s.id.clone(), s.clone()))
        .collect();
    for sample in &batch.samples {
        by_id.insert(sample.id.clone(), sample.clone());
    }
    let mut samples: Vec<Sample> = by_id.into_values().collect();
    samples.sort_by(|a, b| a.label.cmp(&b.label).then_with(|| a.id.cmp(&b.id)));
    CandidatePool {
        dataset: LabeledDataset {
            schema: schema.clone(),
            labels: labels.to_vec(),
            samples,
        },
    }
}

/// The random-selection baseline: per class, `quota_c` samples drawn
/// uniformly without replacement.
pub fn update_exemplar_random(
    pool: &CandidatePool,
    e_size: usize,
    seed: u64,
) -> Result<ExemplarStore, MemoryError> {
    if pool.is_empty() {
        return Err(MemoryError::EmptyPool);
    }
    let counts = class_counts(&pool.dataset);
    let quota = ga::class_quota(e_size, &counts);
    let layout = ClassLayout::from_grouped(&pool.dataset)?;

    let mut rng = seeding::rng(seed, &[]);
    let mut samples = Vec::with_capacity(quota.total());
    for code in 0..layout.n_classes() {
        let segment = layout.segment(code);
        let mut chosen: Vec<usize> =
            rand::seq::index::sample(&mut rng, segment.len(), quota.class(code)).into_vec();
        chosen.sort_unstable();
        samples.extend(
            chosen
                .into_iter()
                .map(|offset| pool.dataset.samples[segment.start + offset].clone()),
        );
    }
    let store = ExemplarStore {
        samples,
        capacity: e_size,
        quota,
    };
    store.assert_invariants(&counts);
    Ok(store)
}

/// The GA strategy: runs [`ga::ga_search`] over the pool and materializes
/// the best individual's active samples. Returns the search result
/// alongside the store so callers can report the evaluation count.
pub fn update_exemplar_ga(
    pool: &CandidatePool,
    test: &LabeledDataset,
    base: &TrainedModel,
    config: &GaConfig,
    seed: u64,
) -> Result<(ExemplarStore, GaResult), MemoryError> {
    if pool.is_empty() {
        return Err(MemoryError::EmptyPool);
    }
    let counts = class_counts(&pool.dataset);
    let quota = ga::class_quota(config.e_size, &counts);
    let result = ga::ga_search(&pool.dataset, test, base, config, seed)?;
    let store = ExemplarStore {
        samples: result.best.materialize(&pool.dataset).samples,
        capacity: config.e_size,
        quota,
    };
    store.assert_invariants(&counts);
    Ok((store, result))
}
