//! Fitness metrics and population evaluation.
//!
//! Accuracy and log loss share a single fitness ordering: higher accuracy
//! is fitter, lower loss is fitter, and exact ties break on the
//! lexicographically smaller bit pattern. Selection, elitism, early
//! stopping, and best tracking all go through that one ordering, so the
//! two score types differ only in the metric itself.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::classifier::{ClassifierError, TrainedModel};
use crate::dataset::LabeledDataset;
use crate::ga::{Individual, Population};
use crate::harness::WeekRecord;
use crate::memory::UpdateStrategy;
use crate::seeding;

/// Probabilities are clamped into `[CLAMP, 1 - CLAMP]` before taking logs,
/// so a zero probability yields `-ln(1e-15) ~= 34.54` instead of infinity.
pub const LOG_LOSS_CLAMP: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("bad probability row {row}: {reason}")]
    BadProbability { row: usize, reason: String },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

/// Which metric drives the fitness function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreType {
    Accuracy,
    Loss,
}

impl ScoreType {
    /// True when `candidate` is strictly fitter than `incumbent`.
    pub fn is_improvement(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            ScoreType::Accuracy => candidate > incumbent,
            ScoreType::Loss => candidate < incumbent,
        }
    }

    /// Fitter-first total order over `(individual, score)` pairs; ties
    /// break toward the lexicographically smaller bit pattern.
    pub fn rank(self, a: &(Individual, f64), b: &(Individual, f64)) -> Ordering {
        let by_score = match self {
            ScoreType::Accuracy => b.1.partial_cmp(&a.1),
            ScoreType::Loss => a.1.partial_cmp(&b.1),
        }
        .expect("fitness scores are finite");
        by_score.then_with(|| a.0.cmp(&b.0))
    }
}

/// Fraction of positions where `predicted` equals `truth`.
pub fn compute_accuracy(predicted: &[u16], truth: &[u16]) -> Result<f64, EvalError> {
    if predicted.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Mean cross-entropy `-ln(p_true)` over rows, with `p_true` clamped into
/// `[1e-15, 1 - 1e-15]`. Rows must sum to 1 within 1e-6.
pub fn compute_log_loss(probas: &[Vec<f64>], truth: &[u16]) -> Result<f64, EvalError> {
    if probas.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            left: probas.len(),
            right: truth.len(),
        });
    }
    if probas.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut total = 0.0;
    for (row_idx, (row, &code)) in probas.iter().zip(truth).enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(EvalError::BadProbability {
                row: row_idx,
                reason: format!("entries sum to {sum}, expected 1"),
            });
        }
        let p_true = *row.get(code as usize).ok_or_else(|| EvalError::BadProbability {
            row: row_idx,
            reason: format!("true class code {code} out of range for {} columns", row.len()),
        })?;
        let clamped = p_true.clamp(LOG_LOSS_CLAMP, 1.0 - LOG_LOSS_CLAMP);
        total -= clamped.ln();
    }
    Ok(total / truth.len() as f64)
}

/// Fitness scores for one population, in population order.
#[derive(Debug, Clone)]
pub struct FitnessReport {
    pub entries: Vec<(Individual, f64)>,
    pub score_type: ScoreType,
    /// Model fits actually performed (cache hits excluded).
    pub evaluations: usize,
}

impl FitnessReport {
    /// Entries sorted fitter-first under the shared ordering.
    pub fn ranked(&self) -> Vec<(Individual, f64)> {
        let mut entries = self.entries.clone();
        entries.sort_by(|a, b| self.score_type.rank(a, b));
        entries
    }
}

/// Memoized scores keyed by bit pattern, shared across the generations of
/// one GA run. Evaluation is deterministic, so caching changes no scores.
pub type FitnessCache = HashMap<Vec<bool>, f64>;

/// Scores every individual by cloning `base`, fitting the clone on the
/// individual's active samples, and scoring predictions on `test`.
///
/// Per-individual seeds derive from `(seed, index)`; duplicates of an
/// already-scored bit pattern reuse the cached score. `base` is never
/// modified.
pub fn evaluate_population(
    pool: &LabeledDataset,
    test: &LabeledDataset,
    population: &Population,
    base: &TrainedModel,
    score_type: ScoreType,
    seed: u64,
) -> Result<FitnessReport, EvalError> {
    let mut cache = FitnessCache::new();
    evaluate_population_cached(pool, test, population, base, score_type, seed, &mut cache)
}

/// [`evaluate_population`] with a caller-owned cache, so repeated patterns
/// across generations are fitted once.
pub fn evaluate_population_cached(
    pool: &LabeledDataset,
    test: &LabeledDataset,
    population: &Population,
    base: &TrainedModel,
    score_type: ScoreType,
    seed: u64,
    cache: &mut FitnessCache,
) -> Result<FitnessReport, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let test_rows = test.feature_rows();
    let test_truth = test.label_codes();

    let mut entries = Vec::with_capacity(population.len());
    let mut evaluations = 0usize;
    for (index, individual) in population.individuals.iter().enumerate() {
        let score = match cache.get(individual.bits()) {
            Some(&score) => score,
            None => {
                let train = individual.materialize(pool);
                let fit_seed = seeding::derive_seed(seed, &[index as u64]);
                let model = base.clone().fit(&train, fit_seed)?;
                let score = match score_type {
                    ScoreType::Accuracy => {
                        compute_accuracy(&model.predict_label(&test_rows)?, &test_truth)?
                    }
                    ScoreType::Loss => {
                        compute_log_loss(&model.predict_proba(&test_rows)?, &test_truth)?
                    }
                };
                evaluations += 1;
                cache.insert(individual.bits().to_vec(), score);
                score
            }
        };
        entries.push((individual.clone(), score));
    }
    Ok(FitnessReport {
        entries,
        score_type,
        evaluations,
    })
}

/// Per-week, per-strategy aggregate over runs.
#[derive(Debug, Clone, PartialEq)]
pub struct WeekAggregate {
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_log_loss: f64,
    pub std_log_loss: f64,
    pub runs: usize,
}

/// Aggregation keyed by `(strategy, week)`.
pub type RunSummary = BTreeMap<(UpdateStrategy, u32), WeekAggregate>;

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    // identical values have exactly zero spread; skip the residual the
    // two-pass formula would leave behind
    if values.windows(2).all(|w| w[0] == w[1]) {
        return (values[0], 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    // population standard deviation: per-week spread over a fixed run count
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and population standard deviation of accuracy and log loss for
/// every `(week, strategy)` present in `records`.
pub fn aggregate_runs(records: &[WeekRecord]) -> RunSummary {
    let mut grouped: BTreeMap<(UpdateStrategy, u32), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for record in records {
        let slot = grouped
            .entry((record.strategy, record.week))
            .or_default();
        slot.0.push(record.accuracy);
        slot.1.push(record.log_loss);
    }
    grouped
        .into_iter()
        .map(|(key, (accs, losses))| {
            let (mean_accuracy, std_accuracy) = mean_and_std(&accs);
            let (mean_log_loss, std_log_loss) = mean_and_std(&losses);
            (
                key,
                WeekAggregate {
                    mean_accuracy,
                    std_accuracy,
                    mean_log_loss,
                    std_log_loss,
                    runs: accs.len(),
                },
            )
        })
        .collect()
}
