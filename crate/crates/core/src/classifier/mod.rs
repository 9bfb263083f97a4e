//! Pluggable classifier contract with clone-then-retrain semantics.
//!
//! A [`TrainedModel`] is immutable after fitting; [`TrainedModel::fit`]
//! returns a new value and fully replaces any prior fitted state. Cloning
//! is deep, so fitting a clone never alters the original. Two learners are
//! built in: binary logistic regression (smooth probabilities, useful for
//! the log-loss fitness) and a random forest with hard-vote probabilities.

mod forest;
mod logistic;

pub use logistic::loss_and_grad;

use crate::dataset::{ClassLabel, LabeledDataset};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("model is not fitted")]
    NotFitted,
    #[error("feature arity mismatch: model expects {expected}, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("logistic regression supports exactly 2 classes, dataset declares {got}")]
    UnsupportedClassCount { got: usize },
    #[error("invalid classifier spec: {0}")]
    InvalidSpec(String),
}

/// Hyperparameters for binary logistic regression trained by full-batch
/// gradient descent on features standardized per fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            learning_rate: 0.1,
            epochs: 200,
            l2: 1e-4,
        }
    }
}

/// Hyperparameters for the random forest: bootstrapped Gini trees with
/// `ceil(sqrt(m))` candidate features per split.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 50,
            max_depth: 8,
            min_leaf: 1,
        }
    }
}

/// Which learner to use, with its hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierSpec {
    LogisticRegression(LogisticParams),
    RandomForest(ForestParams),
}

impl ClassifierSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ClassifierSpec::LogisticRegression(_) => "logistic_regression",
            ClassifierSpec::RandomForest(_) => "random_forest",
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        match self {
            ClassifierSpec::LogisticRegression(p) => {
                if !(p.learning_rate > 0.0 && p.learning_rate.is_finite()) {
                    return Err(ClassifierError::InvalidSpec(format!(
                        "learning_rate must be positive, got {}",
                        p.learning_rate
                    )));
                }
                if p.epochs == 0 {
                    return Err(ClassifierError::InvalidSpec("epochs must be >= 1".into()));
                }
                if !(p.l2 >= 0.0 && p.l2.is_finite()) {
                    return Err(ClassifierError::InvalidSpec(format!(
                        "l2 must be nonnegative, got {}",
                        p.l2
                    )));
                }
            }
            ClassifierSpec::RandomForest(p) => {
                if p.n_trees == 0 {
                    return Err(ClassifierError::InvalidSpec("trees must be >= 1".into()));
                }
                if p.max_depth == 0 {
                    return Err(ClassifierError::InvalidSpec("max_depth must be >= 1".into()));
                }
                if p.min_leaf == 0 {
                    return Err(ClassifierError::InvalidSpec("min_leaf must be >= 1".into()));
                }
            }
        }
        Ok(())
    }
}

/// Vote fractions from forest leaves are clamped into this range before
/// they reach the log-loss path; a single zero-probability row would
/// otherwise dominate the fitness with the metric clamp value.
const FOREST_PROB_CLAMP: (f64, f64) = (0.01, 0.99);

#[derive(Debug, Clone)]
enum FittedState {
    /// Single-class training sets are legal and yield a constant predictor.
    Constant { class: u16 },
    Logistic(logistic::Fitted),
    Forest(forest::Fitted),
}

/// A classifier spec plus (optionally) its fitted state.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    spec: ClassifierSpec,
    classes: Vec<ClassLabel>,
    arity: usize,
    state: Option<FittedState>,
}

impl TrainedModel {
    /// An unfitted model of the given spec.
    pub fn new(spec: ClassifierSpec) -> Self {
        TrainedModel {
            spec,
            classes: Vec::new(),
            arity: 0,
            state: None,
        }
    }

    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    /// Class list in probability-column order (set by `fit`).
    pub fn classes(&self) -> &[ClassLabel] {
        &self.classes
    }

    pub fn is_fitted(&self) -> bool {
        self.state.is_some()
    }

    /// Fits a fresh copy of this model on `train`, fully replacing any
    /// prior state. Deterministic for a given `(spec, train, seed)`.
    pub fn fit(&self, train: &LabeledDataset, seed: u64) -> Result<TrainedModel, ClassifierError> {
        self.spec.validate()?;
        if train.samples.is_empty() {
            return Err(ClassifierError::EmptyTrainingSet);
        }
        let arity = train.schema.arity();
        let classes = train.labels.clone();

        let mut present: Vec<u16> = train.samples.iter().map(|s| s.label).collect();
        present.sort_unstable();
        present.dedup();
        let state = if present.len() == 1 {
            FittedState::Constant { class: present[0] }
        } else {
            let rows = train.feature_rows();
            let codes = train.label_codes();
            match &self.spec {
                ClassifierSpec::LogisticRegression(params) => {
                    if classes.len() != 2 {
                        return Err(ClassifierError::UnsupportedClassCount {
                            got: classes.len(),
                        });
                    }
                    FittedState::Logistic(logistic::fit(params, &rows, &codes))
                }
                ClassifierSpec::RandomForest(params) => FittedState::Forest(forest::fit(
                    params,
                    &rows,
                    &codes,
                    classes.len(),
                    arity,
                    seed,
                )),
            }
        };

        Ok(TrainedModel {
            spec: self.spec.clone(),
            classes,
            arity,
            state: Some(state),
        })
    }

    /// Per-row class probabilities; columns follow `classes()` order and
    /// each row sums to 1 within 1e-9.
    pub fn predict_proba(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ClassifierError> {
        let state = self.state.as_ref().ok_or(ClassifierError::NotFitted)?;
        for row in rows {
            if row.len() != self.arity {
                return Err(ClassifierError::ArityMismatch {
                    expected: self.arity,
                    got: row.len(),
                });
            }
        }
        let n_classes = self.classes.len();
        let clamp = matches!(self.spec, ClassifierSpec::RandomForest(_));
        let out = rows
            .iter()
            .map(|row| {
                let mut probs = match state {
                    FittedState::Constant { class } => {
                        let mut p = vec![0.0; n_classes];
                        p[*class as usize] = 1.0;
                        p
                    }
                    FittedState::Logistic(fitted) => {
                        let p1 = fitted.prob_positive(row);
                        vec![1.0 - p1, p1]
                    }
                    FittedState::Forest(fitted) => fitted.vote_fractions(row),
                };
                if clamp {
                    clamp_and_renormalize(&mut probs);
                }
                probs
            })
            .collect();
        Ok(out)
    }

    /// Row-wise argmax of `predict_proba`; ties break toward the lower
    /// class code.
    pub fn predict_label(&self, rows: &[Vec<f64>]) -> Result<Vec<u16>, ClassifierError> {
        let probas = self.predict_proba(rows)?;
        Ok(probas.iter().map(|row| argmax_row(row)).collect())
    }
}

/// Index of the largest entry; the first maximum wins, so ties resolve to
/// the lower class code.
pub(crate) fn argmax_row(row: &[f64]) -> u16 {
    let mut best = 0usize;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best as u16
}

fn clamp_and_renormalize(probs: &mut [f64]) {
    for p in probs.iter_mut() {
        *p = p.clamp(FOREST_PROB_CLAMP.0, FOREST_PROB_CLAMP.1);
    }
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= total;
    }
}
