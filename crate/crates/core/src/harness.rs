//! The weekly incremental-learning protocol.
//!
//! Each week is prequential: the current model is scored on the incoming
//! batch first, then the batch may trigger a retrain. A retrain builds the
//! candidate pool, carves a stratified fitness split, rebuilds the exemplar
//! store with the configured strategy, and refits the model from scratch on
//! the new store. Runs and strategies are independent tasks; every random
//! decision derives its seed from (master seed, run, strategy, week,
//! purpose), so the full record set is a pure function of the
//! configuration regardless of thread count or scheduling.

use std::collections::HashSet;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::classifier::{argmax_row, ClassifierError, ClassifierSpec, TrainedModel};
use crate::dataset::{
    load_samples_csv, stratified_holdout, synth_stream, ClassLabel, DatasetError, LabeledDataset,
    Schema, StreamSource, WeeklyBatch,
};
use crate::evaluation::{
    aggregate_runs, compute_accuracy, compute_log_loss, EvalError, RunSummary, ScoreType,
};
use crate::ga::{GaConfig, GaError};
use crate::memory::{
    build_candidate_pool, update_exemplar_ga, update_exemplar_random, CandidatePool,
    ExemplarStore, MemoryError, UpdateStrategy,
};
use crate::seeding;

// purpose tags for the seed hierarchy
const P_WEEK: u64 = 0x10;
const P_SPLIT: u64 = 0x11;
const P_UPDATE: u64 = 0x12;
const P_FIT: u64 = 0x13;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl From<GaError> for HarnessError {
    fn from(err: GaError) -> Self {
        HarnessError::Memory(MemoryError::Ga(err))
    }
}

/// Where the stream comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum StreamSpec {
    File(PathBuf),
    Synthetic {
        students: usize,
        weeks: usize,
        fail_ratio: f64,
        drift: f64,
        seed: u64,
    },
}

impl StreamSpec {
    pub fn load(&self) -> Result<StreamSource, DatasetError> {
        match self {
            StreamSpec::File(path) => StreamSource::from_dataset(load_samples_csv(path, None)?),
            StreamSpec::Synthetic {
                students,
                weeks,
                fail_ratio,
                drift,
                seed,
            } => synth_stream(*students, *weeks, *fail_ratio, *drift, *seed),
        }
    }
}

/// When to rebuild the store and refit the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetrainPolicy {
    /// Retrain when accuracy drops by more than the forgetting value.
    Threshold,
    /// Retrain every week.
    Always,
}

impl FromStr for RetrainPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "threshold" => Ok(RetrainPolicy::Threshold),
            "always" => Ok(RetrainPolicy::Always),
            other => Err(format!(
                "unknown retrain policy `{other}` (expected threshold or always)"
            )),
        }
    }
}

/// Where the GA's fitness test split comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitnessSplit {
    /// Carve a fresh stratified split from each update's candidate pool.
    PerUpdate,
    /// Hold out a fixed student-id set at the first update and reuse it.
    Global,
}

impl FromStr for FitnessSplit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per_update" => Ok(FitnessSplit::PerUpdate),
            "global" => Ok(FitnessSplit::Global),
            other => Err(format!(
                "unknown fitness split `{other}` (expected per_update or global)"
            )),
        }
    }
}

/// GA knobs shared by all updates; `e_size` and the score type are filled
/// in per strategy at update time.
#[derive(Debug, Clone, PartialEq)]
pub struct GaSettings {
    pub size_p: usize,
    pub iterations: usize,
    pub mutation_prob: f64,
    pub elite_count: usize,
    pub parent_count: usize,
    pub retry_cap: usize,
    pub optimum_accuracy: f64,
    pub optimum_loss: f64,
}

impl Default for GaSettings {
    fn default() -> Self {
        GaSettings {
            size_p: 20,
            iterations: 5,
            mutation_prob: 0.05,
            elite_count: 2,
            parent_count: 10,
            retry_cap: 100,
            optimum_accuracy: 1.0,
            optimum_loss: 0.0,
        }
    }
}

impl GaSettings {
    pub fn to_config(&self, e_size: usize, score_type: ScoreType) -> GaConfig {
        GaConfig {
            size_p: self.size_p,
            iterations: self.iterations,
            mutation_prob: self.mutation_prob,
            e_size,
            score_type,
            elite_count: self.elite_count,
            parent_count: self.parent_count,
            retry_cap: self.retry_cap,
            optimum_accuracy: self.optimum_accuracy,
            optimum_loss: self.optimum_loss,
        }
    }
}

/// The full experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub stream: StreamSpec,
    pub strategies: Vec<UpdateStrategy>,
    pub runs: usize,
    pub forgetting: f64,
    pub retrain_policy: RetrainPolicy,
    pub e_size: usize,
    pub ga: GaSettings,
    pub classifier: ClassifierSpec,
    pub test_fraction: f64,
    pub fitness_split: FitnessSplit,
    pub master_seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.runs < 1 {
            return Err(HarnessError::InvalidConfig("runs must be >= 1".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction <= 0.5) {
            return Err(HarnessError::InvalidConfig(format!(
                "test_fraction must be in (0, 0.5], got {}",
                self.test_fraction
            )));
        }
        if !(self.forgetting >= 0.0 && self.forgetting.is_finite()) {
            return Err(HarnessError::InvalidConfig(format!(
                "forgetting must be a nonnegative real, got {}",
                self.forgetting
            )));
        }
        if self.strategies.is_empty() {
            return Err(HarnessError::InvalidConfig(
                "at least one strategy is required".into(),
            ));
        }
        let mut seen = HashSet::new();
        for strategy in &self.strategies {
            if !seen.insert(strategy) {
                return Err(HarnessError::InvalidConfig(format!(
                    "strategy `{strategy}` listed twice"
                )));
            }
        }
        if self.e_size == 0 {
            return Err(HarnessError::InvalidConfig("e_size must be >= 1".into()));
        }
        self.ga
            .to_config(self.e_size, ScoreType::Accuracy)
            .validate()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        self.classifier
            .validate()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        Ok(())
    }
}

/// One measurement: a run's view of one week under one strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct WeekRecord {
    pub run: usize,
    pub week: u32,
    pub strategy: UpdateStrategy,
    pub accuracy: f64,
    pub log_loss: f64,
    pub retrained: bool,
    pub store_class_counts: Vec<usize>,
    pub evaluations: usize,
}

/// Mutable state carried across the weeks of one (run, strategy) replay.
#[derive(Debug, Clone)]
pub struct RunState {
    pub model: Option<TrainedModel>,
    pub store: ExemplarStore,
    pub prev_accuracy: Option<f64>,
    /// Student ids held out for fitness testing under the global split.
    holdout_ids: Option<HashSet<String>>,
}

impl RunState {
    pub fn initial(e_size: usize) -> Self {
        RunState {
            model: None,
            store: ExemplarStore::empty(e_size),
            prev_accuracy: None,
            holdout_ids: None,
        }
    }
}

/// Everything a single week step needs besides the state and the batch.
pub struct WeekContext<'a> {
    pub config: &'a ExperimentConfig,
    pub schema: &'a Schema,
    pub labels: &'a [ClassLabel],
    pub run: usize,
    pub strategy: UpdateStrategy,
}

/// Decides whether this week triggers a retrain.
///
/// Under the threshold policy the model retrains when there is no previous
/// accuracy yet (bootstrap) or when accuracy dropped by strictly more than
/// the forgetting value.
pub fn retrain_trigger(
    prev_accuracy: Option<f64>,
    new_accuracy: f64,
    forgetting: f64,
    policy: RetrainPolicy,
) -> bool {
    match policy {
        RetrainPolicy::Always => true,
        RetrainPolicy::Threshold => match prev_accuracy {
            None => true,
            Some(prev) => prev - new_accuracy > forgetting,
        },
    }
}

/// Before any model exists, a week is scored by the batch's empirical
/// class distribution used as a constant predictor: accuracy equals the
/// majority share, and the log loss is that of the share vector.
fn majority_baseline(
    batch: &WeeklyBatch,
    n_classes: usize,
) -> Result<(f64, f64), HarnessError> {
    let mut counts = vec![0usize; n_classes];
    for s in &batch.samples {
        counts[s.label as usize] += 1;
    }
    let shares: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 / batch.samples.len() as f64)
        .collect();
    let truth: Vec<u16> = batch.samples.iter().map(|s| s.label).collect();
    let majority = argmax_row(&shares);
    let accuracy = shares[majority as usize];
    let rows = vec![shares; batch.samples.len()];
    let log_loss = compute_log_loss(&rows, &truth)?;
    Ok((accuracy, log_loss))
}

fn strategy_word(strategy: UpdateStrategy) -> u64 {
    match strategy {
        UpdateStrategy::GaAccuracy => 0,
        UpdateStrategy::GaLoss => 1,
        UpdateStrategy::Random => 2,
    }
}

/// Splits the candidate pool into GA candidates and the fitness test set.
fn carve_fitness_split(
    state: &mut RunState,
    pool: &CandidatePool,
    ctx: &WeekContext<'_>,
    split_seed: u64,
) -> Result<(CandidatePool, LabeledDataset), HarnessError> {
    match ctx.config.fitness_split {
        FitnessSplit::PerUpdate => {
            let (candidates, test) =
                stratified_holdout(&pool.dataset, ctx.config.test_fraction, split_seed)?;
            Ok((CandidatePool::from_grouped(candidates)?, test))
        }
        FitnessSplit::Global => {
            if state.holdout_ids.is_none() {
                let (_, test) =
                    stratified_holdout(&pool.dataset, ctx.config.test_fraction, split_seed)?;
                state.holdout_ids = Some(test.samples.into_iter().map(|s| s.id).collect());
            }
            let held = state.holdout_ids.as_ref().unwrap();
            let partition = |keep_held: bool| LabeledDataset {
                schema: pool.dataset.schema.clone(),
                labels: pool.dataset.labels.clone(),
                samples: pool
                    .dataset
                    .samples
                    .iter()
                    .filter(|s| held.contains(&s.id) == keep_held)
                    .cloned()
                    .collect(),
            };
            let test = partition(true);
            if test.is_empty() {
                return Err(HarnessError::InvalidConfig(
                    "global fitness holdout has no members in the current pool".into(),
                ));
            }
            Ok((CandidatePool::from_grouped(partition(false))?, test))
        }
    }
}

/// One prequential step: score the current model on the batch, decide on a
/// retrain, and if triggered rebuild the store and refit the model.
pub fn run_week(
    mut state: RunState,
    batch: &WeeklyBatch,
    ctx: &WeekContext<'_>,
) -> Result<(RunState, WeekRecord), HarnessError> {
    assert!(!batch.samples.is_empty(), "weekly batches are nonempty");
    let config = ctx.config;
    let n_classes = ctx.labels.len();

    // scoring happens strictly before the batch can influence anything
    let (accuracy, log_loss) = match &state.model {
        Some(model) => {
            let rows: Vec<Vec<f64>> = batch.samples.iter().map(|s| s.features.clone()).collect();
            let truth: Vec<u16> = batch.samples.iter().map(|s| s.label).collect();
            let predicted = model.predict_label(&rows)?;
            (
                compute_accuracy(&predicted, &truth)?,
                compute_log_loss(&model.predict_proba(&rows)?, &truth)?,
            )
        }
        None => majority_baseline(batch, n_classes)?,
    };

    let retrained = retrain_trigger(
        state.prev_accuracy,
        accuracy,
        config.forgetting,
        config.retrain_policy,
    );

    let week_seed = seeding::derive_seed(
        config.master_seed,
        &[P_WEEK, ctx.run as u64, batch.week as u64],
    );
    let strategy = strategy_word(ctx.strategy);

    let mut evaluations = 0usize;
    if retrained {
        let pool = build_candidate_pool(&state.store, batch, ctx.schema, ctx.labels);
        let (candidates, fitness_test) = carve_fitness_split(
            &mut state,
            &pool,
            ctx,
            seeding::derive_seed(week_seed, &[P_SPLIT]),
        )?;
        let update_seed = seeding::derive_seed(week_seed, &[P_UPDATE, strategy]);

        let store = match ctx.strategy {
            UpdateStrategy::Random => {
                update_exemplar_random(&candidates, config.e_size, update_seed)?
            }
            UpdateStrategy::GaAccuracy | UpdateStrategy::GaLoss => {
                let score_type = if ctx.strategy == UpdateStrategy::GaAccuracy {
                    ScoreType::Accuracy
                } else {
                    ScoreType::Loss
                };
                let ga_config = config.ga.to_config(config.e_size, score_type);
                let base = match &state.model {
                    Some(model) => model.clone(),
                    None => TrainedModel::new(config.classifier.clone()),
                };
                let (store, result) =
                    update_exemplar_ga(&candidates, &fitness_test, &base, &ga_config, update_seed)?;
                evaluations = result.evaluations;
                store
            }
        };

        let train = store.to_dataset(ctx.schema, ctx.labels);
        let model = TrainedModel::new(config.classifier.clone())
            .fit(&train, seeding::derive_seed(week_seed, &[P_FIT, strategy]))?;
        state.store = store;
        state.model = Some(model);
    }

    let record = WeekRecord {
        run: ctx.run,
        week: batch.week,
        strategy: ctx.strategy,
        accuracy,
        log_loss,
        retrained,
        store_class_counts: state.store.class_counts(n_classes),
        evaluations,
    };
    state.prev_accuracy = Some(accuracy);
    Ok((state, record))
}

fn replay_stream(
    stream: &StreamSource,
    config: &ExperimentConfig,
    run: usize,
    strategy: UpdateStrategy,
) -> Result<Vec<WeekRecord>, HarnessError> {
    let ctx = WeekContext {
        config,
        schema: &stream.schema,
        labels: &stream.labels,
        run,
        strategy,
    };
    let mut state = RunState::initial(config.e_size);
    let mut records = Vec::with_capacity(stream.total_weeks());
    for batch in &stream.batches {
        let (next, record) = run_week(state, batch, &ctx)?;
        state = next;
        records.push(record);
    }
    Ok(records)
}

/// Replays the whole stream for every (run, strategy) pair.
///
/// All strategies within a run see the identical batch sequence and the
/// same week-level base seeds. Tasks execute on the current rayon pool;
/// results are merged by a final (run, week, strategy) sort, so the output
/// is independent of worker count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<WeekRecord>, HarnessError> {
    config.validate()?;
    let stream = config.stream.load()?;
    if config.e_size < stream.labels.len() {
        return Err(HarnessError::InvalidConfig(format!(
            "e_size {} is below the class count {}",
            config.e_size,
            stream.labels.len()
        )));
    }

    let tasks: Vec<(usize, UpdateStrategy)> = (0..config.runs)
        .flat_map(|run| config.strategies.iter().map(move |&s| (run, s)))
        .collect();
    let mut records: Vec<WeekRecord> = tasks
        .par_iter()
        .map(|&(run, strategy)| replay_stream(&stream, config, run, strategy))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    records.sort_by_key(|r| (r.run, r.week, r.strategy));

    debug_assert_eq!(
        records.len(),
        config.runs * stream.total_weeks() * config.strategies.len()
    );
    Ok(records)
}

/// Per-week aggregates plus the per-strategy range of weekly accuracy
/// standard deviations (the headline stability figure).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub weekly: RunSummary,
    pub accuracy_std_range: std::collections::BTreeMap<UpdateStrategy, (f64, f64)>,
}

pub fn summarize(records: &[WeekRecord]) -> ExperimentSummary {
    let weekly = aggregate_runs(records);
    let mut accuracy_std_range = std::collections::BTreeMap::new();
    for (&(strategy, _), aggregate) in &weekly {
        let entry = accuracy_std_range
            .entry(strategy)
            .or_insert((f64::INFINITY, f64::NEG_INFINITY));
        entry.0 = entry.0.min(aggregate.std_accuracy);
        entry.1 = entry.1.max(aggregate.std_accuracy);
    }
    ExperimentSummary {
        weekly,
        accuracy_std_range,
    }
}
