//! Genetic search over class-balanced fixed-cardinality subsets.
//!
//! An individual is a bit string over a candidate pool whose samples are
//! grouped contiguously by class; active bits mark selected training
//! samples. Generation draws quota-exact individuals per class, crossover
//! splices two parents at a random interior point, mutation flips bits
//! per class segment under a running-count guard, and a repair pass
//! restores exact quotas afterwards. Crossover can overfill a segment and
//! the guarded mutation alone cannot drain it, so repair is what actually
//! enforces the memory bound on offspring.

use std::collections::HashSet;
use std::ops::Range;

use rand::Rng;
use thiserror::Error;

use crate::classifier::TrainedModel;
use crate::dataset::{class_counts, LabeledDataset};
use crate::evaluation::{
    evaluate_population_cached, EvalError, FitnessCache, FitnessReport, ScoreType,
};
use crate::seeding;

// seed-path tags for the search loop
const TAG_GENERATE: u64 = 0x01;
const TAG_EVALUATE: u64 = 0x02;
const TAG_NEXT: u64 = 0x03;
const TAG_CROSSOVER: u64 = 0x04;
const TAG_MUTATE: u64 = 0x05;
const TAG_REPAIR: u64 = 0x06;

#[derive(Debug, Error)]
pub enum GaError {
    #[error("bit-string length mismatch or no interior crosspoint (lengths {left}, {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("bad parent count k={k} for population of {population}: k must be even and in [2, population]")]
    BadK { k: usize, population: usize },
    #[error("population exhausted: {feasible} distinct feasible individual(s) available, {requested} requested (or duplicate retries exceeded)")]
    PopulationExhausted { feasible: u128, requested: usize },
    #[error("invalid GA config: {0}")]
    BadConfig(String),
    #[error("pool is not grouped by class: sample {index} has class {found} inside the segment of class {expected}")]
    UngroupedPool {
        index: usize,
        found: u16,
        expected: u16,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// A fixed-length bit sequence over a candidate pool; active bits mark
/// selected training samples. Ordering is lexicographic over bits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Individual {
    bits: Vec<bool>,
}

impl Individual {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Individual { bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn active_indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect()
    }

    /// Active bits within one index range (a class segment, usually).
    pub fn active_in(&self, range: &Range<usize>) -> usize {
        self.bits[range.clone()].iter().filter(|&&b| b).count()
    }

    /// The sub-dataset of `pool` holding exactly the active samples.
    pub fn materialize(&self, pool: &LabeledDataset) -> LabeledDataset {
        LabeledDataset {
            schema: pool.schema.clone(),
            labels: pool.labels.clone(),
            samples: self
                .bits
                .iter()
                .zip(&pool.samples)
                .filter(|(&b, _)| b)
                .map(|(_, s)| s.clone())
                .collect(),
        }
    }

    /// Compact `0`/`1` rendering for debugging.
    pub fn pattern(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

/// Per-class target counts of active bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Quota {
    per_class: Vec<usize>,
}

impl Quota {
    pub fn class(&self, code: usize) -> usize {
        self.per_class[code]
    }

    pub fn per_class(&self) -> &[usize] {
        &self.per_class
    }

    pub fn total(&self) -> usize {
        self.per_class.iter().sum()
    }
}

/// Contiguous index ranges of each class within a class-grouped pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassLayout {
    segments: Vec<Range<usize>>,
}

impl ClassLayout {
    /// Reads the layout off a dataset whose samples are grouped by class in
    /// ascending code order (empty classes get empty segments).
    pub fn from_grouped(pool: &LabeledDataset) -> Result<ClassLayout, GaError> {
        let n_classes = pool.n_classes();
        let mut segments = Vec::with_capacity(n_classes);
        let mut cursor = 0usize;
        for code in 0..n_classes as u16 {
            let start = cursor;
            while cursor < pool.samples.len() && pool.samples[cursor].label == code {
                cursor += 1;
            }
            segments.push(start..cursor);
        }
        if cursor != pool.samples.len() {
            let found = pool.samples[cursor].label;
            return Err(GaError::UngroupedPool {
                index: cursor,
                found,
                expected: if found >= n_classes as u16 { 0 } else { found },
            });
        }
        Ok(ClassLayout { segments })
    }

    pub fn segment(&self, code: usize) -> Range<usize> {
        self.segments[code].clone()
    }

    pub fn n_classes(&self) -> usize {
        self.segments.len()
    }

    pub fn total_len(&self) -> usize {
        self.segments.last().map_or(0, |r| r.end)
    }
}

/// A set of individuals of equal length. Generation keeps bit patterns
/// pairwise distinct; offspring assembly keeps them distinct best-effort
/// (duplicates are accepted once the retry budget is spent).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Population {
    pub individuals: Vec<Individual>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }
}

/// Knobs of the genetic search.
#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    pub size_p: usize,
    pub iterations: usize,
    pub mutation_prob: f64,
    pub e_size: usize,
    pub score_type: ScoreType,
    pub elite_count: usize,
    pub parent_count: usize,
    pub retry_cap: usize,
    pub optimum_accuracy: f64,
    pub optimum_loss: f64,
}

impl GaConfig {
    /// Defaults mirroring the shipped experiment scale: population 20,
    /// 5 iterations, mutation 0.05, top half as parents, 2 elites.
    pub fn defaults(e_size: usize) -> GaConfig {
        GaConfig {
            size_p: 20,
            iterations: 5,
            mutation_prob: 0.05,
            e_size,
            score_type: ScoreType::Accuracy,
            elite_count: 2,
            parent_count: 10,
            retry_cap: 100,
            optimum_accuracy: 1.0,
            optimum_loss: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), GaError> {
        if self.size_p < 2 {
            return Err(GaError::BadConfig(format!(
                "size_p must be >= 2, got {}",
                self.size_p
            )));
        }
        if self.elite_count >= self.size_p {
            return Err(GaError::BadConfig(format!(
                "elite_count {} must be below size_p {}",
                self.elite_count, self.size_p
            )));
        }
        if !self.parent_count.is_multiple_of(2)
            || self.parent_count < 2
            || self.parent_count > self.size_p
        {
            return Err(GaError::BadConfig(format!(
                "parent_count must be even and in [2, size_p], got {}",
                self.parent_count
            )));
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return Err(GaError::BadConfig(format!(
                "mutation_prob must be in [0,1], got {}",
                self.mutation_prob
            )));
        }
        if self.e_size == 0 {
            return Err(GaError::BadConfig("e_size must be >= 1".into()));
        }
        Ok(())
    }

    fn meets_optimum(&self, score: f64) -> bool {
        match self.score_type {
            ScoreType::Accuracy => score >= self.optimum_accuracy,
            ScoreType::Loss => score <= self.optimum_loss,
        }
    }
}

/// Outcome of [`ga_search`].
#[derive(Debug, Clone, PartialEq)]
pub struct GaResult {
    pub best: Individual,
    pub best_score: f64,
    pub generations_run: usize,
    pub evaluations: usize,
    pub early_stopped: bool,
}

/// Splits the exemplar budget across classes.
///
/// Base quota is `floor(e_size / C)` with the remainder handed out one by
/// one in ascending class-code order. Each quota is capped at the class's
/// available count, and leftover capacity is redistributed round-robin
/// (ascending code order) to classes with spare samples until the budget
/// is met or the pool runs out. Small pools may therefore sum below
/// `e_size`.
pub fn class_quota(e_size: usize, counts: &[usize]) -> Quota {
    let n_classes = counts.len();
    if n_classes == 0 {
        return Quota { per_class: Vec::new() };
    }
    let base = e_size / n_classes;
    let remainder = e_size % n_classes;
    let mut per_class: Vec<usize> = (0..n_classes)
        .map(|c| (base + usize::from(c < remainder)).min(counts[c]))
        .collect();
    let mut total: usize = per_class.iter().sum();
    while total < e_size {
        let mut grew = false;
        for c in 0..n_classes {
            if total == e_size {
                break;
            }
            if per_class[c] < counts[c] {
                per_class[c] += 1;
                total += 1;
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    Quota { per_class }
}

fn binomial_capped(n: usize, k: usize, cap: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 0..k {
        result = match result.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return cap,
        };
        if result >= cap {
            return cap;
        }
    }
    result
}

/// Number of distinct quota-exact individuals, capped to avoid overflow.
fn feasible_count(counts: &[usize], quota: &Quota) -> u128 {
    const CAP: u128 = u128::MAX / 2;
    let mut total: u128 = 1;
    for (c, &count) in counts.iter().enumerate() {
        let choices = binomial_capped(count, quota.class(c), CAP);
        total = match total.checked_mul(choices) {
            Some(v) => v.min(CAP),
            None => CAP,
        };
        if total == 0 {
            return 0;
        }
    }
    total
}

/// Generates `size_p` pairwise-distinct individuals, each quota-exact per
/// class with a uniformly random within-class choice.
pub fn generate_population(
    pool: &LabeledDataset,
    config: &GaConfig,
    seed: u64,
) -> Result<Population, GaError> {
    let counts = class_counts(pool);
    let layout = ClassLayout::from_grouped(pool)?;
    let quota = class_quota(config.e_size, &counts);

    let feasible = feasible_count(&counts, &quota);
    if feasible < config.size_p as u128 {
        return Err(GaError::PopulationExhausted {
            feasible,
            requested: config.size_p,
        });
    }

    let mut rng = seeding::rng(seed, &[]);
    let mut seen: HashSet<Vec<bool>> = HashSet::new();
    let mut individuals = Vec::with_capacity(config.size_p);
    let mut rejections = 0usize;
    while individuals.len() < config.size_p {
        let mut bits = vec![false; pool.len()];
        for code in 0..layout.n_classes() {
            let segment = layout.segment(code);
            let chosen =
                rand::seq::index::sample(&mut rng, segment.len(), quota.class(code));
            for offset in chosen.iter() {
                bits[segment.start + offset] = true;
            }
        }
        if seen.insert(bits.clone()) {
            individuals.push(Individual::from_bits(bits));
        } else {
            rejections += 1;
            if rejections > config.retry_cap {
                return Err(GaError::PopulationExhausted {
                    feasible,
                    requested: config.size_p,
                });
            }
        }
    }
    Ok(Population { individuals })
}

/// Splices two parents at `crosspoint`: child 1 is parent 1's prefix plus
/// parent 2's suffix, child 2 the reverse.
pub(crate) fn crossover_at(
    p1: &Individual,
    p2: &Individual,
    crosspoint: usize,
) -> (Individual, Individual) {
    let splice = |head: &Individual, tail: &Individual| {
        let mut bits = head.bits[..crosspoint].to_vec();
        bits.extend_from_slice(&tail.bits[crosspoint..]);
        Individual::from_bits(bits)
    };
    (splice(p1, p2), splice(p2, p1))
}

/// One-point crossover with the crosspoint drawn uniformly from the
/// interior `{1, ..., n-1}`. Children may violate quotas; they are
/// repaired downstream.
pub fn crossover(
    p1: &Individual,
    p2: &Individual,
    seed: u64,
) -> Result<(Individual, Individual), GaError> {
    if p1.len() != p2.len() || p1.len() < 2 {
        return Err(GaError::LengthMismatch {
            left: p1.len(),
            right: p2.len(),
        });
    }
    let mut rng = seeding::rng(seed, &[]);
    let crosspoint = rng.gen_range(1..p1.len());
    Ok(crossover_at(p1, p2, crosspoint))
}

/// Per-class guarded bit-flip mutation.
///
/// Positions are scanned in order within each class segment; each flips
/// independently with probability `prob`, except that a 0 to 1 flip is
/// suppressed while the segment's running count of ones (updated as flips
/// land) has reached the class quota. 1 to 0 flips are unrestricted.
pub fn mutate(
    child: &Individual,
    quota: &Quota,
    layout: &ClassLayout,
    prob: f64,
    seed: u64,
) -> Individual {
    let mut rng = seeding::rng(seed, &[]);
    let mut bits = child.bits.clone();
    for code in 0..layout.n_classes() {
        let segment = layout.segment(code);
        let target = quota.class(code);
        let mut ones = bits[segment.clone()].iter().filter(|&&b| b).count();
        for i in segment {
            let draw: f64 = rng.gen();
            if draw < prob {
                if !bits[i] && ones < target {
                    bits[i] = true;
                    ones += 1;
                } else if bits[i] {
                    bits[i] = false;
                    ones -= 1;
                }
            }
        }
    }
    Individual::from_bits(bits)
}

/// Restores exact per-class quotas: surplus actives are deactivated
/// uniformly at random, deficits are filled from the inactive positions
/// uniformly at random. Already-feasible segments pass through unchanged.
pub fn repair(child: &Individual, quota: &Quota, layout: &ClassLayout, seed: u64) -> Individual {
    let mut rng = seeding::rng(seed, &[]);
    let mut bits = child.bits.clone();
    for code in 0..layout.n_classes() {
        let segment = layout.segment(code);
        let target = quota.class(code).min(segment.len());
        let mut active: Vec<usize> = segment.clone().filter(|&i| bits[i]).collect();
        let mut inactive: Vec<usize> = segment.clone().filter(|&i| !bits[i]).collect();
        while active.len() > target {
            let pick = rng.gen_range(0..active.len());
            bits[active.swap_remove(pick)] = false;
        }
        while active.len() < target && !inactive.is_empty() {
            let pick = rng.gen_range(0..inactive.len());
            let position = inactive.swap_remove(pick);
            bits[position] = true;
            active.push(position);
        }
    }
    Individual::from_bits(bits)
}

/// The fittest `k` individuals in rank order under the shared fitness
/// ordering (score first, then lexicographic bit pattern).
pub fn select_parents(report: &FitnessReport, k: usize) -> Result<Vec<Individual>, GaError> {
    if !k.is_multiple_of(2) || k < 2 || k > report.entries.len() {
        return Err(GaError::BadK {
            k,
            population: report.entries.len(),
        });
    }
    Ok(report
        .ranked()
        .into_iter()
        .take(k)
        .map(|(individual, _)| individual)
        .collect())
}

/// Assembles the next population: elites first, then offspring from
/// consecutive rank-order parent pairs (crossover, then mutate and repair
/// both children), cycling through the pairs until `size_p` is reached.
/// An offspring duplicating an already-included member is re-mutated up to
/// `retry_cap` times, then accepted as-is.
pub fn next_generation(
    parents: &[Individual],
    elites: &[Individual],
    quota: &Quota,
    layout: &ClassLayout,
    config: &GaConfig,
    seed: u64,
) -> Population {
    assert!(!parents.is_empty(), "parents must be nonempty");
    let mut individuals: Vec<Individual> = elites.to_vec();
    individuals.truncate(config.size_p);
    let mut seen: HashSet<Vec<bool>> = individuals.iter().map(|i| i.bits.clone()).collect();

    let pairs: Vec<(&Individual, &Individual)> = parents
        .chunks(2)
        .filter(|chunk| chunk.len() == 2)
        .map(|chunk| (&chunk[0], &chunk[1]))
        .collect();
    assert!(!pairs.is_empty(), "parent_count >= 2 guarantees one pair");

    let mut pair_counter = 0u64;
    let mut child_counter = 0u64;
    'fill: loop {
        for (p1, p2) in &pairs {
            if individuals.len() >= config.size_p {
                break 'fill;
            }
            let (c1, c2) = crossover(p1, p2, seeding::derive_seed(seed, &[TAG_CROSSOVER, pair_counter]))
                .expect("parents come from one pool and pools have at least 2 samples");
            pair_counter += 1;
            for raw in [c1, c2] {
                if individuals.len() >= config.size_p {
                    break 'fill;
                }
                let mut child = repair(
                    &mutate(
                        &raw,
                        quota,
                        layout,
                        config.mutation_prob,
                        seeding::derive_seed(seed, &[TAG_MUTATE, child_counter, 0]),
                    ),
                    quota,
                    layout,
                    seeding::derive_seed(seed, &[TAG_REPAIR, child_counter, 0]),
                );
                let mut attempt = 1u64;
                while seen.contains(&child.bits) && attempt <= config.retry_cap as u64 {
                    child = repair(
                        &mutate(
                            &child,
                            quota,
                            layout,
                            config.mutation_prob,
                            seeding::derive_seed(seed, &[TAG_MUTATE, child_counter, attempt]),
                        ),
                        quota,
                        layout,
                        seeding::derive_seed(seed, &[TAG_REPAIR, child_counter, attempt]),
                    );
                    attempt += 1;
                }
                seen.insert(child.bits.clone());
                individuals.push(child);
                child_counter += 1;
            }
        }
    }
    Population { individuals }
}

/// Runs the full genetic search.
///
/// Generation 0 comes from [`generate_population`]; each generation is
/// evaluated (scores cached by bit pattern across the whole run), the
/// running best is tracked under the shared fitness ordering, and the
/// search stops early as soon as any member reaches the configured
/// optimum. Otherwise selection and reproduction repeat for
/// `config.iterations` rounds and the global best is returned.
pub fn ga_search(
    pool: &LabeledDataset,
    test: &LabeledDataset,
    base: &TrainedModel,
    config: &GaConfig,
    seed: u64,
) -> Result<GaResult, GaError> {
    config.validate()?;
    let counts = class_counts(pool);
    let layout = ClassLayout::from_grouped(pool)?;
    let quota = class_quota(config.e_size, &counts);

    let mut cache = FitnessCache::new();
    let mut population =
        generate_population(pool, config, seeding::derive_seed(seed, &[TAG_GENERATE]))?;
    let mut champion: Option<(Individual, f64)> = None;
    let mut evaluations = 0usize;
    let mut generations_run = 0usize;
    let mut early_stopped = false;

    for generation in 0..=config.iterations {
        let report = evaluate_population_cached(
            pool,
            test,
            &population,
            base,
            config.score_type,
            seeding::derive_seed(seed, &[TAG_EVALUATE, generation as u64]),
            &mut cache,
        )?;
        evaluations += report.evaluations;
        generations_run = generation;

        for entry in &report.entries {
            let improves = match &champion {
                Some(best) => config.score_type.rank(entry, best) == std::cmp::Ordering::Less,
                None => true,
            };
            if improves {
                champion = Some(entry.clone());
            }
        }
        if report.entries.iter().any(|(_, s)| config.meets_optimum(*s)) {
            early_stopped = true;
            break;
        }
        if generation == config.iterations {
            break;
        }

        let parents = select_parents(&report, config.parent_count)?;
        let elites: Vec<Individual> = report
            .ranked()
            .into_iter()
            .take(config.elite_count)
            .map(|(individual, _)| individual)
            .collect();
        population = next_generation(
            &parents,
            &elites,
            &quota,
            &layout,
            config,
            seeding::derive_seed(seed, &[TAG_NEXT, generation as u64 + 1]),
        );
    }

    let (best, best_score) = champion.expect("at least one generation was evaluated");
    Ok(GaResult {
        best,
        best_score,
        generations_run,
        evaluations,
        early_stopped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{ClassifierSpec, LogisticParams, TrainedModel};
    use crate::dataset::{ClassLabel, Sample, Schema};
    use proptest::prelude::*;

    fn from_pattern(pattern: &str) -> Individual {
        Individual::from_bits(pattern.chars().map(|c| c == '1').collect())
    }

    fn quota_of(per_class: &[usize]) -> Quota {
        Quota { per_class: per_class.to_vec() }
    }

    fn single_segment_layout(len: usize) -> ClassLayout {
        let segments = std::iter::once(0..len).collect();
        ClassLayout { segments }
    }

    /// Pool grouped by class: `per_class[c]` samples of class c placed at
    /// distinct 1-d positions.
    fn grouped_pool(per_class: &[usize]) -> LabeledDataset {
        let labels = per_class
            .iter()
            .enumerate()
            .map(|(code, _)| ClassLabel {
                code: code as u16,
                name: format!("c{code}"),
            })
            .collect();
        let mut samples = Vec::new();
        for (code, &count) in per_class.iter().enumerate() {
            let center = if code == 0 { -2.0 } else { 2.0 };
            for i in 0..count {
                samples.push(Sample {
                    id: format!("c{code}_{i}"),
                    week: 0,
                    features: vec![center + 0.1 * i as f64],
                    label: code as u16,
                });
            }
        }
        LabeledDataset {
            schema: Schema::numbered(1),
            labels,
            samples,
        }
    }

    #[test]
    fn quota_splits_evenly_at_paper_scale() {
        assert_eq!(class_quota(80, &[266, 97]).per_class(), &[40, 40]);
    }

    #[test]
    fn quota_remainder_goes_to_lower_codes() {
        assert_eq!(class_quota(5, &[10, 10]).per_class(), &[3, 2]);
        assert_eq!(class_quota(7, &[10, 10, 10]).per_class(), &[3, 2, 2]);
    }

    #[test]
    fn quota_caps_and_redistributes() {
        assert_eq!(class_quota(80, &[100, 30]).per_class(), &[50, 30]);
        // pool smaller than the budget: quota covers the whole pool
        assert_eq!(class_quota(80, &[20, 10]).per_class(), &[20, 10]);
    }

    #[test]
    fn generation_is_quota_exact_and_distinct() {
        let pool = grouped_pool(&[4, 4]);
        let config = GaConfig { size_p: 3, ..GaConfig::defaults(4) };
        let population = generate_population(&pool, &config, 5).unwrap();
        assert_eq!(population.len(), 3);
        let layout = ClassLayout::from_grouped(&pool).unwrap();
        let mut seen = HashSet::new();
        for individual in &population.individuals {
            assert_eq!(individual.len(), 8);
            assert_eq!(individual.active_in(&layout.segment(0)), 2);
            assert_eq!(individual.active_in(&layout.segment(1)), 2);
            assert!(seen.insert(individual.bits().to_vec()));
        }
    }

    #[test]
    fn generation_exhausts_tiny_pools() {
        let pool = grouped_pool(&[2, 2]);
        let config = GaConfig { size_p: 2, ..GaConfig::defaults(4) };
        match generate_population(&pool, &config, 0) {
            Err(GaError::PopulationExhausted { feasible: 1, requested: 2 }) => {}
            other => panic!("expected PopulationExhausted, got {other:?}"),
        }
    }

    #[test]
    fn generation_at_experiment_scale() {
        let pool = grouped_pool(&[97, 266]);
        let population = generate_population(&pool, &GaConfig::defaults(80), 42).unwrap();
        assert_eq!(population.len(), 20);
        assert!(population
            .individuals
            .iter()
            .all(|i| i.active_count() == 80));
    }

    #[test]
    fn crossover_splices_at_the_crosspoint() {
        let p1 = from_pattern("110010");
        let p2 = from_pattern("001101");
        let (c1, c2) = crossover_at(&p1, &p2, 3);
        assert_eq!(c1.pattern(), "110101");
        assert_eq!(c2.pattern(), "001010");
    }

    #[test]
    fn crossover_of_identical_parents_returns_parents() {
        let p = from_pattern("10101");
        let (c1, c2) = crossover(&p, &p, 99).unwrap();
        assert_eq!(c1, p);
        assert_eq!(c2, p);
    }

    #[test]
    fn crossover_rejects_degenerate_lengths() {
        assert!(matches!(
            crossover(&from_pattern("1"), &from_pattern("0"), 0),
            Err(GaError::LengthMismatch { .. })
        ));
        assert!(matches!(
            crossover(&from_pattern("10"), &from_pattern("101"), 0),
            Err(GaError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn crossover_draws_interior_crosspoints() {
        let p1 = from_pattern("111111");
        let p2 = from_pattern("000000");
        for seed in 0..50 {
            let (c1, _) = crossover(&p1, &p2, seed).unwrap();
            let ones = c1.active_count();
            assert!((1..=5).contains(&ones), "crosspoint escaped interior: {}", c1.pattern());
        }
    }

    #[test]
    fn mutation_with_zero_probability_is_identity() {
        let child = from_pattern("110010");
        let out = mutate(&child, &quota_of(&[3]), &single_segment_layout(6), 0.0, 7);
        assert_eq!(out, child);
    }

    // traced from the running-count rule: every 1 flips to 0, and each
    // flip lowers the count so no 0 can come back up
    #[test]
    fn mutation_prob_one_drains_a_full_segment() {
        let child = from_pattern("111");
        let out = mutate(&child, &quota_of(&[2]), &single_segment_layout(3), 1.0, 3);
        assert_eq!(out.pattern(), "000");
    }

    // traced: first 0 flips up (count 0 < 1), second is suppressed at count 1
    #[test]
    fn mutation_prob_one_respects_running_quota() {
        let child = from_pattern("00");
        let out = mutate(&child, &quota_of(&[1]), &single_segment_layout(2), 1.0, 3);
        assert_eq!(out.pattern(), "10");
    }

    #[test]
    fn mutation_is_deterministic_per_seed() {
        let child = from_pattern("1010011100");
        let quota = quota_of(&[2, 3]);
        let layout = ClassLayout { segments: vec![0..4, 4..10] };
        let a = mutate(&child, &quota, &layout, 0.5, 11);
        let b = mutate(&child, &quota, &layout, 0.5, 11);
        assert_eq!(a, b);
    }

    #[test]
    fn repair_trims_overfull_segments_to_a_subset() {
        let child = from_pattern("1110");
        let out = repair(&child, &quota_of(&[2]), &single_segment_layout(4), 5);
        assert_eq!(out.active_count(), 2);
        assert!(out
            .active_indices()
            .iter()
            .all(|&i| child.bits()[i]), "repair must deactivate, not move");
    }

    #[test]
    fn repair_leaves_feasible_children_unchanged() {
        let child = from_pattern("1100");
        let out = repair(&child, &quota_of(&[2]), &single_segment_layout(4), 5);
        assert_eq!(out, child);
    }

    #[test]
    fn repair_fills_empty_segments() {
        let child = from_pattern("0000");
        let out = repair(&child, &quota_of(&[2]), &single_segment_layout(4), 5);
        assert_eq!(out.active_count(), 2);
    }

    fn report_from(entries: Vec<(Individual, f64)>, score_type: ScoreType) -> FitnessReport {
        FitnessReport { entries, score_type, evaluations: 0 }
    }

    #[test]
    fn selection_takes_top_k_by_accuracy() {
        let a = from_pattern("1000");
        let b = from_pattern("0100");
        let c = from_pattern("0010");
        let d = from_pattern("0001");
        let report = report_from(
            vec![(a.clone(), 0.9), (b, 0.7), (c.clone(), 0.8), (d, 0.6)],
            ScoreType::Accuracy,
        );
        assert_eq!(select_parents(&report, 2).unwrap(), vec![a, c]);
    }

    #[test]
    fn selection_prefers_lower_loss() {
        let a = from_pattern("10");
        let b = from_pattern("01");
        let report = report_from(vec![(a.clone(), 0.2), (b.clone(), 0.1)], ScoreType::Loss);
        assert_eq!(select_parents(&report, 2).unwrap(), vec![b, a]);
    }

    #[test]
    fn selection_breaks_ties_lexicographically() {
        let a = from_pattern("10");
        let b = from_pattern("01");
        let report = report_from(vec![(a.clone(), 0.5), (b.clone(), 0.5)], ScoreType::Accuracy);
        // "01" < "10" lexicographically
        assert_eq!(select_parents(&report, 2).unwrap(), vec![b, a]);
    }

    #[test]
    fn selection_rejects_bad_k() {
        let report = report_from(
            vec![(from_pattern("1"), 0.5), (from_pattern("0"), 0.4)],
            ScoreType::Accuracy,
        );
        assert!(matches!(select_parents(&report, 3), Err(GaError::BadK { .. })));
        assert!(matches!(select_parents(&report, 4), Err(GaError::BadK { .. })));
        assert!(matches!(select_parents(&report, 0), Err(GaError::BadK { .. })));
    }

    #[test]
    fn next_generation_keeps_elites_and_fills_with_offspring() {
        let pool = grouped_pool(&[6, 6]);
        let layout = ClassLayout::from_grouped(&pool).unwrap();
        let quota = class_quota(4, &class_counts(&pool));
        let config = GaConfig {
            size_p: 6,
            elite_count: 2,
            parent_count: 4,
            ..GaConfig::defaults(4)
        };
        let base = generate_population(&pool, &config, 3).unwrap();
        let parents: Vec<Individual> = base.individuals[..4].to_vec();
        let elites: Vec<Individual> = base.individuals[..2].to_vec();
        let next = next_generation(&parents, &elites, &quota, &layout, &config, 9);
        assert_eq!(next.len(), 6);
        assert_eq!(next.individuals[0], elites[0]);
        assert_eq!(next.individuals[1], elites[1]);
        for individual in &next.individuals {
            assert_eq!(individual.active_in(&layout.segment(0)), 2);
            assert_eq!(individual.active_in(&layout.segment(1)), 2);
        }
    }

    #[test]
    fn next_generation_accepts_collapse_after_retries() {
        let pool = grouped_pool(&[2, 2]);
        let layout = ClassLayout::from_grouped(&pool).unwrap();
        let quota = class_quota(4, &class_counts(&pool));
        let config = GaConfig {
            size_p: 4,
            elite_count: 0,
            parent_count: 2,
            mutation_prob: 0.0,
            retry_cap: 3,
            ..GaConfig::defaults(4)
        };
        // only one feasible pattern exists; all offspring collapse to it
        let only = from_pattern("1111");
        let next = next_generation(
            &[only.clone(), only.clone()],
            &[],
            &quota,
            &layout,
            &config,
            1,
        );
        assert_eq!(next.len(), 4);
        assert!(next.individuals.iter().all(|i| *i == only));
    }

    fn logistic_base() -> TrainedModel {
        TrainedModel::new(ClassifierSpec::LogisticRegression(LogisticParams::default()))
    }

    #[test]
    fn ga_search_is_deterministic() {
        let pool = grouped_pool(&[6, 6]);
        let test = grouped_pool(&[3, 3]);
        let config = GaConfig {
            size_p: 6,
            iterations: 3,
            parent_count: 4,
            ..GaConfig::defaults(4)
        };
        let a = ga_search(&pool, &test, &logistic_base(), &config, 77).unwrap();
        let b = ga_search(&pool, &test, &logistic_base(), &config, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ga_search_stops_early_when_optimum_is_met() {
        let pool = grouped_pool(&[6, 6]);
        let test = grouped_pool(&[3, 3]);
        let config = GaConfig {
            size_p: 6,
            iterations: 5,
            parent_count: 4,
            optimum_accuracy: 0.0, // any member qualifies immediately
            ..GaConfig::defaults(4)
        };
        let result = ga_search(&pool, &test, &logistic_base(), &config, 5).unwrap();
        assert!(result.early_stopped);
        assert_eq!(result.generations_run, 0);
        assert_eq!(result.evaluations, 6);
    }

    #[test]
    fn ga_search_evaluation_budget_is_bounded() {
        let pool = grouped_pool(&[10, 8]);
        let test = grouped_pool(&[4, 4]);
        let config = GaConfig {
            size_p: 6,
            iterations: 4,
            parent_count: 4,
            optimum_accuracy: 2.0, // unreachable, so the loop never shortcuts
            ..GaConfig::defaults(6)
        };
        let result = ga_search(&pool, &test, &logistic_base(), &config, 13).unwrap();
        assert!(!result.early_stopped);
        assert_eq!(result.generations_run, 4);
        assert!(result.evaluations <= 6 * 5, "evaluations {}", result.evaluations);
    }

    #[test]
    fn ga_best_is_non_worsening_as_iterations_grow() {
        let pool = grouped_pool(&[8, 8]);
        let test = grouped_pool(&[4, 4]);
        let mut previous: Option<f64> = None;
        for iterations in [0usize, 1, 2, 4] {
            let config = GaConfig {
                size_p: 6,
                iterations,
                parent_count: 4,
                optimum_accuracy: 2.0,
                score_type: ScoreType::Loss,
                optimum_loss: -1.0,
                ..GaConfig::defaults(4)
            };
            let result = ga_search(&pool, &test, &logistic_base(), &config, 21).unwrap();
            if let Some(prev) = previous {
                assert!(result.best_score <= prev, "loss worsened: {prev} -> {}", result.best_score);
            }
            previous = Some(result.best_score);
        }
    }

    /// Exhaustive oracle over all quota-exact subsets of a 6+6 pool.
    fn brute_force_best_accuracy(
        pool: &LabeledDataset,
        test: &LabeledDataset,
        base: &TrainedModel,
    ) -> f64 {
        let layout = ClassLayout::from_grouped(pool).unwrap();
        let seg0 = layout.segment(0);
        let seg1 = layout.segment(1);
        let test_rows = test.feature_rows();
        let truth = test.label_codes();
        let mut best = f64::NEG_INFINITY;
        let pairs = |seg: Range<usize>| -> Vec<(usize, usize)> {
            let v: Vec<usize> = seg.collect();
            let mut out = Vec::new();
            for i in 0..v.len() {
                for j in (i + 1)..v.len() {
                    out.push((v[i], v[j]));
                }
            }
            out
        };
        for &(a, b) in &pairs(seg0.clone()) {
            for &(c, d) in &pairs(seg1.clone()) {
                let mut bits = vec![false; pool.len()];
                for i in [a, b, c, d] {
                    bits[i] = true;
                }
                let subset = Individual::from_bits(bits).materialize(pool);
                let model = base.clone().fit(&subset, 0).unwrap();
                let acc = crate::evaluation::compute_accuracy(
                    &model.predict_label(&test_rows).unwrap(),
                    &truth,
                )
                .unwrap();
                if acc > best {
                    best = acc;
                }
            }
        }
        best
    }

    #[test]
    fn ga_matches_brute_force_on_a_tiny_pool() {
        // overlapping classes so subset choice actually matters
        let mut pool = grouped_pool(&[6, 6]);
        for (i, sample) in pool.samples.iter_mut().enumerate() {
            let sign = if sample.label == 0 { -1.0 } else { 1.0 };
            sample.features = vec![sign * 0.4 + 0.37 * ((i * 7 % 11) as f64 - 5.0)];
        }
        let test = {
            let mut t = grouped_pool(&[6, 6]);
            for (i, sample) in t.samples.iter_mut().enumerate() {
                let sign = if sample.label == 0 { -1.0 } else { 1.0 };
                sample.features = vec![sign * 0.4 + 0.29 * ((i * 5 % 13) as f64 - 6.0)];
            }
            t
        };
        let base = logistic_base();
        let oracle = brute_force_best_accuracy(&pool, &test, &base);
        let config = GaConfig {
            size_p: 10,
            iterations: 20,
            parent_count: 4,
            mutation_prob: 0.1,
            ..GaConfig::defaults(4)
        };
        let result = ga_search(&pool, &test, &base, &config, 123).unwrap();
        assert!(
            (result.best_score - oracle).abs() <= 1e-9,
            "ga {} vs oracle {oracle}",
            result.best_score
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        /// Feasibility fuzz: generate, cross, mutate, repair never breaks
        /// quotas or the capacity bound.
        #[test]
        fn operator_cycle_preserves_feasibility(
            count0 in 2usize..12,
            count1 in 2usize..12,
            e_size in 2usize..10,
            prob in 0.0f64..1.0,
            seed in 0u64..10_000,
        ) {
            let pool = grouped_pool(&[count0, count1]);
            let counts = class_counts(&pool);
            let quota = class_quota(e_size, &counts);
            let layout = ClassLayout::from_grouped(&pool).unwrap();
            let config = GaConfig {
                size_p: 2,
                mutation_prob: prob,
                ..GaConfig::defaults(e_size)
            };
            prop_assume!(feasible_count(&counts, &quota) >= 2);
            let population = generate_population(&pool, &config, seed).unwrap();
            let (c1, c2) = crossover(&population.individuals[0], &population.individuals[1], seed ^ 1).unwrap();
            for child in [c1, c2] {
                let mutated = mutate(&child, &quota, &layout, prob, seed ^ 2);
                let repaired = repair(&mutated, &quota, &layout, seed ^ 3);
                prop_assert!(repaired.active_count() <= e_size);
                for code in 0..layout.n_classes() {
                    prop_assert_eq!(
                        repaired.active_in(&layout.segment(code)),
                        quota.class(code).min(layout.segment(code).len())
                    );
                }
            }
        }

        /// Splice conservation: crossover moves markers, never creates or
        /// destroys them (summed over both children).
        #[test]
        fn crossover_conserves_total_markers(
            bits1 in proptest::collection::vec(any::<bool>(), 2..40),
            seed in 0u64..1000,
        ) {
            let bits2: Vec<bool> = bits1.iter().map(|b| !b).collect();
            let p1 = Individual::from_bits(bits1);
            let p2 = Individual::from_bits(bits2);
            let total_before = p1.active_count() + p2.active_count();
            let (c1, c2) = crossover(&p1, &p2, seed).unwrap();
            prop_assert_eq!(c1.active_count() + c2.active_count(), total_before);
        }
    }
}
