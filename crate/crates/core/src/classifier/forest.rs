//! Random forest of Gini decision trees over bootstrap resamples.
//!
//! Each tree draws its own bootstrap of the training rows and considers
//! `ceil(sqrt(m))` randomly chosen features per split. Trees cast hard
//! votes; the forest probability for a class is its vote fraction.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::ForestParams;
use crate::seeding;

#[derive(Debug, Clone)]
enum Node {
    Leaf { class: u16 },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

#[derive(Debug, Clone)]
pub(super) struct Fitted {
    trees: Vec<Node>,
    n_classes: usize,
}

struct TreeBuilder<'a> {
    rows: &'a [Vec<f64>],
    codes: &'a [u16],
    n_classes: usize,
    features_per_split: usize,
    arity: usize,
    params: &'a ForestParams,
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / t;
            p * p
        })
        .sum::<f64>()
}

fn majority(counts: &[usize]) -> u16 {
    let mut best = 0usize;
    for (i, c) in counts.iter().enumerate().skip(1) {
        if *c > counts[best] {
            best = i;
        }
    }
    best as u16
}

impl TreeBuilder<'_> {
    fn class_counts(&self, indices: &[usize]) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes];
        for &i in indices {
            counts[self.codes[i] as usize] += 1;
        }
        counts
    }

    fn build(&self, indices: &[usize], depth: usize, rng: &mut ChaCha8Rng) -> Node {
        let counts = self.class_counts(indices);
        let node_gini = gini(&counts, indices.len());
        if depth >= self.params.max_depth
            || node_gini == 0.0
            || indices.len() < 2 * self.params.min_leaf
        {
            return Node::Leaf { class: majority(&counts) };
        }

        let mut candidates: Vec<usize> =
            rand::seq::index::sample(rng, self.arity, self.features_per_split).into_vec();
        candidates.sort_unstable();

        let mut best: Option<(f64, usize, f64)> = None; // (weighted gini, feature, threshold)
        for &feature in &candidates {
            let mut ordered: Vec<(f64, u16)> = indices
                .iter()
                .map(|&i| (self.rows[i][feature], self.codes[i]))
                .collect();
            ordered.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

            let total = ordered.len();
            let mut left_counts = vec![0usize; self.n_classes];
            let mut right_counts = self.class_counts(indices);
            for cut in 1..total {
                let (value, code) = ordered[cut - 1];
                left_counts[code as usize] += 1;
                right_counts[code as usize] -= 1;
                let next = ordered[cut].0;
                if next == value {
                    continue;
                }
                if cut < self.params.min_leaf || total - cut < self.params.min_leaf {
                    continue;
                }
                let weighted = (cut as f64 * gini(&left_counts, cut)
                    + (total - cut) as f64 * gini(&right_counts, total - cut))
                    / total as f64;
                if best.is_none_or(|(score, _, _)| weighted < score) {
                    best = Some((weighted, feature, (value + next) / 2.0));
                }
            }
        }

        let Some((_, feature, threshold)) = best else {
            return Node::Leaf { class: majority(&counts) };
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| self.rows[i][feature] <= threshold);
        Node::Split {
            feature,
            threshold,
            left: Box::new(self.build(&left_idx, depth + 1, rng)),
            right: Box::new(self.build(&right_idx, depth + 1, rng)),
        }
    }
}

pub(super) fn fit(
    params: &ForestParams,
    rows: &[Vec<f64>],
    codes: &[u16],
    n_classes: usize,
    arity: usize,
    seed: u64,
) -> Fitted {
    let builder = TreeBuilder {
        rows,
        codes,
        n_classes,
        features_per_split: (arity as f64).sqrt().ceil() as usize,
        arity,
        params,
    };
    let n = rows.len();
    let trees = (0..params.n_trees)
        .map(|t| {
            let mut rng = seeding::rng(seed, &[t as u64]);
            let bootstrap: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            builder.build(&bootstrap, 0, &mut rng)
        })
        .collect();
    Fitted { trees, n_classes }
}

fn route(node: &Node, row: &[f64]) -> u16 {
    match node {
        Node::Leaf { class } => *class,
        Node::Split { feature, threshold, left, right } => {
            if row[*feature] <= *threshold {
                route(left, row)
            } else {
                route(right, row)
            }
        }
    }
}

/// Per-class vote fractions: exactly `votes_for_class / vote_count`.
pub(super) fn fractions_from_votes(votes: &[u16], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for &v in votes {
        counts[v as usize] += 1;
    }
    counts
        .iter()
        .map(|&c| c as f64 / votes.len() as f64)
        .collect()
}

impl Fitted {
    pub(super) fn vote_fractions(&self, row: &[f64]) -> Vec<f64> {
        let votes: Vec<u16> = self.trees.iter().map(|t| route(t, row)).collect();
        fractions_from_votes(&votes, self.n_classes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor_rows() -> (Vec<Vec<f64>>, Vec<u16>) {
        // not linearly separable; trees must split on both features
        let rows = vec![
            vec![0.0, 0.0],
            vec![0.1, 0.1],
            vec![1.0, 1.0],
            vec![0.9, 0.9],
            vec![0.0, 1.0],
            vec![0.1, 0.9],
            vec![1.0, 0.0],
            vec![0.9, 0.1],
        ];
        let codes = vec![0, 0, 0, 0, 1, 1, 1, 1];
        (rows, codes)
    }

    #[test]
    fn forest_learns_xor() {
        let (rows, codes) = xor_rows();
        let fitted = fit(&ForestParams::default(), &rows, &codes, 2, 2, 17);
        for (row, code) in rows.iter().zip(&codes) {
            let fractions = fitted.vote_fractions(row);
            assert!(
                fractions[*code as usize] > 0.5,
                "row {row:?} got {fractions:?}"
            );
        }
    }

    #[test]
    fn vote_fractions_sum_to_one_and_quantize() {
        let (rows, codes) = xor_rows();
        let params = ForestParams { n_trees: 10, ..ForestParams::default() };
        let fitted = fit(&params, &rows, &codes, 2, 2, 3);
        let fractions = fitted.vote_fractions(&[0.5, 0.4]);
        assert!((fractions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for f in fractions {
            let tenths = f * 10.0;
            assert!((tenths - tenths.round()).abs() < 1e-12, "not a vote fraction: {f}");
        }
    }

    #[test]
    fn equal_seeds_build_equal_forests() {
        let (rows, codes) = xor_rows();
        let a = fit(&ForestParams::default(), &rows, &codes, 2, 2, 5);
        let b = fit(&ForestParams::default(), &rows, &codes, 2, 2, 5);
        let probe = vec![0.42, 0.58];
        assert_eq!(a.vote_fractions(&probe), b.vote_fractions(&probe));
    }

    #[test]
    fn depth_limit_is_respected() {
        fn depth(node: &Node) -> usize {
            match node {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + depth(left).max(depth(right)),
            }
        }
        let (rows, codes) = xor_rows();
        let params = ForestParams { max_depth: 2, ..ForestParams::default() };
        let fitted = fit(&params, &rows, &codes, 2, 2, 11);
        assert!(fitted.trees.iter().all(|t| depth(t) <= 2));
    }
}
