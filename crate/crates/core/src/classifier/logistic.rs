//! Binary logistic regression trained by full-batch gradient descent.
//!
//! Features are standardized per fit with training-set mean and variance.
//! The optimization starts from zero weights and runs a fixed number of
//! epochs, so the fitted state is a deterministic function of the data
//! alone; no seed is consumed.

use super::LogisticParams;

#[derive(Debug, Clone)]
pub(super) struct Fitted {
    weights: Vec<f64>,
    bias: f64,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Training loss and its gradient at `(weights, bias)`.
///
/// The loss is the mean binary cross-entropy over `rows`/`targets`
/// (targets in {0,1}) plus an L2 penalty `l2/2 * ||weights||^2`; the bias
/// is not regularized. Returns `(loss, weight_gradient, bias_gradient)`.
pub fn loss_and_grad(
    weights: &[f64],
    bias: f64,
    rows: &[Vec<f64>],
    targets: &[f64],
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = rows.len() as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for (row, &y) in rows.iter().zip(targets) {
        let z = bias + row.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>();
        // cross-entropy: softplus(-z) + (1-y) z, gradient wrt z: sigma(z) - y
        loss += softplus(-z) + (1.0 - y) * z;
        let delta = sigmoid(z) - y;
        for (g, x) in grad_w.iter_mut().zip(row) {
            *g += delta * x;
        }
        grad_b += delta;
    }
    loss /= n;
    grad_b /= n;
    for (g, w) in grad_w.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    loss += 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    (loss, grad_w, grad_b)
}

pub(super) fn fit(params: &LogisticParams, rows: &[Vec<f64>], codes: &[u16]) -> Fitted {
    let arity = rows.first().map_or(0, Vec::len);
    let n = rows.len() as f64;

    let mut mean = vec![0.0; arity];
    for row in rows {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var = vec![0.0; arity];
    for row in rows {
        for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|v| {
            let s = (v / n).sqrt();
            if s < 1e-9 {
                1.0
            } else {
                s
            }
        })
        .collect();

    let standardized: Vec<Vec<f64>> = rows
        .iter()
        .map(|row| {
            row.iter()
                .zip(&mean)
                .zip(&scale)
                .map(|((x, m), s)| (x - m) / s)
                .collect()
        })
        .collect();
    // class code 1 is the positive class
    let targets: Vec<f64> = codes.iter().map(|&c| if c == 1 { 1.0 } else { 0.0 }).collect();

    let mut weights = vec![0.0; arity];
    let mut bias = 0.0;
    for _ in 0..params.epochs {
        let (_, grad_w, grad_b) = loss_and_grad(&weights, bias, &standardized, &targets, params.l2);
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= params.learning_rate * g;
        }
        bias -= params.learning_rate * grad_b;
    }

    Fitted {
        weights,
        bias,
        mean,
        scale,
    }
}

impl Fitted {
    /// Probability of the positive class (code 1) for a raw feature row.
    pub(super) fn prob_positive(&self, row: &[f64]) -> f64 {
        let z = self.bias
            + row
                .iter()
                .zip(&self.mean)
                .zip(&self.scale)
                .zip(&self.weights)
                .map(|(((x, m), s), w)| (x - m) / s * w)
                .sum::<f64>();
        sigmoid(z)
    }
}
