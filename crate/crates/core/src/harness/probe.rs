//! Linear probe used to score learned representations on the label task.

use crate::error::{Error, Result};
use crate::model::sigmoid;

const PROBE_ITERS: usize = 500;
const PROBE_LR: f64 = 0.5;
const PROBE_L2: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticProbe {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticProbe {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let s: f64 = self.weights.iter().zip(x).map(|(w, v)| w * v).sum();
        sigmoid(s + self.bias)
    }
}

/// Full-batch gradient descent on L2-regularized logistic loss from zero
/// weights; deterministic for a given input.
pub fn fit_logistic_probe(features: &[Vec<f64>], labels: &[u8]) -> Result<LogisticProbe> {
    if features.len() != labels.len() {
        return Err(Error::LengthMismatch(features.len(), labels.len()));
    }
    let dim = features.first().ok_or(Error::EmptyBatch)?.len();
    let n = features.len() as f64;
    let mut probe = LogisticProbe {
        weights: vec![0.0; dim],
        bias: 0.0,
    };
    for _ in 0..PROBE_ITERS {
        let mut gw = vec![0.0; dim];
        let mut gb = 0.0;
        for (x, &y) in features.iter().zip(labels) {
            let r = probe.predict(x) - f64::from(y);
            for (g, v) in gw.iter_mut().zip(x) {
                *g += r * v;
            }
            gb += r;
        }
        for (w, g) in probe.weights.iter_mut().zip(&gw) {
            *w -= PROBE_LR * (g / n + PROBE_L2 * *w);
        }
        probe.bias -= PROBE_LR * gb / n;
    }
    Ok(probe)
}
