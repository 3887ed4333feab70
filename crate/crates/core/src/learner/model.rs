use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::acquisition::ProbabilityVector;
use crate::error::{Error, Result};

/// Desk-scale classifier families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    /// Multinomial logistic regression.
    Logistic,
    /// One hidden ReLU layer of the given width.
    Mlp { hidden: usize },
}

impl Architecture {
    pub fn hidden(self) -> usize {
        match self {
            Architecture::Logistic => 0,
            Architecture::Mlp { hidden } => hidden,
        }
    }

    pub fn param_count(self, dim: usize, classes: usize) -> usize {
        match self {
            Architecture::Logistic => classes * dim + classes,
            Architecture::Mlp { hidden } => hidden * dim + hidden + classes * hidden + classes,
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Architecture::Logistic => f.write_str("logistic"),
            Architecture::Mlp { hidden } => write!(f, "mlp-{hidden}"),
        }
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "logistic" {
            return Ok(Architecture::Logistic);
        }
        s.strip_prefix("mlp-")
            .and_then(|h| h.parse().ok())
            .filter(|&h| h > 0)
            .map(|hidden| Architecture::Mlp { hidden })
            .ok_or_else(|| Error::Config(format!("unknown architecture `{s}` (logistic | mlp-H)")))
    }
}

/// Flat parameter vector of a classifier.
///
/// Layout, row-major: logistic is `W[K×D], b[K]`; the MLP is
/// `W1[H×D], b1[H], W2[K×H], b2[K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: Architecture,
    pub dim: usize,
    pub classes: usize,
    pub weights: Vec<f64>,
}

/// Reusable buffers for forward/backward passes.
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    hidden: Vec<f64>,
    logits: Vec<f64>,
    delta_hidden: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(arch: Architecture, dim: usize, classes: usize) -> Self {
        Self { arch, dim, classes, weights: vec![0.0; arch.param_count(dim, classes)] }
    }

    /// Gaussian weights scaled by `1/sqrt(fan_in)`, zero biases.
    pub fn init<R: Rng>(arch: Architecture, dim: usize, classes: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch, dim, classes);
        let mut fill = |slice: &mut [f64], fan_in: usize| {
            let scale = 1.0 / (fan_in as f64).sqrt();
            for w in slice {
                *w = rng.sample::<f64, _>(StandardNormal) * scale;
            }
        };
        match arch {
            Architecture::Logistic => fill(&mut p.weights[..classes * dim], dim),
            Architecture::Mlp { hidden } => {
                let w2 = hidden * dim + hidden;
                fill(&mut p.weights[..hidden * dim], dim);
                fill(&mut p.weights[w2..w2 + classes * hidden], hidden);
            }
        }
        p
    }

    pub fn from_weights(
        arch: Architecture,
        dim: usize,
        classes: usize,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let expected = arch.param_count(dim, classes);
        if weights.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{arch} with D={dim}, K={classes} needs {expected} weights, got {}",
                weights.len()
            )));
        }
        Ok(Self { arch, dim, classes, weights })
    }

    pub fn check_input(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "model expects {} features, got {}",
                self.dim,
                features.len()
            )));
        }
        Ok(())
    }

    /// Writes logits into `scratch.logits`.
    fn forward(&self, x: &[f64], scratch: &mut Scratch) {
        let (d, k) = (self.dim, self.classes);
        scratch.logits.clear();
        scratch.logits.resize(k, 0.0);
        match self.arch {
            Architecture::Logistic => {
                let (w, b) = self.weights.split_at(k * d);
                for c in 0..k {
                    scratch.logits[c] = b[c] + dot(&w[c * d..(c + 1) * d], x);
                }
            }
            Architecture::Mlp { hidden: h } => {
                let (w1, rest) = self.weights.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(k * h);
                scratch.hidden.clear();
                scratch
                    .hidden
                    .extend((0..h).map(|j| (b1[j] + dot(&w1[j * d..(j + 1) * d], x)).max(0.0)));
                for c in 0..k {
                    scratch.logits[c] = b2[c] + dot(&w2[c * h..(c + 1) * h], &scratch.hidden);
                }
            }
        }
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut scratch = Scratch::default();
        self.forward(x, &mut scratch);
        Ok(scratch.logits)
    }

    /// Softmax class probabilities for one feature vector.
    pub fn predict_proba(&self, x: &[f64]) -> Result<ProbabilityVector> {
        let mut logits = self.logits(x)?;
        softmax_in_place(&mut logits);
        ProbabilityVector::new(logits)
    }

    pub(crate) fn proba_into(&self, x: &[f64], scratch: &mut Scratch) -> Vec<f64> {
        self.forward(x, scratch);
        let mut p = scratch.logits.clone();
        softmax_in_place(&mut p);
        p
    }

    /// Adds `weight · ∂CE/∂θ` for one sample to `grad` and returns the
    /// unweighted cross-entropy.
    pub(crate) fn accumulate_gradient(
        &self,
        x: &[f64],
        label: usize,
        weight: f64,
        grad: &mut [f64],
        scratch: &mut Scratch,
    ) -> f64 {
        let (d, k) = (self.dim, self.classes);
        self.forward(x, scratch);
        let loss = log_sum_exp(&scratch.logits) - scratch.logits[label];
        // logits now become dCE/dlogits = softmax - onehot
        softmax_in_place(&mut scratch.logits);
        scratch.logits[label] -= 1.0;
        match self.arch {
            Architecture::Logistic => {
                let (gw, gb) = grad.split_at_mut(k * d);
                for c in 0..k {
                    let g = weight * scratch.logits[c];
                    gb[c] += g;
                    axpy(g, x, &mut gw[c * d..(c + 1) * d]);
                }
            }
            Architecture::Mlp { hidden: h } => {
                let w2 = &self.weights[h * d + h..h * d + h + k * h];
                let (gw1, rest) = grad.split_at_mut(h * d);
                let (gb1, rest) = rest.split_at_mut(h);
                let (gw2, gb2) = rest.split_at_mut(k * h);
                scratch.delta_hidden.clear();
                scratch.delta_hidden.resize(h, 0.0);
                for c in 0..k {
                    let g = weight * scratch.logits[c];
                    gb2[c] += g;
                    axpy(g, &scratch.hidden, &mut gw2[c * h..(c + 1) * h]);
                    axpy(g, &w2[c * h..(c + 1) * h], &mut scratch.delta_hidden);
                }
                for j in 0..h {
                    // ReLU gate: zero activation means zero local gradient
                    if scratch.hidden[j] > 0.0 {
                        let g = scratch.delta_hidden[j];
                        gb1[j] += g;
                        axpy(g, x, &mut gw1[j * d..(j + 1) * d]);
                    }
                }
            }
        }
        loss
    }

    pub(crate) fn cross_entropy(&self, x: &[f64], label: usize, scratch: &mut Scratch) -> f64 {
        self.forward(x, scratch);
        log_sum_exp(&scratch.logits) - scratch.logits[label]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_model_predicts_uniform() {
        for arch in [Architecture::Logistic, Architecture::Mlp { hidden: 5 }] {
            let p = ModelParams::zeros(arch, 3, 4).predict_proba(&[1.0, -2.0, 0.5]).unwrap();
            for &v in p.as_slice() {
                assert_abs_diff_eq!(v, 0.25, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn closed_form_two_class_logistic() {
        // w·x = ln 3 for class 0, 0 for class 1 => sigmoid(ln 3) = 3/4
        let w = vec![3f64.ln(), 0.0, 0.0, 0.0, 0.0, 0.0];
        let m = ModelParams::from_weights(Architecture::Logistic, 2, 2, w).unwrap();
        let p = m.predict_proba(&[1.0, 7.0]).unwrap();
        assert_abs_diff_eq!(p.as_slice()[0], 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(p.as_slice()[1], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn logit_shift_leaves_output_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = ModelParams::init(Architecture::Logistic, 4, 3, &mut rng);
        let x = [0.3, -1.0, 2.0, 0.1];
        let before = m.predict_proba(&x).unwrap();
        let mut shifted = m.clone();
        // shifting all biases shifts all logits by the same constant
        let k_d = 3 * 4;
        shifted.weights[k_d..].iter_mut().for_each(|b| *b += 17.5);
        let after = shifted.predict_proba(&x).unwrap();
        for (a, b) in before.as_slice().iter().zip(after.as_slice()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn shape_mismatches_are_errors() {
        let m = ModelParams::zeros(Architecture::Logistic, 3, 2);
        assert!(m.predict_proba(&[1.0]).is_err());
        assert!(ModelParams::from_weights(Architecture::Logistic, 3, 2, vec![0.0; 5]).is_err());
    }

    #[test]
    fn architecture_names() {
        assert_eq!("logistic".parse::<Architecture>().unwrap(), Architecture::Logistic);
        assert_eq!("mlp-32".parse::<Architecture>().unwrap(), Architecture::Mlp { hidden: 32 });
        assert!("mlp-0".parse::<Architecture>().is_err());
        assert!("cnn".parse::<Architecture>().is_err());
        assert_eq!(Architecture::Mlp { hidden: 8 }.to_string(), "mlp-8");
    }

    #[test]
    fn extreme_logits_stay_normalized() {
        let w = vec![800.0, -800.0, 0.0, 0.0];
        let m = ModelParams::from_weights(Architecture::Logistic, 1, 2, w).unwrap();
        let p = m.predict_proba(&[1.0]).unwrap();
        assert_eq!(p.argmax(), 0);
        assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
