//! Ensemble predictive distributions and acquisition functions.
//!
//! All scores are in nats. The predictive distribution of an ensemble is the
//! member-wise mean of its softmax outputs; the functions here rank samples by
//! how uncertain that ensemble is about them:
//!
//! * entropy: total predictive uncertainty, `H(mean)`.
//! * mutual information: `H(mean) - mean_e H(p_e)`, the part of the predictive
//!   uncertainty that comes from members disagreeing with each other.
//! * variation ratios: fraction of members whose top-1 class is not the
//!   majority vote.
//! * error count: fraction of members whose top-1 class is not the label.

mod detection;
mod tensor;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool::SampleId;

pub use detection::{detection_image_score, DetectionHeatmapSet, DetectionScore, Heatmap};
pub use tensor::PredictionTensor;

/// Allowed deviation of a probability vector's sum from 1.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;
/// Floor applied to probabilities inside logarithms.
pub const LOG_FLOOR: f64 = 1e-12;
/// Negative mutual information down to this magnitude is rounding noise and clamps to 0.
pub const MUTUAL_INFORMATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionFunction {
    Entropy,
    MutualInformation,
    VariationRatios,
    ErrorCount,
    Random,
}

impl AcquisitionFunction {
    pub const ALL: [AcquisitionFunction; 5] = [
        AcquisitionFunction::Entropy,
        AcquisitionFunction::MutualInformation,
        AcquisitionFunction::VariationRatios,
        AcquisitionFunction::ErrorCount,
        AcquisitionFunction::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AcquisitionFunction::Entropy => "entropy",
            AcquisitionFunction::MutualInformation => "mutual_information",
            AcquisitionFunction::VariationRatios => "variation_ratios",
            AcquisitionFunction::ErrorCount => "error_count",
            AcquisitionFunction::Random => "random",
        }
    }
}

impl fmt::Display for AcquisitionFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AcquisitionFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown acquisition function `{s}`")))
    }
}

/// Checks that `p` is a probability vector: finite entries in `[0, 1]`
/// summing to 1 within [`NORMALIZATION_TOLERANCE`].
pub fn validate_distribution(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidDistribution("no classes".into()));
    }
    if let Some(x) = p.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::InvalidDistribution(format!("entry {x} outside [0, 1]")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::InvalidDistribution(format!("entries sum to {sum}")));
    }
    Ok(())
}

/// A validated class-probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        validate_distribution(&probs)?;
        Ok(Self(probs))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn classes(&self) -> usize {
        self.0.len()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn entropy(&self) -> f64 {
        entropy_unchecked(&self.0)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Most frequent value among `votes` (each `< classes`); ties go to the lowest class.
fn mode(votes: impl Iterator<Item = usize>, classes: usize) -> usize {
    let mut counts = vec![0usize; classes];
    for v in votes {
        counts[v] += 1;
    }
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate().skip(1) {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

fn entropy_unchecked(p: &[f64]) -> f64 {
    let mut h = 0.0;
    for &pk in p {
        // 0 · ln 0 = 0
        if pk > 0.0 {
            h -= pk * pk.max(LOG_FLOOR).ln();
        }
    }
    h.max(0.0)
}

/// Shannon entropy in nats.
pub fn entropy(p: &[f64]) -> Result<f64> {
    validate_distribution(p)?;
    Ok(entropy_unchecked(p))
}

/// Softmax outputs of `E` ensemble members for one sample, stored `E × K` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePrediction {
    probs: Vec<f64>,
    members: usize,
    classes: usize,
}

impl EnsemblePrediction {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let classes = rows.first().map(Vec::len).ok_or(Error::EmptyEnsemble)?;
        let members = rows.len();
        if rows.iter().any(|r| r.len() != classes) {
            return Err(Error::ShapeMismatch("ensemble rows differ in class count".into()));
        }
        Self::from_flat(rows.concat(), members, classes)
    }

    pub fn from_flat(probs: Vec<f64>, members: usize, classes: usize) -> Result<Self> {
        if members == 0 {
            return Err(Error::EmptyEnsemble);
        }
        if probs.len() != members * classes {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {members} members × {classes} classes",
                probs.len()
            )));
        }
        for row in probs.chunks_exact(classes) {
            validate_distribution(row)?;
        }
        Ok(Self { probs, members, classes })
    }

    pub fn members(&self) -> usize {
        self.members
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn member(&self, e: usize) -> &[f64] {
        &self.probs[e * self.classes..(e + 1) * self.classes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probs.chunks_exact(self.classes)
    }

    /// Top-1 class of every member.
    pub fn member_votes(&self) -> impl Iterator<Item = usize> + '_ {
        self.rows().map(argmax)
    }

    /// Majority vote over member top-1 classes.
    pub fn mode(&self) -> usize {
        mode(self.member_votes(), self.classes)
    }
}

/// Member-wise mean of the ensemble's probability vectors.
pub fn predictive_mean(ens: &EnsemblePrediction) -> Result<ProbabilityVector> {
    let mut mean = vec![0.0; ens.classes];
    for row in ens.rows() {
        for (m, &p) in mean.iter_mut().zip(row) {
            *m += p;
        }
    }
    let e = ens.members as f64;
    mean.iter_mut().for_each(|m| *m /= e);
    ProbabilityVector::new(mean)
}

pub fn mutual_information(ens: &EnsemblePrediction) -> Result<f64> {
    let predictive = predictive_mean(ens)?.entropy();
    let expected = ens.rows().map(entropy_unchecked).sum::<f64>() / ens.members as f64;
    let j = predictive - expected;
    if j < -MUTUAL_INFORMATION_TOLERANCE {
        return Err(Error::NegativeMutualInformation(j));
    }
    Ok(j.max(0.0))
}

pub fn variation_ratios(ens: &EnsemblePrediction) -> f64 {
    let majority = ens.mode();
    let agree = ens.member_votes().filter(|&v| v == majority).count();
    (ens.members - agree) as f64 / ens.members as f64
}

pub fn error_count(ens: &EnsemblePrediction, label: usize) -> Result<f64> {
    if label >= ens.classes {
        return Err(Error::LabelOutOfRange { label, classes: ens.classes });
    }
    let correct = ens.member_votes().filter(|&v| v == label).count();
    Ok((ens.members - correct) as f64 / ens.members as f64)
}

/// Applies one label-free acquisition function to a single ensemble prediction.
pub fn score_ensemble(
    ens: &EnsemblePrediction,
    function: AcquisitionFunction,
    label: Option<usize>,
) -> Result<f64> {
    match function {
        AcquisitionFunction::Entropy => Ok(predictive_mean(ens)?.entropy()),
        AcquisitionFunction::MutualInformation => mutual_information(ens),
        AcquisitionFunction::VariationRatios => Ok(variation_ratios(ens)),
        AcquisitionFunction::ErrorCount => error_count(ens, label.ok_or(Error::MissingLabels)?),
        AcquisitionFunction::Random => Err(Error::UnsupportedFunction("random")),
    }
}

/// Per-sample acquisition values over a pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionScores {
    pub function: AcquisitionFunction,
    pub scores: Vec<f64>,
    pub sample_ids: Vec<SampleId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Number of strictly positive scores.
    pub nonzero: usize,
}

impl AcquisitionScores {
    pub fn new(
        function: AcquisitionFunction,
        scores: Vec<f64>,
        sample_ids: Vec<SampleId>,
    ) -> Result<Self> {
        if scores.len() != sample_ids.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} scores for {} ids",
                scores.len(),
                sample_ids.len()
            )));
        }
        if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::Format(format!("non-finite score {s}")));
        }
        Ok(Self { function, scores, sample_ids })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (SampleId, f64)> + '_ {
        self.sample_ids.iter().copied().zip(self.scores.iter().copied())
    }

    pub fn summary(&self) -> ScoreSummary {
        if self.scores.is_empty() {
            return ScoreSummary { min: 0.0, max: 0.0, mean: 0.0, nonzero: 0 };
        }
        let min = self.scores.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = self.scores.iter().sum::<f64>() / self.scores.len() as f64;
        let nonzero = self.scores.iter().filter(|&&s| s > 0.0).count();
        ScoreSummary { min, max, mean, nonzero }
    }

    /// Writes `sample_id,score` rows.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["sample_id", "score"])?;
        for (id, s) in self.iter() {
            wtr.write_record([id.0.to_string(), format!("{s:?}")])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Seeded uniform scores in `[0, 1)`, one per id in order.
pub fn random_scores(sample_ids: &[SampleId], seed: u64) -> AcquisitionScores {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores = sample_ids.iter().map(|_| rng.random::<f64>()).collect();
    AcquisitionScores { function: AcquisitionFunction::Random, scores, sample_ids: sample_ids.to_vec() }
}

/// Scores every sample of `tensor`. `labels` (aligned with the tensor's
/// sample order) is required for error count and `seed` for random scoring.
pub fn score_pool(
    tensor: &PredictionTensor,
    function: AcquisitionFunction,
    labels: Option<&[usize]>,
    seed: Option<u64>,
) -> Result<AcquisitionScores> {
    if function == AcquisitionFunction::Random {
        let seed = seed.ok_or(Error::MissingSeed)?;
        return Ok(random_scores(tensor.sample_ids(), seed));
    }
    if function == AcquisitionFunction::ErrorCount {
        match labels {
            None => return Err(Error::MissingLabels),
            Some(l) if l.len() != tensor.samples() => {
                return Err(Error::ShapeMismatch(format!(
                    "{} labels for {} samples",
                    l.len(),
                    tensor.samples()
                )))
            }
            Some(_) => {}
        }
    }
    let scores = (0..tensor.samples())
        .into_par_iter()
        .map(|n| {
            let ens = tensor.ensemble(n)?;
            score_ensemble(&ens, function, labels.map(|l| l[n]))
        })
        .collect::<Result<Vec<f64>>>()?;
    AcquisitionScores::new(function, scores, tensor.sample_ids().to_vec())
}
