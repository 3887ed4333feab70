use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::PredictionTensor;
use crate::error::{Error, Result};
use crate::learner::checkpoint::CheckpointStore;
use crate::learner::model::{Architecture, ModelParams, Scratch};
use crate::learner::train::{train, TrainConfig, TrainingRun};
use crate::pool::{LabeledPool, SampleId};
use crate::seed;
use crate::subset::SubsetState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    /// Final checkpoint of one run.
    Single,
    /// Best-validation checkpoint of each of `runs` runs.
    Seeds,
    /// Trailing checkpoints of one run.
    Checkpoints,
    /// Trailing checkpoints of each of `runs` runs.
    Combined,
}

impl EnsembleMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EnsembleMode::Single => "single",
            EnsembleMode::Seeds => "seeds",
            EnsembleMode::Checkpoints => "checkpoints",
            EnsembleMode::Combined => "combined",
        }
    }
}

impl fmt::Display for EnsembleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnsembleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [EnsembleMode::Single, EnsembleMode::Seeds, EnsembleMode::Checkpoints, EnsembleMode::Combined]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown ensemble mode `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub mode: EnsembleMode,
    pub runs: usize,
    pub checkpoints: usize,
    /// Epoch spacing between harvested checkpoints.
    pub stride: u32,
}

impl EnsembleConfig {
    pub fn single() -> Self {
        Self { mode: EnsembleMode::Single, runs: 1, checkpoints: 1, stride: 1 }
    }

    pub fn seeds(runs: usize) -> Self {
        Self { mode: EnsembleMode::Seeds, runs, checkpoints: 1, stride: 1 }
    }

    pub fn checkpoints(checkpoints: usize, stride: u32) -> Self {
        Self { mode: EnsembleMode::Checkpoints, runs: 1, checkpoints, stride }
    }

    pub fn combined(runs: usize, checkpoints: usize, stride: u32) -> Self {
        Self { mode: EnsembleMode::Combined, runs, checkpoints, stride }
    }

    /// Number of training runs needed.
    pub fn runs_needed(&self) -> usize {
        match self.mode {
            EnsembleMode::Single | EnsembleMode::Checkpoints => 1,
            EnsembleMode::Seeds | EnsembleMode::Combined => self.runs,
        }
    }

    pub fn member_count(&self) -> usize {
        match self.mode {
            EnsembleMode::Single => 1,
            EnsembleMode::Seeds => self.runs,
            EnsembleMode::Checkpoints => self.checkpoints,
            EnsembleMode::Combined => self.runs * self.checkpoints,
        }
    }

    /// Epochs a run must keep for this configuration.
    pub fn window_needed(&self) -> u32 {
        match self.mode {
            EnsembleMode::Single | EnsembleMode::Seeds => 1,
            _ => (self.checkpoints as u32 - 1) * self.stride + 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 || self.checkpoints == 0 || self.stride == 0 {
            return Err(Error::Config("ensemble runs, checkpoints and stride must be positive".into()));
        }
        Ok(())
    }
}

/// Assembles ensemble members from `store`, ordered by run seed then epoch.
pub fn build_ensemble(store: &CheckpointStore, config: &EnsembleConfig) -> Result<Vec<ModelParams>> {
    config.validate()?;
    let wanted = config.runs_needed();
    let runs: Vec<_> = store.runs().take(wanted).collect();
    if runs.len() < wanted {
        return Err(Error::MissingRun(format!("need {wanted} runs, store has {}", runs.len())));
    }
    let mut members = Vec::with_capacity(config.member_count());
    for (seed, meta) in runs {
        match config.mode {
            EnsembleMode::Single => members.push(store.get(seed, meta.epochs_run)?.params.clone()),
            EnsembleMode::Seeds => members.push(store.get(seed, meta.best_epoch)?.params.clone()),
            EnsembleMode::Checkpoints | EnsembleMode::Combined => {
                let span = (config.checkpoints as u32 - 1) * config.stride;
                let first = meta
                    .epochs_run
                    .checked_sub(span)
                    .ok_or(Error::MissingCheckpoint { run: seed, epoch: 0 })?;
                for i in 0..config.checkpoints as u32 {
                    members.push(store.get(seed, first + i * config.stride)?.params.clone());
                }
            }
        }
    }
    Ok(members)
}

/// Trains the runs an ensemble configuration needs and assembles its members.
/// Runs execute in parallel; run `r` uses seed `derive(base_seed, r)`.
pub fn train_ensemble(
    pool: &LabeledPool,
    subset: &SubsetState,
    arch: Architecture,
    train_config: &TrainConfig,
    ensemble: &EnsembleConfig,
    base_seed: u64,
) -> Result<(CheckpointStore, Vec<ModelParams>)> {
    ensemble.validate()?;
    let mut cfg = train_config.clone();
    cfg.harvest_window = cfg.harvest_window.max(ensemble.window_needed());
    let runs = (0..ensemble.runs_needed() as u64)
        .into_par_iter()
        .map(|r| train(pool, subset, arch, &cfg, seed::derive(base_seed, r)))
        .collect::<Result<Vec<TrainingRun>>>()?;
    let mut store = CheckpointStore::new();
    for run in runs {
        store.insert_run(run)?;
    }
    let members = build_ensemble(&store, ensemble)?;
    Ok((store, members))
}

fn check_members(members: &[ModelParams], pool: &LabeledPool) -> Result<()> {
    if members.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if let Some(m) = members.iter().find(|m| m.dim != pool.dim() || m.classes != pool.classes()) {
        return Err(Error::ShapeMismatch(format!(
            "member is D={}, K={} but pool is D={}, K={}",
            m.dim,
            m.classes,
            pool.dim(),
            pool.classes()
        )));
    }
    Ok(())
}

/// Member-wise softmax outputs in `f64`, `ids.len() × E × K`.
pub(crate) fn predict_rows(members: &[ModelParams], pool: &LabeledPool, ids: &[SampleId]) -> Result<Vec<Vec<f64>>> {
    check_members(members, pool)?;
    ids.par_iter()
        .map_init(Scratch::default, |scratch, &id| {
            let x = pool.features_of(id)?;
            let mut out = Vec::with_capacity(members.len() * pool.classes());
            for m in members {
                out.extend(m.proba_into(x, scratch));
            }
            Ok(out)
        })
        .collect()
}

/// Predictions of every member for `ids`, as an `N × E × K` tensor.
pub fn predict_pool(members: &[ModelParams], pool: &LabeledPool, ids: &[SampleId]) -> Result<PredictionTensor> {
    let rows = predict_rows(members, pool, ids)?;
    let data = rows.into_iter().flatten().map(|p| p as f32).collect();
    PredictionTensor::new(ids.len(), members.len(), pool.classes(), data, ids.to_vec())
}
