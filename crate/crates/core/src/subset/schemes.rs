//! Subset-search schemes.
//!
//! * pretrain: acquisition ensemble and subset model both train on the full
//!   pool; the top-`N_s` samples are picked once and the subset model is
//!   fine-tuned on them.
//! * compress: as pretrain, but the subset model trains from scratch on the
//!   selection.
//! * build-up: start from `⌊N_s/8⌋` random samples and double the subset
//!   three times, each round retraining the ensemble on the subset and using
//!   it to pick the next batch from the unselected remainder.
//! * automatic duplication: like build-up, but every round scores the whole
//!   pool, so already-selected samples can be picked again and appear several
//!   times in the training stream.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{random_scores, score_pool, AcquisitionFunction, AcquisitionScores, ScoreSummary};
use crate::analysis::evaluate;
use crate::error::{Error, Result};
use crate::learner::{
    build_ensemble, fine_tune, predict_pool, train_ensemble, Architecture, CheckpointStore, EnsembleConfig,
    ModelParams, TrainConfig,
};
use crate::pool::{LabeledPool, SampleId};
use crate::seed;
use crate::subset::select::{growth_schedule, outlier_skip, outlier_window_select, select_top_k};
use crate::subset::SubsetState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Pretrain,
    Compress,
    BuildUp,
    AutomaticDuplication,
}

impl Scheme {
    pub const ALL: [Scheme; 4] =
        [Scheme::Pretrain, Scheme::Compress, Scheme::BuildUp, Scheme::AutomaticDuplication];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Pretrain => "pretrain",
            Scheme::Compress => "compress",
            Scheme::BuildUp => "build_up",
            Scheme::AutomaticDuplication => "automatic_duplication",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}`")))
    }
}

/// Architecture plus ensemble layout of a model role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Architecture,
    pub ensemble: EnsembleConfig,
}

/// Which members intermediate acquisition rounds use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntermediateMembers {
    /// Final-epoch weights of each run; the configured ensemble is used only
    /// for the last acquisition round.
    FinalWeights,
    /// The configured ensemble in every round.
    Configured,
}

impl FromStr for IntermediateMembers {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "final_weights" => Ok(Self::FinalWeights),
            "configured" => Ok(Self::Configured),
            _ => Err(Error::Config(format!("unknown intermediate member policy `{s}`"))),
        }
    }
}

impl IntermediateMembers {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::FinalWeights => "final_weights",
            Self::Configured => "configured",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub scheme: Scheme,
    pub function: AcquisitionFunction,
    /// Final subset size; for automatic duplication, the final training-stream size.
    pub target_size: usize,
    pub outlier_fraction: f64,
    /// Samples added per duplication round.
    pub acquisition_size: Option<usize>,
    /// Random starting set for automatic duplication; defaults to `⌊N_s/8⌋`.
    pub initial_size: Option<usize>,
    pub intermediate: IntermediateMembers,
    pub seed: u64,
    pub acquisition: ModelSpec,
    pub subset: ModelSpec,
    pub train: TrainConfig,
}

impl SearchConfig {
    pub fn validate(&self, pool_size: usize) -> Result<()> {
        self.train.validate()?;
        self.acquisition.ensemble.validate()?;
        self.subset.ensemble.validate()?;
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::Config(format!(
                "outlier fraction {} outside [0, 1)",
                self.outlier_fraction
            )));
        }
        if self.target_size == 0 {
            return Err(Error::Config("target size must be positive".into()));
        }
        if self.scheme != Scheme::AutomaticDuplication {
            if self.target_size > pool_size {
                return Err(Error::InfeasibleSchedule(format!(
                    "target size {} exceeds pool of {pool_size}",
                    self.target_size
                )));
            }
            let skip = outlier_skip(pool_size, self.outlier_fraction);
            if self.scheme != Scheme::BuildUp && skip + self.target_size > pool_size {
                return Err(Error::OutlierWindow { skip, k: self.target_size, pool: pool_size });
            }
        }
        Ok(())
    }

    fn stream(&self, label: &str) -> u64 {
        seed::derive_named(self.seed, label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 0 is the random initialization (build-up, duplication).
    pub iteration: usize,
    pub unique_count: usize,
    pub total_count: u64,
    pub added: Vec<SampleId>,
    /// Summary of the scores the selection used, over the whole pool.
    pub scores: Option<ScoreSummary>,
    /// Ensemble trained on the subset after this iteration.
    pub models: Vec<ModelParams>,
    /// Accuracy of `models` on the unique ids of the subset.
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetResult {
    pub scheme: Scheme,
    pub iterations: Vec<IterationRecord>,
    pub state: SubsetState,
    /// The subset model: members trained (or fine-tuned) on the final subset.
    pub subset_model: Vec<ModelParams>,
    /// Runs behind `subset_model`.
    pub subset_store: CheckpointStore,
    /// Ensemble that made the last selection.
    pub final_acquisition: Vec<ModelParams>,
}

impl SubsetResult {
    pub fn schedule(&self) -> Vec<usize> {
        self.iterations.iter().map(|r| r.unique_count).collect()
    }
}

/// Scores every pool sample with `members`.
pub fn acquire(
    pool: &LabeledPool,
    members: &[ModelParams],
    function: AcquisitionFunction,
    seed: u64,
) -> Result<AcquisitionScores> {
    let ids = pool.sorted_ids();
    if function == AcquisitionFunction::Random {
        return Ok(random_scores(&ids, seed));
    }
    let tensor = predict_pool(members, pool, &ids)?;
    let labels = match function {
        AcquisitionFunction::ErrorCount => Some(pool.labels_for(&ids)?),
        _ => None,
    };
    score_pool(&tensor, function, labels.as_deref(), Some(seed))
}

/// Moves the best `k` samples outside `state` into it (multiplicity 1).
pub fn build_up_step(
    state: &mut SubsetState,
    scores: &AcquisitionScores,
    k: usize,
    outlier_fraction: f64,
) -> Result<Vec<SampleId>> {
    let excluded: HashSet<SampleId> = state.ids().collect();
    let chosen = outlier_window_select(scores, k, outlier_fraction, &excluded)?;
    for &id in &chosen {
        state.insert_new(id)?;
    }
    Ok(chosen)
}

/// Adds one occurrence of each of the best `k` samples of the whole pool.
pub fn duplication_step(
    state: &mut SubsetState,
    scores: &AcquisitionScores,
    k: usize,
) -> Result<Vec<SampleId>> {
    let chosen = select_top_k(scores, k, &HashSet::new())?;
    for &id in &chosen {
        state.increment(id);
    }
    Ok(chosen)
}

fn random_subset(pool: &LabeledPool, size: usize, seed: u64) -> Result<SubsetState> {
    let scores = random_scores(&pool.sorted_ids(), seed);
    SubsetState::from_unique(select_top_k(&scores, size, &HashSet::new())?)
}

fn train_accuracy(members: &[ModelParams], pool: &LabeledPool, state: &SubsetState) -> Result<f64> {
    let ids: Vec<SampleId> = state.ids().collect();
    Ok(evaluate(members, pool, &ids)?.accuracy)
}

fn final_weights(ensemble: &EnsembleConfig) -> EnsembleConfig {
    EnsembleConfig::combined(ensemble.runs_needed(), 1, 1)
}

fn trained(
    pool: &LabeledPool,
    state: &SubsetState,
    spec: &ModelSpec,
    config: &SearchConfig,
    seed: u64,
) -> Result<(CheckpointStore, Vec<ModelParams>)> {
    train_ensemble(pool, state, spec.arch, &config.train, &spec.ensemble, seed)
}

fn check_scheme(config: &SearchConfig, expected: Scheme) -> Result<()> {
    if config.scheme != expected {
        return Err(Error::Config(format!(
            "config scheme is {}, runner is {expected}",
            config.scheme
        )));
    }
    Ok(())
}

/// Single-shot selection with a full-pool acquisition ensemble.
fn run_single_shot(pool: &LabeledPool, config: &SearchConfig, fine_tune_subset: bool) -> Result<SubsetResult> {
    config.validate(pool.len())?;
    let full = SubsetState::from_unique(pool.ids().iter().copied())?;
    let (_, acquisition) = trained(pool, &full, &config.acquisition, config, config.stream("acquisition"))?;
    let scores = acquire(pool, &acquisition, config.function, config.stream("scores"))?;
    let chosen = outlier_window_select(&scores, config.target_size, config.outlier_fraction, &HashSet::new())?;
    let state = SubsetState::from_unique(chosen.iter().copied())?;

    let (subset_store, subset_model) = if fine_tune_subset {
        let (_, pretrained) = trained(pool, &full, &config.subset, config, config.stream("subset"))?;
        let runs = pretrained
            .par_iter()
            .enumerate()
            .map(|(i, params)| {
                let seed = seed::derive(config.stream("fine_tune"), i as u64);
                fine_tune(pool, &state, params, &config.train, seed)
            })
            .collect::<Result<Vec<_>>>()?;
        let members = runs.iter().map(|run| run.last().params.clone()).collect();
        let mut store = CheckpointStore::new();
        for run in runs {
            store.insert_run(run)?;
        }
        (store, members)
    } else {
        trained(pool, &state, &config.subset, config, config.stream("subset"))?
    };

    let record = IterationRecord {
        iteration: 1,
        unique_count: state.unique_count(),
        total_count: state.total_count(),
        added: chosen,
        scores: Some(scores.summary()),
        train_accuracy: train_accuracy(&subset_model, pool, &state)?,
        models: subset_model.clone(),
    };
    Ok(SubsetResult {
        scheme: config.scheme,
        iterations: vec![record],
        state,
        subset_model,
        subset_store,
        final_acquisition: acquisition,
    })
}

pub fn run_pretrain(pool: &LabeledPool, config: &SearchConfig) -> Result<SubsetResult> {
    check_scheme(config, Scheme::Pretrain)?;
    run_single_shot(pool, config, true)
}

pub fn run_compress(pool: &LabeledPool, config: &SearchConfig) -> Result<SubsetResult> {
    check_scheme(config, Scheme::Compress)?;
    run_single_shot(pool, config, false)
}

/// Shared loop of build-up and automatic duplication. `sizes[t]` is the
/// subset size (unique for build-up, total for duplication) after round `t`.
fn run_rounds(
    pool: &LabeledPool,
    config: &SearchConfig,
    sizes: &[usize],
    duplicate: bool,
) -> Result<SubsetResult> {
    let mut state = random_subset(pool, sizes[0], config.stream("initial"))?;
    let last = sizes.len() - 1;
    let members_for = |store: &CheckpointStore, next_round: usize| {
        let layout = if next_round == last || config.intermediate == IntermediateMembers::Configured {
            config.acquisition.ensemble
        } else {
            final_weights(&config.acquisition.ensemble)
        };
        build_ensemble(store, &layout)
    };

    let (store, initial_models) = trained(pool, &state, &config.acquisition, config, seed::derive(config.stream("round"), 0))?;
    let mut acquisition = members_for(&store, 1)?;
    let mut iterations = vec![IterationRecord {
        iteration: 0,
        unique_count: state.unique_count(),
        total_count: state.total_count(),
        added: state.ids().collect(),
        scores: None,
        train_accuracy: train_accuracy(&initial_models, pool, &state)?,
        models: initial_models,
    }];
    let mut subset_model = Vec::new();
    let mut subset_store = CheckpointStore::new();

    for round in 1..=last {
        let scores = acquire(pool, &acquisition, config.function, seed::derive(config.stream("scores"), round as u64))?;
        let current = if duplicate { state.total_count() as usize } else { state.unique_count() };
        let k = sizes[round] - current;
        let added = if duplicate {
            duplication_step(&mut state, &scores, k)?
        } else {
            build_up_step(&mut state, &scores, k, config.outlier_fraction)?
        };
        let models = if round < last {
            let (store, models) =
                trained(pool, &state, &config.acquisition, config, seed::derive(config.stream("round"), round as u64))?;
            acquisition = members_for(&store, round + 1)?;
            models
        } else {
            (subset_store, subset_model) = trained(pool, &state, &config.subset, config, config.stream("subset"))?;
            subset_model.clone()
        };
        iterations.push(IterationRecord {
            iteration: round,
            unique_count: state.unique_count(),
            total_count: state.total_count(),
            added,
            scores: Some(scores.summary()),
            train_accuracy: train_accuracy(&models, pool, &state)?,
            models,
        });
    }
    Ok(SubsetResult {
        scheme: config.scheme,
        iterations,
        state,
        subset_model,
        subset_store,
        final_acquisition: acquisition,
    })
}

pub fn run_build_up(pool: &LabeledPool, config: &SearchConfig) -> Result<SubsetResult> {
    check_scheme(config, Scheme::BuildUp)?;
    config.validate(pool.len())?;
    let sizes = growth_schedule(config.target_size)?;
    run_rounds(pool, config, &sizes, false)
}

/// Training-stream sizes of the duplication loop.
pub fn duplication_schedule(config: &SearchConfig, pool_size: usize) -> Result<Vec<usize>> {
    let k = config
        .acquisition_size
        .ok_or_else(|| Error::Config("automatic duplication needs search.acquisition_size".into()))?;
    let initial = config.initial_size.unwrap_or(config.target_size / 8);
    if k == 0 || initial == 0 {
        return Err(Error::InfeasibleSchedule("initial and per-round sizes must be positive".into()));
    }
    if initial > pool_size || k > pool_size {
        return Err(Error::InfeasibleSchedule(format!(
            "initial size {initial} or round size {k} exceeds pool of {pool_size}"
        )));
    }
    if config.target_size <= initial || !(config.target_size - initial).is_multiple_of(k) {
        return Err(Error::InfeasibleSchedule(format!(
            "target {} is not initial {initial} plus a whole number of {k}-sample rounds",
            config.target_size
        )));
    }
    let rounds = (config.target_size - initial) / k;
    Ok((0..=rounds).map(|t| initial + t * k).collect())
}

pub fn run_automatic_duplication(pool: &LabeledPool, config: &SearchConfig) -> Result<SubsetResult> {
    check_scheme(config, Scheme::AutomaticDuplication)?;
    config.validate(pool.len())?;
    let sizes = duplication_schedule(config, pool.len())?;
    run_rounds(pool, config, &sizes, true)
}

pub fn run_scheme(pool: &LabeledPool, config: &SearchConfig) -> Result<SubsetResult> {
    match config.scheme {
        Scheme::Pretrain => run_pretrain(pool, config),
        Scheme::Compress => run_compress(pool, config),
        Scheme::BuildUp => run_build_up(pool, config),
        Scheme::AutomaticDuplication => run_automatic_duplication(pool, config),
    }
}

/// Random-subset baseline: `target_size` seeded-random samples, subset model
/// trained from scratch.
pub fn run_random_baseline(pool: &LabeledPool, config: &SearchConfig) -> Result<SubsetResult> {
    if config.target_size == 0 || config.target_size > pool.len() {
        return Err(Error::InfeasibleSchedule(format!(
            "random baseline of {} from pool of {}",
            config.target_size,
            pool.len()
        )));
    }
    let state = random_subset(pool, config.target_size, config.stream("random_baseline"))?;
    let (subset_store, subset_model) =
        trained(pool, &state, &config.subset, config, config.stream("random_subset"))?;
    let record = IterationRecord {
        iteration: 1,
        unique_count: state.unique_count(),
        total_count: state.total_count(),
        added: state.ids().collect(),
        scores: None,
        train_accuracy: train_accuracy(&subset_model, pool, &state)?,
        models: subset_model.clone(),
    };
    Ok(SubsetResult {
        scheme: config.scheme,
        iterations: vec![record],
        state,
        subset_model,
        subset_store,
        final_acquisition: Vec::new(),
    })
}
