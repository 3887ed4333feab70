//! Runs an experiment config: one trial per seed, each building its pool,
//! executing the search scheme and the requested baselines.

use std::fs::File;
use std::io::BufReader;
use std::time::Instant;

use rayon::prelude::*;

use crate::analysis::{consensus_counts, duplication_histogram, evaluate, selected_unselected_gap};
use crate::error::{Error, Result};
use crate::experiment::config::{Baseline, ExperimentConfig, PoolSource};
use crate::experiment::generator::{generate_pool, GeneratorSpec};
use crate::experiment::results::{BaselineRecord, FinalMetrics, IterationMetrics, RunDocument, TrialRecord};
use crate::learner::{predict_pool, train_ensemble, EnsembleConfig};
use crate::pool::LabeledPool;
use crate::seed;
use crate::subset::{run_random_baseline, run_scheme, SearchConfig, SubsetResult, SubsetState};

/// Everything a trial produces, including the artifacts that do not go into
/// the results document.
#[derive(Debug, Clone)]
pub struct TrialOutput {
    pub record: TrialRecord,
    pub result: Option<SubsetResult>,
}

pub fn load_pools(source: &PoolSource, trial_seed: u64) -> Result<(LabeledPool, LabeledPool)> {
    match source {
        PoolSource::Generated(spec) => {
            let spec = GeneratorSpec { seed: seed::derive_named(trial_seed, "generator"), ..spec.clone() };
            let g = generate_pool(&spec)?;
            Ok((g.pool, g.test))
        }
        PoolSource::File { path, test_path } => {
            let pool = LabeledPool::read_csv(BufReader::new(File::open(path)?), None)?;
            let test = match test_path {
                Some(p) => LabeledPool::read_csv(BufReader::new(File::open(p)?), Some(pool.classes()))?,
                None => pool.clone(),
            };
            Ok((pool, test))
        }
    }
}

pub fn search_config(config: &ExperimentConfig, trial_seed: u64, pool_size: usize) -> SearchConfig {
    let s = &config.search;
    SearchConfig {
        scheme: s.scheme,
        function: s.function,
        target_size: s.target.resolve(pool_size),
        outlier_fraction: s.outlier_fraction,
        acquisition_size: s.acquisition_size,
        initial_size: s.initial_size,
        intermediate: s.intermediate,
        seed: seed::derive_named(trial_seed, "search"),
        acquisition: config.acquisition,
        subset: config.subset,
        train: config.train.clone(),
    }
}

fn trial_metrics(
    config: &ExperimentConfig,
    search: &SearchConfig,
    pool: &LabeledPool,
    test: &LabeledPool,
    result: &SubsetResult,
) -> Result<(Vec<IterationMetrics>, FinalMetrics)> {
    let test_ids = test.sorted_ids();
    let mut replay = SubsetState::new();
    let mut iterations = Vec::with_capacity(result.iterations.len());
    for it in &result.iterations {
        for &id in &it.added {
            replay.increment(id);
        }
        iterations.push(IterationMetrics {
            iteration: it.iteration,
            unique_count: it.unique_count,
            total_count: it.total_count,
            added: it.added.iter().map(|id| id.0).collect(),
            scores: it.scores,
            train_accuracy: it.train_accuracy,
            test_accuracy: evaluate(&it.models, test, &test_ids)?.accuracy,
            histogram: duplication_histogram(&replay).counts,
        });
    }
    if replay != result.state {
        return Err(Error::InvalidSpec("iteration records do not reproduce the final subset".into()));
    }

    let report = evaluate(&result.subset_model, test, &test_ids)?;
    let gap = match selected_unselected_gap(&result.subset_model, pool, &result.state) {
        Ok((sel, unsel)) => Some((sel.accuracy, unsel.accuracy)),
        Err(Error::EmptyPartition(_)) => None,
        Err(e) => return Err(e),
    };
    let consensus = if config.consensus > 0 {
        // trailing checkpoints of one subset-model run, scored on the
        // unselected ids (the test set when nothing is left unselected)
        let layout = EnsembleConfig::checkpoints(config.consensus, 1);
        let (_, members) = train_ensemble(
            pool,
            &result.state,
            search.subset.arch,
            &search.train,
            &layout,
            seed::derive_named(search.seed, "consensus"),
        )?;
        let unselected = result.state.complement(pool);
        let tensor = if unselected.is_empty() {
            predict_pool(&members, test, &test_ids)?
        } else {
            predict_pool(&members, pool, &unselected)?
        };
        Some(consensus_counts(&tensor, config.consensus)?)
    } else {
        None
    };
    let final_metrics = FinalMetrics {
        unique_count: result.state.unique_count(),
        total_count: result.state.total_count(),
        subset_hash: format!("{:016x}", result.state.content_hash()),
        test_accuracy: report.accuracy,
        per_class: report.per_class,
        selected_accuracy: gap.map(|g| g.0),
        unselected_accuracy: gap.map(|g| g.1),
        histogram: duplication_histogram(&result.state).counts,
        consensus,
    };
    Ok((iterations, final_metrics))
}

fn baselines(
    config: &ExperimentConfig,
    search: &SearchConfig,
    pool: &LabeledPool,
    test: &LabeledPool,
    unique_size: usize,
) -> Result<Vec<BaselineRecord>> {
    let test_ids = test.sorted_ids();
    config
        .baselines
        .iter()
        .map(|b| {
            let (size, members) = match b {
                Baseline::Random => {
                    let cfg = SearchConfig { target_size: unique_size, ..search.clone() };
                    (unique_size, run_random_baseline(pool, &cfg)?.subset_model)
                }
                Baseline::Full => {
                    let all = SubsetState::from_unique(pool.ids().iter().copied())?;
                    let seed = seed::derive_named(search.seed, "full_baseline");
                    let (_, members) = train_ensemble(pool, &all, search.subset.arch, &search.train, &search.subset.ensemble, seed)?;
                    (pool.len(), members)
                }
            };
            Ok(BaselineRecord { name: b.as_str().to_string(), size, test_accuracy: evaluate(&members, test, &test_ids)?.accuracy })
        })
        .collect()
}

/// Runs one trial. Errors are recorded in the returned record, not propagated.
pub fn run_trial(config: &ExperimentConfig, trial_seed: u64) -> TrialOutput {
    let start = Instant::now();
    let mut record = TrialRecord {
        seed: trial_seed,
        scheme: config.search.scheme,
        target_size: 0,
        error: None,
        iterations: Vec::new(),
        result: None,
        baselines: Vec::new(),
        wall_time_ms: None,
    };
    let outcome = (|| -> Result<SubsetResult> {
        let (pool, test) = load_pools(&config.pool, trial_seed)?;
        let search = search_config(config, trial_seed, pool.len());
        record.target_size = search.target_size;
        let result = run_scheme(&pool, &search)?;
        let (iterations, final_metrics) = trial_metrics(config, &search, &pool, &test, &result)?;
        record.baselines = baselines(config, &search, &pool, &test, result.state.unique_count())?;
        record.iterations = iterations;
        record.result = Some(final_metrics);
        Ok(result)
    })();
    record.wall_time_ms = Some(start.elapsed().as_millis() as u64);
    match outcome {
        Ok(result) => TrialOutput { record, result: Some(result) },
        Err(e) => {
            record.iterations.clear();
            record.result = None;
            record.baselines.clear();
            record.error = Some(e.to_string());
            TrialOutput { record, result: None }
        }
    }
}

/// Runs all trials on a pool of `jobs` threads (0 = rayon default). Trial
/// order in the output follows the config's seed order.
pub fn run_experiment_with_outputs(config: &ExperimentConfig, jobs: usize) -> Result<Vec<TrialOutput>> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| config.seeds.par_iter().map(|&s| run_trial(config, s)).collect()))
}

pub fn run_experiment(config: &ExperimentConfig, jobs: usize) -> Result<RunDocument> {
    let outputs = run_experiment_with_outputs(config, jobs)?;
    Ok(RunDocument::from_trials(outputs.into_iter().map(|o| o.record).collect()))
}
