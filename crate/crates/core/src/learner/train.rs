//! Deterministic mini-batch SGD.
//!
//! The objective is class-weighted cross-entropy averaged over the batch,
//! plus `weight_decay/2 · ‖θ‖²`. Updates use heavy-ball momentum:
//! `v ← μ·v + g`, `θ ← θ − lr·v`.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::checkpoint::Checkpoint;
use crate::learner::model::{Architecture, ModelParams, Scratch};
use crate::pool::{LabeledPool, SampleId};
use crate::seed;
use crate::subset::SubsetState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Multiplier applied at each decay epoch and at each plateau.
    pub decay_factor: f64,
    /// Epochs (1-based) after which the rate is multiplied by `decay_factor`.
    pub decay_epochs: Vec<u32>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: u32,
    /// Epochs without validation improvement before the rate drops; 0 disables
    /// plateau handling and early stopping.
    pub patience: u32,
    pub fine_tune_rate: f64,
    pub fine_tune_epochs: u32,
    /// Weight each class by its inverse frequency in the training multiset.
    pub class_weighting: bool,
    /// Fraction of the subset's unique ids held out for validation.
    pub validation_fraction: f64,
    /// Number of trailing epochs whose checkpoints are kept.
    pub harvest_window: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            decay_factor: 0.1,
            decay_epochs: Vec::new(),
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 32,
            max_epochs: 40,
            patience: 0,
            fine_tune_rate: 1e-3,
            fine_tune_epochs: 20,
            class_weighting: true,
            validation_fraction: 0.1,
            harvest_window: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("train: {msg}")));
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(self.fine_tune_rate >= 0.0) {
            return bad("fine-tune rate must be non-negative");
        }
        if !(self.decay_factor > 0.0) {
            return bad("decay factor must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight decay must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation fraction must lie in [0, 1)");
        }
        if self.harvest_window == 0 {
            return bad("harvest window must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: u32,
    pub learning_rate: f64,
    /// Weighted cross-entropy over the training multiset after the epoch.
    pub train_loss: f64,
    pub validation_accuracy: f64,
}

/// Output of one training run.
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub run_seed: u64,
    /// Harvested checkpoints in ascending epoch order; the best-validation
    /// checkpoint is included even when it falls outside the window.
    pub checkpoints: Vec<Checkpoint>,
    pub best_epoch: u32,
    pub epochs_run: u32,
    pub history: Vec<EpochStats>,
}

impl TrainingRun {
    pub fn last(&self) -> &Checkpoint {
        self.checkpoints.iter().max_by_key(|c| c.epoch).expect("run has checkpoints")
    }

    pub fn best(&self) -> &Checkpoint {
        self.checkpoints.iter().find(|c| c.epoch == self.best_epoch).expect("best is kept")
    }
}

/// Training/validation partition of a subset.
#[derive(Debug, Clone)]
pub(crate) struct Split {
    /// Training multiset, ascending ids with repeats.
    pub train: Vec<(usize, usize)>,
    /// Validation rows (unique).
    pub validation: Vec<(usize, usize)>,
}

/// Holds out the `fraction` of unique ids with the largest run-keyed hash.
pub(crate) fn split_subset(
    pool: &LabeledPool,
    subset: &SubsetState,
    fraction: f64,
    run_seed: u64,
) -> Result<Split> {
    let unique = subset.unique_count();
    let n_val = if unique >= 2 { ((unique as f64) * fraction).floor() as usize } else { 0 };
    let mut keyed: Vec<(u64, SampleId)> =
        subset.ids().map(|id| (seed::derive(run_seed, id.0), id)).collect();
    keyed.sort_unstable();
    let held: std::collections::HashSet<SampleId> =
        keyed[unique - n_val..].iter().map(|&(_, id)| id).collect();
    let mut train = Vec::with_capacity(subset.total_count() as usize);
    let mut validation = Vec::with_capacity(n_val);
    for (id, m) in subset.iter() {
        let row = pool.row(id).ok_or(Error::UnknownId(id))?;
        let entry = (row, pool.label_at(row));
        if held.contains(&id) {
            validation.push(entry);
        } else {
            train.extend(std::iter::repeat_n(entry, m as usize));
        }
    }
    Ok(Split { train, validation })
}

/// Inverse-frequency weights `n / (k_present · n_c)`; 1 everywhere when disabled.
pub fn class_weights(labels: impl Iterator<Item = usize>, classes: usize, enabled: bool) -> Vec<f64> {
    if !enabled {
        return vec![1.0; classes];
    }
    let mut counts = vec![0usize; classes];
    let mut total = 0usize;
    for l in labels {
        counts[l] += 1;
        total += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count();
    counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { total as f64 / (present as f64 * c as f64) })
        .collect()
}

/// Objective and gradient over `batch` (pool rows with labels).
pub fn objective_and_gradient(
    params: &ModelParams,
    pool: &LabeledPool,
    batch: &[(usize, usize)],
    weights: &[f64],
    weight_decay: f64,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; params.weights.len()];
    let mut scratch = Scratch::default();
    let loss = batch_gradient(params, pool, batch, weights, weight_decay, &mut grad, &mut scratch);
    (loss, grad)
}

/// Objective value only, matching [`objective_and_gradient`].
pub fn objective(
    params: &ModelParams,
    pool: &LabeledPool,
    batch: &[(usize, usize)],
    weights: &[f64],
    weight_decay: f64,
) -> f64 {
    weighted_loss(params, pool, batch, weights)
        + 0.5 * weight_decay * params.weights.iter().map(|w| w * w).sum::<f64>()
}

fn weighted_loss(
    params: &ModelParams,
    pool: &LabeledPool,
    rows: &[(usize, usize)],
    weights: &[f64],
) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let mut scratch = Scratch::default();
    let total: f64 = rows
        .iter()
        .map(|&(r, y)| weights[y] * params.cross_entropy(pool.features_at(r), y, &mut scratch))
        .sum();
    total / rows.len() as f64
}

fn batch_gradient(
    params: &ModelParams,
    pool: &LabeledPool,
    batch: &[(usize, usize)],
    weights: &[f64],
    weight_decay: f64,
    grad: &mut [f64],
    scratch: &mut Scratch,
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for &(row, label) in batch {
        let w = weights[label] * scale;
        loss += w * params.accumulate_gradient(pool.features_at(row), label, w, grad, scratch);
    }
    let mut l2 = 0.0;
    for (g, &p) in grad.iter_mut().zip(&params.weights) {
        *g += weight_decay * p;
        l2 += p * p;
    }
    loss + 0.5 * weight_decay * l2
}

fn accuracy(params: &ModelParams, pool: &LabeledPool, rows: &[(usize, usize)]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let mut scratch = Scratch::default();
    let correct = rows
        .iter()
        .filter(|&&(r, y)| crate::acquisition::argmax(&params.proba_into(pool.features_at(r), &mut scratch)) == y)
        .count();
    correct as f64 / rows.len() as f64
}

/// Trains a fresh model of `arch` on `subset`.
pub fn train(
    pool: &LabeledPool,
    subset: &SubsetState,
    arch: Architecture,
    config: &TrainConfig,
    run_seed: u64,
) -> Result<TrainingRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_named(run_seed, "init"));
    let init = ModelParams::init(arch, pool.dim(), pool.classes(), &mut rng);
    run_sgd(pool, subset, init, config.learning_rate, config.max_epochs, config, run_seed)
}

/// Continues training `params` on `subset` at the fine-tune rate.
pub fn fine_tune(
    pool: &LabeledPool,
    subset: &SubsetState,
    params: &ModelParams,
    config: &TrainConfig,
    run_seed: u64,
) -> Result<TrainingRun> {
    if params.dim != pool.dim() || params.classes != pool.classes() {
        return Err(Error::ShapeMismatch(format!(
            "params are D={}, K={} but pool is D={}, K={}",
            params.dim,
            params.classes,
            pool.dim(),
            pool.classes()
        )));
    }
    run_sgd(
        pool,
        subset,
        params.clone(),
        config.fine_tune_rate,
        config.fine_tune_epochs,
        config,
        run_seed,
    )
}

fn run_sgd(
    pool: &LabeledPool,
    subset: &SubsetState,
    mut params: ModelParams,
    initial_rate: f64,
    max_epochs: u32,
    config: &TrainConfig,
    run_seed: u64,
) -> Result<TrainingRun> {
    config.validate()?;
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    subset.validate_against(pool)?;
    let split = split_subset(pool, subset, config.validation_fraction, run_seed)?;
    let weights = class_weights(split.train.iter().map(|&(_, y)| y), pool.classes(), config.class_weighting);
    // Without a held-out split, model selection falls back to training accuracy.
    let selection_rows = if split.validation.is_empty() { &split.train } else { &split.validation };
    let subset_hash = subset.content_hash();
    let snapshot = |params: &ModelParams, epoch: u32| Checkpoint {
        params: params.clone(),
        run_seed,
        epoch,
        subset_hash,
    };

    let mut history = Vec::new();
    let mut window: VecDeque<Checkpoint> = VecDeque::new();
    window.push_back(snapshot(&params, 0));
    let mut best = (accuracy(&params, pool, selection_rows), snapshot(&params, 0));

    let mut velocity = vec![0.0; params.weights.len()];
    let mut grad = vec![0.0; params.weights.len()];
    let mut scratch = Scratch::default();
    let mut order = split.train.clone();
    let mut rate = initial_rate;
    let mut stale = 0u32;
    let mut dropped_at: Option<u32> = None;
    let mut epochs_run = 0;

    for epoch in 1..=max_epochs {
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed::derive(run_seed, epoch as u64));
        order.copy_from_slice(&split.train);
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(config.batch_size) {
            batch_gradient(&params, pool, batch, &weights, config.weight_decay, &mut grad, &mut scratch);
            for ((v, g), w) in velocity.iter_mut().zip(&grad).zip(params.weights.iter_mut()) {
                *v = config.momentum * *v + g;
                *w -= rate * *v;
            }
        }
        epochs_run = epoch;
        let train_loss = weighted_loss(&params, pool, &split.train, &weights);
        if !train_loss.is_finite() || params.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch, seed: run_seed });
        }
        let val = accuracy(&params, pool, selection_rows);
        history.push(EpochStats { epoch, learning_rate: rate, train_loss, validation_accuracy: val });

        window.push_back(snapshot(&params, epoch));
        if window.len() > config.harvest_window as usize {
            window.pop_front();
        }
        let improved = val > best.0;
        if val >= best.0 {
            best = (val, snapshot(&params, epoch));
        }

        if config.decay_epochs.contains(&epoch) {
            rate *= config.decay_factor;
        }
        if config.patience > 0 {
            if improved {
                stale = 0;
                dropped_at = None;
            } else {
                stale += 1;
            }
            match dropped_at {
                Some(at) if epoch - at >= 2 * config.patience => break,
                None if stale >= config.patience => {
                    rate *= config.decay_factor;
                    dropped_at = Some(epoch);
                    stale = 0;
                }
                _ => {}
            }
        }
    }

    let best_epoch = best.1.epoch;
    let mut checkpoints: Vec<Checkpoint> = window.into_iter().collect();
    if !checkpoints.iter().any(|c| c.epoch == best_epoch) {
        checkpoints.push(best.1);
        checkpoints.sort_by_key(|c| c.epoch);
    }
    Ok(TrainingRun { run_seed, checkpoints, best_epoch, epochs_run, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> LabeledPool {
        // Two points per class on either side of x0 = 0.
        LabeledPool::new(
            vec![-2.0, 1.0, -1.0, -1.5, 1.0, 0.5, 2.5, -1.0],
            vec![0, 0, 1, 1],
            (0..4).map(SampleId).collect(),
            2,
            2,
        )
        .unwrap()
    }

    fn quiet() -> TrainConfig {
        TrainConfig { validation_fraction: 0.0, batch_size: 2, max_epochs: 200, ..TrainConfig::default() }
    }

    #[test]
    fn separable_points_are_learned() {
        // Independent check: the line x0 = 0 separates the classes, so a linear
        // classifier with perfect training accuracy exists.
        let pool = separable();
        for r in 0..4 {
            let x0 = pool.features_at(r)[0];
            assert_eq!(pool.label_at(r), usize::from(x0 > 0.0));
        }
        let subset = SubsetState::from_unique(pool.ids().iter().copied()).unwrap();
        let run = train(&pool, &subset, Architecture::Logistic, &quiet(), 11).unwrap();
        let params = &run.last().params;
        for r in 0..4 {
            let p = params.predict_proba(pool.features_at(r)).unwrap();
            assert_eq!(p.argmax(), pool.label_at(r));
        }
        assert!(run.epochs_run <= 200);
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let pool = separable();
        let subset = SubsetState::from_unique(pool.ids().iter().copied()).unwrap();
        let cfg = TrainConfig { max_epochs: 15, ..quiet() };
        for arch in [Architecture::Logistic, Architecture::Mlp { hidden: 4 }] {
            let a = train(&pool, &subset, arch, &cfg, 5).unwrap();
            let b = train(&pool, &subset, arch, &cfg, 5).unwrap();
            assert_eq!(a.last().params.weights, b.last().params.weights);
            let c = train(&pool, &subset, arch, &cfg, 6).unwrap();
            assert_ne!(a.last().params.weights, c.last().params.weights);
        }
    }

    #[test]
    fn fine_tune_edge_cases() {
        let pool = separable();
        let subset = SubsetState::from_unique(pool.ids().iter().copied()).unwrap();
        let base = train(&pool, &subset, Architecture::Logistic, &TrainConfig { max_epochs: 5, ..quiet() }, 1)
            .unwrap()
            .last()
            .params
            .clone();

        let none = TrainConfig { fine_tune_epochs: 0, ..quiet() };
        let run = fine_tune(&pool, &subset, &base, &none, 2).unwrap();
        assert_eq!(run.epochs_run, 0);
        assert_eq!(run.last().params, base);

        let frozen = TrainConfig { fine_tune_rate: 0.0, fine_tune_epochs: 5, ..quiet() };
        let run = fine_tune(&pool, &subset, &base, &frozen, 2).unwrap();
        assert_eq!(run.last().params, base);

        let wrong = ModelParams::zeros(Architecture::Logistic, 3, 2);
        assert!(matches!(fine_tune(&pool, &subset, &wrong, &frozen, 2), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn empty_subset_and_divergence_are_errors() {
        let pool = separable();
        let cfg = quiet();
        assert!(matches!(
            train(&pool, &SubsetState::new(), Architecture::Logistic, &cfg, 0),
            Err(Error::EmptySubset)
        ));
        let subset = SubsetState::from_unique(pool.ids().iter().copied()).unwrap();
        let wild = TrainConfig { learning_rate: 1e300, momentum: 0.0, max_epochs: 3, ..cfg };
        assert!(matches!(
            train(&pool, &subset, Architecture::Logistic, &wild, 0),
            Err(Error::NonFiniteLoss { .. })
        ));
    }

    #[test]
    fn uniform_classes_have_unit_weight() {
        assert_eq!(class_weights([0, 1, 2, 0, 1, 2].into_iter(), 3, true), vec![1.0; 3]);
        let w = class_weights([0, 0, 0, 1].into_iter(), 3, true);
        assert_eq!(w, vec![4.0 / 6.0, 2.0, 0.0]);
        assert_eq!(class_weights([0, 0].into_iter(), 2, false), vec![1.0, 1.0]);
    }

    #[test]
    fn validation_split_is_per_run_and_respects_multiplicity() {
        let pool = LabeledPool::new(
            (0..40).map(|i| i as f64).collect(),
            (0..40).map(|i| i % 2).collect(),
            (0..40).map(SampleId).collect(),
            1,
            2,
        )
        .unwrap();
        let mut subset = SubsetState::from_unique((0..40).map(SampleId)).unwrap();
        subset.increment(SampleId(3));
        let a = split_subset(&pool, &subset, 0.1, 1).unwrap();
        assert_eq!(a.validation.len(), 4);
        assert_eq!(a.train.len() + a.validation.len(), 40 + usize::from(a.validation.iter().all(|&(r, _)| r != 3)));
        let b = split_subset(&pool, &subset, 0.1, 2).unwrap();
        assert_ne!(a.validation, b.validation);
    }

    #[test]
    fn history_and_window() {
        let pool = separable();
        let subset = SubsetState::from_unique(pool.ids().iter().copied()).unwrap();
        let cfg = TrainConfig { max_epochs: 30, harvest_window: 5, ..quiet() };
        let run = train(&pool, &subset, Architecture::Logistic, &cfg, 3).unwrap();
        assert_eq!(run.history.len(), 30);
        let epochs: Vec<u32> = run.checkpoints.iter().map(|c| c.epoch).collect();
        assert!(epochs.ends_with(&[26, 27, 28, 29, 30]));
        assert!(epochs.contains(&run.best_epoch));
    }

    #[test]
    fn plateau_drops_rate_then_stops() {
        let pool = separable();
        let subset = SubsetState::from_unique(pool.ids().iter().copied()).unwrap();
        // Perfect accuracy is reached quickly, after which nothing improves.
        let cfg = TrainConfig { patience: 3, max_epochs: 500, ..quiet() };
        let run = train(&pool, &subset, Architecture::Logistic, &cfg, 3).unwrap();
        assert!(run.epochs_run < 500);
        let rates: Vec<f64> = run.history.iter().map(|h| h.learning_rate).collect();
        assert!(rates.iter().any(|&r| r < cfg.learning_rate));
    }
}
