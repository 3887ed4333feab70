#![allow(dead_code)]

use subsetsearch::experiment::{generate_pool, GeneratedPool, GeneratorSpec};
use subsetsearch::learner::{EnsembleConfig, TrainConfig};
use subsetsearch::subset::{IntermediateMembers, ModelSpec, Scheme, SearchConfig};
use subsetsearch::acquisition::AcquisitionFunction;
use subsetsearch::learner::Architecture;

/// Small four-class mixture, cheap enough for debug builds.
pub fn small_pool(samples_per_cluster: usize, seed: u64) -> GeneratedPool {
    generate_pool(&GeneratorSpec {
        classes: 4,
        clusters_per_class: 1,
        samples_per_cluster,
        dim: 4,
        test_samples_per_cluster: 20,
        seed,
        ..Default::default()
    })
    .unwrap()
}

pub fn quick_train() -> TrainConfig {
    TrainConfig { max_epochs: 6, harvest_window: 4, ..Default::default() }
}

pub fn search(scheme: Scheme, target_size: usize, seed: u64) -> SearchConfig {
    SearchConfig {
        scheme,
        function: AcquisitionFunction::VariationRatios,
        target_size,
        outlier_fraction: 0.0,
        acquisition_size: None,
        initial_size: None,
        intermediate: IntermediateMembers::FinalWeights,
        seed,
        acquisition: ModelSpec { arch: Architecture::Logistic, ensemble: EnsembleConfig::combined(2, 2, 1) },
        subset: ModelSpec { arch: Architecture::Logistic, ensemble: EnsembleConfig::single() },
        train: quick_train(),
    }
}

/// The redundant, noisy mixture the scaled experiments run on: 2,000 samples
/// in four classes, 40% jittered copies, 5% flipped labels.
pub fn redundant_pool(trial: u64) -> GeneratedPool {
    generate_pool(&redundant_spec(100 + trial)).unwrap()
}

pub fn redundant_spec(seed: u64) -> GeneratorSpec {
    GeneratorSpec {
        classes: 4,
        clusters_per_class: 2,
        samples_per_cluster: 250,
        dim: 32,
        cluster_std: 1.0,
        center_spread: 1.0,
        redundancy: 0.4,
        label_noise: 0.05,
        test_samples_per_cluster: 250,
        seed,
        ..Default::default()
    }
}

pub fn experiment_train() -> TrainConfig {
    TrainConfig { max_epochs: 40, learning_rate: 0.1, decay_epochs: vec![30], weight_decay: 1e-2, ..Default::default() }
}

/// Build-up with variation ratios and a 3 x 10 combined acquisition ensemble.
pub fn experiment_search(scheme: Scheme, target_size: usize, trial: u64) -> SearchConfig {
    SearchConfig {
        scheme,
        function: AcquisitionFunction::VariationRatios,
        target_size,
        outlier_fraction: 0.0,
        acquisition_size: None,
        initial_size: None,
        intermediate: IntermediateMembers::Configured,
        seed: trial,
        acquisition: ModelSpec { arch: Architecture::Logistic, ensemble: EnsembleConfig::combined(3, 10, 1) },
        subset: ModelSpec { arch: Architecture::Logistic, ensemble: EnsembleConfig::single() },
        train: experiment_train(),
    }
}
