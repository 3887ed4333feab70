//! Experiment configuration from `key = value` files.
//!
//! ```text
//! experiment.seeds = 1, 2, 3
//! experiment.baselines = random, full
//! pool.samples_per_cluster = 250
//! pool.redundancy = 0.4
//! search.scheme = build_up
//! search.function = variation_ratios
//! search.target_fraction = 0.5
//! acquisition.ensemble = combined
//! acquisition.runs = 3
//! acquisition.checkpoints = 10
//! ```
//!
//! Every key is optional except the seeds; unknown keys are errors. The
//! config hash is taken over the canonical text of the fully resolved
//! config, so two files that differ only in comments, ordering or spelled-out
//! defaults hash identically.

use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::acquisition::AcquisitionFunction;
use crate::error::{Error, Result};
use crate::experiment::generator::GeneratorSpec;
use crate::kv::KeyValues;
use crate::learner::{Architecture, EnsembleConfig, EnsembleMode, TrainConfig};
use crate::subset::{IntermediateMembers, ModelSpec, Scheme};

#[derive(Debug, Clone, PartialEq)]
pub enum PoolSource {
    /// Regenerated per trial; the generator seed derives from the trial seed.
    Generated(GeneratorSpec),
    /// Pool CSV with an optional clean test CSV; without one, test metrics use the pool.
    File { path: PathBuf, test_path: Option<PathBuf> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetSize {
    Absolute(usize),
    /// Fraction of the pool, floored.
    Fraction(f64),
}

impl TargetSize {
    pub fn resolve(self, pool_size: usize) -> usize {
        match self {
            TargetSize::Absolute(n) => n,
            TargetSize::Fraction(f) => (f * pool_size as f64 + 1e-9).floor() as usize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    /// Random subset of the same unique size.
    Random,
    /// Subset model trained on the whole pool.
    Full,
}

impl Baseline {
    pub fn as_str(self) -> &'static str {
        match self {
            Baseline::Random => "random",
            Baseline::Full => "full",
        }
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Baseline::Random),
            "full" => Ok(Baseline::Full),
            _ => Err(Error::Config(format!("unknown baseline `{s}`"))),
        }
    }
}

/// Search settings without the per-trial seed and target resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchTemplate {
    pub scheme: Scheme,
    pub function: AcquisitionFunction,
    pub target: TargetSize,
    pub outlier_fraction: f64,
    pub acquisition_size: Option<usize>,
    pub initial_size: Option<usize>,
    pub intermediate: IntermediateMembers,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub seeds: Vec<u64>,
    pub baselines: Vec<Baseline>,
    /// Consensus group size over trailing checkpoints of the subset model; 0 disables it.
    pub consensus: usize,
    pub pool: PoolSource,
    pub search: SearchTemplate,
    pub acquisition: ModelSpec,
    pub subset: ModelSpec,
    pub train: TrainConfig,
    pub output_dir: PathBuf,
}

struct Reader {
    kv: KeyValues,
}

impl Reader {
    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.kv.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`"))),
        }
    }

    fn or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.take(key)?.unwrap_or(default))
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        let Some(v) = self.kv.remove(key) else { return Ok(None) };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{s}`"))))
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }
}

fn model_spec(r: &mut Reader, prefix: &str, default: EnsembleConfig) -> Result<ModelSpec> {
    let arch = r.or(&format!("{prefix}.arch"), Architecture::Logistic)?;
    let mode: EnsembleMode = r.or(&format!("{prefix}.ensemble"), default.mode)?;
    let runs = r.or(&format!("{prefix}.runs"), default.runs)?;
    let checkpoints = r.or(&format!("{prefix}.checkpoints"), default.checkpoints)?;
    let stride = r.or(&format!("{prefix}.stride"), default.stride)?;
    let ensemble = EnsembleConfig { mode, runs, checkpoints, stride };
    ensemble.validate()?;
    Ok(ModelSpec { arch, ensemble })
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(KeyValues::parse(text)?)
    }

    pub fn from_kv(kv: KeyValues) -> Result<Self> {
        let mut r = Reader { kv };
        let name = r.or("experiment.name", String::from("experiment"))?;
        let seeds: Vec<u64> = r
            .list("experiment.seeds")?
            .ok_or_else(|| Error::Config("`experiment.seeds` is required".into()))?;
        let baselines = r.list("experiment.baselines")?.unwrap_or_default();
        let consensus = r.or("experiment.consensus", 0usize)?;

        let pool = match r.take::<PathBuf>("pool.path")? {
            Some(path) => PoolSource::File { path, test_path: r.take("pool.test_path")? },
            None => {
                let d = GeneratorSpec::default();
                PoolSource::Generated(GeneratorSpec {
                    classes: r.or("pool.classes", d.classes)?,
                    clusters_per_class: r.or("pool.clusters_per_class", d.clusters_per_class)?,
                    samples_per_cluster: r.or("pool.samples_per_cluster", d.samples_per_cluster)?,
                    dim: r.or("pool.dim", d.dim)?,
                    cluster_std: r.or("pool.cluster_std", d.cluster_std)?,
                    center_spread: r.or("pool.center_spread", d.center_spread)?,
                    redundancy: r.or("pool.redundancy", d.redundancy)?,
                    label_noise: r.or("pool.label_noise", d.label_noise)?,
                    imbalance: r.list("pool.imbalance")?.unwrap_or_default(),
                    test_samples_per_cluster: r.or("pool.test_samples_per_cluster", d.test_samples_per_cluster)?,
                    seed: 0,
                })
            }
        };

        let target = match (r.take::<usize>("search.target_size")?, r.take::<f64>("search.target_fraction")?) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("set only one of search.target_size and search.target_fraction".into()))
            }
            (Some(n), None) => TargetSize::Absolute(n),
            (None, Some(f)) => TargetSize::Fraction(f),
            (None, None) => TargetSize::Fraction(0.5),
        };
        let search = SearchTemplate {
            scheme: r.or("search.scheme", Scheme::BuildUp)?,
            function: r.or("search.function", AcquisitionFunction::VariationRatios)?,
            target,
            outlier_fraction: r.or("search.outlier_fraction", 0.0)?,
            acquisition_size: r.take("search.acquisition_size")?,
            initial_size: r.take("search.initial_size")?,
            intermediate: r.or("search.intermediate_members", IntermediateMembers::FinalWeights)?,
        };
        let acquisition = model_spec(&mut r, "acquisition", EnsembleConfig::combined(3, 10, 1))?;
        let subset = model_spec(&mut r, "subset", EnsembleConfig::single())?;

        let d = TrainConfig::default();
        let train = TrainConfig {
            learning_rate: r.or("train.learning_rate", d.learning_rate)?,
            decay_factor: r.or("train.decay_factor", d.decay_factor)?,
            decay_epochs: r.list("train.decay_epochs")?.unwrap_or(d.decay_epochs),
            momentum: r.or("train.momentum", d.momentum)?,
            weight_decay: r.or("train.weight_decay", d.weight_decay)?,
            batch_size: r.or("train.batch_size", d.batch_size)?,
            max_epochs: r.or("train.max_epochs", d.max_epochs)?,
            patience: r.or("train.patience", d.patience)?,
            fine_tune_rate: r.or("train.fine_tune_rate", d.fine_tune_rate)?,
            fine_tune_epochs: r.or("train.fine_tune_epochs", d.fine_tune_epochs)?,
            class_weighting: r.or("train.class_weighting", d.class_weighting)?,
            validation_fraction: r.or("train.validation_fraction", d.validation_fraction)?,
            harvest_window: r.or("train.harvest_window", d.harvest_window)?,
        };
        let output_dir = r.or("output.dir", PathBuf::from("results"))?;

        if let Some(key) = r.kv.keys().next() {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        let config = Self { name, seeds, baselines, consensus, pool, search, acquisition, subset, train, output_dir };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("experiment.seeds is empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("experiment.seeds contains duplicates".into()));
        }
        if let TargetSize::Fraction(f) = self.search.target {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("search.target_fraction {f} outside (0, 1]")));
            }
        }
        if self.name.contains('\n') {
            return Err(Error::Config("experiment.name must be one line".into()));
        }
        if let PoolSource::Generated(spec) = &self.pool {
            spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        self.train.validate()
    }

    /// Overrides the trial seeds with a single seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seeds = vec![seed];
        self
    }

    /// Fully resolved config as key-values; parsing it back yields `self`.
    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.insert("experiment.name", self.name.clone());
        kv.insert("experiment.seeds", join(&self.seeds));
        kv.insert("experiment.baselines", self.baselines.iter().map(|b| b.as_str()).collect::<Vec<_>>().join(", "));
        kv.insert("experiment.consensus", self.consensus.to_string());
        match &self.pool {
            PoolSource::File { path, test_path } => {
                kv.insert("pool.path", path.display().to_string());
                if let Some(t) = test_path {
                    kv.insert("pool.test_path", t.display().to_string());
                }
            }
            PoolSource::Generated(g) => {
                kv.insert("pool.classes", g.classes.to_string());
                kv.insert("pool.clusters_per_class", g.clusters_per_class.to_string());
                kv.insert("pool.samples_per_cluster", g.samples_per_cluster.to_string());
                kv.insert("pool.dim", g.dim.to_string());
                kv.insert("pool.cluster_std", format!("{:?}", g.cluster_std));
                kv.insert("pool.center_spread", format!("{:?}", g.center_spread));
                kv.insert("pool.redundancy", format!("{:?}", g.redundancy));
                kv.insert("pool.label_noise", format!("{:?}", g.label_noise));
                kv.insert("pool.imbalance", g.imbalance.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", "));
                kv.insert("pool.test_samples_per_cluster", g.test_samples_per_cluster.to_string());
            }
        }
        let s = &self.search;
        kv.insert("search.scheme", s.scheme.as_str());
        kv.insert("search.function", s.function.as_str());
        match s.target {
            TargetSize::Absolute(n) => kv.insert("search.target_size", n.to_string()),
            TargetSize::Fraction(f) => kv.insert("search.target_fraction", format!("{f:?}")),
        }
        kv.insert("search.outlier_fraction", format!("{:?}", s.outlier_fraction));
        if let Some(k) = s.acquisition_size {
            kv.insert("search.acquisition_size", k.to_string());
        }
        if let Some(k) = s.initial_size {
            kv.insert("search.initial_size", k.to_string());
        }
        kv.insert("search.intermediate_members", s.intermediate.as_str());
        for (prefix, spec) in [("acquisition", &self.acquisition), ("subset", &self.subset)] {
            kv.insert(format!("{prefix}.arch"), spec.arch.to_string());
            kv.insert(format!("{prefix}.ensemble"), spec.ensemble.mode.as_str());
            kv.insert(format!("{prefix}.runs"), spec.ensemble.runs.to_string());
            kv.insert(format!("{prefix}.checkpoints"), spec.ensemble.checkpoints.to_string());
            kv.insert(format!("{prefix}.stride"), spec.ensemble.stride.to_string());
        }
        let t = &self.train;
        kv.insert("train.learning_rate", format!("{:?}", t.learning_rate));
        kv.insert("train.decay_factor", format!("{:?}", t.decay_factor));
        kv.insert("train.decay_epochs", join(&t.decay_epochs));
        kv.insert("train.momentum", format!("{:?}", t.momentum));
        kv.insert("train.weight_decay", format!("{:?}", t.weight_decay));
        kv.insert("train.batch_size", t.batch_size.to_string());
        kv.insert("train.max_epochs", t.max_epochs.to_string());
        kv.insert("train.patience", t.patience.to_string());
        kv.insert("train.fine_tune_rate", format!("{:?}", t.fine_tune_rate));
        kv.insert("train.fine_tune_epochs", t.fine_tune_epochs.to_string());
        kv.insert("train.class_weighting", t.class_weighting.to_string());
        kv.insert("train.validation_fraction", format!("{:?}", t.validation_fraction));
        kv.insert("train.harvest_window", t.harvest_window.to_string());
        kv.insert("output.dir", self.output_dir.display().to_string());
        kv
    }

    pub fn canonical_text(&self) -> String {
        self.to_kv().to_text()
    }

    /// Hex SHA-256 of the canonical text, truncated to 16 digits.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_text().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# comment
experiment.seeds = 3, 1, 2
experiment.baselines = random, full
pool.redundancy = 0.4
search.scheme = automatic_duplication
search.target_size = 800
search.acquisition_size = 100
acquisition.ensemble = seeds
acquisition.runs = 5
subset.arch = mlp-16
train.decay_epochs = 20, 30
";

    #[test]
    fn parses_and_fills_defaults() {
        let c = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.seeds, vec![3, 1, 2]);
        assert_eq!(c.baselines, vec![Baseline::Random, Baseline::Full]);
        assert_eq!(c.search.scheme, Scheme::AutomaticDuplication);
        assert_eq!(c.search.target, TargetSize::Absolute(800));
        assert_eq!(c.acquisition.ensemble.mode, EnsembleMode::Seeds);
        assert_eq!(c.acquisition.ensemble.member_count(), 5);
        assert_eq!(c.subset.arch, Architecture::Mlp { hidden: 16 });
        assert_eq!(c.train.decay_epochs, vec![20, 30]);
        assert_eq!(c.train.momentum, 0.9);
        match &c.pool {
            PoolSource::Generated(g) => assert_eq!(g.redundancy, 0.4),
            other => panic!("unexpected pool {other:?}"),
        }
    }

    #[test]
    fn canonical_text_round_trips_and_hash_ignores_layout() {
        let c = ExperimentConfig::parse(SAMPLE).unwrap();
        let again = ExperimentConfig::parse(&c.canonical_text()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.hash(), c.hash());
        let reordered = SAMPLE.lines().rev().collect::<Vec<_>>().join("\n") + "\ntrain.momentum = 0.9\n";
        assert_eq!(ExperimentConfig::parse(&reordered).unwrap().hash(), c.hash());
        let changed = format!("{SAMPLE}train.momentum = 0.5\n");
        assert_ne!(ExperimentConfig::parse(&changed).unwrap().hash(), c.hash());
        assert_eq!(c.hash().len(), 16);
    }

    #[test]
    fn rejects_bad_configs() {
        for bad in [
            "pool.redundancy = 0.4",
            "experiment.seeds = 1, 1",
            "experiment.seeds =",
            "experiment.seeds = 1\nsearch.colour = blue",
            "experiment.seeds = 1\nsearch.scheme = grow",
            "experiment.seeds = 1\nsearch.target_size = 10\nsearch.target_fraction = 0.5",
            "experiment.seeds = 1\nsearch.target_fraction = 1.5",
            "experiment.seeds = 1\ntrain.learning_rate = -1",
            "experiment.seeds = 1\npool.redundancy = 2",
            "experiment.seeds = x",
        ] {
            let err = ExperimentConfig::parse(bad).unwrap_err();
            assert!(err.is_config(), "{bad:?} gave {err:?}");
        }
    }

    #[test]
    fn file_pools_and_fractions() {
        let c = ExperimentConfig::parse("experiment.seeds = 4\npool.path = data/pool.csv\nsearch.target_fraction = 0.25")
            .unwrap();
        assert_eq!(c.pool, PoolSource::File { path: "data/pool.csv".into(), test_path: None });
        assert_eq!(c.search.target.resolve(2000), 500);
        assert_eq!(ExperimentConfig::parse(&c.canonical_text()).unwrap(), c);
        assert_eq!(c.clone().with_seed(9).seeds, vec![9]);
    }
}
