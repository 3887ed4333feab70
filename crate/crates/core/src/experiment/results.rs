//! Results documents: one JSON file per config hash, holding every run of
//! that config in append order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::acquisition::ScoreSummary;
use crate::analysis::{ClassAccuracy, ConsensusReport};
use crate::error::{Error, Result};
use crate::subset::Scheme;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub unique_count: usize,
    pub total_count: u64,
    pub added: Vec<u64>,
    pub scores: Option<ScoreSummary>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Multiplicity histogram of the subset after this iteration.
    pub histogram: BTreeMap<u32, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub name: String,
    pub size: usize,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub unique_count: usize,
    pub total_count: u64,
    /// Content hash of the final subset, hex.
    pub subset_hash: String,
    pub test_accuracy: f64,
    pub per_class: Vec<ClassAccuracy>,
    /// Subset-model accuracy on the selected ids.
    pub selected_accuracy: Option<f64>,
    /// Subset-model accuracy on the rest of the pool.
    pub unselected_accuracy: Option<f64>,
    pub histogram: BTreeMap<u32, u64>,
    pub consensus: Option<ConsensusReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub scheme: Scheme,
    pub target_size: usize,
    /// Set when the trial failed; the metric fields are then empty.
    pub error: Option<String>,
    pub iterations: Vec<IterationMetrics>,
    pub result: Option<FinalMetrics>,
    pub baselines: Vec<BaselineRecord>,
    pub wall_time_ms: Option<u64>,
}

impl TrialRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Mean and sample standard deviation over the successful trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    /// Scheme name or baseline name.
    pub name: String,
    pub target_size: usize,
    pub trials: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDocument {
    pub started_at_unix: Option<u64>,
    pub trials: Vec<TrialRecord>,
    pub aggregate: Vec<AggregateRow>,
}

impl RunDocument {
    pub fn from_trials(trials: Vec<TrialRecord>) -> Self {
        let aggregate = aggregate(&trials);
        Self { started_at_unix: None, trials, aggregate }
    }

    /// Copy with wall times and timestamps cleared, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        let mut out = self.clone();
        out.started_at_unix = None;
        for t in &mut out.trials {
            t.wall_time_ms = None;
        }
        out
    }
}

/// Groups successful trials by (scheme or baseline, size).
pub fn aggregate<'a>(trials: impl IntoIterator<Item = &'a TrialRecord>) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for t in trials.into_iter().filter(|t| !t.failed()) {
        if let Some(r) = &t.result {
            groups.entry((t.scheme.to_string(), t.target_size)).or_default().push(r.test_accuracy);
        }
        for b in &t.baselines {
            groups.entry((b.name.clone(), b.size)).or_default().push(b.test_accuracy);
        }
    }
    groups
        .into_iter()
        .map(|((name, target_size), acc)| {
            let (mean_accuracy, std_accuracy) = mean_std(&acc);
            AggregateRow { name, target_size, trials: acc.len(), mean_accuracy, std_accuracy }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub schema_version: u32,
    pub config_hash: String,
    pub config_name: String,
    pub config: String,
    pub runs: Vec<RunDocument>,
}

impl ResultsFile {
    pub fn path_for(dir: &Path, hash: &str) -> PathBuf {
        dir.join(format!("results-{hash}.json"))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file: ResultsFile = serde_json::from_slice(&fs::read(path)?)?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "{}: schema version {} (expected {SCHEMA_VERSION})",
                path.display(),
                file.schema_version
            )));
        }
        Ok(file)
    }

    /// Appends `run` to the results file of this config, creating it if
    /// needed. Returns the file path.
    pub fn append(dir: &Path, hash: &str, name: &str, config_text: &str, run: RunDocument) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = Self::path_for(dir, hash);
        let mut file = if path.exists() {
            let existing = Self::read(&path)?;
            if existing.config != config_text || existing.config_hash != hash {
                return Err(Error::HashCollision { path: path.display().to_string(), hash: hash.to_string() });
            }
            existing
        } else {
            ResultsFile {
                schema_version: SCHEMA_VERSION,
                config_hash: hash.to_string(),
                config_name: name.to_string(),
                config: config_text.to_string(),
                runs: Vec::new(),
            }
        };
        file.runs.push(run);
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(&file)?)?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }

    pub fn without_timing(&self) -> Self {
        let mut out = self.clone();
        out.runs = out.runs.iter().map(RunDocument::without_timing).collect();
        out
    }
}
