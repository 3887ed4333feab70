//! Parameter snapshots and their on-disk store.
//!
//! A checkpoint file (`run<seed>_ep<epoch>.alck`) is little-endian:
//!
//! ```text
//! b"ALCK" | u16 version = 1 | u8 arch (0 logistic, 1 mlp) | u32 D | u32 K
//! | u32 hidden | u64 run seed | u32 epoch | u64 subset hash
//! | weights as f32, in ModelParams layout order
//! ```
//!
//! Weights are stored in single precision, so a loaded checkpoint equals the
//! in-memory one rounded to `f32`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::learner::model::{Architecture, ModelParams};
use crate::learner::train::TrainingRun;

const MAGIC: &[u8; 4] = b"ALCK";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 4 + 4 + 4 + 8 + 4 + 8;
const MANIFEST: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub run_seed: u64,
    pub epoch: u32,
    /// Digest of the training multiset the run used.
    pub subset_hash: u64,
}

impl Checkpoint {
    pub fn file_name(&self) -> String {
        format!("run{}_ep{}.alck", self.run_seed, self.epoch)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let mut out = Vec::with_capacity(HEADER_LEN + p.weights.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(match p.arch {
            Architecture::Logistic => 0,
            Architecture::Mlp { .. } => 1,
        });
        out.extend_from_slice(&(p.dim as u32).to_le_bytes());
        out.extend_from_slice(&(p.classes as u32).to_le_bytes());
        out.extend_from_slice(&(p.arch.hidden() as u32).to_le_bytes());
        out.extend_from_slice(&self.run_seed.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.subset_hash.to_le_bytes());
        for &w in &p.weights {
            out.extend_from_slice(&(w as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format("truncated ALCK header".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format("bad ALCK magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported ALCK version {version}")));
        }
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let u64_at = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        let (dim, classes, hidden) = (u32_at(7) as usize, u32_at(11) as usize, u32_at(15) as usize);
        let arch = match (bytes[6], hidden) {
            (0, 0) => Architecture::Logistic,
            (1, h) if h > 0 => Architecture::Mlp { hidden: h },
            (tag, h) => {
                return Err(Error::Format(format!("bad architecture tag {tag} with hidden width {h}")))
            }
        };
        if dim == 0 || classes == 0 {
            return Err(Error::Format("zero feature or class dimension".into()));
        }
        let run_seed = u64_at(19);
        let epoch = u32_at(27);
        let subset_hash = u64_at(31);
        let count = param_count_checked(arch, dim, classes)
            .ok_or_else(|| Error::Format("ALCK dimensions overflow".into()))?;
        let body = &bytes[HEADER_LEN..];
        if Some(body.len()) != count.checked_mul(4) {
            return Err(Error::Format(format!(
                "ALCK body is {} bytes, {arch} with D={dim}, K={classes} needs {count} weights",
                body.len()
            )));
        }
        let weights: Vec<f64> =
            body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Format("non-finite weight".into()));
        }
        let params = ModelParams::from_weights(arch, dim, classes, weights)?;
        Ok(Self { params, run_seed, epoch, subset_hash })
    }
}

fn param_count_checked(arch: Architecture, dim: usize, classes: usize) -> Option<usize> {
    match arch {
        Architecture::Logistic => classes.checked_mul(dim)?.checked_add(classes),
        Architecture::Mlp { hidden } => hidden
            .checked_mul(dim)?
            .checked_add(hidden)?
            .checked_add(classes.checked_mul(hidden)?)?
            .checked_add(classes),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunMeta {
    pub epochs_run: u32,
    pub best_epoch: u32,
}

/// Checkpoints keyed by (run seed, epoch), with per-run metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckpointStore {
    checkpoints: BTreeMap<(u64, u32), Checkpoint>,
    runs: BTreeMap<u64, RunMeta>,
}

impl CheckpointStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_run(&mut self, run: TrainingRun) -> Result<()> {
        if self.runs.contains_key(&run.run_seed) {
            return Err(Error::Format(format!("run {} already stored", run.run_seed)));
        }
        self.runs.insert(
            run.run_seed,
            RunMeta { epochs_run: run.epochs_run, best_epoch: run.best_epoch },
        );
        for c in run.checkpoints {
            self.checkpoints.insert((c.run_seed, c.epoch), c);
        }
        Ok(())
    }

    /// Run seeds, ascending.
    pub fn runs(&self) -> impl Iterator<Item = (u64, RunMeta)> + '_ {
        self.runs.iter().map(|(&s, &m)| (s, m))
    }

    pub fn run_count(&self) -> usize {
        self.runs.len()
    }

    pub fn get(&self, run_seed: u64, epoch: u32) -> Result<&Checkpoint> {
        self.checkpoints
            .get(&(run_seed, epoch))
            .ok_or(Error::MissingCheckpoint { run: run_seed, epoch })
    }

    pub fn meta(&self, run_seed: u64) -> Result<RunMeta> {
        self.runs.get(&run_seed).copied().ok_or_else(|| Error::MissingRun(run_seed.to_string()))
    }

    /// Stored epochs of one run, ascending.
    pub fn epochs(&self, run_seed: u64) -> Vec<u32> {
        self.checkpoints.range((run_seed, 0)..=(run_seed, u32::MAX)).map(|(&(_, e), _)| e).collect()
    }

    pub fn len(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkpoints.is_empty()
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut manifest = KeyValues::default();
        for (seed, meta) in self.runs() {
            manifest.insert(format!("run.{seed}.epochs"), meta.epochs_run.to_string());
            manifest.insert(format!("run.{seed}.best_epoch"), meta.best_epoch.to_string());
        }
        fs::write(dir.join(MANIFEST), manifest.to_text())?;
        for c in self.checkpoints.values() {
            fs::write(dir.join(c.file_name()), c.to_bytes())?;
        }
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let manifest = KeyValues::parse(&fs::read_to_string(dir.join(MANIFEST))?)?;
        let mut store = Self::new();
        for (key, value) in manifest.iter() {
            let parts: Vec<&str> = key.split('.').collect();
            let (seed, field) = match parts.as_slice() {
                ["run", seed, field] => (*seed, *field),
                _ => return Err(Error::Format(format!("unexpected manifest key `{key}`"))),
            };
            let seed: u64 = seed.parse().map_err(|_| Error::Format(format!("bad run seed `{seed}`")))?;
            let value: u32 = value.parse().map_err(|_| Error::Format(format!("bad value for `{key}`")))?;
            let meta = store.runs.entry(seed).or_insert(RunMeta { epochs_run: 0, best_epoch: 0 });
            match field {
                "epochs" => meta.epochs_run = value,
                "best_epoch" => meta.best_epoch = value,
                _ => return Err(Error::Format(format!("unexpected manifest key `{key}`"))),
            }
        }
        let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
        entries.sort_by_key(|e| e.file_name());
        for entry in entries {
            let name = entry.file_name();
            if !name.to_string_lossy().ends_with(".alck") {
                continue;
            }
            let c = Checkpoint::from_bytes(&fs::read(entry.path())?)?;
            if name.to_string_lossy() != c.file_name() {
                return Err(Error::Format(format!(
                    "{} holds run {} epoch {}",
                    name.to_string_lossy(),
                    c.run_seed,
                    c.epoch
                )));
            }
            if !store.runs.contains_key(&c.run_seed) {
                return Err(Error::MissingRun(c.run_seed.to_string()));
            }
            store.checkpoints.insert((c.run_seed, c.epoch), c);
        }
        Ok(store)
    }
}
