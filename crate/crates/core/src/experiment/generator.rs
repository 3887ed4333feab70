//! Seeded Gaussian-mixture pools with near-duplicate copies and label noise.

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool::{LabeledPool, SampleId};
use crate::seed;

/// Standard deviation of a copy's jitter, relative to the cluster spread.
pub const JITTER_SCALE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub classes: usize,
    pub clusters_per_class: usize,
    /// Pool samples per cluster before the imbalance ratio is applied.
    pub samples_per_cluster: usize,
    pub dim: usize,
    /// Standard deviation of each cluster around its center.
    pub cluster_std: f64,
    /// Standard deviation of the cluster centers around the origin.
    pub center_spread: f64,
    /// Fraction of the pool that are jittered copies of other pool samples.
    pub redundancy: f64,
    /// Fraction of the pool whose label is replaced by a different class.
    pub label_noise: f64,
    /// Per-class size multipliers; empty means balanced.
    pub imbalance: Vec<f64>,
    /// Clean test samples per cluster (imbalance applies here too).
    pub test_samples_per_cluster: usize,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            classes: 4,
            clusters_per_class: 2,
            samples_per_cluster: 250,
            dim: 8,
            cluster_std: 1.0,
            center_spread: 1.5,
            redundancy: 0.0,
            label_noise: 0.0,
            imbalance: Vec::new(),
            test_samples_per_cluster: 250,
            seed: 0,
        }
    }
}

impl GeneratorSpec {
    fn ratio(&self, class: usize) -> f64 {
        self.imbalance.get(class).copied().unwrap_or(1.0)
    }

    fn cluster_sizes(&self, per_cluster: usize) -> Vec<usize> {
        (0..self.classes * self.clusters_per_class)
            .map(|c| (per_cluster as f64 * self.ratio(c / self.clusters_per_class)).round() as usize)
            .collect()
    }

    pub fn pool_size(&self) -> usize {
        self.cluster_sizes(self.samples_per_cluster).iter().sum()
    }

    pub fn copy_count(&self) -> usize {
        (self.redundancy * self.pool_size() as f64).round() as usize
    }

    pub fn noisy_count(&self) -> usize {
        (self.label_noise * self.pool_size() as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(format!("generator: {msg}")));
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.clusters_per_class == 0 || self.dim == 0 {
            return bad("clusters per class and dimension must be positive".into());
        }
        for (name, rate) in [("redundancy", self.redundancy), ("label noise", self.label_noise)] {
            if !(0.0..=1.0).contains(&rate) {
                return bad(format!("{name} {rate} outside [0, 1]"));
            }
        }
        if !self.imbalance.is_empty() && self.imbalance.len() != self.classes {
            return bad(format!("{} imbalance ratios for {} classes", self.imbalance.len(), self.classes));
        }
        if self.imbalance.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return bad("imbalance ratios must be positive".into());
        }
        if !(self.cluster_std.is_finite() && self.cluster_std > 0.0 && self.center_spread.is_finite() && self.center_spread >= 0.0) {
            return bad("cluster_std must be positive and center_spread non-negative".into());
        }
        let sizes = self.cluster_sizes(self.samples_per_cluster);
        let n: usize = sizes.iter().sum();
        if n == 0 {
            return bad("spec produces zero samples".into());
        }
        // every non-empty cluster keeps one original to copy from
        let anchors = sizes.iter().filter(|&&s| s > 0).count();
        if self.copy_count() > n - anchors {
            return bad(format!("{} copies leave a cluster without originals", self.copy_count()));
        }
        Ok(())
    }
}

/// Provenance of one pool sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub id: SampleId,
    pub cluster: usize,
    /// Class of the generating cluster.
    pub true_label: usize,
    /// Source sample when this is a jittered copy.
    pub copy_of: Option<SampleId>,
    pub noisy: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPool {
    pub pool: LabeledPool,
    /// Clean held-out samples from the same mixture.
    pub test: LabeledPool,
    /// Parallel to the pool's rows.
    pub meta: Vec<SampleMeta>,
}

impl GeneratedPool {
    pub fn copies(&self) -> usize {
        self.meta.iter().filter(|m| m.copy_of.is_some()).count()
    }

    pub fn noisy_ids(&self) -> Vec<SampleId> {
        self.meta.iter().filter(|m| m.noisy).map(|m| m.id).collect()
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn draw_points(
    centers: &[Vec<f64>],
    sizes: &[usize],
    std: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut points = Vec::new();
    let mut clusters = Vec::new();
    for (c, (&size, center)) in sizes.iter().zip(centers).enumerate() {
        for _ in 0..size {
            points.push(center.iter().map(|&mu| mu + std * gaussian(rng)).collect());
            clusters.push(c);
        }
    }
    (points, clusters)
}

pub fn generate_pool(spec: &GeneratorSpec) -> Result<GeneratedPool> {
    spec.validate()?;
    let k = spec.classes;
    let cpc = spec.clusters_per_class;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_named(spec.seed, "centers"));
    let centers: Vec<Vec<f64>> = (0..k * cpc)
        .map(|_| (0..spec.dim).map(|_| spec.center_spread * gaussian(&mut rng)).collect())
        .collect();

    let sizes = spec.cluster_sizes(spec.samples_per_cluster);
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_named(spec.seed, "pool"));
    let (mut points, clusters) = draw_points(&centers, &sizes, spec.cluster_std, &mut rng);
    let n = points.len();

    // The first row of each cluster is an anchor and never becomes a copy.
    let mut cluster_start = Vec::with_capacity(sizes.len());
    let mut offset = 0;
    for &s in &sizes {
        cluster_start.push(offset);
        offset += s;
    }
    let replaceable: Vec<usize> = (0..n).filter(|&i| cluster_start[clusters[i]] != i).collect();
    let mut is_copy = vec![false; n];
    for j in index::sample(&mut rng, replaceable.len(), spec.copy_count()) {
        is_copy[replaceable[j]] = true;
    }
    let mut copy_source: Vec<Option<usize>> = vec![None; n];
    for c in 0..sizes.len() {
        let rows = cluster_start[c]..cluster_start[c] + sizes[c];
        let originals: Vec<usize> = rows.clone().filter(|&i| !is_copy[i]).collect();
        for i in rows.filter(|&i| is_copy[i]) {
            let src = originals[rng.random_range(0..originals.len())];
            let jitter = JITTER_SCALE * spec.cluster_std;
            points[i] = points[src].iter().map(|&x| x + jitter * gaussian(&mut rng)).collect();
            copy_source[i] = Some(src);
        }
    }

    let true_labels: Vec<usize> = clusters.iter().map(|&c| c / cpc).collect();
    let mut labels = true_labels.clone();
    let mut noisy = vec![false; n];
    for i in index::sample(&mut rng, n, spec.noisy_count()) {
        let shift = rng.random_range(1..k);
        labels[i] = (true_labels[i] + shift) % k;
        noisy[i] = true;
    }

    let mut ids: Vec<u64> = (0..n as u64).collect();
    ids.shuffle(&mut rng);
    let meta = (0..n)
        .map(|i| SampleMeta {
            id: SampleId(ids[i]),
            cluster: clusters[i],
            true_label: true_labels[i],
            copy_of: copy_source[i].map(|s| SampleId(ids[s])),
            noisy: noisy[i],
        })
        .collect();
    let pool = LabeledPool::new(
        points.into_iter().flatten().collect(),
        labels,
        ids.into_iter().map(SampleId).collect(),
        spec.dim,
        k,
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_named(spec.seed, "test"));
    let test_sizes = spec.cluster_sizes(spec.test_samples_per_cluster);
    let (test_points, test_clusters) = draw_points(&centers, &test_sizes, spec.cluster_std, &mut rng);
    let t = test_points.len();
    if t == 0 {
        return Err(Error::InvalidSpec("generator: spec produces an empty test set".into()));
    }
    let test = LabeledPool::new(
        test_points.into_iter().flatten().collect(),
        test_clusters.iter().map(|&c| c / cpc).collect(),
        (0..t as u64).map(SampleId).collect(),
        spec.dim,
        k,
    )?;
    Ok(GeneratedPool { pool, test, meta })
}
