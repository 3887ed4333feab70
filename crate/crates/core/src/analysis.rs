//! Post-hoc diagnostics: ensemble accuracy, checkpoint consensus and
//! duplication accounting.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{argmax, PredictionTensor};
use crate::error::{Error, Result};
use crate::learner::{predict_rows, ModelParams};
use crate::pool::{LabeledPool, SampleId};
use crate::subset::SubsetState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: usize,
    pub count: usize,
    pub correct: usize,
}

impl ClassAccuracy {
    /// `None` when the class does not occur in the evaluated ids.
    pub fn accuracy(&self) -> Option<f64> {
        (self.count > 0).then(|| self.correct as f64 / self.count as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub size: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub per_class: Vec<ClassAccuracy>,
}

/// Top-1 accuracy of the predictive-mean argmax over `ids`.
///
/// Member probabilities are summed in sorted order so the result does not
/// depend on member order.
pub fn evaluate(members: &[ModelParams], pool: &LabeledPool, ids: &[SampleId]) -> Result<EvalReport> {
    if ids.is_empty() {
        return Err(Error::EmptyPartition("evaluation ids"));
    }
    let k = pool.classes();
    let e = members.len();
    let rows = predict_rows(members, pool, ids)?;
    let predictions: Vec<usize> = rows
        .par_iter()
        .map(|row| {
            let mut column = vec![0.0; e];
            let mean: Vec<f64> = (0..k)
                .map(|c| {
                    for (m, slot) in column.iter_mut().enumerate() {
                        *slot = row[m * k + c];
                    }
                    column.sort_unstable_by(f64::total_cmp);
                    column.iter().sum::<f64>() / e as f64
                })
                .collect();
            argmax(&mean)
        })
        .collect();

    let mut per_class: Vec<ClassAccuracy> =
        (0..k).map(|class| ClassAccuracy { class, count: 0, correct: 0 }).collect();
    for (&id, &pred) in ids.iter().zip(&predictions) {
        let label = pool.label_of(id)?;
        per_class[label].count += 1;
        if pred == label {
            per_class[label].correct += 1;
        }
    }
    let correct = per_class.iter().map(|c| c.correct).sum();
    Ok(EvalReport { size: ids.len(), correct, accuracy: correct as f64 / ids.len() as f64, per_class })
}

/// Accuracy on the selected ids and on the rest of the pool.
pub fn selected_unselected_gap(
    members: &[ModelParams],
    pool: &LabeledPool,
    state: &SubsetState,
) -> Result<(EvalReport, EvalReport)> {
    state.validate_against(pool)?;
    let selected: Vec<SampleId> = state.ids().collect();
    let unselected = state.complement(pool);
    if selected.is_empty() {
        return Err(Error::EmptyPartition("selected"));
    }
    if unselected.is_empty() {
        return Err(Error::EmptyPartition("unselected"));
    }
    Ok((evaluate(members, pool, &selected)?, evaluate(members, pool, &unselected)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusReport {
    pub eval_size: usize,
    /// `cumulative[n-1]`: samples on which the last `n` members share the top-1 class.
    pub cumulative: Vec<usize>,
    /// `pairwise[e]`: samples on which members `e` and `e+1` agree.
    pub pairwise: Vec<usize>,
}

/// Agreement counts over a tensor whose members are in epoch order.
pub fn consensus_counts(tensor: &PredictionTensor, n_max: usize) -> Result<ConsensusReport> {
    let e = tensor.members();
    if n_max == 0 || n_max > e {
        return Err(Error::InvalidSpec(format!("consensus group size {n_max} outside 1..={e}")));
    }
    let votes: Vec<Vec<usize>> = (0..tensor.samples())
        .into_par_iter()
        .map(|n| (0..e).map(|m| tensor.vote(n, m)).collect())
        .collect();

    let mut cumulative = vec![0usize; n_max];
    let mut pairwise = vec![0usize; e - 1];
    for v in &votes {
        // longest run of agreement with the newest member, walking backwards
        let newest = v[e - 1];
        let agreeing = v.iter().rev().take_while(|&&c| c == newest).count().min(n_max);
        for slot in &mut cumulative[..agreeing] {
            *slot += 1;
        }
        for (p, w) in pairwise.iter_mut().zip(v.windows(2)) {
            if w[0] == w[1] {
                *p += 1;
            }
        }
    }
    Ok(ConsensusReport { eval_size: tensor.samples(), cumulative, pairwise })
}

/// Number of ids per multiplicity.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicationHistogram {
    pub counts: BTreeMap<u32, u64>,
}

impl DuplicationHistogram {
    pub fn from_counts(counts: impl IntoIterator<Item = (u32, u64)>) -> Result<Self> {
        let mut out = BTreeMap::new();
        for (m, c) in counts {
            if m == 0 {
                return Err(Error::InvalidSpec("multiplicity 0 in histogram".into()));
            }
            if c > 0 {
                *out.entry(m).or_insert(0) += c;
            }
        }
        Ok(Self { counts: out })
    }

    pub fn unique_count(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().map(|(&m, &c)| m as u64 * c).sum()
    }

    /// A state with this histogram over ids `0, 1, ...`.
    pub fn to_state(&self) -> Result<SubsetState> {
        let mut state = SubsetState::new();
        let mut next = 0u64;
        for (&m, &c) in &self.counts {
            for _ in 0..c {
                state.set_multiplicity(SampleId(next), m)?;
                next += 1;
            }
        }
        Ok(state)
    }
}

pub fn duplication_histogram(state: &SubsetState) -> DuplicationHistogram {
    let mut counts = BTreeMap::new();
    for (_, m) in state.iter() {
        *counts.entry(m).or_insert(0u64) += 1;
    }
    DuplicationHistogram { counts }
}
