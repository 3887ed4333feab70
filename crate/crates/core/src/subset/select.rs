use std::cmp::Ordering;
use std::collections::HashSet;

use crate::acquisition::AcquisitionScores;
use crate::error::{Error, Result};
use crate::pool::SampleId;

/// Descending score, then ascending id.
fn by_priority(a: &(SampleId, f64), b: &(SampleId, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Non-excluded ids in selection order.
pub fn rank(scores: &AcquisitionScores, excluded: &HashSet<SampleId>) -> Vec<SampleId> {
    let mut candidates: Vec<(SampleId, f64)> =
        scores.iter().filter(|(id, _)| !excluded.contains(id)).collect();
    candidates.sort_unstable_by(by_priority);
    candidates.into_iter().map(|(id, _)| id).collect()
}

/// The `k` highest-scoring ids not in `excluded`, ordered by descending
/// score with ties going to the lower id.
pub fn select_top_k(
    scores: &AcquisitionScores,
    k: usize,
    excluded: &HashSet<SampleId>,
) -> Result<Vec<SampleId>> {
    let mut candidates: Vec<(SampleId, f64)> =
        scores.iter().filter(|(id, _)| !excluded.contains(id)).collect();
    if k > candidates.len() {
        return Err(Error::SelectionTooLarge { k, available: candidates.len() });
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, by_priority);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(by_priority);
    Ok(candidates.into_iter().map(|(id, _)| id).collect())
}

/// Number of top-ranked candidates skipped as outliers.
pub fn outlier_skip(candidates: usize, outlier_fraction: f64) -> usize {
    // the epsilon absorbs products like 0.29 * 100 = 28.999...
    ((outlier_fraction * candidates as f64) + 1e-9).floor() as usize
}

/// Skips the top `⌊f·N⌋` candidates (N = non-excluded count) and returns the next `k`.
pub fn outlier_window_select(
    scores: &AcquisitionScores,
    k: usize,
    outlier_fraction: f64,
    excluded: &HashSet<SampleId>,
) -> Result<Vec<SampleId>> {
    if !(0.0..1.0).contains(&outlier_fraction) {
        return Err(Error::Config(format!("outlier fraction {outlier_fraction} outside [0, 1)")));
    }
    if outlier_fraction == 0.0 {
        return select_top_k(scores, k, excluded);
    }
    let ranked = rank(scores, excluded);
    let skip = outlier_skip(ranked.len(), outlier_fraction);
    if skip + k > ranked.len() {
        return Err(Error::OutlierWindow { skip, k, pool: ranked.len() });
    }
    Ok(ranked[skip..skip + k].to_vec())
}

/// Subset sizes of the doubling loop: `[⌊n/8⌋, ⌊n/4⌋, ⌊n/2⌋, n]`.
pub fn growth_schedule(target: usize) -> Result<Vec<usize>> {
    if target < 8 {
        return Err(Error::ScheduleTooSmall(target));
    }
    Ok(vec![target / 8, target / 4, target / 2, target])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::AcquisitionFunction;
    use proptest::prelude::*;

    fn scores(values: &[f64]) -> AcquisitionScores {
        AcquisitionScores::new(
            AcquisitionFunction::Entropy,
            values.to_vec(),
            (0..values.len() as u64).map(SampleId).collect(),
        )
        .unwrap()
    }

    fn ids(v: &[u64]) -> Vec<SampleId> {
        v.iter().copied().map(SampleId).collect()
    }

    #[test]
    fn top_k_breaks_ties_by_lower_id() {
        let s = scores(&[0.9, 0.1, 0.5, 0.5]);
        assert_eq!(select_top_k(&s, 2, &HashSet::new()).unwrap(), ids(&[0, 2]));
        assert_eq!(select_top_k(&s, 4, &HashSet::new()).unwrap(), ids(&[0, 2, 3, 1]));
        assert!(select_top_k(&s, 0, &HashSet::new()).unwrap().is_empty());
        assert!(matches!(
            select_top_k(&s, 5, &HashSet::new()),
            Err(Error::SelectionTooLarge { k: 5, available: 4 })
        ));
    }

    #[test]
    fn exclusions_are_respected() {
        let s = scores(&[0.9, 0.1, 0.5, 0.5]);
        let ex: HashSet<SampleId> = ids(&[0, 2]).into_iter().collect();
        assert_eq!(select_top_k(&s, 2, &ex).unwrap(), ids(&[3, 1]));
        assert!(select_top_k(&s, 3, &ex).is_err());
    }

    #[test]
    fn outlier_window_examples() {
        // Eight distinct scores, descending with id: rank r is id r.
        let s = scores(&[0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1]);
        assert_eq!(outlier_window_select(&s, 4, 0.25, &HashSet::new()).unwrap(), ids(&[2, 3, 4, 5]));
        assert_eq!(
            outlier_window_select(&s, 3, 0.0, &HashSet::new()).unwrap(),
            select_top_k(&s, 3, &HashSet::new()).unwrap()
        );
        assert!(matches!(
            outlier_window_select(&s, 7, 0.25, &HashSet::new()),
            Err(Error::OutlierWindow { skip: 2, k: 7, pool: 8 })
        ));
        assert!(outlier_window_select(&s, 1, 1.0, &HashSet::new()).is_err());
    }

    #[test]
    fn fifty_thousand_pool_window_is_37_5_to_87_5_percentile() {
        // 50k pool, 50% selected, 12.5% outliers
        let n = 50_000usize;
        let values: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let s = AcquisitionScores::new(
            AcquisitionFunction::MutualInformation,
            values,
            (0..n as u64).map(SampleId).collect(),
        )
        .unwrap();
        let chosen = outlier_window_select(&s, n / 2, 0.125, &HashSet::new()).unwrap();
        // ascending percentile of id i is i / n
        let lo = chosen.iter().map(|id| id.0).min().unwrap() as f64 / n as f64;
        let hi = (chosen.iter().map(|id| id.0).max().unwrap() + 1) as f64 / n as f64;
        assert_eq!((lo, hi), (0.375, 0.875));
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(growth_schedule(400).unwrap(), vec![50, 100, 200, 400]);
        assert_eq!(growth_schedule(8).unwrap(), vec![1, 2, 4, 8]);
        assert_eq!(growth_schedule(25).unwrap(), vec![3, 6, 12, 25]);
        assert_eq!(growth_schedule(25_000).unwrap(), vec![3125, 6250, 12500, 25000]);
        assert!(matches!(growth_schedule(7), Err(Error::ScheduleTooSmall(7))));
    }

    proptest! {
        #[test]
        fn exclusion_equals_restriction(
            values in proptest::collection::vec(0u8..6, 1..40),
            mask in proptest::collection::vec(any::<bool>(), 40),
            k_frac in 0.0f64..=1.0,
        ) {
            let all = scores(&values.iter().map(|&v| v as f64 / 5.0).collect::<Vec<_>>());
            let excluded: HashSet<SampleId> =
                all.sample_ids.iter().copied().filter(|id| mask[id.0 as usize]).collect();
            let (kept_ids, kept_scores): (Vec<SampleId>, Vec<f64>) =
                all.iter().filter(|(id, _)| !excluded.contains(id)).unzip();
            let restricted = AcquisitionScores::new(all.function, kept_scores, kept_ids).unwrap();
            let k = (k_frac * restricted.len() as f64).floor() as usize;
            prop_assert_eq!(
                select_top_k(&all, k, &excluded).unwrap(),
                select_top_k(&restricted, k, &HashSet::new()).unwrap()
            );
        }

        #[test]
        fn strictly_monotone_transform_keeps_selection(
            values in proptest::collection::vec(-5.0f64..5.0, 1..50),
            k_frac in 0.0f64..=1.0,
        ) {
            let a = scores(&values);
            let b = scores(&values.iter().map(|v| v.exp() * 3.0 + 1.0).collect::<Vec<_>>());
            let k = (k_frac * values.len() as f64).floor() as usize;
            prop_assert_eq!(
                select_top_k(&a, k, &HashSet::new()).unwrap(),
                select_top_k(&b, k, &HashSet::new()).unwrap()
            );
        }

        #[test]
        fn top_k_agrees_with_full_sort(values in proptest::collection::vec(0u8..4, 0..60), k_frac in 0.0f64..=1.0) {
            let s = scores(&values.iter().map(|&v| v as f64).collect::<Vec<_>>());
            let k = (k_frac * values.len() as f64).floor() as usize;
            let full = rank(&s, &HashSet::new());
            prop_assert_eq!(select_top_k(&s, k, &HashSet::new()).unwrap(), full[..k].to_vec());
        }
    }
}
