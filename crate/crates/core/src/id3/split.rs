//! Entropy, information gain and threshold search.

use super::{Id3Error, Result};
use crate::dataset::{Feature, FeatureSet, Occupancy, SlotSample};

/// Gains closer than this are treated as equal when picking a split.
pub const GAIN_TIE_TOLERANCE: f64 = 1e-12;

/// Binary entropy in bits of a (unoccupied, occupied) count pair.
pub(crate) fn entropy_of_counts(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    let mut h = 0.0;
    for c in counts {
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.log2();
        }
    }
    h
}

pub(crate) fn counts<'a>(labels: impl IntoIterator<Item = &'a Occupancy>) -> [usize; 2] {
    let mut c = [0usize; 2];
    for l in labels {
        c[l.index()] += 1;
    }
    c
}

/// Shannon entropy (bits) of a label list; `0 · log 0` is taken as 0.
pub fn entropy(labels: &[Occupancy]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Id3Error::EmptyPartition);
    }
    Ok(entropy_of_counts(counts(labels)))
}

/// Gain of splitting `parent` counts into `left` and the remainder.
fn gain_from_counts(parent: [usize; 2], left: [usize; 2]) -> f64 {
    let right = [parent[0] - left[0], parent[1] - left[1]];
    let n_left = left[0] + left[1];
    let n_right = right[0] + right[1];
    if n_left == 0 || n_right == 0 {
        return 0.0;
    }
    let n = (n_left + n_right) as f64;
    let children = (n_left as f64 / n) * entropy_of_counts(left)
        + (n_right as f64 / n) * entropy_of_counts(right);
    (entropy_of_counts(parent) - children).max(0.0)
}

fn labeled(samples: &[SlotSample]) -> Result<Vec<Occupancy>> {
    samples
        .iter()
        .map(|s| s.label.ok_or(Id3Error::UnlabeledSample(s.slot_id())))
        .collect()
}

/// Information gain of the `feature ≤ threshold` / `> threshold` split.
pub fn information_gain(samples: &[SlotSample], feature: Feature, threshold: f64) -> Result<f64> {
    let labels = labeled(samples)?;
    if labels.is_empty() {
        return Err(Id3Error::EmptyPartition);
    }
    let parent = counts(&labels);
    let mut left = [0usize; 2];
    for (s, l) in samples.iter().zip(&labels) {
        if s.feature(feature) <= threshold {
            left[l.index()] += 1;
        }
    }
    Ok(gain_from_counts(parent, left))
}

/// A chosen threshold split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: Feature,
    pub threshold: f64,
    pub gain: f64,
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = (lo + hi) / 2.0;
    // adjacent floats can round up to `hi`, which would stop separating
    if mid < hi {
        mid
    } else {
        lo
    }
}

/// Every candidate split of one feature, thresholds ascending.
fn feature_candidates(
    rows: &[(&SlotSample, Occupancy)],
    parent: [usize; 2],
    feature: Feature,
    min_child: usize,
    out: &mut Vec<Split>,
) {
    let mut sorted: Vec<(f64, Occupancy)> =
        rows.iter().map(|(s, l)| (s.feature(feature), *l)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut left = [0usize; 2];
    for i in 0..sorted.len().saturating_sub(1) {
        left[sorted[i].1.index()] += 1;
        let (lo, hi) = (sorted[i].0, sorted[i + 1].0);
        let n_left = i + 1;
        if lo < hi && n_left >= min_child && sorted.len() - n_left >= min_child {
            out.push(Split {
                feature,
                threshold: midpoint(lo, hi),
                gain: gain_from_counts(parent, left),
            });
        }
    }
}

pub(crate) fn best_split_rows(
    rows: &[(&SlotSample, Occupancy)],
    features: FeatureSet,
    min_child: usize,
) -> Option<Split> {
    if rows.len() < 2 * min_child.max(1) {
        return None;
    }
    let parent = counts(rows.iter().map(|(_, l)| l));
    let mut candidates = Vec::new();
    for f in features.iter() {
        feature_candidates(rows, parent, f, min_child, &mut candidates);
    }
    let best = candidates.iter().map(|c| c.gain).fold(0.0, f64::max);
    if best <= GAIN_TIE_TOLERANCE {
        return None;
    }
    candidates
        .into_iter()
        .find(|c| c.gain >= best - GAIN_TIE_TOLERANCE)
}

/// Highest-gain split over midpoints of consecutive distinct values of each
/// enabled feature. Ties prefer reverberation time, then temperature, then
/// CO2, then the lowest threshold. Unlabeled samples are ignored.
pub fn best_split(samples: &[SlotSample], features: FeatureSet) -> Option<Split> {
    best_split_min_child(samples, features, 1)
}

/// As [`best_split`], but only thresholds leaving at least `min_child`
/// samples on each side are candidates.
pub fn best_split_min_child(
    samples: &[SlotSample],
    features: FeatureSet,
    min_child: usize,
) -> Option<Split> {
    let rows: Vec<(&SlotSample, Occupancy)> = samples
        .iter()
        .filter_map(|s| s.label.map(|l| (s, l)))
        .collect();
    best_split_rows(&rows, features, min_child)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Occupancy::{Occupied as O, Unoccupied as U};

    fn rt(values: &[(f64, Occupancy)]) -> Vec<SlotSample> {
        values
            .iter()
            .enumerate()
            .map(|(i, &(t, l))| SlotSample::new(0, i as u32, 23.0, 700.0, t, Some(l)))
            .collect()
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&[U, U, U]).unwrap(), 0.0);
        assert_eq!(entropy(&[U, U, O, O]).unwrap(), 1.0);
        let oracle = -(0.6f64 * 0.6f64.log2() + 0.4 * 0.4f64.log2());
        let h = entropy(&[O, O, O, U, U]).unwrap();
        assert!((h - oracle).abs() < 1e-15);
        assert!((h - 0.970951).abs() < 1e-6);
        assert!(matches!(entropy(&[]), Err(Id3Error::EmptyPartition)));
    }

    #[test]
    fn gain_examples() {
        let ds = rt(&[(1.45, U), (1.47, U), (0.46, O), (0.52, O)]);
        let f = Feature::ReverberationTime;
        assert_eq!(information_gain(&ds, f, 0.985).unwrap(), 1.0);
        assert_eq!(information_gain(&ds, f, 0.1).unwrap(), 0.0);
        assert_eq!(information_gain(&ds, f, 10.0).unwrap(), 0.0);
        // 0.49 isolates one occupied sample: 1 - 3/4·H(1/3)
        let h13 = -(1.0 / 3.0 * (1.0f64 / 3.0).log2() + 2.0 / 3.0 * (2.0f64 / 3.0).log2());
        let g = information_gain(&ds, f, 0.49).unwrap();
        assert!((g - (1.0 - 0.75 * h13)).abs() < 1e-15);
    }

    #[test]
    fn best_split_examples() {
        let ds = rt(&[(1.45, U), (1.47, U), (0.46, O), (0.52, O)]);
        let s = best_split(&ds, FeatureSet::ALL).unwrap();
        assert_eq!(s.feature, Feature::ReverberationTime);
        assert_eq!(s.threshold, 0.985);
        assert_eq!(s.gain, 1.0);
    }

    #[test]
    fn identical_features_give_no_split() {
        let ds = rt(&[(1.0, U), (1.0, O), (1.0, O)]);
        assert_eq!(best_split(&ds, FeatureSet::ALL), None);
    }

    #[test]
    fn tie_prefers_reverberation_then_temperature() {
        let mut ds = rt(&[(1.5, U), (1.4, U), (0.4, O), (0.5, O)]);
        for (s, t) in ds.iter_mut().zip([23.2, 23.3, 22.9, 22.8]) {
            s.temperature = t;
        }
        let s = best_split(&ds, FeatureSet::ALL).unwrap();
        assert_eq!((s.feature, s.gain), (Feature::ReverberationTime, 1.0));
        let no_rt = FeatureSet::only(Feature::Temperature).with(Feature::Co2);
        let s = best_split(&ds, no_rt).unwrap();
        assert_eq!(s.feature, Feature::Temperature);
        assert!((s.threshold - 23.05).abs() < 1e-12);
    }

    #[test]
    fn min_child_excludes_small_sides() {
        let ds = rt(&[(0.4, O), (1.0, U), (1.1, U), (1.2, U), (1.3, O), (1.4, U)]);
        let s = best_split(&ds, FeatureSet::ALL).unwrap();
        assert_eq!(s.threshold, 0.7);
        let s = best_split_min_child(&ds, FeatureSet::ALL, 2).unwrap();
        assert!(s.threshold > 1.0 && s.threshold < 1.3, "{s:?}");
        assert_eq!(best_split_min_child(&ds, FeatureSet::ALL, 4), None);
    }

    #[test]
    fn midpoint_of_adjacent_floats_still_separates() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let m = midpoint(lo, hi);
        assert!(lo <= m && m < hi);
    }
}
