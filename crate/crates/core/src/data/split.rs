//! Known/new class selection and labeled-sample selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, FeatureMatrix, LabelVector};
use crate::derive_seed;

/// How labeled samples are drawn from the known classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabeledSampling {
    /// `labeled_ratio` of each known class, rounded half-up per class.
    #[default]
    PerClass,
    /// `labeled_ratio` of all known-class samples pooled together.
    Global,
}

/// Features plus the semi-supervised view of their ground truth.
///
/// `truth` is complete and is only meant for evaluation; training code sees
/// labels through [`SplitDataset::labeled_indices`].
#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub features: FeatureMatrix,
    pub truth: LabelVector,
    pub labeled_mask: Vec<bool>,
    /// Sorted ids of the known classes.
    pub known_classes: Vec<usize>,
    pub seed: u64,
}

impl SplitDataset {
    pub fn n_samples(&self) -> usize {
        self.truth.len()
    }

    pub fn n_classes(&self) -> usize {
        self.truth.n_classes()
    }

    pub fn labeled_indices(&self) -> Vec<usize> {
        self.labeled_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| l.then_some(i))
            .collect()
    }

    /// Position of `class` within `known_classes`, i.e. its pre-training target id.
    pub fn known_index(&self, class: usize) -> Option<usize> {
        self.known_classes.binary_search(&class).ok()
    }
}

/// Rounds `ratio * count` half-up.
pub(crate) fn round_half_up(ratio: f64, count: usize) -> usize {
    // the epsilon keeps products like 0.35 * 10 = 3.4999999999999996 on the intended side
    (ratio * count as f64 + 0.5 + 1e-9).floor() as usize
}

fn check_ratio(name: &'static str, value: f64) -> Result<(), DataError> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(DataError::InvalidRatio { name, value })
    }
}

/// Picks `round(known_ratio * n_classes)` known classes at random, then marks
/// labeled samples among them.
pub fn make_split(
    features: FeatureMatrix,
    truth: LabelVector,
    known_ratio: f64,
    labeled_ratio: f64,
    sampling: LabeledSampling,
    seed: u64,
) -> Result<SplitDataset, DataError> {
    check_ratio("known_ratio", known_ratio)?;
    let n_classes = truth.n_classes();
    if n_classes < 2 {
        return Err(DataError::TooFewClasses(n_classes));
    }
    let n_known = round_half_up(known_ratio, n_classes).clamp(1, n_classes);
    let mut classes: Vec<usize> = (0..n_classes).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    classes.shuffle(&mut rng);
    let mut known = classes[..n_known].to_vec();
    known.sort_unstable();
    make_split_with_known(features, truth, known, labeled_ratio, sampling, seed)
}

/// Same as [`make_split`] but with a fixed set of known classes.
pub fn make_split_with_known(
    features: FeatureMatrix,
    truth: LabelVector,
    mut known_classes: Vec<usize>,
    labeled_ratio: f64,
    sampling: LabeledSampling,
    seed: u64,
) -> Result<SplitDataset, DataError> {
    check_ratio("labeled_ratio", labeled_ratio)?;
    if features.rows() != truth.len() {
        return Err(DataError::InvalidArgument(format!(
            "{} feature rows but {} labels",
            features.rows(),
            truth.len()
        )));
    }
    let n_classes = truth.n_classes();
    if n_classes < 2 {
        return Err(DataError::TooFewClasses(n_classes));
    }
    known_classes.sort_unstable();
    known_classes.dedup();
    if known_classes.is_empty() {
        return Err(DataError::InvalidArgument("no known classes".into()));
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in truth.iter().enumerate() {
        members[c].push(i);
    }
    for &c in &known_classes {
        if members.get(c).is_none_or(Vec::is_empty) {
            return Err(DataError::EmptyKnownClass(c));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let mut labeled_mask = vec![false; truth.len()];
    match sampling {
        LabeledSampling::PerClass => {
            for &c in &known_classes {
                let mut pool = members[c].clone();
                pool.shuffle(&mut rng);
                let take = round_half_up(labeled_ratio, pool.len()).min(pool.len());
                for &i in &pool[..take] {
                    labeled_mask[i] = true;
                }
            }
        }
        LabeledSampling::Global => {
            let mut pool: Vec<usize> = known_classes
                .iter()
                .flat_map(|&c| members[c].iter().copied())
                .collect();
            pool.sort_unstable();
            pool.shuffle(&mut rng);
            let take = round_half_up(labeled_ratio, pool.len()).min(pool.len());
            for &i in &pool[..take] {
                labeled_mask[i] = true;
            }
        }
    }

    Ok(SplitDataset {
        features,
        truth,
        labeled_mask,
        known_classes,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced(n_classes: usize, per_class: usize) -> (FeatureMatrix, LabelVector) {
        let labels: LabelVector = (0..n_classes)
            .flat_map(|c| std::iter::repeat_n(c, per_class))
            .collect();
        let features = FeatureMatrix::zeros(labels.len(), 1);
        (features, labels)
    }

    fn split(n_classes: usize, per: usize, known: f64, labeled: f64, seed: u64) -> SplitDataset {
        let (f, l) = balanced(n_classes, per);
        make_split(f, l, known, labeled, LabeledSampling::PerClass, seed).unwrap()
    }

    #[test]
    fn known_class_counts_match_benchmark_protocol() {
        assert_eq!(split(150, 2, 0.75, 0.5, 3).known_classes.len(), 113);
        assert_eq!(split(77, 2, 0.75, 0.5, 3).known_classes.len(), 58);
    }

    #[test]
    fn full_ratios_label_everything() {
        let s = split(5, 7, 1.0, 1.0, 11);
        assert!(s.labeled_mask.iter().all(|&m| m));
    }

    #[test]
    fn per_class_counts_and_subset_property() {
        let s = split(10, 100, 0.75, 0.1, 4);
        assert_eq!(s.known_classes.len(), 8);
        assert_eq!(s.labeled_indices().len(), 80);
        for i in s.labeled_indices() {
            assert!(s.known_classes.contains(&s.truth[i]));
        }
        for &c in &s.known_classes {
            let n = s
                .labeled_indices()
                .iter()
                .filter(|&&i| s.truth[i] == c)
                .count();
            assert_eq!(n, 10);
        }
    }

    #[test]
    fn seed_changes_selection_not_counts() {
        let a = split(10, 30, 0.5, 0.2, 1);
        let b = split(10, 30, 0.5, 0.2, 2);
        assert_eq!(a.known_classes.len(), b.known_classes.len());
        assert_eq!(a.labeled_indices().len(), b.labeled_indices().len());
        assert!(a.known_classes != b.known_classes || a.labeled_mask != b.labeled_mask);
        let a2 = split(10, 30, 0.5, 0.2, 1);
        assert_eq!(a.known_classes, a2.known_classes);
        assert_eq!(a.labeled_mask, a2.labeled_mask);
    }

    #[test]
    fn global_sampling_total() {
        let (f, l) = balanced(4, 25);
        let s = make_split(f, l, 0.5, 0.1, LabeledSampling::Global, 9).unwrap();
        assert_eq!(s.labeled_indices().len(), 5);
        for i in s.labeled_indices() {
            assert!(s.known_classes.contains(&s.truth[i]));
        }
    }

    #[test]
    fn errors() {
        let (f, l) = balanced(1, 10);
        assert!(matches!(
            make_split(f, l, 0.5, 0.5, LabeledSampling::PerClass, 0),
            Err(DataError::TooFewClasses(1))
        ));
        // class 1 has no samples
        let l = LabelVector::new(vec![0, 0, 2, 2]);
        let f = FeatureMatrix::zeros(4, 1);
        assert!(matches!(
            make_split_with_known(f, l, vec![0, 1], 0.5, LabeledSampling::PerClass, 0),
            Err(DataError::EmptyKnownClass(1))
        ));
        let (f, l) = balanced(3, 3);
        assert!(matches!(
            make_split(f, l, 0.0, 0.5, LabeledSampling::PerClass, 0),
            Err(DataError::InvalidRatio { .. })
        ));
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round_half_up(0.75, 150), 113);
        assert_eq!(round_half_up(0.1, 15), 2);
        assert_eq!(round_half_up(0.1, 14), 1);
        assert_eq!(round_half_up(0.35, 10), 4);
        assert_eq!(round_half_up(0.25, 10), 3);
    }
}
