use std::collections::BTreeSet;

use rand::Rng;

use crate::{Error, Result};

/// All positives plus `negatives` distinct labels drawn uniformly from the
/// complement (the whole complement when it is smaller). Sorted ascending.
pub fn sample_labels<R: Rng + ?Sized>(
    positives: &BTreeSet<usize>,
    negatives: usize,
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if positives.is_empty() {
        return Err(Error::Validation("document has no positive labels".into()));
    }
    if let Some(&bad) = positives.iter().find(|&&l| l >= k) {
        return Err(Error::Validation(format!(
            "positive label {bad} outside label space of {k}"
        )));
    }
    let complement: Vec<usize> = (0..k).filter(|l| !positives.contains(l)).collect();
    let mut subset: Vec<usize> = positives.iter().copied().collect();
    if negatives >= complement.len() {
        subset.extend_from_slice(&complement);
    } else {
        subset.extend(
            rand::seq::index::sample(rng, complement.len(), negatives)
                .into_iter()
                .map(|i| complement[i]),
        );
    }
    subset.sort_unstable();
    Ok(subset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn seeded_subset_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pos: BTreeSet<usize> = [1, 3].into();
        let s = sample_labels(&pos, 3, 100, &mut rng).unwrap();
        assert_eq!(s.len(), 5);
        assert!(s.contains(&1) && s.contains(&3));
        let uniq: BTreeSet<_> = s.iter().collect();
        assert_eq!(uniq.len(), 5);
    }

    #[test]
    fn saturates_and_zero_negatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pos: BTreeSet<usize> = [0, 4].into();
        assert_eq!(
            sample_labels(&pos, 3, 5, &mut rng).unwrap(),
            vec![0, 1, 2, 3, 4]
        );
        assert_eq!(sample_labels(&pos, 0, 5, &mut rng).unwrap(), vec![0, 4]);
        assert!(sample_labels(&BTreeSet::new(), 1, 5, &mut rng).is_err());
        assert!(sample_labels(&[7].into(), 1, 5, &mut rng).is_err());
    }

    #[test]
    fn deterministic_given_rng_state() {
        let pos: BTreeSet<usize> = [2].into();
        let a = sample_labels(&pos, 4, 50, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_labels(&pos, 4, 50, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn superset_of_positives_with_bounded_size(
            pos in proptest::collection::btree_set(0usize..40, 1..10),
            negatives in 0usize..50,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = sample_labels(&pos, negatives, 40, &mut rng).unwrap();
            prop_assert!(pos.iter().all(|p| s.contains(p)));
            prop_assert_eq!(s.len(), (pos.len() + negatives).min(40));
            prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
