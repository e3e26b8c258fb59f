//! Pearson contingency coefficient between two labellings.

use std::collections::HashMap;

use super::Partition;
use crate::error::{Error, Result};

/// `C = sqrt(χ² / (χ² + n))` over the contingency table of two labellings.
///
/// Terms of `Σ n_kl² / (n_k n_l)` are summed in sorted order, so the value is
/// exactly symmetric and invariant to relabelling.
pub fn contingency_coefficient<A, B>(a: &[A], b: &[B]) -> Result<f64>
where
    A: Copy + Eq + std::hash::Hash,
    B: Copy + Eq + std::hash::Hash,
{
    if a.len() != b.len() {
        return Err(Error::PartitionSize { partition: a.len(), graph: b.len() });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::DegenerateTable);
    }
    let ra = Partition::from_labels(a);
    let rb = Partition::from_labels(b);
    let (ka, kb) = (ra.community_count(), rb.community_count());

    let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
    let mut row = vec![0u64; ka];
    let mut col = vec![0u64; kb];
    for (&x, &y) in ra.labels().iter().zip(rb.labels()) {
        *cells.entry((x, y)).or_default() += 1;
        row[x] += 1;
        col[y] += 1;
    }
    let mut terms: Vec<f64> = cells
        .iter()
        .map(|(&(x, y), &c)| (c * c) as f64 / (row[x] * col[y]) as f64)
        .collect();
    terms.sort_by(f64::total_cmp);
    let s: f64 = terms.iter().sum();
    let chi2 = (n as f64 * (s - 1.0)).max(0.0);
    Ok((chi2 / (chi2 + n as f64)).sqrt())
}

pub fn contingency_correlation(a: &Partition, b: &Partition) -> Result<f64> {
    contingency_coefficient(a.labels(), b.labels())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_equal_classes() {
        let a: Vec<usize> = (0..100).map(|i| i / 50).collect();
        let c = contingency_coefficient(&a, &a).unwrap();
        assert!((c - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn independent_labellings_score_zero() {
        // 2x2 table with every cell equal to 10.
        let a: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let b: Vec<usize> = (0..40).map(|i| (i / 2) % 2).collect();
        assert_eq!(contingency_coefficient(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn single_station_is_degenerate() {
        assert!(matches!(contingency_coefficient(&[0usize], &[0usize]), Err(Error::DegenerateTable)));
    }

    proptest! {
        #[test]
        fn symmetric_relabel_invariant_and_below_one(
            pairs in prop::collection::vec((0usize..5, 0usize..4), 2..60),
            shift in 1usize..50,
        ) {
            let a: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let c = contingency_coefficient(&a, &b).unwrap();
            prop_assert!((0.0..1.0).contains(&c));
            prop_assert_eq!(c, contingency_coefficient(&b, &a).unwrap());
            let relabeled: Vec<usize> = a.iter().map(|x| (x * 7 + shift) % 97).collect();
            prop_assert_eq!(c, contingency_coefficient(&relabeled, &b).unwrap());
        }
    }
}
