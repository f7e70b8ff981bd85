//! Dominating-class registries.
//!
//! A registration scheme fixes a reference set `G` of possible
//! dominating-class counts (the class count `C` itself is always a member)
//! and one threshold per member. A client's histogram maps to a *category*:
//! the smallest `i` in `G` whose `i`-th largest class proportion clears the
//! threshold, together with the top `i` classes themselves. The registry is
//! the one-hot encoding of that category over a codebook of all
//! `C choose i` combinations per sub-vector, ordered lexicographically.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::ClassHistogram;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("reference set must be non-empty, ascending and end within the class count")]
    BadReferenceSet,
    #[error("reference set must include the class count {0}")]
    MissingFullSet(usize),
    #[error("threshold count {got} does not match reference set size {expected}")]
    ThresholdCountMismatch { got: usize, expected: usize },
    #[error("threshold for the full class set must be 0, got {0}")]
    NonZeroFullSetThreshold(f64),
    #[error("threshold {sigma} for group size {i} is unreachable: the {i}-th largest proportion is at most 1/{i}")]
    UnreachableThreshold { i: usize, sigma: f64 },
    #[error("threshold {0} is outside [0, 1]")]
    ThresholdOutOfRange(f64),
    #[error("registry length too large: {0} slots")]
    CodebookTooLarge(u128),
    #[error("category {0:?} is invalid for this scheme")]
    BadCategory(Vec<usize>),
    #[error("index {index} out of range for group size {i}")]
    RankOutOfRange { index: usize, i: usize },
    #[error("group size {0} is not in the reference set")]
    UnknownGroupSize(usize),
    #[error("histogram has no samples")]
    EmptyHistogram,
    #[error("registry lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("registry must have exactly one set bit")]
    NotOneHot,
}

/// Largest registry we are willing to build; C(52, 2)-scale codebooks are
/// fine, C(52, 26) is not.
const MAX_CODEBOOK_LEN: u128 = 1 << 20;

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 1..=k {
        result = result * (n - (k - i)) as u128 / i as u128;
    }
    result
}

/// A sorted tuple of distinct class indices identifying a registry slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Category(Vec<usize>);

impl Category {
    pub fn new(mut classes: Vec<usize>, class_count: usize) -> Result<Self, RegistryError> {
        classes.sort_unstable();
        let distinct = classes.windows(2).all(|w| w[0] < w[1]);
        if classes.is_empty() || !distinct || *classes.last().unwrap() >= class_count {
            return Err(RegistryError::BadCategory(classes));
        }
        Ok(Category(classes))
    }

    pub fn classes(&self) -> &[usize] {
        &self.0
    }

    pub fn size(&self) -> usize {
        self.0.len()
    }
}

/// The codebook layout: reference set, thresholds, sub-vector geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryScheme {
    class_count: usize,
    group_sizes: Vec<usize>,
    thresholds: Vec<f64>,
    sub_lengths: Vec<usize>,
    offsets: Vec<usize>,
    total_length: usize,
}

impl RegistryScheme {
    /// Validates and lays out a scheme.
    ///
    /// `group_sizes` must be strictly ascending and include `class_count`;
    /// the matching threshold list must end with 0 for the full class set,
    /// and each threshold must be reachable (at most `1/i` for group size
    /// `i`, since the i-th largest of a probability vector cannot exceed it).
    pub fn new(
        class_count: usize,
        group_sizes: Vec<usize>,
        thresholds: Vec<f64>,
    ) -> Result<Self, RegistryError> {
        if group_sizes.is_empty()
            || group_sizes.windows(2).any(|w| w[0] >= w[1])
            || group_sizes[0] == 0
            || *group_sizes.last().unwrap() > class_count
        {
            return Err(RegistryError::BadReferenceSet);
        }
        if *group_sizes.last().unwrap() != class_count {
            return Err(RegistryError::MissingFullSet(class_count));
        }
        if thresholds.len() != group_sizes.len() {
            return Err(RegistryError::ThresholdCountMismatch {
                got: thresholds.len(),
                expected: group_sizes.len(),
            });
        }
        let last_sigma = *thresholds.last().unwrap();
        if last_sigma != 0.0 {
            return Err(RegistryError::NonZeroFullSetThreshold(last_sigma));
        }
        for (&i, &sigma) in group_sizes.iter().zip(&thresholds) {
            if !(0.0..=1.0).contains(&sigma) {
                return Err(RegistryError::ThresholdOutOfRange(sigma));
            }
            if sigma > 1.0 / i as f64 {
                return Err(RegistryError::UnreachableThreshold { i, sigma });
            }
        }
        let mut sub_lengths = Vec::with_capacity(group_sizes.len());
        let mut offsets = Vec::with_capacity(group_sizes.len());
        let mut total: u128 = 0;
        for &i in &group_sizes {
            let len = binomial(class_count, i);
            offsets.push(total as usize);
            total += len;
            if total > MAX_CODEBOOK_LEN {
                return Err(RegistryError::CodebookTooLarge(total));
            }
            sub_lengths.push(len as usize);
        }
        Ok(RegistryScheme {
            class_count,
            group_sizes,
            thresholds,
            sub_lengths,
            offsets,
            total_length: total as usize,
        })
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Total registry length: the sum of `C choose i` over the reference set.
    pub fn total_length(&self) -> usize {
        self.total_length
    }

    pub fn sub_length(&self, group_size: usize) -> Result<usize, RegistryError> {
        Ok(self.sub_lengths[self.group_position(group_size)?])
    }

    pub fn offset(&self, group_size: usize) -> Result<usize, RegistryError> {
        Ok(self.offsets[self.group_position(group_size)?])
    }

    fn group_position(&self, group_size: usize) -> Result<usize, RegistryError> {
        self.group_sizes
            .iter()
            .position(|&g| g == group_size)
            .ok_or(RegistryError::UnknownGroupSize(group_size))
    }

    /// Lexicographic rank of a category inside its group's sub-vector.
    pub fn rank_category(&self, category: &Category) -> Result<usize, RegistryError> {
        let i = category.size();
        self.group_position(i)?;
        if category.classes().last().copied().unwrap_or(0) >= self.class_count {
            return Err(RegistryError::BadCategory(category.classes().to_vec()));
        }
        let n = self.class_count;
        let k = i;
        let mut rank: u128 = 0;
        for (pos, &c) in category.classes().iter().enumerate() {
            let start = if pos == 0 {
                0
            } else {
                category.classes()[pos - 1] + 1
            };
            for j in start..c {
                rank += binomial(n - j - 1, k - pos - 1);
            }
        }
        Ok(rank as usize)
    }

    /// Inverse of [`rank_category`]: the `index`-th combination of size
    /// `group_size` in lexicographic order.
    pub fn unrank_category(
        &self,
        group_size: usize,
        index: usize,
    ) -> Result<Category, RegistryError> {
        self.group_position(group_size)?;
        let n = self.class_count;
        let k = group_size;
        if index as u128 >= binomial(n, k) {
            return Err(RegistryError::RankOutOfRange {
                index,
                i: group_size,
            });
        }
        let mut rank = index as u128;
        let mut classes = Vec::with_capacity(k);
        let mut next = 0usize;
        for pos in 0..k {
            let mut c = next;
            loop {
                let count = binomial(n - c - 1, k - pos - 1);
                if count <= rank {
                    rank -= count;
                    c += 1;
                } else {
                    classes.push(c);
                    next = c + 1;
                    break;
                }
            }
        }
        Category::new(classes, n)
    }

    /// Global slot index of a category within the whole registry.
    pub fn slot_of(&self, category: &Category) -> Result<usize, RegistryError> {
        Ok(self.offset(category.size())? + self.rank_category(category)?)
    }

    /// Category at a global slot index.
    pub fn category_at(&self, slot: usize) -> Result<(usize, Category), RegistryError> {
        for (pos, &i) in self.group_sizes.iter().enumerate() {
            let start = self.offsets[pos];
            if slot < start + self.sub_lengths[pos] {
                return Ok((i, self.unrank_category(i, slot - start)?));
            }
        }
        Err(RegistryError::RankOutOfRange {
            index: slot,
            i: self.class_count,
        })
    }

    /// All `(slot, group size, category)` rows, for audit dumps.
    pub fn codebook(&self) -> impl Iterator<Item = (usize, usize, Category)> + '_ {
        (0..self.total_length).map(move |slot| {
            let (i, category) = self.category_at(slot).expect("slot in range");
            (slot, i, category)
        })
    }
}

/// One-hot registration vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registry {
    bits: Vec<u8>,
}

impl Registry {
    pub fn from_slot(slot: usize, length: usize) -> Self {
        let mut bits = vec![0u8; length];
        bits[slot] = 1;
        Registry { bits }
    }

    pub fn from_bits(bits: Vec<u8>) -> Result<Self, RegistryError> {
        if bits.iter().filter(|&&b| b == 1).count() != 1
            || bits.iter().any(|&b| b > 1)
        {
            return Err(RegistryError::NotOneHot);
        }
        Ok(Registry { bits })
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn hot_slot(&self) -> usize {
        self.bits.iter().position(|&b| b == 1).expect("one-hot")
    }

    /// Counts for encryption: the 0/1 bits widened to u64.
    pub fn to_counts(&self) -> Vec<u64> {
        self.bits.iter().map(|&b| b as u64).collect()
    }
}

/// Element-wise sum of registries; holds client counts per category slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateRegistry {
    counts: Vec<u64>,
}

impl AggregateRegistry {
    pub fn from_counts(counts: Vec<u64>) -> Self {
        AggregateRegistry { counts }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Number of registered clients.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Occupied categories, the L0 norm.
    pub fn support_size(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Count of the category a one-hot registry points at, computed as the
    /// inner product of the registry with the aggregate.
    pub fn inner_product(&self, registry: &Registry) -> Result<u64, RegistryError> {
        if registry.len() != self.counts.len() {
            return Err(RegistryError::LengthMismatch(
                registry.len(),
                self.counts.len(),
            ));
        }
        Ok(registry
            .bits()
            .iter()
            .zip(&self.counts)
            .map(|(&b, &c)| b as u64 * c)
            .sum())
    }
}

/// Registers a client: finds its dominating-class category and one-hot slot.
///
/// Group sizes are probed in ascending order. For each size `i` the top `i`
/// classes by proportion are collected with a destructive argmax (ties go to
/// the smaller class index); if the `i`-th largest proportion reaches the
/// group's threshold the client registers under those `i` classes. The full
/// class set has threshold 0, so the loop always terminates.
pub fn register(
    histogram: &ClassHistogram,
    scheme: &RegistryScheme,
) -> Result<(Registry, Category), RegistryError> {
    if histogram.total() == 0 {
        return Err(RegistryError::EmptyHistogram);
    }
    if histogram.class_count() != scheme.class_count {
        return Err(RegistryError::LengthMismatch(
            histogram.class_count(),
            scheme.class_count,
        ));
    }
    let total = histogram.total() as f64;
    let proportions: Vec<f64> = histogram
        .counts()
        .iter()
        .map(|&c| c as f64 / total)
        .collect();

    let mut remaining = proportions.clone();
    let mut top: Vec<usize> = Vec::with_capacity(scheme.class_count);
    for (&i, &sigma) in scheme.group_sizes.iter().zip(&scheme.thresholds) {
        while top.len() < i {
            let mut best = 0usize;
            for (j, &p) in remaining.iter().enumerate() {
                if p > remaining[best] {
                    best = j;
                }
            }
            top.push(best);
            remaining[best] = -1.0;
        }
        let ith_largest = proportions[top[i - 1]];
        if ith_largest >= sigma {
            let category = Category::new(top[..i].to_vec(), scheme.class_count)?;
            let slot = scheme.slot_of(&category)?;
            return Ok((Registry::from_slot(slot, scheme.total_length), category));
        }
    }
    unreachable!("full class set has threshold 0");
}

/// Plaintext aggregation; the oracle for the homomorphic path.
pub fn aggregate(registries: &[Registry]) -> Result<AggregateRegistry, RegistryError> {
    let mut counts: Vec<u64> = Vec::new();
    for r in registries {
        if counts.is_empty() {
            counts = vec![0; r.len()];
        }
        if r.len() != counts.len() {
            return Err(RegistryError::LengthMismatch(r.len(), counts.len()));
        }
        for (c, &b) in counts.iter_mut().zip(r.bits()) {
            *c += b as u64;
        }
    }
    Ok(AggregateRegistry { counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mnist_scheme() -> RegistryScheme {
        RegistryScheme::new(10, vec![1, 2, 10], vec![0.7, 0.1, 0.0]).unwrap()
    }

    #[test]
    fn layout_for_ten_classes() {
        let scheme = mnist_scheme();
        // C(10,1) + C(10,2) + C(10,10) = 10 + 45 + 1 = 56
        assert_eq!(scheme.total_length(), 56);
        assert_eq!(scheme.sub_length(1).unwrap(), 10);
        assert_eq!(scheme.sub_length(2).unwrap(), 45);
        assert_eq!(scheme.sub_length(10).unwrap(), 1);
        assert_eq!(scheme.offset(1).unwrap(), 0);
        assert_eq!(scheme.offset(2).unwrap(), 10);
        assert_eq!(scheme.offset(10).unwrap(), 55);
    }

    #[test]
    fn scheme_validation() {
        assert!(RegistryScheme::new(10, vec![1, 2], vec![0.7, 0.1]).is_err());
        assert!(RegistryScheme::new(10, vec![2, 1, 10], vec![0.1, 0.7, 0.0]).is_err());
        assert!(RegistryScheme::new(10, vec![1, 2, 10], vec![0.7, 0.1, 0.5]).is_err());
        assert!(RegistryScheme::new(10, vec![1, 2, 10], vec![0.7, 0.6, 0.0]).is_err());
        assert!(RegistryScheme::new(10, vec![1, 2, 10], vec![1.5, 0.1, 0.0]).is_err());
        assert!(RegistryScheme::new(52, vec![1, 26, 52], vec![0.5, 0.0, 0.0]).is_err());
        assert!(RegistryScheme::new(52, vec![1, 52], vec![0.5, 0.0]).is_ok());
    }

    #[test]
    fn rank_examples() {
        let scheme = mnist_scheme();
        let pair01 = Category::new(vec![0, 1], 10).unwrap();
        assert_eq!(scheme.rank_category(&pair01).unwrap(), 0);
        let pair89 = Category::new(vec![8, 9], 10).unwrap();
        assert_eq!(scheme.rank_category(&pair89).unwrap(), 44);
    }

    #[test]
    fn rank_unrank_roundtrip_all_pairs() {
        let scheme = mnist_scheme();
        for index in 0..45 {
            let category = scheme.unrank_category(2, index).unwrap();
            assert_eq!(scheme.rank_category(&category).unwrap(), index);
        }
        assert!(scheme.unrank_category(2, 45).is_err());
        assert!(scheme.unrank_category(3, 0).is_err());
    }

    #[test]
    fn register_single_dominating_class() {
        let scheme = mnist_scheme();
        // 80% of mass on class 3
        let mut counts = vec![3u64; 10];
        counts[3] = 108;
        let (registry, category) =
            register(&ClassHistogram::new(counts), &scheme).unwrap();
        assert_eq!(category.classes(), &[3]);
        assert_eq!(registry.hot_slot(), 3);
    }

    #[test]
    fn register_two_dominating_classes() {
        let scheme = mnist_scheme();
        // 45% on class 0, 45% on class 1: m1 = 0.45 < 0.7, m2 = 0.45 >= 0.1
        let mut counts = vec![0u64; 10];
        counts[0] = 45;
        counts[1] = 45;
        for c in counts.iter_mut().skip(2) {
            *c = 1;
        }
        counts[9] = 2;
        let (registry, category) =
            register(&ClassHistogram::new(counts), &scheme).unwrap();
        assert_eq!(category.classes(), &[0, 1]);
        assert_eq!(registry.hot_slot(), 10); // first slot of the pair sub-vector
    }

    #[test]
    fn register_balanced_client_falls_through() {
        // sigma_2 above 1/C so a uniform client clears neither threshold;
        // the comparison is >=, so sigma_2 = 0.1 would capture it at i = 2.
        let scheme = RegistryScheme::new(10, vec![1, 2, 10], vec![0.7, 0.15, 0.0]).unwrap();
        let (registry, category) =
            register(&ClassHistogram::new(vec![10; 10]), &scheme).unwrap();
        assert_eq!(category.size(), 10);
        assert_eq!(registry.hot_slot(), 55);
    }

    #[test]
    fn register_threshold_comparison_is_inclusive() {
        let scheme = mnist_scheme();
        // exactly at sigma_2 = 0.1: fires at i = 2 on the top two classes
        let (_, category) = register(&ClassHistogram::new(vec![10; 10]), &scheme).unwrap();
        assert_eq!(category.classes(), &[0, 1]);
    }

    #[test]
    fn register_is_scale_invariant_and_one_hot() {
        let scheme = mnist_scheme();
        let counts = vec![50, 3, 9, 1, 7, 30, 2, 11, 8, 7];
        let (r1, c1) = register(&ClassHistogram::new(counts.clone()), &scheme).unwrap();
        let scaled: Vec<u64> = counts.iter().map(|&c| c * 17).collect();
        let (r2, c2) = register(&ClassHistogram::new(scaled), &scheme).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(r1, r2);
        assert_eq!(r1.bits().iter().map(|&b| b as u64).sum::<u64>(), 1);
    }

    #[test]
    fn register_ties_break_to_lower_class() {
        let scheme = RegistryScheme::new(4, vec![1, 4], vec![0.5, 0.0]).unwrap();
        // classes 1 and 3 tie at 40%; argmax must take class 1
        let h = ClassHistogram::new(vec![1, 8, 1, 8]);
        let (_, category) = register(&h, &scheme).unwrap();
        // 8/18 = 0.444 < 0.5, so falls through to the full set
        assert_eq!(category.size(), 4);
        let h2 = ClassHistogram::new(vec![1, 10, 1, 10]);
        // 10/22 = 0.4545... < 0.5 still; use sigma_1 = 0.45 to see the tie
        let scheme2 = RegistryScheme::new(4, vec![1, 4], vec![0.45, 0.0]).unwrap();
        let (_, category2) = register(&h2, &scheme2).unwrap();
        assert_eq!(category2.classes(), &[1]);
    }

    #[test]
    fn raising_threshold_never_shrinks_category() {
        let histograms = [
            ClassHistogram::new(vec![60, 20, 5, 5, 4, 2, 1, 1, 1, 1]),
            ClassHistogram::new(vec![40, 40, 5, 5, 4, 2, 1, 1, 1, 1]),
            ClassHistogram::new(vec![12, 11, 10, 10, 10, 10, 10, 9, 9, 9]),
        ];
        let low = RegistryScheme::new(10, vec![1, 2, 10], vec![0.5, 0.1, 0.0]).unwrap();
        let high = RegistryScheme::new(10, vec![1, 2, 10], vec![0.7, 0.3, 0.0]).unwrap();
        for h in &histograms {
            let (_, c_low) = register(h, &low).unwrap();
            let (_, c_high) = register(h, &high).unwrap();
            assert!(c_high.size() >= c_low.size());
        }
    }

    #[test]
    fn aggregate_counts_and_support() {
        let scheme = mnist_scheme();
        let registries: Vec<Registry> = (0..7)
            .map(|_| Registry::from_slot(12, scheme.total_length()))
            .collect();
        let agg = aggregate(&registries).unwrap();
        assert_eq!(agg.counts()[12], 7);
        assert_eq!(agg.total(), 7);
        assert_eq!(agg.support_size(), 1);
        let own = Registry::from_slot(12, scheme.total_length());
        assert_eq!(agg.inner_product(&own).unwrap(), 7);
        let other = Registry::from_slot(3, scheme.total_length());
        assert_eq!(agg.inner_product(&other).unwrap(), 0);
    }

    #[test]
    fn aggregate_rejects_mixed_lengths() {
        let a = Registry::from_slot(0, 4);
        let b = Registry::from_slot(0, 5);
        assert!(aggregate(&[a, b]).is_err());
    }

    #[test]
    fn codebook_covers_every_slot() {
        let scheme = mnist_scheme();
        let rows: Vec<_> = scheme.codebook().collect();
        assert_eq!(rows.len(), 56);
        assert_eq!(rows[0].2.classes(), &[0]);
        assert_eq!(rows[10].2.classes(), &[0, 1]);
        assert_eq!(rows[55].2.classes(), (0..10).collect::<Vec<_>>());
        for (slot, i, category) in rows {
            assert_eq!(category.size(), i);
            assert_eq!(scheme.slot_of(&category).unwrap(), slot);
        }
    }

    #[test]
    fn one_hot_constructor_validation() {
        assert!(Registry::from_bits(vec![0, 1, 0]).is_ok());
        assert!(Registry::from_bits(vec![0, 0, 0]).is_err());
        assert!(Registry::from_bits(vec![1, 1, 0]).is_err());
        assert!(Registry::from_bits(vec![0, 2, 0]).is_err());
    }
}
