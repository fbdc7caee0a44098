//! Meet-in-the-middle subset-sum range queries.
//!
//! Splits the input in half, enumerates each half's subset sums, sorts one
//! side, and answers "is there a subset with sum in [lo, hi]" with a range
//! scan. The returned witness is deterministic: the qualifying subset whose
//! index bitmask is smallest as an integer (bit j set means `sizes[j]` is in
//! the subset).

/// Max supported input length. 2^(len/2) half-sum tables cap the practical
/// size well below the spec's 64; every caller in this crate stays ≤ 24.
pub const MAX_SUBSET_LEN: usize = 40;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SubsetError {
    TooLong(usize),
    BadRange { lo: u64, hi: u64 },
}

impl std::fmt::Display for SubsetError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SubsetError::TooLong(n) => write!(f, "{n} sizes exceeds subset-sum engine limit"),
            SubsetError::BadRange { lo, hi } => write!(f, "invalid range [{lo}, {hi}]"),
        }
    }
}

impl std::error::Error for SubsetError {}

/// Find some subset of `sizes` whose sum lies in `[lo, hi]` (inclusive), or
/// `None` if no subset qualifies. The empty subset counts iff `lo == 0`.
pub fn subset_sum_in_range(sizes: &[u64], lo: u64, hi: u64) -> Result<Option<u64>, SubsetError> {
    if sizes.len() > MAX_SUBSET_LEN {
        return Err(SubsetError::TooLong(sizes.len()));
    }
    if lo > hi {
        return Err(SubsetError::BadRange { lo, hi });
    }
    let h = sizes.len() / 2;
    let (a_sizes, b_sizes) = sizes.split_at(h);

    // Low half: enumerate (sum, mask), sorted by sum, with a prefix-min mask
    // table over the sum-sorted order so a range query yields the minimal
    // low-half mask directly.
    let mut a: Vec<(u64, u64)> = Vec::with_capacity(1 << a_sizes.len());
    for mask in 0u64..(1 << a_sizes.len()) {
        let mut s = 0u64;
        for (j, &size) in a_sizes.iter().enumerate() {
            if mask >> j & 1 == 1 {
                s += size;
            }
        }
        a.push((s, mask));
    }
    a.sort_unstable();
    // High-half masks iterate in ascending order and occupy the combined
    // mask's high bits, so the first qualifying high mask wins; within it the
    // minimal low mask over the matching sum range completes the witness.
    let sums: Vec<u64> = a.iter().map(|&(s, _)| s).collect();
    let range_min_mask = |from: usize, to: usize| -> u64 {
        // Linear scan: tables are ≤ 2^20 entries and the rsum hot path ≤ 2^7.
        a[from..to].iter().map(|&(_, m)| m).min().unwrap_or(u64::MAX)
    };

    for b_mask in 0u64..(1 << b_sizes.len()) {
        let mut s = 0u64;
        for (j, &size) in b_sizes.iter().enumerate() {
            if b_mask >> j & 1 == 1 {
                s += size;
            }
        }
        if s > hi {
            continue;
        }
        let need_lo = lo.saturating_sub(s);
        let need_hi = hi - s;
        let from = sums.partition_point(|&v| v < need_lo);
        let to = sums.partition_point(|&v| v <= need_hi);
        if from < to {
            let a_mask = range_min_mask(from, to);
            return Ok(Some(a_mask | (b_mask << h)));
        }
    }
    Ok(None)
}

/// Sum of the subset a mask denotes.
pub fn mask_sum(sizes: &[u64], mask: u64) -> u64 {
    sizes
        .iter()
        .enumerate()
        .filter(|&(j, _)| mask >> j & 1 == 1)
        .map(|(_, &s)| s)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_exact() {
        let found = subset_sum_in_range(&[5, 7], 12, 12).unwrap().unwrap();
        assert_eq!(found, 0b11);
    }

    #[test]
    fn no_subset_in_gap() {
        assert_eq!(subset_sum_in_range(&[3, 5, 9], 1, 2).unwrap(), None);
    }

    #[test]
    fn empty_subset_only_when_lo_zero() {
        assert_eq!(subset_sum_in_range(&[4], 0, 1).unwrap(), Some(0));
        assert_eq!(subset_sum_in_range(&[4], 1, 3).unwrap(), None);
    }

    #[test]
    fn witness_sums_to_range() {
        let sizes = [13, 8, 21, 3, 3, 9];
        let mask = subset_sum_in_range(&sizes, 20, 22).unwrap().unwrap();
        let s = mask_sum(&sizes, mask);
        assert!((20..=22).contains(&s));
    }

    #[test]
    fn rejects_bad_input() {
        let long = vec![1u64; MAX_SUBSET_LEN + 1];
        assert!(matches!(subset_sum_in_range(&long, 0, 1), Err(SubsetError::TooLong(_))));
        assert!(matches!(subset_sum_in_range(&[1], 2, 1), Err(SubsetError::BadRange { .. })));
    }

    #[test]
    fn deterministic_minimal_mask() {
        // Two disjoint witnesses for sum 10: {0,1} (mask 0b0011) and {2,3}
        // (mask 0b1100); the engine must return the smaller mask.
        let sizes = [4, 6, 3, 7];
        let mask = subset_sum_in_range(&sizes, 10, 10).unwrap().unwrap();
        assert_eq!(mask, 0b0011);
    }
}
