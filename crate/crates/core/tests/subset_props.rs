//! Property tests: the meet-in-the-middle engine against the brute-force
//! oracle, and layout validity against a quadratic reference check.

use proptest::prelude::*;
use realloc_core::item::{ItemId, ItemStore};
use realloc_core::layout::{validate_layout, Layout};
use realloc_core::oracles::brute_subset_range;
use realloc_core::subset::{mask_sum, subset_sum_in_range};
use realloc_core::tick::TickConfig;

proptest! {
    #[test]
    fn mitm_existence_matches_brute_force(
        sizes in proptest::collection::vec(1u64..10_000, 0..14),
        lo in 0u64..30_000,
        width in 0u64..2_000,
    ) {
        let hi = lo + width;
        let fast = subset_sum_in_range(&sizes, lo, hi).unwrap();
        let slow = brute_subset_range(&sizes, lo, hi, None).unwrap();
        prop_assert_eq!(fast.is_some(), slow.is_some());
        if let Some(mask) = fast {
            let s = mask_sum(&sizes, mask);
            prop_assert!(s >= lo && s <= hi);
        }
    }

    #[test]
    fn overlap_detection_matches_quadratic_reference(
        placements in proptest::collection::vec((0u64..1 << 20, 1u64..1 << 12), 0..24),
    ) {
        let cfg = TickConfig::pow4(40, 2).unwrap();
        let mut items = ItemStore::new();
        let mut layout = Layout::new();
        for (i, &(off, size)) in placements.iter().enumerate() {
            items.insert(ItemId(i as u64), size).unwrap();
            layout.placements.insert(ItemId(i as u64), off);
        }
        let report = validate_layout(&layout, &items, &cfg, false).unwrap();
        // quadratic reference: any intersecting pair
        let mut any_overlap = false;
        for i in 0..placements.len() {
            for j in i + 1..placements.len() {
                let (a, sa) = placements[i];
                let (b, sb) = placements[j];
                if a < b + sb && b < a + sa {
                    any_overlap = true;
                }
            }
        }
        prop_assert_eq!(!report.overlaps.is_empty(), any_overlap);
    }
}
