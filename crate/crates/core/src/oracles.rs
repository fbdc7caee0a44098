//! Independent verifiers: brute-force subset-sum enumeration, Monte-Carlo
//! checks of the probabilistic hitting-time lemmas and of the random
//! subset-sum theorem, and the exact potential function used by the
//! lower-bound argument.
//!
//! These deliberately share no code with the production subset-sum engine or
//! the allocators; they are the other side of every dual-route check.

use crate::rng::DetRng;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OracleError {
    TooLong(usize),
}

impl std::fmt::Display for OracleError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OracleError::TooLong(n) => write!(f, "{n} sizes exceeds brute-force limit of 24"),
        }
    }
}

impl std::error::Error for OracleError {}

/// Exhaustive subset search: does some subset (optionally of exactly
/// `cardinality` elements) sum into `[lo, hi]`? Returns a witness mask.
/// Enumerates all 2^n masks in Gray-code order, toggling one element per
/// step.
pub fn brute_subset_range(
    sizes: &[u64],
    lo: u64,
    hi: u64,
    cardinality: Option<u32>,
) -> Result<Option<u64>, OracleError> {
    if sizes.len() > 24 {
        return Err(OracleError::TooLong(sizes.len()));
    }
    let card_ok = |mask: u64| cardinality.is_none_or(|c| mask.count_ones() == c);
    if card_ok(0) && lo == 0 {
        return Ok(Some(0));
    }
    let mut gray = 0u64;
    let mut sum = 0u64;
    for k in 1u64..(1u64 << sizes.len()) {
        let bit = k.trailing_zeros() as usize;
        gray ^= 1 << bit;
        if gray >> bit & 1 == 1 {
            sum += sizes[bit];
        } else {
            sum -= sizes[bit];
        }
        if sum >= lo && sum <= hi && card_ok(gray) {
            return Ok(Some(gray));
        }
    }
    Ok(None)
}

/// Same search over f64 sizes, used by the random subset-sum Monte-Carlo.
fn brute_subset_range_f64(sizes: &[f64], lo: f64, hi: f64, cardinality: u32) -> bool {
    for mask in 0u64..(1u64 << sizes.len()) {
        if mask.count_ones() != cardinality {
            continue;
        }
        let mut s = 0.0;
        for (j, &size) in sizes.iter().enumerate() {
            if mask >> j & 1 == 1 {
                s += size;
            }
        }
        if s >= lo && s <= hi {
            return true;
        }
    }
    false
}

/// Empirical success probability that m = 2⌈(log₂ n)/2⌉ uniform draws from
/// [1,2] contain an (m/2)-element subset with sum in [y − log₂(n)/n, y],
/// with y drawn uniformly from (3/4)m + [−1, 1] each trial.
pub fn mc_subset_theorem(n: u64, trials: u64, seed: u64) -> f64 {
    assert!(n >= 4);
    let log_n = (n as f64).log2();
    let m = 2 * ((log_n / 2.0).ceil() as u32);
    let window = log_n / n as f64;
    let mut rng = DetRng::new(seed);
    let mut hits = 0u64;
    let mut xs = vec![0.0f64; m as usize];
    for _ in 0..trials {
        let y = 0.75 * m as f64 + rng.f64_range(-1.0, 1.0);
        for x in xs.iter_mut() {
            *x = rng.f64_range(1.0, 2.0);
        }
        if brute_subset_range_f64(&xs, y - window, y, m / 2) {
            hits += 1;
        }
    }
    hits as f64 / trials as f64
}

/// Empirical probability that partial sums of i.i.d. uniform integers from
/// [⌈N/4⌉, ⌈N/3⌉] ever hit y exactly.
pub fn mc_discrete_threshold(n_param: u64, y: u64, trials: u64, seed: u64) -> f64 {
    assert!(n_param >= 128, "bound 100/N needs N >= 128 to be non-vacuous");
    let lo = n_param.div_ceil(4);
    let hi = n_param.div_ceil(3);
    let mut rng = DetRng::new(seed);
    let mut hits = 0u64;
    for _ in 0..trials {
        let mut sum = 0u64;
        while sum < y {
            sum += rng.range_inclusive(lo, hi);
        }
        if sum == y {
            hits += 1;
        }
    }
    hits as f64 / trials as f64
}

/// Empirical probability that partial sums of i.i.d. uniforms on (W/2, W)
/// ever land in [a, b]. Sums are increasing, so the first sum ≥ a decides;
/// the empty sum does not count as a partial sum.
pub fn mc_continuous_threshold(w: f64, a: f64, b: f64, trials: u64, seed: u64) -> f64 {
    assert!(w > 0.0 && 0.0 <= a && a < b);
    let mut rng = DetRng::new(seed);
    let mut hits = 0u64;
    for _ in 0..trials {
        let mut sum = 0.0f64;
        loop {
            sum += rng.f64_range(w / 2.0, w);
            if sum >= a {
                break;
            }
        }
        if sum <= b {
            hits += 1;
        }
    }
    hits as f64 / trials as f64
}

/// 3σ margin for an empirical frequency against a bound p over `trials`.
pub fn three_sigma(p: f64, trials: u64) -> f64 {
    3.0 * (p * (1.0 - p) / trials as f64).sqrt()
}

// ---------------------------------------------------------------------------
// Exact rationals for the lower-bound potential function.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rational {
    pub num: u128,
    pub den: u128,
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.max(1)
}

impl Rational {
    pub fn new(num: u128, den: u128) -> Self {
        assert!(den != 0);
        let g = gcd(num, den);
        Self { num: num / g, den: den / g }
    }

    pub const ZERO: Rational = Rational { num: 0, den: 1 };

    pub fn add(self, other: Rational) -> Rational {
        Rational::new(self.num * other.den + other.num * self.den, self.den * other.den)
    }

    pub fn sub(self, other: Rational) -> Rational {
        Rational::new(self.num * other.den - other.num * self.den, self.den * other.den)
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// The n-th harmonic number, exactly.
pub fn harmonic(n: usize) -> Rational {
    let mut h = Rational::ZERO;
    for i in 1..=n {
        h = h.add(Rational::new(1, i as u128));
    }
    h
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ItemKind {
    A,
    B,
}

/// Potential Φ = Σ_{i=1}^{n} B_i / i where B_i counts the B's among the final
/// i items; `kinds[0]` is the item at the very end of memory (i = 1).
pub fn potential_phi(kinds: &[ItemKind]) -> Rational {
    let mut phi = Rational::ZERO;
    let mut b_count: u128 = 0;
    for (i, kind) in kinds.iter().enumerate() {
        if *kind == ItemKind::B {
            b_count += 1;
        }
        phi = phi.add(Rational::new(b_count, (i + 1) as u128));
    }
    phi
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brute_matches_trivial_cases() {
        assert_eq!(brute_subset_range(&[5, 7], 12, 12, None).unwrap(), Some(0b11));
        assert_eq!(brute_subset_range(&[], 1, 2, None).unwrap(), None);
        assert!(brute_subset_range(&vec![1; 25], 0, 1, None).is_err());
    }

    #[test]
    fn brute_cardinality_constraint() {
        // {5,7} sums to 12 but has 2 elements; cardinality 1 must fail.
        assert_eq!(brute_subset_range(&[5, 7], 12, 12, Some(1)).unwrap(), None);
        assert_eq!(brute_subset_range(&[5, 7, 12], 12, 12, Some(1)).unwrap(), Some(0b100));
    }

    #[test]
    fn phi_all_a_is_zero() {
        assert_eq!(potential_phi(&[ItemKind::A; 5]), Rational::ZERO);
    }

    #[test]
    fn phi_all_b_equals_n() {
        // B_i = i for every i, so Φ = Σ i/i = n.
        let phi = potential_phi(&[ItemKind::B; 4]);
        assert_eq!(phi, Rational::new(4, 1));
    }

    #[test]
    fn trailing_flip_increases_phi_by_harmonic() {
        // Flipping the final item from A to B raises every B_i by one,
        // so ΔΦ = Σ 1/i = H_n, exactly.
        for n in 1..=16usize {
            let mut kinds = vec![ItemKind::A; n];
            kinds[1..].iter_mut().step_by(2).for_each(|k| *k = ItemKind::B);
            let before = potential_phi(&kinds);
            kinds[0] = ItemKind::B;
            let after = potential_phi(&kinds);
            assert_eq!(after.sub(before), harmonic(n), "n = {n}");
        }
    }

    #[test]
    fn discrete_threshold_unreachable_below_min_step() {
        // y below the smallest step can only be missed.
        let freq = mc_discrete_threshold(128, 10, 2_000, 11);
        assert_eq!(freq, 0.0);
    }

    #[test]
    fn discrete_threshold_single_step_closed_form() {
        // y = ⌈N/4⌉ is hit iff the very first draw equals it:
        // p = 1 / (⌈N/3⌉ − ⌈N/4⌉ + 1).
        let n = 128u64;
        let y = n.div_ceil(4);
        let p = 1.0 / ((n.div_ceil(3) - n.div_ceil(4) + 1) as f64);
        let trials = 200_000;
        let freq = mc_discrete_threshold(n, y, trials, 12);
        assert!((freq - p).abs() < three_sigma(p, trials) + 1e-9, "freq {freq} vs p {p}");
    }

    #[test]
    fn continuous_first_draw_only_region() {
        // With [a,b] ⊂ (0, W/2), only the first draw can land there, and the
        // first draw's support is (W/2, W): frequency must be 0.
        let freq = mc_continuous_threshold(1.0, 0.1, 0.2, 2_000, 13);
        assert_eq!(freq, 0.0);
    }

    #[test]
    fn subset_theorem_wide_window_near_certain() {
        // Widened window [y−1, y]: the (m/2)-subset sums step by at most 1
        // between adjacent subsets, so the only misses are trials where the
        // whole window falls outside [min subset sum, max subset sum].
        let mut rng = DetRng::new(14);
        let m = 8usize;
        let mut hits = 0;
        let trials = 500;
        for _ in 0..trials {
            let y = 0.75 * m as f64 + rng.f64_range(-1.0, 1.0);
            let xs: Vec<f64> = (0..m).map(|_| rng.f64_range(1.0, 2.0)).collect();
            if brute_subset_range_f64(&xs, y - 1.0, y, m as u32 / 2) {
                hits += 1;
            }
        }
        assert!(hits as f64 / trials as f64 > 0.8, "{hits}/{trials}");
    }
}
