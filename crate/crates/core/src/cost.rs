//! Per-update cost accounting.
//!
//! Each record stores the update's size k and the relocated true mass L
//! (never counting the inserted/deleted item itself). Two amortized metrics:
//! ratio_mean = (1/n)·Σ Lᵢ/kᵢ and mass_ratio = Σ Lᵢ / Σ kᵢ. mass_ratio is
//! the canonical acceptance metric; it stays meaningful when update sizes
//! differ by large factors.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CostRecord {
    pub update_size: u64,
    pub moved_mass: u64,
}

#[derive(Clone, Debug, Default)]
pub struct CostLedger {
    pub records: Vec<CostRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub ratio_mean: f64,
    pub mass_ratio: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmptyLedger;

impl std::fmt::Display for EmptyLedger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "cost ledger has no records")
    }
}

impl std::error::Error for EmptyLedger {}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, update_size: u64, moved_mass: u64) {
        debug_assert!(update_size > 0);
        self.records.push(CostRecord { update_size, moved_mass });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub fn amortized_metrics(ledger: &CostLedger) -> Result<Metrics, EmptyLedger> {
    if ledger.records.is_empty() {
        return Err(EmptyLedger);
    }
    let mut ratio_sum = 0.0;
    let mut mass: u128 = 0;
    let mut size: u128 = 0;
    for rec in &ledger.records {
        ratio_sum += rec.moved_mass as f64 / rec.update_size as f64;
        mass += rec.moved_mass as u128;
        size += rec.update_size as u128;
    }
    Ok(Metrics {
        ratio_mean: ratio_sum / ledger.records.len() as f64,
        mass_ratio: mass as f64 / size as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_metrics_basic() {
        let mut l = CostLedger::new();
        l.push(2, 4);
        l.push(2, 0);
        let m = amortized_metrics(&l).unwrap();
        assert_eq!(m.ratio_mean, 1.0);
        assert_eq!(m.mass_ratio, 1.0);
    }

    #[test]
    fn metrics_diverge_on_skewed_sizes() {
        let mut l = CostLedger::new();
        l.push(1, 10);
        l.push(10, 1);
        let m = amortized_metrics(&l).unwrap();
        assert!((m.ratio_mean - 5.05).abs() < 1e-12);
        assert!((m.mass_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_record() {
        let mut l = CostLedger::new();
        l.push(4, 4);
        let m = amortized_metrics(&l).unwrap();
        assert_eq!(m.ratio_mean, 1.0);
        assert_eq!(m.mass_ratio, 1.0);
    }

    #[test]
    fn empty_ledger_errors() {
        assert_eq!(amortized_metrics(&CostLedger::new()), Err(EmptyLedger));
    }
}
