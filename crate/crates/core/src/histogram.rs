//! Range-limited idle-time histogram.
//!
//! One-minute bins covering `[0, range)`; anything at or beyond the range is
//! counted as out of bounds. Bin-count sums are kept incrementally so the
//! coefficient of variation is O(1), and the occupied bin span is tracked so
//! percentile walks only touch bins that can hold mass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width of every histogram bin.
pub const BIN_WIDTH_SECS: f64 = 60.0;

/// Default histogram range: 4 hours.
pub const DEFAULT_RANGE_MINUTES: u32 = 240;

/// Time between the end of an execution and the next invocation.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct IdleTime(f64);

impl IdleTime {
    pub fn from_secs(secs: f64) -> Result<Self> {
        if secs.is_nan() || secs < 0.0 {
            return Err(Error::Contract(format!("idle time must be non-negative, got {secs}")));
        }
        Ok(IdleTime(secs))
    }

    pub fn from_minutes(minutes: f64) -> Result<Self> {
        Self::from_secs(minutes * 60.0)
    }

    pub fn secs(self) -> f64 {
        self.0
    }

    pub fn minutes(self) -> f64 {
        self.0 / 60.0
    }
}

impl TryFrom<f64> for IdleTime {
    type Error = Error;

    fn try_from(secs: f64) -> Result<Self> {
        IdleTime::from_secs(secs)
    }
}

impl From<IdleTime> for f64 {
    fn from(it: IdleTime) -> f64 {
        it.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdleTimeHistogram {
    bins: Vec<u64>,
    oob_count: u64,
    total_count: u64,
    /// Σ bins.
    sum_counts: u64,
    /// Σ bins², kept wide so long traces cannot overflow it.
    sum_sq_counts: u128,
    /// Lowest and highest non-empty bin.
    occupied: Option<(usize, usize)>,
}

impl Default for IdleTimeHistogram {
    fn default() -> Self {
        Self::new(DEFAULT_RANGE_MINUTES).expect("default range is valid")
    }
}

impl IdleTimeHistogram {
    pub fn new(range_minutes: u32) -> Result<Self> {
        if range_minutes == 0 {
            return Err(Error::Config("histogram range must be at least 1 minute".into()));
        }
        Ok(Self {
            bins: vec![0; range_minutes as usize],
            oob_count: 0,
            total_count: 0,
            sum_counts: 0,
            sum_sq_counts: 0,
            occupied: None,
        })
    }

    pub fn range_minutes(&self) -> u32 {
        self.bins.len() as u32
    }

    pub fn range_secs(&self) -> f64 {
        self.bins.len() as f64 * BIN_WIDTH_SECS
    }

    pub fn bins(&self) -> &[u64] {
        &self.bins
    }

    pub fn oob_count(&self) -> u64 {
        self.oob_count
    }

    pub fn total_count(&self) -> u64 {
        self.total_count
    }

    /// Number of observations that landed inside the range.
    pub fn in_range_count(&self) -> u64 {
        self.sum_counts
    }

    pub fn sum_sq_counts(&self) -> u128 {
        self.sum_sq_counts
    }

    /// Records one idle time.
    pub fn observe(&mut self, it: IdleTime) {
        let bin = (it.secs() / BIN_WIDTH_SECS).floor();
        self.total_count += 1;
        if bin >= self.bins.len() as f64 {
            self.oob_count += 1;
            return;
        }
        let idx = bin as usize;
        let v = self.bins[idx];
        self.bins[idx] = v + 1;
        // (v+1)² - v² = 2v + 1
        self.sum_counts += 1;
        self.sum_sq_counts += 2 * v as u128 + 1;
        self.occupied = Some(match self.occupied {
            None => (idx, idx),
            Some((lo, hi)) => (lo.min(idx), hi.max(idx)),
        });
    }

    /// Checked variant of [`observe`](Self::observe) for raw seconds.
    pub fn observe_secs(&mut self, secs: f64) -> Result<()> {
        self.observe(IdleTime::from_secs(secs)?);
        Ok(())
    }

    /// Coefficient of variation of the in-range bin counts (population
    /// variance). `None` when every bin is empty.
    pub fn cv(&self) -> Option<f64> {
        cv_from_sums(self.bins.len() as u128, self.sum_counts as u128, self.sum_sq_counts)
    }

    /// CV over the bins with the out-of-bounds counter appended as one more
    /// bin. `None` when the histogram is empty.
    pub fn cv_with_oob(&self) -> Option<f64> {
        let oob = self.oob_count as u128;
        cv_from_sums(self.bins.len() as u128 + 1, self.sum_counts as u128 + oob, self.sum_sq_counts + oob * oob)
    }

    /// Lower edge (seconds) of the bin holding the `pct`-th percentile of the
    /// in-range idle times.
    pub fn percentile_head(&self, pct: f64) -> Result<f64> {
        let bin = self.percentile_bin_from_below(pct)?;
        Ok(bin as f64 * BIN_WIDTH_SECS)
    }

    /// Upper edge (seconds) of the bin holding the `pct`-th percentile of the
    /// in-range idle times.
    pub fn percentile_tail(&self, pct: f64) -> Result<f64> {
        let bin = self.percentile_bin_from_above(pct)?;
        Ok((bin + 1) as f64 * BIN_WIDTH_SECS)
    }

    pub fn oob_fraction(&self) -> Result<f64> {
        if self.total_count == 0 {
            return Err(Error::InsufficientData("histogram is empty".into()));
        }
        Ok(self.oob_count as f64 / self.total_count as f64)
    }

    /// Smallest bin whose cumulative in-range count reaches the rank.
    fn percentile_bin_from_below(&self, pct: f64) -> Result<usize> {
        let (lo, hi) = self.occupied_span()?;
        let rank = percentile_rank(pct, self.sum_counts)?;
        if rank == 0 {
            return Ok(0);
        }
        let mut cum = 0u64;
        for (i, &c) in self.bins[lo..=hi].iter().enumerate() {
            cum += c;
            if cum >= rank {
                return Ok(lo + i);
            }
        }
        Ok(hi)
    }

    /// Same bin as [`percentile_bin_from_below`], found by walking down from
    /// the highest occupied bin. Tail percentiles usually sit near the top.
    fn percentile_bin_from_above(&self, pct: f64) -> Result<usize> {
        let (lo, hi) = self.occupied_span()?;
        let rank = percentile_rank(pct, self.sum_counts)?;
        if rank == 0 {
            return Ok(0);
        }
        // cum(b) >= rank  <=>  mass strictly above b <= total - rank
        let budget = self.sum_counts - rank;
        let mut above = 0u64;
        let mut b = hi;
        while b > lo {
            above += self.bins[b];
            if above > budget {
                break;
            }
            b -= 1;
        }
        Ok(b)
    }

    fn occupied_span(&self) -> Result<(usize, usize)> {
        self.occupied.ok_or_else(|| Error::InsufficientData("histogram has no in-range observations".into()))
    }

    pub fn snapshot(&self) -> HistogramSnapshot {
        HistogramSnapshot { range_minutes: self.range_minutes(), bins: self.bins.clone(), oob_count: self.oob_count }
    }

    /// Rebuilds a histogram from its bins, recomputing every derived sum.
    pub fn from_snapshot(snap: &HistogramSnapshot) -> Result<Self> {
        if snap.bins.len() != snap.range_minutes as usize {
            return Err(Error::Validation(format!(
                "snapshot has {} bins for a {}-minute range",
                snap.bins.len(),
                snap.range_minutes
            )));
        }
        let mut h = Self::new(snap.range_minutes)?;
        h.bins.clone_from(&snap.bins);
        h.oob_count = snap.oob_count;
        h.sum_counts = snap.bins.iter().sum();
        h.sum_sq_counts = snap.bins.iter().map(|&c| c as u128 * c as u128).sum();
        h.total_count = h.sum_counts + h.oob_count;
        let lo = snap.bins.iter().position(|&c| c > 0);
        let hi = snap.bins.iter().rposition(|&c| c > 0);
        h.occupied = lo.zip(hi);
        Ok(h)
    }
}

/// `ceil(pct/100 · n)`, tolerant of float noise in the product.
fn percentile_rank(pct: f64, n: u64) -> Result<u64> {
    if !(0.0..=100.0).contains(&pct) {
        return Err(Error::Config(format!("percentile {pct} outside [0, 100]")));
    }
    let exact = pct * n as f64 / 100.0;
    let rank = (exact - 1e-9).ceil().max(0.0) as u64;
    Ok(rank.min(n))
}

fn cv_from_sums(n: u128, sum: u128, sum_sq: u128) -> Option<f64> {
    if sum == 0 {
        return None;
    }
    // σ/μ = sqrt(n·Q - S²) / S, exact in integers until the final sqrt.
    let spread = n * sum_sq - sum * sum;
    Some((spread as f64).sqrt() / sum as f64)
}

/// Serializable histogram state, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramSnapshot {
    pub range_minutes: u32,
    pub bins: Vec<u64>,
    pub oob_count: u64,
}

impl HistogramSnapshot {
    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        Ok(serde_json::from_str(line)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minutes(m: f64) -> IdleTime {
        IdleTime::from_minutes(m).unwrap()
    }

    fn with_counts(counts: &[(usize, u64)]) -> IdleTimeHistogram {
        let mut h = IdleTimeHistogram::default();
        for &(bin, n) in counts {
            for _ in 0..n {
                h.observe(minutes(bin as f64 + 0.5));
            }
        }
        h
    }

    /// Two-pass CV over the bins vector; the reference for the incremental sums.
    fn cv_recomputed(bins: &[u64]) -> Option<f64> {
        let n = bins.len() as f64;
        let mean = bins.iter().sum::<u64>() as f64 / n;
        if mean == 0.0 {
            return None;
        }
        let var = bins.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / n;
        Some(var.sqrt() / mean)
    }

    #[test]
    fn observe_bins_by_floor() {
        let mut h = IdleTimeHistogram::default();
        h.observe(IdleTime::from_secs(0.0).unwrap());
        h.observe(minutes(7.4));
        assert_eq!(h.bins()[0], 1);
        assert_eq!(h.bins()[7], 1);
        assert_eq!(h.total_count(), 2);
    }

    #[test]
    fn beyond_range_is_out_of_bounds() {
        let mut h = IdleTimeHistogram::default();
        h.observe(minutes(300.0));
        h.observe(minutes(240.0));
        assert_eq!(h.oob_count(), 2);
        assert!(h.bins().iter().all(|&c| c == 0));
        assert_eq!(h.total_count(), 2);
        assert_eq!(h.cv(), None);
    }

    #[test]
    fn negative_idle_time_rejected() {
        assert!(matches!(IdleTime::from_secs(-1.0), Err(Error::Contract(_))));
        assert!(IdleTime::from_secs(f64::NAN).is_err());
        let mut h = IdleTimeHistogram::default();
        assert!(h.observe_secs(-0.5).is_err());
        assert_eq!(h.total_count(), 0);
    }

    #[test]
    fn cv_uniform_is_zero() {
        let counts: Vec<(usize, u64)> = (0..240).map(|b| (b, 3)).collect();
        let h = with_counts(&counts);
        assert_eq!(h.cv(), Some(0.0));
    }

    #[test]
    fn cv_single_bin_concentration() {
        let expected = 239f64.sqrt();
        let h = with_counts(&[(17, 240)]);
        assert!((h.cv().unwrap() - expected).abs() < 1e-12);
        let one = with_counts(&[(3, 1)]);
        assert!((one.cv().unwrap() - expected).abs() < 1e-12);
        assert!((expected - 15.46).abs() < 0.01);
    }

    #[test]
    fn cv_with_oob_treats_overflow_as_a_bin() {
        let mut h = IdleTimeHistogram::default();
        for _ in 0..5 {
            h.observe(minutes(400.0));
        }
        assert_eq!(h.cv(), None);
        assert!((h.cv_with_oob().unwrap() - 240f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn head_and_tail_single_bin() {
        let h = with_counts(&[(7, 12)]);
        assert_eq!(h.percentile_head(5.0).unwrap(), 7.0 * 60.0);
        assert_eq!(h.percentile_tail(99.0).unwrap(), 8.0 * 60.0);
    }

    #[test]
    fn head_cumulative_walk() {
        let h = with_counts(&[(0, 5), (10, 95)]);
        assert_eq!(h.percentile_head(5.0).unwrap(), 0.0);
        assert_eq!(h.percentile_head(6.0).unwrap(), 600.0);
    }

    #[test]
    fn tail_cumulative_walk() {
        let h = with_counts(&[(0, 95), (239, 5)]);
        assert_eq!(h.percentile_tail(99.0).unwrap(), 240.0 * 60.0);
        assert_eq!(h.percentile_tail(95.0).unwrap(), 60.0);
        let h = with_counts(&[(0, 4)]);
        assert_eq!(h.percentile_tail(99.0).unwrap(), 60.0);
    }

    #[test]
    fn zero_percentile_head_is_zero() {
        let h = with_counts(&[(42, 3), (90, 1)]);
        assert_eq!(h.percentile_head(0.0).unwrap(), 0.0);
    }

    #[test]
    fn percentiles_need_in_range_mass() {
        let mut h = IdleTimeHistogram::default();
        assert!(h.percentile_head(5.0).is_err());
        h.observe(minutes(1000.0));
        assert!(h.percentile_tail(99.0).is_err());
        assert!(with_counts(&[(1, 1)]).percentile_head(101.0).is_err());
    }

    #[test]
    fn oob_fraction_cases() {
        let mut h = with_counts(&[(1, 1), (2, 1), (3, 1)]);
        h.observe(minutes(500.0));
        assert_eq!(h.oob_fraction().unwrap(), 0.25);
        assert_eq!(with_counts(&[(1, 2)]).oob_fraction().unwrap(), 0.0);
        let mut all = IdleTimeHistogram::default();
        all.observe(minutes(241.0));
        assert_eq!(all.oob_fraction().unwrap(), 1.0);
        assert!(IdleTimeHistogram::default().oob_fraction().is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let mut h = with_counts(&[(0, 2), (5, 7), (200, 1)]);
        h.observe(minutes(999.0));
        let line = h.snapshot().to_json_line().unwrap();
        let back = IdleTimeHistogram::from_snapshot(&HistogramSnapshot::from_json_line(&line).unwrap()).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn snapshot_rejects_wrong_length() {
        let snap = HistogramSnapshot { range_minutes: 3, bins: vec![1, 2], oob_count: 0 };
        assert!(IdleTimeHistogram::from_snapshot(&snap).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn incremental_cv_matches_recompute(its in prop::collection::vec(0.0f64..20_000.0, 1..400)) {
                let mut h = IdleTimeHistogram::default();
                for &s in &its {
                    h.observe(IdleTime::from_secs(s).unwrap());
                }
                prop_assert_eq!(h.total_count(), h.bins().iter().sum::<u64>() + h.oob_count());
                prop_assert_eq!(h.sum_sq_counts(), h.bins().iter().map(|&c| c as u128 * c as u128).sum::<u128>());
                match (h.cv(), cv_recomputed(h.bins())) {
                    (None, None) => {}
                    (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-9 * b.max(1e-300)),
                    (a, b) => prop_assert!(false, "cv mismatch {:?} vs {:?}", a, b),
                }
            }

            #[test]
            fn observe_is_order_insensitive(mut its in prop::collection::vec(0.0f64..20_000.0, 0..200), seed in any::<u64>()) {
                let mut a = IdleTimeHistogram::default();
                for &s in &its { a.observe(IdleTime::from_secs(s).unwrap()); }
                // deterministic shuffle
                let n = its.len();
                let mut state = seed;
                for i in (1..n).rev() {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    its.swap(i, (state >> 33) as usize % (i + 1));
                }
                let mut b = IdleTimeHistogram::default();
                for &s in &its { b.observe(IdleTime::from_secs(s).unwrap()); }
                prop_assert_eq!(a, b);
            }

            #[test]
            fn percentiles_monotone_in_p(its in prop::collection::vec(0.0f64..14_399.0, 1..200), p in 0.0f64..100.0, q in 0.0f64..100.0) {
                let mut h = IdleTimeHistogram::default();
                for &s in &its { h.observe(IdleTime::from_secs(s).unwrap()); }
                let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
                prop_assert!(h.percentile_head(lo).unwrap() <= h.percentile_head(hi).unwrap());
                prop_assert!(h.percentile_tail(lo).unwrap() <= h.percentile_tail(hi).unwrap());
                prop_assert!(h.percentile_head(lo).unwrap() < h.percentile_tail(hi).unwrap());
            }
        }
    }
}
