use coldstart::histogram::{IdleTimeHistogram, BIN_WIDTH_SECS};
use proptest::prelude::*;

/// Nearest-rank percentile of the in-range idle times, in seconds.
fn exact_percentile(its: &[f64], range_secs: f64, pct: f64) -> Option<f64> {
    let mut v: Vec<f64> = its.iter().copied().filter(|&x| x < range_secs).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let rank = ((pct / 100.0 * v.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    Some(v[rank.min(v.len()) - 1])
}

fn idle_times() -> impl Strategy<Value = Vec<f64>> {
    let one = prop_oneof![
        3 => 0.0..3600.0f64,
        2 => (0u32..300).prop_map(|m| m as f64 * 60.0),
        1 => 14_400.0..40_000.0f64,
    ];
    prop::collection::vec(one, 1..300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn percentiles_bracket_the_exact_value(its in idle_times(), p in 0.0..=100.0f64, dq in 0.0..=100.0f64, range in 1u32..=300) {
        let q = (p + dq).min(100.0);
        let mut h = IdleTimeHistogram::new(range).unwrap();
        for &x in &its {
            h.observe_secs(x).unwrap();
        }
        let range_secs = range as f64 * 60.0;
        match exact_percentile(&its, range_secs, p) {
            None => {
                prop_assert!(h.percentile_head(p).is_err());
                prop_assert!(h.percentile_tail(q).is_err());
            }
            Some(exact_p) => {
                let exact_q = exact_percentile(&its, range_secs, q).unwrap();
                let head = h.percentile_head(p).unwrap();
                let tail = h.percentile_tail(q).unwrap();
                prop_assert!(head <= exact_p, "head {head} > {exact_p}");
                prop_assert!(exact_p < tail, "{exact_p} >= tail {tail}");
                // the rounding is to the containing bin, never further
                if p > 0.0 {
                    prop_assert!(exact_p - head < BIN_WIDTH_SECS);
                }
                prop_assert!(tail - exact_q <= BIN_WIDTH_SECS);
            }
        }
    }

    #[test]
    fn cv_matches_recomputation(its in idle_times(), range in 1u32..=300) {
        let mut h = IdleTimeHistogram::new(range).unwrap();
        for &x in &its {
            h.observe_secs(x).unwrap();
        }
        let bins: Vec<f64> = h.bins().iter().map(|&c| c as f64).collect();
        let n = bins.len() as f64;
        let mean = bins.iter().sum::<f64>() / n;
        match h.cv() {
            None => prop_assert_eq!(mean, 0.0),
            Some(cv) => {
                let var = bins.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / n;
                let expected = var.sqrt() / mean;
                prop_assert!((cv - expected).abs() <= 1e-9 * expected.max(1e-12), "{cv} vs {expected}");
            }
        }
    }
}
