#![allow(dead_code)]

use coldstart::trace::AppTrace;
use rand::Rng;

/// Gaps that exercise window edges: exact minutes, zeros, and long tails.
pub fn random_gap<R: Rng>(rng: &mut R) -> f64 {
    match rng.random_range(0..10) {
        0 => 0.0,
        1 => rng.random_range(0..=300u32) as f64 * 60.0,
        2 => [600.0, 3600.0, 7200.0, 14_400.0][rng.random_range(0..4)],
        3..=5 => rng.random_range(0.0..900.0),
        6..=8 => rng.random_range(0.0..20_000.0),
        _ => rng.random_range(0.0..200_000.0),
    }
}

pub fn random_trace<R: Rng>(rng: &mut R, id: usize, max_len: usize) -> AppTrace {
    let n = rng.random_range(1..=max_len);
    let mut t = rng.random_range(0.0..3600.0);
    let mut inv = Vec::with_capacity(n);
    for _ in 0..n {
        inv.push(t);
        t += random_gap(rng);
    }
    let horizon = inv[n - 1] + rng.random_range(0.0..30_000.0);
    AppTrace::new(format!("app-{id}"), inv, horizon).unwrap()
}

/// Cold starts and wasted seconds for a fixed keep-alive of `w` seconds,
/// straight from inter-arrival times.
pub fn fixed_oracle(trace: &AppTrace, w: f64) -> (u64, f64, Vec<bool>) {
    let inv = &trace.invocations;
    let mut warm = vec![false; inv.len()];
    let mut wasted = 0.0;
    for i in 1..inv.len() {
        let iat = inv[i] - inv[i - 1];
        warm[i] = iat <= w;
        wasted += iat.min(w);
    }
    wasted += (trace.horizon - inv[inv.len() - 1]).min(w);
    let cold = warm.iter().filter(|w| !**w).count() as u64;
    (cold, wasted, warm)
}
