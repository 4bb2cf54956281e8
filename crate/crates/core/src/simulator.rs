//! Trace-driven replay of one policy over per-application invocation streams.
//!
//! Execution time is zero unless [`ExecutionModel::TraceMean`] is selected, so
//! idle time equals inter-arrival time. The first invocation of every app is
//! cold. After each invocation the policy yields the windows that decide
//! whether the next arrival is warm and how much loaded-but-idle time it costs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::IdleTime;
use crate::policy::{KeepAlivePolicy, PolicyDecision, PolicySpec};
use crate::trace::AppTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StartKind {
    Cold,
    Warm,
}

/// Warm/cold verdict for an arrival `idle_secs` after the previous execution
/// ended.
///
/// Without pre-warming the arrival is warm while `idle <= keep_alive`. With
/// pre-warming the image is back at `pre_warm` (an arrival at exactly that
/// instant finds it loaded) and stays until `pre_warm + keep_alive`.
pub fn classify_arrival(decision: &PolicyDecision, idle_secs: f64) -> StartKind {
    let warm = if decision.pre_warm_secs == 0.0 {
        idle_secs <= decision.keep_alive_secs
    } else {
        decision.pre_warm_secs <= idle_secs && idle_secs <= decision.warm_until_secs()
    };
    if warm {
        StartKind::Warm
    } else {
        StartKind::Cold
    }
}

/// Loaded-but-idle time over an idle gap of `idle_secs`. An arrival before
/// the pre-warm cancels it, so nothing is charged.
pub fn account_idle(decision: &PolicyDecision, idle_secs: f64) -> f64 {
    if decision.pre_warm_secs == 0.0 {
        idle_secs.min(decision.keep_alive_secs)
    } else if idle_secs <= decision.pre_warm_secs {
        0.0
    } else {
        idle_secs.min(decision.warm_until_secs()) - decision.pre_warm_secs
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionModel {
    #[default]
    Zero,
    /// Every invocation runs for the trace's `exec_secs` (zero when absent).
    TraceMean,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    pub execution: ExecutionModel,
}

/// Replay state of one application.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AppSimState {
    pub loaded: bool,
    /// When the image last entered memory.
    pub load_time: Option<f64>,
    pub prewarm_at: Option<f64>,
    pub unload_at: Option<f64>,
    pub cold_starts: u64,
    pub warm_starts: u64,
    pub wasted_memory_secs: f64,
    /// End of the latest execution.
    pub prev_end: Option<f64>,
}

impl AppSimState {
    /// Brings the load state forward to time `now` under `decision`, which
    /// was issued at `prev_end`.
    fn advance_to(&mut self, now: f64) {
        if let Some(p) = self.prewarm_at {
            if p <= now {
                self.loaded = true;
                self.load_time = Some(p);
                self.prewarm_at = None;
            }
        }
        if let Some(u) = self.unload_at {
            if u < now {
                self.loaded = false;
                self.unload_at = None;
            }
        }
    }

    /// Applies the windows that follow an execution ending at `end`.
    fn schedule(&mut self, decision: &PolicyDecision, end: f64) {
        if decision.pre_warm_secs == 0.0 {
            self.prewarm_at = None;
            self.unload_at = Some(end + decision.keep_alive_secs);
        } else {
            self.loaded = false;
            self.prewarm_at = Some(end + decision.pre_warm_secs);
            self.unload_at = Some(end + decision.warm_until_secs());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppResult {
    pub app_id: String,
    pub invocations: u64,
    pub cold_starts: u64,
    pub cold_pct: f64,
    pub wasted_memory_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_mb: Option<f64>,
}

pub fn simulate_app<P: KeepAlivePolicy + ?Sized>(trace: &AppTrace, policy: &mut P) -> Result<AppResult> {
    simulate_app_with(trace, policy, &SimOptions::default()).map(|(r, _)| r)
}

/// Replays one trace and returns the result with the final state.
pub fn simulate_app_with<P: KeepAlivePolicy + ?Sized>(
    trace: &AppTrace,
    policy: &mut P,
    opts: &SimOptions,
) -> Result<(AppResult, AppSimState)> {
    replay(trace, policy, opts, |_| {})
}

/// [`simulate_app`] that also returns the start kind of every invocation.
pub fn simulate_app_detailed<P: KeepAlivePolicy + ?Sized>(
    trace: &AppTrace,
    policy: &mut P,
    opts: &SimOptions,
) -> Result<(AppResult, Vec<StartKind>)> {
    let mut kinds = Vec::with_capacity(trace.len());
    let (r, _) = replay(trace, policy, opts, |k| kinds.push(k))?;
    Ok((r, kinds))
}

fn replay<P: KeepAlivePolicy + ?Sized>(
    trace: &AppTrace,
    policy: &mut P,
    opts: &SimOptions,
    mut on_start: impl FnMut(StartKind),
) -> Result<(AppResult, AppSimState)> {
    if trace.is_empty() {
        return Err(Error::Contract(format!("{}: empty trace", trace.app_id)));
    }
    let exec = match opts.execution {
        ExecutionModel::Zero => 0.0,
        ExecutionModel::TraceMean => trace.exec_secs.unwrap_or(0.0).max(0.0),
    };
    let mut st = AppSimState::default();
    let mut decision: Option<PolicyDecision> = None;
    let mut prev_arrival = f64::NEG_INFINITY;

    for &arrival in &trace.invocations {
        if arrival.partial_cmp(&prev_arrival).is_none_or(|o| o.is_lt()) || arrival > trace.horizon {
            return Err(Error::Contract(format!(
                "{}: invocation {arrival} out of order or past horizon",
                trace.app_id
            )));
        }
        prev_arrival = arrival;
        st.advance_to(arrival);

        let (kind, idle) = match (decision, st.prev_end) {
            (Some(d), Some(end)) if arrival > end => {
                let it = arrival - end;
                st.wasted_memory_secs += account_idle(&d, it);
                (classify_arrival(&d, it), Some(it))
            }
            // same instant as, or overlapping, the previous execution
            (Some(_), Some(_)) => (StartKind::Warm, Some(0.0)),
            _ => (StartKind::Cold, None),
        };
        on_start(kind);
        match kind {
            StartKind::Warm => st.warm_starts += 1,
            StartKind::Cold => {
                st.cold_starts += 1;
                st.load_time = Some(arrival);
            }
        }
        st.loaded = true;
        st.prewarm_at = None;

        let d = policy.on_invocation(idle.map(IdleTime::from_secs).transpose()?);
        let end = st.prev_end.map_or(arrival + exec, |e| e.max(arrival + exec));
        st.prev_end = Some(end);
        st.schedule(&d, end);
        decision = Some(d);
    }

    if let (Some(d), Some(end)) = (decision, st.prev_end) {
        if trace.horizon > end {
            st.wasted_memory_secs += account_idle(&d, trace.horizon - end);
        }
        st.advance_to(trace.horizon);
    }

    let invocations = st.cold_starts + st.warm_starts;
    Ok((
        AppResult {
            app_id: trace.app_id.clone(),
            invocations,
            cold_starts: st.cold_starts,
            cold_pct: 100.0 * st.cold_starts as f64 / invocations as f64,
            wasted_memory_secs: st.wasted_memory_secs,
            memory_mb: trace.memory_mb,
        },
        st,
    ))
}

/// Replays every trace with a fresh policy from `factory`. Output order
/// follows input order; apps run in parallel.
pub fn simulate_all<F, P>(traces: &[AppTrace], factory: F) -> Result<Vec<AppResult>>
where
    F: Fn() -> Result<P> + Sync,
    P: KeepAlivePolicy,
{
    simulate_all_with(traces, factory, &SimOptions::default())
}

pub fn simulate_all_with<F, P>(traces: &[AppTrace], factory: F, opts: &SimOptions) -> Result<Vec<AppResult>>
where
    F: Fn() -> Result<P> + Sync,
    P: KeepAlivePolicy,
{
    traces
        .par_iter()
        .map(|t| {
            let mut policy = factory()?;
            simulate_app_with(t, &mut policy, opts)
                .map(|(r, _)| r)
                .map_err(|e| Error::App { app_id: t.app_id.clone(), source: Box::new(e) })
        })
        .collect()
}

/// [`simulate_all`] for a policy description.
pub fn simulate_policy(traces: &[AppTrace], spec: &PolicySpec, opts: &SimOptions) -> Result<Vec<AppResult>> {
    spec.validate()?;
    simulate_all_with(traces, || spec.build(), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{fixed_keep_alive, no_unload, AppPolicy, DecisionSource};

    fn d(pre_warm_min: f64, keep_alive_min: f64) -> PolicyDecision {
        PolicyDecision {
            pre_warm_secs: pre_warm_min * 60.0,
            keep_alive_secs: keep_alive_min * 60.0,
            source: DecisionSource::Histogram,
        }
    }

    fn run(spec: PolicySpec, invocations: Vec<f64>, horizon: f64) -> AppResult {
        let trace = AppTrace::new("a", invocations, horizon).unwrap();
        simulate_app(&trace, &mut spec.build().unwrap()).unwrap()
    }

    #[test]
    fn classify_boundaries() {
        assert_eq!(classify_arrival(&d(0.0, 10.0), 600.0), StartKind::Warm);
        assert_eq!(classify_arrival(&d(0.0, 10.0), 600.1), StartKind::Cold);
        assert_eq!(classify_arrival(&d(6.3, 2.5), 7.0 * 60.0), StartKind::Warm);
        assert_eq!(classify_arrival(&d(6.3, 2.5), 3.0 * 60.0), StartKind::Cold);
        assert_eq!(classify_arrival(&d(6.3, 2.5), 6.3 * 60.0), StartKind::Warm);
        assert_eq!(classify_arrival(&d(6.3, 2.5), 8.9 * 60.0), StartKind::Cold);
    }

    #[test]
    fn idle_accounting() {
        assert_eq!(account_idle(&d(0.0, 10.0), 240.0), 240.0);
        assert_eq!(account_idle(&d(0.0, 10.0), 4000.0), 600.0);
        assert!((account_idle(&d(6.3, 2.5), 420.0) - 42.0).abs() < 1e-9);
        assert!((account_idle(&d(6.3, 2.5), 10_000.0) - 150.0).abs() < 1e-9);
        assert_eq!(account_idle(&d(6.3, 2.5), 100.0), 0.0);
    }

    #[test]
    fn fixed_ten_minute_walk() {
        let r = run(PolicySpec::fixed_minutes(10.0), vec![0.0, 300.0, 1800.0], 2000.0);
        assert_eq!((r.invocations, r.cold_starts), (3, 2));
        // 300 idle while loaded, then 600 of keep-alive, then 200 until the horizon
        assert_eq!(r.wasted_memory_secs, 300.0 + 600.0 + 200.0);
        let r = run(PolicySpec::fixed_minutes(10.0), vec![0.0, 300.0, 1800.0], 5000.0);
        assert_eq!(r.wasted_memory_secs, 1500.0);
    }

    #[test]
    fn no_unload_has_only_the_first_cold_start() {
        let r = run(PolicySpec::NoUnload, vec![100.0, 5000.0, 90_000.0], 100_000.0);
        assert_eq!(r.cold_starts, 1);
        assert_eq!(r.wasted_memory_secs, 100_000.0 - 100.0);
    }

    #[test]
    fn single_invocation_is_always_cold() {
        for spec in [PolicySpec::NoUnload, PolicySpec::fixed_minutes(60.0), PolicySpec::Hybrid(Default::default())] {
            assert_eq!(run(spec, vec![42.0], 1000.0).cold_pct, 100.0);
        }
    }

    #[test]
    fn zero_window_makes_every_gap_cold() {
        let r = run(PolicySpec::fixed_minutes(0.0), vec![0.0, 0.0, 1.0, 2.0, 2.0], 10.0);
        assert_eq!(r.cold_starts, 3);
        assert_eq!(r.wasted_memory_secs, 0.0);
    }

    #[test]
    fn simultaneous_arrivals_are_warm() {
        let r = run(PolicySpec::fixed_minutes(1.0), vec![0.0, 0.0, 0.0, 600.0, 600.0], 600.0);
        assert_eq!(r.cold_starts, 2);
    }

    #[test]
    fn pre_warm_state_is_tracked() {
        let trace = AppTrace::new("a", vec![0.0, 420.0], 10_000.0).unwrap();
        let mut p = AppPolicy::Static(d(6.3, 2.5));
        let (r, st) = simulate_app_with(&trace, &mut p, &SimOptions::default()).unwrap();
        assert_eq!(r.cold_starts, 1);
        assert!((r.wasted_memory_secs - (42.0 + 150.0)).abs() < 1e-9);
        assert!(!st.loaded);
        assert_eq!(st.load_time, Some(420.0 + 378.0));
    }

    #[test]
    fn unsorted_trace_is_rejected() {
        let trace = AppTrace {
            app_id: "x".into(),
            invocations: vec![5.0, 1.0],
            horizon: 10.0,
            memory_mb: None,
            exec_secs: None,
        };
        let err = simulate_app(&trace, &mut AppPolicy::Static(no_unload())).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
        let err = simulate_all(std::slice::from_ref(&trace), || Ok(AppPolicy::Static(no_unload()))).unwrap_err();
        assert!(matches!(err, Error::App { ref app_id, .. } if app_id == "x"));
    }

    #[test]
    fn execution_time_shrinks_idle_gaps() {
        let mut trace = AppTrace::new("a", vec![0.0, 700.0], 1000.0).unwrap();
        trace.exec_secs = Some(200.0);
        let mut p = AppPolicy::Static(fixed_keep_alive(600.0).unwrap());
        let opts = SimOptions { execution: ExecutionModel::TraceMean };
        let (r, _) = simulate_app_with(&trace, &mut p, &opts).unwrap();
        // idle gap 500 s is warm; 100 s of keep-alive remain before the horizon
        assert_eq!(r.cold_starts, 1);
        assert_eq!(r.wasted_memory_secs, 500.0 + 100.0);
        let (zero, _) = simulate_app_with(&trace, &mut p, &SimOptions::default()).unwrap();
        assert_eq!(zero.cold_starts, 2);
    }

    #[test]
    fn results_keep_input_order() {
        let a = AppTrace::new("a", vec![0.0, 10.0], 100.0).unwrap();
        let b = AppTrace::new("b", vec![0.0, 5000.0], 6000.0).unwrap();
        let spec = PolicySpec::fixed_minutes(10.0);
        let ab = simulate_policy(&[a.clone(), b.clone()], &spec, &SimOptions::default()).unwrap();
        let ba = simulate_policy(&[b, a], &spec, &SimOptions::default()).unwrap();
        assert_eq!(ab[0], ba[1]);
        assert_eq!(ab[1], ba[0]);
    }
}
