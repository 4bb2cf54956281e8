mod common;

use std::fs::File;

use coldstart::policy::fixed_keep_alive;
use coldstart::simulator::simulate_app;
use coldstart::trace::generate_synthetic;
use coldstart::trace::{
    load_trace_dir, parse_invocation_counts, read_trace_cache, write_invocation_counts, write_trace_cache, AppTrace,
    Expansion, ParseOptions, RateDistribution, RowErrorPolicy, SyntheticSpec, Trigger, MINUTES_PER_DAY, SECS_PER_DAY,
};
use common::fixed_oracle;

fn cohort() -> Vec<AppTrace> {
    let spec = SyntheticSpec {
        n_apps: 120,
        horizon_secs: 3.0 * SECS_PER_DAY,
        rates: RateDistribution::default().capped(5_000.0),
        seed: 17,
        ..Default::default()
    };
    generate_synthetic(&spec).unwrap()
}

fn write_days(traces: &[AppTrace], days: u32) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for day in 0..days {
        let f = File::create(dir.path().join(format!("invocations_per_function_md.anon.d{:02}.csv", day + 1))).unwrap();
        write_invocation_counts(traces, day, Trigger::Http, f).unwrap();
    }
    dir
}

#[test]
fn minute_counts_survive_the_csv_round_trip() {
    let traces = cohort();
    let dir = write_days(&traces, 3);
    for expansion in [Expansion::MinuteStart, Expansion::UniformInMinute] {
        let loaded = load_trace_dir(dir.path(), expansion, &ParseOptions::default()).unwrap();
        assert_eq!(loaded.len(), traces.len());
        let total: usize = loaded.iter().map(AppTrace::len).sum();
        assert_eq!(total, traces.iter().map(AppTrace::len).sum::<usize>());
        for (a, b) in traces.iter().zip(&loaded) {
            assert_eq!(a.app_id, b.app_id);
            assert_eq!(a.minute_counts(), b.minute_counts());
            assert_eq!(b.horizon, 3.0 * SECS_PER_DAY);
        }
    }
}

#[test]
fn binned_traces_match_the_oracle() {
    let traces = cohort();
    let dir = write_days(&traces, 3);
    let loaded = load_trace_dir(dir.path(), Expansion::MinuteStart, &ParseOptions::default()).unwrap();
    for t in &loaded {
        assert!(t.invocations.iter().all(|x| x % 60.0 == 0.0));
        for w in [0.0, 600.0, 3600.0] {
            let r = simulate_app(t, &mut fixed_keep_alive(w).unwrap()).unwrap();
            let (cold, wasted, _) = fixed_oracle(t, w);
            assert_eq!(r.cold_starts, cold);
            assert!((r.wasted_memory_secs - wasted).abs() < 1e-6);
        }
    }
}

#[test]
fn cache_round_trip_is_exact() {
    let traces = cohort();
    let mut buf = Vec::new();
    write_trace_cache(&traces, &mut buf).unwrap();
    assert_eq!(read_trace_cache(buf.as_slice()).unwrap(), traces);

    let dir = tempfile::tempdir().unwrap();
    write_trace_cache(&traces, File::create(dir.path().join("cache.jsonl")).unwrap()).unwrap();
    // a cache wins over day files in the same directory
    write_invocation_counts(
        &traces[..3],
        0,
        Trigger::Timer,
        File::create(dir.path().join("invocations_d01.csv")).unwrap(),
    )
    .unwrap();
    let loaded = load_trace_dir(dir.path(), Expansion::default(), &ParseOptions::default()).unwrap();
    assert_eq!(loaded, traces);
}

#[test]
fn malformed_rows_are_skipped_or_fatal() {
    let traces = cohort();
    let mut buf = Vec::new();
    write_invocation_counts(&traces[..5], 0, Trigger::Queue, &mut buf).unwrap();
    let mut text = String::from_utf8(buf).unwrap();
    text.push_str("o,a,f,http,1,2\n");
    let mut bad_count = vec!["x".to_string(); 4];
    bad_count.extend((0..MINUTES_PER_DAY).map(|m| if m == 3 { "-1".into() } else { "0".into() }));
    text.push_str(&bad_count.join(","));
    text.push('\n');

    let parsed = parse_invocation_counts(text.as_bytes(), 0, &ParseOptions::default()).unwrap();
    assert_eq!(parsed.records.len(), 5);
    assert_eq!(parsed.skipped.iter().map(|s| s.line).collect::<Vec<_>>(), vec![7, 8]);
    assert!(parsed.records.iter().all(|r| r.trigger == Trigger::Queue));

    let strict = ParseOptions { on_row_error: RowErrorPolicy::Abort };
    let err = parse_invocation_counts(text.as_bytes(), 0, &strict).unwrap_err();
    assert!(matches!(err, coldstart::Error::Row { line: 7, .. }), "{err:?}");
}

#[test]
fn empty_directory_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_trace_dir(dir.path(), Expansion::default(), &ParseOptions::default()).unwrap_err();
    assert_eq!(err.kind(), "config");
}
