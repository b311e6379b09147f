mod common;

use vho_core::harness::compute_metrics;

#[test]
fn fixtures_match_exactly() {
    let cases = common::metric_fixtures();
    assert!(cases.len() >= 3);
    for c in cases {
        assert_eq!(compute_metrics(&c.steps).unwrap(), c.expected, "{}", c.name);
    }
}

#[test]
fn swapping_traces_swaps_metrics() {
    let cases = common::metric_fixtures();
    let (a, b) = (&cases[0], &cases[1]);
    let forward = [compute_metrics(&a.steps).unwrap(), compute_metrics(&b.steps).unwrap()];
    let swapped = [compute_metrics(&b.steps).unwrap(), compute_metrics(&a.steps).unwrap()];
    assert_eq!(forward[0], swapped[1]);
    assert_eq!(forward[1], swapped[0]);
}
