//! Cross-module integration: the bound evaluator's decomposition, its
//! memoization, and failure tagging.

use gridopt::dataset::EventDataset;
use gridopt::error::Error;
use gridopt::expression::total_expression_error;
use gridopt::geometry::{GridGeometry, SpatialExtent};
use gridopt::prediction::{NoisyOraclePredictor, Predictor};
use gridopt::synth::{block_alpha_field, events_from_alpha};
use gridopt::timeslot::{DayFilter, TimeSlotSpec};
use gridopt::tuner::{brute_force_search, ternary_search, Objective, UpperBoundEvaluator};

fn city(seed: u64) -> EventDataset {
    let extent = SpatialExtent::new(0.0, 1.0, 0.0, 1.0).unwrap();
    let spec = TimeSlotSpec::new(30, DayFilter::All, 30, 0).unwrap();
    let alpha = block_alpha_field(16, 4, 0.5, 3.0, 16, seed).unwrap();
    let events = events_from_alpha(&alpha, &extent, &spec, 0, 45, seed);
    EventDataset::new(events, extent, spec, 30, 16).unwrap()
}

fn oracle_factory(scale: f64, seed: u64) -> Box<dyn gridopt::tuner::PredictorFactory> {
    Box::new(move |_side: u32| -> Box<dyn Predictor> {
        Box::new(NoisyOraclePredictor::new(scale, seed))
    })
}

#[test]
fn perfect_predictor_leaves_only_expression_error() {
    let data = city(1);
    let mut eval = UpperBoundEvaluator::new(&data, 16, 120, oracle_factory(0.0, 1));
    let value = eval.evaluate(4).unwrap();
    let b = eval.breakdown(4).unwrap();
    assert_eq!(b.mae, 0.0);
    assert_eq!(b.model_total, 0.0);
    assert_eq!(value, b.expression_total);

    // and the expression term matches a direct computation on the same data
    let geometry = GridGeometry::new(4, 16).unwrap();
    let series = data.binned(geometry);
    let alpha = data.train_alpha(&series).unwrap();
    let direct = total_expression_error(&alpha, 120).unwrap();
    assert_eq!(value, direct.total);
}

#[test]
fn full_resolution_leaves_only_model_error() {
    let data = city(2);
    let mut eval = UpperBoundEvaluator::new(&data, 16, 120, oracle_factory(1.5, 2));
    let value = eval.evaluate(16).unwrap();
    let b = eval.breakdown(16).unwrap();
    assert_eq!(b.expression_total, 0.0, "m = 1 must short-circuit to zero");
    assert_eq!(value, b.model_total);
    assert!((b.model_total - 256.0 * b.mae).abs() < 1e-9);
}

#[test]
fn evaluator_memoizes_across_searches() {
    let data = city(3);
    let mut eval = UpperBoundEvaluator::new(&data, 16, 80, oracle_factory(1.0, 3));
    let first = ternary_search(&mut eval).unwrap();
    assert!(first.probes.iter().any(|p| !p.cached));
    let second = ternary_search(&mut eval).unwrap();
    assert!(
        second.probes.iter().all(|p| p.cached),
        "second search recomputed sides: {:?}",
        second
            .probes
            .iter()
            .filter(|p| !p.cached)
            .map(|p| p.side)
            .collect::<Vec<_>>()
    );
    assert_eq!(first.chosen_n, second.chosen_n);

    // probe values are identical to the memoized breakdowns
    for p in &second.probes {
        assert_eq!(eval.breakdown(p.side).unwrap().value, p.value);
    }
}

#[test]
fn evaluator_failure_names_the_stage_and_keeps_trace() {
    // all events on a weekend, weekday filter: alpha estimation must fail
    let extent = SpatialExtent::new(0.0, 1.0, 0.0, 1.0).unwrap();
    let spec = TimeSlotSpec::default(); // weekdays
    let alpha = block_alpha_field(8, 4, 1.0, 2.0, 16, 9).unwrap();
    // days 2-3 are the first weekend of 1970
    let events = events_from_alpha(&alpha, &extent, &spec, 2, 2, 9);
    let data = EventDataset::new(events, extent, spec, 4, 16).unwrap();
    let mut eval = UpperBoundEvaluator::new(&data, 8, 50, oracle_factory(1.0, 9));
    let failure = brute_force_search(&mut eval, Some(&[2, 4])).unwrap_err();
    match failure.error {
        Error::Stage { stage, .. } => assert_eq!(stage, "model eval"),
        other => panic!("expected a stage-tagged error, got {other}"),
    }
}

#[test]
fn bound_decomposition_is_additive() {
    let data = city(5);
    let mut eval = UpperBoundEvaluator::new(&data, 16, 100, oracle_factory(0.8, 5));
    for side in [2u32, 4, 8] {
        let value = eval.evaluate(side).unwrap();
        let b = eval.breakdown(side).unwrap();
        assert_eq!(value, b.model_total + b.expression_total);
        assert!(b.mae >= 0.0 && b.expression_total >= 0.0);
        assert_eq!(b.model_total, (side as f64 * side as f64) * b.mae);
    }
}
