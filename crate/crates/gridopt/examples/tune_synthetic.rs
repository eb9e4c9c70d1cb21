//! End-to-end tuning on a synthetic city: build the bound curve by brute
//! force, then let ternary search and the bounded local walk find the same
//! minimum with far fewer model fits.
//!
//! Run with: cargo run --release --example tune_synthetic

use gridopt::dataset::EventDataset;
use gridopt::geometry::SpatialExtent;
use gridopt::prediction::{NoisyOraclePredictor, Predictor};
use gridopt::synth::{block_alpha_field, events_from_alpha};
use gridopt::timeslot::{DayFilter, TimeSlotSpec};
use gridopt::tuner::{
    brute_force_search, iterative_search, optimal_ratio, ternary_search, SearchTrace,
    UpperBoundEvaluator,
};

fn show(label: &str, trace: &SearchTrace, brute_min: f64) {
    println!(
        "{label:9} chose n = {:4} (side {:2}), bound {:10.3}, {:2} probes, optimal ratio {:.4}",
        trace.chosen_n,
        trace.chosen_side,
        trace.chosen_value,
        trace.probes.len(),
        optimal_ratio(brute_min, trace.chosen_value),
    );
}

fn main() {
    let n_ref_side = 32u32;
    let extent = SpatialExtent::new(0.0, 1.0, 0.0, 1.0).unwrap();
    let spec = TimeSlotSpec::new(30, DayFilter::All, 30, 0).unwrap();

    // block-heterogeneous city, 30 training days, 40 held-out days
    let alpha = block_alpha_field(n_ref_side, 4, 0.2, 2.0, 16, 3).unwrap();
    let events = events_from_alpha(&alpha, &extent, &spec, 0, 70, 3);
    println!(
        "synthetic city: {} events, {:.1} expected per day\n",
        events.len(),
        alpha.total()
    );
    let data = EventDataset::new(events, extent, spec, 30, 16).unwrap();

    let factory =
        |_side: u32| -> Box<dyn Predictor> { Box::new(NoisyOraclePredictor::new(1.5, 3)) };

    // the full curve over sides dividing the reference resolution
    let candidates: Vec<u32> = vec![1, 2, 4, 8, 16, 32];
    let mut eval = UpperBoundEvaluator::new(&data, n_ref_side, 80, Box::new(factory));
    let brute = brute_force_search(&mut eval, Some(&candidates)).unwrap();
    println!("side     n * MAE      expr error         bound");
    for b in eval.breakdowns() {
        println!(
            "{:4}  {:10.3}  {:14.3}  {:12.3}{}",
            b.side,
            b.model_total,
            b.expression_total,
            b.value,
            if b.side == brute.chosen_side {
                "  <- minimum"
            } else {
                ""
            }
        );
    }
    println!();

    // the cheap searches on fresh evaluators (no shared memo)
    let mut eval_t = UpperBoundEvaluator::new(&data, n_ref_side, 80, Box::new(factory));
    let ternary = ternary_search(&mut eval_t).unwrap();
    let mut eval_i = UpperBoundEvaluator::new(&data, n_ref_side, 80, Box::new(factory));
    let iterative = iterative_search(&mut eval_i, 16, 4).unwrap();

    show("brute", &brute, brute.chosen_value);
    show("ternary", &ternary, brute.chosen_value);
    show("iterative", &iterative, brute.chosen_value);
}
