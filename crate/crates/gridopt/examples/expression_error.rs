//! Expression-error engines: agreement, truncation behavior and speed.
//!
//! Run with: cargo run --release --example expression_error

use std::time::Instant;

use gridopt::expression::{
    adaptive_k, expr_error_fast, expr_error_monte_carlo, expr_error_naive, expr_error_reference,
    scan_k_convergence, ExprErrorInput, DEFAULT_K,
};

fn main() {
    // one cell with rate 2.5 inside a model grid of 16 cells totalling 30
    let input = ExprErrorInput::new(2.5, 27.5, 16, DEFAULT_K).unwrap();

    println!("engines on alpha_j = 2.5, alpha_rest = 27.5, m = 16, K = {DEFAULT_K}:");
    let t = Instant::now();
    let reference = expr_error_reference(&input);
    let t_ref = t.elapsed();
    let t = Instant::now();
    let naive = expr_error_naive(&input);
    let t_naive = t.elapsed();
    let t = Instant::now();
    let fast = expr_error_fast(&input);
    let t_fast = t.elapsed();
    println!("  reference: {reference:.12}  ({t_ref:?})");
    println!("  naive:     {naive:.12}  ({t_naive:?})");
    println!("  fast:      {fast:.12}  ({t_fast:?})");
    println!(
        "  max pairwise deviation: {:.3e}",
        (reference - naive)
            .abs()
            .max((reference - fast).abs())
            .max((naive - fast).abs())
    );

    // simulation cross-check
    let (estimate, std_err) = expr_error_monte_carlo(2.5, 27.5, 16, 1_000_000, 42);
    println!(
        "  monte carlo (1e6 samples): {estimate:.6} +- {std_err:.6} \
         ({:.2} standard errors from analytic)",
        (estimate - fast).abs() / std_err
    );

    // truncation: values climb to a limit as K grows
    println!("\ntruncation scan (alpha_j = 3, alpha_rest = 9, m = 4):");
    for p in scan_k_convergence(3.0, 9.0, 4, &[10, 25, 50, 100, 250, 500]).unwrap() {
        println!(
            "  K = {:3}: {:.15}  ({:.1} us)",
            p.k,
            p.value,
            p.seconds * 1e6
        );
    }
    println!(
        "  adaptive K for alpha_j + alpha_rest = 12: {}",
        adaptive_k(3.0, 9.0, DEFAULT_K)
    );

    // large rates are fine: the recurrences are range-guarded
    let big = ExprErrorInput::new(4.0, 1500.0, 256, 80).unwrap();
    println!(
        "\nlarge-rate cell (alpha_rest = 1500, m = 256): {:.9}",
        expr_error_fast(&big)
    );
}
