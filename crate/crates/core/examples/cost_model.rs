//! Per-layer analytic and measured MACs for the quality network.
//!
//! cargo run --release --example cost_model -- [full|tiny]

use lfiqa::cost::cost_report;
use lfiqa::model::{build_alas_dads, Scale, FULL_INPUT, TINY_INPUT};

fn main() -> lfiqa::Result<()> {
    let (scale, shape) = match std::env::args().nth(1).as_deref() {
        Some("full") => (Scale::Full, FULL_INPUT),
        _ => (Scale::Tiny, TINY_INPUT),
    };
    let model = build_alas_dads(shape, scale, 0)?;
    let report = cost_report(&model)?;
    print!("{}", report.to_csv());
    println!();
    print!("{}", report.savings_csv());
    println!(
        "\ntotal: {} MACs analytic, {} measured, {} parameters",
        report.total_analytic, report.total_measured, report.total_params
    );
    Ok(())
}
