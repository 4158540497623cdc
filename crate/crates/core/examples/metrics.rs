//! RMSE, Spearman and Pearson correlation between subjective scores and a
//! set of predictions, including tied values.
//!
//! cargo run --release --example metrics

use lfiqa::train::metrics;

fn main() -> lfiqa::Result<()> {
    let mos = [4.6, 3.9, 3.9, 2.7, 2.1, 1.4, 3.2, 4.1];
    let predictions = [
        ("close", [4.4, 3.8, 4.0, 2.9, 2.0, 1.7, 3.1, 4.2]),
        (
            "monotone but biased",
            [3.9, 3.1, 3.1, 1.9, 1.2, 0.1, 2.6, 3.4],
        ),
        ("ties everywhere", [3.0, 3.0, 3.0, 2.0, 2.0, 2.0, 3.0, 3.0]),
    ];
    println!(
        "{:<20} {:>7} {:>7} {:>7}",
        "prediction", "rmse", "srocc", "plcc"
    );
    for (name, p) in predictions {
        let m = metrics(&mos, &p)?;
        println!(
            "{name:<20} {:>7.4} {:>7.4} {:>7.4}",
            m.rmse, m.srocc, m.plcc
        );
    }
    Ok(())
}
