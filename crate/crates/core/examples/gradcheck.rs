//! Central finite differences against the analytic gradients of every layer kind.
//!
//! cargo run --release --example gradcheck -- [seeds]

use lfiqa::autodiff::{grad_check, grad_check_case};
use lfiqa::ops::LayerKind;

fn main() -> lfiqa::Result<()> {
    let seeds: u64 = std::env::args()
        .nth(1)
        .map_or(5, |s| s.parse().expect("seed count"));
    println!("{:<16} {:>12}", "op", "max rel err");
    for kind in LayerKind::ALL {
        let mut worst = 0.0f64;
        for seed in 0..seeds {
            let (layer, input) = grad_check_case(kind, seed);
            worst = worst.max(grad_check(&layer, &input, 1e-5)?);
        }
        println!("{:<16} {worst:>12.3e}", kind.name());
    }
    Ok(())
}
