//! Trains the tiny network on a synthetic blur-graded dataset and reports the
//! loss reduction and held-out correlation.
//!
//! cargo run --release --example train_tiny -- [seed] [lambda]

use std::time::Instant;

use lfiqa::data::{split_entries, synth_dataset};
use lfiqa::model::{build_alas_dads, Scale, TINY_INPUT};
use lfiqa::train::{dataset_loss, evaluate, initialize, train, TrainConfig};

fn main() -> lfiqa::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(1, |s| s.parse().expect("seed"));
    let lambda: f64 = args.next().map_or(0.01, |s| s.parse().expect("lambda"));

    let t0 = Instant::now();
    let entries = synth_dataset(64, TINY_INPUT, seed)?;
    let (train_set, test_set) = split_entries(&entries, 0.8, seed)?;
    println!(
        "dataset: {} train / {} test ({:.1}s)",
        train_set.len(),
        test_set.len(),
        t0.elapsed().as_secs_f64()
    );

    let config = TrainConfig {
        seed,
        lambda,
        ..TrainConfig::default()
    };
    let mut model = build_alas_dads(TINY_INPUT, Scale::Tiny, seed)?;
    model.lambda = lambda;
    let t1 = Instant::now();
    let (trained, history) = train(&model, &train_set, &config)?;
    println!(
        "trained {} epochs in {:.1}s",
        history.len(),
        t1.elapsed().as_secs_f64()
    );

    let initial = initialize(&model, &train_set, &config)?;
    let before = dataset_loss(&initial, &train_set)?;
    let after = dataset_loss(&trained, &train_set)?;
    println!(
        "training loss: {before:.4} -> {after:.4} (ratio {:.3})",
        after / before
    );

    let eval = evaluate(&trained, &test_set)?;
    match eval.metrics() {
        Ok(m) => println!(
            "held-out: rmse {:.4}  srocc {:.4}  plcc {:.4}",
            m.rmse, m.srocc, m.plcc
        ),
        Err(e) => println!(
            "held-out: rmse {:.4}  correlations unavailable: {e}",
            eval.rmse()
        ),
    }
    Ok(())
}
