//! Runs each convolution family on the same light field and reports the
//! output shape and the multiply-accumulates actually performed.
//!
//! cargo run --release --example separable_convs

use lfiqa::ops::{apply_counted, LayerSpec};
use lfiqa::{LfShape, LfTensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-0.5..0.5)).collect()
}

fn main() -> lfiqa::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (a, k, ci, co) = (3, 3, 8, 8);
    let shape = LfShape::new(a, a, 24, 24, ci)?;
    let input = LfTensor::from_fn(shape, |_, _, _, _, _| rng.random_range(-1.0..1.0));

    let layers: Vec<(&str, Vec<LayerSpec>)> = vec![
        (
            "subview 2-D",
            vec![LayerSpec::subview2d(
                k,
                ci,
                co,
                1,
                weights(&mut rng, k * k * ci * co),
            )],
        ),
        (
            "depthwise + pointwise",
            vec![
                LayerSpec::depthwise(k, ci, 1, weights(&mut rng, k * k * ci)),
                LayerSpec::pointwise(ci, co, weights(&mut rng, ci * co), None),
            ],
        ),
        (
            "full 4-D",
            vec![LayerSpec::full4d(
                a,
                k,
                ci,
                co,
                weights(&mut rng, a * a * k * k * ci * co),
            )],
        ),
        (
            "anglewise V then H",
            vec![
                LayerSpec::anglewise_v(a, k, ci, co, weights(&mut rng, a * k * k * ci * co)),
                LayerSpec::anglewise_h(a, k, co, co, weights(&mut rng, a * k * k * co * co)),
            ],
        ),
    ];

    for (name, stack) in &layers {
        let mut x = input.clone();
        let mut macs = 0;
        for layer in stack {
            x = apply_counted(layer, &x, None, &mut macs)?;
        }
        let s = x.shape();
        let params: usize = stack.iter().map(|l| l.param_count()).sum();
        println!(
            "{name:<22} -> {}x{}x{}x{}x{}  {macs:>10} MACs  {params:>6} params",
            s.u, s.v, s.x, s.y, s.c
        );
    }
    Ok(())
}
