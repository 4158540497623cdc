//! The eight rotation and flip variants of a light field, written as `.lft`
//! files when an output directory is given.
//!
//! cargo run --release --example augmentation -- [out_dir]

use lfiqa::data::{augment, synth_dataset};
use lfiqa::LfShape;

const NAMES: [&str; 8] = ["r0", "r0f", "r90", "r90f", "r180", "r180f", "r270", "r270f"];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(std::path::PathBuf::from);
    let lfi = synth_dataset(4, LfShape::new(3, 3, 16, 24, 3)?, 2)?[0].tensor()?;
    for (name, variant) in NAMES.iter().zip(augment(&lfi)) {
        let s = variant.shape();
        let corner = variant.at(0, 0, 0, 0, 0);
        println!(
            "{name:<6} {}x{}x{}x{}x{}  first sample {corner:.3}",
            s.u, s.v, s.x, s.y, s.c
        );
        if let Some(dir) = &out {
            std::fs::create_dir_all(dir)?;
            variant.save_lft(&dir.join(format!("lfi_{name}.lft")))?;
        }
    }
    Ok(())
}
