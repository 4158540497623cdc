//! Spatial natural-scene statistics and angular features of one synthetic
//! scene at increasing blur strengths.
//!
//! cargo run --release --example quality_features

use lfiqa::data::{blur_score, gaussian_blur, synth_dataset};
use lfiqa::features::{angular_features, spatial_features};
use lfiqa::LfShape;

fn main() -> lfiqa::Result<()> {
    let shape = LfShape::new(3, 3, 48, 48, 3)?;
    let scene = synth_dataset(4, shape, 5)?[0].tensor()?;
    println!("blur  score  alpha(mscn)  sigma(mscn)  angular[0..4]");
    for blur in [0.0, 0.5, 1.0, 2.0, 3.0] {
        let lfi = gaussian_blur(&scene, blur);
        let spatial = spatial_features(&lfi)?.values;
        let angular = angular_features(&lfi)?.values;
        println!(
            "{blur:>4.1}  {:>5.2}  {:>11.4}  {:>11.4}  {:.4?}",
            blur_score(blur),
            spatial[0],
            spatial[1],
            &angular[..4]
        );
    }
    Ok(())
}
