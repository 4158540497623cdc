//! Block-by-block layout of the quality network: input shape of every block,
//! parameter counts and the size of the flattened trunk output.
//!
//! cargo run --release --example model_summary -- [full|tiny]

use lfiqa::model::{build_alas_dads, Scale, Section, FULL_INPUT, TINY_INPUT};

fn main() -> lfiqa::Result<()> {
    let (scale, shape) = match std::env::args().nth(1).as_deref() {
        Some("tiny") => (Scale::Tiny, TINY_INPUT),
        _ => (Scale::Full, FULL_INPUT),
    };
    let model = build_alas_dads(shape, scale, 0)?;
    let shapes = model.trunk_shapes()?;
    println!(
        "{:<22} {:>24} {:>10}",
        "block", "input (u,v,x,y,c)", "params"
    );
    for (i, block) in model.blocks.iter().enumerate() {
        let end = model
            .blocks
            .get(i + 1)
            .map_or(model.trunk.len(), |b| b.first_layer);
        let params: usize = model.trunk[block.first_layer..end]
            .iter()
            .map(|l| l.param_count())
            .sum();
        let s = shapes[block.first_layer];
        println!(
            "{:<22} {:>24} {:>10}",
            block.label,
            format!("{}x{}x{}x{}x{}", s.u, s.v, s.x, s.y, s.c),
            params
        );
    }
    println!("\nprimary head input: {}", model.primary_head_inputs()?);
    for section in [
        Section::Trunk,
        Section::Primary,
        Section::Spatial,
        Section::Angular,
    ] {
        let params: usize = model.section(section).iter().map(|l| l.param_count()).sum();
        println!(
            "{section:?}: {} layers, {params} parameters",
            model.section(section).len()
        );
    }
    Ok(())
}
