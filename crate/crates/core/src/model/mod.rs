//! Network assembly: the trunk, the three task heads, losses and checkpoints.

mod build;
mod checkpoint;
mod loss;

pub use build::{build_ablation, build_alas_dads, AblationKind, BlockKind, FULL_INPUT, TINY_INPUT};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use loss::{
    loss_angular, loss_features, loss_primary, loss_spatial, loss_total, DEFAULT_LAMBDA,
};

use crate::error::{LfError, Result};
use crate::features::LabelStats;
use crate::ops::{apply_counted, LayerKind, LayerSpec};
use crate::tensor::{LfShape, LfTensor};

/// Output lengths of the primary, spatial and angular heads.
pub const HEAD_OUTPUTS: [usize; 3] = [1, 36, 8];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    /// The 7x7x434x434x3 network.
    Full,
    /// Same topology on a small light field, for desk-scale experiments.
    Tiny,
    /// Anything else (ablation backbones, hand-built models).
    Custom,
}

impl Scale {
    pub(crate) fn tag(self) -> u32 {
        match self {
            Scale::Full => 0,
            Scale::Tiny => 1,
            Scale::Custom => 2,
        }
    }

    pub(crate) fn from_tag(tag: u32) -> Option<Scale> {
        [Scale::Full, Scale::Tiny, Scale::Custom]
            .get(tag as usize)
            .copied()
    }
}

/// A labelled group of trunk layers (one row of the model table).
#[derive(Clone, Debug, PartialEq)]
pub struct BlockInfo {
    pub label: String,
    pub kind: BlockKind,
    pub first_layer: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Section {
    Trunk,
    Primary,
    Spatial,
    Angular,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub input_shape: LfShape,
    pub trunk: Vec<LayerSpec>,
    pub primary: Vec<LayerSpec>,
    pub spatial: Vec<LayerSpec>,
    pub angular: Vec<LayerSpec>,
    /// Auxiliary loss weight.
    pub lambda: f64,
    /// Rate for `Dropout` layers during training.
    pub dropout: f64,
    pub scale: Scale,
    pub blocks: Vec<BlockInfo>,
    /// Statistics used to normalize auxiliary labels during training; used
    /// to map head outputs back to feature units.
    pub label_stats: Option<(LabelStats, LabelStats)>,
}

/// Predicted score and auxiliary feature estimates for one light field.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub score: f64,
    pub spatial: Vec<f64>,
    pub angular: Vec<f64>,
}

impl ModelSpec {
    /// A model consisting of a trunk only; its single output is the trunk output.
    pub fn trunk_only(input_shape: LfShape, trunk: Vec<LayerSpec>) -> Self {
        ModelSpec {
            input_shape,
            trunk,
            primary: Vec::new(),
            spatial: Vec::new(),
            angular: Vec::new(),
            lambda: DEFAULT_LAMBDA,
            dropout: 0.0,
            scale: Scale::Custom,
            blocks: Vec::new(),
            label_stats: None,
        }
    }

    pub fn has_heads(&self) -> bool {
        !(self.primary.is_empty() && self.spatial.is_empty() && self.angular.is_empty())
    }

    pub fn section(&self, section: Section) -> &[LayerSpec] {
        match section {
            Section::Trunk => &self.trunk,
            Section::Primary => &self.primary,
            Section::Spatial => &self.spatial,
            Section::Angular => &self.angular,
        }
    }

    /// All layers in global order: trunk, primary, spatial, angular.
    pub fn layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.trunk
            .iter()
            .chain(&self.primary)
            .chain(&self.spatial)
            .chain(&self.angular)
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut LayerSpec> {
        self.trunk
            .iter_mut()
            .chain(self.primary.iter_mut())
            .chain(self.spatial.iter_mut())
            .chain(self.angular.iter_mut())
    }

    pub fn layer_count(&self) -> usize {
        self.trunk.len() + self.primary.len() + self.spatial.len() + self.angular.len()
    }

    /// Global index of the first layer in each section.
    pub fn section_offsets(&self) -> [usize; 4] {
        let t = self.trunk.len();
        let p = t + self.primary.len();
        let s = p + self.spatial.len();
        [0, t, p, s]
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(LayerSpec::param_count).sum()
    }

    /// Input shape of every trunk layer followed by the trunk output shape.
    pub fn trunk_shapes(&self) -> Result<Vec<LfShape>> {
        let mut shapes = vec![self.input_shape];
        for (i, layer) in self.trunk.iter().enumerate() {
            let broken = |reason: String| LfError::ShapeChainBroken { layer: i, reason };
            layer.validate().map_err(|e| broken(e.to_string()))?;
            let input = shapes[i];
            if let Some(skip) = layer.skip {
                let other = shapes.get(skip).filter(|_| skip <= i).ok_or_else(|| {
                    broken(format!(
                        "residual source {skip} is not an earlier activation"
                    ))
                })?;
                if *other != input {
                    return Err(broken(format!(
                        "residual operands {other} and {input} differ"
                    )));
                }
            }
            let out = layer
                .output_shape(input)
                .map_err(|e| broken(e.to_string()))?;
            shapes.push(out);
        }
        Ok(shapes)
    }

    /// Validates the whole shape chain and returns the output shape of each head
    /// (or of the trunk when there are no heads).
    pub fn output_shapes(&self) -> Result<Vec<LfShape>> {
        let trunk_out = *self.trunk_shapes()?.last().unwrap();
        if !self.has_heads() {
            return Ok(vec![trunk_out]);
        }
        let offsets = self.section_offsets();
        [Section::Primary, Section::Spatial, Section::Angular]
            .iter()
            .zip(&offsets[1..])
            .map(|(&section, &base)| {
                let mut shape = trunk_out;
                for (i, layer) in self.section(section).iter().enumerate() {
                    let broken = |reason: String| LfError::ShapeChainBroken {
                        layer: base + i,
                        reason,
                    };
                    if layer.kind == LayerKind::ResidualAdd {
                        return Err(broken(
                            "residual adds are only supported in the trunk".into(),
                        ));
                    }
                    layer.validate().map_err(|e| broken(e.to_string()))?;
                    shape = layer
                        .output_shape(shape)
                        .map_err(|e| broken(e.to_string()))?;
                }
                Ok(shape)
            })
            .collect()
    }

    /// Input length of the primary head's dense layer (the flattened trunk output).
    pub fn primary_head_inputs(&self) -> Result<usize> {
        Ok(self.trunk_shapes()?.last().unwrap().len())
    }

    /// Inference forward pass. `macs`, when given, receives one entry per layer
    /// in global order.
    pub fn forward(
        &self,
        input: &LfTensor,
        mut macs: Option<&mut Vec<u64>>,
    ) -> Result<Vec<LfTensor>> {
        if input.shape() != self.input_shape {
            return Err(LfError::ShapeMismatch(format!(
                "model expects {}, got {}",
                self.input_shape,
                input.shape()
            )));
        }
        self.output_shapes()?;
        let mut count = |m: u64| {
            if let Some(v) = macs.as_deref_mut() {
                v.push(m);
            }
        };
        // Keep only activations that a later residual add refers to.
        let mut keep = vec![false; self.trunk.len() + 1];
        for layer in &self.trunk {
            if let Some(s) = layer.skip {
                keep[s] = true;
            }
        }
        let mut saved: Vec<Option<LfTensor>> = vec![None; self.trunk.len() + 1];
        let mut current = input.clone();
        if keep[0] {
            saved[0] = Some(current.clone());
        }
        for (i, layer) in self.trunk.iter().enumerate() {
            let mut m = 0;
            let skip = layer.skip.and_then(|s| saved[s].as_ref());
            current = apply_counted(layer, &current, skip, &mut m)?;
            count(m);
            if keep[i + 1] {
                saved[i + 1] = Some(current.clone());
            }
        }
        if !self.has_heads() {
            return Ok(vec![current]);
        }
        let mut outputs = Vec::with_capacity(3);
        for section in [Section::Primary, Section::Spatial, Section::Angular] {
            let mut h = current.clone();
            for layer in self.section(section) {
                let mut m = 0;
                h = apply_counted(layer, &h, None, &mut m)?;
                count(m);
            }
            outputs.push(h);
        }
        Ok(outputs)
    }

    /// Normalizes the light field and runs all three heads. Auxiliary outputs are
    /// mapped back to feature units when label statistics are attached.
    pub fn predict(&self, lfi: &LfTensor) -> Result<Prediction> {
        if self
            .output_shapes()?
            .iter()
            .map(LfShape::len)
            .ne(HEAD_OUTPUTS)
        {
            return Err(LfError::ShapeMismatch(
                "model does not have the three task heads".into(),
            ));
        }
        let outputs = self.forward(&lfi.normalize(), None)?;
        let mut spatial = outputs[1].flatten();
        let mut angular = outputs[2].flatten();
        if let Some((s, a)) = &self.label_stats {
            spatial = s.denormalize(&spatial);
            angular = a.denormalize(&angular);
        }
        Ok(Prediction {
            score: outputs[0].data()[0],
            spatial,
            angular,
        })
    }

    /// Rounds every parameter to the nearest `f32`, the checkpoint precision.
    pub fn round_to_f32(&mut self) {
        for layer in self.layers_mut() {
            layer.weights.iter_mut().for_each(|w| *w = *w as f32 as f64);
            if let Some(b) = layer.bias.as_mut() {
                b.iter_mut().for_each(|w| *w = *w as f32 as f64);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residual_source_must_match() {
        let s = LfShape::new(1, 1, 4, 4, 2).unwrap();
        let model = ModelSpec::trunk_only(
            s,
            vec![
                LayerSpec::pointwise(2, 3, vec![0.0; 6], None),
                LayerSpec::residual_add(0),
            ],
        );
        assert!(matches!(
            model.trunk_shapes(),
            Err(LfError::ShapeChainBroken { layer: 1, .. })
        ));
        let model = ModelSpec::trunk_only(s, vec![LayerSpec::residual_add(2)]);
        assert!(model.trunk_shapes().is_err());
    }

    #[test]
    fn forward_rejects_wrong_input() {
        let s = LfShape::new(1, 1, 4, 4, 2).unwrap();
        let model = ModelSpec::trunk_only(s, vec![LayerSpec::relu()]);
        let bad = LfTensor::zeros(LfShape::new(1, 1, 4, 4, 3).unwrap());
        assert!(matches!(
            model.forward(&bad, None),
            Err(LfError::ShapeMismatch(_))
        ));
    }
}
