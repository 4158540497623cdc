//! Forward kernels for every layer kind of the network.
//!
//! All convolutions are cross-correlations with "same" zero padding split as
//! `floor((k-1)/2)` before and `ceil((k-1)/2)` after, and produce
//! `ceil(n / stride)` outputs along each strided axis. Pooling is "valid".
//!
//! Each kernel comes in two flavours: a plain function returning the output
//! tensor, and a `*_counted` variant that also adds the number of
//! multiply-accumulates it performed to a counter. Every kernel tap is counted,
//! including taps that land on zero padding.
//!
//! Weight layouts (row-major, last index fastest):
//!
//! | kind                    | layout                      |
//! |-------------------------|-----------------------------|
//! | `Subview2D`             | `[k][k][ci][co]`            |
//! | `Depthwise`             | `[k][k][ci]`                |
//! | `Pointwise`             | `[ci][co]`                  |
//! | `AnglewiseH/V`          | `[a][k][k][ci][co]`         |
//! | `Full4D`                | `[a][a][k][k][ci][co]`      |
//! | `Dense`                 | `[in][out]`                 |

mod basic;
mod conv;
mod pool;

pub use basic::{dense, global_avg_pool, relu, residual_add};
pub(crate) use basic::{dense_backward, dense_counted, gap_backward};
pub use conv::{
    conv2d_subview, conv4d_full, conv_anglewise_h, conv_anglewise_v, conv_depthwise, conv_pointwise,
};
pub(crate) use conv::{
    conv4d_full_counted, conv_backward, conv_general_counted, depthwise_backward,
    depthwise_counted, pointwise_backward, pointwise_counted, ConvGeometry,
};
pub use pool::max_pool_spatial;
pub(crate) use pool::{max_pool_backward, max_pool_with_argmax};

use std::fmt;

use crate::error::{LfError, Result};
use crate::tensor::{LfShape, LfTensor};

/// Zero padding placed before index 0 for a kernel of extent `k`.
#[inline]
pub fn pad_before(k: usize) -> usize {
    (k - 1) / 2
}

/// Zero padding placed after the last index for a kernel of extent `k`.
#[inline]
pub fn pad_after(k: usize) -> usize {
    k / 2
}

/// Output extent of a "same" padded axis of length `n` with stride `s`.
#[inline]
pub fn same_extent(n: usize, s: usize) -> usize {
    n.div_ceil(s)
}

/// Output extent of a "valid" pooled axis.
#[inline]
pub fn valid_extent(n: usize, s: usize) -> usize {
    (n - s) / s + 1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Subview2D,
    Depthwise,
    Pointwise,
    AnglewiseH,
    AnglewiseV,
    Full4D,
    MaxPoolSpatial,
    ReLU,
    ResidualAdd,
    GlobalAvgPool,
    Dense,
    /// Inverted dropout; identity outside training.
    Dropout,
}

impl LayerKind {
    pub const ALL: [LayerKind; 12] = [
        LayerKind::Subview2D,
        LayerKind::Depthwise,
        LayerKind::Pointwise,
        LayerKind::AnglewiseH,
        LayerKind::AnglewiseV,
        LayerKind::Full4D,
        LayerKind::MaxPoolSpatial,
        LayerKind::ReLU,
        LayerKind::ResidualAdd,
        LayerKind::GlobalAvgPool,
        LayerKind::Dense,
        LayerKind::Dropout,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Subview2D => "subview2d",
            LayerKind::Depthwise => "depthwise",
            LayerKind::Pointwise => "pointwise",
            LayerKind::AnglewiseH => "anglewise_h",
            LayerKind::AnglewiseV => "anglewise_v",
            LayerKind::Full4D => "full4d",
            LayerKind::MaxPoolSpatial => "maxpool",
            LayerKind::ReLU => "relu",
            LayerKind::ResidualAdd => "residual_add",
            LayerKind::GlobalAvgPool => "global_avg_pool",
            LayerKind::Dense => "dense",
            LayerKind::Dropout => "dropout",
        }
    }

    pub fn from_name(name: &str) -> Option<LayerKind> {
        LayerKind::ALL.into_iter().find(|k| k.name() == name)
    }

    pub(crate) fn tag(self) -> u32 {
        LayerKind::ALL.iter().position(|&k| k == self).unwrap() as u32
    }

    pub(crate) fn from_tag(tag: u32) -> Option<LayerKind> {
        LayerKind::ALL.get(tag as usize).copied()
    }

    pub fn has_params(self) -> bool {
        matches!(
            self,
            LayerKind::Subview2D
                | LayerKind::Depthwise
                | LayerKind::Pointwise
                | LayerKind::AnglewiseH
                | LayerKind::AnglewiseV
                | LayerKind::Full4D
                | LayerKind::Dense
        )
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Declarative description of one layer together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    /// Angular kernel extent `a` (anglewise and 4-D convolutions), otherwise 1.
    pub angular: usize,
    /// Spatial kernel extent `k`.
    pub kernel: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    /// Spatial stride; pooling window for `MaxPoolSpatial`.
    pub stride: usize,
    pub weights: Vec<f64>,
    pub bias: Option<Vec<f64>>,
    /// For `ResidualAdd`: index of the activation added to the layer input
    /// (0 is the network input, `i + 1` is the output of layer `i`).
    pub skip: Option<usize>,
}

impl LayerSpec {
    fn bare(kind: LayerKind) -> Self {
        LayerSpec {
            kind,
            angular: 1,
            kernel: 1,
            in_ch: 0,
            out_ch: 0,
            stride: 1,
            weights: Vec::new(),
            bias: None,
            skip: None,
        }
    }

    pub fn subview2d(k: usize, ci: usize, co: usize, stride: usize, weights: Vec<f64>) -> Self {
        LayerSpec {
            kernel: k,
            in_ch: ci,
            out_ch: co,
            stride,
            weights,
            ..Self::bare(LayerKind::Subview2D)
        }
    }

    pub fn depthwise(k: usize, ci: usize, stride: usize, weights: Vec<f64>) -> Self {
        LayerSpec {
            kernel: k,
            in_ch: ci,
            out_ch: ci,
            stride,
            weights,
            ..Self::bare(LayerKind::Depthwise)
        }
    }

    pub fn pointwise(ci: usize, co: usize, weights: Vec<f64>, bias: Option<Vec<f64>>) -> Self {
        LayerSpec {
            in_ch: ci,
            out_ch: co,
            weights,
            bias,
            ..Self::bare(LayerKind::Pointwise)
        }
    }

    pub fn anglewise_h(a: usize, k: usize, ci: usize, co: usize, weights: Vec<f64>) -> Self {
        LayerSpec {
            angular: a,
            kernel: k,
            in_ch: ci,
            out_ch: co,
            weights,
            ..Self::bare(LayerKind::AnglewiseH)
        }
    }

    pub fn anglewise_v(a: usize, k: usize, ci: usize, co: usize, weights: Vec<f64>) -> Self {
        LayerSpec {
            kind: LayerKind::AnglewiseV,
            ..Self::anglewise_h(a, k, ci, co, weights)
        }
    }

    pub fn full4d(a: usize, k: usize, ci: usize, co: usize, weights: Vec<f64>) -> Self {
        LayerSpec {
            angular: a,
            kernel: k,
            in_ch: ci,
            out_ch: co,
            weights,
            ..Self::bare(LayerKind::Full4D)
        }
    }

    pub fn max_pool(stride: usize) -> Self {
        LayerSpec {
            stride,
            ..Self::bare(LayerKind::MaxPoolSpatial)
        }
    }

    pub fn relu() -> Self {
        Self::bare(LayerKind::ReLU)
    }

    pub fn residual_add(skip: usize) -> Self {
        LayerSpec {
            skip: Some(skip),
            ..Self::bare(LayerKind::ResidualAdd)
        }
    }

    pub fn global_avg_pool() -> Self {
        Self::bare(LayerKind::GlobalAvgPool)
    }

    pub fn dense(inputs: usize, outputs: usize, weights: Vec<f64>, bias: Option<Vec<f64>>) -> Self {
        LayerSpec {
            in_ch: inputs,
            out_ch: outputs,
            weights,
            bias,
            ..Self::bare(LayerKind::Dense)
        }
    }

    pub fn dropout() -> Self {
        Self::bare(LayerKind::Dropout)
    }

    /// Weight count implied by the kind and dimensions.
    pub fn expected_weights(&self) -> usize {
        let (a, k, ci, co) = (self.angular, self.kernel, self.in_ch, self.out_ch);
        match self.kind {
            LayerKind::Subview2D => k * k * ci * co,
            LayerKind::Depthwise => k * k * ci,
            LayerKind::Pointwise | LayerKind::Dense => ci * co,
            LayerKind::AnglewiseH | LayerKind::AnglewiseV => a * k * k * ci * co,
            LayerKind::Full4D => a * a * k * k * ci * co,
            _ => 0,
        }
    }

    /// Parameter count including biases.
    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.as_ref().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LfError::BadLayer(format!("{}: {msg}", self.kind)));
        if self.angular == 0 || self.kernel == 0 {
            return bad("kernel extents must be >= 1".into());
        }
        if !matches!(self.stride, 1 | 2 | 4) {
            return Err(LfError::BadStride(self.stride));
        }
        if self.kind == LayerKind::MaxPoolSpatial && self.stride == 1 {
            return Err(LfError::BadStride(1));
        }
        if self.kind.has_params() {
            if self.in_ch == 0 || self.out_ch == 0 {
                return bad("channel counts must be >= 1".into());
            }
            if self.weights.len() != self.expected_weights() {
                return bad(format!(
                    "{} weights, expected {}",
                    self.weights.len(),
                    self.expected_weights()
                ));
            }
            if let Some(i) = self.weights.iter().position(|w| !w.is_finite()) {
                return Err(LfError::NonFiniteValue(i));
            }
        }
        if matches!(
            self.kind,
            LayerKind::AnglewiseH
                | LayerKind::AnglewiseV
                | LayerKind::Full4D
                | LayerKind::Pointwise
        ) && self.stride != 1
        {
            return Err(LfError::BadStride(self.stride));
        }
        match (&self.bias, self.kind) {
            (Some(b), LayerKind::Pointwise | LayerKind::Dense) if b.len() != self.out_ch => {
                bad(format!("bias length {} != {}", b.len(), self.out_ch))
            }
            (Some(_), LayerKind::Pointwise | LayerKind::Dense) | (None, _) => Ok(()),
            (Some(_), _) => bad("bias only supported on pointwise and dense layers".into()),
        }?;
        if self.kind == LayerKind::ResidualAdd && self.skip.is_none() {
            return bad("residual add needs a skip source".into());
        }
        Ok(())
    }

    fn check_channels(&self, input: LfShape) -> Result<()> {
        if input.c != self.in_ch {
            return Err(LfError::ChannelMismatch {
                expected: self.in_ch,
                got: input.c,
            });
        }
        Ok(())
    }

    /// Shape produced by this layer for a given input shape.
    pub fn output_shape(&self, input: LfShape) -> Result<LfShape> {
        let s = self.stride;
        match self.kind {
            LayerKind::Subview2D | LayerKind::Depthwise => {
                self.check_channels(input)?;
                Ok(LfShape {
                    x: same_extent(input.x, s),
                    y: same_extent(input.y, s),
                    c: self.out_ch,
                    ..input
                })
            }
            LayerKind::Pointwise
            | LayerKind::AnglewiseH
            | LayerKind::AnglewiseV
            | LayerKind::Full4D => {
                self.check_channels(input)?;
                Ok(LfShape {
                    c: self.out_ch,
                    ..input
                })
            }
            LayerKind::MaxPoolSpatial => {
                for extent in [input.x, input.y] {
                    if extent < s {
                        return Err(LfError::SpatialTooSmall { extent, stride: s });
                    }
                }
                Ok(LfShape {
                    x: valid_extent(input.x, s),
                    y: valid_extent(input.y, s),
                    ..input
                })
            }
            LayerKind::ReLU | LayerKind::ResidualAdd | LayerKind::Dropout => Ok(input),
            LayerKind::GlobalAvgPool => Ok(LfShape::vector(input.c)),
            LayerKind::Dense => {
                if input.len() != self.in_ch {
                    return Err(LfError::ShapeMismatch(format!(
                        "dense expects {} inputs, got {}",
                        self.in_ch,
                        input.len()
                    )));
                }
                Ok(LfShape::vector(self.out_ch))
            }
        }
    }

    pub(crate) fn geometry(&self) -> ConvGeometry {
        let (au, av) = match self.kind {
            LayerKind::AnglewiseH => (1, self.angular),
            LayerKind::AnglewiseV => (self.angular, 1),
            LayerKind::Full4D => (self.angular, self.angular),
            _ => (1, 1),
        };
        ConvGeometry {
            au,
            av,
            k: self.kernel,
            stride: self.stride,
            ci: self.in_ch,
            co: self.out_ch,
        }
    }
}

/// Runs a single layer. `skip` supplies the second operand of `ResidualAdd`.
/// Dropout is treated as identity.
pub fn apply_counted(
    layer: &LayerSpec,
    input: &LfTensor,
    skip: Option<&LfTensor>,
    macs: &mut u64,
) -> Result<LfTensor> {
    layer.validate()?;
    match layer.kind {
        LayerKind::Subview2D | LayerKind::AnglewiseH | LayerKind::AnglewiseV => {
            layer.check_channels(input.shape())?;
            Ok(conv_general_counted(
                input,
                &layer.weights,
                layer.geometry(),
                macs,
            ))
        }
        LayerKind::Full4D => {
            layer.check_channels(input.shape())?;
            Ok(conv4d_full_counted(
                input,
                &layer.weights,
                layer.geometry(),
                macs,
            ))
        }
        LayerKind::Depthwise => {
            layer.check_channels(input.shape())?;
            Ok(depthwise_counted(
                input,
                &layer.weights,
                layer.kernel,
                layer.stride,
                macs,
            ))
        }
        LayerKind::Pointwise => {
            layer.check_channels(input.shape())?;
            Ok(pointwise_counted(
                input,
                &layer.weights,
                layer.bias.as_deref(),
                layer.out_ch,
                macs,
            ))
        }
        LayerKind::MaxPoolSpatial => max_pool_spatial(input, layer.stride),
        LayerKind::ReLU => Ok(relu(input)),
        LayerKind::ResidualAdd => {
            let other =
                skip.ok_or_else(|| LfError::BadLayer("residual add without operand".into()))?;
            residual_add(input, other)
        }
        LayerKind::GlobalAvgPool => Ok(global_avg_pool(input)),
        LayerKind::Dense => {
            layer.output_shape(input.shape())?;
            Ok(dense_counted(
                input.data(),
                &layer.weights,
                layer.bias.as_deref(),
                layer.out_ch,
                macs,
            ))
        }
        LayerKind::Dropout => Ok(input.clone()),
    }
}

pub fn apply(layer: &LayerSpec, input: &LfTensor, skip: Option<&LfTensor>) -> Result<LfTensor> {
    apply_counted(layer, input, skip, &mut 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padding_rule() {
        assert_eq!((pad_before(4), pad_after(4)), (1, 2));
        assert_eq!((pad_before(3), pad_after(3)), (1, 1));
        assert_eq!((pad_before(1), pad_after(1)), (0, 0));
        // Table I spatial progression under stride 2 and stride-4/2 pooling.
        assert_eq!(same_extent(434, 2), 217);
        assert_eq!(same_extent(54, 2), 27);
        assert_eq!(same_extent(27, 2), 14);
        assert_eq!(same_extent(14, 2), 7);
        assert_eq!(valid_extent(217, 4), 54);
        assert_eq!(valid_extent(7, 2), 3);
    }

    #[test]
    fn validate_weight_lengths() {
        assert!(LayerSpec::depthwise(4, 3, 1, vec![0.0; 48])
            .validate()
            .is_ok());
        assert!(LayerSpec::depthwise(4, 3, 1, vec![0.0; 47])
            .validate()
            .is_err());
        assert!(LayerSpec::full4d(3, 3, 2, 2, vec![0.0; 324])
            .validate()
            .is_ok());
        assert!(matches!(
            LayerSpec::subview2d(3, 1, 1, 3, vec![0.0; 9]).validate(),
            Err(LfError::BadStride(3))
        ));
        assert!(LayerSpec::max_pool(1).validate().is_err());
    }

    #[test]
    fn kind_tags_round_trip() {
        for k in LayerKind::ALL {
            assert_eq!(LayerKind::from_tag(k.tag()), Some(k));
            assert_eq!(LayerKind::from_name(k.name()), Some(k));
        }
    }
}
