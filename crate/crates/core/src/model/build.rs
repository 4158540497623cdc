//! Builders for the quality network and the ablation backbones.
//!
//! Full scale follows the published layer table row by row. The tiny scale
//! keeps the same blocks and channel plan on a 3x3x32x32x3 light field; at
//! that size the trunk is already 1x1 spatially before the last pooling
//! stage, so that pooling layer is left out.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BlockInfo, ModelSpec, Scale, DEFAULT_LAMBDA, HEAD_OUTPUTS};
use crate::error::{LfError, Result};
use crate::ops::{LayerKind, LayerSpec};
use crate::tensor::LfShape;

pub const FULL_INPUT: LfShape = LfShape {
    u: 7,
    v: 7,
    x: 434,
    y: 434,
    c: 3,
};

pub const TINY_INPUT: LfShape = LfShape {
    u: 3,
    v: 3,
    x: 32,
    y: 32,
    c: 3,
};

const HEAD_HIDDEN: usize = 256;
const DEFAULT_DROPOUT: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    Stem,
    /// Anglewise separable block without shortcut.
    LfAsc,
    /// Anglewise separable block with a residual shortcut.
    LfAscResidual,
    MaxPool,
    /// Pointwise, depthwise, pointwise with residual shortcut.
    LfDscS1,
    /// Pointwise, stride-2 depthwise, pointwise (channel growth).
    LfDscS2,
    Pointwise,
    Full4D,
}

impl BlockKind {
    pub const ALL: [BlockKind; 8] = [
        BlockKind::Stem,
        BlockKind::LfAsc,
        BlockKind::LfAscResidual,
        BlockKind::MaxPool,
        BlockKind::LfDscS1,
        BlockKind::LfDscS2,
        BlockKind::Pointwise,
        BlockKind::Full4D,
    ];

    pub(crate) fn tag(self) -> u32 {
        Self::ALL.iter().position(|&k| k == self).unwrap() as u32
    }

    pub(crate) fn from_tag(tag: u32) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationKind {
    Conv4D,
    LfDsc,
    LfAsc,
    LfDscAsc,
}

impl AblationKind {
    pub const ALL: [AblationKind; 4] = [
        AblationKind::Conv4D,
        AblationKind::LfDsc,
        AblationKind::LfAsc,
        AblationKind::LfDscAsc,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AblationKind::Conv4D => "10-4D-Conv",
            AblationKind::LfDsc => "10-LF-DSC",
            AblationKind::LfAsc => "10-LF-ASC",
            AblationKind::LfDscAsc => "10-LF-DSC-ASC",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.label() == label)
    }
}

/// He-style uniform initialization: `U(-sqrt(6/fan_in), sqrt(6/fan_in))`.
fn he_uniform(rng: &mut ChaCha8Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let limit = (6.0 / fan_in as f64).sqrt();
    (0..n).map(|_| rng.random_range(-limit..limit)).collect()
}

struct TrunkBuilder {
    layers: Vec<LayerSpec>,
    blocks: Vec<BlockInfo>,
    rng: ChaCha8Rng,
}

impl TrunkBuilder {
    fn new(seed: u64) -> Self {
        TrunkBuilder {
            layers: Vec::new(),
            blocks: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn begin(&mut self, label: impl Into<String>, kind: BlockKind) {
        self.blocks.push(BlockInfo {
            label: label.into(),
            kind,
            first_layer: self.layers.len(),
        });
    }

    /// Index of the activation produced by the most recent layer.
    fn current(&self) -> usize {
        self.layers.len()
    }

    fn push(&mut self, layer: LayerSpec) {
        self.layers.push(layer);
    }

    fn subview2d(&mut self, k: usize, ci: usize, co: usize, stride: usize) {
        let w = he_uniform(&mut self.rng, k * k * ci * co, k * k * ci);
        self.push(LayerSpec::subview2d(k, ci, co, stride, w));
    }

    fn depthwise(&mut self, k: usize, c: usize, stride: usize) {
        let w = he_uniform(&mut self.rng, k * k * c, k * k);
        self.push(LayerSpec::depthwise(k, c, stride, w));
    }

    fn pointwise(&mut self, ci: usize, co: usize) {
        let w = he_uniform(&mut self.rng, ci * co, ci);
        self.push(LayerSpec::pointwise(ci, co, w, Some(vec![0.0; co])));
    }

    fn anglewise(&mut self, kind: LayerKind, a: usize, k: usize, ci: usize, co: usize) {
        let w = he_uniform(&mut self.rng, a * k * k * ci * co, a * k * k * ci);
        let layer = match kind {
            LayerKind::AnglewiseH => LayerSpec::anglewise_h(a, k, ci, co, w),
            _ => LayerSpec::anglewise_v(a, k, ci, co, w),
        };
        self.push(layer);
    }

    fn full4d(&mut self, a: usize, k: usize, ci: usize, co: usize) {
        let w = he_uniform(&mut self.rng, a * a * k * k * ci * co, a * a * k * k * ci);
        self.push(LayerSpec::full4d(a, k, ci, co, w));
    }

    /// Horizontal anglewise convolution, ReLU, vertical anglewise convolution
    /// and the optional shortcut add. The block output stays linear so that
    /// narrow layers downstream never see an all-nonnegative input.
    fn asc_block(&mut self, label: &str, a: usize, k: usize, c: usize, residual: bool) {
        let kind = if residual {
            BlockKind::LfAscResidual
        } else {
            BlockKind::LfAsc
        };
        self.begin(label, kind);
        let source = self.current();
        self.anglewise(LayerKind::AnglewiseH, a, k, c, c);
        self.push(LayerSpec::relu());
        self.anglewise(LayerKind::AnglewiseV, a, k, c, c);
        if residual {
            self.push(LayerSpec::residual_add(source));
        }
    }

    /// Pointwise, depthwise, pointwise with ReLU after the first two; stride-1
    /// blocks add a shortcut. Linear output as for the anglewise block.
    fn dsc_block(&mut self, label: &str, k: usize, ci: usize, co: usize, stride: usize) {
        let kind = if stride == 1 {
            BlockKind::LfDscS1
        } else {
            BlockKind::LfDscS2
        };
        self.begin(label, kind);
        let source = self.current();
        self.pointwise(ci, ci);
        self.push(LayerSpec::relu());
        self.depthwise(k, ci, stride);
        self.push(LayerSpec::relu());
        self.pointwise(ci, co);
        if stride == 1 && ci == co {
            self.push(LayerSpec::residual_add(source));
        }
    }

    fn max_pool(&mut self, stride: usize) {
        self.begin(format!("Max Pooling / s{stride}"), BlockKind::MaxPool);
        self.push(LayerSpec::max_pool(stride));
    }

    fn dense(&mut self, inputs: usize, outputs: usize) -> LayerSpec {
        let w = he_uniform(&mut self.rng, inputs * outputs, inputs);
        LayerSpec::dense(inputs, outputs, w, Some(vec![0.0; outputs]))
    }

    /// Primary head on the flattened trunk output plus two auxiliary heads
    /// (global average pool, two hidden layers, linear output).
    fn finish(mut self, input_shape: LfShape, scale: Scale) -> Result<ModelSpec> {
        let mut model = ModelSpec::trunk_only(input_shape, std::mem::take(&mut self.layers));
        let trunk_out = *model.trunk_shapes()?.last().unwrap();
        model.primary = vec![output_layer(trunk_out.len(), HEAD_OUTPUTS[0])];
        let mut aux = |outputs: usize| {
            vec![
                LayerSpec::global_avg_pool(),
                self.dense(trunk_out.c, HEAD_HIDDEN),
                LayerSpec::relu(),
                LayerSpec::dropout(),
                self.dense(HEAD_HIDDEN, HEAD_HIDDEN),
                LayerSpec::relu(),
                output_layer(HEAD_HIDDEN, outputs),
            ]
        };
        model.spatial = aux(HEAD_OUTPUTS[1]);
        model.angular = aux(HEAD_OUTPUTS[2]);
        model.blocks = std::mem::take(&mut self.blocks);
        model.scale = scale;
        model.lambda = DEFAULT_LAMBDA;
        model.dropout = DEFAULT_DROPOUT;
        model.output_shapes()?;
        Ok(model)
    }
}

/// Head output layers start at zero so the initial prediction is the bias
/// rather than a random projection of scene content.
fn output_layer(inputs: usize, outputs: usize) -> LayerSpec {
    LayerSpec::dense(
        inputs,
        outputs,
        vec![0.0; inputs * outputs],
        Some(vec![0.0; outputs]),
    )
}

struct Topology {
    angular: usize,
    kernel: usize,
    /// `(in, out, stride)` of the six separable blocks.
    dsc: [(usize, usize, usize); 6],
    pointwise_out: usize,
    final_pool: bool,
}

/// Builds the quality network with seeded He-uniform weights.
pub fn build_alas_dads(input_shape: LfShape, scale: Scale, seed: u64) -> Result<ModelSpec> {
    if input_shape.c != 3 {
        return Err(LfError::BadInputShape(format!(
            "expected 3 colour channels, got {}",
            input_shape.c
        )));
    }
    let topo = match scale {
        Scale::Full => {
            if input_shape != FULL_INPUT {
                return Err(LfError::BadInputShape(format!(
                    "full scale requires {FULL_INPUT}, got {input_shape}"
                )));
            }
            Topology {
                angular: 7,
                kernel: 4,
                dsc: [
                    (3, 3, 1),
                    (3, 12, 2),
                    (12, 12, 1),
                    (12, 48, 2),
                    (48, 48, 1),
                    (48, 192, 2),
                ],
                pointwise_out: 1024,
                final_pool: true,
            }
        }
        Scale::Tiny => Topology {
            angular: 3,
            kernel: 4,
            dsc: [
                (3, 3, 1),
                (3, 12, 2),
                (12, 12, 1),
                (12, 48, 2),
                (48, 48, 1),
                (48, 192, 2),
            ],
            pointwise_out: 1024,
            final_pool: false,
        },
        Scale::Custom => {
            return Err(LfError::BadInputShape(
                "custom scale has no fixed topology".into(),
            ))
        }
    };

    let mut b = TrunkBuilder::new(seed);
    b.begin("2D Conv / s2", BlockKind::Stem);
    b.subview2d(3, 3, 3, 2);
    b.push(LayerSpec::relu());
    b.asc_block("AW Conv / s1", topo.angular, topo.kernel, 3, false);
    b.asc_block("AW ConvBloc / s1", topo.angular, topo.kernel, 3, true);
    b.asc_block("AW ConvBloc / s1", topo.angular, topo.kernel, 3, true);
    b.max_pool(4);
    for (ci, co, s) in topo.dsc {
        b.dsc_block(&format!("DW ConvBloc / s{s}"), topo.kernel, ci, co, s);
    }
    b.begin("Pointwise Conv / s1", BlockKind::Pointwise);
    b.pointwise(topo.dsc[5].1, topo.pointwise_out);
    b.push(LayerSpec::relu());
    if topo.final_pool {
        b.max_pool(2);
    }
    b.finish(input_shape, scale).map_err(|e| match e {
        LfError::ShapeChainBroken { layer, reason } => LfError::BadInputShape(format!(
            "{input_shape} breaks the shape chain at layer {layer}: {reason}"
        )),
        other => other,
    })
}

/// Ten stacked blocks of one backbone kind between a shared stride-2 stem and
/// the shared heads.
pub fn build_ablation(
    kind: AblationKind,
    input_shape: LfShape,
    channels: usize,
    k: usize,
    a: usize,
    seed: u64,
) -> Result<ModelSpec> {
    if channels == 0 || k == 0 || a == 0 {
        return Err(LfError::BadConfig("channels, k and a must be >= 1".into()));
    }
    let mut b = TrunkBuilder::new(seed);
    b.begin("stem / s2", BlockKind::Stem);
    b.subview2d(3, input_shape.c, channels, 2);
    b.push(LayerSpec::relu());
    for i in 0..10 {
        match kind {
            AblationKind::Conv4D => {
                b.begin(format!("4D Conv {i}"), BlockKind::Full4D);
                b.full4d(a, k, channels, channels);
                b.push(LayerSpec::relu());
            }
            AblationKind::LfDsc => b.dsc_block(&format!("LF-DSC {i}"), k, channels, channels, 1),
            AblationKind::LfAsc => b.asc_block(&format!("LF-ASC {i}"), a, k, channels, true),
            AblationKind::LfDscAsc => {
                b.dsc_block(&format!("LF-DSC {i}"), k, channels, channels, 1);
                b.asc_block(&format!("LF-ASC {i}"), a, k, channels, true);
            }
        }
    }
    b.finish(input_shape, Scale::Custom)
}
