//! Reverse-mode differentiation over a recorded forward pass.
//!
//! [`forward_record`] executes a [`ModelSpec`] and keeps every activation plus
//! whatever the backward rules need (max-pool argmax indices, dropout masks).
//! [`backward`] walks the tape once in reverse and returns gradients for every
//! parameter and for the network input.

use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{LfError, Result};
use crate::model::{ModelSpec, Section};
use crate::ops::{
    apply_counted, conv_backward, dense_backward, depthwise_backward, gap_backward,
    max_pool_backward, max_pool_with_argmax, pointwise_backward, LayerKind, LayerSpec,
};
use crate::tensor::{LfShape, LfTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamSlot {
    Weights,
    Bias,
}

/// Identifies one parameter array: a layer in global order plus the slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId {
    pub layer: usize,
    pub slot: ParamSlot,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub params: BTreeMap<ParamId, Vec<f64>>,
    pub input: LfTensor,
}

impl Gradients {
    /// Zero gradients shaped like the parameters of `model`.
    pub fn zeros_like(model: &ModelSpec) -> Self {
        let mut params = BTreeMap::new();
        for (i, layer) in model.layers().enumerate() {
            if !layer.kind.has_params() {
                continue;
            }
            params.insert(
                ParamId {
                    layer: i,
                    slot: ParamSlot::Weights,
                },
                vec![0.0; layer.weights.len()],
            );
            if let Some(b) = &layer.bias {
                params.insert(
                    ParamId {
                        layer: i,
                        slot: ParamSlot::Bias,
                    },
                    vec![0.0; b.len()],
                );
            }
        }
        Gradients {
            params,
            input: LfTensor::zeros(model.input_shape),
        }
    }

    /// `self += other`, parameters only.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (id, g) in &other.params {
            if let Some(acc) = self.params.get_mut(id) {
                acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.params
            .values()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Clone, Debug)]
enum Saved {
    Nothing,
    Argmax(Vec<usize>),
    Mask(Vec<f64>),
}

#[derive(Clone, Debug)]
struct Node {
    /// Global layer index; `None` for the input leaf.
    layer: Option<usize>,
    parents: Vec<usize>,
    value: LfTensor,
    saved: Saved,
}

/// Record of one forward pass.
#[derive(Clone, Debug)]
pub struct Tape<'m> {
    model: &'m ModelSpec,
    layers: Vec<&'m LayerSpec>,
    nodes: Vec<Node>,
    outputs: Vec<usize>,
}

impl Tape<'_> {
    /// Number of recorded operations (the input leaf is not counted).
    pub fn len(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn output_shapes(&self) -> Vec<LfShape> {
        self.outputs
            .iter()
            .map(|&i| self.nodes[i].value.shape())
            .collect()
    }
}

/// Inference-mode forward pass with recording (dropout disabled).
pub fn forward_record<'m>(
    model: &'m ModelSpec,
    input: &LfTensor,
) -> Result<(Vec<LfTensor>, Tape<'m>)> {
    record(model, input, None)
}

/// Training-mode forward pass: dropout layers draw masks from `rng`.
pub fn forward_record_train<'m>(
    model: &'m ModelSpec,
    input: &LfTensor,
    rng: &mut dyn RngCore,
) -> Result<(Vec<LfTensor>, Tape<'m>)> {
    record(model, input, Some(rng))
}

fn record<'m>(
    model: &'m ModelSpec,
    input: &LfTensor,
    mut rng: Option<&mut dyn RngCore>,
) -> Result<(Vec<LfTensor>, Tape<'m>)> {
    if input.shape() != model.input_shape {
        return Err(LfError::ShapeMismatch(format!(
            "model expects {}, got {}",
            model.input_shape,
            input.shape()
        )));
    }
    model.output_shapes()?;
    let layers: Vec<&LayerSpec> = model.layers().collect();
    let mut nodes = vec![Node {
        layer: None,
        parents: Vec::new(),
        value: input.clone(),
        saved: Saved::Nothing,
    }];

    let mut run =
        |nodes: &mut Vec<Node>, id: usize, parent: usize, skip: Option<usize>| -> Result<usize> {
            let layer = layers[id];
            let x = &nodes[parent].value;
            let (value, saved) = match layer.kind {
                LayerKind::MaxPoolSpatial => {
                    let (v, arg) = max_pool_with_argmax(x, layer.stride)?;
                    (v, Saved::Argmax(arg))
                }
                LayerKind::Dropout => match rng.as_deref_mut() {
                    Some(r) if model.dropout > 0.0 => {
                        let keep = 1.0 - model.dropout;
                        let mask: Vec<f64> = (0..x.shape().len())
                            .map(|_| {
                                if r.random::<f64>() < keep {
                                    1.0 / keep
                                } else {
                                    0.0
                                }
                            })
                            .collect();
                        let mut v = x.clone();
                        v.data_mut()
                            .iter_mut()
                            .zip(&mask)
                            .for_each(|(a, m)| *a *= m);
                        (v, Saved::Mask(mask))
                    }
                    _ => (x.clone(), Saved::Nothing),
                },
                _ => {
                    let other = skip.map(|s| &nodes[s].value);
                    (apply_counted(layer, x, other, &mut 0)?, Saved::Nothing)
                }
            };
            let mut parents = vec![parent];
            parents.extend(skip);
            nodes.push(Node {
                layer: Some(id),
                parents,
                value,
                saved,
            });
            Ok(nodes.len() - 1)
        };

    // Trunk activation j lives at node j.
    let mut last = 0;
    for (i, layer) in model.trunk.iter().enumerate() {
        last = run(&mut nodes, i, i, layer.skip)?;
    }
    let trunk_out = last;
    let mut outputs = Vec::new();
    if model.has_heads() {
        let offsets = model.section_offsets();
        for (section, base) in [Section::Primary, Section::Spatial, Section::Angular]
            .into_iter()
            .zip(&offsets[1..])
        {
            let mut cur = trunk_out;
            for j in 0..model.section(section).len() {
                cur = run(&mut nodes, base + j, cur, None)?;
            }
            outputs.push(cur);
        }
    } else {
        outputs.push(trunk_out);
    }
    let values = outputs.iter().map(|&i| nodes[i].value.clone()).collect();
    Ok((
        values,
        Tape {
            model,
            layers,
            nodes,
            outputs,
        },
    ))
}

fn add_into(slot: &mut Option<Vec<f64>>, g: &[f64]) {
    match slot {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        None => *slot = Some(g.to_vec()),
    }
}

/// Back-propagates `seeds` (one gradient per model output, flattened) through
/// the tape.
pub fn backward(tape: &Tape<'_>, seeds: &[Vec<f64>]) -> Result<Gradients> {
    if seeds.len() != tape.outputs.len() {
        return Err(LfError::SeedShapeMismatch {
            output: seeds.len().min(tape.outputs.len()),
            expected: tape.outputs.len(),
            got: seeds.len(),
        });
    }
    let mut grads: Vec<Option<Vec<f64>>> = vec![None; tape.nodes.len()];
    for (k, (&node, seed)) in tape.outputs.iter().zip(seeds).enumerate() {
        let expected = tape.nodes[node].value.shape().len();
        if seed.len() != expected {
            return Err(LfError::SeedShapeMismatch {
                output: k,
                expected,
                got: seed.len(),
            });
        }
        add_into(&mut grads[node], seed);
    }

    let mut out = Gradients::zeros_like(tape.model);
    for idx in (1..tape.nodes.len()).rev() {
        let Some(g) = grads[idx].take() else {
            continue;
        };
        let node = &tape.nodes[idx];
        let id = node.layer.expect("non-leaf node");
        let layer = tape.layers[id];
        let parent = node.parents[0];
        let x = &tape.nodes[parent].value;
        let g_t = LfTensor::from_parts(node.value.shape(), g);
        let mut param = |slot: ParamSlot, grad: Vec<f64>| {
            let acc = out
                .params
                .get_mut(&ParamId { layer: id, slot })
                .expect("param slot");
            acc.iter_mut().zip(grad).for_each(|(a, b)| *a += b);
        };
        let gi: Vec<f64> = match layer.kind {
            LayerKind::Subview2D
            | LayerKind::AnglewiseH
            | LayerKind::AnglewiseV
            | LayerKind::Full4D => {
                let (gi, gw) = conv_backward(x, &layer.weights, layer.geometry(), &g_t);
                param(ParamSlot::Weights, gw);
                gi.into_data()
            }
            LayerKind::Depthwise => {
                let (gi, gw) =
                    depthwise_backward(x, &layer.weights, layer.kernel, layer.stride, &g_t);
                param(ParamSlot::Weights, gw);
                gi.into_data()
            }
            LayerKind::Pointwise => {
                let (gi, gw, gb) = pointwise_backward(x, &layer.weights, &g_t);
                param(ParamSlot::Weights, gw);
                if layer.bias.is_some() {
                    param(ParamSlot::Bias, gb);
                }
                gi.into_data()
            }
            LayerKind::Dense => {
                let (gi, gw, gb) = dense_backward(x.data(), &layer.weights, g_t.data());
                param(ParamSlot::Weights, gw);
                if layer.bias.is_some() {
                    param(ParamSlot::Bias, gb);
                }
                gi
            }
            LayerKind::MaxPoolSpatial => {
                let Saved::Argmax(arg) = &node.saved else {
                    unreachable!("max pool without argmax")
                };
                max_pool_backward(x.shape(), arg, &g_t).into_data()
            }
            LayerKind::ReLU => x
                .data()
                .iter()
                .zip(g_t.data())
                .map(|(&xv, &gv)| if xv > 0.0 { gv } else { 0.0 })
                .collect(),
            LayerKind::ResidualAdd => {
                add_into(&mut grads[node.parents[1]], g_t.data());
                g_t.into_data()
            }
            LayerKind::GlobalAvgPool => gap_backward(x.shape(), g_t.data()).into_data(),
            LayerKind::Dropout => match &node.saved {
                Saved::Mask(m) => g_t.data().iter().zip(m).map(|(a, b)| a * b).collect(),
                _ => g_t.into_data(),
            },
        };
        add_into(&mut grads[parent], &gi);
    }
    if let Some(g) = grads[0].take() {
        out.input = LfTensor::from_parts(tape.nodes[0].value.shape(), g);
    }
    Ok(out)
}

/// Compares analytic and central-difference gradients of a single layer.
///
/// The scalar loss is `sum(r * f(input))` with a fixed pseudo-random `r`.
/// Returns the maximum over every weight, bias and input entry of
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
///
/// `ResidualAdd` is checked as `input + pointwise(input)` and `Dropout` runs in
/// training mode (rate 0.5) with a fixed mask.
pub fn grad_check(op: &LayerSpec, input: &LfTensor, eps: f64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6ad_c0de);
    let c = input.shape().c;
    let trunk = match op.kind {
        LayerKind::ResidualAdd => {
            let w = (0..c * c).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
            vec![
                LayerSpec::pointwise(c, c, w, Some(b)),
                LayerSpec {
                    skip: Some(0),
                    ..op.clone()
                },
            ]
        }
        _ => vec![op.clone()],
    };
    let mut model = ModelSpec::trunk_only(input.shape(), trunk);
    model.dropout = 0.5;
    let out_len = model.output_shapes()?[0].len();
    let seed: Vec<f64> = (0..out_len).map(|_| rng.random_range(-1.0..1.0)).collect();

    let loss = |m: &ModelSpec, x: &LfTensor| -> Result<f64> {
        let mut mask_rng = ChaCha8Rng::seed_from_u64(99);
        let (outs, _) = forward_record_train(m, x, &mut mask_rng)?;
        Ok(outs[0].data().iter().zip(&seed).map(|(a, b)| a * b).sum())
    };
    let mut mask_rng = ChaCha8Rng::seed_from_u64(99);
    let (_, tape) = forward_record_train(&model, input, &mut mask_rng)?;
    let grads = backward(&tape, std::slice::from_ref(&seed))?;
    drop(tape);

    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
    let mut worst = 0.0f64;
    for (id, analytic) in &grads.params {
        for (j, &a) in analytic.iter().enumerate() {
            let mut probe = model.clone();
            let layer = &mut probe.trunk[id.layer];
            let slot = match id.slot {
                ParamSlot::Weights => &mut layer.weights,
                ParamSlot::Bias => layer.bias.as_mut().expect("bias"),
            };
            let base = slot[j];
            slot[j] = base + eps;
            let plus = loss(&probe, input)?;
            let layer = &mut probe.trunk[id.layer];
            let slot = match id.slot {
                ParamSlot::Weights => &mut layer.weights,
                ParamSlot::Bias => layer.bias.as_mut().expect("bias"),
            };
            slot[j] = base - eps;
            let minus = loss(&probe, input)?;
            worst = worst.max(rel(a, (plus - minus) / (2.0 * eps)));
        }
    }
    for (j, &a) in grads.input.data().iter().enumerate() {
        let mut probe = input.clone();
        let base = probe.data()[j];
        probe.data_mut()[j] = base + eps;
        let plus = loss(&model, &probe)?;
        probe.data_mut()[j] = base - eps;
        let minus = loss(&model, &probe)?;
        worst = worst.max(rel(a, (plus - minus) / (2.0 * eps)));
    }
    Ok(worst)
}

/// A small random layer of `kind` and a matching input for [`grad_check`].
///
/// Extents, strides and channel counts vary with `seed`. Inputs avoid the
/// ReLU kink and max-pool ties so central differences stay valid.
pub fn grad_check_case(kind: LayerKind, seed: u64) -> (LayerSpec, LfTensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let vec = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    };
    let ci = rng.random_range(1..=3);
    let co = rng.random_range(1..=3);
    let k = rng.random_range(2..=4);
    let a = rng.random_range(2..=3);
    let stride = rng.random_range(1..=2);
    let (u, v) = (rng.random_range(2..=3), rng.random_range(2..=3));
    let (x, y) = (rng.random_range(4..=6), rng.random_range(4..=6));
    let mut shape = LfShape::new(u, v, x, y, ci).unwrap();
    let layer = match kind {
        LayerKind::Subview2D => {
            LayerSpec::subview2d(k, ci, co, stride, vec(k * k * ci * co, &mut rng))
        }
        LayerKind::Depthwise => LayerSpec::depthwise(k, ci, stride, vec(k * k * ci, &mut rng)),
        LayerKind::Pointwise => {
            LayerSpec::pointwise(ci, co, vec(ci * co, &mut rng), Some(vec(co, &mut rng)))
        }
        LayerKind::AnglewiseH => {
            LayerSpec::anglewise_h(a, k, ci, co, vec(a * k * k * ci * co, &mut rng))
        }
        LayerKind::AnglewiseV => {
            LayerSpec::anglewise_v(a, k, ci, co, vec(a * k * k * ci * co, &mut rng))
        }
        LayerKind::Full4D => {
            LayerSpec::full4d(a, k, ci, co, vec(a * a * k * k * ci * co, &mut rng))
        }
        LayerKind::MaxPoolSpatial => LayerSpec::max_pool(2 * stride),
        LayerKind::ReLU => LayerSpec::relu(),
        LayerKind::ResidualAdd => LayerSpec::residual_add(0),
        LayerKind::GlobalAvgPool => LayerSpec::global_avg_pool(),
        LayerKind::Dense => {
            shape = LfShape::vector(rng.random_range(2..=12));
            LayerSpec::dense(
                shape.len(),
                co,
                vec(shape.len() * co, &mut rng),
                Some(vec(co, &mut rng)),
            )
        }
        LayerKind::Dropout => LayerSpec::dropout(),
    };
    let input = match kind {
        LayerKind::MaxPoolSpatial => {
            // Distinct values at least 0.01 apart, in random order.
            let mut values: Vec<f64> = (0..shape.len()).map(|i| i as f64 * 0.01 - 1.0).collect();
            for i in (1..values.len()).rev() {
                values.swap(i, rng.random_range(0..=i));
            }
            LfTensor::from_parts(shape, values)
        }
        _ => LfTensor::from_parts(
            shape,
            vec(shape.len(), &mut rng)
                .into_iter()
                .map(|v| {
                    if v.abs() < 0.05 {
                        v + 0.1 * v.signum()
                    } else {
                        v
                    }
                })
                .collect(),
        ),
    };
    (layer, input)
}
