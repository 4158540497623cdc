//! Closed-form multiply-accumulate counts for the convolution factorizations,
//! parameter counting, and an instrumented counter that executes a model.
//!
//! Extents `x, y` are the number of output positions along each spatial axis,
//! which equals the input extent for stride 1. Every kernel tap is counted,
//! including taps on zero padding; bias additions are not counted.

use std::fmt::Write as _;

use crate::error::{LfError, Result};
use crate::model::{BlockKind, ModelSpec};
use crate::ops::{LayerKind, LayerSpec};
use crate::tensor::{LfShape, LfTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CostDims {
    pub u: u64,
    pub v: u64,
    pub x: u64,
    pub y: u64,
    pub ci: u64,
    pub cj: u64,
    pub k: u64,
    pub a: Option<u64>,
}

impl CostDims {
    #[allow(clippy::too_many_arguments)]
    pub fn new(u: u64, v: u64, x: u64, y: u64, ci: u64, cj: u64, k: u64, a: Option<u64>) -> Self {
        CostDims {
            u,
            v,
            x,
            y,
            ci,
            cj,
            k,
            a,
        }
    }

    fn positions(&self) -> u64 {
        self.u * self.v * self.x * self.y
    }

    fn angular(&self, what: &'static str) -> Result<u64> {
        self.a.ok_or(LfError::MissingAngularExtent(what))
    }
}

/// Layer kinds and factorizations with a closed-form cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostKind {
    /// Subview-wise 2-D convolution.
    Subview2D,
    /// Depthwise then pointwise.
    LfDsc,
    /// Full 4-D convolution.
    Full4D,
    /// Horizontal then vertical anglewise convolution.
    LfAsc,
    /// LF-DSC followed by LF-ASC.
    DscAsc,
    Depthwise,
    Pointwise,
    Anglewise,
}

pub fn mac_cost(kind: CostKind, d: &CostDims) -> Result<u64> {
    let n = d.positions() * d.ci;
    let k2 = d.k * d.k;
    Ok(match kind {
        CostKind::Subview2D => n * d.cj * k2,
        CostKind::LfDsc => n * (d.cj + k2),
        CostKind::Full4D => {
            let a = d.angular("Full4D")?;
            n * d.cj * k2 * a * a
        }
        CostKind::LfAsc => n * d.cj * k2 * 2 * d.angular("LF-ASC")?,
        CostKind::DscAsc => n * (d.cj + k2 + 2 * d.cj * d.angular("LF-DSC + LF-ASC")? * k2),
        CostKind::Depthwise => n * k2,
        CostKind::Pointwise => n * d.cj,
        CostKind::Anglewise => n * d.cj * k2 * d.angular("anglewise")?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SavingsKind {
    /// LF-DSC instead of a subview 2-D convolution.
    DscVs2d,
    /// LF-DSC + LF-ASC instead of a 4-D convolution.
    ComboVs4d,
}

/// Closed-form MAC savings. Negative when the factorization costs more.
pub fn mac_savings(kind: SavingsKind, d: &CostDims) -> Result<i128> {
    let n = (d.positions() * d.ci) as i128;
    let (cj, k2) = (d.cj as i128, (d.k * d.k) as i128);
    Ok(match kind {
        SavingsKind::DscVs2d => n * ((cj - 1) * (k2 - 1) - 1),
        SavingsKind::ComboVs4d => {
            let a = d.angular("combo-vs-4d")? as i128;
            n * (cj * a * a * k2 - 2 * cj * a * k2 - k2 - cj)
        }
    })
}

/// Analytic MAC count of one layer applied to `input`.
pub fn layer_mac_cost(layer: &LayerSpec, input: LfShape) -> Result<u64> {
    let out = layer.output_shape(input)?;
    let d = CostDims::new(
        out.u as u64,
        out.v as u64,
        out.x as u64,
        out.y as u64,
        layer.in_ch as u64,
        layer.out_ch as u64,
        layer.kernel as u64,
        Some(layer.angular as u64),
    );
    match layer.kind {
        LayerKind::Subview2D => mac_cost(CostKind::Subview2D, &d),
        LayerKind::Depthwise => mac_cost(CostKind::Depthwise, &d),
        LayerKind::Pointwise => mac_cost(CostKind::Pointwise, &d),
        LayerKind::AnglewiseH | LayerKind::AnglewiseV => mac_cost(CostKind::Anglewise, &d),
        LayerKind::Full4D => mac_cost(CostKind::Full4D, &d),
        LayerKind::Dense => Ok((layer.in_ch * layer.out_ch) as u64),
        _ => Ok(0),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamCounts {
    pub per_layer: Vec<usize>,
    pub total: usize,
}

/// Weights plus biases per layer, in global layer order.
pub fn count_params(model: &ModelSpec) -> ParamCounts {
    let per_layer: Vec<usize> = model.layers().map(LayerSpec::param_count).collect();
    let total = per_layer.iter().sum();
    ParamCounts { per_layer, total }
}

/// Per-layer MACs counted by the executing kernels on a zero input of `input_shape`.
pub fn measure_layer_macs(model: &ModelSpec, input_shape: LfShape) -> Result<Vec<u64>> {
    if input_shape != model.input_shape {
        return Err(LfError::ShapeChainBroken {
            layer: 0,
            reason: format!("model input is {}, got {input_shape}", model.input_shape),
        });
    }
    let mut macs = Vec::with_capacity(model.layer_count());
    model.forward(&LfTensor::zeros(input_shape), Some(&mut macs))?;
    Ok(macs)
}

pub fn measure_macs(model: &ModelSpec, input_shape: LfShape) -> Result<u64> {
    if model.layer_count() == 0 {
        return Ok(0);
    }
    Ok(measure_layer_macs(model, input_shape)?.iter().sum())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostRow {
    pub layer_index: usize,
    pub kind: LayerKind,
    pub analytic_macs: u64,
    pub measured_macs: u64,
    pub params: usize,
}

/// Factored block against its unfactored baseline.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockSavings {
    pub label: String,
    pub baseline: &'static str,
    pub baseline_macs: u64,
    pub factored_macs: u64,
    pub savings: i128,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostReport {
    pub rows: Vec<CostRow>,
    pub total_analytic: u64,
    pub total_measured: u64,
    pub total_params: usize,
    pub savings: Vec<BlockSavings>,
}

impl CostReport {
    pub fn exact(&self) -> bool {
        self.rows.iter().all(|r| r.analytic_macs == r.measured_macs)
    }

    /// `layer_index,kind,analytic_macs,measured_macs,params`
    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer_index,kind,analytic_macs,measured_macs,params\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.layer_index, r.kind, r.analytic_macs, r.measured_macs, r.params
            );
        }
        s
    }

    /// `block,baseline,baseline_macs,factored_macs,savings`
    pub fn savings_csv(&self) -> String {
        let mut s = String::from("block,baseline,baseline_macs,factored_macs,savings\n");
        for b in &self.savings {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                b.label, b.baseline, b.baseline_macs, b.factored_macs, b.savings
            );
        }
        s
    }
}

/// Analytic vs. measured MACs and parameter counts for every layer, plus the
/// savings of each separable block over its unfactored counterpart.
pub fn cost_report(model: &ModelSpec) -> Result<CostReport> {
    let measured = measure_layer_macs(model, model.input_shape)?;
    let params = count_params(model);
    let trunk_shapes = model.trunk_shapes()?;
    let trunk_out = *trunk_shapes.last().unwrap();
    let mut inputs: Vec<LfShape> = trunk_shapes[..model.trunk.len()].to_vec();
    for section in [&model.primary, &model.spatial, &model.angular] {
        let mut shape = trunk_out;
        for layer in section.iter() {
            inputs.push(shape);
            shape = layer.output_shape(shape)?;
        }
    }
    let mut rows = Vec::with_capacity(measured.len());
    for (i, ((layer, &m), input)) in model.layers().zip(&measured).zip(&inputs).enumerate() {
        rows.push(CostRow {
            layer_index: i,
            kind: layer.kind,
            analytic_macs: layer_mac_cost(layer, *input)?,
            measured_macs: m,
            params: params.per_layer[i],
        });
    }
    let savings = block_savings(model, &trunk_shapes)?;
    Ok(CostReport {
        total_analytic: rows.iter().map(|r| r.analytic_macs).sum(),
        total_measured: rows.iter().map(|r| r.measured_macs).sum(),
        total_params: params.total,
        rows,
        savings,
    })
}

fn block_savings(model: &ModelSpec, shapes: &[LfShape]) -> Result<Vec<BlockSavings>> {
    let mut out = Vec::new();
    for block in &model.blocks {
        let layers = &model.trunk[block.first_layer..];
        let dims_at = |layer: &LayerSpec, input: LfShape, cj: usize| -> Result<CostDims> {
            let o = layer.output_shape(input)?;
            Ok(CostDims::new(
                o.u as u64,
                o.v as u64,
                o.x as u64,
                o.y as u64,
                layer.in_ch as u64,
                cj as u64,
                layer.kernel as u64,
                Some(layer.angular as u64),
            ))
        };
        match block.kind {
            BlockKind::LfDscS1 | BlockKind::LfDscS2 => {
                // pointwise, relu, depthwise, relu, pointwise
                let (dw, pw) = (&layers[2], &layers[4]);
                let d = dims_at(dw, shapes[block.first_layer + 2], pw.out_ch)?;
                out.push(BlockSavings {
                    label: block.label.clone(),
                    baseline: "subview2d",
                    baseline_macs: mac_cost(CostKind::Subview2D, &d)?,
                    factored_macs: mac_cost(CostKind::LfDsc, &d)?,
                    savings: mac_savings(SavingsKind::DscVs2d, &d)?,
                });
            }
            BlockKind::LfAsc | BlockKind::LfAscResidual => {
                let h = &layers[0];
                let d = dims_at(h, shapes[block.first_layer], h.out_ch)?;
                let full = mac_cost(CostKind::Full4D, &d)?;
                let asc = mac_cost(CostKind::LfAsc, &d)?;
                out.push(BlockSavings {
                    label: block.label.clone(),
                    baseline: "full4d",
                    baseline_macs: full,
                    factored_macs: asc,
                    savings: full as i128 - asc as i128,
                });
            }
            _ => {}
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(a: Option<u64>) -> CostDims {
        CostDims::new(7, 7, 8, 8, 3, 8, 3, a)
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(mac_cost(CostKind::Subview2D, &dims(None)).unwrap(), 677_376);
        assert_eq!(mac_cost(CostKind::LfDsc, &dims(None)).unwrap(), 159_936);
        assert_eq!(
            mac_cost(CostKind::Full4D, &dims(Some(3))).unwrap(),
            6_096_384
        );
        assert_eq!(
            mac_cost(CostKind::LfAsc, &dims(Some(3))).unwrap(),
            4_064_256
        );
        assert!(matches!(
            mac_cost(CostKind::Full4D, &dims(None)),
            Err(LfError::MissingAngularExtent(_))
        ));
    }

    #[test]
    fn savings_examples() {
        assert_eq!(
            mac_savings(SavingsKind::DscVs2d, &dims(None)).unwrap(),
            517_440
        );
        assert_eq!(
            mac_savings(SavingsKind::ComboVs4d, &dims(Some(3))).unwrap(),
            1_872_192
        );
        let d = CostDims::new(2, 3, 4, 5, 6, 1, 1, None);
        assert_eq!(
            mac_savings(SavingsKind::DscVs2d, &d).unwrap(),
            -(2 * 3 * 4 * 5 * 6)
        );
    }

    #[test]
    fn param_count_examples() {
        let pw = LayerSpec::pointwise(192, 1024, vec![0.0; 192 * 1024], None);
        assert_eq!(pw.param_count(), 196_608);
        let dense = LayerSpec::dense(451_584, 1, vec![0.0; 451_584], Some(vec![0.0]));
        assert_eq!(dense.param_count(), 451_585);
        assert_eq!(
            LayerSpec::depthwise(4, 3, 1, vec![0.0; 48]).param_count(),
            48
        );
    }

    #[test]
    fn empty_model_measures_zero() {
        let s = LfShape::new(1, 1, 2, 2, 1).unwrap();
        assert_eq!(
            measure_macs(&ModelSpec::trunk_only(s, vec![]), s).unwrap(),
            0
        );
    }
}
