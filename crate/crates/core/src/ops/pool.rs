use super::{valid_extent, LayerSpec};
use crate::error::{LfError, Result};
use crate::tensor::{LfShape, LfTensor};

/// Spatial max pooling with window = stride and no padding.
pub fn max_pool_spatial(input: &LfTensor, stride: usize) -> Result<LfTensor> {
    max_pool_with_argmax(input, stride).map(|(t, _)| t)
}

/// Pools and also returns, for each output element, the flat input offset it
/// was taken from. Ties go to the first element in row-major window order.
pub(crate) fn max_pool_with_argmax(
    input: &LfTensor,
    stride: usize,
) -> Result<(LfTensor, Vec<usize>)> {
    if !matches!(stride, 2 | 4) {
        return Err(LfError::BadStride(stride));
    }
    let s = input.shape();
    let out_shape: LfShape = LayerSpec::max_pool(stride).output_shape(s)?;
    let (ox, oy) = (valid_extent(s.x, stride), valid_extent(s.y, stride));
    let data = input.data();
    let mut out = Vec::with_capacity(out_shape.len());
    let mut arg = Vec::with_capacity(out_shape.len());
    for u in 0..s.u {
        for v in 0..s.v {
            for x in 0..ox {
                for y in 0..oy {
                    for c in 0..s.c {
                        let mut best = s.offset(u, v, x * stride, y * stride, c);
                        for dx in 0..stride {
                            for dy in 0..stride {
                                let off = s.offset(u, v, x * stride + dx, y * stride + dy, c);
                                if data[off] > data[best] {
                                    best = off;
                                }
                            }
                        }
                        out.push(data[best]);
                        arg.push(best);
                    }
                }
            }
        }
    }
    Ok((LfTensor::from_parts(out_shape, out), arg))
}

pub(crate) fn max_pool_backward(
    input_shape: LfShape,
    argmax: &[usize],
    grad_out: &LfTensor,
) -> LfTensor {
    let mut gi = vec![0.0; input_shape.len()];
    for (&src, &g) in argmax.iter().zip(grad_out.data()) {
        gi[src] += g;
    }
    LfTensor::from_parts(input_shape, gi)
}
