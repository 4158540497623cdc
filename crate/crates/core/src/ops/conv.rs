use rayon::prelude::*;

use super::{apply, pad_before, same_extent, LayerKind, LayerSpec};
use crate::error::{LfError, Result};
use crate::tensor::{LfShape, LfTensor};

/// Kernel extents of a convolution over `(u, v, x, y)` with full channel mixing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub au: usize,
    pub av: usize,
    pub k: usize,
    pub stride: usize,
    pub ci: usize,
    pub co: usize,
}

impl ConvGeometry {
    fn taps(&self) -> usize {
        self.au * self.av * self.k * self.k
    }
}

fn expect_kind(layer: &LayerSpec, kind: LayerKind) -> Result<()> {
    if layer.kind != kind {
        return Err(LfError::BadLayer(format!(
            "expected a {kind} layer, got {}",
            layer.kind
        )));
    }
    Ok(())
}

/// Subview-wise 2-D convolution with a kernel shared by all subviews.
pub fn conv2d_subview(input: &LfTensor, layer: &LayerSpec) -> Result<LfTensor> {
    expect_kind(layer, LayerKind::Subview2D)?;
    apply(layer, input, None)
}

/// Per-subview, per-channel spatial convolution.
pub fn conv_depthwise(input: &LfTensor, layer: &LayerSpec) -> Result<LfTensor> {
    expect_kind(layer, LayerKind::Depthwise)?;
    apply(layer, input, None)
}

/// 1x1 channel mixing at every `(u, v, x, y)`.
pub fn conv_pointwise(input: &LfTensor, layer: &LayerSpec) -> Result<LfTensor> {
    expect_kind(layer, LayerKind::Pointwise)?;
    apply(layer, input, None)
}

/// 3-D convolution over `(v, x, y)`: the horizontal half of an anglewise
/// separable convolution.
pub fn conv_anglewise_h(input: &LfTensor, layer: &LayerSpec) -> Result<LfTensor> {
    expect_kind(layer, LayerKind::AnglewiseH)?;
    apply(layer, input, None)
}

/// 3-D convolution over `(u, x, y)`: the vertical half.
pub fn conv_anglewise_v(input: &LfTensor, layer: &LayerSpec) -> Result<LfTensor> {
    expect_kind(layer, LayerKind::AnglewiseV)?;
    apply(layer, input, None)
}

/// Direct 4-D convolution over `(u, v, x, y)`, stride 1.
pub fn conv4d_full(input: &LfTensor, layer: &LayerSpec) -> Result<LfTensor> {
    expect_kind(layer, LayerKind::Full4D)?;
    apply(layer, input, None)
}

#[inline]
fn source(index: usize, tap: usize, pad: usize, extent: usize) -> Option<usize> {
    let i = (index + tap).checked_sub(pad)?;
    (i < extent).then_some(i)
}

/// Shared engine for subview 2-D and anglewise convolutions: kernel of extent
/// `au x av x k x k`, spatial stride, accumulated per output channel.
pub(crate) fn conv_general_counted(
    input: &LfTensor,
    w: &[f64],
    g: ConvGeometry,
    macs: &mut u64,
) -> LfTensor {
    let s = input.shape();
    let (ox, oy) = (same_extent(s.x, g.stride), same_extent(s.y, g.stride));
    let out_shape = LfShape {
        x: ox,
        y: oy,
        c: g.co,
        ..s
    };
    let mut out = vec![0.0; out_shape.len()];
    let (pu, pv, pk) = (pad_before(g.au), pad_before(g.av), pad_before(g.k));
    let data = input.data();
    let block = g.ci * g.co;
    let per_tap = block as u64;

    let counts: Vec<u64> = out
        .par_chunks_mut(ox * oy * g.co)
        .enumerate()
        .map(|(uv, plane)| {
            let (u, v) = (uv / s.v, uv % s.v);
            let mut count = 0;
            for x in 0..ox {
                for y in 0..oy {
                    let acc = &mut plane[(x * oy + y) * g.co..][..g.co];
                    let mut tap = 0;
                    for du in 0..g.au {
                        let iu = source(u, du, pu, s.u);
                        for dv in 0..g.av {
                            let iv = source(v, dv, pv, s.v);
                            for dx in 0..g.k {
                                let ix = source(x * g.stride, dx, pk, s.x);
                                for dy in 0..g.k {
                                    let iy = source(y * g.stride, dy, pk, s.y);
                                    count += per_tap;
                                    let t = tap;
                                    tap += 1;
                                    let (Some(iu), Some(iv), Some(ix), Some(iy)) = (iu, iv, ix, iy)
                                    else {
                                        continue;
                                    };
                                    let off = s.offset(iu, iv, ix, iy, 0);
                                    let wt = &w[t * block..][..block];
                                    for (xv, wrow) in
                                        data[off..off + g.ci].iter().zip(wt.chunks_exact(g.co))
                                    {
                                        for (a, &wv) in acc.iter_mut().zip(wrow) {
                                            *a += xv * wv;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            count
        })
        .collect();
    *macs += counts.iter().sum::<u64>();
    LfTensor::from_parts(out_shape, out)
}

/// Gradients of [`conv_general_counted`] with respect to input and weights.
pub(crate) fn conv_backward(
    input: &LfTensor,
    w: &[f64],
    g: ConvGeometry,
    grad_out: &LfTensor,
) -> (LfTensor, Vec<f64>) {
    let s = input.shape();
    let os = grad_out.shape();
    let (pu, pv, pk) = (pad_before(g.au), pad_before(g.av), pad_before(g.k));
    let data = input.data();
    let go = grad_out.data();
    let block = g.ci * g.co;
    let mut gi = vec![0.0; s.len()];
    let mut gw = vec![0.0; g.taps() * block];

    for u in 0..os.u {
        for v in 0..os.v {
            for x in 0..os.x {
                for y in 0..os.y {
                    let gout = &go[os.offset(u, v, x, y, 0)..][..g.co];
                    let mut tap = 0;
                    for du in 0..g.au {
                        let iu = source(u, du, pu, s.u);
                        for dv in 0..g.av {
                            let iv = source(v, dv, pv, s.v);
                            for dx in 0..g.k {
                                let ix = source(x * g.stride, dx, pk, s.x);
                                for dy in 0..g.k {
                                    let iy = source(y * g.stride, dy, pk, s.y);
                                    let t = tap;
                                    tap += 1;
                                    let (Some(iu), Some(iv), Some(ix), Some(iy)) = (iu, iv, ix, iy)
                                    else {
                                        continue;
                                    };
                                    let off = s.offset(iu, iv, ix, iy, 0);
                                    let wt = &w[t * block..][..block];
                                    let gwt = &mut gw[t * block..][..block];
                                    for i in 0..g.ci {
                                        let xv = data[off + i];
                                        let wrow = &wt[i * g.co..][..g.co];
                                        let gwrow = &mut gwt[i * g.co..][..g.co];
                                        let mut acc = 0.0;
                                        for o in 0..g.co {
                                            gwrow[o] += xv * gout[o];
                                            acc += wrow[o] * gout[o];
                                        }
                                        gi[off + i] += acc;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (LfTensor::from_parts(s, gi), gw)
}

/// Naive loop implementation of the full 4-D convolution. Written
/// independently of [`conv_general_counted`] so that it can serve as the
/// reference for the factored kernels.
pub(crate) fn conv4d_full_counted(
    input: &LfTensor,
    w: &[f64],
    g: ConvGeometry,
    macs: &mut u64,
) -> LfTensor {
    let s = input.shape();
    let (a, k, ci, co) = (g.au, g.k, g.ci, g.co);
    let pa = pad_before(a) as isize;
    let pk = pad_before(k) as isize;
    let out_shape = LfShape { c: co, ..s };
    let mut out = Vec::with_capacity(out_shape.len());
    let inside = |i: isize, n: usize| i >= 0 && (i as usize) < n;
    for u in 0..s.u {
        for v in 0..s.v {
            for x in 0..s.x {
                for y in 0..s.y {
                    for o in 0..co {
                        let mut sum = 0.0;
                        for du in 0..a {
                            for dv in 0..a {
                                for dx in 0..k {
                                    for dy in 0..k {
                                        *macs += ci as u64;
                                        let iu = u as isize + du as isize - pa;
                                        let iv = v as isize + dv as isize - pa;
                                        let ix = x as isize + dx as isize - pk;
                                        let iy = y as isize + dy as isize - pk;
                                        if !(inside(iu, s.u)
                                            && inside(iv, s.v)
                                            && inside(ix, s.x)
                                            && inside(iy, s.y))
                                        {
                                            continue;
                                        }
                                        for i in 0..ci {
                                            let xv = input.at(
                                                iu as usize,
                                                iv as usize,
                                                ix as usize,
                                                iy as usize,
                                                i,
                                            );
                                            let widx =
                                                ((((du * a + dv) * k + dx) * k + dy) * ci + i) * co
                                                    + o;
                                            sum += xv * w[widx];
                                        }
                                    }
                                }
                            }
                        }
                        out.push(sum);
                    }
                }
            }
        }
    }
    LfTensor::from_parts(out_shape, out)
}

pub(crate) fn depthwise_counted(
    input: &LfTensor,
    w: &[f64],
    k: usize,
    stride: usize,
    macs: &mut u64,
) -> LfTensor {
    let s = input.shape();
    let c = s.c;
    let (ox, oy) = (same_extent(s.x, stride), same_extent(s.y, stride));
    let out_shape = LfShape { x: ox, y: oy, ..s };
    let mut out = vec![0.0; out_shape.len()];
    let pk = pad_before(k);
    let data = input.data();
    let counts: Vec<u64> = out
        .par_chunks_mut(ox * oy * c)
        .enumerate()
        .map(|(uv, plane)| {
            let (u, v) = (uv / s.v, uv % s.v);
            let mut count = 0;
            for x in 0..ox {
                for y in 0..oy {
                    let acc = &mut plane[(x * oy + y) * c..][..c];
                    for dx in 0..k {
                        let ix = source(x * stride, dx, pk, s.x);
                        for dy in 0..k {
                            count += c as u64;
                            let iy = source(y * stride, dy, pk, s.y);
                            let (Some(ix), Some(iy)) = (ix, iy) else {
                                continue;
                            };
                            let off = s.offset(u, v, ix, iy, 0);
                            let wt = &w[(dx * k + dy) * c..][..c];
                            for ((a, &xv), &wv) in acc.iter_mut().zip(&data[off..off + c]).zip(wt) {
                                *a += xv * wv;
                            }
                        }
                    }
                }
            }
            count
        })
        .collect();
    *macs += counts.iter().sum::<u64>();
    LfTensor::from_parts(out_shape, out)
}

pub(crate) fn depthwise_backward(
    input: &LfTensor,
    w: &[f64],
    k: usize,
    stride: usize,
    grad_out: &LfTensor,
) -> (LfTensor, Vec<f64>) {
    let s = input.shape();
    let os = grad_out.shape();
    let c = s.c;
    let pk = pad_before(k);
    let data = input.data();
    let go = grad_out.data();
    let mut gi = vec![0.0; s.len()];
    let mut gw = vec![0.0; k * k * c];
    for u in 0..os.u {
        for v in 0..os.v {
            for x in 0..os.x {
                for y in 0..os.y {
                    let gout = &go[os.offset(u, v, x, y, 0)..][..c];
                    for dx in 0..k {
                        let Some(ix) = source(x * stride, dx, pk, s.x) else {
                            continue;
                        };
                        for dy in 0..k {
                            let Some(iy) = source(y * stride, dy, pk, s.y) else {
                                continue;
                            };
                            let off = s.offset(u, v, ix, iy, 0);
                            let t = (dx * k + dy) * c;
                            for ch in 0..c {
                                gw[t + ch] += data[off + ch] * gout[ch];
                                gi[off + ch] += w[t + ch] * gout[ch];
                            }
                        }
                    }
                }
            }
        }
    }
    (LfTensor::from_parts(s, gi), gw)
}

pub(crate) fn pointwise_counted(
    input: &LfTensor,
    w: &[f64],
    bias: Option<&[f64]>,
    co: usize,
    macs: &mut u64,
) -> LfTensor {
    let s = input.shape();
    let ci = s.c;
    let out_shape = LfShape { c: co, ..s };
    let mut out = vec![0.0; out_shape.len()];
    out.par_chunks_mut(co)
        .zip(input.data().par_chunks(ci))
        .for_each(|(acc, xin)| {
            for (xv, wrow) in xin.iter().zip(w.chunks_exact(co)) {
                for (a, &wv) in acc.iter_mut().zip(wrow) {
                    *a += xv * wv;
                }
            }
            if let Some(b) = bias {
                for (a, &bv) in acc.iter_mut().zip(b) {
                    *a += bv;
                }
            }
        });
    *macs += (s.positions() * ci * co) as u64;
    LfTensor::from_parts(out_shape, out)
}

/// Returns `(grad_input, grad_weights, grad_bias)`.
pub(crate) fn pointwise_backward(
    input: &LfTensor,
    w: &[f64],
    grad_out: &LfTensor,
) -> (LfTensor, Vec<f64>, Vec<f64>) {
    let s = input.shape();
    let (ci, co) = (s.c, grad_out.shape().c);
    let mut gi = vec![0.0; s.len()];
    let mut gw = vec![0.0; ci * co];
    let mut gb = vec![0.0; co];
    for ((xin, gout), gin) in input
        .data()
        .chunks_exact(ci)
        .zip(grad_out.data().chunks_exact(co))
        .zip(gi.chunks_exact_mut(ci))
    {
        for (b, &g) in gb.iter_mut().zip(gout) {
            *b += g;
        }
        for i in 0..ci {
            let wrow = &w[i * co..][..co];
            let gwrow = &mut gw[i * co..][..co];
            let mut acc = 0.0;
            for o in 0..co {
                gwrow[o] += xin[i] * gout[o];
                acc += wrow[o] * gout[o];
            }
            gin[i] = acc;
        }
    }
    (LfTensor::from_parts(s, gi), gw, gb)
}
