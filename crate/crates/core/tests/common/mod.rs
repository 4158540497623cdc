//! Reference implementations written directly from the definitions, kept
//! separate from the library so they can serve as oracles.
#![allow(dead_code)]

use lfiqa::{LfShape, LfTensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: LfShape) -> LfTensor {
    LfTensor::create(shape, random_vec(rng, shape.len())).unwrap()
}

pub fn shape(u: usize, v: usize, x: usize, y: usize, c: usize) -> LfShape {
    LfShape::new(u, v, x, y, c).unwrap()
}

/// Dense 4-D kernel with extents `(au, av, kx, ky)` and per-axis offsets:
/// output `(u, v, x, y)` reads input `(u + du - pu, v + dv - pv, x*s + dx - px, y*s + dy - py)`.
/// Weight layout is `[du][dv][dx][dy][ci][co]`. Taps outside the input read zero.
pub struct Kernel4 {
    pub au: usize,
    pub av: usize,
    pub kx: usize,
    pub ky: usize,
    pub ci: usize,
    pub co: usize,
    pub pads: [usize; 4],
    pub stride: usize,
    pub w: Vec<f64>,
}

impl Kernel4 {
    pub fn at(&self, du: usize, dv: usize, dx: usize, dy: usize, i: usize, o: usize) -> f64 {
        self.w[((((du * self.av + dv) * self.kx + dx) * self.ky + dy) * self.ci + i) * self.co + o]
    }
}

fn tap(index: usize, d: usize, pad: usize, n: usize) -> Option<usize> {
    let i = (index + d) as isize - pad as isize;
    (i >= 0 && (i as usize) < n).then_some(i as usize)
}

/// Straightforward nested-loop convolution. Taps are visited in
/// `du, dv, dx, dy, ci` order.
pub fn conv4d_oracle(input: &LfTensor, k: &Kernel4) -> LfTensor {
    let s = input.shape();
    let ox = s.x.div_ceil(k.stride);
    let oy = s.y.div_ceil(k.stride);
    let out = shape(s.u, s.v, ox, oy, k.co);
    LfTensor::from_fn(out, |u, v, x, y, o| {
        let mut sum = 0.0;
        for du in 0..k.au {
            let Some(iu) = tap(u, du, k.pads[0], s.u) else {
                continue;
            };
            for dv in 0..k.av {
                let Some(iv) = tap(v, dv, k.pads[1], s.v) else {
                    continue;
                };
                for dx in 0..k.kx {
                    let Some(ix) = tap(x * k.stride, dx, k.pads[2], s.x) else {
                        continue;
                    };
                    for dy in 0..k.ky {
                        let Some(iy) = tap(y * k.stride, dy, k.pads[3], s.y) else {
                            continue;
                        };
                        for i in 0..k.ci {
                            sum += input.at(iu, iv, ix, iy, i) * k.at(du, dv, dx, dy, i, o);
                        }
                    }
                }
            }
        }
        sum
    })
}

/// Same-padding offset for a kernel of extent `k`.
pub fn same_pad(k: usize) -> usize {
    (k - 1) / 2
}

pub fn max_abs(t: &[f64]) -> f64 {
    t.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `max |a - b| / max(max |b|, tiny)`.
pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let d = a
        .iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    d / max_abs(b).max(1e-300)
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn pearson_oracle(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va.sqrt() * vb.sqrt())
}

/// Rank by counting: one plus the number of smaller values, plus half the
/// number of other equal values.
pub fn ranks_oracle(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&xi| {
            let less = x.iter().filter(|&&v| v < xi).count() as f64;
            let equal = x.iter().filter(|&&v| v == xi).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn srocc_oracle(a: &[f64], b: &[f64]) -> f64 {
    pearson_oracle(&ranks_oracle(a), &ranks_oracle(b))
}

pub fn rmse_oracle(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}
