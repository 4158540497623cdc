//! Spatial natural-scene statistics: MSCN coefficients and generalized
//! Gaussian fits at two scales.

use std::sync::OnceLock;

use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use super::{FeatureKind, FeatureVector, SPATIAL_LEN};
use crate::error::{LfError, Result};
use crate::tensor::LfTensor;

/// Minimum side of an image passed to [`mscn`].
pub const MIN_MSCN_SIDE: usize = 8;
const WINDOW: usize = 7;
const WINDOW_SIGMA: f64 = 7.0 / 6.0;
const STABILITY_C: f64 = 1.0;
const ALPHA_MIN: f64 = 0.2;
const ALPHA_STEP: f64 = 0.001;
const ALPHA_STEPS: usize = 9800;
/// Shape reported for a zero-variance field.
const DEGENERATE_ALPHA: f64 = 2.0;

/// A row-major 2-D array.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LfError::LengthMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Plane { rows, cols, data })
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// 2x2 mean pooling (trailing odd row/column dropped).
    pub fn half(&self) -> Plane {
        let (rows, cols) = (self.rows / 2, self.cols / 2);
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let s = self.at(2 * r, 2 * c)
                    + self.at(2 * r, 2 * c + 1)
                    + self.at(2 * r + 1, 2 * c)
                    + self.at(2 * r + 1, 2 * c + 1);
                data.push(s / 4.0);
            }
        }
        Plane { rows, cols, data }
    }
}

/// `0.299 R + 0.587 G + 0.114 B` for three channels; single-channel input is
/// taken as luminance and other channel counts are averaged.
pub fn luminance(lfi: &LfTensor, u: usize, v: usize) -> Plane {
    let s = lfi.shape();
    let weights: Vec<f64> = match s.c {
        3 => vec![0.299, 0.587, 0.114],
        c => vec![1.0 / c as f64; c],
    };
    let mut data = Vec::with_capacity(s.x * s.y);
    for x in 0..s.x {
        for y in 0..s.y {
            data.push((0..s.c).map(|c| weights[c] * lfi.at(u, v, x, y, c)).sum());
        }
    }
    Plane {
        rows: s.x,
        cols: s.y,
        data,
    }
}

fn gaussian_window() -> [f64; WINDOW] {
    let half = (WINDOW / 2) as f64;
    let mut w = [0.0; WINDOW];
    for (i, wi) in w.iter_mut().enumerate() {
        let d = i as f64 - half;
        *wi = (-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let sum: f64 = w.iter().sum();
    w.map(|x| x / sum)
}

/// Separable Gaussian smoothing with replicated borders.
fn smooth(p: &Plane) -> Plane {
    let w = gaussian_window();
    let half = (WINDOW / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; p.data.len()];
    for r in 0..p.rows {
        for c in 0..p.cols {
            tmp[r * p.cols + c] = (0..WINDOW)
                .map(|k| w[k] * p.at(r, clamp(c as isize + k as isize - half, p.cols)))
                .sum();
        }
    }
    let mut out = vec![0.0; p.data.len()];
    for r in 0..p.rows {
        for c in 0..p.cols {
            out[r * p.cols + c] = (0..WINDOW)
                .map(|k| w[k] * tmp[clamp(r as isize + k as isize - half, p.rows) * p.cols + c])
                .sum();
        }
    }
    Plane {
        rows: p.rows,
        cols: p.cols,
        data: out,
    }
}

/// Mean-subtracted contrast-normalized coefficients `(I - mu) / (sigma + 1)`
/// with a 7x7 Gaussian window.
pub fn mscn(image: &Plane) -> Result<Plane> {
    if image.rows < MIN_MSCN_SIDE || image.cols < MIN_MSCN_SIDE {
        return Err(LfError::ImageTooSmall {
            rows: image.rows,
            cols: image.cols,
            min: MIN_MSCN_SIDE,
        });
    }
    let mu = smooth(image);
    let sq = Plane {
        data: image.data.iter().map(|x| x * x).collect(),
        ..*image
    };
    let mu_sq = smooth(&sq);
    let data = image
        .data
        .iter()
        .zip(&mu.data)
        .zip(&mu_sq.data)
        .map(|((&i, &m), &m2)| {
            let sigma = (m2 - m * m).max(0.0).sqrt();
            let d = i - m;
            // Smoothing a constant reproduces it only up to rounding.
            if d.abs() <= 1e-9 * i.abs().max(1.0) {
                0.0
            } else {
                d / (sigma + STABILITY_C)
            }
        })
        .collect();
    Ok(Plane {
        rows: image.rows,
        cols: image.cols,
        data,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GgdParams {
    pub alpha: f64,
    /// Variance `E[x^2]`.
    pub sigma_sq: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AggdParams {
    pub alpha: f64,
    /// Left-side scale (standard deviation of the negative samples).
    pub sigma_left: f64,
    pub sigma_right: f64,
    /// Mean of the fitted distribution.
    pub mean_term: f64,
}

/// `(alpha, Gamma(1/a) Gamma(3/a) / Gamma(2/a)^2)` over the alpha grid.
fn rho_table() -> &'static [(f64, f64)] {
    static TABLE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (0..=ALPHA_STEPS)
            .map(|i| {
                let a = ALPHA_MIN + i as f64 * ALPHA_STEP;
                let rho = (ln_gamma(1.0 / a) + ln_gamma(3.0 / a) - 2.0 * ln_gamma(2.0 / a)).exp();
                (a, rho)
            })
            .collect()
    })
}

/// Grid alpha whose moment ratio is closest to `rho` (first on ties).
fn match_alpha(rho: f64) -> f64 {
    let mut best = (f64::INFINITY, DEGENERATE_ALPHA);
    for &(a, r) in rho_table() {
        let d = (r - rho).abs();
        if d < best.0 {
            best = (d, a);
        }
    }
    best.1
}

/// Moment-matching fit of a zero-mean generalized Gaussian.
pub fn fit_ggd(samples: &[f64]) -> GgdParams {
    let n = samples.len() as f64;
    let sigma_sq = samples.iter().map(|x| x * x).sum::<f64>() / n;
    let abs_mean = samples.iter().map(|x| x.abs()).sum::<f64>() / n;
    if samples.is_empty() || sigma_sq <= 0.0 || abs_mean <= 0.0 {
        return GgdParams {
            alpha: DEGENERATE_ALPHA,
            sigma_sq: 0.0,
        };
    }
    GgdParams {
        alpha: match_alpha(sigma_sq / (abs_mean * abs_mean)),
        sigma_sq,
    }
}

/// Moment-matching fit of an asymmetric generalized Gaussian.
pub fn fit_aggd(samples: &[f64]) -> AggdParams {
    let (mut ls, mut ln, mut rs, mut rn) = (0.0, 0usize, 0.0, 0usize);
    for &x in samples {
        if x < 0.0 {
            ls += x * x;
            ln += 1;
        } else if x > 0.0 {
            rs += x * x;
            rn += 1;
        }
    }
    let n = samples.len() as f64;
    let mean_sq = (ls + rs) / n;
    let abs_mean = samples.iter().map(|x| x.abs()).sum::<f64>() / n;
    if samples.is_empty() || mean_sq <= 0.0 {
        return AggdParams {
            alpha: DEGENERATE_ALPHA,
            sigma_left: 0.0,
            sigma_right: 0.0,
            mean_term: 0.0,
        };
    }
    let sigma_left = if ln > 0 { (ls / ln as f64).sqrt() } else { 0.0 };
    let sigma_right = if rn > 0 { (rs / rn as f64).sqrt() } else { 0.0 };
    let r_hat = abs_mean * abs_mean / mean_sq;
    // With one side empty the asymmetry correction tends to 1.
    let r_norm = if sigma_left > 0.0 && sigma_right > 0.0 {
        let g = sigma_left / sigma_right;
        r_hat * (g.powi(3) + 1.0) * (g + 1.0) / (g * g + 1.0).powi(2)
    } else {
        r_hat
    };
    let alpha = match_alpha(1.0 / r_norm);
    let (l1, l2, l3) = (
        ln_gamma(1.0 / alpha),
        ln_gamma(2.0 / alpha),
        ln_gamma(3.0 / alpha),
    );
    let mean_term = (sigma_right - sigma_left) * (l2 - l1).exp() * ((l1 - l3) / 2.0).exp();
    AggdParams {
        alpha,
        sigma_left,
        sigma_right,
        mean_term,
    }
}

/// Horizontal, vertical, main-diagonal and anti-diagonal neighbour products.
fn pair_products(m: &Plane) -> [Vec<f64>; 4] {
    let (r, c) = (m.rows, m.cols);
    let mut h = Vec::with_capacity(r * (c - 1));
    let mut v = Vec::with_capacity((r - 1) * c);
    let mut d1 = Vec::with_capacity((r - 1) * (c - 1));
    let mut d2 = Vec::with_capacity((r - 1) * (c - 1));
    for i in 0..r {
        for j in 0..c {
            let x = m.at(i, j);
            if j + 1 < c {
                h.push(x * m.at(i, j + 1));
            }
            if i + 1 < r {
                v.push(x * m.at(i + 1, j));
                if j + 1 < c {
                    d1.push(x * m.at(i + 1, j + 1));
                }
                if j > 0 {
                    d2.push(x * m.at(i + 1, j - 1));
                }
            }
        }
    }
    [h, v, d1, d2]
}

/// The 18 features of one scale: GGD `(alpha, sigma^2)` of the MSCN field and
/// AGGD `(alpha, mean, sigma_l^2, sigma_r^2)` of each neighbour product.
fn scale_features(image: &Plane) -> Result<Vec<f64>> {
    let m = mscn(image)?;
    let g = fit_ggd(&m.data);
    let mut f = vec![g.alpha, g.sigma_sq];
    for p in pair_products(&m) {
        let a = fit_aggd(&p);
        f.extend([
            a.alpha,
            a.mean_term,
            a.sigma_left.powi(2),
            a.sigma_right.powi(2),
        ]);
    }
    Ok(f)
}

/// Features of a single luminance image at full and half resolution.
pub fn image_features(image: &Plane) -> Result<Vec<f64>> {
    let min = 2 * MIN_MSCN_SIDE;
    if image.rows < min || image.cols < min {
        return Err(LfError::ImageTooSmall {
            rows: image.rows,
            cols: image.cols,
            min,
        });
    }
    let mut f = scale_features(image)?;
    f.extend(scale_features(&image.half())?);
    Ok(f)
}

/// 36-dimensional spatial descriptor averaged over all subviews.
pub fn spatial_features(lfi: &LfTensor) -> Result<FeatureVector> {
    let s = lfi.shape();
    let min = 2 * MIN_MSCN_SIDE;
    if s.x < min || s.y < min {
        return Err(LfError::ImageTooSmall {
            rows: s.x,
            cols: s.y,
            min,
        });
    }
    let per_view: Vec<Vec<f64>> = (0..s.u * s.v)
        .into_par_iter()
        .map(|i| image_features(&luminance(lfi, i / s.v, i % s.v)))
        .collect::<Result<_>>()?;
    let mut mean = vec![0.0; SPATIAL_LEN];
    for f in &per_view {
        for (m, x) in mean.iter_mut().zip(f) {
            *m += x;
        }
    }
    let n = per_view.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(FeatureVector {
        kind: FeatureKind::Spatial,
        values: mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::LfShape;

    #[test]
    fn constant_image_is_degenerate() {
        let p = Plane::new(10, 12, vec![77.0; 120]).unwrap();
        assert!(mscn(&p).unwrap().data.iter().all(|&x| x == 0.0));
        let t = LfTensor::filled(LfShape::new(2, 2, 16, 16, 3).unwrap(), 128.0);
        let f = spatial_features(&t).unwrap().values;
        let mut expected = vec![2.0, 0.0];
        for _ in 0..4 {
            expected.extend([2.0, 0.0, 0.0, 0.0]);
        }
        expected.extend(expected.clone());
        assert_eq!(f, expected);
    }

    #[test]
    fn too_small() {
        let p = Plane::new(7, 9, vec![0.0; 63]).unwrap();
        assert!(matches!(mscn(&p), Err(LfError::ImageTooSmall { .. })));
        let t = LfTensor::zeros(LfShape::new(1, 1, 15, 16, 1).unwrap());
        assert!(spatial_features(&t).is_err());
    }

    #[test]
    fn checkerboard_symmetry() {
        let data = (0..100)
            .map(|i| {
                if (i / 10 + i % 10) % 2 == 0 {
                    255.0
                } else {
                    0.0
                }
            })
            .collect();
        let m = mscn(&Plane::new(10, 10, data).unwrap()).unwrap();
        // Away from the border the magnitudes agree and signs alternate.
        let a = m.at(4, 4);
        let b = m.at(4, 5);
        assert!(a > 0.0 && b < 0.0);
        assert!((a + b).abs() < 1e-9);
    }

    #[test]
    fn window_is_normalized() {
        let w = gaussian_window();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(w[0], w[6]);
    }

    #[test]
    fn gaussian_shape_recovered() {
        // Laplace: E[x^2] / E[|x|]^2 = 2 exactly when alpha = 1.
        assert!((match_alpha(2.0) - 1.0).abs() < 1e-9);
        // Gaussian: pi / 2.
        assert!((match_alpha(std::f64::consts::FRAC_PI_2) - 2.0).abs() < 1e-9);
    }
}
