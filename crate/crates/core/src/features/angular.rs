//! Angular-consistency descriptor from epipolar-plane images (EPIs).
//!
//! The descriptor is a stand-in for a gradient-direction-distribution
//! feature: for every EPI it measures the direction `atan2(g_angular,
//! g_spatial)` of the luminance gradient and summarizes the distribution of
//! those directions by four moments. Directions are not wrapped, so they lie
//! in `(-pi, pi]`.

use super::nss::luminance;
use super::{FeatureKind, FeatureVector, ANGULAR_LEN};
use crate::error::{LfError, Result};
use crate::tensor::LfTensor;

/// Label used in feature files for this descriptor.
pub const ANGULAR_KIND: &str = "angular-gdd-surrogate";

/// Source of the 8-dimensional angular label.
pub trait AngularExtractor {
    fn name(&self) -> &'static str;
    fn extract(&self, lfi: &LfTensor) -> Result<FeatureVector>;
}

/// The default extractor, see the module docs.
#[derive(Clone, Copy, Debug, Default)]
pub struct EpiGradientSurrogate;

impl AngularExtractor for EpiGradientSurrogate {
    fn name(&self) -> &'static str {
        ANGULAR_KIND
    }

    fn extract(&self, lfi: &LfTensor) -> Result<FeatureVector> {
        angular_features(lfi)
    }
}

/// Derivative of `f` at `i` along a line of `n` samples: central difference
/// inside, one-sided at the ends, zero for a single sample.
#[inline]
fn diff(n: usize, i: usize, f: impl Fn(usize) -> f64) -> f64 {
    if n < 2 {
        0.0
    } else if i == 0 {
        f(1) - f(0)
    } else if i == n - 1 {
        f(n - 1) - f(n - 2)
    } else {
        (f(i + 1) - f(i - 1)) / 2.0
    }
}

/// Mean, population standard deviation, skewness and excess kurtosis. All
/// zero for an empty sample; the higher moments are zero without spread.
fn moments(x: &[f64]) -> [f64; 4] {
    if x.is_empty() {
        return [0.0; 4];
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let m = |p: i32| x.iter().map(|v| (v - mean).powi(p)).sum::<f64>() / n;
    let var = m(2);
    if var <= 0.0 {
        return [mean, 0.0, 0.0, 0.0];
    }
    let sd = var.sqrt();
    [mean, sd, m(3) / (sd * var), m(4) / (var * var) - 3.0]
}

/// Horizontal EPIs fix `(u, x)` and span `(v, y)`; vertical EPIs fix `(v, y)`
/// and span `(u, x)`. Returns the four moments of each direction set.
pub fn angular_features(lfi: &LfTensor) -> Result<FeatureVector> {
    let s = lfi.shape();
    if s.u < 2 || s.v < 2 {
        return Err(LfError::AngularTooSmall { u: s.u, v: s.v });
    }
    let lum: Vec<_> = (0..s.u * s.v)
        .map(|i| luminance(lfi, i / s.v, i % s.v))
        .collect();
    let at = |u: usize, v: usize, x: usize, y: usize| lum[u * s.v + v].at(x, y);

    let mut horizontal = Vec::new();
    let mut vertical = Vec::new();
    for u in 0..s.u {
        for v in 0..s.v {
            for x in 0..s.x {
                for y in 0..s.y {
                    let gs = diff(s.y, y, |j| at(u, v, x, j));
                    let ga = diff(s.v, v, |j| at(u, j, x, y));
                    if gs != 0.0 || ga != 0.0 {
                        horizontal.push(ga.atan2(gs));
                    }
                    let gs = diff(s.x, x, |i| at(u, v, i, y));
                    let ga = diff(s.u, u, |i| at(i, v, x, y));
                    if gs != 0.0 || ga != 0.0 {
                        vertical.push(ga.atan2(gs));
                    }
                }
            }
        }
    }
    let mut values = Vec::with_capacity(ANGULAR_LEN);
    values.extend(moments(&horizontal));
    values.extend(moments(&vertical));
    Ok(FeatureVector {
        kind: FeatureKind::Angular,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::LfShape;

    #[test]
    fn constant_is_zero() {
        let t = LfTensor::filled(LfShape::new(3, 3, 5, 5, 3).unwrap(), 9.0);
        assert_eq!(angular_features(&t).unwrap().values, vec![0.0; 8]);
    }

    #[test]
    fn needs_two_views_per_axis() {
        let t = LfTensor::zeros(LfShape::new(1, 3, 5, 5, 3).unwrap());
        assert!(matches!(
            angular_features(&t),
            Err(LfError::AngularTooSmall { .. })
        ));
    }

    #[test]
    fn pure_spatial_ramp_points_along_zero() {
        // Luminance grows along y only: every horizontal direction is atan2(0, +) = 0.
        let t = LfTensor::from_fn(LfShape::new(2, 2, 4, 6, 1).unwrap(), |_, _, _, y, _| {
            y as f64
        });
        let f = angular_features(&t).unwrap().values;
        assert_eq!(&f[..4], &[0.0; 4]);
        // Vertical EPIs see no gradient at all.
        assert_eq!(&f[4..], &[0.0; 4]);
    }

    #[test]
    fn moments_of_symmetric_pair() {
        let [m, sd, sk, ku] = moments(&[-1.0, 1.0]);
        assert_eq!((m, sd, sk, ku), (0.0, 1.0, 0.0, -2.0));
    }
}
