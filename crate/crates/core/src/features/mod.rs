//! Auxiliary labels: natural-scene-statistics features of the subviews and an
//! EPI gradient-direction descriptor of angular consistency.

mod angular;
mod nss;

pub use angular::{angular_features, AngularExtractor, EpiGradientSurrogate, ANGULAR_KIND};
pub use nss::{fit_aggd, fit_ggd, luminance, mscn, spatial_features, AggdParams, GgdParams, Plane};

use crate::error::{LfError, Result};

pub const SPATIAL_LEN: usize = 36;
pub const ANGULAR_LEN: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    Spatial,
    Angular,
}

impl FeatureKind {
    #[allow(clippy::len_without_is_empty)]
    pub fn len(self) -> usize {
        match self {
            FeatureKind::Spatial => SPATIAL_LEN,
            FeatureKind::Angular => ANGULAR_LEN,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub kind: FeatureKind,
    pub values: Vec<f64>,
}

/// Per-dimension z-score statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelStats {
    pub mean: Vec<f64>,
    /// Population standard deviation, floored at `STD_FLOOR`.
    pub std: Vec<f64>,
}

pub const STD_FLOOR: f64 = 1e-8;

impl LabelStats {
    pub fn normalize(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn denormalize(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(z, (m, s))| z * s + m)
            .collect()
    }
}

/// Z-scores every column; returns the normalized rows and the statistics for
/// reuse on unseen data.
pub fn normalize_labels(rows: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, LabelStats)> {
    if rows.len() < 2 {
        return Err(LfError::TooFewRows {
            min: 2,
            got: rows.len(),
        });
    }
    let d = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(LfError::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let std = (0..d)
        .map(|j| {
            let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
            var.sqrt().max(STD_FLOOR)
        })
        .collect();
    let stats = LabelStats { mean, std };
    Ok((rows.iter().map(|r| stats.normalize(r)).collect(), stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_rows() {
        let (z, st) = normalize_labels(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(z, vec![vec![-1.0], vec![1.0]]);
        assert_eq!(st.denormalize(&z[1]), vec![2.0]);
    }

    #[test]
    fn constant_column_and_errors() {
        let (z, _) = normalize_labels(&[vec![3.0, 1.0], vec![3.0, 2.0], vec![3.0, 6.0]]).unwrap();
        assert!(z.iter().all(|r| r[0] == 0.0));
        let col_mean: f64 = z.iter().map(|r| r[1]).sum::<f64>() / 3.0;
        assert!(col_mean.abs() < 1e-12);
        assert!(matches!(
            normalize_labels(&[vec![1.0]]),
            Err(LfError::TooFewRows { .. })
        ));
        assert!(matches!(
            normalize_labels(&[vec![1.0], vec![1.0, 2.0]]),
            Err(LfError::DimensionMismatch { .. })
        ));
    }
}
