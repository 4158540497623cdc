use crate::error::{LfError, Result};

/// Default weight of the auxiliary losses.
pub const DEFAULT_LAMBDA: f64 = 0.01;

/// Mean squared error between predicted and reference scores.
pub fn loss_primary(predicted: &[f64], target: &[f64]) -> Result<f64> {
    mse(predicted, target)
}

/// Mean squared error over `D` samples of `N` features each, averaged over
/// `D * N`. `predicted` and `target` hold the samples back to back.
pub fn loss_features(predicted: &[f64], target: &[f64], n: usize) -> Result<f64> {
    if n == 0 || !predicted.len().is_multiple_of(n) {
        return Err(LfError::DimensionMismatch {
            expected: n,
            got: predicted.len(),
        });
    }
    mse(predicted, target)
}

pub fn loss_spatial(predicted: &[f64], target: &[f64]) -> Result<f64> {
    loss_features(predicted, target, 36)
}

pub fn loss_angular(predicted: &[f64], target: &[f64]) -> Result<f64> {
    loss_features(predicted, target, 8)
}

/// `primary + lambda * (spatial + angular)`.
pub fn loss_total(primary: f64, spatial: f64, angular: f64, lambda: f64) -> f64 {
    primary + lambda * (spatial + angular)
}

fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(LfError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Err(LfError::EmptyDataset);
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(loss_primary(&[3.0], &[1.0]).unwrap(), 4.0);
        assert_eq!(loss_primary(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(loss_total(4.0, 2.0, 3.0, 0.01), 4.05);
        assert_eq!(loss_total(4.0, 2.0, 3.0, 0.0), 4.0);
        // two samples of 8 features, one entry off by 2
        let mut p = vec![0.0; 16];
        p[5] = 2.0;
        assert_eq!(loss_angular(&p, &[0.0; 16]).unwrap(), 4.0 / 16.0);
    }

    #[test]
    fn errors() {
        assert!(loss_primary(&[1.0], &[1.0, 2.0]).is_err());
        assert!(loss_primary(&[], &[]).is_err());
        assert!(loss_spatial(&[0.0; 35], &[0.0; 35]).is_err());
    }
}
