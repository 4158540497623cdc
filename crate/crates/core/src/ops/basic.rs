use crate::error::{LfError, Result};
use crate::tensor::{LfShape, LfTensor};

pub fn relu(input: &LfTensor) -> LfTensor {
    input.map(|v| v.max(0.0))
}

pub fn residual_add(a: &LfTensor, b: &LfTensor) -> Result<LfTensor> {
    a.axpby(1.0, b, 1.0)
}

/// Mean over `(u, v, x, y)` for each channel.
pub fn global_avg_pool(input: &LfTensor) -> LfTensor {
    LfTensor::from_vector(input.channel_stats().into_iter().map(|(m, _)| m).collect())
}

pub(crate) fn gap_backward(input_shape: LfShape, grad_out: &[f64]) -> LfTensor {
    let n = input_shape.positions() as f64;
    let per_pos: Vec<f64> = grad_out.iter().map(|g| g / n).collect();
    let mut data = Vec::with_capacity(input_shape.len());
    for _ in 0..input_shape.positions() {
        data.extend_from_slice(&per_pos);
    }
    LfTensor::from_parts(input_shape, data)
}

/// Affine map `out = bias + input * W` with `W` stored `[in][out]`.
pub fn dense(input: &[f64], weights: &[f64], bias: Option<&[f64]>) -> Result<Vec<f64>> {
    if input.is_empty() || !weights.len().is_multiple_of(input.len()) {
        return Err(LfError::ShapeMismatch(format!(
            "dense weights of length {} do not have {} rows",
            weights.len(),
            input.len()
        )));
    }
    let outputs = weights.len() / input.len();
    if let Some(b) = bias {
        if b.len() != outputs {
            return Err(LfError::ShapeMismatch(format!(
                "bias length {} != {outputs}",
                b.len()
            )));
        }
    }
    Ok(dense_counted(input, weights, bias, outputs, &mut 0).into_data())
}

pub(crate) fn dense_counted(
    input: &[f64],
    weights: &[f64],
    bias: Option<&[f64]>,
    outputs: usize,
    macs: &mut u64,
) -> LfTensor {
    let mut out = vec![0.0; outputs];
    for (&x, wrow) in input.iter().zip(weights.chunks_exact(outputs)) {
        for (o, &w) in out.iter_mut().zip(wrow) {
            *o += x * w;
        }
    }
    if let Some(b) = bias {
        for (o, &bv) in out.iter_mut().zip(b) {
            *o += bv;
        }
    }
    *macs += (input.len() * outputs) as u64;
    LfTensor::from_vector(out)
}

/// Returns `(grad_input, grad_weights, grad_bias)`.
pub(crate) fn dense_backward(
    input: &[f64],
    weights: &[f64],
    grad_out: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let outputs = grad_out.len();
    let mut gi = Vec::with_capacity(input.len());
    let mut gw = vec![0.0; weights.len()];
    for ((&x, wrow), gwrow) in input
        .iter()
        .zip(weights.chunks_exact(outputs))
        .zip(gw.chunks_exact_mut(outputs))
    {
        let mut acc = 0.0;
        for ((gwv, &w), &g) in gwrow.iter_mut().zip(wrow).zip(grad_out) {
            *gwv = x * g;
            acc += w * g;
        }
        gi.push(acc);
    }
    (gi, gw, grad_out.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elementwise_examples() {
        let t = LfTensor::from_vector(vec![-1.0, 2.0]);
        assert_eq!(relu(&t).data(), &[0.0, 2.0]);
        let z = LfTensor::zeros(t.shape());
        assert_eq!(residual_add(&t, &z).unwrap(), t);
        assert!(matches!(
            residual_add(&t, &LfTensor::zeros(LfShape::vector(3))),
            Err(LfError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn gap_of_constant() {
        let t = LfTensor::filled(LfShape::new(2, 3, 4, 5, 2).unwrap(), 5.0);
        assert_eq!(global_avg_pool(&t).data(), &[5.0, 5.0]);
    }

    #[test]
    fn dense_affine() {
        // [1, 2] * [[1, 0, 2], [3, 1, 0]] + [0.5, 0, -1]
        let out = dense(
            &[1.0, 2.0],
            &[1.0, 0.0, 2.0, 3.0, 1.0, 0.0],
            Some(&[0.5, 0.0, -1.0]),
        )
        .unwrap();
        assert_eq!(out, vec![7.5, 2.0, 1.0]);
        assert!(dense(&[1.0, 2.0], &[1.0; 5], None).is_err());
        assert!(dense(&[1.0, 2.0], &[1.0; 4], Some(&[0.0])).is_err());
    }
}
