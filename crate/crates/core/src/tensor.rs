//! Dense 5-D light-field tensors.
//!
//! Values are stored row-major in `(u, v, x, y, c)` order: `u, v` index the
//! angular grid (which subview), `x, y` index pixels within a subview, and `c`
//! is the channel.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{LfError, Result};

/// Extents of a light-field tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LfShape {
    pub u: usize,
    pub v: usize,
    pub x: usize,
    pub y: usize,
    pub c: usize,
}

impl LfShape {
    pub fn new(u: usize, v: usize, x: usize, y: usize, c: usize) -> Result<Self> {
        let shape = LfShape { u, v, x, y, c };
        shape.validate()?;
        Ok(shape)
    }

    /// Shape used for plain vectors (dense layer activations).
    pub fn vector(len: usize) -> Self {
        LfShape {
            u: 1,
            v: 1,
            x: 1,
            y: 1,
            c: len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims().contains(&0) {
            return Err(LfError::BadShape(format!("{self} has a zero extent")));
        }
        self.dims()
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| LfError::BadShape(format!("{self} overflows usize")))?;
        Ok(())
    }

    pub fn dims(&self) -> [usize; 5] {
        [self.u, self.v, self.x, self.y, self.c]
    }

    pub fn len(&self) -> usize {
        self.u * self.v * self.x * self.y * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of positions `(u, v, x, y)`, i.e. elements per channel.
    pub fn positions(&self) -> usize {
        self.u * self.v * self.x * self.y
    }

    #[inline]
    pub fn offset(&self, u: usize, v: usize, x: usize, y: usize, c: usize) -> usize {
        (((u * self.v + v) * self.x + x) * self.y + y) * self.c + c
    }
}

impl fmt::Display for LfShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}x{}", self.u, self.v, self.x, self.y, self.c)
    }
}

/// A light field or any intermediate activation.
#[derive(Clone, Debug, PartialEq)]
pub struct LfTensor {
    shape: LfShape,
    data: Vec<f64>,
}

impl LfTensor {
    /// Builds a tensor, validating length and finiteness.
    pub fn create(shape: LfShape, data: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        if data.len() != shape.len() {
            return Err(LfError::LengthMismatch {
                expected: shape.len(),
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(LfError::NonFiniteValue(i));
        }
        Ok(LfTensor { shape, data })
    }

    /// Internal constructor for kernels whose outputs are finite by construction.
    pub(crate) fn from_parts(shape: LfShape, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.len(), data.len());
        LfTensor { shape, data }
    }

    pub fn zeros(shape: LfShape) -> Self {
        LfTensor {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn filled(shape: LfShape, value: f64) -> Self {
        LfTensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vector(values: Vec<f64>) -> Self {
        LfTensor {
            shape: LfShape::vector(values.len()),
            data: values,
        }
    }

    /// Fills a tensor from a function of its coordinates.
    pub fn from_fn(
        shape: LfShape,
        mut f: impl FnMut(usize, usize, usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for u in 0..shape.u {
            for v in 0..shape.v {
                for x in 0..shape.x {
                    for y in 0..shape.y {
                        for c in 0..shape.c {
                            data.push(f(u, v, x, y, c));
                        }
                    }
                }
            }
        }
        LfTensor { shape, data }
    }

    pub fn shape(&self) -> LfShape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.shape.offset(u, v, x, y, c)]
    }

    /// Row-major copy of the contents.
    pub fn flatten(&self) -> Vec<f64> {
        self.data.clone()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> LfTensor {
        LfTensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `alpha * self + beta * other`; shapes must agree.
    pub fn axpby(&self, alpha: f64, other: &LfTensor, beta: f64) -> Result<LfTensor> {
        if self.shape != other.shape {
            return Err(LfError::ShapeMismatch(format!(
                "{} vs {}",
                self.shape, other.shape
            )));
        }
        Ok(LfTensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        })
    }

    /// Swaps the angular axes and the spatial axes together: `(u,v,x,y) -> (v,u,y,x)`.
    pub fn transpose_uv(&self) -> LfTensor {
        let s = self.shape;
        let out_shape = LfShape {
            u: s.v,
            v: s.u,
            x: s.y,
            y: s.x,
            c: s.c,
        };
        LfTensor::from_fn(out_shape, |u, v, x, y, c| self.at(v, u, y, x, c))
    }

    /// Per-channel mean and population standard deviation over `(u, v, x, y)`.
    pub fn channel_stats(&self) -> Vec<(f64, f64)> {
        let c = self.shape.c;
        let n = self.shape.positions() as f64;
        let mut mean = vec![0.0; c];
        for px in self.data.chunks_exact(c) {
            for (m, &v) in mean.iter_mut().zip(px) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; c];
        for px in self.data.chunks_exact(c) {
            for ((s, &m), &v) in var.iter_mut().zip(&mean).zip(px) {
                *s += (v - m) * (v - m);
            }
        }
        mean.into_iter()
            .zip(var)
            .map(|(m, s)| (m, (s / n).sqrt()))
            .collect()
    }

    /// Input normalization: `(p - mean) / (std + 1)` with statistics taken per
    /// channel over the whole light field.
    pub fn normalize(&self) -> LfTensor {
        let stats = self.channel_stats();
        let c = self.shape.c;
        let mut data = self.data.clone();
        for px in data.chunks_exact_mut(c) {
            for (v, &(m, s)) in px.iter_mut().zip(&stats) {
                *v = (*v - m) / (s + 1.0);
            }
        }
        LfTensor {
            shape: self.shape,
            data,
        }
    }

    /// Extracts one channel of subview `(u, v)` as a row-major `x * y` plane.
    pub fn subview_plane(&self, u: usize, v: usize, c: usize) -> Vec<f64> {
        let s = self.shape;
        let mut out = Vec::with_capacity(s.x * s.y);
        for x in 0..s.x {
            for y in 0..s.y {
                out.push(self.at(u, v, x, y, c));
            }
        }
        out
    }

    pub fn write_lft<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(LFT_MAGIC)?;
        for d in self.shape.dims() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for &v in &self.data {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn read_lft<R: Read>(mut r: R) -> Result<LfTensor> {
        let fmt_err = |e: std::io::Error| LfError::BadFormat(format!("LFT1: {e}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(fmt_err)?;
        if &magic != LFT_MAGIC {
            return Err(LfError::BadFormat("missing LFT1 magic".into()));
        }
        let mut dims = [0usize; 5];
        for d in dims.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(fmt_err)?;
            *d = u32::from_le_bytes(b) as usize;
        }
        let shape = LfShape::new(dims[0], dims[1], dims[2], dims[3], dims[4])?;
        let mut bytes = vec![0u8; shape.len() * 4];
        r.read_exact(&mut bytes).map_err(fmt_err)?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest).map_err(fmt_err)?;
        if !rest.is_empty() {
            return Err(LfError::BadFormat(format!(
                "LFT1: {} trailing bytes",
                rest.len()
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        LfTensor::create(shape, data)
    }

    pub fn save_lft(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| LfError::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_lft(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| LfError::io(path, e))
    }

    pub fn load_lft(path: &Path) -> Result<LfTensor> {
        let f = std::fs::File::open(path).map_err(|e| LfError::io(path, e))?;
        LfTensor::read_lft(std::io::BufReader::new(f))
    }
}

const LFT_MAGIC: &[u8; 4] = b"LFT1";

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn shape(u: usize, v: usize, x: usize, y: usize, c: usize) -> LfShape {
        LfShape::new(u, v, x, y, c).unwrap()
    }

    #[test]
    fn row_major_layout() {
        let t = LfTensor::create(shape(1, 1, 2, 2, 1), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.at(0, 0, 1, 0, 0), 3.0);
        let t = LfTensor::create(shape(2, 1, 1, 1, 1), vec![5.0, 6.0]).unwrap();
        assert_eq!(t.at(1, 0, 0, 0, 0), 6.0);
    }

    #[test]
    fn create_rejects_bad_input() {
        assert!(matches!(
            LfTensor::create(shape(1, 1, 2, 2, 1), vec![1.0, 2.0, 3.0]),
            Err(LfError::LengthMismatch {
                expected: 4,
                got: 3
            })
        ));
        assert!(matches!(
            LfTensor::create(shape(1, 1, 1, 2, 1), vec![1.0, f64::NAN]),
            Err(LfError::NonFiniteValue(1))
        ));
        assert!(LfShape::new(1, 0, 1, 1, 1).is_err());
    }

    #[test]
    fn flatten_lengths() {
        assert_eq!(shape(7, 7, 3, 3, 1024).len(), 451_584);
        assert_eq!(LfTensor::zeros(shape(1, 1, 1, 1, 1)).flatten().len(), 1);
        assert_eq!(LfTensor::zeros(shape(2, 2, 2, 2, 3)).flatten().len(), 48);
    }

    #[test]
    fn normalize_examples() {
        let t = LfTensor::filled(shape(2, 2, 3, 3, 3), 7.0);
        assert!(t.normalize().data().iter().all(|&v| v == 0.0));

        let t = LfTensor::create(shape(1, 1, 1, 2, 1), vec![1.0, 3.0]).unwrap();
        assert_eq!(t.normalize().data(), &[-0.5, 0.5]);

        let t = LfTensor::from_fn(
            shape(1, 2, 2, 2, 2),
            |_, _, _, _, c| if c == 0 { 0.0 } else { 9.0 },
        );
        assert!(t.normalize().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalize_zero_channel_mean() {
        let t = LfTensor::from_fn(shape(2, 3, 4, 5, 3), |u, v, x, y, c| {
            ((u * 31 + v * 17 + x * 7 + y * 3 + c * 11) % 23) as f64 * 1.7 - 4.0
        });
        for (m, _) in t.normalize().channel_stats() {
            assert!(m.abs() < 1e-12, "{m}");
        }
    }

    #[test]
    fn lft_round_trip() {
        let t = LfTensor::from_fn(shape(2, 2, 3, 4, 3), |u, v, x, y, c| {
            (u + 2 * v + 3 * x + 5 * y + 7 * c) as f64
        });
        let mut buf = Vec::new();
        t.write_lft(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"LFT1");
        assert_eq!(buf.len(), 4 + 20 + t.shape().len() * 4);
        assert_eq!(LfTensor::read_lft(&buf[..]).unwrap(), t);
        buf.push(0);
        assert!(LfTensor::read_lft(&buf[..]).is_err());
    }

    #[test]
    fn transpose_is_involution() {
        let t = LfTensor::from_fn(shape(2, 3, 4, 5, 2), |u, v, x, y, c| {
            (u * 1000 + v * 100 + x * 10 + y) as f64 + c as f64 * 0.5
        });
        let tt = t.transpose_uv();
        assert_eq!(tt.shape(), shape(3, 2, 5, 4, 2));
        assert_eq!(tt.at(2, 1, 4, 3, 1), t.at(1, 2, 3, 4, 1));
        assert_eq!(tt.transpose_uv(), t);
    }

    proptest! {
        #[test]
        fn flatten_create_round_trip(
            dims in (1usize..4, 1usize..4, 1usize..5, 1usize..5, 1usize..4),
            seed in any::<u64>(),
        ) {
            let s = shape(dims.0, dims.1, dims.2, dims.3, dims.4);
            let data: Vec<f64> = (0..s.len())
                .map(|i| ((i as u64).wrapping_mul(6364136223846793005).wrapping_add(seed) >> 11) as f64 * 1e-10)
                .collect();
            let t = LfTensor::create(s, data.clone()).unwrap();
            prop_assert_eq!(t.flatten(), data);
        }
    }
}
