//! "ALAS" checkpoints.
//!
//! Layout (all integers u32 little-endian):
//! magic `ALAS`, version, layer count, then per layer: section, kind tag,
//! angular, kernel, in_ch, out_ch, stride, skip (`u32::MAX` for none),
//! weight count, f32 weights, bias count (`u32::MAX` for none), f32 biases.
//! A trailing metadata block `META` holds lambda and dropout (f64), the
//! scale tag, the input shape, the block table and optional label statistics
//! (f64, so denormalized predictions survive a round trip unchanged).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{BlockInfo, BlockKind, ModelSpec, Scale, Section};
use crate::error::{LfError, Result};
use crate::features::LabelStats;
use crate::ops::{LayerKind, LayerSpec};
use crate::tensor::LfShape;

const MAGIC: &[u8; 4] = b"ALAS";
const META: &[u8; 4] = b"META";
const VERSION: u32 = 1;
const NONE: u32 = u32::MAX;
const SECTIONS: [Section; 4] = [
    Section::Trunk,
    Section::Primary,
    Section::Spatial,
    Section::Angular,
];

fn bad(msg: impl Into<String>) -> LfError {
    LfError::BadFormat(msg.into())
}

fn dim(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| bad(format!("dimension {n} does not fit in u32")))
}

struct Writer<W: Write> {
    w: W,
}

impl<W: Write> Writer<W> {
    fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.w.write_all(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.w.write_all(&v.to_le_bytes())
    }
    fn f32s(&mut self, v: &[f64]) -> std::io::Result<()> {
        for &x in v {
            self.w.write_all(&(x as f32).to_le_bytes())?;
        }
        Ok(())
    }
    fn f64s(&mut self, v: &[f64]) -> std::io::Result<()> {
        self.u32(v.len() as u32)?;
        v.iter().try_for_each(|&x| self.f64(x))
    }
}

/// Serializes a model. Parameters are stored as f32.
pub fn write_checkpoint<W: Write>(model: &ModelSpec, w: W) -> Result<()> {
    model.output_shapes()?;
    let mut layers = Vec::new();
    for section in SECTIONS {
        for layer in model.section(section) {
            layers.push((section, layer));
        }
    }
    // Check everything fits before writing anything.
    for (_, l) in &layers {
        for n in [
            l.angular,
            l.kernel,
            l.in_ch,
            l.out_ch,
            l.stride,
            l.weights.len(),
        ] {
            dim(n)?;
        }
    }
    let mut out = Writer { w };
    let wrap = |e: std::io::Error| LfError::io(Path::new("<checkpoint>"), e);
    (|| -> std::io::Result<()> {
        out.w.write_all(MAGIC)?;
        out.u32(VERSION)?;
        out.u32(layers.len() as u32)?;
        for (section, l) in &layers {
            out.u32(SECTIONS.iter().position(|s| s == section).unwrap() as u32)?;
            out.u32(l.kind.tag())?;
            for n in [l.angular, l.kernel, l.in_ch, l.out_ch, l.stride] {
                out.u32(n as u32)?;
            }
            out.u32(l.skip.map_or(NONE, |s| s as u32))?;
            out.u32(l.weights.len() as u32)?;
            out.f32s(&l.weights)?;
            match &l.bias {
                Some(b) => {
                    out.u32(b.len() as u32)?;
                    out.f32s(b)?;
                }
                None => out.u32(NONE)?,
            }
        }
        out.w.write_all(META)?;
        out.f64(model.lambda)?;
        out.f64(model.dropout)?;
        out.u32(model.scale.tag())?;
        for d in model.input_shape.dims() {
            out.u32(d as u32)?;
        }
        out.u32(model.blocks.len() as u32)?;
        for b in &model.blocks {
            out.u32(b.kind.tag())?;
            out.u32(b.first_layer as u32)?;
            out.u32(b.label.len() as u32)?;
            out.w.write_all(b.label.as_bytes())?;
        }
        match &model.label_stats {
            Some((s, a)) => {
                out.u32(1)?;
                for st in [s, a] {
                    out.f64s(&st.mean)?;
                    out.f64s(&st.std)?;
                }
            }
            None => out.u32(0)?,
        }
        out.w.flush()
    })()
    .map_err(wrap)
}

struct Reader<R: Read> {
    r: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.r
            .read_exact(&mut b)
            .map_err(|_| bad("unexpected end of checkpoint"))?;
        Ok(b)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        // Cap the reservation so a corrupt count cannot trigger a huge allocation.
        let mut v = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            v.push(f32::from_le_bytes(self.bytes()?) as f64);
        }
        Ok(v)
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.usize()?;
        let mut v = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            v.push(self.f64()?);
        }
        Ok(v)
    }
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<ModelSpec> {
    let mut rd = Reader { r };
    if &rd.bytes::<4>()? != MAGIC {
        return Err(bad("not an ALAS checkpoint"));
    }
    let version = rd.u32()?;
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let count = rd.usize()?;
    let mut sections: [Vec<LayerSpec>; 4] = Default::default();
    let mut last_section = 0;
    for i in 0..count {
        let section = rd.usize()?;
        if section >= 4 || section < last_section {
            return Err(bad(format!("layer {i}: bad section tag {section}")));
        }
        last_section = section;
        let tag = rd.u32()?;
        let kind = LayerKind::from_tag(tag)
            .ok_or_else(|| bad(format!("layer {i}: unknown kind tag {tag}")))?;
        let [angular, kernel, in_ch, out_ch, stride] = [
            rd.usize()?,
            rd.usize()?,
            rd.usize()?,
            rd.usize()?,
            rd.usize()?,
        ];
        let skip = match rd.u32()? {
            NONE => None,
            s => Some(s as usize),
        };
        let nw = rd.usize()?;
        let weights = rd.f32s(nw)?;
        let bias = match rd.u32()? {
            NONE => None,
            nb => Some(rd.f32s(nb as usize)?),
        };
        sections[section].push(LayerSpec {
            kind,
            angular,
            kernel,
            in_ch,
            out_ch,
            stride,
            weights,
            bias,
            skip,
        });
    }
    if &rd.bytes::<4>()? != META {
        return Err(bad("missing metadata block"));
    }
    let lambda = rd.f64()?;
    let dropout = rd.f64()?;
    let scale_tag = rd.u32()?;
    let scale =
        Scale::from_tag(scale_tag).ok_or_else(|| bad(format!("unknown scale tag {scale_tag}")))?;
    let input_shape = LfShape::new(
        rd.usize()?,
        rd.usize()?,
        rd.usize()?,
        rd.usize()?,
        rd.usize()?,
    )
    .map_err(|e| bad(format!("input shape: {e}")))?;
    let nblocks = rd.usize()?;
    let mut blocks = Vec::with_capacity(nblocks.min(1024));
    for _ in 0..nblocks {
        let tag = rd.u32()?;
        let kind =
            BlockKind::from_tag(tag).ok_or_else(|| bad(format!("unknown block tag {tag}")))?;
        let first_layer = rd.usize()?;
        let len = rd.usize()?;
        let mut label = vec![0u8; len.min(1 << 16)];
        if len > label.len() {
            return Err(bad("block label too long"));
        }
        rd.r.read_exact(&mut label)
            .map_err(|_| bad("unexpected end of checkpoint"))?;
        let label = String::from_utf8(label).map_err(|_| bad("block label is not UTF-8"))?;
        blocks.push(BlockInfo {
            label,
            kind,
            first_layer,
        });
    }
    let label_stats = match rd.u32()? {
        0 => None,
        1 => {
            let mut st = || -> Result<LabelStats> {
                Ok(LabelStats {
                    mean: rd.f64s()?,
                    std: rd.f64s()?,
                })
            };
            Some((st()?, st()?))
        }
        other => return Err(bad(format!("bad label-stats flag {other}"))),
    };
    let mut trailing = [0u8; 1];
    if rd
        .r
        .read(&mut trailing)
        .map_err(|e| LfError::io(Path::new("<checkpoint>"), e))?
        != 0
    {
        return Err(bad("trailing bytes after checkpoint"));
    }
    let [trunk, primary, spatial, angular] = sections;
    let model = ModelSpec {
        input_shape,
        trunk,
        primary,
        spatial,
        angular,
        lambda,
        dropout,
        scale,
        blocks,
        label_stats,
    };
    model
        .output_shapes()
        .map_err(|e| bad(format!("checkpoint describes an invalid model: {e}")))?;
    Ok(model)
}

pub fn save_checkpoint(model: &ModelSpec, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| LfError::io(path, e))?;
    write_checkpoint(model, BufWriter::new(f))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelSpec> {
    let f = File::open(path).map_err(|e| LfError::io(path, e))?;
    read_checkpoint(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_alas_dads, TINY_INPUT};
    use crate::tensor::LfTensor;

    #[test]
    fn round_trip_is_exact_for_f32_weights() {
        let mut m = build_alas_dads(TINY_INPUT, Scale::Tiny, 5).unwrap();
        m.round_to_f32();
        m.label_stats = Some((
            LabelStats {
                mean: vec![0.1; 36],
                std: vec![0.3; 36],
            },
            LabelStats {
                mean: vec![-0.2; 8],
                std: vec![1.7; 8],
            },
        ));
        let mut bytes = Vec::new();
        write_checkpoint(&m, &mut bytes).unwrap();
        let back = read_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(back, m);
        let mut again = Vec::new();
        write_checkpoint(&back, &mut again).unwrap();
        assert_eq!(bytes, again);
        let x = LfTensor::from_fn(TINY_INPUT, |u, v, x, y, c| {
            ((u * 7 + v + x * y + c) % 13) as f64
        });
        assert_eq!(m.predict(&x).unwrap(), back.predict(&x).unwrap());
    }

    #[test]
    fn rejects_corruption() {
        let m = build_alas_dads(TINY_INPUT, Scale::Tiny, 5).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&m, &mut bytes).unwrap();
        assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(read_checkpoint(extra.as_slice()).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(
            read_checkpoint(magic.as_slice()),
            Err(LfError::BadFormat(_))
        ));
        // corrupt the first layer's kind tag
        let mut kind = bytes;
        kind[16..20].copy_from_slice(&99u32.to_le_bytes());
        assert!(read_checkpoint(kind.as_slice()).is_err());
    }
}
