//! Loading, trimming, dihedral augmentation, grouped splitting and a
//! synthetic blur-graded dataset.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{LfError, Result};
use crate::features::{angular_features, spatial_features};
use crate::tensor::{LfShape, LfTensor};

/// Score, spatial (36) and angular (8) labels of one light field.
#[derive(Clone, Debug, PartialEq)]
pub struct QualityLabel {
    pub score: f64,
    pub spatial: Vec<f64>,
    pub angular: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LfiSource {
    Path(PathBuf),
    Tensor(LfTensor),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetEntry {
    /// Identifier shared by all augments of one source light field.
    pub source_id: usize,
    pub lfi: LfiSource,
    pub label: QualityLabel,
}

impl DatasetEntry {
    pub fn tensor(&self) -> Result<LfTensor> {
        match &self.lfi {
            LfiSource::Tensor(t) => Ok(t.clone()),
            LfiSource::Path(p) => LfTensor::load_lft(p),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    angular: [usize; 2],
    spatial: [usize; 2],
    channels: usize,
    subviews: Vec<String>,
}

/// Assembles a light field from a JSON manifest listing `U * V` subview
/// images in u-major order. Relative paths resolve against the manifest.
pub fn load_lfi(manifest_path: &Path) -> Result<LfTensor> {
    let text = fs::read_to_string(manifest_path).map_err(|e| LfError::io(manifest_path, e))?;
    let m: Manifest =
        serde_json::from_str(&text).map_err(|e| LfError::BadManifest(e.to_string()))?;
    let [u, v] = m.angular;
    let [x, y] = m.spatial;
    if !matches!(m.channels, 1 | 3) {
        return Err(LfError::BadManifest(format!(
            "unsupported channel count {}",
            m.channels
        )));
    }
    let shape =
        LfShape::new(u, v, x, y, m.channels).map_err(|e| LfError::BadManifest(e.to_string()))?;
    if m.subviews.len() != u * v {
        return Err(LfError::BadManifest(format!(
            "{} subviews listed for a {u}x{v} grid",
            m.subviews.len()
        )));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut data = vec![0.0; shape.len()];
    for (i, rel) in m.subviews.iter().enumerate() {
        let path = base.join(rel);
        if !path.is_file() {
            return Err(LfError::MissingSubview(path.display().to_string()));
        }
        let img = image::open(&path).map_err(|source| LfError::Image {
            path: path.clone(),
            source,
        })?;
        // Image rows are x, columns are y.
        let (cols, rows) = (img.width() as usize, img.height() as usize);
        if (rows, cols) != (x, y) {
            return Err(LfError::InconsistentSubviewSize {
                path: path.display().to_string(),
                rows: x,
                cols: y,
                got_rows: rows,
                got_cols: cols,
            });
        }
        let (iu, iv) = (i / v, i % v);
        let pixels: Vec<u8> = if m.channels == 3 {
            img.to_rgb8().into_raw()
        } else {
            img.to_luma8().into_raw()
        };
        let start = shape.offset(iu, iv, 0, 0, 0);
        for (d, &p) in data[start..start + x * y * m.channels]
            .iter_mut()
            .zip(&pixels)
        {
            *d = p as f64;
        }
    }
    LfTensor::create(shape, data)
}

/// Center crop in both the angular and spatial domains.
pub fn trim_reshape(lfi: &LfTensor, target: LfShape) -> Result<LfTensor> {
    let s = lfi.shape();
    if target.c != s.c {
        return Err(LfError::TargetTooLarge(format!(
            "channel count {} cannot become {}",
            s.c, target.c
        )));
    }
    if target.u > s.u || target.v > s.v || target.x > s.x || target.y > s.y {
        return Err(LfError::TargetTooLarge(format!(
            "{target} does not fit in {s}"
        )));
    }
    let off = |n: usize, t: usize| (n - t) / 2;
    let (ou, ov, ox, oy) = (
        off(s.u, target.u),
        off(s.v, target.v),
        off(s.x, target.x),
        off(s.y, target.y),
    );
    Ok(LfTensor::from_fn(target, |u, v, x, y, c| {
        lfi.at(u + ou, v + ov, x + ox, y + oy, c)
    }))
}

/// Rotates every subview by 90 degrees counter-clockwise and rotates the grid
/// of subviews the same way: `(u, v, x, y) <- (v, U-1-u, y, X-1-x)`.
pub fn rot90(lfi: &LfTensor) -> LfTensor {
    let s = lfi.shape();
    let out = LfShape {
        u: s.v,
        v: s.u,
        x: s.y,
        y: s.x,
        c: s.c,
    };
    LfTensor::from_fn(out, |u, v, x, y, c| {
        lfi.at(s.u - 1 - v, u, s.x - 1 - y, x, c)
    })
}

/// Vertical flip of every subview together with the subview grid.
pub fn vflip(lfi: &LfTensor) -> LfTensor {
    let s = lfi.shape();
    LfTensor::from_fn(s, |u, v, x, y, c| lfi.at(s.u - 1 - u, v, s.x - 1 - x, y, c))
}

/// The eight dihedral variants: rotations by 0, 90, 180 and 270 degrees, each
/// without and then with a vertical flip. The first variant is the input.
pub fn augment(lfi: &LfTensor) -> Vec<LfTensor> {
    let mut rotations = vec![lfi.clone()];
    for i in 0..3 {
        rotations.push(rot90(&rotations[i]));
    }
    rotations
        .into_iter()
        .flat_map(|r| {
            let f = vflip(&r);
            [r, f]
        })
        .collect()
}

/// Seeded split by source group: `floor(ratio * groups)` groups go to the
/// training segment, so augments of one source never straddle the split.
pub fn split<T: Clone>(
    entries: &[T],
    source_id: impl Fn(&T) -> usize,
    ratio: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(LfError::BadRatio(ratio));
    }
    if entries.is_empty() {
        return Err(LfError::EmptyDataset);
    }
    let mut groups: Vec<usize> = entries.iter().map(&source_id).collect();
    groups.sort_unstable();
    groups.dedup();
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (ratio * groups.len() as f64).floor() as usize;
    let train_ids: std::collections::HashSet<usize> = groups[..n_train].iter().copied().collect();
    let (train, test) = entries
        .iter()
        .cloned()
        .partition(|e| train_ids.contains(&source_id(e)));
    Ok((train, test))
}

/// Grouped split of dataset entries by `source_id`.
pub fn split_entries(
    entries: &[DatasetEntry],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<DatasetEntry>, Vec<DatasetEntry>)> {
    split(entries, |e| e.source_id, ratio, seed)
}

/// Score assigned to a blur strength in `[0, 3]`.
pub fn blur_score(b: f64) -> f64 {
    5.0 - b * 4.0 / 3.0
}

/// Separable Gaussian blur of every subview with replicated borders; `sigma`
/// of zero is the identity.
pub fn gaussian_blur(lfi: &LfTensor, sigma: f64) -> LfTensor {
    if sigma <= 0.0 {
        return lfi.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut w: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sum);
    let s = lfi.shape();
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let along_y = LfTensor::from_fn(s, |u, v, x, y, c| {
        w.iter()
            .enumerate()
            .map(|(k, wk)| wk * lfi.at(u, v, x, clamp(y as isize + k as isize - radius, s.y), c))
            .sum()
    });
    LfTensor::from_fn(s, |u, v, x, y, c| {
        w.iter()
            .enumerate()
            .map(|(k, wk)| {
                wk * along_y.at(u, v, clamp(x as isize + k as isize - radius, s.x), y, c)
            })
            .sum()
    })
}

/// Procedural scene: a colour gradient, two sinusoids and seeded noise,
/// shifted per subview by a disparity proportional to the angular offset.
fn synth_scene(shape: LfShape, rng: &mut ChaCha8Rng) -> LfTensor {
    let disparity: f64 = rng.random_range(-1.5..1.5);
    // Angular frequencies for periods of roughly 5 to 20 pixels, so that blur
    // removes visible detail at any scale used here.
    let (f1, f2): (f64, f64) = (rng.random_range(0.3..1.2), rng.random_range(0.3..1.2));
    let (p1, p2): (f64, f64) = (
        rng.random_range(0.0..std::f64::consts::TAU),
        rng.random_range(0.0..std::f64::consts::TAU),
    );
    let tint: [f64; 3] = [
        rng.random_range(0.6..1.0),
        rng.random_range(0.6..1.0),
        rng.random_range(0.6..1.0),
    ];
    let gx: f64 = rng.random_range(-1.0..1.0);
    let gy: f64 = rng.random_range(-1.0..1.0);
    // Noise texture on a padded canvas so shifted views stay inside it.
    let pad = (disparity.abs() * shape.u.max(shape.v) as f64).ceil() as usize + 1;
    let (cw, ch) = (shape.x + 2 * pad, shape.y + 2 * pad);
    let noise: Vec<f64> = (0..cw * ch).map(|_| rng.random_range(-1.0..1.0)).collect();
    let cu = (shape.u as f64 - 1.0) / 2.0;
    let cv = (shape.v as f64 - 1.0) / 2.0;
    LfTensor::from_fn(shape, |u, v, x, y, c| {
        let sx = x as f64 + disparity * (u as f64 - cu);
        let sy = y as f64 + disparity * (v as f64 - cv);
        let nx = (sx.round() as isize + pad as isize).clamp(0, cw as isize - 1) as usize;
        let ny = (sy.round() as isize + pad as isize).clamp(0, ch as isize - 1) as usize;
        let base = 128.0
            + 40.0 * (gx * sx / shape.x as f64 + gy * sy / shape.y as f64)
            + 35.0 * (f1 * sx + p1).sin()
            + 25.0 * (f2 * sy + p2).cos()
            + 30.0 * noise[nx * ch + ny];
        (base * tint[c % 3]).clamp(0.0, 255.0)
    })
}

/// Distorted versions generated from each synthetic scene.
pub const LEVELS_PER_SCENE: usize = 4;

/// `n` synthetic light fields: `ceil(n / 4)` scenes, each rendered at up to
/// four seeded blur strengths `b` in `[0, 3]`. The score is `5 - 4b/3` and
/// the feature labels are measured on the degraded tensor. As in subjective
/// datasets, one reference scene appears at several distortion levels; each
/// distorted light field is its own source group.
pub fn synth_dataset(n: usize, shape: LfShape, seed: u64) -> Result<Vec<DatasetEntry>> {
    if n < 4 {
        return Err(LfError::BadConfig(format!(
            "synthetic datasets need at least 4 entries, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene_seeds: Vec<u64> = (0..n.div_ceil(LEVELS_PER_SCENE))
        .map(|_| rng.random())
        .collect();
    let blurs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=3.0)).collect();
    let scenes: Vec<LfTensor> = scene_seeds
        .par_iter()
        .map(|&s| synth_scene(shape, &mut ChaCha8Rng::seed_from_u64(s)))
        .collect();
    blurs
        .into_par_iter()
        .enumerate()
        .map(|(i, b)| {
            let scene_id = i / LEVELS_PER_SCENE;
            let lfi = gaussian_blur(&scenes[scene_id], b);
            let label = QualityLabel {
                score: blur_score(b),
                spatial: spatial_features(&lfi)?.values,
                angular: angular_features(&lfi)?.values,
            };
            Ok(DatasetEntry {
                source_id: i,
                lfi: LfiSource::Tensor(lfi),
                label,
            })
        })
        .collect()
}

/// Writes `lfi_XXXX.lft` tensors and `labels.csv` (`source_id,path,score`).
/// Feature labels go to `features.csv` so a reload needs no recomputation.
pub fn write_dataset(entries: &[DatasetEntry], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| LfError::io(dir, e))?;
    let mut labels = String::from("source_id,path,score\n");
    let mut feats = String::from("path,kind,values\n");
    for (i, e) in entries.iter().enumerate() {
        let name = format!("lfi_{i:04}.lft");
        e.tensor()?.save_lft(&dir.join(&name))?;
        labels.push_str(&format!("{},{},{}\n", e.source_id, name, e.label.score));
        for (kind, vals) in [("spatial", &e.label.spatial), ("angular", &e.label.angular)] {
            let joined: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
            feats.push_str(&format!("{name},{kind},{}\n", joined.join(" ")));
        }
    }
    write_file(&dir.join("labels.csv"), labels.as_bytes())?;
    write_file(&dir.join("features.csv"), feats.as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| LfError::io(path, e))?;
    f.write_all(bytes).map_err(|e| LfError::io(path, e))
}

/// Reads a dataset directory written by [`write_dataset`]. Feature labels
/// are taken from `features.csv` when present and computed otherwise.
pub fn read_dataset(dir: &Path) -> Result<Vec<DatasetEntry>> {
    let labels_path = dir.join("labels.csv");
    let text = fs::read_to_string(&labels_path).map_err(|e| LfError::io(&labels_path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some("source_id,path,score") {
        return Err(LfError::BadFormat(format!(
            "{}: unexpected header",
            labels_path.display()
        )));
    }
    let feats_path = dir.join("features.csv");
    let mut feats = std::collections::HashMap::new();
    if feats_path.is_file() {
        let ft = fs::read_to_string(&feats_path).map_err(|e| LfError::io(&feats_path, e))?;
        for line in ft.lines().skip(1) {
            let mut parts = line.splitn(3, ',');
            let (Some(name), Some(kind), Some(vals)) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(LfError::BadFormat(format!(
                    "{}: malformed line",
                    feats_path.display()
                )));
            };
            let values = vals
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| LfError::BadFormat(format!("{}: {e}", feats_path.display())))?;
            feats.insert((name.to_string(), kind.to_string()), values);
        }
    }
    let mut entries = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let parts: Vec<&str> = line.split(',').collect();
        let [id, name, score] = parts[..] else {
            return Err(LfError::BadFormat(format!(
                "{}: malformed line {line:?}",
                labels_path.display()
            )));
        };
        let parse_err = |e: String| LfError::BadFormat(format!("{}: {e}", labels_path.display()));
        let source_id = id
            .parse()
            .map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?;
        let score: f64 = score
            .parse()
            .map_err(|e: std::num::ParseFloatError| parse_err(e.to_string()))?;
        let path = dir.join(name);
        let (spatial, angular) = match (
            feats.remove(&(name.to_string(), "spatial".to_string())),
            feats.remove(&(name.to_string(), "angular".to_string())),
        ) {
            (Some(s), Some(a)) => (s, a),
            _ => {
                let t = LfTensor::load_lft(&path)?;
                (spatial_features(&t)?.values, angular_features(&t)?.values)
            }
        };
        entries.push(DatasetEntry {
            source_id,
            lfi: LfiSource::Path(path),
            label: QualityLabel {
                score,
                spatial,
                angular,
            },
        });
    }
    if entries.is_empty() {
        return Err(LfError::EmptyDataset);
    }
    Ok(entries)
}
