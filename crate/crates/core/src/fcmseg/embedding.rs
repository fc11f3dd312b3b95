//! Appearance embeddings for template-vs-segment comparison.
//!
//! The built-in embedding concatenates a 32-bin per-channel color histogram
//! with a 16-bin gradient-orientation histogram and L2-normalizes the result.
//! Stronger features (for example from a convolutional network) can be
//! supplied through a sidecar text file.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::imgproc::{self, HIST_BINS};
use crate::types::{BBox, ColorPatch};

pub const ORIENTATION_BINS: usize = 16;
pub const HANDCRAFTED_DIM: usize = 3 * HIST_BINS + ORIENTATION_BINS;

/// Box tolerance, in pixels, when matching sidecar records.
pub const SIDECAR_TOLERANCE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub values: Vec<f64>,
    /// Set when the vector has zero norm and cannot be compared.
    pub degenerate: bool,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Self {
        let degenerate = values.iter().all(|&v| v == 0.0);
        Self { values, degenerate }
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Cosine of the angle between two feature vectors. `None` when the
/// dimensions differ or either vector is zero.
pub fn cosine_similarity(t: &Embedding, s: &Embedding) -> Option<f64> {
    if t.values.len() != s.values.len() || t.values.is_empty() {
        return None;
    }
    let (nt, ns) = (t.norm(), s.norm());
    if nt == 0.0 || ns == 0.0 {
        return None;
    }
    let dot: f64 = t.values.iter().zip(&s.values).map(|(a, b)| a * b).sum();
    Some((dot / (nt * ns)).clamp(-1.0, 1.0))
}

/// Where a patch came from, for embedders that look features up.
#[derive(Debug, Clone, Copy)]
pub struct EmbedContext<'a> {
    pub sequence_id: &'a str,
    pub frame_index: usize,
    /// Patch box in full-resolution frame coordinates.
    pub bbox: BBox,
}

pub trait Embedder: Send + Sync {
    fn embed(&self, ctx: &EmbedContext<'_>, patch: &ColorPatch) -> Embedding;
}

/// Which embedder a tracker should use.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum EmbeddingKind {
    #[default]
    Handcrafted,
    ExternalFile(PathBuf),
}

impl EmbeddingKind {
    pub fn load(&self) -> Result<Box<dyn Embedder>, SidecarError> {
        Ok(match self {
            EmbeddingKind::Handcrafted => Box::new(HandcraftedEmbedder),
            EmbeddingKind::ExternalFile(p) => Box::new(SidecarEmbedder::load(p)?),
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HandcraftedEmbedder;

impl Embedder for HandcraftedEmbedder {
    fn embed(&self, _ctx: &EmbedContext<'_>, patch: &ColorPatch) -> Embedding {
        embed(patch)
    }
}

/// Color + gradient-orientation descriptor, L2-normalized, 112 values.
pub fn embed(patch: &ColorPatch) -> Embedding {
    let mut v = vec![0.0; HANDCRAFTED_DIM];
    let n = patch.pixel_count();
    if n == 0 {
        return Embedding {
            values: v,
            degenerate: true,
        };
    }
    if let Ok(h) = imgproc::histogram(patch, HIST_BINS) {
        for (dst, src) in v.iter_mut().zip(&h.bins) {
            *dst = src / n as f64;
        }
    }
    let gray = imgproc::patch_to_gray(patch);
    if let Ok((gx, gy)) = imgproc::sobel_gradients(&gray) {
        let block = &mut v[3 * HIST_BINS..];
        let mut total = 0.0;
        for (&dx, &dy) in gx.data.iter().zip(&gy.data) {
            let mag = (dx as f64).hypot(dy as f64);
            if mag == 0.0 {
                continue;
            }
            let ang = (dy as f64).atan2(dx as f64) + std::f64::consts::PI;
            let bin = ((ang / std::f64::consts::TAU) * ORIENTATION_BINS as f64) as usize % ORIENTATION_BINS;
            block[bin] += mag;
            total += mag;
        }
        if total > 0.0 {
            block.iter_mut().for_each(|b| *b /= total);
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Embedding {
            values: v,
            degenerate: true,
        };
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Embedding {
        values: v,
        degenerate: false,
    }
}

#[derive(Debug, Error)]
pub enum SidecarError {
    #[error("cannot read embedding file {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("embedding file line {line}: {msg}")]
    Malformed { line: usize, msg: String },
}

type Record = (BBox, Vec<f64>);

/// Precomputed feature vectors keyed by sequence, frame and box. Patches with
/// no matching record fall back to the handcrafted descriptor.
#[derive(Debug, Clone, Default)]
pub struct SidecarEmbedder {
    records: HashMap<(String, usize), Vec<Record>>,
    dimension: Option<usize>,
}

impl SidecarEmbedder {
    pub fn load(path: &Path) -> Result<Self, SidecarError> {
        let text = fs::read_to_string(path).map_err(|source| SidecarError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Parses `sequence_id,frame_index,cx,cy,w,h,v1 v2 ... vD` lines.
    pub fn parse(text: &str) -> Result<Self, SidecarError> {
        let mut out = SidecarEmbedder::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| SidecarError::Malformed {
                line: i + 1,
                msg: msg.to_string(),
            };
            let fields: Vec<&str> = line.splitn(7, ',').collect();
            if fields.len() != 7 {
                return Err(bad("expected 7 comma-separated fields"));
            }
            let frame: usize = fields[1].trim().parse().map_err(|_| bad("bad frame index"))?;
            let mut nums = [0.0; 4];
            for (k, f) in fields[2..6].iter().enumerate() {
                nums[k] = f.trim().parse().map_err(|_| bad("bad box value"))?;
            }
            if !(nums[2] > 0.0 && nums[3] > 0.0) {
                return Err(bad("box sides must be positive"));
            }
            let vec: Vec<f64> = fields[6]
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| bad("bad vector component"))?;
            if vec.is_empty() {
                return Err(bad("empty vector"));
            }
            match out.dimension {
                Some(d) if d != vec.len() => {
                    return Err(bad(&format!("vector has {} values, file uses {d}", vec.len())))
                }
                _ => out.dimension = Some(vec.len()),
            }
            out.records
                .entry((fields[0].trim().to_string(), frame))
                .or_default()
                .push((BBox::new(nums[0], nums[1], nums[2], nums[3]), vec));
        }
        Ok(out)
    }

    pub fn dimension(&self) -> Option<usize> {
        self.dimension
    }

    pub fn lookup(&self, sequence_id: &str, frame_index: usize, b: &BBox) -> Option<&[f64]> {
        let close = |a: f64, c: f64| (a - c).abs() <= SIDECAR_TOLERANCE;
        self.records
            .get(&(sequence_id.to_string(), frame_index))?
            .iter()
            .find(|(r, _)| close(r.cx, b.cx) && close(r.cy, b.cy) && close(r.w, b.w) && close(r.h, b.h))
            .map(|(_, v)| v.as_slice())
    }
}

impl Embedder for SidecarEmbedder {
    fn embed(&self, ctx: &EmbedContext<'_>, patch: &ColorPatch) -> Embedding {
        match self.lookup(ctx.sequence_id, ctx.frame_index, &ctx.bbox) {
            Some(v) => Embedding::new(v.to_vec()),
            None => embed(patch),
        }
    }
}
