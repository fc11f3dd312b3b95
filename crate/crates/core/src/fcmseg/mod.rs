//! Object segmentation of the search area with spatially weighted fuzzy C-means,
//! followed by morphological cleanup, connected-component candidates and
//! embedding-based selection of the segment that looks most like the template.

pub mod embedding;

use std::collections::VecDeque;

use thiserror::Error;

use crate::imgproc::{self, Mask, PixelRect};
use crate::types::{BBox, GrayPlane, Plane, PointF};

pub use embedding::{cosine_similarity, embed, EmbedContext, Embedder, Embedding, EmbeddingKind, HandcraftedEmbedder, SidecarEmbedder};

#[derive(Debug, Clone, PartialEq)]
pub struct FcmConfig {
    pub clusters: usize,
    /// Fuzzifier `m > 1`.
    pub fuzzifier: f64,
    pub max_iters: usize,
    /// Convergence threshold on the largest membership change.
    pub tol: f64,
    /// Odd side of the neighbourhood used by the spatial term.
    pub spatial_window: usize,
    /// Exponent on the (hesitation-adjusted) membership.
    pub p: f64,
    /// Exponent on the spatial term.
    pub q: f64,
    /// Yager generator parameter; `None` disables the hesitation adjustment.
    pub hesitation_lambda: Option<f64>,
    /// Search area side relative to the previous box.
    pub search_expand: f64,
    /// Components smaller than this fraction of the template area are dropped.
    pub min_area_frac: f64,
    /// Overrides the tracker's similarity threshold for segment selection.
    pub min_similarity: Option<f64>,
}

impl Default for FcmConfig {
    fn default() -> Self {
        Self {
            clusters: 3,
            fuzzifier: 2.0,
            max_iters: 100,
            tol: 1e-5,
            spatial_window: 5,
            p: 1.0,
            q: 1.0,
            hesitation_lambda: Some(0.85),
            search_expand: 2.0,
            min_area_frac: 0.1,
            min_similarity: None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FcmError {
    #[error("need at least 2 clusters, got {0}")]
    TooFewClusters(usize),
    #[error("fuzzifier must exceed 1, got {0}")]
    BadFuzzifier(f64),
    #[error("exponents p and q must be non-negative")]
    BadExponent,
    #[error("hesitation parameter must be positive, got {0}")]
    BadLambda(f64),
    #[error("spatial window must be odd, got {0}")]
    BadWindow(usize),
    #[error("search patch has {pixels} pixels, need at least {needed}")]
    PatchTooSmall { pixels: usize, needed: usize },
    #[error("expected {expected} initial centers, got {got}")]
    CenterCount { expected: usize, got: usize },
}

impl FcmConfig {
    pub fn validate(&self) -> Result<(), FcmError> {
        if self.clusters < 2 {
            return Err(FcmError::TooFewClusters(self.clusters));
        }
        if !(self.fuzzifier > 1.0) {
            return Err(FcmError::BadFuzzifier(self.fuzzifier));
        }
        if !(self.p >= 0.0 && self.q >= 0.0) {
            return Err(FcmError::BadExponent);
        }
        if let Some(l) = self.hesitation_lambda {
            if !(l > 0.0) {
                return Err(FcmError::BadLambda(l));
            }
        }
        if self.spatial_window.is_multiple_of(2) {
            return Err(FcmError::BadWindow(self.spatial_window));
        }
        Ok(())
    }
}

/// Outcome of one clustering run over a `width × height` patch.
#[derive(Debug, Clone, PartialEq)]
pub struct FcmResult {
    pub width: usize,
    pub height: usize,
    pub clusters: usize,
    /// Cluster-major: `membership[k * n + j]` for cluster `k`, pixel `j`.
    pub membership: Vec<f64>,
    pub centers: Vec<f64>,
    pub labels: Vec<usize>,
    pub iterations: usize,
}

impl FcmResult {
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn membership_of(&self, cluster: usize, pixel: usize) -> f64 {
        self.membership[cluster * self.pixel_count() + pixel]
    }

    pub fn cluster_mask(&self, cluster: usize) -> Mask {
        Plane::from_vec(self.width, self.height, self.labels.iter().map(|&l| l == cluster).collect())
    }
}

/// Clusters the intensities of a grayscale patch.
pub fn fcm_cluster(patch: &GrayPlane, cfg: &FcmConfig) -> Result<FcmResult, FcmError> {
    let values: Vec<f64> = patch.data.iter().map(|&v| v as f64).collect();
    fcm_cluster_values(&values, patch.width, patch.height, cfg, None, |_, _| {})
}

/// Evenly spaced quantiles `(k + 0.5) / c` of the values.
pub fn quantile_centers(values: &[f64], c: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    (0..c)
        .map(|k| {
            let idx = (((k as f64 + 0.5) / c as f64) * n as f64).floor() as usize;
            sorted[idx.min(n - 1)]
        })
        .collect()
}

/// Clusters an arbitrary scalar field. `init_centers` overrides the quantile
/// initialization; `hook` sees every iteration's normalized memberships.
pub fn fcm_cluster_values<F>(
    values: &[f64],
    width: usize,
    height: usize,
    cfg: &FcmConfig,
    init_centers: Option<&[f64]>,
    mut hook: F,
) -> Result<FcmResult, FcmError>
where
    F: FnMut(usize, &[f64]),
{
    cfg.validate()?;
    let n = width * height;
    assert_eq!(values.len(), n, "value buffer does not match patch size");
    let needed = (cfg.spatial_window * cfg.spatial_window).max(cfg.clusters);
    if n < needed {
        return Err(FcmError::PatchTooSmall { pixels: n, needed });
    }
    let c = cfg.clusters;
    let mut centers = match init_centers {
        Some(v) if v.len() != c => {
            return Err(FcmError::CenterCount {
                expected: c,
                got: v.len(),
            })
        }
        Some(v) => v.to_vec(),
        None => quantile_centers(values, c),
    };

    let mut distinct = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let d = distinct.len();
    let value_idx: Vec<u32> = values
        .iter()
        .map(|v| distinct.binary_search_by(|p| p.total_cmp(v)).expect("value present") as u32)
        .collect();
    let mut lut = vec![0.0; c * d];

    let exponent = 2.0 / (cfg.fuzzifier - 1.0);
    let use_spatial = cfg.q != 0.0;
    let mut u = vec![0.0; c * n];
    let mut msh = vec![0.0; c * n];
    let mut prev: Option<Vec<f64>> = None;
    let mut spatial = vec![0.0; if use_spatial { c * n } else { 0 }];
    let mut iterations = 0;

    for it in 0..cfg.max_iters.max(1) {
        iterations = it + 1;
        // memberships depend on the value only, so work per distinct value
        plain_memberships(&distinct, &centers, exponent, &mut lut);
        if let Some(lambda) = cfg.hesitation_lambda {
            add_hesitation(&mut lut, c, d, lambda);
        }
        for k in 0..c {
            let row = &lut[k * d..(k + 1) * d];
            for (dst, &i) in u[k * n..(k + 1) * n].iter_mut().zip(&value_idx) {
                *dst = row[i as usize];
            }
        }
        if use_spatial {
            for k in 0..c {
                window_sum(&u[k * n..(k + 1) * n], width, height, cfg.spatial_window / 2, &mut spatial[k * n..(k + 1) * n]);
            }
        }
        for j in 0..n {
            let mut total = 0.0;
            for k in 0..c {
                let mut v = pow_fast(u[k * n + j], cfg.p);
                if use_spatial {
                    v *= pow_fast(spatial[k * n + j], cfg.q);
                }
                msh[k * n + j] = v;
                total += v;
            }
            if total > 0.0 {
                for k in 0..c {
                    msh[k * n + j] /= total;
                }
            } else {
                for k in 0..c {
                    msh[k * n + j] = u[k * n + j];
                }
            }
        }
        hook(it, &msh);

        let delta = match &prev {
            Some(p) => p.iter().zip(&msh).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
            None => f64::INFINITY,
        };
        update_centers(values, &msh, cfg.fuzzifier, &mut centers);
        match prev.as_mut() {
            Some(p) => p.copy_from_slice(&msh),
            None => prev = Some(msh.clone()),
        }
        if delta < cfg.tol {
            break;
        }
    }

    let labels = (0..n)
        .map(|j| {
            let mut best = 0;
            for k in 1..c {
                if msh[k * n + j] > msh[best * n + j] {
                    best = k;
                }
            }
            best
        })
        .collect();
    Ok(FcmResult {
        width,
        height,
        clusters: c,
        membership: msh,
        centers,
        labels,
        iterations,
    })
}

#[inline]
fn pow_fast(x: f64, e: f64) -> f64 {
    if e == 1.0 {
        x
    } else if e == 0.0 {
        1.0
    } else if e == 2.0 {
        x * x
    } else {
        x.powf(e)
    }
}

/// Standard membership `1 / Σ_l (d_k / d_l)^(2/(m-1))`; a pixel sitting on a
/// center belongs to it fully.
fn plain_memberships(values: &[f64], centers: &[f64], exponent: f64, u: &mut [f64]) {
    let n = values.len();
    let c = centers.len();
    let mut inv = vec![0.0; c];
    for (j, &x) in values.iter().enumerate() {
        if let Some(hit) = centers.iter().position(|&v| v == x) {
            for k in 0..c {
                u[k * n + j] = if k == hit { 1.0 } else { 0.0 };
            }
            continue;
        }
        // u_k = d_k^-e / Σ d_l^-e with e = 2/(m-1)
        let mut total = 0.0;
        for k in 0..c {
            let d = (x - centers[k]).abs();
            inv[k] = pow_fast(d, -exponent);
            total += inv[k];
        }
        for k in 0..c {
            u[k * n + j] = inv[k] / total;
        }
    }
}

/// Adds the Yager hesitation degree `π = 1 − u − (1 − u^λ)^(1/λ)` and
/// renormalizes each pixel.
fn add_hesitation(u: &mut [f64], c: usize, n: usize, lambda: f64) {
    for j in 0..n {
        let mut total = 0.0;
        for k in 0..c {
            let m = u[k * n + j];
            let non_member = (1.0 - m.powf(lambda)).max(0.0).powf(1.0 / lambda);
            let adjusted = (1.0 - non_member).max(0.0);
            u[k * n + j] = adjusted;
            total += adjusted;
        }
        if total > 0.0 {
            for k in 0..c {
                u[k * n + j] /= total;
            }
        }
    }
}

/// Sum over the `(2r+1)²` neighbourhood, clipped at the borders.
fn window_sum(src: &[f64], w: usize, h: usize, r: usize, out: &mut [f64]) {
    let mut rows = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let mut acc: f64 = row[..(r + 1).min(w)].iter().sum();
        for x in 0..w {
            rows[y * w + x] = acc;
            if x + r + 1 < w {
                acc += row[x + r + 1];
            }
            if x >= r {
                acc -= row[x - r];
            }
        }
    }
    for x in 0..w {
        let mut acc = 0.0;
        for y in 0..(r + 1).min(h) {
            acc += rows[y * w + x];
        }
        for y in 0..h {
            out[y * w + x] = acc;
            if y + r + 1 < h {
                acc += rows[(y + r + 1) * w + x];
            }
            if y >= r {
                acc -= rows[(y - r) * w + x];
            }
        }
    }
}

fn update_centers(values: &[f64], msh: &[f64], m: f64, centers: &mut [f64]) {
    let n = values.len();
    for (k, center) in centers.iter_mut().enumerate() {
        let (mut num, mut den) = (0.0, 0.0);
        for (j, &x) in values.iter().enumerate() {
            let w = pow_fast(msh[k * n + j], m);
            num += w * x;
            den += w;
        }
        if den > 0.0 {
            *center = num / den;
        }
    }
}

/// Opening: one 3×3 erosion then one 3×3 dilation.
pub fn clean_mask(mask: &Mask) -> Mask {
    imgproc::dilate(&imgproc::erode(mask))
}

/// A connected region of one cluster, a candidate for the object.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSegment {
    pub cluster: usize,
    /// Mask cropped to `bbox`.
    pub mask: Mask,
    /// Tight box in frame coordinates.
    pub bbox: BBox,
    pub area: usize,
    pub embedding: Option<Embedding>,
    pub similarity: Option<f64>,
}

/// 4-connected components of a mask as lists of pixel indices.
pub fn connected_components(mask: &Mask) -> Vec<Vec<usize>> {
    let (w, h) = (mask.width, mask.height);
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.data[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        seen[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            comp.push(i);
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if mask.data[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        out.push(comp);
    }
    out
}

/// Cleaned, size-filtered connected components of every cluster, nearest to
/// `corrected_center` first. `area` positions the patch inside the frame.
pub fn extract_segments(result: &FcmResult, area: PixelRect, min_area: f64, corrected_center: PointF) -> Vec<CandidateSegment> {
    let w = result.width;
    let mut out = Vec::new();
    for k in 0..result.clusters {
        let mask = clean_mask(&result.cluster_mask(k));
        for comp in connected_components(&mask) {
            if (comp.len() as f64) < min_area || comp.is_empty() {
                continue;
            }
            let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
            for &i in &comp {
                let (x, y) = (i % w, i / w);
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
            let (cw, ch) = (x1 - x0 + 1, y1 - y0 + 1);
            let mut cmask = Plane::new(cw, ch, false);
            for &i in &comp {
                cmask.set(i % w - x0, i / w - y0, true);
            }
            out.push(CandidateSegment {
                cluster: k,
                mask: cmask,
                bbox: BBox::from_corner((area.x + x0) as f64, (area.y + y0) as f64, cw as f64, ch as f64),
                area: comp.len(),
                embedding: None,
                similarity: None,
            });
        }
    }
    // stable: ties keep cluster then scan order
    out.sort_by(|a, b| {
        a.bbox
            .center()
            .distance(corrected_center)
            .total_cmp(&b.bbox.center().distance(corrected_center))
    });
    out
}

/// Scores every candidate against the template embedding and returns the
/// index of the best one when it reaches `threshold`.
pub fn select_segment(template: &Embedding, candidates: &mut [CandidateSegment], threshold: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, cand) in candidates.iter_mut().enumerate() {
        cand.similarity = cand.embedding.as_ref().and_then(|e| cosine_similarity(template, e));
        if let Some(s) = cand.similarity {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
    }
    match best {
        Some((i, s)) if s >= threshold => Some(i),
        _ => None,
    }
}
