//! Shi-Tomasi corners and the adaptive closest-corner selection.
//!
//! Selection starts strict (high quality level, one corner) and relaxes the
//! detector parameters each round until the candidate anchor passes both the
//! histogram-similarity gate and the distance gate, or the round budget runs
//! out. Multiple corners are summarized by the centroid of their convex hull.
//!
//! Point convention: pixel `(i, j)` has its center at `(i + 0.5, j + 0.5)`,
//! matching the box convention where pixel `i` covers `[i, i + 1)`.

use crate::imgproc::{self, Histogram, PixelRect, HIST_BINS};
use crate::types::{BBox, ColorPatch, Frame, GrayPlane, Plane, PointF};

#[derive(Debug, Clone, PartialEq)]
pub struct CornerConfig {
    pub quality_level: f64,
    /// Suppression radius in pixels; `None` uses half the shorter side of the
    /// search region.
    pub min_distance: Option<f64>,
    pub block_size: usize,
    pub max_corners: usize,
    pub max_adapt_iters: usize,
    pub quality_decay: f64,
    pub corner_growth: usize,
    pub max_corners_cap: usize,
}

impl Default for CornerConfig {
    fn default() -> Self {
        Self {
            quality_level: 0.3,
            min_distance: None,
            block_size: 3,
            max_corners: 1,
            max_adapt_iters: 6,
            quality_decay: 0.5,
            corner_growth: 2,
            max_corners_cap: 16,
        }
    }
}

impl CornerConfig {
    fn resolved_min_distance(&self, region: &BBox) -> f64 {
        self.min_distance
            .unwrap_or_else(|| 0.5 * region.w.min(region.h))
            .max(1.0)
    }

    /// The next, more permissive parameter set.
    pub fn relaxed(&self, region: &BBox) -> CornerConfig {
        CornerConfig {
            quality_level: self.quality_level * self.quality_decay,
            min_distance: Some((self.resolved_min_distance(region) * 0.5).max(1.0)),
            max_corners: (self.max_corners * self.corner_growth)
                .min(self.max_corners_cap)
                .max(self.max_corners),
            ..self.clone()
        }
    }
}

/// Similarity and distance thresholds of the accept test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionGate {
    pub alpha: f64,
    pub beta_factor: f64,
}

impl Default for SelectionGate {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta_factor: 0.5,
        }
    }
}

/// Appearance of the object in the first frame plus its current placement.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTemplate {
    pub bbox: BBox,
    pub patch: ColorPatch,
    pub hist: Histogram,
}

impl ReferenceTemplate {
    pub fn capture(frame: &Frame, bbox: BBox) -> Result<Self, imgproc::ImageError> {
        let patch = imgproc::extract_patch(frame, &bbox)?;
        let hist = imgproc::histogram(&patch, HIST_BINS)?;
        Ok(Self { bbox, patch, hist })
    }

    /// Same appearance, placed at `center`.
    pub fn relocated(&self, center: PointF) -> Self {
        Self {
            bbox: BBox::centered_at(center, self.bbox.w, self.bbox.h),
            ..self.clone()
        }
    }
}

/// Selected closest corner(s) and the point that represents them.
#[derive(Debug, Clone, PartialEq)]
pub struct CornerSet {
    /// Nearest to the template center first.
    pub points: Vec<PointF>,
    pub anchor: PointF,
    /// Detection rounds used.
    pub iterations: usize,
    /// False when the template-center fallback was used.
    pub accepted: bool,
}

/// Minimum eigenvalue of the gradient structure tensor summed over a
/// `block_size × block_size` window, for every pixel.
pub fn shi_tomasi_response(gray: &GrayPlane, block_size: usize) -> Plane<f64> {
    let full = PixelRect {
        x: 0,
        y: 0,
        w: gray.width,
        h: gray.height,
    };
    response_in(gray, block_size, full)
}

/// Response computed for pixels of `rect` only; other entries stay 0. Values
/// inside `rect` are identical to the whole-image computation.
fn response_in(gray: &GrayPlane, block_size: usize, rect: PixelRect) -> Plane<f64> {
    let (w, h) = (gray.width, gray.height);
    let mut out = Plane::new(w, h, 0.0);
    if w == 0 || h == 0 || rect.w == 0 || rect.h == 0 {
        return out;
    }
    let r = (block_size.max(1) / 2) as isize;
    let lo = |v: usize| (v as isize - r).max(0) as usize;
    let (gx0, gy0) = (lo(rect.x), lo(rect.y));
    let gx1 = (rect.x + rect.w + r as usize).min(w);
    let gy1 = (rect.y + rect.h + r as usize).min(h);
    let gw = gx1 - gx0;
    // gradient products over the padded rectangle
    let mut prods = vec![[0.0f64; 3]; gw * (gy1 - gy0)];
    for y in gy0..gy1 {
        for x in gx0..gx1 {
            let (ix, iy) = imgproc::sobel_at(gray, x as isize, y as isize);
            prods[(y - gy0) * gw + (x - gx0)] = [ix * ix, ix * iy, iy * iy];
        }
    }
    let prod_at = |x: isize, y: isize| -> [f64; 3] {
        let cx = x.clamp(0, w as isize - 1) as usize;
        let cy = y.clamp(0, h as isize - 1) as usize;
        prods[(cy - gy0) * gw + (cx - gx0)]
    };
    let even_shift = if block_size.is_multiple_of(2) { 1 } else { 0 };
    for y in rect.y..rect.y + rect.h {
        for x in rect.x..rect.x + rect.w {
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for dy in -r..=r - even_shift {
                for dx in -r..=r - even_shift {
                    let p = prod_at(x as isize + dx, y as isize + dy);
                    a += p[0];
                    b += p[1];
                    c += p[2];
                }
            }
            out.set(x, y, min_eigenvalue(a, b, c));
        }
    }
    out
}

/// Smaller eigenvalue of the symmetric matrix `[a b; b c]`.
#[inline]
pub fn min_eigenvalue(a: f64, b: f64, c: f64) -> f64 {
    let half_tr = 0.5 * (a + c);
    let half_diff = 0.5 * (a - c);
    (half_tr - (half_diff * half_diff + b * b).sqrt()).max(0.0)
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    x: usize,
    y: usize,
    score: f64,
}

/// Strong corners inside `region`: response ≥ `quality_level` × regional
/// maximum, local 3×3 maxima, greedily suppressed within `min_distance`,
/// strongest first, at most `max_corners`.
pub fn detect_corners(gray: &GrayPlane, cfg: &CornerConfig, region: &BBox) -> Vec<PointF> {
    let Some(rect) = imgproc::rasterize(region, gray.width, gray.height) else {
        return Vec::new();
    };
    let resp = response_in(gray, cfg.block_size, rect);
    let mut max_r = 0.0f64;
    for y in rect.y..rect.y + rect.h {
        for x in rect.x..rect.x + rect.w {
            max_r = max_r.max(resp.get(x, y));
        }
    }
    // flat regions carry only rounding noise
    if max_r <= 1e-6 {
        return Vec::new();
    }
    let thresh = cfg.quality_level * max_r;
    let mut cands = Vec::new();
    let in_rect = |x: isize, y: isize| {
        x >= rect.x as isize
            && y >= rect.y as isize
            && x < (rect.x + rect.w) as isize
            && y < (rect.y + rect.h) as isize
    };
    for y in rect.y..rect.y + rect.h {
        for x in rect.x..rect.x + rect.w {
            let v = resp.get(x, y);
            if v < thresh || v <= 0.0 {
                continue;
            }
            let mut is_peak = true;
            'n: for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if (dx, dy) != (0, 0) && in_rect(nx, ny) && resp.get(nx as usize, ny as usize) > v {
                        is_peak = false;
                        break 'n;
                    }
                }
            }
            if is_peak {
                cands.push(Candidate { x, y, score: v });
            }
        }
    }
    suppress(cands, cfg.resolved_min_distance(region), cfg.max_corners)
}

fn suppress(mut cands: Vec<Candidate>, min_distance: f64, max_corners: usize) -> Vec<PointF> {
    cands.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.y.cmp(&b.y))
            .then(a.x.cmp(&b.x))
    });
    let mut kept: Vec<PointF> = Vec::new();
    for c in cands {
        if kept.len() >= max_corners {
            break;
        }
        let p = PointF::new(c.x as f64 + 0.5, c.y as f64 + 0.5);
        if kept.iter().all(|q| q.distance(p) >= min_distance) {
            kept.push(p);
        }
    }
    kept
}

fn cross(o: PointF, a: PointF, b: PointF) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Convex hull in counter-clockwise order (monotone chain), collinear points dropped.
pub fn convex_hull(points: &[PointF]) -> Vec<PointF> {
    let mut pts: Vec<PointF> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<PointF> = Vec::with_capacity(2 * pts.len());
    let push = |hull: &mut Vec<PointF>, p: PointF, floor: usize| {
        while hull.len() >= floor && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    };
    for &p in &pts {
        push(&mut hull, p, 2);
    }
    // the upper chain may not pop into the lower one
    let floor = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        push(&mut hull, p, floor);
    }
    hull.pop();
    hull
}

/// One point: itself. Two: the midpoint. More: the area centroid of the
/// convex hull, or the midpoint of the extremes when the points are collinear.
pub fn convex_hull_centroid(points: &[PointF]) -> PointF {
    assert!(!points.is_empty(), "convex_hull_centroid needs a point");
    match points {
        [p] => *p,
        [a, b] => PointF::new(0.5 * (a.x + b.x), 0.5 * (a.y + b.y)),
        _ => {
            let hull = convex_hull(points);
            let mut area2 = 0.0;
            let (mut sx, mut sy) = (0.0, 0.0);
            for i in 0..hull.len() {
                let p = hull[i];
                let q = hull[(i + 1) % hull.len()];
                let c = p.x * q.y - q.x * p.y;
                area2 += c;
                sx += (p.x + q.x) * c;
                sy += (p.y + q.y) * c;
            }
            if area2.abs() < 1e-12 {
                let (a, b) = (hull[0], hull[hull.len() - 1]);
                return PointF::new(0.5 * (a.x + b.x), 0.5 * (a.y + b.y));
            }
            PointF::new(sx / (3.0 * area2), sy / (3.0 * area2))
        }
    }
}

/// Outcome of the accept test for one candidate anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerCheck {
    pub similarity: Option<f64>,
    pub distance: f64,
    pub accepted: bool,
}

/// Places a test template of the reference size at `anchor` and accepts when
/// its color-histogram correlation with the reference reaches `alpha` and the
/// anchor lies within `beta_factor × (w + h)` of the reference center.
pub fn accept_corner(anchor: PointF, rt: &ReferenceTemplate, frame: &Frame, gate: SelectionGate) -> CornerCheck {
    let distance = rt.bbox.center().distance(anchor);
    let beta = gate.beta_factor * (rt.bbox.w + rt.bbox.h);
    let test_box = BBox::centered_at(anchor, rt.bbox.w, rt.bbox.h);
    let similarity = imgproc::extract_patch(frame, &test_box)
        .and_then(|p| imgproc::histogram(&p, HIST_BINS))
        .ok()
        .and_then(|h| imgproc::hist_correlation(&rt.hist, &h));
    let accepted = matches!(similarity, Some(s) if s >= gate.alpha) && distance <= beta;
    CornerCheck {
        similarity,
        distance,
        accepted,
    }
}

/// Adaptive closest-corner search inside the template box.
pub fn adaptive_select(frame: &Frame, rt: &ReferenceTemplate, cfg: &CornerConfig, gate: SelectionGate) -> CornerSet {
    adaptive_select_in(frame, rt, &rt.bbox, cfg, gate)
}

/// Adaptive closest-corner search in an explicit region. The fallback anchor
/// is the template center.
pub fn adaptive_select_in(
    frame: &Frame,
    rt: &ReferenceTemplate,
    region: &BBox,
    cfg: &CornerConfig,
    gate: SelectionGate,
) -> CornerSet {
    let center = rt.bbox.center();
    let mut params = cfg.clone();
    let rounds = cfg.max_adapt_iters.max(1);
    for round in 1..=rounds {
        let mut pts = detect_corners(frame.gray(), &params, region);
        if !pts.is_empty() {
            pts.sort_by(|a, b| a.distance(center).total_cmp(&b.distance(center)));
            let anchor = convex_hull_centroid(&pts);
            let check = accept_corner(anchor, rt, frame, gate);
            log::debug!(
                "corner round {round}: {} point(s), simi {:?}, dist {:.2}, accepted {}",
                pts.len(),
                check.similarity,
                check.distance,
                check.accepted
            );
            if check.accepted {
                return CornerSet {
                    points: pts,
                    anchor,
                    iterations: round,
                    accepted: true,
                };
            }
        }
        params = params.relaxed(region);
    }
    CornerSet {
        points: vec![center],
        anchor: center,
        iterations: rounds,
        accepted: false,
    }
}
