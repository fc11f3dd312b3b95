//! Sparse iterative Lucas-Kanade optical flow over Gaussian pyramids.

use thiserror::Error;

use crate::imgproc::{sobel_at, Pyramid};
use crate::types::{Plane, PointF};

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub pyramid_levels: usize,
    /// Odd side length of the integration window.
    pub window: usize,
    pub max_iters: usize,
    /// Stop iterating once the update is shorter than this (pixels).
    pub epsilon: f64,
    /// Minimum eigenvalue of the gradient matrix divided by the window area
    /// (gray levels per pixel, squared); below it the point is lost.
    pub min_eig_threshold: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            pyramid_levels: 3,
            window: 21,
            max_iters: 30,
            epsilon: 0.01,
            min_eig_threshold: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointStatus {
    Ok,
    Lost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub new_points: Vec<PointF>,
    pub status: Vec<PointStatus>,
    /// Mean absolute intensity difference over the window at full resolution.
    pub residual: Vec<f64>,
}

impl FlowResult {
    pub fn all_ok(&self) -> bool {
        self.status.iter().all(|s| *s == PointStatus::Ok)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("pyramid geometry differs: {prev:?} vs {next:?}")]
    GeometryMismatch {
        prev: Vec<(usize, usize)>,
        next: Vec<(usize, usize)>,
    },
    #[error("window must be odd and at least 3, got {0}")]
    BadWindow(usize),
}

fn geometry(p: &Pyramid) -> Vec<(usize, usize)> {
    p.levels.iter().map(|l| (l.width, l.height)).collect()
}

#[inline]
fn bilinear(img: &Plane<f32>, x: f64, y: f64) -> f64 {
    let xf = x.clamp(0.0, (img.width - 1) as f64);
    let yf = y.clamp(0.0, (img.height - 1) as f64);
    let x0 = xf.floor() as usize;
    let y0 = yf.floor() as usize;
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let ax = xf - x0 as f64;
    let ay = yf - y0 as f64;
    let w = img.width;
    let d = &img.data;
    let top = d[y0 * w + x0] as f64 * (1.0 - ax) + d[y0 * w + x1] as f64 * ax;
    let bot = d[y1 * w + x0] as f64 * (1.0 - ax) + d[y1 * w + x1] as f64 * ax;
    top * (1.0 - ay) + bot * ay
}

/// Template samples of one window on one level: intensity and derivatives.
struct WindowSamples {
    values: Vec<f64>,
    gx: Vec<f64>,
    gy: Vec<f64>,
}

/// Samples the window around `p` (index coordinates) with gradients taken
/// from Sobel responses on the integer grid and bilinearly interpolated.
fn sample_window(img: &Plane<f32>, p: (f64, f64), half: isize) -> WindowSamples {
    let side = (2 * half + 1) as usize;
    let n = side * side;
    // integer grid covering every bilinear footprint of the window
    let gx0 = p.0.floor() as isize - half;
    let gy0 = p.1.floor() as isize - half;
    let gside = side + 1;
    let mut grid_gx = vec![0.0; gside * gside];
    let mut grid_gy = vec![0.0; gside * gside];
    for j in 0..gside {
        for i in 0..gside {
            let (sx, sy) = sobel_at(img, gx0 + i as isize, gy0 + j as isize);
            grid_gx[j * gside + i] = sx / 8.0;
            grid_gy[j * gside + i] = sy / 8.0;
        }
    }
    let ax = p.0 - p.0.floor();
    let ay = p.1 - p.1.floor();
    let interp = |g: &[f64], i: usize, j: usize| {
        let a = g[j * gside + i];
        let b = g[j * gside + i + 1];
        let c = g[(j + 1) * gside + i];
        let d = g[(j + 1) * gside + i + 1];
        (a * (1.0 - ax) + b * ax) * (1.0 - ay) + (c * (1.0 - ax) + d * ax) * ay
    };
    let mut out = WindowSamples {
        values: Vec::with_capacity(n),
        gx: Vec::with_capacity(n),
        gy: Vec::with_capacity(n),
    };
    for j in 0..side {
        for i in 0..side {
            let x = p.0 + (i as isize - half) as f64;
            let y = p.1 + (j as isize - half) as f64;
            out.values.push(bilinear(img, x, y));
            out.gx.push(interp(&grid_gx, i, j));
            out.gy.push(interp(&grid_gy, i, j));
        }
    }
    out
}

/// Coarse-to-fine Lucas-Kanade tracking of `points` from `prev` to `next`.
pub fn lk_track(prev: &Pyramid, next: &Pyramid, points: &[PointF], cfg: &FlowConfig) -> Result<FlowResult, FlowError> {
    if cfg.window < 3 || cfg.window.is_multiple_of(2) {
        return Err(FlowError::BadWindow(cfg.window));
    }
    let (gp, gn) = (geometry(prev), geometry(next));
    if gp != gn || gp.is_empty() {
        return Err(FlowError::GeometryMismatch { prev: gp, next: gn });
    }
    let levels = cfg.pyramid_levels.clamp(1, prev.len());
    let mut result = FlowResult {
        new_points: Vec::with_capacity(points.len()),
        status: Vec::with_capacity(points.len()),
        residual: Vec::with_capacity(points.len()),
    };
    for &pt in points {
        let (np, st, res) = track_point(prev, next, pt, levels, cfg);
        result.new_points.push(np);
        result.status.push(st);
        result.residual.push(res);
    }
    Ok(result)
}

fn track_point(prev: &Pyramid, next: &Pyramid, pt: PointF, levels: usize, cfg: &FlowConfig) -> (PointF, PointStatus, f64) {
    let half = (cfg.window / 2) as isize;
    let n = (cfg.window * cfg.window) as f64;
    let (w0, h0) = prev.base_size();
    // pixel centers sit at +0.5 in point coordinates
    let base = (pt.x - 0.5, pt.y - 0.5);
    let lost = (pt, PointStatus::Lost, f64::NAN);
    if !pt.is_finite() || base.0 < 0.0 || base.1 < 0.0 || base.0 > (w0 - 1) as f64 || base.1 > (h0 - 1) as f64 {
        return lost;
    }
    let mut guess = (0.0f64, 0.0f64);
    let mut last = (0.0, 0.0);
    for level in (0..levels).rev() {
        let scale = (1u32 << level) as f64;
        let p = (base.0 / scale, base.1 / scale);
        let img_prev = prev.level(level);
        let img_next = next.level(level);
        let tmpl = sample_window(img_prev, p, half);

        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for k in 0..tmpl.gx.len() {
            a += tmpl.gx[k] * tmpl.gx[k];
            b += tmpl.gx[k] * tmpl.gy[k];
            c += tmpl.gy[k] * tmpl.gy[k];
        }
        let min_eig = crate::corners::min_eigenvalue(a, b, c) / n;
        if min_eig < cfg.min_eig_threshold {
            return lost;
        }
        let det = a * c - b * b;
        if det.abs() < f64::EPSILON {
            return lost;
        }

        let mut nu = (0.0f64, 0.0f64);
        for _ in 0..cfg.max_iters {
            let (mut bx, mut by) = (0.0, 0.0);
            let mut k = 0;
            for j in -half..=half {
                for i in -half..=half {
                    let x = p.0 + i as f64 + guess.0 + nu.0;
                    let y = p.1 + j as f64 + guess.1 + nu.1;
                    let diff = tmpl.values[k] - bilinear(img_next, x, y);
                    bx += diff * tmpl.gx[k];
                    by += diff * tmpl.gy[k];
                    k += 1;
                }
            }
            let eta = ((c * bx - b * by) / det, (a * by - b * bx) / det);
            let norm = eta.0.hypot(eta.1);
            if !norm.is_finite() || norm > cfg.window as f64 {
                return lost;
            }
            nu = (nu.0 + eta.0, nu.1 + eta.1);
            if norm < cfg.epsilon {
                break;
            }
        }
        last = (guess.0 + nu.0, guess.1 + nu.1);
        if level > 0 {
            guess = (2.0 * last.0, 2.0 * last.1);
        }
    }

    let new_base = (base.0 + last.0, base.1 + last.1);
    if !(new_base.0.is_finite() && new_base.1.is_finite())
        || new_base.0 < 0.0
        || new_base.1 < 0.0
        || new_base.0 > (w0 - 1) as f64
        || new_base.1 > (h0 - 1) as f64
    {
        return lost;
    }
    let img_prev = prev.level(0);
    let img_next = next.level(0);
    let mut err = 0.0;
    for j in -half..=half {
        for i in -half..=half {
            let a = bilinear(img_prev, base.0 + i as f64, base.1 + j as f64);
            let b = bilinear(img_next, new_base.0 + i as f64, new_base.1 + j as f64);
            err += (a - b).abs();
        }
    }
    (
        PointF::new(new_base.0 + 0.5, new_base.1 + 0.5),
        PointStatus::Ok,
        err / n,
    )
}
