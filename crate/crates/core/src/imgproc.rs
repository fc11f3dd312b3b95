//! Low-level image primitives: grayscale, Sobel gradients, Gaussian pyramids,
//! color histograms and their correlation, binary morphology, patch extraction
//! and half-resolution resizing.

use thiserror::Error;

use crate::types::{BBox, ColorPatch, Frame, GrayPlane, Plane};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("image {width}x{height} is smaller than the required {min}x{min}")]
    TooSmall { width: usize, height: usize, min: usize },
    #[error("cannot build {levels} pyramid levels from a {width}x{height} image")]
    TooManyLevels {
        levels: usize,
        width: usize,
        height: usize,
    },
    #[error("pyramid needs at least one level")]
    NoLevels,
    #[error("patch is empty")]
    EmptyPatch,
    #[error("box {0:?} lies entirely outside the frame")]
    OutsideFrame(BBox),
}

/// Smallest side allowed for the coarsest pyramid level.
pub const MIN_PYRAMID_SIDE: usize = 8;

/// Default histogram resolution used for template matching.
pub const HIST_BINS: usize = 32;

/// `round(0.299 R + 0.587 G + 0.114 B)` in exact integer arithmetic, ties up.
#[inline]
fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

/// Luminance of an interleaved RGB buffer.
pub fn to_gray_rgb(width: usize, height: usize, rgb: &[u8]) -> GrayPlane {
    let data = rgb.chunks_exact(3).map(|c| luma(c[0], c[1], c[2])).collect();
    Plane::from_vec(width, height, data)
}

pub fn to_gray(frame: &Frame) -> GrayPlane {
    to_gray_rgb(frame.width(), frame.height(), frame.color())
}

pub fn patch_to_gray(patch: &ColorPatch) -> GrayPlane {
    to_gray_rgb(patch.width, patch.height, &patch.data)
}

/// 3×3 Sobel derivatives with replicated borders. The kernels are unnormalized,
/// so a unit ramp yields a response of 8.
pub fn sobel_gradients<T>(img: &Plane<T>) -> Result<(Plane<f32>, Plane<f32>), ImageError>
where
    T: Copy + Into<f64>,
{
    if img.width < 3 || img.height < 3 {
        return Err(ImageError::TooSmall {
            width: img.width,
            height: img.height,
            min: 3,
        });
    }
    let (w, h) = (img.width, img.height);
    let mut gx = Plane::new(w, h, 0.0f32);
    let mut gy = Plane::new(w, h, 0.0f32);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let (dx, dy) = sobel_at(img, x, y);
            gx.set(x as usize, y as usize, dx as f32);
            gy.set(x as usize, y as usize, dy as f32);
        }
    }
    Ok((gx, gy))
}

/// Sobel response at one pixel, replicating borders.
#[inline]
pub fn sobel_at<T: Copy + Into<f64>>(img: &Plane<T>, x: isize, y: isize) -> (f64, f64) {
    let p = |dx: isize, dy: isize| -> f64 { img.get_clamped(x + dx, y + dy).into() };
    let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
    let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
    (gx, gy)
}

/// Gaussian image pyramid; level 0 is the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    pub levels: Vec<Plane<f32>>,
}

impl Pyramid {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn level(&self, k: usize) -> &Plane<f32> {
        &self.levels[k]
    }

    pub fn base_size(&self) -> (usize, usize) {
        (self.levels[0].width, self.levels[0].height)
    }
}

/// Largest level count whose coarsest level keeps both sides ≥ [`MIN_PYRAMID_SIDE`].
pub fn max_pyramid_levels(width: usize, height: usize) -> usize {
    let mut n = 0;
    let (mut w, mut h) = (width, height);
    while w >= MIN_PYRAMID_SIDE && h >= MIN_PYRAMID_SIDE {
        n += 1;
        w = w.div_ceil(2);
        h = h.div_ceil(2);
    }
    n
}

pub fn build_pyramid(gray: &GrayPlane, levels: usize) -> Result<Pyramid, ImageError> {
    build_pyramid_f32(gray.map(f32::from), levels)
}

pub fn build_pyramid_f32(base: Plane<f32>, levels: usize) -> Result<Pyramid, ImageError> {
    if levels == 0 {
        return Err(ImageError::NoLevels);
    }
    if levels > max_pyramid_levels(base.width, base.height) {
        return Err(ImageError::TooManyLevels {
            levels,
            width: base.width,
            height: base.height,
        });
    }
    let mut out = Vec::with_capacity(levels);
    out.push(base);
    for _ in 1..levels {
        let next = pyr_down(out.last().unwrap());
        out.push(next);
    }
    Ok(Pyramid { levels: out })
}

const GAUSS5: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// 5-tap Gaussian blur followed by keeping every second row and column.
fn pyr_down(src: &Plane<f32>) -> Plane<f32> {
    let (w, h) = (src.width, src.height);
    let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
    // horizontal pass only at kept columns
    let mut tmp = Plane::new(nw, h, 0.0f32);
    for y in 0..h {
        let row = &src.data[y * w..(y + 1) * w];
        let dst = &mut tmp.data[y * nw..(y + 1) * nw];
        for (nx, d) in dst.iter_mut().enumerate() {
            let x = 2 * nx;
            *d = if x >= 2 && x + 2 < w {
                let r = &row[x - 2..x + 3];
                GAUSS5[0] * r[0] + GAUSS5[1] * r[1] + GAUSS5[2] * r[2] + GAUSS5[3] * r[3] + GAUSS5[4] * r[4]
            } else {
                GAUSS5
                    .iter()
                    .enumerate()
                    .map(|(k, wt)| wt * row[(x as isize + k as isize - 2).clamp(0, w as isize - 1) as usize])
                    .sum()
            };
        }
    }
    let mut out = Plane::new(nw, nh, 0.0f32);
    for ny in 0..nh {
        let y = (2 * ny) as isize;
        for (k, wt) in GAUSS5.iter().enumerate() {
            let sy = (y + k as isize - 2).clamp(0, h as isize - 1) as usize;
            let src_row = &tmp.data[sy * nw..(sy + 1) * nw];
            let dst_row = &mut out.data[ny * nw..(ny + 1) * nw];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += wt * s;
            }
        }
    }
    out
}

/// Per-channel intensity histogram, channels concatenated.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bins: Vec<f64>,
    pub bins_per_channel: usize,
    pub channels: usize,
}

impl Histogram {
    pub fn channel(&self, c: usize) -> &[f64] {
        &self.bins[c * self.bins_per_channel..(c + 1) * self.bins_per_channel]
    }
}

#[inline]
pub(crate) fn bin_of(v: u8, bins: usize) -> usize {
    (v as usize * bins) >> 8
}

/// Counts RGB values into `bins_per_channel` equal-width bins per channel.
pub fn histogram(patch: &ColorPatch, bins_per_channel: usize) -> Result<Histogram, ImageError> {
    if patch.pixel_count() == 0 || bins_per_channel == 0 {
        return Err(ImageError::EmptyPatch);
    }
    let mut bins = vec![0.0; 3 * bins_per_channel];
    for px in patch.pixels() {
        for (c, &v) in px.iter().enumerate() {
            bins[c * bins_per_channel + bin_of(v, bins_per_channel)] += 1.0;
        }
    }
    Ok(Histogram {
        bins,
        bins_per_channel,
        channels: 3,
    })
}

/// Pearson correlation of two histograms over all bins jointly.
///
/// Returns `None` ("undefined similarity") when the shapes differ or either
/// histogram has zero variance.
pub fn hist_correlation(h1: &Histogram, h2: &Histogram) -> Option<f64> {
    if h1.bins.len() != h2.bins.len() || h1.bins.is_empty() {
        return None;
    }
    let n = h1.bins.len() as f64;
    let m1 = h1.bins.iter().sum::<f64>() / n;
    let m2 = h2.bins.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut v1 = 0.0;
    let mut v2 = 0.0;
    for (a, b) in h1.bins.iter().zip(&h2.bins) {
        let da = a - m1;
        let db = b - m2;
        cov += da * db;
        v1 += da * da;
        v2 += db * db;
    }
    if v1 <= 0.0 || v2 <= 0.0 {
        return None;
    }
    Some((cov / (v1 * v2).sqrt()).clamp(-1.0, 1.0))
}

/// Binary mask.
pub type Mask = Plane<bool>;

fn morph3(mask: &Mask, erode: bool) -> Mask {
    let (w, h) = (mask.width, mask.height);
    let mut out = Plane::new(w, h, false);
    if w == 0 || h == 0 {
        return out;
    }
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut v = erode;
            'win: for dy in -1..=1 {
                for dx in -1..=1 {
                    let s = mask.get_clamped(x + dx, y + dy);
                    if erode && !s {
                        v = false;
                        break 'win;
                    }
                    if !erode && s {
                        v = true;
                        break 'win;
                    }
                }
            }
            out.set(x as usize, y as usize, v);
        }
    }
    out
}

/// 3×3 minimum filter with replicated border.
pub fn erode(mask: &Mask) -> Mask {
    morph3(mask, true)
}

/// 3×3 maximum filter with replicated border.
pub fn dilate(mask: &Mask) -> Mask {
    morph3(mask, false)
}

/// Integer pixel rectangle `[x, x+w) × [y, y+h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl PixelRect {
    pub fn to_bbox(&self) -> BBox {
        BBox::from_corner(self.x as f64, self.y as f64, self.w as f64, self.h as f64)
    }
}

/// Rounds a box to whole pixels and clips it to `width × height`. `None` when
/// nothing remains.
pub fn rasterize(b: &BBox, width: usize, height: usize) -> Option<PixelRect> {
    let x0 = b.left().round().max(0.0);
    let y0 = b.top().round().max(0.0);
    let x1 = b.right().round().min(width as f64);
    let y1 = b.bottom().round().min(height as f64);
    if !(x1 > x0 && y1 > y0) {
        return None;
    }
    Some(PixelRect {
        x: x0 as usize,
        y: y0 as usize,
        w: (x1 - x0) as usize,
        h: (y1 - y0) as usize,
    })
}

/// Copies the pixels under `b`; parts outside the frame are clipped away.
pub fn extract_patch(frame: &Frame, b: &BBox) -> Result<ColorPatch, ImageError> {
    let r = rasterize(b, frame.width(), frame.height()).ok_or(ImageError::OutsideFrame(*b))?;
    Ok(crop_rgb(frame, r))
}

pub fn crop_rgb(frame: &Frame, r: PixelRect) -> ColorPatch {
    let stride = frame.width() * 3;
    let mut data = Vec::with_capacity(r.w * r.h * 3);
    for y in r.y..r.y + r.h {
        let start = y * stride + r.x * 3;
        data.extend_from_slice(&frame.color()[start..start + r.w * 3]);
    }
    ColorPatch {
        width: r.w,
        height: r.h,
        data,
    }
}

/// Halves both dimensions by averaging 2×2 blocks, rounding half up. The
/// grayscale plane is the same block mean of the source grayscale, so it can
/// differ by one level from the luminance of the averaged color.
pub fn resize_half(frame: &Frame) -> Frame {
    resize_half_with_gray(frame, half_gray(frame.gray()))
}

/// [`resize_half`] reusing an already downsampled grayscale plane.
pub(crate) fn resize_half_with_gray(frame: &Frame, gray: GrayPlane) -> Frame {
    let (w, h) = (frame.width() / 2, frame.height() / 2);
    debug_assert_eq!((gray.width, gray.height), (w, h));
    let src = frame.color();
    let stride = frame.width() * 3;
    let mut out = vec![0u8; w * h * 3];
    let mut rows = vec![0u16; stride];
    for (y, dst) in out.chunks_exact_mut(w * 3).enumerate() {
        let top = &src[2 * y * stride..(2 * y + 1) * stride];
        let bot = &src[(2 * y + 1) * stride..(2 * y + 2) * stride];
        for ((r, &a), &b) in rows.iter_mut().zip(top).zip(bot) {
            *r = a as u16 + b as u16;
        }
        for (x, px) in dst.chunks_exact_mut(3).enumerate() {
            let i = 6 * x;
            for c in 0..3 {
                px[c] = ((rows[i + c] + rows[i + c + 3] + 2) / 4) as u8;
            }
        }
    }
    Frame::from_parts(frame.index, w, h, out, gray)
}

/// 2×2 block mean of a grayscale plane, rounding half up; odd trailing
/// rows and columns are dropped.
pub fn half_gray(gray: &GrayPlane) -> GrayPlane {
    let (sw, w, h) = (gray.width, gray.width / 2, gray.height / 2);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let top = &gray.data[2 * y * sw..2 * y * sw + 2 * w];
        let bot = &gray.data[(2 * y + 1) * sw..(2 * y + 1) * sw + 2 * w];
        out.extend(top.chunks_exact(2).zip(bot.chunks_exact(2)).map(|(t, b)| {
            ((t[0] as u16 + t[1] as u16 + b[0] as u16 + b[1] as u16 + 2) / 4) as u8
        }));
    }
    Plane::from_vec(w, h, out)
}
