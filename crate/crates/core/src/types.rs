//! Shared domain types: frames, image planes, boxes and points.

use crate::imgproc;

/// A single-channel image plane stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

/// 8-bit grayscale plane.
pub type GrayPlane = Plane<u8>;

impl<T: Copy> Plane<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "plane buffer length mismatch");
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    /// Pixel access with replicated borders.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> T {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    pub fn map<U, F: Fn(T) -> U>(&self, f: F) -> Plane<U> {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copies the rectangle `[x0, x0+w) × [y0, y0+h)`, which must lie inside the plane.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Plane<T> {
        assert!(x0 + w <= self.width && y0 + h <= self.height);
        let mut data = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            let row = y * self.width;
            data.extend_from_slice(&self.data[row + x0..row + x0 + w]);
        }
        Plane {
            width: w,
            height: h,
            data,
        }
    }
}

/// A rectangular block of RGB pixels, e.g. a template or a search-area crop.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorPatch {
    pub width: usize,
    pub height: usize,
    /// Row-major interleaved RGB.
    pub data: Vec<u8>,
}

impl ColorPatch {
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    pub fn uniform(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
        }
    }
}

/// A decoded video frame with its cached grayscale plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    width: usize,
    height: usize,
    color: Vec<u8>,
    gray: GrayPlane,
}

impl Frame {
    /// Builds a frame from interleaved RGB bytes. Panics when the buffer length
    /// does not equal `width * height * 3` or a dimension is zero.
    pub fn from_rgb(index: usize, width: usize, height: usize, color: Vec<u8>) -> Self {
        assert!(width > 0 && height > 0, "frame dimensions must be positive");
        assert_eq!(color.len(), width * height * 3, "frame buffer length mismatch");
        let gray = imgproc::to_gray_rgb(width, height, &color);
        Self {
            index,
            width,
            height,
            color,
            gray,
        }
    }

    /// Pairs a color buffer with a grayscale plane derived elsewhere, e.g. by
    /// downsampling the grayscale of a larger frame.
    pub(crate) fn from_parts(index: usize, width: usize, height: usize, color: Vec<u8>, gray: GrayPlane) -> Self {
        debug_assert_eq!(color.len(), width * height * 3);
        debug_assert_eq!((gray.width, gray.height), (width, height));
        Self {
            index,
            width,
            height,
            color,
            gray,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn color(&self) -> &[u8] {
        &self.color
    }

    pub fn gray(&self) -> &GrayPlane {
        &self.gray
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.color[i], self.color[i + 1], self.color[i + 2]]
    }

    /// The whole frame as a patch.
    pub fn as_patch(&self) -> ColorPatch {
        ColorPatch {
            width: self.width,
            height: self.height,
            data: self.color.clone(),
        }
    }

    pub fn bounds(&self) -> BBox {
        BBox::from_corner(0.0, 0.0, self.width as f64, self.height as f64)
    }
}

/// A continuous 2-D point in image coordinates (x rightward, y downward).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointF {
    pub x: f64,
    pub y: f64,
}

impl PointF {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: PointF) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn scale(self, s: f64) -> PointF {
        PointF::new(self.x * s, self.y * s)
    }
}

impl std::ops::Add for PointF {
    type Output = PointF;
    fn add(self, o: PointF) -> PointF {
        PointF::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for PointF {
    type Output = PointF;
    fn sub(self, o: PointF) -> PointF {
        PointF::new(self.x - o.x, self.y - o.y)
    }
}

/// Axis-aligned box stored by center and size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        debug_assert!(w > 0.0 && h > 0.0, "box sides must be positive");
        Self { cx, cy, w, h }
    }

    /// Builds a box from its top-left corner and size.
    pub fn from_corner(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self::new(x + w / 2.0, y + h / 2.0, w, h)
    }

    pub fn centered_at(center: PointF, w: f64, h: f64) -> Self {
        Self::new(center.x, center.y, w, h)
    }

    pub fn center(&self) -> PointF {
        PointF::new(self.cx, self.cy)
    }

    pub fn left(&self) -> f64 {
        self.cx - self.w / 2.0
    }

    pub fn top(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    pub fn right(&self) -> f64 {
        self.cx + self.w / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.cy + self.h / 2.0
    }

    /// Corner form `(x, y, w, h)`.
    pub fn to_corner(&self) -> (f64, f64, f64, f64) {
        (self.left(), self.top(), self.w, self.h)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0 && self.h > 0.0 && self.cx.is_finite() && self.cy.is_finite()
    }

    pub fn contains(&self, p: PointF) -> bool {
        p.x >= self.left() && p.x <= self.right() && p.y >= self.top() && p.y <= self.bottom()
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox::new(self.cx + dx, self.cy + dy, self.w, self.h)
    }

    /// Scales position and size, as when moving between full and half resolution.
    pub fn scaled(&self, s: f64) -> BBox {
        BBox::new(self.cx * s, self.cy * s, self.w * s, self.h * s)
    }

    /// Same center, sides multiplied by `factor`.
    pub fn expanded(&self, factor: f64) -> BBox {
        BBox::new(self.cx, self.cy, self.w * factor, self.h * factor)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = self.right().min(other.right()) - self.left().max(other.left());
        let ih = self.bottom().min(other.bottom()) - self.top().max(other.top());
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.intersection_area(other) > 0.0
    }

    /// Clips the box to `[0, width] × [0, height]`. A box lying entirely outside
    /// is pulled back so at least a one-pixel sliver stays inside.
    pub fn clip_to(&self, width: f64, height: f64) -> BBox {
        let (x0, x1) = clip_span(self.left(), self.right(), width);
        let (y0, y1) = clip_span(self.top(), self.bottom(), height);
        BBox::from_corner(x0, y0, x1 - x0, y1 - y0)
    }
}

fn clip_span(lo: f64, hi: f64, limit: f64) -> (f64, f64) {
    let mut a = lo.clamp(0.0, limit);
    let mut b = hi.clamp(0.0, limit);
    if b - a < 1.0 {
        let min_side = 1.0_f64.min(limit);
        if a + min_side <= limit {
            b = a + min_side;
        } else {
            a = limit - min_side;
            b = limit;
        }
    }
    (a, b)
}

/// Intersection over union of two boxes; 0 for disjoint boxes.
pub fn bbox_iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Euclidean distance between box centers.
pub fn center_distance(a: &BBox, b: &BBox) -> f64 {
    a.center().distance(b.center())
}
