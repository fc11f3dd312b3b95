//! Relative angular scaling.
//!
//! The template is resized from the direction of the center's motion and the
//! ratio of its current to previous `y` coordinate: vertical motion applies the
//! full ratio, horizontal motion none of it, and diagonal motion a share
//! proportional to the angle away from the horizontal.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::types::{BBox, PointF};

/// Displacement between two consecutive centers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionStep {
    pub prev: PointF,
    pub curr: PointF,
    pub dx: f64,
    pub dy: f64,
    /// `atan2(dy, dx)`, `None` when there was no displacement.
    pub theta: Option<f64>,
}

impl MotionStep {
    pub fn new(prev: PointF, curr: PointF) -> Self {
        Self {
            prev,
            curr,
            dx: curr.x - prev.x,
            dy: curr.y - prev.y,
            theta: motion_angle(prev, curr),
        }
    }

    pub fn length(&self) -> f64 {
        self.dx.hypot(self.dy)
    }
}

/// Angle of the motion from the positive x-axis (image y points down).
/// `None` for zero displacement.
pub fn motion_angle(prev: PointF, curr: PointF) -> Option<f64> {
    let (dx, dy) = (curr.x - prev.x, curr.y - prev.y);
    if dx == 0.0 && dy == 0.0 {
        None
    } else {
        Some(dy.atan2(dx))
    }
}

/// How the angle-weighted ratio turns into a size multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScaleRule {
    /// `ratio × weight(θ)`: the zone table taken literally.
    Literal,
    /// `1 + (ratio − 1) × weight(θ)`: the weight damps the change in size
    /// rather than the size itself.
    #[default]
    WeightedChange,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularConfig {
    pub rule: ScaleRule,
    /// Bounds for the per-step multiplier.
    pub min_step_factor: f64,
    pub max_step_factor: f64,
    /// Smallest template height in pixels; the largest is the frame height.
    pub min_height: f64,
    /// Displacements shorter than this count as no motion.
    pub still_threshold: f64,
}

impl Default for AngularConfig {
    fn default() -> Self {
        Self {
            rule: ScaleRule::default(),
            min_step_factor: 0.9,
            max_step_factor: 1.1,
            min_height: 4.0,
            still_threshold: 0.5,
        }
    }
}

/// Share of the vertical ratio that applies at angle `theta`: 1 at ±π/2,
/// falling linearly to 0 along the horizontal, mirrored for leftward motion.
pub fn angle_weight(dx: f64, theta: f64) -> f64 {
    if dx == 0.0 {
        1.0
    } else if dx > 0.0 {
        theta.abs() / FRAC_PI_2
    } else {
        (PI - theta.abs()) / FRAC_PI_2
    }
}

/// Unclamped size multiplier of one step. `None` means keep the previous
/// template (no motion or a non-positive previous `y`).
pub fn scale_factor(step: &MotionStep, y_prev: f64, y_curr: f64, rule: ScaleRule) -> Option<f64> {
    if y_prev <= 0.0 {
        return None;
    }
    let theta = step.theta?;
    let ratio = y_curr / y_prev;
    let weight = angle_weight(step.dx, theta);
    Some(match rule {
        ScaleRule::Literal => ratio * weight,
        ScaleRule::WeightedChange => 1.0 + (ratio - 1.0) * weight,
    })
}

/// Resizes `prt` about its center by the clamped step multiplier.
pub fn angular_scale(step: &MotionStep, prt: &BBox, y_prev: f64, y_curr: f64, frame_h: f64, cfg: &AngularConfig) -> BBox {
    if step.length() < cfg.still_threshold {
        return *prt;
    }
    let Some(raw) = scale_factor(step, y_prev, y_curr, cfg.rule) else {
        return *prt;
    };
    let factor = if raw.is_finite() {
        raw.clamp(cfg.min_step_factor, cfg.max_step_factor)
    } else {
        1.0
    };
    let max_h = frame_h.max(cfg.min_height);
    let new_h = (prt.h * factor).clamp(cfg.min_height, max_h);
    let applied = new_h / prt.h;
    BBox::new(prt.cx, prt.cy, prt.w * applied, new_h)
}
