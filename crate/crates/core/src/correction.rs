//! Relative correction of the tracked anchor.
//!
//! The offset between the first-frame template center and the tracked corner
//! is stored once and re-applied every frame, stretched by how much the
//! template has grown relative to the frame since the first frame.

use crate::types::PointF;

/// Offset from the tracked anchor to the template center, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Margin {
    pub dx: f64,
    pub dy: f64,
}

impl Margin {
    pub fn scaled(self, s: f64) -> Margin {
        Margin {
            dx: self.dx * s,
            dy: self.dy * s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionInputs {
    pub anchor_now: PointF,
    pub margin: Margin,
    pub rt_scale_ff: f64,
    pub rt_scale_f: f64,
}

/// `template center − anchor`, both taken in the first frame.
pub fn init_margin(rt_center_ff: PointF, anchor_ff: PointF) -> Margin {
    Margin {
        dx: rt_center_ff.x - anchor_ff.x,
        dy: rt_center_ff.y - anchor_ff.y,
    }
}

/// Template height relative to frame height.
pub fn relative_scale(template_h: f64, frame_h: f64) -> f64 {
    debug_assert!(template_h > 0.0 && frame_h > 0.0);
    template_h / frame_h
}

/// Anchor plus the margin rescaled by `rt_scale_f / rt_scale_ff`.
pub fn corrected_point(inp: &CorrectionInputs) -> PointF {
    let ratio = inp.rt_scale_f / inp.rt_scale_ff;
    PointF::new(
        inp.anchor_now.x + inp.margin.dx * ratio,
        inp.anchor_now.y + inp.margin.dy * ratio,
    )
}
