//! Single-object tracking for aerial video: corner-anchored optical flow with
//! relative correction, fuzzy segmentation and angle-driven rescaling.

pub mod angular;
pub mod corners;
pub mod correction;
pub mod datasets;
pub mod eval;
pub mod fcmseg;
pub mod flow;
pub mod imgproc;
pub mod tracker;
pub mod types;

pub use datasets::{FrameSource, InMemorySequence, Motion, Sequence, SynthSpec};
pub use eval::{BenchConfig, BenchOptions, BenchTable, SequenceMetrics};
pub use tracker::{FrameScale, Mode, SequenceTracker, TrackError, TrackerConfig, TrackerSession};
pub use types::{bbox_iou, center_distance, BBox, Frame, PointF};
