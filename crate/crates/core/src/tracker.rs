//! The tracking pipeline: corner selection on the first frame, then per frame
//! optical flow, relative correction, optional segmentation and angular
//! rescaling, producing one box per frame.

use std::borrow::Cow;
use std::cell::OnceCell;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::angular::{self, AngularConfig, MotionStep};
use crate::corners::{self, CornerConfig, ReferenceTemplate, SelectionGate};
use crate::correction::{self, CorrectionInputs, Margin};
use crate::fcmseg::{self, EmbedContext, Embedder, Embedding, EmbeddingKind, FcmConfig, FcmError};
use crate::flow::{self, FlowConfig, FlowError};
use crate::imgproc::{self, ImageError, Pyramid};
use crate::types::{BBox, Frame, GrayPlane, PointF};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Angular,
    Fcm,
    Combined,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Angular, Mode::Fcm, Mode::Combined];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Angular => "angular",
            Mode::Fcm => "fcm",
            Mode::Combined => "combined",
        }
    }

    fn segments(self) -> bool {
        matches!(self, Mode::Fcm | Mode::Combined)
    }

    fn rescales(self) -> bool {
        matches!(self, Mode::Angular | Mode::Combined)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "angular" => Ok(Mode::Angular),
            "fcm" => Ok(Mode::Fcm),
            "combined" => Ok(Mode::Combined),
            other => Err(format!("unknown mode '{other}' (expected angular, fcm or combined)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FrameScale {
    Full,
    Half,
}

impl FrameScale {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameScale::Full => "full",
            FrameScale::Half => "half",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            FrameScale::Full => "fs",
            FrameScale::Half => "hs",
        }
    }

    /// Factor from full-frame to working coordinates.
    pub fn factor(self) -> f64 {
        match self {
            FrameScale::Full => 1.0,
            FrameScale::Half => 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub mode: Mode,
    pub rc_enabled: bool,
    pub frame_scale: FrameScale,
    /// Similarity threshold for corner acceptance and segment selection.
    pub alpha: f64,
    /// Distance gate as a fraction of `w + h` of the template.
    pub beta_factor: f64,
    pub fcm: FcmConfig,
    pub flow: FlowConfig,
    pub corner: CornerConfig,
    pub angular: AngularConfig,
    pub embedding: EmbeddingKind,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Combined,
            rc_enabled: true,
            frame_scale: FrameScale::Full,
            alpha: 0.5,
            beta_factor: 0.5,
            fcm: FcmConfig::default(),
            flow: FlowConfig::default(),
            corner: CornerConfig::default(),
            angular: AngularConfig::default(),
            embedding: EmbeddingKind::Handcrafted,
        }
    }
}

impl TrackerConfig {
    pub fn new(mode: Mode, rc_enabled: bool, frame_scale: FrameScale) -> Self {
        Self {
            mode,
            rc_enabled,
            frame_scale,
            ..Self::default()
        }
    }

    /// Short identifier such as `combined_rc_fs`.
    pub fn id(&self) -> String {
        format!(
            "{}_{}_{}",
            self.mode,
            if self.rc_enabled { "rc" } else { "norc" },
            self.frame_scale.short()
        )
    }

    pub fn gate(&self) -> SelectionGate {
        SelectionGate {
            alpha: self.alpha,
            beta_factor: self.beta_factor,
        }
    }

    pub fn validate(&self) -> Result<(), TrackError> {
        let bad = |m: &str| Err(TrackError::InvalidConfig(m.to_string()));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if !(self.beta_factor > 0.0) {
            return bad("beta_factor must be positive");
        }
        if self.flow.window < 3 || self.flow.window.is_multiple_of(2) || self.flow.pyramid_levels == 0 {
            return bad("flow window must be odd and >= 3 with at least one pyramid level");
        }
        let c = &self.corner;
        if !(c.quality_level > 0.0 && c.quality_level <= 1.0) || c.block_size == 0 || c.max_corners == 0 {
            return bad("corner parameters must be positive with quality_level <= 1");
        }
        if !(self.fcm.search_expand > 0.0) {
            return bad("search_expand must be positive");
        }
        if let Err(e) = self.fcm.validate() {
            return Err(TrackError::InvalidConfig(e.to_string()));
        }
        let a = &self.angular;
        if !(a.min_step_factor > 0.0 && a.min_step_factor <= a.max_step_factor && a.min_height > 0.0) {
            return bad("angular clamps must be positive and ordered");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("invalid tracker configuration: {0}")]
    InvalidConfig(String),
    #[error("initial box {0:?} is not inside the frame")]
    InitOutsideFrame(BBox),
    #[error("frame {got} arrived after frame {last}")]
    OutOfOrder { last: usize, got: usize },
    #[error("frame is {got:?}, sequence started at {expected:?}")]
    FrameSize {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Fcm(#[from] FcmError),
    #[error(transparent)]
    Embedding(#[from] fcmseg::embedding::SidecarError),
}

/// Time source for the stage timers.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
}

/// Wall-clock time since construction.
#[derive(Debug, Clone)]
pub struct MonotonicClock {
    start: Instant,
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self { start: Instant::now() }
    }
}

impl Clock for MonotonicClock {
    fn now(&self) -> Duration {
        self.start.elapsed()
    }
}

/// Advances by a fixed step on every reading, so timings depend only on how
/// often the clock is read.
#[derive(Debug, Default)]
pub struct TickClock {
    ticks: AtomicU64,
    step: Duration,
}

impl TickClock {
    pub fn new(step: Duration) -> Self {
        Self {
            ticks: AtomicU64::new(0),
            step,
        }
    }

    pub fn readings(&self) -> u64 {
        self.ticks.load(Ordering::SeqCst)
    }
}

impl Clock for TickClock {
    fn now(&self) -> Duration {
        let t = self.ticks.fetch_add(1, Ordering::SeqCst);
        self.step * t as u32
    }
}

/// Accumulated time per pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub init: Duration,
    pub flow: Duration,
    pub correction: Duration,
    pub segmentation: Duration,
    pub scaling: Duration,
    pub total: Duration,
}

/// Mutable per-sequence state, in working (possibly half-resolution) coordinates.
#[derive(Debug, Clone)]
pub struct TrackState {
    pub rt_template: ReferenceTemplate,
    pub rt_scale_ff: f64,
    pub corr_margin: Margin,
    pub prev_center: PointF,
    pub prev_bbox: BBox,
    pub tracked_points: Vec<PointF>,
    pub frame_h_ff: f64,
}

/// What happened during the last step, for diagnostics and overlays.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub anchor: PointF,
    pub center: PointF,
    pub redetected: bool,
    pub segment: Option<BBox>,
    pub segment_similarity: Option<f64>,
}

pub struct SessionOptions {
    pub sequence_id: String,
    pub clock: Arc<dyn Clock>,
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self {
            sequence_id: String::new(),
            clock: Arc::new(MonotonicClock::default()),
        }
    }
}

pub struct TrackerSession {
    config: TrackerConfig,
    state: TrackState,
    frame_count: usize,
    timings: StageTimings,
    pyramid: Pyramid,
    levels: usize,
    dims: (usize, usize),
    last_index: usize,
    embedder: Box<dyn Embedder>,
    rt_embedding: Option<Embedding>,
    sequence_id: String,
    clock: Arc<dyn Clock>,
    initial_box: BBox,
    last_step: Option<StepInfo>,
}

impl fmt::Debug for TrackerSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrackerSession")
            .field("config", &self.config.id())
            .field("frame_count", &self.frame_count)
            .field("state", &self.state)
            .finish_non_exhaustive()
    }
}

impl TrackerSession {
    pub fn init(first_frame: &Frame, init_box: BBox, config: TrackerConfig) -> Result<Self, TrackError> {
        Self::init_with(first_frame, init_box, config, SessionOptions::default())
    }

    pub fn init_with(first_frame: &Frame, init_box: BBox, config: TrackerConfig, opts: SessionOptions) -> Result<Self, TrackError> {
        config.validate()?;
        if !init_box.is_valid() || !first_frame.bounds().contains(init_box.center()) {
            return Err(TrackError::InitOutsideFrame(init_box));
        }
        let clock = opts.clock;
        let t0 = clock.now();
        let embedder = config.embedding.load()?;

        let scale = config.frame_scale.factor();
        let work = WorkFrame::new(first_frame, config.frame_scale);
        let (w, h) = (work.width(), work.height());
        let rt_box = init_box.scaled(scale).clip_to(w as f64, h as f64);
        let rt = corners::ReferenceTemplate::capture(work.frame(), rt_box)?;
        let set = corners::adaptive_select(work.frame(), &rt, &config.corner, config.gate());
        log::debug!(
            "init: anchor {:?} after {} round(s), accepted {}",
            set.anchor,
            set.iterations,
            set.accepted
        );
        let margin = correction::init_margin(rt_box.center(), set.anchor);
        let frame_h_ff = h as f64;
        let rt_scale_ff = correction::relative_scale(rt_box.h, frame_h_ff);

        let levels = config.flow.pyramid_levels.min(imgproc::max_pyramid_levels(w, h)).max(1);
        let pyramid = imgproc::build_pyramid(work.gray(), levels)?;

        let rt_embedding = config.mode.segments().then(|| {
            let ctx = EmbedContext {
                sequence_id: &opts.sequence_id,
                frame_index: first_frame.index,
                bbox: init_box,
            };
            embedder.embed(&ctx, &rt.patch)
        });

        let state = TrackState {
            rt_template: rt,
            rt_scale_ff,
            corr_margin: margin,
            prev_center: rt_box.center(),
            prev_bbox: rt_box,
            tracked_points: set.points,
            frame_h_ff,
        };
        let elapsed = clock.now().saturating_sub(t0);
        Ok(Self {
            config,
            state,
            frame_count: 1,
            timings: StageTimings {
                init: elapsed,
                total: elapsed,
                ..StageTimings::default()
            },
            pyramid,
            levels,
            dims: (first_frame.width(), first_frame.height()),
            last_index: first_frame.index,
            embedder,
            rt_embedding,
            sequence_id: opts.sequence_id,
            clock,
            initial_box: init_box,
            last_step: None,
        })
    }

    /// The box reported for the first frame: the initial box itself.
    pub fn initial_box(&self) -> BBox {
        self.initial_box
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn state(&self) -> &TrackState {
        &self.state
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn timings(&self) -> StageTimings {
        self.timings
    }

    pub fn last_step(&self) -> Option<&StepInfo> {
        self.last_step.as_ref()
    }

    /// Tracks the object into `frame` and returns its box in full-frame coordinates.
    pub fn step(&mut self, frame: &Frame) -> Result<BBox, TrackError> {
        if frame.index <= self.last_index {
            return Err(TrackError::OutOfOrder {
                last: self.last_index,
                got: frame.index,
            });
        }
        if (frame.width(), frame.height()) != self.dims {
            return Err(TrackError::FrameSize {
                expected: self.dims,
                got: (frame.width(), frame.height()),
            });
        }
        let clock = Arc::clone(&self.clock);
        let t_start = clock.now();

        let work = WorkFrame::new(frame, self.config.frame_scale);
        let (w, h) = (work.width() as f64, work.height() as f64);
        let next = imgproc::build_pyramid(work.gray(), self.levels)?;
        let tracked = flow::lk_track(&self.pyramid, &next, &self.state.tracked_points, &self.config.flow)?;
        let rt_scale_f = correction::relative_scale(self.state.prev_bbox.h, h);
        let ratio = rt_scale_f / self.state.rt_scale_ff;

        let mut redetected = false;
        let anchor = if tracked.all_ok() && !tracked.new_points.is_empty() {
            self.state.tracked_points = tracked.new_points;
            corners::convex_hull_centroid(&self.state.tracked_points)
        } else {
            redetected = true;
            self.redetect(work.frame(), ratio)
        };
        let t_flow = clock.now();

        let center = if self.config.rc_enabled {
            correction::corrected_point(&CorrectionInputs {
                anchor_now: anchor,
                margin: self.state.corr_margin,
                rt_scale_ff: self.state.rt_scale_ff,
                rt_scale_f,
            })
        } else {
            anchor
        };
        let t_corr = clock.now();

        let prev = self.state.prev_bbox;
        let base = BBox::centered_at(center, prev.w, prev.h);
        let (segment, similarity) = if self.config.mode.segments() {
            self.segment(work.frame(), center, &prev)
        } else {
            (None, None)
        };
        let t_seg = clock.now();

        let mut out = match self.config.mode {
            Mode::Fcm => segment.unwrap_or(base),
            Mode::Angular | Mode::Combined => {
                let b = segment.unwrap_or(base);
                let step = MotionStep::new(self.state.prev_center, b.center());
                angular::angular_scale(&step, &b, self.state.prev_center.y, b.cy, h, &self.config.angular)
            }
        };
        debug_assert!(self.config.mode.rescales() || segment.is_some() || out == base);
        out = out.clip_to(w, h);
        let t_end = clock.now();

        self.state.prev_bbox = out;
        self.state.prev_center = out.center();
        self.pyramid = next;
        self.last_index = frame.index;
        self.frame_count += 1;
        self.last_step = Some(StepInfo {
            anchor,
            center,
            redetected,
            segment,
            segment_similarity: similarity,
        });

        let tm = &mut self.timings;
        tm.flow += t_flow.saturating_sub(t_start);
        tm.correction += t_corr.saturating_sub(t_flow);
        tm.segmentation += t_seg.saturating_sub(t_corr);
        tm.scaling += t_end.saturating_sub(t_seg);
        tm.total += t_end.saturating_sub(t_start);

        Ok(out.scaled(1.0 / self.config.frame_scale.factor()))
    }

    /// Re-runs corner selection around the previous position after the flow
    /// lost its points, and re-derives the correction margin there.
    fn redetect(&mut self, work: &Frame, ratio: f64) -> PointF {
        let prev = self.state.prev_bbox;
        let rt = ReferenceTemplate {
            bbox: prev,
            ..self.state.rt_template.clone()
        };
        let region = prev.expanded(2.0).clip_to(work.width() as f64, work.height() as f64);
        let set = corners::adaptive_select_in(work, &rt, &region, &self.config.corner, self.config.gate());
        log::debug!("redetect at frame {}: anchor {:?}, accepted {}", work.index, set.anchor, set.accepted);
        let m = correction::init_margin(prev.center(), set.anchor);
        self.state.corr_margin = if ratio > 0.0 { m.scaled(1.0 / ratio) } else { m };
        self.state.tracked_points = set.points;
        set.anchor
    }

    fn segment(&self, work: &Frame, center: PointF, prev: &BBox) -> (Option<BBox>, Option<f64>) {
        let Some(template) = self.rt_embedding.as_ref() else {
            return (None, None);
        };
        let cfg = &self.config.fcm;
        let search = BBox::centered_at(center, prev.w * cfg.search_expand, prev.h * cfg.search_expand);
        let Some(rect) = imgproc::rasterize(&search, work.width(), work.height()) else {
            return (None, None);
        };
        let patch = work.gray().crop(rect.x, rect.y, rect.w, rect.h);
        let result = match fcmseg::fcm_cluster(&patch, cfg) {
            Ok(r) => r,
            Err(e) => {
                log::debug!("segmentation skipped: {e}");
                return (None, None);
            }
        };
        let min_area = cfg.min_area_frac * self.state.rt_template.bbox.area();
        let mut cands = fcmseg::extract_segments(&result, rect, min_area, center);
        let to_full = 1.0 / self.config.frame_scale.factor();
        for c in cands.iter_mut() {
            if let Ok(p) = imgproc::extract_patch(work, &c.bbox) {
                let ctx = EmbedContext {
                    sequence_id: &self.sequence_id,
                    frame_index: work.index,
                    bbox: c.bbox.scaled(to_full),
                };
                c.embedding = Some(self.embedder.embed(&ctx, &p));
            }
        }
        let threshold = cfg.min_similarity.unwrap_or(self.config.alpha);
        match fcmseg::select_segment(template, &mut cands, threshold) {
            Some(i) => (Some(cands[i].bbox), cands[i].similarity),
            None => (None, None),
        }
    }
}

/// A frame at working resolution. At half scale the grayscale plane is
/// downsampled up front and the color image only when something asks for it.
struct WorkFrame<'a> {
    source: &'a Frame,
    scale: FrameScale,
    gray: Cow<'a, GrayPlane>,
    half: OnceCell<Frame>,
}

impl<'a> WorkFrame<'a> {
    fn new(source: &'a Frame, scale: FrameScale) -> Self {
        let gray = match scale {
            FrameScale::Full => Cow::Borrowed(source.gray()),
            FrameScale::Half => Cow::Owned(imgproc::half_gray(source.gray())),
        };
        Self {
            source,
            scale,
            gray,
            half: OnceCell::new(),
        }
    }

    fn gray(&self) -> &GrayPlane {
        &self.gray
    }

    fn width(&self) -> usize {
        self.gray.width
    }

    fn height(&self) -> usize {
        self.gray.height
    }

    fn frame(&self) -> &Frame {
        match self.scale {
            FrameScale::Full => self.source,
            FrameScale::Half => self
                .half
                .get_or_init(|| imgproc::resize_half_with_gray(self.source, self.gray.clone().into_owned())),
        }
    }
}

/// Anything that can follow one object through a sequence.
pub trait SequenceTracker: Send {
    /// Initializes on the first frame; returns the first reported box.
    fn start(&mut self, first: &Frame, init: BBox) -> Result<BBox, TrackError>;
    fn track(&mut self, frame: &Frame) -> Result<BBox, TrackError>;
    /// Time spent inside the tracker so far.
    fn elapsed(&self) -> Duration;
}

/// [`SequenceTracker`] over [`TrackerSession`].
pub struct DroTracker {
    config: TrackerConfig,
    sequence_id: String,
    clock: Arc<dyn Clock>,
    session: Option<TrackerSession>,
}

impl DroTracker {
    pub fn new(config: TrackerConfig, sequence_id: &str, clock: Arc<dyn Clock>) -> Self {
        Self {
            config,
            sequence_id: sequence_id.to_string(),
            clock,
            session: None,
        }
    }

    pub fn session(&self) -> Option<&TrackerSession> {
        self.session.as_ref()
    }
}

impl SequenceTracker for DroTracker {
    fn start(&mut self, first: &Frame, init: BBox) -> Result<BBox, TrackError> {
        let s = TrackerSession::init_with(
            first,
            init,
            self.config.clone(),
            SessionOptions {
                sequence_id: self.sequence_id.clone(),
                clock: Arc::clone(&self.clock),
            },
        )?;
        let b = s.initial_box();
        self.session = Some(s);
        Ok(b)
    }

    fn track(&mut self, frame: &Frame) -> Result<BBox, TrackError> {
        self.session
            .as_mut()
            .expect("track called before start")
            .step(frame)
    }

    fn elapsed(&self) -> Duration {
        self.session.as_ref().map(|s| s.timings().total).unwrap_or_default()
    }
}
