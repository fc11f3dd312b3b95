//! One-pass evaluation: per-frame overlap and center error, precision and
//! success curves, and a benchmark runner over sequences and configurations.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use thiserror::Error;

use crate::datasets::{DatasetError, FrameSource};
use crate::tracker::{Clock, DroTracker, FrameScale, Mode, MonotonicClock, SequenceTracker, TickClock, TrackError, TrackerConfig};
use crate::types::{bbox_iou, center_distance, BBox};

/// Precision thresholds 0..=100 px; success thresholds 0, 0.01, ..., 1.
pub const CURVE_POINTS: usize = 101;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("sequence has no ground truth")]
    NoGroundTruth,
    #[error("no annotated frame to evaluate")]
    NoValidFrames,
    #[error("{predictions} predictions for {frames} frames")]
    LengthMismatch { predictions: usize, frames: usize },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("tracking failed at frame {frame}: {source}")]
    Track {
        frame: usize,
        #[source]
        source: TrackError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMetrics {
    pub frame_index: usize,
    pub iou: f64,
    pub center_error: f64,
    /// False where the ground truth is missing; such frames are skipped.
    pub valid: bool,
}

pub fn frame_metrics(frame_index: usize, pred: &BBox, gt: Option<&BBox>) -> FrameMetrics {
    match gt {
        Some(g) if g.is_valid() => FrameMetrics {
            frame_index,
            iou: bbox_iou(pred, g),
            center_error: center_distance(pred, g),
            valid: true,
        },
        _ => FrameMetrics {
            frame_index,
            iou: f64::NAN,
            center_error: f64::NAN,
            valid: false,
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMetrics {
    pub frames: usize,
    pub valid_frames: usize,
    pub mean_iou: f64,
    pub mean_center_error: f64,
    /// Fraction of frames with center error ≤ ε for ε = 0..=100.
    pub precision_curve: Vec<f64>,
    /// Fraction of frames with IoU ≥ τ for τ = 0, 0.01, ..., 1.
    pub success_curve: Vec<f64>,
    pub auc: f64,
    pub p20: f64,
    pub p100: f64,
    pub elapsed: Duration,
    pub fps: f64,
}

pub fn aggregate(metrics: &[FrameMetrics], elapsed: Duration) -> Result<SequenceMetrics, EvalError> {
    let valid: Vec<&FrameMetrics> = metrics.iter().filter(|m| m.valid).collect();
    if valid.is_empty() {
        return Err(EvalError::NoValidFrames);
    }
    let n = valid.len() as f64;
    let precision_curve: Vec<f64> = (0..CURVE_POINTS)
        .map(|e| valid.iter().filter(|m| m.center_error <= e as f64).count() as f64 / n)
        .collect();
    let success_curve: Vec<f64> = (0..CURVE_POINTS)
        .map(|i| {
            let tau = i as f64 / (CURVE_POINTS - 1) as f64;
            valid.iter().filter(|m| m.iou >= tau).count() as f64 / n
        })
        .collect();
    let secs = elapsed.as_secs_f64();
    Ok(SequenceMetrics {
        frames: metrics.len(),
        valid_frames: valid.len(),
        mean_iou: valid.iter().map(|m| m.iou).sum::<f64>() / n,
        mean_center_error: valid.iter().map(|m| m.center_error).sum::<f64>() / n,
        auc: success_curve.iter().sum::<f64>() / CURVE_POINTS as f64,
        p20: precision_curve[20],
        p100: precision_curve[100],
        precision_curve,
        success_curve,
        elapsed,
        fps: if secs > 0.0 { metrics.len() as f64 / secs } else { f64::INFINITY },
    })
}

/// Scores predictions against the annotations of a sequence.
pub fn evaluate(predictions: &[BBox], ground_truth: &[Option<BBox>], elapsed: Duration) -> Result<SequenceMetrics, EvalError> {
    if predictions.len() != ground_truth.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            frames: ground_truth.len(),
        });
    }
    let per_frame: Vec<FrameMetrics> = predictions
        .iter()
        .zip(ground_truth)
        .enumerate()
        .map(|(i, (p, g))| frame_metrics(i, p, g.as_ref()))
        .collect();
    aggregate(&per_frame, elapsed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackRun {
    pub predictions: Vec<BBox>,
    pub elapsed: Duration,
}

/// Runs `tracker` over every frame of `source`, initialized from the first
/// annotation or `init`. Decoding is not timed.
pub fn run_tracker(source: &dyn FrameSource, tracker: &mut dyn SequenceTracker, init: Option<BBox>) -> Result<TrackRun, EvalError> {
    let init = match init {
        Some(b) => b,
        None => source
            .ground_truth()
            .and_then(|g| g.first().copied().flatten())
            .ok_or(EvalError::NoGroundTruth)?,
    };
    let mut predictions = Vec::with_capacity(source.len());
    for i in 0..source.len() {
        let frame = source.frame(i)?;
        let b = if i == 0 { tracker.start(&frame, init) } else { tracker.track(&frame) };
        predictions.push(b.map_err(|source| EvalError::Track { frame: i, source })?);
    }
    Ok(TrackRun {
        predictions,
        elapsed: tracker.elapsed(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub id: String,
    pub tracker: TrackerConfig,
}

impl BenchConfig {
    pub fn new(tracker: TrackerConfig) -> Self {
        Self {
            id: tracker.id(),
            tracker,
        }
    }
}

/// Every combination of the given modes, correction settings and scales, in
/// that nesting order.
pub fn config_matrix(modes: &[Mode], rc: &[bool], scales: &[FrameScale], base: &TrackerConfig) -> Vec<BenchConfig> {
    let mut out = Vec::new();
    for &mode in modes {
        for &rc_enabled in rc {
            for &frame_scale in scales {
                out.push(BenchConfig::new(TrackerConfig {
                    mode,
                    rc_enabled,
                    frame_scale,
                    ..base.clone()
                }));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClockKind {
    #[default]
    Monotonic,
    /// Deterministic clock advancing 1 ms per reading.
    Ticks,
}

impl ClockKind {
    pub fn make(self) -> Arc<dyn Clock> {
        match self {
            ClockKind::Monotonic => Arc::new(MonotonicClock::default()),
            ClockKind::Ticks => Arc::new(TickClock::new(Duration::from_millis(1))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchOptions {
    pub workers: usize,
    pub clock: ClockKind,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            clock: ClockKind::Monotonic,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub sequence: String,
    pub config: BenchConfig,
    pub outcome: Result<SequenceMetrics, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchTable {
    /// Ordered by sequence id, then by configuration order.
    pub rows: Vec<BenchRow>,
    /// One per configuration, averaged over the sequences that succeeded.
    pub means: Vec<BenchRow>,
}

pub const CSV_HEADER: &str = "sequence,config,mode,rc,frame_scale,frames,mean_iou,mean_dist,p20,p100,auc,fps";

/// `v` with six significant digits.
pub fn fmt_sig(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    if (-4..6).contains(&exp) {
        let s = format!("{:.*}", (5 - exp) as usize, v);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{v:.5e}")
    }
}

impl BenchTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in self.rows.iter().chain(&self.means) {
            let c = &r.config.tracker;
            let (frames, vals) = match &r.outcome {
                Ok(m) => (m.frames, [m.mean_iou, m.mean_center_error, m.p20, m.p100, m.auc, m.fps]),
                Err(_) => (0, [f64::NAN; 6]),
            };
            let _ = write!(s, "{},{},{},{},{},{}", r.sequence, r.config.id, c.mode, c.rc_enabled, c.frame_scale.as_str(), frames);
            for v in vals {
                let _ = write!(s, ",{}", fmt_sig(v));
            }
            s.push('\n');
        }
        s
    }

    /// Per-configuration summary: precision at 100 and 20 px, mean IoU, seconds
    /// per frame and frames per second.
    pub fn summary(&self) -> String {
        let mut s = format!("{:<20} {:>8} {:>8} {:>8} {:>10} {:>9}\n", "Tracker", "P.100", "P.20", "IoU", "Time(s)", "fps");
        for r in &self.means {
            match &r.outcome {
                Ok(m) => {
                    let _ = writeln!(
                        s,
                        "{:<20} {:>8.3} {:>8.3} {:>8.3} {:>10.4} {:>9.1}",
                        r.config.id,
                        m.p100,
                        m.p20,
                        m.mean_iou,
                        1.0 / m.fps,
                        m.fps
                    );
                }
                Err(e) => {
                    let _ = writeln!(s, "{:<20} failed: {e}", r.config.id);
                }
            }
        }
        s
    }
}

fn mean_row(config: &BenchConfig, rows: &[&BenchRow]) -> BenchRow {
    let ok: Vec<&SequenceMetrics> = rows.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
    let outcome = if ok.is_empty() {
        Err("no sequence succeeded".to_string())
    } else {
        let n = ok.len() as f64;
        let avg = |f: &dyn Fn(&SequenceMetrics) -> f64| ok.iter().map(|m| f(m)).sum::<f64>() / n;
        let avg_curve = |f: &dyn Fn(&SequenceMetrics) -> &Vec<f64>| -> Vec<f64> {
            (0..CURVE_POINTS).map(|i| ok.iter().map(|m| f(m)[i]).sum::<f64>() / n).collect()
        };
        let frames: usize = ok.iter().map(|m| m.frames).sum();
        let elapsed: Duration = ok.iter().map(|m| m.elapsed).sum();
        let secs = elapsed.as_secs_f64();
        Ok(SequenceMetrics {
            frames,
            valid_frames: ok.iter().map(|m| m.valid_frames).sum(),
            mean_iou: avg(&|m| m.mean_iou),
            mean_center_error: avg(&|m| m.mean_center_error),
            precision_curve: avg_curve(&|m| &m.precision_curve),
            success_curve: avg_curve(&|m| &m.success_curve),
            auc: avg(&|m| m.auc),
            p20: avg(&|m| m.p20),
            p100: avg(&|m| m.p100),
            elapsed,
            fps: if secs > 0.0 { frames as f64 / secs } else { f64::INFINITY },
        })
    };
    BenchRow {
        sequence: "mean".into(),
        config: config.clone(),
        outcome,
    }
}

/// Runs every configuration on every sequence with the built-in tracker.
pub fn benchmark_run(sequences: &[&dyn FrameSource], configs: &[BenchConfig], opts: &BenchOptions) -> BenchTable {
    let clock = opts.clock;
    benchmark_with(sequences, configs, opts.workers, &move |cfg: &BenchConfig, seq: &str| {
        Box::new(DroTracker::new(cfg.tracker.clone(), seq, clock.make())) as Box<dyn SequenceTracker>
    })
}

/// Runs trackers built by `factory`. A failing sequence yields a row with an
/// error and does not stop the others.
pub fn benchmark_with(
    sequences: &[&dyn FrameSource],
    configs: &[BenchConfig],
    workers: usize,
    factory: &(dyn Fn(&BenchConfig, &str) -> Box<dyn SequenceTracker> + Sync),
) -> BenchTable {
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    order.sort_by(|&a, &b| sequences[a].id().cmp(sequences[b].id()));
    let jobs: Vec<(usize, usize)> = order.iter().flat_map(|&s| (0..configs.len()).map(move |c| (s, c))).collect();

    let run = |&(s, c): &(usize, usize)| -> BenchRow {
        let seq = sequences[s];
        let cfg = &configs[c];
        let outcome = (|| {
            let gt = seq.ground_truth().ok_or(EvalError::NoGroundTruth)?;
            let mut tracker = factory(cfg, seq.id());
            let run = run_tracker(seq, tracker.as_mut(), None)?;
            evaluate(&run.predictions, gt, run.elapsed)
        })()
        .map_err(|e| {
            log::error!("{} / {}: {e}", seq.id(), cfg.id);
            e.to_string()
        });
        BenchRow {
            sequence: seq.id().to_string(),
            config: cfg.clone(),
            outcome,
        }
    };

    let rows: Vec<BenchRow> = if workers <= 1 {
        jobs.iter().map(run).collect()
    } else {
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => pool.install(|| jobs.par_iter().map(run).collect()),
            Err(e) => {
                log::warn!("thread pool unavailable ({e}), running sequentially");
                jobs.iter().map(run).collect()
            }
        }
    };

    let means = configs
        .iter()
        .map(|cfg| {
            let mine: Vec<&BenchRow> = rows.iter().filter(|r| r.config.id == cfg.id).collect();
            mean_row(cfg, &mine)
        })
        .collect();
    BenchTable { rows, means }
}
