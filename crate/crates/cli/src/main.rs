//! `drotrack` command line: track one sequence, benchmark configuration
//! matrices, generate synthetic sequences.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use drotrack::datasets::{self, DatasetError, FrameSource, Motion, SynthSpec};
use drotrack::eval::{self, BenchConfig, BenchOptions, BenchRow, BenchTable, ClockKind};
use drotrack::fcmseg::EmbeddingKind;
use drotrack::tracker::{SessionOptions, TrackError};
use drotrack::{BBox, Frame, FrameScale, Mode, TrackerConfig, TrackerSession};

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_TRACK: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "drotrack", version, about = "Single-object tracking for drone frame sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Track the object through one sequence.
    Track(TrackArgs),
    /// Run a configuration matrix over every sequence under a root directory.
    Bench(BenchArgs),
    /// Write a synthetic sequence with exact ground truth.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct TrackArgs {
    /// Sequence directory (images under `img/` or directly inside).
    #[arg(long)]
    seq: PathBuf,
    /// Ground-truth file; defaults to `groundtruth_rect.txt` in the sequence.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Initial box `cx,cy,w,h` in full-frame pixels; defaults to the first ground-truth box.
    #[arg(long, value_parser = parse_box)]
    init: Option<BBox>,
    #[arg(long, value_parser = parse_mode)]
    mode: Mode,
    /// Disable relative correction.
    #[arg(long)]
    no_rc: bool,
    /// Track on half-resolution frames.
    #[arg(long)]
    half: bool,
    /// Predictions file (`frame,cx,cy,w,h` per line); standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Metrics CSV; defaults to `<out>_metrics.csv` next to the predictions file.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Write one PNG per frame with the prediction (green) and ground truth (red).
    #[arg(long)]
    overlay_dir: Option<PathBuf>,
    /// Precomputed segment embeddings (`seq,frame,cx,cy,w,h,v1 v2 ...`).
    #[arg(long)]
    embed_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Toggle {
    Both,
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScaleChoice {
    Both,
    Full,
    Half,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Dataset root holding one directory per sequence (or a single sequence).
    #[arg(long)]
    root: PathBuf,
    /// Comma-separated subset of angular,fcm,combined.
    #[arg(long, value_delimiter = ',', value_parser = parse_mode)]
    modes: Option<Vec<Mode>>,
    #[arg(long, value_enum, default_value_t = Toggle::Both)]
    rc: Toggle,
    #[arg(long, value_enum, default_value_t = ScaleChoice::Both)]
    scale: ScaleChoice,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    workers: u16,
    /// Time with a fixed 1 ms per clock reading, making fps reproducible.
    #[arg(long)]
    tick_clock: bool,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory; receives `img/` and `groundtruth_rect.txt`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    frames: u32,
    /// Frame size `WxH`.
    #[arg(long, value_parser = parse_size)]
    size: (usize, usize),
    /// `static` or `linear:dx,dy` (pixels per frame).
    #[arg(long, value_parser = parse_motion)]
    motion: Motion,
    /// Target size in the last frame relative to the first.
    #[arg(long, default_value_t = 1.0)]
    size_growth: f64,
    /// Target size `WxH` in the first frame.
    #[arg(long, value_parser = parse_size, default_value = "40x40")]
    target: (usize, usize),
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::from_str(s)
}

fn parse_motion(s: &str) -> Result<Motion, String> {
    Motion::from_str(s)
}

fn parse_box(s: &str) -> Result<BBox, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("'{t}' is not a number")))
        .collect::<Result<_, _>>()?;
    match *v.as_slice() {
        [cx, cy, w, h] if v.iter().all(|x| x.is_finite()) && w > 0.0 && h > 0.0 => Ok(BBox::new(cx, cy, w, h)),
        [_, _, _, _] => Err("box needs finite values and positive width and height".into()),
        _ => Err(format!("expected cx,cy,w,h, got {} values", v.len())),
    }
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got '{s}'"))?;
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("'{t}' is not a positive integer"));
    let (w, h) = (num(w)?, num(h)?);
    if w == 0 || h == 0 {
        return Err("sizes must be positive".into());
    }
    Ok((w, h))
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            msg: msg.into(),
        }
    }

    fn io(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_IO,
            msg: msg.into(),
        }
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::InvalidSpec(_) | DatasetError::TrajectoryLeavesFrame { .. } => Failure::usage(e.to_string()),
            _ => Failure::io(e.to_string()),
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DROTRACK_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Track(a) => cmd_track(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn metrics_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "predictions".into());
    out.with_file_name(format!("{stem}_metrics.csv"))
}

fn cmd_track(a: TrackArgs) -> Result<(), Failure> {
    if !a.seq.is_dir() {
        return Err(Failure::io(format!("sequence directory {} does not exist", a.seq.display())));
    }
    let has_gt = a.gt.is_some() || a.seq.join(datasets::GROUND_TRUTH_FILE).is_file();
    if a.init.is_none() && !has_gt {
        return Err(Failure::usage(format!(
            "no initial box: pass --init cx,cy,w,h or provide ground truth with --gt (or {} in the sequence)",
            datasets::GROUND_TRUTH_FILE
        )));
    }
    let seq = datasets::load_sequence(&a.seq, a.gt.as_deref())?;
    let gt = seq.ground_truth.clone();
    let init = match a.init.or_else(|| gt.as_ref().and_then(|g| g.first().copied().flatten())) {
        Some(b) => b,
        None => return Err(Failure::usage("the first ground-truth entry is absent; pass --init cx,cy,w,h")),
    };
    let config = TrackerConfig {
        embedding: a.embed_file.clone().map(EmbeddingKind::ExternalFile).unwrap_or_default(),
        ..TrackerConfig::new(a.mode, !a.no_rc, if a.half { FrameScale::Half } else { FrameScale::Full })
    };
    if let Some(dir) = &a.overlay_dir {
        fs::create_dir_all(dir).map_err(|e| Failure::io(format!("{}: {e}", dir.display())))?;
    }

    let track_err = |frame: usize, e: TrackError| Failure {
        code: match e {
            TrackError::Embedding(_) => EXIT_IO,
            TrackError::InvalidConfig(_) | TrackError::InitOutsideFrame(_) => EXIT_USAGE,
            _ => EXIT_TRACK,
        },
        msg: format!("tracking aborted at frame {frame}: {e}"),
    };

    let mut predictions = Vec::with_capacity(seq.len());
    let mut session: Option<TrackerSession> = None;
    for i in 0..seq.len() {
        let frame = seq.frame(i)?;
        let b = match session.as_mut() {
            None => {
                let opts = SessionOptions {
                    sequence_id: seq.id.clone(),
                    ..SessionOptions::default()
                };
                let s = TrackerSession::init_with(&frame, init, config.clone(), opts).map_err(|e| track_err(i, e))?;
                let b = s.initial_box();
                session = Some(s);
                b
            }
            Some(s) => s.step(&frame).map_err(|e| track_err(i, e))?,
        };
        if let Some(dir) = &a.overlay_dir {
            let g = gt.as_ref().and_then(|g| g.get(i).copied().flatten());
            write_overlay(&dir.join(format!("{:06}.png", i + 1)), &frame, &b, g.as_ref())?;
        }
        predictions.push(b);
    }
    let session = session.ok_or_else(|| Failure::io("sequence has no frames"))?;
    let elapsed = session.timings().total;

    let mut text = String::new();
    for (i, b) in predictions.iter().enumerate() {
        text.push_str(&format!("{},{},{},{},{}\n", i, b.cx, b.cy, b.w, b.h));
    }
    match &a.out {
        Some(p) => write_file(p, &text)?,
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::io(format!("stdout: {e}")))?,
    }

    if let Some(g) = &gt {
        match eval::evaluate(&predictions, g, elapsed) {
            Ok(m) => {
                eprintln!(
                    "{}: mean IoU {:.3}, mean error {:.2} px, P.20 {:.3}, P.100 {:.3}, AUC {:.3}, {:.1} fps",
                    seq.id, m.mean_iou, m.mean_center_error, m.p20, m.p100, m.auc, m.fps
                );
                let table = BenchTable {
                    rows: vec![BenchRow {
                        sequence: seq.id.clone(),
                        config: BenchConfig::new(config),
                        outcome: Ok(m),
                    }],
                    means: Vec::new(),
                };
                if let Some(p) = a.metrics.clone().or_else(|| a.out.as_deref().map(metrics_path)) {
                    write_file(&p, &table.to_csv())?;
                }
            }
            Err(e) => log::warn!("no metrics: {e}"),
        }
    }
    Ok(())
}

fn draw_rect(img: &mut image::RgbImage, b: &BBox, color: [u8; 3]) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x0 = b.left().round() as i64;
    let y0 = b.top().round() as i64;
    let x1 = b.right().round() as i64 - 1;
    let y1 = b.bottom().round() as i64 - 1;
    let mut put = |x: i64, y: i64| {
        if (0..w).contains(&x) && (0..h).contains(&y) {
            img.put_pixel(x as u32, y as u32, image::Rgb(color));
        }
    };
    for x in x0..=x1 {
        put(x, y0);
        put(x, y1);
    }
    for y in y0..=y1 {
        put(x0, y);
        put(x1, y);
    }
}

fn write_overlay(path: &Path, frame: &Frame, pred: &BBox, gt: Option<&BBox>) -> Result<(), Failure> {
    let mut img = image::RgbImage::from_raw(frame.width() as u32, frame.height() as u32, frame.color().to_vec())
        .expect("frame buffer matches its size");
    if let Some(g) = gt {
        draw_rect(&mut img, g, [255, 0, 0]);
    }
    draw_rect(&mut img, pred, [0, 255, 0]);
    img.save(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn cmd_bench(a: BenchArgs) -> Result<(), Failure> {
    let modes = a.modes.clone().unwrap_or_else(|| Mode::ALL.to_vec());
    if modes.is_empty() {
        return Err(Failure::usage("--modes must name at least one mode"));
    }
    let rc: &[bool] = match a.rc {
        Toggle::Both => &[true, false],
        Toggle::On => &[true],
        Toggle::Off => &[false],
    };
    let scales: &[FrameScale] = match a.scale {
        ScaleChoice::Both => &[FrameScale::Full, FrameScale::Half],
        ScaleChoice::Full => &[FrameScale::Full],
        ScaleChoice::Half => &[FrameScale::Half],
    };
    let sequences = datasets::load_dataset(&a.root).map_err(|e| Failure::io(e.to_string()))?;
    let configs = eval::config_matrix(&modes, rc, scales, &TrackerConfig::default());
    log::info!("{} sequence(s) x {} configuration(s)", sequences.len(), configs.len());
    let sources: Vec<&dyn FrameSource> = sequences.iter().map(|s| s as &dyn FrameSource).collect();
    let opts = BenchOptions {
        workers: a.workers as usize,
        clock: if a.tick_clock { ClockKind::Ticks } else { ClockKind::Monotonic },
    };
    let table = eval::benchmark_run(&sources, &configs, &opts);
    write_file(&a.out, &table.to_csv())?;
    print!("{}", table.summary());
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<(), Failure> {
    if !(a.size_growth.is_finite() && a.size_growth > 0.0) {
        return Err(Failure::usage("--size-growth must be positive"));
    }
    let id = a
        .out
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "synthetic".into());
    let spec = SynthSpec {
        frames: a.frames as usize,
        width: a.size.0,
        height: a.size.1,
        target_w: a.target.0 as f64,
        target_h: a.target.1 as f64,
        size_growth: a.size_growth,
        motion: a.motion,
        start: None,
        seed: a.seed,
        id,
    };
    // validate before touching the disk
    let seq = datasets::render_synthetic(&spec)?;
    datasets::write_sequence(&seq, &a.out)?;
    eprintln!("wrote {} frames to {}", seq.frames.len(), a.out.display());
    Ok(())
}
