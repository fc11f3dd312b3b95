//! Sequence loading, ground-truth parsing and a seeded synthetic sequence
//! generator.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::types::{BBox, Frame};

pub const GROUND_TRUTH_FILE: &str = "groundtruth_rect.txt";
const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("no images found in {}", .0.display())]
    NoFrames(PathBuf),
    #[error("{} line {line}: {msg}", path.display())]
    Malformed { path: PathBuf, line: usize, msg: String },
    #[error("ground truth has {boxes} boxes for {frames} frames")]
    GtCountMismatch { frames: usize, boxes: usize },
    #[error("frame {index} is out of range ({len} frames)")]
    FrameOutOfRange { index: usize, len: usize },
    #[error("frame {index} is {got:?}, expected {expected:?}")]
    FrameSize {
        index: usize,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("synthetic target leaves the frame at frame {frame}")]
    TrajectoryLeavesFrame { frame: usize },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Random access to the frames and annotations of one sequence.
pub trait FrameSource: Sync {
    fn id(&self) -> &str;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn frame(&self, index: usize) -> Result<Frame, DatasetError>;
    /// One entry per frame; `None` where the target is not annotated.
    fn ground_truth(&self) -> Option<&[Option<BBox>]>;
}

/// A sequence on disk, frames decoded on demand.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub id: String,
    pub frame_paths: Vec<PathBuf>,
    pub ground_truth: Option<Vec<Option<BBox>>>,
    pub frame_size: (usize, usize),
}

impl FrameSource for Sequence {
    fn id(&self) -> &str {
        &self.id
    }

    fn len(&self) -> usize {
        self.frame_paths.len()
    }

    fn frame(&self, index: usize) -> Result<Frame, DatasetError> {
        let path = self.frame_paths.get(index).ok_or(DatasetError::FrameOutOfRange {
            index,
            len: self.frame_paths.len(),
        })?;
        let f = decode_frame(path, index)?;
        if (f.width(), f.height()) != self.frame_size {
            return Err(DatasetError::FrameSize {
                index,
                expected: self.frame_size,
                got: (f.width(), f.height()),
            });
        }
        Ok(f)
    }

    fn ground_truth(&self) -> Option<&[Option<BBox>]> {
        self.ground_truth.as_deref()
    }
}

/// Frames held in memory.
#[derive(Debug, Clone)]
pub struct InMemorySequence {
    pub id: String,
    pub frames: Vec<Frame>,
    pub ground_truth: Option<Vec<Option<BBox>>>,
}

impl FrameSource for InMemorySequence {
    fn id(&self) -> &str {
        &self.id
    }

    fn len(&self) -> usize {
        self.frames.len()
    }

    fn frame(&self, index: usize) -> Result<Frame, DatasetError> {
        self.frames.get(index).cloned().ok_or(DatasetError::FrameOutOfRange {
            index,
            len: self.frames.len(),
        })
    }

    fn ground_truth(&self) -> Option<&[Option<BBox>]> {
        self.ground_truth.as_deref()
    }
}

pub fn decode_frame(path: &Path, index: usize) -> Result<Frame, DatasetError> {
    let img = image::open(path)
        .map_err(|source| DatasetError::Decode {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Frame::from_rgb(index, w, h, img.into_raw()))
}

/// Sort key that orders `img9` before `img10`: the last run of digits in
/// the stem, then the name.
fn numeric_key(path: &Path) -> (Option<u128>, String) {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let digits: String = {
        let rev: String = stem
            .chars()
            .rev()
            .skip_while(|c| !c.is_ascii_digit())
            .take_while(|c| c.is_ascii_digit())
            .collect();
        rev.chars().rev().collect()
    };
    (digits.parse().ok(), stem)
}

/// Image files in `dir`, in numeric frame order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let is_image = path
            .extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str()));
        if is_image && path.is_file() {
            paths.push(path);
        }
    }
    paths.sort_by_cached_key(|p| numeric_key(p));
    Ok(paths)
}

/// Parses one box per line as `x,y,w,h` (commas, tabs or spaces). `NaN`
/// entries and non-positive sizes mean the target is not annotated.
pub fn parse_ground_truth(text: &str, path: &Path) -> Result<Vec<Option<BBox>>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let malformed = |msg: String| DatasetError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        if fields.len() != 4 {
            return Err(malformed(format!("expected 4 fields, found {}", fields.len())));
        }
        let mut v = [0.0; 4];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f.parse::<f64>().map_err(|_| malformed(format!("'{f}' is not a number")))?;
        }
        let [x, y, w, h] = v;
        out.push(if v.iter().all(|c| c.is_finite()) && w > 0.0 && h > 0.0 {
            Some(BBox::from_corner(x, y, w, h))
        } else {
            None
        });
    }
    Ok(out)
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<Option<BBox>>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_ground_truth(&text, path)
}

/// Loads `dir`, taking frames from `dir/img` when present and the annotations
/// from `gt` or `dir/groundtruth_rect.txt`.
pub fn load_sequence(dir: &Path, gt: Option<&Path>) -> Result<Sequence, DatasetError> {
    let img_dir = if dir.join("img").is_dir() { dir.join("img") } else { dir.to_path_buf() };
    let frame_paths = list_frames(&img_dir)?;
    let first = frame_paths.first().ok_or_else(|| DatasetError::NoFrames(img_dir.clone()))?;
    let (w, h) = image::image_dimensions(first).map_err(|source| DatasetError::Decode {
        path: first.clone(),
        source,
    })?;

    let gt_path = gt.map(Path::to_path_buf).unwrap_or_else(|| dir.join(GROUND_TRUTH_FILE));
    let ground_truth = if gt.is_some() || gt_path.is_file() {
        let boxes = read_ground_truth(&gt_path)?;
        if boxes.len() != frame_paths.len() {
            return Err(DatasetError::GtCountMismatch {
                frames: frame_paths.len(),
                boxes: boxes.len(),
            });
        }
        Some(boxes)
    } else {
        None
    };

    let canonical = dir.canonicalize().unwrap_or_else(|_| dir.to_path_buf());
    let id = canonical
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sequence".into());
    Ok(Sequence {
        id,
        frame_paths,
        ground_truth,
        frame_size: (w as usize, h as usize),
    })
}

/// Every sequence directory directly under `root`, sorted by name. A root that
/// is itself a sequence is returned alone; subdirectories without images are skipped.
pub fn load_dataset(root: &Path) -> Result<Vec<Sequence>, DatasetError> {
    if root.join("img").is_dir() || root.join(GROUND_TRUTH_FILE).is_file() {
        return Ok(vec![load_sequence(root, None)?]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(io_err(root))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mut seqs = Vec::with_capacity(dirs.len());
    for d in &dirs {
        match load_sequence(d, None) {
            Ok(s) => seqs.push(s),
            Err(DatasetError::NoFrames(p)) => log::warn!("skipping {}: no frames", p.display()),
            Err(e) => return Err(e),
        }
    }
    if seqs.is_empty() {
        return Err(DatasetError::NoFrames(root.to_path_buf()));
    }
    Ok(seqs)
}

/// Per-frame target displacement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Motion {
    Static,
    Linear { dx: f64, dy: f64 },
}

impl Motion {
    pub fn velocity(self) -> (f64, f64) {
        match self {
            Motion::Static => (0.0, 0.0),
            Motion::Linear { dx, dy } => (dx, dy),
        }
    }
}

impl FromStr for Motion {
    type Err = String;
    /// `static` or `linear:dx,dy`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("static") {
            return Ok(Motion::Static);
        }
        let rest = s
            .strip_prefix("linear:")
            .ok_or_else(|| format!("unknown motion '{s}' (expected static or linear:dx,dy)"))?;
        let parts: Vec<&str> = rest.split(',').collect();
        let [dx, dy] = parts.as_slice() else {
            return Err(format!("linear motion needs two components, got '{rest}'"));
        };
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("'{v}' is not a number"));
        let (dx, dy) = (num(dx)?, num(dy)?);
        if !(dx.is_finite() && dy.is_finite()) {
            return Err("motion components must be finite".into());
        }
        Ok(Motion::Linear { dx, dy })
    }
}

/// Parameters of a synthetic sequence: a textured target with a dark inner
/// mark moving over a smooth background.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    /// Target size in the first frame.
    pub target_w: f64,
    pub target_h: f64,
    /// Target size in the last frame relative to the first.
    pub size_growth: f64,
    pub motion: Motion,
    /// First-frame center; `None` places the trajectory's midpoint at the
    /// frame center.
    pub start: Option<(f64, f64)>,
    pub seed: u64,
    pub id: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            frames: 100,
            width: 640,
            height: 360,
            target_w: 40.0,
            target_h: 40.0,
            size_growth: 1.0,
            motion: Motion::Static,
            start: None,
            seed: 0,
            id: "synthetic".into(),
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: &str| Err(DatasetError::InvalidSpec(m.into()));
        if self.frames == 0 || self.width < 16 || self.height < 16 {
            return bad("need at least one frame of at least 16x16 pixels");
        }
        if !(self.target_w >= 4.0 && self.target_h >= 4.0 && self.size_growth > 0.0) {
            return bad("target must be at least 4x4 pixels and grow by a positive factor");
        }
        Ok(())
    }

    /// Integer ground-truth box of frame `t`, with even width and height.
    pub fn box_at(&self, t: usize) -> BBox {
        let (vx, vy) = self.motion.velocity();
        let (sx, sy) = self.start.unwrap_or_else(|| {
            let half = (self.frames.saturating_sub(1)) as f64 / 2.0;
            (self.width as f64 / 2.0 - vx * half, self.height as f64 / 2.0 - vy * half)
        });
        let progress = if self.frames > 1 { t as f64 / (self.frames - 1) as f64 } else { 0.0 };
        let grow = 1.0 + (self.size_growth - 1.0) * progress;
        let w = (2.0 * (self.target_w * grow / 2.0).round()).max(2.0);
        let h = (2.0 * (self.target_h * grow / 2.0).round()).max(2.0);
        let cx = (sx + vx * t as f64).round();
        let cy = (sy + vy * t as f64).round();
        BBox::new(cx, cy, w, h)
    }
}

const TARGET_RGB: [f64; 3] = [215.0, 190.0, 70.0];
const MARK_RGB: [u8; 3] = [25, 25, 35];
const TEXTURE_RES: usize = 16;

/// Renders the sequence in memory.
pub fn render_synthetic(spec: &SynthSpec) -> Result<InMemorySequence, DatasetError> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let boxes: Vec<BBox> = (0..spec.frames).map(|t| spec.box_at(t)).collect();
    for (t, b) in boxes.iter().enumerate() {
        if b.left() < 0.0 || b.top() < 0.0 || b.right() > w as f64 || b.bottom() > h as f64 {
            return Err(DatasetError::TrajectoryLeavesFrame { frame: t });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let background = render_background(w, h, &mut rng);
    let texture: Vec<f64> = (0..TEXTURE_RES * TEXTURE_RES).map(|_| rng.gen_range(-14.0..14.0)).collect();

    let frames = boxes
        .iter()
        .enumerate()
        .map(|(t, b)| {
            let mut data = background.clone();
            let (x0, y0) = (b.left() as usize, b.top() as usize);
            let (bw, bh) = (b.w as usize, b.h as usize);
            for y in y0..y0 + bh {
                let v = (y - y0) as f64 / bh as f64;
                for x in x0..x0 + bw {
                    let u = (x - x0) as f64 / bw as f64;
                    let px = if (0.55..0.75).contains(&u) && (0.25..0.45).contains(&v) {
                        MARK_RGB
                    } else {
                        let tu = ((u * TEXTURE_RES as f64) as usize).min(TEXTURE_RES - 1);
                        let tv = ((v * TEXTURE_RES as f64) as usize).min(TEXTURE_RES - 1);
                        let n = texture[tv * TEXTURE_RES + tu];
                        TARGET_RGB.map(|c| (c + n).round().clamp(0.0, 255.0) as u8)
                    };
                    let i = (y * w + x) * 3;
                    data[i..i + 3].copy_from_slice(&px);
                }
            }
            Frame::from_rgb(t, w, h, data)
        })
        .collect();

    Ok(InMemorySequence {
        id: spec.id.clone(),
        frames,
        ground_truth: Some(boxes.into_iter().map(Some).collect()),
    })
}

/// Smooth greenish-gray value noise with a little per-pixel grain.
fn render_background(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    const CELL: usize = 24;
    let gw = w / CELL + 2;
    let gh = h / CELL + 2;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.gen_range(60.0..110.0)).collect();
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        let fy = y as f64 / CELL as f64;
        let (gy, ty) = (fy as usize, fy.fract());
        for x in 0..w {
            let fx = x as f64 / CELL as f64;
            let (gx, tx) = (fx as usize, fx.fract());
            let g = |i: usize, j: usize| grid[j * gw + i];
            let top = g(gx, gy) * (1.0 - tx) + g(gx + 1, gy) * tx;
            let bot = g(gx, gy + 1) * (1.0 - tx) + g(gx + 1, gy + 1) * tx;
            let v = top * (1.0 - ty) + bot * ty + rng.gen_range(-4.0..4.0);
            data.push((v * 0.85).round() as u8);
            data.push(v.round() as u8);
            data.push((v * 0.75).round() as u8);
        }
    }
    data
}

/// Renders the sequence and writes `img/000001.png ...` plus the ground
/// truth under `dir`, then loads it back.
pub fn generate_synthetic(spec: &SynthSpec, dir: &Path) -> Result<Sequence, DatasetError> {
    let seq = render_synthetic(spec)?;
    write_sequence(&seq, dir)?;
    load_sequence(dir, None)
}

/// Writes frames as `img/000001.png ...` and, when present, the ground truth
/// as `x,y,w,h` lines. Absent boxes are written as `NaN,NaN,NaN,NaN`.
pub fn write_sequence(seq: &InMemorySequence, dir: &Path) -> Result<(), DatasetError> {
    let img_dir = dir.join("img");
    fs::create_dir_all(&img_dir).map_err(io_err(&img_dir))?;
    for (t, f) in seq.frames.iter().enumerate() {
        let path = img_dir.join(format!("{:06}.png", t + 1));
        image::save_buffer(&path, f.color(), f.width() as u32, f.height() as u32, image::ExtendedColorType::Rgb8)
            .map_err(|source| DatasetError::Decode { path: path.clone(), source })?;
    }
    let Some(gt) = &seq.ground_truth else {
        return Ok(());
    };
    let gt_path = dir.join(GROUND_TRUTH_FILE);
    let mut file = fs::File::create(&gt_path).map_err(io_err(&gt_path))?;
    for b in gt {
        match b {
            Some(b) => writeln!(file, "{},{},{},{}", b.left(), b.top(), b.w, b.h),
            None => writeln!(file, "NaN,NaN,NaN,NaN"),
        }
        .map_err(io_err(&gt_path))?;
    }
    Ok(())
}
