#![allow(dead_code)]

use drotrack::datasets::{render_synthetic, InMemorySequence, Motion, SynthSpec};
use drotrack::Frame;

pub fn frame_from(w: usize, h: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Frame {
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            data.extend_from_slice(&f(x, y));
        }
    }
    Frame::from_rgb(0, w, h, data)
}

pub fn synth(id: &str, frames: usize, width: usize, height: usize, dx: f64, dy: f64, growth: f64, seed: u64) -> InMemorySequence {
    render_synthetic(&SynthSpec {
        frames,
        width,
        height,
        size_growth: growth,
        motion: Motion::Linear { dx, dy },
        seed,
        id: id.into(),
        ..SynthSpec::default()
    })
    .expect("synthetic spec is valid")
}

/// 200 frames, 640×360, target moving (+2, +1) per frame.
pub fn translation_sequence() -> InMemorySequence {
    synth("translate", 200, 640, 360, 2.0, 1.0, 1.0, 1)
}

/// 150 frames, 640×360, target moving down 1 px per frame while growing to 1.5×.
pub fn zoom_sequence() -> InMemorySequence {
    synth("zoom", 150, 640, 360, 0.0, 1.0, 1.5, 2)
}
