mod common;

use drotrack::eval::{benchmark_run, config_matrix, BenchOptions, ClockKind, CSV_HEADER};
use drotrack::{FrameScale, FrameSource, Mode, TrackerConfig};

use common::synth;

fn ticks() -> BenchOptions {
    BenchOptions {
        workers: 1,
        clock: ClockKind::Ticks,
    }
}

#[test]
fn correction_does_not_hurt_on_a_zoom() {
    let seq = synth("zoom", 100, 320, 240, 0.0, 1.0, 1.5, 21);
    let configs = config_matrix(&[Mode::Angular], &[true, false], &[FrameScale::Full], &TrackerConfig::default());
    let table = benchmark_run(&[&seq as &dyn FrameSource], &configs, &ticks());
    let dist = |id: &str| {
        table
            .rows
            .iter()
            .find(|r| r.config.id == id)
            .and_then(|r| r.outcome.as_ref().ok())
            .map(|m| m.mean_center_error)
            .unwrap()
    };
    assert!(dist("angular_rc_fs") <= dist("angular_norc_fs"));
}

#[test]
fn table_has_a_row_per_pair_and_a_mean_per_config() {
    let a = synth("a", 10, 160, 120, 1.0, 0.0, 1.0, 22);
    let b = synth("b", 10, 160, 120, 0.0, 1.0, 1.0, 23);
    let configs = config_matrix(&Mode::ALL, &[true, false], &[FrameScale::Full, FrameScale::Half], &TrackerConfig::default());
    assert_eq!(configs.len(), 12);
    // given out of order, reported by sequence id
    let table = benchmark_run(&[&b as &dyn FrameSource, &a], &configs, &ticks());
    assert_eq!(table.rows.len(), 24);
    assert_eq!(table.means.len(), 12);
    assert!(table.rows[..12].iter().all(|r| r.sequence == "a"));
    let csv = table.to_csv();
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));
    assert_eq!(csv.lines().count(), 1 + 24 + 12);
    let summary = table.summary();
    assert!(configs.iter().all(|c| summary.contains(&c.id)));
}

#[test]
fn tick_clock_makes_fps_reproducible() {
    let seq = synth("fps", 12, 160, 120, 1.0, 1.0, 1.0, 24);
    let configs = config_matrix(&[Mode::Angular, Mode::Fcm], &[true], &[FrameScale::Half], &TrackerConfig::default());
    let run = || benchmark_run(&[&seq as &dyn FrameSource], &configs, &ticks()).to_csv();
    assert_eq!(run(), run());
}
