//! Acceptance suite. Runs without the libtest harness so that every criterion
//! prints exactly one PASS/FAIL line; the process fails if any criterion does.

mod common;

use std::cell::OnceCell;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use drotrack::angular::{angular_scale, motion_angle, scale_factor, AngularConfig, MotionStep, ScaleRule};
use drotrack::corners::{
    accept_corner, adaptive_select, convex_hull_centroid, detect_corners, shi_tomasi_response, CornerConfig, ReferenceTemplate,
    SelectionGate,
};
use drotrack::correction::{corrected_point, init_margin, relative_scale, CorrectionInputs, Margin};
use drotrack::datasets::{self, FrameSource};
use drotrack::eval::{self, aggregate, benchmark_run, benchmark_with, config_matrix, frame_metrics, BenchOptions, ClockKind, FrameMetrics};
use drotrack::fcmseg::{
    clean_mask, cosine_similarity, embed, extract_segments, fcm_cluster, fcm_cluster_values, select_segment, CandidateSegment,
    Embedding, FcmConfig, FcmResult,
};
use drotrack::flow::{lk_track, FlowConfig, PointStatus};
use drotrack::imgproc::{
    build_pyramid, build_pyramid_f32, dilate, erode, extract_patch, hist_correlation, histogram, resize_half, sobel_gradients, to_gray,
    Histogram, Mask, PixelRect,
};
use drotrack::tracker::DroTracker;
use drotrack::types::{ColorPatch, Plane};
use drotrack::{bbox_iou, center_distance, BBox, Frame, FrameScale, InMemorySequence, Mode, PointF, SequenceMetrics, TrackerConfig, TrackerSession};

use common::{frame_from, synth, translation_sequence, zoom_sequence};

type Outcome = Result<String, String>;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

macro_rules! check {
    ($cond:expr) => {
        if !$cond {
            return Err(format!("{} ({}:{})", stringify!($cond), file!(), line!()));
        }
    };
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

// ---------------------------------------------------------------- examples

fn gray_from(w: usize, h: usize, f: impl Fn(usize, usize) -> u8) -> Plane<u8> {
    Plane::from_vec(w, h, (0..w * h).map(|i| f(i % w, i / w)).collect())
}

fn mask_from(w: usize, h: usize, on: impl Fn(usize, usize) -> bool) -> Mask {
    Plane::from_vec(w, h, (0..w * h).map(|i| on(i % w, i / w)).collect())
}

fn hist(bins: &[f64]) -> Histogram {
    Histogram {
        bins: bins.to_vec(),
        bins_per_channel: bins.len(),
        channels: 1,
    }
}

fn ex_geometry() -> Outcome {
    let a = BBox::new(5.0, 5.0, 4.0, 4.0);
    check!(bbox_iou(&a, &a) == 1.0);
    check!(bbox_iou(&BBox::new(1.0, 1.0, 2.0, 2.0), &BBox::new(10.0, 10.0, 2.0, 2.0)) == 0.0);
    check!(close(bbox_iou(&BBox::from_corner(0.0, 0.0, 2.0, 2.0), &BBox::from_corner(1.0, 0.0, 2.0, 2.0)), 1.0 / 3.0, 1e-9));
    check!(center_distance(&a, &a) == 0.0);
    check!(close(center_distance(&BBox::new(0.0, 0.0, 1.0, 1.0), &BBox::new(3.0, 4.0, 1.0, 1.0)), 5.0, 1e-9));
    check!(close(center_distance(&BBox::new(1.0, 1.0, 1.0, 1.0), &BBox::new(-2.0, 5.0, 1.0, 1.0)), 5.0, 1e-9));
    Ok("iou, center distance".into())
}

fn ex_imgproc() -> Outcome {
    let solid = |rgb: [u8; 3]| frame_from(2, 2, |_, _| rgb);
    check!(to_gray(&solid([255, 255, 255])).data == vec![255; 4]);
    check!(to_gray(&solid([0, 0, 0])).data == vec![0; 4]);
    check!(to_gray(&frame_from(1, 1, |_, _| [255, 0, 0])).data == vec![76]);

    let (gx, gy) = sobel_gradients(&Plane::new(8, 8, 77u8)).map_err(|e| e.to_string())?;
    check!(gx.data.iter().chain(&gy.data).all(|&v| v == 0.0));
    let step = gray_from(6, 6, |x, _| if x < 3 { 0 } else { 100 });
    let (gx, gy) = sobel_gradients(&step).map_err(|e| e.to_string())?;
    check!((1..5).all(|y| gx.get(2, y) != 0.0 && gy.get(2, y) == 0.0));
    let ramp = gray_from(10, 10, |x, _| x as u8);
    let (gx, gy) = sobel_gradients(&ramp).map_err(|e| e.to_string())?;
    check!((1..9).all(|y| (1..9).all(|x| gx.get(x, y) == 8.0 && gy.get(x, y) == 0.0)));

    let img = gray_from(64, 64, |x, y| (x * 3 + y) as u8);
    let p = build_pyramid(&img, 1).map_err(|e| e.to_string())?;
    check!(p.len() == 1 && p.level(0) == &img.map(f32::from));
    let p = build_pyramid(&img, 3).map_err(|e| e.to_string())?;
    check!((0..3).map(|k| p.level(k).width).collect::<Vec<_>>() == vec![64, 32, 16]);
    let p = build_pyramid(&Plane::new(64, 64, 9u8), 3).map_err(|e| e.to_string())?;
    check!((0..3).all(|k| p.level(k).data.iter().all(|&v| (v - 9.0).abs() < 1e-5)));

    let red = ColorPatch::uniform(3, 4, [255, 0, 0]);
    let h = histogram(&red, 8).map_err(|e| e.to_string())?;
    for c in 0..3 {
        check!(h.channel(c).iter().filter(|&&v| v > 0.0).count() == 1);
        check!(h.channel(c).iter().sum::<f64>() == 12.0);
    }
    let two = ColorPatch {
        width: 2,
        height: 1,
        data: vec![0, 0, 0, 255, 255, 255],
    };
    let h = histogram(&two, 2).map_err(|e| e.to_string())?;
    check!((0..3).all(|c| h.channel(c) == [1.0, 1.0]));

    let h = hist(&[3.0, 1.0, 4.0, 1.0, 5.0]);
    check!(close(hist_correlation(&h, &h).unwrap(), 1.0, 1e-9));
    check!(close(hist_correlation(&hist(&[1.0, 0.0]), &hist(&[0.0, 1.0])).unwrap(), -1.0, 1e-9));
    check!(close(hist_correlation(&hist(&[2.0, 1.0, 0.0]), &hist(&[0.0, 1.0, 2.0])).unwrap(), -1.0, 1e-9));

    let ones = mask_from(5, 5, |_, _| true);
    check!(erode(&ones) == ones && dilate(&ones) == ones);
    check!(erode(&mask_from(5, 5, |x, y| x == 2 && y == 2)).data.iter().all(|&v| !v));
    let block = mask_from(7, 7, |x, y| (2..5).contains(&x) && (2..5).contains(&y));
    check!(dilate(&block) == mask_from(7, 7, |x, y| (1..6).contains(&x) && (1..6).contains(&y)));

    let f = frame_from(10, 6, |x, y| [(x * 20) as u8, (y * 30) as u8, 7]);
    check!(extract_patch(&f, &f.bounds()).map_err(|e| e.to_string())? == f.as_patch());
    let p = extract_patch(&f, &BBox::from_corner(3.0, 1.0, 2.0, 2.0)).map_err(|e| e.to_string())?;
    check!((p.width, p.height) == (2, 2) && p.pixel(0, 0) == f.pixel(3, 1) && p.pixel(1, 1) == f.pixel(4, 2));
    let p = extract_patch(&f, &BBox::from_corner(5.0, 0.0, 10.0, 6.0)).map_err(|e| e.to_string())?;
    check!(p.width == 5);

    let c = resize_half(&frame_from(8, 6, |_, _| [9, 99, 199]));
    check!((c.width(), c.height()) == (4, 3) && c.color().chunks(3).all(|p| p == [9, 99, 199]));
    check!((resize_half(&frame_from(4, 4, |_, _| [1, 1, 1])).width()) == 2);
    let blk = resize_half(&frame_from(2, 2, |_, y| if y == 0 { [0; 3] } else { [255; 3] }));
    check!(blk.color() == [128, 128, 128]);
    Ok("gray, sobel, pyramid, histogram, correlation, morphology, patch, half".into())
}

fn ex_corners() -> Outcome {
    let r = shi_tomasi_response(&Plane::new(12, 12, 50u8), 3);
    check!(r.data.iter().all(|&v| v == 0.0));
    let edge = gray_from(12, 12, |x, _| if x < 6 { 0 } else { 200 });
    let r = shi_tomasi_response(&edge, 3);
    check!((2..10).all(|y| (0..12).all(|x| r.get(x, y).abs() < 1e-9)));
    let checker = gray_from(16, 16, |x, y| if (x < 8) == (y < 8) { 220 } else { 30 });
    let r = shi_tomasi_response(&checker, 3);
    let best = r.data.iter().cloned().fold(0.0, f64::max);
    let at = r.data.iter().position(|&v| v == best).unwrap();
    check!((7..=8).contains(&(at % 16)) && (7..=8).contains(&(at / 16)));
    check!(r.get(8, 2) < best && r.get(2, 8) < best);

    let cfg = CornerConfig::default();
    check!(detect_corners(&Plane::new(30, 30, 90u8), &cfg, &BBox::from_corner(0.0, 0.0, 30.0, 30.0)).is_empty());
    let quarter = gray_from(50, 50, |x, y| if x >= 25 && y >= 25 { 230 } else { 20 });
    let pts = detect_corners(&quarter, &cfg, &BBox::from_corner(5.0, 5.0, 40.0, 40.0));
    check!(pts.len() == 1 && (pts[0].x - 25.0).abs() <= 1.0 && (pts[0].y - 25.0).abs() <= 1.0);
    // two junctions 4 px apart, suppression radius 10
    let pair = gray_from(60, 40, |x, y| if (20..24).contains(&x) && y >= 20 { 240 } else if x >= 24 && y >= 20 { 120 } else { 10 });
    let pts = detect_corners(
        &pair,
        &CornerConfig {
            max_corners: 5,
            min_distance: Some(10.0),
            quality_level: 0.01,
            ..cfg.clone()
        },
        &BBox::from_corner(10.0, 10.0, 20.0, 20.0),
    );
    check!(pts.windows(2).all(|w| w[0].distance(w[1]) >= 10.0), "{pts:?}");

    let p = PointF::new(3.0, -2.0);
    check!(convex_hull_centroid(&[p]) == p);
    let sq = [PointF::new(0.0, 0.0), PointF::new(1.0, 0.0), PointF::new(1.0, 1.0), PointF::new(0.0, 1.0)];
    let c = convex_hull_centroid(&sq);
    check!(close(c.x, 0.5, 1e-9) && close(c.y, 0.5, 1e-9));
    let c = convex_hull_centroid(&[PointF::new(0.0, 0.0), PointF::new(4.0, 0.0), PointF::new(0.0, 3.0)]);
    check!(close(c.x, 4.0 / 3.0, 1e-9) && close(c.y, 1.0, 1e-9));

    let f = frame_from(80, 40, |x, y| if x < 40 { [200 + ((x * 7 + y * 3) % 40) as u8, 10, 10] } else { [10, 10, 200 + ((x * 5 + y) % 40) as u8] });
    let rt = ReferenceTemplate::capture(&f, BBox::new(20.0, 20.0, 16.0, 16.0)).map_err(|e| e.to_string())?;
    let at = accept_corner(rt.bbox.center(), &rt, &f, SelectionGate::default());
    check!(at.accepted && close(at.similarity.unwrap(), 1.0, 1e-9) && at.distance == 0.0);
    let far = accept_corner(PointF::new(20.0 + 2.0 * 16.0, 20.0), &rt, &f, SelectionGate { alpha: -1.0, beta_factor: 0.5 });
    check!(!far.accepted);
    let rb = frame_from(60, 20, |x, _| if x < 30 { [255, 0, 0] } else { [0, 0, 255] });
    let red = ReferenceTemplate::capture(&rb, BBox::new(10.0, 10.0, 6.0, 6.0)).map_err(|e| e.to_string())?;
    let anchor = PointF::new(45.0, 10.0);
    let rt = red.relocated(PointF::new(anchor.x - 0.1 * 6.0, 10.0));
    let chk = accept_corner(anchor, &rt, &rb, SelectionGate::default());
    check!(chk.similarity.unwrap() < 0.5 && !chk.accepted);

    let junction = frame_from(60, 60, |x, y| if (x < 33) == (y < 27) { [230, 220, 40] } else { [20, 30, 160] });
    let rt = ReferenceTemplate::capture(&junction, BBox::new(30.0, 30.0, 24.0, 24.0)).map_err(|e| e.to_string())?;
    let set = adaptive_select(&junction, &rt, &CornerConfig::default(), SelectionGate::default());
    check!(set.accepted && set.iterations == 1 && (set.anchor.x - 33.0).abs() <= 1.0 && (set.anchor.y - 27.0).abs() <= 1.0);
    let flat = frame_from(40, 40, |_, _| [90, 90, 90]);
    let rt = ReferenceTemplate::capture(&flat, BBox::new(20.0, 20.0, 10.0, 10.0)).map_err(|e| e.to_string())?;
    let set = adaptive_select(&flat, &rt, &CornerConfig::default(), SelectionGate::default());
    check!(!set.accepted && set.anchor == rt.bbox.center());
    let square = frame_from(40, 40, |x, y| if (12..28).contains(&x) && (12..28).contains(&y) { [240; 3] } else { [20; 3] });
    let rt = ReferenceTemplate::capture(&square, BBox::from_corner(0.0, 0.0, 40.0, 40.0)).map_err(|e| e.to_string())?;
    let cfg4 = CornerConfig {
        max_corners: 4,
        min_distance: Some(4.0),
        ..CornerConfig::default()
    };
    let set = adaptive_select(&square, &rt, &cfg4, SelectionGate::default());
    check!(set.accepted && close(set.anchor.x, 20.0, 1e-9) && close(set.anchor.y, 20.0, 1e-9));
    Ok("response, detection, hull centroid, accept gate, adaptive selection".into())
}

fn ex_flow() -> Outcome {
    let render = |cx: f64, cy: f64| {
        Plane::from_vec(
            64,
            64,
            (0..64 * 64)
                .map(|i| {
                    let (x, y) = ((i % 64) as f64 + 0.5, (i / 64) as f64 + 0.5);
                    (30.0 + 200.0 * (-((x - cx).powi(2) + (y - cy).powi(2)) / 72.0).exp()) as f32
                })
                .collect(),
        )
    };
    let cfg = FlowConfig::default();
    let a = build_pyramid_f32(render(30.0, 30.0), 3).map_err(|e| e.to_string())?;
    let b = build_pyramid_f32(render(32.0, 33.0), 3).map_err(|e| e.to_string())?;
    let pts = [PointF::new(30.0, 28.0), PointF::new(33.5, 31.2)];
    let same = lk_track(&a, &a, &pts, &cfg).map_err(|e| e.to_string())?;
    check!(same.all_ok() && pts.iter().zip(&same.new_points).all(|(p, q)| p.distance(*q) < 1e-9));
    let moved = lk_track(&a, &b, &[PointF::new(30.0, 30.0)], &cfg).map_err(|e| e.to_string())?;
    let d = moved.new_points[0] - PointF::new(30.0, 30.0);
    check!(moved.all_ok() && (d.x - 2.0).abs() <= 0.25 && (d.y - 3.0).abs() <= 0.25, "shift {d:?}");
    let flat = build_pyramid_f32(Plane::new(64, 64, 100.0f32), 3).map_err(|e| e.to_string())?;
    let lost = lk_track(&flat, &flat, &[PointF::new(32.0, 32.0)], &cfg).map_err(|e| e.to_string())?;
    check!(lost.status == vec![PointStatus::Lost]);
    Ok(format!("blob shift recovered as ({:.3}, {:.3})", d.x, d.y))
}

fn ex_correction() -> Outcome {
    let c = PointF::new(50.0, 50.0);
    check!(init_margin(c, c) == Margin { dx: 0.0, dy: 0.0 });
    let a = PointF::new(47.0, 44.0);
    check!(init_margin(c, a) == Margin { dx: 3.0, dy: 6.0 });
    check!(init_margin(a, c) == Margin { dx: -3.0, dy: -6.0 });
    check!(relative_scale(360.0, 360.0) == 1.0);
    check!(close(relative_scale(60.0, 360.0), 1.0 / 6.0, 1e-9));
    check!(close(relative_scale(180.0, 1080.0), relative_scale(60.0, 360.0), 1e-9));
    let anchor = PointF::new(100.0, 100.0);
    let unit = corrected_point(&CorrectionInputs {
        anchor_now: anchor,
        margin: Margin { dx: 3.0, dy: 6.0 },
        rt_scale_ff: 0.2,
        rt_scale_f: 0.2,
    });
    check!(unit == PointF::new(103.0, 106.0));
    let half = corrected_point(&CorrectionInputs {
        anchor_now: anchor,
        margin: Margin { dx: 3.0, dy: 6.0 },
        rt_scale_ff: 0.2,
        rt_scale_f: 0.1,
    });
    check!(close(half.x, 101.5, 1e-9) && close(half.y, 103.0, 1e-9));
    let zero = corrected_point(&CorrectionInputs {
        anchor_now: anchor,
        margin: Margin::default(),
        rt_scale_ff: 0.3,
        rt_scale_f: 0.7,
    });
    check!(zero == anchor);
    Ok("margin, relative scale, corrected point".into())
}

fn plain_cfg(c: usize) -> FcmConfig {
    FcmConfig {
        clusters: c,
        p: 1.0,
        q: 0.0,
        hesitation_lambda: None,
        spatial_window: 1,
        tol: 1e-13,
        max_iters: 2000,
        ..FcmConfig::default()
    }
}

fn labelled(w: usize, h: usize, label: impl Fn(usize, usize) -> usize) -> FcmResult {
    let labels: Vec<usize> = (0..w * h).map(|i| label(i % w, i / w)).collect();
    let n = w * h;
    let mut membership = vec![0.0; 2 * n];
    for (j, &l) in labels.iter().enumerate() {
        membership[l * n + j] = 1.0;
    }
    FcmResult {
        width: w,
        height: h,
        clusters: 2,
        membership,
        centers: vec![0.0, 1.0],
        labels,
        iterations: 1,
    }
}

fn candidate(v: Vec<f64>) -> CandidateSegment {
    CandidateSegment {
        cluster: 0,
        mask: Plane::new(1, 1, true),
        bbox: BBox::new(0.0, 0.0, 1.0, 1.0),
        area: 1,
        embedding: Some(Embedding::new(v)),
        similarity: None,
    }
}

fn ex_fcmseg() -> Outcome {
    // q = 0: the spatial window has no influence
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f64> = (0..36).map(|_| rng.gen_range(0.0..255.0)).collect();
    let a = fcm_cluster_values(&x, 6, 6, &FcmConfig { spatial_window: 1, ..plain_cfg(3) }, None, |_, _| {}).map_err(|e| e.to_string())?;
    let b = fcm_cluster_values(&x, 6, 6, &FcmConfig { spatial_window: 5, ..plain_cfg(3) }, None, |_, _| {}).map_err(|e| e.to_string())?;
    check!(a.membership.iter().zip(&b.membership).all(|(p, q)| (p - q).abs() < 1e-12));

    let v = [0.0, 0.1, 0.9, 1.0];
    let r = fcm_cluster_values(&v, 4, 1, &plain_cfg(2), Some(&[0.05, 0.95]), |_, _| {}).map_err(|e| e.to_string())?;
    check!((0..4).all(|j| r.membership_of(r.labels[j], j) > 0.9));
    check!(r.labels[0] == r.labels[1] && r.labels[2] == r.labels[3] && r.labels[0] != r.labels[2]);

    let (w, h) = (20, 12);
    let img = gray_from(w, h, |x, _| if x < 10 { 0 } else { 255 });
    let r = fcm_cluster(&img, &FcmConfig { clusters: 2, ..FcmConfig::default() }).map_err(|e| e.to_string())?;
    let left = r.labels[0];
    check!((0..h).all(|y| (0..w).filter(|x| !(8..12).contains(x)).all(|x| (r.labels[y * w + x] == left) == (x < 10))));

    let block = mask_from(12, 12, |x, y| (2..10).contains(&x) && (2..10).contains(&y));
    check!(clean_mask(&block) == block);
    check!(clean_mask(&mask_from(7, 7, |x, y| x == 3 && y == 3)).data.iter().all(|&v| !v));
    let base = mask_from(12, 12, |x, y| (2..8).contains(&x) && (2..8).contains(&y));
    let bump = mask_from(12, 12, |x, y| base.get(x, y) || (x == 8 && y == 4));
    check!(clean_mask(&bump) == base);

    let area = PixelRect { x: 100, y: 50, w: 40, h: 30 };
    let r = labelled(40, 30, |x, y| usize::from((10..20).contains(&x) && (5..15).contains(&y)));
    let segs = extract_segments(&r, area, 20.0, PointF::new(115.0, 60.0));
    let fg: Vec<_> = segs.iter().filter(|s| s.cluster == 1).collect();
    check!(fg.len() == 1 && fg[0].bbox.to_corner() == (110.0, 55.0, 10.0, 10.0));
    check!(extract_segments(&r, area, 101.0, PointF::new(115.0, 60.0)).iter().all(|s| s.cluster != 1));
    let two = labelled(80, 20, |x, y| usize::from(((5..11).contains(&x) || (55..61).contains(&x)) && (5..11).contains(&y)));
    let c = PointF::new(13.0, 8.0);
    let segs: Vec<_> = extract_segments(&two, PixelRect { x: 0, y: 0, w: 80, h: 20 }, 10.0, c)
        .into_iter()
        .filter(|s| s.cluster == 1)
        .collect();
    check!(segs.len() == 2 && close(segs[0].bbox.center().distance(c), 5.0, 1e-9) && close(segs[1].bbox.center().distance(c), 45.0, 1e-9));

    let f = frame_from(20, 20, |x, y| [(x * 11) as u8, (y * 9) as u8, ((x + y) * 5) as u8]);
    let e = embed(&f.as_patch());
    check!(e.dimension() == 112 && close(e.norm(), 1.0, 1e-9));
    check!(embed(&f.as_patch()) == e);
    let red = embed(&ColorPatch::uniform(8, 8, [255, 0, 0]));
    let blue = embed(&ColorPatch::uniform(8, 8, [0, 0, 255]));
    check!(cosine_similarity(&red, &blue).unwrap() < 0.5);

    let t = Embedding::new(vec![1.0, 2.0, 3.0]);
    check!(close(cosine_similarity(&t, &t).unwrap(), 1.0, 1e-9));
    check!(cosine_similarity(&Embedding::new(vec![1.0, 0.0]), &Embedding::new(vec![0.0, 1.0])).unwrap().abs() < 1e-12);
    check!(close(cosine_similarity(&t, &Embedding::new(vec![3.0, 2.0, 1.0])).unwrap(), 10.0 / 14.0, 1e-9));

    let unit = Embedding::new(vec![1.0, 0.0, 0.0]);
    let mut same = vec![candidate(vec![0.0, 1.0, 0.0]), candidate(vec![2.0, 0.0, 0.0])];
    check!(select_segment(&unit, &mut same, 0.5) == Some(1) && close(same[1].similarity.unwrap(), 1.0, 1e-9));
    let mut low = vec![candidate(vec![0.3, 1.0, 0.0]), candidate(vec![0.0, 0.0, 1.0])];
    check!(select_segment(&unit, &mut low, 0.5).is_none());
    let mut pair = vec![candidate(vec![0.6, 0.8, 0.0]), candidate(vec![0.9, 0.0, 0.19f64.sqrt()])];
    check!(select_segment(&unit, &mut pair, 0.5) == Some(1));
    Ok("clustering, opening, segments, embedding, cosine, selection".into())
}

fn ex_angular() -> Outcome {
    let o = PointF::new(0.0, 0.0);
    check!(motion_angle(o, PointF::new(1.0, 0.0)) == Some(0.0));
    check!(motion_angle(o, PointF::new(0.0, 1.0)) == Some(FRAC_PI_2));
    check!(close(motion_angle(PointF::new(2.0, 3.0), PointF::new(1.0, 2.0)).unwrap(), -3.0 * FRAC_PI_4, 1e-9));

    let cfg = AngularConfig::default();
    let prt = BBox::new(50.0, 60.0, 20.0, 30.0);
    let still = MotionStep::new(prt.center(), prt.center());
    check!(angular_scale(&still, &prt, 60.0, 60.0, 360.0, &cfg) == prt);

    let down = MotionStep::new(PointF::new(50.0, 100.0), PointF::new(50.0, 110.0));
    let prt = BBox::new(50.0, 100.0, 20.0, 40.0);
    let out = angular_scale(&down, &prt, 100.0, 110.0, 360.0, &cfg);
    check!(close(out.h, 44.0, 1e-9) && close(out.w, 22.0, 1e-9));

    let diag = MotionStep::new(PointF::new(100.0, 100.0), PointF::new(105.0, 105.0));
    check!(close(scale_factor(&diag, 100.0, 120.0, ScaleRule::Literal).unwrap(), 0.6, 1e-9));
    Ok("angle, no motion, vertical ratio, diagonal factor".into())
}

fn ex_tracker() -> Outcome {
    let junction = frame_from(60, 60, |x, y| if (x < 33) == (y < 27) { [230, 220, 40] } else { [20, 30, 160] });
    let init = BBox::new(30.0, 30.0, 24.0, 24.0);
    for mode in Mode::ALL {
        let s = TrackerSession::init(&junction, init, TrackerConfig::new(mode, true, FrameScale::Full)).map_err(|e| e.to_string())?;
        check!(s.initial_box() == init);
    }
    let s = TrackerSession::init(&junction, init, TrackerConfig::default()).map_err(|e| e.to_string())?;
    let anchor = s.state().tracked_points[0];
    check!((anchor.x - 33.0).abs() <= 1.0 && (anchor.y - 27.0).abs() <= 1.0, "anchor {anchor:?}");
    check!(s.state().corr_margin == init_margin(init.center(), anchor));

    let flat = frame_from(40, 40, |_, _| [90, 90, 90]);
    let s = TrackerSession::init(&flat, BBox::new(20.0, 20.0, 10.0, 10.0), TrackerConfig::default()).map_err(|e| e.to_string())?;
    check!(s.state().corr_margin == Margin::default());

    let still = synth("still", 6, 160, 120, 0.0, 0.0, 1.0, 4);
    let first = still.ground_truth.as_ref().unwrap()[0].unwrap();
    for mode in Mode::ALL {
        let mut s = TrackerSession::init(&still.frames[0], first, TrackerConfig::new(mode, true, FrameScale::Full)).map_err(|e| e.to_string())?;
        for f in &still.frames[1..] {
            let b = s.step(f).map_err(|e| e.to_string())?;
            check!(center_distance(&b, &first) < 1e-6 && (b.w - first.w).abs() < 1e-6 && (b.h - first.h).abs() < 1e-6, "{mode}: {b:?}");
        }
    }

    let right = synth("right", 50, 320, 180, 3.0, 0.0, 1.0, 5);
    let m = run(&right, TrackerConfig::new(Mode::Angular, true, FrameScale::Full))?;
    check!(m.mean_center_error <= 2.0, "angular +3 px/frame: mean error {:.3}", m.mean_center_error);
    let err = m.mean_center_error;

    let grow = synth("grow", 100, 320, 240, 0.0, 1.0, 1.5, 6);
    let gt_last = grow.ground_truth.as_ref().unwrap()[99].unwrap();
    let preds = predictions(&grow, TrackerConfig::new(Mode::Combined, true, FrameScale::Full))?;
    let last = preds[99];
    check!((last.h - gt_last.h).abs() <= 0.2 * gt_last.h, "final height {:.2} vs {:.2}", last.h, gt_last.h);
    Ok(format!("init, fallback, static, translation error {err:.3} px, final zoom height {:.1}/{:.0}", last.h, gt_last.h))
}

fn ex_datasets() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path().join("three");
    let spec = datasets::SynthSpec {
        frames: 3,
        width: 64,
        height: 48,
        target_w: 10.0,
        target_h: 10.0,
        id: "three".into(),
        ..datasets::SynthSpec::default()
    };
    datasets::write_sequence(&datasets::render_synthetic(&spec).map_err(|e| e.to_string())?, &dir).map_err(|e| e.to_string())?;
    std::fs::write(dir.join(datasets::GROUND_TRUTH_FILE), "10,20,30,40\n10,20,30,40\n10,20,30,40\n").map_err(|e| e.to_string())?;
    let seq = datasets::load_sequence(&dir, None).map_err(|e| e.to_string())?;
    check!(seq.len() == 3 && seq.ground_truth().unwrap().iter().all(|b| *b == Some(BBox::new(25.0, 40.0, 30.0, 40.0))));
    std::fs::write(dir.join(datasets::GROUND_TRUTH_FILE), "10,20,30,40\nNaN,NaN,NaN,NaN\n10,20,30,40\n").map_err(|e| e.to_string())?;
    let seq = datasets::load_sequence(&dir, None).map_err(|e| e.to_string())?;
    check!(seq.ground_truth().unwrap()[1].is_none());
    std::fs::remove_file(dir.join(datasets::GROUND_TRUTH_FILE)).map_err(|e| e.to_string())?;
    check!(datasets::load_sequence(&dir, None).map_err(|e| e.to_string())?.ground_truth.is_none());

    let boxes = |dx: f64, growth: f64| -> Vec<BBox> {
        let s = datasets::SynthSpec {
            frames: 30,
            motion: datasets::Motion::Linear { dx, dy: 0.0 },
            size_growth: growth,
            ..datasets::SynthSpec::default()
        };
        (0..30).map(|t| s.box_at(t)).collect()
    };
    let still = boxes(0.0, 1.0);
    check!(still.iter().all(|b| *b == still[0]));
    let moving = boxes(3.0, 1.0);
    check!(moving.windows(2).all(|w| w[1].cx - w[0].cx == 3.0 && w[1].cy == w[0].cy));
    let zoom = boxes(0.0, 1.5);
    check!(zoom[29].h == 1.5 * zoom[0].h);
    Ok("ground truth parsing, absent entries, synthetic trajectories".into())
}

struct Perfect {
    gt: Vec<BBox>,
    i: usize,
}

impl drotrack::SequenceTracker for Perfect {
    fn start(&mut self, _: &Frame, init: BBox) -> Result<BBox, drotrack::TrackError> {
        self.i = 0;
        Ok(init)
    }

    fn track(&mut self, _: &Frame) -> Result<BBox, drotrack::TrackError> {
        self.i += 1;
        Ok(self.gt[self.i])
    }

    fn elapsed(&self) -> Duration {
        Duration::from_millis(self.gt.len() as u64)
    }
}

fn ex_eval() -> Outcome {
    let b = BBox::new(5.0, 5.0, 2.0, 2.0);
    let m = frame_metrics(0, &b, Some(&b));
    check!(m.valid && m.iou == 1.0 && m.center_error == 0.0);
    check!(!frame_metrics(0, &b, None).valid);
    let m = frame_metrics(0, &BBox::from_corner(0.0, 0.0, 2.0, 2.0), Some(&BBox::from_corner(1.0, 0.0, 2.0, 2.0)));
    check!(close(m.iou, 1.0 / 3.0, 1e-9) && close(m.center_error, 1.0, 1e-9));

    let fm = |iou: f64, err: f64| FrameMetrics {
        frame_index: 0,
        iou,
        center_error: err,
        valid: true,
    };
    let perfect = aggregate(&[fm(1.0, 0.0), fm(1.0, 0.0)], Duration::from_secs(1)).map_err(|e| e.to_string())?;
    check!(perfect.auc == 1.0 && perfect.p20 == 1.0 && perfect.p100 == 1.0);
    let s = aggregate(&[fm(0.6, 5.0), fm(0.2, 25.0)], Duration::from_secs(1)).map_err(|e| e.to_string())?;
    check!(s.precision_curve[20] == 0.5 && s.success_curve[50] == 0.5);

    let seq = synth("stub", 8, 96, 64, 1.0, 0.0, 1.0, 9);
    let gt: Vec<BBox> = seq.ground_truth.as_ref().unwrap().iter().map(|b| b.unwrap()).collect();
    let configs = config_matrix(&[Mode::Angular, Mode::Fcm], &[true], &[FrameScale::Full], &TrackerConfig::default());
    let table = benchmark_with(&[&seq as &dyn FrameSource], &configs, 1, &|_, _| Box::new(Perfect { gt: gt.clone(), i: 0 }));
    check!(table.rows.len() == 2 && table.means.len() == 2);
    check!(table.means.iter().all(|r| r.outcome.as_ref().map(|m| m.mean_iou == 1.0).unwrap_or(false)));
    Ok("frame metrics, curves, table shape, perfect stub".into())
}

fn criterion_examples() -> Outcome {
    let groups: [(&str, fn() -> Outcome); 10] = [
        ("geometry", ex_geometry),
        ("imgproc", ex_imgproc),
        ("corners", ex_corners),
        ("flow", ex_flow),
        ("correction", ex_correction),
        ("fcmseg", ex_fcmseg),
        ("angular", ex_angular),
        ("tracker", ex_tracker),
        ("datasets", ex_datasets),
        ("eval", ex_eval),
    ];
    let mut notes = Vec::new();
    for (name, f) in groups {
        let detail = f().map_err(|e| format!("{name}: {e}"))?;
        notes.push(format!("{name} [{detail}]"));
    }
    Ok(notes.join("; "))
}

// ------------------------------------------------------------ fcm oracle

fn oracle_fcm(x: &[f64], init: &[f64], m: f64, iters: usize) -> Vec<Vec<f64>> {
    let mut v = init.to_vec();
    let mut u = vec![vec![0.0; x.len()]; v.len()];
    for _ in 0..iters {
        for (j, &xj) in x.iter().enumerate() {
            if let Some(hit) = v.iter().position(|&vk| vk == xj) {
                for (i, row) in u.iter_mut().enumerate() {
                    row[j] = if i == hit { 1.0 } else { 0.0 };
                }
                continue;
            }
            for i in 0..v.len() {
                let di = (xj - v[i]).abs();
                u[i][j] = 1.0 / v.iter().map(|vk| (di / (xj - vk).abs()).powf(2.0 / (m - 1.0))).sum::<f64>();
            }
        }
        for i in 0..v.len() {
            let w: f64 = u[i].iter().map(|a| a.powf(m)).sum();
            v[i] = u[i].iter().zip(x).map(|(a, xj)| a.powf(m) * xj).sum::<f64>() / w;
        }
    }
    u
}

fn criterion_fcm_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let shapes = [(4usize, 1usize, 2usize), (8, 8, 3), (8, 8, 2), (7, 9, 4), (6, 6, 3), (5, 5, 5)];
    for (trial, &(w, h, c)) in shapes.iter().cycle().take(30).enumerate() {
        let x: Vec<f64> = (0..w * h).map(|_| rng.gen_range(0.0..255.0)).collect();
        let cfg = FcmConfig {
            fuzzifier: [2.0, 1.5, 2.5][trial % 3],
            ..plain_cfg(c)
        };
        let init = drotrack::fcmseg::quantile_centers(&x, c);
        let r = fcm_cluster_values(&x, w, h, &cfg, Some(&init), |_, _| {}).map_err(|e| e.to_string())?;
        let oracle = oracle_fcm(&x, &init, cfg.fuzzifier, r.iterations.max(1) + 400);
        for (k, row) in oracle.iter().enumerate() {
            for (j, &o) in row.iter().enumerate() {
                worst = worst.max((r.membership_of(k, j) - o).abs());
            }
        }
    }
    check!(worst <= 1e-6, "largest deviation from the plain oracle {worst:e}");

    let mut worst_sum: f64 = 0.0;
    let mut iterations = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (w, h) = (8, 8);
        let x: Vec<f64> = (0..w * h).map(|i| if i % w < 4 { 60.0 } else { 190.0 } + rng.gen_range(-40.0..40.0)).collect();
        let cfg = FcmConfig {
            clusters: 2 + (seed as usize % 3),
            spatial_window: [3, 5][seed as usize % 2],
            ..FcmConfig::default()
        };
        let c = cfg.clusters;
        fcm_cluster_values(&x, w, h, &cfg, None, |_, msh| {
            iterations += 1;
            let n = w * h;
            for j in 0..n {
                let s: f64 = (0..c).map(|k| msh[k * n + j]).sum();
                worst_sum = worst_sum.max((s - 1.0).abs());
            }
        })
        .map_err(|e| e.to_string())?;
    }
    check!(worst_sum <= 1e-6, "membership column sum off by {worst_sum:e}");
    Ok(format!(
        "plain max |Δu| = {worst:.1e} over 30 fixtures; spatial+hesitation max |Σu − 1| = {worst_sum:.1e} over {iterations} iterations"
    ))
}

// --------------------------------------------------------------- tracking

fn predictions(seq: &InMemorySequence, cfg: TrackerConfig) -> Result<Vec<BBox>, String> {
    let mut t = DroTracker::new(cfg, &seq.id, ClockKind::Monotonic.make());
    eval::run_tracker(seq, &mut t, None).map(|r| r.predictions).map_err(|e| e.to_string())
}

fn run(seq: &InMemorySequence, cfg: TrackerConfig) -> Result<SequenceMetrics, String> {
    let mut t = DroTracker::new(cfg, &seq.id, ClockKind::Monotonic.make());
    let r = eval::run_tracker(seq, &mut t, None).map_err(|e| e.to_string())?;
    eval::evaluate(&r.predictions, seq.ground_truth.as_deref().unwrap(), r.elapsed).map_err(|e| e.to_string())
}

fn criterion_translation(seq: &InMemorySequence) -> Outcome {
    let ang = run(seq, TrackerConfig::new(Mode::Angular, true, FrameScale::Full))?;
    let comb = run(seq, TrackerConfig::new(Mode::Combined, true, FrameScale::Full))?;
    let detail = format!(
        "angular IoU {:.3} dist {:.2} px; combined IoU {:.3} dist {:.2} px",
        ang.mean_iou, ang.mean_center_error, comb.mean_iou, comb.mean_center_error
    );
    check!(ang.mean_iou >= 0.3 && ang.mean_center_error <= 10.0 && comb.mean_iou >= 0.5, "{detail}");
    Ok(detail)
}

fn criterion_zoom(seq: &InMemorySequence) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for mode in [Mode::Combined, Mode::Angular] {
        let on = run(seq, TrackerConfig::new(mode, true, FrameScale::Full))?;
        let off = run(seq, TrackerConfig::new(mode, false, FrameScale::Full))?;
        ok &= on.mean_center_error <= off.mean_center_error;
        lines.push(format!("{mode} dist rc {:.2} vs no-rc {:.2}", on.mean_center_error, off.mean_center_error));
    }
    let ang = run(seq, TrackerConfig::new(Mode::Angular, true, FrameScale::Full))?;
    let comb = run(seq, TrackerConfig::new(Mode::Combined, true, FrameScale::Full))?;
    ok &= comb.mean_iou >= ang.mean_iou;
    lines.push(format!("IoU combined {:.3} vs angular {:.3}", comb.mean_iou, ang.mean_iou));
    let detail = lines.join("; ");
    check!(ok, "{detail}");
    Ok(detail)
}

fn best_fps(seq: &InMemorySequence, cfg: &TrackerConfig, repeats: usize) -> Result<f64, String> {
    let mut best: f64 = 0.0;
    for _ in 0..repeats {
        best = best.max(run(seq, cfg.clone())?.fps);
    }
    Ok(best)
}

fn criterion_throughput(seq: &InMemorySequence) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for mode in Mode::ALL {
        let fs = best_fps(seq, &TrackerConfig::new(mode, true, FrameScale::Full), 2)?;
        let hs = best_fps(seq, &TrackerConfig::new(mode, true, FrameScale::Half), 2)?;
        ok &= hs > fs;
        lines.push(format!("{mode} fs {fs:.0} / hs {hs:.0} fps"));
    }
    let ang = best_fps(seq, &TrackerConfig::new(Mode::Angular, true, FrameScale::Full), 2)?;
    let fcm = best_fps(seq, &TrackerConfig::new(Mode::Fcm, true, FrameScale::Full), 2)?;
    ok &= ang >= 3.0 * fcm;
    lines.push(format!("angular/fcm {:.1}x", ang / fcm));
    let detail = lines.join("; ");
    check!(ok, "{detail}");
    Ok(detail)
}

fn criterion_determinism() -> Outcome {
    let a = synth("fixture_a", 60, 320, 180, 1.0, 1.0, 1.0, 31);
    let b = synth("fixture_b", 60, 320, 180, 0.0, 1.0, 1.3, 32);
    let seqs: [&dyn FrameSource; 2] = [&a, &b];
    let configs = config_matrix(&Mode::ALL, &[true, false], &[FrameScale::Full, FrameScale::Half], &TrackerConfig::default());
    let csv = |workers| {
        benchmark_run(
            &seqs,
            &configs,
            &BenchOptions {
                workers,
                clock: ClockKind::Ticks,
            },
        )
        .to_csv()
    };
    let first = csv(1);
    let second = csv(1);
    let threaded = csv(4);
    check!(first == second, "two sequential runs differ");
    check!(first == threaded, "sequential and 4-worker runs differ");
    check!(first.lines().count() == 1 + 24 + 12);
    Ok(format!("{} bytes, 24 rows + 12 means, identical across 3 runs (1, 1, 4 workers)", first.len()))
}

fn criterion_scale_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst_aspect: f64 = 0.0;
    let mut worst_jump: f64 = 0.0;
    let samples = 100_000;
    for i in 0..samples {
        let cfg = AngularConfig {
            rule: if i % 2 == 0 { ScaleRule::WeightedChange } else { ScaleRule::Literal },
            ..AngularConfig::default()
        };
        let frame_h = rng.gen_range(100.0..1200.0);
        let prt = BBox::new(rng.gen_range(0.0..800.0), rng.gen_range(1.0..frame_h), rng.gen_range(2.0..300.0), rng.gen_range(2.0..frame_h));
        let prev = prt.center();
        let curr = PointF::new(prev.x + rng.gen_range(-30.0..30.0), (prev.y + rng.gen_range(-30.0..30.0)).max(0.5));
        let step = MotionStep::new(prev, curr);
        let out = angular_scale(&step, &prt, prev.y, curr.y, frame_h, &cfg);

        let aspect = ((out.w / out.h) - (prt.w / prt.h)).abs() / (prt.w / prt.h);
        worst_aspect = worst_aspect.max(aspect);
        check!(out.center() == prt.center());
        check!(out.h >= cfg.min_height - 1e-9 && out.h <= frame_h.max(cfg.min_height) + 1e-9, "height {} outside bounds", out.h);
        let f = out.h / prt.h;
        let bounded_by_height = (out.h - cfg.min_height).abs() < 1e-9 || (out.h - frame_h.max(cfg.min_height)).abs() < 1e-9;
        check!(
            bounded_by_height || (f >= cfg.min_step_factor - 1e-12 && f <= cfg.max_step_factor + 1e-12),
            "step factor {f} outside clamp"
        );

        // approach straight up or down from either side
        let ratio = rng.gen_range(0.5..1.5);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let eps = 1e-9;
        let side = |dx: f64| {
            let s = MotionStep::new(PointF::new(0.0, 100.0), PointF::new(dx, 100.0 + sign * 10.0));
            scale_factor(&s, 100.0, 100.0 * ratio, cfg.rule).unwrap()
        };
        let vertical = side(0.0);
        worst_jump = worst_jump.max((side(eps) - vertical).abs()).max((side(-eps) - vertical).abs());
    }
    check!(worst_aspect <= 1e-12, "aspect drift {worst_aspect:e}");
    check!(worst_jump <= 1e-6, "discontinuity {worst_jump:e} at ±π/2");
    Ok(format!("{samples} samples, max aspect drift {worst_aspect:.1e}, max jump at ±π/2 {worst_jump:.1e}"))
}

// ------------------------------------------------------------------ runner

fn criterion(n: usize, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let took = start.elapsed();
    let result = match (result, budget) {
        (Ok(_), Some(b)) if took > b => Err(format!("took {:.2} s, budget {:.0} s", took.as_secs_f64(), b.as_secs_f64())),
        (r, _) => r,
    };
    let budget_note = budget.map(|b| format!(" of {:.0} s", b.as_secs_f64())).unwrap_or_default();
    match &result {
        Ok(d) => println!("criterion {n} {name}: PASS ({:.2} s{budget_note}) {d}", took.as_secs_f64()),
        Err(e) => println!("criterion {n} {name}: FAIL ({:.2} s{budget_note}) {e}", took.as_secs_f64()),
    }
    result.is_ok()
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if std::env::args().any(|a| a == "--list") {
        for n in 1..=7 {
            println!("criterion_{n}: test");
        }
        return;
    }
    let wanted = |n: usize| filter.is_empty() || filter.iter().any(|f| format!("criterion_{n}").contains(f.as_str()));
    let translation = OnceCell::new();
    let zoom = OnceCell::new();

    println!("running acceptance criteria");
    let mut results = Vec::new();
    if wanted(1) {
        results.push(criterion(1, "examples", Some(Duration::from_secs(30)), criterion_examples));
    }
    if wanted(2) {
        results.push(criterion(2, "fcm oracle", Some(Duration::from_secs(10)), criterion_fcm_oracle));
    }
    if wanted(3) {
        let seq = translation.get_or_init(translation_sequence);
        results.push(criterion(3, "synthetic translation", Some(Duration::from_secs(60)), || criterion_translation(seq)));
    }
    if wanted(4) {
        let seq = zoom.get_or_init(zoom_sequence);
        results.push(criterion(4, "correction and segmentation direction", None, || criterion_zoom(seq)));
    }
    if wanted(5) {
        let seq = translation.get_or_init(translation_sequence);
        results.push(criterion(5, "throughput ordering", None, || criterion_throughput(seq)));
    }
    if wanted(6) {
        results.push(criterion(6, "deterministic bench", None, criterion_determinism));
    }
    if wanted(7) {
        results.push(criterion(7, "scale invariants", Some(Duration::from_secs(5)), criterion_scale_invariants));
    }
    let passed = results.iter().filter(|&&r| r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
