//! Detector and keyframe checks against generator ground truth.

use kfid_core::jnl::{localize_tracklet, Detector, DetectorConfig, HeuristicDetector};
use kfid_core::roi::{filter_by_roi, RoiConfig};
use kfid_core::spatial::{kfid, lhc_merge, SpatialContextConfig};
use kfid_core::synth::{render_tracklet, Split, SynthConfig, TrackletPlan};
use kfid_core::types::{Frame, JerseyLabel, Tracklet};

fn clean(visibility: f64, frames: usize) -> SynthConfig {
    SynthConfig {
        frames_min: frames,
        frames_max: frames,
        visibility,
        distractor_prob: 0.0,
        occluder_prob: 0.0,
        blur_min: 0,
        blur_max: 0,
        ..SynthConfig::default()
    }
}

fn plan(id: &str, n: i32) -> TrackletPlan {
    TrackletPlan {
        id: id.to_string(),
        split: Split::Test,
        label: JerseyLabel::new(n).unwrap(),
    }
}

fn detector() -> HeuristicDetector {
    HeuristicDetector::new(DetectorConfig::default())
}

#[test]
fn every_digit_glyph_is_localized() {
    let cfg = clean(1.0, 3);
    for n in 0..10 {
        let (frames, meta) = render_tracklet(&cfg, &plan(&format!("g{n}"), n));
        for (f, m) in frames.iter().zip(&meta.frames) {
            let truth = m.target_digits[0];
            let best = detector()
                .localize(f)
                .iter()
                .map(|d| d.bbox.iou(&truth))
                .fold(0.0, f64::max);
            assert!(best >= 0.7, "digit {n} frame {}: IoU {best}", f.index);
        }
    }
}

#[test]
fn detections_cover_glyph_frames() {
    let (shown, shown_meta) = render_tracklet(&clean(1.0, 10), &plan("a", 58));
    let (hidden, _) = render_tracklet(&clean(0.0, 10), &plan("b", 58));
    let glyph_frames = [1usize, 4, 5, 8];
    let frames: Vec<Frame> = (0..10)
        .map(|i| {
            let src = if glyph_frames.contains(&i) { &shown } else { &hidden };
            let mut f = src[i].clone();
            f.index = i;
            f
        })
        .collect();
    let t = Tracklet::new("mix", frames, vec![], None).unwrap();
    let dets = localize_tracklet(&t, &detector());
    let covered = glyph_frames
        .iter()
        .filter(|&&i| {
            let truth = &shown_meta.frames[i].target_digits;
            dets.iter()
                .any(|d| d.frame_index == i && truth.iter().any(|b| d.bbox.iou(b) >= 0.5))
        })
        .count();
    assert!(covered >= 3, "{covered}");
}

#[test]
fn only_the_glyph_frame_yields_detections() {
    let mut frames: Vec<Frame> = (0..3).map(|i| Frame::filled(i, 40, 40, [90, 30, 30])).collect();
    for y in 10..24 {
        for x in 15..23 {
            frames[2].set_rgb(x, y, [250, 240, 220]);
        }
    }
    let t = Tracklet::new("one", frames, vec![], None).unwrap();
    let dets = localize_tracklet(&t, &detector());
    assert!(!dets.is_empty());
    assert!(dets.iter().all(|d| d.frame_index == 2));
}

#[test]
fn adjacent_digits_merge_into_the_number_box() {
    let cfg = clean(1.0, 4);
    let roi = RoiConfig::default();
    let sc = SpatialContextConfig::default();
    for n in [23, 48, 90, 11] {
        let (frames, meta) = render_tracklet(&cfg, &plan(&format!("m{n}"), n));
        for (f, m) in frames.iter().zip(&meta.frames) {
            let dets = filter_by_roi(&detector().localize(f), &frames, &roi);
            let merged = lhc_merge(&dets, f, &sc);
            let truth = m.number_box().unwrap();
            let best = merged.iter().map(|d| d.bbox.iou(&truth)).fold(0.0, f64::max);
            assert!(best >= 0.8, "{n}: IoU {best} in {merged:?}");
        }
    }
}

#[test]
fn keyframes_track_visibility() {
    let cfg = SynthConfig {
        frames_min: 300,
        frames_max: 300,
        ..SynthConfig::default()
    };
    for (id, n) in [("v1", 27), ("v2", 4), ("v3", 63)] {
        let (frames, meta) = render_tracklet(&cfg, &plan(id, n));
        let t = Tracklet::new(id, frames, vec![], None).unwrap();
        let kf = kfid(&t, &detector(), &RoiConfig::default(), &SpatialContextConfig::default());
        let ratio = kf.keyframe_indices.len() as f64 / t.len() as f64;
        assert!((0.06..=0.25).contains(&ratio), "{id}: ratio {ratio}");
        let visible = meta.visible_frames();
        let kept = visible
            .iter()
            .filter(|f| kf.keyframe_indices.contains(f))
            .count();
        let recall = kept as f64 / visible.len() as f64;
        assert!(recall >= 0.9, "{id}: recall {recall}");
    }
}

#[test]
fn opposition_digits_lose_to_a_larger_target_cluster() {
    // the target number shows in a handful of frames; the opposition
    // player with its own number appears in fewer
    let cfg = SynthConfig {
        frames_min: 60,
        frames_max: 60,
        visibility: 0.15,
        distractor_prob: 0.1,
        occluder_prob: 0.0,
        ..SynthConfig::default()
    };
    let (frames, meta) = render_tracklet(&cfg, &plan("opp", 35));
    let t = Tracklet::new("opp", frames, vec![], None).unwrap();
    let kf = kfid(&t, &detector(), &RoiConfig::default(), &SpatialContextConfig::default());
    assert!(!kf.is_empty());
    for d in &kf.kept_detections {
        let fm = &meta.frames[d.frame_index];
        let on_target = fm.target_digits.iter().any(|b| d.bbox.intersect(b).is_some());
        assert!(on_target, "kept a non-target box {d:?}");
    }
}
