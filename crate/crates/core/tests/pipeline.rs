use std::path::Path;

use kfid_core::config::Config;
use kfid_core::dataset::{self, GT_FILE, SIDECAR_FILE};
use kfid_core::pipeline::{
    cmd_ablate, cmd_eval, cmd_kfid, cmd_synth, cmd_train, metrics_path, reduction_pct, ReportRow,
    RunReport,
};
use kfid_core::stnet::{write_checkpoint, ModelParams};
use kfid_core::types::{encode_label, Frame, JerseyLabel};
use kfid_core::Error;
use proptest::prelude::*;

fn tiny_config() -> Config {
    let text = "\
synth.tracklet_count = 10
synth.frames_min = 8
synth.frames_max = 12
synth.visibility = 0.5
synth.holdout_count = 2
net.input_height = 24
net.input_width = 20
net.feature_dim = 8
net.hidden = 4
net.batch_size = 3
net.iterations = 4
sampler.length = 6
sampler.mode = random
";
    Config::parse(text, Path::new("tiny.cfg")).unwrap()
}

fn synth_into(dir: &Path) -> Config {
    let cfg = tiny_config();
    cmd_synth(&cfg, dir).unwrap();
    cfg
}

#[test]
fn synth_writes_disjoint_splits() {
    let tmp = tempfile::tempdir().unwrap();
    synth_into(tmp.path());
    let mut all = Vec::new();
    for (split, expected) in [("train", 6), ("val", 1), ("test", 3)] {
        let dir = tmp.path().join(split);
        let ids = dataset::tracklet_ids(&dir).unwrap();
        assert_eq!(ids.len(), expected, "{split}");
        let gt = dataset::read_gt(&dir.join(GT_FILE)).unwrap();
        assert_eq!(gt.iter().map(|(id, _)| id.clone()).collect::<Vec<_>>(), ids);
        all.extend(ids);
    }
    let n = all.len();
    all.sort();
    all.dedup();
    assert_eq!(all.len(), n);
}

#[test]
fn synth_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = synth_into(a.path());
    let mb = synth_into(b.path());
    assert_eq!(ma, mb);
    let id = &dataset::tracklet_ids(&a.path().join("train")).unwrap()[0];
    for name in ["frame_000003.ppm", "meta.csv"] {
        let fa = std::fs::read(a.path().join("train").join(id).join(name)).unwrap();
        let fb = std::fs::read(b.path().join("train").join(id).join(name)).unwrap();
        assert_eq!(fa, fb, "{name}");
    }
}

#[test]
fn kfid_stats_are_consistent_and_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synth_into(tmp.path());
    let out1 = tmp.path().join("k1");
    let out2 = tmp.path().join("k2");
    let r1 = cmd_kfid(tmp.path(), &cfg, &out1).unwrap();
    let r2 = cmd_kfid(tmp.path(), &cfg, &out2).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(r1.rows.len(), 10);
    assert!(r1.keyframes() <= r1.frames());
    let expected = (1.0 - r1.keyframes() as f64 / r1.frames() as f64) * 100.0;
    assert!((r1.reduction_pct() - expected).abs() < 0.01);
    for name in ["kfid_stats.csv", "kfid_summary.txt", "test/trk00007.csv"] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

fn blank_dataset(dir: &Path, tracklets: usize) {
    for t in 0..tracklets {
        let frames: Vec<Frame> = (0..4).map(|i| Frame::filled(i, 30, 40, [20, 120, 40])).collect();
        dataset::write_tracklet(&dir.join(format!("b{t}")), &frames).unwrap();
    }
}

#[test]
fn blank_dataset_reduces_fully_without_gt() {
    let tmp = tempfile::tempdir().unwrap();
    blank_dataset(tmp.path(), 3);
    let report = cmd_kfid(tmp.path(), &Config::default(), &tmp.path().join("out")).unwrap();
    assert_eq!(report.frames(), 12);
    assert_eq!(report.keyframes(), 0);
    assert_eq!(report.reduction_pct(), 100.0);
    assert_eq!(report.visible_recall(), None);
}

#[test]
fn malformed_sidecar_names_file_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    blank_dataset(tmp.path(), 1);
    let sidecar = tmp.path().join("b0").join(SIDECAR_FILE);
    std::fs::write(&sidecar, "frame_index,x1,y1,x2,y2,confidence\n0,1,1,5,5,0.9\n1,1,x,5,5,0.9\n").unwrap();
    let cfg = Config::parse("jnl.kind = file_backed", Path::new("c")).unwrap();
    let err = cmd_kfid(tmp.path(), &cfg, &tmp.path().join("out")).unwrap_err();
    match &err {
        Error::Parse { path, line, .. } => {
            assert_eq!(path, &sidecar);
            assert_eq!(*line, 3);
        }
        other => panic!("{other}"),
    }
}

#[test]
fn train_is_reproducible_and_respects_the_kfid_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synth_into(tmp.path());
    let ck1 = tmp.path().join("a.ckpt");
    let ck2 = tmp.path().join("b.ckpt");
    let log1 = cmd_train(tmp.path(), &cfg, &ck1).unwrap();
    cmd_train(tmp.path(), &cfg, &ck2).unwrap();
    assert_eq!(log1.len(), 4);
    assert_eq!(std::fs::read(&ck1).unwrap(), std::fs::read(&ck2).unwrap());
    assert_eq!(
        std::fs::read(metrics_path(&ck1)).unwrap(),
        std::fs::read(metrics_path(&ck2)).unwrap()
    );
    let metrics = std::fs::read_to_string(metrics_path(&ck1)).unwrap();
    assert!(metrics.starts_with("iteration,loss,lr\n0,"));

    let mut off = cfg.clone();
    off.kfid_enabled = false;
    let ck3 = tmp.path().join("c.ckpt");
    let log3 = cmd_train(tmp.path(), &off, &ck3).unwrap();
    assert_ne!(log1, log3);

    let r1 = cmd_eval(tmp.path(), &ck1, &cfg).unwrap();
    let r2 = cmd_eval(tmp.path(), &ck2, &cfg).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(r1.to_csv(), r2.to_csv());
}

#[test]
fn empty_train_split_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(tmp.path().join("train")).unwrap();
    dataset::write_gt(&tmp.path().join("train").join(GT_FILE), &[]).unwrap();
    let err = cmd_train(tmp.path(), &tiny_config(), &tmp.path().join("x")).unwrap_err();
    assert!(err.to_string().contains("no tracklets"), "{err}");
}

/// A checkpoint whose heads ignore the input and emit `label`.
fn oracle_checkpoint(cfg: &Config, label: JerseyLabel, path: &Path) {
    let mut p = ModelParams::init(&cfg.net, 1);
    let pair = encode_label(label);
    for (head, d) in [(&mut p.head_first, pair.first), (&mut p.head_second, pair.second)] {
        head.weight.fill(0.0);
        head.bias.fill(0.0);
        head.bias.data[d as usize] = 30.0;
    }
    write_checkpoint(path, &cfg.net, &p).unwrap();
}

#[test]
fn oracle_checkpoint_scores_perfectly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config();
    let frames: Vec<Frame> = (0..5).map(|i| Frame::filled(i, 20, 24, [200, 0, 0])).collect();
    let data = tmp.path().join("d");
    let gt = vec![
        ("p".to_string(), JerseyLabel::new(23).unwrap()),
        ("q".to_string(), JerseyLabel::new(23).unwrap()),
    ];
    for (id, _) in &gt {
        dataset::write_tracklet(&data.join(id), &frames).unwrap();
    }
    dataset::write_gt(&data.join(GT_FILE), &gt).unwrap();
    let ck = tmp.path().join("oracle.ckpt");
    oracle_checkpoint(&cfg, JerseyLabel::new(23).unwrap(), &ck);
    let report = cmd_eval(&data, &ck, &cfg).unwrap();
    assert_eq!(report.accuracy, 1.0);
    // blank frames yield no keyframes, so every row is a flagged fallback
    assert!(report.rows.iter().all(|r| r.fallback));
    assert!(report.to_table().contains("accuracy: 1.0000 (2/2)"));
}

#[test]
fn eval_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config();
    let ck = tmp.path().join("o.ckpt");
    oracle_checkpoint(&cfg, JerseyLabel::ABSENT, &ck);

    let empty = tmp.path().join("empty");
    std::fs::create_dir_all(empty.join("test")).unwrap();
    dataset::write_gt(&empty.join("test").join(GT_FILE), &[]).unwrap();
    let err = cmd_eval(&empty, &ck, &cfg).unwrap_err();
    assert!(err.to_string().contains("no tracklets"), "{err}");

    let other = Config::parse("net.hidden = 5", Path::new("c")).unwrap();
    let data = tmp.path().join("d");
    synth_into(&data);
    let err = cmd_eval(&data, &ck, &other).unwrap_err();
    assert!(err.to_string().contains("checkpoint/config shape mismatch"), "{err}");
    // without explicit architecture keys the checkpoint's shapes are used
    assert!(cmd_eval(&data, &ck, &Config::default()).is_ok());
}

#[test]
fn ablation_reports_both_runs_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synth_into(tmp.path());
    let a = cmd_ablate(tmp.path(), &cfg).unwrap();
    let b = cmd_ablate(tmp.path(), &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.on.kfid_enabled && !a.off.kfid_enabled);
    assert_eq!(a.on.rows.len(), 3);
    assert_eq!(a.delta(), a.on.accuracy - a.off.accuracy);
    let s = a.summary();
    assert!(s.contains("net.seed: 0") && s.contains("delta:"), "{s}");
}

fn label() -> impl Strategy<Value = JerseyLabel> {
    (-1i32..100).prop_map(|n| JerseyLabel::new(n).unwrap())
}

proptest! {
    #[test]
    fn report_accuracy_matches_rows(
        rows in prop::collection::vec((label(), label(), any::<bool>()), 1..40),
        frames in 1usize..1000,
        keep in 0usize..1000,
    ) {
        let rows: Vec<ReportRow> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (pred, gt, fallback))| ReportRow {
                tracklet_id: format!("t{i}"),
                pred,
                gt,
                correct: pred == gt,
                fallback,
            })
            .collect();
        let keyframes = keep.min(frames);
        let report = RunReport::from_rows(rows, frames, keyframes, true);
        let csv = report.to_csv();
        let parsed: Vec<&str> = csv.lines().skip(1).collect();
        let correct = parsed.iter().filter(|l| l.ends_with(",1")).count();
        prop_assert_eq!(parsed.len(), report.rows.len());
        prop_assert!((report.accuracy - correct as f64 / parsed.len() as f64).abs() < 1e-12);
        prop_assert!((report.reduction_pct() - reduction_pct(frames, keyframes)).abs() < 1e-12);
        prop_assert!(report.reduction_pct() >= 0.0);
    }
}
