use corrview::config::ExperimentConfig;
use corrview::correction::{run_depth_correction, Checkpoint, CorrectionTrace, DisparityMap};
use corrview::io::{decode_pfm, read_depth_pfm, read_pgm16};
use corrview::report::{emit_trace, heatmap_stem};

const EXPERIMENT: &str = r#"{
  "scene": {"primitives": [{"shape": "sphere", "center": [0, 0, 0], "radius": 1.0}]},
  "rig": {"n": 4, "delta_alpha": "fixed:20", "radius": 3.0, "width": 20, "height": 20, "fov_deg": 50.0},
  "infidelity": {"kind": "concavity", "mask_fraction": 0.15, "magnitude": 0.3, "seed": 2},
  "schedule": {"T": 16, "t_start": 0, "t_end": 15},
  "correction": {"lambda_corr": 0.1, "k": 1, "delta_alpha": "uniform:10:30"},
  "heatmap_clip": 0.5
}"#;

fn run() -> (ExperimentConfig, CorrectionTrace) {
    let cfg = ExperimentConfig::from_json(EXPERIMENT).unwrap();
    let trace = run_depth_correction(&cfg.problem().unwrap(), &cfg.settings()).unwrap();
    (cfg, trace)
}

#[test]
fn default_checkpoints_give_two_heatmaps_per_pair() {
    let (cfg, trace) = run();
    assert_eq!(cfg.checkpoint_list(), vec![0, 16]);
    let tmp = tempfile::tempdir().unwrap();
    emit_trace(&trace, tmp.path(), cfg.heatmap_clip).unwrap();
    for t in [0, 16] {
        for pair in 0..4 {
            assert!(tmp.path().join("heatmaps").join(format!("{}.pgm", heatmap_stem(t, pair))).exists());
        }
    }
    let count = std::fs::read_dir(tmp.path().join("heatmaps"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "pgm"))
        .count();
    assert_eq!(count, 8);
    let initial = read_depth_pfm(&tmp.path().join("depth/v1_2_initial.pfm")).unwrap();
    assert_eq!(initial.values, trace.initial_depths[2].values);
}

#[test]
fn heatmap_pixels_scale_clipped_disparity() {
    let (cfg, trace) = run();
    let tmp = tempfile::tempdir().unwrap();
    emit_trace(&trace, tmp.path(), cfg.heatmap_clip).unwrap();
    let mut nonzero = 0;
    for pair in 0..4 {
        let stem = tmp.path().join("heatmaps").join(heatmap_stem(0, pair));
        let (w, h, pixels) = read_pgm16(&stem.with_extension("pgm")).unwrap();
        let (pw, ph, disparity) = decode_pfm(&std::fs::read(stem.with_extension("pfm")).unwrap()).unwrap();
        assert_eq!((w, h), (pw, ph));
        for (p, d) in pixels.iter().zip(&disparity) {
            let expected = ((*d as f64 / cfg.heatmap_clip).min(1.0) * 65535.0).round() as u16;
            assert!(p.abs_diff(expected) <= 1, "{p} vs {expected} for {d}");
            nonzero += (*p > 0) as usize;
        }
    }
    assert!(nonzero > 0);
}

#[test]
fn zero_residual_heatmap_is_black() {
    let (w, h) = (5, 4);
    let trace = CorrectionTrace {
        made_initial: 0.0,
        made_final: 0.0,
        made_reduction: 0.0,
        clean_drift_final: 0.0,
        corr_iterations: 0,
        records: vec![],
        checkpoints: vec![Checkpoint {
            t: 0,
            heatmaps: vec![DisparityMap {
                pair: (0, 1),
                width: w,
                height: h,
                values: vec![0.0; w * h],
            }],
        }],
        initial_depths: vec![],
        final_depths: vec![],
    };
    let tmp = tempfile::tempdir().unwrap();
    emit_trace(&trace, tmp.path(), 2.0).unwrap();
    let (pw, ph, pixels) = read_pgm16(&tmp.path().join("heatmaps").join(format!("{}.pgm", heatmap_stem(0, 0)))).unwrap();
    assert_eq!((pw, ph), (w, h));
    assert!(pixels.iter().all(|p| *p == 0));
}

#[test]
fn trace_json_carries_per_iteration_records() {
    let (cfg, trace) = run();
    let tmp = tempfile::tempdir().unwrap();
    emit_trace(&trace, tmp.path(), cfg.heatmap_clip).unwrap();
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(tmp.path().join("trace.json")).unwrap()).unwrap();
    let records = json["records"].as_array().unwrap();
    assert_eq!(records.len(), 16);
    assert_eq!(records[0]["mode"], "corr");
    assert_eq!(records[1]["mode"], "sds");
    assert!(records[1]["loss"].is_null());
    assert_eq!(json["made_reduction"].as_f64().unwrap(), trace.made_reduction);
}
