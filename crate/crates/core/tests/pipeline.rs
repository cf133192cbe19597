//! Cross-module integration: plant shapes through the synthetic skin and
//! the trained estimator, and harness-level error paths.

use foilctl_core::error::Error;
use foilctl_core::estimator::{estimate_markers, MlpModel};
use foilctl_core::geometry::markers_to_camber;
use foilctl_core::harness::{cmd_generate, cmd_train, RunConfig};
use foilctl_core::plant::{foil_shape, PlantParams};
use foilctl_core::sensing::{
    normalize_frame, CapacitanceFrame, FrameKind, SkinModelParams, SyntheticSkin, CHANNELS,
};
use std::sync::OnceLock;
use tempfile::TempDir;

fn noise_free_skin(plant: &PlantParams) -> SyntheticSkin {
    let params = SkinModelParams {
        noise_std: 0.0,
        ..SkinModelParams::default()
    };
    SyntheticSkin::new(params, plant.geometry.clone()).unwrap()
}

#[test]
fn synthetic_frames_are_injective_over_the_camber_range() {
    let plant = PlantParams::default();
    let skin = noise_free_skin(&plant);
    let frames: Vec<CapacitanceFrame> = (0..=18)
        .map(|k| {
            let camber = 0.5 * k as f64;
            let shape = foil_shape(camber, &plant, 0.0).unwrap();
            skin.frame(&shape.markers, 0.0).unwrap()
        })
        .collect();
    for i in 0..frames.len() {
        for j in i + 1..frames.len() {
            let gap = frames[i]
                .values
                .iter()
                .zip(frames[j].values.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(gap > 1e-3, "cambers {i}/{j} too close: L-inf gap {gap}");
        }
    }
}

#[test]
fn larger_camber_reduces_every_channel() {
    let plant = PlantParams::default();
    let skin = noise_free_skin(&plant);
    let at = |camber: f64| {
        let shape = foil_shape(camber, &plant, 0.0).unwrap();
        skin.frame(&shape.markers, 0.0).unwrap().values
    };
    let low = at(2.0);
    let high = at(5.0);
    for k in 0..CHANNELS {
        assert!(
            high[k] < low[k],
            "channel {k}: {} at 5% vs {} at 2%",
            high[k],
            low[k]
        );
    }
}

/// Small trained stack shared by the estimator round-trip tests.
fn stack() -> &'static (RunConfig, TempDir, MlpModel) {
    static STACK: OnceLock<(RunConfig, TempDir, MlpModel)> = OnceLock::new();
    STACK.get_or_init(|| {
        let mut config = RunConfig::default();
        config.seed = 9001;
        config.generate.cycles = 8;
        config.train.epochs = 350;
        let dir = TempDir::new().unwrap();
        cmd_generate(&config, dir.path()).unwrap();
        let trained = cmd_train(&config, dir.path()).unwrap();
        let model = MlpModel::load_json(&trained.model_path).unwrap();
        (config, dir, model)
    })
}

#[test]
fn baseline_frame_decodes_to_the_rest_shape() {
    let (config, _dir, model) = stack();
    let zeros = CapacitanceFrame {
        t: 0.0,
        values: [0.0; CHANNELS],
        kind: FrameKind::Normalized,
    };
    let estimated = estimate_markers(model, &zeros).unwrap();
    // The session idles at zero pressure, so the reference shape is the
    // minimum-camber state.
    let rest = foil_shape(config.plant.camber_min_percent, &config.plant, 0.0).unwrap();
    for (e, r) in estimated.points.iter().zip(rest.markers.points.iter()) {
        let err = e.distance_to(r);
        assert!(err < 2.0, "marker off rest shape by {err} mm");
    }
}

#[test]
fn six_percent_state_round_trips_through_the_estimator() {
    let (config, _dir, model) = stack();
    let skin = noise_free_skin(&config.plant);
    let shape = foil_shape(6.0, &config.plant, 0.0).unwrap();
    let raw = skin.frame(&shape.markers, 0.0).unwrap();
    let baseline = &model.scaling.as_ref().unwrap().baseline;
    let normalized = normalize_frame(&raw, baseline).unwrap();
    let estimated = estimate_markers(model, &normalized).unwrap();
    let camber = markers_to_camber(&estimated, &config.plant.geometry).unwrap();
    assert!(
        (camber - 6.0).abs() < 0.06,
        "estimated camber {camber} too far from 6.0"
    );
    // Same frame twice decodes identically.
    let again = estimate_markers(model, &normalized).unwrap();
    assert_eq!(estimated, again);
}

#[test]
fn full_grid_emits_thirteen_records_and_a_summary() {
    let (config, dir, _model) = stack();
    let out = foilctl_core::harness::cmd_control(config, dir.path()).unwrap();
    assert_eq!(out.record_paths.len(), 13);
    assert_eq!(out.summary.grid.len(), 12);
    assert_eq!(out.summary.step.rise_per_step_s.len(), 3);
    assert!(out.summary_json.exists());
    assert!(out.summary_csv.exists());
    for path in &out.record_paths {
        assert!(path.exists(), "{} missing", path.display());
    }
    // Every stored command stays inside the actuator limits.
    let step = foilctl_core::control::ExperimentRecord::load_csv(
        &out.record_paths[0],
        1.0 / config.generate.sample_rate_hz,
        foilctl_core::control::SetpointProfile::step_default(),
    )
    .unwrap();
    assert!(step
        .ticks
        .iter()
        .all(|k| (-1.0..=1.0).contains(&k.command)));
}

#[test]
fn zero_cycle_config_produces_baseline_only_logs() {
    let mut config = RunConfig::default();
    config.generate.cycles = 0;
    config.generate.baseline_s = 2.0;
    let dir = TempDir::new().unwrap();
    let out = cmd_generate(&config, dir.path()).unwrap();
    let expected = (4.0 * config.generate.sample_rate_hz).round() as usize;
    assert_eq!(out.frames, expected);
    // With no actuation every marker row is the rest shape.
    let markers = foilctl_core::ingestion::load_marker_log(&out.marker_path).unwrap();
    let rest = foil_shape(config.plant.camber_min_percent, &config.plant, 0.0).unwrap();
    // Within the 9-significant-digit log precision.
    for row in &markers {
        for (p, r) in row.points.iter().zip(rest.markers.points.iter()) {
            assert!(p.distance_to(r) < 1e-5);
        }
    }
}

#[test]
fn corrupt_log_fails_with_line_number_and_data_exit_code() {
    let mut config = RunConfig::default();
    config.generate.cycles = 0;
    config.generate.baseline_s = 1.0;
    let dir = TempDir::new().unwrap();
    let out = cmd_generate(&config, dir.path()).unwrap();

    // Truncate one row of the capacitance log.
    let text = std::fs::read_to_string(&out.capacitance_path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let broken = lines[5].rsplit_once(',').unwrap().0;
    lines[5] = broken;
    std::fs::write(&out.capacitance_path, lines.join("\n")).unwrap();

    let err = cmd_train(&config, dir.path()).unwrap_err();
    match &err {
        Error::Parse { line, .. } => assert_eq!(*line, 6),
        other => panic!("expected parse error, got {other:?}"),
    }
    assert_eq!(err.exit_code(), 3);
}
