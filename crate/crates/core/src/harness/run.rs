//! The five commands behind the CLI. Each one writes its artifacts plus a
//! manifest into the output directory and returns a typed summary.

use crate::control::{
    run_closed_loop, ExperimentRecord, FeedbackSource, ProfileKind, SetpointProfile,
};
use crate::error::{Error, Result};
use crate::estimator::{
    estimate_markers, mlp_init, train, MlpModel, TrainConfig, CANONICAL_SIZES,
};
use crate::geometry::{markers_to_camber, MarkerSet, PlanarPoint};
use crate::harness::config::RunConfig;
use crate::harness::manifest::Manifest;
use crate::ingestion::{
    align_streams, load_capacitance_log, load_marker_log, split_dataset, write_capacitance_log,
    write_marker_log, SplitRatios,
};
use crate::metrics::{
    nrmse, phase_average, plateau_steady_state_errors, rise_time, sensor_error_stats,
    SensorErrorReport,
};
use crate::plant::{initial_state, plant_step};
use crate::sensing::{compute_baseline, CapacitanceFrame, SyntheticSkin};
use crate::seeds::derive_seed;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

fn write_effective_config(config: &RunConfig, out_dir: &Path) -> Result<()> {
    std::fs::write(out_dir.join("effective_config.cfg"), config.to_text())?;
    Ok(())
}

/// Simulate one logging session: quiet baseline, open-loop triangle
/// actuation cycles, quiet baseline. Returns the 714 Hz capacitance
/// stream and the camera-rate marker stream.
fn simulate_session(
    config: &RunConfig,
    skin_seed: u64,
    cycles: usize,
) -> Result<(Vec<CapacitanceFrame>, Vec<MarkerSet>)> {
    let dt = 1.0 / config.generate.sample_rate_hz;
    let marker_dt = 1.0 / config.generate.marker_rate_hz;
    let baseline = config.generate.baseline_s;
    let period = config.generate.cycle_period_s;
    let active = cycles as f64 * period;
    let total = 2.0 * baseline + active;

    let mut skin_params = config.skin.clone();
    skin_params.seed = skin_seed;
    let skin = SyntheticSkin::new(skin_params, config.plant.geometry.clone())?;

    let command = |t: f64| -> f64 {
        if t < baseline || t >= baseline + active {
            0.0
        } else {
            let phase = ((t - baseline) % period) / period;
            1.0 - (2.0 * phase - 1.0).abs()
        }
    };

    let steps = (total / dt).round() as usize;
    let mut frames = Vec::with_capacity(steps);
    let mut markers = Vec::with_capacity((total * config.generate.marker_rate_hz) as usize + 1);
    let mut state = initial_state(&config.plant)?;
    let mut next_marker = 0.0;
    for _ in 0..steps {
        let t = state.t;
        frames.push(skin.frame(&state.markers, t)?);
        if t + 0.5 * dt >= next_marker {
            let mut row = state.markers.clone();
            row.t = next_marker;
            markers.push(row);
            next_marker += marker_dt;
        }
        state = plant_step(&state, command(t), dt, &config.plant)?;
    }
    Ok((frames, markers))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateOutput {
    pub capacitance_path: PathBuf,
    pub marker_path: PathBuf,
    pub frames: usize,
    pub marker_rows: usize,
}

/// Produce the training session logs.
pub fn cmd_generate(config: &RunConfig, out_dir: &Path) -> Result<GenerateOutput> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    write_effective_config(config, out_dir)?;
    let skin_seed = derive_seed(config.seed, "generate.skin");
    let (frames, markers) = simulate_session(config, skin_seed, config.generate.cycles)?;

    let capacitance_path = out_dir.join("capacitance.csv");
    let marker_path = out_dir.join("markers.csv");
    write_capacitance_log(&capacitance_path, &frames)?;
    write_marker_log(&marker_path, &markers)?;

    Manifest::new("generate", config.hash_hex(), config.seed)
        .seed("generate.skin", skin_seed)
        .output("capacitance", &capacitance_path)
        .output("markers", &marker_path)
        .count("capacitance_frames", frames.len() as u64)
        .count("marker_rows", markers.len() as u64)
        .write(out_dir)?;

    Ok(GenerateOutput {
        capacitance_path,
        marker_path,
        frames: frames.len(),
        marker_rows: markers.len(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOutput {
    pub model_path: PathBuf,
    pub report_path: PathBuf,
    pub pairs: usize,
    pub dropped: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub initial_val_loss: f64,
}

/// Align the logs in `out_dir`, split, train, and save the model.
pub fn cmd_train(config: &RunConfig, out_dir: &Path) -> Result<TrainOutput> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    write_effective_config(config, out_dir)?;
    let capacitance_path = out_dir.join("capacitance.csv");
    let marker_path = out_dir.join("markers.csv");
    let cap = load_capacitance_log(&capacitance_path)?;
    let markers = load_marker_log(&marker_path)?;

    let window_end = config.train.baseline_window_s;
    let baseline_frames: Vec<_> = cap.iter().filter(|f| f.t < window_end).cloned().collect();
    let baseline = compute_baseline(&baseline_frames)?;

    let aligned = align_streams(
        &cap,
        &markers,
        &baseline,
        config.train.align_tol_s,
        config.plant.geometry.chord_mm,
    )?;
    let dropped = aligned.dropped;
    let pairs = aligned.pairs.len();

    let split_seed = derive_seed(config.seed, "split");
    let dataset = split_dataset(aligned.pairs, aligned.scaling, SplitRatios::default(), split_seed)?;

    let init_seed = derive_seed(config.seed, "estimator.init");
    let shuffle_seed = derive_seed(config.seed, "estimator.shuffle");
    let model0 = mlp_init(&CANONICAL_SIZES, init_seed)?;
    let train_config = TrainConfig {
        learning_rate: config.train.learning_rate,
        epochs: config.train.epochs,
        batch_size: config.train.batch_size,
        seed: shuffle_seed,
        early_stop_patience: if config.train.patience == 0 {
            None
        } else {
            Some(config.train.patience)
        },
    };
    let (model, report) = train(&model0, &dataset, &train_config)?;
    let initial_val_loss = report.val_loss.first().copied().unwrap_or(report.best_val_loss);

    let model_path = out_dir.join("model.json");
    let report_path = out_dir.join("train_report.json");
    model.save_json(&model_path)?;
    write_json(&report_path, &report)?;

    Manifest::new("train", config.hash_hex(), config.seed)
        .seed("split", split_seed)
        .seed("estimator.init", init_seed)
        .seed("estimator.shuffle", shuffle_seed)
        .input("capacitance", &capacitance_path)
        .input("markers", &marker_path)
        .output("model", &model_path)
        .output("train_report", &report_path)
        .count("pairs", pairs as u64)
        .count("dropped_pairs", dropped as u64)
        .count("epochs_run", report.train_loss.len() as u64)
        .write(out_dir)?;

    Ok(TrainOutput {
        model_path,
        report_path,
        pairs,
        dropped,
        epochs_run: report.train_loss.len(),
        best_epoch: report.best_epoch,
        best_val_loss: report.best_val_loss,
        initial_val_loss,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path)?;
    serde_json::to_writer_pretty(BufWriter::new(file), value)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateOutput {
    pub report: SensorErrorReport,
    pub json_path: PathBuf,
    pub csv_path: PathBuf,
    pub samples: usize,
}

/// Sensor accuracy on held-out logs: estimated vs true markers, error as
/// % of foil length, bucketed by camber magnitude.
pub fn cmd_evaluate(config: &RunConfig, out_dir: &Path) -> Result<EvaluateOutput> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let model = MlpModel::load_json(&out_dir.join("model.json"))?;

    let (cap, markers, cap_path, marker_path) = match (&config.evaluate.capacitance, &config.evaluate.markers) {
        (Some(cap_path), Some(marker_path)) => (
            load_capacitance_log(cap_path)?,
            load_marker_log(marker_path)?,
            cap_path.clone(),
            marker_path.clone(),
        ),
        (None, None) => {
            // No held-out logs supplied: generate a fresh session with an
            // independent noise seed.
            let eval_dir = out_dir.join("eval");
            std::fs::create_dir_all(&eval_dir)?;
            let seed = derive_seed(config.seed, "evaluate.skin");
            let (cap, markers) = simulate_session(config, seed, config.evaluate.cycles)?;
            let cap_path = eval_dir.join("capacitance.csv");
            let marker_path = eval_dir.join("markers.csv");
            write_capacitance_log(&cap_path, &cap)?;
            write_marker_log(&marker_path, &markers)?;
            (cap, markers, cap_path, marker_path)
        }
        _ => {
            return Err(Error::Config(
                "evaluate needs both capacitance and markers paths (or neither)".into(),
            ))
        }
    };

    let window_end = config.train.baseline_window_s;
    let baseline_frames: Vec<_> = cap.iter().filter(|f| f.t < window_end).cloned().collect();
    let baseline = compute_baseline(&baseline_frames)?;
    let chord = config.plant.geometry.chord_mm;
    let aligned = align_streams(&cap, &markers, &baseline, config.train.align_tol_s, chord)?;

    let mut estimated = Vec::with_capacity(aligned.pairs.len());
    let mut truth = Vec::with_capacity(aligned.pairs.len());
    let mut truth_camber = Vec::with_capacity(aligned.pairs.len());
    for pair in &aligned.pairs {
        let frame = CapacitanceFrame {
            t: 0.0,
            values: pair.input,
            kind: crate::sensing::FrameKind::Normalized,
        };
        estimated.push(estimate_markers(&model, &frame)?);
        let mut points = [PlanarPoint::new(0.0, 0.0); 5];
        for (k, point) in points.iter_mut().enumerate() {
            *point = PlanarPoint::new(pair.target[2 * k] * chord, pair.target[2 * k + 1] * chord);
        }
        let truth_set = MarkerSet::new(0.0, points);
        truth_camber.push(markers_to_camber(&truth_set, &config.plant.geometry)?);
        truth.push(truth_set);
    }

    let mut edges = Vec::new();
    let mut edge = config.plant.camber_min_percent;
    while edge < config.plant.camber_max_percent - 1e-9 {
        edges.push(edge);
        edge += config.evaluate.bucket_width_percent;
    }
    edges.push(config.plant.camber_max_percent);

    let report = sensor_error_stats(&estimated, &truth, &truth_camber, chord, &edges)?;

    let json_path = out_dir.join("sensor_error.json");
    let csv_path = out_dir.join("sensor_error.csv");
    write_json(&json_path, &report)?;
    {
        let mut w = BufWriter::new(File::create(&csv_path)?);
        writeln!(
            w,
            "camber_lo,camber_hi,count,tip_mean,tip_std,tip_max,tip_min,per_marker_mean"
        )?;
        for b in &report.buckets {
            writeln!(
                w,
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                b.camber_lo,
                b.camber_hi,
                b.tip.count,
                b.tip.mean,
                b.tip.std,
                b.tip.max,
                b.tip.min,
                b.per_marker.mean
            )?;
        }
        w.flush()?;
    }

    Manifest::new("evaluate", config.hash_hex(), config.seed)
        .seed("evaluate.skin", derive_seed(config.seed, "evaluate.skin"))
        .input("capacitance", &cap_path)
        .input("markers", &marker_path)
        .output("sensor_error_json", &json_path)
        .output("sensor_error_csv", &csv_path)
        .count("samples", aligned.pairs.len() as u64)
        .count("dropped_pairs", aligned.dropped as u64)
        .write(out_dir)?;

    Ok(EvaluateOutput {
        report,
        json_path,
        csv_path,
        samples: aligned.pairs.len(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCell {
    pub waveform: String,
    pub peak_to_peak_percent: f64,
    pub period_s: f64,
    pub nrmse_truth: f64,
    pub nrmse_estimate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepSummary {
    pub rise_per_step_s: Vec<f64>,
    pub rise_mean_s: f64,
    pub plateau_errors_percent: Vec<f64>,
    pub plateau_max_percent: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlSummary {
    pub grid: Vec<GridCell>,
    pub step: StepSummary,
}

#[derive(Debug, Clone)]
pub struct ControlOutput {
    pub summary: ControlSummary,
    pub summary_json: PathBuf,
    pub summary_csv: PathBuf,
    pub record_paths: Vec<PathBuf>,
}

/// The full closed-loop suite: the step staircase plus the waveform grid
/// (sine and triangle at every configured amplitude and period).
pub fn cmd_control(config: &RunConfig, out_dir: &Path) -> Result<ControlOutput> {
    config.validate()?;
    let model = MlpModel::load_json(&out_dir.join("model.json"))?;
    let control_dir = out_dir.join("control");
    std::fs::create_dir_all(&control_dir)?;

    let dt = 1.0 / config.generate.sample_rate_hz;
    let settle = config.control.settle_s;
    let mut record_paths = Vec::new();
    let mut manifest = Manifest::new("control", config.hash_hex(), config.seed);

    // Step staircase first.
    let step_profile = SetpointProfile::step_default();
    let step_record = run_profile(
        config,
        &model,
        &step_profile,
        config.control.step_duration_s,
        dt,
    )?;
    let step_path = control_dir.join("record_step.csv");
    step_record.write_csv(&step_path)?;
    record_paths.push(step_path);
    let rise = rise_time(&step_record)?;
    let plateaus = plateau_steady_state_errors(&step_record, 1.0);
    let step_summary = StepSummary {
        rise_per_step_s: rise.per_step_s.clone(),
        rise_mean_s: rise.mean_s,
        plateau_max_percent: plateaus.iter().cloned().fold(0.0, f64::max),
        plateau_errors_percent: plateaus,
    };

    let mut grid = Vec::new();
    for kind in [ProfileKind::Sine, ProfileKind::Triangle] {
        for &p2p in &config.control.amplitudes_percent {
            for &period in &config.control.periods_s {
                let profile = match kind {
                    ProfileKind::Sine => SetpointProfile::sine(config.control.mean_percent, p2p, period),
                    ProfileKind::Triangle => {
                        SetpointProfile::triangle(config.control.mean_percent, p2p, period)
                    }
                    ProfileKind::Step => unreachable!(),
                };
                let duration = settle + config.control.measure_periods as f64 * period;
                let record = run_profile(config, &model, &profile, duration, dt)?;
                let label = profile.label();
                let record_path = control_dir.join(format!("record_{label}.csv"));
                record.write_csv(&record_path)?;
                record_paths.push(record_path);

                let window = record.window(settle, duration);
                let cell = GridCell {
                    waveform: kind.name().to_string(),
                    peak_to_peak_percent: p2p,
                    period_s: period,
                    nrmse_truth: nrmse(&window.setpoints(), &window.truths())?,
                    nrmse_estimate: nrmse(&window.setpoints(), &window.estimates())?,
                };

                let phase_truth = phase_average(&window.truths(), period, dt)?;
                let phase_est = phase_average(&window.estimates(), period, dt)?;
                let phase_sp = phase_average(&window.setpoints(), period, dt)?;
                let phase_path = control_dir.join(format!("phase_{label}.csv"));
                let mut w = BufWriter::new(File::create(&phase_path)?);
                writeln!(w, "phase_s,setpoint,estimate_mean,truth_mean,truth_std,truth_sem")?;
                for b in 0..phase_truth.mean.len() {
                    writeln!(
                        w,
                        "{:.6},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}",
                        b as f64 * dt,
                        phase_sp.mean[b],
                        phase_est.mean[b],
                        phase_truth.mean[b],
                        phase_truth.std[b],
                        phase_truth.std_err[b]
                    )?;
                }
                w.flush()?;
                grid.push(cell);
            }
        }
    }

    let summary = ControlSummary {
        grid,
        step: step_summary,
    };
    let summary_json = control_dir.join("summary.json");
    let summary_csv = control_dir.join("summary.csv");
    write_json(&summary_json, &summary)?;
    {
        let mut w = BufWriter::new(File::create(&summary_csv)?);
        writeln!(w, "waveform,p2p_percent,period_s,nrmse_truth,nrmse_estimate")?;
        for cell in &summary.grid {
            writeln!(
                w,
                "{},{},{},{:.6},{:.6}",
                cell.waveform,
                cell.peak_to_peak_percent,
                cell.period_s,
                cell.nrmse_truth,
                cell.nrmse_estimate
            )?;
        }
        writeln!(
            w,
            "step,,,rise_mean_s={:.4},plateau_max_percent={:.4}",
            summary.step.rise_mean_s, summary.step.plateau_max_percent
        )?;
        w.flush()?;
    }

    for path in &record_paths {
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        manifest = manifest.output(&name, path);
    }
    manifest
        .output("summary_json", &summary_json)
        .output("summary_csv", &summary_csv)
        .count("records", record_paths.len() as u64)
        .write(out_dir)?;

    Ok(ControlOutput {
        summary,
        summary_json,
        summary_csv,
        record_paths,
    })
}

fn run_profile(
    config: &RunConfig,
    model: &MlpModel,
    profile: &SetpointProfile,
    duration: f64,
    dt: f64,
) -> Result<ExperimentRecord> {
    let mut skin = config.skin.clone();
    skin.seed = derive_seed(config.seed, &format!("control.{}", profile.label()));
    run_closed_loop(
        profile,
        &config.plant,
        &skin,
        FeedbackSource::Estimator(model),
        duration,
        dt,
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FullReport {
    pub sensor: SensorErrorReport,
    pub control: ControlSummary,
}

#[derive(Debug, Clone)]
pub struct ReportOutput {
    pub json_path: PathBuf,
    pub csv_path: PathBuf,
}

/// Merge the evaluate and control artifacts into one report document.
pub fn cmd_report(config: &RunConfig, out_dir: &Path) -> Result<ReportOutput> {
    let sensor: SensorErrorReport =
        serde_json::from_reader(File::open(out_dir.join("sensor_error.json"))?)?;
    let control: ControlSummary =
        serde_json::from_reader(File::open(out_dir.join("control").join("summary.json"))?)?;

    let report = FullReport { sensor, control };
    let json_path = out_dir.join("report.json");
    let csv_path = out_dir.join("report.csv");
    write_json(&json_path, &report)?;
    {
        let mut w = BufWriter::new(File::create(&csv_path)?);
        writeln!(w, "section,key,value")?;
        writeln!(w, "sensor,tip_mean_percent,{:.6}", report.sensor.overall_tip.mean)?;
        writeln!(w, "sensor,tip_max_percent,{:.6}", report.sensor.overall_tip.max)?;
        writeln!(
            w,
            "sensor,per_marker_mean_percent,{:.6}",
            report.sensor.overall_per_marker.mean
        )?;
        writeln!(w, "step,rise_mean_s,{:.4}", report.control.step.rise_mean_s)?;
        writeln!(
            w,
            "step,plateau_max_percent,{:.4}",
            report.control.step.plateau_max_percent
        )?;
        for cell in &report.control.grid {
            writeln!(
                w,
                "tracking,{}_p2p{}_T{},{:.6}",
                cell.waveform, cell.peak_to_peak_percent, cell.period_s, cell.nrmse_truth
            )?;
        }
        w.flush()?;
    }

    Manifest::new("report", config.hash_hex(), config.seed)
        .output("report_json", &json_path)
        .output("report_csv", &csv_path)
        .write(out_dir)?;

    Ok(ReportOutput {
        json_path,
        csv_path,
    })
}
