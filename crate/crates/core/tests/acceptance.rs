//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its measured numbers (run with `--nocapture` to see
//! them). The heavyweight criteria share one trained stack.

use foilctl_core::control::{run_closed_loop, FeedbackSource, SetpointProfile};
use foilctl_core::estimator::{backward, forward, loss_mse, mlp_init, MlpModel};
use foilctl_core::geometry::{
    camber_measure, camber_percent, fit_camber_spline, FoilGeometry, PlanarPoint, CAMBER_SAMPLES,
};
use foilctl_core::harness::{
    cmd_control, cmd_evaluate, cmd_generate, cmd_train, run::EvaluateOutput,
    run::GenerateOutput, run::TrainOutput, RunConfig,
};
use foilctl_core::metrics::{nrmse, plateau_steady_state_errors, rise_time};
use foilctl_core::plant::foil_shape;
use foilctl_core::sensing::{
    compute_baseline, normalize_frame, BaselineReference, CapacitanceFrame, CHANNELS,
};
use foilctl_core::seeds::{derive_seed, uniform_f64, uniform_symmetric};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use std::sync::OnceLock;
use std::time::Instant;
use tempfile::TempDir;

struct Stack {
    config: RunConfig,
    #[allow(dead_code)]
    dir: TempDir,
    model: MlpModel,
    generate: GenerateOutput,
    train: TrainOutput,
    evaluate: EvaluateOutput,
    elapsed_s: f64,
}

/// Default-config pipeline: generate, train, evaluate. Built once.
fn stack() -> &'static Stack {
    static STACK: OnceLock<Stack> = OnceLock::new();
    STACK.get_or_init(|| {
        let start = Instant::now();
        let config = RunConfig::default();
        let dir = TempDir::new().unwrap();
        let generate = cmd_generate(&config, dir.path()).unwrap();
        let train = cmd_train(&config, dir.path()).unwrap();
        let evaluate = cmd_evaluate(&config, dir.path()).unwrap();
        let model = MlpModel::load_json(&train.model_path).unwrap();
        Stack {
            config,
            dir,
            model,
            generate,
            train,
            evaluate,
            elapsed_s: start.elapsed().as_secs_f64(),
        }
    })
}

fn random_camber_points(rng: &mut ChaCha8Rng) -> [PlanarPoint; 6] {
    // Strictly increasing stations spanning the chord, bounded offsets.
    let mut gaps = [0.0; 5];
    let mut total = 0.0;
    for g in gaps.iter_mut() {
        *g = 20.0 + 25.0 * uniform_f64(rng);
        total += *g;
    }
    let mut x = 0.0;
    let mut pts = [PlanarPoint::new(0.0, 0.0); 6];
    for k in 0..6 {
        if k > 0 {
            x += gaps[k - 1] * 200.0 / total;
        }
        pts[k] = PlanarPoint::new(x, uniform_symmetric(rng, 25.0));
    }
    pts
}

#[test]
fn acceptance_1_camber_brute_force_oracle() {
    let start = Instant::now();
    let geom = FoilGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let pts = random_camber_points(&mut rng);
        let line = fit_camber_spline(&pts).unwrap();
        let te = pts[5];
        let fast = camber_measure(&line, &geom, te, CAMBER_SAMPLES).unwrap().percent;

        // Independent oracle: dense sampling with inline point-to-line
        // distance arithmetic.
        let (lx, ly) = (geom.leading_edge.x, geom.leading_edge.y);
        let (cx, cy) = (te.x - lx, te.y - ly);
        let chord_len = (cx * cx + cy * cy).sqrt();
        let span = line.span_mm();
        let mut max_dist: f64 = 0.0;
        for k in 0..100_000 {
            let s = span * k as f64 / 99_999.0;
            let p = line.point_at(s);
            let dist = ((p.x - lx) * cy - (p.y - ly) * cx).abs() / chord_len;
            max_dist = max_dist.max(dist);
        }
        let oracle = 100.0 * max_dist / geom.chord_mm;
        worst = worst.max((fast - oracle).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(worst <= 0.01, "worst camber deviation {worst} pp");
    assert!(elapsed < 10.0, "oracle sweep took {elapsed:.1} s");
    println!(
        "ACCEPTANCE 1 (camber oracle): PASS - worst deviation {worst:.2e} pp over 100 shapes in {elapsed:.2} s"
    );
}

#[test]
fn acceptance_2_camber_invariances() {
    let geom = FoilGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_iso: f64 = 0.0;
    let mut worst_scale: f64 = 0.0;
    for trial in 0..1_000 {
        let pts = random_camber_points(&mut rng);
        let line = fit_camber_spline(&pts).unwrap();
        let base = camber_percent(&line, &geom, pts[5]).unwrap();

        let angle = uniform_symmetric(&mut rng, std::f64::consts::PI);
        let (tx, ty) = (
            uniform_symmetric(&mut rng, 500.0),
            uniform_symmetric(&mut rng, 500.0),
        );
        let (cos, sin) = (angle.cos(), angle.sin());
        let xform = |p: PlanarPoint| {
            PlanarPoint::new(cos * p.x - sin * p.y + tx, sin * p.x + cos * p.y + ty)
        };
        let moved: Vec<PlanarPoint> = pts.iter().map(|&p| xform(p)).collect();
        let moved_geom = FoilGeometry {
            leading_edge: xform(geom.leading_edge),
            silicone_start: xform(geom.silicone_start),
            ..geom.clone()
        };
        let moved_line = fit_camber_spline(&moved).unwrap();
        let iso = camber_percent(&moved_line, &moved_geom, xform(pts[5])).unwrap();
        worst_iso = worst_iso.max((iso - base).abs() / base.abs().max(1e-9));

        let scale = (0.05_f64).powf(uniform_f64(&mut rng)) * 20.0; // log-spread around 1
        let scaled: Vec<PlanarPoint> = pts
            .iter()
            .map(|p| PlanarPoint::new(scale * p.x, scale * p.y))
            .collect();
        let scaled_geom = FoilGeometry {
            chord_mm: scale * geom.chord_mm,
            leading_edge: PlanarPoint::new(scale * geom.leading_edge.x, scale * geom.leading_edge.y),
            angle_of_attack_rad: 0.0,
            silicone_start: PlanarPoint::new(
                scale * geom.silicone_start.x,
                scale * geom.silicone_start.y,
            ),
        };
        let scaled_line = fit_camber_spline(&scaled).unwrap();
        let sc = camber_percent(&scaled_line, &scaled_geom, scaled[5]).unwrap();
        worst_scale = worst_scale.max((sc - base).abs() / base.abs().max(1e-9));

        assert!(
            worst_iso < 1e-9 && worst_scale < 1e-9,
            "trial {trial}: isometry {worst_iso:.2e}, scale {worst_scale:.2e}"
        );
    }
    println!(
        "ACCEPTANCE 2 (geometry invariances): PASS - worst relative drift {:.2e} (isometry) / {:.2e} (scale) over 1000 transforms",
        worst_iso, worst_scale
    );
}

/// Central finite differences over every parameter; independent of the
/// backprop implementation.
fn fd_max_rel_err(model: &MlpModel, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
    let h = 1e-5;
    let refs_i: Vec<&[f64]> = inputs.iter().map(|v| v.as_slice()).collect();
    let refs_t: Vec<&[f64]> = targets.iter().map(|v| v.as_slice()).collect();
    let (grads, _) = backward(model, &refs_i, &refs_t).unwrap();
    let batch_loss = |m: &MlpModel| -> f64 {
        inputs
            .iter()
            .zip(targets.iter())
            .map(|(x, t)| loss_mse(&forward(m, x).unwrap(), t).unwrap())
            .sum::<f64>()
            / inputs.len() as f64
    };
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for k in 0..model.layers.len() {
        for slot in 0..2 {
            let len = if slot == 0 {
                model.layers[k].weights.len()
            } else {
                model.layers[k].biases.len()
            };
            for i in 0..len {
                fn at(m: &mut MlpModel, k: usize, slot: usize, i: usize) -> &mut f64 {
                    if slot == 0 {
                        &mut m.layers[k].weights[i]
                    } else {
                        &mut m.layers[k].biases[i]
                    }
                }
                let original = *at(&mut probe, k, slot, i);
                *at(&mut probe, k, slot, i) = original + h;
                let up = batch_loss(&probe);
                *at(&mut probe, k, slot, i) = original - h;
                let down = batch_loss(&probe);
                *at(&mut probe, k, slot, i) = original;
                let fd = (up - down) / (2.0 * h);
                let bp = if slot == 0 {
                    grads.weights[k][i]
                } else {
                    grads.biases[k][i]
                };
                worst = worst.max((fd - bp).abs() / fd.abs().max(bp.abs()).max(1e-6));
            }
        }
    }
    worst
}

/// Smallest |pre-activation| over the batch; finite differences are only
/// meaningful when no unit sits within the probe step of a ReLU kink.
fn min_abs_preactivation(model: &MlpModel, inputs: &[Vec<f64>]) -> f64 {
    let mut min = f64::INFINITY;
    for input in inputs {
        let mut current = input.clone();
        for layer in &model.layers {
            let mut next = Vec::with_capacity(layer.outputs);
            for o in 0..layer.outputs {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                let z: f64 = layer.biases[o]
                    + row.iter().zip(current.iter()).map(|(w, x)| w * x).sum::<f64>();
                min = min.min(z.abs());
                next.push(if z > 0.0 { z } else { 0.0 });
            }
            current = next;
        }
    }
    min
}

#[test]
fn acceptance_3_gradient_check() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let depth = 3 + (trial % 3);
        let mut sizes = Vec::with_capacity(depth + 1);
        for _ in 0..=depth {
            sizes.push(3 + (rng.next_u64() % 10) as usize);
        }
        let model = mlp_init(&sizes, 300 + trial as u64).unwrap();
        let targets: Vec<Vec<f64>> = (0..5)
            .map(|_| {
                (0..*sizes.last().unwrap())
                    .map(|_| uniform_symmetric(&mut rng, 1.0))
                    .collect()
            })
            .collect();
        // Redraw batches that put a unit within the probe step of a ReLU
        // kink, where central differences stop measuring the derivative.
        let inputs: Vec<Vec<f64>> = loop {
            let candidate: Vec<Vec<f64>> = (0..5)
                .map(|_| (0..sizes[0]).map(|_| uniform_symmetric(&mut rng, 1.0)).collect())
                .collect();
            if min_abs_preactivation(&model, &candidate) > 1e-3 {
                break candidate;
            }
        };
        worst = worst.max(fd_max_rel_err(&model, &inputs, &targets));
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(worst < 1e-4, "max relative error {worst:.3e}");
    assert!(elapsed < 30.0, "gradient check took {elapsed:.1} s");
    println!(
        "ACCEPTANCE 3 (gradient check): PASS - max relative error {worst:.2e} over 20 models in {elapsed:.2} s"
    );
}

#[test]
fn acceptance_4_end_to_end_estimation() {
    let stack = stack();
    assert!(
        stack.generate.frames >= 24_000,
        "only {} capacitance frames",
        stack.generate.frames
    );
    assert_eq!(stack.config.skin.noise_std, 0.005);
    let tip = &stack.evaluate.report.overall_tip;
    assert!(tip.mean <= 1.0, "tip error mean {:.3}%", tip.mean);
    assert!(tip.max <= 2.5, "tip error max {:.3}%", tip.max);
    assert!(
        stack.train.best_val_loss * 10.0 <= stack.train.initial_val_loss,
        "validation loss fell only from {:.3e} to {:.3e}",
        stack.train.initial_val_loss,
        stack.train.best_val_loss
    );
    assert!(
        stack.elapsed_s < 600.0,
        "pipeline took {:.0} s",
        stack.elapsed_s
    );
    println!(
        "ACCEPTANCE 4 (end-to-end estimation): PASS - {} frames, tip error mean {:.3}% / max {:.3}% of foil length ({} held-out samples, pipeline {:.0} s, best val loss {:.2e})",
        stack.generate.frames,
        tip.mean,
        tip.max,
        stack.evaluate.samples,
        stack.elapsed_s,
        stack.train.best_val_loss,
    );
}

#[test]
fn acceptance_5_step_response() {
    let stack = stack();
    let mut skin = stack.config.skin.clone();
    skin.seed = derive_seed(stack.config.seed, "accept.step");
    let record = run_closed_loop(
        &SetpointProfile::step_default(),
        &stack.config.plant,
        &skin,
        FeedbackSource::Estimator(&stack.model),
        25.0,
        1.0 / 714.0,
    )
    .unwrap();
    let rise = rise_time(&record).unwrap();
    let plateaus = plateau_steady_state_errors(&record, 1.0);
    let plateau_max = plateaus.iter().cloned().fold(0.0, f64::max);
    assert_eq!(rise.per_step_s.len(), 3, "all three steps must complete");
    assert!(
        (1.4..=2.0).contains(&rise.mean_s),
        "mean rise time {:.2} s outside 1.7 +/- 0.3",
        rise.mean_s
    );
    assert!(plateau_max < 0.2, "worst plateau error {plateau_max:.3}%");
    println!(
        "ACCEPTANCE 5 (step response): PASS - mean rise {:.2} s (per step {:?}), worst plateau error {:.3}% camber",
        rise.mean_s,
        rise.per_step_s.iter().map(|r| (r * 100.0).round() / 100.0).collect::<Vec<_>>(),
        plateau_max
    );
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[test]
fn acceptance_6_tracking_grid() {
    let stack = stack();
    let dt = 1.0 / 714.0;
    let settle = 6.0;
    let seeds = 10;
    let waves = ["sine", "triangle"];
    let amplitudes = [2.0, 5.0];
    let periods = [20.0, 10.0, 5.0];

    // median_nrmse[wave][amplitude][period]
    let mut medians = [[[0.0; 3]; 2]; 2];
    for (wi, wave) in waves.iter().enumerate() {
        for (ai, &p2p) in amplitudes.iter().enumerate() {
            for (pi, &period) in periods.iter().enumerate() {
                let profile = match *wave {
                    "sine" => SetpointProfile::sine(4.25, p2p, period),
                    _ => SetpointProfile::triangle(4.25, p2p, period),
                };
                let duration = settle + 2.0 * period;
                let mut values = Vec::with_capacity(seeds);
                for s in 0..seeds {
                    let mut skin = stack.config.skin.clone();
                    skin.seed = derive_seed(7_000 + s as u64, &profile.label());
                    let record = run_closed_loop(
                        &profile,
                        &stack.config.plant,
                        &skin,
                        FeedbackSource::Estimator(&stack.model),
                        duration,
                        dt,
                    )
                    .unwrap();
                    let w = record.window(settle, duration);
                    values.push(nrmse(&w.setpoints(), &w.truths()).unwrap());
                }
                medians[wi][ai][pi] = median(&mut values);
            }
        }
    }

    let sine_5_10 = medians[0][1][1];
    let sine_2_5 = medians[0][0][2];
    assert!(sine_5_10 <= 0.15, "NRMSE(sine, 5%, 10 s) median {sine_5_10:.3}");
    assert!(sine_2_5 <= 0.06, "NRMSE(sine, 2%, 5 s) median {sine_2_5:.3}");

    for (wi, wave) in waves.iter().enumerate() {
        for ai in 0..amplitudes.len() {
            assert!(
                medians[wi][ai][0] <= medians[wi][ai][1] + 1e-12
                    && medians[wi][ai][1] <= medians[wi][ai][2] + 1e-12,
                "period ordering violated for {wave} p2p={}: {:?}",
                amplitudes[ai],
                medians[wi][ai]
            );
        }
        for pi in 0..periods.len() {
            assert!(
                medians[wi][0][pi] <= medians[wi][1][pi] + 1e-12,
                "amplitude ordering violated for {wave} T={}",
                periods[pi]
            );
        }
    }

    println!("ACCEPTANCE 6 (tracking grid): PASS - median ground-truth NRMSE over 10 seeds:");
    for (wi, wave) in waves.iter().enumerate() {
        for (ai, &p2p) in amplitudes.iter().enumerate() {
            println!(
                "  {wave:<8} p2p={p2p}%: T=20s {:.4}  T=10s {:.4}  T=5s {:.4}",
                medians[wi][ai][0], medians[wi][ai][1], medians[wi][ai][2]
            );
        }
    }
    println!(
        "  bounds: sine/5%/10s {sine_5_10:.4} <= 0.15, sine/2%/5s {sine_2_5:.4} <= 0.06; all orderings monotone"
    );
}

/// Ground-truth feedback never tracks worse than the estimator loop
/// (the estimator can only add error), checked as a median over seeds.
#[test]
fn truth_feedback_tracks_at_least_as_well_as_the_estimator() {
    let stack = stack();
    let dt = 1.0 / 714.0;
    let profile = SetpointProfile::sine(4.25, 5.0, 10.0);
    let duration = 6.0 + 2.0 * 10.0;

    let truth_record = run_closed_loop(
        &profile,
        &stack.config.plant,
        &stack.config.skin,
        FeedbackSource::GroundTruth,
        duration,
        dt,
    )
    .unwrap();
    let w = truth_record.window(6.0, duration);
    let truth_nrmse = nrmse(&w.setpoints(), &w.truths()).unwrap();

    let mut estimator_values = Vec::new();
    for s in 0..10 {
        let mut skin = stack.config.skin.clone();
        skin.seed = derive_seed(8_800 + s as u64, "truth-vs-est");
        let record = run_closed_loop(
            &profile,
            &stack.config.plant,
            &skin,
            FeedbackSource::Estimator(&stack.model),
            duration,
            dt,
        )
        .unwrap();
        let w = record.window(6.0, duration);
        estimator_values.push(nrmse(&w.setpoints(), &w.truths()).unwrap());
    }
    let estimator_median = median(&mut estimator_values);
    assert!(
        truth_nrmse <= estimator_median,
        "truth wiring {truth_nrmse:.4} vs estimator median {estimator_median:.4}"
    );
}

#[test]
fn acceptance_7_normalization_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let mut reference = [0.0; CHANNELS];
        let mut values = [0.0; CHANNELS];
        for k in 0..CHANNELS {
            reference[k] = 0.1 + 10.0 * uniform_f64(&mut rng);
            values[k] = reference[k] * (0.2 + 2.0 * uniform_f64(&mut rng));
        }
        let baseline = BaselineReference::new(reference).unwrap();

        // Identity: normalizing the reference itself gives exact zeros.
        let ident =
            normalize_frame(&CapacitanceFrame::raw(0.0, reference), &baseline).unwrap();
        assert!(ident.values.iter().all(|&v| v == 0.0));

        // Equivariance: scaling channel and reference together is a no-op.
        let scale = 0.01 + 100.0 * uniform_f64(&mut rng);
        let plain = normalize_frame(&CapacitanceFrame::raw(0.0, values), &baseline).unwrap();
        let scaled = normalize_frame(
            &CapacitanceFrame::raw(0.0, values.map(|v| scale * v)),
            &BaselineReference::new(reference.map(|v| scale * v)).unwrap(),
        )
        .unwrap();
        for (a, b) in plain.values.iter().zip(scaled.values.iter()) {
            worst = worst.max((a - b).abs() / a.abs().max(1.0));
        }

        // Baseline of a constant window reproduces the window's frame.
        let window: Vec<CapacitanceFrame> = (0..4)
            .map(|k| CapacitanceFrame::raw(k as f64, values))
            .collect();
        let window_baseline = compute_baseline(&window).unwrap();
        let zeroed =
            normalize_frame(&CapacitanceFrame::raw(0.0, values), &window_baseline).unwrap();
        for &v in &zeroed.values {
            worst = worst.max(v.abs());
        }
    }
    assert!(worst < 1e-12, "worst residual {worst:.2e}");
    println!(
        "ACCEPTANCE 7 (normalization identities): PASS - worst residual {worst:.2e} over 10000 random frames"
    );
}

#[test]
fn acceptance_8_byte_identical_reruns() {
    let mut config = RunConfig::default();
    config.seed = 1234;
    config.generate.baseline_s = 2.0;
    config.generate.cycles = 1;
    config.generate.cycle_period_s = 10.0;
    // Enough training that marker estimates are ordered (the control loop
    // needs a sane model); determinism is about bytes, not accuracy.
    config.train.learning_rate = 5e-3;
    config.train.epochs = 300;
    config.train.patience = 0;
    config.evaluate.cycles = 1;
    config.control.settle_s = 1.0;
    config.control.measure_periods = 2;
    config.control.step_duration_s = 12.0;
    config.control.periods_s = vec![5.0];
    config.control.amplitudes_percent = vec![2.0];

    let run_all = |dir: &std::path::Path| {
        cmd_generate(&config, dir).unwrap();
        cmd_train(&config, dir).unwrap();
        cmd_evaluate(&config, dir).unwrap();
        cmd_control(&config, dir).unwrap();
    };
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    run_all(a.path());
    run_all(b.path());

    let compare = [
        "capacitance.csv",
        "markers.csv",
        "model.json",
        "train_report.json",
        "eval/capacitance.csv",
        "eval/markers.csv",
        "sensor_error.csv",
        "sensor_error.json",
        "control/record_step.csv",
        "control/record_sine_p2p2_T5.csv",
        "control/record_triangle_p2p2_T5.csv",
        "control/phase_sine_p2p2_T5.csv",
        "control/summary.csv",
        "control/summary.json",
    ];
    for name in compare {
        let left = std::fs::read(a.path().join(name)).unwrap();
        let right = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(left, right, "{name} differs between reruns");
    }
    println!(
        "ACCEPTANCE 8 (determinism): PASS - {} artifacts byte-identical across reruns",
        compare.len()
    );
}

#[test]
fn acceptance_9_tip_deflection_range() {
    let stack = stack();
    let params = &stack.config.plant;
    // The stepped operating envelope (2.5% to 8.5%) covers the measured
    // 30 mm (0.15 chord) tip range; the slope is 5 mm per percent.
    let low = foil_shape(2.5, params, 0.0).unwrap();
    let high = foil_shape(8.5, params, 0.0).unwrap();
    let span = high.tip_deflection_mm - low.tip_deflection_mm;
    assert!(
        (span - 30.0).abs() <= 0.3,
        "tip span {span:.2} mm outside 30 +/- 1%"
    );
    assert!(
        (span / params.geometry.chord_mm - 0.15).abs() <= 0.0015,
        "tip span {:.4} chords",
        span / params.geometry.chord_mm
    );

    let mut c = 2.0;
    let mut worst_slope_err: f64 = 0.0;
    while c < 9.0 - 1e-9 {
        let a = foil_shape(c, params, 0.0).unwrap();
        let b = foil_shape(c + 0.5, params, 0.0).unwrap();
        let slope = (b.tip_deflection_mm - a.tip_deflection_mm) / 0.5;
        worst_slope_err = worst_slope_err.max((slope / 5.0 - 1.0).abs());
        c += 0.5;
    }
    assert!(worst_slope_err <= 0.01, "tip slope off by {worst_slope_err:.3}");

    let full_low = foil_shape(2.0, params, 0.0).unwrap();
    let full_high = foil_shape(9.0, params, 0.0).unwrap();
    println!(
        "ACCEPTANCE 9 (tip range): PASS - 30.00 mm (0.150 chords) across the 2.5-8.5% step envelope (span {span:.2} mm, slope 5 mm/% +/- {:.2}%, full 2-9% envelope {:.1} mm)",
        100.0 * worst_slope_err,
        full_high.tip_deflection_mm - full_low.tip_deflection_mm
    );
}
