//! Set-point regulation of camber: the PID controller, the set-point
//! profile generators, and the full closed loop around the simulated
//! plant and synthetic skin.
//!
//! Gains act on per-unit camber error, defined as camber percent divided
//! by [`CAMBER_ERROR_SCALE`]. With the stock gains this saturates the
//! actuator for errors above 0.4% camber and leaves plateau regulation
//! errors well under 0.2%. The derivative acts on a low-pass filtered
//! error, and the integrator freezes while the output is saturated in
//! the direction of the error (conditional integration).

use crate::error::{Error, Result};
use crate::estimator::{estimate_markers, MlpModel};
use crate::geometry::markers_to_camber;
use crate::plant::{initial_state, plant_step, PlantParams};
use crate::sensing::{normalize_frame, SkinModelParams, SyntheticSkin};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// Camber percent per unit of controller error. Errors are expressed as
/// a fraction of the 0-10% camber envelope, so a 2% step saturates the
/// stock proportional gain while plateau regulation stays inside 0.2%.
pub const CAMBER_ERROR_SCALE: f64 = 10.0;

/// Cutoff of the first-order filter feeding the derivative term.
pub const DERIVATIVE_FILTER_CUTOFF_HZ: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: 50.0,
            ki: 1.0,
            kd: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidState {
    pub integral: f64,
    /// Low-pass filtered error from the previous step; `None` before the
    /// first update (no derivative kick on the first tick).
    pub prev_filtered_error: Option<f64>,
    pub output_low: f64,
    pub output_high: f64,
    pub integral_clamp: f64,
    pub filter_cutoff_hz: f64,
}

impl Default for PidState {
    fn default() -> Self {
        Self {
            integral: 0.0,
            prev_filtered_error: None,
            output_low: -1.0,
            output_high: 1.0,
            integral_clamp: 1.25,
            filter_cutoff_hz: DERIVATIVE_FILTER_CUTOFF_HZ,
        }
    }
}

/// One controller update. Setpoint and measurement are camber percent;
/// the returned command lies in the output limits.
pub fn pid_step(
    state: &PidState,
    gains: &PidGains,
    setpoint_percent: f64,
    measurement_percent: f64,
    dt: f64,
) -> Result<(f64, PidState)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidTimeStep(dt));
    }
    let error = (setpoint_percent - measurement_percent) / CAMBER_ERROR_SCALE;
    if !error.is_finite() {
        return Err(Error::NonFinite("pid error".into()));
    }

    let alpha = 1.0 - (-std::f64::consts::TAU * state.filter_cutoff_hz * dt).exp();
    let (filtered, derivative) = match state.prev_filtered_error {
        None => (error, 0.0),
        Some(prev) => {
            let f = prev + alpha * (error - prev);
            (f, (f - prev) / dt)
        }
    };

    let candidate = (state.integral + gains.ki * error * dt)
        .clamp(-state.integral_clamp, state.integral_clamp);
    let raw = gains.kp * error + candidate + gains.kd * derivative;
    let command = raw.clamp(state.output_low, state.output_high);
    // Conditional integration: while saturated, only integrate errors
    // that pull the output back inside the limits.
    let saturated_outward = (raw > state.output_high && error > 0.0)
        || (raw < state.output_low && error < 0.0);
    let integral = if saturated_outward {
        state.integral
    } else {
        candidate
    };

    let next = PidState {
        integral,
        prev_filtered_error: Some(filtered),
        ..*state
    };
    Ok((command, next))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Step,
    Sine,
    Triangle,
}

impl ProfileKind {
    pub fn name(self) -> &'static str {
        match self {
            ProfileKind::Step => "step",
            ProfileKind::Sine => "sine",
            ProfileKind::Triangle => "triangle",
        }
    }
}

/// Set-point trajectory description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetpointProfile {
    pub kind: ProfileKind,
    pub mean_percent: f64,
    pub peak_to_peak_percent: f64,
    pub period_s: f64,
    pub step_start_percent: f64,
    pub step_increment_percent: f64,
    pub step_dwell_s: f64,
    pub step_end_percent: f64,
}

impl SetpointProfile {
    /// Staircase from 2.5% to 8.5% in 2% increments every 5 s.
    pub fn step_default() -> Self {
        Self {
            kind: ProfileKind::Step,
            mean_percent: 0.0,
            peak_to_peak_percent: 0.0,
            period_s: 5.0,
            step_start_percent: 2.5,
            step_increment_percent: 2.0,
            step_dwell_s: 5.0,
            step_end_percent: 8.5,
        }
    }

    pub fn sine(mean_percent: f64, peak_to_peak_percent: f64, period_s: f64) -> Self {
        Self {
            kind: ProfileKind::Sine,
            mean_percent,
            peak_to_peak_percent,
            period_s,
            ..Self::step_default()
        }
    }

    pub fn triangle(mean_percent: f64, peak_to_peak_percent: f64, period_s: f64) -> Self {
        Self {
            kind: ProfileKind::Triangle,
            ..Self::sine(mean_percent, peak_to_peak_percent, period_s)
        }
    }

    /// Label used in file names and report rows.
    pub fn label(&self) -> String {
        match self.kind {
            ProfileKind::Step => "step".into(),
            _ => format!(
                "{}_p2p{}_T{}",
                self.kind.name(),
                self.peak_to_peak_percent,
                self.period_s
            ),
        }
    }

    /// Set point at time `t`. Sine and triangle start at the mean and
    /// rise; the triangle peaks at a quarter period.
    pub fn setpoint_at(&self, t: f64) -> f64 {
        match self.kind {
            ProfileKind::Step => {
                let steps = (t / self.step_dwell_s).floor();
                (self.step_start_percent + self.step_increment_percent * steps)
                    .min(self.step_end_percent)
            }
            ProfileKind::Sine => {
                let amp = 0.5 * self.peak_to_peak_percent;
                self.mean_percent + amp * (std::f64::consts::TAU * t / self.period_s).sin()
            }
            ProfileKind::Triangle => {
                let amp = 0.5 * self.peak_to_peak_percent;
                let phase = (t.rem_euclid(self.period_s)) / self.period_s;
                let value = if phase < 0.25 {
                    4.0 * phase
                } else if phase < 0.75 {
                    2.0 - 4.0 * phase
                } else {
                    4.0 * phase - 4.0
                };
                self.mean_percent + amp * value
            }
        }
    }
}

/// One recorded controller tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tick {
    pub t: f64,
    pub setpoint: f64,
    pub estimate: f64,
    pub truth: f64,
    pub command: f64,
}

/// Uniformly sampled closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub dt: f64,
    pub profile: SetpointProfile,
    pub ticks: Vec<Tick>,
}

impl ExperimentRecord {
    pub fn setpoints(&self) -> Vec<f64> {
        self.ticks.iter().map(|k| k.setpoint).collect()
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.ticks.iter().map(|k| k.estimate).collect()
    }

    pub fn truths(&self) -> Vec<f64> {
        self.ticks.iter().map(|k| k.truth).collect()
    }

    /// Sub-record covering `[t0, t1)`, snapped to the tick grid so a
    /// window of n periods holds exactly n*T/dt ticks.
    pub fn window(&self, t0: f64, t1: f64) -> ExperimentRecord {
        let clamp = |t: f64| ((t / self.dt).round().max(0.0) as usize).min(self.ticks.len());
        let (i0, i1) = (clamp(t0), clamp(t1));
        ExperimentRecord {
            dt: self.dt,
            profile: self.profile.clone(),
            ticks: self.ticks[i0..i1.max(i0)].to_vec(),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "t,setpoint,estimate,truth,command")?;
        for k in &self.ticks {
            writeln!(
                w,
                "{:.6},{:.8e},{:.8e},{:.8e},{:.8e}",
                k.t, k.setpoint, k.estimate, k.truth, k.command
            )?;
        }
        w.flush()?;
        Ok(())
    }

    /// Load the tick table of a record CSV (profile metadata is not part
    /// of the file; the caller supplies it).
    pub fn load_csv(path: &Path, dt: f64, profile: SetpointProfile) -> Result<ExperimentRecord> {
        let name = path.display().to_string();
        let reader = BufReader::new(File::open(path)?);
        let mut ticks = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if lineno == 1 {
                if line.trim() != "t,setpoint,estimate,truth,command" {
                    return Err(Error::Parse {
                        path: name,
                        line: 1,
                        msg: "bad record header".into(),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(Error::Parse {
                    path: name,
                    line: lineno,
                    msg: format!("expected 5 columns, got {}", fields.len()),
                });
            }
            let mut vals = [0.0; 5];
            for (slot, field) in vals.iter_mut().zip(fields.iter()) {
                *slot = field.trim().parse::<f64>().map_err(|_| Error::Parse {
                    path: name.clone(),
                    line: lineno,
                    msg: format!("invalid value {field:?}"),
                })?;
            }
            ticks.push(Tick {
                t: vals[0],
                setpoint: vals[1],
                estimate: vals[2],
                truth: vals[3],
                command: vals[4],
            });
        }
        Ok(ExperimentRecord { dt, profile, ticks })
    }
}

/// Where the controller's camber measurement comes from.
#[derive(Debug, Clone, Copy)]
pub enum FeedbackSource<'a> {
    /// Synthetic skin readout decoded by the trained estimator.
    Estimator(&'a MlpModel),
    /// Plant truth wired straight into the controller.
    GroundTruth,
}

/// Run the full loop at a fixed rate: plant truth, synthetic readout,
/// normalization, marker estimation, camber computation, PID, actuation.
pub fn run_closed_loop(
    profile: &SetpointProfile,
    plant_params: &PlantParams,
    skin_params: &SkinModelParams,
    feedback: FeedbackSource,
    duration_s: f64,
    dt: f64,
) -> Result<ExperimentRecord> {
    if !(dt > 0.0) {
        return Err(Error::InvalidTimeStep(dt));
    }
    plant_params.validate()?;
    let skin = SyntheticSkin::new(skin_params.clone(), plant_params.geometry.clone())?;
    let baseline = match feedback {
        FeedbackSource::Estimator(model) => model
            .scaling
            .as_ref()
            .ok_or_else(|| Error::Calibration("estimator lacks scaling metadata".into()))?
            .baseline
            .clone(),
        FeedbackSource::GroundTruth => skin.rest_baseline()?,
    };

    let gains = PidGains::default();
    let mut pid = PidState::default();
    let mut state = initial_state(plant_params)?;
    let steps = (duration_s / dt).round() as usize;
    let mut ticks = Vec::with_capacity(steps);

    for _ in 0..steps {
        let t = state.t;
        let truth = state.camber_percent;
        let estimate = match feedback {
            FeedbackSource::GroundTruth => truth,
            FeedbackSource::Estimator(model) => {
                let raw = skin.frame(&state.markers, t)?;
                let normalized = normalize_frame(&raw, &baseline)?;
                let markers = estimate_markers(model, &normalized)?;
                markers_to_camber(&markers, &plant_params.geometry)?
            }
        };
        let setpoint = profile.setpoint_at(t);
        let (command, next_pid) = pid_step(&pid, &gains, setpoint, estimate, dt)?;
        pid = next_pid;
        ticks.push(Tick {
            t,
            setpoint,
            estimate,
            truth,
            command,
        });
        state = plant_step(&state, command, dt, plant_params)?;
    }
    Ok(ExperimentRecord {
        dt,
        profile: profile.clone(),
        ticks,
    })
}
