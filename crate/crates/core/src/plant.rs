//! Simulated morphing foil: hydraulic actuator dynamics, pressure-to-camber
//! mapping, and marker kinematics. This is the ground-truth generator that
//! stands in for the physical foil.
//!
//! The shape family is a parabolic perpendicular-offset arc built directly
//! in chord coordinates: for a requested camber the trailing edge drops by
//! the calibrated tip gain, the clamp point stays fixed, and the offset
//! profile is the unique downward parabola through the clamp point and the
//! trailing edge whose maximum equals the requested camber exactly. The
//! camber computed from the emitted markers therefore round-trips to the
//! commanded value up to spline interpolation error.

use crate::error::{Error, Result};
use crate::geometry::{FoilGeometry, MarkerSet, PlanarPoint};
use serde::{Deserialize, Serialize};

/// Hydraulic actuator: dimensionless pressure state following the command
/// through a first-order lag with a slew-rate limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorState {
    /// Last commanded input, clamped to [-1, 1].
    pub u: f64,
    /// Internal pressure state in [0, 1].
    pub p: f64,
    /// Maximum pressure slew rate, 1/s.
    pub slew_per_s: f64,
    /// Lag time constant, s.
    pub tau_s: f64,
}

impl ActuatorState {
    pub fn at_rest(params: &PlantParams) -> Self {
        Self {
            u: 0.0,
            p: 0.0,
            slew_per_s: params.actuator_slew_per_s,
            tau_s: params.actuator_tau_s,
        }
    }
}

/// Full plant truth at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoilState {
    /// Time in seconds.
    pub t: f64,
    pub actuator: ActuatorState,
    pub camber_percent: f64,
    pub markers: MarkerSet,
    pub tip_deflection_mm: f64,
}

/// Plant configuration, calibrated so that a 2% camber step moves the tip
/// by 10 mm and closed-loop steps settle with the observed rise time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantParams {
    pub geometry: FoilGeometry,
    /// Camber reachable by actuation, percent of chord.
    pub camber_min_percent: f64,
    pub camber_max_percent: f64,
    /// Quadratic share of the pressure-to-camber map, in [0, 1).
    pub quad_blend: f64,
    /// Tip deflection per camber percentage point, mm.
    pub tip_mm_per_percent: f64,
    /// Chordwise marker stations, mm; the last one is the trailing edge.
    pub marker_stations_mm: [f64; 5],
    pub actuator_tau_s: f64,
    pub actuator_slew_per_s: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            geometry: FoilGeometry::default(),
            camber_min_percent: 2.0,
            camber_max_percent: 9.0,
            quad_blend: 0.3,
            tip_mm_per_percent: 5.0,
            marker_stations_mm: [100.0, 125.0, 150.0, 175.0, 200.0],
            actuator_tau_s: 0.15,
            actuator_slew_per_s: 0.145,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.camber_min_percent >= 0.0 && self.camber_max_percent > self.camber_min_percent) {
            return Err(Error::Config("camber range must be ordered and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.quad_blend) {
            return Err(Error::Config("quad_blend must lie in [0, 1)".into()));
        }
        if !(self.tip_mm_per_percent > 0.0) {
            return Err(Error::Config("tip gain must be positive".into()));
        }
        let clamp_x = self.geometry.silicone_start.x;
        for w in self.marker_stations_mm.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Config("marker stations must strictly increase".into()));
            }
        }
        if !(self.marker_stations_mm[0] > clamp_x) {
            return Err(Error::Config("first marker must lie behind the clamp".into()));
        }
        if (self.marker_stations_mm[4] - self.geometry.chord_mm).abs() > 1e-9 {
            return Err(Error::Config(
                "last marker station must be the trailing edge".into(),
            ));
        }
        if !(self.actuator_tau_s > 0.0 && self.actuator_slew_per_s > 0.0) {
            return Err(Error::Config("actuator constants must be positive".into()));
        }
        Ok(())
    }
}

/// Advance the actuator by one step: pressure follows the clamped command
/// with time constant `tau_s`, limited to `slew_per_s`, and saturates at
/// the physical [0, 1] range.
pub fn actuator_step(state: &ActuatorState, u: f64, dt: f64) -> Result<ActuatorState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidTimeStep(dt));
    }
    if !u.is_finite() {
        return Err(Error::NonFinite("actuator command".into()));
    }
    let u = u.clamp(-1.0, 1.0);
    let max_dp = state.slew_per_s * dt;
    let dp = ((u - state.p) * dt / state.tau_s).clamp(-max_dp, max_dp);
    Ok(ActuatorState {
        u,
        p: (state.p + dp).clamp(0.0, 1.0),
        ..*state
    })
}

/// Smooth monotone map from pressure onto the reachable camber range,
/// with a concave quadratic blend (the tubes stiffen as they inflate):
/// c(p) = cmin + (cmax - cmin)((1+g)p - g p^2).
pub fn pressure_to_camber(p: f64, params: &PlantParams) -> f64 {
    let p = p.clamp(0.0, 1.0);
    let g = params.quad_blend;
    params.camber_min_percent
        + (params.camber_max_percent - params.camber_min_percent) * ((1.0 + g) * p - g * p * p)
}

/// Pressure that holds a given camber at steady state (inverse of the map).
pub fn camber_to_pressure(camber_percent: f64, params: &PlantParams) -> f64 {
    let g = params.quad_blend;
    let span = params.camber_max_percent - params.camber_min_percent;
    let y = ((camber_percent - params.camber_min_percent) / span).clamp(0.0, 1.0);
    if g < 1e-12 {
        return y;
    }
    // Lower root of g p^2 - (1+g) p + y = 0.
    let b = 1.0 + g;
    (b - (b * b - 4.0 * g * y).sqrt()) / (2.0 * g)
}

/// Marker kinematics for one camber value.
#[derive(Debug, Clone)]
pub struct FoilShape {
    pub markers: MarkerSet,
    pub tip_deflection_mm: f64,
}

/// Build the marker set of the one-parameter shape family at the given
/// camber. The maximum perpendicular chord distance of the underlying
/// curve equals the requested camber exactly; the tip drops by the
/// calibrated gain per percentage point.
pub fn foil_shape(camber_percent: f64, params: &PlantParams, t: f64) -> Result<FoilShape> {
    if !(0.0..=10.0).contains(&camber_percent) {
        return Err(Error::OutOfRange(format!(
            "camber {camber_percent}% outside [0, 10]"
        )));
    }
    let chord = params.geometry.chord_mm;
    let clamp_x = params.geometry.silicone_start.x;
    let delta = params.tip_mm_per_percent * camber_percent;

    if delta == 0.0 {
        let markers = MarkerSet::new(t, params.marker_stations_mm.map(|x| PlanarPoint::new(x, 0.0)));
        return Ok(FoilShape {
            markers,
            tip_deflection_mm: 0.0,
        });
    }

    let len_sq = chord * chord + delta * delta;
    let len = len_sq.sqrt();
    // Chord parameter and perpendicular distance of the fixed clamp point.
    let t_clamp = clamp_x * chord / len_sq;
    let d_clamp = clamp_x * delta / len;
    // Peak offset required for the camber, and the parabola through
    // (t_clamp, d_clamp) and (1, 0) that attains it.
    let d_max = chord * camber_percent / 100.0;
    let rho = (1.0 - d_clamp / d_max).max(0.0).sqrt();
    let t_peak = (t_clamp + rho) / (1.0 + rho);
    let k = d_max / ((1.0 - t_peak) * (1.0 - t_peak));
    let offset = |tc: f64| d_max - k * (tc - t_peak) * (tc - t_peak);

    let normal = (delta / len, chord / len);
    let points = params.marker_stations_mm.map(|x| {
        let tc = x / chord;
        let d = offset(tc);
        PlanarPoint::new(tc * chord + normal.0 * d, -tc * delta + normal.1 * d)
    });
    Ok(FoilShape {
        markers: MarkerSet::new(t, points),
        tip_deflection_mm: delta,
    })
}

/// Plant state at rest (zero pressure), time zero.
pub fn initial_state(params: &PlantParams) -> Result<FoilState> {
    let actuator = ActuatorState::at_rest(params);
    let camber = pressure_to_camber(actuator.p, params);
    let shape = foil_shape(camber, params, 0.0)?;
    Ok(FoilState {
        t: 0.0,
        actuator,
        camber_percent: camber,
        markers: shape.markers,
        tip_deflection_mm: shape.tip_deflection_mm,
    })
}

/// One simulation tick: actuator, camber map, marker kinematics.
pub fn plant_step(state: &FoilState, u: f64, dt: f64, params: &PlantParams) -> Result<FoilState> {
    let actuator = actuator_step(&state.actuator, u, dt)?;
    let camber = pressure_to_camber(actuator.p, params);
    let t = state.t + dt;
    let shape = foil_shape(camber, params, t)?;
    Ok(FoilState {
        t,
        actuator,
        camber_percent: camber,
        markers: shape.markers,
        tip_deflection_mm: shape.tip_deflection_mm,
    })
}
