//! Capacitive e-skin sensing: the fixed electrode-pair set, baseline
//! calibration and readout normalization, and a synthetic capacitance
//! generator for simulated runs.

use crate::error::{Error, Result};
use crate::geometry::{camber_line_from_markers, FoilGeometry, MarkerSet};
use crate::seeds::{splitmix64, standard_normal};
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use serde::{Deserialize, Serialize};

/// Number of readout channels (electrode pairs).
pub const CHANNELS: usize = 9;

/// An unordered electrode pair, stored with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElectrodePair {
    pub a: u8,
    pub b: u8,
}

/// The nine measured pairs, in canonical channel order. Persisted logs
/// always use this order.
pub fn canonical_pairs() -> [ElectrodePair; CHANNELS] {
    [
        (1, 2),
        (1, 3),
        (2, 3),
        (2, 4),
        (3, 4),
        (3, 5),
        (4, 5),
        (4, 6),
        (5, 6),
    ]
    .map(|(a, b)| ElectrodePair { a, b })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameKind {
    Raw,
    Normalized,
}

impl FrameKind {
    fn name(self) -> &'static str {
        match self {
            FrameKind::Raw => "raw",
            FrameKind::Normalized => "normalized",
        }
    }
}

/// One timestamped 9-channel readout, raw or normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitanceFrame {
    /// Time in seconds.
    pub t: f64,
    /// Channel values in canonical pair order.
    pub values: [f64; CHANNELS],
    pub kind: FrameKind,
}

impl CapacitanceFrame {
    pub fn raw(t: f64, values: [f64; CHANNELS]) -> Self {
        Self {
            t,
            values,
            kind: FrameKind::Raw,
        }
    }
}

/// Per-channel reference readout of the undeformed (pre-actuation) skin;
/// the denominator of the normalization, so strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReference {
    pub c_emp: [f64; CHANNELS],
}

impl BaselineReference {
    pub fn new(c_emp: [f64; CHANNELS]) -> Result<Self> {
        for (i, &v) in c_emp.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Calibration(format!(
                    "baseline channel {i} must be strictly positive, got {v}"
                )));
            }
        }
        Ok(Self { c_emp })
    }
}

/// Per-channel mean over a baseline window of raw frames.
pub fn compute_baseline(frames: &[CapacitanceFrame]) -> Result<BaselineReference> {
    if frames.is_empty() {
        return Err(Error::Calibration("empty baseline window".into()));
    }
    let mut sums = [0.0; CHANNELS];
    for f in frames {
        if f.kind != FrameKind::Raw {
            return Err(Error::FrameKind {
                expected: "raw",
                got: f.kind.name(),
            });
        }
        for (s, v) in sums.iter_mut().zip(f.values.iter()) {
            *s += v;
        }
    }
    let n = frames.len() as f64;
    BaselineReference::new(sums.map(|s| s / n))
}

/// Normalize a raw frame against the reference: c = (c' - c_emp) / c_emp.
pub fn normalize_frame(
    raw: &CapacitanceFrame,
    reference: &BaselineReference,
) -> Result<CapacitanceFrame> {
    if raw.kind != FrameKind::Raw {
        return Err(Error::FrameKind {
            expected: "raw",
            got: raw.kind.name(),
        });
    }
    let mut values = [0.0; CHANNELS];
    for i in 0..CHANNELS {
        let c_emp = reference.c_emp[i];
        if !(c_emp > 0.0) {
            return Err(Error::Calibration(format!(
                "reference channel {i} must be strictly positive, got {c_emp}"
            )));
        }
        values[i] = (raw.values[i] - c_emp) / c_emp;
    }
    Ok(CapacitanceFrame {
        t: raw.t,
        values,
        kind: FrameKind::Normalized,
    })
}

/// Parameters of the synthetic capacitance model.
///
/// Each pair's raw value is its rest level scaled down by the deformation
/// of the camber line between its electrode anchors:
///
/// ```text
/// raw = gain * d0 / (d0 + strain_gain*(d - d0) + curvature_gain*|kappa_mid|*chord)
/// ```
///
/// where `d` is the geodesic (arc-length) distance between the anchors on
/// the deformed camber line, `d0` its undeformed value, and `kappa_mid`
/// the curvature at the pair midpoint. The map is smooth and strictly
/// monotone in deformation, so distinct cambers give distinct frames.
/// Multiplicative Gaussian noise `(1 + std*z)` is applied per channel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkinModelParams {
    /// Chordwise electrode stations in mm, strictly increasing, within
    /// the flexible tail.
    pub anchor_stations_mm: [f64; 6],
    /// Rest (undeformed, noise-free) raw value per pair.
    pub pair_gains: [f64; CHANNELS],
    /// Amplification of geodesic stretch in the denominator.
    pub strain_gain: f64,
    /// Curvature sensitivity, mm.
    pub curvature_gain_mm: f64,
    /// Relative noise standard deviation.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SkinModelParams {
    fn default() -> Self {
        // Adjacent pairs give the strongest rest signals; skip pairs sit lower.
        let mut gains = [1.0; CHANNELS];
        for (i, pair) in canonical_pairs().iter().enumerate() {
            if pair.b - pair.a > 1 {
                gains[i] = 0.8;
            }
        }
        Self {
            anchor_stations_mm: [90.0, 110.0, 130.0, 150.0, 170.0, 190.0],
            pair_gains: gains,
            strain_gain: 30.0,
            curvature_gain_mm: 10.0,
            noise_std: 0.005,
            seed: 0,
        }
    }
}

impl SkinModelParams {
    pub fn validate(&self) -> Result<()> {
        for w in self.anchor_stations_mm.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Config(
                    "skin anchor stations must be strictly increasing".into(),
                ));
            }
        }
        for (i, &g) in self.pair_gains.iter().enumerate() {
            if !(g > 0.0) {
                return Err(Error::Config(format!(
                    "skin pair gain {i} must be positive, got {g}"
                )));
            }
        }
        if self.noise_std < 0.0 {
            return Err(Error::Config("skin noise std must be >= 0".into()));
        }
        Ok(())
    }
}

/// Synthetic skin bound to a foil geometry, with rest distances
/// precomputed. Single-owner: one instance per simulated experiment.
#[derive(Debug, Clone)]
pub struct SyntheticSkin {
    params: SkinModelParams,
    geometry: FoilGeometry,
    /// Anchor positions as fractions of the camber-line span.
    anchor_fractions: [f64; 6],
    /// Undeformed geodesic distance per pair, mm.
    rest_distances: [f64; CHANNELS],
}

impl SyntheticSkin {
    pub fn new(params: SkinModelParams, geometry: FoilGeometry) -> Result<Self> {
        params.validate()?;
        let clamp_x = geometry.silicone_start.x;
        let tail = geometry.chord_mm - clamp_x;
        if !(tail > 0.0) {
            return Err(Error::Config("clamp must lie ahead of the trailing edge".into()));
        }
        let mut anchor_fractions = [0.0; 6];
        for (i, &x) in params.anchor_stations_mm.iter().enumerate() {
            let f = (x - clamp_x) / tail;
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!(
                    "skin anchor station {x} mm lies outside the flexible tail"
                )));
            }
            anchor_fractions[i] = f;
        }
        let mut rest_distances = [0.0; CHANNELS];
        for (k, pair) in canonical_pairs().iter().enumerate() {
            let (ia, ib) = (pair.a as usize - 1, pair.b as usize - 1);
            rest_distances[k] = (anchor_fractions[ib] - anchor_fractions[ia]) * tail;
        }
        Ok(Self {
            params,
            geometry,
            anchor_fractions,
            rest_distances,
        })
    }

    pub fn params(&self) -> &SkinModelParams {
        &self.params
    }

    /// The noise-free undeformed frame equals the configured gains, so
    /// they double as an exact baseline reference.
    pub fn rest_baseline(&self) -> Result<BaselineReference> {
        BaselineReference::new(self.params.pair_gains)
    }

    /// Raw frame for the given marker configuration at time `t`.
    /// Deterministic in (markers, seed, t).
    pub fn frame(&self, markers: &MarkerSet, t: f64) -> Result<CapacitanceFrame> {
        let line = camber_line_from_markers(markers, &self.geometry)?;
        let span = line.span_mm();

        let mut values = [0.0; CHANNELS];
        for (k, pair) in canonical_pairs().iter().enumerate() {
            let (ia, ib) = (pair.a as usize - 1, pair.b as usize - 1);
            let s_a = self.anchor_fractions[ia] * span;
            let s_b = self.anchor_fractions[ib] * span;
            let d = line.arc_length_between(s_a, s_b, 16);
            let kappa = line.curvature_at(0.5 * (s_a + s_b));
            let d0 = self.rest_distances[k];
            let denom = d0
                + self.params.strain_gain * (d - d0)
                + self.params.curvature_gain_mm * kappa * self.geometry.chord_mm;
            values[k] = self.params.pair_gains[k] * d0 / denom.max(1e-9);
        }

        if self.params.noise_std > 0.0 {
            let frame_seed = splitmix64(self.params.seed ^ splitmix64(t.to_bits()));
            let mut rng = ChaCha8Rng::seed_from_u64(frame_seed);
            for v in values.iter_mut() {
                *v *= 1.0 + self.params.noise_std * standard_normal(&mut rng);
                *v = v.max(1e-12);
            }
        }
        Ok(CapacitanceFrame::raw(t, values))
    }
}

/// Free-function form: one-shot synthetic readout for a marker state.
pub fn synth_capacitance(
    markers: &MarkerSet,
    params: &SkinModelParams,
    geometry: &FoilGeometry,
    t: f64,
) -> Result<CapacitanceFrame> {
    SyntheticSkin::new(params.clone(), geometry.clone())?.frame(markers, t)
}
