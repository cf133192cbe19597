//! Foil geometry: camber-line construction from discrete points and
//! camber-percentage computation.
//!
//! The camber line is a natural cubic spline through six control points
//! (clamp anchor plus five tracked markers, trailing edge last). The spline
//! is parameterized by the chordwise coordinate of its own local frame
//! (first control point toward last), which makes every derived quantity
//! invariant under rigid motions of the input points. Camber is the maximum
//! perpendicular distance between the spline and the chord line (leading
//! edge to trailing edge), expressed as a percentage of the chord length.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Number of uniform chordwise stations sampled when locating the
/// maximum camber-line/chord distance. Doubling this changes the result
/// by far less than 0.01 percentage points on smooth shapes.
pub const CAMBER_SAMPLES: usize = 512;

/// A point in the foil plane, millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    fn sub(&self, other: &PlanarPoint) -> (f64, f64) {
        (self.x - other.x, self.y - other.y)
    }

    pub fn distance_to(&self, other: &PlanarPoint) -> f64 {
        let (dx, dy) = self.sub(other);
        (dx * dx + dy * dy).sqrt()
    }
}

/// Static description of the foil: chord length, leading edge, stored
/// angle of attack (never actuated), and the clamp point where the
/// flexible tail begins.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoilGeometry {
    /// Chord length in mm.
    pub chord_mm: f64,
    pub leading_edge: PlanarPoint,
    /// Angle of attack in radians. Stored for completeness only.
    pub angle_of_attack_rad: f64,
    /// Fixed point at the nose-tail clamp; first control point of the
    /// camber line.
    pub silicone_start: PlanarPoint,
}

impl FoilGeometry {
    pub fn new(chord_mm: f64, leading_edge: PlanarPoint, silicone_start: PlanarPoint) -> Result<Self> {
        if !(chord_mm > 0.0) || !chord_mm.is_finite() {
            return Err(Error::DegenerateGeometry(format!(
                "chord length must be positive and finite, got {chord_mm}"
            )));
        }
        Ok(Self {
            chord_mm,
            leading_edge,
            angle_of_attack_rad: 0.0,
            silicone_start,
        })
    }
}

impl Default for FoilGeometry {
    /// 200 mm chord with the clamp at 40% chord, nose at the origin.
    fn default() -> Self {
        Self {
            chord_mm: 200.0,
            leading_edge: PlanarPoint::new(0.0, 0.0),
            angle_of_attack_rad: 0.0,
            silicone_start: PlanarPoint::new(80.0, 0.0),
        }
    }
}

/// Timestamped ordered planar coordinates of the five tracked markers,
/// nose-adjacent first, trailing edge last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerSet {
    /// Time in seconds.
    pub t: f64,
    pub points: [PlanarPoint; 5],
}

impl MarkerSet {
    pub fn new(t: f64, points: [PlanarPoint; 5]) -> Self {
        Self { t, points }
    }

    pub fn trailing_edge(&self) -> PlanarPoint {
        self.points[4]
    }
}

/// The chord: a line through the leading and trailing edges.
#[derive(Debug, Clone, Copy)]
pub struct ChordLine {
    pub origin: PlanarPoint,
    /// Unit direction from leading edge to trailing edge.
    pub direction: (f64, f64),
    pub length_mm: f64,
}

/// Which side of the chord contained the maximum camber-line distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChordSide {
    Above,
    Below,
    On,
}

/// Camber value plus the separately recorded direction flag.
#[derive(Debug, Clone, Copy)]
pub struct CamberMeasure {
    pub percent: f64,
    pub side: ChordSide,
    /// Chordwise station (spline parameter, mm) where the max occurred.
    pub station_mm: f64,
}

/// Natural cubic interpolating spline through six control points,
/// parameterized by the chordwise coordinate of its local frame.
#[derive(Debug, Clone)]
pub struct CamberLine {
    control_points: [PlanarPoint; 6],
    origin: PlanarPoint,
    /// Unit chordwise axis of the local frame (first point toward last).
    axis: (f64, f64),
    /// Unit normal, 90 degrees counter-clockwise from `axis`.
    normal: (f64, f64),
    /// Knot stations along `axis`, strictly increasing, knots[0] = 0.
    knots: [f64; 6],
    /// Perpendicular offsets at the knots.
    offsets: [f64; 6],
    /// Spline second derivatives at the knots (natural: ends are zero).
    second_derivs: [f64; 6],
}

impl CamberLine {
    pub fn control_points(&self) -> &[PlanarPoint; 6] {
        &self.control_points
    }

    /// Chordwise extent of the spline parameter, `[0, span_mm]`.
    pub fn span_mm(&self) -> f64 {
        self.knots[5]
    }

    fn segment_index(&self, s: f64) -> usize {
        // Clamp into the knot range; evaluation outside is not meaningful.
        let mut i = 0;
        while i < 4 && s > self.knots[i + 1] {
            i += 1;
        }
        i
    }

    /// Perpendicular offset d(s) in the local frame.
    pub fn offset_at(&self, s: f64) -> f64 {
        let i = self.segment_index(s);
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - s) / h;
        let b = (s - self.knots[i]) / h;
        a * self.offsets[i]
            + b * self.offsets[i + 1]
            + ((a * a * a - a) * self.second_derivs[i]
                + (b * b * b - b) * self.second_derivs[i + 1])
                * h
                * h
                / 6.0
    }

    /// First derivative d'(s).
    pub fn slope_at(&self, s: f64) -> f64 {
        let i = self.segment_index(s);
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - s) / h;
        let b = (s - self.knots[i]) / h;
        (self.offsets[i + 1] - self.offsets[i]) / h
            - (3.0 * a * a - 1.0) / 6.0 * h * self.second_derivs[i]
            + (3.0 * b * b - 1.0) / 6.0 * h * self.second_derivs[i + 1]
    }

    /// Second derivative d''(s).
    pub fn second_deriv_at(&self, s: f64) -> f64 {
        let i = self.segment_index(s);
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - s) / h;
        let b = (s - self.knots[i]) / h;
        a * self.second_derivs[i] + b * self.second_derivs[i + 1]
    }

    /// Unsigned curvature of the plane curve at station `s`, 1/mm.
    pub fn curvature_at(&self, s: f64) -> f64 {
        let d1 = self.slope_at(s);
        let d2 = self.second_deriv_at(s);
        d2.abs() / (1.0 + d1 * d1).powf(1.5)
    }

    /// World-space point at station `s`.
    pub fn point_at(&self, s: f64) -> PlanarPoint {
        let d = self.offset_at(s);
        PlanarPoint::new(
            self.origin.x + self.axis.0 * s + self.normal.0 * d,
            self.origin.y + self.axis.1 * s + self.normal.1 * d,
        )
    }

    /// Arc length of the curve between stations, composite Simpson rule
    /// on sqrt(1 + d'^2) with `steps` subintervals (rounded up to even).
    pub fn arc_length_between(&self, s_a: f64, s_b: f64, steps: usize) -> f64 {
        let n = steps.max(2) + steps % 2;
        let h = (s_b - s_a) / n as f64;
        let integrand = |s: f64| {
            let d1 = self.slope_at(s);
            (1.0 + d1 * d1).sqrt()
        };
        let mut acc = integrand(s_a) + integrand(s_b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * integrand(s_a + h * k as f64);
        }
        acc * h / 3.0
    }
}

/// Fit a natural cubic spline through six points ordered along their own
/// chordwise axis (first point toward last).
pub fn fit_camber_spline(points: &[PlanarPoint]) -> Result<CamberLine> {
    if points.len() != 6 {
        return Err(Error::DegenerateGeometry(format!(
            "camber line needs exactly 6 points, got {}",
            points.len()
        )));
    }
    for (i, p) in points.iter().enumerate() {
        if !p.is_finite() {
            return Err(Error::NonFinite(format!("control point {i} is not finite")));
        }
    }
    let control: [PlanarPoint; 6] = points.try_into().expect("length checked");

    let origin = control[0];
    let (ex, ey) = control[5].sub(&origin);
    let extent = (ex * ex + ey * ey).sqrt();
    if extent <= f64::EPSILON {
        return Err(Error::DegenerateGeometry(
            "first and last control points coincide".into(),
        ));
    }
    let axis = (ex / extent, ey / extent);
    let normal = (-axis.1, axis.0);

    let mut knots = [0.0; 6];
    let mut offsets = [0.0; 6];
    for (i, p) in control.iter().enumerate() {
        let (dx, dy) = p.sub(&origin);
        knots[i] = dx * axis.0 + dy * axis.1;
        offsets[i] = dx * normal.0 + dy * normal.1;
    }
    for i in 0..5 {
        if knots[i + 1] - knots[i] <= f64::EPSILON * extent.max(1.0) {
            return Err(Error::DegenerateGeometry(format!(
                "control points must strictly increase chordwise (knot {} -> {})",
                i,
                i + 1
            )));
        }
    }

    let second_derivs = solve_natural_spline(&knots, &offsets);
    Ok(CamberLine {
        control_points: control,
        origin,
        axis,
        normal,
        knots,
        offsets,
        second_derivs,
    })
}

/// Tridiagonal solve for the interior second derivatives of a natural
/// cubic spline (Thomas algorithm, n = 6).
fn solve_natural_spline(s: &[f64; 6], d: &[f64; 6]) -> [f64; 6] {
    const N: usize = 6;
    let mut h = [0.0; N - 1];
    for i in 0..N - 1 {
        h[i] = s[i + 1] - s[i];
    }

    // Interior equations i = 1..=4:
    //   h[i-1]/6 * M[i-1] + (h[i-1]+h[i])/3 * M[i] + h[i]/6 * M[i+1] = rhs[i]
    let mut diag = [0.0; N];
    let mut upper = [0.0; N];
    let mut rhs = [0.0; N];
    for i in 1..N - 1 {
        diag[i] = (h[i - 1] + h[i]) / 3.0;
        upper[i] = h[i] / 6.0;
        rhs[i] = (d[i + 1] - d[i]) / h[i] - (d[i] - d[i - 1]) / h[i - 1];
    }

    let mut m = [0.0; N];
    // Forward elimination over the 4x4 interior block.
    for i in 2..N - 1 {
        let lower = h[i - 1] / 6.0;
        let factor = lower / diag[i - 1];
        diag[i] -= factor * upper[i - 1];
        rhs[i] -= factor * rhs[i - 1];
    }
    // Back substitution (M[0] = M[5] = 0 by the natural end conditions).
    m[N - 2] = rhs[N - 2] / diag[N - 2];
    for i in (1..N - 2).rev() {
        m[i] = (rhs[i] - upper[i] * m[i + 1]) / diag[i];
    }
    m
}

/// Chord line from the leading edge to the trailing edge.
pub fn chord_line(geometry: &FoilGeometry, trailing_edge: PlanarPoint) -> Result<ChordLine> {
    let (dx, dy) = trailing_edge.sub(&geometry.leading_edge);
    let length = (dx * dx + dy * dy).sqrt();
    if length <= f64::EPSILON {
        return Err(Error::DegenerateGeometry(
            "leading and trailing edges coincide".into(),
        ));
    }
    Ok(ChordLine {
        origin: geometry.leading_edge,
        direction: (dx / length, dy / length),
        length_mm: length,
    })
}

/// Unsigned perpendicular distance from a point to the chord line.
pub fn perpendicular_distance(p: PlanarPoint, chord: &ChordLine) -> f64 {
    signed_chord_distance(p, chord).abs()
}

/// Signed distance; positive on the left of the chord direction.
fn signed_chord_distance(p: PlanarPoint, chord: &ChordLine) -> f64 {
    let (dx, dy) = p.sub(&chord.origin);
    chord.direction.0 * dy - chord.direction.1 * dx
}

/// Camber percentage with the default station count.
pub fn camber_percent(
    camber_line: &CamberLine,
    geometry: &FoilGeometry,
    trailing_edge: PlanarPoint,
) -> Result<f64> {
    camber_measure(camber_line, geometry, trailing_edge, CAMBER_SAMPLES).map(|m| m.percent)
}

/// Locate the maximum perpendicular distance between the camber line and
/// the chord by sampling `samples` uniform chordwise stations; ties break
/// toward the smaller station. Returns the camber percentage together
/// with the side of the chord that contained the maximum.
pub fn camber_measure(
    camber_line: &CamberLine,
    geometry: &FoilGeometry,
    trailing_edge: PlanarPoint,
    samples: usize,
) -> Result<CamberMeasure> {
    if samples < 2 {
        return Err(Error::OutOfRange(format!(
            "need at least 2 camber samples, got {samples}"
        )));
    }
    let chord = chord_line(geometry, trailing_edge)?;
    let span = camber_line.span_mm();
    let mut best = f64::NEG_INFINITY;
    let mut best_signed = 0.0;
    let mut best_station = 0.0;
    for k in 0..samples {
        let s = span * k as f64 / (samples - 1) as f64;
        let signed = signed_chord_distance(camber_line.point_at(s), &chord);
        let dist = signed.abs();
        if dist > best {
            best = dist;
            best_signed = signed;
            best_station = s;
        }
    }
    let side = if best <= 1e-12 * geometry.chord_mm {
        ChordSide::On
    } else if best_signed > 0.0 {
        ChordSide::Above
    } else {
        ChordSide::Below
    };
    Ok(CamberMeasure {
        percent: 100.0 * best / geometry.chord_mm,
        side,
        station_mm: best_station,
    })
}

/// Camber of a marker set: spline through the clamp anchor plus the five
/// markers, chord from the leading edge to the last marker.
pub fn markers_to_camber(markers: &MarkerSet, geometry: &FoilGeometry) -> Result<f64> {
    let line = camber_line_from_markers(markers, geometry)?;
    camber_percent(&line, geometry, markers.trailing_edge())
}

/// The spline underlying [`markers_to_camber`], exposed for consumers
/// that need the geometry itself (arc lengths, curvature).
pub fn camber_line_from_markers(
    markers: &MarkerSet,
    geometry: &FoilGeometry,
) -> Result<CamberLine> {
    let mut pts = [geometry.silicone_start; 6];
    pts[1..].copy_from_slice(&markers.points);
    fit_camber_spline(&pts)
}
