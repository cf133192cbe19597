//! Evaluation metrics: normalized RMS tracking error, phase averaging,
//! sensor error statistics, and step rise time.

use crate::control::ExperimentRecord;
use crate::error::{Error, Result};
use crate::geometry::MarkerSet;
use serde::{Deserialize, Serialize};

/// RMSE between the series, normalized by the mean of the reference.
pub fn nrmse(reference: &[f64], actual: &[f64]) -> Result<f64> {
    if reference.len() != actual.len() || reference.is_empty() {
        return Err(Error::InvalidSizes(format!(
            "nrmse needs equal non-empty lengths, got {} vs {}",
            reference.len(),
            actual.len()
        )));
    }
    let n = reference.len() as f64;
    let mean = reference.iter().sum::<f64>() / n;
    if mean.abs() < 1e-12 {
        return Err(Error::ZeroMeanReference);
    }
    let mse = reference
        .iter()
        .zip(actual.iter())
        .map(|(r, a)| (r - a) * (r - a))
        .sum::<f64>()
        / n;
    Ok(mse.sqrt() / mean)
}

/// One averaged cycle of a periodic record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseAverage {
    pub period_s: f64,
    pub dt: f64,
    /// Mean value per phase bin.
    pub mean: Vec<f64>,
    /// Sample standard deviation per bin.
    pub std: Vec<f64>,
    /// Standard error of the bin mean (std / sqrt(count)).
    pub std_err: Vec<f64>,
    pub count: Vec<usize>,
}

/// Fold a uniformly sampled series modulo the period into phase bins of
/// width `dt` and average. Requires at least two full cycles and at
/// least eight bins per cycle.
pub fn phase_average(series: &[f64], period_s: f64, dt: f64) -> Result<PhaseAverage> {
    if !(period_s > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidTimeStep(dt.min(period_s)));
    }
    let bins = (period_s / dt).floor() as usize;
    if bins < 8 {
        return Err(Error::OutOfRange(format!(
            "need at least 8 phase bins per cycle, got {bins}"
        )));
    }
    // Half-tick slack so a window of exactly two periods is accepted.
    let duration = series.len() as f64 * dt;
    if duration + 0.5 * dt < 2.0 * period_s {
        return Err(Error::OutOfRange(format!(
            "need at least two full cycles ({duration:.3} s < {:.3} s)",
            2.0 * period_s
        )));
    }

    // Welford accumulation per bin; stable for bins of near-identical
    // samples.
    let mut mean = vec![0.0; bins];
    let mut m2 = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for (k, &v) in series.iter().enumerate() {
        let t = k as f64 * dt;
        let phase = t.rem_euclid(period_s);
        // Nearest bin index, wrapping the trailing sliver of a non-integer
        // period/dt ratio back onto bin 0. Rounding keeps samples from
        // consecutive cycles in the same bin despite accumulated float
        // error in k*dt.
        let bin = ((phase / dt).round() as usize) % bins;
        count[bin] += 1;
        let delta = v - mean[bin];
        mean[bin] += delta / count[bin] as f64;
        m2[bin] += delta * (v - mean[bin]);
    }

    let mut std = vec![0.0; bins];
    let mut std_err = vec![0.0; bins];
    for b in 0..bins {
        if count[b] == 0 {
            continue;
        }
        let n = count[b] as f64;
        std[b] = (m2[b] / n).max(0.0).sqrt();
        std_err[b] = std[b] / n.sqrt();
    }
    Ok(PhaseAverage {
        period_s,
        dt,
        mean,
        std,
        std_err,
        count,
    })
}

/// Summary statistics of an error population, in percent of foil length.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub min: f64,
    pub count: usize,
}

impl ErrorStats {
    fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            max: samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            min: samples.iter().cloned().fold(f64::INFINITY, f64::min),
            count: samples.len(),
        })
    }
}

/// Error statistics within one camber bucket. Empty buckets are absent
/// from the report rather than zero-filled.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BucketStats {
    pub camber_lo: f64,
    pub camber_hi: f64,
    /// Tip-position error as % of foil length.
    pub tip: ErrorStats,
    /// Mean over the five markers, same units, for comparison.
    pub per_marker: ErrorStats,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensorErrorReport {
    pub overall_tip: ErrorStats,
    pub overall_per_marker: ErrorStats,
    pub buckets: Vec<BucketStats>,
}

/// Compare estimated against true marker sets: tip-position error (and a
/// per-marker mean) as a percentage of foil length, bucketed by the true
/// camber magnitude using `bucket_edges` (half-open, last edge inclusive).
pub fn sensor_error_stats(
    estimated: &[MarkerSet],
    truth: &[MarkerSet],
    truth_camber: &[f64],
    foil_length_mm: f64,
    bucket_edges: &[f64],
) -> Result<SensorErrorReport> {
    if estimated.len() != truth.len() || estimated.len() != truth_camber.len() {
        return Err(Error::InvalidSizes("series must be aligned".into()));
    }
    if estimated.is_empty() {
        return Err(Error::InvalidSizes("empty series".into()));
    }
    if bucket_edges.len() < 2 {
        return Err(Error::Config("need at least two bucket edges".into()));
    }
    let n_buckets = bucket_edges.len() - 1;
    let mut tip_all = Vec::with_capacity(estimated.len());
    let mut marker_all = Vec::with_capacity(estimated.len());
    let mut tip_bucketed: Vec<Vec<f64>> = vec![Vec::new(); n_buckets];
    let mut marker_bucketed: Vec<Vec<f64>> = vec![Vec::new(); n_buckets];

    for ((est, tru), &camber) in estimated.iter().zip(truth.iter()).zip(truth_camber.iter()) {
        let tip = est.trailing_edge().distance_to(&tru.trailing_edge()) / foil_length_mm * 100.0;
        let per_marker = est
            .points
            .iter()
            .zip(tru.points.iter())
            .map(|(a, b)| a.distance_to(b))
            .sum::<f64>()
            / 5.0
            / foil_length_mm
            * 100.0;
        tip_all.push(tip);
        marker_all.push(per_marker);

        let mut bucket = None;
        for b in 0..n_buckets {
            let last = b == n_buckets - 1;
            if camber >= bucket_edges[b]
                && (camber < bucket_edges[b + 1] || (last && camber <= bucket_edges[b + 1]))
            {
                bucket = Some(b);
                break;
            }
        }
        if let Some(b) = bucket {
            tip_bucketed[b].push(tip);
            marker_bucketed[b].push(per_marker);
        }
    }

    let buckets = (0..n_buckets)
        .filter_map(|b| {
            let tip = ErrorStats::from_samples(&tip_bucketed[b])?;
            let per_marker = ErrorStats::from_samples(&marker_bucketed[b])?;
            Some(BucketStats {
                camber_lo: bucket_edges[b],
                camber_hi: bucket_edges[b + 1],
                tip,
                per_marker,
            })
        })
        .collect();

    Ok(SensorErrorReport {
        overall_tip: ErrorStats::from_samples(&tip_all).expect("non-empty"),
        overall_per_marker: ErrorStats::from_samples(&marker_all).expect("non-empty"),
        buckets,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiseTimeReport {
    pub per_step_s: Vec<f64>,
    pub mean_s: f64,
}

/// 10-90% rise time of the truth camber for every completed set-point
/// step in the record, and their mean.
pub fn rise_time(record: &ExperimentRecord) -> Result<RiseTimeReport> {
    let ticks = &record.ticks;
    if ticks.len() < 2 {
        return Err(Error::OutOfRange("record too short for a step".into()));
    }
    // Locate set-point transitions.
    let mut step_indices = Vec::new();
    for k in 1..ticks.len() {
        if (ticks[k].setpoint - ticks[k - 1].setpoint).abs() > 1e-9 {
            step_indices.push(k);
        }
    }
    if step_indices.is_empty() {
        return Err(Error::OutOfRange("no set-point step in record".into()));
    }

    let mut per_step = Vec::new();
    for (s, &k) in step_indices.iter().enumerate() {
        let end = step_indices.get(s + 1).copied().unwrap_or(ticks.len());
        let y0 = ticks[k - 1].truth;
        let span = ticks[k].setpoint - y0;
        if span.abs() < 1e-9 {
            continue;
        }
        let crossed = |level: f64, tick: &crate::control::Tick| {
            if span > 0.0 {
                tick.truth >= level
            } else {
                tick.truth <= level
            }
        };
        let lo = y0 + 0.1 * span;
        let hi = y0 + 0.9 * span;
        let mut t10 = None;
        let mut t90 = None;
        for tick in &ticks[k..end] {
            if t10.is_none() && crossed(lo, tick) {
                t10 = Some(tick.t);
            }
            if crossed(hi, tick) {
                t90 = Some(tick.t);
                break;
            }
        }
        if let (Some(a), Some(b)) = (t10, t90) {
            per_step.push(b - a);
        }
    }
    if per_step.is_empty() {
        return Err(Error::OutOfRange("no completed step in record".into()));
    }
    let mean = per_step.iter().sum::<f64>() / per_step.len() as f64;
    Ok(RiseTimeReport {
        per_step_s: per_step,
        mean_s: mean,
    })
}

/// Mean |truth - setpoint| over the trailing `window_s` of every
/// constant-set-point plateau (the final plateau included).
pub fn plateau_steady_state_errors(record: &ExperimentRecord, window_s: f64) -> Vec<f64> {
    let ticks = &record.ticks;
    let mut boundaries = vec![0usize];
    for k in 1..ticks.len() {
        if (ticks[k].setpoint - ticks[k - 1].setpoint).abs() > 1e-9 {
            boundaries.push(k);
        }
    }
    boundaries.push(ticks.len());

    let mut errors = Vec::new();
    for w in boundaries.windows(2) {
        let (start, end) = (w[0], w[1]);
        if end == start {
            continue;
        }
        let t_end = ticks[end - 1].t;
        let tail: Vec<f64> = ticks[start..end]
            .iter()
            .filter(|k| k.t >= t_end - window_s)
            .map(|k| (k.truth - k.setpoint).abs())
            .collect();
        if !tail.is_empty() {
            errors.push(tail.iter().sum::<f64>() / tail.len() as f64);
        }
    }
    errors
}
