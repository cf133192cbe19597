//! Log file schemas, stream alignment, and dataset construction.
//!
//! Two CSV schemas are fixed here and used by every producer and consumer:
//!
//! ```text
//! t,c12,c13,c23,c24,c34,c35,c45,c46,c56     capacitance log (raw readouts)
//! t,x1,y1,x2,y2,x3,y3,x4,y4,x5,y5           marker log (mm)
//! ```
//!
//! Time is written with six decimal digits, all other values with nine
//! significant digits; writing a loaded log reproduces it byte for byte.

use crate::error::{Error, Result};
use crate::geometry::{MarkerSet, PlanarPoint};
use crate::sensing::{BaselineReference, CapacitanceFrame, FrameKind, normalize_frame, CHANNELS};
use crate::seeds::shuffle;
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub const CAPACITANCE_HEADER: &str = "t,c12,c13,c23,c24,c34,c35,c45,c46,c56";
pub const MARKER_HEADER: &str = "t,x1,y1,x2,y2,x3,y3,x4,y4,x5,y5";

fn fmt_time(t: f64) -> String {
    format!("{t:.6}")
}

fn fmt_value(v: f64) -> String {
    format!("{v:.8e}")
}

fn parse_field(path: &str, line: usize, field: &str, what: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        path: path.into(),
        line,
        msg: format!("invalid {what}: {field:?}"),
    })
}

/// One supervised sample: normalized readouts in, chord-scaled marker
/// coordinates out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub input: [f64; CHANNELS],
    pub target: [f64; 10],
}

/// How targets were scaled and inputs normalized; stored with the dataset
/// and the trained model so outputs can be returned in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingMeta {
    /// Marker coordinates were divided by this chord length.
    pub chord_mm: f64,
    /// Baseline used for input normalization.
    pub baseline: BaselineReference,
}

/// Result of aligning the two streams.
#[derive(Debug, Clone)]
pub struct Aligned {
    pub pairs: Vec<TrainingPair>,
    /// Marker sets whose nearest capacitance frame was farther than the
    /// tolerance.
    pub dropped: usize,
    pub scaling: ScalingMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: u32,
    pub val: u32,
    pub test: u32,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 70,
            val: 20,
            test: 10,
        }
    }
}

/// Supervised dataset with a deterministic shuffled split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub pairs: Vec<TrainingPair>,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub scaling: ScalingMeta,
    pub split_seed: u64,
}

pub fn write_capacitance_log(path: &Path, frames: &[CapacitanceFrame]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{CAPACITANCE_HEADER}")?;
    for f in frames {
        if f.kind != FrameKind::Raw {
            return Err(Error::FrameKind {
                expected: "raw",
                got: "normalized",
            });
        }
        write!(w, "{}", fmt_time(f.t))?;
        for v in &f.values {
            write!(w, ",{}", fmt_value(*v))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_capacitance_log(path: &Path) -> Result<Vec<CapacitanceFrame>> {
    let name = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut frames = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if lineno == 1 {
            if line.trim() != CAPACITANCE_HEADER {
                return Err(Error::Parse {
                    path: name,
                    line: 1,
                    msg: format!("expected header {CAPACITANCE_HEADER:?}"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 1 + CHANNELS {
            return Err(Error::Parse {
                path: name,
                line: lineno,
                msg: format!("expected {} columns, got {}", 1 + CHANNELS, fields.len()),
            });
        }
        let t = parse_field(&name, lineno, fields[0], "timestamp")?;
        if t <= last_t {
            return Err(Error::Parse {
                path: name,
                line: lineno,
                msg: format!("timestamps must strictly increase ({last_t} -> {t})"),
            });
        }
        last_t = t;
        let mut values = [0.0; CHANNELS];
        for (k, field) in fields[1..].iter().enumerate() {
            let v = parse_field(&name, lineno, field, "capacitance value")?;
            if !(v > 0.0) {
                return Err(Error::Parse {
                    path: name,
                    line: lineno,
                    msg: format!("raw capacitance must be positive, got {v}"),
                });
            }
            values[k] = v;
        }
        frames.push(CapacitanceFrame::raw(t, values));
    }
    Ok(frames)
}

pub fn write_marker_log(path: &Path, sets: &[MarkerSet]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{MARKER_HEADER}")?;
    for m in sets {
        write!(w, "{}", fmt_time(m.t))?;
        for p in &m.points {
            write!(w, ",{},{}", fmt_value(p.x), fmt_value(p.y))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_marker_log(path: &Path) -> Result<Vec<MarkerSet>> {
    let name = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut sets = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if lineno == 1 {
            if line.trim() != MARKER_HEADER {
                return Err(Error::Parse {
                    path: name,
                    line: 1,
                    msg: format!("expected header {MARKER_HEADER:?}"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(Error::Parse {
                path: name,
                line: lineno,
                msg: format!("expected 11 columns, got {}", fields.len()),
            });
        }
        let t = parse_field(&name, lineno, fields[0], "timestamp")?;
        if t <= last_t {
            return Err(Error::Parse {
                path: name,
                line: lineno,
                msg: format!("timestamps must strictly increase ({last_t} -> {t})"),
            });
        }
        last_t = t;
        let mut points = [PlanarPoint::new(0.0, 0.0); 5];
        for k in 0..5 {
            let x = parse_field(&name, lineno, fields[1 + 2 * k], "marker x")?;
            let y = parse_field(&name, lineno, fields[2 + 2 * k], "marker y")?;
            points[k] = PlanarPoint::new(x, y);
        }
        for k in 0..4 {
            if points[k + 1].x <= points[k].x {
                return Err(Error::Parse {
                    path: name,
                    line: lineno,
                    msg: format!("marker x must strictly increase (marker {} -> {})", k + 1, k + 2),
                });
            }
        }
        sets.push(MarkerSet::new(t, points));
    }
    Ok(sets)
}

/// Pair each marker set with its nearest capacitance frame (within `tol_s`),
/// normalizing the readouts and scaling the marker coordinates by the
/// chord. Marker sets without a close-enough frame are dropped and counted.
pub fn align_streams(
    cap: &[CapacitanceFrame],
    markers: &[MarkerSet],
    reference: &BaselineReference,
    tol_s: f64,
    chord_mm: f64,
) -> Result<Aligned> {
    if cap.is_empty() || markers.is_empty() {
        return Err(Error::Alignment("both streams must be non-empty".into()));
    }
    if !(tol_s > 0.0) {
        return Err(Error::Alignment(format!("tolerance must be positive, got {tol_s}")));
    }
    let mut pairs = Vec::with_capacity(markers.len());
    let mut dropped = 0usize;
    for m in markers {
        let idx = cap.partition_point(|f| f.t < m.t);
        let mut best: Option<&CapacitanceFrame> = None;
        // Candidate on each side of the insertion point; ties go earlier.
        if idx < cap.len() {
            best = Some(&cap[idx]);
        }
        if idx > 0 {
            let left = &cap[idx - 1];
            best = match best {
                Some(right) if (right.t - m.t).abs() < (left.t - m.t).abs() => Some(right),
                _ => Some(left),
            };
        }
        let frame = best.expect("non-empty stream");
        if (frame.t - m.t).abs() > tol_s {
            dropped += 1;
            continue;
        }
        let normalized = normalize_frame(frame, reference)?;
        let mut target = [0.0; 10];
        for (k, p) in m.points.iter().enumerate() {
            target[2 * k] = p.x / chord_mm;
            target[2 * k + 1] = p.y / chord_mm;
        }
        pairs.push(TrainingPair {
            input: normalized.values,
            target,
        });
    }
    if pairs.is_empty() {
        return Err(Error::Alignment(format!(
            "no marker set found a capacitance frame within {tol_s} s"
        )));
    }
    Ok(Aligned {
        pairs,
        dropped,
        scaling: ScalingMeta {
            chord_mm,
            baseline: reference.clone(),
        },
    })
}

/// Deterministic shuffled split. Counts are floor(n*ratio) for train and
/// validation; the remainder goes to test.
pub fn split_dataset(
    pairs: Vec<TrainingPair>,
    scaling: ScalingMeta,
    ratios: SplitRatios,
    seed: u64,
) -> Result<Dataset> {
    if ratios.train + ratios.val + ratios.test != 100 {
        return Err(Error::Config(format!(
            "split ratios must sum to 100, got {}/{}/{}",
            ratios.train, ratios.val, ratios.test
        )));
    }
    let n = pairs.len();
    if n < 10 {
        return Err(Error::TooFewPairs { got: n, need: 10 });
    }
    let mut order: Vec<usize> = (0..n).collect();
    shuffle(&mut ChaCha8Rng::seed_from_u64(seed), &mut order);
    let n_train = n * ratios.train as usize / 100;
    let n_val = n * ratios.val as usize / 100;
    let mut train_idx: Vec<usize> = order[..n_train].to_vec();
    let mut val_idx: Vec<usize> = order[n_train..n_train + n_val].to_vec();
    let mut test_idx: Vec<usize> = order[n_train + n_val..].to_vec();
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok(Dataset {
        pairs,
        train_idx,
        val_idx,
        test_idx,
        scaling,
        split_seed: seed,
    })
}
