//! Run configuration: a flat `key = value` text format with `[section]`
//! headers. Unknown sections or keys are rejected so typos fail loudly.

use crate::error::{Error, Result};
use crate::plant::PlantParams;
use crate::sensing::SkinModelParams;
use crate::seeds::fnv1a64;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct GenerateSection {
    /// Quiet hold before and after the actuation cycles, s.
    pub baseline_s: f64,
    pub cycles: usize,
    pub cycle_period_s: f64,
    pub sample_rate_hz: f64,
    pub marker_rate_hz: f64,
}

impl Default for GenerateSection {
    fn default() -> Self {
        Self {
            baseline_s: 30.0,
            cycles: 10,
            cycle_period_s: 30.0,
            sample_rate_hz: 714.0,
            marker_rate_hz: 30.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub align_tol_s: f64,
    pub baseline_window_s: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: 400,
            learning_rate: 1e-4,
            batch_size: 256,
            patience: 100,
            align_tol_s: 0.002,
            baseline_window_s: 30.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ControlSection {
    pub settle_s: f64,
    pub measure_periods: usize,
    pub step_duration_s: f64,
    pub mean_percent: f64,
    pub periods_s: Vec<f64>,
    pub amplitudes_percent: Vec<f64>,
}

impl Default for ControlSection {
    fn default() -> Self {
        Self {
            settle_s: 6.0,
            measure_periods: 2,
            step_duration_s: 25.0,
            mean_percent: 4.25,
            periods_s: vec![20.0, 10.0, 5.0],
            amplitudes_percent: vec![2.0, 5.0],
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EvaluateSection {
    /// Held-out logs; when absent a fresh session is generated with a
    /// derived seed.
    pub capacitance: Option<PathBuf>,
    pub markers: Option<PathBuf>,
    pub bucket_width_percent: f64,
    /// Cycles for the auto-generated held-out session.
    pub cycles: usize,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub plant: PlantParams,
    pub skin: SkinModelParams,
    pub generate: GenerateSection,
    pub train: TrainSection,
    pub control: ControlSection,
    pub evaluate: EvaluateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            plant: PlantParams::default(),
            skin: SkinModelParams::default(),
            generate: GenerateSection::default(),
            train: TrainSection::default(),
            control: ControlSection::default(),
            evaluate: EvaluateSection {
                capacitance: None,
                markers: None,
                bucket_width_percent: 1.0,
                cycles: 3,
            },
        }
    }
}

fn parse_num<T: std::str::FromStr>(value: &str, line: usize, key: &str) -> Result<T> {
    value.trim().parse::<T>().map_err(|_| {
        Error::Config(format!("line {line}: invalid value {value:?} for key {key:?}"))
    })
}

fn parse_list(value: &str, line: usize, key: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| parse_num::<f64>(v, line, key))
        .collect()
}

fn parse_fixed<const N: usize>(value: &str, line: usize, key: &str) -> Result<[f64; N]> {
    let list = parse_list(value, line, key)?;
    list.try_into().map_err(|list: Vec<f64>| {
        Error::Config(format!(
            "line {line}: key {key:?} needs {N} values, got {}",
            list.len()
        ))
    })
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {lineno}: expected `key = value`, got {line:?}"))
            })?;
            let key = key.trim();
            let value = value.trim();
            config.apply(&section, key, value, lineno)?;
        }
        config.validate()?;
        Ok(config)
    }

    fn apply(&mut self, section: &str, key: &str, value: &str, line: usize) -> Result<()> {
        match (section, key) {
            ("run", "seed") => self.seed = parse_num(value, line, key)?,

            ("plant", "chord_mm") => self.plant.geometry.chord_mm = parse_num(value, line, key)?,
            ("plant", "clamp_x_mm") => {
                self.plant.geometry.silicone_start.x = parse_num(value, line, key)?
            }
            ("plant", "camber_min_percent") => {
                self.plant.camber_min_percent = parse_num(value, line, key)?
            }
            ("plant", "camber_max_percent") => {
                self.plant.camber_max_percent = parse_num(value, line, key)?
            }
            ("plant", "quad_blend") => self.plant.quad_blend = parse_num(value, line, key)?,
            ("plant", "tip_mm_per_percent") => {
                self.plant.tip_mm_per_percent = parse_num(value, line, key)?
            }
            ("plant", "marker_stations_mm") => {
                self.plant.marker_stations_mm = parse_fixed::<5>(value, line, key)?
            }
            ("plant", "actuator_tau_s") => self.plant.actuator_tau_s = parse_num(value, line, key)?,
            ("plant", "actuator_slew_per_s") => {
                self.plant.actuator_slew_per_s = parse_num(value, line, key)?
            }

            ("skin", "anchor_stations_mm") => {
                self.skin.anchor_stations_mm = parse_fixed::<6>(value, line, key)?
            }
            ("skin", "pair_gains") => self.skin.pair_gains = parse_fixed::<9>(value, line, key)?,
            ("skin", "strain_gain") => self.skin.strain_gain = parse_num(value, line, key)?,
            ("skin", "curvature_gain_mm") => {
                self.skin.curvature_gain_mm = parse_num(value, line, key)?
            }
            ("skin", "noise_std") => self.skin.noise_std = parse_num(value, line, key)?,

            ("generate", "baseline_s") => self.generate.baseline_s = parse_num(value, line, key)?,
            ("generate", "cycles") => self.generate.cycles = parse_num(value, line, key)?,
            ("generate", "cycle_period_s") => {
                self.generate.cycle_period_s = parse_num(value, line, key)?
            }
            ("generate", "sample_rate_hz") => {
                self.generate.sample_rate_hz = parse_num(value, line, key)?
            }
            ("generate", "marker_rate_hz") => {
                self.generate.marker_rate_hz = parse_num(value, line, key)?
            }

            ("train", "epochs") => self.train.epochs = parse_num(value, line, key)?,
            ("train", "learning_rate") => self.train.learning_rate = parse_num(value, line, key)?,
            ("train", "batch_size") => self.train.batch_size = parse_num(value, line, key)?,
            ("train", "patience") => self.train.patience = parse_num(value, line, key)?,
            ("train", "align_tol_s") => self.train.align_tol_s = parse_num(value, line, key)?,
            ("train", "baseline_window_s") => {
                self.train.baseline_window_s = parse_num(value, line, key)?
            }

            ("control", "settle_s") => self.control.settle_s = parse_num(value, line, key)?,
            ("control", "measure_periods") => {
                self.control.measure_periods = parse_num(value, line, key)?
            }
            ("control", "step_duration_s") => {
                self.control.step_duration_s = parse_num(value, line, key)?
            }
            ("control", "mean_percent") => self.control.mean_percent = parse_num(value, line, key)?,
            ("control", "periods_s") => self.control.periods_s = parse_list(value, line, key)?,
            ("control", "amplitudes_percent") => {
                self.control.amplitudes_percent = parse_list(value, line, key)?
            }

            ("evaluate", "capacitance") => self.evaluate.capacitance = Some(PathBuf::from(value)),
            ("evaluate", "markers") => self.evaluate.markers = Some(PathBuf::from(value)),
            ("evaluate", "bucket_width_percent") => {
                self.evaluate.bucket_width_percent = parse_num(value, line, key)?
            }
            ("evaluate", "cycles") => self.evaluate.cycles = parse_num(value, line, key)?,

            _ => {
                return Err(Error::Config(format!(
                    "line {line}: unknown key {key:?} in section [{section}]"
                )))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.skin.validate()?;
        if !(self.generate.sample_rate_hz > 0.0) || !(self.generate.marker_rate_hz > 0.0) {
            return Err(Error::Config("sample rates must be positive".into()));
        }
        if self.generate.marker_rate_hz > self.generate.sample_rate_hz {
            return Err(Error::Config(
                "marker rate cannot exceed the capacitance sample rate".into(),
            ));
        }
        if !(self.train.align_tol_s > 0.0) {
            return Err(Error::Config("alignment tolerance must be positive".into()));
        }
        if self.control.periods_s.is_empty() || self.control.amplitudes_percent.is_empty() {
            return Err(Error::Config("control grid must not be empty".into()));
        }
        if !(self.evaluate.bucket_width_percent > 0.0) {
            return Err(Error::Config("bucket width must be positive".into()));
        }
        Ok(())
    }

    /// Canonical text form: every effective value, fixed order. Used for
    /// the manifest fingerprint and written next to outputs.
    pub fn to_text(&self) -> String {
        let join = |values: &[f64]| {
            values
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut s = String::new();
        s.push_str("[run]\n");
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str("\n[plant]\n");
        s.push_str(&format!("chord_mm = {}\n", self.plant.geometry.chord_mm));
        s.push_str(&format!("clamp_x_mm = {}\n", self.plant.geometry.silicone_start.x));
        s.push_str(&format!("camber_min_percent = {}\n", self.plant.camber_min_percent));
        s.push_str(&format!("camber_max_percent = {}\n", self.plant.camber_max_percent));
        s.push_str(&format!("quad_blend = {}\n", self.plant.quad_blend));
        s.push_str(&format!("tip_mm_per_percent = {}\n", self.plant.tip_mm_per_percent));
        s.push_str(&format!("marker_stations_mm = {}\n", join(&self.plant.marker_stations_mm)));
        s.push_str(&format!("actuator_tau_s = {}\n", self.plant.actuator_tau_s));
        s.push_str(&format!("actuator_slew_per_s = {}\n", self.plant.actuator_slew_per_s));
        s.push_str("\n[skin]\n");
        s.push_str(&format!("anchor_stations_mm = {}\n", join(&self.skin.anchor_stations_mm)));
        s.push_str(&format!("pair_gains = {}\n", join(&self.skin.pair_gains)));
        s.push_str(&format!("strain_gain = {}\n", self.skin.strain_gain));
        s.push_str(&format!("curvature_gain_mm = {}\n", self.skin.curvature_gain_mm));
        s.push_str(&format!("noise_std = {}\n", self.skin.noise_std));
        s.push_str("\n[generate]\n");
        s.push_str(&format!("baseline_s = {}\n", self.generate.baseline_s));
        s.push_str(&format!("cycles = {}\n", self.generate.cycles));
        s.push_str(&format!("cycle_period_s = {}\n", self.generate.cycle_period_s));
        s.push_str(&format!("sample_rate_hz = {}\n", self.generate.sample_rate_hz));
        s.push_str(&format!("marker_rate_hz = {}\n", self.generate.marker_rate_hz));
        s.push_str("\n[train]\n");
        s.push_str(&format!("epochs = {}\n", self.train.epochs));
        s.push_str(&format!("learning_rate = {}\n", self.train.learning_rate));
        s.push_str(&format!("batch_size = {}\n", self.train.batch_size));
        s.push_str(&format!("patience = {}\n", self.train.patience));
        s.push_str(&format!("align_tol_s = {}\n", self.train.align_tol_s));
        s.push_str(&format!("baseline_window_s = {}\n", self.train.baseline_window_s));
        s.push_str("\n[control]\n");
        s.push_str(&format!("settle_s = {}\n", self.control.settle_s));
        s.push_str(&format!("measure_periods = {}\n", self.control.measure_periods));
        s.push_str(&format!("step_duration_s = {}\n", self.control.step_duration_s));
        s.push_str(&format!("mean_percent = {}\n", self.control.mean_percent));
        s.push_str(&format!("periods_s = {}\n", join(&self.control.periods_s)));
        s.push_str(&format!("amplitudes_percent = {}\n", join(&self.control.amplitudes_percent)));
        s.push_str("\n[evaluate]\n");
        if let Some(p) = &self.evaluate.capacitance {
            s.push_str(&format!("capacitance = {}\n", p.display()));
        }
        if let Some(p) = &self.evaluate.markers {
            s.push_str(&format!("markers = {}\n", p.display()));
        }
        s.push_str(&format!("bucket_width_percent = {}\n", self.evaluate.bucket_width_percent));
        s.push_str(&format!("cycles = {}\n", self.evaluate.cycles));
        s
    }

    /// Fingerprint of the effective configuration.
    pub fn hash_hex(&self) -> String {
        format!("{:016x}", fnv1a64(self.to_text().as_bytes()))
    }
}
