//! Ground-truth and measurement simulation.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::glmb::FilterModels;
use crate::models::{BirthModel, Label, Measurement, MotionModel, Region, SensorModel, StateVector};
use crate::rng::stream;

/// Measurements received at one scan.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasurementFrame {
    pub scan: u32,
    pub points: Vec<Measurement>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    pub region: Region,
    pub duration: u32,
    pub motion: MotionModel,
    pub sensor: SensorModel,
    pub birth: BirthModel,
    /// Objects present at scan 0 in addition to the scan-0 births.
    pub initial_states: Vec<StateVector>,
    pub seed: u64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        let region = Region::square(3000.0);
        ScenarioParams {
            region,
            duration: 100,
            motion: MotionModel::constant_velocity(1.0, 5.0, 0.99),
            sensor: SensorModel::position(10.0, 0.86, 90.0, region),
            birth: BirthModel::grid(&region, 10, 5, 0.01, 10.0),
            initial_states: Vec::new(),
            seed: 0,
        }
    }
}

impl ScenarioParams {
    /// Sets every birth probability so that `n_x` objects are born on
    /// average over the scenario.
    pub fn with_expected_trajectories(mut self, n_x: f64) -> Self {
        let n_b = self.birth.components.len().max(1) as f64;
        self.birth.set_probability(n_x / (self.duration as f64 * n_b));
        self
    }

    /// Expected births over the whole scenario.
    pub fn expected_trajectories(&self) -> f64 {
        self.birth.rate() * self.duration as f64
    }

    pub fn filter_models(&self) -> FilterModels {
        FilterModels {
            motion: self.motion.clone(),
            sensor: self.sensor.clone(),
            birth: self.birth.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.duration == 0 {
            return Err(Error::domain("duration must be at least one scan"));
        }
        if !(self.region.area() > 0.0) {
            return Err(Error::domain("region has no area"));
        }
        if self.sensor.region != self.region {
            return Err(Error::domain("sensor region differs from scenario region"));
        }
        for (name, v) in [
            ("survival probability", self.motion.survival_probability),
            ("detection probability", self.sensor.detection_probability),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::domain(format!("{name} = {v} is not a probability")));
            }
        }
        if let Some(c) = self.birth.components.iter().find(|c| !(0.0..=1.0).contains(&c.probability)) {
            return Err(Error::domain(format!("birth probability {} is not a probability", c.probability)));
        }
        if !(self.sensor.clutter_rate >= 0.0) {
            return Err(Error::domain("clutter rate must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthTrack {
    pub label: Label,
    /// States at scans `label.birth_time ..`.
    pub states: Vec<StateVector>,
}

impl TruthTrack {
    pub fn state_at(&self, scan: u32) -> Option<&StateVector> {
        scan.checked_sub(self.label.birth_time)
            .and_then(|k| self.states.get(k as usize))
    }

    pub fn last_scan(&self) -> u32 {
        self.label.birth_time + self.states.len() as u32 - 1
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioTruth {
    pub duration: u32,
    pub tracks: Vec<TruthTrack>,
}

impl ScenarioTruth {
    pub fn states_at(&self, scan: u32) -> Vec<(Label, StateVector)> {
        self.tracks
            .iter()
            .filter_map(|t| t.state_at(scan).map(|x| (t.label, *x)))
            .collect()
    }
}

fn standard_normal4(rng: &mut impl Rng) -> StateVector {
    StateVector::from_fn(|_, _| rng.sample(StandardNormal))
}

/// Simulates births, survival, constant-velocity motion and exits from the
/// region over `params.duration` scans.
pub fn generate_truth(params: &ScenarioParams) -> ScenarioTruth {
    let mut rng = stream(params.seed, &[0]);
    let noise = params.motion.noise_factor();
    let f = params.motion.transition;
    let birth_factors: Vec<_> = params
        .birth
        .components
        .iter()
        .map(|c| c.density.cov.cholesky().map(|ch| ch.l()).unwrap_or_else(|| c.density.cov * 0.0))
        .collect();
    let mut tracks: Vec<TruthTrack> = params
        .initial_states
        .iter()
        .enumerate()
        .map(|(i, x)| TruthTrack {
            label: Label::new(0, i as u32),
            states: vec![*x],
        })
        .collect();
    let mut alive: Vec<usize> = (0..tracks.len()).collect();
    for k in 0..params.duration {
        if k > 0 {
            alive.retain(|&t| {
                if !rng.random_bool(params.motion.survival_probability) {
                    return false;
                }
                let x = f * tracks[t].states.last().expect("non-empty track") + noise * standard_normal4(&mut rng);
                if !params.region.contains(x[0], x[2]) {
                    return false;
                }
                tracks[t].states.push(x);
                true
            });
        }
        let mut ordinal = if k == 0 { params.initial_states.len() as u32 } else { 0 };
        for (c, l) in params.birth.components.iter().zip(&birth_factors) {
            if rng.random_bool(c.probability) {
                let x = c.density.mean + l * standard_normal4(&mut rng);
                alive.push(tracks.len());
                tracks.push(TruthTrack {
                    label: Label::new(k, ordinal),
                    states: vec![x],
                });
                ordinal += 1;
            }
        }
    }
    ScenarioTruth {
        duration: params.duration,
        tracks,
    }
}

/// Detections with probability `P_D` and Gaussian noise, plus Poisson clutter
/// uniform on the region, shuffled per scan. Detections that fall outside the
/// region are lost.
pub fn generate_measurements(truth: &ScenarioTruth, sensor: &SensorModel, seed: u64) -> Vec<MeasurementFrame> {
    let mut rng = stream(seed, &[1]);
    let r = sensor.noise.cholesky().map(|c| c.l()).unwrap_or_else(|| sensor.noise * 0.0);
    let clutter = (sensor.clutter_rate > 0.0).then(|| Poisson::new(sensor.clutter_rate).expect("positive rate"));
    let region = sensor.region;
    (0..truth.duration)
        .map(|k| {
            let mut points = Vec::new();
            for (_, x) in truth.states_at(k) {
                if rng.random_bool(sensor.detection_probability) {
                    let v = Measurement::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
                    let z = sensor.observation * x + r * v;
                    if region.contains(z[0], z[1]) {
                        points.push(z);
                    }
                }
            }
            let n_clutter = clutter.as_ref().map_or(0, |d| d.sample(&mut rng) as usize);
            for _ in 0..n_clutter {
                points.push(Measurement::new(
                    rng.random_range(region.x_min..=region.x_max),
                    rng.random_range(region.y_min..=region.y_max),
                ));
            }
            points.shuffle(&mut rng);
            MeasurementFrame { scan: k, points }
        })
        .collect()
}

pub fn write_truth_csv<W: Write>(out: &mut W, truth: &ScenarioTruth) -> std::io::Result<()> {
    writeln!(out, "scan,label_birth,label_index,x,y,vx,vy")?;
    for k in 0..truth.duration {
        for (l, x) in truth.states_at(k) {
            writeln!(out, "{},{},{},{},{},{},{}", k, l.birth_time, l.index, x[0], x[2], x[1], x[3])?;
        }
    }
    Ok(())
}

pub fn write_measurements_csv<W: Write>(out: &mut W, frames: &[MeasurementFrame]) -> std::io::Result<()> {
    writeln!(out, "scan,zx,zy")?;
    for f in frames {
        for z in &f.points {
            writeln!(out, "{},{},{}", f.scan, z[0], z[1])?;
        }
    }
    Ok(())
}

fn parse_fields(line: &str, lineno: usize, n: usize) -> Result<Vec<f64>> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != n {
        return Err(Error::Parse {
            line: lineno,
            message: format!("expected {n} fields, found {}", fields.len()),
        });
    }
    fields
        .iter()
        .map(|s| {
            s.parse::<f64>().map_err(|e| Error::Parse {
                line: lineno,
                message: format!("{s:?}: {e}"),
            })
        })
        .collect()
}

fn data_lines<R: BufRead>(input: R) -> impl Iterator<Item = (usize, std::io::Result<String>)> {
    input
        .lines()
        .enumerate()
        .skip(1)
        .map(|(k, l)| (k + 1, l))
        .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
}

/// Reads the measurement CSV; scans without rows become empty frames up to
/// `duration` (or the last scan present when `None`).
pub fn read_measurements_csv<R: BufRead>(input: R, duration: Option<u32>) -> Result<Vec<MeasurementFrame>> {
    let mut rows = Vec::new();
    for (lineno, line) in data_lines(input) {
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let v = parse_fields(&line, lineno, 3)?;
        if v[0] < 0.0 || v[0].fract() != 0.0 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("scan {} is not a non-negative integer", v[0]),
            });
        }
        rows.push((v[0] as u32, Measurement::new(v[1], v[2])));
    }
    let n = duration.unwrap_or_else(|| rows.iter().map(|r| r.0 + 1).max().unwrap_or(0));
    let mut frames: Vec<MeasurementFrame> = (0..n).map(|scan| MeasurementFrame { scan, points: Vec::new() }).collect();
    for (scan, z) in rows {
        let frame = frames.get_mut(scan as usize).ok_or_else(|| Error::domain(format!("scan {scan} beyond duration {n}")))?;
        frame.points.push(z);
    }
    Ok(frames)
}

/// Reads the truth CSV back; states must be consecutive per label.
pub fn read_truth_csv<R: BufRead>(input: R) -> Result<ScenarioTruth> {
    let mut tracks: Vec<TruthTrack> = Vec::new();
    let mut index = std::collections::HashMap::new();
    let mut duration = 0;
    for (lineno, line) in data_lines(input) {
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let v = parse_fields(&line, lineno, 7)?;
        let scan = v[0] as u32;
        let label = Label::new(v[1] as u32, v[2] as u32);
        let x = StateVector::new(v[3], v[5], v[4], v[6]);
        duration = duration.max(scan + 1);
        let t = *index.entry(label).or_insert_with(|| {
            tracks.push(TruthTrack { label, states: Vec::new() });
            tracks.len() - 1
        });
        let track = &mut tracks[t];
        if label.birth_time + track.states.len() as u32 != scan {
            return Err(Error::Parse {
                line: lineno,
                message: format!("track {label} is not consecutive at scan {scan}"),
            });
        }
        track.states.push(x);
    }
    Ok(ScenarioTruth { duration, tracks })
}
