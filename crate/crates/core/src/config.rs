//! Experiment configuration, read from TOML.
//!
//! Every key is optional; missing keys take the defaults printed by
//! [`ExperimentConfig::defaults_toml`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{SamplerConfig, Variant};
use crate::glmb::{Allocation, TruncationBudget};
use crate::models::{BirthModel, MotionModel, Region, SensorModel};
use crate::scenario::ScenarioParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Side of the square surveillance region (m).
    pub region_side: f64,
    pub duration: u32,
    /// Expected number of objects born over the scenario.
    pub expected_trajectories: f64,
    pub survival_probability: f64,
    /// Acceleration noise standard deviation (m/s^2).
    pub process_noise: f64,
    pub detection_probability: f64,
    /// Measurement noise standard deviation (m).
    pub measurement_noise: f64,
    /// Mean clutter returns per scan.
    pub clutter_rate: f64,
    /// Birth components as `[columns, rows]`.
    pub birth_grid: [usize; 2],
    pub birth_std: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            region_side: 3000.0,
            duration: 100,
            expected_trajectories: 50.0,
            survival_probability: 0.99,
            process_noise: 5.0,
            detection_probability: 0.86,
            measurement_noise: 10.0,
            clutter_rate: 90.0,
            birth_grid: [10, 5],
            birth_std: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruncationConfig {
    pub iterations: usize,
    pub alpha: f64,
    pub beta: f64,
    pub allocation: Allocation,
    pub max_hypotheses: usize,
    /// Hypotheses lighter than this fraction of the heaviest are dropped.
    pub min_relative_weight: f64,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        TruncationConfig {
            iterations: 5000,
            alpha: 0.5,
            beta: 0.5,
            allocation: Allocation::Fixed,
            max_hypotheses: 1000,
            min_relative_weight: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub ospa_order: f64,
    pub ospa_cutoff: f64,
    /// OSPA(2) window length in scans; `0` means the whole scenario.
    pub ospa2_window: u32,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            ospa_order: 1.0,
            ospa_cutoff: 100.0,
            ospa2_window: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Iterations,
    ExpectedTrajectories,
    DetectionProbability,
    ClutterRate,
    Alpha,
    Beta,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Iterations => "iterations",
            SweepParameter::ExpectedTrajectories => "expected_trajectories",
            SweepParameter::DetectionProbability => "detection_probability",
            SweepParameter::ClutterRate => "clutter_rate",
            SweepParameter::Alpha => "alpha",
            SweepParameter::Beta => "beta",
        }
    }

    /// Range studied in the reference parameter study.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            SweepParameter::Iterations => (1000.0, 10000.0),
            SweepParameter::ExpectedTrajectories => (10.0, 100.0),
            SweepParameter::DetectionProbability => (0.78, 0.96),
            SweepParameter::ClutterRate => (50.0, 140.0),
            SweepParameter::Alpha | SweepParameter::Beta => (0.1, 0.9),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    /// Allow values outside [`SweepParameter::bounds`].
    #[serde(default)]
    pub unbounded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    pub output_dir: PathBuf,
    pub variants: Vec<Variant>,
    pub scenario: ScenarioConfig,
    pub truncation: TruncationConfig,
    pub metrics: MetricsConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            trials: 1,
            output_dir: PathBuf::from("out"),
            variants: vec![
                Variant::TgsPlus,
                Variant::RgsPlus,
                Variant::DgsPlusForward,
                Variant::DgsPlusBackward,
                Variant::SgsPlus,
            ],
            scenario: ScenarioConfig::default(),
            truncation: TruncationConfig::default(),
            metrics: MetricsConfig::default(),
            sweep: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(vec![e.message().to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn defaults_toml() -> String {
        ExperimentConfig::default().to_toml()
    }

    /// Sweep values, or a single `None` point without a sweep.
    pub fn grid(&self) -> Vec<Option<f64>> {
        match &self.sweep {
            Some(s) => s.values.iter().copied().map(Some).collect(),
            None => vec![None],
        }
    }

    /// Copy with the sweep parameter set to `value`.
    pub fn at(&self, value: Option<f64>) -> ExperimentConfig {
        let mut c = self.clone();
        if let (Some(s), Some(v)) = (&self.sweep, value) {
            match s.parameter {
                SweepParameter::Iterations => c.truncation.iterations = v.round() as usize,
                SweepParameter::ExpectedTrajectories => c.scenario.expected_trajectories = v,
                SweepParameter::DetectionProbability => c.scenario.detection_probability = v,
                SweepParameter::ClutterRate => c.scenario.clutter_rate = v,
                SweepParameter::Alpha => c.truncation.alpha = v,
                SweepParameter::Beta => c.truncation.beta = v,
            }
        }
        c
    }

    pub fn scenario_params(&self, seed: u64) -> ScenarioParams {
        let s = &self.scenario;
        let region = Region::square(s.region_side);
        ScenarioParams {
            region,
            duration: s.duration,
            motion: MotionModel::constant_velocity(1.0, s.process_noise, s.survival_probability),
            sensor: SensorModel::position(s.measurement_noise, s.detection_probability, s.clutter_rate, region),
            birth: BirthModel::grid(&region, s.birth_grid[0], s.birth_grid[1], 0.0, s.birth_std),
            initial_states: Vec::new(),
            seed,
        }
        .with_expected_trajectories(s.expected_trajectories)
    }

    pub fn budget(&self, variant: Variant, seed: u64) -> TruncationBudget {
        let t = &self.truncation;
        TruncationBudget {
            sampler: SamplerConfig::new(variant, t.iterations)
                .with_mixture(t.alpha, t.beta)
                .with_seed(seed),
            allocation: t.allocation,
            enumerate: false,
            max_hypotheses: t.max_hypotheses,
            min_log_weight: if t.min_relative_weight > 0.0 {
                t.min_relative_weight.ln()
            } else {
                f64::NEG_INFINITY
            },
        }
    }

    /// Checks every key and reports all offenders at once.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let mut check = |ok: bool, key: &str, msg: &str| {
            if !ok {
                bad.push(format!("{key}: {msg}"));
            }
        };
        let prob = |v: f64| (0.0..=1.0).contains(&v);
        let s = &self.scenario;
        check(self.trials >= 1, "trials", "must be at least 1");
        check(!self.variants.is_empty(), "variants", "must list at least one sampler");
        check(s.region_side > 0.0 && s.region_side.is_finite(), "scenario.region_side", "must be positive");
        check(s.duration >= 1, "scenario.duration", "must be at least 1");
        check(s.expected_trajectories >= 0.0, "scenario.expected_trajectories", "must be non-negative");
        check(prob(s.survival_probability), "scenario.survival_probability", "must lie in [0, 1]");
        check(prob(s.detection_probability), "scenario.detection_probability", "must lie in [0, 1]");
        check(s.process_noise >= 0.0, "scenario.process_noise", "must be non-negative");
        check(s.measurement_noise > 0.0, "scenario.measurement_noise", "must be positive");
        check(s.clutter_rate > 0.0, "scenario.clutter_rate", "must be positive");
        check(s.birth_grid[0] >= 1 && s.birth_grid[1] >= 1, "scenario.birth_grid", "needs at least one component");
        check(s.birth_std > 0.0, "scenario.birth_std", "must be positive");
        let n_b = (s.birth_grid[0] * s.birth_grid[1]).max(1) as f64;
        let pb = s.expected_trajectories / (s.duration.max(1) as f64 * n_b);
        check(pb < 1.0, "scenario.expected_trajectories", "implies a birth probability of 1 or more");
        let t = &self.truncation;
        check(t.iterations >= 1, "truncation.iterations", "must be at least 1");
        check(t.alpha > 0.0 && t.alpha <= 1.0, "truncation.alpha", "must lie in (0, 1]");
        check(t.beta > 0.0 && t.beta <= 1.0, "truncation.beta", "must lie in (0, 1]");
        check(t.max_hypotheses >= 1, "truncation.max_hypotheses", "must be at least 1");
        check(
            (0.0..1.0).contains(&t.min_relative_weight),
            "truncation.min_relative_weight",
            "must lie in [0, 1)",
        );
        let m = &self.metrics;
        check(m.ospa_order >= 1.0, "metrics.ospa_order", "must be at least 1");
        check(m.ospa_cutoff > 0.0, "metrics.ospa_cutoff", "must be positive");
        check(m.ospa2_window <= s.duration, "metrics.ospa2_window", "exceeds the scenario duration");
        if let Some(sw) = &self.sweep {
            check(!sw.values.is_empty(), "sweep.values", "must not be empty");
            let (lo, hi) = sw.parameter.bounds();
            if !sw.unbounded {
                for v in &sw.values {
                    check(
                        (lo..=hi).contains(v),
                        "sweep.values",
                        &format!("{v} outside [{lo}, {hi}] for {}", sw.parameter.name()),
                    );
                }
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let text = ExperimentConfig::defaults_toml();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), ExperimentConfig::default());
        assert!(text.contains("clutter_rate = 90.0"));
        assert!(text.contains("variants = [\"tgs+\""));
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = ExperimentConfig::from_toml("trials = 3\n[scenario]\nclutter_rate = 30.0\n").unwrap();
        assert_eq!(cfg.trials, 3);
        assert_eq!(cfg.scenario.clutter_rate, 30.0);
        assert_eq!(cfg.scenario.duration, 100);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(ExperimentConfig::from_toml("trails = 3\n"), Err(Error::Config(_))));
    }

    #[test]
    fn every_offending_key_is_listed() {
        let err = ExperimentConfig::from_toml(
            "trials = 0\n[scenario]\ndetection_probability = 1.5\n[truncation]\nalpha = 0.0\n",
        )
        .unwrap_err();
        let Error::Config(keys) = err else { panic!("{err}") };
        assert_eq!(keys.len(), 3, "{keys:?}");
        assert!(keys.iter().any(|k| k.starts_with("scenario.detection_probability")));
    }

    #[test]
    fn sweep_bounds() {
        let base = "[sweep]\nparameter = \"clutter_rate\"\n";
        assert!(ExperimentConfig::from_toml(&format!("{base}values = [50.0, 140.0]\n")).is_ok());
        assert!(ExperimentConfig::from_toml(&format!("{base}values = [30.0]\n")).is_err());
        let cfg = ExperimentConfig::from_toml(&format!("{base}values = [30.0]\nunbounded = true\n")).unwrap();
        assert_eq!(cfg.at(Some(30.0)).scenario.clutter_rate, 30.0);
        assert_eq!(cfg.grid(), vec![Some(30.0)]);
    }

    #[test]
    fn scenario_and_budget_follow_config() {
        let cfg = ExperimentConfig::default();
        let p = cfg.scenario_params(4);
        assert!((p.birth.components[0].probability - 0.01).abs() < 1e-15);
        assert_eq!(p.birth.components.len(), 50);
        let b = cfg.budget(Variant::SgsPlus, 9);
        assert_eq!(b.sampler.iterations, 5000);
        assert!((b.min_log_weight - 1e-5f64.ln()).abs() < 1e-12);
    }
}
