//! Linear-Gaussian single-object models and the standard multi-object model
//! parameters: constant-velocity motion, position sensor with Poisson
//! clutter, and labeled multi-Bernoulli births.
//!
//! States are `[x, vx, y, vy]` in metres and metres per second.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, SymmetricEigen, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type StateVector = Vector4<f64>;
pub type Measurement = Vector2<f64>;

const SYMMETRY_TOL: f64 = 1e-9;

/// Object identity: birth scan and ordinal among objects born that scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Label {
    pub birth_time: u32,
    pub index: u32,
}

impl Label {
    pub fn new(birth_time: u32, index: u32) -> Self {
        Label { birth_time, index }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.birth_time, self.index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDensity {
    pub mean: StateVector,
    pub cov: Matrix4<f64>,
}

impl GaussianDensity {
    /// Checks symmetry (within 1e-9, relative to the largest entry) and
    /// positive-definiteness.
    pub fn new(mean: StateVector, cov: Matrix4<f64>) -> Result<Self> {
        let scale = cov.amax().max(1.0);
        if (cov - cov.transpose()).amax() > SYMMETRY_TOL * scale {
            return Err(Error::domain("covariance is not symmetric"));
        }
        if cov.cholesky().is_none() {
            return Err(Error::domain("covariance is not positive-definite"));
        }
        Ok(GaussianDensity { mean, cov })
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.mean[0], self.mean[2])
    }

    pub fn log_pdf(&self, x: &StateVector) -> f64 {
        let chol = self.cov.cholesky().expect("positive-definite covariance");
        let d = x - self.mean;
        let maha = d.dot(&chol.solve(&d));
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        -0.5 * (maha + log_det + 4.0 * (2.0 * PI).ln())
    }

    pub fn pdf(&self, x: &StateVector) -> f64 {
        self.log_pdf(x).exp()
    }

    /// Innovation statistics of this (predicted) density under `sensor`,
    /// shared by the likelihood and the update of every measurement.
    pub fn measurement_prediction(&self, sensor: &SensorModel) -> Result<MeasurementPrediction> {
        let h = &sensor.observation;
        let s = h * self.cov * h.transpose() + sensor.noise;
        let s = 0.5 * (s + s.transpose());
        let chol = s
            .cholesky()
            .ok_or_else(|| Error::Numeric("singular innovation covariance".into()))?;
        let s_inv = chol.inverse();
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(MeasurementPrediction {
            mean: h * self.mean,
            s_inv,
            log_norm: -(2.0 * PI).ln() - 0.5 * log_det,
            gain: self.cov * h.transpose() * s_inv,
        })
    }
}

#[derive(Debug, Clone)]
pub struct MeasurementPrediction {
    pub mean: Vector2<f64>,
    pub s_inv: Matrix2<f64>,
    /// `ln (2 pi)^-1 |S|^-1/2`.
    pub log_norm: f64,
    pub gain: Matrix4x2<f64>,
}

impl MeasurementPrediction {
    /// `ln N(z; H m, S)`.
    pub fn log_likelihood(&self, z: &Measurement) -> f64 {
        let d = z - self.mean;
        self.log_norm - 0.5 * d.dot(&(self.s_inv * d))
    }

    /// Joseph-form update of `prior` (the density this prediction came from).
    pub fn update(&self, prior: &GaussianDensity, z: &Measurement, sensor: &SensorModel) -> GaussianDensity {
        let k = &self.gain;
        let mean = prior.mean + k * (z - self.mean);
        let a = Matrix4::identity() - k * sensor.observation;
        let cov = a * prior.cov * a.transpose() + k * sensor.noise * k.transpose();
        GaussianDensity {
            mean,
            cov: 0.5 * (cov + cov.transpose()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Region {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Region {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    pub fn square(side: f64) -> Self {
        Region::new(0.0, side, 0.0, side)
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel {
    pub transition: Matrix4<f64>,
    pub process_noise: Matrix4<f64>,
    pub survival_probability: f64,
}

impl MotionModel {
    /// Constant velocity with white-acceleration noise of standard deviation
    /// `sigma_p` (m/s^2) per axis: `Q = sigma_p^2 G G^T`, `G = [dt^2/2, dt]`
    /// per axis.
    pub fn constant_velocity(dt: f64, sigma_p: f64, survival_probability: f64) -> Self {
        #[rustfmt::skip]
        let transition = Matrix4::new(
            1.0, dt, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
            0.0, 0.0, 1.0, dt,
            0.0, 0.0, 0.0, 1.0,
        );
        let (a, b) = (dt * dt / 2.0, dt);
        let block = Matrix2::new(a * a, a * b, a * b, b * b) * sigma_p * sigma_p;
        let mut process_noise = Matrix4::zeros();
        process_noise.fixed_view_mut::<2, 2>(0, 0).copy_from(&block);
        process_noise.fixed_view_mut::<2, 2>(2, 2).copy_from(&block);
        MotionModel {
            transition,
            process_noise,
            survival_probability,
        }
    }

    /// Matrix `L` with `L L^T = Q`, valid for singular `Q`.
    pub fn noise_factor(&self) -> Matrix4<f64> {
        let eig = SymmetricEigen::new(self.process_noise);
        let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        eig.eigenvectors * Matrix4::from_diagonal(&sqrt)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    pub observation: Matrix2x4<f64>,
    pub noise: Matrix2<f64>,
    pub detection_probability: f64,
    /// Mean clutter count per scan.
    pub clutter_rate: f64,
    pub region: Region,
}

impl SensorModel {
    /// Noisy position measurements with standard deviation `sigma_m` per axis.
    pub fn position(sigma_m: f64, detection_probability: f64, clutter_rate: f64, region: Region) -> Self {
        #[rustfmt::skip]
        let observation = Matrix2x4::new(
            1.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 1.0, 0.0,
        );
        SensorModel {
            observation,
            noise: Matrix2::identity() * sigma_m * sigma_m,
            detection_probability,
            clutter_rate,
            region,
        }
    }

    /// Uniform clutter intensity `lambda_c / area` inside the region, zero
    /// outside.
    pub fn clutter_intensity(&self, z: &Measurement) -> f64 {
        if self.region.contains(z[0], z[1]) {
            self.clutter_rate / self.region.area()
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirthComponent {
    pub index: u32,
    pub probability: f64,
    pub density: GaussianDensity,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BirthModel {
    pub components: Vec<BirthComponent>,
}

impl BirthModel {
    /// `cols x rows` regular grid of zero-velocity birth means over `region`
    /// with half-cell margins, each with covariance `diag(std^2)`.
    pub fn grid(region: &Region, cols: usize, rows: usize, probability: f64, std: f64) -> Self {
        let dx = (region.x_max - region.x_min) / cols as f64;
        let dy = (region.y_max - region.y_min) / rows as f64;
        let cov = Matrix4::identity() * std * std;
        let components = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r, c)))
            .enumerate()
            .map(|(k, (r, c))| BirthComponent {
                index: k as u32,
                probability,
                density: GaussianDensity {
                    mean: StateVector::new(
                        region.x_min + (c as f64 + 0.5) * dx,
                        0.0,
                        region.y_min + (r as f64 + 0.5) * dy,
                        0.0,
                    ),
                    cov,
                },
            })
            .collect();
        BirthModel { components }
    }

    pub fn set_probability(&mut self, probability: f64) {
        self.components.iter_mut().for_each(|c| c.probability = probability);
    }

    /// Expected births per scan.
    pub fn rate(&self) -> f64 {
        self.components.iter().map(|c| c.probability).sum()
    }

    pub fn validate(&self) -> Result<()> {
        match self
            .components
            .iter()
            .find(|c| !(c.probability > 0.0 && c.probability < 1.0))
        {
            Some(c) => Err(Error::domain(format!(
                "birth component {} has probability {} outside (0, 1)",
                c.index, c.probability
            ))),
            None => Ok(()),
        }
    }
}

/// `mean <- F mean`, `cov <- F cov F^T + Q`.
pub fn kalman_predict(p: &GaussianDensity, model: &MotionModel) -> GaussianDensity {
    let f = &model.transition;
    let cov = f * p.cov * f.transpose() + model.process_noise;
    GaussianDensity {
        mean: f * p.mean,
        cov: 0.5 * (cov + cov.transpose()),
    }
}

/// `ln [P_D N(z; H m, H P H^T + R) / kappa(z)]`; `-inf` when `P_D = 0`.
pub fn log_predictive_likelihood(p_pred: &GaussianDensity, z: &Measurement, sensor: &SensorModel) -> Result<f64> {
    let kappa = sensor.clutter_intensity(z);
    if kappa <= 0.0 {
        return Err(Error::domain(format!(
            "clutter intensity vanishes at ({}, {})",
            z[0], z[1]
        )));
    }
    let pred = p_pred.measurement_prediction(sensor)?;
    Ok(sensor.detection_probability.ln() + pred.log_likelihood(z) - kappa.ln())
}

/// `P_D N(z; H m, H P H^T + R) / kappa(z)`, the detection entry of a cost
/// matrix row before the survival or birth factor.
pub fn predictive_likelihood(p_pred: &GaussianDensity, z: &Measurement, sensor: &SensorModel) -> Result<f64> {
    log_predictive_likelihood(p_pred, z, sensor).map(f64::exp)
}

/// Posterior density after associating measurement `z`.
pub fn kalman_update(p_pred: &GaussianDensity, z: &Measurement, sensor: &SensorModel) -> Result<GaussianDensity> {
    let pred = p_pred.measurement_prediction(sensor)?;
    Ok(pred.update(p_pred, z, sensor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    fn region() -> Region {
        Region::square(3000.0)
    }

    fn random_density(rng: &mut impl Rng) -> GaussianDensity {
        let a = Matrix4::from_fn(|_, _| rng.random_range(-3.0..3.0));
        let cov = a * a.transpose() + Matrix4::identity() * 4.0;
        let mean = StateVector::from_fn(|_, _| rng.random_range(500.0..2500.0));
        GaussianDensity::new(mean, cov).unwrap()
    }

    fn assert_sym_pd(cov: &Matrix4<f64>) {
        assert!((cov - cov.transpose()).amax() <= 1e-9 * cov.amax().max(1.0));
        assert!(cov.cholesky().is_some());
    }

    #[test]
    fn identity_dynamics_are_a_no_op() {
        let p = random_density(&mut stream(1, &[]));
        let m = MotionModel {
            transition: Matrix4::identity(),
            process_noise: Matrix4::zeros(),
            survival_probability: 0.99,
        };
        let q = kalman_predict(&p, &m);
        assert!((q.mean - p.mean).amax() < 1e-12);
        assert!((q.cov - p.cov).amax() < 1e-12);
    }

    #[test]
    fn stationary_state_keeps_position() {
        let p = GaussianDensity::new(StateVector::new(10.0, 0.0, -4.0, 0.0), Matrix4::identity()).unwrap();
        let m = MotionModel::constant_velocity(1.0, 5.0, 0.99);
        let q = kalman_predict(&p, &m);
        assert_eq!(q.mean, p.mean);
        let f = m.transition;
        assert!((q.cov - (f * p.cov * f.transpose() + m.process_noise)).amax() < 1e-12);
        assert!(q.cov[(0, 0)] > p.cov[(0, 0)]);
        // white-acceleration gain: Q_xx = sigma^2 dt^4 / 4, Q_vv = sigma^2 dt^2
        assert!((m.process_noise[(0, 0)] - 6.25).abs() < 1e-12);
        assert!((m.process_noise[(1, 1)] - 25.0).abs() < 1e-12);
        assert!((m.process_noise[(0, 1)] - 12.5).abs() < 1e-12);
    }

    #[test]
    fn likelihood_peaks_at_predicted_measurement() {
        let p = random_density(&mut stream(2, &[]));
        let s = SensorModel::position(10.0, 0.86, 90.0, region());
        let z = s.observation * p.mean;
        let at_peak = predictive_likelihood(&p, &z, &s).unwrap();
        let cov = s.observation * p.cov * s.observation.transpose() + s.noise;
        let expected = 0.86 / (2.0 * PI) / cov.determinant().sqrt() / (90.0 / 9e6);
        assert!((at_peak / expected - 1.0).abs() < 1e-12);
        let off = predictive_likelihood(&p, &(z + Vector2::new(3.0, -2.0)), &s).unwrap();
        assert!(off < at_peak);
    }

    #[test]
    fn zero_detection_probability_gives_zero() {
        let p = random_density(&mut stream(3, &[]));
        let s = SensorModel::position(10.0, 0.0, 90.0, region());
        let z = s.observation * p.mean;
        assert_eq!(predictive_likelihood(&p, &z, &s).unwrap(), 0.0);
    }

    #[test]
    fn measurement_outside_region_is_rejected() {
        let p = random_density(&mut stream(4, &[]));
        let s = SensorModel::position(10.0, 0.9, 90.0, region());
        assert!(predictive_likelihood(&p, &Vector2::new(-5.0, 10.0), &s).is_err());
    }

    /// Midpoint-rule integration over position of
    /// `P_D N(z; pos, R) N(pos; H m, H P H^T) / kappa`.
    fn quadrature_likelihood(p: &GaussianDensity, z: &Measurement, s: &SensorModel) -> f64 {
        let h = s.observation;
        let mu = h * p.mean;
        let prior = h * p.cov * h.transpose();
        let prior_inv = prior.try_inverse().unwrap();
        let r_inv = s.noise.try_inverse().unwrap();
        let norm_prior = 1.0 / (2.0 * PI * prior.determinant().sqrt());
        let norm_r = 1.0 / (2.0 * PI * s.noise.determinant().sqrt());
        let half = 10.0 * (prior[(0, 0)].max(prior[(1, 1)])).sqrt();
        let n = 1200;
        let step = 2.0 * half / n as f64;
        let mut total = 0.0;
        for a in 0..n {
            for b in 0..n {
                let pos = Vector2::new(mu[0] - half + (a as f64 + 0.5) * step, mu[1] - half + (b as f64 + 0.5) * step);
                let d1 = pos - mu;
                let d2 = z - pos;
                total += norm_prior * (-0.5 * d1.dot(&(prior_inv * d1))).exp()
                    * norm_r * (-0.5 * d2.dot(&(r_inv * d2))).exp();
            }
        }
        total * step * step * s.detection_probability / s.clutter_intensity(z)
    }

    #[test]
    fn likelihood_matches_quadrature() {
        let mut rng = stream(5, &[]);
        let p = random_density(&mut rng);
        let s = SensorModel::position(10.0, 0.86, 90.0, region());
        let z = s.observation * p.mean + Vector2::new(4.0, -7.0);
        let closed = predictive_likelihood(&p, &z, &s).unwrap();
        let numeric = quadrature_likelihood(&p, &z, &s);
        assert!((closed / numeric - 1.0).abs() < 1e-6, "{closed} vs {numeric}");
    }

    #[test]
    fn uninformative_measurement_keeps_prior() {
        let p = random_density(&mut stream(6, &[]));
        let mut s = SensorModel::position(10.0, 0.86, 90.0, region());
        s.noise = Matrix2::identity() * 1e6;
        let z = s.observation * p.mean + Vector2::new(50.0, 50.0);
        let post = kalman_update(&p, &z, &s).unwrap();
        assert!((post.mean - p.mean).amax() < 1e-2 * 50.0 / 2.0);
        assert_sym_pd(&post.cov);
    }

    #[test]
    fn exact_measurement_pins_position() {
        let p = random_density(&mut stream(7, &[]));
        let mut s = SensorModel::position(10.0, 0.86, 90.0, region());
        s.noise = Matrix2::identity() * 1e-6;
        let z = Vector2::new(1234.0, 2345.0);
        let post = kalman_update(&p, &z, &s).unwrap();
        assert!((post.mean[0] - z[0]).abs() < 1e-2);
        assert!((post.mean[2] - z[1]).abs() < 1e-2);
    }

    #[test]
    fn likelihood_times_posterior_is_the_joint() {
        let mut rng = stream(8, &[]);
        let p = random_density(&mut rng);
        let s = SensorModel::position(10.0, 0.86, 90.0, region());
        let z = s.observation * p.mean + Vector2::new(-3.0, 6.0);
        let lik = predictive_likelihood(&p, &z, &s).unwrap();
        let post = kalman_update(&p, &z, &s).unwrap();
        let r_inv = s.noise.try_inverse().unwrap();
        let norm_r = 1.0 / (2.0 * PI * s.noise.determinant().sqrt());
        for _ in 0..5 {
            let x = p.mean + StateVector::from_fn(|_, _| rng.random_range(-2.0..2.0));
            let d = z - s.observation * x;
            let g = norm_r * (-0.5 * d.dot(&(r_inv * d))).exp();
            let joint = s.detection_probability * g * p.pdf(&x) / s.clutter_intensity(&z);
            let lhs = lik * post.pdf(&x);
            assert!((lhs / joint - 1.0).abs() < 1e-8, "{lhs} vs {joint}");
        }
    }

    #[test]
    fn birth_grid_layout() {
        let b = BirthModel::grid(&region(), 10, 5, 0.01, 10.0);
        assert_eq!(b.components.len(), 50);
        assert!((b.rate() - 0.5).abs() < 1e-12);
        assert_eq!(b.components[0].density.mean, StateVector::new(150.0, 0.0, 300.0, 0.0));
        assert_eq!(b.components[49].density.mean, StateVector::new(2850.0, 0.0, 2700.0, 0.0));
        b.validate().unwrap();
        let mut bad = b.clone();
        bad.set_probability(1.0);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn noise_factor_reproduces_q() {
        let m = MotionModel::constant_velocity(1.0, 5.0, 0.99);
        let l = m.noise_factor();
        assert!((l * l.transpose() - m.process_noise).amax() < 1e-9);
    }

    proptest! {
        #[test]
        fn produced_covariances_are_symmetric_pd(seed in any::<u64>(), dz in -30.0f64..30.0) {
            let mut rng = stream(seed, &[]);
            let p = random_density(&mut rng);
            let m = MotionModel::constant_velocity(1.0, 5.0, 0.99);
            let s = SensorModel::position(10.0, 0.86, 90.0, region());
            let q = kalman_predict(&p, &m);
            assert_sym_pd(&q.cov);
            let z = s.observation * q.mean + Vector2::new(dz, -dz);
            let post = kalman_update(&q, &z, &s).unwrap();
            assert_sym_pd(&post.cov);
        }
    }
}
