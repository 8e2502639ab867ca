#![allow(dead_code)]

use eddyscan_core::forward::{planar_grid, response_matrix, InclusionModel, Polarization, ResponseMatrix, SensorArray};
use eddyscan_core::Point3;
use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub const MU0: f64 = 1.2566e-6;

/// 16 × 16 vertical dipoles on [-2, 2]² at height 1, used as both sources
/// and receivers.
pub fn reference_array() -> SensorArray {
    let sensors = planar_grid(2.0, 16, 1.0, Vector3::z_axis());
    SensorArray::new(sensors.clone(), sensors).unwrap()
}

pub fn reference_inclusion(center: Point3) -> InclusionModel {
    InclusionModel::new(center, 0.01, MU0, MU0, 5.96e7, 133.5).unwrap()
}

pub fn reference_polarization() -> Polarization {
    Polarization::sphere(Complex64::new(-0.4110, -0.0387))
}

pub fn reference_response(center: Point3) -> ResponseMatrix {
    response_matrix(&reference_array(), &reference_inclusion(center), &reference_polarization()).unwrap()
}

/// `n × m` white noise with entry variance `sigma_n² / m`.
pub fn scaled_noise<R: Rng>(n: usize, m: usize, sigma_n: f64, rng: &mut R) -> DMatrix<f64> {
    let s = sigma_n / (m as f64).sqrt();
    DMatrix::from_fn(n, m, |_, _| s * rng.sample::<f64, _>(StandardNormal))
}

pub fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (mean, xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0))
}
