//! Strength estimation at a known location.
//!
//! With the location fixed, the sphere model is linear in the single scalar
//! `c = k α⁵ Re 𝓜`, so `c` follows from one projection. Separating size from
//! conductivity needs several frequencies and a table of `𝓜(ν)`.

use std::io::BufRead;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::forward::{kernel_matrix, ResponseMatrix, SensorArray};
use crate::geometry::Point3;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrengthEstimate {
    /// Estimate of `k α⁵ Re 𝓜`.
    pub c_hat: f64,
    pub residual_norm: f64,
    pub n_obs: usize,
}

/// Least-squares `c` for `A_meas ≈ c · K(z_hat)` with the unit-strength
/// kernel `K`.
pub fn fit_strength(a_meas: &ResponseMatrix, z_hat: &Point3, array: &SensorArray) -> Result<StrengthEstimate> {
    let kernel = kernel_matrix(array, z_hat)?;
    fit_with_kernel(a_meas.data(), &kernel)
}

fn fit_with_kernel(a: &DMatrix<f64>, kernel: &DMatrix<f64>) -> Result<StrengthEstimate> {
    if a.shape() != kernel.shape() {
        return Err(Error::InvalidInput(format!(
            "measured matrix is {:?}, array gives {:?}",
            a.shape(),
            kernel.shape()
        )));
    }
    let norm_sq = kernel.norm_squared();
    if !(norm_sq > 0.0) {
        return Err(Error::Degenerate("model kernel vanishes".into()));
    }
    let c_hat = kernel.dot(a) / norm_sq;
    Ok(StrengthEstimate {
        c_hat,
        residual_norm: (a - kernel * c_hat).norm(),
        n_obs: a.len(),
    })
}

/// Tabulated polarization coefficient `𝓜(ν)`, linearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct MTable {
    rows: Vec<(f64, Complex64)>,
}

impl MTable {
    pub fn new(mut rows: Vec<(f64, Complex64)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Table("polarization table is empty".into()));
        }
        if rows.iter().any(|(nu, m)| !(nu.is_finite() && *nu > 0.0) || !(m.re.is_finite() && m.im.is_finite())) {
            return Err(Error::Table("table entries must be finite with nu > 0".into()));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        if rows.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Table("duplicate nu in polarization table".into()));
        }
        Ok(Self { rows })
    }

    /// The single value shipped with the tool: `𝓜(1) = −0.4110 − 0.0387i`.
    pub fn unit_sphere_nu1() -> Self {
        Self::new(vec![(1.0, Complex64::new(-0.4110, -0.0387))]).unwrap()
    }

    /// CSV with columns `nu,re_m,im_m`; `#` lines and a header are skipped.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Table(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("nu") {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Table(format!("line {}: {e}", lineno + 1)))?;
            if vals.len() != 3 {
                return Err(Error::Table(format!("line {}: expected nu,re_m,im_m", lineno + 1)));
            }
            rows.push((vals[0], Complex64::new(vals[1], vals[2])));
        }
        Self::new(rows)
    }

    pub fn range(&self) -> (f64, f64) {
        (self.rows[0].0, self.rows[self.rows.len() - 1].0)
    }

    /// Interpolated `𝓜(ν)`, or `None` outside the tabulated range. A
    /// one-row table covers its own `ν` up to a relative `1e-12`.
    pub fn eval(&self, nu: f64) -> Option<Complex64> {
        let (lo, hi) = self.range();
        let slack = 1e-12 * hi;
        if !(nu >= lo - slack && nu <= hi + slack) {
            return None;
        }
        let nu = nu.clamp(lo, hi);
        let i = self.rows.partition_point(|r| r.0 <= nu);
        if i == 0 {
            return Some(self.rows[0].1);
        }
        if i == self.rows.len() {
            return Some(self.rows[i - 1].1);
        }
        let (x0, m0) = self.rows[i - 1];
        let (x1, m1) = self.rows[i];
        let t = (nu - x0) / (x1 - x0);
        Some(m0 * (1.0 - t) + m1 * t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiFrequencyFit {
    pub sigma_hat: f64,
    pub alpha_hat: f64,
    pub objective: f64,
    /// Grid cells skipped because some `ν` fell outside the table.
    pub skipped_cells: usize,
}

/// Model strength `ω μ₀ σ α⁵ Re 𝓜(ω μ₀ σ α²)`, or `None` outside the table.
pub fn model_strength(omega: f64, mu0: f64, sigma: f64, alpha: f64, table: &MTable) -> Option<f64> {
    let k = omega * mu0 * sigma;
    table.eval(k * alpha * alpha).map(|m| k * alpha.powi(5) * m.re)
}

/// Grid search for `(σ, α)` from strengths measured at several
/// frequencies. Cells needing `ν` outside the table are skipped; ties go to
/// the lowest (σ-major) index.
pub fn multi_frequency_fit(
    estimates: &[(f64, f64)],
    table: &MTable,
    mu0: f64,
    sigma_grid: &[f64],
    alpha_grid: &[f64],
) -> Result<MultiFrequencyFit> {
    let mut omegas: Vec<f64> = estimates.iter().map(|e| e.0).collect();
    omegas.sort_by(f64::total_cmp);
    omegas.dedup();
    if omegas.len() < 2 {
        return Err(Error::InvalidInput(
            "size and conductivity are not separable from fewer than two distinct frequencies".into(),
        ));
    }
    if sigma_grid.is_empty() || alpha_grid.is_empty() {
        return Err(Error::InvalidInput("empty search grid".into()));
    }
    let objectives: Vec<Option<f64>> = (0..sigma_grid.len() * alpha_grid.len())
        .into_par_iter()
        .map(|cell| {
            let (sigma, alpha) = (sigma_grid[cell / alpha_grid.len()], alpha_grid[cell % alpha_grid.len()]);
            estimates.iter().try_fold(0.0, |acc, &(omega, c)| {
                model_strength(omega, mu0, sigma, alpha, table).map(|m| acc + (c - m).powi(2))
            })
        })
        .collect();
    let skipped_cells = objectives.iter().filter(|o| o.is_none()).count();
    let mut best: Option<(usize, f64)> = None;
    for (cell, obj) in objectives.iter().enumerate() {
        if let Some(v) = *obj {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((cell, v));
            }
        }
    }
    let Some((cell, objective)) = best else {
        // report the ν of the first cell to make the failure concrete
        let nu = omegas[0] * mu0 * sigma_grid[0] * alpha_grid[0].powi(2);
        let (lo, hi) = table.range();
        return Err(Error::TableCoverage { nu, lo, hi });
    };
    Ok(MultiFrequencyFit {
        sigma_hat: sigma_grid[cell / alpha_grid.len()],
        alpha_hat: alpha_grid[cell % alpha_grid.len()],
        objective,
        skipped_cells,
    })
}

#[cfg(test)]
mod tests {
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    use super::*;
    use crate::forward::{planar_grid, response_matrix, InclusionModel, Polarization};
    use crate::rng::stream_rng;

    const MU0: f64 = 1.2566e-6;

    fn small_array() -> SensorArray {
        let s = planar_grid(2.0, 6, 1.0, Vector3::z_axis());
        SensorArray::new(s.clone(), s).unwrap()
    }

    fn reference_inclusion(z: Point3) -> InclusionModel {
        InclusionModel::new(z, 0.01, MU0, MU0, 5.96e7, 133.5).unwrap()
    }

    /// Smooth synthetic `𝓜(ν)` on [0.01, 100]: low-frequency behaviour
    /// `Re 𝓜 ∝ −ν²`, `Im 𝓜 ∝ −ν`, saturating above `ν ≈ 1`.
    fn synthetic_table() -> MTable {
        let rows = (0..=400)
            .map(|i| {
                let nu = 10f64.powf(-2.0 + i as f64 / 100.0);
                (nu, Complex64::new(-0.6 * nu * nu / (1.0 + nu * nu), -0.2 * nu / (1.0 + nu * nu)))
            })
            .collect();
        MTable::new(rows).unwrap()
    }

    #[test]
    fn noiseless_fit_is_exact() {
        let array = small_array();
        let z = Point3::new(0.05, -0.1, 0.2);
        let incl = reference_inclusion(z);
        let m = Complex64::new(-0.4110, -0.0387);
        let a0 = response_matrix(&array, &incl, &Polarization::sphere(m)).unwrap();
        let est = fit_strength(&a0, &z, &array).unwrap();
        let truth = incl.amplitude() * m.re;
        assert!((est.c_hat / truth - 1.0).abs() < 1e-12);
        assert!((truth + 4.110e-7).abs() < 1e-9);
        assert!(est.residual_norm <= 1e-12 * a0.data().norm());
        assert_eq!(est.n_obs, 36 * 36);

        for dz in [Point3::new(0.01, 0.0, 0.0), Point3::new(0.0, -0.02, 0.01)] {
            let off = fit_strength(&a0, &(z + dz), &array).unwrap();
            assert!(off.residual_norm > est.residual_norm);
        }
    }

    #[test]
    fn zero_kernel_is_degenerate() {
        let k = DMatrix::zeros(3, 3);
        assert!(matches!(fit_with_kernel(&DMatrix::zeros(3, 3), &k), Err(Error::Degenerate(_))));
        assert!(fit_with_kernel(&DMatrix::zeros(3, 2), &DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn table_interpolation_and_parsing() {
        let t = MTable::read_csv("# comment\nnu,re_m,im_m\n2,-0.5,0\n1,-0.3,-0.1\n".as_bytes()).unwrap();
        assert_eq!(t.range(), (1.0, 2.0));
        let m = t.eval(1.25).unwrap();
        assert!((m.re + 0.35).abs() < 1e-15 && (m.im + 0.075).abs() < 1e-15);
        assert_eq!(t.eval(1.0), Some(Complex64::new(-0.3, -0.1)));
        assert_eq!(t.eval(2.0), Some(Complex64::new(-0.5, 0.0)));
        assert!(t.eval(0.5).is_none() && t.eval(2.5).is_none());
        let one = MTable::unit_sphere_nu1();
        assert_eq!(one.eval(1.0), Some(Complex64::new(-0.4110, -0.0387)));
        assert!(one.eval(0.99983).is_none());
        assert!(MTable::read_csv("1,2\n".as_bytes()).is_err());
        assert!(MTable::read_csv("".as_bytes()).is_err());
        assert!(MTable::read_csv("1,0,0\n1,1,1\n".as_bytes()).is_err());
    }

    fn grids() -> (Vec<f64>, Vec<f64>) {
        let sigma: Vec<f64> = (0..61).map(|i| 3e7 + i as f64 * 1e6).collect();
        let alpha: Vec<f64> = (0..41).map(|i| 0.008 + i as f64 * 1e-4).collect();
        (sigma, alpha)
    }

    #[test]
    fn noiseless_multi_frequency_recovers_grid_point() {
        let table = synthetic_table();
        let (sg, ag) = grids();
        let (sigma, alpha) = (sg[29], ag[20]);
        let data: Vec<(f64, f64)> = [40.0, 133.5, 400.0]
            .iter()
            .map(|&w| (w, model_strength(w, MU0, sigma, alpha, &table).unwrap()))
            .collect();
        let fit = multi_frequency_fit(&data, &table, MU0, &sg, &ag).unwrap();
        assert_eq!((fit.sigma_hat, fit.alpha_hat), (sigma, alpha));
        assert!(fit.objective < 1e-40);
    }

    #[test]
    fn single_frequency_is_not_identifiable() {
        let table = synthetic_table();
        let (sg, ag) = grids();
        let data = [(133.5, -4e-7), (133.5, -4.1e-7)];
        assert!(multi_frequency_fit(&data, &table, MU0, &sg, &ag).is_err());
    }

    #[test]
    fn uncovered_table_is_an_error() {
        let (sg, ag) = grids();
        let data = [(40.0, -1e-7), (133.5, -4e-7)];
        let err = multi_frequency_fit(&data, &MTable::unit_sphere_nu1(), MU0, &sg, &ag).unwrap_err();
        assert!(matches!(err, Error::TableCoverage { .. }));
    }

    #[test]
    fn noisy_multi_frequency_recovers_size() {
        let table = synthetic_table();
        let (sg, ag) = grids();
        let (sigma, alpha) = (5.96e7, 0.01);
        let mut rng = stream_rng(77, 0);
        for _ in 0..20 {
            let data: Vec<(f64, f64)> = [13.35, 133.5, 1335.0]
                .iter()
                .map(|&w| {
                    let c = model_strength(w, MU0, sigma, alpha, &table).unwrap();
                    (w, c * (1.0 + 0.01 * rng.sample::<f64, _>(StandardNormal)))
                })
                .collect();
            let fit = multi_frequency_fit(&data, &table, MU0, &sg, &ag).unwrap();
            assert!((fit.alpha_hat / alpha - 1.0).abs() < 0.05, "alpha {}", fit.alpha_hat);
        }
    }

    #[test]
    fn noisy_strength_is_unbiased() {
        let array = small_array();
        let z = Point3::zeros();
        let a0 = response_matrix(&array, &reference_inclusion(z), &Polarization::sphere(Complex64::new(-0.4110, 0.0)))
            .unwrap();
        let truth = fit_strength(&a0, &z, &array).unwrap().c_hat;
        let sigma = a0.singular_values()[0] / 3.0;
        let fits: Vec<f64> = (0..500)
            .map(|s| {
                let mut rng = stream_rng(5, s);
                let noise = DMatrix::from_fn(36, 36, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
                fit_strength(&ResponseMatrix::new(a0.data() + noise), &z, &array).unwrap().c_hat
            })
            .collect();
        let mean = fits.iter().sum::<f64>() / 500.0;
        let sd = (fits.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / 499.0).sqrt();
        assert!((mean - truth).abs() < 3.0 * sd / 500f64.sqrt());
    }

    proptest! {
        #[test]
        fn estimator_is_linear(c1 in -5.0..5.0f64, c2 in -5.0..5.0f64, seed in 0u64..1000) {
            let array = small_array();
            let z = Point3::new(0.1, 0.1, 0.0);
            let mut rng = stream_rng(seed, 0);
            let mut draw = || DMatrix::from_fn(36, 36, |_, _| rng.sample::<f64, _>(StandardNormal));
            let (a1, a2) = (draw(), draw());
            let f = |a: DMatrix<f64>| fit_strength(&ResponseMatrix::new(a), &z, &array).unwrap().c_hat;
            let lhs = f(&a1 * c1 + &a2 * c2);
            let rhs = c1 * f(a1.clone()) + c2 * f(a2.clone());
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
        }
    }
}
