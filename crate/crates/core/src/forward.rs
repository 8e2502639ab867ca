//! Leading-order field perturbation due to a small conductive inclusion and
//! the synthetic response matrices built from it.
//!
//! The inclusion occupies `z + αB`. With `k = ωμ₀σ*` and `ν = kα²` of order
//! one, the perturbation measured at `x` along `q` from a dipole at `s`
//! pointing along `p` is, for a sphere with `μ* = μ₀`,
//!
//! ```text
//! q·(H_α − H₀)(x) ≈ i k α⁵ 𝓜 (D²G(x, z) q)ᵀ (D²G(z, s) p).
//! ```
//!
//! The background field is real, so the imaginary part of the measurement
//! isolates the inclusion: `A₀[n, m] = k α⁵ Re(𝓜) g_nᵀ h_m` with receiver
//! steering vectors `g_n = D²G(r_n, z) q_n` and source vectors
//! `h_m = D²G(z, s_m) p_m`. `A₀` therefore has rank at most three.

use std::fmt;
use std::sync::OnceLock;

use nalgebra::{DMatrix, Matrix3, Vector3, SVD};
use num_complex::Complex64;

use crate::geometry::{green_hessian, Direction, Point3, Vec3};
use crate::{Error, Result};

/// Sphere polarization coefficient `𝓜` at `ν = kα² = 1`, obtained from an
/// edge-element solution of the sphere cell problem.
pub const SPHERE_POLARIZATION_NU1: Complex64 = Complex64::new(-0.4110, -0.0387);

/// Singular values below `RANK_TOL · σ₁` are treated as numerically zero.
pub const RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InclusionModel {
    pub center: Point3,
    /// Characteristic radius α (m).
    pub radius: f64,
    /// Background permeability μ₀ (H/m).
    pub mu0: f64,
    /// Inclusion permeability μ* (H/m).
    pub mu_star: f64,
    /// Inclusion conductivity σ* (S/m).
    pub sigma_star: f64,
    /// Angular frequency ω (rad/s).
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedParams {
    /// `k = ωμ₀σ*` (1/m²).
    pub k: f64,
    /// `ν = kα²`.
    pub nu: f64,
    /// `δ = √(2/k)` (m).
    pub skin_depth: f64,
    /// `μ*/μ₀`.
    pub mu_ratio: f64,
}

impl InclusionModel {
    pub fn new(
        center: Point3,
        radius: f64,
        mu0: f64,
        mu_star: f64,
        sigma_star: f64,
        omega: f64,
    ) -> Result<Self> {
        let model = Self {
            center,
            radius,
            mu0,
            mu_star,
            sigma_star,
            omega,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.center.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidInput("inclusion center must be finite".into()));
        }
        for (name, v) in [
            ("radius", self.radius),
            ("mu0", self.mu0),
            ("mu_star", self.mu_star),
            ("sigma_star", self.sigma_star),
            ("omega", self.omega),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn derived(&self) -> DerivedParams {
        derive_params(self)
    }

    /// `k α⁵`, the amplitude multiplying `𝓜` in the sphere formula.
    pub fn amplitude(&self) -> f64 {
        self.derived().k * self.radius.powi(5)
    }
}

pub fn derive_params(incl: &InclusionModel) -> DerivedParams {
    let k = incl.omega * incl.mu0 * incl.sigma_star;
    DerivedParams {
        k,
        nu: k * incl.radius * incl.radius,
        skin_depth: (2.0 / k).sqrt(),
        mu_ratio: incl.mu_star / incl.mu0,
    }
}

/// Conductivity polarization tensors `𝕄^(l,l′)` and the (real) magnetic
/// polarization tensor of an arbitrarily shaped inclusion.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorPolarization {
    /// `conductivity[l][l′]` is `𝕄^(l,l′)`.
    pub conductivity: [[Matrix3<Complex64>; 3]; 3],
    /// Columns are `(1 − μ₀/μ*) ∫_B (e_i + ½∇×θ_i)`.
    pub magnetic: Matrix3<f64>,
}

impl TensorPolarization {
    pub fn zero() -> Self {
        Self {
            conductivity: [[Matrix3::zeros(); 3]; 3],
            magnetic: Matrix3::zeros(),
        }
    }

    /// Tensors reproducing the sphere formula with coefficient `m` and no
    /// magnetic contrast: `𝕄^(l,l′) = m e_l e_l′ᵀ`.
    pub fn sphere_equivalent(m: Complex64) -> Self {
        let mut out = Self::zero();
        for l in 0..3 {
            for lp in 0..3 {
                out.conductivity[l][lp][(l, lp)] = m;
            }
        }
        out
    }
}

/// Polarization data of the inclusion; exactly one description is active.
#[derive(Debug, Clone, PartialEq)]
pub enum Polarization {
    /// Sphere with `μ* = μ₀`, described by the scalar `𝓜`.
    Sphere { m: Complex64 },
    Tensor(Box<TensorPolarization>),
}

impl Polarization {
    pub fn sphere(m: Complex64) -> Self {
        Polarization::Sphere { m }
    }

    fn sphere_coefficient(&self) -> Result<Complex64> {
        match self {
            Polarization::Sphere { m } => Ok(*m),
            Polarization::Tensor(_) => Err(Error::InvalidInput(
                "operation requires sphere polarization".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensorRole {
    Source,
    Receiver,
}

impl fmt::Display for SensorRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SensorRole::Source => f.write_str("source"),
            SensorRole::Receiver => f.write_str("receiver"),
        }
    }
}

/// A point dipole emitter or a directional field probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensor {
    pub position: Point3,
    pub direction: Direction,
}

/// `M` sources and `N ≥ M` receivers.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorArray {
    sources: Vec<Sensor>,
    receivers: Vec<Sensor>,
}

impl SensorArray {
    pub fn new(sources: Vec<Sensor>, receivers: Vec<Sensor>) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::InvalidInput("sensor array needs at least one source".into()));
        }
        if receivers.len() < sources.len() {
            return Err(Error::InvalidInput(format!(
                "need at least as many receivers as sources (N = {}, M = {})",
                receivers.len(),
                sources.len()
            )));
        }
        let finite = |s: &Sensor| s.position.iter().all(|c| c.is_finite());
        if !sources.iter().chain(&receivers).all(finite) {
            return Err(Error::InvalidInput("sensor positions must be finite".into()));
        }
        Ok(Self { sources, receivers })
    }

    pub fn sources(&self) -> &[Sensor] {
        &self.sources
    }

    pub fn receivers(&self) -> &[Sensor] {
        &self.receivers
    }

    /// Number of sources `M`.
    pub fn m(&self) -> usize {
        self.sources.len()
    }

    /// Number of receivers `N`.
    pub fn n(&self) -> usize {
        self.receivers.len()
    }

    /// `γ = N / M ≥ 1`.
    pub fn gamma(&self) -> f64 {
        self.n() as f64 / self.m() as f64
    }
}

/// Sensors on a `per_side × per_side` uniform grid covering
/// `[-half_extent, half_extent]²` at height `height`.
///
/// Indexing is row-major: sensor `row * per_side + col` sits at
/// `x = x_col`, `y = y_row`.
pub fn planar_grid(half_extent: f64, per_side: usize, height: f64, direction: Direction) -> Vec<Sensor> {
    let coord = |i: usize| {
        if per_side == 1 {
            0.0
        } else {
            -half_extent + 2.0 * half_extent * i as f64 / (per_side - 1) as f64
        }
    };
    (0..per_side)
        .flat_map(|row| (0..per_side).map(move |col| (row, col)))
        .map(|(row, col)| Sensor {
            position: Point3::new(coord(col), coord(row), height),
            direction,
        })
        .collect()
}

/// Real measured matrix (rows: receivers, columns: sources) with a lazily
/// computed SVD.
#[derive(Debug)]
pub struct ResponseMatrix {
    data: DMatrix<f64>,
    singular_values: OnceLock<Vec<f64>>,
    svd: OnceLock<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl Clone for ResponseMatrix {
    fn clone(&self) -> Self {
        Self::new(self.data.clone())
    }
}

impl PartialEq for ResponseMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.data == other.data
    }
}

impl From<DMatrix<f64>> for ResponseMatrix {
    fn from(data: DMatrix<f64>) -> Self {
        Self::new(data)
    }
}

impl ResponseMatrix {
    pub fn new(data: DMatrix<f64>) -> Self {
        Self {
            data,
            singular_values: OnceLock::new(),
            svd: OnceLock::new(),
        }
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    /// Number of receivers (rows).
    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    /// Number of sources (columns).
    pub fn m(&self) -> usize {
        self.data.ncols()
    }

    fn full_svd(&self) -> &SVD<f64, nalgebra::Dyn, nalgebra::Dyn> {
        self.svd.get_or_init(|| self.data.clone().svd(true, false))
    }

    /// Singular values in descending order; `min(N, M)` of them.
    pub fn singular_values(&self) -> &[f64] {
        self.singular_values.get_or_init(|| {
            let mut sv: Vec<f64> = match self.svd.get() {
                Some(svd) => svd.singular_values.iter().copied().collect(),
                None => self.data.singular_values().iter().copied().collect(),
            };
            sv.sort_by(|a, b| b.total_cmp(a));
            sv
        })
    }

    /// Left singular vectors belonging to the `rank` largest singular
    /// values, as the columns of an `N × rank` matrix.
    pub fn leading_left_vectors(&self, rank: usize) -> Result<DMatrix<f64>> {
        let svd = self.full_svd();
        let u = svd.u.as_ref().expect("left singular vectors requested");
        if rank > svd.singular_values.len() {
            return Err(Error::InvalidInput(format!(
                "rank {rank} exceeds min(N, M) = {}",
                svd.singular_values.len()
            )));
        }
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let mut out = DMatrix::zeros(self.n(), rank);
        for (j, &col) in order.iter().take(rank).enumerate() {
            out.set_column(j, &u.column(col));
        }
        Ok(out)
    }

    /// Number of singular values above `RANK_TOL · σ₁`.
    pub fn numerical_rank(&self) -> usize {
        let sv = self.singular_values();
        match sv.first() {
            Some(&s1) if s1 > 0.0 => sv.iter().filter(|&&s| s > RANK_TOL * s1).count(),
            _ => 0,
        }
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.norm_squared()
    }
}

/// Rows `D²G(r_n, z) q_n` for every receiver, as an `N × 3` matrix.
pub fn receiver_steering(receivers: &[Sensor], z: &Point3) -> Result<DMatrix<f64>> {
    steering(receivers, z, SensorRole::Receiver)
}

/// Rows `D²G(z, s_m) p_m` for every source, as an `M × 3` matrix.
pub fn source_steering(sources: &[Sensor], z: &Point3) -> Result<DMatrix<f64>> {
    steering(sources, z, SensorRole::Source)
}

fn steering(sensors: &[Sensor], z: &Point3, role: SensorRole) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(sensors.len(), 3);
    for (index, sensor) in sensors.iter().enumerate() {
        let h = green_hessian(&sensor.position, z).map_err(|err| match err {
            Error::CoincidentPoints { .. } => Error::SensorAtInclusion { role, index },
            other => other,
        })?;
        let v = h * sensor.direction.as_ref();
        out.row_mut(index).copy_from(&v.transpose());
    }
    Ok(out)
}

/// Unit-strength kernel `K[n, m] = (D²G(r_n, z) q)ᵀ (D²G(z, s_m) p)`.
pub fn kernel_matrix(array: &SensorArray, z: &Point3) -> Result<DMatrix<f64>> {
    let g = receiver_steering(array.receivers(), z)?;
    let h = source_steering(array.sources(), z)?;
    Ok(g * h.transpose())
}

/// `q·(H_α − H₀)(x)` for a dipole at `s` along `p` and a sphere inclusion:
/// `i k α⁵ 𝓜 (D²G(x, z) q)ᵀ (D²G(z, s) p)`.
pub fn sphere_perturbation(
    x: &Point3,
    s: &Point3,
    p: &Direction,
    q: &Direction,
    incl: &InclusionModel,
    pol: &Polarization,
) -> Result<Complex64> {
    let m = pol.sphere_coefficient()?;
    let z = &incl.center;
    let at_x = green_hessian(x, z)? * q.as_ref();
    let at_s = green_hessian(z, s)? * p.as_ref();
    Ok(Complex64::i() * incl.amplitude() * m * at_x.dot(&at_s))
}

/// Perturbation `H_α(x) − H₀(x)` of an arbitrarily shaped inclusion for a
/// background field with value `h0_at_z` at the inclusion center:
///
/// ```text
/// iνα³ Σ_{l,l′} (D²G(x, z))_{ll′} 𝕄^(l,l′) H₀(z) + α³ D²G(x, z) T H₀(z)
/// ```
pub fn general_perturbation(
    x: &Point3,
    incl: &InclusionModel,
    tensors: &TensorPolarization,
    h0_at_z: &Vec3,
) -> Result<Vector3<Complex64>> {
    let hess = green_hessian(x, &incl.center)?;
    let h0 = h0_at_z.map(Complex64::from);
    let mut conductive = Vector3::<Complex64>::zeros();
    for l in 0..3 {
        for lp in 0..3 {
            conductive += tensors.conductivity[l][lp] * h0 * Complex64::from(hess[(l, lp)]);
        }
    }
    let alpha3 = incl.radius.powi(3);
    let nu = incl.derived().nu;
    let magnetic = (hess * tensors.magnetic * h0_at_z * alpha3).map(Complex64::from);
    Ok(conductive * Complex64::new(0.0, nu * alpha3) + magnetic)
}

/// Perturbation vector at `x` for either polarization description.
pub fn field_perturbation(
    x: &Point3,
    incl: &InclusionModel,
    pol: &Polarization,
    h0_at_z: &Vec3,
) -> Result<Vector3<Complex64>> {
    match pol {
        Polarization::Sphere { m } => {
            let v = green_hessian(x, &incl.center)? * h0_at_z;
            let scale = Complex64::i() * incl.amplitude() * m;
            Ok(v.map(|c| scale * c))
        }
        Polarization::Tensor(t) => general_perturbation(x, incl, t, h0_at_z),
    }
}

/// Imaginary-part response matrix `A₀[n, m] = Im(q_n · H_α^(m)(r_n))`.
pub fn response_matrix(
    array: &SensorArray,
    incl: &InclusionModel,
    pol: &Polarization,
) -> Result<ResponseMatrix> {
    let z = &incl.center;
    match pol {
        Polarization::Sphere { m } => {
            let kernel = kernel_matrix(array, z)?;
            Ok(ResponseMatrix::new(kernel * (incl.amplitude() * m.re)))
        }
        Polarization::Tensor(t) => {
            let h = source_steering(array.sources(), z)?;
            // validates the receivers with their indices
            receiver_steering(array.receivers(), z)?;
            let mut data = DMatrix::zeros(array.n(), array.m());
            for (ni, rec) in array.receivers().iter().enumerate() {
                for mi in 0..array.m() {
                    let h0 = Vec3::new(h[(mi, 0)], h[(mi, 1)], h[(mi, 2)]);
                    let dh = general_perturbation(&rec.position, incl, t, &h0)?;
                    let q = rec.direction.map(Complex64::from);
                    data[(ni, mi)] = dh.dot(&q).im;
                }
            }
            Ok(ResponseMatrix::new(data))
        }
    }
}

/// Component-wise singular value estimates
/// `σ_j = kα⁵|Re 𝓜| ‖(h_m)_j‖ ‖(g_n)_j‖`, j = 1, 2, 3 (in component order,
/// not sorted).
///
/// Exact only when the three source-side and the three receiver-side
/// component vectors are each mutually orthogonal; otherwise a diagnostic.
pub fn closed_form_singular_values(
    array: &SensorArray,
    incl: &InclusionModel,
    pol: &Polarization,
) -> Result<[f64; 3]> {
    let m = pol.sphere_coefficient()?;
    let g = receiver_steering(array.receivers(), &incl.center)?;
    let h = source_steering(array.sources(), &incl.center)?;
    let scale = incl.amplitude() * m.re.abs();
    Ok(std::array::from_fn(|j| scale * h.column(j).norm() * g.column(j).norm()))
}
