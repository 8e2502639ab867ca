//! Noisy measurement of a response matrix.
//!
//! *Standard* acquisition fires one source at a time and records
//! `A₀ + W` with i.i.d. `N(0, σ_n²)` entries. *Hadamard* acquisition fires
//! every source in each of `M` experiments with the sign pattern of a row of a
//! Hadamard matrix `H`, records `B = A₀Hᵀ + W`, and decodes
//! `A_meas = B H / M = A₀ + W H / M`. The decoded noise is again white but
//! with variance `σ_n² / M`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::forward::ResponseMatrix;
use crate::rng::stream_rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Per-measurement noise standard deviation.
    pub sigma_n: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(sigma_n: f64, seed: u64) -> Result<Self> {
        if !(sigma_n >= 0.0 && sigma_n.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "noise level must be finite and nonnegative, got {sigma_n}"
            )));
        }
        Ok(Self { sigma_n, seed })
    }
}

/// Sylvester Hadamard matrix with `±1` entries and `HᵀH = M·I`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HadamardMatrix {
    entries: DMatrix<i32>,
}

impl HadamardMatrix {
    pub fn order(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<i32> {
        &self.entries
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        self.entries.map(f64::from)
    }

    /// Checks `HᵀH = M·I` in integer arithmetic.
    pub fn is_orthogonal(&self) -> bool {
        let m = self.order() as i32;
        let gram = self.entries.transpose() * &self.entries;
        gram == DMatrix::identity(self.order(), self.order()) * m
    }
}

/// Sylvester construction: `H_1 = [1]`, `H_2k = [[H, H], [H, −H]]`.
pub fn hadamard(order: usize) -> Result<HadamardMatrix> {
    if !order.is_power_of_two() {
        return Err(Error::UnsupportedOrder(order));
    }
    let mut h = DMatrix::from_element(1, 1, 1i32);
    while h.nrows() < order {
        let k = h.nrows();
        let mut next = DMatrix::zeros(2 * k, 2 * k);
        next.view_mut((0, 0), (k, k)).copy_from(&h);
        next.view_mut((0, k), (k, k)).copy_from(&h);
        next.view_mut((k, 0), (k, k)).copy_from(&h);
        next.view_mut((k, k), (k, k)).copy_from(&(-&h));
        h = next;
    }
    Ok(HadamardMatrix { entries: h })
}

/// `nrows × ncols` matrix of i.i.d. `N(0, sigma²)` draws.
pub fn gaussian_matrix<R: Rng + ?Sized>(nrows: usize, ncols: usize, sigma: f64, rng: &mut R) -> DMatrix<f64> {
    // column-major fill order is part of the reproducibility contract
    DMatrix::from_fn(nrows, ncols, |_, _| sigma * rng.sample::<f64, _>(StandardNormal))
}

/// `A₀ + W` with `W` drawn from `rng`.
pub fn acquire_standard_with<R: Rng + ?Sized>(a0: &ResponseMatrix, sigma_n: f64, rng: &mut R) -> ResponseMatrix {
    let noise = gaussian_matrix(a0.n(), a0.m(), sigma_n, rng);
    ResponseMatrix::new(a0.data() + noise)
}

/// `(A₀Hᵀ + W) H / M` with `W` drawn from `rng`.
pub fn acquire_hadamard_with<R: Rng + ?Sized>(
    a0: &ResponseMatrix,
    hadamard: &HadamardMatrix,
    sigma_n: f64,
    rng: &mut R,
) -> Result<ResponseMatrix> {
    if hadamard.order() != a0.m() {
        return Err(Error::InvalidInput(format!(
            "Hadamard order {} does not match {} sources",
            hadamard.order(),
            a0.m()
        )));
    }
    let h = hadamard.to_f64();
    let coded = a0.data() * h.transpose() + gaussian_matrix(a0.n(), a0.m(), sigma_n, rng);
    let decoded = coded * h / a0.m() as f64;
    Ok(ResponseMatrix::new(decoded))
}

/// Standard acquisition; reproducible from `noise.seed`.
pub fn acquire_standard(a0: &ResponseMatrix, noise: &NoiseModel) -> ResponseMatrix {
    acquire_standard_with(a0, noise.sigma_n, &mut stream_rng(noise.seed, 0))
}

/// Hadamard acquisition; the number of sources must be a power of two.
pub fn acquire_hadamard(a0: &ResponseMatrix, noise: &NoiseModel) -> Result<ResponseMatrix> {
    let h = hadamard(a0.m())?;
    acquire_hadamard_with(a0, &h, noise.sigma_n, &mut stream_rng(noise.seed, 0))
}
