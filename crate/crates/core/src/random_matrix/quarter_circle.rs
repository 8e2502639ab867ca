use std::f64::consts::PI;

use super::quadrature::GaussLegendre;
use crate::{Error, Result};

/// Deformed quarter-circle law: limiting distribution of the singular values
/// of an `N × M` matrix with i.i.d. entries of variance `σ_n²/M`, `γ = N/M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuarterCircleLaw {
    pub gamma: f64,
    pub sigma_n: f64,
}

impl QuarterCircleLaw {
    pub fn new(gamma: f64, sigma_n: f64) -> Result<Self> {
        if !(gamma >= 1.0 && gamma.is_finite()) {
            return Err(Error::InvalidInput(format!("aspect ratio must be >= 1, got {gamma}")));
        }
        if !(sigma_n > 0.0 && sigma_n.is_finite()) {
            return Err(Error::InvalidInput(format!("noise level must be positive, got {sigma_n}")));
        }
        Ok(Self { gamma, sigma_n })
    }

    /// `[σ_n(√γ − 1), σ_n(√γ + 1)]`.
    pub fn support(&self) -> (f64, f64) {
        let r = self.gamma.sqrt();
        (self.sigma_n * (r - 1.0), self.sigma_n * (r + 1.0))
    }

    /// Standardized density
    /// `ρ_γ(s) = √(((√γ+1)² − s²)(s² − (√γ−1)²)) / (πs)` on `(√γ−1, √γ+1]`.
    pub fn standard_density(gamma: f64, s: f64) -> f64 {
        let r = gamma.sqrt();
        let (lo, hi) = (r - 1.0, r + 1.0);
        if !(s > lo && s <= hi) || s <= 0.0 {
            return 0.0;
        }
        let prod = (hi * hi - s * s) * (s * s - lo * lo);
        if prod <= 0.0 {
            0.0
        } else {
            prod.sqrt() / (PI * s)
        }
    }

    /// Density at singular value `sigma`: `(1/σ_n) ρ_γ(σ/σ_n)`.
    pub fn density(&self, sigma: f64) -> f64 {
        Self::standard_density(self.gamma, sigma / self.sigma_n) / self.sigma_n
    }

    /// Integrated law `Λ([0, sigma])`.
    ///
    /// With `t = s²` and `t = (γ+1) − 2√γ cos θ` the integrand
    /// `√((b−t)(t−a)) / (2πt) dt` becomes smooth in `θ`, so a fixed
    /// Gauss-Legendre rule is accurate to rounding.
    pub fn cdf(&self, sigma: f64) -> f64 {
        let (lo, hi) = self.support();
        if sigma <= lo {
            return 0.0;
        }
        if sigma >= hi {
            return 1.0;
        }
        let s = sigma / self.sigma_n;
        let r = self.gamma.sqrt();
        let half = 2.0 * r;
        let theta_end = ((self.gamma + 1.0 - s * s) / half).clamp(-1.0, 1.0).acos();
        let gl = GaussLegendre::new(64);
        let v = gl.integrate(0.0, theta_end, |th| {
            let sin = th.sin();
            let sin_half = (0.5 * th).sin();
            // t = (√γ − 1)² + 4√γ sin²(θ/2), free of cancellation at θ → 0
            let t = (r - 1.0).powi(2) + 2.0 * half * sin_half * sin_half;
            half * half * sin * sin / (2.0 * PI * t)
        });
        v.clamp(0.0, 1.0)
    }
}
