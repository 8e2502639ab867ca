//! Tracy-Widom distribution of type 1 from the Hastings-McLeod solution of
//! Painlevé II.
//!
//! With `φ'' = xφ + 2φ³`, `φ(x) ~ Ai(x)` as `x → ∞`,
//!
//! ```text
//! F₁(z) = exp(-½ ∫_z^∞ φ(x) + (x − z) φ(x)² dx).
//! ```
//!
//! Writing `I₀ = ∫_z^∞ φ`, `I₁ = ∫_z^∞ φ²`, `I₂ = ∫_z^∞ xφ²` turns the CDF into
//! `exp(-½(I₀ + I₂ − z I₁))` and its density into `F₁ · ½(φ(z) + I₁(z))`; the
//! three integrals are carried as extra ODE components.
//!
//! The separatrix is unstable when integrated towards `-∞` (perturbations
//! grow like `exp(0.94|x|^{3/2})`), so below `PII_MATCH_X` the solution is
//! continued with its large-negative-`x` expansion while the integrals keep
//! being accumulated by the ODE solver.

use std::io::{BufRead, Write};
use std::sync::OnceLock;

use super::airy::airy_ai_asymptotic;
use super::ode::{integrate_dopri5, OdeOptions};
use crate::{Error, Result};

pub const TW_TABLE_VERSION: &str = "tw1-table/1";

const X_START: f64 = 8.0;
const Z_MIN: f64 = -10.0;
const PII_MATCH_X: f64 = -6.0;
/// Table spacing (exact in binary).
const STEP: f64 = 1.0 / 128.0;
const RTOL: f64 = 1e-12;
const QUANTILE_P_MIN: f64 = 1e-6;

/// Tabulated CDF and density of the TW1 law on `[z_min, z_max]` with
/// monotone cubic interpolation between nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TracyWidomTable {
    z: Vec<f64>,
    cdf: Vec<f64>,
    pdf: Vec<f64>,
    /// Hermite slopes after the monotonicity limiter.
    slopes: Vec<f64>,
    rtol: f64,
}

/// Shared table, built on first use.
pub fn tw1_table() -> &'static TracyWidomTable {
    static TABLE: OnceLock<TracyWidomTable> = OnceLock::new();
    TABLE.get_or_init(|| TracyWidomTable::build().expect("Tracy-Widom table construction"))
}

/// Hastings-McLeod asymptotics for `x → -∞`.
fn hastings_mcleod_negative(x: f64) -> f64 {
    let x3 = x * x * x;
    let series = 1.0 + 1.0 / (8.0 * x3) - 73.0 / (128.0 * x3 * x3) + 10657.0 / (1024.0 * x3 * x3 * x3)
        - 13912277.0 / (32768.0 * x3 * x3 * x3 * x3);
    (-x / 2.0).sqrt() * series
}

impl TracyWidomTable {
    pub fn build() -> Result<Self> {
        let n_nodes = ((X_START - Z_MIN) / STEP).round() as usize + 1;
        let nodes: Vec<f64> = (0..n_nodes).map(|i| X_START - i as f64 * STEP).collect();
        let split = nodes
            .iter()
            .position(|&x| x <= PII_MATCH_X)
            .expect("match point inside table");

        let (ai, aip) = airy_ai_asymptotic(X_START)?;
        // Tails beyond X_START with φ = Ai: ∫Ai² = Ai'² − x Ai²,
        // ∫ t Ai² = (x Ai'² − x² Ai² − Ai Ai')/3; ∫Ai ≈ Ai/√x to leading
        // order (its error is ~1e-9 absolute and does not show in F₁).
        let x = X_START;
        let i0 = ai / x.sqrt();
        let i1 = aip * aip - x * ai * ai;
        let i2 = (x * aip * aip - x * x * ai * ai - ai * aip) / 3.0;

        let opts = OdeOptions {
            rtol: RTOL,
            atol: [0.0, 0.0, 1e-15, 1e-15, 1e-15],
            initial_step: 1e-3,
            ..OdeOptions::default()
        };
        let upper = integrate_dopri5(
            |x, y: &[f64; 5]| {
                let (phi, dphi) = (y[0], y[1]);
                let phi2 = phi * phi;
                [dphi, x * phi + 2.0 * phi2 * phi, -phi, -phi2, -x * phi2]
            },
            &nodes[..=split],
            [ai, aip, i0, i1, i2],
            &opts,
        )?;

        let last = upper[split];
        let lower = integrate_dopri5(
            |x, _: &[f64; 3]| {
                let phi = hastings_mcleod_negative(x);
                [-phi, -phi * phi, -x * phi * phi]
            },
            &nodes[split..],
            [last[2], last[3], last[4]],
            &OdeOptions {
                rtol: RTOL,
                atol: [1e-15; 3],
                initial_step: 1e-3,
                ..OdeOptions::default()
            },
        )?;

        let mut rows: Vec<(f64, f64, f64)> = Vec::with_capacity(n_nodes);
        let mut push = |z: f64, phi: f64, i0: f64, i1: f64, i2: f64| {
            let log_f = -0.5 * (i0 + i2 - z * i1);
            let f = log_f.exp();
            rows.push((z, f, 0.5 * f * (phi + i1)));
        };
        for (i, y) in upper.iter().enumerate().take(split) {
            push(nodes[i], y[0], y[2], y[3], y[4]);
        }
        for (j, y) in lower.iter().enumerate() {
            let z = nodes[split + j];
            push(z, hastings_mcleod_negative(z), y[0], y[1], y[2]);
        }
        rows.reverse();
        if rows.iter().any(|r| !r.1.is_finite() || !r.2.is_finite()) {
            return Err(Error::Integration("non-finite Tracy-Widom table entry".into()));
        }
        Ok(Self::from_columns(
            rows.iter().map(|r| r.0).collect(),
            rows.iter().map(|r| r.1).collect(),
            rows.iter().map(|r| r.2).collect(),
            RTOL,
        ))
    }

    fn from_columns(z: Vec<f64>, cdf: Vec<f64>, pdf: Vec<f64>, rtol: f64) -> Self {
        let slopes = limited_slopes(&z, &cdf, &pdf);
        Self {
            z,
            cdf,
            pdf,
            slopes,
            rtol,
        }
    }

    pub fn z_range(&self) -> (f64, f64) {
        (self.z[0], *self.z.last().unwrap())
    }

    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.z
            .iter()
            .zip(&self.cdf)
            .zip(&self.pdf)
            .map(|((&z, &c), &p)| (z, c, p))
    }

    fn cell(&self, z: f64) -> usize {
        match self.z.binary_search_by(|v| v.total_cmp(&z)) {
            Ok(i) => i.min(self.z.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.z.len() - 2),
        }
    }

    fn hermite(&self, i: usize, z: f64) -> f64 {
        let h = self.z[i + 1] - self.z[i];
        let t = (z - self.z[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.cdf[i] + h10 * h * self.slopes[i] + h01 * self.cdf[i + 1] + h11 * h * self.slopes[i + 1]
    }

    /// `P(Z₁ ≤ z)`; clamped to the end values outside the table.
    pub fn cdf(&self, z: f64) -> f64 {
        let (lo, hi) = self.z_range();
        if z <= lo {
            return self.cdf[0];
        }
        if z >= hi {
            return *self.cdf.last().unwrap();
        }
        self.hermite(self.cell(z), z)
    }

    /// Density, linearly interpolated between nodes.
    pub fn pdf(&self, z: f64) -> f64 {
        let (lo, hi) = self.z_range();
        if z < lo || z > hi {
            return 0.0;
        }
        let i = self.cell(z);
        let t = (z - self.z[i]) / (self.z[i + 1] - self.z[i]);
        (1.0 - t) * self.pdf[i] + t * self.pdf[i + 1]
    }

    /// Inverse CDF for `p ∈ (1e-6, 1 − 1e-6)`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > QUANTILE_P_MIN && p < 1.0 - QUANTILE_P_MIN) {
            return Err(Error::OutOfRange {
                what: "Tracy-Widom probability",
                value: p,
                range: format!("({QUANTILE_P_MIN}, {})", 1.0 - QUANTILE_P_MIN),
            });
        }
        let i = match self.cdf.binary_search_by(|v| v.total_cmp(&p)) {
            Ok(i) => return Ok(self.z[i]),
            Err(0) => return Ok(self.z[0]),
            Err(i) if i >= self.cdf.len() => return Ok(*self.z.last().unwrap()),
            Err(i) => i - 1,
        };
        let (mut a, mut b) = (self.z[i], self.z[i + 1]);
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if self.hermite(i, m) < p {
                a = m;
            } else {
                b = m;
            }
            if b - a < 1e-14 {
                break;
            }
        }
        Ok(0.5 * (a + b))
    }

    /// `∫ z^k p(z) dz` over the table: composite Simpson on pairs of cells,
    /// trapezoid on a leftover cell. Assumes roughly uniform spacing.
    fn moment(&self, k: i32) -> f64 {
        let f = |i: usize| self.z[i].powi(k) * self.pdf[i];
        let cells = self.z.len() - 1;
        let mut total = 0.0;
        let mut i = 0;
        while i + 2 <= cells {
            let h = (self.z[i + 2] - self.z[i]) / 2.0;
            total += h / 3.0 * (f(i) + 4.0 * f(i + 1) + f(i + 2));
            i += 2;
        }
        if i < cells {
            total += 0.5 * (self.z[i + 1] - self.z[i]) * (f(i) + f(i + 1));
        }
        total
    }

    pub fn total_mass(&self) -> f64 {
        self.moment(0)
    }

    pub fn mean(&self) -> f64 {
        self.moment(1) / self.moment(0)
    }

    pub fn variance(&self) -> f64 {
        let m0 = self.moment(0);
        let mean = self.moment(1) / m0;
        self.moment(2) / m0 - mean * mean
    }

    pub fn is_monotone(&self) -> bool {
        self.cdf.windows(2).all(|w| w[1] >= w[0]) && self.pdf.iter().all(|&p| p >= 0.0)
    }

    /// Writes the versioned CSV: one metadata comment, a `z,cdf,pdf` header,
    /// then one row per node with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let (lo, hi) = self.z_range();
        writeln!(
            out,
            "# {TW_TABLE_VERSION} x_start={X_START} z_min={lo} z_max={hi} step={STEP} rtol={:e} painleve_match_x={PII_MATCH_X}",
            self.rtol
        )?;
        writeln!(out, "z,cdf,pdf")?;
        for (z, c, p) in self.nodes() {
            writeln!(out, "{z:.16e},{c:.16e},{p:.16e}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let tag = format!("# {TW_TABLE_VERSION} ");
        // other comment lines (e.g. provenance written by a caller) may precede the tag
        let meta = loop {
            let line = lines
                .next()
                .transpose()
                .map_err(|e| Error::Table(e.to_string()))?
                .ok_or_else(|| Error::Table(format!("no `{}` line", tag.trim())))?;
            if line.starts_with(&tag) {
                break line;
            }
            if !line.starts_with('#') {
                return Err(Error::Table(format!("unsupported table header: {line}")));
            }
        };
        let rtol = meta
            .split_whitespace()
            .find_map(|kv| kv.strip_prefix("rtol="))
            .and_then(|v| v.parse().ok())
            .unwrap_or(RTOL);
        let header = lines.next().transpose().map_err(|e| Error::Table(e.to_string()))?;
        if header.as_deref() != Some("z,cdf,pdf") {
            return Err(Error::Table("missing z,cdf,pdf header".into()));
        }
        let (mut z, mut cdf, mut pdf) = (Vec::new(), Vec::new(), Vec::new());
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::Table(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Table(format!("row {}: {e}", lineno + 1)))?;
            if vals.len() != 3 {
                return Err(Error::Table(format!("row {}: expected 3 columns", lineno + 1)));
            }
            z.push(vals[0]);
            cdf.push(vals[1]);
            pdf.push(vals[2]);
        }
        if z.len() < 2 || z.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Table("z column must be strictly increasing with >= 2 rows".into()));
        }
        Ok(Self::from_columns(z, cdf, pdf, rtol))
    }
}

/// Fritsch-Carlson limiter applied to the exact density slopes so that the
/// Hermite interpolant of the CDF stays monotone.
fn limited_slopes(z: &[f64], cdf: &[f64], pdf: &[f64]) -> Vec<f64> {
    let mut m: Vec<f64> = pdf.iter().map(|&p| p.max(0.0)).collect();
    for i in 0..z.len() - 1 {
        let delta = (cdf[i + 1] - cdf[i]) / (z[i + 1] - z[i]);
        if delta <= 0.0 {
            m[i] = 0.0;
            m[i + 1] = 0.0;
            continue;
        }
        let a = m[i] / delta;
        let b = m[i + 1] / delta;
        let s = a * a + b * b;
        if s > 9.0 {
            let tau = 3.0 / s.sqrt();
            m[i] = tau * a * delta;
            m[i + 1] = tau * b * delta;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tails() {
        let t = tw1_table();
        assert!(t.cdf(-10.0) < 1e-6);
        assert!(t.is_monotone());
        // Right tail: 1 − F₁(s) ≈ ½∫_s^∞ Ai ≈ e^{−ζ} / (4√π s^{3/4}),
        // ζ = (2/3)s^{3/2}. The exact value at s = 6 is about 1.9e-6.
        for s in [6.0f64, 7.0, 7.5] {
            let zeta = 2.0 / 3.0 * s.powf(1.5);
            let approx = (-zeta).exp() / (4.0 * std::f64::consts::PI.sqrt() * s.powf(0.75));
            let tail = 1.0 - t.cdf(s);
            assert!((tail / approx - 1.0).abs() < 0.1, "s = {s}: {tail} vs {approx}");
        }
        assert!(1.0 - t.cdf(6.0) < 1e-5);
        assert!(1.0 - t.cdf(8.0) < 1e-8);
    }

    #[test]
    fn reference_quantiles() {
        let t = tw1_table();
        for (p, z) in [(0.9, 0.45), (0.95, 0.98), (0.99, 2.02)] {
            let q = t.quantile(p).unwrap();
            assert!((q - z).abs() < 0.02, "quantile({p}) = {q}");
        }
    }

    #[test]
    fn moments() {
        let t = tw1_table();
        assert!((t.total_mass() - 1.0).abs() < 1e-5, "mass {}", t.total_mass());
        assert!((t.mean() + 1.21).abs() < 0.02, "mean {}", t.mean());
        assert!((t.variance() - 1.61).abs() < 0.03, "variance {}", t.variance());
    }

    #[test]
    fn quantile_inverts_cdf() {
        let t = tw1_table();
        for p in [0.001, 0.05, 0.5, 0.95, 0.999] {
            let z = t.quantile(p).unwrap();
            assert!((t.cdf(z) - p).abs() < 1e-4);
        }
        assert!(t.quantile(1e-7).is_err());
        assert!(t.quantile(1.0).is_err());
        assert!(t.quantile(f64::NAN).is_err());
    }

    #[test]
    fn interpolant_is_monotone() {
        let t = tw1_table();
        let mut prev = 0.0;
        let mut z = -10.0;
        while z <= 8.0 {
            let c = t.cdf(z);
            assert!(c >= prev, "cdf decreases at {z}");
            prev = c;
            z += 0.001;
        }
    }

    #[test]
    fn hastings_mcleod_branch_matches_asymptotics() {
        // at x = -10 the solution should sit on √5 (1 − 1/8000 + …)
        let phi = hastings_mcleod_negative(-10.0);
        assert!((phi / (5f64.sqrt() * (1.0 - 1.0 / 8000.0)) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn csv_round_trip() {
        let t = tw1_table();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = TracyWidomTable::read_csv(buf.as_slice()).unwrap();
        assert_eq!(&back, t);
        assert!(TracyWidomTable::read_csv("z,cdf,pdf\n".as_bytes()).is_err());
    }
}
