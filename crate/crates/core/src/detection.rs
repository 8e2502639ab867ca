//! Random-matrix detection test.
//!
//! The statistic compares the top singular value with the root-mean-square
//! of the bulk (indices 4..M, past the three possible spikes):
//!
//! ```text
//! R = σ₁ / sqrt( Σ_{j≥4} σ_j² / (M − 3(1 + γ^{-1/2})²) )
//! ```
//!
//! Under noise only, `R ≈ 1 + γ^{-1/2} + scale · Z₁` with `Z₁ ~ TW1`, which
//! gives the Neyman-Pearson threshold `r_δ`. An alarm is raised when
//! `R > r_δ` (strict; a tie is no alarm).

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::acquisition::{acquire_hadamard_with, gaussian_matrix, hadamard};
use crate::forward::ResponseMatrix;
use crate::random_matrix::{spiked_prediction, SpikeRegime, TracyWidomTable};
use crate::rng::stream_rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionOutcome {
    pub r: f64,
    pub r_delta: f64,
    pub decision: bool,
    pub delta: f64,
    pub sigma1: f64,
}

/// How noisy matrices are generated in Monte Carlo POD estimates.
///
/// Both produce white noise of variance `σ_n²/M` around `A₀`, the scale the
/// limiting laws are written in. `Direct` samples it; `Hadamard` simulates
/// the multiplexed acquisition with per-measurement noise `σ_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AcquisitionMode {
    #[default]
    Direct,
    Hadamard,
}

/// Empirical detection probability with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PodEstimate {
    pub delta: f64,
    pub pod: f64,
    pub stderr: f64,
    pub trials: usize,
}

fn bulk_dof(m: usize, gamma: f64) -> f64 {
    m as f64 - 3.0 * (1.0 + gamma.powf(-0.5)).powi(2)
}

/// Ratio statistic from singular values in descending order; `M` is the
/// length of the list.
pub fn ratio_statistic(singular_values: &[f64], gamma: f64) -> Result<f64> {
    let m = singular_values.len();
    if m < 5 {
        return Err(Error::InvalidInput(format!("ratio statistic needs M >= 5, got {m}")));
    }
    if !(gamma >= 1.0) {
        return Err(Error::InvalidInput(format!("aspect ratio must be >= 1, got {gamma}")));
    }
    let dof = bulk_dof(m, gamma);
    if dof <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "M = {m} too small for the bulk normalization (M − 3(1+γ^-1/2)² = {dof})"
        )));
    }
    let tail: f64 = singular_values[3..].iter().map(|s| s * s).sum();
    if !(tail > 0.0) {
        return Err(Error::Degenerate(
            "singular values beyond the third are all zero".into(),
        ));
    }
    Ok(singular_values[0] / (tail / dof).sqrt())
}

/// Neyman-Pearson threshold `r_δ` for false-alarm rate `delta`.
pub fn threshold(delta: f64, m: usize, gamma: f64, tw: &TracyWidomTable) -> Result<f64> {
    let z = tw.quantile(1.0 - delta)?;
    let g = gamma.powf(-0.5);
    let scale = g * (1.0 + g).cbrt() / (2.0 * (m as f64).powf(2.0 / 3.0));
    Ok(1.0 + g + scale * z)
}

/// Asymptotic detection probability for a signal of strength `sigma1_a0`.
/// Equals `delta` in the subcritical regime.
pub fn pod_theoretical(
    sigma1_a0: f64,
    sigma_n: f64,
    gamma: f64,
    m: usize,
    delta: f64,
    tw: &TracyWidomTable,
) -> Result<f64> {
    let r_delta = threshold(delta, m, gamma, tw)?;
    let spike = spiked_prediction(sigma1_a0, sigma_n, gamma);
    if spike.regime == SpikeRegime::Subcritical {
        return Ok(delta);
    }
    let arg = (m as f64).sqrt() * (sigma1_a0 * spike.alpha / sigma_n - gamma.sqrt() * r_delta)
        / spike.beta.sqrt();
    Ok(Normal::standard().cdf(arg).max(delta))
}

/// Alarm rule: strictly above the threshold.
pub fn decide(r: f64, r_delta: f64) -> bool {
    r > r_delta
}

/// Runs the test on a measured matrix.
pub fn detect(a_meas: &ResponseMatrix, delta: f64, tw: &TracyWidomTable) -> Result<DetectionOutcome> {
    let gamma = a_meas.n() as f64 / a_meas.m() as f64;
    let sv = a_meas.singular_values();
    let r = ratio_statistic(sv, gamma)?;
    let r_delta = threshold(delta, a_meas.m(), gamma, tw)?;
    Ok(DetectionOutcome {
        r,
        r_delta,
        decision: decide(r, r_delta),
        delta,
        sigma1: sv[0],
    })
}

/// Ratio statistic of `trials` independent noisy copies of `a0`; trial `i`
/// draws from stream `i` of `master_seed`, so the result does not depend on
/// scheduling.
pub fn monte_carlo_statistics(
    a0: &ResponseMatrix,
    sigma_n: f64,
    trials: usize,
    master_seed: u64,
    mode: AcquisitionMode,
) -> Result<Vec<f64>> {
    let (n, m) = (a0.n(), a0.m());
    if n < m {
        return Err(Error::InvalidInput(format!("need N >= M, got {n} x {m}")));
    }
    let gamma = n as f64 / m as f64;
    let h = match mode {
        AcquisitionMode::Hadamard => Some(hadamard(m)?),
        AcquisitionMode::Direct => None,
    };
    let entry_sigma = sigma_n / (m as f64).sqrt();
    (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream_rng(master_seed, trial);
            let noisy = match &h {
                Some(h) => acquire_hadamard_with(a0, h, sigma_n, &mut rng)?,
                None => ResponseMatrix::new(a0.data() + gaussian_matrix(n, m, entry_sigma, &mut rng)),
            };
            ratio_statistic(noisy.singular_values(), gamma)
        })
        .collect()
}

/// Fraction of statistics above `r_δ` for each `delta`, sharing trials.
pub fn pod_from_statistics(
    stats: &[f64],
    deltas: &[f64],
    m: usize,
    gamma: f64,
    tw: &TracyWidomTable,
) -> Result<Vec<PodEstimate>> {
    if stats.is_empty() {
        return Err(Error::InvalidInput("at least one trial is required".into()));
    }
    let trials = stats.len();
    deltas
        .iter()
        .map(|&delta| {
            let r_delta = threshold(delta, m, gamma, tw)?;
            let hits = stats.iter().filter(|&&r| decide(r, r_delta)).count();
            let pod = hits as f64 / trials as f64;
            Ok(PodEstimate {
                delta,
                pod,
                stderr: (pod * (1.0 - pod) / trials as f64).sqrt(),
                trials,
            })
        })
        .collect()
}

/// Monte Carlo detection probability at several false-alarm levels.
pub fn pod_empirical_multi(
    a0: &ResponseMatrix,
    sigma_n: f64,
    deltas: &[f64],
    trials: usize,
    master_seed: u64,
    mode: AcquisitionMode,
    tw: &TracyWidomTable,
) -> Result<Vec<PodEstimate>> {
    let stats = monte_carlo_statistics(a0, sigma_n, trials, master_seed, mode)?;
    pod_from_statistics(&stats, deltas, a0.m(), a0.n() as f64 / a0.m() as f64, tw)
}

/// Monte Carlo detection probability with direct `σ_n²/M` noise.
pub fn pod_empirical(
    a0: &ResponseMatrix,
    sigma_n: f64,
    delta: f64,
    trials: usize,
    master_seed: u64,
    tw: &TracyWidomTable,
) -> Result<PodEstimate> {
    let mut out = pod_empirical_multi(a0, sigma_n, &[delta], trials, master_seed, AcquisitionMode::Direct, tw)?;
    Ok(out.remove(0))
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    use super::*;
    use crate::random_matrix::tw1_table;

    #[test]
    fn equal_singular_values() {
        let sv = vec![3.0; 256];
        let r = ratio_statistic(&sv, 1.0).unwrap();
        assert!((r - (244.0f64 / 253.0).sqrt()).abs() < 1e-14);
        assert!((r - 0.9821).abs() < 1e-4);
    }

    #[test]
    fn rank_three_input_is_degenerate() {
        let mut sv = vec![0.0; 64];
        sv[..3].copy_from_slice(&[3.0, 2.0, 1.0]);
        assert!(matches!(ratio_statistic(&sv, 1.0), Err(Error::Degenerate(_))));
        assert!(ratio_statistic(&[1.0; 4], 1.0).is_err());
        // M − 12 must be positive for γ = 1
        assert!(ratio_statistic(&[1.0; 12], 1.0).is_err());
        assert!(ratio_statistic(&[1.0; 13], 1.0).is_ok());
    }

    #[test]
    fn threshold_values() {
        let tw = tw1_table();
        let r05 = threshold(0.05, 256, 1.0, tw).unwrap();
        let r01 = threshold(0.01, 256, 1.0, tw).unwrap();
        assert!((r05 - 2.0153).abs() < 5e-4, "{r05}");
        assert!((r01 - 2.0316).abs() < 5e-4, "{r01}");
        let far = threshold(0.05, 1 << 40, 4.0, tw).unwrap();
        assert!((far - 1.5).abs() < 1e-7);
        assert!(threshold(0.0, 256, 1.0, tw).is_err());
    }

    #[test]
    fn pod_limits() {
        let tw = tw1_table();
        assert_eq!(pod_theoretical(0.9, 1.0, 1.0, 256, 0.05, tw).unwrap(), 0.05);
        assert_eq!(pod_theoretical(1.0, 1.0, 1.0, 256, 0.05, tw).unwrap(), 0.05);
        assert!(pod_theoretical(50.0, 1.0, 1.0, 256, 0.01, tw).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn ties_are_no_alarm() {
        assert!(!decide(2.0153, 2.0153));
        assert!(decide(2.0153 + 1e-15, 2.0153));
        let tw = tw1_table();
        let a = ResponseMatrix::new(DMatrix::from_fn(64, 64, |i, j| if i == j { 1.0 } else { 0.0 }));
        let out = detect(&a, 0.05, tw).unwrap();
        assert_eq!(out.decision, decide(out.r, out.r_delta));
        assert!(!out.decision);
    }

    #[test]
    fn noise_only_statistic_mean() {
        let a0 = ResponseMatrix::new(DMatrix::zeros(256, 256));
        let stats = monte_carlo_statistics(&a0, 1.0, 200, 2024, AcquisitionMode::Direct).unwrap();
        let mean = stats.iter().sum::<f64>() / stats.len() as f64;
        assert!((mean - (2.0 + 0.015625 * -1.21)).abs() < 0.01, "mean R {mean}");
    }

    #[test]
    fn tiny_noise_always_detects() {
        let tw = tw1_table();
        let a0 = ResponseMatrix::new(DMatrix::from_fn(64, 64, |i, j| ((i + 1) * (j + 2)) as f64 * 1e-3));
        let est = pod_empirical(&a0, 1e-9, 0.05, 20, 1, tw).unwrap();
        assert_eq!(est.pod, 1.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn statistics_are_reproducible() {
        let a0 = ResponseMatrix::new(DMatrix::zeros(32, 32));
        for mode in [AcquisitionMode::Direct, AcquisitionMode::Hadamard] {
            let a = monte_carlo_statistics(&a0, 1.0, 16, 9, mode).unwrap();
            let b = monte_carlo_statistics(&a0, 1.0, 16, 9, mode).unwrap();
            assert_eq!(a, b);
        }
    }

    proptest! {
        #[test]
        fn scale_invariance(
            mut sv in proptest::collection::vec(0.01..10.0f64, 20..40),
            c in 1e-6..1e6f64,
        ) {
            sv.sort_by(|a, b| b.total_cmp(a));
            let r = ratio_statistic(&sv, 1.0).unwrap();
            let scaled: Vec<f64> = sv.iter().map(|s| s * c).collect();
            let rs = ratio_statistic(&scaled, 1.0).unwrap();
            prop_assert!((r - rs).abs() <= 1e-12 * r);
        }

        #[test]
        fn pod_is_monotone_and_floored(
            x1 in 0.1..5.0f64,
            dx in 0.0..2.0f64,
            gamma in 1.0..4.0f64,
            di in 0usize..3,
        ) {
            let tw = tw1_table();
            let delta = [0.01, 0.05, 0.1][di];
            let p1 = pod_theoretical(x1, 1.0, gamma, 256, delta, tw).unwrap();
            let p2 = pod_theoretical(x1 + dx, 1.0, gamma, 256, delta, tw).unwrap();
            prop_assert!(p1 >= delta && p2 >= delta);
            prop_assert!(p2 >= p1 - 1e-15);
        }
    }
}
