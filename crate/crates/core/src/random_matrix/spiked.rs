/// Which side of the detachment threshold `σ₁^{A₀} = γ^{1/4} σ_n` a signal
/// lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpikeRegime {
    Subcritical,
    Supercritical,
}

/// Asymptotic behaviour of the top singular value of `A₀ + W`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikedPrediction {
    /// Mean shift factor: `E[σ₁] ≈ σ₁^{A₀} α`.
    pub alpha: f64,
    /// Variance factor: `Var[σ₁] ≈ σ_n² β / M`.
    pub beta: f64,
    pub predicted_sigma1: f64,
    pub regime: SpikeRegime,
}

/// Spiked-model prediction for signal strength `sigma1_a0`, noise level
/// `sigma_n` and aspect ratio `gamma`.
///
/// The regime test is the strict inequality `σ₁^{A₀} > γ^{1/4}σ_n`; at the
/// boundary `β = 0` and the `M^{-4/3}` fluctuations there are not modeled.
pub fn spiked_prediction(sigma1_a0: f64, sigma_n: f64, gamma: f64) -> SpikedPrediction {
    let bulk_edge = sigma_n * (gamma.sqrt() + 1.0);
    let supercritical = sigma1_a0 > gamma.powf(0.25) * sigma_n;
    if sigma1_a0 <= 0.0 {
        return SpikedPrediction {
            alpha: f64::INFINITY,
            beta: 0.0,
            predicted_sigma1: bulk_edge,
            regime: SpikeRegime::Subcritical,
        };
    }
    let r2 = (sigma_n / sigma1_a0).powi(2);
    let denom = 1.0 + (1.0 + gamma) * r2 + gamma * r2 * r2;
    let alpha = denom.sqrt();
    let beta = (1.0 - gamma * r2 * r2) / alpha;
    if supercritical {
        SpikedPrediction {
            alpha,
            beta,
            predicted_sigma1: sigma1_a0 * alpha,
            regime: SpikeRegime::Supercritical,
        }
    } else {
        SpikedPrediction {
            alpha,
            beta,
            predicted_sigma1: bulk_edge,
            regime: SpikeRegime::Subcritical,
        }
    }
}

/// Location and Tracy-Widom scale of the largest noise singular value:
/// `σ₁ ≈ location + scale · Z₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeLaw {
    pub location: f64,
    pub scale: f64,
}

pub fn max_singular_value_law(sigma_n: f64, gamma: f64, m: usize) -> EdgeLaw {
    EdgeLaw {
        location: sigma_n * (gamma.sqrt() + 1.0),
        scale: sigma_n * (1.0 + gamma.powf(-0.5)).cbrt() / (2.0 * (m as f64).powf(2.0 / 3.0)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_ten_square() {
        let p = spiked_prediction(10.0, 1.0, 1.0);
        assert_eq!(p.regime, SpikeRegime::Supercritical);
        assert!((p.alpha - 1.0201f64.sqrt()).abs() < 1e-15);
        assert!((p.alpha - 1.0100).abs() < 1e-4);
        // (1 − 1e-4)/√1.0201
        assert!((p.beta - 0.9999 / 1.0201f64.sqrt()).abs() < 1e-15);
        assert!((p.beta - 0.9900).abs() < 1e-4);
        assert!((p.predicted_sigma1 - 10.0 * p.alpha).abs() < 1e-14);
    }

    #[test]
    fn strong_signal_limit() {
        let p = spiked_prediction(1e8, 1.0, 2.0);
        assert!((p.alpha - 1.0).abs() < 1e-12);
        assert!((p.beta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_boundary() {
        let gamma: f64 = 3.0;
        let p = spiked_prediction(gamma.powf(0.25) * 2.0, 2.0, gamma);
        assert!(p.beta.abs() < 1e-14);
        assert_eq!(p.regime, SpikeRegime::Subcritical);
        let below = spiked_prediction(0.5, 1.0, 1.0);
        assert_eq!(below.regime, SpikeRegime::Subcritical);
        assert_eq!(below.predicted_sigma1, 2.0);
    }

    #[test]
    fn edge_law_square_256() {
        let law = max_singular_value_law(1.0, 1.0, 256);
        assert_eq!(law.location, 2.0);
        assert!((law.scale - 0.015625).abs() < 1e-15);
        let zero = max_singular_value_law(0.0, 1.0, 256);
        assert_eq!((zero.location, zero.scale), (0.0, 0.0));
    }
}
