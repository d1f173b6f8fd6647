//! Comparison strategies: fixed exponential decay of frame weights, and
//! sample gating by the peak-to-sidelobe ratio of the confidence map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::LabelMap;
use crate::weights::SimplexWeights;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayConfig {
    gamma: f64,
}

impl DecayConfig {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidParameter(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self { gamma: 0.025 }
    }
}

/// `α_k ∝ (1 − γ)^(t − k)`, normalized.
pub fn decay_weights(t: usize, config: DecayConfig) -> Result<SimplexWeights> {
    if t == 0 {
        return Err(Error::Empty("decay weights need at least one frame"));
    }
    let keep = 1.0 - config.gamma;
    let mut masses = vec![0.0; t];
    let mut value = 1.0;
    for m in masses.iter_mut().rev() {
        *m = value;
        value *= keep;
    }
    SimplexWeights::from_masses(masses)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsrConfig {
    /// Chebyshev radius around the peak excluded from the sidelobe.
    pub exclusion_radius: usize,
    /// Minimal ratio for accepting a sample; `-inf` disables the gate.
    pub threshold: f64,
}

impl Default for PsrConfig {
    fn default() -> Self {
        Self {
            exclusion_radius: 2,
            threshold: 5.0,
        }
    }
}

impl PsrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threshold.is_nan() || self.threshold == f64::INFINITY {
            return Err(Error::InvalidParameter(format!(
                "psr threshold must be finite or -inf, got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

fn wrapped_distance(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(n - d)
}

/// `(g_max − m_r) / σ_r` over the cells outside the peak neighborhood, with
/// the population standard deviation.
pub fn psr(confidence: &LabelMap, config: &PsrConfig) -> Result<f64> {
    let (h, w) = (confidence.height(), confidence.width());
    let (pr, pc) = confidence.argmax();
    let peak = confidence.get(pr, pc);
    let r = config.exclusion_radius;
    let sidelobe: Vec<f64> = (0..h * w)
        .filter(|i| {
            let (row, col) = (i / w, i % w);
            wrapped_distance(row, pr, h) > r || wrapped_distance(col, pc, w) > r
        })
        .map(|i| confidence.as_slice()[i])
        .collect();
    if sidelobe.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "exclusion radius {r} leaves no sidelobe in a {h}x{w} map"
        )));
    }
    let n = sidelobe.len() as f64;
    let mean = sidelobe.iter().sum::<f64>() / n;
    let var = sidelobe.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 0.0) || std <= 1e-12 * mean.abs().max(peak.abs()) {
        return Err(Error::ZeroVariance);
    }
    Ok((peak - mean) / std)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateDecision {
    Accept,
    Reject,
}

/// Accepts iff the ratio reaches the threshold. Constant sidelobes reject
/// unless the gate is disabled.
pub fn psr_gate(confidence: &LabelMap, config: &PsrConfig) -> Result<GateDecision> {
    config.validate()?;
    if config.threshold == f64::NEG_INFINITY {
        return Ok(GateDecision::Accept);
    }
    match psr(confidence, config) {
        Ok(v) if v >= config.threshold => Ok(GateDecision::Accept),
        Ok(_) | Err(Error::ZeroVariance) => Ok(GateDecision::Reject),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(h: usize, w: usize, data: Vec<f64>) -> LabelMap {
        LabelMap::new(h, w, data).unwrap()
    }

    fn nine() -> LabelMap {
        map(3, 3, vec![0.0, 2.0, 0.0, 2.0, 10.0, 2.0, 0.0, 2.0, 0.0])
    }

    fn radius(r: usize, threshold: f64) -> PsrConfig {
        PsrConfig {
            exclusion_radius: r,
            threshold,
        }
    }

    #[test]
    fn decay_examples() {
        let d = |g| DecayConfig::new(g).unwrap();
        let a = decay_weights(3, d(0.5)).unwrap();
        for (x, y) in a.as_slice().iter().zip([1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0]) {
            assert!((x - y).abs() < 1e-15);
        }
        assert_eq!(decay_weights(4, d(0.0)).unwrap().as_slice(), &[0.25; 4]);
        assert_eq!(decay_weights(3, d(1.0)).unwrap().as_slice(), &[0.0, 0.0, 1.0]);
        assert!(DecayConfig::new(1.5).is_err());
        assert!(decay_weights(0, d(0.1)).is_err());
    }

    proptest! {
        #[test]
        fn decay_recursion_holds(t in 1usize..200, gamma in 0.0f64..1.0) {
            let a = decay_weights(t, DecayConfig::new(gamma).unwrap()).unwrap();
            let a = a.as_slice();
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
            for k in 0..t - 1 {
                prop_assert!((a[k] - (1.0 - gamma) * a[k + 1]).abs() <= 1e-12);
            }
        }

        #[test]
        fn psr_is_affine_invariant(
            data in prop::collection::vec(-5.0f64..5.0, 36),
            scale in 0.01f64..100.0,
            shift in -50.0f64..50.0,
        ) {
            let m = map(6, 6, data);
            let cfg = radius(1, 0.0);
            if let Ok(base) = psr(&m, &cfg) {
                let moved = psr(&m.map(|v| scale * v + shift), &cfg).unwrap();
                prop_assert!((moved - base).abs() <= 1e-10 * base.abs().max(1.0));
            }
        }
    }

    #[test]
    fn psr_hand_example() {
        assert!((psr(&nine(), &radius(0, 5.0)).unwrap() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn psr_scale_invariance() {
        let base = psr(&nine(), &radius(0, 5.0)).unwrap();
        let scaled = psr(&nine().map(|v| 3.7 * v), &radius(0, 5.0)).unwrap();
        assert!((base - scaled).abs() < 1e-12);
    }

    #[test]
    fn psr_errors() {
        let flat = map(8, 8, vec![1.0; 64]);
        assert!(matches!(psr(&flat, &PsrConfig::default()), Err(Error::ZeroVariance)));
        assert!(matches!(psr(&nine(), &radius(1, 5.0)), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn exclusion_window_wraps() {
        // Peak in the corner: radius 1 excludes the wrapped neighbors too.
        let mut data = vec![0.0; 25];
        data[0] = 10.0;
        data[4] = 7.0; // (0, 4) is adjacent to (0, 0) across the border
        data[12] = 1.0;
        let with = psr(&map(5, 5, data.clone()), &radius(1, 0.0)).unwrap();
        data[4] = 0.0;
        let without = psr(&map(5, 5, data), &radius(1, 0.0)).unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn gate_examples() {
        assert_eq!(psr_gate(&nine(), &radius(0, 5.0)).unwrap(), GateDecision::Accept);
        assert_eq!(psr_gate(&nine(), &radius(0, 9.5)).unwrap(), GateDecision::Reject);
        let flat = map(4, 4, vec![0.3; 16]);
        assert_eq!(psr_gate(&flat, &radius(0, f64::NEG_INFINITY)).unwrap(), GateDecision::Accept);
        assert_eq!(psr_gate(&flat, &radius(0, -1e300)).unwrap(), GateDecision::Reject);
        assert_eq!(psr_gate(&flat, &radius(0, 5.0)).unwrap(), GateDecision::Reject);
    }
}
