//! Channel model seen by the adversary.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Parameters of one covert-transmission scenario, already normalized so the
/// adversary's noise power is 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub q: f64,
    /// Adversary noise power over receiver noise power.
    pub sigma_ratio: f64,
    pub gamma: f64,
    pub theta: f64,
    pub nu: u64,
    pub l: u64,
}

impl ScenarioParams {
    pub fn new(q: f64, sigma_ratio: f64, gamma: f64, theta: f64, nu: u64, l: u64) -> Result<Self> {
        check_power(q)?;
        if !(sigma_ratio.is_finite() && sigma_ratio > 0.0) {
            return Err(invalid("sigma_ratio", format!("must be positive, got {sigma_ratio}")));
        }
        check_gamma(gamma)?;
        if !(theta > 0.0 && theta < 1.0) {
            return Err(invalid("theta", format!("must lie in (0, 1), got {theta}")));
        }
        check_duration(l)?;
        Ok(Self {
            q,
            sigma_ratio,
            gamma,
            theta,
            nu,
            l,
        })
    }
}

pub(crate) fn check_power(q: f64) -> Result<()> {
    if q.is_finite() && q > 0.0 {
        Ok(())
    } else {
        Err(invalid("q", format!("transmit power must be positive, got {q}")))
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 1.0 {
        Ok(())
    } else {
        Err(invalid("gamma", format!("ARL2FA target must exceed 1, got {gamma}")))
    }
}

pub(crate) fn check_duration(l: u64) -> Result<()> {
    if l >= 1 {
        Ok(())
    } else {
        Err(invalid("L", "transmission duration must be at least 1"))
    }
}

/// Transmit power and noise ratio after dividing out the adversary's noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedChannel {
    pub q: f64,
    pub sigma_ratio: f64,
}

pub fn normalize(q_raw: f64, sigma_w2: f64, sigma_b2: f64) -> Result<NormalizedChannel> {
    if !(sigma_w2.is_finite() && sigma_w2 > 0.0) {
        return Err(invalid("sigma_w2", format!("noise power must be positive, got {sigma_w2}")));
    }
    if !(sigma_b2.is_finite() && sigma_b2 > 0.0) {
        return Err(invalid("sigma_b2", format!("noise power must be positive, got {sigma_b2}")));
    }
    if !(q_raw.is_finite() && q_raw >= 0.0) {
        return Err(invalid("q", format!("transmit power must be nonnegative, got {q_raw}")));
    }
    Ok(NormalizedChannel {
        q: q_raw / sigma_w2,
        sigma_ratio: sigma_w2 / sigma_b2,
    })
}

/// Received power `|y|^2` of one sample.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ObservationPower(f64);

impl ObservationPower {
    pub fn new(x: f64) -> Result<Self> {
        if x.is_finite() && x >= 0.0 {
            Ok(Self(x))
        } else {
            Err(invalid("x", format!("observation power must be a nonnegative number, got {x}")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

/// `e^{q x/(1+q)} / (1+q)`, the post- over pre-change density ratio.
#[inline]
pub fn likelihood_ratio(x: ObservationPower, q: f64) -> f64 {
    (q * x.0 / (1.0 + q)).exp() / (1.0 + q)
}

/// Power level where the likelihood ratio equals one. This is also the
/// per-sample drift subtracted by the scaled CUSUM statistic.
#[inline]
pub fn omega(q: f64) -> f64 {
    (1.0 + q) / q * q.ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pre,
    Post,
}

/// Reproducible stream of observations.
///
/// Split rule: stream `i` under master seed `s` is ChaCha8 seeded with
/// `seed_from_u64(s)` and switched to stream number `i`. Uniforms are the top
/// 53 bits of `next_u64` scaled by 2^-53, and exponentials come from the
/// inverse CDF `-ln(1 - u)`.
#[derive(Debug, Clone)]
pub struct SampleStream {
    rng: ChaCha8Rng,
}

impl SampleStream {
    pub fn new(master_seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream);
        Self { rng }
    }

    /// Uniform on [0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Unit-mean exponential.
    #[inline]
    pub fn exponential(&mut self) -> f64 {
        -(-self.uniform()).ln_1p()
    }
}

pub fn sample_observation(stream: &mut SampleStream, phase: Phase, q: f64) -> ObservationPower {
    let e = stream.exponential();
    match phase {
        Phase::Pre => ObservationPower(e),
        Phase::Post => ObservationPower(e * (1.0 + q)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(x: f64) -> ObservationPower {
        ObservationPower::new(x).unwrap()
    }

    #[test]
    fn normalization_examples() {
        let c = normalize(0.3, 2.0, 1.0).unwrap();
        assert!((c.q - 0.15).abs() < 1e-15 && c.sigma_ratio == 2.0);
        let c = normalize(0.5, 1.0, 1.0).unwrap();
        assert_eq!((c.q, c.sigma_ratio), (0.5, 1.0));
        let c = normalize(1.0, 4.0, 2.0).unwrap();
        assert_eq!((c.q, c.sigma_ratio), (0.25, 2.0));
        assert!(normalize(1.0, 0.0, 1.0).is_err());
        assert!(normalize(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn likelihood_ratio_values() {
        assert!((likelihood_ratio(obs(0.0), 1.0) - 0.5).abs() < 1e-15);
        assert!((likelihood_ratio(obs(2.0), 1.0) - std::f64::consts::E / 2.0).abs() < 1e-14);
    }

    #[test]
    fn shewhart_boundary_point_hits_eta_s() {
        // Solve Λ(x) = η_s by bisection and compare with the power threshold ln γ.
        let (gamma, q): (f64, f64) = (500.0, 0.15);
        let eta_s_prime = gamma.ln();
        let eta_s = (q * eta_s_prime / (1.0 + q)).exp() / (1.0 + q);
        let (mut lo, mut hi) = (0.0, 50.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if likelihood_ratio(obs(mid), q) < eta_s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lo - eta_s_prime).abs() < 1e-10);
    }

    #[test]
    fn ratio_crosses_one_at_omega() {
        for q in [0.01, 0.15, 1.0, 5.0] {
            let w = omega(q);
            assert!((likelihood_ratio(obs(w), q) - 1.0).abs() < 1e-12);
            assert!(likelihood_ratio(obs(w * 0.99), q) < 1.0);
        }
    }

    #[test]
    fn sample_means() {
        let mut s = SampleStream::new(42, 0);
        let n = 1_000_000;
        let pre: f64 = (0..n).map(|_| sample_observation(&mut s, Phase::Pre, 0.5).value()).sum::<f64>() / n as f64;
        assert!((pre - 1.0).abs() < 0.003, "{pre}");
        let post: f64 = (0..n).map(|_| sample_observation(&mut s, Phase::Post, 0.5).value()).sum::<f64>() / n as f64;
        assert!((post - 1.5).abs() < 0.005, "{post}");
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = SampleStream::new(42, 0).exponential();
        let b = SampleStream::new(42, 0).exponential();
        let c = SampleStream::new(42, 1).exponential();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_ne!(a, c);
    }

    #[test]
    fn scenario_invariants() {
        assert!(ScenarioParams::new(0.15, 1.0, 500.0, 0.95, 0, 15).is_ok());
        assert!(ScenarioParams::new(0.0, 1.0, 500.0, 0.95, 0, 15).is_err());
        assert!(ScenarioParams::new(0.15, 1.0, 1.0, 0.95, 0, 15).is_err());
        assert!(ScenarioParams::new(0.15, 1.0, 500.0, 1.0, 0, 15).is_err());
        assert!(ScenarioParams::new(0.15, 1.0, 500.0, 0.95, 0, 0).is_err());
    }
}
