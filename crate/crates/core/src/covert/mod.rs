//! Analytic covert probability `Q_L(q)`: the chance that `L` transmitted
//! samples raise no alarm, given no alarm during the `ν` samples before.

mod cheb;
pub mod cusum;
pub mod cusum_oracle;
pub mod cusum_tables;
pub mod sr;

use serde::Serialize;

use crate::detectors::TestKind;
use crate::error::{invalid, Result};
use crate::signal::{check_duration, check_gamma, check_power, omega, Phase};

pub(crate) use cheb::lobatto_nodes;
pub use cheb::PiecewiseCheb;
pub use cusum::{covert_prob_cusum, CusumLaw, CusumModel, CusumRoute};
pub use cusum_oracle::{integral_oracle_cusum, CusumOracle};
pub use cusum_tables::{build_a_tables, build_v_tables, eval_g_cusum, eval_q_cusum, CusumCoeffA, CusumCoeffV};
pub use sr::{build_sr_grid, covert_prob_sr, eval_g_sr, eval_g_sr_many, eval_q_sr, QuadGrid, SrLaw, DEFAULT_SR_NODES};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CovertDiagnostics {
    /// SR quadrature size N.
    pub grid_nodes: Option<usize>,
    /// Depth of the CUSUM tables (or SR iterations) used for the pre-change law.
    pub table_depth: Option<usize>,
    /// Mass of the pre-change law sitting at statistic value 0.
    pub atom_mass: Option<f64>,
    pub route: Option<CusumRoute>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovertResult {
    pub value: f64,
    pub test: TestKind,
    pub diagnostics: CovertDiagnostics,
}

/// `(1 - γ^{-1/(1+q)})^L`, independent of `ν`.
pub fn covert_prob_shewhart(q: f64, l: u64, gamma: f64) -> Result<CovertResult> {
    check_power(q)?;
    check_duration(l)?;
    check_gamma(gamma)?;
    Ok(CovertResult {
        value: shewhart_miss_probability(q, gamma).powf(l as f64),
        test: TestKind::Shewhart,
        diagnostics: CovertDiagnostics::default(),
    })
}

/// Probability that a single transmitted sample stays below `ln γ`.
pub fn shewhart_miss_probability(q: f64, gamma: f64) -> f64 {
    -(-gamma.ln() / (1.0 + q)).exp_m1()
}

/// CDF of the next scaled CUSUM statistic at `x` given the current value `u`.
pub fn cusum_cond_cdf(x: f64, u: f64, q: f64, phase: Phase) -> Result<f64> {
    check_power(q)?;
    if !(u >= 0.0) {
        return Err(invalid("u", format!("statistic must be nonnegative, got {u}")));
    }
    let w = omega(q);
    if x < (u - w).max(0.0) {
        return Ok(0.0);
    }
    let scale = match phase {
        Phase::Post => 1.0 + q,
        Phase::Pre => 1.0,
    };
    Ok(-(-(w - u + x) / scale).exp_m1())
}

/// CDF of the next SR statistic at `x` given the current value `u`.
pub fn sr_cond_cdf(x: f64, u: f64, q: f64, phase: Phase) -> Result<f64> {
    check_power(q)?;
    if !(u >= 0.0) {
        return Err(invalid("u", format!("statistic must be nonnegative, got {u}")));
    }
    let floor = (1.0 + u) / (1.0 + q);
    if x < floor {
        return Ok(0.0);
    }
    let k = match phase {
        Phase::Post => 1.0 / q,
        Phase::Pre => (1.0 + q) / q,
    };
    Ok(-(-(x / floor).ln() * k).exp_m1())
}

/// Analytic covert probability for any test, with SR quadrature size `nodes`.
pub fn covert_prob(kind: TestKind, q: f64, l: u64, nu: u64, gamma: f64, nodes: usize) -> Result<CovertResult> {
    match kind {
        TestKind::Shewhart => covert_prob_shewhart(q, l, gamma),
        TestKind::Cusum => {
            let eta = crate::calibration::calibrate_cached(kind, gamma, q)?;
            covert_prob_cusum(q, l, nu, eta)
        }
        TestKind::Sr => {
            let eta = crate::calibration::calibrate_cached(kind, gamma, q)?;
            covert_prob_sr(q, l, nu, eta, nodes)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shewhart_examples() {
        let v = covert_prob_shewhart(1e-9, 1, 500.0).unwrap().value;
        assert!((v - 0.998).abs() < 1e-8);
        let v = covert_prob_shewhart(0.15, 15, 500.0).unwrap().value;
        assert!((v - (1.0 - 500f64.powf(-1.0 / 1.15)).powi(15)).abs() < 1e-15);
        assert!((v - 0.9346).abs() < 5e-4);
        assert!(covert_prob_shewhart(0.15, 0, 500.0).is_err());
        let one = covert_prob_shewhart(0.3, 1, 500.0).unwrap().value;
        assert!((one - shewhart_miss_probability(0.3, 500.0)).abs() < 1e-16);
    }

    #[test]
    fn cusum_cdf_examples() {
        let q = 0.15;
        let w = omega(q);
        assert_eq!(cusum_cond_cdf(0.5, 3.0, q, Phase::Pre).unwrap(), 0.0);
        assert!((cusum_cond_cdf(0.0, 0.0, q, Phase::Pre).unwrap() - (1.0 - (-w).exp())).abs() < 1e-15);
        assert!((cusum_cond_cdf(1e6, 0.0, q, Phase::Post).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sr_cdf_examples() {
        assert_eq!(sr_cond_cdf(0.4, 0.0, 1.0, Phase::Pre).unwrap(), 0.0);
        assert_eq!(sr_cond_cdf(0.5, 0.0, 1.0, Phase::Post).unwrap(), 0.0);
        assert!((sr_cond_cdf(1.0, 0.0, 1.0, Phase::Pre).unwrap() - 0.75).abs() < 1e-15);
        assert!((sr_cond_cdf(1e12, 3.0, 0.2, Phase::Post).unwrap() - 1.0).abs() < 1e-12);
    }
}
