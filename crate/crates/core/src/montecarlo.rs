//! Simulation oracle for covert probabilities, run lengths and the
//! conditional law of the statistic.
//!
//! Trial `i` always draws from stream `i` of the master seed, and counts are
//! combined with integer sums, so results do not depend on thread count.

use rayon::prelude::*;
use serde::Serialize;

use crate::detectors::{run_to_alarm, ChangeSchedule, Detector, DEFAULT_STEP_CAP};
use crate::error::{invalid, Error, Result};
use crate::signal::{check_duration, sample_observation, Phase, SampleStream};

pub const MIN_TRIALS: u64 = 1_000;
/// Estimates fail when fewer than this fraction of runs survive to the change.
pub const MIN_KEPT_FRACTION: f64 = 0.01;
/// Run-length estimates fail when more than this fraction of runs is censored.
pub const MAX_CENSORED_FRACTION: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_trials: u64,
    /// Runs that survived conditioning (all runs for run-length estimates).
    pub n_kept: u64,
    pub seed: u64,
}

impl McEstimate {
    /// Whether `value` lies within `k` standard errors of the estimate.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error
    }
}

fn check_trials(trials: u64) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(invalid("trials", format!("need at least {MIN_TRIALS}, got {trials}")));
    }
    Ok(())
}

fn check_starvation(kept: u64, trials: u64) -> Result<()> {
    if (kept as f64) < MIN_KEPT_FRACTION * trials as f64 || kept == 0 {
        return Err(Error::ConditioningStarvation { kept, trials });
    }
    Ok(())
}

/// Runs the detector from a zero statistic for `nu` pre-change samples.
/// Returns `None` if it alarmed (the run is discarded), else the detector.
#[inline]
fn survive_pre_change(detector: &Detector, nu: u64, stream: &mut SampleStream) -> Option<Detector> {
    let mut d = *detector;
    d.reset();
    let q = d.q();
    for _ in 0..nu {
        if d.observe(sample_observation(stream, Phase::Pre, q)) {
            return None;
        }
    }
    Some(d)
}

/// Fraction of runs with no alarm during samples `nu+1 ..= nu+l`, among runs
/// with no alarm during the first `nu`.
pub fn estimate_covert_prob(detector: &Detector, nu: u64, l: u64, trials: u64, seed: u64) -> Result<McEstimate> {
    check_trials(trials)?;
    check_duration(l)?;
    let q = detector.q();
    let (kept, covert) = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut s = SampleStream::new(seed, i);
            let Some(mut d) = survive_pre_change(detector, nu, &mut s) else {
                return (0u64, 0u64);
            };
            for _ in 0..l {
                if d.observe(sample_observation(&mut s, Phase::Post, q)) {
                    return (1, 0);
                }
            }
            (1, 1)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    check_starvation(kept, trials)?;
    let p = covert as f64 / kept as f64;
    Ok(McEstimate {
        mean: p,
        std_error: (p * (1.0 - p) / kept as f64).sqrt(),
        n_trials: trials,
        n_kept: kept,
        seed,
    })
}

/// Mean alarm time with no change, censoring runs at `cap` steps.
pub fn estimate_arl2fa(detector: &Detector, trials: u64, seed: u64, cap: Option<u64>) -> Result<McEstimate> {
    check_trials(trials)?;
    let cap = cap.unwrap_or(DEFAULT_STEP_CAP);
    let (sum, sum_sq, censored) = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut s = SampleStream::new(seed, i);
            let r = run_to_alarm(detector, ChangeSchedule::no_change(), cap, &mut s).expect("cap is positive");
            let t = r.t_stop as u128;
            (t, t * t, r.censored as u64)
        })
        .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    if censored as f64 > MAX_CENSORED_FRACTION * trials as f64 {
        return Err(Error::Censored { censored, trials, cap });
    }
    let n = trials as f64;
    let mean = sum as f64 / n;
    let var = (sum_sq as f64 / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok(McEstimate {
        mean,
        std_error: (var / n).sqrt(),
        n_trials: trials,
        n_kept: trials,
        seed,
    })
}

/// Empirical conditional CDF of the statistic at `ν`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    pub nu: u64,
    /// Sorted statistic values of the surviving runs.
    pub samples: Vec<f64>,
    pub n_trials: u64,
}

impl EmpiricalCdf {
    pub fn n_kept(&self) -> usize {
        self.samples.len()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.samples.partition_point(|&s| s <= x) as f64 / self.samples.len() as f64
    }

    /// Fraction of samples exactly at zero (the CUSUM reset atom).
    pub fn atom_at_zero(&self) -> f64 {
        self.samples.partition_point(|&s| s <= 0.0) as f64 / self.samples.len() as f64
    }

    /// Kolmogorov-Smirnov distance to a reference CDF that is continuous on
    /// `(0, ∞)` and may carry an atom at 0. `cdf` is only called at sample
    /// values.
    pub fn ks_distance<F: FnMut(f64) -> f64>(&self, mut cdf: F) -> f64 {
        let n = self.samples.len() as f64;
        let mut d: f64 = 0.0;
        let mut i = 0;
        while i < self.samples.len() {
            let v = self.samples[i];
            let mut j = i;
            while j < self.samples.len() && self.samples[j] == v {
                j += 1;
            }
            let f = cdf(v);
            let left = if v <= 0.0 { 0.0 } else { f };
            d = d.max((f - j as f64 / n).abs()).max((left - i as f64 / n).abs());
            i = j;
        }
        d
    }
}

pub fn empirical_statistic_cdf(detector: &Detector, nu: u64, trials: u64, seed: u64) -> Result<EmpiricalCdf> {
    check_trials(trials)?;
    if nu == 0 {
        return Err(invalid("nu", "the statistic at ν = 0 is the point mass at 0"));
    }
    let values: Vec<Option<f64>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut s = SampleStream::new(seed, i);
            survive_pre_change(detector, nu, &mut s).map(|d| d.statistic())
        })
        .collect();
    let mut samples: Vec<f64> = values.into_iter().flatten().collect();
    check_starvation(samples.len() as u64, trials)?;
    samples.sort_by(f64::total_cmp);
    Ok(EmpiricalCdf { nu, samples, n_trials: trials })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::TestKind;
    use crate::signal::omega;

    #[test]
    fn shewhart_covert_matches_closed_form() {
        let (gamma, q): (f64, f64) = (500.0, 0.15);
        let d = Detector::new(TestKind::Shewhart, q, gamma.ln()).unwrap();
        let est = estimate_covert_prob(&d, 5, 15, 100_000, 42).unwrap();
        let exact = (1.0 - gamma.powf(-1.0 / (1.0 + q))).powi(15);
        assert!(est.agrees_with(exact, 3.0), "{est:?} vs {exact}");
        assert!(est.n_kept <= est.n_trials);
    }

    #[test]
    fn tiny_power_single_sample() {
        let gamma: f64 = 500.0;
        let d = Detector::new(TestKind::Shewhart, 1e-9, gamma.ln()).unwrap();
        let est = estimate_covert_prob(&d, 0, 1, 200_000, 3).unwrap();
        assert!(est.agrees_with(1.0 - 1.0 / gamma, 3.0), "{est:?}");
        assert!(estimate_covert_prob(&d, 0, 0, 200_000, 3).is_err());
        assert!(estimate_covert_prob(&d, 0, 1, 10, 3).is_err());
    }

    #[test]
    fn shewhart_run_length_is_geometric() {
        let gamma: f64 = 200.0;
        let d = Detector::new(TestKind::Shewhart, 0.3, gamma.ln()).unwrap();
        let est = estimate_arl2fa(&d, 20_000, 9, None).unwrap();
        assert!((est.mean - gamma).abs() < 0.02 * gamma, "{est:?}");
    }

    #[test]
    fn censoring_is_reported() {
        let d = Detector::new(TestKind::Shewhart, 0.3, 500f64.ln()).unwrap();
        assert!(matches!(estimate_arl2fa(&d, 2_000, 1, Some(5)), Err(Error::Censored { .. })));
    }

    #[test]
    fn starvation_is_reported() {
        // A threshold this low alarms almost immediately under pure noise.
        let d = Detector::new(TestKind::Shewhart, 0.3, 0.01).unwrap();
        assert!(matches!(
            estimate_covert_prob(&d, 50, 1, 2_000, 1),
            Err(Error::ConditioningStarvation { .. })
        ));
    }

    #[test]
    fn single_step_cusum_atom() {
        let q = 0.15;
        let eta = 10.0;
        let w = omega(q);
        let d = Detector::new(TestKind::Cusum, q, eta).unwrap();
        let e = empirical_statistic_cdf(&d, 1, 100_000, 5).unwrap();
        let atom = (1.0 - (-w).exp()) / (1.0 - (-(w + eta)).exp());
        let se = (atom * (1.0 - atom) / e.n_kept() as f64).sqrt();
        assert!((e.atom_at_zero() - atom).abs() < 3.0 * se);
    }

    #[test]
    fn reproducible_regardless_of_threads() {
        let d = Detector::new(TestKind::Sr, 0.2, 100.0).unwrap();
        let a = estimate_covert_prob(&d, 20, 10, 5_000, 77).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| estimate_covert_prob(&d, 20, 10, 5_000, 77).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn ks_distance_basics() {
        let e = EmpiricalCdf {
            nu: 1,
            samples: vec![0.0, 0.0, 1.0, 2.0],
            n_trials: 4,
        };
        // Reference: atom 0.5 at 0, then uniform mass on (0, 2].
        let d = e.ks_distance(|x| 0.5 + 0.25 * x.min(2.0));
        assert!((d - 0.25).abs() < 1e-15, "{d}");
        assert_eq!(e.eval(1.0), 0.75);
    }
}
