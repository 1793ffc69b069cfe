//! The three sequential tests and the generic run-to-alarm loop.
//!
//! Every test alarms at the first `t` where its statistic reaches the
//! threshold; ties alarm.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::signal::{check_power, omega, sample_observation, ObservationPower, Phase, SampleStream, ScenarioParams};

/// Hard step cap used when no explicit cap is given.
pub const DEFAULT_STEP_CAP: u64 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Shewhart,
    Cusum,
    Sr,
}

impl TestKind {
    pub const ALL: [TestKind; 3] = [TestKind::Shewhart, TestKind::Cusum, TestKind::Sr];

    pub fn as_str(self) -> &'static str {
        match self {
            TestKind::Shewhart => "shewhart",
            TestKind::Cusum => "cusum",
            TestKind::Sr => "sr",
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "shewhart" => Ok(TestKind::Shewhart),
            "cusum" => Ok(TestKind::Cusum),
            "sr" | "shiryaev-roberts" => Ok(TestKind::Sr),
            other => Err(invalid("test", format!("unknown test `{other}`"))),
        }
    }
}

/// Shewhart test expressed directly as a threshold on received power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShewhartConfig {
    pub eta_s_prime: f64,
}

impl ShewhartConfig {
    pub fn new(eta_s_prime: f64) -> Result<Self> {
        if eta_s_prime.is_finite() && eta_s_prime > 0.0 {
            Ok(Self { eta_s_prime })
        } else {
            Err(invalid("eta_s_prime", format!("must be positive, got {eta_s_prime}")))
        }
    }

    /// Converts a likelihood-ratio threshold into a power threshold.
    pub fn from_likelihood_threshold(eta_s: f64, q: f64) -> Result<Self> {
        Self::new((1.0 + q) / q * ((1.0 + q) * eta_s).ln())
    }

    /// The equivalent likelihood-ratio threshold.
    pub fn likelihood_threshold(&self, q: f64) -> f64 {
        (q * self.eta_s_prime / (1.0 + q)).exp() / (1.0 + q)
    }
}

#[inline]
pub fn shewhart_step(x: ObservationPower, cfg: ShewhartConfig) -> bool {
    x.value() >= cfg.eta_s_prime
}

/// Scaled CUSUM statistic `Ĉ_t = max(0, Ĉ_{t-1} + X_t - ω)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CusumState {
    pub c_hat: f64,
    pub omega: f64,
    pub eta_hat_c: f64,
    pub m_pieces: usize,
}

impl CusumState {
    pub fn new(q: f64, eta_hat_c: f64) -> Result<Self> {
        check_power(q)?;
        Self::with_omega(omega(q), eta_hat_c)
    }

    pub fn with_omega(omega: f64, eta_hat_c: f64) -> Result<Self> {
        if !(eta_hat_c.is_finite() && eta_hat_c > 0.0) {
            return Err(invalid("eta_hat_c", format!("must be positive, got {eta_hat_c}")));
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(invalid("omega", format!("must be positive, got {omega}")));
        }
        Ok(Self {
            c_hat: 0.0,
            omega,
            eta_hat_c,
            m_pieces: ((eta_hat_c / omega).ceil() as usize).max(1),
        })
    }

    #[inline]
    pub fn alarmed(&self) -> bool {
        self.c_hat >= self.eta_hat_c
    }
}

#[inline]
pub fn cusum_step(s: CusumState, x: ObservationPower) -> CusumState {
    CusumState {
        c_hat: (s.c_hat + x.value() - s.omega).max(0.0),
        ..s
    }
}

/// Shiryaev-Roberts statistic `R_t = (1 + R_{t-1}) Λ(X_t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrState {
    pub r: f64,
    pub eta_r: f64,
}

impl SrState {
    /// Rejects thresholds below `1/q`, the regime the analysis does not cover.
    pub fn new(q: f64, eta_r: f64) -> Result<Self> {
        check_power(q)?;
        if !eta_r.is_finite() {
            return Err(invalid("eta_r", "threshold must be finite"));
        }
        let bound = 1.0 / q;
        if eta_r < bound {
            return Err(Error::SrThresholdTooLow { eta_r, q, bound });
        }
        Ok(Self { r: 0.0, eta_r })
    }

    #[inline]
    pub fn alarmed(&self) -> bool {
        self.r >= self.eta_r
    }
}

#[inline]
pub fn sr_step(s: SrState, x: ObservationPower, q: f64) -> SrState {
    SrState {
        r: (1.0 + s.r) / (1.0 + q) * (q * x.value() / (1.0 + q)).exp(),
        ..s
    }
}

/// A calibrated detector together with the power it is tuned to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Detector {
    Shewhart { cfg: ShewhartConfig, q: f64 },
    Cusum(CusumState),
    Sr { state: SrState, q: f64 },
}

impl Detector {
    /// `threshold` is η_s′, η̂_c or η_r depending on `kind`.
    pub fn new(kind: TestKind, q: f64, threshold: f64) -> Result<Self> {
        check_power(q)?;
        Ok(match kind {
            TestKind::Shewhart => Detector::Shewhart {
                cfg: ShewhartConfig::new(threshold)?,
                q,
            },
            TestKind::Cusum => Detector::Cusum(CusumState::new(q, threshold)?),
            TestKind::Sr => Detector::Sr {
                state: SrState::new(q, threshold)?,
                q,
            },
        })
    }

    pub fn kind(&self) -> TestKind {
        match self {
            Detector::Shewhart { .. } => TestKind::Shewhart,
            Detector::Cusum(_) => TestKind::Cusum,
            Detector::Sr { .. } => TestKind::Sr,
        }
    }

    pub fn q(&self) -> f64 {
        match *self {
            Detector::Shewhart { q, .. } | Detector::Sr { q, .. } => q,
            Detector::Cusum(s) => {
                // ω determines q uniquely; recover it for completeness.
                let mut lo: f64 = 1e-12;
                let mut hi: f64 = 1e6;
                for _ in 0..200 {
                    let mid = (lo * hi).sqrt();
                    if omega(mid) < s.omega {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    pub fn threshold(&self) -> f64 {
        match self {
            Detector::Shewhart { cfg, .. } => cfg.eta_s_prime,
            Detector::Cusum(s) => s.eta_hat_c,
            Detector::Sr { state, .. } => state.eta_r,
        }
    }

    /// Current statistic; the Shewhart test is memoryless and reports 0.
    pub fn statistic(&self) -> f64 {
        match self {
            Detector::Shewhart { .. } => 0.0,
            Detector::Cusum(s) => s.c_hat,
            Detector::Sr { state, .. } => state.r,
        }
    }

    pub fn reset(&mut self) {
        match self {
            Detector::Shewhart { .. } => {}
            Detector::Cusum(s) => s.c_hat = 0.0,
            Detector::Sr { state, .. } => state.r = 0.0,
        }
    }

    /// Feeds one observation; returns true on alarm.
    #[inline]
    pub fn observe(&mut self, x: ObservationPower) -> bool {
        match self {
            Detector::Shewhart { cfg, .. } => shewhart_step(x, *cfg),
            Detector::Cusum(s) => {
                *s = cusum_step(*s, x);
                s.alarmed()
            }
            Detector::Sr { state, q } => {
                *state = sr_step(*state, x, *q);
                state.alarmed()
            }
        }
    }
}

/// When the transmitter is on: samples `nu+1 ..= nu+len`. `None` for `nu`
/// means no change ever happens; `None` for `len` means it never stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChangeSchedule {
    pub nu: Option<u64>,
    pub len: Option<u64>,
}

impl ChangeSchedule {
    pub fn no_change() -> Self {
        Self { nu: None, len: None }
    }

    pub fn persistent(nu: u64) -> Self {
        Self { nu: Some(nu), len: None }
    }

    pub fn window(nu: u64, len: u64) -> Self {
        Self {
            nu: Some(nu),
            len: Some(len),
        }
    }

    pub fn from_params(p: &ScenarioParams) -> Self {
        Self::window(p.nu, p.l)
    }

    #[inline]
    pub fn phase(&self, t: u64) -> Phase {
        match self.nu {
            Some(nu) if t > nu && self.len.is_none_or(|l| t - nu <= l) => Phase::Post,
            _ => Phase::Pre,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoppingRecord {
    pub t_stop: u64,
    pub alarmed_pre_change: bool,
    /// `T - ν` for alarms after the change.
    pub delay: Option<u64>,
    /// The run reached the step cap without alarming; `t_stop` is the cap.
    pub censored: bool,
}

/// Runs a fresh copy of `detector` until it alarms or `cap` steps pass.
pub fn run_to_alarm(detector: &Detector, schedule: ChangeSchedule, cap: u64, stream: &mut SampleStream) -> Result<StoppingRecord> {
    if cap == 0 {
        return Err(invalid("cap", "step cap must be at least 1"));
    }
    let mut d = *detector;
    d.reset();
    let q = d.q();
    for t in 1..=cap {
        let x = sample_observation(stream, schedule.phase(t), q);
        if d.observe(x) {
            let pre = schedule.nu.is_none_or(|nu| t <= nu);
            return Ok(StoppingRecord {
                t_stop: t,
                alarmed_pre_change: pre,
                delay: schedule.nu.filter(|&nu| t > nu).map(|nu| t - nu),
                censored: false,
            });
        }
    }
    Ok(StoppingRecord {
        t_stop: cap,
        alarmed_pre_change: false,
        delay: None,
        censored: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(x: f64) -> ObservationPower {
        ObservationPower::new(x).unwrap()
    }

    #[test]
    fn shewhart_examples() {
        let cfg = ShewhartConfig::new(500f64.ln()).unwrap();
        assert!(!shewhart_step(obs(0.0), cfg));
        assert!(shewhart_step(obs(cfg.eta_s_prime), cfg));
    }

    #[test]
    fn shewhart_parameterizations_agree() {
        let q = 0.15;
        let cfg = ShewhartConfig::new(500f64.ln()).unwrap();
        let eta_s = cfg.likelihood_threshold(q);
        let back = ShewhartConfig::from_likelihood_threshold(eta_s, q).unwrap();
        assert!((back.eta_s_prime - cfg.eta_s_prime).abs() < 1e-12);
        for i in 0..20_000 {
            let x = i as f64 * 0.001;
            if (x - cfg.eta_s_prime).abs() < 1e-9 {
                continue;
            }
            let by_ratio = crate::signal::likelihood_ratio(obs(x), q) >= eta_s;
            assert_eq!(by_ratio, shewhart_step(obs(x), cfg), "x = {x}");
        }
    }

    #[test]
    fn cusum_examples() {
        let mut s = CusumState::with_omega(2.0, 10.0).unwrap();
        s.c_hat = 1.0;
        assert_eq!(cusum_step(s, obs(0.5)).c_hat, 0.0);
        let mut s = CusumState::with_omega(1.0, 10.0).unwrap();
        s.c_hat = 3.0;
        assert_eq!(cusum_step(s, obs(2.0)).c_hat, 4.0);
        let s = CusumState::new(0.15, 5.0).unwrap();
        assert_eq!(cusum_step(s, obs(s.omega)).c_hat, 0.0);
        assert_eq!(s.m_pieces, (5.0 / omega(0.15)).ceil() as usize);
    }

    #[test]
    fn sr_examples() {
        let s = SrState { r: 0.0, eta_r: 10.0 };
        assert_eq!(sr_step(s, obs(0.0), 1.0).r, 0.5);
        let s = SrState { r: 1.0, eta_r: 10.0 };
        assert_eq!(sr_step(s, obs(0.0), 1.0).r, 1.0);
        let q: f64 = 0.3;
        let mut s = SrState { r: 0.0, eta_r: 100.0 };
        for t in 1..=30 {
            s = sr_step(s, obs(0.0), q);
            let bound = (1.0 - (1.0 + q).powi(-t)) / q;
            assert!((s.r - bound).abs() < 1e-12);
        }
    }

    #[test]
    fn sr_rejects_low_threshold() {
        assert!(matches!(SrState::new(0.1, 5.0), Err(Error::SrThresholdTooLow { .. })));
        assert!(SrState::new(0.1, 10.0).is_ok());
    }

    #[test]
    fn recovers_q_from_cusum_drift() {
        let d = Detector::new(TestKind::Cusum, 0.37, 4.0).unwrap();
        assert!((d.q() - 0.37).abs() < 1e-9);
    }

    #[test]
    fn schedule_phases() {
        let s = ChangeSchedule::window(3, 2);
        let phases: Vec<_> = (1..=7).map(|t| s.phase(t)).collect();
        use Phase::*;
        assert_eq!(phases, vec![Pre, Pre, Pre, Post, Post, Pre, Pre]);
        assert_eq!(ChangeSchedule::no_change().phase(1_000), Pre);
        assert_eq!(ChangeSchedule::persistent(0).phase(1_000), Post);
    }

    #[test]
    fn strong_signal_is_detected_fast() {
        let gamma: f64 = 500.0;
        let q = 5.0;
        let cusum = crate::calibration::calibrate_cusum(gamma, q).unwrap();
        let detectors = [
            Detector::new(TestKind::Shewhart, q, gamma.ln()).unwrap(),
            Detector::new(TestKind::Cusum, q, cusum.eta_hat_c).unwrap(),
            Detector::new(TestKind::Sr, q, gamma / (1.0 + q)).unwrap(),
        ];
        for d in detectors {
            let mut delays: Vec<u64> = (0..2001)
                .map(|i| {
                    let mut s = SampleStream::new(7, i);
                    run_to_alarm(&d, ChangeSchedule::persistent(0), DEFAULT_STEP_CAP, &mut s)
                        .unwrap()
                        .delay
                        .unwrap()
                })
                .collect();
            delays.sort_unstable();
            assert!(delays[1000] <= 3, "{:?} median delay {}", d.kind(), delays[1000]);
        }
    }

    #[test]
    fn single_sample_alarm_rate_matches_closed_form() {
        let (gamma, q, n): (f64, f64, u64) = (500.0, 0.15, 200_000);
        let d = Detector::new(TestKind::Shewhart, q, gamma.ln()).unwrap();
        let alarms = (0..n)
            .filter(|&i| {
                let mut s = SampleStream::new(11, i);
                !run_to_alarm(&d, ChangeSchedule::window(0, 1), 1, &mut s).unwrap().censored
            })
            .count() as f64;
        let p = gamma.powf(-1.0 / (1.0 + q));
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((alarms / n as f64 - p).abs() < 3.0 * se);
    }
}
