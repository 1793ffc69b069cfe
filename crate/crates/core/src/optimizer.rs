//! Throughput maximization `max L·ln(1 + q·σ_W²/σ_B²)` subject to
//! `Q_L(q) ≥ θ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::calibrate_cached;
use crate::covert::sr::{build_sr_grid, eval_g_sr, eval_g_sr_many, sr_power_moment};
use crate::covert::{shewhart_miss_probability, CusumModel};
use crate::detectors::TestKind;
use crate::error::{invalid, Error, Result};
use crate::signal::{check_gamma, check_power, omega};

/// Default cap on the duration explored for a single power.
pub const DEFAULT_L_CAP: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exhaustive,
    Approx,
    Algorithm1,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Exhaustive => "exhaustive",
            Method::Approx => "approx",
            Method::Algorithm1 => "algorithm1",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exhaustive" => Ok(Method::Exhaustive),
            "approx" => Ok(Method::Approx),
            "algorithm1" => Ok(Method::Algorithm1),
            _ => Err(invalid("method", format!("unknown method `{s}`"))),
        }
    }
}

/// One evaluated `(q, L)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub q: f64,
    pub l: u64,
    pub covert: f64,
    pub utility: f64,
}

/// Intermediate quantities of the closed-form Shewhart approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ApproxDiagnostics {
    /// Local maximizer of the smooth surrogate utility.
    pub u1: f64,
    /// Local minimizer of the surrogate; diagnostic only.
    pub u2: f64,
    pub l_hat: u64,
    /// The surrogate has no real stationary point (γ < e⁴) and the
    /// exhaustive optimum was returned instead.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Optimum {
    pub test: TestKind,
    pub method: Method,
    pub q_star: f64,
    pub l_star: u64,
    pub i_star: f64,
    /// `Q_{L*}(q*)`, NaN when infeasible.
    pub covert: f64,
    pub feasible: bool,
    pub trace: Vec<TracePoint>,
    pub approx: Option<ApproxDiagnostics>,
    /// Powers at which the duration search stopped at the cap instead of
    /// at the first duration violating the constraint.
    pub capped: Vec<f64>,
}

impl Optimum {
    fn infeasible(test: TestKind, method: Method, trace: Vec<TracePoint>) -> Self {
        Self {
            test,
            method,
            q_star: 0.0,
            l_star: 0,
            i_star: 0.0,
            covert: f64::NAN,
            feasible: false,
            trace,
            approx: None,
            capped: Vec::new(),
        }
    }
}

/// `L·ln(1 + q·ratio)` in nats.
pub fn utility(q: f64, l: u64, sigma_ratio: f64) -> f64 {
    l as f64 * (q * sigma_ratio).ln_1p()
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(invalid("theta", format!("must lie in (0, 1), got {theta}")))
    }
}

fn check_ratio(sigma_ratio: f64) -> Result<()> {
    if sigma_ratio.is_finite() && sigma_ratio > 0.0 {
        Ok(())
    } else {
        Err(invalid("sigma_ratio", format!("must be positive, got {sigma_ratio}")))
    }
}

/// Shewhart covertness is attainable at all iff `θ < 1 - 1/γ`.
pub fn shewhart_feasible(gamma: f64, theta: f64) -> bool {
    theta < 1.0 - 1.0 / gamma
}

fn shewhart_infeasible(gamma: f64, theta: f64) -> Error {
    Error::Infeasible(format!(
        "Shewhart covertness requires θ < 1 - 1/γ = {}, got θ = {theta}",
        1.0 - 1.0 / gamma
    ))
}

/// Longest duration for which some nonnegative power meets the constraint.
pub fn lmax_shewhart(gamma: f64, theta: f64) -> Result<u64> {
    check_gamma(gamma)?;
    check_theta(theta)?;
    if !shewhart_feasible(gamma, theta) {
        return Err(shewhart_infeasible(gamma, theta));
    }
    Ok((theta.ln() / (-1.0 / gamma).ln_1p()).floor().max(1.0) as u64)
}

/// Power that makes the Shewhart constraint active at duration `l`.
pub fn optimal_q_for_l_shewhart(l: u64, gamma: f64, theta: f64) -> Result<f64> {
    let lmax = lmax_shewhart(gamma, theta)?;
    if l == 0 || l > lmax {
        return Err(invalid("L", format!("must lie in 1..={lmax}, got {l}")));
    }
    let miss = -(theta.ln() / l as f64).exp_m1();
    Ok((-gamma.ln() / miss.ln() - 1.0).max(0.0))
}

/// Largest Shewhart duration meeting the constraint at power `q` (0 if none).
pub fn shewhart_duration_for_q(q: f64, gamma: f64, theta: f64) -> u64 {
    let per_sample = shewhart_miss_probability(q, gamma).ln();
    let l = theta.ln() / per_sample;
    if l.is_finite() && l >= 1.0 {
        l.floor() as u64
    } else {
        0
    }
}

/// Scans every duration up to `L_max` with its active-constraint power.
pub fn exhaustive_shewhart(gamma: f64, theta: f64, sigma_ratio: f64) -> Result<Optimum> {
    check_ratio(sigma_ratio)?;
    let lmax = lmax_shewhart(gamma, theta)?;
    let mut trace = Vec::with_capacity(lmax as usize);
    for l in 1..=lmax {
        let q = optimal_q_for_l_shewhart(l, gamma, theta)?;
        trace.push(TracePoint {
            q,
            l,
            covert: shewhart_miss_probability(q, gamma).powf(l as f64),
            utility: utility(q, l, sigma_ratio),
        });
    }
    let best = trace.iter().fold(trace[0], |b, p| if p.utility > b.utility { *p } else { b });
    Ok(Optimum {
        test: TestKind::Shewhart,
        method: Method::Exhaustive,
        q_star: best.q,
        l_star: best.l,
        i_star: best.utility,
        covert: best.covert,
        feasible: true,
        trace,
        approx: None,
        capped: Vec::new(),
    })
}

/// Stationary points `(u1, u2)` of the surrogate utility, if real.
pub fn surrogate_roots(gamma: f64) -> Option<(f64, f64)> {
    let b = 2.0 - gamma.ln();
    let disc = b * b - 4.0;
    (disc >= 0.0).then(|| {
        let s = disc.sqrt();
        ((-b - s) / 2.0, (-b + s) / 2.0)
    })
}

/// Closed-form approximation: duration from the surrogate maximizer, power
/// re-solved to make the constraint active.
pub fn approx_shewhart(gamma: f64, theta: f64, sigma_ratio: f64) -> Result<Optimum> {
    check_ratio(sigma_ratio)?;
    let lmax = lmax_shewhart(gamma, theta)?;
    let Some((u1, u2)) = surrogate_roots(gamma) else {
        log::warn!("γ = {gamma} < e⁴: no real surrogate maximizer, using the exhaustive optimum");
        let mut opt = exhaustive_shewhart(gamma, theta, sigma_ratio)?;
        opt.method = Method::Approx;
        opt.approx = Some(ApproxDiagnostics {
            u1: f64::NAN,
            u2: f64::NAN,
            l_hat: opt.l_star,
            fallback: true,
        });
        return Ok(opt);
    };
    let l_hat = shewhart_duration_for_q(u1, gamma, theta).clamp(1, lmax);
    let q = optimal_q_for_l_shewhart(l_hat, gamma, theta)?;
    let point = TracePoint {
        q,
        l: l_hat,
        covert: shewhart_miss_probability(q, gamma).powf(l_hat as f64),
        utility: utility(q, l_hat, sigma_ratio),
    };
    Ok(Optimum {
        test: TestKind::Shewhart,
        method: Method::Approx,
        q_star: q,
        l_star: l_hat,
        i_star: point.utility,
        covert: point.covert,
        feasible: true,
        trace: vec![point],
        approx: Some(ApproxDiagnostics {
            u1,
            u2,
            l_hat,
            fallback: false,
        }),
        capped: Vec::new(),
    })
}

/// Power grid and numerical settings for [`algorithm1`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub q_min: f64,
    pub q_max: f64,
    pub dq: f64,
    /// SR quadrature size.
    pub sr_nodes: usize,
    pub l_cap: u64,
}

impl Default for SearchGrid {
    fn default() -> Self {
        Self {
            q_min: 1e-3,
            q_max: 2.0,
            dq: 1e-3,
            sr_nodes: crate::covert::DEFAULT_SR_NODES,
            l_cap: DEFAULT_L_CAP,
        }
    }
}

impl SearchGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.q_min > 0.0 && self.q_min.is_finite()) {
            return Err(invalid("q_min", "must be positive"));
        }
        if !(self.dq > 0.0 && self.dq.is_finite()) {
            return Err(invalid("dq", "must be positive"));
        }
        if !(self.q_max > self.q_min && self.q_max.is_finite()) {
            return Err(invalid("q_max", "must exceed q_min"));
        }
        if self.l_cap == 0 {
            return Err(invalid("l_cap", "must be at least 1"));
        }
        Ok(())
    }

    /// `q_min, q_min + dq, …` up to `q_max`, computed by index to avoid drift.
    pub fn powers(&self) -> Vec<f64> {
        let n = ((self.q_max - self.q_min) / self.dq * (1.0 + 1e-12)).floor() as usize;
        (0..=n).map(|i| self.q_min + i as f64 * self.dq).collect()
    }
}

/// `Q_1, Q_2, …` at one power for one change point, computed until the value
/// drops below the smallest requested `θ` (inclusive of that first violation)
/// or the cap is reached.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovertSequence {
    pub q: f64,
    pub nu: u64,
    pub values: Vec<f64>,
    pub capped: bool,
    /// Set when the power is outside the analysed range of the test.
    pub skipped: Option<String>,
}

impl CovertSequence {
    /// Largest `L` such that `Q_1..Q_L` all meet `θ` (the duration search's exit rule).
    pub fn frontier(&self, theta: f64) -> u64 {
        self.values.iter().take_while(|&&v| v >= theta).count() as u64
    }
}

/// Frontier sequences for every grid power and every change point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierTable {
    pub test: TestKind,
    pub gamma: f64,
    pub nus: Vec<u64>,
    pub powers: Vec<f64>,
    /// `sequences[i][k]` is power `i`, change point `nus[k]`.
    pub sequences: Vec<Vec<CovertSequence>>,
}

impl FrontierTable {
    /// Best `(q, L)` for one change point, constraint level and noise ratio;
    /// ties go to the smallest `q`, then the smallest `L`.
    pub fn optimum(&self, nu: u64, theta: f64, sigma_ratio: f64) -> Result<Optimum> {
        check_theta(theta)?;
        check_ratio(sigma_ratio)?;
        let k = self
            .nus
            .iter()
            .position(|&n| n == nu)
            .ok_or_else(|| invalid("nu", format!("{nu} was not part of the sweep")))?;
        let mut trace = Vec::new();
        let mut best: Option<TracePoint> = None;
        let mut capped = Vec::new();
        for row in &self.sequences {
            let seq = &row[k];
            if seq.skipped.is_some() {
                continue;
            }
            let lstar = seq.frontier(theta);
            let shown = (lstar as usize + 1).min(seq.values.len());
            for (i, &v) in seq.values[..shown].iter().enumerate() {
                let l = i as u64 + 1;
                trace.push(TracePoint {
                    q: seq.q,
                    l,
                    covert: v,
                    utility: utility(seq.q, l, sigma_ratio),
                });
            }
            if lstar as usize == seq.values.len() && seq.capped {
                capped.push(seq.q);
            }
            if lstar == 0 {
                continue;
            }
            let cand = TracePoint {
                q: seq.q,
                l: lstar,
                covert: seq.values[lstar as usize - 1],
                utility: utility(seq.q, lstar, sigma_ratio),
            };
            if best.map_or(true, |b| cand.utility > b.utility) {
                best = Some(cand);
            }
        }
        if !capped.is_empty() {
            log::warn!(
                "duration cap reached before the constraint was violated at {} power(s)",
                capped.len()
            );
        }
        Ok(match best {
            Some(b) => Optimum {
                test: self.test,
                method: Method::Algorithm1,
                q_star: b.q,
                l_star: b.l,
                i_star: b.utility,
                covert: b.covert,
                feasible: true,
                trace,
                approx: None,
                capped,
            },
            None => Optimum {
                capped,
                ..Optimum::infeasible(self.test, Method::Algorithm1, trace)
            },
        })
    }
}

fn sequences_shewhart(q: f64, gamma: f64, nus: &[u64], theta_min: f64, cap: u64) -> Vec<CovertSequence> {
    let p = shewhart_miss_probability(q, gamma);
    let mut values = Vec::new();
    let mut v = 1.0;
    let mut capped = true;
    for _ in 0..cap {
        v *= p;
        values.push(v);
        if v < theta_min {
            capped = false;
            break;
        }
    }
    nus.iter()
        .map(|&nu| CovertSequence {
            q,
            nu,
            values: values.clone(),
            capped,
            skipped: None,
        })
        .collect()
}

/// Grows `L` with every change point sharing the same `Q_l(x)` tables.
fn grow<F>(q: f64, nus: &[u64], theta_min: f64, cap: u64, mut step: F) -> Result<Vec<CovertSequence>>
where
    F: FnMut(u64, &mut [f64], &[bool]) -> Result<()>,
{
    let mut seqs: Vec<CovertSequence> = nus
        .iter()
        .map(|&nu| CovertSequence {
            q,
            nu,
            values: Vec::new(),
            capped: true,
            skipped: None,
        })
        .collect();
    let mut active = vec![true; nus.len()];
    let mut out = vec![0.0; nus.len()];
    for l in 1..=cap {
        step(l, &mut out, &active)?;
        for (k, s) in seqs.iter_mut().enumerate() {
            if active[k] {
                s.values.push(out[k]);
                if out[k] < theta_min {
                    active[k] = false;
                    s.capped = false;
                }
            }
        }
        if !active.iter().any(|&a| a) {
            break;
        }
    }
    Ok(seqs)
}

fn sequences_cusum(q: f64, gamma: f64, nus: &[u64], theta_min: f64, cap: u64) -> Result<Vec<CovertSequence>> {
    let eta = calibrate_cached(TestKind::Cusum, gamma, q)?;
    let mut model = CusumModel::new(q, eta)?;
    let laws = nus.iter().map(|&nu| model.law(nu)).collect::<Result<Vec<_>>>()?;
    grow(q, nus, theta_min, cap, |l, out, active| {
        for (k, law) in laws.iter().enumerate() {
            if active[k] {
                out[k] = model.covert_with_law(l, law)?;
            }
        }
        Ok(())
    })
}

fn sequences_sr(q: f64, gamma: f64, nus: &[u64], theta_min: f64, cap: u64, nodes: usize) -> Result<Vec<CovertSequence>> {
    let eta = calibrate_cached(TestKind::Sr, gamma, q)?;
    let grid = build_sr_grid(nodes, q, eta)?;
    let laws = eval_g_sr_many(nus, q, &grid)?;
    let mut t = grid.t1();
    let mut prev: Option<Vec<f64>> = None;
    grow(q, nus, theta_min, cap, |l, out, active| {
        if l > 1 {
            let mut next = grid.apply_post(&t);
            next.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
            prev = Some(std::mem::replace(&mut t, next));
        }
        for (k, law) in laws.iter().enumerate() {
            if active[k] {
                out[k] = law.pair(&grid, &t, prev.as_deref()).clamp(0.0, 1.0);
            }
        }
        Ok(())
    })
}

/// Covert-probability sequences for one power across several change points.
pub fn covert_sequences(
    test: TestKind,
    q: f64,
    gamma: f64,
    nus: &[u64],
    theta_min: f64,
    grid: &SearchGrid,
) -> Result<Vec<CovertSequence>> {
    check_power(q)?;
    match test {
        TestKind::Shewhart => Ok(sequences_shewhart(q, gamma, nus, theta_min, grid.l_cap)),
        TestKind::Cusum => sequences_cusum(q, gamma, nus, theta_min, grid.l_cap),
        TestKind::Sr => {
            if gamma * q < 1.0 + q {
                let why = format!("SR analysis needs q ≥ 1/(γ-1) = {}", 1.0 / (gamma - 1.0));
                return Ok(nus
                    .iter()
                    .map(|&nu| CovertSequence {
                        q,
                        nu,
                        values: Vec::new(),
                        capped: false,
                        skipped: Some(why.clone()),
                    })
                    .collect());
            }
            sequences_sr(q, gamma, nus, theta_min, grid.l_cap, grid.sr_nodes)
        }
    }
}

/// Runs the per-power duration search for all grid powers in parallel.
/// `theta_min` is the smallest constraint level the table must answer.
pub fn frontier_table(test: TestKind, gamma: f64, nus: &[u64], theta_min: f64, grid: &SearchGrid) -> Result<FrontierTable> {
    check_gamma(gamma)?;
    check_theta(theta_min)?;
    grid.validate()?;
    if nus.is_empty() {
        return Err(invalid("nu", "at least one change point is required"));
    }
    let powers = grid.powers();
    let sequences = powers
        .par_iter()
        .map(|&q| covert_sequences(test, q, gamma, nus, theta_min, grid))
        .collect::<Result<Vec<_>>>()?;
    let skipped = sequences.iter().filter(|r| r[0].skipped.is_some()).count();
    if skipped > 0 {
        log::info!("{skipped} grid power(s) outside the analysed range of the {test} test were skipped");
    }
    Ok(FrontierTable {
        test,
        gamma,
        nus: nus.to_vec(),
        powers,
        sequences,
    })
}

/// Grid search over `q`, growing `L` at each power until the constraint
/// fails. An empty feasible set yields `feasible = false`.
pub fn algorithm1(test: TestKind, nu: u64, theta: f64, gamma: f64, sigma_ratio: f64, grid: &SearchGrid) -> Result<Optimum> {
    frontier_table(test, gamma, &[nu], theta, grid)?.optimum(nu, theta, sigma_ratio)
}

/// Upper bound on the attainable `θ` at a given power, from the probability
/// that the very first transmitted sample raises no alarm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub test: TestKind,
    pub q: f64,
    pub nu: u64,
    pub gamma: f64,
    /// No `(q, L)` system is `θ`-covert for `θ` above this value.
    pub theta_upper_bound: f64,
    /// `1 - theta_upper_bound`: lower bound on `1 - θ` for any covert system.
    pub bound_on_one_minus_theta: f64,
    /// Shewhart only: whether `θ < 1 - 1/γ`, i.e. some power works.
    pub shewhart_feasible: Option<bool>,
    /// Test-specific moment entering the bound: `E[e^{Ĉ_ν/(1+q)}]` for CUSUM,
    /// `E[((1+R_ν)/((1+q)η_r))^{1/q}]` for SR.
    pub limiting_moment: Option<f64>,
    pub theta: Option<f64>,
}

impl FeasibilityReport {
    pub fn admits(&self, theta: f64) -> bool {
        theta <= self.theta_upper_bound
    }
}

pub fn feasibility_check(test: TestKind, q: f64, nu: u64, gamma: f64, theta: Option<f64>, sr_nodes: usize) -> Result<FeasibilityReport> {
    check_power(q)?;
    check_gamma(gamma)?;
    if let Some(t) = theta {
        check_theta(t)?;
    }
    let (bound, moment) = match test {
        TestKind::Shewhart => (shewhart_miss_probability(q, gamma), None),
        TestKind::Cusum => {
            let eta = calibrate_cached(test, gamma, q)?;
            let m = CusumModel::new(q, eta)?.exp_moment(nu)?;
            (1.0 - m * (-(omega(q) + eta) / (1.0 + q)).exp(), Some(m))
        }
        TestKind::Sr => {
            let eta = calibrate_cached(test, gamma, q)?;
            let grid = build_sr_grid(sr_nodes, q, eta)?;
            let law = eval_g_sr(nu, q, &grid)?;
            let m = sr_power_moment(&grid, &law);
            (1.0 - m, Some(m))
        }
    };
    let bound = bound.clamp(0.0, 1.0);
    Ok(FeasibilityReport {
        test,
        q,
        nu,
        gamma,
        theta_upper_bound: bound,
        bound_on_one_minus_theta: 1.0 - bound,
        shewhart_feasible: (test == TestKind::Shewhart).then(|| theta.map(|t| shewhart_feasible(gamma, t))).flatten(),
        limiting_moment: moment,
        theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covert::covert_prob;

    #[test]
    fn utility_examples() {
        assert_eq!(utility(0.0, 7, 1.0), 0.0);
        assert!((utility(1.0, 10, 1.0) - 10.0 * 2f64.ln()).abs() < 1e-14);
        assert!((utility(0.5, 4, 2.0) - 4.0 * 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn lmax_examples() {
        assert_eq!(lmax_shewhart(500.0, 0.95).unwrap(), 25);
        assert_eq!(lmax_shewhart(500.0, 0.998 - 1e-6).unwrap(), 1);
        assert!(matches!(lmax_shewhart(500.0, 0.998), Err(Error::Infeasible(_))));
        assert!(matches!(lmax_shewhart(500.0, 0.999), Err(Error::Infeasible(_))));
    }

    #[test]
    fn active_power_examples() {
        let q = optimal_q_for_l_shewhart(10, 500.0, 0.95).unwrap();
        assert!((q - 0.1781).abs() < 1e-4, "{q}");
        let back = covert_prob(TestKind::Shewhart, q, 10, 0, 500.0, 0).unwrap().value;
        assert!((back - 0.95).abs() < 1e-12 * 0.95);
        let edge = optimal_q_for_l_shewhart(25, 500.0, 0.95).unwrap();
        assert!((0.0..0.05).contains(&edge));
        assert!(optimal_q_for_l_shewhart(26, 500.0, 0.95).is_err());
    }

    #[test]
    fn exhaustive_is_locally_optimal() {
        let o = exhaustive_shewhart(500.0, 0.95, 1.0).unwrap();
        assert!((o.covert - 0.95).abs() < 1e-9);
        for l in [o.l_star.saturating_sub(1), o.l_star + 1] {
            if (1..=25).contains(&l) {
                let q = optimal_q_for_l_shewhart(l, 500.0, 0.95).unwrap();
                assert!(utility(q, l, 1.0) <= o.i_star);
            }
        }
        let near = exhaustive_shewhart(500.0, 0.9979, 1.0).unwrap();
        assert_eq!(near.l_star, 1);
    }

    #[test]
    fn surrogate_roots_example() {
        let (u1, u2) = surrogate_roots(500.0).unwrap();
        assert!((u1 - 0.2524).abs() < 1e-4, "{u1}");
        assert!(u2 > u1);
        assert!(surrogate_roots(50.0).is_none());
        let o = approx_shewhart(50.0, 0.95, 1.0).unwrap();
        assert!(o.approx.unwrap().fallback);
    }

    #[test]
    fn approx_meets_constraint() {
        for gamma in [100.0, 500.0, 1000.0, 5000.0] {
            let a = approx_shewhart(gamma, 0.95, 1.0).unwrap();
            assert!((a.covert - 0.95).abs() < 1e-9);
        }
    }

    #[test]
    fn algorithm1_shewhart_matches_closed_form_scan() {
        let grid = SearchGrid {
            q_min: 0.01,
            q_max: 1.0,
            dq: 0.01,
            ..SearchGrid::default()
        };
        let o = algorithm1(TestKind::Shewhart, 0, 0.95, 500.0, 1.0, &grid).unwrap();
        assert!(o.feasible);
        let mut best = 0.0f64;
        for q in grid.powers() {
            best = best.max(utility(q, shewhart_duration_for_q(q, 500.0, 0.95), 1.0));
        }
        assert_eq!(o.i_star, best);
        assert!(o.covert >= 0.95);
        let next = shewhart_miss_probability(o.q_star, 500.0).powf(o.l_star as f64 + 1.0);
        assert!(next < 0.95);
    }

    #[test]
    fn algorithm1_reports_infeasible_without_error() {
        let grid = SearchGrid {
            q_min: 0.5,
            q_max: 1.0,
            dq: 0.25,
            ..SearchGrid::default()
        };
        let o = algorithm1(TestKind::Shewhart, 0, 0.9979, 500.0, 1.0, &grid).unwrap();
        assert!(!o.feasible);
        assert_eq!(o.i_star, 0.0);
    }

    #[test]
    fn powers_include_endpoint() {
        let g = SearchGrid {
            q_min: 1e-3,
            q_max: 2.0,
            dq: 1e-3,
            ..SearchGrid::default()
        };
        let p = g.powers();
        assert_eq!(p.len(), 2000);
        assert!((p[1999] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn feasibility_bounds() {
        let r = feasibility_check(TestKind::Shewhart, 0.3, 0, 500.0, Some(0.99), 0).unwrap();
        let q1 = covert_prob(TestKind::Shewhart, 0.3, 1, 0, 500.0, 0).unwrap().value;
        assert_eq!(r.theta_upper_bound, q1);
        assert_eq!(r.shewhart_feasible, Some(true));

        let (q, gamma) = (0.15, 500.0);
        for nu in [0, 40] {
            let r = feasibility_check(TestKind::Cusum, q, nu, gamma, None, 0).unwrap();
            let q1 = covert_prob(TestKind::Cusum, q, 1, nu, gamma, 0).unwrap().value;
            assert!((r.theta_upper_bound - q1).abs() < 1e-9, "{} vs {q1}", r.theta_upper_bound);
        }
        for nu in [0, 40] {
            let r = feasibility_check(TestKind::Sr, q, nu, gamma, None, 500).unwrap();
            let q1 = covert_prob(TestKind::Sr, q, 1, nu, gamma, 500).unwrap().value;
            assert!((r.theta_upper_bound - q1).abs() < 1e-9, "{} vs {q1}", r.theta_upper_bound);
        }
    }

    #[test]
    fn cusum_bound_stays_below_one_for_tiny_power() {
        let (q, gamma) = (1e-3, 500.0);
        let eta = calibrate_cached(TestKind::Cusum, gamma, q).unwrap();
        let envelope = 1.0 - (-(omega(q) + eta) / (1.0 + q)).exp();
        let r = feasibility_check(TestKind::Cusum, q, 50, gamma, None, 0).unwrap();
        assert!(r.theta_upper_bound <= envelope && r.theta_upper_bound < 1.0);
    }
}
