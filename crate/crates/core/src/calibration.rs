//! Thresholds that meet the average-run-length-to-false-alarm target γ.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};

use crate::covert::{lobatto_nodes, PiecewiseCheb};
use crate::detectors::TestKind;
use crate::error::{invalid, Error, Result};
use crate::numeric::{CompensatedSum, GaussLegendre, LnFactorials};
use crate::signal::{check_gamma, check_power, omega};

/// Largest number of ω-pieces the CUSUM run-length formula is evaluated on.
pub const MAX_CUSUM_PIECES: usize = 4096;

const BISECTION_RTOL: f64 = 1e-6;
const MAX_BRACKET_STEPS: usize = 256;
const BRACKET_GROWTH: f64 = 1.25;
/// The closed form is trusted when it matches the delay equation this well.
const CLOSED_FORM_RTOL: f64 = 1e-8;

/// Shewhart power threshold `ln γ`; the false-alarm probability per sample is
/// then exactly `1/γ`.
pub fn calibrate_shewhart(gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(gamma.ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CusumArlSolution {
    /// Expected run length from a zero start.
    pub phi0: f64,
    pub c_coeffs: Vec<f64>,
    pub eta_hat_c: f64,
    pub omega: f64,
}

impl CusumArlSolution {
    /// Expected run length when the statistic starts at `x`.
    pub fn phi(&self, x: f64) -> Result<f64> {
        cusum_phi(x, self.eta_hat_c, self.omega, self.phi0, &self.c_coeffs)
    }
}

fn cusum_pieces(eta_hat_c: f64, omega: f64) -> Result<usize> {
    let m = (eta_hat_c / omega).ceil();
    if !m.is_finite() || m > MAX_CUSUM_PIECES as f64 {
        return Err(Error::CapExceeded {
            what: "CUSUM pieces M",
            value: if m.is_finite() { m as usize } else { usize::MAX },
            cap: MAX_CUSUM_PIECES,
        });
    }
    Ok((m as usize).max(1))
}

/// Coefficients `c_0 ..= c_{m-1}` of the piecewise run-length formula.
pub fn cusum_c_coeffs(m: usize, omega: f64) -> Vec<f64> {
    let lf = LnFactorials::new(m + 1);
    let mut c = Vec::with_capacity(m);
    c.push(-1.0);
    for n in 1..m {
        let nw = n as f64 * omega;
        let mut s = CompensatedSum::new();
        s.add(-(-nw).exp());
        let lead = lf.pow_over_factorial_scaled(omega, n, -nw);
        s.add(if n % 2 == 0 { lead } else { -lead });
        for m_ in 1..n {
            let diff = c[n - 1 - m_] - c[n - m_];
            let t = diff * lf.pow_over_factorial_scaled((n - m_ + 1) as f64 * omega, m_, -(m_ as f64) * omega);
            s.add(if m_ % 2 == 0 { t } else { -t });
        }
        c.push(c[n - 1] + s.value());
    }
    c
}

/// `φ(x) - φ(0)` on piece `n`, with an optional extra exponential factor so
/// that quadrature of `g(x) e^{-x}` avoids overflow.
fn g_piece(x: f64, n: usize, omega: f64, c: &[f64], lf: &LnFactorials, exp_shift: f64) -> f64 {
    let mut s = CompensatedSum::new();
    s.add((1.0 + n as f64) * exp_shift.exp());
    for m in 0..=n {
        let t = c[n - m] * lf.pow_over_factorial_scaled(x - (m as f64 - 1.0) * omega, m, x - m as f64 * omega + exp_shift);
        s.add(if m % 2 == 0 { t } else { -t });
    }
    s.value()
}

/// Piecewise closed form for the CUSUM run length started at `x`.
pub fn cusum_phi(x: f64, eta_hat_c: f64, omega: f64, phi0: f64, c: &[f64]) -> Result<f64> {
    if !(x >= 0.0 && x < eta_hat_c) {
        return Err(Error::OutOfRange { x, upper: eta_hat_c });
    }
    let n = ((x / omega).floor() as usize).min(c.len() - 1);
    let lf = LnFactorials::new(n + 1);
    Ok(phi0 + g_piece(x, n, omega, c, &lf, 0.0))
}

/// Solves the renewal relation for `φ(0)`. The first step from zero resets
/// to 0 with probability `1 - e^{-ω}` and otherwise lands with density
/// `e^{-(x+ω)}` on `(0, η̂_c)`; since `φ = φ(0) + g` with `g` known in closed
/// form, the relation is linear in `φ(0)`:
/// `φ(0) = e^{ω+η̂_c} + e^{η̂_c} ∫_0^{η̂_c} g(y) e^{-y} dy`.
pub fn solve_phi0(eta_hat_c: f64, omega: f64, q: f64) -> Result<CusumArlSolution> {
    check_power(q)?;
    if !(eta_hat_c.is_finite() && eta_hat_c > 0.0) {
        return Err(invalid("eta_hat_c", format!("must be positive, got {eta_hat_c}")));
    }
    let m = cusum_pieces(eta_hat_c, omega)?;
    let c = cusum_c_coeffs(m, omega);
    let lf = LnFactorials::new(m + 1);
    let mut integral = CompensatedSum::new();
    for n in 0..m {
        let a = n as f64 * omega;
        let b = ((n + 1) as f64 * omega).min(eta_hat_c);
        if b <= a {
            continue;
        }
        // g e^{-y} is a degree-n polynomial plus a multiple of e^{-y} on this piece.
        let gl = GaussLegendre::new((n / 2 + 10).max(12));
        integral.add(gl.integrate(a, b, |y| g_piece(y, n, omega, &c, &lf, -y)));
    }
    let phi0 = (omega + eta_hat_c).exp() + eta_hat_c.exp() * integral.value();
    if !phi0.is_finite() {
        return Err(Error::NonFinite("CUSUM run length"));
    }
    Ok(CusumArlSolution {
        phi0,
        c_coeffs: c,
        eta_hat_c,
        omega,
    })
}

/// `φ(0)` from a direct discretization of the renewal equation: the atom at
/// zero plus `cells` midpoint states on `(0, η̂_c)`, solved by LU.
pub fn renewal_phi0(eta_hat_c: f64, omega: f64, cells: usize) -> Result<f64> {
    if cells < 2 {
        return Err(invalid("cells", "need at least two cells"));
    }
    let k = cells + 1;
    let h = eta_hat_c / cells as f64;
    let cdf = |x: f64, u: f64| -> f64 { -(-(x + omega - u).max(0.0)).exp_m1() };
    let mut a = DMatrix::<f64>::identity(k, k);
    for i in 0..k {
        let u = if i == 0 { 0.0 } else { (i as f64 - 0.5) * h };
        a[(i, 0)] -= cdf(0.0, u);
        for j in 1..k {
            let lo = (j - 1) as f64 * h;
            let hi = j as f64 * h;
            a[(i, j)] -= cdf(hi, u) - cdf(lo, u);
        }
    }
    let rhs = DVector::<f64>::from_element(k, 1.0);
    let sol = a.lu().solve(&rhs).ok_or(Error::NonFinite("renewal discretization"))?;
    let v = sol[0];
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("renewal discretization"))
    }
}

/// Richardson-extrapolated renewal estimate from `cells` and `2 cells`.
pub fn renewal_phi0_extrapolated(eta_hat_c: f64, omega: f64, cells: usize) -> Result<f64> {
    let coarse = renewal_phi0(eta_hat_c, omega, cells)?;
    let fine = renewal_phi0(eta_hat_c, omega, 2 * cells)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// `g = φ - φ(0)` on `[0, η̂_c]` from the delay equation
/// `g'(x) = g(x) - 1 - g(max(x - ω, 0))`, `g(0) = 0`, obtained by
/// differentiating the renewal relation. It is integrated one ω-piece at a
/// time by variation of constants, which only involves `e^{x-s}` with
/// `0 ≤ x - s ≤ ω` and therefore stays accurate where the alternating
/// closed-form sum cancels catastrophically.
#[derive(Debug, Clone)]
pub struct CusumDelaySolution {
    pub phi0: f64,
    pub eta_hat_c: f64,
    pub omega: f64,
    g: PiecewiseCheb,
}

impl CusumDelaySolution {
    pub fn phi(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0 && x < self.eta_hat_c) {
            return Err(Error::OutOfRange { x, upper: self.eta_hat_c });
        }
        Ok(self.phi0 + self.g.eval(x))
    }
}

const STEPS_DEGREE: usize = 32;
const STEPS_QUAD: usize = 40;

/// Solves for `φ(0)` via the renewal relation at the top of the range,
/// `φ(0) e^{-ω} = 1 - g(η̂) + ∫_{max(0,η̂-ω)}^{η̂} g(x) e^{η̂-ω-x} dx`, whose
/// terms are all of the order of `φ(0)`.
pub fn delay_phi0(eta_hat_c: f64, omega: f64) -> Result<CusumDelaySolution> {
    if !(eta_hat_c.is_finite() && eta_hat_c > 0.0) {
        return Err(invalid("eta_hat_c", format!("must be positive, got {eta_hat_c}")));
    }
    let m = cusum_pieces(eta_hat_c, omega)?;
    let gl = GaussLegendre::new(STEPS_QUAD);
    let mut breaks = Vec::with_capacity(m + 1);
    breaks.push(0.0);
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut prev: Option<PiecewiseCheb> = None;
    for k in 0..m {
        let a = k as f64 * omega;
        let b = ((k + 1) as f64 * omega).min(eta_hat_c);
        let b = if k + 1 == m { eta_hat_c } else { b };
        let g_a = values.last().map_or(0.0, |v| v[0]);
        let vals: Vec<f64> = lobatto_nodes(a, b, STEPS_DEGREE)
            .into_iter()
            .map(|u| {
                let grow = (u - a).exp_m1();
                let delayed = match &prev {
                    None => 0.0,
                    Some(p) if u > a => gl.integrate(a, u, |s| (u - s).exp() * p.eval(s - omega)),
                    Some(_) => 0.0,
                };
                g_a * (1.0 + grow) - grow - delayed
            })
            .collect();
        breaks.push(b);
        prev = Some(PiecewiseCheb::from_values(&[a, b], std::slice::from_ref(&vals)));
        values.push(vals);
    }
    let g = PiecewiseCheb::from_values(&breaks, &values);
    let lo = (eta_hat_c - omega).max(0.0);
    let mut cuts = vec![lo];
    cuts.extend(breaks.iter().copied().filter(|&x| x > lo && x < eta_hat_c));
    cuts.push(eta_hat_c);
    let mut tail = CompensatedSum::new();
    for w in cuts.windows(2) {
        tail.add(gl.integrate(w[0], w[1], |x| g.eval(x) * (eta_hat_c - omega - x).exp()));
    }
    let g_top = values.last().unwrap()[0];
    let phi0 = omega.exp() * (1.0 - g_top + tail.value());
    if !phi0.is_finite() {
        return Err(Error::NonFinite("CUSUM run length"));
    }
    Ok(CusumDelaySolution {
        phi0,
        eta_hat_c,
        omega,
        g,
    })
}

/// How the calibrated `φ(0)` was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArlRoute {
    /// The piecewise closed form agreed with the delay-equation solution.
    ClosedForm,
    /// The closed form lost precision; the delay-equation value was used.
    DelayEquation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CusumCalibration {
    pub eta_hat_c: f64,
    pub phi0: f64,
    pub route: ArlRoute,
    /// Closed-form `φ(0)` at the returned threshold, if it could be evaluated.
    pub closed_form_phi0: Option<f64>,
}

impl CusumCalibration {
    /// Independent `φ(0)` at the calibrated threshold from the renewal
    /// discretization with `cells` (and `2 cells`) states.
    pub fn renewal_check(&self, q: f64, cells: usize) -> Result<f64> {
        renewal_phi0_extrapolated(self.eta_hat_c, omega(q), cells)
    }
}

/// Bisection on the scaled threshold until `|φ(0) - γ|/γ ≤ 1e-6`, starting
/// from `[ω/2, 2ω]` and growing the bracket by a factor of 1.25.
pub fn calibrate_cusum(gamma: f64, q: f64) -> Result<CusumCalibration> {
    check_gamma(gamma)?;
    check_power(q)?;
    let w = omega(q);
    let (eta, phi0) = bisect_threshold(gamma, w, |e| delay_phi0(e, w).map(|s| s.phi0))?;
    let closed = solve_phi0(eta, w, q).ok().map(|s| s.phi0);
    let route = match closed {
        Some(c) if ((c - phi0) / phi0).abs() <= CLOSED_FORM_RTOL => ArlRoute::ClosedForm,
        _ => {
            log::debug!("closed-form CUSUM run length {closed:?} loses precision at threshold {eta}; using the delay equation");
            ArlRoute::DelayEquation
        }
    };
    Ok(CusumCalibration {
        eta_hat_c: eta,
        phi0,
        route,
        closed_form_phi0: closed,
    })
}

fn bisect_threshold<F: FnMut(f64) -> Result<f64>>(gamma: f64, omega: f64, mut phi0: F) -> Result<(f64, f64)> {
    let mut lo = 0.5 * omega;
    let mut hi = 2.0 * omega;
    let mut f_lo = phi0(lo)?;
    let mut f_hi = phi0(hi)?;
    let mut steps = 0;
    while f_lo > gamma {
        steps += 1;
        if steps > MAX_BRACKET_STEPS {
            return Err(Error::Calibration(format!(
                "run length stays above {gamma} for every threshold (it tends to e^ω = {:.6})",
                omega.exp()
            )));
        }
        hi = lo;
        f_hi = f_lo;
        lo /= BRACKET_GROWTH;
        f_lo = phi0(lo)?;
    }
    steps = 0;
    while f_hi < gamma {
        steps += 1;
        if steps > MAX_BRACKET_STEPS {
            return Err(Error::Calibration(format!("could not bracket γ = {gamma}")));
        }
        lo = hi;
        f_lo = f_hi;
        hi *= BRACKET_GROWTH;
        f_hi = phi0(hi)?;
    }
    if ((f_lo - gamma) / gamma).abs() <= BISECTION_RTOL {
        return Ok((lo, f_lo));
    }
    if ((f_hi - gamma) / gamma).abs() <= BISECTION_RTOL {
        return Ok((hi, f_hi));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = phi0(mid)?;
        if ((f - gamma) / gamma).abs() <= BISECTION_RTOL {
            return Ok((mid, f));
        }
        if f < gamma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Calibration(format!("bisection did not reach tolerance for γ = {gamma}")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrArlSolution {
    pub eta_r: f64,
    pub arl_at_zero: f64,
}

impl SrArlSolution {
    /// Expected run length from `R_0 = x`; affine with slope -1.
    pub fn phi(&self, x: f64, q: f64) -> f64 {
        sr_phi(x, self.eta_r, q)
    }
}

pub fn sr_phi(x: f64, eta_r: f64, q: f64) -> f64 {
    1.0 + (1.0 + q) * (eta_r - (1.0 + x) / (1.0 + q))
}

/// `η_r = γ/(1+q)`. Fails when that threshold is below `1/q`.
pub fn calibrate_sr(gamma: f64, q: f64) -> Result<SrArlSolution> {
    check_gamma(gamma)?;
    check_power(q)?;
    let eta_r = gamma / (1.0 + q);
    if eta_r < 1.0 / q {
        return Err(Error::SrThresholdTooLow {
            eta_r,
            q,
            bound: 1.0 / q,
        });
    }
    Ok(SrArlSolution {
        eta_r,
        arl_at_zero: sr_phi(0.0, eta_r, q),
    })
}

/// Threshold for any test: η_s′, η̂_c or η_r.
pub fn calibrate(kind: TestKind, gamma: f64, q: f64) -> Result<f64> {
    match kind {
        TestKind::Shewhart => {
            check_power(q)?;
            calibrate_shewhart(gamma)
        }
        TestKind::Cusum => calibrate_cusum(gamma, q).map(|c| c.eta_hat_c),
        TestKind::Sr => calibrate_sr(gamma, q).map(|s| s.eta_r),
    }
}

type CacheKey = (TestKind, u64, u64);

fn cache() -> &'static Mutex<HashMap<CacheKey, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// [`calibrate`] memoized per `(test, γ, q)` for the lifetime of the process.
pub fn calibrate_cached(kind: TestKind, gamma: f64, q: f64) -> Result<f64> {
    let key = (kind, gamma.to_bits(), q.to_bits());
    if let Some(&v) = cache().lock().expect("calibration cache poisoned").get(&key) {
        return Ok(v);
    }
    let v = calibrate(kind, gamma, q)?;
    cache().lock().expect("calibration cache poisoned").insert(key, v);
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shewhart_thresholds() {
        assert!((calibrate_shewhart(500.0).unwrap() - 6.214608).abs() < 1e-6);
        assert!((calibrate_shewhart(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-15);
        assert!(calibrate_shewhart(1.0).is_err());
    }

    #[test]
    fn sr_identity() {
        let s = calibrate_sr(500.0, 0.25).unwrap();
        assert_eq!(s.eta_r, 400.0);
        assert_eq!(s.arl_at_zero, 500.0);
        for gamma in [100.0, 200.0, 500.0, 1234.5] {
            for q in [0.05, 0.15, 0.7] {
                let s = calibrate_sr(gamma, q).unwrap();
                assert!((s.arl_at_zero - gamma).abs() < 1e-12 * gamma);
                assert!((s.phi(1.0, q) - (gamma - 1.0)).abs() < 1e-9);
            }
        }
        assert!(matches!(calibrate_sr(500.0, 0.001), Err(Error::SrThresholdTooLow { .. })));
    }

    #[test]
    fn c0_and_phi_at_zero() {
        let w = omega(0.15);
        let sol = solve_phi0(7.0, w, 0.15).unwrap();
        assert_eq!(sol.c_coeffs[0], -1.0);
        assert!((sol.phi(0.0).unwrap() - sol.phi0).abs() < 1e-12 * sol.phi0);
        assert!(sol.phi(7.0).is_err());
    }

    #[test]
    fn phi_is_continuous_and_nonincreasing() {
        let q = 0.5;
        let w = omega(q);
        let sol = solve_phi0(6.0, w, q).unwrap();
        for k in 1..sol.c_coeffs.len() {
            let x = k as f64 * w;
            let left = sol.phi(x - 1e-12).unwrap();
            let right = sol.phi(x).unwrap();
            assert!((left - right).abs() < 1e-9 * sol.phi0, "jump at {x}: {left} vs {right}");
        }
        let mut prev = f64::INFINITY;
        for i in 0..600 {
            let v = sol.phi(i as f64 * 0.01).unwrap();
            assert!(v <= prev + 1e-9);
            prev = v;
        }
    }

    #[test]
    fn degenerate_threshold_limit() {
        let q = 0.3;
        let w = omega(q);
        let sol = solve_phi0(1e-7, w, q).unwrap();
        assert!((sol.phi0 - w.exp()).abs() < 1e-5);
    }

    #[test]
    fn closed_form_matches_renewal_route() {
        for (q, eta) in [(0.15, 3.0), (0.5, 5.0), (0.15, 7.3), (1.0, 9.0)] {
            let w = omega(q);
            let a = solve_phi0(eta, w, q).unwrap().phi0;
            let b = renewal_phi0_extrapolated(eta, w, 400).unwrap();
            assert!(((a - b) / a).abs() < 5e-4, "q={q} eta={eta}: {a} vs {b}");
        }
        // Known values from an independent simulation of the statistic.
        let a = solve_phi0(3.0, omega(0.15), 0.15).unwrap().phi0;
        assert!((a - 22.834).abs() < 0.01, "{a}");
        let b = solve_phi0(5.0, omega(0.5), 0.5).unwrap().phi0;
        assert!((b - 82.487).abs() < 0.01, "{b}");
    }

    #[test]
    fn cusum_calibration_properties() {
        let c = calibrate_cusum(500.0, 0.15).unwrap();
        assert_eq!(c.route, ArlRoute::ClosedForm);
        let again = solve_phi0(c.eta_hat_c, omega(0.15), 0.15).unwrap().phi0;
        assert!(((again - 500.0) / 500.0).abs() <= 1e-6);
        let mut prev = 0.0;
        for gamma in [100.0, 500.0, 1000.0] {
            let e = calibrate_cusum(gamma, 0.15).unwrap().eta_hat_c;
            assert!(e > prev);
            prev = e;
        }
        // Strictly increasing over the initial bracket.
        let w = omega(0.15);
        let mut prev = 0.0;
        for i in 0..=30 {
            let eta = w * (0.5 + 1.5 * i as f64 / 30.0);
            let p = solve_phi0(eta, w, 0.15).unwrap().phi0;
            assert!(p > prev);
            prev = p;
        }
    }

    #[test]
    fn quadrature_resolution_is_converged() {
        // The integrand is polynomial per piece, so the default rule is exact;
        // compare against a much finer rule anyway.
        let q = 0.15;
        let w = omega(q);
        let eta = 7.4;
        let sol = solve_phi0(eta, w, q).unwrap();
        let lf = LnFactorials::new(64);
        let gl = GaussLegendre::new(40);
        let mut s = CompensatedSum::new();
        for n in 0..sol.c_coeffs.len() {
            let a = n as f64 * w;
            let b = ((n + 1) as f64 * w).min(eta);
            for k in 0..2 {
                let (lo, hi) = (a + (b - a) * k as f64 / 2.0, a + (b - a) * (k + 1) as f64 / 2.0);
                s.add(gl.integrate(lo, hi, |y| g_piece(y, n, w, &sol.c_coeffs, &lf, -y)));
            }
        }
        let fine = (w + eta).exp() + eta.exp() * s.value();
        assert!(((fine - sol.phi0) / sol.phi0).abs() < 1e-6);
    }

    #[test]
    fn delay_equation_matches_closed_form() {
        for (q, eta) in [(0.15, 3.0), (0.5, 5.0), (0.15, 7.3), (1.0, 9.0), (0.3, 0.2)] {
            let w = omega(q);
            let a = solve_phi0(eta, w, q).unwrap();
            let b = delay_phi0(eta, w).unwrap();
            assert!(((a.phi0 - b.phi0) / a.phi0).abs() < 1e-10, "q={q} eta={eta}: {} vs {}", a.phi0, b.phi0);
            for i in 0..20 {
                let x = eta * i as f64 / 20.0;
                assert!((a.phi(x).unwrap() - b.phi(x).unwrap()).abs() < 1e-9 * a.phi0);
            }
        }
    }

    #[test]
    fn delay_equation_stays_accurate_for_many_pieces() {
        // ~26 pieces: the alternating closed form is unusable here.
        let (q, eta) = (0.02, 26.0);
        let w = omega(q);
        let a = delay_phi0(eta, w).unwrap().phi0;
        let b = renewal_phi0_extrapolated(eta, w, 800).unwrap();
        assert!(((a - b) / a).abs() < 5e-4, "{a} vs {b}");
        for gamma in [1000.0] {
            for q in [1e-3, 0.05] {
                let c = calibrate_cusum(gamma, q).unwrap();
                assert!(((c.phi0 - gamma) / gamma).abs() <= 1e-6);
                let r = c.renewal_check(q, (25.0 * c.eta_hat_c) as usize).unwrap();
                assert!(((r - gamma) / gamma).abs() < 1e-3, "{c:?} renewal {r}");
            }
        }
    }

    #[test]
    fn unattainable_target_is_reported() {
        // e^ω exceeds γ for large q, so no threshold works.
        assert!(matches!(calibrate_cusum(2.0, 5.0), Err(Error::Calibration(_))));
    }

    #[test]
    fn cached_calibration_is_stable() {
        let a = calibrate_cached(TestKind::Cusum, 300.0, 0.2).unwrap();
        let b = calibrate_cached(TestKind::Cusum, 300.0, 0.2).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
