//! Independent reference for the CUSUM tables: direct iteration of the
//! defining integral recursions.
//!
//! `Q_{n+1}(x) = Q_n(0)(1 - e^{(x-ω)/(1+q)}) + e^{(x-ω)/(1+q)}/(1+q) ∫_0^{η̂} Q_n(y) e^{-y/(1+q)} dy`
//! for `x < ω`; for `x ≥ ω` the integral starts at `x - ω` and there is no
//! reset term. The pre-change law is carried as an atom at 0 plus a density,
//! each step mapping `(a, f)` to
//! density `e^{-(x+ω)} (a + ∫_0^{min(x+ω, η̂)} e^y f(y) dy)` and
//! atom `a(1 - e^{-ω}) + ∫_0^{min(ω, η̂)} (1 - e^{-(ω-y)}) f(y) dy`,
//! then renormalizing. Every iterate is smooth between the breakpoints
//! `kω` (for `Q`) and `η̂ - kω` (for `G`), so each piece is held as a
//! Chebyshev interpolant and integrated exactly.

use super::cheb::{lobatto_nodes, PiecewiseCheb};
use crate::error::{invalid, Error, Result};
use crate::signal::{check_power, omega};

/// Interpolation degree per piece used when none is requested.
pub const DEFAULT_RESOLUTION: usize = 32;

#[derive(Debug, Clone)]
pub struct CusumOracle {
    pub q: f64,
    pub eta_hat_c: f64,
    pub omega: f64,
    pub resolution: usize,
    q_breaks: Vec<f64>,
    g_breaks: Vec<f64>,
    q_fns: Vec<PiecewiseCheb>,
    atoms: Vec<f64>,
    densities: Vec<PiecewiseCheb>,
    /// `G̃_n(η̂)`, the survival mass before renormalization.
    norms: Vec<f64>,
}

fn merge_breaks(mut b: Vec<f64>, eta: f64) -> Vec<f64> {
    b.sort_by(f64::total_cmp);
    let tol = 1e-12 * eta.max(1.0);
    let mut out: Vec<f64> = Vec::with_capacity(b.len());
    for x in b {
        if out.last().is_none_or(|&last| x - last > tol) {
            out.push(x);
        }
    }
    *out.last_mut().unwrap() = eta;
    out
}

impl CusumOracle {
    pub fn new(q: f64, eta_hat_c: f64, resolution: usize) -> Result<Self> {
        check_power(q)?;
        if !(eta_hat_c.is_finite() && eta_hat_c > 0.0) {
            return Err(invalid("eta_hat_c", format!("must be positive, got {eta_hat_c}")));
        }
        if resolution < 4 {
            return Err(invalid("resolution", "need at least 4 nodes per piece"));
        }
        let w = omega(q);
        let m = (eta_hat_c / w).ceil() as usize;
        if m > crate::calibration::MAX_CUSUM_PIECES {
            return Err(Error::CapExceeded {
                what: "CUSUM pieces M",
                value: m,
                cap: crate::calibration::MAX_CUSUM_PIECES,
            });
        }
        let mut qb: Vec<f64> = (0..m).map(|k| k as f64 * w).filter(|&x| x < eta_hat_c).collect();
        qb.push(eta_hat_c);
        let mut gb: Vec<f64> = vec![0.0, eta_hat_c];
        gb.extend((1..m).map(|k| eta_hat_c - k as f64 * w).filter(|&x| x > 0.0));
        let q_breaks = merge_breaks(qb, eta_hat_c);
        let g_breaks = merge_breaks(gb, eta_hat_c);

        let a = 1.0 + q;
        let q1 = PiecewiseCheb::from_fn(&q_breaks, resolution, |x| -(-(eta_hat_c + w - x) / a).exp_m1());
        let z1 = 1.0 - (-(w + eta_hat_c)).exp();
        let atom1 = (1.0 - (-w).exp()) / z1;
        let dens1 = PiecewiseCheb::from_fn(&g_breaks, resolution, |x| (-(x + w)).exp() / z1);
        Ok(Self {
            q,
            eta_hat_c,
            omega: w,
            resolution,
            q_breaks,
            g_breaks,
            q_fns: vec![q1],
            atoms: vec![atom1],
            densities: vec![dens1],
            norms: vec![z1],
        })
    }

    pub fn q_depth(&self) -> usize {
        self.q_fns.len()
    }

    pub fn g_depth(&self) -> usize {
        self.atoms.len()
    }

    fn sample<F: FnMut(f64) -> f64>(&self, breaks: &[f64], mut f: F) -> Vec<Vec<f64>> {
        breaks
            .windows(2)
            .map(|b| lobatto_nodes(b[0], b[1], self.resolution).into_iter().map(&mut f).collect())
            .collect()
    }

    pub fn push_q(&mut self) {
        let (w, a) = (self.omega, 1.0 + self.q);
        let prev = self.q_fns.last().unwrap();
        let weighted = PiecewiseCheb::from_values(
            &self.q_breaks,
            &self.sample(&self.q_breaks, |y| prev.eval(y) * (-y / a).exp()),
        );
        let total = weighted.total();
        let q0 = prev.eval(0.0);
        let values = self.sample(&self.q_breaks, |x| {
            let e = ((x - w) / a).exp();
            if x < w {
                q0 * (1.0 - e) + e / a * total
            } else {
                e / a * (total - weighted.cumulative(x - w))
            }
        });
        self.q_fns.push(PiecewiseCheb::from_values(&self.q_breaks, &values));
    }

    pub fn push_g(&mut self) {
        let (w, eta) = (self.omega, self.eta_hat_c);
        let atom = *self.atoms.last().unwrap();
        let f = self.densities.last().unwrap();
        let h = PiecewiseCheb::from_values(&self.g_breaks, &self.sample(&self.g_breaks, |y| y.exp() * f.eval(y)));
        let values = self.sample(&self.g_breaks, |x| (-(x + w)).exp() * (atom + h.cumulative((x + w).min(eta))));
        let dens = PiecewiseCheb::from_values(&self.g_breaks, &values);
        let top = w.min(eta);
        let new_atom = atom * (1.0 - (-w).exp()) + f.cumulative(top) - (-w).exp() * h.cumulative(top);
        let z = new_atom + dens.total();
        let scaled: Vec<Vec<f64>> = values.iter().map(|v| v.iter().map(|x| x / z).collect()).collect();
        self.atoms.push(new_atom / z);
        self.densities.push(PiecewiseCheb::from_values(&self.g_breaks, &scaled));
        self.norms.push(z);
    }

    pub fn extend_q_to(&mut self, n: usize) {
        while self.q_depth() < n {
            self.push_q();
        }
    }

    pub fn extend_g_to(&mut self, n: usize) {
        while self.g_depth() < n {
            self.push_g();
        }
    }

    /// `Q_n(x)`.
    pub fn q_at(&self, n: usize, x: f64) -> f64 {
        self.q_fns[n - 1].eval(x)
    }

    /// Atom of `G_n` at 0.
    pub fn atom(&self, n: usize) -> f64 {
        self.atoms[n - 1]
    }

    /// Density of the continuous part of `G_n`.
    pub fn density(&self, n: usize, x: f64) -> f64 {
        self.densities[n - 1].eval(x)
    }

    /// `G_n(x)`, the normalized conditional CDF.
    pub fn g_at(&self, n: usize, x: f64) -> f64 {
        self.atoms[n - 1] + self.densities[n - 1].cumulative(x)
    }

    /// `G̃_n(x)`, before renormalization.
    pub fn g_tilde_at(&self, n: usize, x: f64) -> f64 {
        self.norms[n - 1] * self.g_at(n, x)
    }

    /// Largest change in `Q` and `G` values (depths as built) when the
    /// interpolation degree is doubled.
    pub fn convergence_gap(&self) -> Result<f64> {
        let fine = integral_oracle_cusum(self.q_depth().max(self.g_depth()), self.q, self.eta_hat_c, 2 * self.resolution)?;
        let mut gap: f64 = 0.0;
        for k in 0..200 {
            let x = self.eta_hat_c * (k as f64 + 0.5) / 200.0;
            for n in 1..=self.q_depth() {
                gap = gap.max((self.q_at(n, x) - fine.q_at(n, x)).abs());
            }
            for n in 1..=self.g_depth() {
                gap = gap.max((self.g_at(n, x) - fine.g_at(n, x)).abs());
            }
        }
        Ok(gap)
    }

    /// Fails when doubling the resolution moves values by more than `tol`.
    pub fn check_resolution(&self, tol: f64) -> Result<f64> {
        let gap = self.convergence_gap()?;
        if gap > tol {
            Err(Error::ResolutionTooCoarse { gap })
        } else {
            Ok(gap)
        }
    }
}

/// Builds `Q_1..Q_n` and `G_1..G_n` by direct iteration.
pub fn integral_oracle_cusum(n: usize, q: f64, eta_hat_c: f64, resolution: usize) -> Result<CusumOracle> {
    if n == 0 {
        return Err(invalid("n", "need at least one step"));
    }
    let mut o = CusumOracle::new(q, eta_hat_c, resolution)?;
    o.extend_q_to(n);
    o.extend_g_to(n);
    Ok(o)
}
