//! CUSUM covert probability: `Q_L = ∫ Q_L(x) dG_ν(x)`, atom at 0 plus a
//! piecewise Gauss-Legendre integral over the continuous part.

use serde::Serialize;

use super::cusum_oracle::{CusumOracle, DEFAULT_RESOLUTION};
use super::cusum_tables::{CusumCoeffA, CusumCoeffV, QUASI_STATIONARY_TOL};
use super::{CovertDiagnostics, CovertResult};
use crate::detectors::TestKind;
use crate::error::{Error, Result};
use crate::numeric::{CompensatedSum, GaussLegendre};
use crate::signal::{check_duration, SampleStream};

/// Depth of the startup comparison between the tables and the oracle.
pub const SELF_TEST_DEPTH: usize = 10;
pub const SELF_TEST_POINTS: usize = 50;
pub const SELF_TEST_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CusumRoute {
    /// Closed-form coefficient tables.
    Tables,
    /// Direct iteration of the integral recursions.
    Oracle,
}

/// Pre-change law of the statistic at `ν`, discretized for integration:
/// `∫ f dG_ν ≈ atom·f(0) + Σ weights[k]·f(nodes[k])`.
#[derive(Debug, Clone)]
pub struct CusumLaw {
    pub nu: u64,
    pub atom: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Table depth actually used (smaller than `nu` once quasi-stationary).
    pub depth: usize,
}

impl CusumLaw {
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        let mut s = CompensatedSum::new();
        s.add(self.atom * f(0.0));
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s.add(w * f(*x));
        }
        s.value()
    }
}

/// Everything needed to evaluate CUSUM covert probabilities at one `(q, η̂_c)`.
#[derive(Debug, Clone)]
pub struct CusumModel {
    pub q: f64,
    pub eta_hat_c: f64,
    route: CusumRoute,
    v: CusumCoeffV,
    a: CusumCoeffA,
    oracle: Option<CusumOracle>,
    oracle_converged_at: Option<usize>,
    /// Integration pieces aligned to both breakpoint families.
    pieces: Vec<(f64, f64)>,
    gl: GaussLegendre,
    self_test_error: Option<f64>,
}

impl CusumModel {
    /// Builds the model and checks the tables against the oracle; on
    /// disagreement it switches to the oracle and logs the event.
    pub fn new(q: f64, eta_hat_c: f64) -> Result<Self> {
        let err = self_test(q, eta_hat_c)?;
        let route = if err <= SELF_TEST_TOL {
            CusumRoute::Tables
        } else {
            log::warn!("CUSUM coefficient tables deviate from the integral recursion by {err:e} at q = {q}, threshold {eta_hat_c}; using the numeric recursion");
            CusumRoute::Oracle
        };
        let mut m = Self::with_route(q, eta_hat_c, route)?;
        m.self_test_error = Some(err);
        Ok(m)
    }

    /// Builds the model on a fixed route without the startup comparison.
    pub fn with_route(q: f64, eta_hat_c: f64, route: CusumRoute) -> Result<Self> {
        let v = CusumCoeffV::new(q, eta_hat_c)?;
        let a = CusumCoeffA::new(q, eta_hat_c)?;
        let oracle = match route {
            CusumRoute::Oracle => Some(CusumOracle::new(q, eta_hat_c, DEFAULT_RESOLUTION)?),
            CusumRoute::Tables => None,
        };
        let (w, m) = (v.omega, v.m);
        let mut breaks = vec![0.0, eta_hat_c];
        for k in 1..=m {
            breaks.push(k as f64 * w);
            breaks.push(eta_hat_c - k as f64 * w);
        }
        breaks.retain(|&b| (0.0..=eta_hat_c).contains(&b));
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let pieces = breaks.windows(2).map(|p| (p[0], p[1])).filter(|p| p.1 > p.0).collect();
        Ok(Self {
            q,
            eta_hat_c,
            route,
            v,
            a,
            oracle,
            oracle_converged_at: None,
            pieces,
            gl: GaussLegendre::new((m + 4).max(24)),
            self_test_error: None,
        })
    }

    pub fn route(&self) -> CusumRoute {
        self.route
    }

    /// Max deviation found by the startup comparison, when it ran.
    pub fn self_test_error(&self) -> Option<f64> {
        self.self_test_error
    }

    pub fn v_tables(&self) -> &CusumCoeffV {
        &self.v
    }

    pub fn a_tables(&self) -> &CusumCoeffA {
        &self.a
    }

    fn ensure_q_depth(&mut self, n: usize) -> Result<()> {
        match self.route {
            CusumRoute::Tables => self.v.extend_to(n),
            CusumRoute::Oracle => {
                self.oracle.as_mut().unwrap().extend_q_to(n);
                Ok(())
            }
        }
    }

    fn q_raw(&self, n: usize, x: f64) -> f64 {
        match self.route {
            CusumRoute::Tables => self.v.eval_raw(n, x),
            CusumRoute::Oracle => self.oracle.as_ref().unwrap().q_at(n, x),
        }
    }

    /// `Q_n(x)` clamped into [0, 1].
    pub fn q_at(&mut self, n: usize, x: f64) -> Result<f64> {
        if !(x >= 0.0 && x < self.eta_hat_c) {
            return Err(Error::OutOfRange { x, upper: self.eta_hat_c });
        }
        check_duration(n as u64)?;
        self.ensure_q_depth(n)?;
        Ok(self.q_raw(n, x).clamp(0.0, 1.0))
    }

    fn extend_oracle_g(&mut self, nu: usize) -> usize {
        let o = self.oracle.as_mut().unwrap();
        if let Some(d) = self.oracle_converged_at {
            return nu.min(d);
        }
        let probes: Vec<f64> = (0..64).map(|k| self.eta_hat_c * k as f64 / 64.0).collect();
        let m = self.v.m;
        while o.g_depth() < nu {
            o.push_g();
            let d = o.g_depth();
            if d > m + 1 {
                let gap = probes.iter().map(|&x| (o.g_at(d, x) - o.g_at(d - 1, x)).abs()).fold(0.0, f64::max);
                if gap < QUASI_STATIONARY_TOL {
                    self.oracle_converged_at = Some(d);
                    return d;
                }
            }
        }
        nu
    }

    /// Law of the statistic at `ν` given no alarm so far (`ν = 0` is the
    /// point mass at 0).
    pub fn law(&mut self, nu: u64) -> Result<CusumLaw> {
        if nu == 0 {
            return Ok(CusumLaw {
                nu,
                atom: 1.0,
                nodes: Vec::new(),
                weights: Vec::new(),
                depth: 0,
            });
        }
        let nu_us = usize::try_from(nu).unwrap_or(usize::MAX);
        let depth = match self.route {
            CusumRoute::Tables => {
                self.a.extend_to(nu_us.min(super::cusum_tables::MAX_TABLE_DEPTH))?;
                self.a.effective_depth(nu_us)
            }
            CusumRoute::Oracle => self.extend_oracle_g(nu_us),
        };
        let (atom, density): (f64, Box<dyn Fn(f64) -> f64 + '_>) = match self.route {
            CusumRoute::Tables => (self.a.eval_raw(depth, 0.0, false), Box::new(|x| self.a.density(depth, x))),
            CusumRoute::Oracle => {
                let o = self.oracle.as_ref().unwrap();
                (o.atom(depth), Box::new(move |x| o.density(depth, x)))
            }
        };
        let mut nodes = Vec::with_capacity(self.pieces.len() * self.gl.nodes.len());
        let mut weights = Vec::with_capacity(nodes.capacity());
        for &(a, b) in &self.pieces {
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (t, w) in self.gl.nodes.iter().zip(&self.gl.weights) {
                let x = mid + half * t;
                nodes.push(x);
                weights.push(half * w * density(x).max(0.0));
            }
        }
        Ok(CusumLaw {
            nu,
            atom,
            nodes,
            weights,
            depth,
        })
    }

    /// `∫ Q_l(x) dG(x)` for a law built by [`CusumModel::law`].
    pub fn covert_with_law(&mut self, l: u64, law: &CusumLaw) -> Result<f64> {
        check_duration(l)?;
        let n = usize::try_from(l).map_err(|_| Error::CapExceeded {
            what: "L",
            value: usize::MAX,
            cap: super::cusum_tables::MAX_TABLE_DEPTH,
        })?;
        self.ensure_q_depth(n)?;
        let v = law.integrate(|x| self.q_raw(n, x).clamp(0.0, 1.0));
        if !v.is_finite() {
            return Err(Error::NonFinite("CUSUM covert probability"));
        }
        Ok(v.clamp(0.0, 1.0))
    }

    pub fn covert(&mut self, l: u64, nu: u64) -> Result<CovertResult> {
        let law = self.law(nu)?;
        let value = self.covert_with_law(l, &law)?;
        Ok(CovertResult {
            value,
            test: TestKind::Cusum,
            diagnostics: CovertDiagnostics {
                grid_nodes: None,
                table_depth: Some(law.depth),
                atom_mass: Some(law.atom),
                route: Some(self.route),
            },
        })
    }

    /// `E[e^{Ĉ_ν/(1+q)} | no alarm by ν]`, used by the feasibility bound.
    pub fn exp_moment(&mut self, nu: u64) -> Result<f64> {
        let law = self.law(nu)?;
        let a = 1.0 + self.q;
        Ok(law.integrate(|x| (x / a).exp()))
    }
}

/// Largest absolute difference between the coefficient tables and the
/// integral-recursion oracle over `n ≤ 10`, 50 pseudo-random points per `n`,
/// for both `Q_n` and `G_n`.
pub fn self_test(q: f64, eta_hat_c: f64) -> Result<f64> {
    let mut v = CusumCoeffV::new(q, eta_hat_c)?;
    let mut a = CusumCoeffA::new(q, eta_hat_c)?;
    v.extend_to(SELF_TEST_DEPTH)?;
    for _ in 1..SELF_TEST_DEPTH {
        a.push_next()?;
    }
    let mut o = CusumOracle::new(q, eta_hat_c, DEFAULT_RESOLUTION)?;
    o.extend_q_to(SELF_TEST_DEPTH);
    o.extend_g_to(SELF_TEST_DEPTH);
    let mut stream = SampleStream::new(0x5e1f_7e57, 0);
    let mut err: f64 = 0.0;
    for n in 1..=SELF_TEST_DEPTH {
        for _ in 0..SELF_TEST_POINTS {
            let x = stream.uniform() * eta_hat_c;
            err = err.max((v.eval_raw(n, x) - o.q_at(n, x)).abs());
            err = err.max((a.eval_raw(n, x, false) - o.g_at(n, x)).abs());
        }
    }
    if err.is_finite() {
        Ok(err)
    } else {
        Ok(f64::INFINITY)
    }
}

/// CUSUM covert probability at a calibrated scaled threshold.
pub fn covert_prob_cusum(q: f64, l: u64, nu: u64, eta_hat_c: f64) -> Result<CovertResult> {
    check_duration(l)?;
    CusumModel::new(q, eta_hat_c)?.covert(l, nu)
}
