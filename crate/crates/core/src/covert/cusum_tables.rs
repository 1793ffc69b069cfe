//! Coefficient tables for the CUSUM covert probability.
//!
//! `Q_n(x)`, the probability that `n` post-change samples started from
//! `Ĉ = x` raise no alarm, and `G_n(x)`, the law of `Ĉ_n` given no alarm by
//! `n`, are both piecewise "polynomial times exponential" in `x`. The tables
//! hold the coefficients; row `i` (1-based) of table `n` has `i + 1` entries.

use crate::calibration::MAX_CUSUM_PIECES;
use crate::error::{invalid, Error, Result};
use crate::numeric::{CompensatedSum, LnFactorials};
use crate::signal::{check_power, omega};

/// Deepest table (in `n`) either builder will produce.
pub const MAX_TABLE_DEPTH: usize = 1_000_000;

/// Sup-norm change in `G_n` below which the conditional law is treated as
/// quasi-stationary.
pub const QUASI_STATIONARY_TOL: f64 = 1e-8;

type Tri = Vec<Vec<f64>>;

fn pieces(q: f64, eta_hat_c: f64) -> Result<(f64, usize)> {
    check_power(q)?;
    if !(eta_hat_c.is_finite() && eta_hat_c > 0.0) {
        return Err(invalid("eta_hat_c", format!("must be positive, got {eta_hat_c}")));
    }
    let w = omega(q);
    let m = (eta_hat_c / w).ceil();
    if m > MAX_CUSUM_PIECES as f64 {
        return Err(Error::CapExceeded {
            what: "CUSUM pieces M",
            value: m as usize,
            cap: MAX_CUSUM_PIECES,
        });
    }
    Ok((w, (m as usize).max(1)))
}

fn check_depth(n: usize) -> Result<()> {
    if n > MAX_TABLE_DEPTH {
        return Err(Error::CapExceeded {
            what: "table depth",
            value: n,
            cap: MAX_TABLE_DEPTH,
        });
    }
    Ok(())
}

fn check_x(x: f64, eta: f64) -> Result<()> {
    if x >= 0.0 && x < eta {
        Ok(())
    } else {
        Err(Error::OutOfRange { x, upper: eta })
    }
}

#[inline]
fn clamp_probability(v: f64, what: &str) -> f64 {
    if !(-1e-9..=1.0 + 1e-9).contains(&v) {
        log::debug!("{what} = {v} clamped into [0, 1]");
    }
    v.clamp(0.0, 1.0)
}

/// Tables for `Q_n(x)`, the post-change no-alarm probability.
#[derive(Debug, Clone)]
pub struct CusumCoeffV {
    pub q: f64,
    pub eta_hat_c: f64,
    pub omega: f64,
    pub m: usize,
    pub alpha: f64,
    /// `beta[i] = e^{-iω/(1+q)}` for `i = 0..=M`.
    pub beta: Vec<f64>,
    pub beta_under: f64,
    tables: Vec<Tri>,
    lf: LnFactorials,
}

impl CusumCoeffV {
    pub fn new(q: f64, eta_hat_c: f64) -> Result<Self> {
        let (w, m) = pieces(q, eta_hat_c)?;
        let v1 = vec![vec![1.0, -(-(eta_hat_c + w) / (1.0 + q)).exp()]];
        Ok(Self {
            q,
            eta_hat_c,
            omega: w,
            m,
            alpha: (-w / (1.0 + q)).exp() / (1.0 + q),
            beta: (0..=m).map(|i| (-(i as f64) * w / (1.0 + q)).exp()).collect(),
            beta_under: (-eta_hat_c / (1.0 + q)).exp(),
            tables: vec![v1],
            lf: LnFactorials::new(m + 2),
        })
    }

    pub fn depth(&self) -> usize {
        self.tables.len()
    }

    /// `V_{n,i,j}` (all indices 1-based).
    pub fn get(&self, n: usize, i: usize, j: usize) -> f64 {
        self.tables[n - 1][i - 1][j - 1]
    }

    fn theta(&self, a: f64, b: f64, l: usize) -> f64 {
        self.lf.pow_over_factorial(a * self.omega, l) - self.lf.pow_over_factorial(b * self.omega - self.eta_hat_c, l)
    }

    /// Appends table `n + 1`.
    pub fn push_next(&mut self) -> Result<()> {
        let n = self.depth();
        check_depth(n + 1)?;
        let (q, m, a) = (self.q, self.m, self.alpha);
        let vn = &self.tables[n - 1];
        let v = |i: usize, j: usize| vn[i - 1][j - 1];
        let nm = n.min(m);
        let psi = |k: usize| -> f64 {
            let mut s = CompensatedSum::new();
            if k < nm {
                s.add((1.0 + q) * (self.beta[k - 1] - self.beta[k]) * v(k, 1));
                for l in 1..=k {
                    s.add(v(k, l + 1) * self.lf.pow_over_factorial(self.omega, l));
                }
            } else if k == n && n <= m {
                s.add((1.0 + q) * (self.beta[n - 1] - self.beta_under) * v(n, 1));
                for l in 1..=n {
                    s.add(v(n, l + 1) * self.theta(l as f64 - n as f64, l as f64 - 1.0, l));
                }
            } else {
                debug_assert!(k == m && n > m);
                s.add((1.0 + q) * (self.beta[m - 1] - self.beta_under) * v(m, 1));
                for l in 1..=m {
                    s.add(v(m, l + 1) * self.theta(1.0, m as f64, l));
                }
            }
            s.value()
        };
        let psis: Vec<f64> = (1..=nm).map(psi).collect();
        let mut suffix = vec![0.0; nm + 2];
        for k in (1..=nm).rev() {
            suffix[k] = suffix[k + 1] + psis[k - 1];
        }

        let rows = (n + 1).min(m);
        let mut w: Tri = (1..=rows).map(|i| vec![0.0; i + 1]).collect();
        w[0][0] = v(1, 1) + v(1, 2);
        for i in 2..=rows {
            w[i - 1][0] = v(i - 1, 1);
            for j in 3..=i + 1 {
                w[i - 1][j - 1] = a * v(i - 1, j - 1);
            }
        }
        for i in 1..=nm {
            w[i - 1][1] = -w[i - 1][0] * self.beta[i] + a * suffix[i];
        }
        if n < m {
            let mut s = CompensatedSum::new();
            for k in 1..=n {
                s.add(self.theta(0.0, k as f64 - 1.0, k) * v(n, k + 1));
            }
            w[n][1] = -w[n][0] * self.beta[1] * self.beta_under + a * s.value();
        }
        if w.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("CUSUM V table"));
        }
        self.tables.push(w);
        Ok(())
    }

    pub fn extend_to(&mut self, n: usize) -> Result<()> {
        check_depth(n)?;
        while self.depth() < n {
            self.push_next()?;
        }
        Ok(())
    }

    /// Unclamped evaluation of `Q_n(x)`.
    pub fn eval_raw(&self, n: usize, x: f64) -> f64 {
        let (w, q) = (self.omega, self.q);
        let t = &self.tables[n - 1];
        let rows = t.len();
        let by_piece = x < ((n as f64 - 1.0) * w).min(self.eta_hat_c);
        let i = if by_piece { ((x / w).floor() as usize + 1).min(rows) } else { rows };
        let row = &t[i - 1];
        let mut s = CompensatedSum::new();
        for j in 1..=i {
            let base = if by_piece { i as f64 * w - x } else { (j as f64 - 1.0) * w - x };
            s.add(row[j] * self.lf.pow_over_factorial(base, j - 1));
        }
        row[0] + s.value() * (x / (1.0 + q)).exp()
    }
}

pub fn build_v_tables(l: usize, q: f64, eta_hat_c: f64) -> Result<CusumCoeffV> {
    if l == 0 {
        return Err(invalid("L", "need at least one table"));
    }
    let mut v = CusumCoeffV::new(q, eta_hat_c)?;
    v.extend_to(l)?;
    Ok(v)
}

/// `Q_n(x)` for `0 ≤ x < η̂_c`, clamped into [0, 1].
pub fn eval_q_cusum(n: usize, x: f64, tables: &CusumCoeffV) -> Result<f64> {
    check_x(x, tables.eta_hat_c)?;
    if n == 0 || n > tables.depth() {
        return Err(invalid("n", format!("need 1 ≤ n ≤ {}, got {n}", tables.depth())));
    }
    Ok(clamp_probability(tables.eval_raw(n, x), "Q_n"))
}

/// Tables for `G_n`, the conditional CDF of the statistic after `n` pre-change
/// samples given no alarm. Both the unnormalized `Ã` and normalized `A`
/// coefficients are kept.
#[derive(Debug, Clone)]
pub struct CusumCoeffA {
    pub q: f64,
    pub eta_hat_c: f64,
    pub omega: f64,
    pub m: usize,
    /// `delta[i] = e^{η̂_c - iω}` for `i = 0..=M`.
    pub delta: Vec<f64>,
    tilde: Vec<Tri>,
    normalized: Vec<Tri>,
    /// Depth at which successive tables stopped changing, if reached.
    converged_at: Option<usize>,
    lf: LnFactorials,
}

impl CusumCoeffA {
    pub fn new(q: f64, eta_hat_c: f64) -> Result<Self> {
        let (w, m) = pieces(q, eta_hat_c)?;
        let t1 = vec![vec![1.0, (-w).exp()]];
        let norm = 1.0 - (-w).exp() * (-eta_hat_c).exp();
        let a1 = vec![vec![1.0 / norm, (-w).exp() / norm]];
        Ok(Self {
            q,
            eta_hat_c,
            omega: w,
            m,
            delta: (0..=m).map(|i| eta_hat_c - i as f64 * w).map(f64::exp).collect(),
            tilde: vec![t1],
            normalized: vec![a1],
            converged_at: None,
            lf: LnFactorials::new(m + 2),
        })
    }

    pub fn depth(&self) -> usize {
        self.normalized.len()
    }

    pub fn converged_at(&self) -> Option<usize> {
        self.converged_at
    }

    /// `Ã_{n,i,j}`.
    pub fn get_tilde(&self, n: usize, i: usize, j: usize) -> f64 {
        self.tilde[n - 1][i - 1][j - 1]
    }

    /// `A_{n,i,j}`.
    pub fn get(&self, n: usize, i: usize, j: usize) -> f64 {
        self.normalized[n - 1][i - 1][j - 1]
    }

    fn varsigma(&self, a: f64, b: f64, l: usize) -> f64 {
        self.lf.pow_over_factorial(a * self.eta_hat_c + b * self.omega, l)
    }

    pub fn push_next(&mut self) -> Result<()> {
        let n = self.depth();
        check_depth(n + 1)?;
        let m = self.m;
        let e = (-self.omega).exp();
        let an = &self.normalized[n - 1];
        let a = |i: usize, j: usize| an[i - 1][j - 1];
        let d = &self.delta;
        let nm = n.min(m);
        let upsilon = |k: usize| -> f64 {
            let mut s = CompensatedSum::new();
            if k < nm {
                s.add(a(k, 1) * (d[k - 1] - d[k]));
                for l in 1..=k {
                    s.add(-a(k, l + 1) * (self.varsigma(1.0, 1.0, l) - self.varsigma(1.0, 0.0, l)));
                }
            } else if k == n && n <= m {
                s.add(a(n, 1) * (d[n - 1] - 1.0));
                for l in 1..=n {
                    s.add(-a(n, l + 1) * (self.varsigma(1.0, l as f64 - n as f64, l) - self.varsigma(0.0, l as f64 - 1.0, l)));
                }
            } else {
                debug_assert!(k == m && n > m);
                s.add(a(m, 1) * (d[m - 1] - 1.0));
                for l in 1..=m {
                    s.add(-a(m, l + 1) * (self.varsigma(1.0, 1.0, l) - self.varsigma(0.0, m as f64, l)));
                }
            }
            s.value()
        };
        let ups: Vec<f64> = (1..=nm).map(upsilon).collect();
        let mut suffix = vec![0.0; nm + 2];
        for k in (1..=nm).rev() {
            suffix[k] = suffix[k + 1] + ups[k - 1];
        }

        let rows = (n + 1).min(m);
        let mut w: Tri = (1..=rows).map(|i| vec![0.0; i + 1]).collect();
        w[0][0] = 1.0;
        for i in 2..=rows {
            w[i - 1][0] = a(i - 1, 1);
            for j in 3..=i + 1 {
                w[i - 1][j - 1] = a(i - 1, j - 1) * e;
            }
        }
        for i in 1..=nm {
            let mut s = CompensatedSum::new();
            s.add(w[i - 1][0] * d[i]);
            for l in 1..i {
                s.add(-e * a(i - 1, l + 1) * self.varsigma(1.0, 0.0, l));
            }
            s.add(-e * suffix[i]);
            w[i - 1][1] = s.value();
        }
        if n < m {
            let mut s = CompensatedSum::new();
            for l in 1..=n {
                s.add(-e * a(n, l + 1) * self.varsigma(0.0, l as f64 - 1.0, l));
            }
            s.add(e * w[n][0]);
            w[n][1] = s.value();
        }
        let norm = w[0][0] - w[0][1] * (-self.eta_hat_c).exp();
        if !(norm.is_finite() && norm > 0.0) || w.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("CUSUM A table"));
        }
        let normalized: Tri = w.iter().map(|r| r.iter().map(|x| x / norm).collect()).collect();
        self.tilde.push(w);
        self.normalized.push(normalized);
        Ok(())
    }

    /// Extends to depth `n`, stopping early once `G` is quasi-stationary.
    pub fn extend_to(&mut self, n: usize) -> Result<()> {
        check_depth(n)?;
        let probes: Vec<f64> = (0..64).map(|k| self.eta_hat_c * k as f64 / 64.0).collect();
        while self.depth() < n && self.converged_at.is_none() {
            self.push_next()?;
            let d = self.depth();
            // Tables only settle once every piece exists.
            if d > self.m + 1 {
                let gap = probes
                    .iter()
                    .map(|&x| (self.eval_raw(d, x, false) - self.eval_raw(d - 1, x, false)).abs())
                    .fold(0.0, f64::max);
                if gap < QUASI_STATIONARY_TOL {
                    self.converged_at = Some(d);
                }
            }
        }
        Ok(())
    }

    /// The table index actually used for horizon `nu`.
    pub fn effective_depth(&self, nu: usize) -> usize {
        nu.min(self.depth())
    }

    fn select(&self, n: usize, x: f64) -> (usize, bool) {
        let rows = n.min(self.m);
        if x >= (self.eta_hat_c - (n as f64 - 1.0) * self.omega).max(0.0) {
            let i = (((self.eta_hat_c - x) / self.omega).floor() as usize + 1).clamp(1, rows);
            (i, true)
        } else {
            (rows, false)
        }
    }

    fn shift(&self, i: usize, j: usize, by_piece: bool) -> f64 {
        if by_piece {
            i as f64 * self.omega
        } else {
            (j as f64 - 1.0) * self.omega
        }
    }

    /// Unclamped `G_n(x)` (or `G̃_n(x)` when `tilde`).
    pub fn eval_raw(&self, n: usize, x: f64, tilde: bool) -> f64 {
        let t = if tilde { &self.tilde[n - 1] } else { &self.normalized[n - 1] };
        let (i, by_piece) = self.select(n, x);
        let row = &t[i - 1];
        let mut s = CompensatedSum::new();
        for j in 1..=i {
            s.add(row[j] * self.lf.pow_over_factorial(x + self.shift(i, j, by_piece), j - 1));
        }
        row[0] - s.value() * (-x).exp()
    }

    /// Density of the continuous part of `G_n` at `x ∈ (0, η̂_c)`.
    pub fn density(&self, n: usize, x: f64) -> f64 {
        let row = &self.normalized[n - 1];
        let (i, by_piece) = self.select(n, x);
        let row = &row[i - 1];
        let mut s = CompensatedSum::new();
        for j in 1..=i {
            let y = x + self.shift(i, j, by_piece);
            let mut d = -self.lf.pow_over_factorial(y, j - 1);
            if j >= 2 {
                d += self.lf.pow_over_factorial(y, j - 2);
            }
            s.add(row[j] * d);
        }
        -s.value() * (-x).exp()
    }
}

pub fn build_a_tables(nu_cap: usize, q: f64, eta_hat_c: f64) -> Result<CusumCoeffA> {
    if nu_cap == 0 {
        return Err(invalid("nu_cap", "need at least one table"));
    }
    let mut a = CusumCoeffA::new(q, eta_hat_c)?;
    a.extend_to(nu_cap)?;
    Ok(a)
}

/// `G_ν(x)`: conditional CDF of the statistic at `ν`, atom at 0 included.
/// Horizons past quasi-stationarity reuse the converged table.
pub fn eval_g_cusum(nu: usize, x: f64, tables: &CusumCoeffA) -> Result<f64> {
    check_x(x, tables.eta_hat_c)?;
    if nu == 0 {
        return Err(invalid("nu", "the statistic at ν = 0 is the point mass at 0"));
    }
    if nu > tables.depth() && tables.converged_at().is_none() {
        return Err(invalid("nu", format!("tables only reach depth {}", tables.depth())));
    }
    Ok(clamp_probability(tables.eval_raw(tables.effective_depth(nu), x, false), "G_nu"))
}
