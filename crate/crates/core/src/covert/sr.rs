//! SR covert probability by trapezoidal quadrature on a node grid.
//!
//! Nodes are geometric in `1 + x` between `1/(1+q)` (the smallest value the
//! statistic can take after one sample) and the threshold `η_r`. Each kernel
//! row spreads the exact post-change mass of every cell `[ξ_j, ξ_{j+1}]`
//! half onto each endpoint.

use rayon::prelude::*;

use super::{CovertDiagnostics, CovertResult};
use crate::detectors::TestKind;
use crate::error::{invalid, Error, Result};
use crate::signal::{check_duration, check_power};

pub const DEFAULT_SR_NODES: usize = 2000;
pub const MIN_SR_NODES: usize = 2;
/// Sup-norm change in `G_ν` below which the conditional law is reused.
pub const QUASI_STATIONARY_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct QuadGrid {
    pub q: f64,
    pub eta_r: f64,
    /// `ξ_0 < … < ξ_N`.
    pub nodes: Vec<f64>,
    /// Post-change transfer matrix, row-major `(N+1)×(N+1)`:
    /// `t_n[i] = Σ_j post[i][j] t_{n-1}[j]`.
    post: Vec<f64>,
    post_start: Vec<usize>,
    /// Transfer row from `R = 0`, used when the change is at time 0.
    from_zero: Vec<f64>,
    /// Pre-change CDF propagation, row-major `(N+1)×N`:
    /// `G̃_n[i] = Σ_j pre[i][j] (G_{n-1}[j+1] - G_{n-1}[j])`.
    pre: Vec<f64>,
    pre_end: Vec<usize>,
}

impl QuadGrid {
    pub fn size(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Post-change kernel applied to a vector of node values.
    pub fn apply_post(&self, t: &[f64]) -> Vec<f64> {
        let n = self.nodes.len();
        (0..n)
            .into_par_iter()
            .with_min_len(64)
            .map(|i| {
                let row = &self.post[i * n..(i + 1) * n];
                let s = self.post_start[i];
                row[s..].iter().zip(&t[s..]).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    /// The quadrature's total post-change mass from node `i` into `[ξ_0, η_r]`.
    pub fn post_row_mass(&self, i: usize) -> f64 {
        let n = self.nodes.len();
        self.post[i * n..(i + 1) * n].iter().sum()
    }

    fn apply_pre(&self, dg: &[f64]) -> Vec<f64> {
        let n = self.nodes.len();
        let cells = n - 1;
        (0..n)
            .into_par_iter()
            .with_min_len(64)
            .map(|i| {
                let row = &self.pre[i * cells..(i + 1) * cells];
                let e = self.pre_end[i];
                row[..e].iter().zip(&dg[..e]).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    /// `Q_1(x) = 1 - ((1+x)/((1+q)η_r))^{1/q}` at every node.
    pub fn t1(&self) -> Vec<f64> {
        let (q, eta) = (self.q, self.eta_r);
        self.nodes
            .iter()
            .map(|&x| (((1.0 + x) / ((1.0 + q) * eta)).ln() / q).exp().min(1.0))
            .map(|p| (1.0 - p).clamp(0.0, 1.0))
            .collect()
    }

    /// `Q_l` from `R = 0` (the statistic before any sample).
    pub fn from_zero(&self, t_prev: Option<&[f64]>) -> f64 {
        match t_prev {
            None => 1.0 - (-((1.0 + self.q) * self.eta_r).ln() / self.q).exp(),
            Some(t) => self.from_zero.iter().zip(t).map(|(w, v)| w * v).sum::<f64>(),
        }
    }
}

/// Splits each cell's mass `P(ξ_{j+1}) - P(ξ_j)` between its two endpoints.
/// Returns the first column with nonzero weight.
fn trapezoid_row(cdf: impl Fn(usize) -> f64, out: &mut [f64]) -> usize {
    out.iter_mut().for_each(|v| *v = 0.0);
    let size = out.len();
    let mut first = size - 1;
    let mut prev = cdf(0);
    for j in 0..size - 1 {
        let next = cdf(j + 1);
        let d = next - prev;
        if d != 0.0 {
            first = first.min(j);
            out[j] += 0.5 * d;
            out[j + 1] += 0.5 * d;
        }
        prev = next;
    }
    first
}

pub fn build_sr_grid(n: usize, q: f64, eta_r: f64) -> Result<QuadGrid> {
    check_power(q)?;
    if n < MIN_SR_NODES {
        return Err(invalid("N", format!("need at least {MIN_SR_NODES} cells, got {n}")));
    }
    let lo = 1.0 / (1.0 + q);
    if !(eta_r.is_finite() && eta_r > lo) {
        return Err(invalid("eta_r", format!("threshold must exceed 1/(1+q) = {lo}, got {eta_r}")));
    }
    let (a, b) = (lo.ln_1p(), eta_r.ln_1p());
    let mut nodes: Vec<f64> = (0..=n).map(|i| (a + (b - a) * i as f64 / n as f64).exp() - 1.0).collect();
    nodes[0] = lo;
    nodes[n] = eta_r;
    let ln_nodes: Vec<f64> = nodes.iter().map(|x| x.ln()).collect();
    let size = n + 1;
    let ln1q = q.ln_1p();

    let k_post = 1.0 / q;
    let ln_nodes_ref = &ln_nodes;
    let post_cdf = move |ln_floor: f64| {
        move |j: usize| -> f64 {
            let d = ln_nodes_ref[j] - ln_floor;
            if d >= 0.0 {
                -(-d * k_post).exp_m1()
            } else {
                0.0
            }
        }
    };
    let mut post = vec![0.0; size * size];
    let post_start: Vec<usize> = post
        .par_chunks_mut(size)
        .enumerate()
        .map(|(i, row)| {
            let cdf = post_cdf(nodes[i].ln_1p() - ln1q);
            trapezoid_row(cdf, row)
        })
        .collect();
    let mut from_zero = vec![0.0; size];
    trapezoid_row(post_cdf(-ln1q), &mut from_zero);

    // Pre-change: column j of the CDF matrix is P_∞(ξ_i | ξ_j); each cell of
    // the previous law is weighted by the average of its two endpoint columns.
    let k_pre = (1.0 + q) / q;
    let cells = n;
    let ln_floor: Vec<f64> = nodes.iter().map(|x| x.ln_1p() - ln1q).collect();
    let mut pre = vec![0.0; size * cells];
    let pre_end: Vec<usize> = pre
        .par_chunks_mut(cells)
        .enumerate()
        .map(|(i, row)| {
            let p = |j: usize| {
                let d = ln_nodes[i] - ln_floor[j];
                if d >= 0.0 {
                    -(-d * k_pre).exp_m1()
                } else {
                    0.0
                }
            };
            let mut end = 0;
            let mut pj = p(0);
            for j in 0..cells {
                let pj1 = p(j + 1);
                let v = 0.5 * (pj + pj1);
                row[j] = v;
                if v != 0.0 {
                    end = j + 1;
                }
                pj = pj1;
            }
            end
        })
        .collect();

    if post.iter().any(|v| !v.is_finite()) || pre.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("SR kernel"));
    }
    Ok(QuadGrid {
        q,
        eta_r,
        nodes,
        post,
        post_start,
        from_zero,
        pre,
        pre_end,
    })
}

/// `t_L`: `Q_L` at every node (`L - 1` kernel applications to `t_1`).
pub fn eval_q_sr(l: usize, grid: &QuadGrid) -> Result<Vec<f64>> {
    check_duration(l as u64)?;
    let mut t = grid.t1();
    for _ in 1..l {
        t = grid.apply_post(&t);
        t.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }
    Ok(t)
}

/// Conditional law of `R_ν` given no alarm by `ν`.
#[derive(Debug, Clone, PartialEq)]
pub enum SrLaw {
    /// `ν = 0`: `R_0 = 0`.
    PointMassAtZero,
    /// CDF at the grid nodes.
    Table {
        nu: u64,
        cdf: Vec<f64>,
        /// Iterations actually performed.
        depth: u64,
    },
}

impl SrLaw {
    /// Trapezoidal pairing `Σ_j (t_j + t_{j+1})/2 · (G_{j+1} - G_j)`.
    /// `t_prev` must hold `Q_{L-1}` at the nodes when the law is the point
    /// mass (`None` for `L = 1`); otherwise `t` holds `Q_L`.
    pub fn pair(&self, grid: &QuadGrid, t: &[f64], t_prev: Option<&[f64]>) -> f64 {
        match self {
            SrLaw::PointMassAtZero => grid.from_zero(t_prev),
            SrLaw::Table { cdf, .. } => cdf.windows(2).zip(t.windows(2)).map(|(g, v)| 0.5 * (v[0] + v[1]) * (g[1] - g[0])).sum(),
        }
    }

    pub fn depth(&self) -> u64 {
        match self {
            SrLaw::PointMassAtZero => 0,
            SrLaw::Table { depth, .. } => *depth,
        }
    }
}

/// Iterates the pre-change kernel with renormalization, zeroing the CDF
/// below the support bound `(1 - (1+q)^{-n})/q`, and stops early once the
/// table is quasi-stationary.
pub fn eval_g_sr(nu: u64, q: f64, grid: &QuadGrid) -> Result<SrLaw> {
    Ok(eval_g_sr_many(&[nu], q, grid)?.pop().unwrap())
}

/// [`eval_g_sr`] for several change points in one pass of the iteration.
pub fn eval_g_sr_many(nus: &[u64], q: f64, grid: &QuadGrid) -> Result<Vec<SrLaw>> {
    check_power(q)?;
    if (q - grid.q).abs() > 1e-15 * q {
        return Err(invalid("q", "grid was built for a different power"));
    }
    let mut out: Vec<Option<SrLaw>> = nus.iter().map(|&nu| (nu == 0).then_some(SrLaw::PointMassAtZero)).collect();
    let max_nu = nus.iter().copied().max().unwrap_or(0);
    if max_nu == 0 {
        return Ok(out.into_iter().map(Option::unwrap).collect());
    }
    let snapshot = |out: &mut [Option<SrLaw>], g: &[f64], depth: u64, converged: bool| {
        for (slot, &nu) in out.iter_mut().zip(nus) {
            if slot.is_none() && (nu == depth || (converged && nu > depth)) {
                *slot = Some(SrLaw::Table {
                    nu,
                    cdf: g.to_vec(),
                    depth,
                });
            }
        }
    };
    let eta = grid.eta_r;
    let top = 1.0 - ((1.0 + q) * eta).powf(-1.0 - 1.0 / q);
    let mut g: Vec<f64> = grid
        .nodes
        .iter()
        .map(|&x| {
            let v = 1.0 - ((1.0 + q) * x).powf(-1.0 - 1.0 / q);
            (v / top).clamp(0.0, 1.0)
        })
        .collect();
    let mut depth = 1;
    snapshot(&mut out, &g, depth, false);
    while depth < max_nu {
        let dg: Vec<f64> = g.windows(2).map(|w| w[1] - w[0]).collect();
        let mut next = grid.apply_pre(&dg);
        let z = *next.last().unwrap();
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::NonFinite("SR conditional law"));
        }
        depth += 1;
        let support = (1.0 - (1.0 + q).powf(-(depth as f64))) / q;
        for (v, &x) in next.iter_mut().zip(&grid.nodes) {
            *v = if x < support { 0.0 } else { (*v / z).clamp(0.0, 1.0) };
        }
        *next.last_mut().unwrap() = 1.0;
        let gap = next.iter().zip(&g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        g = next;
        let converged = gap < QUASI_STATIONARY_TOL;
        snapshot(&mut out, &g, depth, converged);
        if converged {
            break;
        }
    }
    Ok(out.into_iter().map(|s| s.expect("every change point is reached")).collect())
}

/// Incrementally produces `Q_1, Q_2, …` for a fixed law.
#[derive(Debug, Clone)]
pub struct SrSweep<'a> {
    grid: &'a QuadGrid,
    law: SrLaw,
    t: Vec<f64>,
    prev: Option<Vec<f64>>,
    l: usize,
}

impl<'a> SrSweep<'a> {
    pub fn new(grid: &'a QuadGrid, law: SrLaw) -> Self {
        Self {
            grid,
            law,
            t: grid.t1(),
            prev: None,
            l: 1,
        }
    }

    pub fn duration(&self) -> usize {
        self.l
    }

    /// Covert probability at the current duration.
    pub fn value(&self) -> f64 {
        self.law.pair(self.grid, &self.t, self.prev.as_deref()).clamp(0.0, 1.0)
    }

    pub fn advance(&mut self) {
        let mut next = self.grid.apply_post(&self.t);
        next.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        self.prev = Some(std::mem::replace(&mut self.t, next));
        self.l += 1;
    }
}

/// SR covert probability with an `n`-cell quadrature grid.
pub fn covert_prob_sr(q: f64, l: u64, nu: u64, eta_r: f64, n: usize) -> Result<CovertResult> {
    check_power(q)?;
    check_duration(l)?;
    if eta_r < 1.0 / q {
        return Err(Error::SrThresholdTooLow { eta_r, q, bound: 1.0 / q });
    }
    let grid = build_sr_grid(n, q, eta_r)?;
    let law = eval_g_sr(nu, q, &grid)?;
    let mut sweep = SrSweep::new(&grid, law);
    for _ in 1..l {
        sweep.advance();
    }
    Ok(CovertResult {
        value: sweep.value(),
        test: TestKind::Sr,
        diagnostics: CovertDiagnostics {
            grid_nodes: Some(n),
            table_depth: Some(sweep.law.depth() as usize),
            atom_mass: matches!(sweep.law, SrLaw::PointMassAtZero).then_some(1.0),
            route: None,
        },
    })
}

/// `E[((1+R_ν)/((1+q)η_r))^{1/q} | no alarm by ν]` against the quadrature law.
pub fn sr_power_moment(grid: &QuadGrid, law: &SrLaw) -> f64 {
    let f: Vec<f64> = grid.t1().iter().map(|t| 1.0 - t).collect();
    match law {
        SrLaw::PointMassAtZero => (-(((1.0 + grid.q) * grid.eta_r).ln()) / grid.q).exp(),
        SrLaw::Table { .. } => law.pair(grid, &f, None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> QuadGrid {
        build_sr_grid(n, 0.15, 500.0 / 1.15).unwrap()
    }

    #[test]
    fn nodes_span_the_range() {
        let g = grid(200);
        assert_eq!(g.nodes.len(), 201);
        assert!((g.nodes[0] - 1.0 / 1.15).abs() < 1e-15);
        assert_eq!(*g.nodes.last().unwrap(), 500.0 / 1.15);
        assert!(g.nodes.windows(2).all(|w| w[1] > w[0]));
        assert!(build_sr_grid(1, 0.15, 10.0).is_err());
    }

    #[test]
    fn t1_closed_form() {
        let g = grid(300);
        let (q, eta): (f64, f64) = (0.15, 500.0 / 1.15);
        for (x, t) in g.nodes.iter().zip(g.t1()) {
            let exact = 1.0 - ((1.0 + x) / ((1.0 + q) * eta)).powf(1.0 / q);
            assert!((t - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn row_mass_matches_transition_probability() {
        let g = grid(2000);
        let (q, eta): (f64, f64) = (0.15, 500.0 / 1.15);
        for i in (0..=2000).step_by(97) {
            let u = g.nodes[i];
            let exact = super::super::sr_cond_cdf(eta, u, q, crate::signal::Phase::Post).unwrap();
            assert!((g.post_row_mass(i) - exact).abs() < 1e-3);
        }
    }

    #[test]
    fn t_vectors_are_monotone() {
        let g = grid(400);
        let t5 = eval_q_sr(5, &g).unwrap();
        let t6 = eval_q_sr(6, &g).unwrap();
        for i in 0..t5.len() {
            assert!(t6[i] <= t5[i] + 1e-14);
            assert!((0.0..=1.0).contains(&t5[i]));
            if i > 0 {
                assert!(t5[i] <= t5[i - 1] + 1e-12);
            }
        }
    }

    #[test]
    fn first_law_matches_closed_form_and_is_normalized() {
        let g = grid(400);
        let q = 0.15;
        let SrLaw::Table { cdf, .. } = eval_g_sr(1, q, &g).unwrap() else { panic!() };
        let eta = 500.0 / 1.15;
        for (x, c) in g.nodes.iter().zip(&cdf) {
            let exact = (1.0 - ((1.0 + q) * x).powf(-1.0 - 1.0 / q)) / (1.0 - ((1.0 + q) * eta).powf(-1.0 - 1.0 / q));
            assert!((c - exact).abs() < 1e-13);
        }
        let SrLaw::Table { cdf, .. } = eval_g_sr(20, q, &g).unwrap() else { panic!() };
        let support = (1.0 - 1.15f64.powi(-20)) / q;
        for (x, c) in g.nodes.iter().zip(&cdf) {
            if *x < support {
                assert_eq!(*c, 0.0);
            }
        }
        assert_eq!(*cdf.last().unwrap(), 1.0);
        assert!(cdf.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn zero_horizon_uses_point_mass() {
        let q = 0.15;
        let eta = 500.0 / 1.15;
        let one = covert_prob_sr(q, 1, 0, eta, 400).unwrap().value;
        assert!((one - (1.0 - (1.0 / ((1.0 + q) * eta)).powf(1.0 / q))).abs() < 1e-14);
        let r = covert_prob_sr(q, 15, 0, eta, 1000).unwrap();
        assert!(r.value > 0.9 && r.value < 1.0);
        assert_eq!(r.diagnostics.atom_mass, Some(1.0));
    }

    #[test]
    fn rejects_low_threshold() {
        assert!(matches!(covert_prob_sr(0.1, 5, 0, 5.0, 100), Err(Error::SrThresholdTooLow { .. })));
    }

    #[test]
    fn tiny_power_is_nearly_covert() {
        // γ/(1+q) is below 1/q here, so go through the grid directly rather
        // than the calibrated entry point.
        let q = 1e-3;
        let g = build_sr_grid(2000, q, 500.0 / (1.0 + q)).unwrap();
        let law = eval_g_sr(10, q, &g).unwrap();
        let mut sweep = SrSweep::new(&g, law);
        for _ in 1..15 {
            sweep.advance();
        }
        assert!(sweep.value() > 0.999, "{}", sweep.value());
    }
}
