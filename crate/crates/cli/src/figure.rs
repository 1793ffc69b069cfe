//! Figure data: one CSV per test for each sweep.

use std::path::PathBuf;

use clap::ValueEnum;
use covertseq::optimizer::{
    approx_shewhart, covert_sequences, exhaustive_shewhart, frontier_table, shewhart_feasible, utility,
    FrontierTable, Optimum, SearchGrid,
};
use covertseq::TestKind;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{sink, Cell, CsvWriter};

/// Default power grid for figures in raw units: `(q_min, q_max, dq)`.
pub const FIGURE_GRID: (f64, f64, f64) = (0.01, 1.0, 0.01);
const DEFAULT_NUS: [u64; 3] = [0, 50, 500];
const DEFAULT_THETAS: [f64; 10] = [0.9, 0.92, 0.94, 0.95, 0.96, 0.97, 0.98, 0.99, 0.995, 0.999];
const DEFAULT_GAMMAS: [f64; 6] = [100.0, 200.0, 300.0, 500.0, 700.0, 1000.0];
const DEFAULT_RATIOS: [f64; 7] = [0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FigureId {
    #[value(name = "covert-vs-L", alias = "covert-vs-l")]
    CovertVsL,
    #[value(name = "covert-vs-q")]
    CovertVsQ,
    #[value(name = "I-vs-q", alias = "i-vs-q")]
    IVsQ,
    #[value(name = "I-vs-L", alias = "i-vs-l")]
    IVsL,
    #[value(name = "I-vs-noise-ratio", alias = "i-vs-noise-ratio")]
    IVsNoiseRatio,
    #[value(name = "I-vs-nu", alias = "i-vs-nu")]
    IVsNu,
    #[value(name = "I-vs-theta", alias = "i-vs-theta")]
    IVsTheta,
    #[value(name = "I-vs-gamma", alias = "i-vs-gamma")]
    IVsGamma,
}

impl FigureId {
    pub fn name(self) -> &'static str {
        match self {
            FigureId::CovertVsL => "covert-vs-L",
            FigureId::CovertVsQ => "covert-vs-q",
            FigureId::IVsQ => "I-vs-q",
            FigureId::IVsL => "I-vs-L",
            FigureId::IVsNoiseRatio => "I-vs-noise-ratio",
            FigureId::IVsNu => "I-vs-nu",
            FigureId::IVsTheta => "I-vs-theta",
            FigureId::IVsGamma => "I-vs-gamma",
        }
    }

    /// Column names; Shewhart optimum sweeps add the closed-form
    /// approximation.
    pub fn header(self, test: TestKind, bits: bool) -> Vec<&'static str> {
        let i = if bits { "I_bits" } else { "I" };
        let mut h = match self {
            FigureId::CovertVsL => vec!["nu", "L", "Q"],
            FigureId::CovertVsQ => vec!["nu", "q", "Q"],
            FigureId::IVsQ => vec!["nu", "q", "L_star", "Q", i],
            FigureId::IVsL => vec!["nu", "L", "q_star", i],
            FigureId::IVsNoiseRatio => vec!["nu", "ratio", "q_star", "L_star", i],
            FigureId::IVsNu => vec!["nu", "q_star", "L_star", i],
            FigureId::IVsTheta => vec!["nu", "theta", "q_star", "L_star", i],
            FigureId::IVsGamma => vec!["nu", "gamma", "q_star", "L_star", i],
        };
        if test == TestKind::Shewhart && self.sweeps_optimum() {
            h.extend(["L_approx", if bits { "I_approx_bits" } else { "I_approx" }]);
        }
        h
    }

    fn sweeps_optimum(self) -> bool {
        matches!(self, FigureId::IVsNoiseRatio | FigureId::IVsNu | FigureId::IVsTheta | FigureId::IVsGamma)
    }
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    grid: SearchGrid,
    /// Raw-unit scale: raw power = normalized power · σ_W².
    w2: f64,
    unit: f64,
}

impl Ctx<'_> {
    fn optimum_cells(&self, o: &Optimum) -> Vec<Cell> {
        if o.feasible {
            vec![(o.q_star * self.w2).into(), o.l_star.into(), (o.i_star / self.unit).into()]
        } else {
            vec![Cell::Empty, 0u64.into(), 0.0.into()]
        }
    }

    /// Exact Shewhart optimum plus the closed-form approximation; both are
    /// independent of the change point and need no power grid.
    fn shewhart_cells(&self, gamma: f64, theta: f64, ratio: f64) -> Result<Vec<Cell>, CliError> {
        if !shewhart_feasible(gamma, theta) {
            return Ok(vec![Cell::Empty, 0u64.into(), 0.0.into(), 0u64.into(), 0.0.into()]);
        }
        let mut cells = self.optimum_cells(&exhaustive_shewhart(gamma, theta, ratio)?);
        let a = approx_shewhart(gamma, theta, ratio)?;
        cells.extend([a.l_star.into(), (a.i_star / self.unit).into()]);
        Ok(cells)
    }

    fn table(&self, test: TestKind, gamma: f64, nus: &[u64], theta_min: f64) -> Result<FrontierTable, CliError> {
        Ok(frontier_table(test, gamma, nus, theta_min, &self.grid)?)
    }
}

/// Writes `<dir>/<figure>_<test>.csv` for every configured test and returns
/// the paths.
pub fn figure(cfg: &ExperimentConfig, id: FigureId, bits: bool) -> Result<Vec<PathBuf>, CliError> {
    let dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    let ctx = Ctx {
        cfg,
        grid: cfg.search_grid(FIGURE_GRID)?,
        w2: cfg.sigma_w2(),
        unit: if bits { std::f64::consts::LN_2 } else { 1.0 },
    };
    let mut paths = Vec::new();
    for test in cfg.tests() {
        let path = dir.join(format!("{}_{}.csv", id.name(), test));
        let comments = [format!("figure: {} test: {test}", id.name()), format!("config: {}", cfg.echo())];
        let mut w = CsvWriter::new(sink(Some(&path))?, &comments, &id.header(test, bits))?;
        for row in rows(&ctx, id, test)? {
            w.row(row)?;
        }
        w.finish()?;
        log::info!("wrote {}", path.display());
        paths.push(path);
    }
    Ok(paths)
}

fn rows(ctx: &Ctx, id: FigureId, test: TestKind) -> Result<Vec<Vec<Cell>>, CliError> {
    let cfg = ctx.cfg;
    let (gamma, theta) = (cfg.gamma(), cfg.theta());
    let ratio = cfg.sigma_ratio()?;
    let nus = cfg.nus(&DEFAULT_NUS);
    let mut rows = Vec::new();
    match id {
        FigureId::CovertVsL => {
            let q = cfg.channel(cfg.q.unwrap_or(0.15))?.0;
            let ls = cfg.durations(40);
            let grid = SearchGrid {
                l_cap: *ls.iter().max().expect("nonempty"),
                ..ctx.grid
            };
            let seqs = covert_sequences(test, q, gamma, &nus, 0.0, &grid)?;
            for (k, &nu) in nus.iter().enumerate() {
                for &l in &ls {
                    rows.push(vec![nu.into(), l.into(), seqs[k].values.get(l as usize - 1).copied().into()]);
                }
            }
        }
        FigureId::CovertVsQ => {
            let l = cfg.l.unwrap_or(15);
            let grid = SearchGrid { l_cap: l, ..ctx.grid };
            let qs = grid.powers();
            let seqs = qs
                .par_iter()
                .map(|&q| covert_sequences(test, q, gamma, &nus, 0.0, &grid))
                .collect::<Result<Vec<_>, _>>()?;
            for (k, &nu) in nus.iter().enumerate() {
                for (i, &q) in qs.iter().enumerate() {
                    let v = seqs[i][k].values.get(l as usize - 1).copied();
                    rows.push(vec![nu.into(), (q * ctx.w2).into(), v.into()]);
                }
            }
        }
        FigureId::IVsQ => {
            let table = ctx.table(test, gamma, &nus, theta)?;
            for (k, &nu) in nus.iter().enumerate() {
                for (i, &q) in table.powers.iter().enumerate() {
                    let seq = &table.sequences[i][k];
                    let mut row: Vec<Cell> = vec![nu.into(), (q * ctx.w2).into()];
                    if seq.skipped.is_some() {
                        row.extend([Cell::Empty, Cell::Empty, Cell::Empty]);
                    } else {
                        let l = seq.frontier(theta);
                        let covert = (l > 0).then(|| seq.values[l as usize - 1]);
                        row.extend([l.into(), covert.into(), (utility(q, l, ratio) / ctx.unit).into()]);
                    }
                    rows.push(row);
                }
            }
        }
        FigureId::IVsL => {
            let table = ctx.table(test, gamma, &nus, theta)?;
            for (k, &nu) in nus.iter().enumerate() {
                let frontier: Vec<u64> = table
                    .sequences
                    .iter()
                    .map(|r| if r[k].skipped.is_some() { 0 } else { r[k].frontier(theta) })
                    .collect();
                for l in 1..=cfg.l_max.unwrap_or(40) {
                    // Largest grid power that stays covert for l samples.
                    let q = table.powers.iter().zip(&frontier).rev().find(|(_, &f)| f >= l).map(|(&q, _)| q);
                    let i = q.map_or(0.0, |q| utility(q, l, ratio) / ctx.unit);
                    rows.push(vec![nu.into(), l.into(), q.map(|q| q * ctx.w2).into(), i.into()]);
                }
            }
        }
        FigureId::IVsNoiseRatio => {
            let ratios = cfg.ratios.clone().unwrap_or_else(|| DEFAULT_RATIOS.to_vec());
            let table = (test != TestKind::Shewhart).then(|| ctx.table(test, gamma, &nus, theta)).transpose()?;
            for &nu in &nus {
                for &r in &ratios {
                    let mut row: Vec<Cell> = vec![nu.into(), r.into()];
                    match &table {
                        None => row.extend(ctx.shewhart_cells(gamma, theta, r)?),
                        Some(t) => row.extend(ctx.optimum_cells(&t.optimum(nu, theta, r)?)),
                    }
                    rows.push(row);
                }
            }
        }
        FigureId::IVsNu => {
            let nus = cfg.nus(&(0..=20).map(|i| 25 * i).collect::<Vec<u64>>());
            let table = (test != TestKind::Shewhart).then(|| ctx.table(test, gamma, &nus, theta)).transpose()?;
            for &nu in &nus {
                let mut row: Vec<Cell> = vec![nu.into()];
                match &table {
                    None => row.extend(ctx.shewhart_cells(gamma, theta, ratio)?),
                    Some(t) => row.extend(ctx.optimum_cells(&t.optimum(nu, theta, ratio)?)),
                }
                rows.push(row);
            }
        }
        FigureId::IVsTheta => {
            let thetas = cfg.thetas.clone().unwrap_or_else(|| DEFAULT_THETAS.to_vec());
            let theta_min = thetas.iter().copied().fold(f64::INFINITY, f64::min);
            let table = (test != TestKind::Shewhart).then(|| ctx.table(test, gamma, &nus, theta_min)).transpose()?;
            for &nu in &nus {
                for &th in &thetas {
                    let mut row: Vec<Cell> = vec![nu.into(), th.into()];
                    match &table {
                        None => row.extend(ctx.shewhart_cells(gamma, th, ratio)?),
                        Some(t) => row.extend(ctx.optimum_cells(&t.optimum(nu, th, ratio)?)),
                    }
                    rows.push(row);
                }
            }
        }
        FigureId::IVsGamma => {
            let gammas = cfg.gammas.clone().unwrap_or_else(|| DEFAULT_GAMMAS.to_vec());
            let mut per_gamma = Vec::with_capacity(gammas.len());
            for &g in &gammas {
                per_gamma.push((test != TestKind::Shewhart).then(|| ctx.table(test, g, &nus, theta)).transpose()?);
            }
            for &nu in &nus {
                for (&g, table) in gammas.iter().zip(&per_gamma) {
                    let mut row: Vec<Cell> = vec![nu.into(), g.into()];
                    match table {
                        None => row.extend(ctx.shewhart_cells(g, theta, ratio)?),
                        Some(t) => row.extend(ctx.optimum_cells(&t.optimum(nu, theta, ratio)?)),
                    }
                    rows.push(row);
                }
            }
        }
    }
    Ok(rows)
}
