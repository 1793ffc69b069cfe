//! `calibrate`, `covert` and `optimize`.

use std::io::Write;
use std::path::Path;

use covertseq::calibration::{calibrate_cached, calibrate_cusum, calibrate_shewhart, calibrate_sr, ArlRoute};
use covertseq::detectors::Detector;
use covertseq::montecarlo::{estimate_arl2fa, estimate_covert_prob, McEstimate};
use covertseq::optimizer::{
    approx_shewhart, covert_sequences, exhaustive_shewhart, feasibility_check, frontier_table, shewhart_feasible,
    Method, Optimum,
};
use covertseq::TestKind;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, Format};
use crate::error::CliError;
use crate::output::{sig10, sink, CsvWriter};

/// Default optimizer power grid in raw units: `(q_min, q_max, dq)`.
pub const OPTIMIZE_GRID: (f64, f64, f64) = (1e-3, 2.0, 1e-3);
pub const DEFAULT_ARL_TRIALS: u64 = 100_000;
const Z95: f64 = 1.959963984540054;

#[derive(Debug, Serialize)]
struct Verification {
    mean: f64,
    std_error: f64,
    ci95_low: f64,
    ci95_high: f64,
    relative_error: f64,
    trials: u64,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct ThresholdReport {
    test: TestKind,
    gamma: f64,
    q: Option<f64>,
    threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    arl_route: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    verify: Option<Verification>,
}

pub fn calibrate(cfg: &ExperimentConfig, verify: bool) -> Result<(), CliError> {
    let gamma = cfg.gamma();
    let mut reports = Vec::new();
    for test in cfg.tests() {
        let q = match (test, cfg.q) {
            (_, Some(raw)) => Some(cfg.channel(raw)?.0),
            (TestKind::Shewhart, None) => None,
            (_, None) => return Err(CliError::Config(format!("the {test} threshold depends on q; pass --q"))),
        };
        let (threshold, arl_route) = match test {
            TestKind::Shewhart => (calibrate_shewhart(gamma)?, None),
            TestKind::Cusum => {
                let c = calibrate_cusum(gamma, q.expect("checked"))?;
                let route = match c.route {
                    ArlRoute::ClosedForm => "closed-form",
                    ArlRoute::DelayEquation => "delay-equation",
                };
                (c.eta_hat_c, Some(route))
            }
            TestKind::Sr => (calibrate_sr(gamma, q.expect("checked"))?.eta_r, None),
        };
        let verify = if verify {
            // The Shewhart power threshold does not depend on q.
            let det = Detector::new(test, q.unwrap_or(1.0), threshold)?;
            let mc = estimate_arl2fa(&det, cfg.trials.unwrap_or(DEFAULT_ARL_TRIALS), cfg.seed(), None)?;
            Some(Verification {
                mean: mc.mean,
                std_error: mc.std_error,
                ci95_low: mc.mean - Z95 * mc.std_error,
                ci95_high: mc.mean + Z95 * mc.std_error,
                relative_error: (mc.mean - gamma) / gamma,
                trials: mc.n_trials,
                seed: mc.seed,
            })
        } else {
            None
        };
        reports.push(ThresholdReport {
            test,
            gamma,
            q,
            threshold,
            arl_route,
            verify,
        });
    }
    let mut out = sink(cfg.output.as_deref())?;
    match cfg.format() {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&reports).expect("serializable"))?,
        Format::Text => {
            for r in &reports {
                let name = match r.test {
                    TestKind::Shewhart => "eta_s'",
                    TestKind::Cusum => "eta_c",
                    TestKind::Sr => "eta_r",
                };
                write!(out, "{:<8} gamma={} ", r.test, sig10(r.gamma))?;
                if let Some(q) = r.q {
                    write!(out, "q={} ", sig10(q))?;
                }
                write!(out, "{name}={}", sig10(r.threshold))?;
                if let Some(route) = r.arl_route {
                    write!(out, " route={route}")?;
                }
                if let Some(v) = &r.verify {
                    write!(
                        out,
                        " mc_arl={} ci95=[{}, {}] rel_err={} trials={}",
                        sig10(v.mean),
                        sig10(v.ci95_low),
                        sig10(v.ci95_high),
                        sig10(v.relative_error),
                        v.trials
                    )?;
                }
                writeln!(out)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub const COVERT_HEADER: [&str; 7] = ["q", "L", "nu", "test", "Q_analytic", "Q_mc", "mc_stderr"];

/// One row per `(test, q, L, ν)`; analytic values always, Monte Carlo when
/// `trials > 0`.
pub fn covert(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let gamma = cfg.gamma();
    let raw_qs = cfg.raw_powers((0.15, 0.15, 1.0));
    let ls = cfg.durations(40);
    let nus = cfg.nus(&[0]);
    let l_max = *ls.iter().max().expect("nonempty");
    let grid = covertseq::optimizer::SearchGrid {
        q_min: 1.0,
        q_max: 2.0,
        dq: 1.0,
        sr_nodes: cfg.sr_nodes(),
        l_cap: l_max,
    };
    let trials = cfg.trials.unwrap_or(0);
    let mut w = CsvWriter::new(
        sink(cfg.output.as_deref())?,
        &[format!("config: {}", cfg.echo())],
        &COVERT_HEADER,
    )?;
    for test in cfg.tests() {
        let per_q = raw_qs
            .par_iter()
            .map(|&raw| {
                let q = cfg.channel(raw)?.0;
                let seqs = covert_sequences(test, q, gamma, &nus, 0.0, &grid)?;
                Ok::<_, CliError>((raw, q, seqs))
            })
            .collect::<Result<Vec<_>, _>>()?;
        for (raw, q, seqs) in per_q {
            if let Some(why) = &seqs[0].skipped {
                log::warn!("{test} at q = {raw}: {why}; analytic value left empty");
            }
            let det = if trials > 0 {
                Some(Detector::new(test, q, calibrate_cached(test, gamma, q)?)?)
            } else {
                None
            };
            for &l in &ls {
                for (k, &nu) in nus.iter().enumerate() {
                    let analytic = seqs[k].values.get(l as usize - 1).copied();
                    let mc: Option<McEstimate> = match &det {
                        Some(d) => Some(estimate_covert_prob(d, nu, l, trials, cfg.seed())?),
                        None => None,
                    };
                    w.row(vec![
                        raw.into(),
                        l.into(),
                        nu.into(),
                        test.as_str().into(),
                        analytic.into(),
                        mc.map(|m| m.mean).into(),
                        mc.map(|m| m.std_error).into(),
                    ])?;
                }
            }
        }
    }
    w.finish()?;
    Ok(())
}

pub struct OptimizeOptions<'a> {
    pub method: Option<Method>,
    pub trace: Option<&'a Path>,
    pub bits: bool,
}

fn default_method(test: TestKind) -> Method {
    match test {
        TestKind::Shewhart => Method::Exhaustive,
        _ => Method::Algorithm1,
    }
}

/// Explanation of why no `(q, L)` meets `θ`, from the first-sample bound.
fn infeasibility_diagnostic(cfg: &ExperimentConfig, test: TestKind, nu: u64, grid_q: (f64, f64)) -> String {
    let (gamma, theta) = (cfg.gamma(), cfg.theta());
    if test == TestKind::Shewhart {
        return format!(
            "{test}: θ = {theta} is not below 1 - 1/γ = {}; no power is covert at this level",
            1.0 - 1.0 / gamma
        );
    }
    let mut parts = vec![format!("{test} at ν = {nu}: no grid power meets θ = {theta}")];
    for q in [grid_q.0, grid_q.1] {
        match feasibility_check(test, q, nu, gamma, Some(theta), cfg.sr_nodes()) {
            Ok(r) => parts.push(format!(
                "q = {}: any covert system needs θ ≤ {} (1 - θ ≥ {})",
                sig10(q),
                sig10(r.theta_upper_bound),
                sig10(r.bound_on_one_minus_theta)
            )),
            Err(e) => parts.push(format!("q = {}: bound unavailable ({e})", sig10(q))),
        }
    }
    parts.join("; ")
}

pub fn optimize(cfg: &ExperimentConfig, opts: &OptimizeOptions) -> Result<(), CliError> {
    let (gamma, theta) = (cfg.gamma(), cfg.theta());
    let ratio = cfg.sigma_ratio()?;
    let nus = cfg.nus(&[0]);
    let grid = cfg.search_grid(OPTIMIZE_GRID)?;
    let unit = if opts.bits { std::f64::consts::LN_2 } else { 1.0 };
    let tests = cfg.tests();
    for &test in &tests {
        let method = opts.method.unwrap_or_else(|| default_method(test));
        if test != TestKind::Shewhart && method != Method::Algorithm1 {
            return Err(CliError::Config(format!("method {method} only applies to the shewhart test")));
        }
    }
    let mut results: Vec<(u64, Optimum)> = Vec::new();
    let mut failures = Vec::new();
    for &test in &tests {
        let method = opts.method.unwrap_or_else(|| default_method(test));
        match method {
            Method::Exhaustive | Method::Approx => {
                if !shewhart_feasible(gamma, theta) {
                    failures.push(infeasibility_diagnostic(cfg, test, 0, (grid.q_min, grid.q_max)));
                    continue;
                }
                let opt = if method == Method::Exhaustive {
                    exhaustive_shewhart(gamma, theta, ratio)?
                } else {
                    approx_shewhart(gamma, theta, ratio)?
                };
                // The Shewhart test does not depend on the change point.
                for &nu in &nus {
                    results.push((nu, opt.clone()));
                }
            }
            Method::Algorithm1 => {
                let table = frontier_table(test, gamma, &nus, theta, &grid)?;
                for &nu in &nus {
                    let opt = table.optimum(nu, theta, ratio)?;
                    if opt.feasible {
                        results.push((nu, opt));
                    } else {
                        failures.push(infeasibility_diagnostic(cfg, test, nu, (grid.q_min, grid.q_max)));
                    }
                }
            }
        }
    }

    let w2 = cfg.sigma_w2();
    let mut out = sink(cfg.output.as_deref())?;
    let unit_name = if opts.bits { "bits" } else { "nats" };
    match cfg.format() {
        Format::Json => {
            let items: Vec<_> = results
                .iter()
                .map(|(nu, o)| {
                    json!({
                        "test": o.test,
                        "method": o.method,
                        "nu": nu,
                        "gamma": gamma,
                        "theta": theta,
                        "q_star": o.q_star * w2,
                        "l_star": o.l_star,
                        "i_star": o.i_star / unit,
                        "unit": unit_name,
                        "covert": o.covert,
                        "approx": o.approx,
                        "capped_powers": o.capped.len(),
                    })
                })
                .collect();
            writeln!(out, "{}", serde_json::to_string_pretty(&items).expect("serializable"))?;
        }
        Format::Text => {
            for (nu, o) in &results {
                write!(
                    out,
                    "{:<8} method={} nu={nu} q*={} L*={} I*={} {unit_name} Q={}",
                    o.test,
                    o.method,
                    sig10(o.q_star * w2),
                    o.l_star,
                    sig10(o.i_star / unit),
                    sig10(o.covert)
                )?;
                if let Some(a) = o.approx {
                    write!(out, " u1={} L_hat={}", sig10(a.u1), a.l_hat)?;
                }
                writeln!(out)?;
            }
        }
    }
    out.flush()?;

    if let Some(path) = opts.trace {
        let i_col = if opts.bits { "I_bits" } else { "I" };
        let mut w = CsvWriter::new(
            sink(Some(path))?,
            &[format!("config: {}", cfg.echo())],
            &["test", "method", "nu", "q", "L", "Q", i_col],
        )?;
        for (nu, o) in &results {
            for p in &o.trace {
                w.row(vec![
                    o.test.as_str().into(),
                    o.method.as_str().into(),
                    (*nu).into(),
                    (p.q * w2).into(),
                    p.l.into(),
                    p.covert.into(),
                    (p.utility / unit).into(),
                ])?;
            }
        }
        w.finish()?;
    }

    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Infeasible(failures.join("\n")))
    }
}
