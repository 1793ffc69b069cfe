//! Experiment configuration: a JSON file and command-line flags share one
//! schema, flags win.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use covertseq::optimizer::{SearchGrid, DEFAULT_L_CAP};
use covertseq::signal::normalize;
use covertseq::TestKind;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Text,
    Json,
}

/// Every field is optional so that a file and flags can be layered.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Tests to run (comma separated): shewhart, cusum, sr. Default: all.
    #[arg(long = "test", value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tests: Option<Vec<TestKind>>,
    /// Adversary's average run length to false alarm.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Covertness level.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    /// Change point(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<Vec<u64>>,
    /// Single transmit power (raw units).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    /// Power grid start (raw units).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_min: Option<f64>,
    /// Power grid end (raw units).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_max: Option<f64>,
    /// Power grid step (raw units).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dq: Option<f64>,
    /// Single transmission duration.
    #[arg(long = "l")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<u64>,
    /// Sweep durations 1..=l_max.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_max: Option<u64>,
    /// Cap on the duration explored per power by the optimizer.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_cap: Option<u64>,
    /// Adversary's noise power.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_w2: Option<f64>,
    /// Intended receiver's noise power.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_b2: Option<f64>,
    /// SR quadrature size.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sr_nodes: Option<usize>,
    /// Monte Carlo trials (0 disables simulation where it is optional).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Sweep of covertness levels (figures).
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thetas: Option<Vec<f64>>,
    /// Sweep of run lengths to false alarm (figures).
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Vec<f64>>,
    /// Sweep of noise ratios σ_W²/σ_B² (figures).
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratios: Option<Vec<f64>>,
    /// Output file (directory for figures). Default: stdout / current directory.
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($f:ident),+) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )+
    };
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// `self` with every field set in `flags` replaced.
    pub fn overlaid(mut self, flags: &ExperimentConfig) -> Self {
        overlay!(
            self, flags, tests, gamma, theta, nu, q, q_min, q_max, dq, l, l_max, l_cap, sigma_w2, sigma_b2, sr_nodes,
            trials, seed, thetas, gammas, ratios, output, format
        );
        self
    }

    pub fn load(file: Option<&Path>, flags: &ExperimentConfig) -> Result<Self, CliError> {
        let base = match file {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        let cfg = base.overlaid(flags);
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if let Some(g) = self.gamma {
            if !(g.is_finite() && g > 1.0) {
                return bad(format!("gamma must exceed 1, got {g}"));
            }
        }
        for &t in self.theta.iter().chain(self.thetas.iter().flatten()) {
            if !(t > 0.0 && t < 1.0) {
                return bad(format!("theta must lie in (0, 1), got {t}"));
            }
        }
        for &g in self.gammas.iter().flatten() {
            if !(g.is_finite() && g > 1.0) {
                return bad(format!("gamma must exceed 1, got {g}"));
            }
        }
        for &r in self.ratios.iter().flatten() {
            if !(r.is_finite() && r > 0.0) {
                return bad(format!("noise ratio must be positive, got {r}"));
            }
        }
        for (name, v) in [("q", self.q), ("q_min", self.q_min), ("q_max", self.q_max), ("dq", self.dq)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return bad(format!("{name} must be positive, got {v}"));
                }
            }
        }
        if let (Some(lo), Some(hi)) = (self.q_min, self.q_max) {
            if hi <= lo {
                return bad(format!("q_max = {hi} must exceed q_min = {lo}"));
            }
        }
        for (name, v) in [("l", self.l), ("l_max", self.l_max), ("l_cap", self.l_cap)] {
            if v == Some(0) {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if matches!(self.sr_nodes, Some(n) if n < 2) {
            return bad("sr_nodes must be at least 2".into());
        }
        if matches!(&self.tests, Some(t) if t.is_empty()) || matches!(&self.nu, Some(n) if n.is_empty()) {
            return bad("empty list".into());
        }
        self.channel(1.0)?;
        Ok(())
    }

    pub fn tests(&self) -> Vec<TestKind> {
        let mut t = self.tests.clone().unwrap_or_else(|| TestKind::ALL.to_vec());
        t.dedup();
        t
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(500.0)
    }

    pub fn theta(&self) -> f64 {
        self.theta.unwrap_or(0.95)
    }

    pub fn nus(&self, default: &[u64]) -> Vec<u64> {
        self.nu.clone().unwrap_or_else(|| default.to_vec())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    pub fn sr_nodes(&self) -> usize {
        self.sr_nodes.unwrap_or(covertseq::covert::DEFAULT_SR_NODES)
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or(Format::Text)
    }

    /// Normalized power and noise ratio for a raw transmit power.
    pub fn channel(&self, q_raw: f64) -> Result<(f64, f64), CliError> {
        let c = normalize(q_raw, self.sigma_w2.unwrap_or(1.0), self.sigma_b2.unwrap_or(1.0))?;
        Ok((c.q, c.sigma_ratio))
    }

    pub fn sigma_ratio(&self) -> Result<f64, CliError> {
        Ok(self.channel(1.0)?.1)
    }

    pub fn sigma_w2(&self) -> f64 {
        self.sigma_w2.unwrap_or(1.0)
    }

    /// Raw powers to evaluate: the single `q`, else the grid (missing bounds
    /// taken from `default`).
    pub fn raw_powers(&self, default: (f64, f64, f64)) -> Vec<f64> {
        if let Some(q) = self.q {
            return vec![q];
        }
        self.raw_grid(default).powers()
    }

    fn raw_grid(&self, default: (f64, f64, f64)) -> SearchGrid {
        SearchGrid {
            q_min: self.q_min.unwrap_or(default.0),
            q_max: self.q_max.unwrap_or(default.1),
            dq: self.dq.unwrap_or(default.2),
            sr_nodes: self.sr_nodes(),
            l_cap: self.l_cap.unwrap_or(DEFAULT_L_CAP),
        }
    }

    /// Optimizer grid in normalized units.
    pub fn search_grid(&self, default: (f64, f64, f64)) -> Result<SearchGrid, CliError> {
        let raw = self.raw_grid(default);
        let w = self.sigma_w2();
        let grid = SearchGrid {
            q_min: raw.q_min / w,
            q_max: raw.q_max / w,
            dq: raw.dq / w,
            ..raw
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Durations to evaluate: the single `L`, else `1..=l_max`.
    pub fn durations(&self, default_max: u64) -> Vec<u64> {
        match self.l {
            Some(l) => vec![l],
            None => (1..=self.l_max.unwrap_or(default_max)).collect(),
        }
    }

    /// Compact JSON echo for CSV comment lines; the output path is omitted so
    /// that the same experiment is byte-identical wherever it is written.
    pub fn echo(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        serde_json::to_string(&c).expect("config serializes")
    }
}
