use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use pacmet::phase::NamedProbe;

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "pacmet", version, about = "Finite-sample metrology experiments on discretized state families")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Success probability of covariant phase probes over a range of n (CSV).
    PhaseSweep(SweepArgs),
    /// Tolerance of covariant phase probes at a fixed success probability (CSV).
    ToleranceSweep(SweepArgs),
    /// Optimal Bayesian or minimax success probability of a family (JSON).
    Sdp(SdpArgs),
    /// All applicable bounds, optionally checked against exact solves (JSON).
    Bounds(BoundsArgs),
    /// Fitted and predicted error decay rates (JSON).
    RateFit(SweepArgs),
    /// Optimal post-processing of a fixed measurement (JSON).
    Smap(SmapArgs),
}

#[derive(Args, Debug)]
pub struct Common {
    /// Output file, written atomically; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Solver tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Seed for randomized comparisons.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Inclusive range `a:b:step`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NRange {
    pub start: usize,
    pub end: usize,
    pub step: usize,
}

impl FromStr for NRange {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| p.trim().parse::<usize>().map_err(|e| format!("'{p}' in n-range '{s}': {e}"));
        let (start, end, step) = match parts.as_slice() {
            [a, b] => (num(a)?, num(b)?, 1),
            [a, b, c] => (num(a)?, num(b)?, num(c)?),
            _ => return Err(format!("n-range '{s}' is not of the form a:b or a:b:step")),
        };
        if step == 0 || start == 0 || start > end {
            return Err(format!("n-range '{s}' needs 1 ≤ a ≤ b and step ≥ 1"));
        }
        Ok(Self { start, end, step })
    }
}

impl NRange {
    pub fn values(&self) -> Vec<usize> {
        (self.start..=self.end).step_by(self.step).collect()
    }
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Comma-separated probes: ghz, plus, hb, gauss, opt.
    #[arg(long, value_delimiter = ',', default_value = "ghz,plus,hb,gauss,opt")]
    pub probe: Vec<NamedProbe>,
    /// Single probe size.
    #[arg(long, conflicts_with = "n_range")]
    pub n: Option<usize>,
    /// Probe sizes a:b:step (inclusive).
    #[arg(long)]
    pub n_range: Option<NRange>,
    /// Window half-width (default 0.04).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Target success probability (tolerance-sweep default 0.99).
    #[arg(long)]
    pub eta: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

impl SweepArgs {
    pub fn n_values(&self) -> Result<Vec<usize>, CliError> {
        match (self.n, self.n_range) {
            (Some(n), _) if n >= 1 => Ok(vec![n]),
            (Some(_), _) => Err(CliError::Config("--n must be at least 1".into())),
            (None, Some(r)) => Ok(r.values()),
            (None, None) => Err(CliError::Config("one of --n or --n-range is required".into())),
        }
    }
}

/// A family file, or a covariant phase family built from a named probe.
#[derive(Args, Debug)]
pub struct FamilyArgs {
    /// Family JSON file.
    #[arg(long)]
    pub family: Option<PathBuf>,
    /// Build a covariant family from this probe instead of reading a file.
    #[arg(long)]
    pub probe: Option<NamedProbe>,
    /// Probe size for --probe.
    #[arg(long)]
    pub n: Option<usize>,
    /// Grid size for --probe (default 256).
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SdpArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long)]
    pub delta: f64,
    /// Worst case over the parameter instead of a uniform prior.
    #[arg(long)]
    pub minimax: bool,
    /// Where to write the optimal POVM.
    #[arg(long)]
    pub povm: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long)]
    pub delta: f64,
    /// Success probability for the tolerance and sample-complexity bounds.
    #[arg(long, default_value_t = 0.9)]
    pub eta: f64,
    /// Also solve exactly and check the ordering of the bounds.
    #[arg(long)]
    pub exact: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct SmapArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long)]
    pub delta: f64,
    /// Measurement JSON file.
    #[arg(long)]
    pub povm: PathBuf,
    /// Worst-case post-processing (SMCL) instead of SMAP.
    #[arg(long)]
    pub minimax: bool,
    #[command(flatten)]
    pub common: Common,
}
