//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::defaults as dflt;

#[derive(Debug, Parser)]
#[command(name = "bellman", version, about = "Experiments on mean-field control value functions")]
pub struct Cli {
    /// Output directory; falls back to $BELLMAN_OUT_DIR, then the current directory.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Command {
    /// Run an experiment described by a configuration file.
    #[serde(skip)]
    Run(RunArgs),
    /// Exact or smoothed quadratic Wasserstein distance.
    W2(W2Args),
    /// Dyadic multiscale upper bound on W2^2.
    Bound(BoundArgs),
    /// Empirical convergence rate of sampled measures.
    Rate(RateArgs),
    /// Fit the dyadic scale constant on a random corpus.
    Calibrate(CalibrateArgs),
    /// Audit the gauge axioms on a list of pairs.
    GaugeCheck(GaugeCheckArgs),
    /// Borwein-Preiss iteration on a finite candidate set.
    Bp(BpArgs),
    /// Simulate the controlled particle system.
    Simulate(SimulateArgs),
    /// Value by policy search.
    Value(ValueArgs),
    /// Gap between regularised and unregularised values.
    EpsGap(EpsGapArgs),
    /// Dynamic programming check.
    DppCheck(DppArgs),
    /// Lipschitz ratios of the value in the measure.
    LipCheck(LipArgs),
    /// Ito formula along a simulated flow.
    ItoCheck(ItoArgs),
    /// Solve the mollified n-player equation on a grid.
    HjbSolve(HjbArgs),
    /// Finite-player values against the mean-field reference.
    Chaos(ChaosArgs),
    /// Master equation residual of a lifted grid.
    Residual(ResidualArgs),
    /// Gnuplot data and script from a CSV table.
    Plot(PlotArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Run(_) => "run",
            Command::W2(_) => "w2",
            Command::Bound(_) => "bound",
            Command::Rate(_) => "rate",
            Command::Calibrate(_) => "calibrate",
            Command::GaugeCheck(_) => "gauge-check",
            Command::Bp(_) => "bp",
            Command::Simulate(_) => "simulate",
            Command::Value(_) => "value",
            Command::EpsGap(_) => "eps-gap",
            Command::DppCheck(_) => "dpp-check",
            Command::LipCheck(_) => "lip-check",
            Command::ItoCheck(_) => "ito-check",
            Command::HjbSolve(_) => "hjb-solve",
            Command::Chaos(_) => "chaos",
            Command::Residual(_) => "residual",
            Command::Plot(_) => "plot",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::W2(a) => a.seed,
            Command::Rate(a) => Some(a.seed),
            Command::Calibrate(a) => Some(a.seed),
            Command::Simulate(a) => Some(a.sim.seed),
            Command::Value(a) => Some(a.sim.seed),
            Command::EpsGap(a) => Some(a.sim.seed),
            Command::DppCheck(a) => Some(a.sim.seed),
            Command::LipCheck(a) => Some(a.sim.seed),
            Command::ItoCheck(a) => Some(a.seed),
            Command::Chaos(a) => Some(a.seed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    pub config: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MeasureArg {
    /// Measure file (.json or .csv).
    #[arg(long)]
    pub mu: PathBuf,
    /// Dimension, needed for CSV input.
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct W2Args {
    #[arg(long)]
    pub mu: PathBuf,
    #[arg(long)]
    pub nu: PathBuf,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Gaussian bandwidth; switches to the sampled smoothed distance.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, default_value = dflt::SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value = dflt::REPS)]
    pub reps: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// File name for the optimal plan.
    #[arg(long)]
    pub plan: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundArgs {
    #[arg(long)]
    pub mu: PathBuf,
    #[arg(long)]
    pub nu: PathBuf,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub cd: f64,
    #[arg(long)]
    pub nmax: Option<u32>,
    #[arg(long)]
    pub lmax: Option<u32>,
    /// Compare the smoothed measures at this bandwidth.
    #[arg(long)]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RateArgs {
    #[command(flatten)]
    pub measure: MeasureArg,
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long, default_value = dflt::REPS)]
    pub reps: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, default_value = dflt::REFERENCE_SIZE)]
    pub reference_size: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value = dflt::INSTANCES)]
    pub instances: usize,
    #[arg(long)]
    pub seed: u64,
    /// Also fit the gauge derivative constant at this bandwidth.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Pairs used for the derivative constant.
    #[arg(long, default_value = "20")]
    pub derivative_pairs: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GaugeCheckArgs {
    /// Gauge parameters as JSON.
    #[arg(long)]
    pub spec: PathBuf,
    /// JSON list of `{"p": {"t", "mu"}, "q": {"t", "mu"}}` objects.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.1")]
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BpArgs {
    /// CSV with a column `g`, one row per candidate.
    #[arg(long)]
    pub g: PathBuf,
    /// JSON list of `{"t", "mu"}` candidates.
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long)]
    pub delta: f64,
    #[arg(long)]
    pub start: usize,
    /// Gauge parameters as JSON; the bandwidth is replaced by 1/delta.
    #[arg(long)]
    pub spec: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CoeffArgs {
    /// Registry key: heat-cos, tanh-interact or bangbang.
    #[arg(long = "coeffs")]
    pub key: String,
    /// Parameter override `name=value`, repeatable.
    #[arg(long = "set", value_parser = parse_override)]
    pub overrides: Vec<(String, f64)>,
}

fn parse_override(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got {s}"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("{k}: {e}"))?;
    Ok((k.trim().to_string(), v))
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimArgs {
    #[arg(long, default_value = dflt::PARTICLES)]
    pub particles: usize,
    #[arg(long, default_value = dflt::STEPS)]
    pub steps: usize,
    #[arg(long, default_value = dflt::EPS)]
    pub eps: f64,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PolicyArgs {
    /// Add bang-bang threshold policies switching at these state values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub coeffs: CoeffArgs,
    #[command(flatten)]
    pub measure: MeasureArg,
    #[arg(long, default_value = dflt::T)]
    pub t: f64,
    /// Index of the constant control.
    #[arg(long, default_value = "0")]
    pub control: usize,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ValueArgs {
    #[command(flatten)]
    pub coeffs: CoeffArgs,
    #[command(flatten)]
    pub measure: MeasureArg,
    #[arg(long, default_value = dflt::T)]
    pub t: f64,
    #[command(flatten)]
    pub policies: PolicyArgs,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EpsGapArgs {
    #[command(flatten)]
    pub coeffs: CoeffArgs,
    #[command(flatten)]
    pub measure: MeasureArg,
    #[arg(long, default_value = dflt::T)]
    pub t: f64,
    #[arg(long = "eps-list", value_delimiter = ',', default_value = "0,0.1,0.2,0.4", allow_hyphen_values = true)]
    pub eps_list: Vec<f64>,
    #[command(flatten)]
    pub policies: PolicyArgs,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DppArgs {
    #[command(flatten)]
    pub coeffs: CoeffArgs,
    #[command(flatten)]
    pub measure: MeasureArg,
    #[arg(long, default_value = dflt::T)]
    pub t: f64,
    /// Intermediate time; defaults to the midpoint of [t, T].
    #[arg(long)]
    pub s: Option<f64>,
    #[command(flatten)]
    pub policies: PolicyArgs,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LipArgs {
    #[command(flatten)]
    pub coeffs: CoeffArgs,
    /// JSON list of `{"mu", "nu"}` measure pairs.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long, default_value = dflt::T)]
    pub t: f64,
    /// Lipschitz constant to verify.
    #[arg(long)]
    pub bound: Option<f64>,
    #[command(flatten)]
    pub policies: PolicyArgs,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateKind {
    Mean,
    SecondMoment,
    HeatCos,
    Gauge,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ItoArgs {
    #[arg(long, value_enum)]
    pub candidate: CandidateKind,
    #[command(flatten)]
    pub measure: MeasureArg,
    /// Constant drift, one entry per dimension.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub beta: Vec<f64>,
    /// Constant diffusion, row-major `d x m`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Vec<f64>,
    #[arg(long, default_value = dflt::T)]
    pub t: f64,
    #[arg(long)]
    pub s: f64,
    #[arg(long, default_value = dflt::PARTICLES)]
    pub particles: usize,
    #[arg(long, default_value = dflt::STEPS)]
    pub steps: usize,
    #[arg(long)]
    pub seed: u64,
    /// Gauge parameters as JSON, for the gauge candidate.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Anchor measure of the gauge candidate.
    #[arg(long)]
    pub anchor: Option<PathBuf>,
    #[arg(long, default_value = dflt::T)]
    pub anchor_t: f64,
    /// Terminal time of the heat-cos candidate.
    #[arg(long, default_value = "1")]
    pub horizon: f64,
    /// Fail when the residual exceeds this value.
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeArg {
    Explicit,
    Implicit,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GridArgs {
    /// `R,points,steps`; `auto` selects the default for an entry.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, default_value = dflt::SUPPORT)]
    pub support: f64,
    #[arg(long, value_enum, default_value = "explicit")]
    pub scheme: SchemeArg,
    #[arg(long, default_value = dflt::NODES)]
    pub nodes: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct HjbArgs {
    #[command(flatten)]
    pub coeffs: CoeffArgs,
    #[arg(long, default_value = dflt::N)]
    pub n: usize,
    #[arg(long, default_value = dflt::M)]
    pub m: usize,
    #[arg(long, default_value = dflt::EPS)]
    pub eps: f64,
    #[command(flatten)]
    pub grid: GridArgs,
    /// File name of the grid.
    #[arg(long, default_value = "grid.bin")]
    pub out: String,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ChaosArgs {
    #[command(flatten)]
    pub coeffs: CoeffArgs,
    #[command(flatten)]
    pub measure: MeasureArg,
    #[arg(long, default_value = dflt::T)]
    pub t: f64,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "4,8,16")]
    pub m: Vec<usize>,
    #[arg(long, default_value = dflt::EPS)]
    pub eps: f64,
    /// Grid nodes per axis for each entry of the n list.
    #[arg(long, value_delimiter = ',', default_value = "401,121,81")]
    pub points: Vec<usize>,
    #[arg(long, default_value = dflt::SUPPORT)]
    pub support: f64,
    #[arg(long, default_value = dflt::PARTICLES)]
    pub particles: usize,
    #[arg(long, default_value = dflt::STEPS)]
    pub steps: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value = dflt::TOLERANCE)]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ResidualArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[command(flatten)]
    pub measure: MeasureArg,
    #[arg(long = "t")]
    pub t: f64,
    /// Parameter overrides of the coefficients stored in the grid header.
    #[arg(long = "set", value_parser = parse_override)]
    pub overrides: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    /// Columns `n` and `mean` (and `stderr` when present) on log scales.
    Loglog,
    /// One block per `n` of `(m, value)` rows.
    Series,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PlotArgs {
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long, value_enum)]
    pub kind: PlotKind,
    /// Base name of the emitted files; defaults to the table's stem.
    #[arg(long)]
    pub name: Option<String>,
}
