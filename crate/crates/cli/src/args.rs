use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use scapa::{CostModel, PenaltyMode};

#[derive(Debug, Parser)]
#[command(
    name = "scapa",
    version,
    about = "Sequential detection of point and collective anomalies"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the detector over a CSV file or stdin and emit events as JSON lines.
    Stream(StreamArgs),
    /// Run the machine-temperature experiment and score it against the
    /// labelled failure windows.
    Nab(NabArgs),
    /// Run a Monte Carlo study and write its CSV table.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    MeanVariance,
    MeanOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PenaltyArg {
    LengthDependent,
    Constant,
    Threshold,
}

impl From<PenaltyArg> for PenaltyMode {
    fn from(p: PenaltyArg) -> Self {
        match p {
            PenaltyArg::LengthDependent => PenaltyMode::LengthDependent,
            PenaltyArg::Constant => PenaltyMode::Constant,
            PenaltyArg::Threshold => PenaltyMode::Threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineArg {
    Sequential,
    Known,
}

#[derive(Debug, Clone, Args)]
pub struct StreamArgs {
    /// Input CSV; stdin when omitted or `-`.
    pub input: Option<PathBuf>,

    /// Penalty parameter.
    #[arg(
        long,
        conflicts_with = "arl_target",
        required_unless_present = "arl_target"
    )]
    pub lambda: Option<f64>,

    /// Target run length between false alarms; sets lambda = 2 ln(target).
    #[arg(long)]
    pub arl_target: Option<f64>,

    /// Shortest collective anomaly.
    #[arg(short = 'l', long, default_value_t = 2)]
    pub min_seg_len: usize,

    /// Longest collective anomaly.
    #[arg(short = 'm', long, default_value_t = 1000)]
    pub max_seg_len: usize,

    /// Number of leading observations used as burn-in.
    #[arg(long, default_value_t = 100, conflicts_with = "burn_in_frac")]
    pub burn_in: usize,

    /// Burn-in as a fraction of the whole input (reads the input up front).
    #[arg(long)]
    pub burn_in_frac: Option<f64>,

    #[arg(long, value_enum, default_value_t = ModelArg::MeanVariance)]
    pub model: ModelArg,

    /// Offset inside the point-anomaly logarithm.
    #[arg(long, default_value_t = scapa::costs::DEFAULT_GAMMA)]
    pub gamma: f64,

    #[arg(long, value_enum, default_value_t = PenaltyArg::LengthDependent)]
    pub penalty: PenaltyArg,

    #[arg(long, value_enum, default_value_t = BaselineArg::Sequential)]
    pub baseline: BaselineArg,

    /// Typical mean for `--baseline known`.
    #[arg(long, default_value_t = 0.0)]
    pub mu0: f64,

    /// Typical standard deviation for `--baseline known`.
    #[arg(long, default_value_t = 1.0)]
    pub sigma0: f64,

    /// AR(1) coefficient of the noise; inflates the penalties.
    #[arg(long, conflicts_with = "auto_phi")]
    pub phi: Option<f64>,

    /// Estimate the AR(1) coefficient from the burn-in.
    #[arg(long)]
    pub auto_phi: bool,

    /// Ignore any timestamp column and use 1-based positions.
    #[arg(long)]
    pub index_time: bool,

    #[arg(long, env = "SCAPA_SEED", default_value_t = 0)]
    pub seed: u64,
}

impl StreamArgs {
    pub fn cost_model(&self) -> Result<CostModel, scapa::Error> {
        match self.model {
            ModelArg::MeanVariance => CostModel::mean_variance(self.gamma),
            ModelArg::MeanOnly => Ok(CostModel::MeanOnly),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct NabArgs {
    /// Path to machine_temperature_system_failure.csv.
    pub path: PathBuf,

    #[arg(short = 'l', long, default_value_t = 2)]
    pub min_seg_len: usize,

    #[arg(short = 'm', long, default_value_t = 1000)]
    pub max_seg_len: usize,

    #[arg(long, default_value_t = 0.15)]
    pub burn_in_frac: f64,

    /// Use this AR(1) coefficient instead of estimating it.
    #[arg(long)]
    pub phi: Option<f64>,

    /// Also print every event as a JSON line.
    #[arg(long)]
    pub events: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Study {
    /// Run length to false alarm on anomaly-free noise.
    Arl,
    /// Delay in detecting a mean shift.
    Add,
    /// ROC curves on series with many anomalies.
    Roc,
    /// Run lengths on AR(1) noise with and without penalty inflation.
    Inflation,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(value_enum)]
    pub study: Study,

    /// Penalty grid: `start:stop:step`, a comma list, or one value.
    #[arg(long, default_value = "4:12:2")]
    pub lambda: String,

    /// Signal strengths for `add`.
    #[arg(long, default_value = "0.05,0.1,0.2")]
    pub delta: String,

    /// AR(1) coefficients; `inflation` and `add` sweep them.
    #[arg(long, default_value = "0")]
    pub phi: String,

    /// Scale penalties by (1+phi)/(1-phi) in `inflation`.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub inflate: bool,

    /// Methods for `roc`.
    #[arg(long, default_value = "scapa,capa")]
    pub method: String,

    #[arg(long, default_value_t = 500)]
    pub reps: usize,

    #[arg(long, env = "SCAPA_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Directory for the CSV output.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,

    #[arg(short = 'l', long)]
    pub min_seg_len: Option<usize>,

    #[arg(short = 'm', long)]
    pub max_seg_len: Option<usize>,

    #[arg(long)]
    pub burn_in: Option<usize>,

    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,

    #[arg(long, value_enum)]
    pub penalty: Option<PenaltyArg>,

    #[arg(long, value_enum)]
    pub baseline: Option<BaselineArg>,

    /// Series length for `roc`.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,

    /// Point-anomaly rate for `roc`.
    #[arg(long, default_value_t = 0.01)]
    pub point_prob: f64,

    /// Degrees of freedom of point anomalies for `roc`.
    #[arg(long, default_value_t = 2.0)]
    pub point_df: f64,

    /// Steps after which a run is censored.
    #[arg(long, default_value_t = scapa::simlab::DEFAULT_CAP)]
    pub cap: u64,

    #[arg(long, default_value_t = scapa::simlab::DEFAULT_BOOTSTRAP)]
    pub bootstrap: usize,
}
