use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qhash::defaults;
use qhash::photonics::{Apparatus, DetectorModel, SourceModel};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "qhash", version, about = "Quantum hashing with OAM single-photon qubits")]
pub struct Cli {
    /// Directory for data files and the run manifest.
    #[arg(long, global = true, env = "QHASH_OUT_DIR", default_value = ".")]
    pub out: PathBuf,

    /// Suppress progress lines on standard error.
    #[arg(long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Search for a parameter set B minimizing the worst-case fidelity.
    Optimize(OptimizeArgs),
    /// Theoretical bounds, simulated error rates and published values for s = 2..8.
    Table(TableArgs),
    /// Coincidence rate versus analyzer phase.
    Curve(CurveArgs),
    /// Intensity and phase rasters of an LG mode or OAM qubit.
    Lgmap(LgmapArgs),
    /// Simulated tomography of an OAM qubit.
    Tomo(TomoArgs),
    /// One verification run with a per-qubit trace.
    Verify(VerifyArgs),
    /// Collision and one-way bounds of a parameter set.
    Bounds(BoundsArgs),
    /// Replay the command recorded in a run manifest.
    Rerun(RerunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Optimize(_) => "optimize",
            Command::Table(_) => "table",
            Command::Curve(_) => "curve",
            Command::Lgmap(_) => "lgmap",
            Command::Tomo(_) => "tomo",
            Command::Verify(_) => "verify",
            Command::Bounds(_) => "bounds",
            Command::Rerun(_) => "rerun",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Optimize(a) => a.seed,
            Command::Table(a) => Some(a.seed),
            Command::Curve(a) => Some(a.seed),
            Command::Tomo(a) => Some(a.seed),
            Command::Verify(a) => Some(a.seed),
            Command::Lgmap(_) | Command::Bounds(_) | Command::Rerun(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Auto,
    Exhaustive,
    Anneal,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub q: Option<u64>,
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Exhaustive-search budget in qubit-factor evaluations.
    #[arg(long)]
    pub budget: Option<u64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub initial_temp: Option<f64>,
    #[arg(long)]
    pub cooling: Option<f64>,
    /// JSON search configuration; explicit flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ApparatusArgs {
    /// Perfect detectors: unit efficiency, no dark counts, no dead time.
    #[arg(long)]
    pub ideal: bool,
    #[arg(long, default_value_t = defaults::PAIR_RATE_PER_MW * defaults::PUMP_POWER_MW)]
    pub pair_rate: f64,
    #[arg(long, default_value_t = defaults::HERALDING_EFFICIENCY)]
    pub heralding_efficiency: f64,
    #[arg(long)]
    pub herald_efficiency: Option<f64>,
    #[arg(long)]
    pub herald_dark: Option<f64>,
    #[arg(long)]
    pub herald_dead: Option<f64>,
    #[arg(long)]
    pub idler_efficiency: Option<f64>,
    #[arg(long)]
    pub idler_dark: Option<f64>,
    #[arg(long)]
    pub idler_dead: Option<f64>,
    /// Coincidence window (s).
    #[arg(long, default_value_t = defaults::COINCIDENCE_WINDOW)]
    pub window: f64,
}

fn override_detector(base: DetectorModel, eff: Option<f64>, dark: Option<f64>, dead: Option<f64>) -> DetectorModel {
    DetectorModel {
        efficiency: eff.unwrap_or(base.efficiency),
        dark_rate: dark.unwrap_or(base.dark_rate),
        dead_time: dead.unwrap_or(base.dead_time),
    }
}

impl ApparatusArgs {
    pub fn build(&self) -> qhash::Result<Apparatus> {
        let (herald, idler) = if self.ideal {
            (DetectorModel::ideal(), DetectorModel::ideal())
        } else {
            (DetectorModel::spd1(), DetectorModel::spd2())
        };
        let app = Apparatus {
            source: SourceModel {
                pair_rate: self.pair_rate,
                heralding_efficiency: self.heralding_efficiency,
                ell_pump: 0,
            },
            herald: override_detector(herald, self.herald_efficiency, self.herald_dark, self.herald_dead),
            idler: override_detector(idler, self.idler_efficiency, self.idler_dark, self.idler_dead),
            window: self.window,
        };
        app.validate()?;
        Ok(app)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TableArgs {
    #[arg(long, default_value_t = 512)]
    pub q: u64,
    #[arg(long, default_value_t = 2)]
    pub s_min: usize,
    #[arg(long, default_value_t = 8)]
    pub s_max: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Measurements per qubit when estimating each error rate.
    #[arg(long, default_value_t = 20)]
    pub repetitions: usize,
    #[arg(long, default_value_t = defaults::TRIALS_PER_POINT)]
    pub trials_per_point: usize,
    #[arg(long, default_value_t = defaults::CALIBRATION_ITERATIONS)]
    pub calibration_iterations: usize,
    /// Simulated seconds per coincidence measurement.
    #[arg(long, default_value_t = defaults::MEASUREMENT_DURATION)]
    pub duration: f64,
    /// Directory holding `search_q{q}_s{s}.json` results; missing ones are searched on the fly.
    #[arg(long)]
    pub from: Option<PathBuf>,
    /// Do not search for missing results; mark those rows incomplete.
    #[arg(long)]
    pub no_search: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub apparatus: ApparatusArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CurveArgs {
    #[arg(long, value_delimiter = ',', default_values_t = vec![1u32, 2, 3])]
    pub ell: Vec<u32>,
    /// Analyzer phases, evenly spaced over [0, 2π].
    #[arg(long, default_value_t = 33)]
    pub points: usize,
    /// Expected heralded events per point.
    #[arg(long, default_value_t = 10_000.0)]
    pub heralds: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub apparatus: ApparatusArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RasterFormat {
    Csv,
    Bin,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct LgmapArgs {
    #[arg(long, default_value_t = 0)]
    pub p: u32,
    #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
    pub ell: i32,
    /// Map the qubit (|ℓ⟩ + e^{iφ}|−ℓ⟩)/√2 instead of the single mode.
    #[arg(long)]
    pub superposition: bool,
    /// Relative phase of the superposition (rad).
    #[arg(long, default_value_t = 0.0)]
    pub phi: f64,
    /// Beam waist (m).
    #[arg(long, default_value_t = 41e-6)]
    pub w0: f64,
    /// Wavelength (m).
    #[arg(long, default_value_t = defaults::DOWNCONVERTED_WAVELENGTH)]
    pub lambda: f64,
    /// Propagation distance from the waist (m).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub z: f64,
    #[arg(long, default_value_t = defaults::GRID_POINTS)]
    pub size: usize,
    /// Half-width of the map in units of w(z); sized to the mode when omitted.
    #[arg(long)]
    pub extent_waists: Option<f64>,
    #[arg(long, value_enum, default_value_t = RasterFormat::Csv)]
    pub format: RasterFormat,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TomoArgs {
    #[arg(long, default_value_t = 120.0, allow_negative_numbers = true)]
    pub phi_deg: f64,
    #[arg(long, default_value_t = 2)]
    pub ell: u32,
    #[arg(long, default_value_t = defaults::TOMO_SHOTS)]
    pub shots: u64,
    #[arg(long, default_value_t = defaults::BOOTSTRAP_RESAMPLES)]
    pub resamples: usize,
    /// Also reconstruct the state shifted by this many degrees and report the recovered step.
    #[arg(long, allow_negative_numbers = true)]
    pub step_deg: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossPolicyArg {
    Resend,
    Accept,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct VerifyArgs {
    #[arg(long)]
    pub q: u64,
    /// Parameter set, comma separated.
    #[arg(long = "b", value_delimiter = ',', required = true)]
    pub b: Vec<u64>,
    #[arg(long)]
    pub x1: u64,
    #[arg(long)]
    pub x2: u64,
    #[arg(long, default_value_t = 1)]
    pub ell: u32,
    #[arg(long, value_enum, default_value_t = LossPolicyArg::Resend)]
    pub loss_policy: LossPolicyArg,
    /// Repeat the run this many times and report the acceptance frequency.
    #[arg(long, default_value_t = 1)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub apparatus: ApparatusArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BoundsArgs {
    #[arg(long)]
    pub q: u64,
    #[arg(long = "b", value_delimiter = ',', required = true)]
    pub b: Vec<u64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RerunArgs {
    pub manifest: PathBuf,
}
