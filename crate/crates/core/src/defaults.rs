//! Physical and numerical defaults mirroring the reference OAM experiment.
//!
//! Everything here can be overridden per call or per CLI flag.

/// Photon-pair generation rate per mW of pump, including optical losses (1/s).
pub const PAIR_RATE_PER_MW: f64 = 176_000.0;
/// Pump power (mW). At 1 mW the pair rate equals [`PAIR_RATE_PER_MW`].
pub const PUMP_POWER_MW: f64 = 1.0;
/// Ratio of heralded-channel to heralding-channel count rates.
pub const HERALDING_EFFICIENCY: f64 = 0.11;

/// SPD1, heralding channel (free-running).
pub const SPD1_EFFICIENCY: f64 = 0.45;
pub const SPD1_DARK_RATE: f64 = 2_000.0;
pub const SPD1_DEAD_TIME: f64 = 150e-9;

/// SPD2, hash-photon channel (gated).
pub const SPD2_EFFICIENCY: f64 = 0.25;
pub const SPD2_DARK_RATE: f64 = 10_000.0;
pub const SPD2_DEAD_TIME: f64 = 14e-6;

/// Coincidence window (s).
pub const COINCIDENCE_WINDOW: f64 = 5e-9;

/// Nonlinear crystal length (m) and pump wavelength (m).
pub const CRYSTAL_LENGTH: f64 = 10e-3;
pub const PUMP_WAVELENGTH: f64 = 532e-9;
/// Down-converted wavelength (m), degenerate type-0/I.
pub const DOWNCONVERTED_WAVELENGTH: f64 = 1064e-9;

/// Positioning sensitivity of the analyzer optics (m). Informational only.
pub const POSITIONING_SENSITIVITY: f64 = 8e-6;
/// SLM refresh rate (Hz). Informational only.
pub const SLM_RATE_HZ: f64 = 60.0;

/// Field-map sampling: points per side and half-extent in units of w(z).
pub const GRID_POINTS: usize = 512;
pub const GRID_HALF_EXTENT_WAISTS: f64 = 4.0;

/// Verification protocol.
pub const TRIALS_PER_POINT: usize = 100;
pub const CALIBRATION_ITERATIONS: usize = 10;
pub const MEASUREMENT_DURATION: f64 = 1.0;
pub const RESEND_LIMIT: u32 = 1000;

/// Tomography.
pub const TOMO_SHOTS: u64 = 100_000;
pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Parameter search.
pub const SEARCH_BUDGET: u128 = 1_000_000_000;
pub const ANNEAL_ITERS: usize = 80_000;
pub const ANNEAL_RESTARTS: usize = 16;
pub const ANNEAL_INITIAL_TEMP: f64 = 0.3;
/// Per-step factor taking the temperature from 0.3 to about 1e-3 over `ANNEAL_ITERS`.
pub const ANNEAL_COOLING: f64 = 0.999_928_71;
