//! Physical layer: Laguerre–Gaussian modes, OAM qubits, the SPDC pair source
//! and single-photon detectors, and event-level coincidence counting.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};
use std::io::{self, Write};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::defaults;
use crate::error::{Error, Result};
use crate::seeds::rng_for;

/// Generalized Laguerre polynomial `L_n^α(x)` by the three-term recurrence.
pub fn laguerre(n: u32, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for k in 1..n {
        let k = k as f64;
        let next = ((2.0 * k + 1.0 + alpha - x) * cur - (k + alpha) * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// `LG_p^ℓ` beam with waist `w0` at `z = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LGMode {
    pub p: u32,
    pub ell: i32,
    pub w0: f64,
    pub lambda: f64,
}

impl LGMode {
    pub fn new(p: u32, ell: i32, w0: f64, lambda: f64) -> Result<Self> {
        if !(w0 > 0.0 && w0.is_finite()) || !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!(
                "beam waist ({w0}) and wavelength ({lambda}) must be positive"
            )));
        }
        Ok(Self { p, ell, w0, lambda })
    }

    pub fn with_charge(self, ell: i32) -> Self {
        Self { ell, ..self }
    }

    pub fn wavenumber(&self) -> f64 {
        TAU / self.lambda
    }

    /// `z_R = k w0² / 2`.
    pub fn rayleigh_range(&self) -> f64 {
        self.wavenumber() * self.w0 * self.w0 / 2.0
    }

    /// Beam radius `w(z) = w0 √(1 + z²/z_R²)`.
    pub fn radius(&self, z: f64) -> f64 {
        let zr = self.rayleigh_range();
        self.w0 * (1.0 + (z / zr).powi(2)).sqrt()
    }

    /// Gouy phase `(|ℓ| + 2p + 1)·arctan(z/z_R)`.
    pub fn gouy_phase(&self, z: f64) -> f64 {
        self.mode_order() as f64 * (z / self.rayleigh_range()).atan()
    }

    /// `|ℓ| + 2p + 1`.
    pub fn mode_order(&self) -> u32 {
        self.ell.unsigned_abs() + 2 * self.p + 1
    }

    /// Complex field amplitude at cylindrical coordinates `(ρ, φ, z)`.
    pub fn amplitude(&self, rho: f64, phi: f64, z: f64) -> Complex64 {
        let l = self.ell.unsigned_abs();
        let w = self.radius(z);
        let zr = self.rayleigh_range();
        let norm = (2.0 * factorial(self.p) / (PI * factorial(self.p + l))).sqrt();
        let u = 2.0 * rho * rho / (w * w);
        let radial = norm / w
            * (2f64.sqrt() * rho / w).powi(l as i32)
            * laguerre(self.p, l as f64, u)
            * (-rho * rho / (w * w)).exp();
        let curvature = -self.wavenumber() * rho * rho * z / (2.0 * (zr * zr + z * z));
        let phase = curvature + self.ell as f64 * phi - self.gouy_phase(z);
        Complex64::from_polar(radial, phase)
    }

    /// Cartesian convenience wrapper around [`LGMode::amplitude`].
    pub fn amplitude_xy(&self, x: f64, y: f64, z: f64) -> Complex64 {
        self.amplitude(x.hypot(y), y.atan2(x), z)
    }
}

/// `∫∫ A_a A_b* ρ dρ dφ` by polar quadrature: `n_phi` uniform azimuthal
/// samples (exact for `|ℓ_a − ℓ_b| < n_phi`) and composite Simpson in ρ over
/// `[0, r_max]` with `n_rho` (even) intervals.
pub fn mode_overlap(a: &LGMode, b: &LGMode, z: f64, r_max: f64, n_rho: usize, n_phi: usize) -> Complex64 {
    let n_rho = n_rho + n_rho % 2;
    let h = r_max / n_rho as f64;
    let dphi = TAU / n_phi as f64;
    (0..=n_rho)
        .into_par_iter()
        .map(|i| {
            let rho = i as f64 * h;
            let weight = if i == 0 || i == n_rho {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let ring: Complex64 = (0..n_phi)
                .map(|k| {
                    let phi = k as f64 * dphi;
                    a.amplitude(rho, phi, z) * b.amplitude(rho, phi, z).conj()
                })
                .sum();
            ring * (weight * rho * dphi * h / 3.0)
        })
        .sum()
}

/// `∫|A|² dA`, which should be 1 for every mode.
pub fn norm_integral(mode: &LGMode, z: f64) -> f64 {
    let r_max = default_half_extent(mode, z) * 1.5;
    mode_overlap(mode, mode, z, r_max, 4000, 8).re
}

/// Half-width of a field map that keeps the truncated power below ~1e−8.
pub fn default_half_extent(mode: &LGMode, z: f64) -> f64 {
    let order = (2 * mode.p + mode.ell.unsigned_abs()) as f64;
    defaults::GRID_HALF_EXTENT_WAISTS * (1.0 + order / 2.0).sqrt() * mode.radius(z)
}

/// Single-photon qubit `(|ℓ⟩ + e^{iφ}|−ℓ⟩)/√2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OAMQubit {
    pub ell: u32,
    pub phi: f64,
}

impl OAMQubit {
    pub fn new(ell: u32, phi: f64) -> Result<Self> {
        if ell == 0 {
            return Err(Error::Domain("qubit charge |ℓ| must be positive".into()));
        }
        if !phi.is_finite() {
            return Err(Error::Domain("qubit phase must be finite".into()));
        }
        Ok(Self {
            ell,
            phi: phi.rem_euclid(TAU),
        })
    }

    /// Amplitudes on `|ℓ⟩`, `|−ℓ⟩`.
    pub fn amplitudes(&self) -> [Complex64; 2] {
        [
            Complex64::new(FRAC_1_SQRT_2, 0.0),
            Complex64::from_polar(FRAC_1_SQRT_2, self.phi),
        ]
    }

    /// Transverse field of the superposition built on `template`'s `p`, `w0`, `λ`.
    pub fn field(&self, template: &LGMode, rho: f64, phi: f64, z: f64) -> Complex64 {
        let plus = template.with_charge(self.ell as i32);
        let minus = template.with_charge(-(self.ell as i32));
        let amps = self.amplitudes();
        amps[0] * plus.amplitude(rho, phi, z) + amps[1] * minus.amplitude(rho, phi, z)
    }
}

/// `cos²((φ₂ − φ₁)/2)`: probability that `prepared` passes a projection onto `analyzed`.
pub fn projection_probability(prepared: &OAMQubit, analyzed: &OAMQubit) -> Result<f64> {
    if prepared.ell != analyzed.ell {
        return Err(Error::Domain(format!(
            "cross-basis projection |ℓ|={} onto |ℓ|={}",
            prepared.ell, analyzed.ell
        )));
    }
    Ok(((analyzed.phi - prepared.phi) / 2.0).cos().powi(2))
}

/// Optimal pump waist `√(L/k_p)` and down-converted waist `√2·w_p`.
pub fn optimal_waists(crystal_length: f64, lambda_pump: f64) -> Result<(f64, f64)> {
    if !(crystal_length > 0.0 && lambda_pump > 0.0) {
        return Err(Error::Domain("crystal length and pump wavelength must be positive".into()));
    }
    let kp = TAU / lambda_pump;
    let wp = (crystal_length / kp).sqrt();
    Ok((wp, 2f64.sqrt() * wp))
}

/// Square sampling grid centred on the beam axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    /// Half-width of the sampled square (m).
    pub half_extent: f64,
}

impl Grid {
    pub fn new(width: usize, height: usize, half_extent: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Domain("grid must have at least one point per axis".into()));
        }
        if !(half_extent > 0.0 && half_extent.is_finite()) {
            return Err(Error::Domain("grid extent must be positive and finite".into()));
        }
        Ok(Self {
            width,
            height,
            half_extent,
        })
    }

    /// Default 512×512 grid sized for `mode` at `z`.
    pub fn default_for(mode: &LGMode, z: f64) -> Self {
        Self {
            width: defaults::GRID_POINTS,
            height: defaults::GRID_POINTS,
            half_extent: default_half_extent(mode, z),
        }
    }

    pub fn spacing(&self) -> (f64, f64) {
        (
            2.0 * self.half_extent / self.width as f64,
            2.0 * self.half_extent / self.height as f64,
        )
    }

    /// Cell-centred coordinates of column `i`, row `j`.
    pub fn point(&self, i: usize, j: usize) -> (f64, f64) {
        let (dx, dy) = self.spacing();
        (
            -self.half_extent + (i as f64 + 0.5) * dx,
            -self.half_extent + (j as f64 + 0.5) * dy,
        )
    }
}

/// Row-major real raster over a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub grid: Grid,
    pub units: String,
    pub data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RasterHeader<'a> {
    width: usize,
    height: usize,
    extent: [f64; 4],
    units: &'a str,
    dtype: &'a str,
}

impl Raster {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.grid.width + i]
    }

    /// One CSV line per row, comma separated.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        for row in self.data.chunks(self.grid.width) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// One-line JSON header, then `width·height` little-endian `f64` values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        let e = self.grid.half_extent;
        let header = RasterHeader {
            width: self.grid.width,
            height: self.grid.height,
            extent: [-e, e, -e, e],
            units: &self.units,
            dtype: "f64le",
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(bytes: &[u8]) -> io::Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "missing header"))?;
        let header: RasterHeader = serde_json::from_slice(&bytes[..nl])?;
        let body = &bytes[nl + 1..];
        if body.len() != header.width * header.height * 8 {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "raster size mismatch"));
        }
        let data = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self {
            grid: Grid {
                width: header.width,
                height: header.height,
                half_extent: header.extent[1],
            },
            units: header.units.to_string(),
            data,
        })
    }
}

fn sample_grid<F>(grid: &Grid, units: &str, f: F) -> Raster
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let data = (0..grid.height)
        .into_par_iter()
        .flat_map_iter(|j| {
            let f = &f;
            (0..grid.width).map(move |i| {
                let (x, y) = grid.point(i, j);
                f(x, y)
            })
        })
        .collect();
    Raster {
        grid: *grid,
        units: units.to_string(),
        data,
    }
}

/// `|(A_{+ℓ} + e^{iφ}A_{−ℓ})/√2|²` on `grid` at propagation distance `z`.
pub fn superposition_intensity(qubit: &OAMQubit, template: &LGMode, grid: &Grid, z: f64) -> Raster {
    sample_grid(grid, "1/m^2", |x, y| {
        qubit.field(template, x.hypot(y), y.atan2(x), z).norm_sqr()
    })
}

/// Phase of the superposition field in `(−π, π]`.
pub fn superposition_phase(qubit: &OAMQubit, template: &LGMode, grid: &Grid, z: f64) -> Raster {
    sample_grid(grid, "rad", |x, y| {
        qubit.field(template, x.hypot(y), y.atan2(x), z).arg()
    })
}

/// Intensity `|A|²` of a single mode.
pub fn mode_intensity(mode: &LGMode, grid: &Grid, z: f64) -> Raster {
    sample_grid(grid, "1/m^2", |x, y| mode.amplitude_xy(x, y, z).norm_sqr())
}

/// Phase `arg A` of a single mode in (−π, π].
pub fn mode_phase(mode: &LGMode, grid: &Grid, z: f64) -> Raster {
    sample_grid(grid, "rad", |x, y| mode.amplitude_xy(x, y, z).arg())
}

/// SPDC photon-pair source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    /// Pair rate at the operating pump power (1/s).
    pub pair_rate: f64,
    /// Fraction of pairs whose heralded photon reaches the analyzer.
    pub heralding_efficiency: f64,
    pub ell_pump: i32,
}

impl Default for SourceModel {
    fn default() -> Self {
        Self {
            pair_rate: defaults::PAIR_RATE_PER_MW * defaults::PUMP_POWER_MW,
            heralding_efficiency: defaults::HERALDING_EFFICIENCY,
            ell_pump: 0,
        }
    }
}

impl SourceModel {
    /// Idler charge fixed by OAM conservation `ℓ_p = ℓ_s + ℓ_i`.
    pub fn idler_charge(&self, signal_charge: i32) -> i32 {
        self.ell_pump - signal_charge
    }

    /// Rate of pairs whose heralded photon survives to the analyzer.
    pub fn heralded_pair_rate(&self) -> f64 {
        self.pair_rate * self.heralding_efficiency
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pair_rate >= 0.0 && self.pair_rate.is_finite()) {
            return Err(Error::Domain("pair rate must be non-negative".into()));
        }
        if !(self.heralding_efficiency > 0.0 && self.heralding_efficiency <= 1.0) {
            return Err(Error::Domain("heralding efficiency must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Single-photon detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub efficiency: f64,
    /// Dark counts per second.
    pub dark_rate: f64,
    /// Non-paralyzable dead time (s).
    pub dead_time: f64,
}

impl DetectorModel {
    pub fn new(efficiency: f64, dark_rate: f64, dead_time: f64) -> Result<Self> {
        let d = Self {
            efficiency,
            dark_rate,
            dead_time,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::Domain(format!("efficiency {} not in (0, 1]", self.efficiency)));
        }
        if !(self.dark_rate >= 0.0 && self.dead_time >= 0.0) {
            return Err(Error::Domain("dark rate and dead time must be non-negative".into()));
        }
        Ok(())
    }

    pub fn ideal() -> Self {
        Self {
            efficiency: 1.0,
            dark_rate: 0.0,
            dead_time: 0.0,
        }
    }

    /// Heralding detector of the reference setup.
    pub fn spd1() -> Self {
        Self {
            efficiency: defaults::SPD1_EFFICIENCY,
            dark_rate: defaults::SPD1_DARK_RATE,
            dead_time: defaults::SPD1_DEAD_TIME,
        }
    }

    /// Hash-photon detector of the reference setup.
    pub fn spd2() -> Self {
        Self {
            efficiency: defaults::SPD2_EFFICIENCY,
            dark_rate: defaults::SPD2_DARK_RATE,
            dead_time: defaults::SPD2_DEAD_TIME,
        }
    }

    /// Probability of a dark count inside one coincidence window.
    pub fn dark_probability(&self, window: f64) -> f64 {
        -(-self.dark_rate * window).exp_m1()
    }
}

/// Source, herald and analyzer detectors, and the coincidence window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Apparatus {
    pub source: SourceModel,
    pub herald: DetectorModel,
    pub idler: DetectorModel,
    /// Full coincidence window (s); events coincide when `|Δt| ≤ window/2`.
    pub window: f64,
}

impl Default for Apparatus {
    fn default() -> Self {
        Self {
            source: SourceModel::default(),
            herald: DetectorModel::spd1(),
            idler: DetectorModel::spd2(),
            window: defaults::COINCIDENCE_WINDOW,
        }
    }
}

impl Apparatus {
    /// Default source with perfect, noise-free detectors.
    pub fn ideal() -> Self {
        Self {
            herald: DetectorModel::ideal(),
            idler: DetectorModel::ideal(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.herald.validate()?;
        self.idler.validate()?;
        if !(self.window >= 0.0) {
            return Err(Error::Domain("coincidence window must be non-negative".into()));
        }
        Ok(())
    }

    /// Duration giving `heralds` expected true herald clicks.
    pub fn duration_for_heralds(&self, heralds: f64) -> f64 {
        heralds / (self.source.heralded_pair_rate() * self.herald.efficiency)
    }

    /// Mean coincidence count from true pairs, ignoring dead time and accidentals.
    pub fn expected_true_coincidences(&self, projection_prob: f64, duration: f64) -> f64 {
        self.source.heralded_pair_rate()
            * self.herald.efficiency
            * self.idler.efficiency
            * projection_prob
            * duration
    }
}

/// Herald clicks and coincidences from one counting run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub heralds: u64,
    pub coincidences: u64,
}

impl Counts {
    pub fn ratio(&self) -> f64 {
        if self.heralds == 0 {
            0.0
        } else {
            self.coincidences as f64 / self.heralds as f64
        }
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        0
    } else {
        Poisson::new(mean).expect("finite positive mean").sample(rng) as u64
    }
}

fn uniform_times<R: Rng + ?Sized>(n: u64, duration: f64, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>() * duration).collect()
}

/// Drops events inside the dead time of the last recorded event.
fn apply_dead_time(sorted: &[f64], dead: f64) -> Vec<f64> {
    if dead <= 0.0 {
        return sorted.to_vec();
    }
    let mut kept = Vec::with_capacity(sorted.len());
    let mut last = f64::NEG_INFINITY;
    for &t in sorted {
        if t - last >= dead {
            kept.push(t);
            last = t;
        }
    }
    kept
}

/// Number of herald events with at least one idler event within `±window/2`.
fn count_coincidences(heralds: &[f64], idlers: &[f64], window: f64) -> u64 {
    let half = window / 2.0;
    let mut k = 0;
    let mut n = 0;
    for &t in heralds {
        while k < idlers.len() && idlers[k] < t - half {
            k += 1;
        }
        if k < idlers.len() && idlers[k] <= t + half {
            n += 1;
        }
    }
    n
}

/// Event-level simulation of one counting run.
///
/// Heralded pairs arrive as a Poisson process at `pair_rate·η_herald`. Each is
/// seen by the herald detector with its efficiency and by the analyzer detector
/// with efficiency × `projection_prob`. Dark counts are added to both streams,
/// non-paralyzable dead time is applied per detector, and coincidences are
/// herald clicks with an analyzer click within the window.
pub fn count_run<R: Rng + ?Sized>(
    apparatus: &Apparatus,
    projection_prob: f64,
    duration: f64,
    rng: &mut R,
) -> Counts {
    let pairs = poisson(apparatus.source.heralded_pair_rate() * duration, rng);
    let mut herald_times = Vec::with_capacity(pairs as usize);
    let mut idler_times = Vec::with_capacity(pairs as usize);
    for t in uniform_times(pairs, duration, rng) {
        if rng.random::<f64>() < apparatus.herald.efficiency {
            herald_times.push(t);
        }
        if rng.random::<f64>() < apparatus.idler.efficiency * projection_prob {
            idler_times.push(t);
        }
    }
    let herald_dark = poisson(apparatus.herald.dark_rate * duration, rng);
    herald_times.extend(uniform_times(herald_dark, duration, rng));
    let idler_dark = poisson(apparatus.idler.dark_rate * duration, rng);
    idler_times.extend(uniform_times(idler_dark, duration, rng));

    herald_times.sort_unstable_by(f64::total_cmp);
    idler_times.sort_unstable_by(f64::total_cmp);
    let heralds = apply_dead_time(&herald_times, apparatus.herald.dead_time);
    let idlers = apply_dead_time(&idler_times, apparatus.idler.dead_time);

    Counts {
        heralds: heralds.len() as u64,
        coincidences: count_coincidences(&heralds, &idlers, apparatus.window),
    }
}

/// Seeded single run.
pub fn simulate_coincidences(
    apparatus: &Apparatus,
    projection_prob: f64,
    duration: f64,
    seed: u64,
) -> Result<Counts> {
    apparatus.validate()?;
    if !(0.0..=1.0).contains(&projection_prob) {
        return Err(Error::Domain(format!("projection probability {projection_prob} not in [0, 1]")));
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::Domain("duration must be positive".into()));
    }
    let mut rng = rng_for(seed, "photonics/coincidences", 0);
    Ok(count_run(apparatus, projection_prob, duration, &mut rng))
}

/// One point of a prepared/analyzed phase sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub ell: u32,
    pub delta_phi: f64,
    pub heralds: u64,
    pub coincidences: u64,
}

impl SweepPoint {
    pub fn ratio(&self) -> f64 {
        Counts {
            heralds: self.heralds,
            coincidences: self.coincidences,
        }
        .ratio()
    }
}

/// Prepares `φ₁ = 0`, analyzes at each `φ₂` in `phases`, counting for `duration` per point.
pub fn phase_sweep(
    apparatus: &Apparatus,
    ell: u32,
    phases: &[f64],
    duration: f64,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    apparatus.validate()?;
    let prepared = OAMQubit::new(ell, 0.0)?;
    phases
        .par_iter()
        .enumerate()
        .map(|(i, &phi2)| {
            let analyzed = OAMQubit::new(ell, phi2)?;
            let p = projection_probability(&prepared, &analyzed)?;
            let mut rng = rng_for(seed, &format!("photonics/sweep/l{ell}"), i as u64);
            let c = count_run(apparatus, p, duration, &mut rng);
            Ok(SweepPoint {
                ell,
                delta_phi: phi2,
                heralds: c.heralds,
                coincidences: c.coincidences,
            })
        })
        .collect()
}

/// Least-squares fit `y = A·cos²(Δ/2) + B` to sweep ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineFit {
    pub amplitude: f64,
    pub offset: f64,
    /// `A / (A + 2B)` of the fitted curve.
    pub visibility: f64,
    /// Largest `|y/(A + B) − cos²(Δ/2)|` over the data.
    pub max_abs_deviation: f64,
}

pub fn fit_cos2(points: &[SweepPoint]) -> Result<CosineFit> {
    if points.len() < 2 {
        return Err(Error::Domain("need at least two sweep points".into()));
    }
    let n = points.len() as f64;
    let (mut sc, mut scc, mut sy, mut scy) = (0.0, 0.0, 0.0, 0.0);
    for pt in points {
        let c = (pt.delta_phi / 2.0).cos().powi(2);
        let y = pt.ratio();
        sc += c;
        scc += c * c;
        sy += y;
        scy += c * y;
    }
    let det = n * scc - sc * sc;
    if det.abs() < 1e-12 {
        return Err(Error::Domain("sweep phases do not constrain the fit".into()));
    }
    let amplitude = (n * scy - sc * sy) / det;
    let offset = (scc * sy - sc * scy) / det;
    let peak = amplitude + offset;
    let max_abs_deviation = points
        .iter()
        .map(|pt| (pt.ratio() / peak - (pt.delta_phi / 2.0).cos().powi(2)).abs())
        .fold(0.0, f64::max);
    Ok(CosineFit {
        amplitude,
        offset,
        visibility: amplitude / (amplitude + 2.0 * offset),
        max_abs_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mode(p: u32, ell: i32) -> LGMode {
        LGMode::new(p, ell, 41e-6, 1064e-9).unwrap()
    }

    #[test]
    fn laguerre_closed_forms() {
        for &x in &[0.0, 0.3, 1.7, 5.0] {
            for &a in &[0.0, 1.0, 3.0] {
                assert!((laguerre(1, a, x) - (1.0 + a - x)).abs() < 1e-12);
                let l2 = 0.5 * (x * x - 2.0 * (a + 2.0) * x + (a + 1.0) * (a + 2.0));
                assert!((laguerre(2, a, x) - l2).abs() < 1e-12);
                let l3 = (-x.powi(3) + 3.0 * (a + 3.0) * x * x - 3.0 * (a + 2.0) * (a + 3.0) * x
                    + (a + 1.0) * (a + 2.0) * (a + 3.0))
                    / 6.0;
                assert!((laguerre(3, a, x) - l3).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn mode_validation() {
        assert!(LGMode::new(0, 1, 0.0, 1e-6).is_err());
        assert!(LGMode::new(0, 1, 1e-6, -1.0).is_err());
        assert!(mode(0, 0).rayleigh_range() > 0.0);
    }

    #[test]
    fn on_axis_zero_for_nonzero_charge() {
        for ell in [-3, -1, 1, 2] {
            assert_eq!(mode(1, ell).amplitude(0.0, 0.3, 0.01).norm(), 0.0);
        }
        assert!(mode(0, 0).amplitude(0.0, 0.0, 0.0).norm() > 0.0);
    }

    #[test]
    fn gouy_phase_values() {
        let m = mode(0, 0);
        assert_eq!(m.gouy_phase(0.0), 0.0);
        assert!((m.gouy_phase(m.rayleigh_range()) - PI / 4.0).abs() < 1e-15);
        let m2 = mode(0, 2);
        assert!((m2.gouy_phase(1e9 * m2.rayleigh_range()) - 1.5 * PI).abs() < 1e-8);
    }

    #[test]
    fn gaussian_norm() {
        assert!((norm_integral(&mode(0, 0), 0.0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gouy_cancels_in_opposite_charge_pair() {
        let m = mode(0, 2);
        let zr = m.rayleigh_range();
        let (rho, phi) = (30e-6, 0.7);
        let rel = |z: f64| {
            let a = m.amplitude(rho, phi, z);
            let b = m.with_charge(-2).amplitude(rho, phi, z);
            (b / a).arg()
        };
        let r0 = rel(0.0);
        for z in [0.3 * zr, zr, 5.0 * zr, -2.0 * zr] {
            assert!(crate::hash::circular_distance(rel(z), r0) < 1e-12);
        }
    }

    #[test]
    fn projection_examples() {
        let q = |phi| OAMQubit::new(2, phi).unwrap();
        assert!((projection_probability(&q(0.3), &q(0.3)).unwrap() - 1.0).abs() < 1e-15);
        assert!(projection_probability(&q(0.0), &q(PI)).unwrap() < 1e-30);
        assert!((projection_probability(&q(0.0), &q(PI / 2.0)).unwrap() - 0.5).abs() < 1e-15);
        let other = OAMQubit::new(3, 0.0).unwrap();
        assert!(projection_probability(&q(0.0), &other).is_err());
        assert!(OAMQubit::new(0, 0.0).is_err());
    }

    #[test]
    fn waists() {
        let (wp, wd) = optimal_waists(10e-3, 532e-9).unwrap();
        assert!((wp - 29e-6).abs() < 1e-6, "{wp}");
        assert!((wd - 41e-6).abs() < 1e-6, "{wd}");
        let (wp4, _) = optimal_waists(40e-3, 532e-9).unwrap();
        assert!((wp4 / wp - 2.0).abs() < 1e-12);
        assert!(optimal_waists(0.0, 532e-9).is_err());
    }

    #[test]
    fn superposition_images() {
        let t = mode(0, 1);
        let grid = Grid::new(33, 33, 3.0 * t.w0).unwrap();
        let a = superposition_intensity(&OAMQubit::new(1, 0.0).unwrap(), &t, &grid, 0.0);
        let b = superposition_intensity(&OAMQubit { ell: 1, phi: TAU }, &t, &grid, 0.0);
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
        // odd grid puts the centre cell on the axis
        assert!(a.get(16, 16) < 1e-20);
        assert!(Grid::new(0, 5, 1.0).is_err());
    }

    #[test]
    fn raster_binary_round_trip() {
        let t = mode(0, 1);
        let grid = Grid::new(4, 3, 2.0 * t.w0).unwrap();
        let r = mode_intensity(&t, &grid, 0.0);
        let mut buf = Vec::new();
        r.write_binary(&mut buf).unwrap();
        assert_eq!(Raster::read_binary(&buf).unwrap(), r);
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 3);
    }

    #[test]
    fn dead_time_is_non_paralyzable() {
        let t = [0.0, 0.5, 1.0, 1.2, 2.1];
        assert_eq!(apply_dead_time(&t, 1.0), vec![0.0, 1.0, 2.1]);
        assert_eq!(apply_dead_time(&t, 0.0), t.to_vec());
    }

    #[test]
    fn coincidence_window_matching() {
        let h = [1.0, 2.0, 3.0];
        let i = [1.05, 2.5, 2.96];
        assert_eq!(count_coincidences(&h, &i, 0.1), 2);
        assert_eq!(count_coincidences(&h, &i, 0.0), 0);
        assert_eq!(count_coincidences(&h, &h, 0.0), 3);
    }

    #[test]
    fn zero_projection_no_dark_gives_no_coincidences() {
        let mut app = Apparatus::default();
        app.herald.dark_rate = 0.0;
        app.idler.dark_rate = 0.0;
        let c = simulate_coincidences(&app, 0.0, 0.2, 4).unwrap();
        assert_eq!(c.coincidences, 0);
        assert!(c.heralds > 0);
    }

    #[test]
    fn same_seed_same_counts() {
        let app = Apparatus::default();
        let a = simulate_coincidences(&app, 0.7, 0.1, 9).unwrap();
        assert_eq!(a, simulate_coincidences(&app, 0.7, 0.1, 9).unwrap());
        assert_ne!(a, simulate_coincidences(&app, 0.7, 0.1, 10).unwrap());
    }

    #[test]
    fn accidentals_scale_with_window() {
        // no true pairs reach the analyzer: every coincidence is accidental
        let mut app = Apparatus::default();
        app.herald.dead_time = 0.0;
        app.idler.dead_time = 0.0;
        app.idler.dark_rate = 1e6;
        app.window = 1e-7;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let duration = 1.0;
        let c = count_run(&app, 0.0, duration, &mut rng);
        let expected = c.heralds as f64 * app.idler.dark_rate * app.window;
        assert!(
            (c.coincidences as f64 - expected).abs() < 4.0 * expected.sqrt(),
            "{} vs {expected}",
            c.coincidences
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        let app = Apparatus::ideal();
        assert!(simulate_coincidences(&app, 1.2, 1.0, 0).is_err());
        assert!(simulate_coincidences(&app, 0.5, 0.0, 0).is_err());
        assert!(DetectorModel::new(0.0, 0.0, 0.0).is_err());
    }
}
