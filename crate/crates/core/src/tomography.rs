//! Single-qubit tomography in the `{|ℓ⟩, |−ℓ⟩}` basis.
//!
//! Matrices use the layout in which `(|ℓ⟩ + e^{iφ}|−ℓ⟩)/√2` has top-right
//! element `½e^{+iφ}`; equivalently each pure state `v` is stored as `v* vᵀ`.
//! Projectors use the same layout, so `Tr(ρΠ)` is unaffected.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::photonics::OAMQubit;
use crate::seeds::rng_for;

/// 2×2 density matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix2 {
    pub m: [[Complex64; 2]; 2],
}

impl DensityMatrix2 {
    /// Pure state with amplitudes `v` on `|ℓ⟩`, `|−ℓ⟩` (normalized here).
    pub fn pure(v: [Complex64; 2]) -> Self {
        let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
        let v = [v[0] / n, v[1] / n];
        let mut m = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = v[i].conj() * v[j];
            }
        }
        Self { m }
    }

    pub fn from_qubit(q: &OAMQubit) -> Self {
        Self::pure(q.amplitudes())
    }

    /// `(I + r·σ)/2` in this layout: `m01 = (x − iy)/2`.
    pub fn from_bloch(r: [f64; 3]) -> Self {
        let [x, y, z] = r;
        Self {
            m: [
                [Complex64::new((1.0 + z) / 2.0, 0.0), Complex64::new(x / 2.0, -y / 2.0)],
                [Complex64::new(x / 2.0, y / 2.0), Complex64::new((1.0 - z) / 2.0, 0.0)],
            ],
        }
    }

    pub fn bloch(&self) -> [f64; 3] {
        let off = self.m[0][1];
        [2.0 * off.re, -2.0 * off.im, (self.m[0][0] - self.m[1][1]).re]
    }

    pub fn trace(&self) -> Complex64 {
        self.m[0][0] + self.m[1][1]
    }

    /// `Tr(ρσ)` for another matrix `σ` in the same layout.
    pub fn overlap(&self, other: &DensityMatrix2) -> f64 {
        let mut t = Complex64::new(0.0, 0.0);
        for i in 0..2 {
            for j in 0..2 {
                t += self.m[i][j] * other.m[j][i];
            }
        }
        t.re
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.m[0][0].im.abs() <= tol
            && self.m[1][1].im.abs() <= tol
            && (self.m[0][1] - self.m[1][0].conj()).norm() <= tol
    }

    /// Eigenvalues in ascending order (Hermitian part).
    pub fn eigenvalues(&self) -> [f64; 2] {
        let a = self.m[0][0].re;
        let d = self.m[1][1].re;
        let b = self.m[0][1];
        let disc = ((a - d).powi(2) + 4.0 * b.norm_sqr()).sqrt();
        [(a + d - disc) / 2.0, (a + d + disc) / 2.0]
    }

    /// `½‖ρ − σ‖₁`, half the Bloch-vector distance for unit-trace matrices.
    pub fn trace_distance(&self, other: &DensityMatrix2) -> f64 {
        let a = self.bloch();
        let b = other.bloch();
        let d: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
        d.sqrt() / 2.0
    }

    pub fn max_entry_deviation(&self, other: &DensityMatrix2) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let d = self.m[i][j] - other.m[i][j];
                worst = worst.max(d.re.abs()).max(d.im.abs());
            }
        }
        worst
    }

    /// Nearest unit-trace PSD matrix: clip negative eigenvalues, renormalize.
    pub fn project_physical(&self) -> Self {
        let tr = self.trace().re;
        let [x, y, z] = self.bloch();
        let r = [x / tr, y / tr, z / tr];
        let len = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        // eigenvalues (1 ± |r|)/2; clipping the negative one leaves the pure state along r
        if len > 1.0 {
            Self::from_bloch([r[0] / len, r[1] / len, r[2] / len])
        } else {
            Self::from_bloch(r)
        }
    }
}

impl Serialize for DensityMatrix2 {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = self
            .m
            .iter()
            .map(|row| row.iter().map(|c| [c.re, c.im]).collect())
            .collect();
        rows.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix2 {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let rows = <[[[f64; 2]; 2]; 2]>::deserialize(de)?;
        let mut m = [[Complex64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = Complex64::new(rows[i][j][0], rows[i][j][1]);
            }
        }
        Ok(Self { m })
    }
}

/// A named rank-one projector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projector {
    pub label: String,
    pub state: DensityMatrix2,
}

impl Projector {
    pub fn new(label: impl Into<String>, v: [Complex64; 2]) -> Self {
        Self {
            label: label.into(),
            state: DensityMatrix2::pure(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomoSettings {
    pub projectors: Vec<Projector>,
    pub shots_per_setting: u64,
    pub seed: u64,
}

impl TomoSettings {
    /// `|ℓ⟩`, `|−ℓ⟩` and equal superpositions at φ = 0, π/2, π, 3π/2.
    pub fn six_state(shots_per_setting: u64, seed: u64) -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let mut projectors = vec![
            Projector::new("|l>", [one, zero]),
            Projector::new("|-l>", [zero, one]),
        ];
        for (k, name) in ["0", "pi/2", "pi", "3pi/2"].iter().enumerate() {
            let phi = k as f64 * PI / 2.0;
            projectors.push(Projector::new(
                format!("phi={name}"),
                [
                    Complex64::new(FRAC_1_SQRT_2, 0.0),
                    Complex64::from_polar(FRAC_1_SQRT_2, phi),
                ],
            ));
        }
        Self {
            projectors,
            shots_per_setting,
            seed,
        }
    }

    /// Normal matrix `Σ n nᵀ` of projector Bloch vectors.
    fn normal_matrix(&self) -> [[f64; 3]; 3] {
        let mut a = [[0.0; 3]; 3];
        for p in &self.projectors {
            let n = p.state.bloch();
            for i in 0..3 {
                for j in 0..3 {
                    a[i][j] += n[i] * n[j];
                }
            }
        }
        a
    }

    pub fn is_complete(&self) -> bool {
        det3(&self.normal_matrix()).abs() > 1e-9
    }
}

fn det3(a: &[[f64; 3]; 3]) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

fn solve3(a: &[[f64; 3]; 3], b: [f64; 3]) -> [f64; 3] {
    let d = det3(a);
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let mut m = *a;
        for i in 0..3 {
            m[i][k] = b[i];
        }
        *o = det3(&m) / d;
    }
    out
}

/// Outcome probabilities `Tr(ρΠ_k)`, clamped to `[0, 1]`.
pub fn probabilities(state: &DensityMatrix2, settings: &TomoSettings) -> Vec<f64> {
    settings
        .projectors
        .iter()
        .map(|p| state.overlap(&p.state).clamp(0.0, 1.0))
        .collect()
}

fn sample_counts<R: Rng + ?Sized>(probs: &[f64], shots: u64, rng: &mut R) -> Vec<u64> {
    probs
        .iter()
        .map(|&p| Binomial::new(shots, p).expect("p in [0, 1]").sample(rng))
        .collect()
}

/// Binomial counts per setting, seeded by `settings.seed`.
pub fn simulate_tomo_counts(state: &DensityMatrix2, settings: &TomoSettings) -> Vec<u64> {
    let mut rng = rng_for(settings.seed, "tomography/counts", 0);
    sample_counts(&probabilities(state, settings), settings.shots_per_setting, &mut rng)
}

/// Least-squares linear inversion from outcome frequencies, then physical projection.
pub fn reconstruct_from_frequencies(freqs: &[f64], settings: &TomoSettings) -> Result<DensityMatrix2> {
    if freqs.len() != settings.projectors.len() || !settings.is_complete() {
        return Err(Error::IncompleteSettings);
    }
    let a = settings.normal_matrix();
    let mut b = [0.0; 3];
    for (p, &f) in settings.projectors.iter().zip(freqs) {
        let n = p.state.bloch();
        for i in 0..3 {
            b[i] += n[i] * (2.0 * f - 1.0);
        }
    }
    Ok(DensityMatrix2::from_bloch(solve3(&a, b)).project_physical())
}

pub fn reconstruct(counts: &[u64], settings: &TomoSettings) -> Result<DensityMatrix2> {
    if settings.shots_per_setting == 0 {
        return Err(Error::Domain("shots_per_setting must be positive".into()));
    }
    let n = settings.shots_per_setting as f64;
    let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    reconstruct_from_frequencies(&freqs, settings)
}

/// Relative phase `arg ρ₀₁` in degrees, in `[0, 360)`.
pub fn extract_phase(rho: &DensityMatrix2) -> Result<f64> {
    let off = rho.m[0][1];
    if off.norm() <= 1e-6 {
        return Err(Error::NoCoherence(off.norm()));
    }
    Ok(off.arg().to_degrees().rem_euclid(360.0))
}

/// `b − a` in degrees, wrapped to `(−180, 180]`.
pub fn phase_difference_deg(a: f64, b: f64) -> f64 {
    let d = (b - a).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Reconstruction with parametric-bootstrap uncertainties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomoReport {
    pub rho: DensityMatrix2,
    /// Standard deviations of the real and imaginary part of each entry.
    pub rho_std: DensityMatrix2,
    pub phase_deg: f64,
    pub phase_std_deg: f64,
    pub resamples: usize,
}

/// Reconstructs from `counts`, then re-samples each setting as
/// `Binomial(shots, c_k/shots)` `resamples` times to estimate uncertainties.
pub fn analyze(counts: &[u64], settings: &TomoSettings, resamples: usize) -> Result<TomoReport> {
    let rho = reconstruct(counts, settings)?;
    let phase = extract_phase(&rho)?;
    let n = settings.shots_per_setting as f64;
    let freqs: Vec<f64> = counts.iter().map(|&c| (c as f64 / n).clamp(0.0, 1.0)).collect();
    let mut rng = rng_for(settings.seed, "tomography/bootstrap", 0);

    let mut sum_sq = [[[0.0f64; 2]; 2]; 2];
    let mut phase_sq = 0.0;
    for _ in 0..resamples {
        let c = sample_counts(&freqs, settings.shots_per_setting, &mut rng);
        let r = reconstruct(&c, settings)?;
        for i in 0..2 {
            for j in 0..2 {
                let d = r.m[i][j] - rho.m[i][j];
                sum_sq[i][j][0] += d.re * d.re;
                sum_sq[i][j][1] += d.im * d.im;
            }
        }
        if let Ok(p) = extract_phase(&r) {
            phase_sq += phase_difference_deg(phase, p).powi(2);
        }
    }
    let denom = resamples.max(2) as f64 - 1.0;
    let mut std = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            std[i][j] = Complex64::new(
                (sum_sq[i][j][0] / denom).sqrt(),
                (sum_sq[i][j][1] / denom).sqrt(),
            );
        }
    }
    Ok(TomoReport {
        rho,
        rho_std: DensityMatrix2 { m: std },
        phase_deg: phase,
        phase_std_deg: (phase_sq / denom).sqrt(),
        resamples,
    })
}

fn fmt_entry(v: Complex64, e: Option<Complex64>) -> String {
    let sign = if v.im < 0.0 { '-' } else { '+' };
    match e {
        Some(e) => format!(
            "{:.3} ± {:.3} {sign} ({:.3} ± {:.3})i",
            v.re,
            e.re,
            v.im.abs(),
            e.im
        ),
        None => format!("{:.3} {sign} {:.3}i", v.re, v.im.abs()),
    }
}

impl fmt::Display for DensityMatrix2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.m {
            writeln!(f, "{}   {}", fmt_entry(row[0], None), fmt_entry(row[1], None))?;
        }
        Ok(())
    }
}

impl fmt::Display for TomoReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..2 {
            let cells: Vec<String> = (0..2)
                .map(|j| {
                    let v = self.rho.m[i][j];
                    let e = self.rho_std.m[i][j];
                    if i == j {
                        format!("{:.3} ± {:.3}", v.re, e.re)
                    } else {
                        fmt_entry(v, Some(e))
                    }
                })
                .collect();
            writeln!(f, "{}   {}", cells[0], cells[1])?;
        }
        write!(f, "phase = ({:.2} ± {:.2})°", self.phase_deg, self.phase_std_deg)
    }
}
