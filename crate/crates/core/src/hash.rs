//! Phase-encoded quantum hash: state construction, fidelities and bounds.
//!
//! An input `x ∈ [0, q)` is mapped to `s` single-photon qubits, the `j`-th
//! carrying relative phase `2π·b_j·x/q`. All fidelities are evaluated from
//! the integer residue `b_j·Δx mod q`, folded onto `[0, q/2]`, so shift
//! invariance and symmetry hold bit-for-bit and a precomputed
//! [`FactorTable`] reproduces direct evaluation exactly.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// One hash function instance: modulus `q` and sorted distinct parameters `B`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HashParams {
    q: u64,
    b: Vec<u64>,
}

impl HashParams {
    /// Validates and canonicalizes (sorts) the parameter set.
    pub fn new(q: u64, mut b: Vec<u64>) -> Result<Self> {
        if q < 2 {
            return Err(Error::InvalidParams(format!("q must be >= 2, got {q}")));
        }
        if b.is_empty() {
            return Err(Error::InvalidParams("B must contain at least one value".into()));
        }
        if let Some(&bad) = b.iter().find(|&&v| v == 0 || v >= q) {
            return Err(Error::InvalidParams(format!(
                "b = {bad} outside [1, {}]",
                q - 1
            )));
        }
        b.sort_unstable();
        if let Some(w) = b.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidParams(format!("duplicate b = {}", w[0])));
        }
        Ok(Self { q, b })
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    /// Number of qubits `s`.
    pub fn s(&self) -> usize {
        self.b.len()
    }

    /// The sorted parameter set `B`.
    pub fn b(&self) -> &[u64] {
        &self.b
    }

    fn check_input(&self, x: u64) -> Result<()> {
        if x >= self.q {
            Err(Error::InputOutOfRange { x, q: self.q })
        } else {
            Ok(())
        }
    }
}

#[derive(Serialize, Deserialize)]
struct HashParamsRepr {
    q: u64,
    s: usize,
    #[serde(rename = "B")]
    b: Vec<u64>,
}

impl Serialize for HashParams {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        HashParamsRepr {
            q: self.q,
            s: self.s(),
            b: self.b.clone(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for HashParams {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = HashParamsRepr::deserialize(de)?;
        if raw.s != raw.b.len() {
            return Err(D::Error::custom(format!(
                "s = {} but B has {} entries",
                raw.s,
                raw.b.len()
            )));
        }
        HashParams::new(raw.q, raw.b).map_err(D::Error::custom)
    }
}

/// A hash value: one relative phase per qubit, each in `[0, 2π)`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct QuantumHash {
    pub phases: Vec<f64>,
}

impl Serialize for QuantumHash {
    /// Phases are written with 17 significant digits.
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        use serde_json::value::RawValue;
        let raw: Vec<Box<RawValue>> = self
            .phases
            .iter()
            .map(|p| RawValue::from_string(format!("{p:.16e}")))
            .collect::<std::result::Result<_, _>>()
            .map_err(serde::ser::Error::custom)?;
        let mut st = ser.serialize_struct("QuantumHash", 1)?;
        st.serialize_field("phases", &raw)?;
        st.end()
    }
}

impl QuantumHash {
    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    /// Amplitudes `(1, e^{iφ})/√2` of qubit `j` in the `{|ℓ⟩, |−ℓ⟩}` basis.
    pub fn qubit_amplitudes(&self, j: usize) -> [Complex64; 2] {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        [
            Complex64::new(a, 0.0),
            Complex64::from_polar(a, self.phases[j]),
        ]
    }

    /// Full `2^s` tensor-product amplitude vector, qubit 0 most significant.
    ///
    /// Panics if `s > 24`.
    pub fn state_vector(&self) -> Vec<Complex64> {
        assert!(self.len() <= 24, "state vector too large for s = {}", self.len());
        let mut v = vec![Complex64::new(1.0, 0.0)];
        for j in 0..self.len() {
            let amp = self.qubit_amplitudes(j);
            v = v
                .iter()
                .flat_map(|&c| [c * amp[0], c * amp[1]])
                .collect();
        }
        v
    }

    /// `⟨self|other⟩` as a product of per-qubit inner products.
    pub fn inner_product(&self, other: &QuantumHash) -> Complex64 {
        assert_eq!(self.len(), other.len());
        (0..self.len())
            .map(|j| {
                let a = self.qubit_amplitudes(j);
                let b = other.qubit_amplitudes(j);
                a[0].conj() * b[0] + a[1].conj() * b[1]
            })
            .product()
    }

    /// Circular comparison of phases with tolerance `tol` (radians).
    pub fn approx_eq(&self, other: &QuantumHash, tol: f64) -> bool {
        self.len() == other.len()
            && self
                .phases
                .iter()
                .zip(&other.phases)
                .all(|(a, b)| circular_distance(*a, *b) <= tol)
    }
}

/// Distance between two angles on the circle, in `[0, π]`.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

#[inline]
fn residue(b: u64, x: u64, q: u64) -> u64 {
    ((b as u128 * x as u128) % q as u128) as u64
}

/// Single-qubit fidelity factor `(1 + cos(2π r/q))/2` for residue `r`.
///
/// `r` is folded to `min(r, q − r)` first, so `r` and `q − r` give identical bits.
#[inline]
pub fn qubit_factor(q: u64, r: u64) -> f64 {
    let r = r % q;
    let folded = r.min(q - r);
    0.5 * (1.0 + (TAU * folded as f64 / q as f64).cos())
}

/// Worst case over nonzero inputs: `x_max` and its fidelity against `ψ(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub x_max: u64,
    pub fidelity: f64,
}

/// Precomputed [`qubit_factor`] values for every residue of one modulus.
#[derive(Debug, Clone)]
pub struct FactorTable {
    q: u64,
    factors: Vec<f64>,
}

impl FactorTable {
    pub fn new(q: u64) -> Self {
        assert!(q >= 2);
        Self {
            q,
            factors: (0..q).map(|r| qubit_factor(q, r)).collect(),
        }
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    /// Fidelity between `ψ(0)` and `ψ(x)` for parameter list `b` (in the given order).
    #[inline]
    pub fn fidelity_at(&self, b: &[u64], x: u64) -> f64 {
        b.iter()
            .map(|&bj| self.factors[residue(bj, x, self.q) as usize])
            .product()
    }

    /// Scans `x ∈ [1, ⌊q/2⌋]`; mirrors `q − x` have identical fidelity.
    /// Ties resolve to the smallest `x`.
    pub fn worst_case(&self, b: &[u64]) -> WorstCase {
        let mut best = WorstCase {
            x_max: 1,
            fidelity: f64::NEG_INFINITY,
        };
        for x in 1..=self.q / 2 {
            let f = self.fidelity_at(b, x);
            if f > best.fidelity {
                best = WorstCase { x_max: x, fidelity: f };
            }
        }
        best
    }
}

/// Hash value of `x`: phases `2π·b_j·x/q mod 2π`.
pub fn hash(params: &HashParams, x: u64) -> Result<QuantumHash> {
    params.check_input(x)?;
    let q = params.q as f64;
    Ok(QuantumHash {
        phases: params
            .b
            .iter()
            .map(|&bj| TAU * residue(bj, x, params.q) as f64 / q)
            .collect(),
    })
}

/// `|⟨ψ(x1)|ψ(x2)⟩|² = 2^{-s} ∏_j (1 + cos(2π b_j (x2 − x1)/q))`.
pub fn fidelity(params: &HashParams, x1: u64, x2: u64) -> Result<f64> {
    params.check_input(x1)?;
    params.check_input(x2)?;
    let q = params.q;
    let dx = ((x2 as u128 + (q - x1) as u128) % q as u128) as u64;
    Ok(params
        .b
        .iter()
        .map(|&bj| qubit_factor(q, residue(bj, dx, q)))
        .product())
}

/// `|⟨ψ(x1)|ψ(x2)⟩|`, the quantity bounded by ε in collision resistance.
pub fn overlap_magnitude(params: &HashParams, x1: u64, x2: u64) -> Result<f64> {
    fidelity(params, x1, x2).map(f64::sqrt)
}

/// The nonzero input whose hash is closest to `ψ(0)`.
pub fn worst_case_x(params: &HashParams) -> WorstCase {
    FactorTable::new(params.q).worst_case(&params.b)
}

/// Upper bound `min(1, 2^s/|X|)` on the probability of decoding `x` from its hash.
pub fn one_way_delta(s: u32, alphabet_size: u64) -> f64 {
    assert!(s >= 1 && alphabet_size >= 1);
    (2f64.powi(s as i32) / alphabet_size as f64).min(1.0)
}

/// Error probabilities of the SWAP test `(1 + ε²)/2` and REVERSE test `ε²`.
pub fn test_error_bounds(epsilon: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Domain(format!("epsilon = {epsilon} not in [0, 1]")));
    }
    let e2 = epsilon * epsilon;
    Ok(((1.0 + e2) / 2.0, e2))
}

/// Collision and one-way figures of merit for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub epsilon: f64,
    pub worst_fidelity: f64,
    pub delta: f64,
    pub swap_error: f64,
    pub reverse_error: f64,
    pub x_max: u64,
    /// How the error bound is read; kept with every report.
    pub assumption: String,
}

pub const BOUND_ASSUMPTION: &str =
    "error bound reported as worst-case fidelity |<psi(0)|psi(x_max)>|^2 (REVERSE-test error)";

impl BoundsReport {
    pub fn for_params(params: &HashParams) -> Self {
        let wc = worst_case_x(params);
        let epsilon = wc.fidelity.sqrt();
        let (swap_error, reverse_error) =
            test_error_bounds(epsilon.clamp(0.0, 1.0)).expect("clamped");
        Self {
            epsilon,
            worst_fidelity: wc.fidelity,
            delta: one_way_delta(params.s() as u32, params.q),
            swap_error,
            reverse_error,
            x_max: wc.x_max,
            assumption: BOUND_ASSUMPTION.to_string(),
        }
    }
}

/// Single-qubit amplitude encoding of a `k`-bit word `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeEncoding {
    /// Real amplitudes on `|0⟩`, `|1⟩`.
    pub amplitudes: [f64; 2],
    pub delta: f64,
    pub epsilon: f64,
}

/// `w ↦ cos(πw/2^k)|0⟩ + sin(πw/2^k)|1⟩`: good one-way property, poor collision resistance.
pub fn example1_encode(w: u64, k: u32) -> Result<AmplitudeEncoding> {
    if k == 0 || k >= 64 {
        return Err(Error::Domain(format!("k = {k} must be in [1, 63]")));
    }
    let n = 1u64 << k;
    if w >= n {
        return Err(Error::InputOutOfRange { x: w, q: n });
    }
    let theta = PI * w as f64 / n as f64;
    Ok(AmplitudeEncoding {
        amplitudes: [theta.cos(), theta.sin()],
        delta: 2.0 / n as f64,
        epsilon: (PI / n as f64).cos(),
    })
}

/// Basis encoding `w ↦ |w⟩` on `k` qubits: `(δ, ε) = (1, 0)`.
pub fn example2_properties(k: u32) -> (f64, f64) {
    assert!(k >= 1);
    (1.0, 0.0)
}
