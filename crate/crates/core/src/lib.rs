//! Phase-encoded quantum hashing on orbital-angular-momentum photonic qubits.
//!
//! * [`hash`]: hash states, fidelities, collision and one-way bounds.
//! * [`search`]: exhaustive and annealing search for good parameter sets.
//! * [`photonics`]: Laguerre–Gaussian modes, OAM qubits, SPDC source and
//!   detector models, coincidence counting.
//! * [`protocol`]: Monte-Carlo verification experiment and error-rate estimation.
//! * [`tomography`]: single-qubit state tomography and phase extraction.
//! * [`reference`]: bundled reference table of published bounds and measurements.

pub mod defaults;
pub mod error;
pub mod hash;
pub mod photonics;
pub mod protocol;
pub mod reference;
pub mod search;
pub mod seeds;
pub mod tomography;

pub use error::{Error, Result};
pub use hash::{BoundsReport, HashParams, QuantumHash, WorstCase};
pub use search::{Method, SearchConfig, SearchResult};
