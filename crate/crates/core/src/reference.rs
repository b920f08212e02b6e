//! Published worst-case inputs, theoretical bounds and measured error rates
//! for `q = 512`, shipped for side-by-side display only.
//!
//! The measured columns depend on uncharacterized detector behaviour and are
//! not expected to match simulation.

use serde::{Deserialize, Serialize};

pub const REFERENCE_CSV: &str = include_str!("../data/table1_reference.csv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub s: usize,
    pub x_worst: u64,
    pub bound: f64,
    /// Measured error rates for ℓ = 1, 2, 3.
    pub experimental: [f64; 3],
}

fn parse_row(line: &str) -> Option<ReferenceRow> {
    let f: Vec<&str> = line.split(',').map(str::trim).collect();
    if f.len() != 6 {
        return None;
    }
    Some(ReferenceRow {
        s: f[0].parse().ok()?,
        x_worst: f[1].parse().ok()?,
        bound: f[2].parse().ok()?,
        experimental: [f[3].parse().ok()?, f[4].parse().ok()?, f[5].parse().ok()?],
    })
}

/// Rows for `s = 2..=8`.
pub fn rows() -> Vec<ReferenceRow> {
    REFERENCE_CSV
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| parse_row(l).expect("bundled reference table is well formed"))
        .collect()
}

pub fn row(s: usize) -> Option<ReferenceRow> {
    rows().into_iter().find(|r| r.s == s)
}
