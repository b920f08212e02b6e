//! Search for parameter sets `B` that minimize the worst-case fidelity
//! `max_{x≠0} 2^{-s} ∏_j (1 + cos(2π b_j x/q))`.
//!
//! Small instances are enumerated exhaustively; larger ones use seeded
//! simulated annealing with independent restarts. Both strategies score
//! candidates through [`FactorTable::worst_case`], the same routine behind
//! [`crate::hash::worst_case_x`], so reported values match it bit-for-bit.

use std::sync::Mutex;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::defaults;
use crate::error::{Error, Result};
use crate::hash::{worst_case_x, FactorTable, HashParams, WorstCase};
use crate::seeds::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exhaustive,
    Anneal,
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "exhaustive" => Ok(Method::Exhaustive),
            "anneal" => Ok(Method::Anneal),
            other => Err(format!("unknown method '{other}' (expected exhaustive|anneal)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub q: u64,
    pub s: usize,
    pub method: Method,
    pub seed: u64,
    pub anneal_iters: usize,
    pub anneal_restarts: usize,
    pub initial_temp: f64,
    pub cooling: f64,
    /// Maximum `C(q−1, s)·(q−1)` qubit-factor evaluations allowed for exhaustive search.
    pub budget: u128,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            q: 512,
            s: 4,
            method: Method::Anneal,
            seed: 0,
            anneal_iters: defaults::ANNEAL_ITERS,
            anneal_restarts: defaults::ANNEAL_RESTARTS,
            initial_temp: defaults::ANNEAL_INITIAL_TEMP,
            cooling: defaults::ANNEAL_COOLING,
            budget: defaults::SEARCH_BUDGET,
        }
    }
}

impl SearchConfig {
    pub fn new(q: u64, s: usize, method: Method, seed: u64) -> Self {
        Self {
            q,
            s,
            method,
            seed,
            ..Self::default()
        }
    }

    /// Exhaustive when affordable, anneal otherwise.
    pub fn auto(q: u64, s: usize, seed: u64) -> Self {
        let mut c = Self::new(q, s, Method::Exhaustive, seed);
        if exhaustive_cost(q, s) > c.budget {
            c.method = Method::Anneal;
        }
        c
    }

    fn validate(&self) -> Result<()> {
        if self.q < 2 {
            return Err(Error::Domain(format!("q = {} must be >= 2", self.q)));
        }
        if self.s == 0 || self.s as u64 >= self.q {
            return Err(Error::Domain(format!(
                "s = {} must satisfy 1 <= s < q = {}",
                self.s, self.q
            )));
        }
        if self.method == Method::Anneal {
            if self.anneal_restarts == 0 {
                return Err(Error::Domain("anneal_restarts must be >= 1".into()));
            }
            if !(self.cooling > 0.0 && self.cooling < 1.0) {
                return Err(Error::Domain(format!("cooling = {} not in (0, 1)", self.cooling)));
            }
            if !(self.initial_temp > 0.0) {
                return Err(Error::Domain("initial_temp must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub params: HashParams,
    pub worst_fidelity: f64,
    pub x_max: u64,
    /// Number of candidate sets scored.
    pub evaluations: u64,
    pub method: Method,
    pub seed: u64,
}

/// Snapshot passed to progress callbacks.
#[derive(Debug, Clone, Copy)]
pub struct Progress {
    pub completed: usize,
    pub total: usize,
    pub evaluations: u64,
    pub best_fidelity: f64,
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Estimated qubit-factor evaluations for exhaustive search, `C(q−1, s)·(q−1)`.
pub fn exhaustive_cost(q: u64, s: usize) -> u128 {
    binomial(q - 1, s as u64).saturating_mul((q - 1) as u128)
}

/// Worst-case fidelity and `x_max` of a parameter set.
pub fn evaluate(params: &HashParams) -> WorstCase {
    worst_case_x(params)
}

pub fn search(config: &SearchConfig) -> Result<SearchResult> {
    search_with_progress(config, |_| {})
}

/// As [`search`], reporting progress after each exhaustive branch or anneal restart.
pub fn search_with_progress<F>(config: &SearchConfig, progress: F) -> Result<SearchResult>
where
    F: Fn(&Progress) + Sync,
{
    config.validate()?;
    let (b, evaluations) = match config.method {
        Method::Exhaustive => {
            let cost = exhaustive_cost(config.q, config.s);
            if cost > config.budget {
                return Err(Error::OverBudget {
                    estimated: cost,
                    budget: config.budget,
                });
            }
            exhaustive(config.q, config.s, &progress)
        }
        Method::Anneal => anneal(config, &progress),
    };
    let params = HashParams::new(config.q, b)?;
    let wc = evaluate(&params);
    Ok(SearchResult {
        params,
        worst_fidelity: wc.fidelity,
        x_max: wc.x_max,
        evaluations,
        method: config.method,
        seed: config.seed,
    })
}

/// `(fidelity, B)` ordering: lower fidelity first, then lexicographically smaller `B`.
fn better(a: &(f64, Vec<u64>), b: &(f64, Vec<u64>)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

struct ProgressTracker<'a, F> {
    callback: &'a F,
    total: usize,
    state: Mutex<(usize, u64, f64)>,
}

impl<'a, F: Fn(&Progress) + Sync> ProgressTracker<'a, F> {
    fn new(callback: &'a F, total: usize) -> Self {
        Self {
            callback,
            total,
            state: Mutex::new((0, 0, f64::INFINITY)),
        }
    }

    fn record(&self, evaluations: u64, best: f64) {
        let mut st = self.state.lock().expect("progress lock");
        st.0 += 1;
        st.1 += evaluations;
        st.2 = st.2.min(best);
        (self.callback)(&Progress {
            completed: st.0,
            total: self.total,
            evaluations: st.1,
            best_fidelity: st.2,
        });
    }
}

/// Enumerates all sorted `s`-subsets of `[1, q−1]`, one parallel branch per smallest element.
fn exhaustive<F: Fn(&Progress) + Sync>(q: u64, s: usize, progress: &F) -> (Vec<u64>, u64) {
    let table = FactorTable::new(q);
    let half = (q / 2) as usize;
    // column x−1 of row b holds qubit_factor(q, b·x mod q)
    let rows: Vec<Vec<f64>> = (0..q)
        .map(|b| (1..=q / 2).map(|x| table.fidelity_at(&[b], x)).collect())
        .collect();
    let firsts: Vec<u64> = (1..=(q - s as u64)).collect();
    let tracker = ProgressTracker::new(progress, firsts.len());

    let branch_results: Vec<(f64, Vec<u64>, u64)> = firsts
        .par_iter()
        .map(|&b1| {
            let mut prefix = vec![vec![1.0f64; half]; s + 1];
            let mut chosen = vec![b1];
            let mut best = (f64::INFINITY, Vec::new());
            let mut count = 0u64;
            for (x, v) in prefix[1].iter_mut().enumerate() {
                *v = 1.0 * rows[b1 as usize][x];
            }
            enumerate_rest(q, s, &rows, &mut prefix, &mut chosen, &mut best, &mut count);
            tracker.record(count, best.0);
            (best.0, best.1, count)
        })
        .collect();

    let mut best = (f64::INFINITY, Vec::new());
    let mut total = 0;
    for (f, b, c) in branch_results {
        total += c;
        let cand = (f, b);
        if better(&cand, &best) {
            best = cand;
        }
    }
    (best.1, total)
}

fn enumerate_rest(
    q: u64,
    s: usize,
    rows: &[Vec<f64>],
    prefix: &mut [Vec<f64>],
    chosen: &mut Vec<u64>,
    best: &mut (f64, Vec<u64>),
    count: &mut u64,
) {
    let depth = chosen.len();
    if depth == s {
        *count += 1;
        // ties keep the first maximum, i.e. the smallest x
        let worst = prefix[depth]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        // enumeration is lexicographic, so strict improvement keeps the smallest B on ties
        if worst < best.0 {
            *best = (worst, chosen.clone());
        }
        return;
    }
    let last = *chosen.last().expect("non-empty");
    let remaining = (s - depth) as u64;
    for b in (last + 1)..=(q - remaining) {
        let (head, tail) = prefix.split_at_mut(depth + 1);
        let src = &head[depth];
        let row = &rows[b as usize];
        for ((dst, &a), &f) in tail[0].iter_mut().zip(src).zip(row) {
            *dst = a * f;
        }
        chosen.push(b);
        enumerate_rest(q, s, rows, prefix, chosen, best, count);
        chosen.pop();
    }
}

/// Outcome of one annealing restart.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartOutcome {
    pub initial_fidelity: f64,
    pub best_fidelity: f64,
    pub best: Vec<u64>,
    pub evaluations: u64,
}

/// One annealing run from a random start, seeded by `(seed, restart)`.
///
/// Fidelity is unchanged by `b → q − b` and by multiplying every `b_j` by a unit
/// mod `q`, so the walk stays in `[1, q/2]`. For prime-power `q` a set without
/// a unit has fidelity 1 at `x = q/p`, so `b = 1` is pinned as well. Moves
/// replace one unpinned `b_j` with a uniformly drawn unused value; acceptance
/// is Metropolis on the change in log worst-case fidelity with geometric cooling.
pub fn anneal_restart(config: &SearchConfig, table: &FactorTable, restart: usize) -> RestartOutcome {
    let q = config.q;
    let s = config.s;
    let mut rng = rng_for(config.seed, "param_search/anneal", restart as u64);
    let hi = if s as u64 <= q / 2 { q / 2 } else { q - 1 };

    let pinned = usize::from(is_prime_power(q));
    let lo = 1 + pinned as u64;
    let mut current: Vec<u64> = index::sample(&mut rng, (hi + 1 - lo) as usize, s - pinned)
        .into_iter()
        .map(|i| i as u64 + lo)
        .collect();
    if pinned == 1 {
        current.push(1);
    }
    current.sort_unstable();
    let mut current_f = table.worst_case(&current).fidelity;
    let initial_fidelity = current_f;
    let mut best = (current_f, current.clone());
    let mut evaluations = 1u64;
    let mut temp = config.initial_temp;
    let can_move = s > pinned && (s as u64) < hi;
    let energy = |f: f64| f.max(f64::MIN_POSITIVE).ln();

    let mut candidate = current.clone();
    for _ in 0..config.anneal_iters {
        if can_move {
            // a pinned 1 sorts to index 0
            let j = rng.random_range(pinned..s);
            let replacement = loop {
                let v = rng.random_range(lo..=hi);
                if current.binary_search(&v).is_err() {
                    break v;
                }
            };
            candidate.clone_from(&current);
            candidate[j] = replacement;
            candidate.sort_unstable();
            let f = table.worst_case(&candidate).fidelity;
            evaluations += 1;
            let delta = energy(f) - energy(current_f);
            if delta <= 0.0 || rng.random::<f64>() < (-delta / temp).exp() {
                std::mem::swap(&mut current, &mut candidate);
                current_f = f;
                if better(&(f, current.clone()), &best) {
                    best = (f, current.clone());
                }
            }
        }
        temp *= config.cooling;
    }

    RestartOutcome {
        initial_fidelity,
        best_fidelity: best.0,
        best: best.1,
        evaluations,
    }
}

fn is_prime_power(q: u64) -> bool {
    let p = (2..).take_while(|d| d * d <= q).find(|d| q.is_multiple_of(*d)).unwrap_or(q);
    let mut r = q;
    while r.is_multiple_of(p) {
        r /= p;
    }
    r == 1
}

fn anneal<F: Fn(&Progress) + Sync>(config: &SearchConfig, progress: &F) -> (Vec<u64>, u64) {
    let table = FactorTable::new(config.q);
    let tracker = ProgressTracker::new(progress, config.anneal_restarts);
    let outcomes: Vec<RestartOutcome> = (0..config.anneal_restarts)
        .into_par_iter()
        .map(|r| {
            let out = anneal_restart(config, &table, r);
            tracker.record(out.evaluations, out.best_fidelity);
            out
        })
        .collect();

    // ordered reduction by restart index
    let mut best = (f64::INFINITY, Vec::new());
    let mut evaluations = 0;
    for out in outcomes {
        evaluations += out.evaluations;
        let cand = (out.best_fidelity, out.best);
        if better(&cand, &best) {
            best = cand;
        }
    }
    (best.1, evaluations)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(7, 2), 21);
        assert_eq!(binomial(511, 2), 130_305);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(exhaustive_cost(8, 2), 21 * 7);
    }

    #[test]
    fn trivial_instance() {
        for method in [Method::Exhaustive, Method::Anneal] {
            let r = search(&SearchConfig::new(2, 1, method, 3)).unwrap();
            assert_eq!(r.params.b(), &[1]);
            assert!(r.worst_fidelity.abs() < 1e-16);
            assert_eq!(r.x_max, 1);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(
            search(&SearchConfig::new(8, 8, Method::Exhaustive, 0)),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            search(&SearchConfig::new(512, 3, Method::Exhaustive, 0)),
            Err(Error::OverBudget { .. })
        ));
        let mut c = SearchConfig::new(64, 2, Method::Anneal, 0);
        c.cooling = 1.0;
        assert!(search(&c).is_err());
    }

    #[test]
    fn auto_picks_method_by_budget() {
        assert_eq!(SearchConfig::auto(512, 2, 0).method, Method::Exhaustive);
        assert_eq!(SearchConfig::auto(512, 3, 0).method, Method::Anneal);
    }

    #[test]
    fn exhaustive_count_is_all_subsets() {
        let r = search(&SearchConfig::new(16, 3, Method::Exhaustive, 0)).unwrap();
        assert_eq!(r.evaluations as u128, binomial(15, 3));
    }

    #[test]
    fn result_matches_worst_case_exactly() {
        let r = search(&SearchConfig::new(64, 3, Method::Exhaustive, 0)).unwrap();
        let wc = worst_case_x(&r.params);
        assert_eq!(r.worst_fidelity.to_bits(), wc.fidelity.to_bits());
        assert_eq!(r.x_max, wc.x_max);
    }

    #[test]
    fn anneal_is_monotone_per_restart() {
        let mut c = SearchConfig::new(128, 4, Method::Anneal, 11);
        c.anneal_iters = 500;
        let table = FactorTable::new(128);
        for r in 0..8 {
            let out = anneal_restart(&c, &table, r);
            assert!(out.best_fidelity <= out.initial_fidelity);
            assert_eq!(out.evaluations, 501);
        }
    }

    #[test]
    fn prime_powers() {
        let pp: Vec<u64> = (2..=32).filter(|&q| is_prime_power(q)).collect();
        assert_eq!(pp, [2, 3, 4, 5, 7, 8, 9, 11, 13, 16, 17, 19, 23, 25, 27, 29, 31, 32]);
    }

    #[test]
    fn method_parse() {
        assert_eq!("anneal".parse::<Method>().unwrap(), Method::Anneal);
        assert!("genetic".parse::<Method>().is_err());
    }
}
