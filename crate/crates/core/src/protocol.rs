//! Monte-Carlo model of the hash verification experiment.
//!
//! Two views of the same experiment are provided:
//!
//! * [`verify_trial`] simulates one run of the ideal protocol: every qubit of
//!   `ψ(x1)` is projected onto `{ψ_j(x2), ψ'_j(x2)}` and the hashes are declared
//!   equal only if every qubit lands on `ψ_j(x2)`.
//! * [`Protocol::calibrate`] and [`Protocol::estimate_error_rate`] reproduce the
//!   rate-based estimate used in the laboratory: coincidence rates for each
//!   qubit compared against `ψ(0)` are divided by a "yes" borderline taken as
//!   the smallest of several batch-averaged equal-state rates.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::defaults;
use crate::error::{Error, Result};
use crate::hash::{qubit_factor, HashParams};
use crate::photonics::{count_run, Apparatus};
use crate::reference::{self, ReferenceRow};
use crate::search::SearchResult;
use crate::seeds::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossPolicy {
    /// Ask for the lost qubit again, up to [`defaults::RESEND_LIMIT`] times.
    Resend,
    /// Count a lost qubit as a match, inflating the acceptance rate.
    Accept,
}

impl std::str::FromStr for LossPolicy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "resend" => Ok(Self::Resend),
            "accept" => Ok(Self::Accept),
            other => Err(format!("unknown loss policy '{other}' (expected resend|accept)")),
        }
    }
}

pub const ACCEPT_POLICY_NOTE: &str = "loss_policy=accept: lost qubits are counted as matches";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub params: HashParams,
    /// Charge magnitude of the `{|ℓ⟩, |−ℓ⟩}` basis.
    pub ell: u32,
    pub trials_per_point: usize,
    pub calibration_iterations: usize,
    pub loss_policy: LossPolicy,
    pub apparatus: Apparatus,
    /// Simulated time per coincidence measurement (s).
    pub measurement_duration: f64,
    pub bootstrap_resamples: usize,
    pub seed: u64,
}

impl ProtocolConfig {
    pub fn new(params: HashParams, ell: u32, apparatus: Apparatus, seed: u64) -> Self {
        Self {
            params,
            ell,
            trials_per_point: defaults::TRIALS_PER_POINT,
            calibration_iterations: defaults::CALIBRATION_ITERATIONS,
            loss_policy: LossPolicy::Resend,
            apparatus,
            measurement_duration: defaults::MEASUREMENT_DURATION,
            bootstrap_resamples: defaults::BOOTSTRAP_RESAMPLES,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials_per_point == 0 || self.calibration_iterations == 0 {
            return Err(Error::Domain(
                "trials_per_point and calibration_iterations must be >= 1".into(),
            ));
        }
        if self.ell == 0 {
            return Err(Error::Domain("basis charge |ℓ| must be positive".into()));
        }
        if !(self.measurement_duration > 0.0 && self.measurement_duration.is_finite()) {
            return Err(Error::Domain("measurement duration must be positive".into()));
        }
        self.apparatus.validate()
    }

    /// Probability that a heralded hash photon produces a click at the analyzer.
    pub fn detection_probability(&self) -> f64 {
        self.apparatus.source.heralding_efficiency * self.apparatus.idler.efficiency
    }

    fn seed_label(&self, what: &str) -> String {
        format!("protocol/{what}/l{}", self.ell)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Equal,
    NotEqual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QubitOutcome {
    Match,
    Mismatch,
    Lost,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationOutcome {
    pub verdict: Verdict,
    pub per_qubit: Vec<QubitOutcome>,
    pub resend_count: u32,
}

/// One projective measurement of a qubit whose match probability is `p_match`.
///
/// A photon is detected with probability `eta`; otherwise either detector may
/// fire on a dark count. Two dark clicks count as a mismatch.
fn measure_qubit<R: Rng + ?Sized>(p_match: f64, eta: f64, p_dark: f64, rng: &mut R) -> QubitOutcome {
    if rng.random::<f64>() < eta {
        return if rng.random::<f64>() < p_match {
            QubitOutcome::Match
        } else {
            QubitOutcome::Mismatch
        };
    }
    if p_dark > 0.0 {
        let on_match = rng.random::<f64>() < p_dark;
        let on_mismatch = rng.random::<f64>() < p_dark;
        match (on_match, on_mismatch) {
            (true, false) => return QubitOutcome::Match,
            (_, true) => return QubitOutcome::Mismatch,
            _ => {}
        }
    }
    QubitOutcome::Lost
}

fn check_inputs(params: &HashParams, xs: &[u64]) -> Result<()> {
    for &x in xs {
        if x >= params.q() {
            return Err(Error::InputOutOfRange { x, q: params.q() });
        }
    }
    Ok(())
}

/// Per-qubit probability of the "equal" outcome, `cos²(Δφ_j/2)`.
pub fn match_probabilities(params: &HashParams, x1: u64, x2: u64) -> Result<Vec<f64>> {
    check_inputs(params, &[x1, x2])?;
    let q = params.q();
    let dx = ((x2 as u128 + (q - x1) as u128) % q as u128) as u64;
    Ok(params
        .b()
        .iter()
        .map(|&b| qubit_factor(q, ((b as u128 * dx as u128) % q as u128) as u64))
        .collect())
}

/// Simulates verification trial `trial` of `ψ(x1)` against the expected `x2`.
pub fn verify_trial(config: &ProtocolConfig, x1: u64, x2: u64, trial: u64) -> Result<VerificationOutcome> {
    let probs = match_probabilities(&config.params, x1, x2)?;
    let mut rng = rng_for(config.seed, &config.seed_label("verify"), trial);
    let eta = config.detection_probability();
    let p_dark = config.apparatus.idler.dark_probability(config.apparatus.window);

    let mut per_qubit = Vec::with_capacity(probs.len());
    let mut resend_count = 0u32;
    for (j, &p) in probs.iter().enumerate() {
        let mut outcome = measure_qubit(p, eta, p_dark, &mut rng);
        if config.loss_policy == LossPolicy::Resend {
            let mut retries = 0;
            while outcome == QubitOutcome::Lost {
                if retries == defaults::RESEND_LIMIT {
                    return Err(Error::ResendLimit { qubit: j, retries });
                }
                retries += 1;
                outcome = measure_qubit(p, eta, p_dark, &mut rng);
            }
            resend_count += retries;
        }
        per_qubit.push(outcome);
    }
    let all_match = per_qubit.iter().all(|o| *o != QubitOutcome::Mismatch);
    Ok(VerificationOutcome {
        verdict: if all_match { Verdict::Equal } else { Verdict::NotEqual },
        per_qubit,
        resend_count,
    })
}

/// Single verification run (trial 0).
pub fn verify(config: &ProtocolConfig, x1: u64, x2: u64) -> Result<VerificationOutcome> {
    verify_trial(config, x1, x2, 0)
}

/// Fraction of `trials` runs ending in [`Verdict::Equal`], with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceEstimate {
    pub trials: u64,
    pub accepted: u64,
    pub frequency: f64,
    pub stderr: f64,
}

pub fn acceptance_frequency(config: &ProtocolConfig, x1: u64, x2: u64, trials: u64) -> Result<AcceptanceEstimate> {
    config.validate()?;
    let outcomes: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|t| verify_trial(config, x1, x2, t).map(|o| o.verdict == Verdict::Equal))
        .collect::<Result<_>>()?;
    let accepted = outcomes.iter().filter(|&&a| a).count() as u64;
    let n = trials.max(1) as f64;
    let f = accepted as f64 / n;
    Ok(AcceptanceEstimate {
        trials,
        accepted,
        frequency: f,
        stderr: (f * (1.0 - f) / n).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// Borderline coincidence rate (1/s): the smallest batch mean.
    pub threshold: f64,
    pub iteration_means: Vec<f64>,
    /// Raw per-measurement rates, one inner list per batch.
    pub measurements: Vec<Vec<f64>>,
}

fn min_of_means(batches: &[Vec<f64>]) -> f64 {
    batches
        .iter()
        .map(|b| b.iter().sum::<f64>() / b.len() as f64)
        .fold(f64::INFINITY, f64::min)
}

/// Coincidence-rate estimate of the worst-case error probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRateEstimate {
    /// `∏_j mean_rate_j / threshold`, clamped to `[0, 1]`.
    pub rate: f64,
    /// Bootstrap standard error over measurements and calibration batches.
    pub stderr: f64,
    /// Unclamped per-qubit ratios.
    pub per_qubit: Vec<f64>,
    pub repetitions: usize,
}

/// Calibrated instance of the rate-based protocol.
#[derive(Debug, Clone)]
pub struct Protocol {
    config: ProtocolConfig,
    calibration: Option<CalibrationResult>,
}

impl Protocol {
    pub fn new(config: ProtocolConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            calibration: None,
        })
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn calibration(&self) -> Option<&CalibrationResult> {
        self.calibration.as_ref()
    }

    /// Coincidence rate of measurement `index` in stream `label` at projection probability `p`.
    fn measure_rate(&self, label: &str, index: u64, p: f64) -> (f64, u64) {
        let mut rng = rng_for(self.config.seed, label, index);
        let c = count_run(&self.config.apparatus, p, self.config.measurement_duration, &mut rng);
        (c.coincidences as f64 / self.config.measurement_duration, c.heralds)
    }

    /// Runs `calibration_iterations` batches of `trials_per_point` equal-state
    /// measurements and keeps the smallest batch mean as the borderline.
    pub fn calibrate(&mut self) -> Result<&CalibrationResult> {
        let cfg = &self.config;
        let label = cfg.seed_label("calibrate");
        let per_batch = cfg.trials_per_point;
        let runs: Vec<(f64, u64)> = (0..cfg.calibration_iterations * per_batch)
            .into_par_iter()
            .map(|i| self.measure_rate(&label, i as u64, 1.0))
            .collect();
        let mut measurements = Vec::with_capacity(cfg.calibration_iterations);
        for (batch, chunk) in runs.chunks(per_batch).enumerate() {
            if chunk.iter().all(|&(_, h)| h == 0) {
                return Err(Error::NoHeralds { batch });
            }
            measurements.push(chunk.iter().map(|&(r, _)| r).collect::<Vec<_>>());
        }
        let iteration_means: Vec<f64> = measurements
            .iter()
            .map(|b| b.iter().sum::<f64>() / b.len() as f64)
            .collect();
        let threshold = iteration_means.iter().copied().fold(f64::INFINITY, f64::min);
        self.calibration = Some(CalibrationResult {
            threshold,
            iteration_means,
            measurements,
        });
        Ok(self.calibration.as_ref().expect("just set"))
    }

    /// Compares each qubit of `ψ(x)` with `ψ(0)` over `repetitions`
    /// measurements and divides the mean rates by the calibrated borderline.
    pub fn estimate_error_rate(&self, x: u64, repetitions: usize) -> Result<ErrorRateEstimate> {
        let cal = self.calibration.as_ref().ok_or(Error::MissingCalibration)?;
        if !(cal.threshold > 0.0 && cal.threshold.is_finite()) {
            return Err(Error::MissingCalibration);
        }
        if x == 0 {
            return Err(Error::Domain("x must be nonzero".into()));
        }
        if repetitions == 0 {
            return Err(Error::Domain("repetitions must be >= 1".into()));
        }
        let probs = match_probabilities(&self.config.params, 0, x)?;
        let label = self.config.seed_label(&format!("rate/x{x}"));
        let s = probs.len();
        let rates: Vec<Vec<f64>> = probs
            .iter()
            .enumerate()
            .map(|(j, &p)| {
                (0..repetitions)
                    .into_par_iter()
                    .map(|r| self.measure_rate(&label, (j * repetitions + r) as u64, p).0)
                    .collect()
            })
            .collect();

        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let per_qubit: Vec<f64> = rates.iter().map(|r| mean(r) / cal.threshold).collect();
        let rate = per_qubit.iter().product::<f64>().clamp(0.0, 1.0);

        let mut rng = rng_for(self.config.seed, &format!("{label}/bootstrap"), 0);
        let resamples = self.config.bootstrap_resamples.max(2);
        let mut boot = Vec::with_capacity(resamples);
        let resample = |v: &[f64], rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            (0..v.len()).map(|_| v[rng.random_range(0..v.len())]).collect()
        };
        for _ in 0..resamples {
            let batches: Vec<Vec<f64>> = cal.measurements.iter().map(|b| resample(b, &mut rng)).collect();
            let threshold = min_of_means(&batches);
            let mut prod = 1.0;
            for r in &rates {
                prod *= mean(&resample(r, &mut rng)) / threshold;
            }
            boot.push(prod.clamp(0.0, 1.0));
        }
        let bm = mean(&boot);
        let var = boot.iter().map(|v| (v - bm).powi(2)).sum::<f64>() / (boot.len() - 1) as f64;
        debug_assert_eq!(per_qubit.len(), s);
        Ok(ErrorRateEstimate {
            rate,
            stderr: var.sqrt(),
            per_qubit,
            repetitions,
        })
    }
}

/// Monte-Carlo estimate for one basis charge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCell {
    pub ell: u32,
    pub rate: f64,
    pub stderr: f64,
    pub threshold: f64,
    /// "rejects" when the worst-case rate falls below the borderline, else "confuses".
    pub verdict: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub s: usize,
    pub complete: bool,
    pub params: Option<HashParams>,
    pub x_max: Option<u64>,
    pub bound_theory: Option<f64>,
    pub rates: Vec<RateCell>,
    pub reference: Option<ReferenceRow>,
}

pub const TABLE_ELLS: [u32; 3] = [1, 2, 3];

/// One row per entry of `results`: theoretical bound from the parameter set,
/// Monte-Carlo rate for each `ℓ` in `ells`, and the bundled published row.
///
/// `template` supplies everything but the parameters and `ℓ`.
pub fn reproduce_table(
    template: &ProtocolConfig,
    results: &[(usize, Option<SearchResult>)],
    ells: &[u32],
    repetitions: usize,
) -> Result<Vec<TableRow>> {
    let refs = reference::rows();
    let mut rows = Vec::with_capacity(results.len());
    for (s, result) in results {
        let reference = refs.iter().find(|r| r.s == *s).cloned();
        let Some(result) = result else {
            rows.push(TableRow {
                s: *s,
                complete: false,
                params: None,
                x_max: None,
                bound_theory: None,
                rates: Vec::new(),
                reference,
            });
            continue;
        };
        let mut rates = Vec::with_capacity(ells.len());
        for &ell in ells {
            let mut cfg = template.clone();
            cfg.params = result.params.clone();
            cfg.ell = ell;
            cfg.seed = crate::seeds::sub_seed(template.seed, "protocol/table", *s as u64);
            let mut protocol = Protocol::new(cfg)?;
            let threshold = protocol.calibrate()?.threshold;
            let est = protocol.estimate_error_rate(result.x_max, repetitions)?;
            rates.push(RateCell {
                ell,
                rate: est.rate,
                stderr: est.stderr,
                threshold,
                verdict: if est.rate < 1.0 { "rejects" } else { "confuses" }.to_string(),
            });
        }
        rows.push(TableRow {
            s: *s,
            complete: true,
            params: Some(result.params.clone()),
            x_max: Some(result.x_max),
            bound_theory: Some(result.worst_fidelity),
            rates,
            reference,
        });
    }
    Ok(rows)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// CSV with our columns followed by the published ones.
pub fn write_table_csv<W: std::io::Write>(rows: &[TableRow], mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "s,status,B,x_max,bound_theory,rate_l1,rate_l2,rate_l3,stderr_l1,stderr_l2,stderr_l3,\
         verdict_l1,verdict_l2,verdict_l3,ref_x,ref_bound,ref_l1,ref_l2,ref_l3"
    )?;
    for row in rows {
        let cell = |ell: u32| row.rates.iter().find(|c| c.ell == ell);
        let mut fields = vec![
            row.s.to_string(),
            if row.complete { "ok" } else { "incomplete" }.to_string(),
            row.params
                .as_ref()
                .map(|p| p.b().iter().map(u64::to_string).collect::<Vec<_>>().join(" "))
                .unwrap_or_default(),
            opt(row.x_max),
            opt(row.bound_theory.map(|v| format!("{v:.6}"))),
        ];
        for ell in TABLE_ELLS {
            fields.push(opt(cell(ell).map(|c| format!("{:.6}", c.rate))));
        }
        for ell in TABLE_ELLS {
            fields.push(opt(cell(ell).map(|c| format!("{:.6}", c.stderr))));
        }
        for ell in TABLE_ELLS {
            fields.push(opt(cell(ell).map(|c| c.verdict.clone())));
        }
        match &row.reference {
            Some(r) => {
                fields.push(r.x_worst.to_string());
                fields.push(r.bound.to_string());
                fields.extend(r.experimental.iter().map(|v| v.to_string()));
            }
            None => fields.extend(std::iter::repeat_n(String::new(), 5)),
        }
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photonics::DetectorModel;

    fn ideal(q: u64, b: &[u64]) -> ProtocolConfig {
        let mut app = Apparatus::ideal();
        app.source.heralding_efficiency = 1.0;
        ProtocolConfig::new(HashParams::new(q, b.to_vec()).unwrap(), 2, app, 5)
    }

    #[test]
    fn equal_inputs_always_accepted() {
        let cfg = ideal(512, &[3, 70, 200]);
        for t in 0..200 {
            let o = verify_trial(&cfg, 17, 17, t).unwrap();
            assert_eq!(o.verdict, Verdict::Equal);
            assert!(o.per_qubit.iter().all(|q| *q == QubitOutcome::Match));
        }
    }

    #[test]
    fn orthogonal_inputs_always_rejected() {
        let cfg = ideal(2, &[1]);
        for t in 0..200 {
            assert_eq!(verify_trial(&cfg, 0, 1, t).unwrap().verdict, Verdict::NotEqual);
        }
    }

    #[test]
    fn resend_counts_losses() {
        let mut cfg = ideal(8, &[1, 3]);
        cfg.apparatus.source.heralding_efficiency = 0.3;
        let o = verify_trial(&cfg, 2, 2, 1).unwrap();
        assert!(o.per_qubit.iter().all(|q| *q != QubitOutcome::Lost));
        let total: u32 = (0..100).map(|t| verify_trial(&cfg, 2, 2, t).unwrap().resend_count).sum();
        // geometric with success 0.3: mean 7/3 resends per qubit, two qubits
        assert!(total > 300 && total < 650, "{total}");
    }

    #[test]
    fn accept_policy_keeps_lost_qubits() {
        let mut cfg = ideal(2, &[1]);
        cfg.apparatus.source.heralding_efficiency = 0.5;
        cfg.loss_policy = LossPolicy::Accept;
        let est = acceptance_frequency(&cfg, 0, 1, 4000).unwrap();
        // orthogonal states: accepted only when the photon is lost
        assert!((est.frequency - 0.5).abs() < 4.0 * est.stderr);
    }

    #[test]
    fn resend_limit_is_enforced() {
        let mut cfg = ideal(8, &[1]);
        cfg.apparatus.source.heralding_efficiency = 1e-9;
        assert!(matches!(
            verify_trial(&cfg, 0, 0, 0),
            Err(Error::ResendLimit { qubit: 0, retries: 1000 })
        ));
    }

    #[test]
    fn rejects_out_of_range_inputs() {
        assert!(verify(&ideal(8, &[1]), 8, 0).is_err());
    }

    #[test]
    fn estimate_requires_calibration() {
        let p = Protocol::new(ideal(8, &[1])).unwrap();
        assert_eq!(p.estimate_error_rate(1, 5), Err(Error::MissingCalibration));
    }

    #[test]
    fn calibration_threshold_is_min_mean() {
        let mut cfg = ideal(8, &[1]);
        cfg.measurement_duration = 0.01;
        cfg.trials_per_point = 10;
        cfg.calibration_iterations = 4;
        let mut p = Protocol::new(cfg).unwrap();
        let cal = p.calibrate().unwrap().clone();
        assert_eq!(cal.iteration_means.len(), 4);
        assert_eq!(
            cal.threshold,
            cal.iteration_means.iter().copied().fold(f64::INFINITY, f64::min)
        );
        let mut again = p.clone();
        assert_eq!(again.calibrate().unwrap(), &cal);
    }

    #[test]
    fn calibration_without_heralds_fails() {
        let mut cfg = ideal(8, &[1]);
        cfg.apparatus.source.pair_rate = 0.0;
        cfg.trials_per_point = 3;
        cfg.calibration_iterations = 2;
        cfg.measurement_duration = 0.001;
        let mut p = Protocol::new(cfg).unwrap();
        assert_eq!(p.calibrate().unwrap_err(), Error::NoHeralds { batch: 0 });
    }

    #[test]
    fn dark_counts_can_fake_a_match() {
        let mut cfg = ideal(2, &[1]);
        cfg.apparatus.source.heralding_efficiency = 1e-6;
        cfg.apparatus.idler = DetectorModel::new(1.0, 1e8, 0.0).unwrap();
        cfg.apparatus.window = 1e-8;
        cfg.loss_policy = LossPolicy::Accept;
        let est = acceptance_frequency(&cfg, 0, 1, 2000).unwrap();
        // p_dark = 1 - e^{-1}; equal verdict needs exactly the match detector to fire or neither
        let pd = 1.0 - (-1.0f64).exp();
        let expected = 1.0 - pd;
        assert!((est.frequency - expected).abs() < 4.0 * est.stderr.max(0.01));
    }

    #[test]
    fn csv_marks_incomplete_rows() {
        let rows = reproduce_table(&ideal(512, &[1, 200]), &[(3, None)], &TABLE_ELLS, 2).unwrap();
        let mut buf = Vec::new();
        write_table_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let line = text.lines().nth(1).unwrap();
        assert!(line.starts_with("3,incomplete,"), "{line}");
        assert!(line.ends_with(",163,0.8286,0.797747,0.837321,1"), "{line}");
    }
}
