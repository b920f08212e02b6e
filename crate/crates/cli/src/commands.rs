use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{Instant, SystemTime};

use anyhow::{bail, Context, Result};
use qhash::hash::{self, BoundsReport, HashParams};
use qhash::photonics::{self, Grid, LGMode, OAMQubit};
use qhash::protocol::{self, LossPolicy, ProtocolConfig, TABLE_ELLS};
use qhash::search::{self, Method, SearchConfig, SearchResult};
use qhash::seeds::sub_seed;
use qhash::tomography::{self, DensityMatrix2, TomoSettings};
use serde_json::json;

use crate::args::*;
use crate::manifest::{self, OutputSet};

pub struct RunContext {
    pub quiet: bool,
}

/// Runs `command`, writing data files and a manifest into `out`.
pub fn run(command: &Command, out: &Path, ctx: &RunContext) -> Result<()> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let mut outputs = OutputSet::new(out)?;
    let snapshot = match command {
        Command::Optimize(a) => optimize(a, &mut outputs, ctx)?,
        Command::Table(a) => table(a, &mut outputs, ctx)?,
        Command::Curve(a) => curve(a, &mut outputs)?,
        Command::Lgmap(a) => lgmap(a, &mut outputs)?,
        Command::Tomo(a) => tomo(a, &mut outputs)?,
        Command::Verify(a) => verify(a, &mut outputs)?,
        Command::Bounds(a) => bounds(a, &mut outputs)?,
        Command::Rerun(a) => return rerun(&a.manifest, out, ctx),
    };
    let path = outputs.finish(&snapshot, started, clock.elapsed())?;
    if !ctx.quiet {
        eprintln!("manifest: {}", path.display());
    }
    Ok(())
}

fn resolve_search_config(a: &OptimizeArgs) -> Result<SearchConfig> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<SearchConfig>(&text)
                .with_context(|| format!("parsing search config {}", path.display()))?
        }
        None => {
            let (Some(q), Some(s)) = (a.q, a.s) else {
                bail!("--q and --s are required unless --config is given");
            };
            SearchConfig::new(q, s, Method::Anneal, 0)
        }
    };
    if let Some(q) = a.q {
        cfg.q = q;
    }
    if let Some(s) = a.s {
        cfg.s = s;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(budget) = a.budget {
        cfg.budget = budget.into();
    }
    if let Some(v) = a.iters {
        cfg.anneal_iters = v;
    }
    if let Some(v) = a.restarts {
        cfg.anneal_restarts = v;
    }
    if let Some(v) = a.initial_temp {
        cfg.initial_temp = v;
    }
    if let Some(v) = a.cooling {
        cfg.cooling = v;
    }
    match a.method {
        Some(MethodArg::Exhaustive) => cfg.method = Method::Exhaustive,
        Some(MethodArg::Anneal) => cfg.method = Method::Anneal,
        Some(MethodArg::Auto) => {
            cfg.method = if cfg.q >= 2 && cfg.s > 0 && search::exhaustive_cost(cfg.q, cfg.s) <= cfg.budget {
                Method::Exhaustive
            } else {
                Method::Anneal
            }
        }
        // a config file keeps its own method
        None if a.config.is_none() => {
            cfg.method = if cfg.q >= 2
                && cfg.s > 0
                && (cfg.s as u64) < cfg.q
                && search::exhaustive_cost(cfg.q, cfg.s) <= cfg.budget
            {
                Method::Exhaustive
            } else {
                Method::Anneal
            }
        }
        None => {}
    }
    Ok(cfg)
}

fn run_search(cfg: &SearchConfig, quiet: bool) -> Result<SearchResult> {
    let clock = Instant::now();
    let unit = match cfg.method {
        Method::Exhaustive => "branches",
        Method::Anneal => "restarts",
    };
    let result = search::search_with_progress(cfg, |p| {
        if !quiet {
            let rate = p.evaluations as f64 / clock.elapsed().as_secs_f64().max(1e-9);
            eprintln!(
                "[optimize q={} s={}] {}/{} {unit}, {:.0} candidates/s, best {:.6}",
                cfg.q, cfg.s, p.completed, p.total, rate, p.best_fidelity
            );
        }
    })?;
    Ok(result)
}

pub fn search_file_name(q: u64, s: usize) -> String {
    format!("search_q{q}_s{s}.json")
}

fn optimize(a: &OptimizeArgs, outputs: &mut OutputSet, ctx: &RunContext) -> Result<Command> {
    let cfg = resolve_search_config(a)?;
    let result = run_search(&cfg, ctx.quiet)?;
    outputs.write_json(&search_file_name(cfg.q, cfg.s), &result)?;
    println!("{}", serde_json::to_string_pretty(&result)?);
    // record the fully resolved configuration so a replay does not depend on the config file
    Ok(Command::Optimize(OptimizeArgs {
        q: Some(cfg.q),
        s: Some(cfg.s),
        method: Some(match cfg.method {
            Method::Exhaustive => MethodArg::Exhaustive,
            Method::Anneal => MethodArg::Anneal,
        }),
        seed: Some(cfg.seed),
        budget: Some(u64::try_from(cfg.budget).unwrap_or(u64::MAX)),
        iters: Some(cfg.anneal_iters),
        restarts: Some(cfg.anneal_restarts),
        initial_temp: Some(cfg.initial_temp),
        cooling: Some(cfg.cooling),
        config: None,
    }))
}

fn table(a: &TableArgs, outputs: &mut OutputSet, ctx: &RunContext) -> Result<Command> {
    if a.s_min < 1 || a.s_min > a.s_max {
        bail!("invalid s range {}..={}", a.s_min, a.s_max);
    }
    let apparatus = a.apparatus.build()?;
    let mut results = Vec::new();
    for s in a.s_min..=a.s_max {
        let from_file = a.from.as_ref().map(|d| d.join(search_file_name(a.q, s)));
        let result = match from_file.filter(|p| p.exists()) {
            Some(path) => {
                let text = fs::read_to_string(&path)?;
                let r: SearchResult = serde_json::from_str(&text)
                    .with_context(|| format!("parsing {}", path.display()))?;
                if r.params.q() != a.q || r.params.s() != s {
                    bail!("{} holds q={} s={}", path.display(), r.params.q(), r.params.s());
                }
                Some(r)
            }
            None if a.no_search => None,
            None => Some(run_search(&SearchConfig::auto(a.q, s, a.seed), ctx.quiet)?),
        };
        results.push((s, result));
    }

    let placeholder = HashParams::new(a.q, vec![1])?;
    let mut template = ProtocolConfig::new(placeholder, 1, apparatus, a.seed);
    template.trials_per_point = a.trials_per_point;
    template.calibration_iterations = a.calibration_iterations;
    template.measurement_duration = a.duration;
    let rows = protocol::reproduce_table(&template, &results, &TABLE_ELLS, a.repetitions)?;

    let mut csv = Vec::new();
    protocol::write_table_csv(&rows, &mut csv)?;
    outputs.write("table.csv", &csv)?;
    let searches: Vec<&SearchResult> = results.iter().filter_map(|(_, r)| r.as_ref()).collect();
    outputs.write_json("table_searches.json", &searches)?;

    let mut text = String::new();
    writeln!(text, "{:>2} {:>5} {:>8} {:>8} | {:>9} {:>9} {:>9} | {:>5} {:>8}", "s", "x_max", "bound", "ref", "rate_l1", "rate_l2", "rate_l3", "ref_x", "ref_l2")?;
    for row in &rows {
        let rate = |i: usize| row.rates.get(i).map(|c| format!("{:.5}", c.rate)).unwrap_or_else(|| "-".into());
        let (px, pb, pl2) = row
            .reference
            .as_ref()
            .map(|r| (r.x_worst.to_string(), format!("{:.4}", r.bound), format!("{}", r.experimental[1])))
            .unwrap_or_default();
        writeln!(
            text,
            "{:>2} {:>5} {:>8} {:>8} | {:>9} {:>9} {:>9} | {:>5} {:>8}",
            row.s,
            row.x_max.map(|x| x.to_string()).unwrap_or_else(|| "-".into()),
            row.bound_theory.map(|b| format!("{b:.4}")).unwrap_or_else(|| "incomplete".into()),
            pb,
            rate(0),
            rate(1),
            rate(2),
            px,
            pl2
        )?;
    }
    print!("{text}");
    Ok(Command::Table(a.clone()))
}

fn curve(a: &CurveArgs, outputs: &mut OutputSet) -> Result<Command> {
    if a.points < 2 {
        bail!("--points must be at least 2");
    }
    let apparatus = a.apparatus.build()?;
    let duration = apparatus.duration_for_heralds(a.heralds);
    let phases: Vec<f64> = (0..a.points).map(|i| TAU * i as f64 / (a.points - 1) as f64).collect();
    let mut csv = String::from("ell,delta_phi,heralds,coincidences,ratio,theory\n");
    let mut fits = Vec::new();
    for &ell in &a.ell {
        let points = photonics::phase_sweep(&apparatus, ell, &phases, duration, a.seed)?;
        for p in &points {
            writeln!(
                csv,
                "{},{:.17e},{},{},{:.17e},{:.17e}",
                p.ell,
                p.delta_phi,
                p.heralds,
                p.coincidences,
                p.ratio(),
                (p.delta_phi / 2.0).cos().powi(2)
            )?;
        }
        let fit = photonics::fit_cos2(&points)?;
        println!(
            "l={ell}: visibility {:.4}, max |dev| {:.4}, amplitude {:.4}",
            fit.visibility, fit.max_abs_deviation, fit.amplitude
        );
        fits.push(json!({"ell": ell, "fit": fit}));
    }
    outputs.write("curve.csv", csv.as_bytes())?;
    outputs.write_json("curve_fit.json", &json!({"duration_per_point": duration, "fits": fits}))?;
    Ok(Command::Curve(a.clone()))
}

fn lgmap(a: &LgmapArgs, outputs: &mut OutputSet) -> Result<Command> {
    let mode = LGMode::new(a.p, a.ell, a.w0, a.lambda)?;
    let (intensity, phase) = if a.superposition {
        let qubit = OAMQubit::new(a.ell.unsigned_abs(), a.phi)?;
        let grid = match a.extent_waists {
            Some(e) => Grid::new(a.size, a.size, e * mode.radius(a.z))?,
            None => Grid {
                width: a.size,
                height: a.size,
                ..Grid::default_for(&mode, a.z)
            },
        };
        (
            photonics::superposition_intensity(&qubit, &mode, &grid, a.z),
            photonics::superposition_phase(&qubit, &mode, &grid, a.z),
        )
    } else {
        let grid = match a.extent_waists {
            Some(e) => Grid::new(a.size, a.size, e * mode.radius(a.z))?,
            None => Grid {
                width: a.size,
                height: a.size,
                ..Grid::default_for(&mode, a.z)
            },
        };
        (
            photonics::mode_intensity(&mode, &grid, a.z),
            photonics::mode_phase(&mode, &grid, a.z),
        )
    };
    if a.size == 0 {
        bail!("--size must be positive");
    }
    match a.format {
        RasterFormat::Csv => {
            for (name, r) in [("intensity", &intensity), ("phase", &phase)] {
                let mut buf = Vec::new();
                r.write_csv(&mut buf)?;
                outputs.write(&format!("{name}.csv"), &buf)?;
            }
            let e = intensity.grid.half_extent;
            outputs.write_json(
                "lgmap_header.json",
                &json!({
                    "width": intensity.grid.width,
                    "height": intensity.grid.height,
                    "extent": [-e, e, -e, e],
                    "units": {"axes": "m", "intensity": intensity.units, "phase": phase.units},
                    "mode": mode,
                    "superposition": a.superposition,
                    "phi": a.phi,
                    "z": a.z,
                }),
            )?;
        }
        RasterFormat::Bin => {
            for (name, r) in [("intensity", &intensity), ("phase", &phase)] {
                let mut buf = Vec::new();
                r.write_binary(&mut buf)?;
                outputs.write(&format!("{name}.bin"), &buf)?;
            }
        }
    }
    let (w, h) = (intensity.grid.width, intensity.grid.height);
    let peak = intensity.data.iter().copied().fold(0.0, f64::max);
    println!(
        "{w}x{h} map over ±{:.3e} m, peak intensity {peak:.6e} {}, centre {:.6e}",
        intensity.grid.half_extent,
        intensity.units,
        intensity.get(w / 2, h / 2)
    );
    Ok(Command::Lgmap(a.clone()))
}

fn tomo(a: &TomoArgs, outputs: &mut OutputSet) -> Result<Command> {
    let run_one = |phi_deg: f64, seed: u64| -> Result<(DensityMatrix2, Vec<u64>, tomography::TomoReport, TomoSettings)> {
        let qubit = OAMQubit::new(a.ell, phi_deg.to_radians())?;
        let theory = DensityMatrix2::from_qubit(&qubit);
        let settings = TomoSettings::six_state(a.shots, seed);
        let counts = tomography::simulate_tomo_counts(&theory, &settings);
        let report = tomography::analyze(&counts, &settings, a.resamples)?;
        Ok((theory, counts, report, settings))
    };
    let (theory, counts, report, settings) = run_one(a.phi_deg, a.seed)?;
    println!("theoretical (phi = {}°):\n{theory}", a.phi_deg);
    println!("reconstructed from {} shots/setting:\n{report}", a.shots);
    let labels: Vec<&str> = settings.projectors.iter().map(|p| p.label.as_str()).collect();
    let mut doc = json!({
        "ell": a.ell,
        "phi_deg": a.phi_deg,
        "shots_per_setting": a.shots,
        "projectors": labels,
        "counts": counts,
        "theoretical": theory,
        "reconstructed": report.rho,
        "uncertainty": report.rho_std,
        "phase_deg": report.phase_deg,
        "phase_std_deg": report.phase_std_deg,
        "max_entry_deviation": report.rho.max_entry_deviation(&theory),
    });
    if let Some(step) = a.step_deg {
        let (theory2, counts2, report2, _) = run_one(a.phi_deg - step, sub_seed(a.seed, "tomo/step", 0))?;
        let recovered = tomography::phase_difference_deg(report2.phase_deg, report.phase_deg);
        let err = (report.phase_std_deg.powi(2) + report2.phase_std_deg.powi(2)).sqrt();
        println!("shifted by {step}°:\n{report2}");
        println!("recovered step = ({recovered:.3} ± {err:.3})°");
        doc["step"] = json!({
            "step_deg": step,
            "theoretical": theory2,
            "counts": counts2,
            "reconstructed": report2.rho,
            "uncertainty": report2.rho_std,
            "phase_deg": report2.phase_deg,
            "phase_std_deg": report2.phase_std_deg,
            "recovered_step_deg": recovered,
            "recovered_step_std_deg": err,
        });
    }
    outputs.write_json("tomo.json", &doc)?;
    Ok(Command::Tomo(a.clone()))
}

fn verify(a: &VerifyArgs, outputs: &mut OutputSet) -> Result<Command> {
    let params = HashParams::new(a.q, a.b.clone())?;
    let mut cfg = ProtocolConfig::new(params.clone(), a.ell, a.apparatus.build()?, a.seed);
    cfg.loss_policy = match a.loss_policy {
        LossPolicyArg::Resend => LossPolicy::Resend,
        LossPolicyArg::Accept => LossPolicy::Accept,
    };
    let fidelity = hash::fidelity(&params, a.x1, a.x2)?;
    let probs = protocol::match_probabilities(&params, a.x1, a.x2)?;
    let outcome = protocol::verify(&cfg, a.x1, a.x2)?;
    let h1 = hash::hash(&params, a.x1)?;
    let h2 = hash::hash(&params, a.x2)?;
    println!("verify x1={} against x2={} (q={}, B={:?})", a.x1, a.x2, a.q, params.b());
    for (j, o) in outcome.per_qubit.iter().enumerate() {
        let dphi = (h2.phases[j] - h1.phases[j]).rem_euclid(TAU);
        println!(
            "  qubit {j}: b={:>4} dphi={dphi:.6} P(match)={:.6} -> {o:?}",
            params.b()[j],
            probs[j]
        );
    }
    println!("verdict: {:?} (resends: {}, fidelity {fidelity:.6})", outcome.verdict, outcome.resend_count);
    let mut doc = json!({
        "params": params,
        "x1": a.x1,
        "x2": a.x2,
        "fidelity": fidelity,
        "match_probabilities": probs,
        "outcome": outcome,
    });
    if cfg.loss_policy == LossPolicy::Accept {
        doc["note"] = json!(protocol::ACCEPT_POLICY_NOTE);
    }
    if a.trials > 1 {
        let est = protocol::acceptance_frequency(&cfg, a.x1, a.x2, a.trials)?;
        println!(
            "acceptance over {} trials: {:.6} ± {:.6}",
            est.trials, est.frequency, est.stderr
        );
        doc["acceptance"] = serde_json::to_value(est)?;
    }
    outputs.write_json("verify.json", &doc)?;
    Ok(Command::Verify(a.clone()))
}

fn bounds(a: &BoundsArgs, outputs: &mut OutputSet) -> Result<Command> {
    let params = HashParams::new(a.q, a.b.clone())?;
    let report = BoundsReport::for_params(&params);
    println!("{}", serde_json::to_string_pretty(&report)?);
    outputs.write_json("bounds.json", &json!({"params": params, "bounds": report}))?;
    Ok(Command::Bounds(a.clone()))
}

fn rerun(manifest_path: &Path, out: &Path, ctx: &RunContext) -> Result<()> {
    let m = manifest::load(manifest_path)?;
    if matches!(m.config, Command::Rerun(_)) {
        bail!("manifest records a rerun; nothing to replay");
    }
    run(&m.config, out, ctx)?;
    let mut mismatched = Vec::new();
    for f in &m.outputs {
        let bytes = fs::read(out.join(&f.path)).with_context(|| format!("reading {}", f.path))?;
        let digest: String = <sha2::Sha256 as sha2::Digest>::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        if digest != f.sha256 {
            mismatched.push(f.path.clone());
        }
    }
    if !mismatched.is_empty() {
        bail!("replay differs from manifest in: {}", mismatched.join(", "));
    }
    println!("reproduced {} file(s) byte-identically", m.outputs.len());
    Ok(())
}
