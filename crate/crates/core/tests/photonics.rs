use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use qhash::defaults;
use qhash::photonics::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const W0: f64 = 41e-6;
const LAMBDA: f64 = 1064e-9;

fn binom(n: f64, k: u32) -> f64 {
    (0..k).map(|i| (n - i as f64) / (i + 1) as f64).product()
}

/// `L_n^α(x)` from its explicit power series.
fn laguerre_series(n: u32, alpha: u32, x: f64) -> f64 {
    (0..=n)
        .map(|k| {
            let fact: f64 = (1..=k).map(f64::from).product();
            (-1f64).powi(k as i32) * binom((n + alpha) as f64, n - k) * x.powi(k as i32) / fact
        })
        .sum()
}

/// Waist-plane LG field written in Cartesian form.
fn lg_waist(p: u32, ell: i32, x: f64, y: f64) -> Complex64 {
    let l = ell.unsigned_abs();
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    let c = (2.0 * fact(p) / (PI * fact(p + l))).sqrt() / W0;
    let r2 = (x * x + y * y) / (W0 * W0);
    let sign = if ell < 0 { -1.0 } else { 1.0 };
    let vortex = Complex64::new(x, sign * y).powu(l) * (2f64.sqrt() / W0).powi(l as i32);
    vortex * c * laguerre_series(p, l, 2.0 * r2) * (-r2).exp()
}

#[test]
fn laguerre_recurrence_matches_series() {
    for n in 0..8 {
        for alpha in 0..5 {
            for &x in &[0.0, 0.3, 1.7, 4.0, 9.5] {
                let a = laguerre(n, alpha as f64, x);
                let b = laguerre_series(n, alpha, x);
                assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "n={n} a={alpha} x={x}");
            }
        }
    }
}

#[test]
fn waist_field_matches_cartesian_formula() {
    for p in 0..=3 {
        for ell in -3..=3 {
            let m = LGMode::new(p, ell, W0, LAMBDA).unwrap();
            for &(x, y) in &[(1e-5, 0.0), (-2.3e-5, 1.1e-5), (3e-6, -4.5e-5), (6e-5, 6e-5)] {
                let a = m.amplitude_xy(x, y, 0.0);
                let b = lg_waist(p, ell, x, y);
                assert!((a - b).norm() <= 1e-9 * b.norm().max(1.0), "p={p} l={ell}");
            }
        }
    }
}

#[test]
fn cartesian_quadrature_norm() {
    // independent of the polar quadrature used by the library
    let n = 600;
    let half = 8.0 * W0;
    let h = 2.0 * half / n as f64;
    for (p, ell) in [(0, 0), (1, 2), (3, -3), (2, 1)] {
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = -half + (i as f64 + 0.5) * h;
                let y = -half + (j as f64 + 0.5) * h;
                total += lg_waist(p, ell, x, y).norm_sqr() * h * h;
            }
        }
        assert!((total - 1.0).abs() < 1e-6, "p={p} l={ell}: {total}");
    }
}

#[test]
fn modes_are_orthonormal() {
    let mut modes = Vec::new();
    for p in 0..=3 {
        for ell in -3..=3 {
            modes.push(LGMode::new(p, ell, W0, LAMBDA).unwrap());
        }
    }
    let z = 0.3 * modes[0].rayleigh_range();
    let r_max = 10.0 * modes[0].radius(z);
    for (i, a) in modes.iter().enumerate() {
        for b in &modes[i..] {
            let o = mode_overlap(a, b, z, r_max, 1200, 16);
            let expected = if a == b { 1.0 } else { 0.0 };
            assert!((o - expected).norm() < 1e-6, "{a:?} {b:?}: {o}");
        }
    }
}

#[test]
fn norms_hold_away_from_the_waist() {
    for p in 0..=3 {
        for ell in -3..=3 {
            let m = LGMode::new(p, ell, W0, LAMBDA).unwrap();
            let z = 2.0 * m.rayleigh_range();
            assert!((norm_integral(&m, z) - 1.0).abs() < 1e-6);
            assert!((norm_integral(&m, 0.0) - 1.0).abs() < 1e-6);
        }
    }
}

/// Intensity samples on the ring of peak intensity.
fn ring(ell: u32, phi: f64, n: usize) -> Vec<f64> {
    let template = LGMode::new(0, ell as i32, W0, LAMBDA).unwrap();
    let qubit = OAMQubit::new(ell, phi).unwrap();
    let rho = W0 * (ell as f64 / 2.0).sqrt();
    (0..n)
        .map(|k| qubit.field(&template, rho, TAU * k as f64 / n as f64, 0.0).norm_sqr())
        .collect()
}

#[test]
fn superpositions_show_two_ell_petals() {
    for ell in 1..=3u32 {
        for phi in [0.0, 1.0, 2.5] {
            let n = 720;
            let v = ring(ell, phi, n);
            let peaks = (0..n)
                .filter(|&k| v[k] > v[(k + n - 1) % n] && v[k] >= v[(k + 1) % n])
                .count();
            assert_eq!(peaks, 2 * ell as usize, "l={ell}");

            let harmonic = |m: usize| -> f64 {
                v.iter()
                    .enumerate()
                    .map(|(k, &y)| Complex64::from_polar(y, -TAU * (m * k) as f64 / n as f64))
                    .sum::<Complex64>()
                    .norm()
            };
            let h2l = harmonic(2 * ell as usize);
            for m in 1..12 {
                if m != 2 * ell as usize {
                    assert!(harmonic(m) < 1e-9 * h2l);
                }
            }
        }
    }
}

#[test]
fn petals_rotate_with_phase() {
    // cos²(ℓθ − φ/2) pattern: shifting φ by 2ℓδ rotates it by δ
    let ell = 2;
    let n = 720;
    let a = ring(ell, 0.0, n);
    let b = ring(ell, 2.0 * ell as f64 * TAU * 10.0 / n as f64, n);
    for k in 0..n {
        assert!((a[k] - b[(k + 10) % n]).abs() < 1e-9 * a.iter().cloned().fold(0.0, f64::max));
    }
}

#[test]
fn on_axis_intensity_vanishes_for_vortices() {
    for ell in 1..=3 {
        let m = LGMode::new(0, ell, W0, LAMBDA).unwrap();
        let grid = Grid::new(65, 65, 3.0 * W0).unwrap();
        let r = mode_intensity(&m, &grid, 0.0);
        assert_eq!(r.get(32, 32), 0.0);
        assert!(r.data.iter().cloned().fold(0.0, f64::max) > 0.0);
    }
}

#[test]
fn waists_for_default_crystal() {
    let (wp, wd) = optimal_waists(defaults::CRYSTAL_LENGTH, defaults::PUMP_WAVELENGTH).unwrap();
    assert!((wp - 29e-6).abs() < 1e-6, "{wp}");
    assert!((wd - 41e-6).abs() < 1e-6, "{wd}");
}

#[test]
fn counts_scatter_around_expected_mean() {
    let app = Apparatus::ideal();
    let p = 0.37;
    let duration = 0.05;
    let counts: Vec<f64> = (0..100)
        .map(|seed| simulate_coincidences(&app, p, duration, seed).unwrap().coincidences as f64)
        .collect();
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let expected = app.expected_true_coincidences(p, duration);
    assert!((mean - expected).abs() < 3.0 * (var / n).sqrt(), "mean {mean} expected {expected}");
}

#[test]
fn ratio_converges_to_projection_probability() {
    let app = Apparatus::ideal();
    let duration = app.duration_for_heralds(1e6);
    for p in [0.0, 0.2, 0.5, 0.93, 1.0] {
        let c = simulate_coincidences(&app, p, duration, 7).unwrap();
        let sigma = (p * (1.0 - p) / c.heralds as f64).sqrt();
        assert!((c.ratio() - p).abs() <= 4.0 * sigma + 1e-12, "p={p}: {}", c.ratio());
    }
}

#[test]
fn real_detector_ratio_matches_rate_equation() {
    let app = Apparatus::default();
    let duration = app.duration_for_heralds(2e5);
    let p = 1.0;
    let c = simulate_coincidences(&app, p, duration, 3).unwrap();
    let pairs = app.source.heralded_pair_rate();
    let true_heralds = pairs * app.herald.efficiency;
    let idler_rate = pairs * app.idler.efficiency * p + app.idler.dark_rate;
    // dark heralds dilute the ratio; non-paralyzable dead time keeps 1/(1 + nτ) of analyzer clicks
    let expected = app.idler.efficiency * p * true_heralds / (true_heralds + app.herald.dark_rate)
        / (1.0 + idler_rate * app.idler.dead_time);
    assert!((c.ratio() - expected).abs() < 0.02 * expected, "{} vs {expected}", c.ratio());
}

#[test]
fn run_is_a_pure_function_of_the_seed() {
    let app = Apparatus::default();
    let a = count_run(&app, 0.5, 0.01, &mut ChaCha8Rng::seed_from_u64(1));
    let b = count_run(&app, 0.5, 0.01, &mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(a, b);
}

#[test]
fn sweep_follows_cos_squared() {
    let app = Apparatus::ideal();
    let phases: Vec<f64> = (0..17).map(|i| TAU * i as f64 / 16.0).collect();
    let pts = phase_sweep(&app, 2, &phases, app.duration_for_heralds(1e4), 11).unwrap();
    let fit = fit_cos2(&pts).unwrap();
    assert!(fit.visibility > 0.99);
    assert!(fit.max_abs_deviation < 0.03);
    // Δφ = π is dark
    assert!(pts[8].ratio() < 0.002);
}
