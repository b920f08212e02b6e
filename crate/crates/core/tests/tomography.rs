use num_complex::Complex64;
use qhash::photonics::OAMQubit;
use qhash::tomography::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_pure(rng: &mut ChaCha8Rng) -> DensityMatrix2 {
    // uniform on the Bloch sphere
    let z: f64 = rng.random_range(-1.0..=1.0);
    let az: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).sqrt();
    DensityMatrix2::from_bloch([r * az.cos(), r * az.sin(), z])
}

fn qubit_deg(phi: f64) -> DensityMatrix2 {
    DensityMatrix2::from_qubit(&OAMQubit::new(2, phi.to_radians()).unwrap())
}

#[test]
fn round_trip_of_random_pure_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..100 {
        let rho = random_pure(&mut rng);
        let settings = TomoSettings::six_state(100_000, i);
        let counts = simulate_tomo_counts(&rho, &settings);
        let est = reconstruct(&counts, &settings).unwrap();
        let d = est.trace_distance(&rho);
        assert!(d <= 0.01, "state {i}: trace distance {d}");
        assert!(est.is_hermitian(1e-12));
        assert!((est.trace() - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(est.eigenvalues().iter().all(|&e| e >= -1e-12));
    }
}

#[test]
fn exact_frequencies_invert_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let settings = TomoSettings::six_state(1, 0);
    for _ in 0..50 {
        let pure = random_pure(&mut rng);
        let shrink: f64 = rng.random_range(0.0..1.0);
        let b = pure.bloch();
        let rho = DensityMatrix2::from_bloch(b.map(|c| c * shrink));
        let est = reconstruct_from_frequencies(&probabilities(&rho, &settings), &settings).unwrap();
        assert!(est.max_entry_deviation(&rho) < 1e-12);
    }
}

#[test]
fn pure_basis_state_is_diagonal() {
    let rho = DensityMatrix2::pure([Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
    let settings = TomoSettings::six_state(100_000, 1);
    let est = reconstruct(&simulate_tomo_counts(&rho, &settings), &settings).unwrap();
    assert!((est.m[0][0].re - 1.0).abs() < 0.005);
    assert!(est.m[1][1].re.abs() < 0.005);
    assert!(est.m[0][1].norm() < 0.005);
}

#[test]
fn phase_extraction_is_equivariant() {
    let settings = TomoSettings::six_state(1, 0);
    for base in [0.0, 33.0, 120.0, 301.5] {
        for delta in [0.703125, 45.0, 200.0] {
            let exact = |phi: f64| {
                let p = probabilities(&qubit_deg(phi), &settings);
                extract_phase(&reconstruct_from_frequencies(&p, &settings).unwrap()).unwrap()
            };
            // difference is wrapped to (−180°, 180°]
            let shift = phase_difference_deg(exact(base), exact(base + delta));
            let off = (shift - delta).rem_euclid(360.0);
            assert!(off.min(360.0 - off) < 1e-9, "{base} {delta}: {shift}");
        }
    }
    // and with sampling noise, within the reported uncertainty
    let s1 = TomoSettings::six_state(100_000, 10);
    let s2 = TomoSettings::six_state(100_000, 11);
    let a = analyze(&simulate_tomo_counts(&qubit_deg(10.0), &s1), &s1, 100).unwrap();
    let b = analyze(&simulate_tomo_counts(&qubit_deg(70.0), &s2), &s2, 100).unwrap();
    let err = (a.phase_std_deg.powi(2) + b.phase_std_deg.powi(2)).sqrt();
    assert!((phase_difference_deg(a.phase_deg, b.phase_deg) - 60.0).abs() < 4.0 * err);
}

#[test]
fn bootstrap_uncertainty_scales_as_inverse_root_shots() {
    let rho = qubit_deg(120.0);
    let shots = [1_000u64, 3_000, 10_000, 30_000, 100_000];
    let (xs, ys): (Vec<f64>, Vec<f64>) = shots
        .iter()
        .map(|&n| {
            let s = TomoSettings::six_state(n, n);
            let rep = analyze(&simulate_tomo_counts(&rho, &s), &s, 200).unwrap();
            ((n as f64).ln(), rep.phase_std_deg.ln())
        })
        .unzip();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((slope + 0.5).abs() <= 0.1, "slope {slope}");
}

#[test]
fn incomplete_settings_are_rejected() {
    let mut s = TomoSettings::six_state(100, 0);
    s.projectors.truncate(2);
    assert!(!s.is_complete());
    assert!(reconstruct(&[50, 50], &s).is_err());
}
