use std::f64::consts::PI;
use std::time::Instant;

use fockwatch::drive::{qubit_hamiltonian, CombSpec};
use fockwatch::dynamics::{evolve_lindblad, SystemParams};
use fockwatch::hilbert::{pauli_ops, DensityMatrix};
use fockwatch::rng;
use fockwatch::trajectories::{
    ensemble_mean_record, heterodyne_sx_ensemble, poisson_populations, sample_jump_truth, simulate_jump_record,
    simulate_record, simulate_record_with, EnsembleMode, QubitEngine, VoltageRecord,
};
use proptest::prelude::*;

fn setup(theta: f64) -> (SystemParams, CombSpec) {
    let p = SystemParams::paper();
    let s = CombSpec::for_kick_angle(&p, theta, p.window()).unwrap();
    (p, s)
}

#[test]
fn undriven_records_are_white_noise_with_variance_g_over_dt() {
    let (p, s) = setup(0.0);
    for gain in [1.0, 3.0] {
        let r = simulate_record_with(&p, &s, 0, 10.0 * p.window(), 11, gain, usize::MAX).unwrap();
        let n = r.record.len() as f64;
        let mean = r.record.samples.iter().sum::<f64>() / n;
        let var = r.record.samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let want = gain / r.record.dt;
        assert!((var / want - 1.0).abs() < 0.02, "var {var} vs {want}");
        assert!(mean.abs() < 4.0 * (want / n).sqrt());
    }
}

#[test]
fn integrated_noise_has_wiener_variance() {
    let (p, s) = setup(0.0);
    let engine = QubitEngine::new(&p, &s, 1.0, 0).unwrap();
    let steps = engine.window_steps();
    let tau = steps as f64 * engine.dt();
    let m = 2000;
    let integrals: Vec<f64> = (0..m)
        .map(|i| {
            let mut rng = rng::stream(5, "wiener", i);
            let mut acc = 0.0;
            engine.run_homodyne(|_| 0, steps, &mut rng, |_, v| acc += v * engine.dt()).unwrap();
            acc
        })
        .collect();
    let var = integrals.iter().map(|x| x * x).sum::<f64>() / m as f64;
    assert!((var / tau - 1.0).abs() < 0.05, "var {var} tau {tau}");
}

#[test]
fn records_are_reproducible_from_the_seed() {
    let (p, s) = setup(PI / 2.0);
    let a = simulate_record(&p, &s, 2, p.window(), 99).unwrap();
    let b = simulate_record(&p, &s, 2, p.window(), 99).unwrap();
    let c = simulate_record(&p, &s, 2, p.window(), 100).unwrap();
    assert_eq!(a.record.samples, b.record.samples);
    assert_ne!(a.record.samples, c.record.samples);
    assert!(simulate_record(&p, &s, 10, p.window(), 1).is_err());
}

#[test]
fn stochastic_mean_record_matches_analytic() {
    let (p, s) = setup(PI / 2.0);
    let analytic = ensemble_mean_record(&p, &s, 1, EnsembleMode::Analytic).unwrap();
    let n_traj = 2000;
    let mc = ensemble_mean_record(&p, &s, 1, EnsembleMode::Stochastic { n_traj, seed: 4 }).unwrap();
    // per-sample noise std is sqrt(1/dt); average over 224-sample blocks
    let dt = s.sample_dt;
    let block = 224;
    let se = (1.0 / dt / (n_traj * block) as f64).sqrt();
    let mut worst: f64 = 0.0;
    for (a, m) in analytic.chunks(block).zip(mc.chunks(block)) {
        let da = a.iter().sum::<f64>() / block as f64;
        let dm = m.iter().sum::<f64>() / block as f64;
        worst = worst.max((da - dm).abs() / se);
    }
    assert!(worst < 4.0, "worst block deviation {worst} SE");
    let zero = ensemble_mean_record(&p, &setup(0.0).1, 0, EnsembleMode::Analytic).unwrap();
    assert!(zero.iter().all(|&v| v == 0.0));
}

#[test]
fn heterodyne_ensemble_matches_lindblad_for_several_amplitudes() {
    // Independent oracle: RK4 Lindblad with a quarter of the SME step.
    // Neighbouring points are strongly correlated, so a few per cent of them may sit
    // just beyond 3 SE in a single ensemble; the mean square deviation must be ~1 SE².
    let start = Instant::now();
    for (k, theta) in [0.2, PI / 4.0, PI / 2.0, 0.75 * PI, PI].into_iter().enumerate() {
        let (p, s) = setup(theta);
        let engine = QubitEngine::new(&p, &s, 1.0, 0).unwrap();
        let steps = s.n_steps();
        let (mean, se) = heterodyne_sx_ensemble(&engine, 0, steps, 2000, 50 + k as u64).unwrap();
        let h = qubit_hamiltonian(&p, &s, 0).unwrap();
        let grid: Vec<f64> = (1..=steps).map(|j| j as f64 * s.sample_dt).collect();
        let lind = evolve_lindblad(&DensityMatrix::qubit_ground(), &h, &[(p.gamma_q(), pauli_ops().minus)], &grid, 0.25 * s.sample_dt).unwrap();
        let z: Vec<f64> = lind
            .iter()
            .enumerate()
            .map(|(j, rho)| (mean[j] - 2.0 * rho.op().get(1, 0).re) / se[j])
            .collect();
        let outside = z.iter().filter(|x| x.abs() > 3.0).count() as f64 / steps as f64;
        let worst = z.iter().fold(0.0f64, |w, x| w.max(x.abs()));
        let msd = z.iter().map(|x| x * x).sum::<f64>() / steps as f64;
        assert!(outside < 0.05 && worst < 5.0 && (0.5..2.0).contains(&msd), "theta {theta}: {outside} beyond 3 SE, worst {worst}, msd {msd}");
    }
    eprintln!("heterodyne ensembles: {:?}", start.elapsed());
}

#[test]
fn ensemble_mean_follows_the_deterministic_path_exactly() {
    // the outcome sampling makes the conditional update unbiased, so the mean path
    // of the engine is the expectation of the stochastic one at every step
    let (p, s) = setup(PI / 2.0);
    let engine = QubitEngine::new(&p, &s, 1.0, 2).unwrap();
    let steps = s.steps_per_period() * 4;
    let (mean, se) = heterodyne_sx_ensemble(&engine, 2, steps, 4000, 9).unwrap();
    let det = engine.lindblad_sx(2, steps);
    let msd = (0..steps).map(|j| ((mean[j] - det[j]) / se[j]).powi(2)).sum::<f64>() / steps as f64;
    assert!((0.5..2.0).contains(&msd), "msd {msd}");
}

#[test]
fn mean_photon_number_decays_exponentially() {
    let pops = poisson_populations(20.0, 45);
    let mean0: f64 = pops.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
    let t_c = 200.0;
    let m = 4000;
    let times = [0.0, 100.0, 300.0, 600.0];
    let mut acc = [0.0; 4];
    for i in 0..m {
        let mut rng = rng::stream(8, "decay", i);
        let truth = sample_jump_truth(&pops, t_c, 1000.0, &mut rng).unwrap();
        for (a, &t) in acc.iter_mut().zip(&times) {
            *a += truth.photon_number_at(t) as f64;
        }
    }
    for (a, &t) in acc.iter().zip(&times) {
        let want = mean0 * (-t / t_c).exp();
        let got = a / m as f64;
        // Poisson statistics of the binomially thinned count
        let se = (want / m as f64).sqrt();
        assert!((got - want).abs() < 4.0 * se + 1e-9, "t={t}: {got} vs {want}");
    }
}

#[test]
fn jump_record_runs_and_round_trips_to_disk() {
    let (p, s) = setup(PI / 2.0);
    let cav = DensityMatrix::from_populations(&poisson_populations(3.0, 12)).unwrap();
    let rec = simulate_jump_record(&p, &s, &cav, 4.0 * p.window(), 21).unwrap();
    assert_eq!(rec.result.record.len(), 4 * s.n_steps());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rec.bin");
    rec.result.record.write_binary(&path, "abc").unwrap();
    let back = VoltageRecord::read_binary(&path).unwrap();
    assert_eq!(back, rec.result.record);
    let coh = DensityMatrix::coherent(12, fockwatch::hilbert::C64::new(1.0, 0.0)).unwrap();
    assert!(simulate_jump_record(&p, &s, &coh, p.window(), 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn conditional_states_stay_physical(seed in any::<u64>(), n in 0usize..=9, theta in 0.0f64..6.0) {
        let (p, s) = setup(theta);
        let r = simulate_record_with(&p, &s, n, 2.0 * s.period(), seed, 1.0, 7).unwrap();
        for (_, rho) in &r.states {
            prop_assert!(rho.validate().is_ok());
        }
    }
}
