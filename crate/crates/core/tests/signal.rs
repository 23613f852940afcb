use std::f64::consts::PI;

use fockwatch::drive::{qubit_hamiltonian, CombSpec};
use fockwatch::dynamics::{evolve_lindblad, SystemParams};
use fockwatch::hilbert::{pauli_ops, DensityMatrix, C64};
use fockwatch::rng;
use fockwatch::signal::{
    analytic_signal, comb_reference, demodulate_quadratures, filter_record, fock_window_outcomes, sample_covariance, subtract_reference, TemplateBank,
};
use fockwatch::trajectories::{fock_windows, white_noise_record, QubitEngine};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn setup(theta: f64) -> (SystemParams, CombSpec) {
    let p = SystemParams::paper();
    let s = CombSpec::for_kick_angle(&p, theta, p.window()).unwrap();
    (p, s)
}

fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn two_tones_become_two_complex_exponentials() {
    let n = 4096;
    let (w1, w2) = (2.0 * PI * 100.0 / n as f64, 2.0 * PI * 317.5 / n as f64);
    let x: Vec<f64> = (0..n).map(|j| (w1 * j as f64).cos() + 0.3 * (w2 * j as f64 + 0.4).cos()).collect();
    let z = analytic_signal(&x).unwrap();
    // the second tone is not periodic in the window, so stay away from the edges
    for j in n / 4..3 * n / 4 {
        let want = C64::from_polar(1.0, w1 * j as f64) + C64::from_polar(0.3, w2 * j as f64 + 0.4);
        assert!((z[j] - want).norm() < 5e-3, "j {j}: {}", (z[j] - want).norm());
        assert!((z[j].re - x[j]).abs() < 1e-10);
    }
}

#[test]
fn demodulated_mean_record_reproduces_lindblad_sigma_x() {
    let (p, s) = setup(PI / 2.0);
    let n = 1;
    let engine = QubitEngine::new(&p, &s, 1.0, n).unwrap();
    let w = engine.window_steps();
    let dt = engine.dt();
    // one steady window, which is periodic, so the FFT sees no edges
    let v = engine.mean_record(n, w, w);
    let h = qubit_hamiltonian(&p, &s, n).unwrap();
    let grid: Vec<f64> = (0..2 * w).map(|j| (j as f64 + 0.5) * dt).collect();
    let lind = evolve_lindblad(&DensityMatrix::qubit_ground(), &h, &[(p.gamma_q(), pauli_ops().minus)], &grid, 0.25 * dt).unwrap();
    let scale = engine.signal_scale();
    let coh: Vec<C64> = (0..w).map(|j| lind[w + j].op().get(1, 0)).collect();

    // the record itself against the oracle coherence on the IF carrier
    let oracle: Vec<f64> = (0..w).map(|j| scale * 2.0 * (C64::from_polar(1.0, -p.omega_if * grid[w + j]) * coh[j]).re).collect();
    let dv = l2(&v.iter().zip(&oracle).map(|(a, b)| a - b).collect::<Vec<_>>()) / l2(&oracle);
    assert!(dv < 1e-2, "record vs oracle {dv}");

    // ⟨σx⟩ in the frame of the qubit with n photons, up to the automatically chosen phase
    // and a global scale. The kicks put part of the coherence spectrum beyond ω_IF + nχ,
    // where it folds through zero frequency, so agreement is limited to a few per cent.
    let q = demodulate_quadratures(&v, dt, w as f64 * dt, n, &p, s.period(), None).unwrap();
    let want: Vec<f64> = (0..w).map(|j| 2.0 * (coh[j] * C64::from_polar(1.0, n as f64 * p.chi * grid[w + j])).re).collect();
    let a = q.i.iter().zip(&want).map(|(x, y)| x * y).sum::<f64>() / want.iter().map(|y| y * y).sum::<f64>();
    // the automatic phase fixes the sign by making the mean of I positive
    assert!((a.abs() / scale - 1.0).abs() < 0.05, "scale {a} vs {scale}");
    let resid: Vec<f64> = q.i.iter().zip(&want).map(|(x, y)| x - a * y).collect();
    let rel = l2(&resid) / (a.abs() * l2(&want));
    assert!(rel < 0.1, "relative L2 error {rel}");
}

fn l2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[test]
fn band_limited_coherence_is_recovered_exactly() {
    let (p, s) = setup(PI / 2.0);
    let n = 2;
    let dt = s.sample_dt;
    let len = 21 * s.steps_per_period();
    let t_win = len as f64 * dt;
    // a few harmonics of the window, all well inside the IF band
    let coh = |t: f64| {
        (1..6).map(|k| C64::from_polar(0.3 / k as f64, 2.0 * PI * k as f64 * t / t_win + 0.7 * k as f64)).sum::<C64>()
            + C64::new(0.1, -0.2)
    };
    let omega = p.omega_if + n as f64 * p.chi;
    let t0 = 1.5;
    let v: Vec<f64> = (0..len)
        .map(|j| {
            let t = t0 + (j as f64 + 0.5) * dt;
            2.0 * (C64::from_polar(1.0, -omega * t) * coh(t)).re
        })
        .collect();
    let q = demodulate_quadratures(&v, dt, t0, n, &p, s.period(), Some(0.0)).unwrap();
    for j in 0..len {
        let c = coh(t0 + (j as f64 + 0.5) * dt);
        assert!((q.i[j] - 2.0 * c.re).abs() < 1e-8 && (q.q[j] - 2.0 * c.im).abs() < 1e-8, "j {j}");
    }
}

#[test]
fn noiseless_template_gives_gram_column_and_normalizes_to_unit_vector() {
    let (p, s) = setup(PI / 2.0);
    let engine = QubitEngine::new(&p, &s, 1.0, 9).unwrap();
    let bank = TemplateBank::analytic(&engine, s.period()).unwrap();
    let inv = bank.gram_inverse().unwrap();
    assert!(!inv.pseudo);
    for j in [0, 4, 9] {
        let m = bank.matched_filter_outcomes(&bank.templates[j], 3.0 * s.period()).unwrap();
        for n in 0..10 {
            assert!((m.m[n] - bank.gram[(n, j)]).abs() < 1e-12 * bank.gram.amax());
        }
        let r = bank.normalize(&inv, &m.m);
        for (k, x) in r.iter().enumerate() {
            assert!((x - if k == j { 1.0 } else { 0.0 }).abs() < 1e-8, "r = {r:?}");
        }
    }
    let zero = bank.matched_filter_outcomes(&vec![0.0; bank.window_len()], 0.0).unwrap();
    assert!(zero.m.iter().all(|x| *x == 0.0));
    // symmetric and positive semidefinite
    assert!((&bank.gram - bank.gram.transpose()).amax() < 1e-12 * bank.gram.amax());
    assert!(bank.gram.clone().symmetric_eigen().eigenvalues.min() > -1e-9);
}

#[test]
fn zero_amplitude_gram_is_refused() {
    let (p, s) = setup(0.0);
    let engine = QubitEngine::new(&p, &s, 1.0, 9).unwrap();
    let bank = TemplateBank::analytic(&engine, s.period()).unwrap();
    assert!(bank.gram.amax() == 0.0);
    assert!(bank.gram_inverse().is_err());
}

#[test]
fn white_noise_outcomes_have_covariance_gain_times_gram() {
    let (p, s) = setup(PI / 2.0);
    let gain = 2.0;
    let engine = QubitEngine::new(&p, &s, gain, 9).unwrap();
    let bank = TemplateBank::analytic(&engine, s.period()).unwrap();
    let windows = 20_000;
    let mut rng = rng::stream(17, "white", 0);
    let noise = white_noise_record(windows * bank.window_len(), engine.dt(), gain, &mut rng);
    let out: Vec<Vec<f64>> = filter_record(&noise, &bank).into_iter().map(|o| o.m).collect();
    assert_eq!(out.len(), windows);
    let cov = sample_covariance(&out).unwrap();
    let want = &bank.gram * gain;
    assert!(rel_frobenius(&cov, &want) < 0.03, "{}", rel_frobenius(&cov, &want));
    let dim = bank.dim();
    for n in 0..dim {
        let mean = out.iter().map(|m| m[n]).sum::<f64>() / windows as f64;
        assert!(mean.abs() < 4.0 * (want[(n, n)] / windows as f64).sqrt());
    }
}

#[test]
fn split_half_bank_has_unit_normalized_means() {
    let (p, s) = setup(PI / 2.0);
    let engine = QubitEngine::new(&p, &s, 1.0, 2).unwrap();
    let w = engine.window_steps();
    let per_n = 400;
    let records: Vec<Vec<Vec<f64>>> = (0..=2)
        .map(|n| {
            let mut rng = rng::stream(3, "split", n as u64);
            let mut all = Vec::with_capacity((per_n + 1) * w);
            engine.run_homodyne(|_| n, (per_n + 1) * w, &mut rng, |_, v| all.push(v)).unwrap();
            all.chunks(w).skip(1).map(<[f64]>::to_vec).collect()
        })
        .collect();
    let bank = TemplateBank::from_records(&records, engine.dt(), s.period(), true).unwrap();
    assert!(bank.split_half);
    assert_eq!(bank.n_samples, vec![per_n; 3]);
    let analytic = TemplateBank::analytic(&engine, s.period()).unwrap();
    let inv = bank.gram_inverse().unwrap();
    // E[r | n] = e_n, checked against the per-n average of normalized outcomes
    for n in 0..=2 {
        let mut mean = [0.0; 3];
        for r in &records[n] {
            let m: Vec<f64> = analytic.filter_window(r).unwrap();
            let rn = analytic.normalize(&analytic.gram_inverse().unwrap(), &m);
            for k in 0..3 {
                mean[k] += rn[k] / per_n as f64;
            }
        }
        for k in 0..3 {
            let want = if k == n { 1.0 } else { 0.0 };
            assert!((mean[k] - want).abs() < 0.25, "n {n}: {mean:?}");
        }
    }
    // each entry (A_i|B_j) carries the noise of two independent half means:
    // var = N/M² + (G_ii + G_jj)/M for M windows per half and N samples per window
    let m = (per_n / 2) as f64;
    let nw = w as f64;
    for i in 0..3 {
        for j in 0..3 {
            let g = &analytic.gram;
            let sd = (nw / (m * m) + (g[(i, i)] + g[(j, j)]) / m).sqrt();
            let dev = (bank.gram[(i, j)] - g[(i, j)]).abs();
            assert!(dev < 4.0 * sd, "G[{i},{j}]: {} vs {} (sd {sd})", bank.gram[(i, j)], g[(i, j)]);
        }
    }
    assert!(inv.condition.is_finite());
}

#[test]
fn zero_efficiency_covariances_do_not_depend_on_photon_number() {
    let (mut p, s) = setup(PI / 2.0);
    let analytic = QubitEngine::new(&p, &s, 1.0, 3).unwrap();
    let bank = TemplateBank::analytic(&analytic, s.period()).unwrap();
    p.eta = 0.0;
    let engine = QubitEngine::new(&p, &s, 1.0, 3).unwrap();
    let w = engine.window_steps();
    let outcomes: Vec<Vec<Vec<f64>>> = (0..=3)
        .map(|n| {
            let mut rng = rng::stream(5, "eta0", 0);
            let mut v = Vec::new();
            engine.run_homodyne(|_| n, 200 * w, &mut rng, |_, x| v.push(x)).unwrap();
            filter_record(&v, &bank).into_iter().map(|o| o.m).collect()
        })
        .collect();
    let covs: Vec<DMatrix<f64>> = outcomes.iter().map(|o| sample_covariance(o).unwrap()).collect();
    for c in &covs[1..] {
        assert_eq!(c, &covs[0]);
    }
}

#[test]
fn covariance_estimates_tighten_with_sample_count() {
    // variance of a sample-variance estimate scales as 1/N
    let reps = 400;
    let spread = |n: usize| -> f64 {
        let est: Vec<f64> = (0..reps)
            .map(|r| {
                let mut rng = rng::stream(9, "cov-scaling", (n * 1000 + r) as u64);
                let s: Vec<Vec<f64>> = (0..n).map(|_| vec![StandardNormal.sample(&mut rng)]).collect();
                sample_covariance(&s).unwrap()[(0, 0)]
            })
            .collect();
        let mean = est.iter().sum::<f64>() / reps as f64;
        est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps - 1) as f64
    };
    let ratio = spread(100) / spread(200);
    // sampling spread of the ratio of two variance estimates from 400 repetitions is ~0.14
    assert!((ratio - 2.0).abs() < 3.0 * 0.14 * 2.0, "ratio {ratio}");
}

#[test]
fn comb_leakage_is_removed_by_reference_subtraction() {
    let (p, s) = setup(PI / 2.0);
    let plain = QubitEngine::new(&p, &s, 1.0, 1).unwrap();
    let leaky = QubitEngine::new(&p, &s, 1.0, 1).unwrap().with_comb_leakage(&s, 50.0);
    let len = 3 * plain.window_steps();
    let run = |e: &QubitEngine| {
        let mut rng = rng::stream(2, "leak", 0);
        let mut v = Vec::with_capacity(len);
        e.run_homodyne(|_| 1, len, &mut rng, |_, x| v.push(x)).unwrap();
        v
    };
    let a = run(&plain);
    let mut b = run(&leaky);
    subtract_reference(&mut b, &comb_reference(&s, &p, 50.0, 0.0, len)).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn matched_filter_is_linear_and_scale_covariant(seed in any::<u64>(), scale in 0.1f64..10.0) {
        let templates: Vec<Vec<f64>> = (0..3).map(|k| (0..64).map(|j| ((j * (k + 1)) as f64 * 0.1).sin()).collect()).collect();
        let bank = TemplateBank::from_templates(templates.clone(), 0.01, 0.16).unwrap();
        let mut rng = rng::stream(seed, "lin", 0);
        let v1: Vec<f64> = (0..64).map(|_| StandardNormal.sample(&mut rng)).collect();
        let v2: Vec<f64> = (0..64).map(|_| StandardNormal.sample(&mut rng)).collect();
        let sum: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| a + b).collect();
        let (m1, m2, ms) = (bank.filter_window(&v1).unwrap(), bank.filter_window(&v2).unwrap(), bank.filter_window(&sum).unwrap());
        for k in 0..3 {
            prop_assert!((ms[k] - m1[k] - m2[k]).abs() < 1e-12);
        }
        // scaling records and templates by s scales m by s², G by s², leaves r fixed
        let scaled = TemplateBank::from_templates(templates.iter().map(|t| t.iter().map(|x| x * scale).collect()).collect(), 0.01, 0.16).unwrap();
        let vs: Vec<f64> = v1.iter().map(|x| x * scale).collect();
        let r = bank.normalize(&bank.gram_inverse().unwrap(), &m1);
        let rs = scaled.normalize(&scaled.gram_inverse().unwrap(), &scaled.filter_window(&vs).unwrap());
        for k in 0..3 {
            prop_assert!((r[k] - rs[k]).abs() < 1e-8 * (1.0 + r[k].abs()));
        }
    }
}

#[test]
fn streamed_outcomes_equal_filtered_windows() {
    let (p, s) = setup(PI / 2.0);
    let engine = QubitEngine::new(&p, &s, 1.0, 3).unwrap();
    let bank = TemplateBank::analytic(&engine, s.period()).unwrap();
    let stored: Vec<Vec<f64>> = fock_windows(&engine, 2, 5, 11).unwrap().iter().map(|w| bank.filter_window(w).unwrap()).collect();
    assert_eq!(fock_window_outcomes(&engine, &bank, 2, 5, 11).unwrap(), stored);
}
