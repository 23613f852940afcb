//! Acceptance checks, one per criterion, shared by the `acceptance` subcommand
//! and the acceptance test target.
//!
//! Experiment-level criteria run the experiments themselves into subdirectories
//! of the output directory, so every number behind a verdict is on disk.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use fockwatch::drive::{drive_hamiltonian_term, qubit_hamiltonian, CombSpec};
use fockwatch::dynamics::{evolve_lindblad, kerr_hamiltonian, SystemParams, TimeDependentHamiltonian};
use fockwatch::estimation::{decay_prior_step, mutual_information_gaussian_mixture, MonteCarloConfig};
use fockwatch::hilbert::{annihilation_op, excited_projector, number_op, pauli_ops, DensityMatrix, OperatorMatrix, C64};
use fockwatch::rng;
use fockwatch::signal::{filter_record, sample_covariance, TemplateBank};
use fockwatch::theory::accessible_information;
use fockwatch::trajectories::{heterodyne_sx_ensemble, white_noise_record, QubitEngine};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Experiment, Preset, RunConfig};
use crate::experiments::{self, ExperimentResult};
use crate::manifest::{OutputSet, RunManifest, CONFIG_NAME};
use crate::{CliError, Result};

pub const ACCEPTANCE_CSV: &str = "acceptance.csv";

/// Criterion ids with their short names.
pub const CRITERIA: [(u8, &str); 10] = [
    (1, "physics sanity"),
    (2, "sme vs lindblad"),
    (3, "fluorescence kicks"),
    (4, "dephasing bound"),
    (5, "measurement rate"),
    (6, "information ordering"),
    (7, "jump tracking"),
    (8, "confidence time"),
    (9, "oracle equivalences"),
    (10, "determinism"),
];

/// Criteria that cannot be met at the configured parameters; they are evaluated and
/// reported like the others, but callers may choose not to fail on them.
pub const KNOWN_UNATTAINABLE: [u8; 1] = [7];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Criterion {
    pub fn line(&self) -> String {
        format!("[{}] criterion {:>2} {:<22} {} ({:.1} s)", if self.passed { "PASS" } else { "FAIL" }, self.id, self.name, self.detail, self.seconds)
    }
}

#[derive(Clone, Debug)]
pub struct AcceptanceRun {
    pub criteria: Vec<Criterion>,
    pub manifest: RunManifest,
}

/// Runs the requested criteria (all when `only` is empty) into `config.output_dir`.
pub fn run_acceptance(config: &RunConfig, only: &[u8]) -> Result<AcceptanceRun> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.worker_count())
        .build()
        .map_err(|e| CliError::Format(format!("worker pool: {e}")))?;
    pool.install(|| {
        let mut out = OutputSet::create(&config.output_dir)?;
        out.write_bytes(CONFIG_NAME, config.to_toml().as_bytes())?;
        let mut criteria = Vec::new();
        let mut runs = Runs::default();
        for (id, name) in CRITERIA {
            if !only.is_empty() && !only.contains(&id) {
                continue;
            }
            let start = Instant::now();
            let verdict = match id {
                1 => physics_sanity(config),
                2 => sme_vs_lindblad(config),
                3 => fluorescence_kicks(config, &mut runs),
                4 => dephasing_bound(config, &mut runs),
                5 => measurement_rate(config, &mut runs),
                6 => information_ordering(config, &mut runs),
                7 => jump_tracking(config, &mut runs),
                8 => confidence_time(config, &mut runs),
                9 => oracles(config),
                _ => determinism(config),
            };
            let (passed, detail) = verdict.unwrap_or_else(|e| (false, format!("error: {e}")));
            let c = Criterion { id, name: name.to_string(), passed, detail, seconds: start.elapsed().as_secs_f64() };
            log::info!("{}", c.line());
            criteria.push(c);
        }
        out.csv(ACCEPTANCE_CSV, &criteria)?;
        let manifest = out.finish(config, "acceptance", "rk4, magnus4-split-sme")?;
        Ok(AcceptanceRun { criteria, manifest })
    })
}

type Verdict = Result<(bool, String)>;

/// Experiment runs shared between criteria, each done at most once into
/// `<output_dir>/<experiment>`.
#[derive(Default)]
struct Runs {
    done: Vec<(Experiment, ExperimentResult)>,
}

impl Runs {
    fn get(&mut self, config: &RunConfig, experiment: Experiment) -> Result<&ExperimentResult> {
        if let Some(i) = self.done.iter().position(|(e, _)| *e == experiment) {
            return Ok(&self.done[i].1);
        }
        let sub = RunConfig { experiment, output_dir: config.output_dir.join(experiment.name()), ..config.clone() };
        let (_, result) = experiments::execute(&sub)?;
        self.done.push((experiment, result));
        Ok(&self.done.last().expect("just pushed").1)
    }
}

fn within(a: f64, b: f64, tol: f64) -> bool {
    a <= b + tol + 1e-12
}

// ---------------------------------------------------------------- 1

/// Full qubit-cavity evolution under the comb for one window, with every channel.
pub fn joint_evolution(p: &SystemParams, spec: &CombSpec, samples: usize) -> fockwatch::Result<(Vec<f64>, Vec<DensityMatrix>)> {
    let n_op = number_op(p.n_trunc)?;
    let id_c = OperatorMatrix::identity(p.n_trunc + 1);
    let h0 = excited_projector().kron(&n_op).scale_re(p.chi) + OperatorMatrix::identity(2).kron(&kerr_hamiltonian(p)?);
    let h = TimeDependentHamiltonian::new(h0)?.with_term(drive_hamiltonian_term(spec, 0.0, Some(p.n_trunc))?)?;
    let a = annihilation_op(p.n_trunc)?;
    let mut dissipators = vec![(1.0 / p.t_q, pauli_ops().minus.kron(&id_c)), (1.0 / p.t_c, OperatorMatrix::identity(2).kron(&a))];
    if p.t_c_phi.is_finite() {
        dissipators.push((2.0 / p.t_c_phi, OperatorMatrix::identity(2).kron(&n_op)));
    }
    let rho0 = DensityMatrix::product(&DensityMatrix::qubit_ground(), &DensityMatrix::coherent(p.n_trunc, C64::new(1.5, 0.0))?)?;
    let steps = spec.n_steps();
    let grid: Vec<f64> = (1..=samples).map(|k| (k * steps / samples) as f64 * spec.sample_dt).collect();
    // the kicks are stiff for explicit RK4 at the sampling step
    let states = evolve_lindblad(&rho0, &h, &dissipators, &grid, spec.sample_dt / 4.0)?;
    Ok((grid, states))
}

fn physics_sanity(config: &RunConfig) -> Verdict {
    let p = &config.params;
    let start = Instant::now();
    let spec = config.comb.window_spec(p)?;
    let (grid, states) = joint_evolution(p, &spec, 4 * config.comb.window_periods)?;
    let seconds = start.elapsed().as_secs_f64();
    let duration = *grid.last().unwrap_or(&1.0);
    let mut trace = 0.0f64;
    let mut herm = 0.0f64;
    let mut min_eig = f64::INFINITY;
    for rho in &states {
        trace = trace.max((rho.op().trace() - C64::new(1.0, 0.0)).norm());
        herm = herm.max(rho.op().hermitian_defect());
        min_eig = min_eig.min(rho.min_eigenvalue());
    }
    let trace_rate = trace / duration;
    let ok = trace_rate < config.tolerance("sanity_trace_rate")
        && herm < config.tolerance("sanity_hermiticity")
        && min_eig >= -config.tolerance("sanity_positivity")
        && seconds < config.tolerance("sanity_seconds");
    Ok((ok, format!("trace drift {trace_rate:.1e}/us, hermiticity {herm:.1e}, min eigenvalue {min_eig:.1e}, dim {}, {seconds:.1} s", states[0].dim())))
}

// ---------------------------------------------------------------- 2

fn sme_vs_lindblad(config: &RunConfig) -> Verdict {
    let p = &config.params;
    let start = Instant::now();
    let sigma = config.tolerance("sme_sigma");
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, theta) in [PI / 4.0, PI / 2.0, PI].into_iter().enumerate() {
        let spec = config.comb.spec(p, theta, config.comb.window_periods)?;
        let engine = QubitEngine::new(p, &spec, 1.0, 0)?;
        let steps = spec.n_steps();
        let (mean, se) = heterodyne_sx_ensemble(&engine, 0, steps, config.n_trajectories, rng::derive_seed(config.seed, &format!("sme-{k}")))?;
        // independent oracle: RK4 Lindblad at a quarter of the step
        let h = qubit_hamiltonian(p, &spec, 0)?;
        let grid: Vec<f64> = (1..=steps).map(|j| j as f64 * spec.sample_dt).collect();
        let lind = evolve_lindblad(&DensityMatrix::qubit_ground(), &h, &[(p.gamma_q(), pauli_ops().minus)], &grid, 0.25 * spec.sample_dt)?;
        let z: Vec<f64> = lind.iter().enumerate().map(|(j, rho)| (mean[j] - 2.0 * rho.op().get(1, 0).re) / se[j].max(1e-300)).collect();
        let inside = z.iter().filter(|x| x.abs() <= sigma).count() as f64 / steps as f64;
        let worst = z.iter().fold(0.0f64, |w, x| w.max(x.abs()));
        ok &= inside >= config.tolerance("sme_inside_fraction") && worst < config.tolerance("sme_sigma_max");
        parts.push(format!("theta={:.2}pi {:.2}% within {sigma} SE, worst {worst:.2}", theta / PI, 100.0 * inside));
    }
    let seconds = start.elapsed().as_secs_f64();
    ok &= seconds < config.tolerance("sme_seconds");
    Ok((ok, format!("{}; {seconds:.0} s", parts.join("; "))))
}

// ---------------------------------------------------------------- 3

fn fluorescence_kicks(config: &RunConfig, runs: &mut Runs) -> Verdict {
    let ExperimentResult::Fluorescence(res) = runs.get(config, Experiment::FockFluorescence)? else { unreachable!() };
    let expected = 0.5 / config.params.t_q;
    let rel = config.tolerance("fluorescence_decay_rel");
    let spacing_tol = config.tolerance("fluorescence_period_rel") * res.period;
    let mut ok = true;
    let mut parts = Vec::new();
    for &n in &config.fock_fluorescence.photon_numbers {
        let kicks: Vec<_> = res.kicks.iter().filter(|k| k.n == n && k.source == "mean" && k.period >= 1).collect();
        let signs: Vec<f64> = kicks.iter().map(|k| k.i_peak.signum()).collect();
        let flips = signs.windows(2).filter(|w| w[0] != w[1]).count();
        let pairs = signs.len().saturating_sub(1);
        let sign_ok = if n % 2 == 1 { flips == pairs } else { flips == 0 };
        let worst_spacing = kicks.windows(2).map(|w| (w[1].t_onset_us - w[0].t_onset_us - res.period).abs()).fold(0.0, f64::max);
        let rate = res.folded.iter().find(|d| d.n == n && d.source == "mean").map_or(f64::NAN, |d| d.decay_rate);
        let decay_ok = (rate - expected).abs() <= rel * expected;
        ok &= sign_ok && worst_spacing <= spacing_tol && decay_ok && pairs > 0;
        parts.push(format!("n={n}: {flips}/{pairs} flips, spacing off {:.0}%, decay {rate:.1}/us", 100.0 * worst_spacing / res.period));
    }
    Ok((ok, format!("{}; expected decay {expected:.1}/us", parts.join(", "))))
}

// ---------------------------------------------------------------- 4

fn dephasing_bound(config: &RunConfig, runs: &mut Runs) -> Verdict {
    let ExperimentResult::Dephasing(res) = runs.get(config, Experiment::Dephasing)? else { unreachable!() };
    let rel = config.tolerance("dephasing_bound_rel");
    let mut worst = 0.0f64;
    let mut compared = 0;
    for r in res.rows.iter().filter(|r| r.theta <= PI / 2.0 + 1e-9 && r.gamma_d_bound > 0.0) {
        worst = worst.max((r.gamma_d - r.gamma_d_bound).abs() / r.gamma_d_bound);
        compared += 1;
    }
    let peak = res.rows.iter().max_by(|a, b| a.gamma_d.total_cmp(&b.gamma_d)).map_or(f64::NAN, |r| r.theta);
    let peak_ok = within((peak - PI).abs(), config.tolerance("dephasing_peak_theta"), 0.0);
    let flagged = res.rows.iter().filter(|r| r.flagged).count();
    let ok = compared > 0 && worst < rel && peak_ok;
    Ok((ok, format!("worst relative deviation {worst:.3} over {compared} angles <= pi/2, maximum at {:.3}pi, {flagged} flagged fits", peak / PI)))
}

// ---------------------------------------------------------------- 5

fn measurement_rate(config: &RunConfig, runs: &mut Runs) -> Verdict {
    let ExperimentResult::Rates(res) = runs.get(config, Experiment::Rates)? else { unreachable!() };
    let rel = config.tolerance("rate_bound_rel");
    let mut worst = 0.0f64;
    let mut compared = 0;
    for r in res.rows.iter().filter(|r| r.theta <= PI / 2.0 + 1e-9 && r.het_eta > 0.0) {
        worst = worst.max((r.gamma_m - r.het_eta).abs() / r.het_eta);
        compared += 1;
    }
    let peak = res.rows.iter().max_by(|a, b| a.gamma_m.total_cmp(&b.gamma_m)).ok_or_else(|| CliError::Format("no rates".into()))?;
    let peak_ok = within((peak.theta - PI / 2.0).abs(), config.tolerance("rate_peak_theta"), 0.0);
    let tc_ok = peak.gamma_m_tc >= config.tolerance("rate_peak_tc");
    let time_ok = res.seconds < config.tolerance("rate_seconds");
    let ok = compared > 0 && worst < rel && peak_ok && tc_ok && time_ok;
    Ok((
        ok,
        format!(
            "worst |gamma_m/bound - 1| {worst:.3} over {compared} angles <= pi/2, peak at {:.3}pi with gamma_m*T_c = {:.1}, {} windows per n, {:.0} s",
            peak.theta / PI,
            peak.gamma_m_tc,
            config.rates.windows,
            res.seconds
        ),
    ))
}

// ---------------------------------------------------------------- 6

const ROUNDOFF_RATE: f64 = 1e-9;

fn information_ordering(config: &RunConfig, runs: &mut Runs) -> Verdict {
    // the theory curves come with the dephasing run
    let ExperimentResult::Dephasing(res) = runs.get(config, Experiment::Dephasing)? else { unreachable!() };
    let k = config.tolerance("ordering_mc_sigma");
    let mut violations = Vec::new();
    let mut best_ratio = 0.0f64;
    for c in &res.curves {
        let s1 = c.het_one_stderr;
        // roundoff floor: at theta = 0 every rate is zero up to ~1e-15
        let s1 = s1 + ROUNDOFF_RATE;
        let both = (s1 * s1 + c.het_eta_stderr * c.het_eta_stderr).sqrt();
        if c.accessible_rate < c.het_one - k * s1 || c.het_one < c.het_eta - k * both || c.gamma_d_bound < c.het_one - k * s1 {
            violations.push(format!("{:.3}pi", c.theta / PI));
        }
        if c.het_one > 10.0 * s1 && c.het_one > 0.0 {
            best_ratio = best_ratio.max(c.accessible_rate / c.het_one);
        }
    }
    let ok = violations.is_empty() && best_ratio >= config.tolerance("ordering_ratio");
    Ok((ok, format!("{} angles, ordering violated at [{}], largest accessible/heterodyne ratio {best_ratio:.2}", res.curves.len(), violations.join(", "))))
}

// ---------------------------------------------------------------- 7

fn jump_tracking(config: &RunConfig, runs: &mut Runs) -> Verdict {
    let ExperimentResult::JumpTrack(res) = runs.get(config, Experiment::JumpTrack)? else { unreachable!() };
    let t = res.total;
    let ok = t.window_fraction() >= config.tolerance("tracking_window_fraction") && t.jump_fraction() >= config.tolerance("tracking_jump_fraction");
    Ok((
        ok,
        format!(
            "{} records: windows {}/{} = {:.3}, jumps within +-{}tau {}/{} = {:.3}",
            res.records.len(),
            t.windows_matched,
            t.windows_scored,
            t.window_fraction(),
            config.tolerance("tracking_jump_windows"),
            t.jumps_localized,
            t.jumps_scored,
            t.jump_fraction()
        ),
    ))
}

// ---------------------------------------------------------------- 8

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for &k in &idx[i..=j] {
                r[k] = 0.5 * (i + j) as f64;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn confidence_time(config: &RunConfig, runs: &mut Runs) -> Verdict {
    let level = config.tolerance("confidence_level");
    let ExperimentResult::Confidence(res) = runs.get(config, Experiment::ConfidenceTime)? else { unreachable!() };
    let groups = res.at(level).ok_or_else(|| CliError::Format("missing confidence level".into()))?;
    let (lo, hi) = (config.tolerance("confidence_time_min"), config.tolerance("confidence_time_max"));
    let nbars: Vec<f64> = groups.iter().map(|g| g.nbar).collect();
    let times: Vec<f64> = groups.iter().map(|g| g.mean_time).collect();
    let in_range = times.iter().all(|t| (lo..=hi).contains(t));
    let rho = spearman(&nbars, &times);
    let ok = in_range && rho > config.tolerance("confidence_rank");
    let listed: Vec<String> = groups.iter().map(|g| format!("{}:{:.1}", g.nbar, g.mean_time)).collect();
    Ok((ok, format!("tau({level}) by nbar [{}] us, rank correlation {rho:.3}", listed.join(" "))))
}

// ---------------------------------------------------------------- 9

fn binary_entropy(p: f64) -> f64 {
    [p, 1.0 - p].iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

/// Best two-outcome projective measurement on `(cos u, ±sin u)` by scan and golden section.
pub fn brute_force_accessible(s: f64) -> f64 {
    let u = 0.5 * s.acos();
    let mi = |phi: f64| {
        let pa = (phi - u).cos().powi(2);
        let pb = (phi + u).cos().powi(2);
        binary_entropy(0.5 * (pa + pb)) - 0.5 * binary_entropy(pa) - 0.5 * binary_entropy(pb)
    };
    let n = 20_000;
    let best = (0..n).map(|j| PI * j as f64 / n as f64).fold(0.0, |b, phi| if mi(phi) > mi(b) { phi } else { b });
    let (mut lo, mut hi) = (best - PI / n as f64, best + PI / n as f64);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let (x1, x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
        if mi(x1) > mi(x2) {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    mi(0.5 * (lo + hi))
}

/// Composite Simpson rule with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|j| f(a + j as f64 * h) * if j % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + f(b) + inner) * h / 3.0
}

fn oracles(config: &RunConfig) -> Verdict {
    let p = &config.params;
    // accessible information
    let acc = (1..20).map(|j| j as f64 / 20.0).map(|s| (accessible_information(s) - brute_force_accessible(s)).abs()).fold(0.0, f64::max);

    // mixture information of a one-dimensional mixture
    let (mu, sd, prior) = ([0.0, 1.3, -0.4], [1.0, 0.7, 0.5], [0.3, 0.5, 0.2]);
    let pdf = |x: f64, k: usize| (-0.5 * ((x - mu[k]) / sd[k]).powi(2)).exp() / (sd[k] * (2.0 * PI).sqrt());
    let h_mix = simpson(
        |x| {
            let m: f64 = (0..3).map(|k| prior[k] * pdf(x, k)).sum();
            if m > 0.0 {
                -m * m.ln()
            } else {
                0.0
            }
        },
        -15.0,
        15.0,
        200_000,
    );
    let h_cond: f64 = (0..3).map(|k| prior[k] * 0.5 * (2.0 * PI * std::f64::consts::E * sd[k] * sd[k]).ln()).sum();
    let means: Vec<DVector<f64>> = mu.iter().map(|m| DVector::from_element(1, *m)).collect();
    let covs: Vec<DMatrix<f64>> = sd.iter().map(|s| DMatrix::from_element(1, 1, s * s)).collect();
    let mc = MonteCarloConfig { samples: 50_000, tolerance: Some(2.5e-4), max_samples: 20_000_000 };
    let mi = mutual_information_gaussian_mixture(&means, &covs, &prior, &mc, &mut rng::stream(config.seed, "oracle-mixture", 0))?;
    let entropy = (mi.value - (h_mix - h_cond)).abs();

    // loss-only prior propagation against the matrix exponential of its generator
    let k = p.n_max + 1;
    let gen = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            -(i as f64) / p.t_c
        } else if j == i + 1 {
            j as f64 / p.t_c
        } else {
            0.0
        }
    });
    let mut r = rng::stream(config.seed, "oracle-decay", 0);
    let mut decay = 0.0f64;
    for dt in [1e-3, 0.5, 2.0, 40.0, 600.0] {
        let raw: Vec<f64> = (0..k).map(|_| r.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let prior: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let want = (&gen * dt).exp() * DVector::from_column_slice(&prior);
        let got = decay_prior_step(&prior, dt, p.t_c);
        decay = decay.max(got.iter().zip(want.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }

    // white-noise outcomes: covariance G times the Gram matrix
    let spec = config.comb.window_spec(p)?;
    let mut noise_rel = 0.0f64;
    for (g, gain) in [1.0, 2.5].into_iter().enumerate() {
        let engine = QubitEngine::new(p, &spec, gain, p.n_max)?;
        let bank = TemplateBank::analytic(&engine, spec.period())?;
        let windows = 100_000;
        let chunk = 5000;
        let mut outcomes = Vec::with_capacity(windows);
        let mut rng = rng::stream(config.seed, "oracle-noise", g as u64);
        for _ in 0..windows / chunk {
            let v = white_noise_record(chunk * bank.window_len(), engine.dt(), gain, &mut rng);
            outcomes.extend(filter_record(&v, &bank).into_iter().map(|o| o.m));
        }
        let cov = sample_covariance(&outcomes)?;
        let want = &bank.gram * gain;
        noise_rel = noise_rel.max((cov - &want).norm() / want.norm());
    }

    let ok = acc < config.tolerance("oracle_accessible")
        && entropy < config.tolerance("oracle_entropy")
        && decay < config.tolerance("oracle_decay")
        && noise_rel < config.tolerance("oracle_noise_rel");
    Ok((
        ok,
        format!("accessible {acc:.1e} nats, mixture entropy {entropy:.1e} nats (se {:.1e}), decay {decay:.1e}, noise covariance {:.2}%", mi.stderr, 100.0 * noise_rel),
    ))
}

// ---------------------------------------------------------------- 10

/// CSV checksums of one run of each experiment at `workers` threads.
fn csv_checksums(config: &RunConfig, workers: usize, dir: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for e in Experiment::ALL {
        let sub = RunConfig { experiment: e, workers, output_dir: dir.join(e.name()), ..config.clone() };
        let (manifest, _) = experiments::execute(&sub)?;
        out.extend(manifest.outputs.into_iter().filter(|f| f.path.ends_with(".csv")).map(|f| (format!("{}/{}", e.name(), f.path), f.sha256)));
    }
    Ok(out)
}

fn determinism(config: &RunConfig) -> Verdict {
    let small = RunConfig { output_dir: config.output_dir.clone(), seed: config.seed, tolerances: config.tolerances.clone(), ..RunConfig::preset(Preset::Fast) };
    let root = config.output_dir.join("determinism");
    let one = csv_checksums(&small, 1, &root.join("workers-1"))?;
    let three = csv_checksums(&small, 3, &root.join("workers-3"))?;
    let differing: Vec<&str> = one.iter().zip(&three).filter(|(a, b)| a != b).map(|(a, _)| a.0.as_str()).collect();
    let ok = one.len() == three.len() && !one.is_empty() && differing.is_empty();
    Ok((ok, format!("{} CSV files from 5 experiments at 1 and 3 workers, {} differ {:?}", one.len(), differing.len(), differing)))
}
