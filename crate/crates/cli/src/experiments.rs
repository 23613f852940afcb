//! The five experiments. Each returns typed results and writes its CSV files.
//!
//! Randomness comes only from `rng::stream(seed, domain, index)` with one index per
//! independent item, and parallel maps collect in index order, so the worker
//! count never changes a result.

use std::f64::consts::PI;

use fockwatch::estimation::{
    bayes_track, confidence_time, empirical_measurement_rate, score_tracking, uniform_prior, viterbi_path, ConfidenceGroup,
    LikelihoodModel, MonteCarloConfig, RateEstimate, TrackingScore,
};
use fockwatch::rng;
use fockwatch::signal::{demodulate_quadratures, fock_window_outcomes, MatchedFilter, OutcomeVector, TemplateBank};
use fockwatch::theory::{
    accessible_information_rate, dephasing_rate_bound, heterodyne_rate_bound, simulate_dephasing, dephasing_extraction,
    uneven_periods, DephasingConfig, DephasingExtraction,
};
use fockwatch::trajectories::{
    ensemble_mean_record, poisson_populations, run_jump_record, sample_jump_truth, white_noise_record, EnsembleMode, JumpTruth,
    QubitEngine,
};
use fockwatch::dynamics::SystemParams;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Experiment, RunConfig};
use crate::manifest::{OutputSet, RunManifest, CONFIG_NAME};
use crate::{CliError, Result};

/// Integrator behind each experiment, for the manifest.
pub fn integrator_name(experiment: Experiment) -> &'static str {
    match experiment {
        Experiment::Dephasing => "rk4",
        _ => "magnus4-split-sme",
    }
}

pub enum ExperimentResult {
    Fluorescence(FluorescenceResult),
    JumpTrack(JumpTrackResult),
    Rates(RatesResult),
    Dephasing(DephasingResult),
    Confidence(ConfidenceResult),
}

/// Runs `config.experiment` into `config.output_dir` on a pool of `config.workers` threads.
pub fn run(config: &RunConfig) -> Result<RunManifest> {
    execute(config).map(|(m, _)| m)
}

/// [`run`], also returning the typed results.
pub fn execute(config: &RunConfig) -> Result<(RunManifest, ExperimentResult)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.worker_count())
        .build()
        .map_err(|e| CliError::Format(format!("worker pool: {e}")))?;
    pool.install(|| {
        let mut out = OutputSet::create(&config.output_dir)?;
        out.write_bytes(CONFIG_NAME, config.to_toml().as_bytes())?;
        let result = match config.experiment {
            Experiment::FockFluorescence => ExperimentResult::Fluorescence(fock_fluorescence(config, &mut out)?),
            Experiment::JumpTrack => ExperimentResult::JumpTrack(jump_track(config, &mut out)?),
            Experiment::Rates => ExperimentResult::Rates(rates(config, &mut out)?),
            Experiment::Dephasing => ExperimentResult::Dephasing(dephasing(config, &mut out)?),
            Experiment::ConfidenceTime => ExperimentResult::Confidence(confidence(config, &mut out)?),
        };
        let manifest = out.finish(config, config.experiment.name(), integrator_name(config.experiment))?;
        Ok((manifest, result))
    })
}

/// Template bank of noiseless mean records with covariances from `windows`
/// simulated windows per photon number.
pub fn calibrate(engine: &QubitEngine, period: f64, windows: usize, seed: u64) -> Result<TemplateBank> {
    let mut bank = TemplateBank::analytic(engine, period)?;
    let outcomes = (0..=engine.max_photons())
        .into_par_iter()
        .map(|n| fock_window_outcomes(engine, &bank, n, windows, seed))
        .collect::<fockwatch::Result<Vec<_>>>()?;
    bank.estimate_covariances(&outcomes)?;
    Ok(bank)
}

// ---------------------------------------------------------------- fluorescence

#[derive(Clone, Debug, Serialize)]
pub struct TraceRow {
    pub n: usize,
    pub t_us: f64,
    /// Mean record over the trajectories.
    pub v_mean: f64,
    /// Demodulated quadratures of the mean record, smoothed.
    pub i_mean: f64,
    pub q_mean: f64,
    /// Same for the exact ensemble mean.
    pub i_model: f64,
    pub q_model: f64,
}

/// Extremum of `I` in one comb period, and the decay after it.
#[derive(Clone, Debug, Serialize)]
pub struct KickRow {
    pub n: usize,
    pub source: String,
    pub period: usize,
    /// First time `|I|` reaches half the period's extremum: the kick arrival.
    pub t_onset_us: f64,
    pub t_peak_us: f64,
    pub i_peak: f64,
    /// Exponential decay rate of `|I|` after the kick (1/μs).
    pub decay_rate: f64,
}

/// Decay rate of the period-folded `I` (periods after the first, sign-aligned).
#[derive(Clone, Debug, Serialize)]
pub struct FoldedDecayRow {
    pub n: usize,
    pub source: String,
    pub periods: usize,
    pub decay_rate: f64,
}

#[derive(Clone, Debug)]
pub struct FluorescenceResult {
    pub period: f64,
    pub traces: Vec<TraceRow>,
    pub kicks: Vec<KickRow>,
    pub folded: Vec<FoldedDecayRow>,
}

fn moving_average(x: &[f64], width: usize) -> Vec<f64> {
    if width <= 1 {
        return x.to_vec();
    }
    let half = width / 2;
    let mut prefix = vec![0.0; x.len() + 1];
    for (j, v) in x.iter().enumerate() {
        prefix[j + 1] = prefix[j] + v;
    }
    (0..x.len())
        .map(|j| {
            let lo = j.saturating_sub(half);
            let hi = (j + width - half).min(x.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kick {
    pub period: usize,
    pub t_onset: f64,
    pub t_peak: f64,
    pub peak: f64,
    pub rate: f64,
}

/// Log-linear decay rate of `|seg|` from `first` to `last`, using samples with the
/// sign of `peak`. Weighted by `seg²`, since additive noise on `seg` puts variance
/// `σ²/seg²` on its logarithm.
fn decay_rate(seg: &[f64], peak: f64, first: usize, last: usize, dt: f64) -> f64 {
    let pts: Vec<(f64, f64, f64)> = (first..=last.min(seg.len() - 1))
        .filter(|&j| seg[j] * peak > 0.0)
        .map(|j| (j as f64 * dt, seg[j].abs().ln(), seg[j] * seg[j]))
        .collect();
    if pts.len() < 3 {
        return f64::NAN;
    }
    let w: f64 = pts.iter().map(|p| p.2).sum();
    let mt = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / w;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / w;
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mt).powi(2)).sum();
    -sxy / sxx
}

fn extremum(seg: &[f64]) -> (usize, f64) {
    let (j, &v) = seg.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).expect("non-empty period");
    (j, v)
}

/// Per-period kick of `i`: half-maximum arrival, extremum, and the decay of `|i|`
/// from one kick width after the extremum to `fit_span` later.
pub fn kick_analysis(i: &[f64], dt: f64, steps_per_period: usize, kick_width: f64, fit_span: f64) -> Vec<Kick> {
    let skip = (kick_width / dt).ceil() as usize;
    let span = (fit_span / dt).round() as usize;
    i.chunks_exact(steps_per_period)
        .enumerate()
        .map(|(l, seg)| {
            let (jp, peak) = extremum(seg);
            let onset = seg[..=jp].iter().position(|v| v * peak >= 0.5 * peak * peak).unwrap_or(jp);
            Kick {
                period: l,
                t_onset: (l * steps_per_period + onset) as f64 * dt,
                t_peak: (l * steps_per_period + jp) as f64 * dt,
                peak,
                rate: decay_rate(seg, peak, jp + skip, jp + span, dt),
            }
        })
        .collect()
}

/// Decay rate of the average period, skipping the first; with `alternate` every
/// other period is negated first so alternating kicks add up.
pub fn folded_decay(i: &[f64], dt: f64, steps_per_period: usize, kick_width: f64, fit_span: f64, alternate: bool) -> f64 {
    let periods: Vec<&[f64]> = i.chunks_exact(steps_per_period).skip(1).collect();
    if periods.is_empty() {
        return f64::NAN;
    }
    let mut fold = vec![0.0; steps_per_period];
    for (l, seg) in periods.iter().enumerate() {
        let s = if alternate && l % 2 == 1 { -1.0 } else { 1.0 };
        for (f, v) in fold.iter_mut().zip(seg.iter()) {
            *f += s * v / periods.len() as f64;
        }
    }
    let (jp, peak) = extremum(&fold);
    decay_rate(&fold, peak, jp + (kick_width / dt).ceil() as usize, jp + (fit_span / dt).round() as usize, dt)
}

pub fn fock_fluorescence(config: &RunConfig, out: &mut OutputSet) -> Result<FluorescenceResult> {
    let p = &config.params;
    let f = &config.fock_fluorescence;
    let spec = config.comb.spec(p, config.comb.theta(), f.periods)?;
    let period = spec.period();
    let kick_width = period / config.comb.teeth() as f64;
    let per_n = out.timed("fluorescence", |_| {
        f.photon_numbers
            .iter()
            .map(|&n| {
                let engine = QubitEngine::new(p, &spec, 1.0, n)?;
                let len = engine.window_steps();
                let model = engine.mean_record(n, 0, len);
                let seed = rng::derive_seed(config.seed, &format!("fluorescence-{n}"));
                let mean = ensemble_mean_record(p, &spec, n, EnsembleMode::Stochastic { n_traj: f.trajectories, seed })?;
                let qm = demodulate_quadratures(&model, spec.sample_dt, 0.0, n, p, period, None)?;
                let qs = demodulate_quadratures(&mean, spec.sample_dt, 0.0, n, p, period, Some(qm.phi))?;
                let (i_s, q_s) = (moving_average(&qs.i, f.smoothing_samples), moving_average(&qs.q, f.smoothing_samples));
                Ok((n, mean, i_s, q_s, qm))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut traces = Vec::new();
    let mut kicks = Vec::new();
    let mut folded = Vec::new();
    let steps = spec.steps_per_period();
    for (n, mean, i_s, q_s, qm) in &per_n {
        for j in 0..mean.len() {
            traces.push(TraceRow {
                n: *n,
                t_us: (j as f64 + 0.5) * spec.sample_dt,
                v_mean: mean[j],
                i_mean: i_s[j],
                q_mean: q_s[j],
                i_model: qm.i[j],
                q_model: qm.q[j],
            });
        }
        for (source, series) in [("mean", i_s), ("model", &qm.i)] {
            for k in kick_analysis(series, spec.sample_dt, steps, kick_width, 2.0 * p.t_q) {
                kicks.push(KickRow {
                    n: *n,
                    source: source.into(),
                    period: k.period,
                    t_onset_us: k.t_onset,
                    t_peak_us: k.t_peak,
                    i_peak: k.peak,
                    decay_rate: k.rate,
                });
            }
            folded.push(FoldedDecayRow {
                n: *n,
                source: source.into(),
                periods: f.periods.saturating_sub(1),
                decay_rate: folded_decay(series, spec.sample_dt, steps, kick_width, 2.0 * p.t_q, n % 2 == 1),
            });
        }
    }
    out.csv("fluorescence.csv", &traces)?;
    out.csv("fluorescence_kicks.csv", &kicks)?;
    out.csv("fluorescence_decay.csv", &folded)?;
    Ok(FluorescenceResult { period, traces, kicks, folded })
}

// ---------------------------------------------------------------- jump tracking

#[derive(Clone, Debug, Serialize)]
pub struct RecordScoreRow {
    pub record: usize,
    pub initial_n: usize,
    pub jumps: usize,
    pub windows_scored: usize,
    pub windows_matched: usize,
    pub jumps_scored: usize,
    pub jumps_localized: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct JumpRow {
    pub record: usize,
    pub jump: usize,
    pub t_us: f64,
    pub n_before: usize,
}

#[derive(Clone, Debug)]
pub struct TrackedRecord {
    pub truth: JumpTruth,
    pub outcomes: Vec<OutcomeVector>,
    pub path: Vec<usize>,
    pub score: TrackingScore,
}

#[derive(Clone, Debug)]
pub struct JumpTrackResult {
    pub tau: f64,
    pub total: TrackingScore,
    pub records: Vec<TrackedRecord>,
}

pub fn jump_track(config: &RunConfig, out: &mut OutputSet) -> Result<JumpTrackResult> {
    let p = &config.params;
    let j = &config.jump_track;
    let spec = config.comb.window_spec(p)?;
    let tracker = QubitEngine::new(p, &spec, 1.0, p.n_max)?;
    let bank = out.timed("jump-track calibration", |_| calibrate(&tracker, spec.period(), j.calibration_windows, rng::derive_seed(config.seed, "jump-calibration")))?;
    let model = LikelihoodModel::from_bank(&bank)?;
    let engine = QubitEngine::new(p, &spec, 1.0, j.cutoff)?;
    let pops = poisson_populations(j.nbar, j.cutoff);
    let tau = bank.tau;
    let w = engine.window_steps();
    let skip = config.tolerance("tracking_skip_windows") * tau;
    let tolerance = config.tolerance("tracking_jump_windows") * tau;
    let noise_seed = rng::derive_seed(config.seed, "jump-noise");
    let records = out.timed("jump-track records", |_| {
        (0..j.records)
            .into_par_iter()
            .map(|i| {
                let truth = sample_jump_truth(&pops, p.t_c, j.windows as f64 * tau, &mut rng::stream(config.seed, "jump-truth", i as u64))?;
                let mut filter = MatchedFilter::new(&bank);
                let mut outcomes = Vec::with_capacity(j.windows);
                run_jump_record(&engine, &truth, j.windows * w, noise_seed, i as u64, |_, v| outcomes.extend(filter.push(v)))?;
                let path = viterbi_path(&outcomes, &model, p.t_c, &uniform_prior(model.n_states()))?;
                let score = score_tracking(&path, 0.0, tau, &truth, p.n_max, skip, tolerance);
                Ok(TrackedRecord { truth, outcomes, path, score })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut total = TrackingScore::default();
    for r in &records {
        total.add(&r.score);
    }

    out.csv(
        "jump_scores.csv",
        records.iter().enumerate().map(|(i, r)| RecordScoreRow {
            record: i,
            initial_n: r.truth.initial_n,
            jumps: r.truth.jump_times.len(),
            windows_scored: r.score.windows_scored,
            windows_matched: r.score.windows_matched,
            jumps_scored: r.score.jumps_scored,
            jumps_localized: r.score.jumps_localized,
        }),
    )?;
    out.csv(
        "jump_truth.csv",
        records.iter().enumerate().flat_map(|(i, r)| {
            r.truth.jump_times.iter().enumerate().map(move |(k, &t)| JumpRow { record: i, jump: k, t_us: t, n_before: r.truth.initial_n - k })
        }),
    )?;

    // per-window traces of the first records: normalized outcomes r_n, filtered
    // posterior P_t(n) and the MAP staircase
    let inv = bank.gram_inverse()?;
    let k = model.n_states();
    let mut header = vec!["record".to_string(), "window".into(), "t_us".into(), "true_n".into(), "map_n".into()];
    header.extend((0..k).map(|n| format!("r_{n}")));
    header.extend((0..k).map(|n| format!("p_{n}")));
    let mut rows = Vec::new();
    for (i, r) in records.iter().enumerate().take(j.exported_records) {
        let post = bayes_track(&r.outcomes, &model, Some(p.t_c), &uniform_prior(k))?;
        for (win, o) in r.outcomes.iter().enumerate() {
            let mut row = vec![i.to_string(), win.to_string(), o.t.to_string(), r.truth.photon_number_at(o.t - 0.5 * tau).to_string(), r.path[win].to_string()];
            row.extend(bank.normalize(&inv, &o.m).iter().map(|x| x.to_string()));
            row.extend(post.probabilities[win].iter().map(|x| x.to_string()));
            rows.push(row);
        }
    }
    write_table(out, "jump_traces.csv", &header, &rows)?;
    Ok(JumpTrackResult { tau, total, records })
}

/// CSV with a header decided at run time.
pub fn write_table(out: &mut OutputSet, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Format(e.to_string()))?;
    out.write_bytes(name, &bytes)
}

// ---------------------------------------------------------------- rates

#[derive(Clone, Debug, Serialize)]
pub struct RateRow {
    pub theta: f64,
    pub gamma_m: f64,
    pub gamma_m_stderr: f64,
    pub gamma_m_raw: f64,
    pub bias: f64,
    pub gamma_m_tc: f64,
    pub flagged: bool,
    pub het_eta: f64,
    pub het_eta_stderr: f64,
    pub het_one: f64,
    pub het_one_stderr: f64,
    pub gamma_d_bound: f64,
    pub accessible_rate: f64,
    pub windows: usize,
}

#[derive(Clone, Debug)]
pub struct RatesResult {
    pub rows: Vec<RateRow>,
    pub estimates: Vec<RateEstimate>,
    pub seconds: f64,
}

pub fn rates(config: &RunConfig, out: &mut OutputSet) -> Result<RatesResult> {
    let p = &config.params;
    let r = &config.rates;
    let mc = MonteCarloConfig { samples: r.mc_samples, tolerance: None, max_samples: r.mc_samples };
    let bound_mc = MonteCarloConfig { samples: r.bound_samples, tolerance: None, max_samples: r.bound_samples };
    let start = std::time::Instant::now();
    let mut rows = Vec::new();
    let mut estimates = Vec::new();
    for (idx, &t) in r.thetas_over_pi.iter().enumerate() {
        let theta = t * PI;
        let (row, est) = out.timed(&format!("rates theta={t}pi"), |_| {
            let spec = config.comb.spec(p, theta, config.comb.window_periods)?;
            let engine = QubitEngine::new(p, &spec, 1.0, p.n_max)?;
            let bank = calibrate(&engine, spec.period(), r.windows, rng::derive_seed(config.seed, &format!("rates-windows-{idx}")))?;
            let zero = zero_reference(&bank, &engine, r.windows, rng::derive_seed(config.seed, "rates-zero"))?;
            let est = empirical_measurement_rate(theta, &bank, &zero, &mc, rng::derive_seed(config.seed, &format!("rates-mi-{idx}")))?;
            let het = heterodyne_rate_bound(theta, p.eta, p, &bound_mc, rng::derive_seed(config.seed, &format!("rates-het-{idx}")))?;
            let het1 = heterodyne_rate_bound(theta, 1.0, p, &bound_mc, rng::derive_seed(config.seed, &format!("rates-het1-{idx}")))?;
            let row = RateRow {
                theta,
                gamma_m: est.gamma_m,
                gamma_m_stderr: est.stderr,
                gamma_m_raw: est.raw,
                bias: est.bias,
                gamma_m_tc: est.gamma_m * p.t_c,
                flagged: est.flagged,
                het_eta: het.rate,
                het_eta_stderr: het.rate_stderr,
                het_one: het1.rate,
                het_one_stderr: het1.rate_stderr,
                gamma_d_bound: dephasing_rate_bound(theta, p),
                accessible_rate: accessible_information_rate(theta, p),
                windows: r.windows,
            };
            Ok((row, est))
        })?;
        rows.push(row);
        estimates.push(est);
    }
    out.csv("rates.csv", &rows)?;
    Ok(RatesResult { rows, estimates, seconds: start.elapsed().as_secs_f64() })
}

/// Zero-drive reference: white-noise windows filtered with `bank`'s templates.
/// The noise streams depend only on the photon-number index, not on the bank.
pub fn zero_reference(bank: &TemplateBank, engine: &QubitEngine, windows: usize, seed: u64) -> Result<TemplateBank> {
    let len = bank.window_len();
    let outcomes = (0..bank.dim())
        .into_par_iter()
        .map(|n| {
            let mut r = rng::stream(seed, "zero-drive", n as u64);
            (0..windows).map(|_| bank.filter_window(&white_noise_record(len, engine.dt(), engine.gain(), &mut r))).collect()
        })
        .collect::<fockwatch::Result<Vec<Vec<Vec<f64>>>>>()?;
    Ok(bank.zero_signal_reference_from_outcomes(&outcomes)?)
}

// ---------------------------------------------------------------- dephasing

#[derive(Clone, Debug, Serialize)]
pub struct DephasingRow {
    pub theta: f64,
    pub gamma_d: f64,
    pub gamma_d_bound: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub coherence_r2: f64,
    pub photon_r2: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SeriesRow {
    pub theta: f64,
    pub t_us: f64,
    pub coherence: f64,
    pub mean_photons: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CurveRow {
    pub theta: f64,
    pub gamma_d_bound: f64,
    pub accessible_rate: f64,
    pub het_one: f64,
    pub het_one_stderr: f64,
    pub het_eta: f64,
    pub het_eta_stderr: f64,
}

#[derive(Clone, Debug)]
pub struct DephasingResult {
    pub rows: Vec<DephasingRow>,
    pub extractions: Vec<DephasingExtraction>,
    pub curves: Vec<CurveRow>,
}

/// Sampling instants for kick angle `theta`: enough periods for the coherence to
/// fall by about e^-2.5 at the bound's rate, within `max_periods`.
pub fn dephasing_periods(params: &SystemParams, theta: f64, max_periods: usize) -> Vec<usize> {
    let bound = dephasing_rate_bound(theta, params);
    let horizon = if bound > 0.0 { (2.5 / (bound * params.comb_period())).ceil() as usize } else { max_periods };
    let last = horizon.clamp(10.min(max_periods), max_periods);
    uneven_periods(10.min(last), last, 15)
}

pub fn dephasing(config: &RunConfig, out: &mut OutputSet) -> Result<DephasingResult> {
    let p = &config.params;
    let d = &config.dephasing;
    let extractions = out.timed("dephasing simulation", |_| {
        d.thetas_over_pi
            .par_iter()
            .map(|&t| {
                let theta = t * PI;
                let base = DephasingConfig::measurement_only(theta, dephasing_periods(p, theta, d.max_periods));
                let cfg = DephasingConfig { cavity_loss: d.cavity_channels, cavity_dephasing: d.cavity_channels, kerr: d.cavity_channels, ..base };
                let series = simulate_dephasing(p, &cfg)?;
                let pure = if d.cavity_channels { p.t_c_phi } else { f64::INFINITY };
                Ok(dephasing_extraction(&series.times, &series.states, pure)?)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let rows: Vec<DephasingRow> = d
        .thetas_over_pi
        .iter()
        .zip(&extractions)
        .map(|(&t, ex)| DephasingRow {
            theta: t * PI,
            gamma_d: ex.gamma_d,
            gamma_d_bound: dephasing_rate_bound(t * PI, p),
            gamma: ex.gamma,
            kappa: ex.kappa,
            coherence_r2: ex.coherence_fit.r_squared,
            photon_r2: ex.photon_fit.r_squared,
            flagged: ex.flagged,
        })
        .collect();
    let mc = MonteCarloConfig { samples: d.bound_samples, tolerance: None, max_samples: d.bound_samples };
    let curves = out.timed("rate curves", |_| {
        (0..d.curve_points)
            .into_par_iter()
            .map(|j| {
                let theta = 2.0 * PI * j as f64 / (d.curve_points - 1) as f64;
                let one = heterodyne_rate_bound(theta, 1.0, p, &mc, rng::derive_seed(config.seed, &format!("curve-het1-{j}")))?;
                let eta = heterodyne_rate_bound(theta, p.eta, p, &mc, rng::derive_seed(config.seed, &format!("curve-het-{j}")))?;
                Ok(CurveRow {
                    theta,
                    gamma_d_bound: dephasing_rate_bound(theta, p),
                    accessible_rate: accessible_information_rate(theta, p),
                    het_one: one.rate,
                    het_one_stderr: one.rate_stderr,
                    het_eta: eta.rate,
                    het_eta_stderr: eta.rate_stderr,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    out.csv("dephasing.csv", &rows)?;
    out.csv(
        "dephasing_series.csv",
        rows.iter().zip(&extractions).flat_map(|(r, ex)| {
            (0..ex.times.len()).map(move |k| SeriesRow { theta: r.theta, t_us: ex.times[k], coherence: ex.coherence[k], mean_photons: ex.mean_photons[k] })
        }),
    )?;
    out.csv("rate_curves.csv", &curves)?;
    Ok(DephasingResult { rows, extractions, curves })
}

// ---------------------------------------------------------------- confidence time

#[derive(Clone, Debug, Serialize)]
pub struct ConfidenceRow {
    pub level: f64,
    pub nbar: f64,
    pub mean_time_us: f64,
    pub stderr_us: f64,
    pub reached: usize,
    pub censored: usize,
}

#[derive(Clone, Debug)]
pub struct ConfidenceResult {
    pub groups: Vec<(f64, Vec<ConfidenceGroup>)>,
}

impl ConfidenceResult {
    pub fn at(&self, level: f64) -> Option<&[ConfidenceGroup]> {
        self.groups.iter().find(|(x, _)| (x - level).abs() < 1e-12).map(|(_, g)| g.as_slice())
    }
}

pub fn confidence(config: &RunConfig, out: &mut OutputSet) -> Result<ConfidenceResult> {
    let p = &config.params;
    let c = &config.confidence_time;
    let spec = config.comb.window_spec(p)?;
    let engine = QubitEngine::new(p, &spec, 1.0, p.n_max)?;
    let bank = out.timed("confidence calibration", |_| calibrate(&engine, spec.period(), c.calibration_windows, rng::derive_seed(config.seed, "confidence-calibration")))?;
    let model = LikelihoodModel::from_bank(&bank)?;
    let w = engine.window_steps();
    let tau = bank.tau;
    let noise_seed = rng::derive_seed(config.seed, "confidence-noise");
    let groups = out.timed("confidence records", |_| {
        c.nbars
            .iter()
            .enumerate()
            .map(|(g, &nbar)| {
                let pops = poisson_populations(nbar, p.n_max);
                let records = (0..config.n_trajectories)
                    .into_par_iter()
                    .map(|i| {
                        let index = (g * config.n_trajectories + i) as u64;
                        let truth = sample_jump_truth(&pops, p.t_c, c.windows as f64 * tau, &mut rng::stream(config.seed, "confidence-truth", index))?;
                        let mut filter = MatchedFilter::new(&bank);
                        let mut outcomes = Vec::with_capacity(c.windows);
                        run_jump_record(&engine, &truth, c.windows * w, noise_seed, index, |_, v| outcomes.extend(filter.push(v)))?;
                        Ok(outcomes)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((nbar, records))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut result = Vec::new();
    let mut rows = Vec::new();
    for &x in &c.levels {
        let per_group = confidence_time(&groups, &model, x)?;
        for gr in &per_group {
            rows.push(ConfidenceRow { level: x, nbar: gr.nbar, mean_time_us: gr.mean_time, stderr_us: gr.stderr, reached: gr.reached, censored: gr.censored });
        }
        result.push((x, per_group));
    }
    out.csv("confidence_time.csv", &rows)?;
    Ok(ConfidenceResult { groups: result })
}
