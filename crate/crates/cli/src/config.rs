//! Run configuration: TOML text over a preset, with a full error list.
//!
//! Every key in the file must exist in the preset; values replace the preset's.
//! `validate_config` reports all problems at once rather than the first one.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;

use fockwatch::drive::{omega_for_kick_angle, CombSpec};
use fockwatch::dynamics::SystemParams;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use toml::Value;

pub const SCHEMA_VERSION: u32 = 1;

pub const ENV_SEED: &str = "FOCKWATCH_SEED";
pub const ENV_WORKERS: &str = "FOCKWATCH_WORKERS";
pub const ENV_OUTPUT_DIR: &str = "FOCKWATCH_OUTPUT_DIR";
pub const ENV_PRESET: &str = "FOCKWATCH_PRESET";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Reference device parameters and full sample sizes.
    Paper,
    /// Reference device parameters with small sample sizes, for smoke runs.
    Fast,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Paper => "paper",
            Preset::Fast => "fast",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "paper" => Some(Preset::Paper),
            "fast" => Some(Preset::Fast),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    FockFluorescence,
    JumpTrack,
    Rates,
    Dephasing,
    ConfidenceTime,
}

impl Experiment {
    pub const ALL: [Experiment; 5] =
        [Experiment::FockFluorescence, Experiment::JumpTrack, Experiment::Rates, Experiment::Dephasing, Experiment::ConfidenceTime];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::FockFluorescence => "fock-fluorescence",
            Experiment::JumpTrack => "jump-track",
            Experiment::Rates => "rates",
            Experiment::Dephasing => "dephasing",
            Experiment::ConfidenceTime => "confidence-time",
        }
    }
}

/// Comb drive, in units of the dispersive shift so that it follows `params.chi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombConfig {
    /// Kick angle per period, in units of π.
    pub theta_over_pi: f64,
    /// The comb has `2k + 1` teeth.
    pub k: usize,
    /// Tooth spacing Δω / χ.
    pub spacing_over_chi: f64,
    /// Envelope carrier / χ, relative to the zero-photon qubit.
    pub center_over_chi: f64,
    /// Detector window, in comb periods.
    pub window_periods: usize,
    pub steps_per_period: usize,
}

impl CombConfig {
    pub fn theta(&self) -> f64 {
        self.theta_over_pi * PI
    }

    pub fn period(&self, params: &SystemParams) -> f64 {
        2.0 * PI / (self.spacing_over_chi * params.chi)
    }

    /// Comb spec at kick angle `theta` lasting `periods` comb periods.
    pub fn spec(&self, params: &SystemParams, theta: f64, periods: usize) -> fockwatch::Result<CombSpec> {
        let delta = self.spacing_over_chi * params.chi;
        let period = 2.0 * PI / delta;
        CombSpec::new(
            omega_for_kick_angle(theta, delta),
            delta,
            self.k,
            self.center_over_chi * params.chi,
            periods as f64 * period,
            period / self.steps_per_period as f64,
        )
    }

    /// One detector window at the configured kick angle.
    pub fn window_spec(&self, params: &SystemParams) -> fockwatch::Result<CombSpec> {
        self.spec(params, self.theta(), self.window_periods)
    }

    pub fn teeth(&self) -> usize {
        2 * self.k + 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluorescenceConfig {
    pub photon_numbers: Vec<usize>,
    /// Records averaged per photon number.
    pub trajectories: usize,
    /// Record length in comb periods.
    pub periods: usize,
    /// Moving-average width applied to the demodulated quadratures of the
    /// trajectory mean (samples; 1 disables).
    pub smoothing_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpTrackConfig {
    /// Mean of the initial Poisson photon distribution.
    pub nbar: f64,
    /// Largest initial photon number (the Poisson tail above is dropped).
    pub cutoff: usize,
    pub records: usize,
    /// Windows per record.
    pub windows: usize,
    /// Windows per photon number behind the outcome covariances.
    pub calibration_windows: usize,
    /// Records whose per-window outcomes and posteriors are written out.
    pub exported_records: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub thetas_over_pi: Vec<f64>,
    /// Windows per photon number and kick angle.
    pub windows: usize,
    /// Monte Carlo samples per information estimate.
    pub mc_samples: usize,
    /// Monte Carlo samples per heterodyne bound.
    pub bound_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DephasingSection {
    pub thetas_over_pi: Vec<f64>,
    /// Longest simulation, in comb periods; shorter where the dephasing is fast.
    pub max_periods: usize,
    /// Include cavity loss, cavity dephasing and Kerr in the simulation.
    pub cavity_channels: bool,
    /// Kick angles on the theory curves (uniform on [0, 2π]).
    pub curve_points: usize,
    pub bound_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfidenceConfig {
    /// Initial Poisson means, one group of `n_trajectories` records each.
    pub nbars: Vec<f64>,
    pub windows: usize,
    pub calibration_windows: usize,
    /// Confidence levels x for τ(x).
    pub levels: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub preset: Preset,
    pub experiment: Experiment,
    #[serde(serialize_with = "ser_seed", deserialize_with = "de_seed")]
    pub seed: u64,
    /// Worker threads; 0 uses every available core. Never changes results.
    pub workers: usize,
    /// Heterodyne trajectories per angle in the SME check, and records per group
    /// in the confidence-time experiment.
    pub n_trajectories: usize,
    pub output_dir: PathBuf,
    pub params: SystemParams,
    pub comb: CombConfig,
    pub fock_fluorescence: FluorescenceConfig,
    pub jump_track: JumpTrackConfig,
    pub rates: RatesConfig,
    pub dephasing: DephasingSection,
    pub confidence_time: ConfidenceConfig,
    pub tolerances: BTreeMap<String, f64>,
}

// TOML integers are signed 64-bit; larger seeds travel as strings.
fn ser_seed<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
    match i64::try_from(*seed) {
        Ok(v) => s.serialize_i64(v),
        Err(_) => s.serialize_str(&seed.to_string()),
    }
}

fn de_seed<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(i64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Int(v) => u64::try_from(v).map_err(serde::de::Error::custom),
        Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
    }
}

fn parse_seed(v: &Value) -> Result<u64, String> {
    match v {
        Value::Integer(i) => u64::try_from(*i).map_err(|_| format!("must be a non-negative integer, got {i}")),
        Value::String(s) => s.parse().map_err(|_| format!("must be an unsigned 64-bit integer, got {s:?}")),
        other => Err(format!("must be an integer, got {}", other.type_str())),
    }
}

/// Acceptance thresholds, by name.
pub fn default_tolerances() -> BTreeMap<String, f64> {
    [
        ("sanity_trace_rate", 1e-9),
        ("sanity_hermiticity", 1e-10),
        ("sanity_positivity", 1e-9),
        ("sanity_seconds", 10.0),
        ("sme_sigma", 3.0),
        ("sme_inside_fraction", 0.99),
        ("sme_sigma_max", 5.0),
        ("sme_seconds", 300.0),
        ("fluorescence_decay_rel", 0.2),
        ("fluorescence_period_rel", 0.1),
        ("dephasing_bound_rel", 0.15),
        ("dephasing_peak_theta", PI / 8.0),
        ("rate_bound_rel", 0.2),
        ("rate_peak_theta", PI / 8.0),
        ("rate_peak_tc", 10.0),
        ("rate_seconds", 1800.0),
        ("ordering_mc_sigma", 3.0),
        ("ordering_ratio", 2.0),
        ("tracking_window_fraction", 0.9),
        ("tracking_jump_fraction", 0.9),
        ("tracking_skip_windows", 3.0),
        ("tracking_jump_windows", 2.0),
        ("confidence_level", 0.95),
        ("confidence_time_min", 10.0),
        ("confidence_time_max", 40.0),
        ("confidence_rank", 0.9),
        ("oracle_accessible", 1e-4),
        ("oracle_entropy", 1e-3),
        ("oracle_decay", 1e-10),
        ("oracle_noise_rel", 0.02),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

impl RunConfig {
    /// Defaults of `preset`; the seed is a placeholder that validation insists on replacing.
    pub fn preset(preset: Preset) -> Self {
        let paper = Self {
            schema_version: SCHEMA_VERSION,
            preset,
            experiment: Experiment::FockFluorescence,
            seed: 0,
            workers: 0,
            n_trajectories: 2000,
            output_dir: PathBuf::from("out"),
            params: SystemParams::paper(),
            comb: CombConfig {
                theta_over_pi: 0.5,
                k: 10,
                spacing_over_chi: 2.0,
                center_over_chi: -4.0,
                window_periods: 21,
                steps_per_period: fockwatch::drive::STEPS_PER_PERIOD,
            },
            fock_fluorescence: FluorescenceConfig { photon_numbers: vec![0, 1, 2, 3, 4], trajectories: 10_000, periods: 21, smoothing_samples: 16 },
            jump_track: JumpTrackConfig { nbar: 20.0, cutoff: 45, records: 100, windows: 400, calibration_windows: 2000, exported_records: 3 },
            rates: RatesConfig { thetas_over_pi: (1..=8).map(|j| j as f64 / 4.0).collect(), windows: 10_000, mc_samples: 40_000, bound_samples: 200_000 },
            dephasing: DephasingSection {
                thetas_over_pi: (1..=16).map(|j| j as f64 / 8.0).collect(),
                max_periods: 400,
                cavity_channels: false,
                curve_points: 65,
                bound_samples: 100_000,
            },
            confidence_time: ConfidenceConfig {
                nbars: vec![0.5, 1.5, 2.5, 3.5, 4.5, 5.5],
                windows: 30,
                calibration_windows: 2000,
                levels: vec![0.7, 0.8, 0.9, 0.95],
            },
            tolerances: default_tolerances(),
        };
        match preset {
            Preset::Paper => paper,
            Preset::Fast => Self {
                n_trajectories: 200,
                fock_fluorescence: FluorescenceConfig { trajectories: 200, periods: 4, ..paper.fock_fluorescence.clone() },
                jump_track: JumpTrackConfig { records: 4, windows: 80, calibration_windows: 300, exported_records: 1, ..paper.jump_track.clone() },
                rates: RatesConfig { thetas_over_pi: vec![0.25, 0.5, 1.0], windows: 300, mc_samples: 4000, bound_samples: 20_000 },
                dephasing: DephasingSection {
                    thetas_over_pi: vec![0.25, 0.5, 1.0],
                    max_periods: 40,
                    curve_points: 9,
                    bound_samples: 20_000,
                    ..paper.dephasing.clone()
                },
                confidence_time: ConfidenceConfig { nbars: vec![1.0, 3.0], windows: 12, calibration_windows: 300, ..paper.confidence_time.clone() },
                ..paper
            },
        }
    }

    /// Canonical TOML text; validating it gives back an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn tolerance(&self, name: &str) -> f64 {
        match self.tolerances.get(name) {
            Some(v) => *v,
            None => default_tolerances()[name],
        }
    }

    /// Threads for the worker pool.
    pub fn worker_count(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }

    /// Every semantic problem, as (field, reason).
    pub fn violations(&self) -> Vec<ConfigError> {
        let mut out = Vec::new();
        let mut err = |field: &str, msg: String| out.push(ConfigError { field: field.to_string(), message: msg });
        if self.schema_version != SCHEMA_VERSION {
            err("schema_version", format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version));
        }
        for (name, reason) in self.params.violations() {
            err(&format!("params.{name}"), reason);
        }
        if self.n_trajectories < 2 {
            err("n_trajectories", format!("must be at least 2, got {}", self.n_trajectories));
        }

        let c = &self.comb;
        if !(c.theta_over_pi.is_finite() && (0.0..=2.0).contains(&c.theta_over_pi)) {
            err("comb.theta_over_pi", format!("must lie in [0, 2], got {}", c.theta_over_pi));
        }
        if c.k == 0 {
            err("comb.k", "must be at least 1".into());
        }
        let spacing_ok = c.spacing_over_chi.is_finite() && c.spacing_over_chi > 0.0;
        if !spacing_ok {
            err("comb.spacing_over_chi", format!("must be positive, got {}", c.spacing_over_chi));
        } else {
            // the envelope must repeat every period for per-period propagators
            let turns = c.center_over_chi / c.spacing_over_chi;
            if !turns.is_finite() || (turns - turns.round()).abs() > 1e-9 {
                err("comb.center_over_chi", format!("must be a multiple of spacing_over_chi = {}, got {}", c.spacing_over_chi, c.center_over_chi));
            }
        }
        if c.window_periods == 0 {
            err("comb.window_periods", "must be at least 1".into());
        }
        if c.steps_per_period < 8 {
            err("comb.steps_per_period", format!("must be at least 8, got {}", c.steps_per_period));
        }
        if spacing_ok && c.steps_per_period > 0 && self.params.chi > 0.0 && self.params.omega_if > 0.0 {
            let dt = c.period(&self.params) / c.steps_per_period as f64;
            let band = self.params.omega_if + self.params.n_max as f64 * self.params.chi;
            if band >= PI / dt {
                err("comb.steps_per_period", format!("sampling Nyquist {:.1} rad/us is below the signal band {band:.1} rad/us", PI / dt));
            }
        }

        let f = &self.fock_fluorescence;
        if f.photon_numbers.is_empty() {
            err("fock_fluorescence.photon_numbers", "must not be empty".into());
        }
        if let Some(n) = f.photon_numbers.iter().find(|&&n| n > self.params.n_max) {
            err("fock_fluorescence.photon_numbers", format!("{n} exceeds params.n_max = {}", self.params.n_max));
        }
        if f.trajectories < 2 {
            err("fock_fluorescence.trajectories", format!("must be at least 2, got {}", f.trajectories));
        }
        if f.periods < 2 {
            err("fock_fluorescence.periods", format!("must be at least 2, got {}", f.periods));
        }
        if f.smoothing_samples == 0 {
            err("fock_fluorescence.smoothing_samples", "must be at least 1".into());
        }

        let j = &self.jump_track;
        if !(j.nbar.is_finite() && j.nbar > 0.0) {
            err("jump_track.nbar", format!("must be positive, got {}", j.nbar));
        }
        if j.cutoff < self.params.n_max {
            err("jump_track.cutoff", format!("must be >= params.n_max = {}, got {}", self.params.n_max, j.cutoff));
        }
        for (name, v, min) in [("records", j.records, 1), ("windows", j.windows, 1), ("calibration_windows", j.calibration_windows, 2)] {
            if v < min {
                err(&format!("jump_track.{name}"), format!("must be at least {min}, got {v}"));
            }
        }
        if j.exported_records > j.records {
            err("jump_track.exported_records", format!("must not exceed records = {}, got {}", j.records, j.exported_records));
        }

        let r = &self.rates;
        check_thetas(&mut err, "rates.thetas_over_pi", &r.thetas_over_pi);
        if r.windows < 2 {
            err("rates.windows", format!("must be at least 2, got {}", r.windows));
        }
        for (name, v) in [("mc_samples", r.mc_samples), ("bound_samples", r.bound_samples)] {
            if v < 100 {
                err(&format!("rates.{name}"), format!("must be at least 100, got {v}"));
            }
        }

        let d = &self.dephasing;
        check_thetas(&mut err, "dephasing.thetas_over_pi", &d.thetas_over_pi);
        if d.max_periods < 4 {
            err("dephasing.max_periods", format!("must be at least 4, got {}", d.max_periods));
        }
        if d.curve_points < 2 {
            err("dephasing.curve_points", format!("must be at least 2, got {}", d.curve_points));
        }
        if d.bound_samples < 100 {
            err("dephasing.bound_samples", format!("must be at least 100, got {}", d.bound_samples));
        }

        let k = &self.confidence_time;
        if k.nbars.is_empty() || k.nbars.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            err("confidence_time.nbars", format!("must be a non-empty list of positive means, got {:?}", k.nbars));
        }
        if k.windows == 0 {
            err("confidence_time.windows", "must be at least 1".into());
        }
        if k.calibration_windows < 2 {
            err("confidence_time.calibration_windows", format!("must be at least 2, got {}", k.calibration_windows));
        }
        if k.levels.is_empty() || k.levels.iter().any(|x| !(*x > 0.5 && *x < 1.0)) {
            err("confidence_time.levels", format!("must be a non-empty list in (0.5, 1), got {:?}", k.levels));
        }

        for (name, v) in &self.tolerances {
            if !(v.is_finite() && *v > 0.0) {
                err(&format!("tolerances.{name}"), format!("must be positive, got {v}"));
            }
        }
        out
    }
}

fn check_thetas(err: &mut impl FnMut(&str, String), field: &str, thetas: &[f64]) {
    if thetas.is_empty() {
        err(field, "must not be empty".into());
    }
    if let Some(t) = thetas.iter().find(|t| !(t.is_finite() && (0.0..=2.0).contains(*t))) {
        err(field, format!("entries must lie in [0, 2], got {t}"));
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    /// Dotted key path, e.g. `params.eta`.
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl ConfigErrors {
    pub fn fields(&self) -> Vec<&str> {
        self.0.iter().map(|e| e.field.as_str()).collect()
    }
}

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// Values that replace the file's: command-line flags over environment variables.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub preset: Option<Preset>,
}

impl Overrides {
    /// Reads the `FOCKWATCH_*` variables, logging each one found.
    pub fn from_env() -> Result<Self, ConfigErrors> {
        Self::from_vars(|k| std::env::var(k).ok())
    }

    pub fn from_vars(get: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigErrors> {
        let mut out = Self::default();
        let mut errors = Vec::new();
        let mut bad = |var: &str, msg: String| errors.push(ConfigError { field: var.to_string(), message: msg });
        if let Some(v) = get(ENV_SEED) {
            log::info!("environment override {ENV_SEED}={v}");
            match v.trim().parse() {
                Ok(s) => out.seed = Some(s),
                Err(_) => bad(ENV_SEED, format!("must be an unsigned 64-bit integer, got {v:?}")),
            }
        }
        if let Some(v) = get(ENV_WORKERS) {
            log::info!("environment override {ENV_WORKERS}={v}");
            match v.trim().parse() {
                Ok(w) => out.workers = Some(w),
                Err(_) => bad(ENV_WORKERS, format!("must be a non-negative integer, got {v:?}")),
            }
        }
        if let Some(v) = get(ENV_OUTPUT_DIR) {
            log::info!("environment override {ENV_OUTPUT_DIR}={v}");
            out.output_dir = Some(PathBuf::from(v));
        }
        if let Some(v) = get(ENV_PRESET) {
            log::info!("environment override {ENV_PRESET}={v}");
            match Preset::parse(v.trim()) {
                Some(p) => out.preset = Some(p),
                None => bad(ENV_PRESET, format!("must be paper or fast, got {v:?}")),
            }
        }
        if errors.is_empty() {
            Ok(out)
        } else {
            Err(ConfigErrors(errors))
        }
    }

    /// `self` where set, else `fallback`.
    pub fn or(self, fallback: Overrides) -> Overrides {
        Overrides {
            seed: self.seed.or(fallback.seed),
            workers: self.workers.or(fallback.workers),
            output_dir: self.output_dir.or(fallback.output_dir),
            preset: self.preset.or(fallback.preset),
        }
    }
}

/// Parses and checks `text` with no overrides.
pub fn validate_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    validate_config_with(text, &Overrides::default())
}

/// Parses `text` over its preset's defaults, applies `overrides`, and checks the
/// result. All problems are returned together.
pub fn validate_config_with(text: &str, overrides: &Overrides) -> Result<RunConfig, ConfigErrors> {
    let mut errors = Vec::new();
    let push = |errors: &mut Vec<ConfigError>, field: &str, message: String| errors.push(ConfigError { field: field.to_string(), message });
    let mut user = match text.parse::<toml::Table>() {
        Ok(t) => t,
        Err(e) => {
            return Err(ConfigErrors(vec![ConfigError { field: "<file>".into(), message: e.message().to_string() }]));
        }
    };

    let mut preset = Preset::Paper;
    if let Some(v) = user.remove("preset") {
        match v.as_str().and_then(Preset::parse) {
            Some(p) => preset = p,
            None => push(&mut errors, "preset", format!("unknown preset {v}; expected \"paper\" or \"fast\"")),
        }
    }
    if let Some(p) = overrides.preset {
        preset = p;
    }

    let mut seed = None;
    if let Some(v) = user.remove("seed") {
        match parse_seed(&v) {
            Ok(s) => seed = Some(s),
            Err(m) => push(&mut errors, "seed", m),
        }
    }
    if overrides.seed.is_some() {
        seed = overrides.seed;
    }
    if seed.is_none() && !errors.iter().any(|e| e.field == "seed") {
        push(&mut errors, "seed", "required (no default; set it in the file, with --seed or FOCKWATCH_SEED)".into());
    }

    let defaults = RunConfig::preset(preset);
    let mut merged = Value::try_from(&defaults).expect("defaults convert to TOML");
    merge(&mut merged, Value::Table(user), "", &mut errors);

    let mut config = match merged.try_into::<RunConfig>() {
        Ok(c) => c,
        Err(e) => {
            errors.push(ConfigError { field: "<config>".into(), message: e.message().to_string() });
            return Err(ConfigErrors(errors));
        }
    };
    config.preset = preset;
    config.seed = seed.unwrap_or(0);
    if let Some(w) = overrides.workers {
        config.workers = w;
    }
    if let Some(d) = &overrides.output_dir {
        config.output_dir = d.clone();
    }
    errors.extend(config.violations());
    if errors.is_empty() {
        Ok(config)
    } else {
        Err(ConfigErrors(errors))
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

/// `value` shaped like `like`, with integers widened where floats are expected.
fn conform(like: &Value, value: Value, field: &str, errors: &mut Vec<ConfigError>) -> Option<Value> {
    match (like, value) {
        (Value::Float(_), Value::Integer(i)) => Some(Value::Float(i as f64)),
        (Value::Array(proto), Value::Array(items)) => match proto.first() {
            None => Some(Value::Array(items)),
            Some(p) => {
                let mut out = Vec::with_capacity(items.len());
                let mut ok = true;
                for (i, item) in items.into_iter().enumerate() {
                    match conform(p, item, &format!("{field}[{i}]"), errors) {
                        Some(v) => out.push(v),
                        None => ok = false,
                    }
                }
                ok.then_some(Value::Array(out))
            }
        },
        (l, v) if l.same_type(&v) => Some(v),
        (l, v) => {
            errors.push(ConfigError { field: field.to_string(), message: format!("expected {}, got {}", l.type_str(), v.type_str()) });
            None
        }
    }
}

fn merge(base: &mut Value, user: Value, prefix: &str, errors: &mut Vec<ConfigError>) {
    let (Value::Table(base), Value::Table(user)) = (base, user) else { return };
    for (key, value) in user {
        let field = join(prefix, &key);
        match base.get_mut(&key) {
            None => errors.push(ConfigError { field, message: "unknown key".into() }),
            Some(slot @ Value::Table(_)) => {
                if value.is_table() {
                    merge(slot, value, &field, errors);
                } else {
                    errors.push(ConfigError { field, message: format!("expected a table, got {}", value.type_str()) });
                }
            }
            Some(slot) => {
                if let Some(v) = conform(slot, value, &field, errors) {
                    *slot = v;
                }
            }
        }
    }
}
