//! Infinite-comb model of a single kick: emitted-state overlaps, the dephasing bound,
//! heterodyne outcome distributions and information rates, and the extraction of
//! measurement-induced dephasing from simulated cavity tomography.
//!
//! Information is in nats unless a name says otherwise; rates are per μs.

use std::f64::consts::{LN_2, PI};

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{storage::Owned, DVector, Dyn, OMatrix, Vector2, U2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::drive::{comb_envelope, CombSpec};
use crate::dynamics::SystemParams;
use crate::error::{Error, Result};
use crate::estimation::{stratified_information, MiEstimate, MonteCarloConfig};
use crate::hilbert::{
    fock_prob_from_wigner, wigner_map, DensityMatrix, OperatorMatrix, PhaseGrid, C64, I, ZERO,
};
use crate::rng;

/// Highest Fock level summed when the mean photon number is read off a Wigner map.
pub const WIGNER_PHOTON_CUTOFF: usize = 7;

/// Fits whose coefficient of determination falls below this are flagged.
pub const FIT_QUALITY_THRESHOLD: f64 = 0.98;

/// `⟨φ_n|φ_{n+1}⟩ = cos²(θ/2) + sin²(θ/2)/(1 − iχT_q)`.
pub fn emitted_overlap(theta: f64, chi_tq: f64) -> C64 {
    let (s, c) = (0.5 * theta).sin_cos();
    C64::new(c * c, 0.0) + C64::new(s * s, 0.0) / C64::new(1.0, -chi_tq)
}

/// The pair of field states emitted after one kick for neighbouring photon numbers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmittedStatePair {
    pub theta: f64,
    pub chi_tq: f64,
    pub overlap: C64,
}

impl EmittedStatePair {
    pub fn new(theta: f64, chi_tq: f64) -> Self {
        Self { theta, chi_tq, overlap: emitted_overlap(theta, chi_tq) }
    }
}

/// `Γ_d = −(χ/π) ln|⟨φ_n|φ_{n+1}⟩|`: coherence lost per comb period, as a rate.
pub fn dephasing_rate_bound(theta: f64, params: &SystemParams) -> f64 {
    -emitted_overlap(theta, params.chi * params.t_q).norm().ln() / params.comb_period()
}

/// Binary entropy in nats.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
    term(p) + term(1.0 - p)
}

/// Accessible information (nats) of two equiprobable pure states with `|⟨a|b⟩| = s`.
pub fn accessible_information(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    let p = 0.5 * (1.0 + (1.0 - s * s).sqrt());
    (LN_2 - binary_entropy(p)).max(0.0)
}

/// Accessible information per comb period divided by the period (nats/μs).
pub fn accessible_information_rate(theta: f64, params: &SystemParams) -> f64 {
    accessible_information(emitted_overlap(theta, params.chi * params.t_q).norm()) / params.comb_period()
}

/// Weight `Γ_q/(Γ_q + iΔχ)` with which the outcome demodulated `Δ = k − n` photons
/// away picks up the correctly demodulated one.
pub fn wrong_frequency_weight(delta: i64, chi_tq: f64) -> C64 {
    C64::new(1.0, 0.0) / C64::new(1.0, delta as f64 * chi_tq)
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let sd = (0.5 * variance).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(sd * re, sd * im)
}

fn ln_complex_normal(z: C64, mean: C64, variance: f64) -> f64 {
    -(PI * variance).ln() - (z - mean).norm_sqr() / variance
}

/// Distribution of the outcome `m̃_k` demodulated at `k` when the cavity holds `n` photons,
/// after one kick to `cos(θ/2)|g⟩ + sin(θ/2)|e⟩`.
///
/// `m̃_n = √η α + √(1−η) γ` with `α` drawn from the Husimi function of
/// `cos(θ/2)|0⟩ + sin(θ/2)|1⟩` and `γ` vacuum noise; for `k ≠ n`,
/// `m̃_k = c m̃_n + (1 − c) β_k` with `c` from [`wrong_frequency_weight`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub theta: f64,
    pub eta: f64,
    pub n: usize,
    pub k: usize,
    pub weight: C64,
}

pub fn outcome_distribution_infinite_comb(theta: f64, eta: f64, n: usize, k: usize, params: &SystemParams) -> Result<OutcomeModel> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter { name: "eta", reason: format!("must lie in [0, 1], got {eta}") });
    }
    let weight = wrong_frequency_weight(k as i64 - n as i64, params.chi * params.t_q);
    Ok(OutcomeModel { theta, eta, n, k, weight })
}

/// Bound on `Q(α)/q(α)` for the proposal `q = CN(0, 2)`: `max 2(1+r)² e^{−r²/2} = 8e^{−1/2}`.
const HUSIMI_ENVELOPE: f64 = 4.852_245_277_701_068;

/// One draw from the Husimi function of `cos(θ/2)|0⟩ + sin(θ/2)|1⟩`.
pub fn sample_single_rail_husimi<R: Rng + ?Sized>(theta: f64, rng: &mut R) -> C64 {
    let (s, c) = (0.5 * theta).sin_cos();
    loop {
        let a = complex_normal(rng, 2.0);
        let g = (C64::new(c, 0.0) + a.conj() * s).norm_sqr();
        let accept = 2.0 * (-0.5 * a.norm_sqr()).exp() * g / HUSIMI_ENVELOPE;
        if rng.random::<f64>() < accept {
            return a;
        }
    }
}

impl OutcomeModel {
    /// Overall complex gain from `α` to this outcome.
    fn gain(&self) -> C64 {
        self.weight * self.eta.sqrt()
    }

    pub fn mean(&self) -> C64 {
        let (s, c) = (0.5 * self.theta).sin_cos();
        self.gain() * (s * c)
    }

    /// `E|m̃|²`.
    pub fn second_moment(&self) -> f64 {
        let s = (0.5 * self.theta).sin();
        1.0 + self.gain().norm_sqr() * s * s
    }

    /// Closed-form density on the complex plane.
    ///
    /// With `m̃ = gα + noise` and `|g|² + var(noise) = 1`, conditioning a standard complex
    /// normal `α` on `m̃` gives `Q(m̃) = e^{−|m̃|²}/π · E[|c + s α*|² | m̃]`.
    pub fn density(&self, m: C64) -> f64 {
        let (s, c) = (0.5 * self.theta).sin_cos();
        let g = self.gain();
        let g2 = g.norm_sqr();
        let poly = c * c + 2.0 * c * s * (g.conj() * m).re + s * s * (g2 * m.norm_sqr() + 1.0 - g2);
        (-m.norm_sqr()).exp() / PI * poly.max(0.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> C64 {
        let alpha = sample_single_rail_husimi(self.theta, rng);
        let direct = alpha * self.eta.sqrt() + complex_normal(rng, 1.0 - self.eta);
        if self.k == self.n {
            direct
        } else {
            self.weight * direct + (C64::new(1.0, 0.0) - self.weight) * complex_normal(rng, 1.0)
        }
    }
}

/// Joint outcomes `(m̃_q, m̃_{q+1})` under the hypotheses `n = q` (index 0) and `n = q + 1` (index 1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairOutcomeModel {
    direct: OutcomeModel,
    up: C64,
    down: C64,
}

impl PairOutcomeModel {
    pub fn new(theta: f64, eta: f64, params: &SystemParams) -> Result<Self> {
        let direct = outcome_distribution_infinite_comb(theta, eta, 0, 0, params)?;
        let chi_tq = params.chi * params.t_q;
        Ok(Self { direct, up: wrong_frequency_weight(1, chi_tq), down: wrong_frequency_weight(-1, chi_tq) })
    }

    fn split(&self, hypothesis: usize, x: C64, y: C64) -> (C64, C64, C64) {
        if hypothesis == 0 {
            (x, y, self.up)
        } else {
            (y, x, self.down)
        }
    }

    pub fn log_density(&self, hypothesis: usize, x: C64, y: C64) -> f64 {
        let (direct, other, c) = self.split(hypothesis, x, y);
        let noise = (C64::new(1.0, 0.0) - c).norm_sqr();
        self.direct.density(direct).ln() + ln_complex_normal(other, c * direct, noise)
    }

    pub fn sample<R: Rng + ?Sized>(&self, hypothesis: usize, rng: &mut R) -> (C64, C64) {
        let direct = self.direct.sample(rng);
        let c = if hypothesis == 0 { self.up } else { self.down };
        let other = c * direct + (C64::new(1.0, 0.0) - c) * complex_normal(rng, 1.0);
        if hypothesis == 0 {
            (direct, other)
        } else {
            (other, direct)
        }
    }
}

/// Information per comb period together with the corresponding rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InformationRate {
    pub per_period: MiEstimate,
    /// Nats per μs.
    pub rate: f64,
    pub rate_stderr: f64,
}

impl InformationRate {
    pub fn bits_per_period(&self) -> f64 {
        self.per_period.value / LN_2
    }
}

/// Heterodyne measurement rate of the infinite comb: mutual information between
/// `n ∈ {q, q+1}` (equal prior) and `(m̃_q, m̃_{q+1})`, per period, divided by the period.
pub fn heterodyne_rate_bound(theta: f64, eta: f64, params: &SystemParams, mc: &MonteCarloConfig, seed: u64) -> Result<InformationRate> {
    let model = PairOutcomeModel::new(theta, eta, params)?;
    let mut rng = rng::stream(seed, "heterodyne-bound", 0);
    let per_period = stratified_information(&[0.5, 0.5], mc, &mut rng, |h, rng| {
        let (x, y) = model.sample(h, rng);
        let l = [model.log_density(0, x, y), model.log_density(1, x, y)];
        let top = l[0].max(l[1]);
        let mix = top + (0.5 * ((l[0] - top).exp() + (l[1] - top).exp())).ln();
        l[h] - mix
    })?;
    let tau = params.comb_period();
    Ok(InformationRate { per_period, rate: per_period.value / tau, rate_stderr: per_period.stderr / tau })
}

/// `KL(P ‖ 𝒩)` between the correctly demodulated outcome density and the Gaussian with the
/// same mean and covariance, by quadrature on a square grid.
pub fn gaussian_approximation_kl(theta: f64, eta: f64) -> f64 {
    let model = OutcomeModel { theta, eta, n: 0, k: 0, weight: C64::new(1.0, 0.0) };
    let mu = model.mean();
    let half = 0.5 * model.second_moment();
    // E[m̃²] = 0, so the quadratures are uncorrelated
    let var_re = half - mu.re * mu.re;
    let var_im = half;
    let h = 0.02;
    let n = (8.0 / h) as i64;
    let mut kl = 0.0;
    for iy in -n..=n {
        for ix in -n..=n {
            let m = C64::new(ix as f64 * h, iy as f64 * h);
            let p = model.density(m);
            if p <= 0.0 {
                continue;
            }
            let d = m - mu;
            let ln_q = -(2.0 * PI * (var_re * var_im).sqrt()).ln() - 0.5 * (d.re * d.re / var_re + d.im * d.im / var_im);
            kl += p * (p.ln() - ln_q);
        }
    }
    kl * h * h
}

/// Cavity channels switched on in [`simulate_dephasing`] besides the comb-driven qubit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DephasingConfig {
    pub theta: f64,
    /// Initial coherent amplitude of the cavity.
    pub alpha0: C64,
    /// Sampling instants as whole numbers of comb periods, ascending.
    pub periods: Vec<usize>,
    pub cavity_loss: bool,
    pub cavity_dephasing: bool,
    pub kerr: bool,
}

impl DephasingConfig {
    /// Comb-driven qubit only, starting from `⟨a⟩ = −1.11`.
    pub fn measurement_only(theta: f64, periods: Vec<usize>) -> Self {
        Self { theta, alpha0: C64::new(-1.11, 0.0), periods, cavity_loss: false, cavity_dephasing: false, kerr: false }
    }
}

/// Cavity states (qubit traced out) at the requested instants.
#[derive(Clone, Debug)]
pub struct DephasingSeries {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

type Block = [C64; 4];

/// Qubit-cavity master equation with `H = χ a†a |e⟩⟨e| + H_drive (+ Kerr)`, radiative qubit
/// decay and optional cavity loss and dephasing, sampled at whole comb periods.
///
/// Every term except cavity loss is diagonal in the cavity Fock basis, so the density
/// matrix is stored as 2×2 qubit blocks `⟨·,n|ρ|·,m⟩` and integrated with RK4; loss only
/// feeds block `(n, m)` from `(n+1, m+1)`. The result equals the full joint evolution.
pub fn simulate_dephasing(params: &SystemParams, config: &DephasingConfig) -> Result<DephasingSeries> {
    params.validate()?;
    if config.periods.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter { name: "periods", reason: "must be ascending".into() });
    }
    let last = config.periods.last().copied().unwrap_or(0).max(1);
    let spec = CombSpec::for_kick_angle(params, config.theta, last as f64 * params.comb_period())?;
    let dim = params.n_trunc + 1;
    let cavity0 = DensityMatrix::coherent(params.n_trunc, config.alpha0)?;
    let mut blocks: Vec<Block> = (0..dim * dim)
        .map(|idx| [cavity0.op().get(idx / dim, idx % dim), ZERO, ZERO, ZERO])
        .collect();

    let gamma_q = params.gamma_q();
    let kappa = if config.cavity_loss { 1.0 / params.t_c } else { 0.0 };
    let deph = if config.cavity_dephasing && params.t_c_phi.is_finite() { 1.0 / params.t_c_phi } else { 0.0 };
    let kerr = if config.kerr { params.chi_cc } else { 0.0 };
    let energy = |n: usize| -kerr * n as f64 * (n as f64 - 1.0);
    let scalar: Vec<C64> = (0..dim * dim)
        .map(|idx| {
            let (n, m) = (idx / dim, idx % dim);
            let d = n as f64 - m as f64;
            C64::new(-0.5 * kappa * (n + m) as f64 - d * d * deph, -(energy(n) - energy(m)))
        })
        .collect();
    let feed: Vec<f64> = (0..dim * dim)
        .map(|idx| {
            let (n, m) = (idx / dim, idx % dim);
            if n + 1 < dim && m + 1 < dim {
                kappa * (((n + 1) * (m + 1)) as f64).sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let chi = params.chi;

    let rhs = |t: f64, x: &[Block], out: &mut [Block]| {
        let h10 = I * 0.5 * comb_envelope(&spec, t);
        let h01 = h10.conj();
        for n in 0..dim {
            let en = C64::new(n as f64 * chi, 0.0);
            for m in 0..dim {
                let idx = n * dim + m;
                let em = C64::new(m as f64 * chi, 0.0);
                let [a, b, c, d] = x[idx];
                // -i(H_n X - X H_m) with H_k = [[0, h01], [h10, kχ]]
                let mut r = [
                    -I * (h01 * c - b * h10),
                    -I * (h01 * d - a * h01 - b * em),
                    -I * (h10 * a + en * c - d * h10),
                    -I * (h10 * b + en * d - c * h01 - d * em),
                ];
                r[0] += d * gamma_q;
                r[1] -= b * (0.5 * gamma_q);
                r[2] -= c * (0.5 * gamma_q);
                r[3] -= d * gamma_q;
                let s = scalar[idx];
                for (ri, xi) in r.iter_mut().zip(x[idx]) {
                    *ri += s * xi;
                }
                if feed[idx] != 0.0 {
                    let up = x[idx + dim + 1];
                    for (ri, ui) in r.iter_mut().zip(up) {
                        *ri += ui * feed[idx];
                    }
                }
                out[idx] = r;
            }
        }
    };

    let h = spec.sample_dt;
    let steps_per_period = spec.steps_per_period();
    let nb = blocks.len();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![[ZERO; 4]; nb], vec![[ZERO; 4]; nb], vec![[ZERO; 4]; nb], vec![[ZERO; 4]; nb], vec![[ZERO; 4]; nb]);
    let axpy = |base: &[Block], k: &[Block], f: f64, out: &mut [Block]| {
        for ((o, b), kk) in out.iter_mut().zip(base).zip(k) {
            for j in 0..4 {
                o[j] = b[j] + kk[j] * f;
            }
        }
    };

    let mut step = 0usize;
    let mut times = Vec::with_capacity(config.periods.len());
    let mut states = Vec::with_capacity(config.periods.len());
    for &p in &config.periods {
        let target = p * steps_per_period;
        while step < target {
            let t = step as f64 * h;
            rhs(t, &blocks, &mut k1);
            axpy(&blocks, &k1, 0.5 * h, &mut tmp);
            rhs(t + 0.5 * h, &tmp, &mut k2);
            axpy(&blocks, &k2, 0.5 * h, &mut tmp);
            rhs(t + 0.5 * h, &tmp, &mut k3);
            axpy(&blocks, &k3, h, &mut tmp);
            rhs(t + h, &tmp, &mut k4);
            for (i, x) in blocks.iter_mut().enumerate() {
                for j in 0..4 {
                    x[j] += (k1[i][j] + (k2[i][j] + k3[i][j]) * 2.0 + k4[i][j]) * (h / 6.0);
                }
            }
            step += 1;
        }
        let cavity = OperatorMatrix::from_fn(dim, |n, m| {
            let b = blocks[n * dim + m];
            b[0] + b[3]
        });
        times.push(p as f64 * params.comb_period());
        states.push(DensityMatrix::new_unchecked(cavity));
    }
    Ok(DephasingSeries { times, states })
}

/// Least-squares fit of a two-parameter model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveFit {
    pub params: [f64; 2],
    pub residuals: Vec<f64>,
    pub r_squared: f64,
}

impl CurveFit {
    pub fn rms(&self) -> f64 {
        (self.residuals.iter().map(|r| r * r).sum::<f64>() / self.residuals.len().max(1) as f64).sqrt()
    }
}

struct CurveProblem<'a, F> {
    t: &'a [f64],
    y: &'a [f64],
    p: Vector2<f64>,
    model: F,
}

impl<F: Fn(f64, &Vector2<f64>) -> (f64, [f64; 2])> LeastSquaresProblem<f64, Dyn, U2> for CurveProblem<'_, F> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U2>;
    type ParameterStorage = Owned<f64, U2>;

    fn set_params(&mut self, p: &Vector2<f64>) {
        self.p = *p;
    }

    fn params(&self) -> Vector2<f64> {
        self.p
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        Some(DVector::from_iterator(self.t.len(), self.t.iter().zip(self.y).map(|(&t, &y)| (self.model)(t, &self.p).0 - y)))
    }

    fn jacobian(&self) -> Option<OMatrix<f64, Dyn, U2>> {
        Some(OMatrix::<f64, Dyn, U2>::from_fn(self.t.len(), |i, j| (self.model)(self.t[i], &self.p).1[j]))
    }
}

fn r_squared(y: &[f64], residuals: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let scale: f64 = y.iter().map(|v| v * v).sum();
    if ss_tot <= 1e-20 * scale.max(f64::MIN_POSITIVE) {
        // flat data: judge the fit by its absolute residual instead
        return if ss_res <= 1e-16 * scale.max(f64::MIN_POSITIVE) { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}

fn least_squares<F>(t: &[f64], y: &[f64], start: [f64; 2], model: F) -> Result<CurveFit>
where
    F: Fn(f64, &Vector2<f64>) -> (f64, [f64; 2]),
{
    let problem = CurveProblem { t, y, p: Vector2::new(start[0], start[1]), model };
    let (problem, report) = LevenbergMarquardt::new().minimize(problem);
    let p = problem.params();
    let residuals: Vec<f64> = problem.residuals().map(|r| r.iter().copied().collect()).unwrap_or_default();
    if !report.termination.was_successful() || !p.iter().all(|v| v.is_finite()) || residuals.len() != t.len() {
        return Err(Error::FitFailed(format!(
            "{:?} after {} evaluations, objective {:.3e}, parameters [{:.4e}, {:.4e}]",
            report.termination, report.number_of_evaluations, report.objective_function, p[0], p[1]
        )));
    }
    let r_squared = r_squared(y, &residuals);
    Ok(CurveFit { params: [p[0], p[1]], residuals, r_squared })
}

fn check_series(t: &[f64], y: &[f64], min_points: usize) -> Result<()> {
    if t.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: t.len(), found: y.len() });
    }
    if t.len() < min_points {
        return Err(Error::InsufficientSamples(format!("need at least {min_points} points, got {}", t.len())));
    }
    if !t.iter().chain(y).all(|v| v.is_finite()) {
        return Err(Error::InvalidParameter { name: "series", reason: "contains non-finite values".into() });
    }
    Ok(())
}

/// Fits `y = A e^{−rt}`; `params = [A, r]`. Started from the log-linear regression.
pub fn fit_exponential(t: &[f64], y: &[f64]) -> Result<CurveFit> {
    check_series(t, y, 3)?;
    let pts: Vec<(f64, f64)> = t.iter().zip(y).filter(|(_, &v)| v > 0.0).map(|(&a, &b)| (a, b.ln())).collect();
    let start = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let (mt, ml) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
        let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
        let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        [(ml - slope * mt).exp(), -slope]
    } else {
        [y.iter().copied().fold(0.0, f64::max), 0.0]
    };
    least_squares(t, y, start, |t, p| {
        let e = (-p[1] * t).exp();
        (p[0] * e, [e, -p[0] * t * e])
    })
}

/// Decay rates read off a simulated tomography series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DephasingExtraction {
    pub times: Vec<f64>,
    /// `|Tr(aρ)|` at each instant.
    pub coherence: Vec<f64>,
    /// Mean photon number from Wigner overlaps.
    pub mean_photons: Vec<f64>,
    /// Fit of `|Tr(aρ)|`; its rate is `γ`.
    pub coherence_fit: CurveFit,
    /// Fit of `n̄`; its rate is `κ`.
    pub photon_fit: CurveFit,
    pub gamma: f64,
    pub kappa: f64,
    /// `γ − κ/2 − 1/T_cφ`.
    pub gamma_d: f64,
    /// Either fit has `R² < 0.98`.
    pub flagged: bool,
}

/// `Γ_d = γ − κ/2 − 1/T_cφ` from cavity states at `times` (`t_c_phi = ∞` subtracts nothing).
pub fn dephasing_extraction(times: &[f64], states: &[DensityMatrix], t_c_phi: f64) -> Result<DephasingExtraction> {
    if times.len() != states.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), found: states.len() });
    }
    if states.is_empty() {
        return Err(Error::InsufficientSamples("empty tomography series".into()));
    }
    let dim = states[0].dim();
    let a = crate::hilbert::annihilation_op(dim - 1)?;
    let grid = PhaseGrid::covering(dim - 1, 0.1)?;
    let mut coherence = Vec::with_capacity(states.len());
    let mut mean_photons = Vec::with_capacity(states.len());
    for rho in states {
        if rho.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: rho.dim() });
        }
        coherence.push(crate::hilbert::expectation(rho, &a)?.norm());
        let w = wigner_map(rho, &grid);
        mean_photons.push((1..=WIGNER_PHOTON_CUTOFF.min(dim - 1)).map(|k| k as f64 * fock_prob_from_wigner(&w, k)).sum());
    }
    let coherence_fit = fit_exponential(times, &coherence)?;
    let photon_fit = fit_exponential(times, &mean_photons)?;
    let (gamma, kappa) = (coherence_fit.params[1], photon_fit.params[1]);
    let pure = if t_c_phi.is_finite() { 1.0 / t_c_phi } else { 0.0 };
    let flagged = coherence_fit.r_squared < FIT_QUALITY_THRESHOLD || photon_fit.r_squared < FIT_QUALITY_THRESHOLD;
    Ok(DephasingExtraction {
        times: times.to_vec(),
        coherence,
        mean_photons,
        coherence_fit,
        photon_fit,
        gamma,
        kappa,
        gamma_d: gamma - 0.5 * kappa - pure,
        flagged,
    })
}

/// Sampling instants (in periods) for a dephasing run: every period up to `dense`, then
/// geometrically spaced up to `last`.
pub fn uneven_periods(dense: usize, last: usize, count: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..=dense.min(last)).collect();
    if last > dense && count > 0 {
        let (lo, hi) = ((dense.max(1)) as f64, last as f64);
        for j in 1..=count {
            let p = (lo * (hi / lo).powf(j as f64 / count as f64)).round() as usize;
            if p > *out.last().unwrap() {
                out.push(p);
            }
        }
    }
    out
}

/// Simulated measurement-induced dephasing rate at kick angle `theta` (cavity channels off).
pub fn simulated_dephasing_rate(params: &SystemParams, theta: f64, periods: Vec<usize>) -> Result<DephasingExtraction> {
    let series = simulate_dephasing(params, &DephasingConfig::measurement_only(theta, periods))?;
    dephasing_extraction(&series.times, &series.states, f64::INFINITY)
}

/// Fit of `ℙ_t(0) = exp(−n₀ e^{−t/T_c})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VacuumDecayFit {
    pub n0: f64,
    pub t_c: f64,
    pub residuals: Vec<f64>,
    pub r_squared: f64,
}

/// Least-squares fit of the vacuum probability of a decaying coherent state.
pub fn coherent_vacuum_decay_fit(series: &[(f64, f64)]) -> Result<VacuumDecayFit> {
    let t: Vec<f64> = series.iter().map(|p| p.0).collect();
    let y: Vec<f64> = series.iter().map(|p| p.1).collect();
    check_series(&t, &y, 5)?;
    if let Some(bad) = y.iter().find(|&&v| !(v > 0.0 && v <= 1.0)) {
        return Err(Error::InvalidParameter { name: "P0", reason: format!("values must lie in (0, 1], got {bad}") });
    }
    // ln(−ln P) = ln n₀ − t/T_c on the points with P < 1
    let pts: Vec<(f64, f64)> = t.iter().zip(&y).filter(|(_, &v)| v < 1.0 - 1e-12).map(|(&a, &b)| (a, (-b.ln()).ln())).collect();
    if pts.len() < 2 {
        return Err(Error::FitFailed("vacuum probability is 1 at all but one point".into()));
    }
    let n = pts.len() as f64;
    let (mt, ml) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let t_start = if slope < 0.0 { -1.0 / slope } else { t.iter().copied().fold(0.0, f64::max).max(1.0) };
    let start = [(ml - slope * mt).exp(), t_start];
    let fit = least_squares(&t, &y, start, |t, p| {
        let e = (-t / p[1]).exp();
        let v = (-p[0] * e).exp();
        (v, [-e * v, -p[0] * e * t / (p[1] * p[1]) * v])
    })?;
    let [n0, t_c] = fit.params;
    if !(n0 > 0.0 && t_c > 0.0) {
        return Err(Error::FitFailed(format!("unphysical parameters n0 = {n0:.4e}, T_c = {t_c:.4e}, rms residual {:.3e}", fit.rms())));
    }
    Ok(VacuumDecayFit { n0, t_c, residuals: fit.residuals, r_squared: fit.r_squared })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn overlap_examples() {
        assert_abs_diff_eq!(emitted_overlap(0.0, 0.76).re, 1.0, epsilon = 1e-15);
        let o = emitted_overlap(PI, 0.76);
        let expect = C64::new(1.0, 0.0) / C64::new(1.0, -0.76);
        assert_abs_diff_eq!((o - expect).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(o.norm(), 0.796, epsilon = 1e-3);
        assert_abs_diff_eq!(emitted_overlap(2.0, 1e-9).norm(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn dephasing_bound_at_pi() {
        let p = SystemParams::paper();
        assert_eq!(dephasing_rate_bound(0.0, &p), 0.0);
        let g = dephasing_rate_bound(PI, &p);
        assert_abs_diff_eq!(g, p.chi / PI * 0.228, epsilon = 0.02);
        assert!((g - 2.4).abs() < 0.1, "{g}");
    }

    #[test]
    fn accessible_information_limits() {
        assert_eq!(accessible_information(1.0), 0.0);
        assert_abs_diff_eq!(accessible_information(0.0), LN_2, epsilon = 1e-15);
    }

    #[test]
    fn exponential_fit_recovers_parameters() {
        let t: Vec<f64> = (0..20).map(|k| 0.3 * k as f64).collect();
        let y: Vec<f64> = t.iter().map(|&t| 1.7 * (-0.8 * t).exp()).collect();
        let fit = fit_exponential(&t, &y).unwrap();
        assert_abs_diff_eq!(fit.params[0], 1.7, epsilon = 1e-8);
        assert_abs_diff_eq!(fit.params[1], 0.8, epsilon = 1e-8);
        assert!(fit.r_squared > 0.999_999);
        let flat = fit_exponential(&t, &vec![0.5; t.len()]).unwrap();
        assert_abs_diff_eq!(flat.params[1], 0.0, epsilon = 1e-10);
        assert_eq!(flat.r_squared, 1.0);
    }

    #[test]
    fn uneven_periods_are_ascending() {
        let p = uneven_periods(5, 200, 12);
        assert_eq!(&p[..6], &[0, 1, 2, 3, 4, 5]);
        assert_eq!(*p.last().unwrap(), 200);
        assert!(p.windows(2).all(|w| w[1] > w[0]));
    }
}
