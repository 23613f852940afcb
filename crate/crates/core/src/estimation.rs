//! Gaussian outcome likelihoods, Bayesian photon-number tracking, mutual
//! information of Gaussian mixtures and the empirical measurement rate.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::signal::{OutcomeVector, TemplateBank};
use crate::trajectories::JumpTruth;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Multivariate normal density with a cached Cholesky factor.
#[derive(Clone, Debug)]
pub struct GaussianComponent {
    mean: DVector<f64>,
    /// Lower Cholesky factor of the (possibly regularized) covariance.
    chol: DMatrix<f64>,
    log_norm: f64,
    ridge: f64,
}

impl GaussianComponent {
    /// Falls back to `Σ + εI` with `ε = 10⁻⁶·tr Σ/dim` (growing tenfold until the
    /// factorization succeeds) when `Σ` is not positive definite.
    pub fn new(mean: DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let dim = mean.len();
        if dim == 0 {
            return Err(Error::InvalidDimension("empty outcome vector".into()));
        }
        if cov.nrows() != dim || cov.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: cov.nrows() });
        }
        if cov.iter().chain(mean.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter { name: "covariance", reason: "non-finite entries".into() });
        }
        let sym = (cov + cov.transpose()) * 0.5;
        let mut ridge = 0.0;
        let base = (sym.trace() / dim as f64).abs().max(f64::MIN_POSITIVE);
        let chol = loop {
            let trial = &sym + DMatrix::identity(dim, dim) * ridge;
            if let Some(c) = trial.cholesky() {
                let l = c.l();
                if l.diagonal().iter().all(|d| *d > 0.0) {
                    break l;
                }
            }
            ridge = if ridge == 0.0 { 1e-6 * base } else { ridge * 10.0 };
            if ridge > 1e6 * base {
                return Err(Error::InvalidParameter { name: "covariance", reason: "cannot be regularized".into() });
            }
        };
        if ridge > 0.0 {
            log::warn!("covariance not positive definite; ridge {ridge:.3e} added");
        }
        let log_det: f64 = 2.0 * chol.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let log_norm = -0.5 * (dim as f64 * LN_2PI + log_det);
        Ok(Self { mean, chol, log_norm, ridge })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Ridge added to the covariance diagonal (0 when none was needed).
    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// Squared Mahalanobis distance of `x` from the mean.
    pub fn mahalanobis2(&self, x: &[f64]) -> f64 {
        let d = DVector::from_column_slice(x) - &self.mean;
        let y = self.chol.solve_lower_triangular(&d).expect("positive diagonal");
        y.norm_squared()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis2(x)
    }

    /// Differential entropy in nats.
    pub fn entropy(&self) -> f64 {
        0.5 * self.dim() as f64 - self.log_norm
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| Distribution::<f64>::sample(&StandardNormal, rng));
        &self.mean + &self.chol * z
    }
}

/// `𝒩(G·e_n, Σⁿ)` for every photon number of a template bank.
#[derive(Clone, Debug)]
pub struct LikelihoodModel {
    components: Vec<GaussianComponent>,
}

impl LikelihoodModel {
    pub fn from_parts(means: &[DVector<f64>], covariances: &[DMatrix<f64>]) -> Result<Self> {
        if means.len() != covariances.len() {
            return Err(Error::DimensionMismatch { expected: means.len(), found: covariances.len() });
        }
        if means.is_empty() {
            return Err(Error::InvalidDimension("no components".into()));
        }
        let components = means.iter().zip(covariances).map(|(m, c)| GaussianComponent::new(m.clone(), c)).collect::<Result<Vec<_>>>()?;
        let dim = components[0].dim();
        if let Some(bad) = components.iter().find(|c| c.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: bad.dim() });
        }
        Ok(Self { components })
    }

    /// Means are the Gram columns, scaled by `mean_scale`; covariances are the bank's `Σⁿ`.
    pub fn from_bank_scaled(bank: &TemplateBank, mean_scale: f64) -> Result<Self> {
        if bank.covariances.len() != bank.dim() {
            return Err(Error::InsufficientSamples("template bank has no outcome covariances".into()));
        }
        let means: Vec<DVector<f64>> = (0..bank.dim()).map(|n| bank.gram.column(n).into_owned() * mean_scale).collect();
        Self::from_parts(&means, &bank.covariances)
    }

    pub fn from_bank(bank: &TemplateBank) -> Result<Self> {
        Self::from_bank_scaled(bank, 1.0)
    }

    /// Number of photon-number hypotheses.
    pub fn n_states(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn log_likelihoods(&self, m: &[f64]) -> Result<Vec<f64>> {
        if m.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: m.len() });
        }
        Ok(self.components.iter().map(|c| c.log_density(m)).collect())
    }

    /// Same model with photon number `k` relabelled `perm[k]`, outcome coordinates included.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let k = self.n_states();
        check_permutation(perm, k)?;
        if self.dim() != k {
            return Err(Error::DimensionMismatch { expected: k, found: self.dim() });
        }
        let mut means = vec![DVector::zeros(k); k];
        let mut covs = vec![DMatrix::zeros(k, k); k];
        for (n, c) in self.components.iter().enumerate() {
            let cov = &c.chol * c.chol.transpose() - DMatrix::identity(k, k) * c.ridge;
            means[perm[n]] = DVector::from_fn(k, |i, _| c.mean[inverse_index(perm, i)]);
            covs[perm[n]] = DMatrix::from_fn(k, k, |i, j| cov[(inverse_index(perm, i), inverse_index(perm, j))]);
        }
        Self::from_parts(&means, &covs)
    }
}

fn check_permutation(perm: &[usize], k: usize) -> Result<()> {
    let mut seen = vec![false; k];
    if perm.len() != k || perm.iter().any(|&p| p >= k || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::InvalidParameter { name: "permutation", reason: format!("not a permutation of 0..{k}") });
    }
    Ok(())
}

fn inverse_index(perm: &[usize], i: usize) -> usize {
    perm.iter().position(|&p| p == i).expect("checked permutation")
}

/// Density of `m` under `𝒩(G·e_n, Σⁿ)`.
pub fn gaussian_likelihood(m: &OutcomeVector, n: usize, bank: &TemplateBank) -> Result<f64> {
    if n >= bank.dim() || n >= bank.covariances.len() {
        return Err(Error::InvalidParameter { name: "n", reason: format!("{n} outside the bank") });
    }
    let c = GaussianComponent::new(bank.gram.column(n).into_owned(), &bank.covariances[n])?;
    if m.m.len() != c.dim() {
        return Err(Error::DimensionMismatch { expected: c.dim(), found: m.m.len() });
    }
    Ok(c.log_density(&m.m).exp())
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        out[k] = out[k - 1] + (k as f64).ln();
    }
    out
}

/// Photon loss over `dt`: `P′ = exp(dt·L)P` for the pure-death generator
/// `L_{n,n+1} = (n+1)/T_c`, `L_{n,n} = −n/T_c`, i.e. binomial thinning with
/// survival `e^{−dt/T_c}`. An infinite `t_c` leaves `P` unchanged.
pub fn decay_prior_step(p: &[f64], dt: f64, t_c: f64) -> Vec<f64> {
    assert!(dt >= 0.0 && t_c > 0.0, "decay step needs dt >= 0 and T_c > 0");
    if dt == 0.0 || t_c.is_infinite() {
        return p.to_vec();
    }
    let x = dt / t_c;
    let ln_s = -x;
    let ln_q = (-(-x).exp_m1()).ln();
    let lf = ln_factorials(p.len());
    let mut out = vec![0.0; p.len()];
    for (n, &pn) in p.iter().enumerate() {
        if pn == 0.0 {
            continue;
        }
        for (k, o) in out.iter_mut().enumerate().take(n + 1) {
            let lost = (n - k) as f64;
            let ln_b = lf[n] - lf[k] - lf[n - k] + k as f64 * ln_s + if n == k { 0.0 } else { lost * ln_q };
            *o += pn * ln_b.exp();
        }
    }
    out
}

/// Uniform distribution over `k` photon numbers.
pub fn uniform_prior(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

fn check_distribution(p: &[f64], k: usize) -> Result<()> {
    if p.len() != k {
        return Err(Error::DimensionMismatch { expected: k, found: p.len() });
    }
    let total: f64 = p.iter().sum();
    if p.iter().any(|x| !(*x >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter { name: "prior", reason: format!("not a distribution (sum {total})") });
    }
    Ok(())
}

/// Filtered photon-number distribution after each window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorTrajectory {
    /// End time of each window (μs).
    pub times: Vec<f64>,
    pub probabilities: Vec<Vec<f64>>,
    /// Most probable photon number of each row.
    pub map: Vec<usize>,
}

impl PosteriorTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn argmax(x: &[f64]) -> usize {
    x.iter().enumerate().fold(0, |best, (i, v)| if *v > x[best] { i } else { best })
}

/// One Bayes update in the log domain: `P ← P·ℙ(m|n)/Z`.
fn update(prior: &[f64], log_lik: &[f64]) -> Result<Vec<f64>> {
    let logs: Vec<f64> = prior.iter().zip(log_lik).map(|(p, l)| if *p > 0.0 { p.ln() + l } else { f64::NEG_INFINITY }).collect();
    if logs.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidState("likelihood is NaN".into()));
    }
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::InvalidState("every photon number has zero posterior weight".into()));
    }
    let w: Vec<f64> = logs.iter().map(|x| (x - top).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / z).collect())
}

/// Bayesian filter over consecutive windows: before each window's update the
/// distribution is propagated by photon loss over `τ` (skipped when `t_c` is `None`).
pub fn bayes_track(outcomes: &[OutcomeVector], model: &LikelihoodModel, t_c: Option<f64>, prior: &[f64]) -> Result<PosteriorTrajectory> {
    check_distribution(prior, model.n_states())?;
    let mut p = prior.to_vec();
    let mut traj = PosteriorTrajectory { times: Vec::with_capacity(outcomes.len()), probabilities: Vec::with_capacity(outcomes.len()), map: Vec::new() };
    for o in outcomes {
        if let Some(tc) = t_c {
            p = decay_prior_step(&p, o.tau, tc);
        }
        p = update(&p, &model.log_likelihoods(&o.m)?)?;
        traj.map.push(argmax(&p));
        traj.times.push(o.t);
        traj.probabilities.push(p.clone());
    }
    Ok(traj)
}

/// Most probable photon-number path given all windows (Viterbi), with loss over
/// each window as the transition model.
pub fn viterbi_path(outcomes: &[OutcomeVector], model: &LikelihoodModel, t_c: f64, prior: &[f64]) -> Result<Vec<usize>> {
    let k = model.n_states();
    check_distribution(prior, k)?;
    let Some(first) = outcomes.first() else { return Ok(Vec::new()) };
    let tau = first.tau;
    let mut log_t = vec![vec![f64::NEG_INFINITY; k]; k];
    for (from, row) in log_t.iter_mut().enumerate() {
        let mut e = vec![0.0; k];
        e[from] = 1.0;
        for (to, p) in decay_prior_step(&e, tau, t_c).into_iter().enumerate() {
            row[to] = if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
        }
    }
    let ln = |p: f64| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
    let mut score: Vec<f64> = (0..k).map(|to| (0..k).map(|from| ln(prior[from]) + log_t[from][to]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(outcomes.len());
    for (j, o) in outcomes.iter().enumerate() {
        let ll = model.log_likelihoods(&o.m)?;
        if j > 0 {
            let mut next = vec![f64::NEG_INFINITY; k];
            let mut arg = vec![0; k];
            for to in 0..k {
                for from in 0..k {
                    let s = score[from] + log_t[from][to];
                    if s > next[to] {
                        next[to] = s;
                        arg[to] = from;
                    }
                }
            }
            score = next;
            back.push(arg);
        }
        for (s, l) in score.iter_mut().zip(&ll) {
            *s += l;
        }
        if score.iter().any(|s| s.is_nan()) || score.iter().all(|s| *s == f64::NEG_INFINITY) {
            return Err(Error::InvalidState(format!("Viterbi scores degenerate at window {j}")));
        }
    }
    let mut path = vec![argmax(&score)];
    for arg in back.iter().rev() {
        path.push(arg[*path.last().expect("non-empty")]);
    }
    path.reverse();
    Ok(path)
}

/// Posterior of the photon number in each window given all windows
/// (forward-backward smoothing with loss over each window as the transition model).
pub fn smoothed_posterior(outcomes: &[OutcomeVector], model: &LikelihoodModel, t_c: f64, prior: &[f64]) -> Result<PosteriorTrajectory> {
    let k = model.n_states();
    let forward = bayes_track(outcomes, model, Some(t_c), prior)?;
    let Some(first) = outcomes.first() else { return Ok(forward) };
    let tau = first.tau;
    // transition[from][to]
    let transition: Vec<Vec<f64>> = (0..k)
        .map(|from| {
            let mut e = vec![0.0; k];
            e[from] = 1.0;
            decay_prior_step(&e, tau, t_c)
        })
        .collect();
    let len = outcomes.len();
    let mut probabilities = forward.probabilities.clone();
    for j in (0..len - 1).rev() {
        // predicted distribution of window j+1 from the filtered distribution of window j
        let filtered = &forward.probabilities[j];
        let predicted = decay_prior_step(filtered, tau, t_c);
        let next = probabilities[j + 1].clone();
        let row: Vec<f64> = (0..k)
            .map(|from| {
                filtered[from]
                    * (0..k).filter(|&to| predicted[to] > 0.0).map(|to| transition[from][to] * next[to] / predicted[to]).sum::<f64>()
            })
            .collect();
        let z: f64 = row.iter().sum();
        probabilities[j] = row.into_iter().map(|x| x / z).collect();
    }
    let map = probabilities.iter().map(|p| argmax(p)).collect();
    Ok(PosteriorTrajectory { times: forward.times, probabilities, map })
}

/// Monte Carlo sample budget.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub samples: usize,
    /// Required standard error (nats); the sample count doubles until it is met.
    pub tolerance: Option<f64>,
    pub max_samples: usize,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self { samples: 20_000, tolerance: None, max_samples: 1_280_000 }
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
}

fn log_sum_exp(x: &[f64]) -> f64 {
    let top = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return top;
    }
    top + x.iter().map(|v| (v - top).exp()).sum::<f64>().ln()
}

/// `I(n : m)` for `m ~ Σ_n P₀(n) 𝒩(μ_n, Σ_n)`, in nats.
///
/// Stratified over components: `Σ_n P₀(n) E_n[ln ℙ(m|n) − ln ℙ(m)]`, which equals
/// the mixture entropy minus the closed-form conditional entropies.
pub fn mutual_information_gaussian_mixture<R: Rng + ?Sized>(
    means: &[DVector<f64>],
    covariances: &[DMatrix<f64>],
    prior: &[f64],
    mc: &MonteCarloConfig,
    rng: &mut R,
) -> Result<MiEstimate> {
    if means.len() < 2 {
        return Err(Error::InvalidParameter { name: "means", reason: "at least two components are needed".into() });
    }
    let model = LikelihoodModel::from_parts(means, covariances)?;
    mixture_information(&model, prior, mc, rng)
}

/// Same as [`mutual_information_gaussian_mixture`] for a prepared model.
pub fn mixture_information<R: Rng + ?Sized>(model: &LikelihoodModel, prior: &[f64], mc: &MonteCarloConfig, rng: &mut R) -> Result<MiEstimate> {
    check_distribution(prior, model.n_states())?;
    let active: Vec<usize> = (0..prior.len()).filter(|&n| prior[n] > 0.0).collect();
    let ln_prior: Vec<f64> = active.iter().map(|&n| prior[n].ln()).collect();
    let weights: Vec<f64> = active.iter().map(|&n| prior[n]).collect();
    let mut scratch = vec![0.0; active.len()];
    stratified_information(&weights, mc, rng, |a, rng| {
        let x = model.components[active[a]].sample(rng);
        let xs = x.as_slice();
        for (b, &k) in active.iter().enumerate() {
            scratch[b] = ln_prior[b] + model.components[k].log_density(xs);
        }
        scratch[a] - ln_prior[a] - log_sum_exp(&scratch)
    })
}

/// Stratified Monte Carlo estimate of `Σ_a w_a E_a[f]`, where `score(a, rng)` draws one
/// sample from stratum `a` and returns `f`. With a tolerance the sample count doubles
/// until the standard error meets it.
pub(crate) fn stratified_information<R: Rng + ?Sized>(
    weights: &[f64],
    mc: &MonteCarloConfig,
    rng: &mut R,
    mut score: impl FnMut(usize, &mut R) -> f64,
) -> Result<MiEstimate> {
    if mc.samples < 2 {
        return Err(Error::InvalidParameter { name: "samples", reason: "at least 2".into() });
    }
    let mut sums = vec![(0usize, 0.0f64, 0.0f64); weights.len()];
    let mut target = mc.samples;
    loop {
        for (a, &w) in weights.iter().enumerate() {
            let want = ((target as f64 * w).ceil() as usize).max(2);
            while sums[a].0 < want {
                let f = score(a, rng);
                sums[a].0 += 1;
                sums[a].1 += f;
                sums[a].2 += f * f;
            }
        }
        let (mut value, mut var) = (0.0, 0.0);
        for (a, &w) in weights.iter().enumerate() {
            let (c, s, s2) = sums[a];
            let mean = s / c as f64;
            let v = ((s2 - c as f64 * mean * mean) / (c - 1) as f64).max(0.0);
            value += w * mean;
            var += w * w * v / c as f64;
        }
        let samples = sums.iter().map(|s| s.0).sum();
        let est = MiEstimate { value, stderr: var.sqrt(), samples };
        match mc.tolerance {
            Some(tol) if est.stderr > tol => {
                if target * 2 > mc.max_samples {
                    return Err(Error::MonteCarloTolerance { tolerance: tol, stderr: est.stderr, samples });
                }
                target *= 2;
            }
            _ => return Ok(est),
        }
    }
}

/// Measurement rate at one drive amplitude.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub theta: f64,
    /// Bias-subtracted rate (1/μs).
    pub gamma_m: f64,
    /// Subtracted zero-amplitude bias (1/μs).
    pub bias: f64,
    /// Systematic (bias) and Monte Carlo uncertainty combined (1/μs).
    pub stderr: f64,
    /// Mean number of windows per photon number behind the bank.
    pub n_samples: usize,
    /// Rate before bias subtraction (1/μs).
    pub raw: f64,
    /// Bias-subtracted rate is negative beyond its uncertainty.
    pub flagged: bool,
}

/// Per-period information averaged over photon-number pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairInformation {
    /// `I(n : m⃗)` for the prior ½ on `{q, q+1}`, per pair `q`.
    pub per_pair: Vec<MiEstimate>,
    pub mean: f64,
    pub stderr: f64,
}

/// Averages `I(n : m⃗)` over `q ∈ 0..dim−1` with `P₀(q) = P₀(q+1) = ½`, after
/// rescaling the means from one window to one comb period (`G/√(τ/period)`).
pub fn pair_information(bank: &TemplateBank, mc: &MonteCarloConfig, seed: u64) -> Result<PairInformation> {
    let periods = bank.tau / bank.period;
    if !(periods >= 1.0) {
        return Err(Error::InvalidParameter { name: "period", reason: format!("window of {periods} periods") });
    }
    let model = LikelihoodModel::from_bank_scaled(bank, 1.0 / periods.sqrt())?;
    let k = model.n_states();
    if k < 2 {
        return Err(Error::InvalidParameter { name: "bank", reason: "needs two photon numbers".into() });
    }
    let per_pair = (0..k - 1)
        .map(|q| {
            let mut prior = vec![0.0; k];
            prior[q] = 0.5;
            prior[q + 1] = 0.5;
            mixture_information(&model, &prior, mc, &mut rng::stream(seed, "pair-information", q as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let count = per_pair.len() as f64;
    let mean = per_pair.iter().map(|e| e.value).sum::<f64>() / count;
    let stderr = per_pair.iter().map(|e| e.stderr * e.stderr).sum::<f64>().sqrt() / count;
    Ok(PairInformation { per_pair, mean, stderr })
}

fn mean_samples(bank: &TemplateBank) -> f64 {
    bank.n_samples.iter().sum::<usize>() as f64 / bank.n_samples.len().max(1) as f64
}

/// Measurement rate from a bank at kick angle `theta`, bias-corrected with the
/// information found at zero amplitude, rescaled by the sample-count ratio.
pub fn empirical_measurement_rate(theta: f64, bank: &TemplateBank, zero: &TemplateBank, mc: &MonteCarloConfig, seed: u64) -> Result<RateEstimate> {
    if bank.n_samples.iter().chain(&zero.n_samples).any(|&c| c < 2) {
        return Err(Error::InsufficientSamples("rate estimation needs sampled covariances".into()));
    }
    let signal = pair_information(bank, mc, rng::derive_seed(seed, "signal"))?;
    let noise = pair_information(zero, mc, rng::derive_seed(seed, "zero"))?;
    let ratio = mean_samples(zero) / mean_samples(bank);
    let tau = bank.period;
    let raw = signal.mean / tau;
    let bias = noise.mean * ratio / tau;
    let gamma_m = raw - bias;
    let stderr = (bias * bias + (signal.stderr / tau).powi(2) + (noise.stderr * ratio / tau).powi(2)).sqrt();
    let flagged = gamma_m < -stderr;
    if flagged {
        log::warn!("theta {theta}: bias-subtracted rate {gamma_m:.4e} below -{stderr:.4e}");
    }
    Ok(RateEstimate { theta, gamma_m, bias, stderr, n_samples: mean_samples(bank).round() as usize, raw, flagged })
}

/// Time for `max_n P_t(n)` to first reach `x`, tracking without loss from `prior`.
/// Measured from the start of the first window; `None` when never reached.
pub fn first_passage_time(outcomes: &[OutcomeVector], model: &LikelihoodModel, prior: &[f64], x: f64) -> Result<Option<f64>> {
    check_confidence(x)?;
    let Some(first) = outcomes.first() else { return Ok(None) };
    let t0 = first.t - first.tau;
    let traj = bayes_track(outcomes, model, None, prior)?;
    Ok(traj.probabilities.iter().zip(&traj.times).find(|(p, _)| p.iter().copied().fold(0.0, f64::max) >= x).map(|(_, t)| t - t0))
}

fn check_confidence(x: f64) -> Result<()> {
    if !(x > 0.5 && x < 1.0) {
        return Err(Error::InvalidParameter { name: "confidence", reason: format!("{x} not in (0.5, 1)") });
    }
    Ok(())
}

/// Mean time to confidence `x` for records sharing one initial mean photon number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceGroup {
    pub nbar: f64,
    /// Mean first-passage time over records that reached `x` (μs).
    pub mean_time: f64,
    pub stderr: f64,
    pub reached: usize,
    pub censored: usize,
}

/// Mean first-passage time of `max_n P_t(n)` over `x`, per group of records.
pub fn confidence_time(groups: &[(f64, Vec<Vec<OutcomeVector>>)], model: &LikelihoodModel, x: f64) -> Result<Vec<ConfidenceGroup>> {
    check_confidence(x)?;
    let prior = uniform_prior(model.n_states());
    groups
        .iter()
        .map(|(nbar, records)| {
            let mut times = Vec::new();
            let mut censored = 0;
            for r in records {
                match first_passage_time(r, model, &prior, x)? {
                    Some(t) => times.push(t),
                    None => censored += 1,
                }
            }
            let reached = times.len();
            let mean_time = if reached > 0 { times.iter().sum::<f64>() / reached as f64 } else { f64::NAN };
            let stderr = if reached > 1 {
                (times.iter().map(|t| (t - mean_time).powi(2)).sum::<f64>() / ((reached - 1) * reached) as f64).sqrt()
            } else {
                f64::NAN
            };
            Ok(ConfidenceGroup { nbar: *nbar, mean_time, stderr, reached, censored })
        })
        .collect()
}

/// Agreement of a decoded photon-number path with the ground truth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackingScore {
    pub windows_matched: usize,
    pub windows_scored: usize,
    pub jumps_localized: usize,
    pub jumps_scored: usize,
}

impl TrackingScore {
    pub fn window_fraction(&self) -> f64 {
        self.windows_matched as f64 / self.windows_scored as f64
    }

    pub fn jump_fraction(&self) -> f64 {
        self.jumps_localized as f64 / self.jumps_scored as f64
    }

    pub fn add(&mut self, other: &TrackingScore) {
        self.windows_matched += other.windows_matched;
        self.windows_scored += other.windows_scored;
        self.jumps_localized += other.jumps_localized;
        self.jumps_scored += other.jumps_scored;
    }
}

/// Scores `path` (one photon number per window of length `tau`, the first window
/// starting at `t0`) against `truth`, only where the truth is at most `n_max`.
///
/// A window counts when it starts at or after `t0 + skip` and its path value equals
/// the true photon number at the window centre. A loss `n → n−1` at `t_j` is
/// localized when the path steps from `≥ n` to `≤ n−1` at a window boundary within
/// `tolerance` of `t_j`.
pub fn score_tracking(path: &[usize], t0: f64, tau: f64, truth: &JumpTruth, n_max: usize, skip: f64, tolerance: f64) -> TrackingScore {
    let mut score = TrackingScore::default();
    for (i, &n) in path.iter().enumerate() {
        let start = t0 + i as f64 * tau;
        let want = truth.photon_number_at(start + 0.5 * tau);
        if start >= t0 + skip && want <= n_max {
            score.windows_scored += 1;
            score.windows_matched += usize::from(n == want);
        }
    }
    let end = t0 + path.len() as f64 * tau;
    for (k, &tj) in truth.jump_times.iter().enumerate() {
        let before = truth.initial_n - k;
        if before > n_max || tj < t0 || tj > end {
            continue;
        }
        score.jumps_scored += 1;
        let hit = (1..path.len()).any(|i| {
            let boundary = t0 + i as f64 * tau;
            path[i - 1] >= before && path[i] < before && (boundary - tj).abs() <= tolerance
        });
        score.jumps_localized += usize::from(hit);
    }
    score
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(m: Vec<f64>, j: usize) -> OutcomeVector {
        OutcomeVector { m, t: (j + 1) as f64 * 2.0, tau: 2.0 }
    }

    #[test]
    fn density_peaks_at_the_mean_and_is_symmetric_between_equal_covariances() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let a = GaussianComponent::new(DVector::from_vec(vec![1.0, 0.0]), &cov).unwrap();
        let b = GaussianComponent::new(DVector::from_vec(vec![-1.0, 2.0]), &cov).unwrap();
        let det: f64 = 2.0 - 0.09;
        assert!((a.log_density(&[1.0, 0.0]) - (-(LN_2PI) - 0.5 * det.ln())).abs() < 1e-12);
        assert!(a.log_density(&[1.1, 0.0]) < a.log_density(&[1.0, 0.0]));
        assert!((a.log_density(&[0.0, 1.0]) - b.log_density(&[0.0, 1.0])).abs() < 1e-12);
        assert!((a.entropy() - (1.0 + LN_2PI + 0.5 * det.ln())).abs() < 1e-12);
    }

    #[test]
    fn singular_covariance_gets_a_small_ridge() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let c = GaussianComponent::new(DVector::zeros(2), &cov).unwrap();
        assert!(c.ridge() > 0.0 && c.ridge() <= 1e-4);
        assert!(c.log_density(&[0.5, 0.5]).is_finite());
    }

    #[test]
    fn decay_keeps_vacuum_and_first_order_loss() {
        let mut d0 = vec![0.0; 5];
        d0[0] = 1.0;
        assert_eq!(decay_prior_step(&d0, 3.0, 200.0), d0);
        let mut d1 = vec![0.0; 5];
        d1[1] = 1.0;
        let p = decay_prior_step(&d1, 0.01, 200.0);
        assert!((p[0] - 0.01 / 200.0).abs() < 1e-8);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn filter_sharpens_on_noiseless_outcomes() {
        let means: Vec<DVector<f64>> = (0..3).map(|n| DVector::from_fn(3, |i, _| if i == n { 5.0 } else { 0.0 })).collect();
        let covs = vec![DMatrix::identity(3, 3) * 0.01; 3];
        let model = LikelihoodModel::from_parts(&means, &covs).unwrap();
        let out = vec![outcome(means[2].as_slice().to_vec(), 0)];
        let traj = bayes_track(&out, &model, None, &uniform_prior(3)).unwrap();
        assert!(traj.probabilities[0][2] > 1.0 - 1e-12);
        assert_eq!(traj.map, vec![2]);
        assert!(bayes_track(&out, &model, None, &[0.5, 0.5, 0.5]).is_err());
    }

    #[test]
    fn viterbi_follows_a_clean_staircase() {
        let means: Vec<DVector<f64>> = (0..4).map(|n| DVector::from_fn(4, |i, _| if i == n { 3.0 } else { 0.0 })).collect();
        let covs = vec![DMatrix::identity(4, 4); 4];
        let model = LikelihoodModel::from_parts(&means, &covs).unwrap();
        let truth = [3, 3, 3, 2, 2, 1, 1, 1, 0, 0];
        let out: Vec<OutcomeVector> = truth.iter().enumerate().map(|(j, &n)| outcome(means[n].as_slice().to_vec(), j)).collect();
        assert_eq!(viterbi_path(&out, &model, 20.0, &uniform_prior(4)).unwrap(), truth.to_vec());
    }

    #[test]
    fn confidence_level_outside_range_is_rejected() {
        let model = LikelihoodModel::from_parts(&[DVector::zeros(1), DVector::from_element(1, 1.0)], &[DMatrix::identity(1, 1), DMatrix::identity(1, 1)]).unwrap();
        assert!(first_passage_time(&[], &model, &[0.5, 0.5], 0.4).is_err());
        assert!(first_passage_time(&[], &model, &[0.5, 0.5], 1.0).is_err());
        assert_eq!(first_passage_time(&[], &model, &[0.5, 0.5], 0.9).unwrap(), None);
    }
}
