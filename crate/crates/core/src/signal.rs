//! Record processing: analytic signal, quadrature demodulation, matched filters
//! and template banks.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::drive::{comb_envelope, CombSpec};
use crate::dynamics::SystemParams;
use crate::error::{Error, Result};
use crate::hilbert::C64;
use crate::trajectories::{for_each_fock_window, QubitEngine};

/// `x + i H[x]`: negative frequencies removed, positive ones doubled. DC and the
/// Nyquist bin are kept once, so the real part reproduces `x`.
pub fn analytic_signal(x: &[f64]) -> Result<Vec<C64>> {
    let n = x.len();
    if n < 4 {
        return Err(Error::InvalidParameter { name: "x", reason: format!("needs at least 4 samples, got {n}") });
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    for (k, b) in buf.iter_mut().enumerate() {
        let weight = if k == 0 || (n % 2 == 0 && k == half) {
            1.0
        } else if k < n.div_ceil(2) {
            2.0
        } else {
            0.0
        };
        *b *= weight / n as f64;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    Ok(buf)
}

/// In-phase and quadrature components of a record demodulated at the frequency of
/// the qubit with `n` photons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quadratures {
    pub i: Vec<f64>,
    pub q: Vec<f64>,
    /// Demodulation phase `φ_n` used.
    pub phi: f64,
}

/// Frequency of the record component emitted by the qubit with `n` photons, `ω_IF + nχ`.
pub fn emission_frequency(params: &SystemParams, n: usize) -> f64 {
    params.omega_if + n as f64 * params.chi
}

/// Demodulates `v` (sampled at `t0 + (j + 1/2) dt`, comb reference already
/// subtracted) at `ω_IF + nχ`: `I - iQ = e^{-i(ω_IF + nχ)t + iφ}·(v + iH[v])`.
///
/// With `phi = None` the phase maximizing `∫I²` over the first comb period is
/// used, with the sign making the first-period mean of `I` non-negative.
pub fn demodulate_quadratures(
    v: &[f64],
    dt: f64,
    t0: f64,
    n: usize,
    params: &SystemParams,
    period: f64,
    phi: Option<f64>,
) -> Result<Quadratures> {
    let omega = emission_frequency(params, n);
    let nyquist = PI / dt;
    if omega >= nyquist {
        return Err(Error::Aliasing { nyquist, band: omega });
    }
    let z = analytic_signal(v)?;
    // X = I + iQ before the phase rotation
    let x: Vec<C64> = z
        .iter()
        .enumerate()
        .map(|(j, a)| (C64::from_polar(1.0, -omega * (t0 + (j as f64 + 0.5) * dt)) * a).conj())
        .collect();
    let phi = match phi {
        Some(p) => p,
        None => {
            let first = ((period / dt).round() as usize).clamp(1, x.len());
            let s2: C64 = x[..first].iter().map(|a| a * a).sum();
            let mut p = 0.5 * s2.arg();
            let mean: f64 = x[..first].iter().map(|a| (a * C64::from_polar(1.0, -p)).re).sum();
            if mean < 0.0 {
                p += PI;
            }
            p
        }
    };
    let rot = C64::from_polar(1.0, -phi);
    let (i, q) = x.iter().map(|a| a * rot).map(|a| (a.re, a.im)).unzip();
    Ok(Quadratures { i, q, phi })
}

/// Reference `amplitude · Re[e^{-iω_IF t} E(t)]/Ω` of the drive leaking into the record.
pub fn comb_reference(spec: &CombSpec, params: &SystemParams, amplitude: f64, t0: f64, len: usize) -> Vec<f64> {
    let scale = if spec.omega > 0.0 { amplitude / spec.omega } else { 0.0 };
    (0..len)
        .map(|j| {
            let t = t0 + (j as f64 + 0.5) * spec.sample_dt;
            scale * (C64::from_polar(1.0, -params.omega_if * t) * comb_envelope(spec, t)).re
        })
        .collect()
}

/// Subtracts the drive reference in place.
pub fn subtract_reference(v: &mut [f64], reference: &[f64]) -> Result<()> {
    if v.len() != reference.len() {
        return Err(Error::DimensionMismatch { expected: v.len(), found: reference.len() });
    }
    v.iter_mut().zip(reference).for_each(|(a, b)| *a -= b);
    Ok(())
}

/// Matched-filter outcomes `m_n = Σ_j V_j V̄_n(t_j) dt` of one window ending at `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeVector {
    pub m: Vec<f64>,
    pub t: f64,
    pub tau: f64,
}

/// Templates, Gram matrix and per-photon-number outcome covariances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateBank {
    #[serde(skip)]
    pub templates: Vec<Vec<f64>>,
    #[serde(skip)]
    pub gram: DMatrix<f64>,
    #[serde(skip)]
    pub covariances: Vec<DMatrix<f64>>,
    /// Window length (μs).
    pub tau: f64,
    pub sample_dt: f64,
    /// Comb period the windows must align to (μs).
    pub period: f64,
    pub split_half: bool,
    /// Number of windows behind each covariance.
    pub n_samples: Vec<usize>,
}

/// Fewer windows than this per photon number flag a covariance as wide-uncertainty.
pub const MIN_COVARIANCE_SAMPLES: usize = 100;

fn dot(a: &[f64], b: &[f64], dt: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * dt
}

fn gram_of(a: &[Vec<f64>], b: &[Vec<f64>], dt: f64) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| dot(&a[i], &b[j], dt))
}

/// Unbiased sample covariance of equally long vectors; summation in a fixed order.
pub fn sample_covariance(samples: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let count = samples.len();
    if count < 2 {
        return Err(Error::InsufficientSamples(format!("covariance needs at least 2 vectors, got {count}")));
    }
    let dim = samples[0].len();
    let mut mean = DVector::<f64>::zeros(dim);
    for s in samples {
        if s.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: s.len() });
        }
        mean += DVector::from_column_slice(s);
    }
    mean /= count as f64;
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for s in samples {
        let d = DVector::from_column_slice(s) - &mean;
        cov.ger(1.0, &d, &d, 1.0);
    }
    cov /= (count - 1) as f64;
    Ok(cov)
}

/// Inverse or pseudo-inverse of a Gram matrix.
#[derive(Clone, Debug)]
pub struct GramInverse {
    pub inverse: DMatrix<f64>,
    /// Ratio of the largest to the smallest singular value.
    pub condition: f64,
    pub pseudo: bool,
}

/// Condition number above which the Gram matrix is pseudo-inverted.
pub const GRAM_CONDITION_LIMIT: f64 = 1e10;

impl TemplateBank {
    fn check_templates(templates: &[Vec<f64>]) -> Result<usize> {
        let len = templates.first().map(Vec::len).ok_or_else(|| Error::InsufficientSamples("no templates".into()))?;
        if let Some(bad) = templates.iter().find(|t| t.len() != len) {
            return Err(Error::DimensionMismatch { expected: len, found: bad.len() });
        }
        Ok(len)
    }

    /// Bank from known mean records; the Gram matrix is `(V̄_n|V̄_m)`.
    pub fn from_templates(templates: Vec<Vec<f64>>, sample_dt: f64, period: f64) -> Result<Self> {
        let len = Self::check_templates(&templates)?;
        let gram = gram_of(&templates, &templates, sample_dt);
        let k = templates.len();
        Ok(Self {
            templates,
            gram,
            covariances: Vec::new(),
            tau: len as f64 * sample_dt,
            sample_dt,
            period,
            split_half: false,
            n_samples: vec![0; k],
        })
    }

    /// Bank from the deterministic mean records of `engine` (photon numbers `0..=max_photons`).
    pub fn analytic(engine: &QubitEngine, period: f64) -> Result<Self> {
        let templates = (0..=engine.max_photons()).map(|n| engine.template(n)).collect();
        Self::from_templates(templates, engine.dt(), period)
    }

    /// Bank estimated from windows recorded with known photon number (`records[n]`).
    ///
    /// With `split_half`, templates `A` and `B` are averaged over the first and
    /// second half of the windows of each `n`; the Gram matrix is `(V̄_n^A|V̄_m^B)`,
    /// and each window is filtered with the templates of the other half, so noise
    /// in a window never correlates with its own template.
    pub fn from_records(records: &[Vec<Vec<f64>>], sample_dt: f64, period: f64, split_half: bool) -> Result<Self> {
        let mean_of = |set: &[Vec<f64>]| -> Result<Vec<f64>> {
            let len = set.first().map(Vec::len).ok_or_else(|| Error::InsufficientSamples("no records for a photon number".into()))?;
            let mut acc = vec![0.0; len];
            for r in set {
                if r.len() != len {
                    return Err(Error::DimensionMismatch { expected: len, found: r.len() });
                }
                acc.iter_mut().zip(r).for_each(|(a, v)| *a += v);
            }
            Ok(acc.into_iter().map(|a| a / set.len() as f64).collect())
        };
        if !split_half {
            let templates = records.iter().map(|set| mean_of(set)).collect::<Result<Vec<_>>>()?;
            let mut bank = Self::from_templates(templates, sample_dt, period)?;
            let outcomes: Vec<Vec<Vec<f64>>> =
                records.iter().map(|set| set.iter().map(|r| bank.filter_window(r)).collect()).collect::<Result<_>>()?;
            bank.estimate_covariances(&outcomes)?;
            return Ok(bank);
        }
        if records.iter().any(|set| set.len() < 2) {
            return Err(Error::InsufficientSamples("split-half estimation needs 2 records per photon number".into()));
        }
        let halves: Vec<(&[Vec<f64>], &[Vec<f64>])> = records.iter().map(|set| set.split_at(set.len() / 2)).collect();
        let ta = halves.iter().map(|(a, _)| mean_of(a)).collect::<Result<Vec<_>>>()?;
        let tb = halves.iter().map(|(_, b)| mean_of(b)).collect::<Result<Vec<_>>>()?;
        let len = Self::check_templates(&ta)?;
        let gram = gram_of(&ta, &tb, sample_dt);
        let templates: Vec<Vec<f64>> = ta.iter().zip(&tb).map(|(a, b)| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()).collect();
        let filter = |r: &[f64], t: &[Vec<f64>]| -> Vec<f64> { t.iter().map(|tm| dot(r, tm, sample_dt)).collect() };
        let outcomes: Vec<Vec<Vec<f64>>> = halves
            .iter()
            .map(|(a, b)| a.iter().map(|r| filter(r, &tb)).chain(b.iter().map(|r| filter(r, &ta))).collect())
            .collect();
        let k = templates.len();
        let mut bank = Self {
            templates,
            gram,
            covariances: Vec::new(),
            tau: len as f64 * sample_dt,
            sample_dt,
            period,
            split_half: true,
            n_samples: vec![0; k],
        };
        bank.estimate_covariances(&outcomes)?;
        Ok(bank)
    }

    pub fn dim(&self) -> usize {
        self.templates.len()
    }

    pub fn window_len(&self) -> usize {
        self.templates.first().map_or(0, Vec::len)
    }

    /// Sets `Σⁿ` to the sample covariance of `outcomes[n]`.
    pub fn estimate_covariances(&mut self, outcomes: &[Vec<Vec<f64>>]) -> Result<()> {
        if outcomes.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: outcomes.len() });
        }
        self.covariances = outcomes.iter().map(|o| sample_covariance(o)).collect::<Result<_>>()?;
        self.n_samples = outcomes.iter().map(Vec::len).collect();
        for (n, &count) in self.n_samples.iter().enumerate() {
            if count < MIN_COVARIANCE_SAMPLES {
                log::warn!("covariance for n = {n} estimated from only {count} windows");
            }
        }
        Ok(())
    }

    /// Filters `records[n]` (aligned windows with `n` photons) with the bank's
    /// templates and sets `Σⁿ` to their sample covariance.
    pub fn covariances_from_records(&mut self, records: &[Vec<Vec<f64>>]) -> Result<()> {
        let outcomes: Vec<Vec<Vec<f64>>> = records.iter().map(|set| set.iter().map(|r| self.filter_window(r)).collect()).collect::<Result<_>>()?;
        self.estimate_covariances(&outcomes)
    }

    /// Bank with the same templates, zero means, and covariances of `records[n]`
    /// taken without any signal (zero drive): the reference for the information
    /// that finite-sample covariances alone produce.
    pub fn zero_signal_reference(&self, records: &[Vec<Vec<f64>>]) -> Result<TemplateBank> {
        let outcomes: Vec<Vec<Vec<f64>>> = records.iter().map(|set| set.iter().map(|r| self.filter_window(r)).collect()).collect::<Result<_>>()?;
        self.zero_signal_reference_from_outcomes(&outcomes)
    }

    /// [`Self::zero_signal_reference`] from already filtered zero-drive windows.
    pub fn zero_signal_reference_from_outcomes(&self, outcomes: &[Vec<Vec<f64>>]) -> Result<TemplateBank> {
        let mut out = Self { gram: DMatrix::zeros(self.dim(), self.dim()), covariances: Vec::new(), ..self.clone() };
        out.estimate_covariances(outcomes)?;
        Ok(out)
    }

    /// Photon numbers whose covariance rests on fewer than [`MIN_COVARIANCE_SAMPLES`] windows.
    pub fn wide_uncertainty(&self) -> Vec<usize> {
        self.n_samples.iter().enumerate().filter(|(_, &c)| c < MIN_COVARIANCE_SAMPLES).map(|(n, _)| n).collect()
    }

    /// `m_n = Σ_j V_j V̄_n[j] dt` for one aligned window of samples.
    pub fn filter_window(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.window_len() {
            return Err(Error::DimensionMismatch { expected: self.window_len(), found: v.len() });
        }
        Ok(self.templates.iter().map(|t| dot(v, t, self.sample_dt)).collect())
    }

    /// Outcomes of the window of `v` starting at time `t_start` (first sample at `t_start + dt/2`).
    pub fn matched_filter_outcomes(&self, v: &[f64], t_start: f64) -> Result<OutcomeVector> {
        self.check_alignment(t_start)?;
        Ok(OutcomeVector { m: self.filter_window(v)?, t: t_start + self.tau, tau: self.tau })
    }

    pub fn check_alignment(&self, t_start: f64) -> Result<()> {
        let periods = t_start / self.period;
        if (periods - periods.round()).abs() > 1e-6 {
            return Err(Error::Misaligned(format!("window starts at {t_start} us, period {} us", self.period)));
        }
        Ok(())
    }

    /// `G⁻¹`, or a pseudo-inverse with a warning when the condition number exceeds
    /// [`GRAM_CONDITION_LIMIT`]. A vanishing Gram matrix is refused.
    pub fn gram_inverse(&self) -> Result<GramInverse> {
        let scale = self.gram.amax();
        if !(scale > 1e-300) {
            return Err(Error::SingularGram);
        }
        let svd = self.gram.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if condition <= GRAM_CONDITION_LIMIT {
            if let Some(inverse) = self.gram.clone().try_inverse() {
                return Ok(GramInverse { inverse, condition, pseudo: false });
            }
        }
        log::warn!("Gram matrix condition number {condition:.3e}; using a pseudo-inverse");
        let inverse = svd.pseudo_inverse(smax / GRAM_CONDITION_LIMIT).map_err(|_| Error::SingularGram)?;
        Ok(GramInverse { inverse, condition, pseudo: true })
    }

    /// Normalized outcomes `r = G⁻¹m`, with `E[r | n] = e_n`.
    pub fn normalize(&self, inv: &GramInverse, m: &[f64]) -> Vec<f64> {
        (&inv.inverse * DVector::from_column_slice(m)).iter().copied().collect()
    }

    /// Binary file (`FWBANK01`, dimensions, templates, Gram, covariances as LE f64) plus a `.json` header.
    pub fn write_binary(&self, path: &Path, params_hash: &str) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(BANK_MAGIC)?;
        for x in [self.dim() as u64, self.window_len() as u64, self.covariances.len() as u64] {
            w.write_all(&x.to_le_bytes())?;
        }
        let values = self
            .templates
            .iter()
            .flatten()
            .chain(self.gram.iter())
            .chain(self.covariances.iter().flat_map(|c| c.iter()));
        for v in values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        let header = serde_json::json!({ "format": "FWBANK01", "bank": self, "params_hash": params_hash });
        let mut p = path.as_os_str().to_owned();
        p.push(".json");
        std::fs::write(p, serde_json::to_string_pretty(&header)?)?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut p = path.as_os_str().to_owned();
        p.push(".json");
        let header: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p)?)?;
        let mut bank: TemplateBank = serde_json::from_value(header["bank"].clone())?;
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != BANK_MAGIC {
            return Err(Error::Format("not a template bank file".into()));
        }
        let mut dims = [0usize; 3];
        for d in &mut dims {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *d = u64::from_le_bytes(b) as usize;
        }
        let [k, len, n_cov] = dims;
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        let values: Vec<f64> = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        if values.len() != k * len + k * k * (1 + n_cov) {
            return Err(Error::Format(format!("template bank body has {} values", values.len())));
        }
        let (t, rest) = values.split_at(k * len);
        bank.templates = t.chunks(len.max(1)).map(<[f64]>::to_vec).collect();
        bank.gram = DMatrix::from_column_slice(k, k, &rest[..k * k]);
        bank.covariances = rest[k * k..].chunks(k * k).map(|c| DMatrix::from_column_slice(k, k, c)).collect();
        Ok(bank)
    }

    /// Writes `gram.csv` and `covariance_n.csv` files into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        let mut written = Vec::new();
        let mut write = |name: String, m: &DMatrix<f64>| -> Result<()> {
            let path = dir.join(name);
            let mut w = BufWriter::new(File::create(&path)?);
            let header: Vec<String> = (0..m.ncols()).map(|j| format!("c{j}")).collect();
            writeln!(w, "row,{}", header.join(","))?;
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.12e}", m[(i, j)])).collect();
                writeln!(w, "{i},{}", row.join(","))?;
            }
            w.flush()?;
            written.push(path);
            Ok(())
        };
        write("gram.csv".into(), &self.gram)?;
        for (n, c) in self.covariances.iter().enumerate() {
            write(format!("covariance_{n}.csv"), c)?;
        }
        Ok(written)
    }
}

const BANK_MAGIC: &[u8; 8] = b"FWBANK01";

/// Streams samples into consecutive aligned windows and emits one outcome vector per window.
#[derive(Clone, Debug)]
pub struct MatchedFilter<'a> {
    bank: &'a TemplateBank,
    acc: Vec<f64>,
    pos: usize,
    windows: usize,
}

impl<'a> MatchedFilter<'a> {
    /// Starts at time 0, which is aligned by construction.
    pub fn new(bank: &'a TemplateBank) -> Self {
        Self { bank, acc: vec![0.0; bank.dim()], pos: 0, windows: 0 }
    }

    /// Adds one sample; returns the outcomes when a window completes.
    pub fn push(&mut self, v: f64) -> Option<OutcomeVector> {
        let dt = self.bank.sample_dt;
        for (a, t) in self.acc.iter_mut().zip(&self.bank.templates) {
            *a += v * t[self.pos] * dt;
        }
        self.pos += 1;
        if self.pos < self.bank.window_len() {
            return None;
        }
        self.pos = 0;
        self.windows += 1;
        let m = std::mem::replace(&mut self.acc, vec![0.0; self.bank.dim()]);
        Some(OutcomeVector { m, t: self.windows as f64 * self.bank.tau, tau: self.bank.tau })
    }
}

/// Outcomes of all complete windows of a record starting at `t = 0`.
pub fn filter_record(v: &[f64], bank: &TemplateBank) -> Vec<OutcomeVector> {
    let mut f = MatchedFilter::new(bank);
    v.iter().filter_map(|&x| f.push(x)).collect()
}

/// Outcomes of the windows [`crate::trajectories::fock_windows`] would return,
/// filtered as they are generated so the raw samples are never held.
pub fn fock_window_outcomes(engine: &QubitEngine, bank: &TemplateBank, n: usize, windows: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if engine.window_steps() != bank.window_len() {
        return Err(Error::DimensionMismatch { expected: bank.window_len(), found: engine.window_steps() });
    }
    let mut out = Vec::with_capacity(windows);
    for_each_fock_window(engine, n, windows, seed, |w| out.push(bank.templates.iter().map(|t| dot(w, t, bank.sample_dt)).collect()))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn analytic_signal_of_tones() {
        let n = 1024;
        let w = 2.0 * PI * 37.0 / n as f64;
        let x: Vec<f64> = (0..n).map(|j| (w * j as f64).cos()).collect();
        let z = analytic_signal(&x).unwrap();
        for (j, v) in z.iter().enumerate() {
            assert!((v - C64::from_polar(1.0, w * j as f64)).norm() < 1e-10);
            assert_abs_diff_eq!(v.re, x[j], epsilon = 1e-10);
        }
        let c = analytic_signal(&[2.5; 8]).unwrap();
        assert!(c.iter().all(|v| (v - C64::new(2.5, 0.0)).norm() < 1e-12));
        assert!(analytic_signal(&[1.0, 2.0]).is_err());
        // odd length keeps the real part too
        let y: Vec<f64> = (0..7).map(|j| (j as f64 * 0.3).sin() + 0.2).collect();
        let zy = analytic_signal(&y).unwrap();
        for (a, b) in zy.iter().zip(&y) {
            assert_abs_diff_eq!(a.re, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn demodulating_a_pure_tone_gives_a_constant_in_phase_component() {
        let p = SystemParams::paper();
        let dt = p.comb_period() / 224.0;
        let len = 224 * 14;
        let w = emission_frequency(&p, 1);
        let v: Vec<f64> = (0..len).map(|j| (w * (j as f64 + 0.5) * dt).cos()).collect();
        let q = demodulate_quadratures(&v, dt, 0.0, 1, &p, p.comb_period(), Some(0.0)).unwrap();
        for j in 200..len - 200 {
            assert_abs_diff_eq!(q.i[j], 1.0, epsilon = 1e-6);
            assert_abs_diff_eq!(q.q[j], 0.0, epsilon = 1e-6);
        }
        let zero = demodulate_quadratures(&vec![0.0; len], dt, 0.0, 3, &p, p.comb_period(), None).unwrap();
        assert!(zero.i.iter().chain(&zero.q).all(|x| *x == 0.0));
        assert!(matches!(
            demodulate_quadratures(&v, 1.0, 0.0, 1, &p, p.comb_period(), None),
            Err(Error::Aliasing { .. })
        ));
    }

    #[test]
    fn sample_covariance_of_known_vectors() {
        let s = vec![vec![1.0, 2.0], vec![3.0, 2.0], vec![2.0, 5.0]];
        let c = sample_covariance(&s).unwrap();
        assert_abs_diff_eq!(c[(0, 0)], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c[(1, 1)], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c[(0, 1)], 0.0, epsilon = 1e-14);
        assert!(sample_covariance(&s[..1]).is_err());
    }

    #[test]
    fn streaming_filter_matches_windowed_filter() {
        let t = vec![vec![1.0, 0.0, -1.0, 2.0], vec![0.5, 0.5, 0.5, 0.5]];
        let bank = TemplateBank::from_templates(t, 0.25, 0.5).unwrap();
        let v = [1.0, 2.0, 3.0, 4.0, -1.0, 0.0, 1.0, 0.0, 9.0];
        let out = filter_record(&v, &bank);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].m, bank.filter_window(&v[..4]).unwrap());
        assert_eq!(out[1].m, bank.filter_window(&v[4..8]).unwrap());
        assert_abs_diff_eq!(out[1].t, 2.0, epsilon = 1e-15);
        assert!(matches!(bank.matched_filter_outcomes(&v[..4], 0.3), Err(Error::Misaligned(_))));
        assert!(bank.matched_filter_outcomes(&v[..4], 1.0).is_ok());
    }
}
