//! Stochastic master equation unravelings and synthetic fluorescence records.
//!
//! Records are generated in the frame rotating at the comb reference, where the
//! qubit with `n` photons sits at `nχ` and the Hamiltonian is periodic in `π/χ`.
//! The recorded quadrature is the lab signal at the intermediate frequency, so the
//! monitored operator carries the phase `e^{-iω_IF t}`:
//! `dy = √(η/T_q) Tr[ρ (L + L†)] dt + dW` with `L = e^{-iω_IF t} σ₋`, and the
//! sampled voltage is `V = √G dy/dt`. Outcomes are drawn from the exact
//! one-step measurement density, so ensemble averages of states and records
//! follow the deterministic propagation without a discretization bias from the
//! measurement.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drive::{comb_envelope, qubit_hamiltonian, CombSpec};
use crate::dynamics::{apply_superop, hermitize_normalize, magnus4_propagator, Dissipator, SystemParams, TimeDependentHamiltonian};
use crate::error::{Error, Result};
use crate::hilbert::{pauli_ops, DensityMatrix, OperatorMatrix, C64, ONE, ZERO};
use crate::rng;

/// Smallest trace allowed after a measurement update before renormalization.
pub const NORM_COLLAPSE: f64 = 1e-6;

/// Ground truth of a record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhotonTruth {
    Fixed(usize),
    /// Photon number changes along the record; see [`JumpTruth`].
    Joint,
}

/// Sampled voltage `V(t) = √G dy/dt` at times `t0 + (j + 1/2) dt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoltageRecord {
    #[serde(skip)]
    pub samples: Vec<f64>,
    pub dt: f64,
    pub gain: f64,
    pub truth: PhotonTruth,
    pub seed: u64,
    /// Intermediate frequency the record is referenced to (rad/μs).
    pub omega_if: f64,
    pub t0: f64,
}

const RECORD_MAGIC: &[u8; 8] = b"FWREC001";

impl VoltageRecord {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t0 + (j as f64 + 0.5) * self.dt
    }

    /// Writes little-endian f64 samples to `path` and the metadata to `path.json`.
    pub fn write_binary(&self, path: &Path, params_hash: &str) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(RECORD_MAGIC)?;
        w.write_all(&(self.samples.len() as u64).to_le_bytes())?;
        for s in &self.samples {
            w.write_all(&s.to_le_bytes())?;
        }
        w.flush()?;
        let sidecar = serde_json::json!({
            "format": "FWREC001",
            "record": self,
            "samples": self.samples.len(),
            "params_hash": params_hash,
        });
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
        let mut record: VoltageRecord = serde_json::from_value(meta["record"].clone())?;
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != RECORD_MAGIC {
            return Err(Error::Format("not a voltage record file".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        let mut buf = vec![0u8; len * 8];
        r.read_exact(&mut buf)?;
        record.samples = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok(record)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "t_us,v")?;
        for (j, v) in self.samples.iter().enumerate() {
            writeln!(w, "{:.9},{:.12e}", self.time(j), v)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    p.into()
}

/// A monitored decay channel `rate · 𝔻_L` observed with efficiency `efficiency`.
#[derive(Clone, Debug)]
pub struct Measurement {
    pub rate: f64,
    pub op: OperatorMatrix,
    pub efficiency: f64,
}

/// Draws the normalized homodyne outcome `z = dy/√dt` from the density
/// `φ(z)(a + 2bz + cz²)`, where `φ` is the standard normal density, `a + c = 1`
/// and `a + 2bz + cz² ≥ 0`.
///
/// Rejection sampling from the mixture `∝ (a + |b|)φ(z) + (c + |b|)z²φ(z)`,
/// which dominates the target with acceptance `1/(1 + 2|b|)`.
pub fn sample_homodyne_outcome<R: Rng + ?Sized>(a: f64, b: f64, c: f64, rng: &mut R) -> f64 {
    let w = (c + b.abs()) / (a + c + 2.0 * b.abs());
    loop {
        let z: f64 = if w > 0.0 && rng.random::<f64>() < w {
            // z²φ(z): chi distribution with three degrees of freedom, random sign
            let r2: f64 = (0..3).map(|_| StandardNormal.sample(rng)).map(|x: f64| x * x).sum();
            if rng.random::<bool>() { r2.sqrt() } else { -r2.sqrt() }
        } else {
            StandardNormal.sample(rng)
        };
        if b == 0.0 && c == 0.0 {
            return z;
        }
        let accept = (a + 2.0 * b * z + c * z * z) / ((a + b.abs()) + (c + b.abs()) * z * z);
        if rng.random::<f64>() < accept {
            return z;
        }
    }
}

/// Complex analogue of [`sample_homodyne_outcome`]: `z` with `E|z|² = 1` under the
/// reference density `φ_c(z) = e^{-|z|²}/π`, drawn from `φ_c(z)(a + 2Re(z̄β) + c|z|²)`.
pub fn sample_heterodyne_outcome<R: Rng + ?Sized>(a: f64, beta: C64, c: f64, rng: &mut R) -> C64 {
    let nb = beta.norm();
    let w = (c + nb) / (a + c + 2.0 * nb);
    loop {
        let r2: f64 = if w > 0.0 && rng.random::<f64>() < w {
            // |z|²φ_c: |z|² ~ Gamma(2, 1)
            -(rng.random::<f64>().max(f64::MIN_POSITIVE)).ln() - (rng.random::<f64>().max(f64::MIN_POSITIVE)).ln()
        } else {
            -(rng.random::<f64>().max(f64::MIN_POSITIVE)).ln()
        };
        let z = C64::from_polar(r2.sqrt(), 2.0 * PI * rng.random::<f64>());
        if nb == 0.0 && c == 0.0 {
            return z;
        }
        let accept = (a + 2.0 * (z.conj() * beta).re + c * r2) / ((a + nb) + (c + nb) * r2);
        if rng.random::<f64>() < accept {
            return z;
        }
    }
}

/// One-step SME integrator for a fixed step size.
///
/// A step propagates over the first half step with the unmonitored dynamics
/// (Hamiltonian, other channels and `(1-η)γ𝔻_L`, fourth-order Magnus), applies
/// the measurement update `M(z)ρM(z)†/Tr` and propagates over the second half.
/// The measurement Kraus family is `M(z) = K₀ + z K₁` with
/// `K₁ = √p L`, `K₀ = (1 - p L†L)^{1/2}`, `p = 1 - e^{-ηγ dt}`, and the outcome is
/// drawn from its exact density `Tr[M(z)ρM(z)†]` relative to the white-noise
/// reference, so `dy = z√dt` has conditional mean `√(ηγ)⟨L + L†⟩dt + O(dt²)`.
/// The ensemble average of the update is then exactly the channel
/// `ρ ↦ K₀ρK₀ + pLρL†`, which for `L = σ₋` is the amplitude-damping channel
/// `exp(ηγ dt 𝔻_L)`. With `η = 0` the step is the deterministic two-half-step
/// Magnus propagation.
#[derive(Clone, Debug)]
pub struct SmeStepper {
    dt: f64,
    meas: Measurement,
    unmonitored: Vec<Dissipator>,
    p: f64,
    k0: DMatrix<C64>,
}

impl SmeStepper {
    pub fn new(meas: Measurement, others: &[Dissipator], dt: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&meas.efficiency) {
            return Err(Error::InvalidParameter { name: "eta", reason: format!("must lie in [0, 1], got {}", meas.efficiency) });
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter { name: "dt", reason: format!("must be positive, got {dt}") });
        }
        let dim = meas.op.dim();
        for (_, a) in others {
            if a.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: a.dim() });
            }
        }
        let mut unmonitored: Vec<Dissipator> = others.to_vec();
        unmonitored.push(((1.0 - meas.efficiency) * meas.rate, meas.op.clone()));
        let p = -(-meas.efficiency * meas.rate * dt).exp_m1();
        let mut ldl = OperatorMatrix::new(meas.op.matrix().adjoint() * meas.op.matrix())?;
        ldl.hermitize();
        let top = ldl.hermitian_eigenvalues().last().copied().unwrap_or(0.0);
        if p * top > 1.0 {
            return Err(Error::StepTooLarge { reason: format!("p‖L†L‖ = {:.3} exceeds 1", p * top), suggested_dt: 0.5 * dt / (p * top) });
        }
        let eig = ldl.into_matrix().symmetric_eigen();
        let roots = eig.eigenvalues.map(|l| C64::new((1.0 - p * l).max(0.0).sqrt(), 0.0));
        let k0 = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.adjoint();
        Ok(Self { dt, meas, unmonitored, p, k0 })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn check(&self, rho: &DensityMatrix, ham: &TimeDependentHamiltonian) -> Result<()> {
        let dim = self.meas.op.dim();
        for found in [rho.dim(), ham.dim()] {
            if found != dim {
                return Err(Error::DimensionMismatch { expected: dim, found });
            }
        }
        Ok(())
    }

    /// State after the first half step, and the Kraus operator `K₁` with the record phase.
    fn first_half(&self, rho: &DensityMatrix, ham: &TimeDependentHamiltonian, t: f64, phase: C64) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
        self.check(rho, ham)?;
        let pa = magnus4_propagator(ham, &self.unmonitored, t, 0.5 * self.dt);
        let sigma = apply_superop(&pa, rho.op().matrix());
        Ok((sigma, self.meas.op.matrix() * (phase * self.p.sqrt())))
    }

    fn second_half(&self, sigma: DMatrix<C64>, m: Option<DMatrix<C64>>, ham: &TimeDependentHamiltonian, t: f64) -> Result<DensityMatrix> {
        let sigma = match m {
            Some(m) => {
                let r = &m * sigma * m.adjoint();
                let tr = r.trace().re;
                if !(tr >= NORM_COLLAPSE) {
                    return Err(Error::StepTooLarge { reason: format!("trace {tr:.3e} after measurement update"), suggested_dt: 0.5 * self.dt });
                }
                r
            }
            None => sigma,
        };
        let pb = magnus4_propagator(ham, &self.unmonitored, t + 0.5 * self.dt, 0.5 * self.dt);
        let mut out = apply_superop(&pb, &sigma);
        hermitize_normalize(&mut out);
        Ok(DensityMatrix::new_unchecked(OperatorMatrix::new(out)?))
    }

    /// Homodyne step over `[t, t + dt]` for the given normalized outcome `z = dy/√dt`.
    pub fn apply_homodyne(&self, rho: &DensityMatrix, ham: &TimeDependentHamiltonian, t: f64, phase: C64, z: f64) -> Result<DensityMatrix> {
        let (sigma, k1) = self.first_half(rho, ham, t, phase)?;
        let m = (self.p > 0.0).then(|| &self.k0 + k1 * C64::new(z, 0.0));
        self.second_half(sigma, m, ham, t)
    }

    /// Homodyne step drawing the outcome; returns the new state and `dy`.
    /// `phase` multiplies the monitored operator.
    pub fn step_homodyne<R: Rng + ?Sized>(
        &self,
        rho: &DensityMatrix,
        ham: &TimeDependentHamiltonian,
        t: f64,
        phase: C64,
        rng: &mut R,
    ) -> Result<(DensityMatrix, f64)> {
        let (sigma, k1) = self.first_half(rho, ham, t, phase)?;
        let (a, b, c) = outcome_weights(&sigma, &self.k0, &k1);
        let z = sample_homodyne_outcome(a, b.re, c, rng);
        let m = (self.p > 0.0).then(|| &self.k0 + k1 * C64::new(z, 0.0));
        Ok((self.second_half(sigma, m, ham, t)?, z * self.dt.sqrt()))
    }

    /// Heterodyne step over `[t, t + dt]` for the given complex outcome `z = dy/√dt`, `E|z|² = 1`.
    pub fn apply_heterodyne(&self, rho: &DensityMatrix, ham: &TimeDependentHamiltonian, t: f64, phase: C64, z: C64) -> Result<DensityMatrix> {
        let (sigma, k1) = self.first_half(rho, ham, t, phase)?;
        let m = (self.p > 0.0).then(|| &self.k0 + k1 * z.conj());
        self.second_half(sigma, m, ham, t)
    }

    /// Heterodyne step drawing the outcome; `dy` has conditional mean `√(ηγ)⟨L⟩dt` to leading order.
    pub fn step_heterodyne<R: Rng + ?Sized>(
        &self,
        rho: &DensityMatrix,
        ham: &TimeDependentHamiltonian,
        t: f64,
        phase: C64,
        rng: &mut R,
    ) -> Result<(DensityMatrix, C64)> {
        let (sigma, k1) = self.first_half(rho, ham, t, phase)?;
        let (a, beta, c) = outcome_weights(&sigma, &self.k0, &k1);
        let z = sample_heterodyne_outcome(a, beta, c, rng);
        let m = (self.p > 0.0).then(|| &self.k0 + k1 * z.conj());
        Ok((self.second_half(sigma, m, ham, t)?, z * self.dt.sqrt()))
    }
}

/// `(Tr K₀σK₀†, Tr K₁σK₀†, Tr K₁σK₁†)`.
fn outcome_weights(sigma: &DMatrix<C64>, k0: &DMatrix<C64>, k1: &DMatrix<C64>) -> (f64, C64, f64) {
    let a = (k0 * sigma * k0.adjoint()).trace().re;
    let b = (k1 * sigma * k0.adjoint()).trace();
    let c = (k1 * sigma * k1.adjoint()).trace().re;
    (a, b, c)
}

/// Single homodyne SME step over `[t, t + dt]`; see [`SmeStepper`].
pub fn sme_step_homodyne<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    ham: &TimeDependentHamiltonian,
    t: f64,
    meas: &Measurement,
    others: &[Dissipator],
    dt: f64,
    rng: &mut R,
) -> Result<(DensityMatrix, f64)> {
    SmeStepper::new(meas.clone(), others, dt)?.step_homodyne(rho, ham, t, ONE, rng)
}

/// Single heterodyne SME step over `[t, t + dt]`; see [`SmeStepper`].
pub fn sme_step_heterodyne<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    ham: &TimeDependentHamiltonian,
    t: f64,
    meas: &Measurement,
    others: &[Dissipator],
    dt: f64,
    rng: &mut R,
) -> Result<(DensityMatrix, C64)> {
    SmeStepper::new(meas.clone(), others, dt)?.step_heterodyne(rho, ham, t, ONE, rng)
}

/// Qubit density matrix stored row-major as `[ρ_gg, ρ_ge, ρ_eg, ρ_ee]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QubitState(pub [C64; 4]);

/// 4×4 superoperator acting on [`QubitState`] entries, row-major.
type QubitSuperop = [C64; 16];

impl QubitState {
    pub fn ground() -> Self {
        Self([ONE, ZERO, ZERO, ZERO])
    }

    /// `Tr(ρσ₋) = ρ_eg`.
    pub fn coherence(&self) -> C64 {
        self.0[2]
    }

    pub fn sx(&self) -> f64 {
        2.0 * self.0[2].re
    }

    pub fn sy(&self) -> f64 {
        -2.0 * self.0[2].im
    }

    pub fn sz(&self) -> f64 {
        self.0[3].re - self.0[0].re
    }

    pub fn to_density_matrix(&self) -> DensityMatrix {
        DensityMatrix::new_unchecked(OperatorMatrix::new(DMatrix::from_row_slice(2, 2, &self.0)).expect("2x2"))
    }

    pub fn from_density_matrix(rho: &DensityMatrix) -> Result<Self> {
        if rho.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: rho.dim() });
        }
        let m = rho.op().matrix();
        Ok(Self([m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]]))
    }

    fn apply(&mut self, p: &QubitSuperop) {
        let r = self.0;
        for (i, out) in self.0.iter_mut().enumerate() {
            *out = p[4 * i] * r[0] + p[4 * i + 1] * r[1] + p[4 * i + 2] * r[2] + p[4 * i + 3] * r[3];
        }
    }

    /// `M ρ M†` with `M = [[1, b], [0, d]]`; returns the trace.
    fn measure(&mut self, b: C64, d: f64) -> f64 {
        let [r00, r01, r10, r11] = self.0;
        let top = r01 + b * r11;
        self.0 = [r00 + b * r10 + top * b.conj(), top * d, (r10 + r11 * b.conj()) * d, r11 * (d * d)];
        self.0[0].re + self.0[3].re
    }

    /// Amplitude damping with excited-state survival `1 - p`.
    fn damp(&mut self, p: f64) {
        let moved = self.0[3] * p;
        self.0[0] += moved;
        self.0[3] -= moved;
        let coh = (1.0 - p).sqrt();
        self.0[1] *= coh;
        self.0[2] *= coh;
    }

    fn hermitize_normalize(&mut self) {
        let tr = self.0[0].re + self.0[3].re;
        let off = (self.0[2] + self.0[1].conj()) * 0.5;
        self.0 = [C64::new(self.0[0].re / tr, 0.0), off.conj() / tr, off / tr, C64::new(self.0[3].re / tr, 0.0)];
    }
}

/// Reorders a column-stacked 2×2 superoperator to act on [`QubitState`] entries.
fn to_qubit_superop(p: &DMatrix<C64>) -> QubitSuperop {
    // QubitState index of entry (i, j) is 2i + j, column stacking uses i + 2j
    let vec_index = |q: usize| (q / 2) + 2 * (q % 2);
    let mut out = [ZERO; 16];
    for a in 0..4 {
        for b in 0..4 {
            out[4 * a + b] = p[(vec_index(a), vec_index(b))];
        }
    }
    out
}

/// Fast fixed-step integrator for the driven qubit, specialised to `L = σ₋`.
///
/// Performs the same steps as [`SmeStepper`] on the 2×2 problem, with the
/// half-step propagators tabulated over one comb period for each photon number
/// and the record phase `e^{-iω_IF t}` over its own repetition length.
#[derive(Clone, Debug)]
pub struct QubitEngine {
    dt: f64,
    steps_per_period: usize,
    window_steps: usize,
    /// `p = 1 - e^{-ηγ dt}`, weight of the monitored jump per step.
    p: f64,
    gain: f64,
    omega_if: f64,
    halves: Vec<Vec<[QubitSuperop; 2]>>,
    phases: Vec<C64>,
    comb_leakage: Vec<f64>,
}

impl QubitEngine {
    /// Engine for photon numbers `0..=max_photons`; the window is `spec.duration`.
    pub fn new(params: &SystemParams, spec: &CombSpec, gain: f64, max_photons: usize) -> Result<Self> {
        params.validate()?;
        spec.validate()?;
        if !(gain > 0.0) {
            return Err(Error::InvalidParameter { name: "gain", reason: format!("must be positive, got {gain}") });
        }
        let dt = spec.sample_dt;
        let spp = spec.steps_per_period();
        let gamma = params.gamma_q();
        let unmonitored = [((1.0 - params.eta) * gamma, pauli_ops().minus)];
        let halves = (0..=max_photons)
            .map(|n| {
                let h = qubit_hamiltonian(params, spec, n)?;
                Ok((0..spp)
                    .map(|j| {
                        let t = j as f64 * dt;
                        [
                            to_qubit_superop(&magnus4_propagator(&h, &unmonitored, t, 0.5 * dt)),
                            to_qubit_superop(&magnus4_propagator(&h, &unmonitored, t + 0.5 * dt, 0.5 * dt)),
                        ]
                    })
                    .collect())
            })
            .collect::<Result<Vec<Vec<_>>>>()?;
        let phase_len = spp * phase_repetition(params.omega_if * spec.period());
        let phases = (0..phase_len).map(|j| C64::from_polar(1.0, -params.omega_if * (j as f64 + 0.5) * dt)).collect();
        Ok(Self {
            dt,
            steps_per_period: spp,
            window_steps: spec.n_steps(),
            p: -(-params.eta * gamma * dt).exp_m1(),
            gain,
            omega_if: params.omega_if,
            halves,
            phases,
            comb_leakage: Vec::new(),
        })
    }

    /// Adds `amplitude · Re[e^{-iω_IF t} E(t)]/Ω` to every sample, mimicking an unsubtracted drive.
    pub fn with_comb_leakage(mut self, spec: &CombSpec, amplitude: f64) -> Self {
        let scale = if spec.omega > 0.0 { amplitude / spec.omega } else { 0.0 };
        self.comb_leakage = (0..self.phases.len())
            .map(|j| {
                let t = (j as f64 + 0.5) * self.dt;
                scale * (C64::from_polar(1.0, -self.omega_if * t) * comb_envelope(spec, t)).re
            })
            .collect();
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps_per_period(&self) -> usize {
        self.steps_per_period
    }

    pub fn window_steps(&self) -> usize {
        self.window_steps
    }

    pub fn max_photons(&self) -> usize {
        self.halves.len() - 1
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    /// Amplitude of the mean signal, `√(G p/dt) ≈ √(G η/T_q)`.
    pub fn signal_scale(&self) -> f64 {
        (self.gain * self.p / self.dt).sqrt()
    }

    fn halves(&self, n: usize, j: usize) -> &[QubitSuperop; 2] {
        &self.halves[n.min(self.halves.len() - 1)][j % self.steps_per_period]
    }

    fn phase(&self, j: usize) -> C64 {
        self.phases[j % self.phases.len()]
    }

    fn leakage(&self, j: usize) -> f64 {
        if self.comb_leakage.is_empty() {
            0.0
        } else {
            self.comb_leakage[j % self.comb_leakage.len()]
        }
    }

    /// Ensemble-mean evolution over step `j`; returns `Tr[K₁σK₀†]` with the record phase.
    fn mean_step(&self, s: &mut QubitState, n: usize, j: usize) -> C64 {
        let [pa, pb] = self.halves(n, j);
        s.apply(pa);
        let beta = self.phase(j) * s.coherence() * self.p.sqrt();
        s.damp(self.p);
        s.apply(pb);
        s.hermitize_normalize();
        beta
    }

    /// Conditional homodyne step; returns the normalized outcome `z` and its conditional mean.
    fn homodyne_step<R: Rng + ?Sized>(&self, s: &mut QubitState, n: usize, j: usize, rng: &mut R) -> Result<(f64, f64)> {
        let [pa, pb] = self.halves(n, j);
        s.apply(pa);
        let phase = self.phase(j);
        let sqp = self.p.sqrt();
        let b = (phase * s.coherence()).re * sqp;
        let c = self.p * s.0[3].re;
        let z = sample_homodyne_outcome(1.0 - c, b, c, rng);
        if self.p > 0.0 {
            let tr = s.measure(phase * (sqp * z), (1.0 - self.p).sqrt());
            if !(tr >= NORM_COLLAPSE) {
                return Err(Error::StepTooLarge { reason: format!("trace {tr:.3e} at step {j}"), suggested_dt: 0.5 * self.dt });
            }
        }
        s.apply(pb);
        s.hermitize_normalize();
        Ok((z, 2.0 * b))
    }

    /// Mean record `V̄_n` on steps `[start, start + len)` from the ground state at `t = 0`.
    pub fn mean_record(&self, n: usize, start: usize, len: usize) -> Vec<f64> {
        let mut s = QubitState::ground();
        let scale = (self.gain / self.dt).sqrt();
        let mut out = Vec::with_capacity(len);
        for j in 0..start + len {
            let beta = self.mean_step(&mut s, n, j);
            if j >= start {
                out.push(scale * 2.0 * beta.re + self.leakage(j));
            }
        }
        out
    }

    /// Ensemble-mean `⟨σx⟩` (frame of the comb reference) after each of `len` steps.
    pub fn lindblad_sx(&self, n: usize, len: usize) -> Vec<f64> {
        let mut s = QubitState::ground();
        (0..len)
            .map(|j| {
                self.mean_step(&mut s, n, j);
                s.sx()
            })
            .collect()
    }

    /// Matched-filter template: the mean record over the second window (the first is warm-up).
    pub fn template(&self, n: usize) -> Vec<f64> {
        self.mean_record(n, self.window_steps, self.window_steps)
    }

    /// Runs a homodyne trajectory from the ground state for `n_steps`, calling
    /// `sink(j, V_j)` for each sample. `photons(j)` gives the photon number at step `j`.
    pub fn run_homodyne<R: Rng + ?Sized>(
        &self,
        mut photons: impl FnMut(usize) -> usize,
        n_steps: usize,
        rng: &mut R,
        mut sink: impl FnMut(usize, f64),
    ) -> Result<QubitState> {
        let mut s = QubitState::ground();
        let v_scale = (self.gain / self.dt).sqrt();
        for j in 0..n_steps {
            let (z, _) = self.homodyne_step(&mut s, photons(j), j, rng)?;
            sink(j, v_scale * z + self.leakage(j));
        }
        Ok(s)
    }

    /// Heterodyne trajectory with `L = σ₋` (no IF phase); `observe(j, state, dy)` sees the state after each step.
    pub fn run_heterodyne<R: Rng + ?Sized>(
        &self,
        n: usize,
        n_steps: usize,
        rng: &mut R,
        mut observe: impl FnMut(usize, &QubitState, C64),
    ) -> Result<QubitState> {
        let mut s = QubitState::ground();
        let sqp = self.p.sqrt();
        let d = (1.0 - self.p).sqrt();
        let sqdt = self.dt.sqrt();
        for j in 0..n_steps {
            let [pa, pb] = self.halves(n, j);
            s.apply(pa);
            let c = self.p * s.0[3].re;
            let z = sample_heterodyne_outcome(1.0 - c, s.coherence() * sqp, c, rng);
            if self.p > 0.0 {
                let tr = s.measure(z.conj() * sqp, d);
                if !(tr >= NORM_COLLAPSE) {
                    return Err(Error::StepTooLarge { reason: format!("trace {tr:.3e} at step {j}"), suggested_dt: 0.5 * self.dt });
                }
            }
            s.apply(pb);
            s.hermitize_normalize();
            observe(j, &s, z * sqdt);
        }
        Ok(s)
    }
}

/// Smallest number of comb periods after which `e^{-iω_IF t}` repeats (falls back to 1 table entry per step over 1000 periods).
fn phase_repetition(phase_per_period: f64) -> usize {
    let turns = phase_per_period / (2.0 * PI);
    (1..=1000).find(|&l| ((l as f64 * turns) - (l as f64 * turns).round()).abs() < 1e-9).unwrap_or(1000)
}

/// States (sampled every `state_stride` steps), the voltage record and the
/// innovations `dy - E[dy | past]`.
#[derive(Clone, Debug)]
pub struct TrajectoryResult {
    pub states: Vec<(f64, DensityMatrix)>,
    pub record: VoltageRecord,
    pub innovations: Vec<f64>,
}

/// Homodyne record for a fixed photon number, from the ground state, with gain `G = 1`.
pub fn simulate_record(params: &SystemParams, spec: &CombSpec, n_true: usize, duration: f64, seed: u64) -> Result<TrajectoryResult> {
    simulate_record_with(params, spec, n_true, duration, seed, 1.0, 1)
}

pub fn simulate_record_with(
    params: &SystemParams,
    spec: &CombSpec,
    n_true: usize,
    duration: f64,
    seed: u64,
    gain: f64,
    state_stride: usize,
) -> Result<TrajectoryResult> {
    if n_true > params.n_max {
        return Err(Error::InvalidParameter { name: "n_true", reason: format!("must be <= n_max = {}, got {n_true}", params.n_max) });
    }
    let spec = spec.with_duration(duration)?;
    let engine = QubitEngine::new(params, &spec, gain, n_true)?;
    let n_steps = spec.n_steps();
    let mut rng = rng::stream(seed, "record", n_true as u64);
    let mut samples = Vec::with_capacity(n_steps);
    let mut innovations = Vec::with_capacity(n_steps);
    let mut states = Vec::new();
    let stride = state_stride.max(1);
    let mut s = QubitState::ground();
    let sqdt = engine.dt.sqrt();
    for j in 0..n_steps {
        let (z, mean) = engine.homodyne_step(&mut s, n_true, j, &mut rng)?;
        samples.push((gain / engine.dt).sqrt() * z);
        innovations.push((z - mean) * sqdt);
        if (j + 1) % stride == 0 {
            states.push(((j + 1) as f64 * engine.dt, s.to_density_matrix()));
        }
    }
    let record = VoltageRecord {
        samples,
        dt: engine.dt,
        gain,
        truth: PhotonTruth::Fixed(n_true),
        seed,
        omega_if: params.omega_if,
        t0: 0.0,
    };
    Ok(TrajectoryResult { states, record, innovations })
}

/// Record of pure white noise with variance `gain/dt` per sample: what a qubit
/// that stays in its ground state emits.
pub fn white_noise_record<R: Rng + ?Sized>(len: usize, dt: f64, gain: f64, rng: &mut R) -> Vec<f64> {
    let sd = (gain / dt).sqrt();
    (0..len).map(|_| sd * Distribution::<f64>::sample(&StandardNormal, rng)).collect()
}

/// `windows` consecutive steady windows with `n` photons, cut from one record
/// whose first window (the transient from the ground state) is dropped.
pub fn fock_windows(engine: &QubitEngine, n: usize, windows: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(windows);
    for_each_fock_window(engine, n, windows, seed, |w| out.push(w.to_vec()))?;
    Ok(out)
}

/// Same windows as [`fock_windows`], handed to `each` one at a time instead of stored.
pub fn for_each_fock_window(engine: &QubitEngine, n: usize, windows: usize, seed: u64, mut each: impl FnMut(&[f64])) -> Result<()> {
    let w = engine.window_steps();
    let mut rng = rng::stream(seed, "fock-windows", n as u64);
    let mut current = Vec::with_capacity(w);
    engine.run_homodyne(
        |_| n,
        (windows + 1) * w,
        &mut rng,
        |j, v| {
            if j >= w {
                current.push(v);
                if current.len() == w {
                    each(&current);
                    current.clear();
                }
            }
        },
    )?;
    Ok(())
}

/// Cavity photon-number history sampled from the pure-loss jump process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpTruth {
    pub initial_n: usize,
    /// Times of single-photon losses (μs), ascending.
    pub jump_times: Vec<f64>,
}

impl JumpTruth {
    pub fn photon_number_at(&self, t: f64) -> usize {
        self.initial_n - self.jump_times.iter().take_while(|&&tj| tj <= t).count()
    }

    /// Photon number on each integration step, a jump taking effect on the first step starting after it.
    pub fn per_step(&self, dt: f64, n_steps: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(n_steps);
        let mut n = self.initial_n;
        let mut next = 0;
        for j in 0..n_steps {
            let t = j as f64 * dt;
            while next < self.jump_times.len() && self.jump_times[next] <= t {
                n -= 1;
                next += 1;
            }
            out.push(n);
        }
        out
    }
}

/// Samples an initial photon number from `populations` and loss times with rate `n/T_c`.
pub fn sample_jump_truth<R: Rng + ?Sized>(populations: &[f64], t_c: f64, duration: f64, rng: &mut R) -> Result<JumpTruth> {
    let total: f64 = populations.iter().sum();
    if populations.iter().any(|&p| p < 0.0) || !(total > 0.0) {
        return Err(Error::InvalidState("populations must be non-negative with positive sum".into()));
    }
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut initial_n = populations.len() - 1;
    for (k, p) in populations.iter().enumerate() {
        acc += p;
        if u < acc {
            initial_n = k;
            break;
        }
    }
    let mut jump_times = Vec::new();
    let mut t = 0.0;
    let mut n = initial_n;
    while n > 0 && t_c.is_finite() {
        let wait: f64 = Exp::new(n as f64 / t_c).expect("positive rate").sample(rng);
        t += wait;
        if t >= duration {
            break;
        }
        jump_times.push(t);
        n -= 1;
    }
    Ok(JumpTruth { initial_n, jump_times })
}

/// Truncated Poisson populations `0..=cutoff` with mean parameter `nbar`.
pub fn poisson_populations(nbar: f64, cutoff: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(cutoff + 1);
    let mut term = (-nbar).exp();
    for k in 0..=cutoff {
        if k > 0 {
            term *= nbar / k as f64;
        }
        p.push(term);
    }
    let total: f64 = p.iter().sum();
    p.iter().map(|x| x / total).collect()
}

/// Record with photon losses plus its ground-truth staircase.
#[derive(Clone, Debug)]
pub struct JumpRecord {
    pub result: TrajectoryResult,
    pub truth: JumpTruth,
}

/// Runs a jump record without storing samples; `sink(j, V_j)` receives the voltage.
///
/// The cavity starts in a diagonal state and loses photons by the jump process of
/// `𝔻_a/T_c`. Conditioned on the photon number, the joint state stays `|n⟩⟨n| ⊗ ρ_q`
/// (the interaction is diagonal in `n` and the no-jump evolution of a Fock state is
/// trivial), so the qubit is integrated with the photon number switched at each loss.
pub fn run_jump_record(
    engine: &QubitEngine,
    truth: &JumpTruth,
    n_steps: usize,
    seed: u64,
    index: u64,
    sink: impl FnMut(usize, f64),
) -> Result<QubitState> {
    if truth.initial_n > engine.max_photons() {
        return Err(Error::InvalidParameter {
            name: "initial_n",
            reason: format!("engine covers up to {} photons, got {}", engine.max_photons(), truth.initial_n),
        });
    }
    let per_step = truth.per_step(engine.dt(), n_steps);
    let mut rng = rng::stream(seed, "jump-record-noise", index);
    engine.run_homodyne(|j| per_step[j], n_steps, &mut rng, sink)
}

/// Record from a diagonal initial cavity state, with loss at rate `1/T_c`.
pub fn simulate_jump_record(
    params: &SystemParams,
    spec: &CombSpec,
    initial_cavity: &DensityMatrix,
    duration: f64,
    seed: u64,
) -> Result<JumpRecord> {
    let pops = initial_cavity.populations();
    let offdiag = initial_cavity.op().max_abs_offdiagonal();
    if offdiag > 1e-12 {
        return Err(Error::InvalidState(format!("initial cavity state must be diagonal (off-diagonal {offdiag:.2e})")));
    }
    let spec = spec.with_duration(duration)?;
    let engine = QubitEngine::new(params, &spec, 1.0, pops.len() - 1)?;
    let mut rng = rng::stream(seed, "jump-truth", 0);
    let truth = sample_jump_truth(&pops, params.t_c, duration, &mut rng)?;
    let n_steps = spec.n_steps();
    let mut samples = Vec::with_capacity(n_steps);
    run_jump_record(&engine, &truth, n_steps, seed, 0, |_, v| samples.push(v))?;
    let record = VoltageRecord { samples, dt: engine.dt(), gain: 1.0, truth: PhotonTruth::Joint, seed, omega_if: params.omega_if, t0: 0.0 };
    Ok(JumpRecord { result: TrajectoryResult { states: Vec::new(), record, innovations: Vec::new() }, truth })
}

#[derive(Clone, Copy, Debug)]
pub enum EnsembleMode {
    Analytic,
    Stochastic { n_traj: usize, seed: u64 },
}

/// Mean record `V̄_n(t)` over `spec.duration` from the ground state, gain 1.
pub fn ensemble_mean_record(params: &SystemParams, spec: &CombSpec, n: usize, mode: EnsembleMode) -> Result<Vec<f64>> {
    if n > params.n_max {
        return Err(Error::InvalidParameter { name: "n", reason: format!("must be <= n_max = {}, got {n}", params.n_max) });
    }
    let engine = QubitEngine::new(params, spec, 1.0, n)?;
    let len = engine.window_steps();
    match mode {
        EnsembleMode::Analytic => Ok(engine.mean_record(n, 0, len)),
        EnsembleMode::Stochastic { n_traj, seed } => {
            let runs: Vec<Vec<f64>> = (0..n_traj)
                .into_par_iter()
                .map(|i| {
                    let mut rng = rng::stream(seed, "ensemble-mean", i as u64);
                    let mut v = Vec::with_capacity(len);
                    engine.run_homodyne(|_| n, len, &mut rng, |_, x| v.push(x)).map(|_| v)
                })
                .collect::<Result<_>>()?;
            let mut mean = vec![0.0; len];
            for run in &runs {
                for (m, x) in mean.iter_mut().zip(run) {
                    *m += x;
                }
            }
            Ok(mean.into_iter().map(|m| m / n_traj as f64).collect())
        }
    }
}

/// Ensemble of heterodyne `⟨σx⟩` trajectories for photon number `n`: returns
/// per-step mean and standard error over `n_traj` trajectories.
pub fn heterodyne_sx_ensemble(engine: &QubitEngine, n: usize, n_steps: usize, n_traj: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let chunk = 50usize;
    let n_chunks = n_traj.div_ceil(chunk);
    let sums: Vec<(Vec<f64>, Vec<f64>)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut s1 = vec![0.0; n_steps];
            let mut s2 = vec![0.0; n_steps];
            for i in (c * chunk)..((c + 1) * chunk).min(n_traj) {
                let mut rng = rng::stream(seed, "heterodyne-ensemble", i as u64);
                engine.run_heterodyne(n, n_steps, &mut rng, |j, s, _| {
                    let x = s.sx();
                    s1[j] += x;
                    s2[j] += x * x;
                })?;
            }
            Ok((s1, s2))
        })
        .collect::<Result<_>>()?;
    let mut s1 = vec![0.0; n_steps];
    let mut s2 = vec![0.0; n_steps];
    for (a, b) in &sums {
        for j in 0..n_steps {
            s1[j] += a[j];
            s2[j] += b[j];
        }
    }
    let nt = n_traj as f64;
    let mean: Vec<f64> = s1.iter().map(|s| s / nt).collect();
    let se = s2
        .iter()
        .zip(&mean)
        .map(|(s, m)| ((s / nt - m * m).max(0.0) * nt / (nt - 1.0) / nt).sqrt())
        .collect();
    Ok((mean, se))
}

/// Generic-path stepper for the driven qubit with `n` photons, for cross-checks of [`QubitEngine`].
pub fn qubit_sme_stepper(params: &SystemParams, spec: &CombSpec) -> Result<SmeStepper> {
    let meas = Measurement { rate: params.gamma_q(), op: pauli_ops().minus, efficiency: params.eta };
    SmeStepper::new(meas, &[], spec.sample_dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drive::qubit_hamiltonian;
    use crate::dynamics::{evolve_lindblad_with, Integrator};
    use approx::assert_abs_diff_eq;

    fn setup(theta: f64) -> (SystemParams, CombSpec) {
        let p = SystemParams::paper();
        let s = CombSpec::for_kick_angle(&p, theta, p.window()).unwrap();
        (p, s)
    }

    #[test]
    fn homodyne_outcomes_have_the_exact_moments() {
        // E z = 2b, E z² = a + 3c under φ(z)(a + 2bz + cz²)
        let m = 200_000;
        for (a, b, c) in [(1.0, 0.0, 0.0), (0.9, 0.2, 0.1), (0.5, -0.45, 0.5)] {
            let mut rng = rng::stream(1, "outcome", 0);
            let zs: Vec<f64> = (0..m).map(|_| sample_homodyne_outcome(a, b, c, &mut rng)).collect();
            let m1 = zs.iter().sum::<f64>() / m as f64;
            let m2 = zs.iter().map(|z| z * z).sum::<f64>() / m as f64;
            assert!((m1 - 2.0 * b).abs() < 5.0 * (2.0 / m as f64).sqrt(), "{m1} vs {}", 2.0 * b);
            assert!((m2 - (a + 3.0 * c)).abs() < 5.0 * (8.0 / m as f64).sqrt(), "{m2} vs {}", a + 3.0 * c);
        }
    }

    #[test]
    fn heterodyne_outcomes_have_the_exact_moments() {
        // E z = β, E|z|² = a + 2c
        let m = 200_000;
        for (a, beta, c) in [(1.0, ZERO, 0.0), (0.8, C64::new(0.1, -0.3), 0.2)] {
            let mut rng = rng::stream(2, "outcome", 0);
            let zs: Vec<C64> = (0..m).map(|_| sample_heterodyne_outcome(a, beta, c, &mut rng)).collect();
            let m1 = zs.iter().sum::<C64>() / m as f64;
            let m2 = zs.iter().map(|z| z.norm_sqr()).sum::<f64>() / m as f64;
            assert!((m1 - beta).norm() < 5.0 * (2.0 / m as f64).sqrt());
            assert!((m2 - (a + 2.0 * c)).abs() < 5.0 * (4.0 / m as f64).sqrt());
        }
    }

    #[test]
    fn fast_engine_matches_generic_stepper() {
        let (p, s) = setup(PI / 2.0);
        let n = 1;
        let engine = QubitEngine::new(&p, &s, 1.0, n).unwrap();
        let stepper = qubit_sme_stepper(&p, &s).unwrap();
        let h = qubit_hamiltonian(&p, &s, n).unwrap();
        let steps = 600;
        let mut rng = rng::stream(3, "t", 0);
        let mut fast_v = Vec::new();
        let fast_state = engine.run_homodyne(|_| n, steps, &mut rng, |_, v| fast_v.push(v)).unwrap();
        // replay the recorded outcomes on the generic path
        let mut rho = DensityMatrix::qubit_ground();
        for (j, v) in fast_v.iter().enumerate() {
            let t = j as f64 * engine.dt();
            let phase = C64::from_polar(1.0, -p.omega_if * (t + 0.5 * engine.dt()));
            rho = stepper.apply_homodyne(&rho, &h, t, phase, v * engine.dt().sqrt()).unwrap();
        }
        let generic = QubitState::from_density_matrix(&rho).unwrap();
        for k in 0..4 {
            assert!((generic.0[k] - fast_state.0[k]).norm() < 1e-10, "{:?} vs {:?}", generic, fast_state);
        }
        // heterodyne: same outcome replayed
        let mut rng = rng::stream(3, "h", 0);
        let mut rho = DensityMatrix::qubit_ground();
        let mut worst: f64 = 0.0;
        engine
            .run_heterodyne(n, 300, &mut rng, |j, st, dy| {
                rho = stepper.apply_heterodyne(&rho, &h, j as f64 * engine.dt(), ONE, dy / engine.dt().sqrt()).unwrap();
                let g = QubitState::from_density_matrix(&rho).unwrap();
                worst = worst.max((0..4).map(|k| (g.0[k] - st.0[k]).norm()).fold(0.0, f64::max));
            })
            .unwrap();
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn zero_efficiency_reduces_to_the_deterministic_propagation() {
        let (mut p, s) = setup(PI);
        p.eta = 0.0;
        let stepper = qubit_sme_stepper(&p, &s).unwrap();
        let h = qubit_hamiltonian(&p, &s, 0).unwrap();
        let diss = [(p.gamma_q(), pauli_ops().minus)];
        let steps = 100;
        let grid: Vec<f64> = (1..=steps).map(|j| j as f64 * 0.5 * s.sample_dt).collect();
        let det = evolve_lindblad_with(&DensityMatrix::qubit_ground(), &h, &diss, &grid, 0.5 * s.sample_dt, Integrator::Magnus4).unwrap();
        let mut rho = DensityMatrix::qubit_ground();
        let mut rng = rng::stream(4, "t", 0);
        for j in 0..steps / 2 {
            rho = stepper.step_homodyne(&rho, &h, j as f64 * s.sample_dt, ONE, &mut rng).unwrap().0;
            assert!((rho.op() - det[2 * j + 1].op()).max_abs() < 1e-13);
        }
    }

    #[test]
    fn ground_state_without_drive_gives_pure_noise() {
        let p = SystemParams::paper();
        let spec = CombSpec::for_kick_angle(&p, 0.0, p.window()).unwrap();
        let stepper = qubit_sme_stepper(&p, &spec).unwrap();
        let h = qubit_hamiltonian(&p, &spec, 0).unwrap();
        let rho = DensityMatrix::qubit_ground();
        let next = stepper.apply_homodyne(&rho, &h, 0.0, ONE, 2.5).unwrap();
        assert!((next.op() - rho.op()).max_abs() < 1e-15);
        let next = stepper.apply_heterodyne(&rho, &h, 0.0, ONE, C64::new(0.1, -0.2)).unwrap();
        assert!((next.op() - rho.op()).max_abs() < 1e-15);
    }

    #[test]
    fn collapse_is_reported() {
        // with γdt = 20 the no-click amplitude of |e⟩ is e^{-10}; z = 0 leaves almost nothing
        let meas = Measurement { rate: 20.0, op: pauli_ops().minus, efficiency: 1.0 };
        let h = TimeDependentHamiltonian::new(OperatorMatrix::zeros(2)).unwrap();
        let stepper = SmeStepper::new(meas, &[], 1.0).unwrap();
        let err = stepper.apply_homodyne(&DensityMatrix::qubit_excited(), &h, 0.0, ONE, 0.0);
        assert!(matches!(err, Err(Error::StepTooLarge { .. })), "{err:?}");
        let big = Measurement { rate: 1.0, op: pauli_ops().minus.scale_re(3.0), efficiency: 1.0 };
        assert!(matches!(SmeStepper::new(big, &[], 1.0), Err(Error::StepTooLarge { .. })));
    }

    #[test]
    fn generic_measurement_average_is_the_amplitude_damping_channel() {
        // E_z[M ρ M†] over the white-noise reference equals K₀ρK₀ + pLρL†
        let meas = Measurement { rate: 2.0, op: pauli_ops().minus, efficiency: 0.5 };
        let stepper = SmeStepper::new(meas, &[], 0.3).unwrap();
        let p = -(-0.3f64).exp_m1();
        assert_abs_diff_eq!(stepper.k0[(1, 1)].re, (1.0 - p).sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(stepper.k0[(0, 0)].re, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn jump_truth_staircase() {
        let mut rng = rng::stream(1, "t", 0);
        let truth = sample_jump_truth(&poisson_populations(20.0, 45), 200.0, 1000.0, &mut rng).unwrap();
        assert!(truth.jump_times.windows(2).all(|w| w[0] < w[1]));
        let steps = truth.per_step(0.5, 2000);
        assert!(steps.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(steps[0], truth.initial_n);
        let frozen = sample_jump_truth(&[0.0, 0.0, 1.0], f64::INFINITY, 1000.0, &mut rng).unwrap();
        assert!(frozen.jump_times.is_empty());
        assert_eq!(frozen.photon_number_at(999.0), 2);
    }

    #[test]
    fn deterministic_templates_repeat_every_window() {
        let (p, s) = setup(PI / 2.0);
        let engine = QubitEngine::new(&p, &s, 1.0, 3).unwrap();
        let w = engine.window_steps();
        let two = engine.mean_record(3, w, 2 * w);
        for j in 0..w {
            assert!((two[j] - two[j + w]).abs() < 1e-9 * (1.0 + two[j].abs()));
        }
    }
}
