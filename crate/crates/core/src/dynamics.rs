//! Deterministic Lindblad evolution, steady states and the single-tone reflection model.
//!
//! Time is in μs and angular frequencies in rad/μs.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    annihilation_op, dissipator_raw, pauli_ops, DensityMatrix, OperatorMatrix, C64, ONE, ZERO,
};

/// Physical parameters of the qubit/cavity system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    /// Dispersive shift per photon (rad/μs).
    pub chi: f64,
    /// Qubit radiative lifetime (μs).
    pub t_q: f64,
    /// Cavity lifetime (μs).
    pub t_c: f64,
    /// Cavity pure-dephasing time (μs).
    pub t_c_phi: f64,
    /// Cavity self-Kerr (rad/μs).
    pub chi_cc: f64,
    /// Detection efficiency.
    pub eta: f64,
    /// Intermediate frequency of the recorded signal (rad/μs).
    pub omega_if: f64,
    /// Largest resolved photon number.
    pub n_max: usize,
    /// Cavity Fock-space truncation.
    pub n_trunc: usize,
}

impl SystemParams {
    /// Main-text values (T_q = 23 ns, χ_cc/2π = 10 kHz).
    pub fn paper() -> Self {
        Self {
            chi: 2.0 * PI * 5.25,
            t_q: 0.023,
            t_c: 200.0,
            t_c_phi: 36.0,
            chi_cc: 2.0 * PI * 0.010,
            eta: 0.185,
            omega_if: 2.0 * PI * 66.0,
            n_max: 9,
            n_trunc: 12,
        }
    }

    /// Circuit-table values (T_q = 22 ns, χ_cc/2π = 9 kHz).
    pub fn paper_table() -> Self {
        Self { t_q: 0.022, chi_cc: 2.0 * PI * 0.009, ..Self::paper() }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "paper" => Some(Self::paper()),
            "paper_table" => Some(Self::paper_table()),
            _ => None,
        }
    }

    /// Every violated invariant, as `(field, reason)`.
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let positive = [
            ("chi", self.chi),
            ("t_q", self.t_q),
            ("t_c", self.t_c),
            ("t_c_phi", self.t_c_phi),
            ("omega_if", self.omega_if),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) && !(name == "t_c_phi" && v == f64::INFINITY) {
                out.push((name, format!("must be positive, got {v}")));
            }
        }
        if !(self.chi_cc.is_finite() && self.chi_cc >= 0.0) {
            out.push(("chi_cc", format!("must be non-negative, got {}", self.chi_cc)));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            out.push(("eta", format!("must lie in [0, 1], got {}", self.eta)));
        }
        if self.n_trunc < self.n_max {
            out.push(("n_trunc", format!("must be >= n_max = {}, got {}", self.n_max, self.n_trunc)));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some((name, reason)) => Err(Error::InvalidParameter { name, reason }),
        }
    }

    /// Comb period `π/χ`.
    pub fn comb_period(&self) -> f64 {
        PI / self.chi
    }

    /// Detector window `τ = 21π/χ`.
    pub fn window(&self) -> f64 {
        21.0 * self.comb_period()
    }

    /// Radiative decay rate `1/T_q`.
    pub fn gamma_q(&self) -> f64 {
        1.0 / self.t_q
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        Self::paper()
    }
}

pub type Envelope = Arc<dyn Fn(f64) -> C64 + Send + Sync>;

/// Term `f(t) A + conj(f(t)) A†` of a Hamiltonian.
#[derive(Clone)]
pub struct DriveTerm {
    pub op: OperatorMatrix,
    pub envelope: Envelope,
}

impl std::fmt::Debug for DriveTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DriveTerm").field("op", &self.op).finish_non_exhaustive()
    }
}

/// `H(t) = H0 + Σ_j [f_j(t) A_j + conj(f_j(t)) A_j†]`, Hermitian at every `t`.
#[derive(Clone, Debug)]
pub struct TimeDependentHamiltonian {
    static_part: OperatorMatrix,
    terms: Vec<DriveTerm>,
}

impl TimeDependentHamiltonian {
    pub fn new(static_part: OperatorMatrix) -> Result<Self> {
        let static_part = OperatorMatrix::hermitian(static_part.into_matrix())?;
        Ok(Self { static_part, terms: Vec::new() })
    }

    pub fn with_term(mut self, term: DriveTerm) -> Result<Self> {
        if term.op.dim() != self.static_part.dim() {
            return Err(Error::DimensionMismatch { expected: self.static_part.dim(), found: term.op.dim() });
        }
        self.terms.push(term);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.static_part.dim()
    }

    pub fn static_part(&self) -> &OperatorMatrix {
        &self.static_part
    }

    pub fn terms(&self) -> &[DriveTerm] {
        &self.terms
    }

    pub fn at(&self, t: f64) -> OperatorMatrix {
        let mut h = self.static_part.clone();
        for term in &self.terms {
            let f = (term.envelope)(t);
            if f == ZERO {
                continue;
            }
            let scaled = term.op.scale(f);
            h += &scaled;
            h += &scaled.adjoint();
        }
        h
    }
}

/// A dissipation channel `rate · 𝔻_A`.
pub type Dissipator = (f64, OperatorMatrix);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Exponential of the fourth-order Magnus expansion of the Liouvillian
    /// (two Gauss points per step). Works on `dim²` superoperators, so it suits
    /// small systems only.
    Magnus4,
    /// Classical fourth-order Runge–Kutta on the Lindblad right-hand side.
    Rk4,
}

impl Default for Integrator {
    fn default() -> Self {
        Integrator::Rk4
    }
}

impl Integrator {
    pub fn name(&self) -> &'static str {
        match self {
            Integrator::Magnus4 => "magnus4",
            Integrator::Rk4 => "rk4",
        }
    }
}

/// Lindblad right-hand side `-i[H, ρ] + Σ γ 𝔻_A(ρ)`.
pub fn lindblad_rhs(h: &OperatorMatrix, dissipators: &[Dissipator], rho: &OperatorMatrix) -> OperatorMatrix {
    let r = rho.matrix();
    let hm = h.matrix();
    let mut out = (hm * r - r * hm) * C64::new(0.0, -1.0);
    for (rate, a) in dissipators {
        out += dissipator_raw(a.matrix(), r).into_matrix() * C64::new(*rate, 0.0);
    }
    OperatorMatrix::new(out).expect("square")
}

/// Applies a column-stacked superoperator to `rho`.
pub(crate) fn apply_superop(p: &DMatrix<C64>, rho: &DMatrix<C64>) -> DMatrix<C64> {
    let dim = rho.nrows();
    let out = p * DMatrix::from_column_slice(dim * dim, 1, rho.as_slice());
    DMatrix::from_column_slice(dim, dim, out.as_slice())
}

pub(crate) fn hermitize_normalize(m: &mut DMatrix<C64>) -> f64 {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for k in (i + 1)..n {
            let avg = (m[(i, k)] + m[(k, i)].conj()) * 0.5;
            m[(i, k)] = avg;
            m[(k, i)] = avg.conj();
        }
    }
    let tr = m.trace().re;
    if tr > 0.0 {
        *m /= C64::new(tr, 0.0);
    }
    tr
}

/// Nonzero entries `(row, col, value)` of an operator.
type Sparse = Vec<(usize, usize, C64)>;

fn sparse(m: &DMatrix<C64>) -> Sparse {
    let mut out = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] != ZERO {
                out.push((i, j, m[(i, j)]));
            }
        }
    }
    out
}

/// The Lindblad generator prepared for repeated evaluation:
/// `-i(Kρ - ρK†) + Σ LρL†` with `K = H - (i/2)Σ L†L` and `L = √γ A`. The
/// operators met in practice are nearly diagonal, so products go through their
/// nonzero entries.
struct SparseGenerator {
    k_static: Sparse,
    /// Drive operators `A` and `A†` of each term.
    drives: Vec<(Sparse, Sparse)>,
    jumps: Vec<Sparse>,
}

impl SparseGenerator {
    fn new(h: &TimeDependentHamiltonian, dissipators: &[Dissipator]) -> Self {
        let mut k = h.static_part().matrix().clone();
        let mut jumps = Vec::new();
        for (rate, a) in dissipators {
            let l = a.matrix() * C64::new(rate.sqrt(), 0.0);
            k -= (l.adjoint() * &l) * C64::new(0.0, 0.5);
            jumps.push(sparse(&l));
        }
        let drives = h.terms().iter().map(|t| (sparse(t.op.matrix()), sparse(&t.op.matrix().adjoint()))).collect();
        Self { k_static: sparse(&k), drives, jumps }
    }

    fn rhs(&self, h: &TimeDependentHamiltonian, t: f64, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let n = rho.nrows();
        let mut out = DMatrix::<C64>::zeros(n, n);
        let mi = C64::new(0.0, -1.0);
        // -iKρ + iρK† from one entry v = K[r, c]
        let mut apply = |r: usize, c: usize, v: C64| {
            let a = mi * v;
            for j in 0..n {
                out[(r, j)] += a * rho[(c, j)];
            }
            let b = (mi * v).conj();
            for i in 0..n {
                out[(i, r)] += rho[(i, c)] * b;
            }
        };
        for &(r, c, v) in &self.k_static {
            apply(r, c, v);
        }
        for ((op, adj), term) in self.drives.iter().zip(h.terms()) {
            let f = (term.envelope)(t);
            if f == ZERO {
                continue;
            }
            for &(r, c, v) in op {
                apply(r, c, f * v);
            }
            for &(r, c, v) in adj {
                apply(r, c, f.conj() * v);
            }
        }
        for l in &self.jumps {
            for &(i, k, a) in l {
                for &(j, m, b) in l {
                    out[(i, j)] += a * rho[(k, m)] * b.conj();
                }
            }
        }
        out
    }
}

fn rk4_step(rho: &DMatrix<C64>, h: &TimeDependentHamiltonian, gen: &SparseGenerator, t: f64, dt: f64) -> DMatrix<C64> {
    let f = |tt: f64, r: &DMatrix<C64>| gen.rhs(h, tt, r);
    let c = |x: f64| C64::new(x, 0.0);
    let k1 = f(t, rho);
    let k2 = f(t + 0.5 * dt, &(rho + &k1 * c(0.5 * dt)));
    let k3 = f(t + 0.5 * dt, &(rho + &k2 * c(0.5 * dt)));
    let k4 = f(t + dt, &(rho + &k3 * c(dt)));
    let mut out = rho + (k1 + (k2 + k3) * c(2.0) + k4) * c(dt / 6.0);
    let n = out.nrows();
    for i in 0..n {
        out[(i, i)].im = 0.0;
        for k in (i + 1)..n {
            let avg = (out[(i, k)] + out[(k, i)].conj()) * 0.5;
            out[(i, k)] = avg;
            out[(k, i)] = avg.conj();
        }
    }
    out
}

fn check_dissipators(dim: usize, dissipators: &[Dissipator]) -> Result<()> {
    for (rate, a) in dissipators {
        if a.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: a.dim() });
        }
        if !(rate.is_finite() && *rate >= 0.0) {
            return Err(Error::InvalidParameter { name: "rate", reason: format!("must be non-negative, got {rate}") });
        }
    }
    Ok(())
}

/// Evolves `ρ0` and returns the state at each time of `t_grid` (ascending, starting at or after 0).
pub fn evolve_lindblad(
    rho0: &DensityMatrix,
    h: &TimeDependentHamiltonian,
    dissipators: &[Dissipator],
    t_grid: &[f64],
    dt: f64,
) -> Result<Vec<DensityMatrix>> {
    evolve_lindblad_with(rho0, h, dissipators, t_grid, dt, Integrator::default())
}

pub fn evolve_lindblad_with(
    rho0: &DensityMatrix,
    h: &TimeDependentHamiltonian,
    dissipators: &[Dissipator],
    t_grid: &[f64],
    dt: f64,
    integrator: Integrator,
) -> Result<Vec<DensityMatrix>> {
    if rho0.dim() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), found: rho0.dim() });
    }
    check_dissipators(h.dim(), dissipators)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter { name: "dt", reason: format!("must be positive, got {dt}") });
    }
    if t_grid.windows(2).any(|w| w[1] < w[0]) || t_grid.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidParameter { name: "t_grid", reason: "must be ascending and non-negative".into() });
    }
    let tol = rho0.tolerance();
    let gen = SparseGenerator::new(h, dissipators);
    let mut rho = rho0.op().matrix().clone();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(t_grid.len());
    for &target in t_grid {
        let span = target - t;
        if span > 0.0 {
            let steps = (span / dt - 1e-9).ceil().max(1.0) as usize;
            let h_step = span / steps as f64;
            for s in 0..steps {
                let ts = t + s as f64 * h_step;
                rho = match integrator {
                    Integrator::Magnus4 => {
                        let mut r = apply_superop(&magnus4_propagator(h, dissipators, ts, h_step), &rho);
                        hermitize_normalize(&mut r);
                        r
                    }
                    Integrator::Rk4 => rk4_step(&rho, h, &gen, ts, h_step),
                };
            }
            t = target;
        }
        let state = DensityMatrix::new_unchecked(OperatorMatrix::new(rho.clone())?);
        let lowest = state.min_eigenvalue();
        if lowest < -tol {
            return Err(Error::StepTooLarge {
                reason: format!("smallest eigenvalue {lowest:.3e} at t = {t:.4} us"),
                suggested_dt: 0.5 * dt,
            });
        }
        out.push(state);
    }
    Ok(out)
}

/// Column-stacked Liouvillian: `vec(AρB) = (Bᵀ ⊗ A) vec(ρ)`.
pub fn liouvillian(h: &OperatorMatrix, dissipators: &[Dissipator]) -> DMatrix<C64> {
    let n = h.dim();
    let id = DMatrix::<C64>::identity(n, n);
    let hm = h.matrix();
    let mi = C64::new(0.0, -1.0);
    let mut l = (id.kronecker(hm) - hm.transpose().kronecker(&id)) * mi;
    for (rate, a) in dissipators {
        let am = a.matrix();
        let ada = am.adjoint() * am;
        let term = am.conjugate().kronecker(am)
            - (id.kronecker(&ada) + ada.transpose().kronecker(&id)) * C64::new(0.5, 0.0);
        l += term * C64::new(*rate, 0.0);
    }
    l
}

/// Fourth-order Magnus approximation of the propagator of `-i[H(t), ·] + Σ γ 𝔻_A`
/// over `[t0, t0 + h]`, as a column-stacked superoperator.
pub fn magnus4_propagator(ham: &TimeDependentHamiltonian, dissipators: &[Dissipator], t0: f64, h: f64) -> DMatrix<C64> {
    let offset = 3f64.sqrt() / 6.0;
    let l1 = liouvillian(&ham.at(t0 + h * (0.5 - offset)), dissipators);
    let l2 = liouvillian(&ham.at(t0 + h * (0.5 + offset)), dissipators);
    let comm = &l2 * &l1 - &l1 * &l2;
    let omega = (&l1 + &l2) * C64::new(0.5 * h, 0.0) + comm * C64::new(3f64.sqrt() / 12.0 * h * h, 0.0);
    omega.exp()
}

/// Unique stationary state of a time-independent Lindbladian.
pub fn steady_state(h: &OperatorMatrix, dissipators: &[Dissipator]) -> Result<DensityMatrix> {
    let n = h.dim();
    check_dissipators(n, dissipators)?;
    let l = liouvillian(h, dissipators);
    // null space of L = null space of L†L; eigenvalues of the Hermitian L†L come sorted below
    let lhl = l.adjoint() * &l;
    let eig = lhl.symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1e-300);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let null_tol = 1e-20 * scale.max(1.0);
    let null_dim = order.iter().take_while(|&&i| eig.eigenvalues[i].abs() <= null_tol).count();
    if null_dim > 1 {
        return Err(Error::NonUniqueSteadyState(null_dim));
    }
    let v = eig.eigenvectors.column(order[0]);
    let mut rho = DMatrix::from_fn(n, n, |i, j| v[j * n + i]);
    let tr = rho.trace();
    if tr.norm() < 1e-14 {
        return Err(Error::NonUniqueSteadyState(0));
    }
    rho /= tr;
    hermitize_normalize(&mut rho);
    let state = DensityMatrix::new(OperatorMatrix::new(rho)?)?;
    let resid = lindblad_rhs(h, dissipators, state.op()).max_abs();
    if resid > 1e-10 * (1.0 + h.max_abs()) {
        return Err(Error::NonUniqueSteadyState(0));
    }
    Ok(state)
}

/// Ratio `⟨a_out⟩/⟨a_in⟩` for a weak coherent tone reflected off the qubit with `n` cavity photons.
///
/// `omega_drive` is measured from the zero-photon qubit frequency and the `n`-photon
/// transition sits at `-nχ`. The input amplitude is `⟨a_in⟩ = Ω√T_q/2` and the output
/// field follows `a_out = a_in - σ₋/√T_q`.
pub fn reflection_coefficient(params: &SystemParams, omega_drive: f64, omega: f64, n: usize) -> Result<C64> {
    if !(omega > 0.0) {
        return Err(Error::InvalidParameter { name: "omega", reason: format!("must be positive, got {omega}") });
    }
    let p = pauli_ops();
    // qubit frequency minus drive frequency in the frame of the tone
    let detuning = -(n as f64) * params.chi - omega_drive;
    let h = &excited(detuning) + &p.y.scale_re(-0.5 * omega);
    let ss = steady_state(&h, &[(params.gamma_q(), p.minus.clone())])?;
    let sm = ss.op().get(1, 0);
    Ok(ONE - sm * (2.0 / (omega * params.t_q)))
}

fn excited(energy: f64) -> OperatorMatrix {
    OperatorMatrix::diagonal(&[ZERO, C64::new(energy, 0.0)])
}

/// Cavity-only evolution under `-χ_cc a†²a²` and `(2/T_cφ) 𝔻_{a†a}`.
///
/// The generator is diagonal in the Fock basis, so each element is propagated exactly:
/// `ρ_mn(t) = ρ_mn(0) exp(-i(E_m - E_n)t - (m - n)² t / T_cφ)`.
pub fn evolve_cavity_kerr(rho0: &DensityMatrix, params: &SystemParams, t_grid: &[f64]) -> Result<Vec<DensityMatrix>> {
    let dim = rho0.dim();
    if dim != params.n_trunc + 1 {
        return Err(Error::DimensionMismatch { expected: params.n_trunc + 1, found: dim });
    }
    let energy = |m: usize| -params.chi_cc * (m as f64) * (m as f64 - 1.0);
    let deph = if params.t_c_phi.is_finite() { 1.0 / params.t_c_phi } else { 0.0 };
    let r0 = rho0.op().matrix();
    t_grid
        .iter()
        .map(|&t| {
            let mat = DMatrix::from_fn(dim, dim, |m, n| {
                let d = m as f64 - n as f64;
                let phase = -(energy(m) - energy(n)) * t;
                r0[(m, n)] * C64::from_polar((-d * d * t * deph).exp(), phase)
            });
            Ok(DensityMatrix::new_unchecked(OperatorMatrix::new(mat)?))
        })
        .collect()
}

/// Kerr Hamiltonian `-χ_cc a†²a²` on the cavity space.
pub fn kerr_hamiltonian(params: &SystemParams) -> Result<OperatorMatrix> {
    let a = annihilation_op(params.n_trunc)?;
    let ad = a.adjoint();
    Ok((&(&ad * &ad) * &(&a * &a)).scale_re(-params.chi_cc))
}
