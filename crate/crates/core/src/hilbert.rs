//! Operators, states and phase-space maps on the truncated qubit ⊗ cavity space.
//!
//! Joint operators use the ordering qubit ⊗ cavity with the qubit index slow:
//! basis index `q * (n_trunc + 1) + c`, where `q = 0` is the ground state and
//! `c` is the cavity Fock number. Units are ħ = 1 throughout.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Default tolerance on trace and positivity for [`DensityMatrix`].
pub const DEFAULT_STATE_TOLERANCE: f64 = 1e-9;

/// Bound on `max|A - A†|` for an operator to count as Hermitian.
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;

/// Dense complex square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    mat: DMatrix<C64>,
}

impl OperatorMatrix {
    pub fn new(mat: DMatrix<C64>) -> Result<Self> {
        if !mat.is_square() || mat.nrows() == 0 {
            return Err(Error::InvalidDimension(format!(
                "operator must be square and non-empty, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        Ok(Self { mat })
    }

    /// Builds an operator and checks that it is Hermitian.
    pub fn hermitian(mat: DMatrix<C64>) -> Result<Self> {
        let op = Self::new(mat)?;
        let defect = op.hermitian_defect();
        if defect >= HERMITIAN_TOLERANCE {
            return Err(Error::InvalidParameter {
                name: "operator",
                reason: format!("not Hermitian: max|A - A†| = {defect:.3e}"),
            });
        }
        Ok(op)
    }

    pub fn zeros(dim: usize) -> Self {
        Self { mat: DMatrix::zeros(dim, dim) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { mat: DMatrix::identity(dim, dim) }
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self { mat: DMatrix::from_fn(dim, dim, f) }
    }

    pub fn diagonal(values: &[C64]) -> Self {
        let n = values.len();
        Self::from_fn(n, |i, j| if i == j { values[i] } else { ZERO })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.mat[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Self { mat: self.mat.adjoint() }
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { mat: &self.mat * s }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    /// `max_ij |A_ij - conj(A_ji)|`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.mat[(i, j)] - self.mat[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_defect() < tol
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.mat.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn max_abs_offdiagonal(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    worst = worst.max(self.mat[(i, j)].norm());
                }
            }
        }
        worst
    }

    pub fn commutator(&self, other: &Self) -> Self {
        Self { mat: &self.mat * &other.mat - &other.mat * &self.mat }
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self { mat: self.mat.kronecker(&other.mat) }
    }

    /// Replaces the operator by its Hermitian part `(A + A†)/2`.
    pub fn hermitize(&mut self) {
        let n = self.dim();
        for i in 0..n {
            self.mat[(i, i)].im = 0.0;
            for j in (i + 1)..n {
                let avg = (self.mat[(i, j)] + self.mat[(j, i)].conj()) * 0.5;
                self.mat[(i, j)] = avg;
                self.mat[(j, i)] = avg.conj();
            }
        }
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(())
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let mut vals: Vec<f64> = self.mat.clone().symmetric_eigenvalues().iter().copied().collect();
        vals.sort_by(f64::total_cmp);
        vals
    }

    /// `exp(-i H t)` for a Hermitian `H`, by eigendecomposition.
    pub fn unitary_propagator(&self, t: f64) -> Self {
        let eig = self.mat.clone().symmetric_eigen();
        let phases = DMatrix::from_diagonal(&DVector::from_iterator(
            self.dim(),
            eig.eigenvalues.iter().map(|&e| C64::from_polar(1.0, -e * t)),
        ));
        let v = &eig.eigenvectors;
        Self { mat: v * phases * v.adjoint() }
    }
}

impl Add for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix { mat: &self.mat + &rhs.mat }
    }
}

impl Add for OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix { mat: self.mat + rhs.mat }
    }
}

impl AddAssign<&OperatorMatrix> for OperatorMatrix {
    fn add_assign(&mut self, rhs: &OperatorMatrix) {
        self.mat += &rhs.mat;
    }
}

impl Sub for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix { mat: &self.mat - &rhs.mat }
    }
}

impl Sub for OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix { mat: self.mat - rhs.mat }
    }
}

impl Mul for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix { mat: &self.mat * &rhs.mat }
    }
}

impl Mul for OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix { mat: self.mat * rhs.mat }
    }
}

impl Neg for OperatorMatrix {
    type Output = OperatorMatrix;
    fn neg(self) -> OperatorMatrix {
        OperatorMatrix { mat: -self.mat }
    }
}

/// Cavity annihilation operator on `n_trunc + 1` Fock levels.
pub fn annihilation_op(n_trunc: usize) -> Result<OperatorMatrix> {
    if n_trunc < 1 {
        return Err(Error::InvalidDimension(format!("cavity truncation must be >= 1, got {n_trunc}")));
    }
    let dim = n_trunc + 1;
    Ok(OperatorMatrix::from_fn(dim, |i, j| {
        if j == i + 1 {
            C64::new((j as f64).sqrt(), 0.0)
        } else {
            ZERO
        }
    }))
}

/// Cavity photon-number operator `a†a`.
pub fn number_op(n_trunc: usize) -> Result<OperatorMatrix> {
    let a = annihilation_op(n_trunc)?;
    Ok(&a.adjoint() * &a)
}

/// Single-qubit operators with index 0 = ground, `σz|g⟩ = -|g⟩`.
#[derive(Clone, Debug)]
pub struct Paulis {
    pub x: OperatorMatrix,
    pub y: OperatorMatrix,
    pub z: OperatorMatrix,
    /// Lowering operator `|g⟩⟨e| = (σx - iσy)/2`.
    pub minus: OperatorMatrix,
}

pub fn pauli_ops() -> Paulis {
    let m = |a: [C64; 4]| OperatorMatrix { mat: DMatrix::from_row_slice(2, 2, &a) };
    Paulis {
        x: m([ZERO, ONE, ONE, ZERO]),
        y: m([ZERO, I, -I, ZERO]),
        z: m([-ONE, ZERO, ZERO, ONE]),
        minus: m([ZERO, ONE, ZERO, ZERO]),
    }
}

/// Projector on the excited qubit state.
pub fn excited_projector() -> OperatorMatrix {
    OperatorMatrix::diagonal(&[ZERO, ONE])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subsystem {
    Qubit,
    Cavity,
}

/// Embeds a single-subsystem operator into the joint space (`a ⊗ 1` or `1 ⊗ a`).
pub fn tensor_embed(op: &OperatorMatrix, which: Subsystem, n_trunc: usize) -> Result<OperatorMatrix> {
    let cav_dim = n_trunc + 1;
    match which {
        Subsystem::Qubit => {
            if op.dim() != 2 {
                return Err(Error::DimensionMismatch { expected: 2, found: op.dim() });
            }
            Ok(op.kron(&OperatorMatrix::identity(cav_dim)))
        }
        Subsystem::Cavity => {
            if op.dim() != cav_dim {
                return Err(Error::DimensionMismatch { expected: cav_dim, found: op.dim() });
            }
            Ok(OperatorMatrix::identity(2).kron(op))
        }
    }
}

/// Lindblad dissipator `A ρ A† - (A†A ρ + ρ A†A)/2`.
pub fn dissipator_apply(a: &OperatorMatrix, rho: &DensityMatrix) -> Result<OperatorMatrix> {
    a.check_dim(rho.op())?;
    Ok(dissipator_raw(a.matrix(), rho.op().matrix()))
}

pub(crate) fn dissipator_raw(a: &DMatrix<C64>, rho: &DMatrix<C64>) -> OperatorMatrix {
    let ad = a.adjoint();
    let ada = &ad * a;
    let mat = a * rho * &ad - (&ada * rho + rho * &ada) * C64::new(0.5, 0.0);
    OperatorMatrix { mat }
}

/// `Tr(ρ A)`.
pub fn expectation(rho: &DensityMatrix, a: &OperatorMatrix) -> Result<C64> {
    a.check_dim(rho.op())?;
    let r = rho.op().matrix();
    let m = a.matrix();
    let n = r.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += r[(i, k)] * m[(k, i)];
        }
    }
    Ok(acc)
}

/// A validated density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    op: OperatorMatrix,
    tolerance: f64,
}

impl DensityMatrix {
    pub fn new(op: OperatorMatrix) -> Result<Self> {
        Self::with_tolerance(op, DEFAULT_STATE_TOLERANCE)
    }

    pub fn with_tolerance(op: OperatorMatrix, tolerance: f64) -> Result<Self> {
        let state = Self { op, tolerance };
        state.validate()?;
        Ok(state)
    }

    pub(crate) fn new_unchecked(op: OperatorMatrix) -> Self {
        Self { op, tolerance: DEFAULT_STATE_TOLERANCE }
    }

    pub fn validate(&self) -> Result<()> {
        let tr = self.op.trace();
        if (tr - ONE).norm() >= self.tolerance {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let defect = self.op.hermitian_defect();
        if defect >= HERMITIAN_TOLERANCE {
            return Err(Error::InvalidState(format!("not Hermitian (defect {defect:.3e})")));
        }
        let lowest = self.min_eigenvalue();
        if lowest <= -self.tolerance {
            return Err(Error::InvalidState(format!("negative eigenvalue {lowest:.3e}")));
        }
        Ok(())
    }

    pub fn from_ket(ket: &[C64]) -> Result<Self> {
        let v = DVector::from_column_slice(ket);
        let norm = v.norm();
        if norm == 0.0 {
            return Err(Error::InvalidState("zero vector".into()));
        }
        let v = v / C64::new(norm, 0.0);
        Self::new(OperatorMatrix::new(&v * v.adjoint())?)
    }

    /// Diagonal state with the given populations (renormalized).
    pub fn from_populations(p: &[f64]) -> Result<Self> {
        let total: f64 = p.iter().sum();
        if p.iter().any(|&x| x < 0.0) || total <= 0.0 {
            return Err(Error::InvalidState("populations must be non-negative".into()));
        }
        let diag: Vec<C64> = p.iter().map(|&x| C64::new(x / total, 0.0)).collect();
        Self::new(OperatorMatrix::diagonal(&diag))
    }

    pub fn fock(n_trunc: usize, n: usize) -> Result<Self> {
        if n > n_trunc {
            return Err(Error::InvalidDimension(format!("Fock level {n} above truncation {n_trunc}")));
        }
        let mut ket = vec![ZERO; n_trunc + 1];
        ket[n] = ONE;
        Self::from_ket(&ket)
    }

    /// Coherent state `|α⟩` on `n_trunc + 1` levels, renormalized after truncation.
    pub fn coherent(n_trunc: usize, alpha: C64) -> Result<Self> {
        Self::from_ket(&coherent_ket(n_trunc, alpha))
    }

    pub fn qubit_ground() -> Self {
        Self::new_unchecked(OperatorMatrix::diagonal(&[ONE, ZERO]))
    }

    pub fn qubit_excited() -> Self {
        Self::new_unchecked(OperatorMatrix::diagonal(&[ZERO, ONE]))
    }

    /// `ρ_qubit ⊗ ρ_cavity`.
    pub fn product(qubit: &DensityMatrix, cavity: &DensityMatrix) -> Result<Self> {
        if qubit.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: qubit.dim() });
        }
        Ok(Self::new_unchecked(qubit.op.kron(&cavity.op)))
    }

    pub fn op(&self) -> &OperatorMatrix {
        &self.op
    }

    pub fn into_op(self) -> OperatorMatrix {
        self.op
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.op.hermitian_eigenvalues().first().copied().unwrap_or(0.0)
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.op.get(i, i).re).collect()
    }

    pub fn purity(&self) -> f64 {
        (self.op.matrix() * self.op.matrix()).trace().re
    }

    /// Half the trace norm of the difference.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        self.op.check_dim(&other.op)?;
        let diff = &self.op - &other.op;
        Ok(0.5 * diff.hermitian_eigenvalues().iter().map(|e| e.abs()).sum::<f64>())
    }

    /// Reduced cavity state of a joint qubit ⊗ cavity state.
    pub fn partial_trace_qubit(&self) -> Result<DensityMatrix> {
        let dim = self.dim();
        if dim % 2 != 0 {
            return Err(Error::InvalidDimension(format!("joint dimension {dim} is odd")));
        }
        let c = dim / 2;
        let m = self.op.matrix();
        let red = DMatrix::from_fn(c, c, |i, j| m[(i, j)] + m[(c + i, c + j)]);
        Ok(Self { op: OperatorMatrix { mat: red }, tolerance: self.tolerance })
    }

    /// Reduced qubit state of a joint qubit ⊗ cavity state.
    pub fn partial_trace_cavity(&self) -> Result<DensityMatrix> {
        let dim = self.dim();
        if dim % 2 != 0 {
            return Err(Error::InvalidDimension(format!("joint dimension {dim} is odd")));
        }
        let c = dim / 2;
        let m = self.op.matrix();
        let red = DMatrix::from_fn(2, 2, |a, b| (0..c).map(|k| m[(a * c + k, b * c + k)]).sum());
        Ok(Self { op: OperatorMatrix { mat: red }, tolerance: self.tolerance })
    }
}

pub(crate) fn coherent_ket(n_trunc: usize, alpha: C64) -> Vec<C64> {
    let mut ket = Vec::with_capacity(n_trunc + 1);
    let mut amp = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for n in 0..=n_trunc {
        if n > 0 {
            amp = amp * alpha / (n as f64).sqrt();
        }
        ket.push(amp);
    }
    ket
}

/// Square lattice of phase-space points `α = x + i y`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGrid {
    pub axis: Vec<f64>,
    pub step: f64,
}

impl PhaseGrid {
    /// Points `-half_width ..= half_width` along both axes.
    pub fn square(half_width: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && half_width > 0.0) {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: format!("need positive step and extent, got step={step}, half_width={half_width}"),
            });
        }
        let n = (half_width / step - 1e-9).ceil() as i64;
        let axis = (-n..=n).map(|k| k as f64 * step).collect();
        Ok(Self { axis, step })
    }

    /// Grid with extent `sqrt(n_trunc) + 3`, large enough for states up to `n_trunc` photons.
    pub fn covering(n_trunc: usize, step: f64) -> Result<Self> {
        Self::square((n_trunc as f64).sqrt() + 3.0, step)
    }

    pub fn half_width(&self) -> f64 {
        self.axis.last().copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.axis.len() * self.axis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axis.is_empty()
    }

    /// Iterates `(flat_index, α)` with the imaginary part as the slow index.
    pub fn points(&self) -> impl Iterator<Item = (usize, C64)> + '_ {
        let n = self.axis.len();
        self.axis
            .iter()
            .enumerate()
            .flat_map(move |(iy, &y)| self.axis.iter().enumerate().map(move |(ix, &x)| (iy * n + ix, C64::new(x, y))))
    }
}

/// Wigner function sampled on a [`PhaseGrid`], normalized so that `∫ W d²α = 1`.
#[derive(Clone, Debug)]
pub struct WignerMap {
    pub grid: PhaseGrid,
    pub values: Vec<f64>,
    /// Grid-quality notes (coarse step, truncated support).
    pub warnings: Vec<String>,
}

impl WignerMap {
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.step * self.grid.step
    }

    pub fn value_at(&self, alpha: C64) -> Option<f64> {
        let n = self.grid.axis.len();
        let locate = |v: f64| {
            let k = ((v + self.grid.half_width()) / self.grid.step).round();
            (k >= 0.0 && (k as usize) < n).then_some(k as usize)
        };
        Some(self.values[locate(alpha.im)? * n + locate(alpha.re)?])
    }

    /// Grid point with the largest value.
    pub fn argmax(&self) -> C64 {
        let (idx, _) = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
        let n = self.grid.axis.len();
        C64::new(self.grid.axis[idx % n], self.grid.axis[idx / n])
    }

    /// `∫ α W(α) d²α = ⟨a⟩`.
    pub fn mean_field(&self) -> C64 {
        let h2 = self.grid.step * self.grid.step;
        self.grid.points().map(|(i, a)| a * self.values[i]).sum::<C64>() * h2
    }
}

/// Generalized Laguerre polynomials `L_n^{(k)}(x)` for `n = 0..=n_max`.
fn laguerre_column(n_max: usize, k: usize, x: f64, out: &mut Vec<f64>) {
    out.clear();
    let kf = k as f64;
    out.push(1.0);
    if n_max >= 1 {
        out.push(1.0 + kf - x);
    }
    for n in 1..n_max {
        let nf = n as f64;
        let next = ((2.0 * nf + 1.0 + kf - x) * out[n] - (nf + kf) * out[n - 1]) / (nf + 1.0);
        out.push(next);
    }
}

/// Wigner function of a cavity state, `W(α) = (2/π) Tr[D(-α) ρ D(α) Π]`.
///
/// Evaluated in closed form through the Fock-basis matrix elements
/// `W_{|m⟩⟨n|}(α) = (2/π)(-1)^n sqrt(n!/m!) (2α*)^{m-n} e^{-2|α|²} L_n^{(m-n)}(4|α|²)`, `m ≥ n`.
pub fn wigner_map(rho_cavity: &DensityMatrix, grid: &PhaseGrid) -> WignerMap {
    let dim = rho_cavity.dim();
    let n_trunc = dim - 1;
    let rho = rho_cavity.op().matrix();
    // sqrt(n!/m!) for m = n + k
    let ratio = |n: usize, m: usize| -> f64 { ((n + 1)..=m).map(|j| 1.0 / (j as f64).sqrt()).product() };

    let mut values = vec![0.0; grid.len()];
    let mut lag = Vec::with_capacity(dim);
    for (idx, alpha) in grid.points() {
        let r2 = alpha.norm_sqr();
        let x = 4.0 * r2;
        let gauss = (-2.0 * r2).exp();
        if gauss == 0.0 {
            continue;
        }
        let two_conj = alpha.conj() * 2.0;
        let mut w = 0.0;
        let mut pow = ONE; // (2α*)^k
        for k in 0..dim {
            laguerre_column(n_trunc - k, k, x, &mut lag);
            for n in 0..(dim - k) {
                let m = n + k;
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                let elem = pow * (sign * ratio(n, m) * lag[n]);
                if k == 0 {
                    w += rho[(m, n)].re * elem.re;
                } else {
                    w += 2.0 * (rho[(m, n)] * elem).re;
                }
            }
            pow *= two_conj;
        }
        values[idx] = w * gauss * 2.0 / std::f64::consts::PI;
    }

    let mut warnings = Vec::new();
    let needed = (n_trunc as f64).sqrt() + 3.0;
    if grid.half_width() < needed {
        warnings.push(format!("grid extent {:.2} below sqrt(N)+3 = {:.2}", grid.half_width(), needed));
    }
    if grid.step > 0.1 {
        warnings.push(format!("grid step {:.3} coarser than 0.1", grid.step));
    }
    WignerMap { grid: grid.clone(), values, warnings }
}

/// Population of Fock level `k` recovered from a Wigner map by phase-space overlap
/// with the Wigner map of `|k⟩⟨k|`.
pub fn fock_prob_from_wigner(w: &WignerMap, k: usize) -> f64 {
    let h2 = w.grid.step * w.grid.step;
    let sign = if k % 2 == 0 { 2.0 } else { -2.0 };
    let mut lag = Vec::with_capacity(k + 1);
    w.grid
        .points()
        .map(|(i, a)| {
            let r2 = a.norm_sqr();
            laguerre_column(k, 0, 4.0 * r2, &mut lag);
            w.values[i] * sign * (-2.0 * r2).exp() * lag[k]
        })
        .sum::<f64>()
        * h2
}

/// Mean photon number `Σ_k k P_k` from Wigner overlaps, `k = 0..=k_max`.
pub fn mean_photon_number_from_wigner(w: &WignerMap, k_max: usize) -> f64 {
    (1..=k_max).map(|k| k as f64 * fock_prob_from_wigner(w, k)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn ladder_operator_entries() {
        let a1 = annihilation_op(1).unwrap();
        assert_eq!(a1.get(0, 1), ONE);
        let a2 = annihilation_op(2).unwrap();
        assert_abs_diff_eq!(a2.get(1, 2).re, 2f64.sqrt(), epsilon = 1e-15);
        let n = number_op(5).unwrap();
        for k in 0..=5 {
            assert_abs_diff_eq!(n.get(k, k).re, k as f64, epsilon = 1e-12);
        }
        assert!(matches!(annihilation_op(0), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn pauli_algebra() {
        let p = pauli_ops();
        let id = OperatorMatrix::identity(2);
        for s in [&p.x, &p.y, &p.z] {
            assert!((&(s * s) - &id).max_abs() < 1e-15);
        }
        let comm = p.x.commutator(&p.y);
        assert!((&comm - &p.z.scale(C64::new(0.0, 2.0))).max_abs() < 1e-15);
        let minus = (&p.x - &p.y.scale(I)).scale_re(0.5);
        assert!((&minus - &p.minus).max_abs() < 1e-15);
        // σ-|e⟩ = |g⟩ and σz|g⟩ = -|g⟩
        assert_eq!(p.minus.get(0, 1), ONE);
        assert_eq!(p.z.get(0, 0), -ONE);
    }

    #[test]
    fn embeddings_commute_and_act_on_product_states() {
        let nt = 3;
        let p = pauli_ops();
        let sz = tensor_embed(&p.z, Subsystem::Qubit, nt).unwrap();
        let n = tensor_embed(&number_op(nt).unwrap(), Subsystem::Cavity, nt).unwrap();
        assert_eq!(sz.commutator(&n).max_abs(), 0.0);
        let id = tensor_embed(&OperatorMatrix::identity(2), Subsystem::Qubit, nt).unwrap();
        assert_eq!(id, OperatorMatrix::identity(8));
        let state = DensityMatrix::product(&DensityMatrix::qubit_excited(), &DensityMatrix::fock(nt, 1).unwrap()).unwrap();
        let v = expectation(&state, &(&sz * &n)).unwrap();
        assert_abs_diff_eq!(v.re, 1.0, epsilon = 1e-14);
        assert!(tensor_embed(&p.z, Subsystem::Cavity, nt).is_err());
    }

    #[test]
    fn dissipator_examples() {
        let a = annihilation_op(2).unwrap();
        let one = DensityMatrix::fock(2, 1).unwrap();
        let d = dissipator_apply(&a, &one).unwrap();
        let expected = OperatorMatrix::diagonal(&[ONE, -ONE, ZERO]);
        assert!((&d - &expected).max_abs() < 1e-15);

        let p = pauli_ops();
        let d = dissipator_apply(&p.minus, &DensityMatrix::qubit_ground()).unwrap();
        assert_eq!(d.max_abs(), 0.0);

        // dephasing leaves Fock populations untouched: diagonal is exactly zero
        let coh = DensityMatrix::coherent(8, C64::new(0.9, -0.4)).unwrap();
        let d = dissipator_apply(&number_op(8).unwrap(), &coh).unwrap();
        // oracle: entry (m,n) equals -(m-n)²/2 ρ_mn
        for m in 0..9 {
            assert!(d.get(m, m).norm() < 1e-15);
            for n in 0..9 {
                let want = coh.op().get(m, n) * (-0.5 * ((m as f64) - (n as f64)).powi(2));
                assert!((d.get(m, n) - want).norm() < 1e-14);
            }
        }
        assert!(dissipator_apply(&a, &DensityMatrix::qubit_ground()).is_err());
    }

    #[test]
    fn expectation_examples() {
        let nt = 12;
        let a = annihilation_op(nt).unwrap();
        let vac = DensityMatrix::fock(nt, 0).unwrap();
        assert_eq!(expectation(&vac, &a).unwrap(), ZERO);
        let n = number_op(nt).unwrap();
        for k in [0, 3, 7] {
            let v = expectation(&DensityMatrix::fock(nt, k).unwrap(), &n).unwrap();
            assert_abs_diff_eq!(v.re, k as f64, epsilon = 1e-12);
        }
        let coh = DensityMatrix::coherent(nt, C64::new(-1.11, 0.0)).unwrap();
        let v = expectation(&coh, &a).unwrap();
        assert_abs_diff_eq!(v.re, -1.11, epsilon = 1e-8);
        assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn density_matrix_validation() {
        let bad = OperatorMatrix::diagonal(&[C64::new(0.7, 0.0), C64::new(0.7, 0.0)]);
        assert!(DensityMatrix::new(bad).is_err());
        let neg = OperatorMatrix::diagonal(&[C64::new(1.1, 0.0), C64::new(-0.1, 0.0)]);
        assert!(DensityMatrix::new(neg).is_err());
        let joint = DensityMatrix::product(&DensityMatrix::qubit_excited(), &DensityMatrix::fock(3, 2).unwrap()).unwrap();
        let cav = joint.partial_trace_qubit().unwrap();
        assert_abs_diff_eq!(cav.populations()[2], 1.0, epsilon = 1e-15);
        let q = joint.partial_trace_cavity().unwrap();
        assert_abs_diff_eq!(q.populations()[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn wigner_of_vacuum_and_one_photon() {
        let grid = PhaseGrid::covering(6, 0.1).unwrap();
        let vac = wigner_map(&DensityMatrix::fock(6, 0).unwrap(), &grid);
        assert_abs_diff_eq!(vac.value_at(ZERO).unwrap(), 2.0 / PI, epsilon = 1e-12);
        let one = wigner_map(&DensityMatrix::fock(6, 1).unwrap(), &grid);
        assert_abs_diff_eq!(one.value_at(ZERO).unwrap(), -2.0 / PI, epsilon = 1e-12);
        assert_abs_diff_eq!(vac.integral(), 1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(one.integral(), 1.0, epsilon = 1e-3);
        assert!(vac.warnings.is_empty());
    }

    #[test]
    fn wigner_of_coherent_state_matches_gaussian() {
        let beta = C64::new(0.5, 0.7);
        let nt = 14;
        let grid = PhaseGrid::covering(nt, 0.1).unwrap();
        let w = wigner_map(&DensityMatrix::coherent(nt, beta).unwrap(), &grid);
        for (i, a) in grid.points().step_by(97) {
            let want = 2.0 / PI * (-2.0 * (a - beta).norm_sqr()).exp();
            assert!((w.values[i] - want).abs() < 1e-7, "at {a}: {} vs {want}", w.values[i]);
        }
        assert!((w.argmax() - beta).norm() < 1e-9);
        assert!((w.mean_field() - beta).norm() < 1e-6);
    }

    #[test]
    fn fock_probabilities_from_wigner() {
        let nt = 10;
        let grid = PhaseGrid::covering(nt, 0.1).unwrap();
        for k in [0, 1, 4] {
            let w = wigner_map(&DensityMatrix::fock(nt, k).unwrap(), &grid);
            assert_abs_diff_eq!(fock_prob_from_wigner(&w, k), 1.0, epsilon = 1e-3);
        }
        let vac = wigner_map(&DensityMatrix::fock(nt, 0).unwrap(), &grid);
        assert_abs_diff_eq!(fock_prob_from_wigner(&vac, 1), 0.0, epsilon = 1e-3);

        // Poisson law for |α|² = 2
        let nt = 16;
        let grid = PhaseGrid::covering(nt, 0.1).unwrap();
        let w = wigner_map(&DensityMatrix::coherent(nt, C64::new(2f64.sqrt(), 0.0)).unwrap(), &grid);
        let mut poisson = (-2.0f64).exp();
        for k in 0..8 {
            if k > 0 {
                poisson *= 2.0 / k as f64;
            }
            assert_abs_diff_eq!(fock_prob_from_wigner(&w, k), poisson, epsilon = 1e-3);
        }
        assert_abs_diff_eq!(mean_photon_number_from_wigner(&w, 16), 2.0, epsilon = 1e-3);
    }

    #[test]
    fn unitary_propagator_is_unitary() {
        let p = pauli_ops();
        let h = (&p.x.scale_re(0.3) + &p.z.scale_re(1.7)).clone();
        let u = h.unitary_propagator(0.9);
        let prod = &u * &u.adjoint();
        assert!((&prod - &OperatorMatrix::identity(2)).max_abs() < 1e-14);
    }
}
