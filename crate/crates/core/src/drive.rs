//! Frequency-comb waveform and kick parametrization.
//!
//! Conventions: the drive couples as `H_d = (i/2)(E σ₊ − E* σ₋)`, so a real envelope
//! `E` generates `−(E/2)σ_y` and a positive area `θ` rotates `|g⟩` towards `+x`.
//! The qubit with `n` photons sits at `nχ` above the reference frequency and the
//! comb teeth at `−center_offset + kΔω`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{DriveTerm, SystemParams};
use crate::error::{Error, Result};
use crate::hilbert::{pauli_ops, tensor_embed, OperatorMatrix, Subsystem, C64, I};

/// Number of integration steps per comb period used by the presets.
pub const STEPS_PER_PERIOD: usize = 224;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombSpec {
    /// Per-tooth amplitude Ω (rad/μs).
    pub omega: f64,
    /// Tooth spacing Δω (rad/μs).
    pub delta_omega: f64,
    /// The comb has `2K + 1` teeth.
    pub k: usize,
    /// Envelope carrier `c` in `Ω e^{ict} D_K(Δω t)` (rad/μs).
    pub center_offset: f64,
    /// Total duration (μs), a whole number of periods.
    pub duration: f64,
    /// Integration/sampling step (μs).
    pub sample_dt: f64,
}

impl CombSpec {
    pub fn new(omega: f64, delta_omega: f64, k: usize, center_offset: f64, duration: f64, sample_dt: f64) -> Result<Self> {
        let spec = Self { omega, delta_omega, k, center_offset, duration, sample_dt };
        spec.validate()?;
        Ok(spec)
    }

    /// Comb with `Δω = 2χ`, 21 teeth centred `4χ` above the zero-photon qubit, tuned to kick angle `theta`.
    pub fn for_kick_angle(params: &SystemParams, theta: f64, duration: f64) -> Result<Self> {
        let delta_omega = 2.0 * params.chi;
        let period = 2.0 * PI / delta_omega;
        Self::new(
            omega_for_kick_angle(theta, delta_omega),
            delta_omega,
            10,
            -4.0 * params.chi,
            duration,
            period / STEPS_PER_PERIOD as f64,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(Error::InvalidParameter { name, reason });
        if !(self.delta_omega > 0.0 && self.delta_omega.is_finite()) {
            return bad("delta_omega", format!("must be positive, got {}", self.delta_omega));
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return bad("omega", format!("must be non-negative, got {}", self.omega));
        }
        if !(self.sample_dt > 0.0) {
            return bad("sample_dt", format!("must be positive, got {}", self.sample_dt));
        }
        let periods = self.duration / self.period();
        if !(self.duration > 0.0) || (periods - periods.round()).abs() > 1e-6 {
            return bad("duration", format!("must be a positive multiple of the period {:.6} us, got {}", self.period(), self.duration));
        }
        let steps = self.period() / self.sample_dt;
        if (steps - steps.round()).abs() > 1e-6 {
            return bad("sample_dt", format!("must divide the period {:.6} us, got {}", self.period(), self.sample_dt));
        }
        Ok(())
    }

    /// Comb period `2π/Δω`.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.delta_omega
    }

    pub fn n_periods(&self) -> usize {
        (self.duration / self.period()).round() as usize
    }

    pub fn steps_per_period(&self) -> usize {
        (self.period() / self.sample_dt).round() as usize
    }

    pub fn n_steps(&self) -> usize {
        self.n_periods() * self.steps_per_period()
    }

    pub fn with_duration(&self, duration: f64) -> Result<Self> {
        let mut out = self.clone();
        out.duration = duration;
        out.validate()?;
        Ok(out)
    }

    pub fn with_kick_angle(&self, theta: f64) -> Self {
        Self { omega: omega_for_kick_angle(theta, self.delta_omega), ..self.clone() }
    }
}

/// `D_K(x) = Σ_{k=-K}^{K} e^{-ikx} = sin((2K+1)x/2) / sin(x/2)`.
pub fn dirichlet_kernel(k: usize, x: f64) -> f64 {
    let teeth = (2 * k + 1) as f64;
    let half = 0.5 * x;
    let s = half.sin();
    if s.abs() > 1e-6 {
        (teeth * half).sin() / s
    } else {
        // close to a peak: sum the cosines directly
        1.0 + 2.0 * (1..=k).map(|j| (j as f64 * x).cos()).sum::<f64>()
    }
}

/// `Ω e^{i c t} D_K(Δω t)`.
pub fn comb_envelope(spec: &CombSpec, t: f64) -> C64 {
    C64::from_polar(spec.omega * dirichlet_kernel(spec.k, spec.delta_omega * t), spec.center_offset * t)
}

/// `θ = 2πΩ/Δω`.
pub fn kick_angle(spec: &CombSpec) -> f64 {
    2.0 * PI * spec.omega / spec.delta_omega
}

pub fn omega_for_kick_angle(theta: f64, delta_omega: f64) -> f64 {
    theta * delta_omega / (2.0 * PI)
}

/// Time from a kick's peak to its first zero, `2π/((2K+1)Δω)` (`π/(21χ)` at presets).
pub fn kick_width(spec: &CombSpec) -> f64 {
    2.0 * PI / ((2 * spec.k + 1) as f64 * spec.delta_omega)
}

/// Drive term for a Hamiltonian whose qubit reference rotates at `frame_frequency`
/// relative to the comb reference: `E(t) = e^{-i ω_f t} · comb_envelope(t)` on `(i/2)σ₊`.
///
/// With `cavity_levels = Some(n_trunc)` the operator is embedded in the joint space.
pub fn drive_hamiltonian_term(spec: &CombSpec, frame_frequency: f64, cavity_levels: Option<usize>) -> Result<DriveTerm> {
    let raise = pauli_ops().minus.adjoint().scale(I * 0.5);
    let op = match cavity_levels {
        Some(n) => tensor_embed(&raise, Subsystem::Qubit, n)?,
        None => raise,
    };
    let spec = spec.clone();
    let envelope = Arc::new(move |t: f64| C64::from_polar(1.0, -frame_frequency * t) * comb_envelope(&spec, t));
    Ok(DriveTerm { op, envelope })
}

/// Single-qubit Hamiltonian for `n` photons in the frame rotating at the comb reference:
/// `nχ|e⟩⟨e|` plus the comb drive.
pub fn qubit_hamiltonian(params: &SystemParams, spec: &CombSpec, n: usize) -> Result<crate::dynamics::TimeDependentHamiltonian> {
    let h0 = OperatorMatrix::diagonal(&[C64::new(0.0, 0.0), C64::new(n as f64 * params.chi, 0.0)]);
    crate::dynamics::TimeDependentHamiltonian::new(h0)?.with_term(drive_hamiltonian_term(spec, 0.0, None)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec(theta: f64) -> CombSpec {
        let p = SystemParams::paper();
        CombSpec::for_kick_angle(&p, theta, p.window()).unwrap()
    }

    #[test]
    fn envelope_examples() {
        let mut s = spec(PI / 2.0);
        s.center_offset = 0.0;
        let at0 = comb_envelope(&s, 0.0);
        assert_abs_diff_eq!(at0.re, 21.0 * s.omega, epsilon = 1e-9);
        assert_eq!(at0.im, 0.0);
        let half = comb_envelope(&s, PI / s.delta_omega);
        assert_abs_diff_eq!(half.re, s.omega, epsilon = 1e-9);
        // mean over a period keeps only the k = 0 tooth
        let n = 4000;
        let h = s.period() / n as f64;
        let mean: f64 = (0..n).map(|j| comb_envelope(&s, (j as f64 + 0.5) * h).re).sum::<f64>() / n as f64;
        assert_abs_diff_eq!(mean, s.omega, epsilon = 1e-9);
    }

    #[test]
    fn dirichlet_is_continuous_near_peaks() {
        for k in [0, 3, 10] {
            let a = dirichlet_kernel(k, 1e-6 * 0.999);
            let b = dirichlet_kernel(k, 1e-6 * 1.001);
            assert!((a - b).abs() < 1e-6);
            assert_abs_diff_eq!(dirichlet_kernel(k, 2.0 * PI), (2 * k + 1) as f64, epsilon = 1e-6);
        }
    }

    #[test]
    fn kick_angles() {
        let p = SystemParams::paper();
        let mut s = spec(0.0);
        s.omega = p.chi / 2.0;
        assert_abs_diff_eq!(kick_angle(&s), PI / 2.0, epsilon = 1e-14);
        s.omega = p.chi;
        assert_abs_diff_eq!(kick_angle(&s), PI, epsilon = 1e-14);
        assert_abs_diff_eq!(kick_angle(&spec(0.75 * PI)), 0.75 * PI, epsilon = 1e-14);
        assert_abs_diff_eq!(kick_width(&s), PI / (21.0 * p.chi), epsilon = 1e-15);
        assert!(kick_width(&s) > 0.004 && kick_width(&s) < 0.006);
    }

    #[test]
    fn presets_resolve_the_kick() {
        let s = spec(PI);
        assert_eq!(s.n_periods(), 21);
        assert!(s.sample_dt <= 0.1 * kick_width(&s));
        assert!(s.with_duration(1.234).is_err());
    }

    #[test]
    fn zero_amplitude_gives_zero_drive() {
        let term = drive_hamiltonian_term(&spec(0.0), 0.0, Some(3)).unwrap();
        for t in [0.0, 0.01, 0.5] {
            assert_eq!((term.envelope)(t).norm(), 0.0);
        }
        assert_eq!(term.op.dim(), 8);
    }
}
