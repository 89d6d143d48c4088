//! Laser and ion parameters, the effective control parameters `(ζ, ξ)`, and
//! the leading-order five-laser interaction Hamiltonian.
//!
//! Lasers 1–4 drive the third lower sideband along the body diagonals of the
//! trap; laser 5 is resonant with the carrier. Their relative phases enter
//! through a sign pattern `s_l = e^{−i(φ_l − φ)}` on `Â_l³`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use log::warn;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fockspace::{self, BasisLayout, Layout, SparseOperator};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Two-level ion in an isotropic 3D trap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IonParams {
    /// Level splitting Δ.
    pub delta: f64,
    /// Trap quantum ν.
    pub nu: f64,
    /// Lamb-Dicke parameter η, shared by all lasers.
    pub eta: f64,
    /// Spontaneous emission rate γ.
    pub gamma: f64,
}

impl Default for IonParams {
    fn default() -> Self {
        IonParams { delta: 100.0, nu: 10.0, eta: 0.1, gamma: 1.0 }
    }
}

impl IonParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) {
            return Err(Error::InvalidParameter(format!("trap quantum nu must be > 0, got {}", self.nu)));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("decay rate gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Infeasible(format!("Lamb-Dicke parameter eta must lie in (0, 1), got {}", self.eta)));
        }
        if self.eta > 0.25 {
            warn!("eta = {} is outside the Lamb-Dicke regime assumed by the effective Hamiltonian", self.eta);
        }
        Ok(())
    }

    /// Frequency of the sideband lasers, `Δ − 3ν`.
    pub fn sideband_frequency(&self) -> f64 {
        self.delta - 3.0 * self.nu
    }
}

/// Relative signs `s_1..s_4` multiplying `Â_l³`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SignPattern(pub [i8; 4]);

impl SignPattern {
    /// `Σ s_l Â_l³ = 24 âₓâ_yâ_z` exactly.
    pub const REDUCING: SignPattern = SignPattern([1, -1, -1, 1]);
    /// `φ_{1,3} = φ_{2,4} + π`, pairing lasers 1,3 against 2,4.
    pub const PAIRED: SignPattern = SignPattern([1, -1, 1, -1]);

    pub fn new(signs: [i8; 4]) -> Result<Self> {
        if signs.iter().all(|s| *s == 1 || *s == -1) {
            Ok(SignPattern(signs))
        } else {
            Err(Error::InvalidParameter(format!("sign pattern entries must be +1 or -1, got {signs:?}")))
        }
    }

    /// The eight patterns with `s_1 = +1`, i.e. all patterns up to global sign.
    pub fn all_up_to_global_sign() -> Vec<SignPattern> {
        (0..8u8)
            .map(|bits| {
                let s = |k: u8| if bits & (1 << k) != 0 { -1 } else { 1 };
                SignPattern([1, s(0), s(1), s(2)])
            })
            .collect()
    }

    pub fn sign(&self, l: usize) -> f64 {
        self.0[l] as f64
    }
}

impl std::fmt::Display for SignPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s: Vec<&str> = self.0.iter().map(|&s| if s > 0 { "+" } else { "-" }).collect();
        write!(f, "({})", s.join(","))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Laser {
    /// Rabi frequency Ω_l.
    pub rabi: f64,
    /// Phase φ_l in `[0, 2π)`.
    pub phase: f64,
    /// Frequency ω_l.
    pub frequency: f64,
    /// Unit propagation direction.
    pub direction: [f64; 3],
}

/// The five lasers of the scheme.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaserSet {
    pub lasers: [Laser; 5],
    pub sign_pattern: SignPattern,
}

/// Unit vectors `(1,±1,±1)/√3` for lasers 1–4.
pub fn sideband_directions() -> [[f64; 3]; 4] {
    let s = 1.0 / 3f64.sqrt();
    fockspace::COMPOSITE_SIGNS.map(|[a, b, c]| [a * s, b * s, c * s])
}

impl LaserSet {
    /// Lasers 1–4 share `rabi` with phases `φ + arg(s_l)`; laser 5 carries
    /// `(rabi5, phase5)`. Frequencies follow from `ion`.
    pub fn new(rabi: f64, phi: f64, rabi5: f64, phase5: f64, signs: SignPattern, ion: &IonParams) -> Self {
        let dirs = sideband_directions();
        let sideband = |l: usize| Laser {
            rabi,
            phase: (phi + if signs.0[l] < 0 { PI } else { 0.0 }).rem_euclid(TAU),
            frequency: ion.sideband_frequency(),
            direction: dirs[l],
        };
        LaserSet {
            lasers: [
                sideband(0),
                sideband(1),
                sideband(2),
                sideband(3),
                Laser { rabi: rabi5, phase: phase5.rem_euclid(TAU), frequency: ion.delta, direction: [0.0, 0.0, 1.0] },
            ],
            sign_pattern: signs,
        }
    }

    /// Common sideband Rabi frequency, if lasers 1–4 agree.
    pub fn common_rabi(&self) -> Result<f64> {
        let omega = self.lasers[0].rabi;
        if self.lasers[..4].iter().all(|l| (l.rabi - omega).abs() <= 1e-15 * omega.abs().max(1.0)) {
            Ok(omega)
        } else {
            Err(Error::InvalidParameter("lasers 1-4 must share a common Rabi frequency".into()))
        }
    }

    /// Reference phase φ, recovered from laser 1 and its sign.
    pub fn common_phase(&self) -> f64 {
        let l1 = self.lasers[0];
        (l1.phase - if self.sign_pattern.0[0] < 0 { PI } else { 0.0 }).rem_euclid(TAU)
    }

    pub fn effective(&self, ion: &IonParams) -> Result<EffectiveParams> {
        let omega = self.common_rabi()?;
        let phi = self.common_phase();
        let l5 = self.lasers[4];
        let zeta = effective_zeta(omega, phi, ion.eta);
        let xi = effective_xi(l5.rabi, omega, ion.eta, phi, l5.phase)?;
        Ok(EffectiveParams { zeta, xi, alpha: zeta.norm() / ion.gamma })
    }
}

/// Effective coupling ζ, carrier amplitude ξ and `α = |ζ|/γ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveParams {
    pub zeta: C64,
    pub xi: C64,
    pub alpha: f64,
}

/// `ζ = −6iη³Ω·exp[−(iφ + η²/2)]`
pub fn effective_zeta(omega: f64, phi: f64, eta: f64) -> C64 {
    -6.0 * I * eta.powi(3) * omega * (-(I * phi + eta * eta / 2.0)).exp()
}

/// `ξ = −i·Ω₅/(6Ωη³)·exp[i(φ − φ₅)]`
pub fn effective_xi(omega5: f64, omega: f64, eta: f64, phi: f64, phi5: f64) -> Result<C64> {
    if omega == 0.0 {
        return Err(Error::DivisionByZero("xi requires a nonzero sideband Rabi frequency"));
    }
    if eta == 0.0 {
        return Err(Error::DivisionByZero("xi requires a nonzero Lamb-Dicke parameter"));
    }
    Ok(-I * omega5 / (6.0 * omega * eta.powi(3)) * (I * (phi - phi5)).exp())
}

/// Invert the ζ and ξ formulas: pick Ω from `α = |ζ|/γ` (with φ = 0), then
/// Ω₅ and φ₅ from the target ξ. Uses the reducing sign pattern.
pub fn solve_lasers_for(target_xi: C64, target_alpha: f64, ion: &IonParams) -> Result<LaserSet> {
    solve_lasers_with(target_xi, target_alpha, ion, SignPattern::REDUCING)
}

pub fn solve_lasers_with(target_xi: C64, target_alpha: f64, ion: &IonParams, signs: SignPattern) -> Result<LaserSet> {
    ion.validate()?;
    if !(target_alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be > 0, got {target_alpha}")));
    }
    let eta3 = ion.eta.powi(3);
    let phi = 0.0;
    let omega = target_alpha * ion.gamma * (ion.eta * ion.eta / 2.0).exp() / (6.0 * eta3);
    let omega5 = target_xi.norm() * 6.0 * omega * eta3;
    // arg ξ = φ − φ₅ − π/2
    let phase5 = if omega5 == 0.0 { 0.0 } else { phi - FRAC_PI_2 - target_xi.arg() };
    Ok(LaserSet::new(omega, phi, omega5, phase5, signs, ion))
}

/// `[−(iη³/6)·Σ_l Ω_l e^{−iφ_l} Â_l³ + Ω₅ e^{−iφ₅}]σ₊ + H.c.` on the full space.
pub fn build_full_interaction(lasers: &LaserSet, ion: &IonParams, layout: &BasisLayout) -> Result<SparseOperator> {
    let full = Layout::Full(*layout);
    let prefactor = -I * ion.eta.powi(3) / 6.0;
    let mut drive = SparseOperator::zero(full);
    for (l, laser) in lasers.lasers[..4].iter().enumerate() {
        if laser.rabi == 0.0 {
            continue;
        }
        let a = fockspace::composite_mode(l + 1, layout)?;
        let cube = a.matmul(&a).matmul(&a);
        drive = drive.add(&cube.scale(prefactor * laser.rabi * (-I * laser.phase).exp()));
    }
    let carrier = lasers.lasers[4];
    let drive = drive.add(&SparseOperator::identity(full).scale(carrier.rabi * (-I * carrier.phase).exp()));
    let raising = fockspace::sigma_plus(&full).matmul(&drive);
    Ok(raising.add(&raising.adjoint()))
}

/// Best scalar fit `Σ s_l Â_l³ ≈ c·âₓâ_yâ_z` and its entrywise residual.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrilinearReduction {
    pub scalar: C64,
    /// Largest entry modulus of `Σ s_l Â_l³ − c·âₓâ_yâ_z`.
    pub residual: f64,
}

pub fn verify_trilinear_reduction(signs: SignPattern, layout: &BasisLayout) -> Result<TrilinearReduction> {
    if layout.n_max() < 3 {
        return Err(Error::CutoffMismatch(format!(
            "trilinear reduction needs n_max >= 3 to expose cubic terms, got {}",
            layout.n_max()
        )));
    }
    let full = Layout::Full(*layout);
    let mut combo = SparseOperator::zero(full);
    for l in 0..4 {
        let a = fockspace::composite_mode(l + 1, layout)?;
        combo = combo.add(&a.matmul(&a).matmul(&a).scale(C64::new(signs.sign(l), 0.0)));
    }
    let target = fockspace::trilinear(&full);
    let scalar = target.frobenius_dot(&combo) / target.frobenius_dot(&target);
    let residual = combo.max_abs_diff(&target.scale(scalar));
    Ok(TrilinearReduction { scalar, residual })
}

/// `(ζ, ξ)` that make `build_full_interaction` equal `ζ(âₓâ_yâ_z − ξ)σ₊ + H.c.`,
/// using the measured reduction scalar in place of the nominal prefactor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibratedParams {
    pub reduction: TrilinearReduction,
    pub zeta: C64,
    pub xi: C64,
}

pub fn calibrated_effective(lasers: &LaserSet, ion: &IonParams) -> Result<CalibratedParams> {
    let omega = lasers.common_rabi()?;
    let phi = lasers.common_phase();
    let reduction = verify_trilinear_reduction(lasers.sign_pattern, &fockspace::build_basis(3))?;
    let zeta = reduction.scalar * (-I * ion.eta.powi(3) / 6.0) * omega * (-I * phi).exp();
    if zeta.norm() == 0.0 {
        return Err(Error::DivisionByZero("sign pattern has no trilinear component"));
    }
    let carrier = lasers.lasers[4];
    let xi = -carrier.rabi * (-I * carrier.phase).exp() / zeta;
    Ok(CalibratedParams { reduction, zeta, xi })
}

/// α of the five-laser scheme that matches the eight-laser scheme's ξ at
/// unchanged sideband Rabi frequencies: a factor of 6.
pub fn map_alpha_between_schemes(alpha_l8: f64) -> Result<f64> {
    if !(alpha_l8 > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be > 0, got {alpha_l8}")));
    }
    Ok(6.0 * alpha_l8)
}
