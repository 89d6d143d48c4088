//! The trio coherent state `|ξ,p,q⟩`: normalization, Fock-ladder coefficients,
//! the coherent-state phase-integral construction, and checks of its defining
//! eigenrelations.

use std::f64::consts::TAU;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fockspace::{self, Ion, Layout};

const SERIES_REL_TOL: f64 = 1e-18;
const SERIES_MAX_TERMS: usize = 500;

/// Parameters `(ξ = r·e^{iφ}, p, q)` of a trio coherent state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TcsParams {
    xi: C64,
    r: f64,
    phi: f64,
    p: usize,
    q: usize,
}

impl TcsParams {
    pub fn new(xi: C64, p: usize, q: usize) -> Self {
        let r = xi.norm();
        let phi = if r == 0.0 { 0.0 } else { xi.arg().rem_euclid(TAU) };
        TcsParams { xi, r, phi, p, q }
    }

    pub fn from_polar(r: f64, phi: f64, p: usize, q: usize) -> Result<Self> {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::InvalidParameter(format!("modulus r must be finite and >= 0, got {r}")));
        }
        let phi = phi.rem_euclid(TAU);
        Ok(TcsParams { xi: C64::from_polar(r, phi), r, phi, p, q })
    }

    pub fn xi(&self) -> C64 {
        self.xi
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Compensated (Neumaier) sum.
fn accurate_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for t in terms {
        let s = sum + t;
        comp += if sum.abs() >= t.abs() { (sum - s) + t } else { (t - s) + sum };
        sum = s;
    }
    sum + comp
}

/// Terms `r²ⁿ / ((n+q)!(n+p)!n!)`, at least `min_terms` of them, continuing
/// until they fall below the relative tolerance.
fn series_terms(p: usize, q: usize, r: f64, min_terms: usize) -> Vec<f64> {
    let r2 = r * r;
    let mut term = 1.0 / (factorial(q) * factorial(p));
    let mut terms = vec![term];
    let mut sum = term;
    for n in 1..SERIES_MAX_TERMS.max(min_terms) {
        term *= r2 / (((n + q) * (n + p) * n) as f64);
        if n >= min_terms && term < SERIES_REL_TOL * sum {
            break;
        }
        sum += term;
        terms.push(term);
    }
    terms
}

/// `N(p,q,r)` from `N⁻² = Σₙ r²ⁿ / ((n+q)!(n+p)!n!)`.
pub fn normalization(p: usize, q: usize, r: f64) -> f64 {
    accurate_sum(series_terms(p, q, r, 1)).sqrt().recip()
}

/// Ladder coefficients `C_n`, `n = 0..=n_max`, of `|ξ,p,q⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct TcsVector {
    params: TcsParams,
    coeffs: Vec<C64>,
    norm_const: f64,
    weight: f64,
}

impl TcsVector {
    pub fn params(&self) -> &TcsParams {
        &self.params
    }

    pub fn n_max(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn norm_const(&self) -> f64 {
        self.norm_const
    }

    /// `Σ|C_n|²`. For the closed form this is evaluated as a ratio of the
    /// partial to the full normalization series, which cannot exceed 1.
    pub fn norm_sqr(&self) -> f64 {
        self.weight
    }

    /// `1 − Σ|C_n|²`: weight lost to the cutoff.
    pub fn truncation_remainder(&self) -> f64 {
        1.0 - self.weight
    }

    /// `|C_{n_max+1}|·√((n_max+1+q)(n_max+1+p)(n_max+1))`, the norm of the
    /// trilinear eigen-residual caused by dropping the tail.
    pub fn tail_bound(&self) -> f64 {
        let n = self.coeffs.len();
        let ladder = (((n + self.params.q) * (n + self.params.p) * n) as f64).sqrt();
        let next = self.params.xi * self.coeffs[n - 1] / ladder;
        next.norm() * ladder
    }

    /// State vector of `|ion⟩ ⊗ |ξ,p,q⟩` on `layout`.
    pub fn embed(&self, ion: Ion, layout: &Layout) -> Result<Vec<C64>> {
        if let Layout::Ladder(l) = layout {
            if (l.p(), l.q()) != (self.params.p, self.params.q) {
                return Err(Error::CutoffMismatch(format!(
                    "ladder (p={}, q={}) cannot hold a TCS with (p={}, q={})",
                    l.p(),
                    l.q(),
                    self.params.p,
                    self.params.q
                )));
            }
        }
        let mut v = vec![C64::new(0.0, 0.0); layout.dim()];
        for (n, c) in self.coeffs.iter().enumerate() {
            let triple = [n + self.params.q, n + self.params.p, n];
            let i = layout.index_of(ion, triple).ok_or_else(|| {
                Error::CutoffMismatch(format!("TCS rung {n} {triple:?} does not fit in {layout}"))
            })?;
            v[i] = *c;
        }
        Ok(v)
    }
}

/// Closed-form Fock-ladder coefficients `C_n = N·ξⁿ/√((n+q)!(n+p)!n!)`.
pub fn tcs_fock(params: TcsParams, n_max: usize) -> TcsVector {
    let (p, q) = (params.p, params.q);
    let terms = series_terms(p, q, params.r, n_max + 1);
    let total = accurate_sum(terms.iter().copied());
    let weight = accurate_sum(terms[..=n_max].iter().copied()) / total;
    let norm_const = total.sqrt().recip();
    let mut coeffs = Vec::with_capacity(n_max + 1);
    coeffs.push(C64::new(norm_const / (factorial(q) * factorial(p)).sqrt(), 0.0));
    for n in 1..=n_max {
        let prev = coeffs[n - 1];
        coeffs.push(prev * params.xi / (((n + q) * (n + p) * n) as f64).sqrt());
    }
    TcsVector { params, coeffs, norm_const, weight }
}

/// Uniform node counts for the two phase integrals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuadratureConfig {
    pub nodes_theta: usize,
    pub nodes_theta_prime: usize,
}

impl QuadratureConfig {
    pub fn uniform(nodes: usize) -> Self {
        QuadratureConfig { nodes_theta: nodes, nodes_theta_prime: nodes }
    }
}

/// Output of the phase-integral construction.
#[derive(Clone, Debug)]
pub struct IntegralTcs {
    pub vector: TcsVector,
    /// Largest modulus among amplitudes with `l ≠ n+q` or `m ≠ n+p`.
    pub off_ladder_max: f64,
}

/// Fock amplitudes `e^{−|α|²/2} αᵏ/√k!` of the coherent state `|α)`, `k ≤ cutoff`.
pub fn coherent_amplitudes(alpha: C64, cutoff: usize) -> Vec<C64> {
    let mut amps = Vec::with_capacity(cutoff + 1);
    amps.push(C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0));
    for k in 1..=cutoff {
        let prev = amps[k - 1];
        amps.push(prev * alpha / (k as f64).sqrt());
    }
    amps
}

/// Phase-averaged single-mode factor
/// `X[k][n] = (1/M) Σⱼ e^{−i(c+n)θⱼ} ⟨k|β e^{iθⱼ})` on a uniform grid.
fn phase_average(beta: C64, charge: usize, nodes: usize, cutoff: usize) -> Vec<Vec<C64>> {
    let mut acc = vec![vec![C64::new(0.0, 0.0); cutoff + 1]; cutoff + 1];
    for j in 0..nodes {
        let theta = TAU * j as f64 / nodes as f64;
        let amps = coherent_amplitudes(beta * C64::cis(theta), cutoff);
        for n in 0..=cutoff {
            let weight = C64::cis(-((charge + n) as f64) * theta);
            for (k, a) in amps.iter().enumerate() {
                acc[k][n] += weight * a;
            }
        }
    }
    let inv = 1.0 / nodes as f64;
    for row in &mut acc {
        for z in row.iter_mut() {
            *z *= inv;
        }
    }
    acc
}

/// Build `|ξ,p,q⟩` from the double phase integral over products of coherent
/// states `|ξ^{1/3}e^{iθ})ₓ|ξ^{1/3}e^{iθ'})_y|ξ^{1/3}e^{−i(θ+θ')})_z`,
/// discretized by the trapezoid rule. Principal branches throughout.
pub fn tcs_integral(params: TcsParams, quad: QuadratureConfig, n_max: usize) -> Result<IntegralTcs> {
    if params.r == 0.0 {
        return Err(Error::SingularInput("ξ = 0 makes the ξ^{-(p+q)/3} prefactor singular"));
    }
    if quad.nodes_theta == 0 || quad.nodes_theta_prime == 0 {
        return Err(Error::InvalidParameter("quadrature node counts must be >= 1".into()));
    }
    let (p, q) = (params.p, params.q);
    let cutoff = n_max + p.max(q);
    let beta = params.xi.cbrt();
    let norm_const = normalization(p, q, params.r);
    let prefactor = norm_const * (1.5 * params.r.powf(2.0 / 3.0)).exp()
        / params.xi.powf((p + q) as f64 / 3.0);

    // the z-mode argument is β·e^{−i(θ+θ')}, so its amplitude splits into
    // ⟨n|β) times phases absorbed into the x and y averages
    let zeta_amps = coherent_amplitudes(beta, cutoff);
    let xs = phase_average(beta, q, quad.nodes_theta, cutoff);
    let ys = phase_average(beta, p, quad.nodes_theta_prime, cutoff);

    let mut coeffs = vec![C64::new(0.0, 0.0); n_max + 1];
    let mut off_ladder_max: f64 = 0.0;
    for l in 0..=cutoff {
        for m in 0..=cutoff {
            for n in 0..=cutoff {
                let amp = prefactor * zeta_amps[n] * xs[l][n] * ys[m][n];
                if l == n + q && m == n + p {
                    if n <= n_max {
                        coeffs[n] = amp;
                    }
                } else {
                    off_ladder_max = off_ladder_max.max(amp.norm());
                }
            }
        }
    }
    Ok(IntegralTcs { vector: TcsVector { weight: accurate_sum(coeffs.iter().map(|c| c.norm_sqr())), params, coeffs, norm_const }, off_ladder_max })
}

/// Norms of `(âₓâ_yâ_z − ξ)|v⟩`, `(P̂ − p)|v⟩`, `(Q̂ − q)|v⟩`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenResidual {
    pub trilinear: f64,
    pub p_charge: f64,
    pub q_charge: f64,
    /// Analytic size of the trilinear residual due to truncation.
    pub tail_bound: f64,
    pub passed: bool,
}

fn residual_norm(op: &fockspace::SparseOperator, shift: C64, v: &[C64]) -> f64 {
    op.apply(v).iter().zip(v).map(|(a, b)| (a - shift * b).norm_sqr()).sum::<f64>().sqrt()
}

/// Evaluate the eigenrelations on `|g⟩⊗|v⟩` in the full space that holds `v`.
/// Passes when the trilinear residual is within `tail_bound + tol` and the
/// charge residuals within `tol`.
pub fn verify_eigenrelations(v: &TcsVector, tol: f64) -> EigenResidual {
    let pr = v.params();
    let full = Layout::Full(fockspace::build_basis(v.n_max() + pr.p.max(pr.q)));
    let state = v.embed(Ion::Ground, &full).expect("layout sized for the vector");
    let (p_op, q_op) = fockspace::charge_ops(&full);
    let trilinear = residual_norm(&fockspace::trilinear(&full), pr.xi, &state);
    let p_charge = residual_norm(&p_op, C64::new(pr.p as f64, 0.0), &state);
    let q_charge = residual_norm(&q_op, C64::new(pr.q as f64, 0.0), &state);
    let tail_bound = v.tail_bound();
    EigenResidual {
        trilinear,
        p_charge,
        q_charge,
        tail_bound,
        passed: trilinear <= tail_bound + tol && p_charge <= tol && q_charge <= tol,
    }
}
