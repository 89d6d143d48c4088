//! Dissipative ion dynamics under `H = ζ(âₓâ_yâ_z − ξ)σ₊ + H.c.` with
//! spontaneous emission through `√γ·σ₋`.
//!
//! Time is the dimensionless `τ = γt` throughout; Hamiltonians passed in are
//! in the same energy units as `gamma` and are divided by it internally.
//! Two engines share one fixed-step RK4 scheme:
//!
//! * [`integrate_lindblad`] integrates the density matrix directly.
//! * [`mcwf_trajectory`] / [`run_ensemble`] unravel the master equation into
//!   Monte-Carlo wave-function trajectories with waiting-time jumps.

use std::ops::ControlFlow;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fockspace::{self, Ion, Layout, SparseOperator, Triple};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Trace drift beyond which a Lindblad run is declared unstable.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-6;
/// Largest admissible step in τ.
pub const MAX_D_TAU: f64 = 0.1;

/// `ζ(âₓâ_yâ_z − ξ)σ₊ + H.c.` on a full or ladder layout.
pub fn build_hamiltonian(zeta: C64, xi: C64, layout: &Layout) -> SparseOperator {
    let drive = fockspace::trilinear(layout).sub(&SparseOperator::identity(*layout).scale(xi));
    let raising = fockspace::sigma_plus(layout).matmul(&drive).scale(zeta);
    raising.add(&raising.adjoint())
}

/// Wave function `Σ (G_lmn|g⟩ + E_lmn|e⟩)|l,m,n⟩` over a layout.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    layout: Layout,
    amps: Vec<C64>,
}

impl PureState {
    pub fn new(layout: Layout, amps: Vec<C64>) -> Result<Self> {
        layout.check_len(amps.len())?;
        Ok(PureState { layout, amps })
    }

    /// `|ion⟩|l,m,n⟩`
    pub fn basis(layout: Layout, ion: Ion, triple: Triple) -> Result<Self> {
        let i = layout.index_of(ion, triple).ok_or_else(|| {
            Error::CutoffMismatch(format!("{ion:?} {triple:?} is not a basis state of {layout}"))
        })?;
        let mut amps = vec![ZERO; layout.dim()];
        amps[i] = C64::new(1.0, 0.0);
        Ok(PureState { layout, amps })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    /// Ground-ion amplitudes `G_lmn` in layout order.
    pub fn ground(&self) -> &[C64] {
        &self.amps[..self.layout.block()]
    }

    /// Excited-ion amplitudes `E_lmn` in layout order.
    pub fn excited(&self) -> &[C64] {
        &self.amps[self.layout.block()..]
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amps)
    }

    pub fn normalized(&self) -> PureState {
        let s = self.norm_sqr().sqrt().recip();
        PureState { layout: self.layout, amps: self.amps.iter().map(|a| a * s).collect() }
    }
}

fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum()
}

/// Density matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityState {
    layout: Layout,
    data: Vec<C64>,
}

impl DensityState {
    pub fn from_matrix(layout: Layout, data: Vec<C64>) -> Result<Self> {
        let d = layout.dim();
        if data.len() != d * d {
            return Err(Error::LayoutMismatch { expected: d * d, found: data.len() });
        }
        Ok(DensityState { layout, data })
    }

    pub fn from_pure(psi: &PureState) -> Self {
        let a = &psi.amps;
        let data = a.iter().flat_map(|x| a.iter().map(move |y| x * y.conj())).collect();
        DensityState { layout: psi.layout, data }
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim() + j]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }

    pub fn purity(&self) -> f64 {
        // tr(ρ²) = Σ|ρ_ij|² for hermitian ρ
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let d = self.dim();
        let m = DMatrix::from_fn(d, d, |i, j| self.get(i, j));
        m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `⟨v|ρ|v⟩`
    pub fn expectation_of_projector(&self, v: &[C64]) -> f64 {
        let d = self.dim();
        let mut acc = ZERO;
        for i in 0..d {
            if v[i] == ZERO {
                continue;
            }
            let row = &self.data[i * d..(i + 1) * d];
            let inner: C64 = row.iter().zip(v).map(|(r, x)| r * x).sum();
            acc += v[i].conj() * inner;
        }
        acc.re
    }
}

/// Step, horizon, recording and seeding of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryConfig {
    pub d_tau: f64,
    pub tau_end: f64,
    pub master_seed: u64,
    pub n_trajectories: usize,
    /// Record every `record_stride` steps.
    pub record_stride: usize,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig { d_tau: 0.01, tau_end: 1000.0, master_seed: 0x5eed, n_trajectories: 1, record_stride: 100 }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_tau > 0.0 && self.d_tau <= MAX_D_TAU) {
            return Err(Error::InvalidParameter(format!("d_tau must lie in (0, {MAX_D_TAU}], got {}", self.d_tau)));
        }
        if !(self.tau_end >= 0.0) || !self.tau_end.is_finite() {
            return Err(Error::InvalidParameter(format!("tau_end must be finite and >= 0, got {}", self.tau_end)));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidParameter("record_stride must be >= 1".into()));
        }
        if self.n_trajectories == 0 {
            return Err(Error::InvalidParameter("n_trajectories must be >= 1".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.tau_end / self.d_tau).round() as usize
    }

    /// Recorded τ values: every `record_stride` steps from 0 through the last step.
    pub fn record_taus(&self) -> Vec<f64> {
        (0..=self.n_steps()).step_by(self.record_stride).map(|k| k as f64 * self.d_tau).collect()
    }
}

/// The Lindblad generator in τ units: `−i[H/γ, ρ] − ½{σ₊σ₋, ρ} + σ₋ρσ₊`.
struct Liouvillian {
    h: SparseOperator,
    scratch: Vec<C64>,
}

impl Liouvillian {
    fn new(h: &SparseOperator, gamma: f64) -> Self {
        let d = h.dim();
        Liouvillian { h: h.scale(C64::new(1.0 / gamma, 0.0)), scratch: vec![ZERO; d * d] }
    }

    /// Valid for hermitian `rho`: uses `ρH = (Hρ)†`.
    fn apply(&mut self, rho: &[C64], out: &mut [C64]) {
        let d = self.h.dim();
        let b = d / 2;
        self.h.mul_dense_into(rho, &mut self.scratch);
        let x = &self.scratch;
        for i in 0..d {
            let ei = if i >= b { 0.5 } else { 0.0 };
            for j in 0..d {
                let ej = if j >= b { 0.5 } else { 0.0 };
                let mut v = -I * (x[i * d + j] - x[j * d + i].conj()) - (ei + ej) * rho[i * d + j];
                if i < b && j < b {
                    v += rho[(i + b) * d + j + b];
                }
                out[i * d + j] = v;
            }
        }
    }
}

/// `dρ/dt = −i[H,ρ] − (γ/2)(σ₊σ₋ρ + ρσ₊σ₋ − 2σ₋ρσ₊)` for hermitian `ρ`.
pub fn lindblad_rhs(rho: &DensityState, h: &SparseOperator, gamma: f64) -> DensityState {
    assert_eq!(rho.layout, h.layout(), "state and Hamiltonian layouts differ");
    if gamma == 0.0 {
        return unitary_rhs(rho, h);
    }
    // the generator works in τ = γt; rescale back to t
    let mut gen = Liouvillian::new(h, gamma);
    let mut out = vec![ZERO; rho.data.len()];
    gen.apply(&rho.data, &mut out);
    out.iter_mut().for_each(|z| *z *= gamma);
    DensityState { layout: rho.layout, data: out }
}

fn unitary_rhs(rho: &DensityState, h: &SparseOperator) -> DensityState {
    let d = rho.dim();
    let mut x = vec![ZERO; d * d];
    h.mul_dense_into(&rho.data, &mut x);
    let data = (0..d * d).map(|k| {
        let (i, j) = (k / d, k % d);
        -I * (x[i * d + j] - x[j * d + i].conj())
    });
    DensityState { layout: rho.layout, data: data.collect() }
}

/// One classical RK4 step of a linear autonomous system.
struct Rk4 {
    k: [Vec<C64>; 4],
    tmp: Vec<C64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        Rk4 { k: std::array::from_fn(|_| vec![ZERO; n]), tmp: vec![ZERO; n] }
    }

    fn step(&mut self, y: &mut [C64], h: f64, mut f: impl FnMut(&[C64], &mut [C64])) {
        let [k1, k2, k3, k4] = &mut self.k;
        let tmp = &mut self.tmp;
        f(y, k1);
        for ((t, y), k) in tmp.iter_mut().zip(y.iter()).zip(k1.iter()) {
            *t = y + 0.5 * h * k;
        }
        f(tmp, k2);
        for ((t, y), k) in tmp.iter_mut().zip(y.iter()).zip(k2.iter()) {
            *t = y + 0.5 * h * k;
        }
        f(tmp, k3);
        for ((t, y), k) in tmp.iter_mut().zip(y.iter()).zip(k3.iter()) {
            *t = y + h * k;
        }
        f(tmp, k4);
        let w = h / 6.0;
        for i in 0..y.len() {
            y[i] += w * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

/// Summary of a Lindblad run driven through [`integrate_lindblad_with`].
#[derive(Clone, Debug)]
pub struct LindbladRun {
    pub final_state: DensityState,
    pub final_tau: f64,
    /// Largest `|tr ρ − 1|` seen at recorded times.
    pub max_trace_drift: f64,
    pub stopped_early: bool,
}

/// Fixed-step RK4 propagation of `ρ` under the master equation.
pub struct LindbladIntegrator {
    gen: Liouvillian,
    rk: Rk4,
}

impl LindbladIntegrator {
    pub fn new(h: &SparseOperator, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("gamma must be > 0, got {gamma}")));
        }
        let d = h.dim();
        Ok(LindbladIntegrator { gen: Liouvillian::new(h, gamma), rk: Rk4::new(d * d) })
    }

    pub fn step(&mut self, rho: &mut DensityState, d_tau: f64) {
        let gen = &mut self.gen;
        self.rk.step(&mut rho.data, d_tau, |y, out| gen.apply(y, out));
    }

    /// Advance by `duration` using equal steps no longer than `max_step`.
    pub fn propagate(&mut self, rho: &mut DensityState, duration: f64, max_step: f64) {
        if duration <= 0.0 {
            return;
        }
        let n = (duration / max_step).ceil().max(1.0) as usize;
        let h = duration / n as f64;
        for _ in 0..n {
            self.step(rho, h);
        }
    }
}

fn trace_drift(rho: &DensityState) -> f64 {
    let t = rho.trace();
    (t - C64::new(1.0, 0.0)).norm()
}

/// Integrate and hand every recorded snapshot to `observer`, which may stop
/// the run early. Trace drift is reported, never corrected.
pub fn integrate_lindblad_with(
    rho0: &DensityState,
    h: &SparseOperator,
    gamma: f64,
    cfg: &TrajectoryConfig,
    mut observer: impl FnMut(f64, &DensityState) -> ControlFlow<()>,
) -> Result<LindbladRun> {
    cfg.validate()?;
    if rho0.layout != h.layout() {
        return Err(Error::LayoutMismatch { expected: h.dim(), found: rho0.dim() });
    }
    let mut integ = LindbladIntegrator::new(h, gamma)?;
    let mut rho = rho0.clone();
    let n_steps = cfg.n_steps();
    let mut max_drift: f64 = trace_drift(&rho);
    let mut stopped_early = observer(0.0, &rho).is_break();
    let mut step = 0;
    while !stopped_early && step < n_steps {
        integ.step(&mut rho, cfg.d_tau);
        step += 1;
        if step % cfg.record_stride == 0 || step == n_steps {
            let tau = step as f64 * cfg.d_tau;
            let drift = trace_drift(&rho);
            if !(drift <= TRACE_DRIFT_LIMIT) {
                return Err(Error::Unstable { tau, drift });
            }
            max_drift = max_drift.max(drift);
            if step % cfg.record_stride == 0 {
                stopped_early = observer(tau, &rho).is_break();
            }
        }
    }
    Ok(LindbladRun { final_state: rho, final_tau: step as f64 * cfg.d_tau, max_trace_drift: max_drift, stopped_early })
}

/// Integrate and collect `(τ, ρ(τ))` at every recorded time.
pub fn integrate_lindblad(
    rho0: &DensityState,
    h: &SparseOperator,
    gamma: f64,
    cfg: &TrajectoryConfig,
) -> Result<Vec<(f64, DensityState)>> {
    let mut out = Vec::new();
    integrate_lindblad_with(rho0, h, gamma, cfg, |tau, rho| {
        out.push((tau, rho.clone()));
        ControlFlow::Continue(())
    })?;
    Ok(out)
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trajectory `index`: `mix64(master ^ mix64(index + 0x9E3779B97F4A7C15))`
/// with the SplitMix64 finalizer as `mix64`.
pub fn trajectory_seed(master_seed: u64, index: u64) -> u64 {
    mix64(master_seed ^ mix64(index.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(trajectory_seed(master_seed, index))
}

/// Recorded output of one trajectory.
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// Normalized snapshots at the recorded times.
    pub snapshots: Vec<(f64, PureState)>,
    /// τ of every quantum jump.
    pub jumps: Vec<f64>,
}

/// Non-hermitian drift `H/γ − (i/2)σ₊σ₋` plus jump bookkeeping.
pub struct McwfIntegrator {
    h_eff: SparseOperator,
    layout: Layout,
}

/// Jump-time bisection stops when the norm matches the threshold this closely.
const JUMP_NORM_TOL: f64 = 1e-14;
const JUMP_BISECTIONS: usize = 80;
/// Largest layout for which record intervals use a dense propagator.
const DENSE_STRIDE_MAX_DIM: usize = 128;

impl McwfIntegrator {
    pub fn new(h: &SparseOperator, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("gamma must be > 0, got {gamma}")));
        }
        let layout = h.layout();
        let b = layout.block();
        let decay = SparseOperator::diagonal(layout, |i| if i >= b { C64::new(0.0, -0.5) } else { ZERO });
        Ok(McwfIntegrator { h_eff: h.scale(C64::new(1.0 / gamma, 0.0)).add(&decay), layout })
    }

    fn drift_step(&self, rk: &mut Rk4, psi: &mut [C64], h: f64) {
        let op = &self.h_eff;
        rk.step(psi, h, |y, out| {
            op.apply_into(y, out);
            out.iter_mut().for_each(|z| *z *= -I);
        });
    }

    /// Dense matrix of `stride` consecutive drift steps of size `d_tau`, for
    /// layouts small enough that a dense product beats `stride` sparse steps.
    pub fn stride_propagator(&self, d_tau: f64, stride: usize) -> Option<DMatrix<C64>> {
        let dim = self.layout.dim();
        if dim > DENSE_STRIDE_MAX_DIM || stride < 2 {
            return None;
        }
        let mut rk = Rk4::new(dim);
        let mut step = DMatrix::zeros(dim, dim);
        let mut col = vec![ZERO; dim];
        for j in 0..dim {
            col.fill(ZERO);
            col[j] = C64::new(1.0, 0.0);
            self.drift_step(&mut rk, &mut col, d_tau);
            step.column_mut(j).copy_from_slice(&col);
        }
        let (mut acc, mut base, mut e) = (DMatrix::identity(dim, dim), step, stride);
        while e > 0 {
            if e & 1 == 1 {
                acc = &base * &acc;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        Some(acc)
    }

    /// Advance `psi` by one grid step, applying any jumps whose waiting
    /// time ends inside it.
    #[allow(clippy::too_many_arguments)]
    fn grid_step(
        &self,
        rk: &mut Rk4,
        psi: &mut [C64],
        trial: &mut [C64],
        threshold: &mut f64,
        rng: &mut impl Rng,
        jumps: &mut Vec<f64>,
        t0: f64,
        d_tau: f64,
    ) {
        let b = self.layout.block();
        let mut elapsed = 0.0;
        let mut remaining = d_tau;
        loop {
            trial.copy_from_slice(psi);
            self.drift_step(rk, trial, remaining);
            if norm_sqr(trial) > *threshold {
                psi.copy_from_slice(trial);
                return;
            }
            // the squared norm decays monotonically inside the step: bisect
            // for the sub-step where it meets the threshold
            let (mut lo, mut hi) = (0.0, remaining);
            for _ in 0..JUMP_BISECTIONS {
                let mid = 0.5 * (lo + hi);
                trial.copy_from_slice(psi);
                self.drift_step(rk, trial, mid);
                let n = norm_sqr(trial);
                if n > *threshold {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if (n - *threshold).abs() <= JUMP_NORM_TOL * *threshold {
                    break;
                }
            }
            trial.copy_from_slice(psi);
            self.drift_step(rk, trial, hi);
            // σ₋: excited block moves onto the ground block
            let excited = norm_sqr(&trial[b..]);
            if excited > 0.0 {
                let s = excited.sqrt().recip();
                for i in 0..b {
                    psi[i] = trial[b + i] * s;
                    psi[b + i] = ZERO;
                }
                jumps.push(t0 + elapsed + hi);
            } else {
                psi.copy_from_slice(trial);
                let n = norm_sqr(psi).sqrt().recip();
                psi.iter_mut().for_each(|a| *a *= n);
            }
            *threshold = rng.random();
            elapsed += hi;
            remaining -= hi;
            if remaining <= 0.0 {
                return;
            }
        }
    }

    fn run_inner(
        &self,
        psi0: &PureState,
        cfg: &TrajectoryConfig,
        rng: &mut impl Rng,
        stride_op: Option<&DMatrix<C64>>,
        observer: &mut dyn FnMut(f64, &PureState),
        on_step: &mut dyn FnMut(f64, f64),
    ) -> Result<Vec<f64>> {
        cfg.validate()?;
        if psi0.layout != self.layout {
            return Err(Error::LayoutMismatch { expected: self.layout.dim(), found: psi0.layout.dim() });
        }
        let n0 = psi0.norm_sqr();
        if (n0 - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameter(format!("initial state must be normalized, |psi|^2 = {n0}")));
        }
        let dim = self.layout.dim();
        let mut rk = Rk4::new(dim);
        let mut psi = psi0.amps.clone();
        let mut trial = vec![ZERO; dim];
        let mut threshold: f64 = rng.random();
        let mut jumps = Vec::new();
        let record = |psi: &[C64], tau: f64, observer: &mut dyn FnMut(f64, &PureState)| {
            let s = norm_sqr(psi).sqrt().recip();
            let snap = PureState { layout: self.layout, amps: psi.iter().map(|a| a * s).collect() };
            observer(tau, &snap);
        };
        record(&psi, 0.0, observer);

        let n_steps = cfg.n_steps();
        let stride = cfg.record_stride;
        let mut step = 0;
        while step < n_steps {
            if let Some(op) = stride_op.filter(|_| step % stride == 0 && step + stride <= n_steps) {
                // a whole record interval without a jump costs one product;
                // the norm is monotone, so checking the end point suffices
                for (i, t) in trial.iter_mut().enumerate() {
                    *t = op.row(i).iter().zip(&psi).map(|(a, x)| a * x).sum();
                }
                if norm_sqr(&trial) > threshold {
                    psi.copy_from_slice(&trial);
                    step += stride;
                    record(&psi, step as f64 * cfg.d_tau, observer);
                    continue;
                }
            }
            let t0 = step as f64 * cfg.d_tau;
            self.grid_step(&mut rk, &mut psi, &mut trial, &mut threshold, rng, &mut jumps, t0, cfg.d_tau);
            step += 1;
            let tau = step as f64 * cfg.d_tau;
            on_step(tau, norm_sqr(&psi));
            if step % stride == 0 {
                record(&psi, tau, observer);
            }
        }
        Ok(jumps)
    }

    /// Run one trajectory step by step; `observer` sees the normalized state
    /// at each recorded time, `on_step` the unnormalized squared norm after
    /// every grid step.
    pub fn run(
        &self,
        psi0: &PureState,
        cfg: &TrajectoryConfig,
        rng: &mut impl Rng,
        mut observer: impl FnMut(f64, &PureState),
        mut on_step: impl FnMut(f64, f64),
    ) -> Result<Vec<f64>> {
        self.run_inner(psi0, cfg, rng, None, &mut observer, &mut on_step)
    }

    /// Like [`run`](Self::run) without per-step diagnostics; jump-free record
    /// intervals are applied at once through `stride_op` when given
    /// (see [`stride_propagator`](Self::stride_propagator)).
    pub fn run_recorded(
        &self,
        psi0: &PureState,
        cfg: &TrajectoryConfig,
        rng: &mut impl Rng,
        stride_op: Option<&DMatrix<C64>>,
        mut observer: impl FnMut(f64, &PureState),
    ) -> Result<Vec<f64>> {
        self.run_inner(psi0, cfg, rng, stride_op, &mut observer, &mut |_, _| {})
    }
}

/// One MCWF trajectory seeded from `(cfg.master_seed, trajectory_index)`.
pub fn mcwf_trajectory(
    psi0: &PureState,
    h: &SparseOperator,
    gamma: f64,
    cfg: &TrajectoryConfig,
    trajectory_index: u64,
) -> Result<Trajectory> {
    let integ = McwfIntegrator::new(h, gamma)?;
    let mut rng = trajectory_rng(cfg.master_seed, trajectory_index);
    let mut snapshots = Vec::new();
    let op = integ.stride_propagator(cfg.d_tau, cfg.record_stride);
    let jumps = integ.run_recorded(psi0, cfg, &mut rng, op.as_ref(), |tau, s| snapshots.push((tau, s.clone())))?;
    Ok(Trajectory { snapshots, jumps })
}

/// Per-τ ensemble means and standard errors of a vector of observables.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleResult {
    pub taus: Vec<f64>,
    /// `mean[t][k]`: observable `k` at recorded time `t`.
    pub mean: Vec<Vec<f64>>,
    pub std_err: Vec<Vec<f64>>,
    pub n_trajectories: usize,
    pub total_jumps: usize,
}

const ENSEMBLE_CHUNK: usize = 64;

/// Run `cfg.n_trajectories` trajectories in parallel, measure each recorded
/// snapshot with `measure`, and reduce in trajectory-index order.
pub fn run_ensemble<M>(
    psi0: &PureState,
    h: &SparseOperator,
    gamma: f64,
    cfg: &TrajectoryConfig,
    measure: M,
) -> Result<EnsembleResult>
where
    M: Fn(&PureState) -> Vec<f64> + Sync,
{
    cfg.validate()?;
    let integ = McwfIntegrator::new(h, gamma)?;
    let op = integ.stride_propagator(cfg.d_tau, cfg.record_stride);
    let taus = cfg.record_taus();
    let mut count = 0usize;
    let mut mean: Vec<Vec<f64>> = Vec::new();
    let mut m2: Vec<Vec<f64>> = Vec::new();
    let mut total_jumps = 0;

    let m = cfg.n_trajectories;
    for start in (0..m).step_by(ENSEMBLE_CHUNK) {
        let end = (start + ENSEMBLE_CHUNK).min(m);
        let chunk: Vec<Result<(Vec<Vec<f64>>, usize)>> = (start..end)
            .into_par_iter()
            .map(|idx| {
                let mut rng = trajectory_rng(cfg.master_seed, idx as u64);
                let mut rows = Vec::with_capacity(taus.len());
                let jumps = integ.run_recorded(psi0, cfg, &mut rng, op.as_ref(), |_, s| rows.push(measure(s)))?;
                Ok((rows, jumps.len()))
            })
            .collect();
        for res in chunk {
            let (rows, jumps) = res?;
            total_jumps += jumps;
            count += 1;
            if mean.is_empty() {
                mean = rows.iter().map(|r| vec![0.0; r.len()]).collect();
                m2 = mean.clone();
            }
            // Welford update keeps late-time variances accurate near F = 1
            for (t, row) in rows.iter().enumerate() {
                for (k, &x) in row.iter().enumerate() {
                    let delta = x - mean[t][k];
                    mean[t][k] += delta / count as f64;
                    m2[t][k] += delta * (x - mean[t][k]);
                }
            }
        }
    }
    let std_err = m2
        .iter()
        .map(|row| {
            row.iter()
                .map(|&s| if count > 1 { (s / (count - 1) as f64 / count as f64).sqrt() } else { 0.0 })
                .collect()
        })
        .collect();
    Ok(EnsembleResult { taus, mean, std_err, n_trajectories: count, total_jumps })
}

/// Residuals of `âₓâ_yâ_z|Ψ⟩ = ξ|Ψ⟩`, `P̂|Ψ⟩ = p|Ψ⟩`, `Q̂|Ψ⟩ = q|Ψ⟩` for the
/// vibrational state conditioned on the ion being in `|g⟩`. Mixed states use
/// the root-mean-square form `√(tr(K ρ_gg K†)/tr ρ_gg)`.
pub trait GroundConditioned {
    fn ground_residual(&self, op: &SparseOperator, shift: C64) -> Result<f64>;
}

impl GroundConditioned for PureState {
    fn ground_residual(&self, op: &SparseOperator, shift: C64) -> Result<f64> {
        let b = self.layout.block();
        let weight = norm_sqr(self.ground());
        if weight == 0.0 {
            return Err(Error::InvalidParameter("state has no ground-ion population".into()));
        }
        let mut g = self.amps.clone();
        g[b..].fill(ZERO);
        let r = op.apply(&g);
        Ok((r.iter().zip(&g).map(|(a, x)| (a - shift * x).norm_sqr()).sum::<f64>() / weight).sqrt())
    }
}

impl GroundConditioned for DensityState {
    fn ground_residual(&self, op: &SparseOperator, shift: C64) -> Result<f64> {
        let d = self.dim();
        let b = self.layout.block();
        let weight: f64 = (0..b).map(|i| self.get(i, i).re).sum();
        if weight <= 0.0 {
            return Err(Error::InvalidParameter("state has no ground-ion population".into()));
        }
        let k = op.sub(&SparseOperator::identity(self.layout).scale(shift));
        let mut gg = self.data.clone();
        for i in 0..d {
            for j in 0..d {
                if i >= b || j >= b {
                    gg[i * d + j] = ZERO;
                }
            }
        }
        let mut kr = vec![ZERO; d * d];
        k.mul_dense_into(&gg, &mut kr);
        // tr(K ρ K†) = Σ_{(i,j)∈K} (Kρ)_{ij} · conj(K_ij)
        let val: C64 = k.triplets().map(|(i, j, v)| kr[i * d + j] * v.conj()).sum();
        Ok((val.re.max(0.0) / weight).sqrt())
    }
}

pub fn steady_state_residual(state: &impl GroundConditioned, layout: &Layout, xi: C64, p: usize, q: usize) -> Result<[f64; 3]> {
    let (p_op, q_op) = fockspace::charge_ops(layout);
    Ok([
        state.ground_residual(&fockspace::trilinear(layout), xi)?,
        state.ground_residual(&p_op, C64::new(p as f64, 0.0))?,
        state.ground_residual(&q_op, C64::new(q as f64, 0.0))?,
    ])
}
