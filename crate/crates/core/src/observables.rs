//! Fock-triple probabilities, ionic inversion, fidelity against the target
//! dark state `|g⟩⊗|ξ,p,q⟩`, and the generation time τ_s.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;

use crate::dynamics::{DensityState, EnsembleResult, PureState};
use crate::error::{Error, Result};
use crate::fockspace::{Ion, Layout, Triple};
use crate::tcs_state::TcsVector;

/// Default threshold on `1 − F` defining the generation time.
pub const GENERATION_THRESHOLD: f64 = 1e-5;
/// Relative width at which τ_s bisection stops.
pub const GENERATION_REL_TOL: f64 = 1e-3;

/// Read access shared by pure and mixed states.
pub trait Observed {
    fn layout(&self) -> Layout;
    /// Diagonal populations in basis order.
    fn populations(&self) -> Vec<f64>;
    /// `⟨v|ρ|v⟩` (or `|⟨v|ψ⟩|²`).
    fn projector_expectation(&self, v: &[C64]) -> f64;
}

impl Observed for PureState {
    fn layout(&self) -> Layout {
        PureState::layout(self)
    }

    fn populations(&self) -> Vec<f64> {
        self.amplitudes().iter().map(|a| a.norm_sqr()).collect()
    }

    fn projector_expectation(&self, v: &[C64]) -> f64 {
        let overlap: C64 = v.iter().zip(self.amplitudes()).map(|(t, a)| t.conj() * a).sum();
        overlap.norm_sqr()
    }
}

impl Observed for DensityState {
    fn layout(&self) -> Layout {
        DensityState::layout(self)
    }

    fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i).re).collect()
    }

    fn projector_expectation(&self, v: &[C64]) -> f64 {
        self.expectation_of_projector(v)
    }
}

/// `P(l,m,n) = |G_lmn|² + |E_lmn|²` for every triple of the layout.
pub fn fock_probabilities(state: &impl Observed) -> BTreeMap<Triple, f64> {
    let layout = state.layout();
    let pops = state.populations();
    let b = layout.block();
    layout.triples().into_iter().enumerate().map(|(i, t)| (t, pops[i] + pops[b + i])).collect()
}

/// `⟨σ_z⟩ = Σ (|E_lmn|² − |G_lmn|²)`
pub fn inversion(state: &impl Observed) -> f64 {
    let pops = state.populations();
    let b = pops.len() / 2;
    pops[b..].iter().sum::<f64>() - pops[..b].iter().sum::<f64>()
}

/// `F = ⟨g,TCS|ρ|g,TCS⟩`, the overlap with the dark state.
pub fn fidelity(state: &impl Observed, target: &TcsVector) -> Result<f64> {
    let v = target.embed(Ion::Ground, &state.layout())?;
    Ok(state.projector_expectation(&v))
}

/// Precomputed measurement of `[σ_z, F, P(tracked₀), P(tracked₁), …]`.
#[derive(Clone, Debug)]
pub struct Probe {
    layout: Layout,
    target: Vec<C64>,
    tracked: Vec<Triple>,
    tracked_idx: Vec<(usize, usize)>,
}

impl Probe {
    pub fn new(layout: Layout, target: &TcsVector, tracked: Vec<Triple>) -> Result<Self> {
        let target_vec = target.embed(Ion::Ground, &layout)?;
        let tracked_idx = tracked
            .iter()
            .map(|&t| {
                let g = layout.index_of(Ion::Ground, t);
                let e = layout.index_of(Ion::Excited, t);
                g.zip(e).ok_or_else(|| Error::CutoffMismatch(format!("tracked triple {t:?} not in {layout}")))
            })
            .collect::<Result<_>>()?;
        Ok(Probe { layout, target: target_vec, tracked, tracked_idx })
    }

    /// Track the ladder triples `(n+q, n+p, n)` for `n = 0..=n_top`.
    pub fn ladder(layout: Layout, target: &TcsVector, n_top: usize) -> Result<Self> {
        let (p, q) = (target.params().p(), target.params().q());
        Self::new(layout, target, (0..=n_top).map(|n| [n + q, n + p, n]).collect())
    }

    pub fn tracked(&self) -> &[Triple] {
        &self.tracked
    }

    pub fn width(&self) -> usize {
        2 + self.tracked.len()
    }

    pub fn measure(&self, state: &impl Observed) -> Vec<f64> {
        debug_assert_eq!(state.layout(), self.layout);
        let pops = state.populations();
        let mut out = Vec::with_capacity(self.width());
        out.push(inversion(state));
        out.push(state.projector_expectation(&self.target));
        out.extend(self.tracked_idx.iter().map(|&(g, e)| pops[g] + pops[e]));
        out
    }
}

/// Recorded time series of the reported observables.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObservableSeries {
    pub tau: Vec<f64>,
    pub sigma_z: Vec<f64>,
    pub fidelity: Vec<f64>,
    pub tracked: Vec<Triple>,
    /// `probabilities[t][k]` for `tracked[k]`.
    pub probabilities: Vec<Vec<f64>>,
    pub sigma_z_se: Option<Vec<f64>>,
    pub fidelity_se: Option<Vec<f64>>,
}

impl ObservableSeries {
    pub fn new(tracked: Vec<Triple>) -> Self {
        ObservableSeries { tracked, ..Default::default() }
    }

    /// Append one row as produced by [`Probe::measure`].
    pub fn push(&mut self, tau: f64, row: &[f64]) {
        self.tau.push(tau);
        self.sigma_z.push(row[0]);
        self.fidelity.push(row[1]);
        self.probabilities.push(row[2..].to_vec());
    }

    pub fn from_ensemble(result: &EnsembleResult, tracked: Vec<Triple>) -> Self {
        let mut s = ObservableSeries::new(tracked);
        for (tau, row) in result.taus.iter().zip(&result.mean) {
            s.push(*tau, row);
        }
        s.sigma_z_se = Some(result.std_err.iter().map(|r| r[0]).collect());
        s.fidelity_se = Some(result.std_err.iter().map(|r| r[1]).collect());
        s
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn max_fidelity(&self) -> f64 {
        self.fidelity.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// First recorded sample with `1 − F ≤ threshold`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Crossing {
    pub index: usize,
    /// Bracketing recorded times `(τ_{i−1}, τ_i)`; degenerate at index 0.
    pub bracket: (f64, f64),
    /// Log-linear interpolation of `1 − F` inside the bracket.
    pub guess: f64,
}

pub fn first_crossing(series: &ObservableSeries, threshold: f64) -> Result<Crossing> {
    let index = series
        .fidelity
        .iter()
        .position(|f| 1.0 - f <= threshold)
        .ok_or(Error::NotConverged { threshold, max_fidelity: series.max_fidelity() })?;
    if index == 0 {
        let t = series.tau[0];
        return Ok(Crossing { index, bracket: (t, t), guess: t });
    }
    let (t0, t1) = (series.tau[index - 1], series.tau[index]);
    let (d0, d1) = (1.0 - series.fidelity[index - 1], 1.0 - series.fidelity[index]);
    let guess = if d0 > 0.0 && d1 > 0.0 && d0 != d1 {
        let (l0, l1, lt) = (d0.ln(), d1.ln(), threshold.ln());
        t0 + (t1 - t0) * (l0 - lt) / (l0 - l1)
    } else {
        0.5 * (t0 + t1)
    };
    Ok(Crossing { index, bracket: (t0, t1), guess: guess.clamp(t0, t1) })
}

/// Generation time τ_s: first recorded crossing of `1 − F = threshold`,
/// refined by bisection with `fidelity_at` (which re-integrates to any τ
/// inside the bracket) to relative width [`GENERATION_REL_TOL`].
pub fn generation_time(
    series: &ObservableSeries,
    threshold: f64,
    mut fidelity_at: impl FnMut(f64) -> Result<f64>,
) -> Result<f64> {
    let crossing = first_crossing(series, threshold)?;
    let (mut lo, mut hi) = crossing.bracket;
    if crossing.index == 0 {
        return Ok(lo);
    }
    let mut probe = crossing.guess;
    while hi - lo > GENERATION_REL_TOL * hi {
        if !(probe > lo && probe < hi) {
            probe = 0.5 * (lo + hi);
        }
        if 1.0 - fidelity_at(probe)? <= threshold {
            hi = probe;
        } else {
            lo = probe;
        }
        probe = 0.5 * (lo + hi);
    }
    Ok(0.5 * (lo + hi))
}
