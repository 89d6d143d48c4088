//! Truncated three-mode Fock space for a two-level ion, sparse operators over
//! it, and the conserved `(n+q, n+p, n)` ladder subspace.
//!
//! Every layout orders its basis with the ion index slowest, so the ground
//! block occupies the first half of any state vector and the excited block
//! the second half.

use std::fmt;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Internal state of the two-level ion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ion {
    Ground,
    Excited,
}

impl Ion {
    pub fn index(self) -> usize {
        match self {
            Ion::Ground => 0,
            Ion::Excited => 1,
        }
    }
}

/// Vibrational axis of the 3D trap.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    fn slot(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Occupation numbers `(l, m, n)` along `x`, `y`, `z`.
pub type Triple = [usize; 3];

/// Full truncated space `2 ⊗ (n_max+1)³`, every mode cut at `n_max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BasisLayout {
    n_max: usize,
}

impl BasisLayout {
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Number of Fock levels per mode.
    pub fn levels(&self) -> usize {
        self.n_max + 1
    }

    pub fn dim_vib(&self) -> usize {
        self.levels().pow(3)
    }

    pub fn dim_total(&self) -> usize {
        2 * self.dim_vib()
    }

    /// Linear index of `(ion, l, m, n)`; `None` if any occupation exceeds the cutoff.
    pub fn flatten(&self, ion: Ion, triple: Triple) -> Option<usize> {
        let d = self.levels();
        if triple.iter().any(|&k| k >= d) {
            return None;
        }
        let [l, m, n] = triple;
        Some(ion.index() * self.dim_vib() + (l * d + m) * d + n)
    }

    pub fn unflatten(&self, index: usize) -> (Ion, Triple) {
        assert!(index < self.dim_total(), "index {index} out of range");
        let d = self.levels();
        let ion = if index < self.dim_vib() { Ion::Ground } else { Ion::Excited };
        let v = index % self.dim_vib();
        (ion, [v / (d * d), (v / d) % d, v % d])
    }
}

pub fn build_basis(n_max: usize) -> BasisLayout {
    BasisLayout { n_max }
}

/// Ladder subspace spanned by `|ion⟩|n+q⟩ₓ|n+p⟩_y|n⟩_z`, `n = 0..=n_max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LadderLayout {
    p: usize,
    q: usize,
    n_max: usize,
}

impl LadderLayout {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn rungs(&self) -> usize {
        self.n_max + 1
    }

    pub fn dim(&self) -> usize {
        2 * self.rungs()
    }

    pub fn triple(&self, n: usize) -> Triple {
        [n + self.q, n + self.p, n]
    }

    pub fn index(&self, ion: Ion, n: usize) -> Option<usize> {
        (n <= self.n_max).then(|| ion.index() * self.rungs() + n)
    }

    /// Per-mode cutoff of the smallest full layout containing this ladder.
    pub fn full_cutoff(&self) -> usize {
        self.n_max + self.p.max(self.q)
    }

    /// Rung index of `triple` if it lies on this ladder.
    pub fn rung_of(&self, triple: Triple) -> Option<usize> {
        let [l, m, n] = triple;
        (n <= self.n_max && l == n + self.q && m == n + self.p).then_some(n)
    }
}

pub fn build_ladder(p: usize, q: usize, n_max: usize) -> LadderLayout {
    LadderLayout { p, q, n_max }
}

/// The largest ladder that fits inside a full layout with cutoff `full_n_max`.
pub fn ladder_within(p: usize, q: usize, full_n_max: usize) -> Result<LadderLayout> {
    full_n_max
        .checked_sub(p.max(q))
        .map(|n_max| build_ladder(p, q, n_max))
        .ok_or_else(|| {
            Error::CutoffMismatch(format!(
                "full cutoff {full_n_max} cannot hold any rung of the (p={p}, q={q}) ladder"
            ))
        })
}

/// Either the full truncated space or a conserved ladder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Layout {
    Full(BasisLayout),
    Ladder(LadderLayout),
}

impl From<BasisLayout> for Layout {
    fn from(b: BasisLayout) -> Self {
        Layout::Full(b)
    }
}

impl From<LadderLayout> for Layout {
    fn from(l: LadderLayout) -> Self {
        Layout::Ladder(l)
    }
}

impl Layout {
    pub fn dim(&self) -> usize {
        match self {
            Layout::Full(b) => b.dim_total(),
            Layout::Ladder(l) => l.dim(),
        }
    }

    /// Size of one ion block (`dim / 2`).
    pub fn block(&self) -> usize {
        self.dim() / 2
    }

    pub fn split(&self, index: usize) -> (Ion, Triple) {
        match self {
            Layout::Full(b) => b.unflatten(index),
            Layout::Ladder(l) => {
                assert!(index < l.dim(), "index {index} out of range");
                let ion = if index < l.rungs() { Ion::Ground } else { Ion::Excited };
                (ion, l.triple(index % l.rungs()))
            }
        }
    }

    pub fn index_of(&self, ion: Ion, triple: Triple) -> Option<usize> {
        match self {
            Layout::Full(b) => b.flatten(ion, triple),
            Layout::Ladder(l) => l.rung_of(triple).and_then(|n| l.index(ion, n)),
        }
    }

    /// Vibrational triples of one ion block, in basis order.
    pub fn triples(&self) -> Vec<Triple> {
        (0..self.block()).map(|i| self.split(i).1).collect()
    }

    /// Check a vector length against this layout.
    pub fn check_len(&self, len: usize) -> Result<()> {
        if len == self.dim() {
            Ok(())
        } else {
            Err(Error::LayoutMismatch { expected: self.dim(), found: len })
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Layout::Full(b) => write!(f, "full(n_max={}, dim={})", b.n_max, b.dim_total()),
            Layout::Ladder(l) => {
                write!(f, "ladder(p={}, q={}, n_max={}, dim={})", l.p, l.q, l.n_max, l.dim())
            }
        }
    }
}

/// Complex sparse matrix in canonical CSR form over a layout.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    layout: Layout,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<C64>,
}

impl SparseOperator {
    /// Build from unordered triplets. Entries are sorted, duplicates summed,
    /// and exact zeros dropped.
    pub fn from_triplets(layout: Layout, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        let dim = layout.dim();
        for &(r, c, _) in &triplets {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) outside dimension {dim}");
        }
        triplets.sort_by_key(|&(r, c, _)| (r, c));

        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut rows = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            if rows.last() == Some(&r) && cols.last() == Some(&c) {
                *values.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                cols.push(c);
                values.push(v);
            }
        }
        let mut k = 0;
        let mut kept_cols = Vec::with_capacity(cols.len());
        let mut kept_vals = Vec::with_capacity(values.len());
        for r in 0..dim {
            while k < rows.len() && rows[k] == r {
                if values[k] != C64::new(0.0, 0.0) {
                    kept_cols.push(cols[k]);
                    kept_vals.push(values[k]);
                }
                k += 1;
            }
            row_ptr[r + 1] = kept_cols.len();
        }
        SparseOperator { layout, row_ptr, cols: kept_cols, values: kept_vals }
    }

    pub fn zero(layout: Layout) -> Self {
        Self::from_triplets(layout, Vec::new())
    }

    pub fn identity(layout: Layout) -> Self {
        Self::diagonal(layout, |_| C64::new(1.0, 0.0))
    }

    pub fn diagonal(layout: Layout, f: impl Fn(usize) -> C64) -> Self {
        Self::from_triplets(layout, (0..layout.dim()).map(|i| (i, i, f(i))).collect())
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim()).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    /// `y = self · x`
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.dim()];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.dim());
        assert_eq!(y.len(), self.dim());
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.cols[k]];
            }
            *out = acc;
        }
    }

    /// Row-major dense right-multiplication `out = self · rho` for a
    /// `dim × dim` matrix `rho`.
    pub fn mul_dense_into(&self, rho: &[C64], out: &mut [C64]) {
        let d = self.dim();
        assert_eq!(rho.len(), d * d);
        assert_eq!(out.len(), d * d);
        out.fill(C64::new(0.0, 0.0));
        for r in 0..d {
            let dst = &mut out[r * d..(r + 1) * d];
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let v = self.values[k];
                let src = &rho[self.cols[k] * d..(self.cols[k] + 1) * d];
                for (o, s) in dst.iter_mut().zip(src) {
                    *o += v * s;
                }
            }
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.layout, self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_triplets(self.layout, self.triplets().map(|(r, c, v)| (r, c, s * v)).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.layout, other.layout, "operators live on different layouts");
        Self::from_triplets(self.layout, self.triplets().chain(other.triplets()).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    /// Sparse product `self · other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.layout, other.layout, "operators live on different layouts");
        let mut out = Vec::new();
        for r in 0..self.dim() {
            for (k, a) in self.row(r) {
                out.extend(other.row(k).map(|(c, b)| (r, c, a * b)));
            }
        }
        Self::from_triplets(self.layout, out)
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.matmul(other).sub(&other.matmul(self))
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.sub(other).max_abs()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.adjoint()) <= tol
    }

    /// Frobenius inner product `tr(self† · other)`.
    pub fn frobenius_dot(&self, other: &Self) -> C64 {
        self.triplets().map(|(r, c, v)| v.conj() * other.get(r, c)).sum()
    }
}

/// Maps each basis state to its image under a vibrational ladder action,
/// identity on the ion. Images outside the layout are dropped.
fn vib_operator(layout: Layout, action: impl Fn(Triple) -> Option<(Triple, f64)>) -> SparseOperator {
    let mut trip = Vec::new();
    for col in 0..layout.dim() {
        let (ion, t) = layout.split(col);
        if let Some((image, amp)) = action(t) {
            if let Some(row) = layout.index_of(ion, image) {
                trip.push((row, col, C64::new(amp, 0.0)));
            }
        }
    }
    SparseOperator::from_triplets(layout, trip)
}

/// `â` along `axis`: `⟨k−1|â|k⟩ = √k`, identity on the other modes and the ion.
pub fn annihilation(axis: Axis, layout: &BasisLayout) -> SparseOperator {
    let s = axis.slot();
    vib_operator(Layout::Full(*layout), |t| {
        (t[s] > 0).then(|| {
            let mut image = t;
            image[s] -= 1;
            (image, (t[s] as f64).sqrt())
        })
    })
}

/// `â†` along `axis`; amplitudes that would exceed the cutoff are dropped.
pub fn creation(axis: Axis, layout: &BasisLayout) -> SparseOperator {
    annihilation(axis, layout).adjoint()
}

pub fn number(axis: Axis, layout: &BasisLayout) -> SparseOperator {
    let s = axis.slot();
    SparseOperator::diagonal(Layout::Full(*layout), |i| {
        C64::new(layout.unflatten(i).1[s] as f64, 0.0)
    })
}

/// Axis signs of `Â₁..Â₄`: `Â_l = âₓ + s_y â_y + s_z â_z`.
pub const COMPOSITE_SIGNS: [[f64; 3]; 4] = [
    [1.0, 1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, -1.0],
    [1.0, -1.0, -1.0],
];

/// Composite mode `Â_l`, `l ∈ 1..=4`, along the laser directions (1,±1,±1).
pub fn composite_mode(l: usize, layout: &BasisLayout) -> Result<SparseOperator> {
    let signs = COMPOSITE_SIGNS.get(l.wrapping_sub(1)).ok_or(Error::InvalidCompositeMode(l))?;
    let mut trip = Vec::new();
    for (axis, sign) in Axis::ALL.iter().zip(signs) {
        trip.extend(annihilation(*axis, layout).triplets().map(|(r, c, v)| (r, c, v * sign)));
    }
    Ok(SparseOperator::from_triplets(Layout::Full(*layout), trip))
}

/// `âₓâ_yâ_z` on the vibrational factor; works on full and ladder layouts.
pub fn trilinear(layout: &Layout) -> SparseOperator {
    vib_operator(*layout, |[l, m, n]| {
        (l > 0 && m > 0 && n > 0).then(|| ([l - 1, m - 1, n - 1], ((l * m * n) as f64).sqrt()))
    })
}

/// `(P̂, Q̂) = (n_y − n_z, n_x − n_z)`.
pub fn charge_ops(layout: &Layout) -> (SparseOperator, SparseOperator) {
    let charge = |f: fn(Triple) -> f64| {
        SparseOperator::diagonal(*layout, |i| C64::new(f(layout.split(i).1), 0.0))
    };
    (
        charge(|[_, m, n]| m as f64 - n as f64),
        charge(|[l, _, n]| l as f64 - n as f64),
    )
}

/// `σ₋ = |g⟩⟨e|`.
pub fn sigma_minus(layout: &Layout) -> SparseOperator {
    let b = layout.block();
    SparseOperator::from_triplets(*layout, (0..b).map(|i| (i, b + i, C64::new(1.0, 0.0))).collect())
}

pub fn sigma_plus(layout: &Layout) -> SparseOperator {
    sigma_minus(layout).adjoint()
}

/// `σ_z = |e⟩⟨e| − |g⟩⟨g|`.
pub fn sigma_z(layout: &Layout) -> SparseOperator {
    let b = layout.block();
    SparseOperator::diagonal(*layout, |i| C64::new(if i < b { -1.0 } else { 1.0 }, 0.0))
}

/// Result of projecting a full-space vector onto a ladder.
#[derive(Clone, Debug)]
pub struct Projection {
    pub vector: Vec<C64>,
    /// Total squared norm of the dropped off-ladder components.
    pub leakage: f64,
}

fn check_embedding(full: &BasisLayout, ladder: &LadderLayout) -> Result<()> {
    if full.n_max() < ladder.full_cutoff() {
        return Err(Error::CutoffMismatch(format!(
            "ladder needs per-mode cutoff {}, full layout has {}",
            ladder.full_cutoff(),
            full.n_max()
        )));
    }
    Ok(())
}

pub fn project_to_ladder(v: &[C64], full: &BasisLayout, ladder: &LadderLayout) -> Result<Projection> {
    check_embedding(full, ladder)?;
    Layout::Full(*full).check_len(v.len())?;
    let mut vector = vec![C64::new(0.0, 0.0); ladder.dim()];
    let mut leakage = 0.0;
    for (i, amp) in v.iter().enumerate() {
        let (ion, t) = full.unflatten(i);
        match ladder.rung_of(t).and_then(|n| ladder.index(ion, n)) {
            Some(j) => vector[j] = *amp,
            None => leakage += amp.norm_sqr(),
        }
    }
    Ok(Projection { vector, leakage })
}

pub fn embed_from_ladder(w: &[C64], ladder: &LadderLayout, full: &BasisLayout) -> Result<Vec<C64>> {
    check_embedding(full, ladder)?;
    Layout::Ladder(*ladder).check_len(w.len())?;
    let mut v = vec![C64::new(0.0, 0.0); full.dim_total()];
    for (j, amp) in w.iter().enumerate() {
        let (ion, t) = Layout::Ladder(*ladder).split(j);
        let i = full.flatten(ion, t).expect("ladder triple within full cutoff");
        v[i] = *amp;
    }
    Ok(v)
}
