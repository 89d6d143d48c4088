//! Run configuration, experiment drivers and CSV tables for the CLI.
//!
//! Every table starts with `#`-prefixed metadata lines, including an echo of
//! the configuration that produced it between `# [config]` and
//! `# [end config]` markers, followed by a single CSV header row and data
//! rows. Floats are printed with 17 significant digits.

use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::path::Path;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    self, build_hamiltonian, integrate_lindblad_with, DensityState, LindbladIntegrator, PureState, TrajectoryConfig,
};
use crate::error::{Error, Result};
use crate::fockspace::{self, Ion, Layout, SparseOperator};
use crate::laser_config::{self, IonParams, LaserSet, SignPattern};
use crate::observables::{self, ObservableSeries, Probe, GENERATION_THRESHOLD};
use crate::tcs_state::{self, QuadratureConfig, TcsParams, TcsVector};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "TRIO_ION_OUT_DIR";

/// Simulation horizon in units of `1/α` when none is configured.
pub const DEFAULT_TAU_END_PER_ALPHA: f64 = 400.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    #[default]
    Lindblad,
    Mcwf,
    Both,
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lindblad" => Ok(Engine::Lindblad),
            "mcwf" => Ok(Engine::Mcwf),
            "both" => Ok(Engine::Both),
            other => Err(Error::Config(format!("unknown engine {other:?} (expected lindblad, mcwf or both)"))),
        }
    }
}

/// Where the dynamics is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    /// The conserved `(n+q, n+p, n)` ladder, `n ≤ n_max`.
    #[default]
    Ladder,
    /// The full `2·(n_max+1)³` space, every mode cut at `n_max`.
    Full,
}

fn default_alphas() -> Vec<f64> {
    vec![0.01, 0.02, 0.03]
}

fn default_alpha_grid() -> Vec<f64> {
    (1..=10).map(|k| 0.005 * k as f64).collect()
}

fn default_xi_grid() -> Vec<f64> {
    (1..=8).map(|k| 0.5 * k as f64).collect()
}

/// `[run]` section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub xi_re: Option<f64>,
    pub xi_im: Option<f64>,
    pub alpha: Option<f64>,
    pub p: usize,
    pub q: usize,
    pub k: usize,
    pub n_max: usize,
    pub space: Space,
    pub engine: Engine,
    pub d_tau: f64,
    pub tau_end: Option<f64>,
    pub record_stride: usize,
    pub n_trajectories: usize,
    pub master_seed: u64,
    pub threshold: f64,
    pub alphas: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub xi_grid: Vec<f64>,
    pub quadrature_nodes: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            xi_re: None,
            xi_im: None,
            alpha: None,
            p: 3,
            q: 2,
            k: 4,
            n_max: 10,
            space: Space::Ladder,
            engine: Engine::Lindblad,
            d_tau: 0.01,
            tau_end: None,
            record_stride: 100,
            n_trajectories: 2000,
            master_seed: 20_021_105,
            threshold: GENERATION_THRESHOLD,
            alphas: default_alphas(),
            alpha_grid: default_alpha_grid(),
            xi_grid: default_xi_grid(),
            quadrature_nodes: 256,
        }
    }
}

/// `[lasers]` section: physical parameters from which ζ, ξ and α follow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LasersSection {
    pub rabi: [f64; 5],
    pub phase: [f64; 5],
    pub eta: f64,
    pub gamma: f64,
    #[serde(default = "reducing_signs")]
    pub sign_pattern: [i8; 4],
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
}

fn reducing_signs() -> [i8; 4] {
    SignPattern::REDUCING.0
}

fn default_delta() -> f64 {
    IonParams::default().delta
}

fn default_nu() -> f64 {
    IonParams::default().nu
}

/// `[output]` section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub path: Option<String>,
    pub no_timestamp: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub run: RunSection,
    pub lasers: Option<LasersSection>,
    pub output: OutputSection,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Recover the configuration echoed into a table header.
    pub fn from_header(csv: &str) -> Result<Self> {
        let mut inside = false;
        let mut body = String::new();
        for line in csv.lines() {
            match line {
                "# [config]" => inside = true,
                "# [end config]" => return Self::parse(&body),
                _ if inside => {
                    body.push_str(line.strip_prefix("# ").or_else(|| line.strip_prefix('#')).unwrap_or(line));
                    body.push('\n');
                }
                _ => {}
            }
        }
        Err(Error::Config("no config echo found in header".into()))
    }
}

/// Validated experiment definition.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub file: ConfigFile,
    pub xi: C64,
    pub alpha: f64,
    pub lasers: Option<(LaserSet, IonParams)>,
}

impl RunConfig {
    pub fn from_file(file: ConfigFile) -> Result<Self> {
        let run = &file.run;
        let (xi, alpha, lasers) = match &file.lasers {
            Some(ls) => {
                if run.xi_re.is_some() || run.xi_im.is_some() || run.alpha.is_some() {
                    return Err(Error::Config(
                        "xi and alpha follow from [lasers]; remove xi_re/xi_im/alpha from [run]".into(),
                    ));
                }
                let ion = IonParams { delta: ls.delta, nu: ls.nu, eta: ls.eta, gamma: ls.gamma };
                ion.validate()?;
                let signs = SignPattern::new(ls.sign_pattern)?;
                if ls.rabi.iter().any(|r| !(*r >= 0.0)) {
                    return Err(Error::Config("Rabi frequencies must be >= 0".into()));
                }
                let mut set = LaserSet::new(ls.rabi[0], 0.0, ls.rabi[4], ls.phase[4], signs, &ion);
                for l in 0..4 {
                    set.lasers[l].rabi = ls.rabi[l];
                    set.lasers[l].phase = ls.phase[l].rem_euclid(std::f64::consts::TAU);
                }
                let eff = set.effective(&ion)?;
                (eff.xi, eff.alpha, Some((set, ion)))
            }
            None => (
                C64::new(run.xi_re.unwrap_or(2.0), run.xi_im.unwrap_or(0.0)),
                run.alpha.unwrap_or(0.02),
                None,
            ),
        };
        let cfg = RunConfig { file, xi, alpha, lasers };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let run = &self.file.run;
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.alpha >= 1.0 {
            log::warn!("alpha = {} is not small; the simplified dynamics assumes alpha << 1", self.alpha);
        }
        if !self.xi.re.is_finite() || !self.xi.im.is_finite() {
            return Err(Error::Config("xi must be finite".into()));
        }
        if !(run.threshold > 0.0 && run.threshold < 1.0) {
            return Err(Error::Config(format!("threshold must lie in (0, 1), got {}", run.threshold)));
        }
        if run.space == Space::Full && run.n_max < run.p.max(run.q) {
            return Err(Error::Config("full-space cutoff n_max must be >= max(p, q)".into()));
        }
        self.trajectory(self.alpha).validate().map_err(|e| Error::Config(e.to_string()))?;
        let scenario = self.scenario(self.alpha, self.xi);
        scenario.layout().map_err(|e| Error::Config(e.to_string()))?;
        if run.k > scenario.ladder()?.n_max() {
            return Err(Error::Config(format!(
                "initial rung k = {} exceeds the ladder cutoff {}",
                run.k,
                scenario.ladder()?.n_max()
            )));
        }
        Ok(())
    }

    pub fn run(&self) -> &RunSection {
        &self.file.run
    }

    pub fn tau_end(&self, alpha: f64) -> f64 {
        self.run().tau_end.unwrap_or(DEFAULT_TAU_END_PER_ALPHA / alpha)
    }

    pub fn trajectory(&self, alpha: f64) -> TrajectoryConfig {
        let run = self.run();
        TrajectoryConfig {
            d_tau: run.d_tau,
            tau_end: self.tau_end(alpha),
            master_seed: run.master_seed,
            n_trajectories: run.n_trajectories,
            record_stride: run.record_stride,
        }
    }

    pub fn scenario(&self, alpha: f64, xi: C64) -> Scenario {
        let run = self.run();
        Scenario { xi, p: run.p, q: run.q, k: run.k, alpha, n_max: run.n_max, space: run.space }
    }
}

/// One physical setting of the simplified dynamics, with γ = 1 and real ζ = α.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scenario {
    pub xi: C64,
    pub p: usize,
    pub q: usize,
    /// Initial state `|e⟩|q+k, p+k, k⟩`.
    pub k: usize,
    pub alpha: f64,
    pub n_max: usize,
    pub space: Space,
}

impl Scenario {
    /// The acceptance parameter set: α = 0.02, ξ = 2, p = 3, q = 2, k = 4, n_max = 10.
    pub fn reference() -> Self {
        Scenario { xi: C64::new(2.0, 0.0), p: 3, q: 2, k: 4, alpha: 0.02, n_max: 10, space: Space::Ladder }
    }

    /// The ladder realized by this scenario's truncation.
    pub fn ladder(&self) -> Result<fockspace::LadderLayout> {
        match self.space {
            Space::Ladder => Ok(fockspace::build_ladder(self.p, self.q, self.n_max)),
            Space::Full => fockspace::ladder_within(self.p, self.q, self.n_max),
        }
    }

    pub fn layout(&self) -> Result<Layout> {
        Ok(match self.space {
            Space::Ladder => Layout::Ladder(self.ladder()?),
            Space::Full => Layout::Full(fockspace::build_basis(self.n_max)),
        })
    }

    pub fn hamiltonian(&self) -> Result<SparseOperator> {
        Ok(build_hamiltonian(C64::new(self.alpha, 0.0), self.xi, &self.layout()?))
    }

    pub fn initial_state(&self) -> Result<PureState> {
        PureState::basis(self.layout()?, Ion::Excited, [self.q + self.k, self.p + self.k, self.k])
    }

    pub fn target(&self) -> Result<TcsVector> {
        Ok(tcs_state::tcs_fock(TcsParams::new(self.xi, self.p, self.q), self.ladder()?.n_max()))
    }

    pub fn probe(&self) -> Result<Probe> {
        Probe::ladder(self.layout()?, &self.target()?, self.ladder()?.n_max())
    }
}

/// Lindblad time series of a scenario.
pub fn lindblad_series(scenario: &Scenario, traj: &TrajectoryConfig) -> Result<ObservableSeries> {
    let probe = scenario.probe()?;
    let rho0 = DensityState::from_pure(&scenario.initial_state()?);
    let mut series = ObservableSeries::new(probe.tracked().to_vec());
    integrate_lindblad_with(&rho0, &scenario.hamiltonian()?, 1.0, traj, |tau, rho| {
        series.push(tau, &probe.measure(rho));
        ControlFlow::Continue(())
    })?;
    Ok(series)
}

/// MCWF ensemble time series of a scenario (means and standard errors).
pub fn mcwf_series(scenario: &Scenario, traj: &TrajectoryConfig) -> Result<ObservableSeries> {
    let probe = scenario.probe()?;
    let res = dynamics::run_ensemble(&scenario.initial_state()?, &scenario.hamiltonian()?, 1.0, traj, |s| {
        probe.measure(s)
    })?;
    Ok(ObservableSeries::from_ensemble(&res, probe.tracked().to_vec()))
}

/// Outcome of a generation-time search.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerationOutcome {
    pub tau_s: Option<f64>,
    pub max_fidelity: f64,
    /// Samples recorded up to the first crossing (or the horizon).
    pub series: ObservableSeries,
}

/// Integrate until `1 − F ≤ threshold` is first recorded, then bisect inside
/// the bracketing interval by re-integrating from the stored snapshot.
pub fn lindblad_generation_time(
    scenario: &Scenario,
    traj: &TrajectoryConfig,
    threshold: f64,
) -> Result<GenerationOutcome> {
    let probe = scenario.probe()?;
    let h = scenario.hamiltonian()?;
    let rho0 = DensityState::from_pure(&scenario.initial_state()?);
    let mut series = ObservableSeries::new(probe.tracked().to_vec());
    let mut previous: Option<(f64, DensityState)> = None;
    let mut bracket_start: Option<(f64, DensityState)> = None;
    integrate_lindblad_with(&rho0, &h, 1.0, traj, |tau, rho| {
        let row = probe.measure(rho);
        series.push(tau, &row);
        if 1.0 - row[1] <= threshold {
            bracket_start = previous.take();
            return ControlFlow::Break(());
        }
        previous = Some((tau, rho.clone()));
        ControlFlow::Continue(())
    })?;

    let max_fidelity = series.max_fidelity();
    let mut integ = LindbladIntegrator::new(&h, 1.0)?;
    let tau_s = match observables::generation_time(&series, threshold, |tau| {
        let (t0, rho) = bracket_start.as_ref().expect("bracket recorded before crossing");
        let mut rho = rho.clone();
        integ.propagate(&mut rho, tau - t0, traj.d_tau);
        Ok(probe.measure(&rho)[1])
    }) {
        Ok(t) => Some(t),
        Err(Error::NotConverged { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(GenerationOutcome { tau_s, max_fidelity, series })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn render(&self, out: &mut String) {
        match self {
            Cell::Int(v) => write!(out, "{v}").unwrap(),
            Cell::Float(v) => write!(out, "{}", format_float(*v)).unwrap(),
            Cell::Text(s) => out.push_str(s),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Float(v) => Some(*v),
            Cell::Text(_) => None,
        }
    }
}

/// 17 significant digits; round-trips every finite double.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.16e}")
    }
}

/// Table with metadata header, emitted as CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultTable {
    pub meta: Vec<(String, String)>,
    pub config: Option<ConfigFile>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl ResultTable {
    fn new(command: &str, cfg: &RunConfig, columns: Vec<String>) -> Self {
        let mut meta = vec![
            ("command".to_string(), command.to_string()),
            ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("master_seed".to_string(), cfg.run().master_seed.to_string()),
        ];
        meta.push(("xi".to_string(), format!("{} {}", format_float(cfg.xi.re), format_float(cfg.xi.im))));
        meta.push(("alpha".to_string(), format_float(cfg.alpha)));
        ResultTable { meta, config: Some(cfg.file.clone()), columns, rows: Vec::new() }
    }

    pub fn push_meta(&mut self, key: &str, value: impl Into<String>) {
        self.meta.push((key.to_string(), value.into()));
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[k]).collect())
    }

    pub fn float_column(&self, name: &str) -> Option<Vec<f64>> {
        self.column(name).map(|c| c.iter().map(|v| v.as_f64().unwrap_or(f64::NAN)).collect())
    }

    /// Index column (first) strictly increasing.
    pub fn index_increasing(&self) -> bool {
        let idx: Vec<f64> = self.rows.iter().filter_map(|r| r.first().and_then(Cell::as_f64)).collect();
        idx.windows(2).all(|w| w[1] > w[0])
    }

    /// Render as CSV; `timestamp` adds a `# generated_unix:` line.
    pub fn to_csv(&self, timestamp: Option<u64>) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            writeln!(out, "# {k}: {v}").unwrap();
        }
        if let Some(ts) = timestamp {
            writeln!(out, "# generated_unix: {ts}").unwrap();
        }
        if let Some(cfg) = &self.config {
            out.push_str("# [config]\n");
            for line in cfg.to_toml().lines() {
                if line.is_empty() {
                    out.push_str("#\n");
                } else {
                    writeln!(out, "# {line}").unwrap();
                }
            }
            out.push_str("# [end config]\n");
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            for (i, c) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                c.render(&mut out);
            }
            out.push('\n');
        }
        out
    }
}

fn triple_label(t: [usize; 3]) -> String {
    format!("P_{}_{}_{}", t[0], t[1], t[2])
}

/// `coeffs`: the TCS coefficient table `n, Re C_n, Im C_n, |C_n|²`.
pub fn cmd_coeffs(cfg: &RunConfig) -> Result<ResultTable> {
    let run = cfg.run();
    let params = TcsParams::new(cfg.xi, run.p, run.q);
    let top = if params.r() == 0.0 { 0 } else { run.n_max };
    let v = tcs_state::tcs_fock(params, top);
    let mut table = ResultTable::new("coeffs", cfg, ["n", "re_c", "im_c", "abs2_c"].map(String::from).to_vec());
    table.push_meta("normalization", format_float(v.norm_const()));
    table.push_meta("truncation_remainder", format_float(v.truncation_remainder()));
    for (n, c) in v.coeffs().iter().enumerate() {
        table.rows.push(vec![Cell::Int(n as i64), Cell::Float(c.re), Cell::Float(c.im), Cell::Float(c.norm_sqr())]);
    }
    Ok(table)
}

fn series_columns(prefix: &str, series: &ObservableSeries, with_se: bool) -> Vec<String> {
    let mut cols = vec![format!("{prefix}sigma_z")];
    if with_se {
        cols.push(format!("{prefix}sigma_z_se"));
    }
    cols.push(format!("{prefix}fidelity"));
    if with_se {
        cols.push(format!("{prefix}fidelity_se"));
    }
    cols.extend(series.tracked.iter().map(|t| format!("{prefix}{}", triple_label(*t))));
    cols
}

fn series_cells(series: &ObservableSeries, i: usize) -> Vec<Cell> {
    let mut row = vec![Cell::Float(series.sigma_z[i])];
    if let Some(se) = &series.sigma_z_se {
        row.push(Cell::Float(se[i]));
    }
    row.push(Cell::Float(series.fidelity[i]));
    if let Some(se) = &series.fidelity_se {
        row.push(Cell::Float(se[i]));
    }
    row.extend(series.probabilities[i].iter().map(|p| Cell::Float(*p)));
    row
}

/// `simulate`: time series of `σ_z`, `F` and tracked `P(l,m,n)`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<ResultTable> {
    let scenario = cfg.scenario(cfg.alpha, cfg.xi);
    let traj = cfg.trajectory(cfg.alpha);
    let engine = cfg.run().engine;
    let lind = matches!(engine, Engine::Lindblad | Engine::Both).then(|| lindblad_series(&scenario, &traj)).transpose()?;
    let mc = matches!(engine, Engine::Mcwf | Engine::Both).then(|| mcwf_series(&scenario, &traj)).transpose()?;

    let mut columns = vec!["tau".to_string()];
    if let Some(s) = &lind {
        columns.extend(series_columns("", s, false));
    }
    if let Some(s) = &mc {
        let prefix = if lind.is_some() { "mcwf_" } else { "" };
        columns.extend(series_columns(prefix, s, true));
    }
    let mut table = ResultTable::new("simulate", cfg, columns);
    table.push_meta("layout", scenario.layout()?.to_string());
    let taus = lind.as_ref().or(mc.as_ref()).map(|s| s.tau.clone()).unwrap_or_default();
    for (i, tau) in taus.iter().enumerate() {
        let mut row = vec![Cell::Float(*tau)];
        if let Some(s) = &lind {
            row.extend(series_cells(s, i));
        }
        if let Some(s) = &mc {
            row.extend(series_cells(s, i));
        }
        table.rows.push(row);
    }
    Ok(table)
}

/// `fidelity`: `F(τ)` for several α on a shared τ grid.
pub fn cmd_fidelity(cfg: &RunConfig, alphas: &[f64]) -> Result<ResultTable> {
    if alphas.is_empty() {
        return Err(Error::Config("at least one alpha is required".into()));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0)) {
        return Err(Error::Config(format!("alpha values must be positive, got {a}")));
    }
    let smallest = alphas.iter().copied().fold(f64::INFINITY, f64::min);
    let traj = cfg.trajectory(smallest);
    let engine = cfg.run().engine;
    let runs: Vec<ObservableSeries> = alphas
        .par_iter()
        .map(|&a| {
            let scenario = cfg.scenario(a, cfg.xi);
            match engine {
                Engine::Mcwf => mcwf_series(&scenario, &traj),
                _ => lindblad_series(&scenario, &traj),
            }
        })
        .collect::<Result<_>>()?;
    let mut columns = vec!["tau".to_string()];
    columns.extend(alphas.iter().map(|a| format!("F_alpha={a}")));
    let mut table = ResultTable::new("fidelity", cfg, columns);
    table.push_meta("alphas", alphas.iter().map(|a| format_float(*a)).collect::<Vec<_>>().join(" "));
    for (i, tau) in runs[0].tau.iter().enumerate() {
        let mut row = vec![Cell::Float(*tau)];
        row.extend(runs.iter().map(|s| Cell::Float(s.fidelity[i])));
        table.rows.push(row);
    }
    Ok(table)
}

fn status_cells(outcome: &GenerationOutcome) -> [Cell; 3] {
    match outcome.tau_s {
        Some(t) => [Cell::Float(t), Cell::Text("ok".into()), Cell::Float(outcome.max_fidelity)],
        None => [Cell::Text(String::new()), Cell::Text("not-converged".into()), Cell::Float(outcome.max_fidelity)],
    }
}

/// `sweep-alpha`: τ_s for each α of the grid.
pub fn cmd_sweep_alpha(cfg: &RunConfig, grid: &[f64]) -> Result<ResultTable> {
    if let Some(a) = grid.iter().find(|a| !(**a > 0.0)) {
        return Err(Error::Config(format!("alpha values must be positive, got {a}")));
    }
    let threshold = cfg.run().threshold;
    let outcomes: Vec<GenerationOutcome> = grid
        .par_iter()
        .map(|&a| lindblad_generation_time(&cfg.scenario(a, cfg.xi), &cfg.trajectory(a), threshold))
        .collect::<Result<_>>()?;
    let mut table = ResultTable::new(
        "sweep-alpha",
        cfg,
        ["alpha", "tau_s", "status", "max_fidelity"].map(String::from).to_vec(),
    );
    table.push_meta("threshold", format_float(threshold));
    for (a, o) in grid.iter().zip(&outcomes) {
        let mut row = vec![Cell::Float(*a)];
        row.extend(status_cells(o));
        table.rows.push(row);
    }
    Ok(table)
}

/// `compare-schemes`: τ_s with the eight-laser α and its five-laser image.
pub fn cmd_compare_schemes(cfg: &RunConfig, xi_grid: &[f64]) -> Result<ResultTable> {
    if let Some(x) = xi_grid.iter().find(|x| !(**x > 0.0)) {
        return Err(Error::Config(format!("xi grid values must be positive, got {x}")));
    }
    let alpha_l8 = cfg.alpha;
    let alpha_l5 = laser_config::map_alpha_between_schemes(alpha_l8)?;
    let threshold = cfg.run().threshold;
    let jobs: Vec<(f64, f64)> = xi_grid.iter().flat_map(|&x| [(x, alpha_l8), (x, alpha_l5)]).collect();
    let outcomes: Vec<GenerationOutcome> = jobs
        .par_iter()
        .map(|&(x, a)| lindblad_generation_time(&cfg.scenario(a, C64::new(x, 0.0)), &cfg.trajectory(a), threshold))
        .collect::<Result<_>>()?;
    let mut table = ResultTable::new(
        "compare-schemes",
        cfg,
        ["xi", "tau_s_L8", "tau_s_L5", "ratio", "status"].map(String::from).to_vec(),
    );
    table.push_meta("alpha_map", format!("{} -> {}", format_float(alpha_l8), format_float(alpha_l5)));
    table.push_meta("threshold", format_float(threshold));
    for (x, pair) in xi_grid.iter().zip(outcomes.chunks(2)) {
        let (l8, l5) = (&pair[0], &pair[1]);
        let row = match (l8.tau_s, l5.tau_s) {
            (Some(a), Some(b)) => vec![
                Cell::Float(*x),
                Cell::Float(a),
                Cell::Float(b),
                Cell::Float(a / b),
                Cell::Text("ok".into()),
            ],
            _ => vec![
                Cell::Float(*x),
                l8.tau_s.map_or(Cell::Text(String::new()), Cell::Float),
                l5.tau_s.map_or(Cell::Text(String::new()), Cell::Float),
                Cell::Text(String::new()),
                Cell::Text("not-converged".into()),
            ],
        };
        table.rows.push(row);
    }
    Ok(table)
}

/// One line of the `verify` report.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            writeln!(out, "[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail).unwrap();
        }
        writeln!(out, "{}", if self.passed() { "all checks passed" } else { "verification FAILED" }).unwrap();
        out
    }
}

/// Largest deviation of F(τ) between cutoffs `n_max` and `n_max + 1`.
pub fn cutoff_stability(scenario: &Scenario, traj: &TrajectoryConfig) -> Result<f64> {
    let bigger = Scenario { n_max: scenario.n_max + 1, ..*scenario };
    let runs: Vec<ObservableSeries> =
        [*scenario, bigger].par_iter().map(|s| lindblad_series(s, traj)).collect::<Result<_>>()?;
    Ok(runs[0].fidelity.iter().zip(&runs[1].fidelity).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// Largest deviation of all observables between a ladder run and the
/// equivalent full-space run (`n_max` is the full per-mode cutoff).
pub fn ladder_full_deviation(scenario: &Scenario, traj: &TrajectoryConfig) -> Result<f64> {
    let full = Scenario { space: Space::Full, ..*scenario };
    let ladder = Scenario { space: Space::Ladder, n_max: full.ladder()?.n_max(), ..*scenario };
    let runs: Vec<ObservableSeries> =
        [ladder, full].par_iter().map(|s| lindblad_series(s, traj)).collect::<Result<_>>()?;
    let (a, b) = (&runs[0], &runs[1]);
    let mut worst: f64 = 0.0;
    for i in 0..a.len() {
        worst = worst.max((a.sigma_z[i] - b.sigma_z[i]).abs()).max((a.fidelity[i] - b.fidelity[i]).abs());
        for (x, y) in a.probabilities[i].iter().zip(&b.probabilities[i]) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

/// `verify`: invariant suite with measured numbers.
pub fn cmd_verify(cfg: &RunConfig) -> Result<VerifyReport> {
    let run = cfg.run();
    let mut checks = Vec::new();
    let mut check = |name: &str, passed: bool, detail: String| {
        checks.push(Check { name: name.to_string(), passed, detail })
    };

    let params = TcsParams::new(cfg.xi, run.p, run.q);
    let v = tcs_state::tcs_fock(params, run.n_max);
    let res = tcs_state::verify_eigenrelations(&v, 1e-13);
    check(
        "eigenrelations",
        res.trilinear < 1e-8 && res.p_charge < 1e-13 && res.q_charge < 1e-13,
        format!(
            "|(axayaz - xi)v| = {:.3e} (tail bound {:.3e}), |(P - p)v| = {:.3e}, |(Q - q)v| = {:.3e}",
            res.trilinear, res.tail_bound, res.p_charge, res.q_charge
        ),
    );
    let norm = v.norm_sqr();
    check("normalization", (1.0 - 1e-12..=1.0 + 1e-15).contains(&norm), format!("sum |C_n|^2 = {norm:.17}"));

    let layout = fockspace::build_basis(5);
    for signs in SignPattern::all_up_to_global_sign() {
        let red = laser_config::verify_trilinear_reduction(signs, &layout)?;
        let tag = match signs {
            SignPattern::REDUCING => " [default]",
            SignPattern::PAIRED => " [paired phase condition]",
            _ => "",
        };
        let passed = signs != SignPattern::REDUCING
            || ((red.scalar - C64::new(24.0, 0.0)).norm() < 1e-12 && red.residual < 1e-13);
        check(
            &format!("trilinear reduction {signs}{tag}"),
            passed,
            format!("scalar = {:.6} {:+.6}i, residual = {:.3e}", red.scalar.re, red.scalar.im, red.residual),
        );
    }

    if params.r() > 0.0 {
        let quad = QuadratureConfig::uniform(run.quadrature_nodes);
        let integral = tcs_state::tcs_integral(params, quad, run.n_max)?;
        let dev = integral
            .vector
            .coeffs()
            .iter()
            .zip(v.coeffs())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        check(
            "integral vs Fock representation",
            dev < 1e-8 && integral.off_ladder_max < 1e-10,
            format!("max |C_int - C_fock| = {dev:.3e}, max off-ladder amplitude = {:.3e}", integral.off_ladder_max),
        );
    }

    let scenario = cfg.scenario(cfg.alpha, cfg.xi);
    let traj = cfg.trajectory(cfg.alpha);
    let dev = cutoff_stability(&Scenario { space: Space::Ladder, ..scenario }, &traj)?;
    check(
        "cutoff stability",
        dev < 1e-6,
        format!("max |F(n_max={}) - F(n_max={})| = {dev:.3e} over tau <= {}", run.n_max + 1, run.n_max, traj.tau_end),
    );

    let full_cut = 5.max(run.p.max(run.q) + 1);
    let top = full_cut - run.p.max(run.q);
    let small = Scenario { n_max: full_cut, k: 2.min(top), ..scenario };
    let short = TrajectoryConfig { tau_end: 20.0, record_stride: 10, ..traj };
    let dev = ladder_full_deviation(&small, &short)?;
    check(
        "ladder vs full space",
        dev < 1e-10,
        format!("max observable deviation = {dev:.3e} (full n_max = {full_cut}, k = {}, tau <= 20)", small.k),
    );
    Ok(VerifyReport { checks })
}
