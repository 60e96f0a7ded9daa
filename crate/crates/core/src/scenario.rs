//! Declarative experiment grids.
//!
//! A scenario file names parameter values (codes, buffer sizes, periods,
//! per-path rates and erasure probabilities, optional sweeps) and the engines
//! to run. [`run_scenario`] expands it into grid points, evaluates them in a
//! work pool and writes one CSV per metric plus a `manifest.json`.
//!
//! ```json
//! {
//!   "name": "reliability",
//!   "code": [[4, 5], [4, 6]],
//!   "L": [1, 2, "inf"],
//!   "tau": 2.0,
//!   "mu": 1.0,
//!   "sweep": { "eps": [0.1, 0.2] },
//!   "engine": "both",
//!   "n_blocks": 100000,
//!   "seed": 7
//! }
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block::block_latency;
use crate::config::{QueueCap, SystemConfig};
use crate::error::{AnalysisError, Error, Result};
use crate::grid::GridSpec;
use crate::sim::{simulate_system_with_levels, SimParams};
use crate::stats::{ks_distance, CdfSamples, MetricSummary};
use crate::window::{paoi_window, MAX_INSTANCE_SIZE};

/// Grid cells per period used for the windowed finite-buffer PAoI.
const WINDOW_CELLS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Analytic,
    #[serde(alias = "simulate", alias = "simulation")]
    Sim,
    #[default]
    Both,
}

impl Engine {
    pub fn runs_analytic(self) -> bool {
        matches!(self, Engine::Analytic | Engine::Both)
    }

    pub fn runs_sim(self) -> bool {
        matches!(self, Engine::Sim | Engine::Both)
    }
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "analytic" => Ok(Engine::Analytic),
            "sim" | "simulate" | "simulation" => Ok(Engine::Sim),
            "both" => Ok(Engine::Both),
            other => Err(format!("unknown engine {other:?} (expected analytic, sim or both)")),
        }
    }
}

/// A single value or a list of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// Per-path values: one for all paths, one per path, or a head list padded with `fill`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerPath {
    Scalar(f64),
    Vector(Vec<f64>),
    Pattern { head: Vec<f64>, fill: f64 },
}

impl PerPath {
    pub fn resolve(&self, n: usize, field: &str) -> Result<Vec<f64>> {
        match self {
            PerPath::Scalar(x) => Ok(vec![*x; n]),
            PerPath::Vector(v) if v.len() == n => Ok(v.clone()),
            PerPath::Vector(v) => Err(Error::Scenario(format!(
                "{field} lists {} values but the code has N = {n}",
                v.len()
            ))),
            PerPath::Pattern { head, fill } if head.len() <= n => {
                let mut v = head.clone();
                v.resize(n, *fill);
                Ok(v)
            }
            PerPath::Pattern { head, .. } => Err(Error::Scenario(format!(
                "{field} head has {} values but the code has N = {n}",
                head.len()
            ))),
        }
    }
}

/// Inter-arrival periods: a value, a list, or an inclusive arithmetic range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TauSpec {
    One(f64),
    Many(Vec<f64>),
    Range { from: f64, to: f64, step: f64 },
}

impl TauSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            TauSpec::One(x) => Ok(vec![*x]),
            TauSpec::Many(v) => Ok(v.clone()),
            TauSpec::Range { from, to, step } => {
                if !(*step > 0.0) || !(to >= from) {
                    return Err(Error::Scenario(format!(
                        "invalid tau range from {from} to {to} step {step}"
                    )));
                }
                let n = ((to - from) / step + 1e-9).floor() as usize;
                // Rounded so that 0.5 + 3·0.05 prints as 0.65.
                Ok((0..=n)
                    .map(|i| ((from + i as f64 * step) * 1e9).round() / 1e9)
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// Erasure probabilities applied to every path.
    #[serde(default)]
    pub eps: Option<Vec<f64>>,
    /// Values of K replacing the code's K (N stays fixed).
    #[serde(default, rename = "K")]
    pub k: Option<Vec<usize>>,
}

/// Payload scaling: service rate `μ′_j = K μ_j / M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Redundancy {
    /// Block payload size M.
    #[serde(default, rename = "M")]
    pub payload: Option<OneOrMany<f64>>,
    /// Offered traffic G; sets `M = G·N·τ·min_j μ_j`.
    #[serde(default, rename = "G")]
    pub offered_traffic: Option<OneOrMany<f64>>,
}

fn default_mu() -> PerPath {
    PerPath::Scalar(1.0)
}

fn default_eps() -> PerPath {
    PerPath::Scalar(0.0)
}

fn default_levels() -> Vec<f64> {
    crate::sim::DEFAULT_LEVELS.to_vec()
}

fn default_blocks() -> usize {
    SimParams::default().n_blocks
}

fn default_warmup() -> usize {
    SimParams::default().warmup_blocks
}

fn default_seed() -> u64 {
    SimParams::default().rng_seed
}

fn default_max_points() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// `[K, N]` or a list of them.
    pub code: OneOrMany<[usize; 2]>,
    #[serde(rename = "L")]
    pub queue_cap: OneOrMany<QueueCap>,
    pub tau: TauSpec,
    #[serde(default = "default_mu")]
    pub mu: PerPath,
    #[serde(default = "default_eps")]
    pub eps: PerPath,
    #[serde(default)]
    pub engine: Engine,
    #[serde(default = "default_blocks")]
    pub n_blocks: usize,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Grid step h in seconds; rounded so that it divides τ.
    #[serde(default)]
    pub grid_step: Option<f64>,
    /// PAoI percentile levels.
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub redundancy: Option<Redundancy>,
    /// Maximum number of `(t, F(t))` rows per exported curve.
    #[serde(default = "default_max_points")]
    pub max_points: usize,
}

/// Command-line overrides applied on top of a scenario file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub engine: Option<Engine>,
    pub seed: Option<u64>,
    pub n_blocks: Option<usize>,
    pub grid_step: Option<f64>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(e) = o.engine {
            self.engine = e;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(n) = o.n_blocks {
            self.n_blocks = n;
            self.warmup = self.warmup.min(n / 10);
        }
        if let Some(h) = o.grid_step {
            self.grid_step = Some(h);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
            return Err(Error::Scenario("levels must lie in (0, 1)".into()));
        }
        if let Some(h) = self.grid_step {
            if !(h > 0.0) {
                return Err(Error::Scenario(format!("grid_step must be positive, got {h}")));
            }
        }
        if self.engine.runs_sim() {
            self.sim_params(self.seed).validate()?;
        }
        if let Some(r) = &self.redundancy {
            if r.payload.is_some() == r.offered_traffic.is_some() {
                return Err(Error::Scenario("redundancy needs exactly one of M or G".into()));
            }
        }
        self.points().map(|_| ())
    }

    fn sim_params(&self, seed: u64) -> SimParams {
        SimParams {
            n_blocks: self.n_blocks,
            warmup_blocks: self.warmup,
            rng_seed: seed,
            record_traces: false,
        }
    }

    fn grid_spec(&self, tau: f64) -> GridSpec {
        self.grid_step
            .map_or_else(GridSpec::default, |h| GridSpec::from_step(tau, h))
    }

    /// Expands the grid in a fixed order: code, K, G/M, ε, L, τ.
    pub fn points(&self) -> Result<Vec<GridPoint>> {
        let taus = self.tau.values()?;
        let caps = self.queue_cap.to_vec();
        let sweep = self.sweep.clone().unwrap_or_default();
        let mut out = Vec::new();
        for [k0, n] in self.code.to_vec() {
            let ks = sweep.k.clone().unwrap_or_else(|| vec![k0]);
            let base_mu = self.mu.resolve(n, "mu")?;
            let eps_values: Vec<Vec<f64>> = match &sweep.eps {
                Some(list) => list.iter().map(|&e| vec![e; n]).collect(),
                None => vec![self.eps.resolve(n, "eps")?],
            };
            for &k in &ks {
                let loads: Vec<Option<Load>> = match &self.redundancy {
                    None => vec![None],
                    Some(r) => match (&r.payload, &r.offered_traffic) {
                        (Some(m), _) => m.to_vec().into_iter().map(|m| Some(Load::Payload(m))).collect(),
                        (_, Some(g)) => g.to_vec().into_iter().map(|g| Some(Load::Traffic(g))).collect(),
                        _ => vec![None],
                    },
                };
                for load in &loads {
                    for eps in &eps_values {
                        for &cap in &caps {
                            for &tau in &taus {
                                let (mu, red) = match load {
                                    None => (base_mu.clone(), None),
                                    Some(load) => {
                                        let m = load.payload(n, tau, &base_mu);
                                        let r = redundancy_params(m, k, n, tau, &base_mu)?;
                                        (r.rates.clone(), Some(r))
                                    }
                                };
                                let cfg = SystemConfig::new(n, k, cap, tau, mu, eps.clone())?;
                                let index = out.len();
                                out.push(GridPoint {
                                    index,
                                    cfg,
                                    redundancy: red,
                                    seed: point_seed(self.seed, index as u64),
                                });
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy)]
enum Load {
    Payload(f64),
    Traffic(f64),
}

impl Load {
    fn payload(self, n: usize, tau: f64, mu: &[f64]) -> f64 {
        match self {
            Load::Payload(m) => m,
            Load::Traffic(g) => g * n as f64 * tau * mu.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

/// Per-point seed derived from the base seed (SplitMix64 finalizer).
pub fn point_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Service rates and offered traffic when a payload `M` is split into `K` packets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RedundancyParams {
    pub payload: f64,
    /// `μ′_j = K μ_j / M`: service time grows linearly with the packet size `M/K`.
    pub rates: Vec<f64>,
    /// `G = M / (N τ min_j μ_j)`.
    pub offered_traffic: f64,
}

impl RedundancyParams {
    /// True when some queue receives packets at least as fast as it serves them.
    pub fn unstable(&self, tau: f64) -> bool {
        self.rates.iter().any(|&m| m * tau <= 1.0)
    }
}

pub fn redundancy_params(payload: f64, k: usize, n: usize, tau: f64, mu: &[f64]) -> Result<RedundancyParams> {
    if !(payload > 0.0) || k == 0 || k > n || mu.len() != n || !(tau > 0.0) {
        return Err(Error::Scenario(format!(
            "invalid redundancy parameters M={payload}, K={k}, N={n}, tau={tau}"
        )));
    }
    let min_mu = mu.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(RedundancyParams {
        payload,
        rates: mu.iter().map(|&m| k as f64 * m / payload).collect(),
        offered_traffic: payload / (n as f64 * tau * min_mu),
    })
}

/// One fully resolved configuration of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub index: usize,
    pub cfg: SystemConfig,
    pub redundancy: Option<RedundancyParams>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineStatus {
    Ok,
    Skipped,
    /// L = ∞ with some μ_j τ ≤ 1: no stationary law exists.
    Unstable,
    /// Simulated although the queues are unstable.
    Nonstationary,
    /// The analytic engine could not handle the point.
    Infeasible,
}

impl EngineStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            EngineStatus::Ok => "ok",
            EngineStatus::Skipped => "skipped",
            EngineStatus::Unstable => "unstable",
            EngineStatus::Nonstationary => "nonstationary",
            EngineStatus::Infeasible => "infeasible",
        }
    }
}

/// How the analytic PAoI was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaoiKind {
    /// Full law (L = 1 or L = ∞).
    Exact,
    /// Exact only on a short horizon; see [`crate::window`].
    Window,
    None,
}

impl PaoiKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PaoiKind::Exact => "exact",
            PaoiKind::Window => "window",
            PaoiKind::None => "none",
        }
    }
}

/// Everything computed for one grid point.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub point: GridPoint,
    pub analytic_status: EngineStatus,
    pub sim_status: EngineStatus,
    pub analytic: Option<MetricSummary>,
    pub paoi_kind: PaoiKind,
    pub sim: Option<MetricSummary>,
    pub ks_latency: Option<f64>,
    pub ks_paoi: Option<f64>,
    pub warning: Option<String>,
}

/// Analytic metrics of one configuration.
pub fn analytic_summary(cfg: &SystemConfig, spec: GridSpec, levels: &[f64]) -> std::result::Result<(MetricSummary, PaoiKind), AnalysisError> {
    let a = block_latency(cfg, spec)?;
    let (paoi, kind) = match a.paoi {
        Some(g) => (Some(CdfSamples::Analytic(g)), PaoiKind::Exact),
        None => {
            let ell_max = (MAX_INSTANCE_SIZE / cfg.n_paths).saturating_sub(1);
            if ell_max >= 1 && cfg.n_paths < 2 * cfg.k_data && a.success_prob > 0.0 {
                let w = paoi_window(cfg, ell_max, GridSpec::new(spec.cells_per_period.min(WINDOW_CELLS)))?;
                (Some(CdfSamples::Analytic(w.paoi)), PaoiKind::Window)
            } else {
                (None, PaoiKind::None)
            }
        }
    };
    let summary = MetricSummary::new(a.success_prob, CdfSamples::Analytic(a.latency), paoi, levels)
        .map_err(|e| AnalysisError::InvalidArgument(e.to_string()))?;
    Ok((summary, kind))
}

fn evaluate(point: GridPoint, engine: Engine, params: SimParams, spec: GridSpec, levels: &[f64]) -> Result<PointResult> {
    let cfg = &point.cfg;
    let mut analytic_status = EngineStatus::Skipped;
    let mut analytic = None;
    let mut paoi_kind = PaoiKind::None;
    let mut warning = None;
    let mut run_sim = engine.runs_sim();
    if engine.runs_analytic() {
        match analytic_summary(cfg, spec, levels) {
            Ok((s, kind)) => {
                analytic_status = EngineStatus::Ok;
                analytic = Some(s);
                paoi_kind = kind;
            }
            Err(AnalysisError::Unstable { .. }) => analytic_status = EngineStatus::Unstable,
            Err(e) => {
                analytic_status = EngineStatus::Infeasible;
                warning = Some(format!("analytic engine failed ({e}); simulated instead"));
                run_sim = true;
            }
        }
    }
    let mut sim_status = EngineStatus::Skipped;
    let mut sim = None;
    if run_sim {
        let out = simulate_system_with_levels(cfg, &params, levels)?;
        sim_status = if cfg.queue_cap.is_unbounded() && !cfg.is_stable() {
            EngineStatus::Nonstationary
        } else {
            EngineStatus::Ok
        };
        sim = Some(out.summary);
    }
    let (mut ks_latency, mut ks_paoi) = (None, None);
    if let (Some(a), Some(s)) = (&analytic, &sim) {
        ks_latency = Some(ks_distance(a.latency_cdf.as_cdf(), s.latency_cdf.as_cdf()));
        if paoi_kind == PaoiKind::Exact {
            if let (Some(pa), Some(ps)) = (&a.paoi_cdf, &s.paoi_cdf) {
                ks_paoi = Some(ks_distance(pa.as_cdf(), ps.as_cdf()));
            }
        }
    }
    Ok(PointResult {
        point,
        analytic_status,
        sim_status,
        analytic,
        paoi_kind,
        sim,
        ks_latency,
        ks_paoi,
        warning,
    })
}

/// Evaluates every grid point of `scenario` in a work pool; results keep grid order.
pub fn evaluate_scenario(scenario: &Scenario) -> Result<Vec<PointResult>> {
    scenario.validate()?;
    let points = scenario.points()?;
    points
        .into_par_iter()
        .map(|p| {
            let params = scenario.sim_params(p.seed);
            let spec = scenario.grid_spec(p.cfg.inter_arrival);
            evaluate(p, scenario.engine, params, spec, &scenario.levels)
        })
        .collect()
}

/// One row of a τ sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct TauSweepRow {
    pub tau: f64,
    pub queue_cap: QueueCap,
    /// PAoI percentiles per level, `None` where the engine did not run.
    pub analytic: Option<Vec<f64>>,
    pub sim: Option<Vec<f64>>,
}

/// PAoI percentiles of `template` for every `τ` and buffer size.
pub fn sweep_tau(
    template: &SystemConfig,
    taus: &[f64],
    caps: &[QueueCap],
    levels: &[f64],
    engine: Engine,
    base: SimParams,
) -> Result<Vec<TauSweepRow>> {
    if taus.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Scenario("tau values must be positive".into()));
    }
    let mut points = Vec::new();
    for &cap in caps {
        for &tau in taus {
            let mut cfg = template.with_queue_cap(cap);
            cfg.inter_arrival = tau;
            let index = points.len();
            points.push(GridPoint {
                index,
                cfg,
                redundancy: None,
                seed: point_seed(base.rng_seed, index as u64),
            });
        }
    }
    let results: Vec<PointResult> = points
        .into_par_iter()
        .map(|p| {
            let params = SimParams { rng_seed: p.seed, ..base };
            evaluate(p, engine, params, GridSpec::default(), levels)
        })
        .collect::<Result<_>>()?;
    Ok(results.iter().map(|r| sweep_row(r, levels)).collect())
}

fn percentiles_of(s: &Option<MetricSummary>, levels: &[f64]) -> Option<Vec<f64>> {
    s.as_ref().map(|m| {
        levels
            .iter()
            .map(|&l| m.percentile(l).unwrap_or(f64::NAN))
            .collect()
    })
}

fn sweep_row(r: &PointResult, levels: &[f64]) -> TauSweepRow {
    TauSweepRow {
        tau: r.point.cfg.inter_arrival,
        queue_cap: r.point.cfg.queue_cap,
        analytic: percentiles_of(&r.analytic, levels),
        sim: percentiles_of(&r.sim, levels),
    }
}

/// `inf` for +∞, `NA` for missing values, shortest round-trip decimal otherwise.
pub fn fmt_value(x: Option<f64>) -> String {
    match x {
        None => "NA".into(),
        Some(v) if v.is_nan() => "NA".into(),
        Some(v) if v == f64::INFINITY => "inf".into(),
        Some(v) => format!("{v}"),
    }
}

/// Column label for a percentile level, e.g. `p95` or `p99.9`.
pub fn level_label(level: f64) -> String {
    let s = format!("{:.6}", level * 100.0);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    format!("p{s}")
}

fn joined(values: &[f64]) -> String {
    if values.windows(2).all(|w| w[0] == w[1]) {
        format!("{}", values[0])
    } else {
        values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
    }
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Header of `summary.csv` for the given percentile levels.
pub fn summary_header(levels: &[f64]) -> Vec<String> {
    let mut h: Vec<String> = [
        "point", "K", "N", "L", "tau", "mu", "eps", "G", "M", "analytic_status", "sim_status", "ps_analytic", "ps_sim",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for engine in ["analytic", "sim"] {
        for &l in levels {
            h.push(format!("paoi_{}_{engine}", level_label(l)));
        }
    }
    h.extend(
        ["paoi_saturated", "paoi_analytic_kind", "ks_latency", "ks_paoi", "warning"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

fn summary_row(r: &PointResult, levels: &[f64]) -> Vec<String> {
    let c = &r.point.cfg;
    let red = r.point.redundancy.as_ref();
    let mut row = vec![
        r.point.index.to_string(),
        c.k_data.to_string(),
        c.n_paths.to_string(),
        c.queue_cap.to_string(),
        format!("{}", c.inter_arrival),
        joined(&c.service_rates),
        joined(&c.erasure_probs),
        fmt_value(red.map(|x| x.offered_traffic)),
        fmt_value(red.map(|x| x.payload)),
        r.analytic_status.as_str().into(),
        r.sim_status.as_str().into(),
        fmt_value(r.analytic.as_ref().map(|s| s.success_prob)),
        fmt_value(r.sim.as_ref().map(|s| s.success_prob)),
    ];
    let mut saturated = false;
    for s in [&r.analytic, &r.sim] {
        for &l in levels {
            let v = s.as_ref().and_then(|m| m.percentile(l));
            saturated |= v == Some(f64::INFINITY);
            row.push(fmt_value(v));
        }
    }
    row.push(u8::from(saturated).to_string());
    row.push(r.paoi_kind.as_str().into());
    row.push(fmt_value(r.ks_latency));
    row.push(fmt_value(r.ks_paoi));
    row.push(r.warning.clone().unwrap_or_default());
    row
}

fn curve_rows(results: &[PointResult], max_points: usize, pick: impl Fn(&MetricSummary) -> Option<&CdfSamples>) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for r in results {
        for (engine, s) in [("analytic", &r.analytic), ("sim", &r.sim)] {
            if let Some(c) = s.as_ref().and_then(&pick) {
                for (t, f) in c.points(max_points) {
                    rows.push(vec![r.point.index.to_string(), engine.into(), format!("{t}"), format!("{f}")]);
                }
            }
        }
    }
    rows
}

fn tau_sweep_table(results: &[PointResult], scenario: &Scenario) -> (Vec<String>, Vec<Vec<String>>) {
    let caps = scenario.queue_cap.to_vec();
    let mut header: Vec<String> = ["K", "N", "eps", "G", "tau"].iter().map(|s| s.to_string()).collect();
    for cap in &caps {
        for engine in ["analytic", "sim"] {
            for &l in &scenario.levels {
                header.push(format!("L{cap}_{engine}_{}", level_label(l)));
            }
        }
    }
    // Points are ordered with τ innermost, then L; rows group one τ across all L.
    let n_tau = scenario.tau.values().map(|v| v.len()).unwrap_or(1);
    let block = n_tau * caps.len();
    let mut rows = Vec::new();
    for group in results.chunks(block) {
        for t in 0..n_tau {
            let first = &group[t].point;
            let mut row = vec![
                first.cfg.k_data.to_string(),
                first.cfg.n_paths.to_string(),
                joined(&first.cfg.erasure_probs),
                fmt_value(first.redundancy.as_ref().map(|r| r.offered_traffic)),
                format!("{}", first.cfg.inter_arrival),
            ];
            for c in 0..caps.len() {
                let r = sweep_row(&group[c * n_tau + t], &scenario.levels);
                for vals in [r.analytic, r.sim] {
                    for i in 0..scenario.levels.len() {
                        row.push(fmt_value(vals.as_ref().map(|v| v[i])));
                    }
                }
            }
            rows.push(row);
        }
    }
    (header, rows)
}

#[derive(Serialize)]
struct Manifest<'a> {
    generator: String,
    scenario: &'a Scenario,
    points: Vec<&'a GridPoint>,
    files: Vec<String>,
}

/// Summary of a finished run.
#[derive(Debug)]
pub struct RunReport {
    pub results: Vec<PointResult>,
    pub files: Vec<PathBuf>,
}

impl RunReport {
    /// Grid points whose analytic engine fell back to simulation.
    pub fn warnings(&self) -> Vec<String> {
        self.results
            .iter()
            .filter_map(|r| r.warning.as_ref().map(|w| format!("point {}: {w}", r.point.index)))
            .collect()
    }
}

/// Evaluates `scenario` and writes `summary.csv`, `latency_cdf.csv`,
/// `paoi_cdf.csv`, `tau_sweep.csv` (for several τ values) and `manifest.json` into `out_dir`.
pub fn run_scenario(scenario: &Scenario, out_dir: &Path) -> Result<RunReport> {
    let results = evaluate_scenario(scenario)?;
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();

    let path = out_dir.join("summary.csv");
    let rows: Vec<Vec<String>> = results.iter().map(|r| summary_row(r, &scenario.levels)).collect();
    write_csv(&path, &summary_header(&scenario.levels), &rows)?;
    files.push(path);

    let curve_header: Vec<String> = ["point", "engine", "t", "cdf"].iter().map(|s| s.to_string()).collect();
    let path = out_dir.join("latency_cdf.csv");
    write_csv(&path, &curve_header, &curve_rows(&results, scenario.max_points, |s| Some(&s.latency_cdf)))?;
    files.push(path);

    let path = out_dir.join("paoi_cdf.csv");
    write_csv(&path, &curve_header, &curve_rows(&results, scenario.max_points, |s| s.paoi_cdf.as_ref()))?;
    files.push(path);

    if scenario.tau.values()?.len() > 1 {
        let path = out_dir.join("tau_sweep.csv");
        let (header, rows) = tau_sweep_table(&results, scenario);
        write_csv(&path, &header, &rows)?;
        files.push(path);
    }

    let path = out_dir.join("manifest.json");
    let mut names: Vec<String> = files
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    names.push("manifest.json".into());
    let manifest = Manifest {
        generator: format!("mpfj {}", env!("CARGO_PKG_VERSION")),
        scenario,
        points: results.iter().map(|r| &r.point).collect(),
        files: names,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text)?;
    files.push(path);

    Ok(RunReport { results, files })
}

/// Human-readable one-line description of a point, used in logs.
pub fn describe(point: &GridPoint) -> String {
    let c = &point.cfg;
    let mut s = String::new();
    let _ = write!(s, "({},{}) L={} tau={}", c.k_data, c.n_paths, c.queue_cap, c.inter_arrival);
    if let Some(r) = &point.redundancy {
        let _ = write!(s, " G={}", r.offered_traffic);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scenario(json: &str) -> Scenario {
        Scenario::from_json(json).unwrap()
    }

    #[test]
    fn redundancy_reference_values() {
        let r = redundancy_params(2.25, 4, 6, 1.5, &[1.0; 6]).unwrap();
        assert_relative_eq!(r.offered_traffic, 0.25, epsilon = 1e-15);
        let r = redundancy_params(4.5, 4, 6, 1.5, &[1.0; 6]).unwrap();
        assert_relative_eq!(r.offered_traffic, 0.5, epsilon = 1e-15);
        // K = N with M = Nτμ is the G = 1 boundary.
        let r = redundancy_params(6.0 * 1.5, 6, 6, 1.5, &[1.0; 6]).unwrap();
        assert_relative_eq!(r.offered_traffic, 1.0);
        assert_relative_eq!(r.rates[0] * 1.5, 1.0);
        assert!(redundancy_params(0.0, 1, 6, 1.5, &[1.0; 6]).is_err());
    }

    #[test]
    fn unstable_exactly_when_service_is_too_slow() {
        for k in 1..=6 {
            let r = redundancy_params(4.5, k, 6, 1.5, &[1.0; 6]).unwrap();
            assert_eq!(r.unstable(1.5), k <= 3, "K={k}");
            let r = redundancy_params(2.25, k, 6, 1.5, &[1.0; 6]).unwrap();
            assert_eq!(r.unstable(1.5), k == 1, "K={k}");
        }
    }

    #[test]
    fn parses_all_value_forms() {
        let s = scenario(
            r#"{"name":"x","code":[[4,5],[4,6]],"L":[1,"inf"],"tau":{"from":0.5,"to":0.7,"step":0.05},
                "mu":{"head":[1.25,1.25],"fill":0.75},"eps":0.1,"engine":"analytic"}"#,
        );
        assert_eq!(s.tau.values().unwrap(), vec![0.5, 0.55, 0.6, 0.65, 0.7]);
        let points = s.points().unwrap();
        assert_eq!(points.len(), 2 * 2 * 5);
        assert_eq!(points[0].cfg.service_rates, vec![1.25, 1.25, 0.75, 0.75, 0.75]);
        assert_eq!(points[0].cfg.queue_cap, QueueCap::Finite(1));
        assert_eq!(points[5].cfg.queue_cap, QueueCap::Unbounded);
        assert_eq!(points[10].cfg.n_paths, 6);
    }

    #[test]
    fn rejects_bad_scenarios() {
        for bad in [
            r#"{"name":"x","code":[6,5],"L":1,"tau":2}"#,
            r#"{"name":"x","code":[4,5],"L":1,"tau":0}"#,
            r#"{"name":"x","code":[4,5],"L":1,"tau":2,"mu":[1,1]}"#,
            r#"{"name":"x","code":[4,5],"L":1,"tau":2,"colour":3}"#,
            r#"{"name":"x","code":[4,5],"L":1,"tau":2,"levels":[1.5]}"#,
            r#"{"name":"x","code":[4,5],"L":1,"tau":2,"n_blocks":10,"warmup":20}"#,
        ] {
            assert!(Scenario::from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn redundancy_grid_flags_unstable_points() {
        let s = scenario(
            r#"{"name":"r","code":[1,6],"L":"inf","tau":1.5,"eps":0.1,"engine":"analytic",
                "sweep":{"K":[1,2,3,4,5,6]},"redundancy":{"G":0.5},"grid_step":0.05}"#,
        );
        let results = evaluate_scenario(&s).unwrap();
        let flags: Vec<bool> = results.iter().map(|r| r.analytic_status == EngineStatus::Unstable).collect();
        assert_eq!(flags, vec![true, true, true, false, false, false]);
    }

    #[test]
    fn point_seeds_are_distinct_and_stable() {
        assert_eq!(point_seed(7, 3), point_seed(7, 3));
        assert_ne!(point_seed(7, 3), point_seed(7, 4));
        assert_ne!(point_seed(7, 3), point_seed(8, 3));
    }

    #[test]
    fn level_labels() {
        assert_eq!(level_label(0.95), "p95");
        assert_eq!(level_label(0.999), "p99.9");
    }

    #[test]
    fn single_tau_sweep_gives_single_row() {
        let cfg = SystemConfig::balanced(5, 4, QueueCap::Finite(1), 2.0, 1.0, 0.1).unwrap();
        let rows = sweep_tau(&cfg, &[2.0], &[QueueCap::Finite(1)], &[0.95], Engine::Analytic, SimParams::new(2_000, 1)).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].analytic.as_ref().unwrap()[0].is_finite());
        assert!(rows[0].sim.is_none());
    }
}
