//! Single-queue analysis.
//!
//! Packets reach queue `j` every `τ` seconds and are served FCFS at rate
//! `μ_j`; a packet that finds `L` packets in the queue pushes out the oldest
//! one. The queue length seen by arrivals is a Markov chain, and a tagged
//! packet's delivery time is Erlang on each inter-arrival piece, weighted by
//! how many packets are still ahead of it at the start of the piece.

use crate::config::{QueueCap, SystemConfig};
use crate::error::AnalysisError;
use crate::grid::{GridDistribution, GridSpec, PiecewiseLaw};
use crate::math::{poisson_pmf, poisson_upper_tail};

/// Remaining mass below which unbounded laws are truncated on the grid.
pub const UNBOUNDED_TAIL_TOL: f64 = 1e-8;
/// Tail mass at which the geometric state law is truncated.
pub const GEOMETRIC_TAIL_TOL: f64 = 1e-12;
const MAX_UNBOUNDED_PERIODS: usize = 10_000;
const STEADY_STATE_TOL: f64 = 1e-12;
const POWER_ITERATION_CAP: usize = 200_000;

/// Law of the queue occupancy seen by an arriving packet.
#[derive(Debug, Clone, PartialEq)]
pub enum QueueStateLaw {
    /// `π(s)` for `s = 0..=L`.
    Finite(Vec<f64>),
    /// `π(s) = (1−σ)σ^s`; `truncation` is the last state kept by [`Self::probs`].
    Geometric { sigma: f64, truncation: usize },
}

impl QueueStateLaw {
    pub fn geometric(sigma: f64) -> Self {
        // Smallest n with σ^{n+1} < tol, i.e. remaining tail below tol.
        let truncation = if sigma <= 0.0 {
            0
        } else {
            ((GEOMETRIC_TAIL_TOL.ln() / sigma.ln()).ceil() as usize).saturating_sub(1)
        };
        QueueStateLaw::Geometric { sigma, truncation }
    }

    pub fn prob(&self, s: usize) -> f64 {
        match self {
            QueueStateLaw::Finite(p) => p.get(s).copied().unwrap_or(0.0),
            QueueStateLaw::Geometric { sigma, .. } => (1.0 - sigma) * sigma.powi(s as i32),
        }
    }

    pub fn probs(&self) -> Vec<f64> {
        match self {
            QueueStateLaw::Finite(p) => p.clone(),
            QueueStateLaw::Geometric { truncation, .. } => {
                (0..=*truncation).map(|s| self.prob(s)).collect()
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            QueueStateLaw::Finite(p) => p.iter().enumerate().map(|(s, &x)| s as f64 * x).sum(),
            QueueStateLaw::Geometric { sigma, .. } => sigma / (1.0 - sigma),
        }
    }
}

fn finite_cap(l: usize) -> Result<(), AnalysisError> {
    if l == 0 {
        Err(AnalysisError::InvalidArgument("queue capacity must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// Transition matrix of the occupancy seen by consecutive arrivals.
///
/// Row `s` holds `min(s+1, L)` packets after the arrival; `d < c` of them
/// leave within `τ` with probability `𝒫_μ(d, τ)` and the residual mass empties the queue.
pub fn transition_matrix(mu: f64, tau: f64, l: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; l + 1]; l + 1];
    for (s, row) in m.iter_mut().enumerate() {
        let c = (s + 1).min(l);
        let mut served_all = 1.0;
        for d in 0..c {
            let p = poisson_pmf(mu, d as u32, tau);
            row[c - d] += p;
            served_all -= p;
        }
        row[0] += served_all.max(0.0);
    }
    m
}

fn left_residual(pi: &[f64], m: &[Vec<f64>]) -> f64 {
    (0..pi.len())
        .map(|j| {
            let v: f64 = (0..pi.len()).map(|i| pi[i] * m[i][j]).sum();
            (v - pi[j]).abs()
        })
        .fold(0.0, f64::max)
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                for k in col..n {
                    a[row][k] -= factor * a[col][k];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Stationary law of a row-stochastic matrix: a direct solve of
/// `π(M − I) = 0, Σπ = 1`, refined by power iteration if the residual is too large.
pub fn steady_state(m: &[Vec<f64>]) -> Result<QueueStateLaw, AnalysisError> {
    let n = m.len();
    if n == 0 || m.iter().any(|row| row.len() != n) {
        return Err(AnalysisError::InvalidArgument("transition matrix must be square".into()));
    }
    // Rows of the system are columns of Mᵀ − I; the last one is replaced by normalization.
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| m[i][j] - if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    a[n - 1] = vec![1.0; n];
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;

    let mut pi = solve_linear(a, b).unwrap_or_else(|| vec![1.0 / n as f64; n]);
    for p in pi.iter_mut() {
        *p = p.max(0.0);
    }
    let sum: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= sum);

    let mut residual = left_residual(&pi, m);
    let mut iter = 0;
    while residual >= STEADY_STATE_TOL {
        if iter == POWER_ITERATION_CAP {
            return Err(AnalysisError::NoConvergence { residual });
        }
        let next: Vec<f64> = (0..n).map(|j| (0..n).map(|i| pi[i] * m[i][j]).sum()).collect();
        let s: f64 = next.iter().sum();
        pi = next.into_iter().map(|x| x / s).collect();
        residual = left_residual(&pi, m);
        iter += 1;
    }
    Ok(QueueStateLaw::Finite(pi))
}

/// Next ahead-count after one inter-arrival piece at buffer level `level`.
///
/// `None` means the tagged packet was pushed out.
fn next_ahead(ahead: usize, departures: usize, level: usize) -> Option<usize> {
    let removed = if ahead + 1 < level { departures } else { departures.max(1) };
    ahead.checked_sub(removed)
}

/// Memoized drop probabilities `p_drop^(l)(a)` for `l = 1..=L`, `a < l`.
#[derive(Debug, Clone)]
pub struct DropTable {
    table: Vec<Vec<f64>>,
}

impl DropTable {
    pub fn new(mu: f64, tau: f64, l: usize) -> Self {
        let pois: Vec<f64> = (0..l).map(|d| poisson_pmf(mu, d as u32, tau)).collect();
        // Level 0 drops with certainty.
        let mut table: Vec<Vec<f64>> = vec![Vec::new()];
        for level in 1..=l {
            let row = (0..level)
                .map(|a| {
                    (0..=a)
                        .map(|d| {
                            pois[d]
                                * match next_ahead(a, d, level) {
                                    None => 1.0,
                                    Some(a2) => table[level - 1][a2],
                                }
                        })
                        .sum()
                })
                .collect();
            table.push(row);
        }
        DropTable { table }
    }

    /// Drop probability of a packet that joins a size-`l` buffer with `q` packets ahead.
    pub fn get(&self, l: usize, q: usize) -> Result<f64, AnalysisError> {
        if l == 0 || l >= self.table.len() || q >= l {
            return Err(AnalysisError::StateOutOfRange {
                q,
                max: l.saturating_sub(1),
            });
        }
        Ok(self.table[l][q])
    }
}

/// Drop probability `p_drop^(L)(q)` of a packet that finds `q` packets ahead.
pub fn drop_prob(mu: f64, tau: f64, l: usize, q: usize) -> Result<f64, AnalysisError> {
    finite_cap(l)?;
    if q >= l {
        return Err(AnalysisError::StateOutOfRange { q, max: l - 1 });
    }
    DropTable::new(mu, tau, l).get(l, q)
}

/// Delivery law of a tagged packet in a finite buffer.
///
/// On piece `m` the packet has `a` packets ahead with weight `weights[m][a]`
/// and is delivered at `mτ + u` with density `(1−ε) Σ_a weights[m][a] μ 𝒫_μ(a, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryLaw {
    mu: f64,
    tau: f64,
    keep: f64,
    weights: Vec<Vec<f64>>,
    cdf_start: Vec<f64>,
    dropped: f64,
}

impl DeliveryLaw {
    /// Law for an initial ahead-count distribution `initial[a]` in a size-`l` buffer.
    pub fn from_initial(mu: f64, eps: f64, tau: f64, l: usize, initial: &[f64]) -> Self {
        let pois: Vec<f64> = (0..l).map(|d| poisson_pmf(mu, d as u32, tau)).collect();
        let mut weights = Vec::with_capacity(l);
        let mut cdf_start = vec![0.0];
        let mut w: Vec<f64> = initial.to_vec();
        w.resize(l, 0.0);
        let mut dropped = 0.0;
        for m in 0..l {
            let level = l - m;
            let served: f64 = w
                .iter()
                .enumerate()
                .map(|(a, &x)| x * poisson_upper_tail(mu, a as u32, tau))
                .sum();
            cdf_start.push(cdf_start[m] + (1.0 - eps) * served);
            let mut next = vec![0.0; l];
            for (a, &x) in w.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                for (d, &p) in pois.iter().enumerate().take(a + 1) {
                    match next_ahead(a, d, level) {
                        None => dropped += x * p,
                        Some(a2) => next[a2] += x * p,
                    }
                }
            }
            weights.push(std::mem::replace(&mut w, next));
        }
        DeliveryLaw {
            mu,
            tau,
            keep: 1.0 - eps,
            weights,
            cdf_start,
            dropped,
        }
    }

    /// Packet that joins a size-`l` buffer with `q` packets ahead.
    pub fn conditional(mu: f64, eps: f64, tau: f64, l: usize, q: usize) -> Result<Self, AnalysisError> {
        finite_cap(l)?;
        if q >= l {
            return Err(AnalysisError::StateOutOfRange { q, max: l - 1 });
        }
        let mut initial = vec![0.0; l];
        initial[q] = 1.0;
        Ok(Self::from_initial(mu, eps, tau, l, &initial))
    }

    /// Ahead-count weights at the start of each piece.
    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// Probability of being pushed out of the buffer.
    pub fn drop_prob(&self) -> f64 {
        self.dropped
    }

    pub fn erasure_prob(&self) -> f64 {
        1.0 - self.keep
    }

    pub fn rate(&self) -> f64 {
        self.mu
    }
}

impl PiecewiseLaw for DeliveryLaw {
    fn period(&self) -> f64 {
        self.tau
    }

    fn pdf_at(&self, piece: usize, offset: f64) -> f64 {
        let Some(w) = self.weights.get(piece) else {
            return 0.0;
        };
        let s: f64 = w
            .iter()
            .enumerate()
            .filter(|(_, &x)| x != 0.0)
            .map(|(a, &x)| x * poisson_pmf(self.mu, a as u32, offset))
            .sum();
        self.keep * self.mu * s
    }

    fn cdf_at(&self, piece: usize, offset: f64) -> f64 {
        let Some(w) = self.weights.get(piece) else {
            return *self.cdf_start.last().expect("at least one piece");
        };
        let s: f64 = w
            .iter()
            .enumerate()
            .filter(|(_, &x)| x != 0.0)
            .map(|(a, &x)| x * poisson_upper_tail(self.mu, a as u32, offset))
            .sum();
        self.cdf_start[piece] + self.keep * s
    }

    fn total_mass(&self) -> f64 {
        *self.cdf_start.last().expect("at least one piece")
    }

    fn support_pieces(&self) -> Option<usize> {
        Some(self.weights.len())
    }
}

/// Conditional delivery law given `q` packets ahead, sampled on `(0, (L+1)τ]`.
pub fn path_latency_conditional(
    mu: f64,
    eps: f64,
    tau: f64,
    l: usize,
    q: usize,
    spec: GridSpec,
) -> Result<GridDistribution, AnalysisError> {
    let law = DeliveryLaw::conditional(mu, eps, tau, l, q)?;
    Ok(GridDistribution::from_law(&law, spec, l + 1))
}

/// Erlang(shape, rate) sub-distribution with total mass `mass`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErlangLaw {
    pub rate: f64,
    pub shape: u32,
    pub mass: f64,
    pub tau: f64,
}

impl PiecewiseLaw for ErlangLaw {
    fn period(&self) -> f64 {
        self.tau
    }

    fn pdf_at(&self, piece: usize, offset: f64) -> f64 {
        let t = piece as f64 * self.tau + offset;
        self.mass * self.rate * poisson_pmf(self.rate, self.shape - 1, t)
    }

    fn cdf_at(&self, piece: usize, offset: f64) -> f64 {
        let t = piece as f64 * self.tau + offset;
        self.mass * poisson_upper_tail(self.rate, self.shape - 1, t)
    }

    fn total_mass(&self) -> f64 {
        self.mass
    }

    fn support_pieces(&self) -> Option<usize> {
        None
    }
}

/// Which root equation defines σ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SigmaEquation {
    /// `x = e^{−μτ(1−x)}`, the pre-arrival law of a stable D/M/1 queue.
    #[default]
    Standard,
    /// `x = e^{2μτ(x−1)}`, kept for comparison.
    DoubledRate,
}

/// Root in `(0, 1)` of `x = e^{−μτ(1−x)}`.
pub fn sigma_root(mu: f64, tau: f64) -> Result<f64, AnalysisError> {
    sigma_root_with(mu, tau, SigmaEquation::Standard)
}

pub fn sigma_root_with(mu: f64, tau: f64, equation: SigmaEquation) -> Result<f64, AnalysisError> {
    let c = match equation {
        SigmaEquation::Standard => mu * tau,
        SigmaEquation::DoubledRate => 2.0 * mu * tau,
    };
    if !(c > 1.0) || !c.is_finite() {
        return Err(AnalysisError::Unstable {
            path: 0,
            load_inverse: mu * tau,
        });
    }
    let f = |x: f64| x - (-c * (1.0 - x)).exp();
    // f < 0 at 0 and f > 0 just below the trivial root at 1.
    let mut hi = 0.5;
    while f(hi) <= 0.0 {
        hi = 0.5 * (1.0 + hi);
        if 1.0 - hi < 1e-15 {
            return Err(AnalysisError::NoConvergence { residual: f(hi).abs() });
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if v.abs() < 1e-15 || hi - lo < 1e-17 {
            return Ok(mid);
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Unconditional per-path delivery law for an unbounded buffer: `Exp(μ(1−σ))` with mass `1−ε`.
pub fn infinite_delivery_law(mu: f64, eps: f64, tau: f64) -> Result<ErlangLaw, AnalysisError> {
    let sigma = sigma_root(mu, tau)?;
    Ok(ErlangLaw {
        rate: mu * (1.0 - sigma),
        shape: 1,
        mass: 1.0 - eps,
        tau,
    })
}

/// [`infinite_delivery_law`] sampled until less than `1e−8` of its mass remains.
pub fn path_latency_infinite(mu: f64, eps: f64, tau: f64, spec: GridSpec) -> Result<GridDistribution, AnalysisError> {
    let law = infinite_delivery_law(mu, eps, tau)?;
    Ok(GridDistribution::from_law_auto(
        &law,
        spec,
        UNBOUNDED_TAIL_TOL,
        MAX_UNBOUNDED_PERIODS,
    ))
}

/// Exact per-path delivery law.
#[derive(Debug, Clone, PartialEq)]
pub enum PathLaw {
    Finite(DeliveryLaw),
    Unbounded(ErlangLaw),
}

impl PiecewiseLaw for PathLaw {
    fn period(&self) -> f64 {
        match self {
            PathLaw::Finite(l) => l.period(),
            PathLaw::Unbounded(l) => l.period(),
        }
    }
    fn pdf_at(&self, piece: usize, offset: f64) -> f64 {
        match self {
            PathLaw::Finite(l) => l.pdf_at(piece, offset),
            PathLaw::Unbounded(l) => l.pdf_at(piece, offset),
        }
    }
    fn cdf_at(&self, piece: usize, offset: f64) -> f64 {
        match self {
            PathLaw::Finite(l) => l.cdf_at(piece, offset),
            PathLaw::Unbounded(l) => l.cdf_at(piece, offset),
        }
    }
    fn total_mass(&self) -> f64 {
        match self {
            PathLaw::Finite(l) => l.total_mass(),
            PathLaw::Unbounded(l) => l.total_mass(),
        }
    }
    fn support_pieces(&self) -> Option<usize> {
        match self {
            PathLaw::Finite(l) => l.support_pieces(),
            PathLaw::Unbounded(l) => l.support_pieces(),
        }
    }
}

/// Steady-state analysis of one path.
#[derive(Debug, Clone)]
pub struct PathAnalysis {
    pub path_index: usize,
    pub steady_state: QueueStateLaw,
    /// `p_drop(q)` for `q = 0..L−1`; empty for an unbounded buffer.
    pub drop_prob_by_state: Vec<f64>,
    pub drop_prob: f64,
    /// Conditional delivery laws given `q` packets ahead; empty for an unbounded buffer.
    pub latency_by_state: Vec<GridDistribution>,
    pub latency: GridDistribution,
    /// The exact law behind `latency`.
    pub law: PathLaw,
}

/// Stationary law of the number of packets ahead of a new arrival, `min(s, L−1)`.
pub fn ahead_distribution(pi: &QueueStateLaw, l: usize) -> Vec<f64> {
    let mut out = vec![0.0; l];
    for (s, p) in pi.probs().into_iter().enumerate() {
        out[s.min(l - 1)] += p;
    }
    out
}

/// Full single-path analysis of path `j`.
pub fn analyze_path(cfg: &SystemConfig, j: usize, spec: GridSpec) -> Result<PathAnalysis, AnalysisError> {
    if j >= cfg.n_paths {
        return Err(AnalysisError::InvalidArgument(format!(
            "path index {j} out of range for N = {}",
            cfg.n_paths
        )));
    }
    let (mu, eps, tau) = (cfg.service_rates[j], cfg.erasure_probs[j], cfg.inter_arrival);
    match cfg.queue_cap {
        QueueCap::Finite(l) => {
            finite_cap(l)?;
            let steady_state = steady_state(&transition_matrix(mu, tau, l))?;
            let table = DropTable::new(mu, tau, l);
            let drop_prob_by_state: Vec<f64> = (0..l).map(|q| table.get(l, q)).collect::<Result<_, _>>()?;
            let ahead = ahead_distribution(&steady_state, l);
            let drop_prob = ahead.iter().zip(&drop_prob_by_state).map(|(p, d)| p * d).sum();
            let latency_by_state = (0..l)
                .map(|q| path_latency_conditional(mu, eps, tau, l, q, spec))
                .collect::<Result<_, _>>()?;
            let law = DeliveryLaw::from_initial(mu, eps, tau, l, &ahead);
            let latency = GridDistribution::from_law(&law, spec, l + 1);
            Ok(PathAnalysis {
                path_index: j,
                steady_state,
                drop_prob_by_state,
                drop_prob,
                latency_by_state,
                latency,
                law: PathLaw::Finite(law),
            })
        }
        QueueCap::Unbounded => {
            let sigma = sigma_root(mu, tau).map_err(|e| with_path(e, j))?;
            let law = ErlangLaw {
                rate: mu * (1.0 - sigma),
                shape: 1,
                mass: 1.0 - eps,
                tau,
            };
            let latency =
                GridDistribution::from_law_auto(&law, spec, UNBOUNDED_TAIL_TOL, MAX_UNBOUNDED_PERIODS);
            Ok(PathAnalysis {
                path_index: j,
                steady_state: QueueStateLaw::geometric(sigma),
                drop_prob_by_state: Vec::new(),
                drop_prob: 0.0,
                latency_by_state: Vec::new(),
                latency,
                law: PathLaw::Unbounded(law),
            })
        }
    }
}

pub(crate) fn with_path(e: AnalysisError, path: usize) -> AnalysisError {
    match e {
        AnalysisError::Unstable { load_inverse, .. } => AnalysisError::Unstable { path, load_inverse },
        other => other,
    }
}

/// Unconditional delivery law of path `j` and its drop probability (finite `L`).
pub fn path_latency_unconditional(
    cfg: &SystemConfig,
    j: usize,
    spec: GridSpec,
) -> Result<(GridDistribution, f64), AnalysisError> {
    if cfg.queue_cap.is_unbounded() {
        return Err(AnalysisError::RequiresFiniteCapacity);
    }
    let a = analyze_path(cfg, j, spec)?;
    Ok((a.latency, a.drop_prob))
}

/// Exact per-path delivery law without sampling it on a grid.
pub fn path_law(cfg: &SystemConfig, j: usize) -> Result<PathLaw, AnalysisError> {
    let (mu, eps, tau) = (cfg.service_rates[j], cfg.erasure_probs[j], cfg.inter_arrival);
    match cfg.queue_cap {
        QueueCap::Finite(l) => {
            finite_cap(l)?;
            let pi = steady_state(&transition_matrix(mu, tau, l))?;
            let ahead = ahead_distribution(&pi, l);
            Ok(PathLaw::Finite(DeliveryLaw::from_initial(mu, eps, tau, l, &ahead)))
        }
        QueueCap::Unbounded => infinite_delivery_law(mu, eps, tau)
            .map(PathLaw::Unbounded)
            .map_err(|e| with_path(e, j)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const E2: f64 = 0.135_335_283_236_612_7;

    #[test]
    fn transition_matrix_small_cases() {
        let m = transition_matrix(1.0, 2.0, 1);
        for row in &m {
            assert_relative_eq!(row[0], 1.0 - E2, epsilon = 1e-15);
            assert_relative_eq!(row[1], E2, epsilon = 1e-15);
        }
        let m = transition_matrix(1.0, 2.0, 3);
        assert_relative_eq!(m[0][0], 1.0 - E2, epsilon = 1e-15);
        assert_relative_eq!(m[0][1], E2, epsilon = 1e-15);
        assert_eq!(&m[0][2..], &[0.0, 0.0]);
    }

    #[test]
    fn steady_state_l1_equals_row() {
        let pi = steady_state(&transition_matrix(1.0, 2.0, 1)).unwrap().probs();
        assert_relative_eq!(pi[0], 1.0 - E2, epsilon = 1e-14);
        assert_relative_eq!(pi[1], E2, epsilon = 1e-14);
    }

    #[test]
    fn steady_state_rejects_non_square() {
        assert!(steady_state(&[vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn drop_prob_closed_forms() {
        assert_relative_eq!(drop_prob(1.0, 2.0, 1, 0).unwrap(), E2, epsilon = 1e-15);
        // e^{−2μτ}(1 + μτ·δ(1−q)) for L = 2.
        for &(mu, tau) in &[(1.0, 2.0), (1.25, 1.5), (0.75, 1.0)] {
            let x: f64 = mu * tau;
            assert_relative_eq!(drop_prob(mu, tau, 2, 0).unwrap(), (-2.0 * x).exp(), epsilon = 1e-15);
            assert_relative_eq!(
                drop_prob(mu, tau, 2, 1).unwrap(),
                (-2.0 * x).exp() * (1.0 + x),
                epsilon = 1e-15
            );
        }
        assert!(matches!(
            drop_prob(1.0, 2.0, 2, 2),
            Err(AnalysisError::StateOutOfRange { q: 2, max: 1 })
        ));
    }

    #[test]
    fn recursion_matches_forward_propagation() {
        for l in 1..=6 {
            for q in 0..l {
                let law = DeliveryLaw::conditional(1.1, 0.0, 1.7, l, q).unwrap();
                assert_relative_eq!(law.drop_prob(), drop_prob(1.1, 1.7, l, q).unwrap(), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn l1_conditional_is_truncated_exponential() {
        let g = path_latency_conditional(1.0, 0.1, 2.0, 1, 0, GridSpec::default()).unwrap();
        for &t in &[0.1, 0.7, 1.9, 2.0] {
            assert_relative_eq!(g.pdf(t), 0.9 * (-t).exp(), epsilon = 1e-3);
        }
        assert_eq!(g.pdf(2.5), 0.0);
        assert_relative_eq!(g.total_mass(), 0.9 * (1.0 - E2), epsilon = 1e-15);
    }

    #[test]
    fn l2_conditional_matches_closed_form() {
        let law = DeliveryLaw::conditional(1.0, 0.1, 2.0, 2, 1).unwrap();
        for &t in &[0.3, 1.0, 2.0] {
            assert_relative_eq!(law.pdf(t), 0.9 * t * (-t).exp(), epsilon = 1e-14);
        }
        // (1−ε)(1+μτ)μe^{−μt} on (τ, 2τ].
        for &t in &[2.000_001, 3.0, 4.0] {
            assert_relative_eq!(law.pdf(t), 0.9 * 3.0 * (-t).exp(), epsilon = 1e-12);
        }
        assert_eq!(law.pdf(4.5), 0.0);
        // CDF by integrating the pdf branches.
        let cdf1 = |t: f64| 0.9 * (1.0 - (1.0 + t) * (-t).exp());
        assert_relative_eq!(law.cdf(1.3), cdf1(1.3), epsilon = 1e-14);
        let cdf2 = cdf1(2.0) + 0.9 * 3.0 * ((-2.0f64).exp() - (-3.5f64).exp());
        assert_relative_eq!(law.cdf(3.5), cdf2, epsilon = 1e-14);
    }

    #[test]
    fn conditional_mass_identity() {
        for l in 1..=4 {
            for q in 0..l {
                let g = path_latency_conditional(1.0, 0.1, 2.0, l, q, GridSpec::default()).unwrap();
                let expected = 0.9 * (1.0 - drop_prob(1.0, 2.0, l, q).unwrap());
                assert_relative_eq!(g.total_mass(), expected, epsilon = 1e-12);
                assert!((g.integrate_pdf() - expected).abs() < 1e-6);
                g.check(1e-6).unwrap();
            }
        }
    }

    #[test]
    fn conditional_cdf_decreases_with_work_ahead() {
        for l in 1..=4 {
            let laws: Vec<_> = (0..l)
                .map(|q| path_latency_conditional(1.0, 0.2, 1.5, l, q, GridSpec::new(100)).unwrap())
                .collect();
            for w in laws.windows(2) {
                for (a, b) in w[0].cdf_values().iter().zip(w[1].cdf_values()) {
                    assert!(b <= &(a + 1e-14));
                }
            }
        }
    }

    #[test]
    fn unconditional_mass_identity() {
        let cfg = SystemConfig::balanced(1, 1, QueueCap::Finite(2), 2.0, 1.0, 0.0).unwrap();
        let a = analyze_path(&cfg, 0, GridSpec::default()).unwrap();
        let pi = a.steady_state.probs();
        let expected = 1.0 - (0..=2).map(|s| pi[s] * a.drop_prob_by_state[s.min(1)]).sum::<f64>();
        assert_relative_eq!(a.latency.total_mass(), expected, epsilon = 1e-12);
        // Mixture of the conditional grids.
        for i in (0..a.latency.len()).step_by(37) {
            let mix: f64 = (0..=2)
                .map(|s| pi[s] * a.latency_by_state[s.min(1)].cdf_values()[i])
                .sum();
            assert_relative_eq!(a.latency.cdf_values()[i], mix, epsilon = 1e-12);
        }
    }

    #[test]
    fn l1_unconditional_equals_conditional() {
        let cfg = SystemConfig::balanced(3, 2, QueueCap::Finite(1), 2.0, 1.0, 0.1).unwrap();
        let (g, d) = path_latency_unconditional(&cfg, 1, GridSpec::default()).unwrap();
        let c = path_latency_conditional(1.0, 0.1, 2.0, 1, 0, GridSpec::default()).unwrap();
        assert_eq!(g, c);
        assert_relative_eq!(d, E2, epsilon = 1e-15);
    }

    #[test]
    fn sigma_reference_values() {
        // 40-digit fixed-point evaluations.
        assert_relative_eq!(sigma_root(1.0, 2.0).unwrap(), 0.203_187_869_979_979_95, epsilon = 1e-12);
        assert_relative_eq!(sigma_root(1.0, 3.0).unwrap(), 0.059_520_209_292_640_37, epsilon = 1e-12);
        assert_relative_eq!(sigma_root(1.0, 1.5).unwrap(), 0.417_188_356_134_188_6, epsilon = 1e-12);
        // The doubled-rate equation at μτ = 2 is the standard one at μτ = 4.
        assert_relative_eq!(
            sigma_root_with(1.0, 2.0, SigmaEquation::DoubledRate).unwrap(),
            0.019_827_401_281_778_414,
            epsilon = 1e-12
        );
        assert!(sigma_root(1.0, 40.0).unwrap() < 1e-15);
        assert!(matches!(sigma_root(1.0, 1.0), Err(AnalysisError::Unstable { .. })));
        assert!(sigma_root(0.5, 1.5).is_err());
    }

    #[test]
    fn infinite_law_closed_form() {
        let g = path_latency_infinite(1.0, 0.1, 2.0, GridSpec::default()).unwrap();
        let rate = 1.0 - sigma_root(1.0, 2.0).unwrap();
        assert_relative_eq!(rate, 0.7968, epsilon = 1e-4);
        for &t in &[0.5, 2.0, 7.3] {
            assert_relative_eq!(g.cdf(t), 0.9 * (1.0 - (-rate * t).exp()), epsilon = 1e-6);
        }
        assert!(0.9 - g.cdf_values().last().unwrap() < 1e-8);
        g.check(1e-6).unwrap();
    }

    #[test]
    fn geometric_mixture_of_erlangs_is_exponential() {
        let (mu, tau, eps) = (1.0, 2.0, 0.1);
        let pi = QueueStateLaw::geometric(sigma_root(mu, tau).unwrap());
        let exp = infinite_delivery_law(mu, eps, tau).unwrap();
        for &t in &[0.2, 1.0, 3.0, 6.0] {
            let mix: f64 = pi
                .probs()
                .iter()
                .enumerate()
                .map(|(q, &p)| {
                    let e = ErlangLaw { rate: mu, shape: q as u32 + 1, mass: 1.0 - eps, tau };
                    p * e.cdf(t)
                })
                .sum();
            assert_relative_eq!(mix, exp.cdf(t), epsilon = 1e-10);
        }
        let total: f64 = pi.probs().iter().sum();
        assert!((1.0 - total) < 1e-12);
    }

    proptest! {
        #[test]
        fn rows_are_stochastic(mu in 0.1f64..5.0, tau in 0.1f64..5.0, l in 1usize..12) {
            for row in transition_matrix(mu, tau, l) {
                let s: f64 = row.iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
                prop_assert!(row.iter().all(|&x| x >= 0.0));
            }
        }

        #[test]
        fn steady_state_is_stationary(mu in 0.2f64..4.0, tau in 0.2f64..4.0, l in 1usize..10) {
            let m = transition_matrix(mu, tau, l);
            let pi = steady_state(&m).unwrap().probs();
            prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(left_residual(&pi, &m) < 1e-12);
        }

        #[test]
        fn drop_prob_nonincreasing_in_capacity(mu in 0.2f64..3.0, tau in 0.2f64..3.0, q in 0usize..4) {
            let mut prev = 1.0;
            for l in q + 1..q + 6 {
                let p = drop_prob(mu, tau, l, q).unwrap();
                prop_assert!((0.0..=1.0).contains(&p));
                prop_assert!(p <= prev + 1e-15);
                prev = p;
            }
        }

        #[test]
        fn delivery_mass_identity(mu in 0.2f64..3.0, tau in 0.2f64..3.0, eps in 0.0f64..0.99, l in 1usize..7, q in 0usize..7) {
            let q = q % l;
            let law = DeliveryLaw::conditional(mu, eps, tau, l, q).unwrap();
            let expected = (1.0 - eps) * (1.0 - drop_prob(mu, tau, l, q).unwrap());
            prop_assert!((law.total_mass() - expected).abs() < 1e-12);
        }
    }
}
