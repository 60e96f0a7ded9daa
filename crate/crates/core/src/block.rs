//! Block-level laws: decoding time, decoding probability and PAoI.

use crate::config::{QueueCap, SystemConfig};
use crate::error::AnalysisError;
use crate::grid::{GridDistribution, GridSpec, PiecewiseLaw};
use crate::math::{complement, subsets};
use crate::order_stat::{at_least_k, OrderStatistic};
use crate::path::{ahead_distribution, path_law, steady_state, transition_matrix, DeliveryLaw, PathLaw};

/// PAoI laws are truncated once less than this much mass remains.
pub const PAOI_TAIL_TOL: f64 = 1e-9;
/// Upper bound on the number of periods sampled for unbounded laws.
pub const MAX_PERIODS: usize = 2_000;
/// Default cap on `L^N` for [`block_latency_mixture`].
pub const DEFAULT_STATE_CAP: u128 = 1 << 20;

/// Decoding-time law of a block: the K-th arrival among independent per-path laws.
#[derive(Debug, Clone)]
pub struct BlockLaw<P> {
    paths: Vec<P>,
    order: OrderStatistic,
}

impl<P: PiecewiseLaw> BlockLaw<P> {
    pub fn new(k: usize, paths: Vec<P>) -> Result<Self, AnalysisError> {
        if paths.is_empty() {
            return Err(AnalysisError::InvalidArgument("no paths".into()));
        }
        let tau = paths[0].period();
        if paths.iter().any(|p| p.period() != tau) {
            return Err(AnalysisError::InvalidArgument("paths disagree on the period".into()));
        }
        let order = OrderStatistic::new(k, paths.len())?;
        Ok(BlockLaw { paths, order })
    }

    pub fn paths(&self) -> &[P] {
        &self.paths
    }

    pub fn k(&self) -> usize {
        self.order.k()
    }
}

impl<P: PiecewiseLaw> PiecewiseLaw for BlockLaw<P> {
    fn period(&self) -> f64 {
        self.paths[0].period()
    }

    fn pdf_at(&self, piece: usize, offset: f64) -> f64 {
        let cdf: Vec<f64> = self.paths.iter().map(|p| p.cdf_at(piece, offset)).collect();
        let pdf: Vec<f64> = self.paths.iter().map(|p| p.pdf_at(piece, offset)).collect();
        self.order.pdf(&cdf, &pdf)
    }

    fn cdf_at(&self, piece: usize, offset: f64) -> f64 {
        let cdf: Vec<f64> = self.paths.iter().map(|p| p.cdf_at(piece, offset)).collect();
        at_least_k(self.order.k(), &cdf)
    }

    fn total_mass(&self) -> f64 {
        let masses: Vec<f64> = self.paths.iter().map(|p| p.total_mass()).collect();
        at_least_k(self.order.k(), &masses)
    }

    fn support_pieces(&self) -> Option<usize> {
        self.paths
            .iter()
            .map(|p| p.support_pieces())
            .try_fold(0, |acc, s| s.map(|s| acc.max(s)))
    }
}

fn sample<L: PiecewiseLaw + ?Sized>(law: &L, spec: GridSpec, tail_tol: f64) -> GridDistribution {
    GridDistribution::from_law_auto(law, spec, tail_tol, MAX_PERIODS)
}

fn require_finite(cfg: &SystemConfig) -> Result<usize, AnalysisError> {
    cfg.queue_cap.finite().ok_or(AnalysisError::RequiresFiniteCapacity)
}

/// Block latency law given the number of packets ahead on every path.
pub fn block_latency_conditional(
    cfg: &SystemConfig,
    q: &[usize],
    spec: GridSpec,
) -> Result<GridDistribution, AnalysisError> {
    let l = require_finite(cfg)?;
    if q.len() != cfg.n_paths {
        return Err(AnalysisError::InvalidArgument(format!(
            "state vector has {} entries, expected {}",
            q.len(),
            cfg.n_paths
        )));
    }
    let paths = (0..cfg.n_paths)
        .map(|j| DeliveryLaw::conditional(cfg.service_rates[j], cfg.erasure_probs[j], cfg.inter_arrival, l, q[j]))
        .collect::<Result<Vec<_>, _>>()?;
    let law = BlockLaw::new(cfg.k_data, paths)?;
    Ok(GridDistribution::from_law(&law, spec, l + 1))
}

/// Steady-state block analysis.
#[derive(Debug, Clone)]
pub struct BlockAnalysis {
    pub latency: GridDistribution,
    pub success_prob: f64,
    /// Available for `L = 1` and `L = ∞`.
    pub paoi: Option<GridDistribution>,
    pub law: BlockLaw<PathLaw>,
}

/// Exact block latency law of a stationary system.
///
/// The K-th order statistic is multilinear in the per-path laws, so mixing
/// over the product of per-path states reduces to using the unconditional
/// per-path laws directly (see [`block_latency_mixture`] for the explicit sum).
pub fn block_law(cfg: &SystemConfig) -> Result<BlockLaw<PathLaw>, AnalysisError> {
    let paths = (0..cfg.n_paths)
        .map(|j| path_law(cfg, j))
        .collect::<Result<Vec<_>, _>>()?;
    BlockLaw::new(cfg.k_data, paths)
}

pub fn block_latency(cfg: &SystemConfig, spec: GridSpec) -> Result<BlockAnalysis, AnalysisError> {
    let law = block_law(cfg)?;
    let latency = match cfg.queue_cap {
        QueueCap::Finite(l) => GridDistribution::from_law(&law, spec, l + 1),
        QueueCap::Unbounded => sample(&law, spec, crate::path::UNBOUNDED_TAIL_TOL),
    };
    let success_prob = match cfg.queue_cap {
        QueueCap::Finite(_) => law.total_mass(),
        QueueCap::Unbounded => success_prob_infinite(cfg),
    };
    let paoi = if success_prob > 0.0 {
        match cfg.queue_cap {
            QueueCap::Finite(1) | QueueCap::Unbounded => {
                Some(sample(&PaoiLaw::new(&law, success_prob)?, spec, PAOI_TAIL_TOL))
            }
            QueueCap::Finite(_) => None,
        }
    } else {
        None
    };
    Ok(BlockAnalysis {
        latency,
        success_prob,
        paoi,
        law,
    })
}

/// Explicit mixture of [`block_latency_conditional`] over all `L^N` state
/// vectors weighted by `Π_j π_j(q_j)`.
pub fn block_latency_mixture(cfg: &SystemConfig, spec: GridSpec, cap: u128) -> Result<GridDistribution, AnalysisError> {
    let l = require_finite(cfg)?;
    let states = (l as u128).checked_pow(cfg.n_paths as u32).unwrap_or(u128::MAX);
    if states > cap {
        return Err(AnalysisError::StateSpaceTooLarge { states, cap });
    }
    let ahead: Vec<Vec<f64>> = (0..cfg.n_paths)
        .map(|j| {
            steady_state(&transition_matrix(cfg.service_rates[j], cfg.inter_arrival, l))
                .map(|pi| ahead_distribution(&pi, l))
        })
        .collect::<Result<_, _>>()?;
    let mut parts = Vec::with_capacity(states as usize);
    let mut q = vec![0usize; cfg.n_paths];
    loop {
        let w: f64 = q.iter().enumerate().map(|(j, &s)| ahead[j][s]).product();
        if w > 0.0 {
            parts.push((w, block_latency_conditional(cfg, &q, spec)?));
        }
        // Odometer increment over {0..L−1}^N.
        let mut j = 0;
        while j < q.len() {
            q[j] += 1;
            if q[j] < l {
                break;
            }
            q[j] = 0;
            j += 1;
        }
        if j == q.len() {
            break;
        }
    }
    let refs: Vec<(f64, &GridDistribution)> = parts.iter().map(|(w, g)| (*w, g)).collect();
    GridDistribution::mixture(&refs)
        .ok_or_else(|| AnalysisError::InvalidArgument("inconsistent conditional grids".into()))
}

/// Decoding probability for an unbounded buffer:
/// `Σ_{M=K}^{N} Σ_{|ℒ|=M} Π_{j∈ℒ}(1−ε_j) Π_{m∉ℒ} ε_m`.
pub fn success_prob_infinite(cfg: &SystemConfig) -> f64 {
    let n = cfg.n_paths;
    (cfg.k_data..=n)
        .map(|m| {
            subsets(n, m)
                .expect("m ≤ n")
                .map(|set| {
                    let good: f64 = set.iter().map(|&j| 1.0 - cfg.erasure_probs[j]).product();
                    let bad: f64 = complement(n, &set).iter().map(|&j| cfg.erasure_probs[j]).product();
                    good * bad
                })
                .sum::<f64>()
        })
        .sum()
}

/// Closed-form block latency CDF for `L = 1`.
///
/// Expands the subset form of the K-th order statistic into exponentials:
/// every term is indexed by the `K−1` earlier paths `ℒ`, the decoding path
/// `ℓ`, the late paths that are still pending but not erased `𝒢`, and an
/// inclusion-exclusion subset `ℳ ⊆ ℒ`, and integrates to
/// `c · μ_ℓ / λ · (1 − e^{−λt})` with `λ = μ_ℓ + Σ_{ℳ∪𝒢} μ_j`.
pub fn block_latency_cdf_l1_closed(cfg: &SystemConfig, t: f64) -> Result<f64, AnalysisError> {
    if cfg.queue_cap != QueueCap::Finite(1) {
        return Err(AnalysisError::WrongCapacity { expected: "1" });
    }
    let t = t.clamp(0.0, cfg.inter_arrival);
    if t == 0.0 {
        return Ok(0.0);
    }
    let (n, k) = (cfg.n_paths, cfg.k_data);
    let mu = &cfg.service_rates;
    let eps = &cfg.erasure_probs;
    let mut total = 0.0;
    for early in subsets(n, k - 1)? {
        let keep_early: f64 = early.iter().map(|&j| 1.0 - eps[j]).product();
        let rest = complement(n, &early);
        for (pos, &l) in rest.iter().enumerate() {
            let late: Vec<usize> = rest.iter().enumerate().filter(|&(i, _)| i != pos).map(|(_, &j)| j).collect();
            for m_size in 0..=early.len() {
                for m_idx in subsets(early.len(), m_size)? {
                    let sign = if m_size % 2 == 0 { 1.0 } else { -1.0 };
                    let rate_m: f64 = m_idx.iter().map(|&i| mu[early[i]]).sum();
                    for g_size in 0..=late.len() {
                        for g_idx in subsets(late.len(), g_size)? {
                            let g: Vec<usize> = g_idx.iter().map(|&i| late[i]).collect();
                            let coef_g: f64 = late
                                .iter()
                                .map(|j| if g.contains(j) { 1.0 - eps[*j] } else { eps[*j] })
                                .product();
                            let lambda = mu[l] + rate_m + g.iter().map(|&j| mu[j]).sum::<f64>();
                            let c = sign * keep_early * (1.0 - eps[l]) * coef_g;
                            total += c * mu[l] / lambda * (-(-lambda * t).exp_m1());
                        }
                    }
                }
            }
        }
    }
    Ok(total)
}

/// PAoI law when successive blocks are decoded independently with
/// probability `p_s`: `Δ = (e+1)τ + D` with `e` failures before the
/// decoded block: `p_Δ(ω) = Σ_e (1−p_s)^e p_D(ω − (e+1)τ)`.
#[derive(Debug, Clone)]
pub struct PaoiLaw<P> {
    latency: P,
    fail: f64,
}

impl<P: PiecewiseLaw> PaoiLaw<P> {
    /// `latency` must be the block latency law; its total mass is `p_s`.
    pub fn new(latency: P, success_prob: f64) -> Result<Self, AnalysisError> {
        if !(success_prob > 0.0) {
            return Err(AnalysisError::NeverDecoded);
        }
        Ok(PaoiLaw {
            latency,
            fail: 1.0 - success_prob,
        })
    }

    /// `Σ_e (1−p_s)^e f(piece − 1 − e)` over shifts `e = 0..piece−1`.
    fn shifted_sum(&self, piece: usize, f: impl Fn(usize) -> f64) -> f64 {
        let mut weight = 1.0;
        let mut total = 0.0;
        for e in 0..piece {
            total += weight * f(piece - 1 - e);
            weight *= self.fail;
            if weight < 1e-300 {
                break;
            }
        }
        total
    }
}

impl<P: PiecewiseLaw> PiecewiseLaw for PaoiLaw<P> {
    fn period(&self) -> f64 {
        self.latency.period()
    }

    fn pdf_at(&self, piece: usize, offset: f64) -> f64 {
        // A zero offset is the right limit at pieceτ, inside the shifted piece `piece`.
        self.shifted_sum(piece, |p| self.latency.pdf_at(p, offset))
    }

    fn cdf_at(&self, piece: usize, offset: f64) -> f64 {
        self.shifted_sum(piece, |p| self.latency.cdf_at(p, offset))
    }

    fn total_mass(&self) -> f64 {
        1.0
    }

    fn support_pieces(&self) -> Option<usize> {
        None
    }
}

fn decoded_prob(cfg: &SystemConfig, law: &BlockLaw<PathLaw>) -> Result<f64, AnalysisError> {
    let ps = match cfg.queue_cap {
        QueueCap::Unbounded => success_prob_infinite(cfg),
        QueueCap::Finite(_) => law.total_mass(),
    };
    if ps > 0.0 {
        Ok(ps)
    } else {
        Err(AnalysisError::NeverDecoded)
    }
}

/// PAoI law for `L = 1`: `p_Δ(ω) = (1−p_s)^{m−1} p_D(ω − mτ)` on `(mτ, (m+1)τ]`.
pub fn paoi_l1(cfg: &SystemConfig, spec: GridSpec) -> Result<GridDistribution, AnalysisError> {
    if cfg.queue_cap != QueueCap::Finite(1) {
        return Err(AnalysisError::WrongCapacity { expected: "1" });
    }
    let law = block_law(cfg)?;
    let ps = decoded_prob(cfg, &law)?;
    Ok(sample(&PaoiLaw::new(&law, ps)?, spec, PAOI_TAIL_TOL))
}

/// PAoI law for `L = ∞` with independent block failures.
pub fn paoi_infinite(cfg: &SystemConfig, spec: GridSpec) -> Result<GridDistribution, AnalysisError> {
    if !cfg.queue_cap.is_unbounded() {
        return Err(AnalysisError::WrongCapacity { expected: "inf" });
    }
    let law = block_law(cfg)?;
    let ps = decoded_prob(cfg, &law)?;
    Ok(sample(&PaoiLaw::new(&law, ps)?, spec, PAOI_TAIL_TOL))
}
