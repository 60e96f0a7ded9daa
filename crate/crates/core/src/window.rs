//! Exact short-horizon PAoI for small finite-buffer instances.
//!
//! The PAoI of a decoded block `b` is `Δ = ℓτ + D_b` when `b−ℓ` is the most
//! recent earlier block that was decoded. Per path, a forward pass over the
//! queue from the arrival of block `b−ℓ` gives the joint law of the
//! delivery pattern of blocks `b−ℓ … b−1` and the delivery time of block
//! `b`. Paths are independent, so the block-level law follows from a
//! dynamic program over paths at every time point. Blocks are assumed to be
//! decoded in order, which the `N < 2K` guard makes the typical case.

use std::collections::BTreeMap;

use crate::block::block_law;
use crate::config::{QueueCap, SystemConfig};
use crate::error::AnalysisError;
use crate::grid::{GridDistribution, GridSpec, PiecewiseLaw};
use crate::math::{poisson_pmf, poisson_upper_tail};
use crate::path::{steady_state, transition_matrix};

/// Largest `N·(ℓ_max+1)` accepted by [`paoi_window`].
pub const MAX_INSTANCE_SIZE: usize = 20;

/// Joint law, on one path, of the pattern of delivered packets for the `ℓ`
/// blocks before a target block and the target's delivery time.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternTables {
    mu: f64,
    keep: f64,
    tau: f64,
    ell: usize,
    /// `P(pattern)`; bit `i` set means block `b−ℓ+i` was delivered unerased.
    pub prob: Vec<f64>,
    /// `delivered[o][m][a]`: weight of the target being served on piece `m`
    /// with `a` packets ahead at the start of the piece, jointly with pattern `o`.
    pub delivered: Vec<Vec<Vec<f64>>>,
}

/// Probability that the packets of `blocks` (window indices) come out with
/// the given good/bad coins; calls `f(good_bits, prob)` for every outcome.
fn for_each_coin(blocks: &[usize], keep: f64, mut f: impl FnMut(u32, f64)) {
    let k = blocks.len();
    for outcome in 0u32..(1 << k) {
        let mut bits = 0u32;
        let mut p = 1.0;
        for (i, &b) in blocks.iter().enumerate() {
            if outcome >> i & 1 == 1 {
                bits |= 1 << b;
                p *= keep;
            } else {
                p *= 1.0 - keep;
            }
        }
        if p > 0.0 {
            f(bits, p);
        }
    }
}

/// Window indices in `first..first+len` that are non-negative (older blocks are irrelevant).
fn window_blocks(first: isize, len: usize) -> Vec<usize> {
    (first..first + len as isize)
        .filter(|&b| b >= 0)
        .map(|b| b as usize)
        .collect()
}

impl PatternTables {
    /// Forward pass for one path with buffer `l` and `ell ≥ 1` earlier blocks.
    pub fn new(mu: f64, eps: f64, tau: f64, l: usize, ell: usize, pi: &[f64]) -> Self {
        let keep = 1.0 - eps;
        let n_patterns = 1usize << ell;
        let pois: Vec<f64> = (0..=l).map(|d| poisson_pmf(mu, d as u32, tau)).collect();

        // Phase 1: arrivals of the window blocks; state (occupancy, good bits).
        let mut states: BTreeMap<(usize, u32), f64> = BTreeMap::new();
        for (s, &p) in pi.iter().enumerate() {
            if p > 0.0 {
                *states.entry((s, 0)).or_default() += p;
            }
        }
        for w in 0..ell {
            let mut next: BTreeMap<(usize, u32), f64> = BTreeMap::new();
            for (&(s, mask), &p) in &states {
                // A full buffer drops its head; the new packet joins the tail.
                let c = if s == l { l } else { s + 1 };
                let first = w as isize - c as isize + 1;
                let all_served = (1.0 - pois[..c].iter().sum::<f64>()).max(0.0);
                for d in 0..=c {
                    let pd = if d < c { pois[d] } else { all_served };
                    if pd == 0.0 {
                        continue;
                    }
                    let served = window_blocks(first, d);
                    for_each_coin(&served, keep, |bits, pc| {
                        *next.entry((c - d, mask | bits)).or_default() += p * pd * pc;
                    });
                }
            }
            states = next;
        }

        // Phase 2: the target arrives and is followed until served or dropped.
        let mut prob = vec![0.0; n_patterns];
        let mut delivered = vec![vec![vec![0.0; l]; l]; n_patterns];
        let mut current: BTreeMap<(usize, u32), f64> = BTreeMap::new();
        for (&(s, mask), &p) in &states {
            *current.entry((s.min(l - 1), mask)).or_default() += p;
        }
        for m in 0..l {
            let level = l - m;
            let mut next: BTreeMap<(usize, u32), f64> = BTreeMap::new();
            for (&(a, mask), &p) in &current {
                let first = ell as isize - a as isize;
                // Served within the piece: everything ahead was served first.
                let served_all = poisson_upper_tail(mu, a as u32, tau);
                for_each_coin(&window_blocks(first, a), keep, |bits, pc| {
                    let o = (mask | bits) as usize;
                    delivered[o][m][a] += p * pc;
                    prob[o] += p * pc * served_all;
                });
                for (d, &pd) in pois.iter().enumerate().take(a + 1) {
                    let served = window_blocks(first, d);
                    let removed = if a + 1 < level { d } else { d.max(1) };
                    match a.checked_sub(removed) {
                        // Pushed out; nothing is left ahead, so the pattern is final.
                        None => prob[mask as usize] += p * pd,
                        Some(a2) => for_each_coin(&served, keep, |bits, pc| {
                            *next.entry((a2, mask | bits)).or_default() += p * pd * pc;
                        }),
                    }
                }
            }
            current = next;
        }
        PatternTables {
            mu,
            keep,
            tau,
            ell,
            prob,
            delivered,
        }
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    /// `(F, f)`: probability of pattern `o` with the target delivered by
    /// `mτ + u`, and the corresponding density.
    fn joint(&self, o: usize, piece: usize, offset: f64) -> (f64, f64) {
        let w = &self.delivered[o];
        let mut cdf = 0.0;
        for wm in w.iter().take(piece) {
            for (a, &x) in wm.iter().enumerate() {
                if x != 0.0 {
                    cdf += x * poisson_upper_tail(self.mu, a as u32, self.tau);
                }
            }
        }
        let mut pdf = 0.0;
        if let Some(wm) = w.get(piece) {
            for (a, &x) in wm.iter().enumerate() {
                if x != 0.0 {
                    cdf += x * poisson_upper_tail(self.mu, a as u32, offset);
                    pdf += x * poisson_pmf(self.mu, a as u32, offset);
                }
            }
        }
        (self.keep * cdf, self.keep * self.mu * pdf)
    }
}

/// Mixed-radix index of the block-level DP state.
#[derive(Debug, Clone, Copy)]
struct StateCodec {
    k: usize,
    ell: usize,
}

impl StateCodec {
    fn size(&self) -> usize {
        (self.k + 1) * self.k.pow(self.ell as u32 - 1) * (self.k + 1) * 2
    }

    /// Counts: `c[0] ≤ K` (capped), `c[1..ℓ] < K`, target count `tc ≤ K` (capped), density flag.
    fn encode(&self, c: &[usize], tc: usize, flag: usize) -> usize {
        let mut idx = c[0];
        for &ci in &c[1..] {
            idx = idx * self.k + ci;
        }
        (idx * (self.k + 1) + tc) * 2 + flag
    }

    fn decode(&self, mut idx: usize, c: &mut [usize]) -> (usize, usize) {
        let flag = idx % 2;
        idx /= 2;
        let tc = idx % (self.k + 1);
        idx /= self.k + 1;
        for i in (1..self.ell).rev() {
            c[i] = idx % self.k;
            idx /= self.k;
        }
        c[0] = idx;
        (tc, flag)
    }
}

/// Joint block-level quantities at decoding time `D = piece·τ + offset`
/// for blocks `b−ℓ` decoded, `b−ℓ+1 … b−1` not decoded:
/// `(P(D_b ≤ t, event), density of D_b at t with the event)`.
fn block_joint(tables: &[PatternTables], k: usize, piece: usize, offset: f64) -> (f64, f64) {
    let ell = tables[0].ell;
    let codec = StateCodec { k, ell };
    let mut dist = vec![0.0; codec.size()];
    let zero = vec![0usize; ell];
    dist[codec.encode(&zero, 0, 0)] = 1.0;
    let mut counts = vec![0usize; ell];
    for t in tables {
        let per_pattern: Vec<(f64, f64, f64)> = (0..t.prob.len())
            .map(|o| {
                let (f, d) = t.joint(o, piece, offset);
                (f, d, (t.prob[o] - f).max(0.0))
            })
            .collect();
        let mut next = vec![0.0; codec.size()];
        for (idx, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let (tc, flag) = codec.decode(idx, &mut counts);
            'pattern: for (o, &(got, dens, pending)) in per_pattern.iter().enumerate() {
                let mut c = counts.clone();
                for (i, ci) in c.iter_mut().enumerate() {
                    if o >> i & 1 == 1 {
                        *ci += 1;
                        if i == 0 {
                            *ci = (*ci).min(k);
                        } else if *ci >= k {
                            continue 'pattern;
                        }
                    }
                }
                if got > 0.0 && !(flag == 1 && tc + 1 >= k) {
                    next[codec.encode(&c, (tc + 1).min(k), flag)] += p * got;
                }
                if pending > 0.0 {
                    next[codec.encode(&c, tc, flag)] += p * pending;
                }
                if flag == 0 && dens > 0.0 && tc < k {
                    next[codec.encode(&c, tc, 1)] += p * dens;
                }
            }
        }
        dist = next;
    }
    // Final states: block b−ℓ decoded (c[0] = K), the target decoded by t
    // (CDF) or its K-th packet arriving at t (density).
    let (mut cdf, mut pdf) = (0.0, 0.0);
    for (idx, &p) in dist.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let (tc, flag) = codec.decode(idx, &mut counts);
        if counts[0] < k {
            continue;
        }
        match (flag, tc) {
            (0, t) if t == k => cdf += p,
            (1, t) if t + 1 == k => pdf += p,
            _ => {}
        }
    }
    (cdf, pdf)
}

/// PAoI law restricted to `(0, (ℓ_max+1)τ]`.
#[derive(Debug, Clone)]
pub struct WindowPaoiLaw {
    tau: f64,
    k: usize,
    success_prob: f64,
    /// `tables[ℓ−1][j]` for `ℓ = 1..=ℓ_max`.
    tables: Vec<Vec<PatternTables>>,
}

impl PiecewiseLaw for WindowPaoiLaw {
    fn period(&self) -> f64 {
        self.tau
    }

    fn pdf_at(&self, piece: usize, offset: f64) -> f64 {
        let mut total = 0.0;
        for (i, t) in self.tables.iter().enumerate() {
            let ell = i + 1;
            if ell > piece {
                break;
            }
            total += block_joint(t, self.k, piece - ell, offset).1;
        }
        total / self.success_prob
    }

    fn cdf_at(&self, piece: usize, offset: f64) -> f64 {
        let mut total = 0.0;
        for (i, t) in self.tables.iter().enumerate() {
            let ell = i + 1;
            if ell > piece {
                break;
            }
            total += block_joint(t, self.k, piece - ell, offset).0;
        }
        total / self.success_prob
    }

    fn total_mass(&self) -> f64 {
        self.cdf_at(self.tables.len(), self.tau)
    }

    fn support_pieces(&self) -> Option<usize> {
        Some(self.tables.len() + 1)
    }
}

/// PAoI law on `(0, (ℓ_max+1)τ]` and the mass left beyond it.
#[derive(Debug, Clone)]
pub struct WindowPaoi {
    pub paoi: GridDistribution,
    pub ell_max: usize,
    pub covered_mass: f64,
    pub tail_mass: f64,
}

/// Builds the per-path pattern tables for `ℓ = 1..=ℓ_max` after checking the guards.
pub fn window_law(cfg: &SystemConfig, ell_max: usize) -> Result<WindowPaoiLaw, AnalysisError> {
    let l = cfg.queue_cap.finite().ok_or(AnalysisError::RequiresFiniteCapacity)?;
    if ell_max == 0 {
        return Err(AnalysisError::InvalidArgument("ell_max must be at least 1".into()));
    }
    let size = cfg.n_paths * (ell_max + 1);
    if size > MAX_INSTANCE_SIZE {
        return Err(AnalysisError::InstanceTooLarge {
            size,
            cap: MAX_INSTANCE_SIZE,
        });
    }
    if cfg.n_paths >= 2 * cfg.k_data {
        return Err(AnalysisError::OutOfOrderPossible {
            k: cfg.k_data,
            n: cfg.n_paths,
        });
    }
    let success_prob = block_law(cfg)?.total_mass();
    if !(success_prob > 0.0) {
        return Err(AnalysisError::NeverDecoded);
    }
    let pis: Vec<Vec<f64>> = (0..cfg.n_paths)
        .map(|j| steady_state(&transition_matrix(cfg.service_rates[j], cfg.inter_arrival, l)).map(|p| p.probs()))
        .collect::<Result<_, _>>()?;
    let tables = (1..=ell_max)
        .map(|ell| {
            (0..cfg.n_paths)
                .map(|j| {
                    PatternTables::new(
                        cfg.service_rates[j],
                        cfg.erasure_probs[j],
                        cfg.inter_arrival,
                        l,
                        ell,
                        &pis[j],
                    )
                })
                .collect()
        })
        .collect();
    Ok(WindowPaoiLaw {
        tau: cfg.inter_arrival,
        k: cfg.k_data,
        success_prob,
        tables,
    })
}

/// Exact PAoI law on `(0, (ℓ_max+1)τ]` for any finite buffer.
pub fn paoi_window(cfg: &SystemConfig, ell_max: usize, spec: GridSpec) -> Result<WindowPaoi, AnalysisError> {
    let law = window_law(cfg, ell_max)?;
    let paoi = GridDistribution::from_law(&law, spec, ell_max + 1);
    let covered_mass = paoi.total_mass();
    Ok(WindowPaoi {
        paoi,
        ell_max,
        covered_mass,
        tail_mass: (1.0 - covered_mass).max(0.0),
    })
}

/// [`paoi_window`] restricted to `L = 2`.
pub fn paoi_l2_small_instance(cfg: &SystemConfig, ell_max: usize, spec: GridSpec) -> Result<WindowPaoi, AnalysisError> {
    if cfg.queue_cap != QueueCap::Finite(2) {
        return Err(AnalysisError::WrongCapacity { expected: "2" });
    }
    paoi_window(cfg, ell_max, spec)
}

/// Ahead-count law implied by a stationary occupancy vector (test helper).
#[cfg(test)]
fn stationary(mu: f64, tau: f64, l: usize) -> Vec<f64> {
    steady_state(&transition_matrix(mu, tau, l)).unwrap().probs()
}
