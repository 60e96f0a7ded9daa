//! K-th order statistic of independent, possibly defective, arrival times.

use crate::error::AnalysisError;
use crate::math::{complement, subsets};

/// Precomputed `(K−1)`-subsets of `N` paths for the subset-sum form of the
/// K-th order statistic density.
#[derive(Debug, Clone)]
pub struct OrderStatistic {
    k: usize,
    n: usize,
    /// Each entry: (paths already received, paths not yet received).
    splits: Vec<(Vec<usize>, Vec<usize>)>,
}

impl OrderStatistic {
    pub fn new(k: usize, n: usize) -> Result<Self, AnalysisError> {
        if k == 0 {
            return Err(AnalysisError::InvalidArgument("K must be at least 1".into()));
        }
        let splits = subsets(n, k - 1)?
            .map(|received| {
                let pending = complement(n, &received);
                (received, pending)
            })
            .collect();
        Ok(OrderStatistic { k, n, splits })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Density of the K-th arrival at a time where path `j` has CDF `cdf[j]`
    /// and density `pdf[j]`:
    /// `Σ_{ℒ} Π_{j∈ℒ} F_j Σ_{ℓ∉ℒ} f_ℓ Π_{m∉ℒ∪{ℓ}} (1 − F_m)`.
    pub fn pdf(&self, cdf: &[f64], pdf: &[f64]) -> f64 {
        debug_assert_eq!(cdf.len(), self.n);
        debug_assert_eq!(pdf.len(), self.n);
        let mut total = 0.0;
        for (received, pending) in &self.splits {
            let head: f64 = received.iter().map(|&j| cdf[j]).product();
            if head == 0.0 {
                continue;
            }
            let mut inner = 0.0;
            for &l in pending {
                if pdf[l] == 0.0 {
                    continue;
                }
                let rest: f64 = pending
                    .iter()
                    .filter(|&&m| m != l)
                    .map(|&m| 1.0 - cdf[m])
                    .product();
                inner += pdf[l] * rest;
            }
            total += head * inner;
        }
        total
    }
}

/// `P(at least k of n independent events occur)` with event probabilities `p`.
pub fn at_least_k(k: usize, p: &[f64]) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > p.len() {
        return 0.0;
    }
    let dist = count_distribution(p);
    dist[k..].iter().sum::<f64>().clamp(0.0, 1.0)
}

/// Law of the number of events that occur (Poisson-binomial), indices `0..=n`.
pub fn count_distribution(p: &[f64]) -> Vec<f64> {
    let mut dist = vec![0.0; p.len() + 1];
    dist[0] = 1.0;
    for (i, &pi) in p.iter().enumerate() {
        for c in (1..=i + 1).rev() {
            dist[c] = dist[c] * (1.0 - pi) + dist[c - 1] * pi;
        }
        dist[0] *= 1.0 - pi;
    }
    dist
}

/// Density of the K-th arrival as `Σ_ℓ f_ℓ · P(exactly K−1 of the others)`.
/// Equivalent to [`OrderStatistic::pdf`]; used as an independent check.
pub fn kth_pdf_by_counts(k: usize, cdf: &[f64], pdf: &[f64]) -> f64 {
    let n = cdf.len();
    (0..n)
        .map(|l| {
            let others: Vec<f64> = (0..n).filter(|&j| j != l).map(|j| cdf[j]).collect();
            pdf[l] * count_distribution(&others)[k - 1]
        })
        .sum()
}
