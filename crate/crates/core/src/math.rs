//! Poisson terms and subset enumeration.

use crate::error::AnalysisError;

/// Below this count the pmf is evaluated as a running product; above it in log space.
const DIRECT_PMF_LIMIT: u32 = 30;

/// Poisson pmf `(μt)^n e^{-μt} / n!`.
pub fn poisson_pmf(rate: f64, n: u32, t: f64) -> f64 {
    debug_assert!(rate > 0.0 && t >= 0.0);
    let x = rate * t;
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    if n <= DIRECT_PMF_LIMIT {
        let mut term = (-x).exp();
        for k in 1..=n {
            term *= x / k as f64;
        }
        term
    } else {
        let ln = n as f64 * x.ln() - x - ln_factorial(n);
        ln.exp()
    }
}

fn ln_factorial(n: u32) -> f64 {
    statrs::function::gamma::ln_gamma(n as f64 + 1.0)
}

/// `P(Poisson(μt) ≥ n + 1)`, which is also the CDF at `t` of an Erlang law
/// with shape `n + 1` and rate `μ` (`γ(n+1, μt) / n!`).
pub fn poisson_upper_tail(rate: f64, n: u32, t: f64) -> f64 {
    let x = rate * t;
    if x == 0.0 {
        return 0.0;
    }
    if x <= n as f64 {
        // Terms beyond n decrease geometrically once k > x.
        let mut term = poisson_pmf(rate, n + 1, t);
        let mut sum = 0.0;
        let mut k = n + 1;
        while term > sum * 1e-17 && term > 0.0 {
            sum += term;
            k += 1;
            term *= x / k as f64;
        }
        sum.min(1.0)
    } else {
        let head: f64 = (0..=n).map(|k| poisson_pmf(rate, k, t)).sum();
        (1.0 - head).max(0.0)
    }
}

/// Binomial coefficient as `u128`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// All `k`-subsets of `{0, …, n-1}` in lexicographic order.
#[derive(Debug, Clone)]
pub struct SubsetFamily {
    n_universe: usize,
    k_size: usize,
    next: Option<Vec<usize>>,
}

impl SubsetFamily {
    pub fn k_size(&self) -> usize {
        self.k_size
    }

    pub fn n_universe(&self) -> usize {
        self.n_universe
    }

    /// Number of subsets in the full family, `C(n, k)`.
    pub fn cardinality(&self) -> u128 {
        binomial(self.n_universe, self.k_size)
    }
}

impl Iterator for SubsetFamily {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let (n, k) = (self.n_universe, self.k_size);
        let mut succ = current.clone();
        // Rightmost index that can still move right.
        let mut i = k;
        while i > 0 {
            i -= 1;
            if succ[i] < n - k + i {
                succ[i] += 1;
                for j in i + 1..k {
                    succ[j] = succ[j - 1] + 1;
                }
                self.next = Some(succ);
                return Some(current);
            }
        }
        Some(current)
    }
}

/// Enumerates every `k`-subset of `n` path indices (0-based).
pub fn subsets(n: usize, k: usize) -> Result<SubsetFamily, AnalysisError> {
    if k > n {
        return Err(AnalysisError::SubsetTooLarge { k, n });
    }
    Ok(SubsetFamily {
        n_universe: n,
        k_size: k,
        next: Some((0..k).collect()),
    })
}

/// Indices of `{0, …, n-1}` not present in the sorted `subset`.
pub fn complement(n: usize, subset: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(n - subset.len());
    let mut it = subset.iter().peekable();
    for i in 0..n {
        if it.peek() == Some(&&i) {
            it.next();
        } else {
            out.push(i);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::collections::HashSet;

    #[test]
    fn pmf_direct_values() {
        assert_relative_eq!(poisson_pmf(1.0, 0, 2.0), (-2.0f64).exp(), max_relative = 1e-15);
        assert_eq!(poisson_pmf(1.0, 0, 0.0), 1.0);
        assert_eq!(poisson_pmf(1.0, 3, 0.0), 0.0);
    }

    #[test]
    fn pmf_matches_high_precision_reference() {
        // 3^3 e^{-3} / 3!, rounded from a high-precision evaluation.
        let reference = 0.224_041_807_655_387_75;
        assert!((poisson_pmf(2.0, 3, 1.5) - reference).abs() < 1e-12);
    }

    #[test]
    fn pmf_log_space_branch_is_continuous() {
        let x: f64 = 35.0;
        let direct = {
            let mut term = (-x).exp();
            for k in 1..=31u32 {
                term *= x / k as f64;
            }
            term
        };
        assert_relative_eq!(poisson_pmf(1.0, 31, x), direct, max_relative = 1e-12);
        assert!(poisson_pmf(1.0, 400, 300.0).is_finite());
    }

    #[test]
    fn pmf_partial_sums_reach_one() {
        for &(rate, t) in &[(1.0, 2.0), (1.25, 1.5), (3.0, 10.0), (0.5, 0.1)] {
            let x: f64 = rate * t;
            let big = (x.ceil() + 40.0 * x.sqrt() + 40.0) as u32;
            let s: f64 = (0..=big).map(|n| poisson_pmf(rate, n, t)).sum();
            assert!(s > 1.0 - 1e-10 && s < 1.0 + 1e-12, "sum {s}");
        }
    }

    #[test]
    fn upper_tail_is_complement_of_head() {
        for n in 0..8 {
            for &t in &[0.01, 0.5, 2.0, 7.0, 30.0] {
                let head: f64 = (0..=n).map(|k| poisson_pmf(1.3, k, t)).sum();
                assert_relative_eq!(
                    poisson_upper_tail(1.3, n, t),
                    1.0 - head,
                    epsilon = 1e-14
                );
            }
        }
        assert_eq!(poisson_upper_tail(1.0, 2, 0.0), 0.0);
        assert!(poisson_upper_tail(1.0, 60, 1.0) > 0.0);
    }

    #[test]
    fn subsets_small_listing() {
        let all: Vec<_> = subsets(3, 2).unwrap().collect();
        assert_eq!(all, vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        let empty: Vec<_> = subsets(5, 0).unwrap().collect();
        assert_eq!(empty, vec![Vec::<usize>::new()]);
        assert!(subsets(2, 3).is_err());
    }

    #[test]
    fn subsets_count_and_distinct_exhaustive() {
        for n in 0..=10 {
            for k in 0..=n {
                let fam = subsets(n, k).unwrap();
                let expected = fam.cardinality();
                let seen: HashSet<Vec<usize>> = fam
                    .inspect(|s| {
                        assert_eq!(s.len(), k);
                        assert!(s.windows(2).all(|w| w[0] < w[1]));
                        assert!(s.iter().all(|&i| i < n));
                    })
                    .collect();
                assert_eq!(seen.len() as u128, expected, "n={n} k={k}");
            }
        }
        assert_eq!(subsets(7, 3).unwrap().count(), 35);
    }

    #[test]
    fn complement_partitions_universe() {
        assert_eq!(complement(5, &[1, 3]), vec![0, 2, 4]);
        assert_eq!(complement(3, &[]), vec![0, 1, 2]);
    }
}
