//! Empirical CDFs, Kolmogorov-Smirnov distance, percentiles and goodness of fit.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::grid::GridDistribution;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("no samples")]
    EmptyInput,
    #[error("level {0} is outside (0, 1)")]
    LevelOutOfRange(f64),
    #[error("not enough populated bins for a chi-square test")]
    TooFewBins,
}

/// A possibly defective CDF that can be compared and inverted.
pub trait CdfLike {
    /// Right-continuous CDF value.
    fn cdf(&self, t: f64) -> f64;

    /// `lim_{s↑t} F(s)`.
    fn left_limit(&self, t: f64) -> f64 {
        self.cdf(t)
    }

    /// Points where the CDF changes slope or jumps.
    fn breakpoints(&self) -> Vec<f64>;

    /// Limit of the CDF at +∞.
    fn total_mass(&self) -> f64;

    /// Smallest `t` with `F(t) ≥ level`, or `+∞` when the mass never reaches it.
    fn quantile(&self, level: f64) -> f64;
}

/// Step CDF of samples where `+∞` marks a censored (never observed) value.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
    n_total: usize,
}

/// Builds the empirical CDF; non-finite samples count only toward the missing mass.
pub fn empirical_cdf(samples: &[f64]) -> Result<EmpiricalCdf, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut sorted: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    Ok(EmpiricalCdf {
        sorted,
        n_total: samples.len(),
    })
}

impl EmpiricalCdf {
    pub fn len(&self) -> usize {
        self.n_total
    }

    pub fn is_empty(&self) -> bool {
        self.n_total == 0
    }

    /// Finite samples in ascending order.
    pub fn finite_samples(&self) -> &[f64] {
        &self.sorted
    }

    /// `(t, F(t))` at no more than `max_points` evenly spaced sample ranks.
    pub fn samples(&self, max_points: usize) -> Vec<(f64, f64)> {
        let m = self.sorted.len();
        if m == 0 {
            return Vec::new();
        }
        let stride = m.div_ceil(max_points.max(1)).max(1);
        let mut idx: Vec<usize> = (stride - 1..m).step_by(stride).collect();
        if idx.last() != Some(&(m - 1)) {
            idx.push(m - 1);
        }
        idx.into_iter()
            .map(|i| (self.sorted[i], (i + 1) as f64 / self.n_total as f64))
            .collect()
    }
}

impl CdfLike for EmpiricalCdf {
    fn cdf(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&x| x <= t) as f64 / self.n_total as f64
    }

    fn left_limit(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&x| x < t) as f64 / self.n_total as f64
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.sorted.clone();
        b.dedup();
        b
    }

    fn total_mass(&self) -> f64 {
        self.sorted.len() as f64 / self.n_total as f64
    }

    fn quantile(&self, level: f64) -> f64 {
        let rank = (level * self.n_total as f64).ceil() as usize;
        if rank == 0 {
            return self.sorted.first().copied().unwrap_or(f64::INFINITY);
        }
        self.sorted.get(rank - 1).copied().unwrap_or(f64::INFINITY)
    }
}

impl CdfLike for GridDistribution {
    fn cdf(&self, t: f64) -> f64 {
        GridDistribution::cdf(self, t)
    }

    fn breakpoints(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// The analytic limit; mass beyond the sampled range counts as not yet reached.
    fn total_mass(&self) -> f64 {
        GridDistribution::total_mass(self)
    }

    fn quantile(&self, level: f64) -> f64 {
        let cdf = self.cdf_values();
        let i = cdf.partition_point(|&c| c < level);
        if i == cdf.len() {
            return f64::INFINITY;
        }
        if i == 0 {
            return 0.0;
        }
        let (c0, c1) = (cdf[i - 1], cdf[i]);
        let (t0, t1) = (self.time(i - 1), self.time(i));
        if c1 > c0 {
            t0 + (level - c0) / (c1 - c0) * (t1 - t0)
        } else {
            t1
        }
    }
}

/// `sup_t |a(t) − b(t)|`, including left limits at jumps and the gap between total masses.
pub fn ks_distance<A: CdfLike + ?Sized, B: CdfLike + ?Sized>(a: &A, b: &B) -> f64 {
    let mut points = a.breakpoints();
    points.extend(b.breakpoints());
    let mut d = (a.total_mass() - b.total_mass()).abs();
    for &t in &points {
        d = d
            .max((a.cdf(t) - b.cdf(t)).abs())
            .max((a.left_limit(t) - b.left_limit(t)).abs());
    }
    d
}

/// Smallest `t` with `F(t) ≥ level`; `+∞` if the level is never reached.
pub fn percentile<C: CdfLike + ?Sized>(cdf: &C, level: f64) -> Result<f64, StatsError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::LevelOutOfRange(level));
    }
    Ok(cdf.quantile(level))
}

/// Latency or PAoI distribution from either engine.
#[derive(Debug, Clone)]
pub enum CdfSamples {
    Analytic(GridDistribution),
    Empirical(EmpiricalCdf),
}

impl CdfSamples {
    pub fn as_cdf(&self) -> &dyn CdfLike {
        match self {
            CdfSamples::Analytic(g) => g,
            CdfSamples::Empirical(e) => e,
        }
    }

    /// `(t, F(t))` pairs for export.
    pub fn points(&self, max_points: usize) -> Vec<(f64, f64)> {
        match self {
            CdfSamples::Analytic(g) => g.cdf_samples(max_points),
            CdfSamples::Empirical(e) => e.samples(max_points),
        }
    }
}

/// Headline metrics of one run.
#[derive(Debug, Clone)]
pub struct MetricSummary {
    pub success_prob: f64,
    pub latency_cdf: CdfSamples,
    pub paoi_cdf: Option<CdfSamples>,
    /// `(level, PAoI percentile)`; `+∞` when unreachable.
    pub percentiles: Vec<(f64, f64)>,
}

impl MetricSummary {
    pub fn new(
        success_prob: f64,
        latency_cdf: CdfSamples,
        paoi_cdf: Option<CdfSamples>,
        levels: &[f64],
    ) -> Result<Self, StatsError> {
        let percentiles = match &paoi_cdf {
            Some(p) => levels
                .iter()
                .map(|&l| percentile(p.as_cdf(), l).map(|v| (l, v)))
                .collect::<Result<_, _>>()?,
            None => Vec::new(),
        };
        Ok(MetricSummary {
            success_prob,
            latency_cdf,
            paoi_cdf,
            percentiles,
        })
    }

    pub fn percentile(&self, level: f64) -> Option<f64> {
        self.percentiles
            .iter()
            .find(|(l, _)| (l - level).abs() < 1e-12)
            .map(|&(_, v)| v)
    }
}

/// Outcome of a chi-square goodness-of-fit test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareFit {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square test of integer counts against `expected_prob(k)`.
///
/// Bins with expected count below 5 are merged into a single tail bin.
pub fn chi_square_fit(counts: &[u64], expected_prob: impl Fn(usize) -> f64) -> Result<ChiSquareFit, StatsError> {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(StatsError::EmptyInput);
    }
    let n = n as f64;
    let mut statistic = 0.0;
    let mut bins = 0;
    let mut k = 0;
    let mut covered = 0.0;
    let mut observed_covered = 0u64;
    loop {
        let p = expected_prob(k);
        if n * p < 5.0 || n * (1.0 - covered - p) < 5.0 {
            break;
        }
        let o = counts.get(k).copied().unwrap_or(0);
        statistic += (o as f64 - n * p).powi(2) / (n * p);
        covered += p;
        observed_covered += o;
        bins += 1;
        k += 1;
    }
    let tail_e = n * (1.0 - covered);
    let tail_o = (n as u64 - observed_covered) as f64;
    if tail_e > 0.0 {
        statistic += (tail_o - tail_e).powi(2) / tail_e;
        bins += 1;
    }
    if bins < 2 {
        return Err(StatsError::TooFewBins);
    }
    let dof = bins - 1;
    let p_value = ChiSquared::new(dof as f64).map(|d| d.sf(statistic)).unwrap_or(0.0);
    Ok(ChiSquareFit {
        statistic,
        dof,
        p_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridSpec, PiecewiseLaw};
    use crate::path::ErlangLaw;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp};

    fn exp_grid(mass: f64) -> GridDistribution {
        let law = ErlangLaw { rate: 1.0, shape: 1, mass, tau: 1.0 };
        GridDistribution::from_law_auto(&law, GridSpec::default(), 1e-10, 100)
    }

    #[test]
    fn empirical_basics() {
        let e = empirical_cdf(&[1.0, 2.0, 3.0]).unwrap();
        assert_relative_eq!(e.cdf(2.0), 2.0 / 3.0);
        assert_relative_eq!(e.left_limit(2.0), 1.0 / 3.0);
        let e = empirical_cdf(&[1.0, f64::INFINITY]).unwrap();
        assert_relative_eq!(e.total_mass(), 0.5);
        assert_eq!(empirical_cdf(&[]), Err(StatsError::EmptyInput));
    }

    #[test]
    fn empirical_exponential_within_dkw() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let exp = Exp::new(1.0).unwrap();
        let xs: Vec<f64> = (0..1_000_000).map(|_| exp.sample(&mut rng)).collect();
        let e = empirical_cdf(&xs).unwrap();
        let sup = e
            .finite_samples()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = 1.0 - (-x).exp();
                ((i + 1) as f64 / xs.len() as f64 - f).abs().max((i as f64 / xs.len() as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(sup < 0.002, "{sup}");
    }

    #[test]
    fn ks_identity_and_mass_gap() {
        let a = exp_grid(1.0);
        assert_eq!(ks_distance(&a, &a), 0.0);
        let b = exp_grid(0.9);
        assert!(ks_distance(&a, &b) >= 0.1 - 1e-12);
        assert_relative_eq!(ks_distance(&a, &b), ks_distance(&b, &a));
    }

    #[test]
    fn percentile_cases() {
        let g = exp_grid(1.0);
        assert_relative_eq!(percentile(&g, 0.95).unwrap(), 20f64.ln(), epsilon = 1e-4);
        assert_eq!(percentile(&exp_grid(0.9), 0.95).unwrap(), f64::INFINITY);
        assert!(percentile(&g, 1.0).is_err());
        let e = empirical_cdf(&[3.0, 1.0, 2.0, 4.0]).unwrap();
        assert_eq!(percentile(&e, 0.5).unwrap(), 2.0);
        assert_eq!(percentile(&e, 0.51).unwrap(), 3.0);
    }

    #[test]
    fn inverse_transform_samples_converge() {
        let law = ErlangLaw { rate: 0.8, shape: 3, mass: 1.0, tau: 1.0 };
        let g = GridDistribution::from_law_auto(&law, GridSpec::default(), 1e-10, 200);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| g.quantile(rng.random::<f64>())).collect();
        let e = empirical_cdf(&xs).unwrap();
        assert!(ks_distance(&e, &g) < 1.36 / (n as f64).sqrt() + 1e-4);
        assert!((law.cdf(3.0) - g.cdf(3.0)).abs() < 1e-6);
    }

    #[test]
    fn chi_square_accepts_true_law_and_rejects_wrong_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sigma: f64 = 0.3;
        let mut counts = vec![0u64; 64];
        for _ in 0..200_000 {
            let u: f64 = rng.random();
            let k = (u.ln() / sigma.ln()).floor() as usize;
            counts[k.min(63)] += 1;
        }
        let fit = chi_square_fit(&counts, |k| (1.0 - sigma) * sigma.powi(k as i32)).unwrap();
        assert!(fit.p_value > 0.001, "{fit:?}");
        let bad = chi_square_fit(&counts, |k| 0.6 * 0.4f64.powi(k as i32)).unwrap();
        assert!(bad.p_value < 1e-6);
    }

    proptest! {
        #[test]
        fn percentile_monotone_in_level(
            xs in proptest::collection::vec(0.0f64..10.0, 1..50),
            a in 0.01f64..0.99,
            b in 0.01f64..0.99,
        ) {
            let e = empirical_cdf(&xs).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(percentile(&e, lo).unwrap() <= percentile(&e, hi).unwrap());
        }

        #[test]
        fn ks_symmetric_and_triangle(
            xs in proptest::collection::vec(0.0f64..5.0, 1..30),
            ys in proptest::collection::vec(0.0f64..5.0, 1..30),
            zs in proptest::collection::vec(0.0f64..5.0, 1..30),
        ) {
            let (x, y, z) = (empirical_cdf(&xs).unwrap(), empirical_cdf(&ys).unwrap(), empirical_cdf(&zs).unwrap());
            prop_assert!((ks_distance(&x, &y) - ks_distance(&y, &x)).abs() < 1e-15);
            prop_assert!(ks_distance(&x, &z) <= ks_distance(&x, &y) + ks_distance(&y, &z) + 1e-12);
        }
    }
}
