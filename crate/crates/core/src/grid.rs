//! Piecewise laws on a period-aligned time grid.
//!
//! Every law in this crate is smooth on the half-open pieces
//! `(mτ, (m+1)τ]` and may jump at multiples of `τ`. A [`PiecewiseLaw`] is
//! evaluated by `(piece, offset)` so breakpoints never depend on floating
//! point division; a [`GridDistribution`] samples it on a grid whose step
//! divides `τ` exactly and keeps both one-sided densities at each multiple
//! of `τ`.

use thiserror::Error;

/// Default number of grid cells per period (`h = τ / 400`).
pub const DEFAULT_CELLS_PER_PERIOD: usize = 400;

/// A (sub-)probability law on `[0, ∞)` that is smooth on `(mτ, (m+1)τ]`.
pub trait PiecewiseLaw: Send + Sync {
    /// Piece length τ.
    fn period(&self) -> f64;

    /// Density at `piece·τ + offset` with `offset ∈ [0, τ]`. At `offset = 0`
    /// this is the right limit at the piece start.
    fn pdf_at(&self, piece: usize, offset: f64) -> f64;

    /// CDF at `piece·τ + offset`.
    fn cdf_at(&self, piece: usize, offset: f64) -> f64;

    /// Limit of the CDF at +∞.
    fn total_mass(&self) -> f64;

    /// Number of pieces that carry mass, or `None` for unbounded support.
    fn support_pieces(&self) -> Option<usize>;

    /// Density at `t` using the half-open piece convention (left limit at breakpoints).
    fn pdf(&self, t: f64) -> f64 {
        match locate(t, self.period()) {
            None => 0.0,
            Some((piece, offset)) => self.pdf_at(piece, offset),
        }
    }

    fn cdf(&self, t: f64) -> f64 {
        match locate(t, self.period()) {
            None => 0.0,
            Some((piece, offset)) => self.cdf_at(piece, offset),
        }
    }
}

impl<T: PiecewiseLaw + ?Sized> PiecewiseLaw for Box<T> {
    fn period(&self) -> f64 {
        (**self).period()
    }
    fn pdf_at(&self, piece: usize, offset: f64) -> f64 {
        (**self).pdf_at(piece, offset)
    }
    fn cdf_at(&self, piece: usize, offset: f64) -> f64 {
        (**self).cdf_at(piece, offset)
    }
    fn total_mass(&self) -> f64 {
        (**self).total_mass()
    }
    fn support_pieces(&self) -> Option<usize> {
        (**self).support_pieces()
    }
}

impl<T: PiecewiseLaw + ?Sized> PiecewiseLaw for &T {
    fn period(&self) -> f64 {
        (**self).period()
    }
    fn pdf_at(&self, piece: usize, offset: f64) -> f64 {
        (**self).pdf_at(piece, offset)
    }
    fn cdf_at(&self, piece: usize, offset: f64) -> f64 {
        (**self).cdf_at(piece, offset)
    }
    fn total_mass(&self) -> f64 {
        (**self).total_mass()
    }
    fn support_pieces(&self) -> Option<usize> {
        (**self).support_pieces()
    }
}

/// Maps `t` to `(piece, offset)` with `t ∈ (piece·τ, (piece+1)·τ]`; `t = 0`
/// maps to `(0, 0)`, negative times to `None`.
pub fn locate(t: f64, period: f64) -> Option<(usize, f64)> {
    if t < 0.0 || t.is_nan() {
        return None;
    }
    if t == 0.0 {
        return Some((0, 0.0));
    }
    let piece = ((t / period).ceil() as usize).saturating_sub(1);
    Some((piece, t - piece as f64 * period))
}

/// Grid resolution, expressed as cells per period so every multiple of τ is a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub cells_per_period: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            cells_per_period: DEFAULT_CELLS_PER_PERIOD,
        }
    }
}

impl GridSpec {
    /// Cells per period; odd counts are rounded up so Simpson's rule applies per period.
    pub fn new(cells_per_period: usize) -> Self {
        let c = cells_per_period.max(2);
        GridSpec {
            cells_per_period: c + c % 2,
        }
    }

    /// Closest period-aligned grid to the requested step.
    pub fn from_step(period: f64, step: f64) -> Self {
        let cells = if step > 0.0 && step.is_finite() {
            (period / step).round() as usize
        } else {
            DEFAULT_CELLS_PER_PERIOD
        };
        Self::new(cells)
    }

    pub fn step(&self, period: f64) -> f64 {
        period / self.cells_per_period as f64
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridCheckError {
    #[error("CDF decreases at node {index}: {before} -> {after}")]
    NonMonotone {
        index: usize,
        before: f64,
        after: f64,
    },
    #[error("negative density {value} at node {index}")]
    NegativeDensity { index: usize, value: f64 },
    #[error("total mass {0} exceeds 1")]
    MassAboveOne(f64),
    #[error("last CDF value {last} differs from total mass {mass}")]
    CdfMassMismatch { last: f64, mass: f64 },
    #[error("integral of the density {integral} differs from final CDF {cdf}")]
    IntegralMismatch { integral: f64, cdf: f64 },
}

/// A sampled sub-probability law on `[0, t_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDistribution {
    period: f64,
    cells_per_period: usize,
    /// Density at each node; at multiples of τ this is the left limit (node 0: right limit).
    pdf: Vec<f64>,
    /// Right limits of the density at multiples of τ.
    pdf_right: Vec<f64>,
    cdf: Vec<f64>,
    total_mass: f64,
}

impl GridDistribution {
    /// Samples `law` on `n_periods` periods.
    pub fn from_law<L: PiecewiseLaw + ?Sized>(law: &L, spec: GridSpec, n_periods: usize) -> Self {
        let period = law.period();
        let c = spec.cells_per_period;
        let n_periods = n_periods.max(1);
        let n_nodes = c * n_periods + 1;
        let h = spec.step(period);
        let mut pdf = Vec::with_capacity(n_nodes);
        let mut cdf = Vec::with_capacity(n_nodes);
        pdf.push(law.pdf_at(0, 0.0));
        cdf.push(law.cdf_at(0, 0.0));
        for i in 1..n_nodes {
            let piece = (i - 1) / c;
            let offset = if i == (piece + 1) * c {
                period
            } else {
                (i - piece * c) as f64 * h
            };
            pdf.push(law.pdf_at(piece, offset));
            cdf.push(law.cdf_at(piece, offset));
        }
        let pdf_right = (0..=n_periods).map(|p| law.pdf_at(p, 0.0)).collect();
        // Rounding in the per-node sums can leave ulp-level dips.
        for i in 1..cdf.len() {
            if cdf[i] < cdf[i - 1] && cdf[i - 1] - cdf[i] < 1e-13 {
                cdf[i] = cdf[i - 1];
            }
        }
        GridDistribution {
            period,
            cells_per_period: c,
            pdf,
            pdf_right,
            cdf,
            total_mass: law.total_mass(),
        }
    }

    /// Samples `law` over its full support, or, for unbounded laws, until the
    /// remaining mass falls below `tail_tol` (capped at `max_periods`).
    pub fn from_law_auto<L: PiecewiseLaw + ?Sized>(
        law: &L,
        spec: GridSpec,
        tail_tol: f64,
        max_periods: usize,
    ) -> Self {
        let n = match law.support_pieces() {
            Some(p) => p + 1,
            None => periods_for_tail(law, tail_tol, max_periods),
        };
        Self::from_law(law, spec, n)
    }

    /// Weighted sum of grids that share period and resolution.
    pub fn mixture(components: &[(f64, &GridDistribution)]) -> Option<Self> {
        let (_, first) = components.first()?;
        let mut out = GridDistribution {
            period: first.period,
            cells_per_period: first.cells_per_period,
            pdf: vec![0.0; first.pdf.len()],
            pdf_right: vec![0.0; first.pdf_right.len()],
            cdf: vec![0.0; first.cdf.len()],
            total_mass: 0.0,
        };
        for &(w, g) in components {
            if g.period != out.period
                || g.cells_per_period != out.cells_per_period
                || g.pdf.len() != out.pdf.len()
            {
                return None;
            }
            let axpy = |dst: &mut [f64], src: &[f64]| {
                dst.iter_mut().zip(src).for_each(|(d, s)| *d += w * s);
            };
            axpy(&mut out.pdf, &g.pdf);
            axpy(&mut out.pdf_right, &g.pdf_right);
            axpy(&mut out.cdf, &g.cdf);
            out.total_mass += w * g.total_mass;
        }
        Some(out)
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn cells_per_period(&self) -> usize {
        self.cells_per_period
    }

    pub fn step(&self) -> f64 {
        self.period / self.cells_per_period as f64
    }

    pub fn n_periods(&self) -> usize {
        (self.pdf.len() - 1) / self.cells_per_period
    }

    pub fn t_max(&self) -> f64 {
        self.n_periods() as f64 * self.period
    }

    pub fn len(&self) -> usize {
        self.pdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pdf.is_empty()
    }

    /// Time of node `i`.
    pub fn time(&self, i: usize) -> f64 {
        let c = self.cells_per_period;
        (i / c) as f64 * self.period + (i % c) as f64 * self.step()
    }

    pub fn pdf_values(&self) -> &[f64] {
        &self.pdf
    }

    pub fn cdf_values(&self) -> &[f64] {
        &self.cdf
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Right-hand density limit at node `i`.
    fn pdf_right_of(&self, i: usize) -> f64 {
        if i.is_multiple_of(self.cells_per_period) {
            self.pdf_right[i / self.cells_per_period]
        } else {
            self.pdf[i]
        }
    }

    /// Linear interpolation of the density inside the cell containing `t`.
    pub fn pdf(&self, t: f64) -> f64 {
        if t < 0.0 || t > self.t_max() {
            return 0.0;
        }
        if t == 0.0 {
            return self.pdf[0];
        }
        let h = self.step();
        let i = (((t / h).ceil() as usize).max(1) - 1).min(self.pdf.len() - 2);
        let frac = ((t - self.time(i)) / h).clamp(0.0, 1.0);
        self.pdf_right_of(i) * (1.0 - frac) + self.pdf[i + 1] * frac
    }

    /// Linear interpolation of the CDF; flat at `cdf[last]` beyond `t_max`.
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return if t == 0.0 { self.cdf[0] } else { 0.0 };
        }
        if t >= self.t_max() {
            return *self.cdf.last().expect("grid is never empty");
        }
        let h = self.step();
        let i = ((t / h).floor() as usize).min(self.cdf.len() - 2);
        let frac = ((t - self.time(i)) / h).clamp(0.0, 1.0);
        self.cdf[i] * (1.0 - frac) + self.cdf[i + 1] * frac
    }

    /// Integral of the sampled density over `[0, t_max]`: Simpson's rule on
    /// each period, using the one-sided limits at the period boundaries.
    pub fn integrate_pdf(&self) -> f64 {
        let c = self.cells_per_period;
        let h = self.step();
        (0..self.n_periods())
            .map(|p| {
                let base = p * c;
                let value = |j: usize| {
                    if j == 0 {
                        self.pdf_right[p]
                    } else {
                        self.pdf[base + j]
                    }
                };
                if c.is_multiple_of(2) {
                    let mut s = value(0) + value(c);
                    for j in 1..c {
                        s += if j % 2 == 1 { 4.0 } else { 2.0 } * value(j);
                    }
                    s * h / 3.0
                } else {
                    let mut s = 0.5 * (value(0) + value(c));
                    for j in 1..c {
                        s += value(j);
                    }
                    s * h
                }
            })
            .sum()
    }

    /// Checks monotonicity, non-negativity and mass consistency.
    pub fn check(&self, tol: f64) -> Result<(), GridCheckError> {
        for (index, w) in self.cdf.windows(2).enumerate() {
            if w[1] < w[0] - tol * 1e-3 {
                return Err(GridCheckError::NonMonotone {
                    index: index + 1,
                    before: w[0],
                    after: w[1],
                });
            }
        }
        for (index, &value) in self.pdf.iter().chain(&self.pdf_right).enumerate() {
            if value < -1e-15 {
                return Err(GridCheckError::NegativeDensity { index, value });
            }
        }
        if self.total_mass > 1.0 + tol {
            return Err(GridCheckError::MassAboveOne(self.total_mass));
        }
        let last = *self.cdf.last().expect("grid is never empty");
        if (last - self.total_mass).abs() > tol {
            return Err(GridCheckError::CdfMassMismatch {
                last,
                mass: self.total_mass,
            });
        }
        let integral = self.integrate_pdf();
        if (integral - last).abs() > tol {
            return Err(GridCheckError::IntegralMismatch {
                integral,
                cdf: last,
            });
        }
        Ok(())
    }

    /// Evenly spaced `(t, cdf)` pairs for export, at most `max_points` of them.
    pub fn cdf_samples(&self, max_points: usize) -> Vec<(f64, f64)> {
        let stride = (self.len().div_ceil(max_points.max(2))).max(1);
        let mut out: Vec<(f64, f64)> = (0..self.len())
            .step_by(stride)
            .map(|i| (self.time(i), self.cdf[i]))
            .collect();
        let last = self.len() - 1;
        if !last.is_multiple_of(stride) {
            out.push((self.time(last), self.cdf[last]));
        }
        out
    }
}

/// Smallest number of periods after which `law` has less than `tail_tol`
/// of its mass left, capped at `max_periods`.
pub fn periods_for_tail<L: PiecewiseLaw + ?Sized>(law: &L, tail_tol: f64, max_periods: usize) -> usize {
    let mass = law.total_mass();
    let period = law.period();
    let mut n = 1;
    while n < max_periods && mass - law.cdf_at(n - 1, period) > tail_tol {
        n += 1;
    }
    n
}
