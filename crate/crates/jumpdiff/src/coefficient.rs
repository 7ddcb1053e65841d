//! Composition of one jump-diffusion coefficient realization
//! `a(x) = abar(x) + Phi(W_N(x)) + P_eps(x)` and its point evaluation.

use std::fmt;
use std::sync::Arc;

use crate::jumps::{JumpHeights, LinePartition2D, Partition1D};
use crate::spectra::GaussianFieldRealization;
use crate::{Error, Result};

/// Deterministic part `abar >= 0`; all experiments here use zero.
#[derive(Clone, Default)]
pub enum DeterministicPart {
    #[default]
    Zero,
    Constant(f64),
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl DeterministicPart {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            DeterministicPart::Zero => 0.0,
            DeterministicPart::Constant(c) => *c,
            DeterministicPart::Custom(f) => f(x),
        }
    }
}

impl fmt::Debug for DeterministicPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeterministicPart::Zero => write!(f, "Zero"),
            DeterministicPart::Constant(c) => write!(f, "Constant({c})"),
            DeterministicPart::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// The transform `Phi` applied to the Gaussian field. Defaults to `exp`; the
/// growth conditions the theory puts on `Phi` are documented, not enforced —
/// they cannot be checked pointwise.
#[derive(Clone, Default)]
pub enum Transform {
    #[default]
    Exp,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Transform {
    pub fn eval(&self, w: f64) -> f64 {
        match self {
            Transform::Exp => w.exp(),
            Transform::Custom(f) => f(w),
        }
    }
}

impl fmt::Debug for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::Exp => write!(f, "Exp"),
            Transform::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// A random partition together with its per-cell jump heights.
#[derive(Debug, Clone)]
pub enum PartitionWithJumps {
    One { partition: Partition1D, heights: JumpHeights },
    Two { partition: LinePartition2D, heights: JumpHeights },
}

impl PartitionWithJumps {
    pub fn dim(&self) -> usize {
        match self {
            PartitionWithJumps::One { .. } => 1,
            PartitionWithJumps::Two { .. } => 2,
        }
    }

    pub fn cell_count(&self) -> usize {
        match self {
            PartitionWithJumps::One { partition, .. } => partition.cell_count(),
            PartitionWithJumps::Two { partition, .. } => partition.cell_count(),
        }
    }

    pub fn heights(&self) -> &JumpHeights {
        match self {
            PartitionWithJumps::One { heights, .. } | PartitionWithJumps::Two { heights, .. } => {
                heights
            }
        }
    }

    /// Jump value at a domain point.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let idx = match self {
            PartitionWithJumps::One { partition, .. } => partition.locate(x[0])?,
            PartitionWithJumps::Two { partition, .. } => partition.locate(x[0], x[1])?,
        };
        Ok(self.heights().values[idx])
    }
}

/// One immutable, deterministic realization of the coefficient. Evaluation is
/// pure and safe to call concurrently.
#[derive(Debug, Clone)]
pub struct CoefficientSample {
    pub deterministic: DeterministicPart,
    pub gaussian: GaussianFieldRealization,
    pub transform: Transform,
    pub jumps: PartitionWithJumps,
}

/// Composes a coefficient sample, checking the parts fit together.
pub fn make_coefficient(
    deterministic: DeterministicPart,
    gaussian: GaussianFieldRealization,
    jumps: PartitionWithJumps,
    transform: Transform,
) -> Result<CoefficientSample> {
    if gaussian.cutoff() > 0 && gaussian.spectrum().dim() != jumps.dim() {
        return Err(Error::Mismatch(format!(
            "gaussian field is {}-dimensional but the partition is {}-dimensional",
            gaussian.spectrum().dim(),
            jumps.dim()
        )));
    }
    if jumps.heights().values.len() != jumps.cell_count() {
        return Err(Error::Mismatch(format!(
            "{} heights for {} cells",
            jumps.heights().values.len(),
            jumps.cell_count()
        )));
    }
    Ok(CoefficientSample { deterministic, gaussian, transform, jumps })
}

impl CoefficientSample {
    pub fn dim(&self) -> usize {
        self.jumps.dim()
    }

    /// The jump sampler's certified moment-error bound (0 if exact).
    pub fn realized_bias(&self) -> f64 {
        self.jumps.heights().bias
    }

    /// `a(x) = abar(x) + Phi(W_N(x)) + P(x)` at a 1D point.
    pub fn eval_1d(&self, x: f64) -> Result<f64> {
        let w = if self.gaussian.cutoff() == 0 { 0.0 } else { self.gaussian.eval_1d(x) };
        Ok(self.deterministic.eval(&[x]) + self.transform.eval(w) + self.jumps.eval(&[x])?)
    }

    /// `a(x)` at a 1D point with the partition cell fixed by the caller.
    /// Quadrature code uses this to stay on the correct side of an interface
    /// when a panel endpoint lands exactly on a breakpoint.
    pub fn eval_1d_in_cell(&self, x: f64, cell: usize) -> f64 {
        let w = if self.gaussian.cutoff() == 0 { 0.0 } else { self.gaussian.eval_1d(x) };
        self.deterministic.eval(&[x]) + self.transform.eval(w) + self.jumps.heights().values[cell]
    }

    /// `a(x)` at a 2D point with the partition cell fixed by the caller.
    /// The 2D analogue of [`CoefficientSample::eval_1d_in_cell`]: quadrature on
    /// interface-fitted meshes pins the cell so that points landing exactly on
    /// a chord are charged to the owning element's side.
    pub fn eval_2d_in_cell(&self, x: f64, y: f64, cell: usize) -> f64 {
        let w = if self.gaussian.cutoff() == 0 { 0.0 } else { self.gaussian.eval_2d(x, y) };
        self.deterministic.eval(&[x, y]) + self.transform.eval(w) + self.jumps.heights().values[cell]
    }

    /// `a(x)` at a 2D point.
    pub fn eval_2d(&self, x: f64, y: f64) -> Result<f64> {
        let w = if self.gaussian.cutoff() == 0 { 0.0 } else { self.gaussian.eval_2d(x, y) };
        Ok(self.deterministic.eval(&[x, y]) + self.transform.eval(w) + self.jumps.eval(&[x, y])?)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self.dim() {
            1 => self.eval_1d(x[0]),
            _ => self.eval_2d(x[0], x[1]),
        }
    }

    /// Tabulates the smooth part `abar + Phi(W_N)` at the midpoints of a
    /// uniform panel grid fine enough to resolve every retained mode. The
    /// harmonic element quadrature reuses one profile for the whole mesh.
    pub fn smooth_profile_1d(&self) -> SmoothProfile1d {
        let m = (4 * self.gaussian.cutoff().max(128)).next_power_of_two().min(1 << 20);
        let w = crate::spectra::field_profile_1d(&self.gaussian, m);
        let values = w
            .iter()
            .enumerate()
            .map(|(q, &wq)| {
                let x = (q as f64 + 0.5) / m as f64;
                self.deterministic.eval(&[x]) + self.transform.eval(wq)
            })
            .collect();
        SmoothProfile1d { values }
    }

    /// Harmonic average `len / int_{x0}^{x1} 1/a` over one element, with the
    /// jump height pinned to the partition cell owning the element midpoint.
    /// On interface-fitted meshes the pin is exact (no element straddles a
    /// breakpoint); on uniform meshes it deliberately keeps the coefficient
    /// piecewise-smooth per element, so the genuine interface error of an
    /// unfitted mesh is preserved rather than smeared by the quadrature.
    pub fn harmonic_avg_1d(&self, profile: &SmoothProfile1d, x0: f64, x1: f64) -> Result<f64> {
        let m = profile.values.len();
        let mf = m as f64;
        let len = x1 - x0;
        let height = self.jumps.eval(&[0.5 * (x0 + x1)])?;
        let q0 = ((x0 * mf).floor() as usize).min(m - 1);
        let q1 = ((x1 * mf).ceil() as usize).clamp(q0 + 1, m);
        let mut inv = 0.0;
        for (q, base) in profile.values[q0..q1].iter().enumerate() {
            let q = q0 + q;
            let lo = (q as f64 / mf).max(x0);
            let hi = ((q + 1) as f64 / mf).min(x1);
            if hi <= lo {
                continue;
            }
            let a = base + height;
            if a <= 0.0 {
                return Err(Error::InvalidCoefficient(a));
            }
            inv += (hi - lo) / a;
        }
        Ok(len / inv)
    }

    /// Min/max of `a` over a probe grid, asserting strict positivity. The
    /// returned pair approximates `(a_-, a_+)`; callers should pass a grid
    /// that straddles every interface (see [`probe_grid_1d`]).
    pub fn bounds_probe(&self, probe: &[Vec<f64>]) -> Result<(f64, f64)> {
        assert!(!probe.is_empty(), "bounds probe needs a non-empty grid");
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in probe {
            let v = self.eval(p)?;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo <= 0.0 {
            return Err(Error::InvalidCoefficient(lo));
        }
        Ok((lo, hi))
    }
}

/// Midpoint values of the smooth coefficient part on a uniform panel grid;
/// see [`CoefficientSample::smooth_profile_1d`].
#[derive(Debug, Clone)]
pub struct SmoothProfile1d {
    pub values: Vec<f64>,
}

/// Uniform `n`-point probe grid on `[0,1]` plus both sides of every
/// breakpoint at offset 1e-9.
pub fn probe_grid_1d(partition: &Partition1D, n: usize) -> Vec<Vec<f64>> {
    let mut grid: Vec<Vec<f64>> = (0..n).map(|k| vec![k as f64 / (n - 1) as f64]).collect();
    for &b in partition.breakpoints() {
        grid.push(vec![(b - 1e-9).max(0.0)]);
        grid.push(vec![(b + 1e-9).min(1.0)]);
    }
    grid
}

/// Uniform `n x n` probe grid on the unit square plus points straddling each
/// chord at normal offset 1e-9.
pub fn probe_grid_2d(partition: &LinePartition2D, n: usize) -> Vec<Vec<f64>> {
    let mut grid = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            grid.push(vec![i as f64 / (n - 1) as f64, j as f64 / (n - 1) as f64]);
        }
    }
    for c in partition.vertical_chords() {
        for k in 0..=16 {
            let t = k as f64 / 16.0;
            let x = c.at(t);
            grid.push(vec![(x - 1e-9).max(0.0), t]);
            grid.push(vec![(x + 1e-9).min(1.0), t]);
        }
    }
    for c in partition.horizontal_chords() {
        for k in 0..=16 {
            let t = k as f64 / 16.0;
            let y = c.at(t);
            grid.push(vec![t, (y - 1e-9).max(0.0)]);
            grid.push(vec![t, (y + 1e-9).min(1.0)]);
        }
    }
    grid
}
