//! Covariance eigenpairs and truncated Karhunen–Loève sampling.
//!
//! Three covariance operators are supported: the Brownian-motion covariance on
//! `(0,1)` and the two-dimensional heat-kernel covariance on `(0,1)^2`, both
//! with closed-form eigenpairs, and the squared-exponential covariance on
//! `(0,1)` whose eigenpairs are approximated by Nyström's method.
//!
//! All eigenfunctions satisfy `||e_i||_inf <= 1`. Nyström eigenvectors come
//! L2-normalized, so each one is divided by its sup over the quadrature grid
//! and its eigenvalue multiplied by the square of that sup; the products
//! `eta_i e_i(x)^2`, and hence the law of the sampled field, are unchanged.
//! Tail sums and cutoff selection always use the raw (unscaled) eigenvalues,
//! which obey the kernel trace identity `sum_i eta_i = v |D|`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Default bound on how many eigenvalues `choose_cutoff` may scan.
pub const DEFAULT_MODE_CAP: usize = 4096;

/// Resolution of the cached evaluation grid for Nyström eigenfunctions.
const NYSTROM_GRID: usize = 8192;

/// One eigenpair `(eta_i, e_i)` of a covariance operator.
#[derive(Debug, Clone)]
pub struct EigenPair {
    /// Zero-based mode index (mode `m` is KL term `i = m + 1`).
    pub index: usize,
    /// Eigenvalue, already rescaled so the eigenfunction has sup-norm <= 1.
    pub value: f64,
    pub eigenfunction: EigenFn,
}

/// Evaluable eigenfunction of one covariance mode.
#[derive(Debug, Clone)]
pub enum EigenFn {
    /// `sin((2m+1) pi x / 2)` on `(0,1)`.
    BrownianMotion1d { mode: usize },
    /// `sin(pi i x1) sin(pi i x2)` on `(0,1)^2`, with `i = mode + 1`.
    HeatKernel2d { mode: usize },
    /// Kernel-weighted Nyström interpolant, divided by its grid sup-norm.
    Nystrom1d { data: Arc<NystromData>, mode: usize },
}

impl EigenFn {
    /// Evaluates the eigenfunction at a domain point (`x.len()` must match
    /// the dimension of the underlying domain).
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            EigenFn::BrownianMotion1d { mode } => {
                let k = (2 * mode + 1) as f64;
                (k * std::f64::consts::FRAC_PI_2 * x[0]).sin()
            }
            EigenFn::HeatKernel2d { mode } => {
                let i = (mode + 1) as f64 * std::f64::consts::PI;
                (i * x[0]).sin() * (i * x[1]).sin()
            }
            EigenFn::Nystrom1d { data, mode } => data.eval_mode(*mode, x[0]),
        }
    }
}

/// Precomputed Nyström discretization of the squared-exponential operator
/// with kernel `v exp(-|x-y|^2 / (2 r^2))` on `(0,1)`.
#[derive(Debug)]
pub struct NystromData {
    pub v: f64,
    pub r: f64,
    /// Gauss–Legendre quadrature nodes on `(0,1)`.
    nodes: Vec<f64>,
    /// Matching Gauss–Legendre weights (summing to 1).
    weights: Vec<f64>,
    /// Raw quadrature-weighted eigenvalues, non-increasing, clamped at 0.
    eigenvalues_raw: Vec<f64>,
    /// Node values `phi_m(x_j)` of the L2-normalized eigenfunctions.
    node_values: Vec<Vec<f64>>,
    /// Sup of `|phi_m|` over the nodes and the evaluation cache grid.
    sup_norms: Vec<f64>,
    /// Sup-normalized eigenfunction values on a uniform grid of
    /// `NYSTROM_GRID + 1` points, used by the field-evaluation hot path.
    grid_values: Vec<Vec<f64>>,
}

impl NystromData {
    fn kernel(&self, x: f64, y: f64) -> f64 {
        let d = x - y;
        self.v * (-d * d / (2.0 * self.r * self.r)).exp()
    }

    /// Number of resolvable modes (at most the quadrature size).
    pub fn modes(&self) -> usize {
        self.eigenvalues_raw.len()
    }

    /// Sup-normalized eigenfunction via the exact Nyström interpolation
    /// formula `e_m(x) = (1/eta_m) sum_j w_j k(x, x_j) phi_m(x_j)`.
    pub fn eval_mode_exact(&self, mode: usize, x: f64) -> f64 {
        self.eval_mode_unscaled(mode, x) / self.sup_norms[mode]
    }

    /// Nyström interpolant of the L2-normalized eigenfunction (no rescaling).
    fn eval_mode_unscaled(&self, mode: usize, x: f64) -> f64 {
        let eta = self.eigenvalues_raw[mode];
        if eta <= 0.0 {
            return 0.0;
        }
        let phi = &self.node_values[mode];
        let sum: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .zip(phi)
            .map(|((&xj, &wj), &pj)| wj * self.kernel(x, xj) * pj)
            .sum();
        sum / eta
    }

    /// Sup-normalized eigenfunction via linear interpolation of the cached
    /// grid. Agrees with [`Self::eval_mode_exact`] to interpolation accuracy.
    pub fn eval_mode(&self, mode: usize, x: f64) -> f64 {
        interp_uniform(&self.grid_values[mode], x)
    }
}

/// Linear interpolation of values tabulated on a uniform grid over `[0,1]`.
fn interp_uniform(values: &[f64], x: f64) -> f64 {
    let g = values.len() - 1;
    let t = (x.clamp(0.0, 1.0)) * g as f64;
    let j = (t as usize).min(g - 1);
    let frac = t - j as f64;
    values[j] * (1.0 - frac) + values[j + 1] * frac
}

#[derive(Debug)]
enum Kind {
    BrownianMotion1d,
    HeatKernel2d { v: f64, r: f64, trace: f64 },
    Nystrom1d(Arc<NystromData>),
}

/// An eigenpair source for one covariance operator, with tail-sum and
/// cutoff-selection queries. Immutable after construction.
#[derive(Debug)]
pub struct SpectrumModel {
    kind: Kind,
    mode_cap: usize,
}

impl SpectrumModel {
    /// Brownian-motion covariance on `(0,1)`:
    /// `eta_m = (8 / ((2m+1) pi))^2`, `e_m(x) = sin((2m+1) pi x / 2)`.
    pub fn brownian_motion_1d() -> Self {
        Self { kind: Kind::BrownianMotion1d, mode_cap: DEFAULT_MODE_CAP }
    }

    /// Heat-kernel covariance on `(0,1)^2`:
    /// `eta_i = v exp(-pi^2 i^2 r^2)`, `e_i(x) = sin(pi i x1) sin(pi i x2)`
    /// for `i >= 1`.
    pub fn heat_kernel_2d(v: f64, r: f64) -> Self {
        assert!(v > 0.0 && r > 0.0, "heat kernel needs v > 0 and r > 0");
        let mut trace = 0.0;
        let mut i = 1u64;
        loop {
            let term = v * (-(std::f64::consts::PI * i as f64 * r).powi(2)).exp();
            trace += term;
            if term < 1e-16 {
                break;
            }
            i += 1;
        }
        Self { kind: Kind::HeatKernel2d { v, r, trace }, mode_cap: DEFAULT_MODE_CAP }
    }

    /// Nyström approximation of the squared-exponential covariance
    /// `v exp(-|x-y|^2 / (2 r^2))` on `(0,1)` with an `n`-point midpoint rule.
    pub fn nystrom_1d(v: f64, r: f64, n: usize) -> Result<Self> {
        if !(v > 0.0) || !(r > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "squared-exponential kernel needs v > 0 and r > 0, got v={v}, r={r}"
            )));
        }
        if n < 8 {
            return Err(Error::InvalidParameter(format!(
                "Nystrom quadrature needs at least 8 points, got {n}"
            )));
        }
        let (nodes, weights) = gauss_legendre_unit(n);
        // Symmetrize with W^{1/2} K W^{1/2} so a symmetric eigensolver applies.
        let mut b = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let d = nodes[i] - nodes[j];
                let k = v * (-d * d / (2.0 * r * r)).exp() * (weights[i] * weights[j]).sqrt();
                b[(i, j)] = k;
                b[(j, i)] = k;
            }
        }
        let eig = b.clone().try_symmetric_eigen(1e-13, 10_000).ok_or_else(|| {
            let diag_max = (0..n).map(|i| b[(i, i)].abs()).fold(0.0f64, f64::max);
            Error::Eigendecomposition {
                detail: format!(
                    "symmetric eigensolver did not converge for n={n}, v={v}, r={r}, \
                     max diagonal {diag_max:e}"
                ),
            }
        })?;

        // Sort descending; clamp the tiny negative values a PSD kernel can
        // produce through roundoff.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]));
        let mut eigenvalues_raw = Vec::with_capacity(n);
        let mut node_values = Vec::with_capacity(n);
        for &col in &order {
            eigenvalues_raw.push(eig.eigenvalues[col].max(0.0));
            // phi(x_j) = u_j / sqrt(w_j) gives sum_j w_j phi(x_j)^2 = 1.
            let mut phi: Vec<f64> = eig
                .eigenvectors
                .column(col)
                .iter()
                .zip(&weights)
                .map(|(&u, &w)| u / w.sqrt())
                .collect();
            // Fix the sign so the first substantial component is positive;
            // keeps eigenfunctions deterministic across eigensolver runs.
            if let Some(&lead) = phi.iter().find(|p| p.abs() > 1e-8) {
                if lead < 0.0 {
                    phi.iter_mut().for_each(|p| *p = -*p);
                }
            }
            node_values.push(phi);
        }

        let mut data = NystromData {
            v,
            r,
            nodes,
            weights,
            eigenvalues_raw,
            node_values,
            sup_norms: vec![1.0; n],
            grid_values: Vec::new(),
        };
        // Cache eigenfunctions on a fine uniform grid and take each mode's
        // sup over nodes and grid together, so ||e_m||_inf <= 1 holds on the
        // continuum up to interpolation accuracy. Only modes that can matter
        // are cached: the spectrum decays fast, so stop once the raw
        // eigenvalue is negligible against the trace.
        let cached = data
            .eigenvalues_raw
            .iter()
            .position(|&e| e < 1e-14 * v)
            .unwrap_or(n)
            .max(1);
        let mut grid_values = vec![vec![0.0; NYSTROM_GRID + 1]; cached];
        for g in 0..=NYSTROM_GRID {
            let x = g as f64 / NYSTROM_GRID as f64;
            for (m, row) in grid_values.iter_mut().enumerate() {
                row[g] = data.eval_mode_unscaled(m, x);
            }
        }
        for m in 0..n {
            let node_sup = data.node_values[m].iter().fold(0.0f64, |s, &p| s.max(p.abs()));
            let grid_sup = grid_values
                .get(m)
                .map(|row| row.iter().fold(0.0f64, |s, &p| s.max(p.abs())))
                .unwrap_or(0.0);
            data.sup_norms[m] = node_sup.max(grid_sup).max(1e-300);
        }
        for (m, row) in grid_values.iter_mut().enumerate() {
            let s = data.sup_norms[m];
            row.iter_mut().for_each(|p| *p /= s);
        }
        data.grid_values = grid_values;
        Ok(Self { kind: Kind::Nystrom1d(Arc::new(data)), mode_cap: DEFAULT_MODE_CAP })
    }

    /// Raises or lowers the cap on how many modes tail scans may visit.
    pub fn with_mode_cap(mut self, cap: usize) -> Self {
        self.mode_cap = cap;
        self
    }

    /// Dimension of the underlying domain (1 or 2).
    pub fn dim(&self) -> usize {
        match self.kind {
            Kind::HeatKernel2d { .. } => 2,
            _ => 1,
        }
    }

    /// Raw eigenvalue of mode `m` (0-based), before sup-norm rescaling.
    /// Tail sums, traces and cutoff selection are defined in terms of these.
    pub fn raw_eigenvalue(&self, m: usize) -> f64 {
        match &self.kind {
            Kind::BrownianMotion1d => {
                let k = (2 * m + 1) as f64 * std::f64::consts::PI;
                (8.0 / k).powi(2)
            }
            Kind::HeatKernel2d { v, r, .. } => {
                let i = (m + 1) as f64;
                v * (-(std::f64::consts::PI * i * r).powi(2)).exp()
            }
            Kind::Nystrom1d(data) => data.eigenvalues_raw.get(m).copied().unwrap_or(0.0),
        }
    }

    /// Eigenpair of mode `m` with the sup-normalized eigenfunction and the
    /// correspondingly rescaled eigenvalue.
    pub fn eigenpair(&self, m: usize) -> EigenPair {
        match &self.kind {
            Kind::BrownianMotion1d => EigenPair {
                index: m,
                value: self.raw_eigenvalue(m),
                eigenfunction: EigenFn::BrownianMotion1d { mode: m },
            },
            Kind::HeatKernel2d { .. } => EigenPair {
                index: m,
                value: self.raw_eigenvalue(m),
                eigenfunction: EigenFn::HeatKernel2d { mode: m },
            },
            Kind::Nystrom1d(data) => {
                let s = data.sup_norms[m];
                EigenPair {
                    index: m,
                    value: data.eigenvalues_raw[m] * s * s,
                    eigenfunction: EigenFn::Nystrom1d { data: Arc::clone(data), mode: m },
                }
            }
        }
    }

    /// Trace `sum_i eta_i` of the raw spectrum. For the kernels here this is
    /// the kernel trace `v |D|`.
    pub fn trace(&self) -> f64 {
        match &self.kind {
            Kind::BrownianMotion1d => 8.0,
            Kind::HeatKernel2d { trace, .. } => *trace,
            Kind::Nystrom1d(data) => data.v,
        }
    }

    /// Tail sum `Xi_N = sum_{i > N} eta_i` of raw eigenvalues.
    pub fn xi_tail(&self, n: usize) -> f64 {
        let mut head = 0.0;
        for m in 0..n {
            head += self.raw_eigenvalue(m);
        }
        (self.trace() - head).max(0.0)
    }

    /// Smallest `N` with `Xi_N <= target`. Fails if the scan would exceed the
    /// configured mode cap (or, for Nyström, the resolvable mode count).
    pub fn choose_cutoff(&self, target: f64) -> Result<usize> {
        assert!(target > 0.0, "cutoff target must be positive");
        let hard_cap = match &self.kind {
            Kind::Nystrom1d(data) => self.mode_cap.min(data.modes()),
            _ => self.mode_cap,
        };
        let trace = self.trace();
        let mut tail = trace;
        for n in 0..=hard_cap {
            if tail <= target {
                return Ok(n);
            }
            if n < hard_cap {
                tail -= self.raw_eigenvalue(n);
                tail = tail.max(0.0);
            }
        }
        Err(Error::CutoffCapExceeded { target, cap: hard_cap })
    }
}

/// Gauss–Legendre nodes and weights transplanted to `(0,1)`; weights sum to 1.
fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Newton iteration on P_n from the Tricomi initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n(x) and P_n'(x) by the three-term recurrence.
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // Map [-1,1] -> [0,1]: node (1-x)/2 with weight w/2, plus the mirror.
        nodes[i] = (1.0 - x) / 2.0;
        weights[i] = w / 2.0;
        nodes[n - 1 - i] = (1.0 + x) / 2.0;
        weights[n - 1 - i] = w / 2.0;
    }
    (nodes, weights)
}

/// One realization of the truncated KL expansion
/// `W_N(x) = sum_{i <= N} sqrt(eta_i) e_i(x) Z_i`.
///
/// Immutable value type; safe to move across threads.
#[derive(Debug, Clone)]
pub struct GaussianFieldRealization {
    cutoff: usize,
    /// Per-mode amplitudes `sqrt(eta_m) Z_m` (rescaled eigenvalues, matching
    /// the sup-normalized eigenfunctions).
    coefficients: Vec<f64>,
    spectrum: Arc<SpectrumModel>,
    /// For Nyström spectra: the whole truncated sum pre-combined on the
    /// eigenfunction cache grid, so evaluation is a single interpolation.
    combined_grid: Option<Vec<f64>>,
}

impl GaussianFieldRealization {
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn spectrum(&self) -> &Arc<SpectrumModel> {
        &self.spectrum
    }

    /// `W_N(x)` on a one-dimensional domain.
    pub fn eval_1d(&self, x: f64) -> f64 {
        debug_assert_eq!(self.spectrum.dim(), 1);
        match &self.spectrum.kind {
            Kind::BrownianMotion1d => bm_sum(&self.coefficients, x),
            Kind::Nystrom1d(_) => match &self.combined_grid {
                Some(grid) => interp_uniform(grid, x),
                None => self.eval_1d_truncated(x, self.cutoff),
            },
            Kind::HeatKernel2d { .. } => unreachable!("2d spectrum evaluated as 1d"),
        }
    }

    /// `W_N(x)` on `(0,1)^2`.
    pub fn eval_2d(&self, x: f64, y: f64) -> f64 {
        debug_assert_eq!(self.spectrum.dim(), 2);
        heat2d_sum(&self.coefficients, x, y)
    }

    /// Evaluates the truncation of the same path to its first `n <= N` modes.
    /// Exact mode-by-mode summation (the prefix-coupling contract).
    pub fn eval_1d_truncated(&self, x: f64, n: usize) -> f64 {
        assert!(n <= self.cutoff);
        match &self.spectrum.kind {
            Kind::BrownianMotion1d => bm_sum(&self.coefficients[..n], x),
            Kind::Nystrom1d(data) => (0..n)
                .map(|m| self.coefficients[m] * data.eval_mode(m, x))
                .sum(),
            Kind::HeatKernel2d { .. } => unreachable!("2d spectrum evaluated as 1d"),
        }
    }

    /// Two-dimensional counterpart of [`Self::eval_1d_truncated`].
    pub fn eval_2d_truncated(&self, x: f64, y: f64, n: usize) -> f64 {
        assert!(n <= self.cutoff);
        heat2d_sum(&self.coefficients[..n], x, y)
    }
}

/// `W_N` at the `m` uniform panel midpoints `x_q = (q + 1/2)/m`.
///
/// For the analytic sine spectrum the whole sum is synthesized with one FFT,
/// which keeps profile construction tractable at the cutoffs of deep levels;
/// other spectra evaluate their cached representations point by point.
pub fn field_profile_1d(field: &GaussianFieldRealization, m: usize) -> Vec<f64> {
    debug_assert_eq!(field.spectrum.dim(), 1);
    if field.cutoff == 0 {
        return vec![0.0; m];
    }
    match &field.spectrum.kind {
        Kind::BrownianMotion1d => bm_profile_fft(&field.coefficients, m),
        _ => (0..m).map(|q| field.eval_1d((q as f64 + 0.5) / m as f64)).collect(),
    }
}

/// `sum_i c_i sin((2i+1) pi x_q / 2)` at `x_q = (q + 1/2)/m` for all `q` at
/// once. With `theta = pi/(2m)` the mode angle splits as
/// `(2i+1)(q+1/2) theta = 2 theta i q + theta q + theta (i+1/2)`, so the sum
/// is the imaginary part of a phase-twisted unnormalized inverse DFT of
/// length `2m` applied to `z_i = c_i e^{i theta (i+1/2)}`.
fn bm_profile_fft(coefficients: &[f64], m: usize) -> Vec<f64> {
    use rustfft::num_complex::Complex;
    assert!(coefficients.len() <= 2 * m, "profile grid must resolve every mode");
    let theta = std::f64::consts::FRAC_PI_2 / m as f64;
    let mut buf = vec![Complex::new(0.0, 0.0); 2 * m];
    for (i, &c) in coefficients.iter().enumerate() {
        let phase = theta * (i as f64 + 0.5);
        buf[i] = Complex::new(c * phase.cos(), c * phase.sin());
    }
    rustfft::FftPlanner::new()
        .plan_fft(2 * m, rustfft::FftDirection::Inverse)
        .process(&mut buf);
    (0..m)
        .map(|q| {
            let phase = theta * q as f64;
            (buf[q] * Complex::new(phase.cos(), phase.sin())).im
        })
        .collect()
}

/// `sum_m c_m sin((2m+1) pi x / 2)` by a two-term trig recurrence.
fn bm_sum(coefficients: &[f64], x: f64) -> f64 {
    let theta = std::f64::consts::FRAC_PI_2 * x;
    let (mut s, mut c) = theta.sin_cos();
    let (step_s, step_c) = (2.0 * theta).sin_cos();
    let mut acc = 0.0;
    for &coef in coefficients {
        acc += coef * s;
        let s_next = s * step_c + c * step_s;
        c = c * step_c - s * step_s;
        s = s_next;
    }
    acc
}

/// `sum_m c_m sin(pi (m+1) x) sin(pi (m+1) y)` by trig recurrences.
fn heat2d_sum(coefficients: &[f64], x: f64, y: f64) -> f64 {
    let ax = std::f64::consts::PI * x;
    let ay = std::f64::consts::PI * y;
    let (mut sx, mut cx) = ax.sin_cos();
    let (mut sy, mut cy) = ay.sin_cos();
    let (step_sx, step_cx) = (sx, cx);
    let (step_sy, step_cy) = (sy, cy);
    let mut acc = 0.0;
    for &coef in coefficients {
        acc += coef * sx * sy;
        let sx_next = sx * step_cx + cx * step_sx;
        cx = cx * step_cx - sx * step_sx;
        sx = sx_next;
        let sy_next = sy * step_cy + cy * step_sy;
        cy = cy * step_cy - sy * step_sy;
        sy = sy_next;
    }
    acc
}

/// Packages `N` standard-normal draws into a KL realization. Reusing a prefix
/// of the same noise with a smaller `N'` yields the truncation of the same
/// path, which is what couples adjacent MLMC levels.
pub fn sample_gaussian_field(
    spectrum: &Arc<SpectrumModel>,
    n: usize,
    noise: &[f64],
) -> GaussianFieldRealization {
    assert_eq!(noise.len(), n, "noise length must equal the cutoff");
    let coefficients: Vec<f64> = (0..n)
        .map(|m| spectrum.eigenpair(m).value.sqrt() * noise[m])
        .collect();
    let combined_grid = match &spectrum.kind {
        Kind::Nystrom1d(data) => {
            let g = NYSTROM_GRID + 1;
            let mut grid = vec![0.0; g];
            for (m, &coef) in coefficients.iter().enumerate() {
                if coef == 0.0 {
                    continue;
                }
                let row = &data.grid_values[m.min(data.grid_values.len() - 1)];
                // Modes beyond the cache have negligible eigenvalues; their
                // coefficients are ~0 and are skipped above when exactly 0.
                if m < data.grid_values.len() {
                    for (gi, r) in grid.iter_mut().zip(row) {
                        *gi += coef * r;
                    }
                }
            }
            Some(grid)
        }
        _ => None,
    };
    GaussianFieldRealization {
        cutoff: n,
        coefficients,
        spectrum: Arc::clone(spectrum),
        combined_grid,
    }
}

/// Draws `n` independent standard normals from `rng`.
pub fn draw_noise<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}
