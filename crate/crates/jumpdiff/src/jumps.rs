//! Random partitions of the domain and per-cell jump heights.
//!
//! The jump part of the coefficient is piecewise constant on a random
//! partition: in 1D a Poisson number of sorted uniform breakpoints, in 2D the
//! cells cut out of the unit square by random vertical and horizontal chords.
//! Heights are i.i.d. per cell — uniform, or generalized inverse Gaussian
//! (GIG) with either an exact sampler or an inverse-CDF table whose
//! per-draw error is certified to satisfy `E(|P~ - P|^2) <= eps`.

use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_distr::Poisson;
use serde::Serialize;

use crate::bessel::bessel_k;
use crate::rng::RngStream;
use crate::{Error, Result};

/// Largest inverse-CDF table the approximate GIG sampler may allocate.
const GIG_TABLE_CAP: usize = 1 << 26;

/// Random partition of `(0,1)` into half-open intervals
/// `(0, x_1], (x_1, x_2], ..., (x_{tau-1}, 1)`.
#[derive(Debug, Clone, Serialize)]
pub struct Partition1D {
    breakpoints: Vec<f64>,
}

impl Partition1D {
    /// Wraps explicit breakpoints; they must be strictly increasing in (0,1).
    pub fn from_breakpoints(breakpoints: Vec<f64>) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(Error::InvalidParameter(
                "a 1D partition needs at least one interior breakpoint".into(),
            ));
        }
        let ordered = breakpoints.windows(2).all(|w| w[0] < w[1]);
        let interior = breakpoints.iter().all(|&x| x > 0.0 && x < 1.0);
        if !ordered || !interior {
            return Err(Error::InvalidParameter(
                "breakpoints must be strictly increasing inside (0,1)".into(),
            ));
        }
        Ok(Self { breakpoints })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Number of cells `tau` (breakpoints + 1).
    pub fn cell_count(&self) -> usize {
        self.breakpoints.len() + 1
    }

    /// Closed bounds of cell `i` (cells are half-open `(lo, hi]` internally).
    pub fn cell_bounds(&self, i: usize) -> (f64, f64) {
        let lo = if i == 0 { 0.0 } else { self.breakpoints[i - 1] };
        let hi = if i == self.breakpoints.len() { 1.0 } else { self.breakpoints[i] };
        (lo, hi)
    }

    /// Index of the cell containing `x` under the half-open convention:
    /// a breakpoint belongs to the cell on its left.
    pub fn locate(&self, x: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::OutsideDomain(vec![x]));
        }
        Ok(self.breakpoints.partition_point(|&b| b < x))
    }
}

/// Draws `tau = Poisson(intensity - 2) + 2` cells: `tau - 1` sorted uniform
/// breakpoints. Finite-precision breakpoint collisions are resampled.
pub fn sample_partition_1d(intensity: f64, rng: &mut RngStream) -> Partition1D {
    assert!(intensity > 2.0, "partition intensity must exceed 2");
    let p: f64 = rng.sample(Poisson::new(intensity - 2.0).expect("positive rate"));
    let tau = p as usize + 2;
    let mut breakpoints: Vec<f64> = (0..tau - 1).map(|_| rng.gen::<f64>()).collect();
    loop {
        breakpoints.sort_by(f64::total_cmp);
        let mut collided = false;
        for i in 0..breakpoints.len() {
            let dup = i > 0 && breakpoints[i] == breakpoints[i - 1];
            if dup || breakpoints[i] <= 0.0 || breakpoints[i] >= 1.0 {
                breakpoints[i] = rng.gen::<f64>();
                collided = true;
            }
        }
        if !collided {
            break;
        }
    }
    Partition1D { breakpoints }
}

/// A chord of the unit square connecting opposite sides, parametrized by its
/// coordinates on the two sides: vertical chords join `(start, 0)` to
/// `(end, 1)`, horizontal chords join `(0, start)` to `(1, end)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Chord {
    pub start: f64,
    pub end: f64,
}

impl Chord {
    /// Crossing coordinate at transverse position `t` in `[0,1]`.
    pub fn at(&self, t: f64) -> f64 {
        self.start + (self.end - self.start) * t
    }
}

/// Convex polygon stored as a counter-clockwise vertex loop.
#[derive(Debug, Clone, Serialize)]
pub struct ConvexCell {
    pub vertices: Vec<[f64; 2]>,
}

impl ConvexCell {
    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        let mut twice = 0.0;
        for i in 0..n {
            let [x0, y0] = self.vertices[i];
            let [x1, y1] = self.vertices[(i + 1) % n];
            twice += x0 * y1 - x1 * y0;
        }
        twice / 2.0
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = self.vertices.len();
        let (mut cx, mut cy, mut twice) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let [x0, y0] = self.vertices[i];
            let [x1, y1] = self.vertices[(i + 1) % n];
            let cross = x0 * y1 - x1 * y0;
            twice += cross;
            cx += (x0 + x1) * cross;
            cy += (y0 + y1) * cross;
        }
        [cx / (3.0 * twice), cy / (3.0 * twice)]
    }

    /// Point-in-convex-polygon test with tolerance `tol` on the boundary.
    pub fn contains(&self, p: [f64; 2], tol: f64) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            let [x0, y0] = self.vertices[i];
            let [x1, y1] = self.vertices[(i + 1) % n];
            (x1 - x0) * (p[1] - y0) - (y1 - y0) * (p[0] - x0) >= -tol
        })
    }
}

/// Partition of `(0,1)^2` by non-crossing vertical chords and non-crossing
/// horizontal chords. Cell `(i, j)` sits between vertical chords `i-1` and
/// `i` and horizontal chords `j-1` and `j`; its flat index is
/// `i + j * (vertical count + 1)`.
#[derive(Debug, Clone, Serialize)]
pub struct LinePartition2D {
    vertical: Vec<Chord>,
    horizontal: Vec<Chord>,
    cells: Vec<ConvexCell>,
}

impl LinePartition2D {
    /// Builds the planar arrangement of the given chords. Chords of the same
    /// orientation must be sorted and non-crossing (ascending pairing does
    /// this automatically). Near-degenerate cells trigger a logged endpoint
    /// perturbation and a rebuild.
    pub fn from_chords(mut vertical: Vec<Chord>, mut horizontal: Vec<Chord>) -> Result<Self> {
        for chords in [&vertical, &horizontal] {
            let ok = chords.windows(2).all(|w| w[0].start <= w[1].start && w[0].end <= w[1].end)
                && chords
                    .iter()
                    .all(|c| (0.0..=1.0).contains(&c.start) && (0.0..=1.0).contains(&c.end));
            if !ok {
                return Err(Error::InvalidParameter(
                    "chords must lie in the unit square, sorted and non-crossing".into(),
                ));
            }
        }
        for attempt in 0..4 {
            match Self::build_cells(&vertical, &horizontal) {
                Ok(cells) => return Ok(Self { vertical, horizontal, cells }),
                Err(degenerate_strip) => {
                    // Widen the offending strip by nudging its right/upper
                    // chord; measure-zero event, so statistics are unaffected.
                    eprintln!(
                        "jumps: near-degenerate 2D cell (attempt {attempt}); perturbing chord endpoints by 1e-9"
                    );
                    let (vi, hj) = degenerate_strip;
                    if vi < vertical.len() {
                        vertical[vi].start = (vertical[vi].start + 1e-9).min(1.0);
                        vertical[vi].end = (vertical[vi].end + 1e-9).min(1.0);
                    }
                    if hj < horizontal.len() {
                        horizontal[hj].start = (horizontal[hj].start + 1e-9).min(1.0);
                        horizontal[hj].end = (horizontal[hj].end + 1e-9).min(1.0);
                    }
                }
            }
        }
        Err(Error::MeshDegeneracy(
            "2D partition still degenerate after endpoint perturbations".into(),
        ))
    }

    /// Clips each strip rectangle of the chord arrangement out of the unit
    /// square. Returns `Err((i, j))` naming the first degenerate strip.
    fn build_cells(
        vertical: &[Chord],
        horizontal: &[Chord],
    ) -> std::result::Result<Vec<ConvexCell>, (usize, usize)> {
        let square = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let nv = vertical.len();
        let nh = horizontal.len();
        let mut cells = Vec::with_capacity((nv + 1) * (nh + 1));
        for j in 0..=nh {
            for i in 0..=nv {
                let mut poly = square.clone();
                // Half-planes a x + b y + c >= 0 bounding cell (i, j).
                if i > 0 {
                    let c = vertical[i - 1];
                    poly = clip_half_plane(&poly, 1.0, -(c.end - c.start), -c.start);
                }
                if i < nv {
                    let c = vertical[i];
                    poly = clip_half_plane(&poly, -1.0, c.end - c.start, c.start);
                }
                if j > 0 {
                    let c = horizontal[j - 1];
                    poly = clip_half_plane(&poly, -(c.end - c.start), 1.0, -c.start);
                }
                if j < nh {
                    let c = horizontal[j];
                    poly = clip_half_plane(&poly, c.end - c.start, -1.0, c.start);
                }
                let cell = ConvexCell { vertices: poly };
                if cell.vertices.len() < 3 || cell.area() < 1e-12 {
                    return Err((i, j));
                }
                cells.push(cell);
            }
        }
        Ok(cells)
    }

    pub fn vertical_chords(&self) -> &[Chord] {
        &self.vertical
    }

    pub fn horizontal_chords(&self) -> &[Chord] {
        &self.horizontal
    }

    pub fn cells(&self) -> &[ConvexCell] {
        &self.cells
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Index of the cell containing `(x, y)`. Points on a chord belong to the
    /// left/lower strip, which is the lowest-index incident cell.
    pub fn locate(&self, x: f64, y: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(Error::OutsideDomain(vec![x, y]));
        }
        let i = self.vertical.partition_point(|c| c.at(y) < x);
        let j = self.horizontal.partition_point(|c| c.at(x) < y);
        Ok(i + j * (self.vertical.len() + 1))
    }
}

/// Clips a convex CCW polygon against the half-plane `a x + b y + c >= 0`
/// (Sutherland–Hodgman step; incidence epsilon 1e-12).
fn clip_half_plane(poly: &[[f64; 2]], a: f64, b: f64, c: f64) -> Vec<[f64; 2]> {
    let side = |p: [f64; 2]| a * p[0] + b * p[1] + c;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        let (sp, sq) = (side(p), side(q));
        if sp >= -1e-12 {
            out.push(p);
        }
        if (sp > 1e-12 && sq < -1e-12) || (sp < -1e-12 && sq > 1e-12) {
            let t = sp / (sp - sq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

/// Draws `Poisson(line_intensity) + 1` vertical and horizontal chords each,
/// connecting sorted uniforms on opposing sides in ascending order, and
/// builds the induced cell arrangement.
pub fn sample_line_partition_2d(line_intensity: f64, rng: &mut RngStream) -> LinePartition2D {
    assert!(line_intensity > 0.0, "line intensity must be positive");
    let poi = Poisson::new(line_intensity).expect("positive rate");
    let px: f64 = rng.sample(poi);
    let py: f64 = rng.sample(poi);
    let mut draw_chords = |count: usize| {
        let mut starts: Vec<f64> = (0..count).map(|_| rng.gen::<f64>()).collect();
        let mut ends: Vec<f64> = (0..count).map(|_| rng.gen::<f64>()).collect();
        starts.sort_by(f64::total_cmp);
        ends.sort_by(f64::total_cmp);
        starts
            .into_iter()
            .zip(ends)
            .map(|(start, end)| Chord { start, end })
            .collect::<Vec<_>>()
    };
    let vertical = draw_chords(px as usize + 1);
    let horizontal = draw_chords(py as usize + 1);
    LinePartition2D::from_chords(vertical, horizontal)
        .expect("sampled chords are sorted and in the unit square")
}

/// Per-cell jump heights together with the sampler's certified moment-error
/// bound (`bias = 0` for exact samplers).
#[derive(Debug, Clone, Serialize)]
pub struct JumpHeights {
    pub values: Vec<f64>,
    pub bias: f64,
}

impl JumpHeights {
    /// Preset constant heights (extension hook; not used by the presets).
    pub fn constant(count: usize, value: f64) -> Self {
        assert!(value >= 0.0);
        Self { values: vec![value; count], bias: 0.0 }
    }
}

/// `count` i.i.d. `U([lo, hi])` heights; exact, so `bias = 0`.
pub fn sample_uniform_heights(count: usize, lo: f64, hi: f64, rng: &mut RngStream) -> JumpHeights {
    assert!(count >= 1 && lo >= 0.0 && hi > lo);
    let values = (0..count).map(|_| rng.gen_range(lo..hi)).collect();
    JumpHeights { values, bias: 0.0 }
}

/// Parameters of the generalized inverse Gaussian distribution with density
/// `f(x) = (psi/chi)^{lambda/2} / (2 K_lambda(sqrt(psi chi)))
///          x^{lambda - 1} exp(-(psi x + chi / x) / 2)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GigParams {
    pub psi: f64,
    pub chi: f64,
    pub lambda_bar: f64,
}

impl GigParams {
    pub fn new(psi: f64, chi: f64, lambda_bar: f64) -> Result<Self> {
        if !(psi > 0.0) || !(chi > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "GIG needs psi > 0 and chi > 0, got psi={psi}, chi={chi}"
            )));
        }
        Ok(Self { psi, chi, lambda_bar })
    }
}

/// GIG density at `x > 0`.
pub fn gig_density(x: f64, p: &GigParams) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::OutsideDomain(vec![x]));
    }
    Ok(GigDist::new(*p).density(x))
}

/// Cached numeric CDF of a [`GigDist`] on a dense uniform grid.
#[derive(Debug)]
struct CdfGrid {
    x0: f64,
    dx: f64,
    /// Cumulative Simpson integral of the density at the grid points,
    /// normalized to end at 1.
    values: Vec<f64>,
}

/// A GIG distribution with its normalizing constant, exact sampler and a
/// lazily built quadrature CDF for quantile queries.
#[derive(Debug)]
pub struct GigDist {
    pub params: GigParams,
    /// `(psi/chi)^{lambda/2} / (2 K_lambda(sqrt(psi chi)))`.
    norm: f64,
    cdf_grid: OnceLock<CdfGrid>,
}

impl GigDist {
    pub fn new(params: GigParams) -> Self {
        let GigParams { psi, chi, lambda_bar } = params;
        let norm =
            (psi / chi).powf(lambda_bar / 2.0) / (2.0 * bessel_k(lambda_bar, (psi * chi).sqrt()));
        Self { params, norm, cdf_grid: OnceLock::new() }
    }

    pub fn density(&self, x: f64) -> f64 {
        debug_assert!(x > 0.0);
        let GigParams { psi, chi, lambda_bar } = self.params;
        self.norm * x.powf(lambda_bar - 1.0) * (-0.5 * (psi * x + chi / x)).exp()
    }

    /// Closed-form mean `sqrt(chi/psi) K_{lambda+1}(w) / K_lambda(w)` with
    /// `w = sqrt(psi chi)`.
    pub fn mean(&self) -> f64 {
        let GigParams { psi, chi, lambda_bar } = self.params;
        let w = (psi * chi).sqrt();
        (chi / psi).sqrt() * bessel_k(lambda_bar + 1.0, w) / bessel_k(lambda_bar, w)
    }

    /// Mode of the density (stationary point of `log f`).
    fn mode(&self) -> f64 {
        let GigParams { psi, chi, lambda_bar } = self.params;
        let a = lambda_bar - 1.0;
        (a + (a * a + psi * chi).sqrt()) / psi
    }

    /// One exact draw by the ratio-of-uniforms method: accept `x = v/u` when
    /// `u^2 <= f(v/u)` with `u <= sqrt(f(mode))`, `v <= sup_x x sqrt(f(x))`.
    pub fn sample_exact<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let u_max = self.density(self.mode()).sqrt();
        // x sqrt(f(x)) peaks at the mode of x^2 f(x), a GIG with lambda + 2.
        let GigParams { psi, chi, lambda_bar } = self.params;
        let a2 = lambda_bar + 1.0;
        let m2 = (a2 + (a2 * a2 + psi * chi).sqrt()) / psi;
        let v_max = m2 * self.density(m2).sqrt();
        const BUDGET: u64 = 1_000_000;
        for _ in 0..BUDGET {
            let u = rng.gen::<f64>() * u_max;
            let v = rng.gen::<f64>() * v_max;
            if u <= 0.0 {
                continue;
            }
            let x = v / u;
            if x > 0.0 && u * u <= self.density(x) {
                return Ok(x);
            }
        }
        Err(Error::RejectionBudget(BUDGET))
    }

    /// Support truncation for quadrature: density negligible outside.
    fn support_bounds(&self) -> (f64, f64) {
        let GigParams { psi, chi, .. } = self.params;
        // exp(-chi/(2x)) underflows below x0; exp(-psi x/2) dominates above.
        let lo = chi / 1400.0;
        let hi = (1400.0 / psi).max(self.mode() * 4.0);
        (lo, hi)
    }

    fn grid(&self) -> &CdfGrid {
        self.cdf_grid.get_or_init(|| {
            let (lo, hi) = self.support_bounds();
            let panels = 1 << 19;
            let dx = (hi - lo) / panels as f64;
            let mut values = Vec::with_capacity(panels + 1);
            values.push(0.0);
            let mut acc = 0.0;
            let mut f_left = self.density(lo.max(1e-300));
            for k in 0..panels {
                let xl = lo + k as f64 * dx;
                let f_mid = self.density(xl + 0.5 * dx);
                let f_right = self.density(xl + dx);
                acc += dx / 6.0 * (f_left + 4.0 * f_mid + f_right);
                values.push(acc);
                f_left = f_right;
            }
            // Normalize away the (tiny) truncated tail mass.
            let total = acc;
            values.iter_mut().for_each(|v| *v /= total);
            CdfGrid { x0: lo, dx, values }
        })
    }

    /// Numeric CDF by monotone interpolation of the dense quadrature grid.
    pub fn cdf(&self, x: f64) -> f64 {
        let g = self.grid();
        if x <= g.x0 {
            return 0.0;
        }
        let t = (x - g.x0) / g.dx;
        let k = (t as usize).min(g.values.len() - 2);
        let frac = t - k as f64;
        if k >= g.values.len() - 1 {
            return 1.0;
        }
        g.values[k] * (1.0 - frac) + g.values[k + 1] * frac
    }

    /// Numeric quantile: bracket on the grid, then Newton-polish with the
    /// exact density.
    pub fn quantile(&self, u: f64) -> f64 {
        assert!((0.0..=1.0).contains(&u));
        let g = self.grid();
        let k = g.values.partition_point(|&v| v < u).max(1) - 1;
        let (f0, f1) = (g.values[k], g.values[k + 1]);
        let frac = if f1 > f0 { (u - f0) / (f1 - f0) } else { 0.0 };
        let mut x = g.x0 + (k as f64 + frac) * g.dx;
        for _ in 0..3 {
            let f = self.density(x);
            if f <= 0.0 {
                break;
            }
            let step = (self.cdf(x) - u) / f;
            x = (x - step).clamp(g.x0, g.x0 + g.dx * (g.values.len() - 1) as f64);
        }
        x
    }
}

/// Thin wrapper over [`GigDist::sample_exact`] for one-off draws.
pub fn sample_gig_exact(p: &GigParams, rng: &mut RngStream) -> Result<f64> {
    GigDist::new(*p).sample_exact(rng)
}

/// Inverse-CDF table for `eps`-biased GIG sampling.
///
/// Knots are spaced `delta = sqrt(eps)` apart in `x` over the central support
/// `[q(1e-9), q(1 - 1e-9)]`. For a uniform `u` landing between two knot CDF
/// values, both the exact quantile and the interpolated draw lie in the same
/// `delta`-cell, so the monotone coupling satisfies `|P~ - P| <= delta` per
/// draw and hence `E(|P~ - P|^2) <= eps`. Tail draws fall back to the exact
/// quantile and contribute no extra error.
#[derive(Debug)]
pub struct GigTable {
    dist: Arc<GigDist>,
    eps: f64,
    delta: f64,
    x0: f64,
    /// CDF values at the knots `x0 + k delta`.
    cdf_at_knots: Vec<f64>,
}

impl GigTable {
    pub fn new(dist: Arc<GigDist>, eps: f64) -> Result<Self> {
        assert!(eps > 0.0, "bias target must be positive");
        let delta = eps.sqrt();
        let q_lo = dist.quantile(1e-9);
        let q_hi = dist.quantile(1.0 - 1e-9);
        let span = q_hi - q_lo;
        let len = (span / delta).ceil() as usize + 1;
        if len > GIG_TABLE_CAP {
            let min_delta = span / (GIG_TABLE_CAP - 1) as f64;
            return Err(Error::TableTooLarge {
                requested: eps,
                min_achievable: min_delta * min_delta,
            });
        }
        let cdf_at_knots = (0..len).map(|k| dist.cdf(q_lo + k as f64 * delta)).collect();
        Ok(Self { dist, eps, delta, x0: q_lo, cdf_at_knots })
    }

    /// The certified bound on `E(|P~ - P|^2)`.
    pub fn bias_bound(&self) -> f64 {
        self.eps
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn dist(&self) -> &Arc<GigDist> {
        &self.dist
    }

    /// Inverts the table at the uniform `u` (the approximate draw).
    pub fn sample_from_u(&self, u: f64) -> f64 {
        let knots = &self.cdf_at_knots;
        if u < knots[0] || u > *knots.last().unwrap() {
            return self.dist.quantile(u);
        }
        let k = knots.partition_point(|&v| v < u).max(1) - 1;
        let (f0, f1) = (knots[k], knots[k + 1.min(knots.len() - 1 - k)]);
        let frac = if f1 > f0 { ((u - f0) / (f1 - f0)).clamp(0.0, 1.0) } else { 0.0 };
        self.x0 + (k as f64 + frac) * self.delta
    }

    /// One approximate draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample_from_u(rng.gen::<f64>())
    }

    /// The monotone coupling: exact and approximate draw from the same `u`.
    pub fn sample_coupled(&self, u: f64) -> (f64, f64) {
        (self.dist.quantile(u), self.sample_from_u(u))
    }
}

/// One approximate draw plus its certified bound (`GigTable` construction is
/// expensive; reuse a table for repeated sampling).
pub fn sample_gig_approx(p: &GigParams, eps: f64, rng: &mut RngStream) -> Result<(f64, f64)> {
    let table = GigTable::new(Arc::new(GigDist::new(*p)), eps)?;
    let x = table.sample(rng);
    Ok((x, table.bias_bound()))
}

/// `count` i.i.d. GIG heights from the table sampler.
pub fn sample_gig_heights(count: usize, table: &GigTable, rng: &mut RngStream) -> JumpHeights {
    assert!(count >= 1);
    let values = (0..count).map(|_| table.sample(rng)).collect();
    JumpHeights { values, bias: table.bias_bound() }
}

/// `count` i.i.d. exact GIG heights.
pub fn sample_gig_heights_exact(
    count: usize,
    dist: &GigDist,
    rng: &mut RngStream,
) -> Result<JumpHeights> {
    assert!(count >= 1);
    let values: Result<Vec<f64>> = (0..count).map(|_| dist.sample_exact(rng)).collect();
    Ok(JumpHeights { values: values?, bias: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, StreamLabel};

    fn stream(master: u64, index: u64, purpose: Purpose) -> RngStream {
        RngStream::from_label(StreamLabel::new(master, 0, None, index, purpose))
    }

    fn paper_gig() -> GigParams {
        GigParams::new(0.25, 9.0, -1.0).unwrap()
    }

    #[test]
    fn partition_1d_mean_cell_count() {
        let reps = 100_000u64;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for i in 0..reps {
            let mut rng = stream(11, i, Purpose::Partition);
            let tau = sample_partition_1d(12.0, &mut rng).cell_count() as f64;
            sum += tau;
            sumsq += tau * tau;
        }
        let mean = sum / reps as f64;
        let var = sumsq / reps as f64 - mean * mean;
        let se = (var / reps as f64).sqrt();
        assert!((mean - 12.0).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn partition_1d_sorted_and_interior() {
        for i in 0..100_000u64 {
            let mut rng = stream(12, i, Purpose::Partition);
            let p = sample_partition_1d(12.0, &mut rng);
            assert!(p.cell_count() >= 2);
            assert!(p.breakpoints().windows(2).all(|w| w[0] < w[1]));
            assert!(p.breakpoints().iter().all(|&x| x > 0.0 && x < 1.0));
        }
    }

    #[test]
    fn locate_1d_half_open() {
        let p = Partition1D::from_breakpoints(vec![0.5]).unwrap();
        assert_eq!(p.locate(0.5).unwrap(), 0);
        assert_eq!(p.locate(0.500_000_1).unwrap(), 1);
        let p = Partition1D::from_breakpoints(vec![0.3, 0.7]).unwrap();
        assert_eq!(p.locate(0.71).unwrap(), 2);
        assert_eq!(p.locate(0.0).unwrap(), 0);
        assert!(p.locate(1.5).is_err());
    }

    #[test]
    fn locate_1d_probe_grid_unique() {
        let mut rng = stream(13, 0, Purpose::Partition);
        let p = sample_partition_1d(12.0, &mut rng);
        for g in 0..=1000 {
            let x = g as f64 / 1000.0;
            let i = p.locate(x).unwrap();
            let (lo, hi) = p.cell_bounds(i);
            assert!((x > lo || i == 0) && x <= hi || (i == 0 && x == 0.0));
        }
    }

    #[test]
    fn single_cross_has_four_cells() {
        let v = vec![Chord { start: 0.4, end: 0.6 }];
        let h = vec![Chord { start: 0.5, end: 0.5 }];
        let part = LinePartition2D::from_chords(v, h).unwrap();
        assert_eq!(part.cell_count(), 4);
        let total: f64 = part.cells().iter().map(ConvexCell::area).sum();
        assert!((total - 1.0).abs() < 1e-10);
        // Upper-right corner point: locate agrees with brute-force
        // point-in-polygon.
        let idx = part.locate(0.9, 0.9).unwrap();
        let brute: Vec<usize> = (0..4).filter(|&i| part.cells()[i].contains([0.9, 0.9], 1e-9)).collect();
        assert_eq!(brute, vec![idx]);
        assert_eq!(idx, 3);
    }

    #[test]
    fn partition_2d_tiles_and_mean_cell_count() {
        let reps = 100_000u64;
        let mut sum = 0.0;
        for i in 0..reps {
            let mut rng = stream(14, i, Purpose::Partition);
            let part = sample_line_partition_2d(1.0, &mut rng);
            sum += part.cell_count() as f64;
            if i < 500 {
                let total: f64 = part.cells().iter().map(ConvexCell::area).sum();
                assert!((total - 1.0).abs() < 1e-10, "draw {i}: area sum {total}");
            }
        }
        let mean = sum / reps as f64;
        // E((Px+2)(Py+2)) = 9 for independent Poisson(1); Var ~ 45.
        let se = (45.0f64 / reps as f64).sqrt();
        assert!((mean - 9.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn locate_2d_probe_grid_unique() {
        for i in 0..50u64 {
            let mut rng = stream(15, i, Purpose::Partition);
            let part = sample_line_partition_2d(1.0, &mut rng);
            for gx in 0..=100 {
                for gy in 0..=100 {
                    let (x, y) = (gx as f64 / 100.0, gy as f64 / 100.0);
                    let idx = part.locate(x, y).unwrap();
                    assert!(part.cells()[idx].contains([x, y], 1e-9), "({x},{y}) not in located cell");
                }
            }
        }
    }

    #[test]
    fn uniform_heights_range_and_mean() {
        let mut rng = stream(16, 0, Purpose::Heights);
        let h = sample_uniform_heights(1_000_000, 0.0, 5.0, &mut rng);
        assert_eq!(h.bias, 0.0);
        assert!(h.values.iter().all(|&v| (0.0..5.0).contains(&v)));
        let mean: f64 = h.values.iter().sum::<f64>() / h.values.len() as f64;
        // U([0,5]) has sd sqrt(25/12).
        let se = (25.0 / 12.0f64 / 1e6).sqrt();
        assert!((mean - 2.5).abs() < 3.0 * se);

        let mut rng1 = stream(16, 1, Purpose::Heights);
        let mut rng2 = stream(16, 1, Purpose::Heights);
        assert_eq!(
            sample_uniform_heights(1, 0.0, 10.0, &mut rng1).values,
            sample_uniform_heights(1, 0.0, 10.0, &mut rng2).values
        );
    }

    #[test]
    fn gig_density_normalized_and_mean() {
        let dist = GigDist::new(paper_gig());
        // Integrate the density over the truncated support with Simpson.
        let (lo, hi) = (1e-4, 500.0);
        let n = 200_000;
        let h = (hi - lo) / n as f64;
        let mut total = 0.0;
        for k in 0..n {
            let x = lo + k as f64 * h;
            total += h / 6.0 * (dist.density(x) + 4.0 * dist.density(x + 0.5 * h) + dist.density(x + h));
        }
        assert!((total - 1.0).abs() < 1e-8, "mass {total}");
        // Bessel-ratio mean: 6 K_0(1.5) / K_1(1.5).
        let mean = dist.mean();
        assert!((mean - 6.0 * bessel_k(0.0, 1.5) / bessel_k(1.0, 1.5)).abs() < 1e-10);
        assert!((mean - 4.6243).abs() < 1e-3, "mean {mean}");
        assert!(gig_density(-1.0, &paper_gig()).is_err());
    }

    #[test]
    fn gig_exact_sampler_mean_and_support() {
        let dist = GigDist::new(paper_gig());
        let reps = 1_000_000u64;
        let mut rng = stream(17, 0, Purpose::Heights);
        let mut sum = 0.0;
        for _ in 0..reps {
            let x = dist.sample_exact(&mut rng).unwrap();
            assert!(x > 0.0);
            sum += x;
        }
        let mean = sum / reps as f64;
        assert!((mean - dist.mean()).abs() < 0.01 * dist.mean(), "mean {mean}");
    }

    #[test]
    fn gig_exact_sampler_ks_statistic() {
        let dist = GigDist::new(paper_gig());
        let reps = 1_000_000usize;
        let mut rng = stream(18, 0, Purpose::Heights);
        let mut draws: Vec<f64> = (0..reps).map(|_| dist.sample_exact(&mut rng).unwrap()).collect();
        draws.sort_by(f64::total_cmp);
        let mut ks = 0.0f64;
        for (i, &x) in draws.iter().enumerate() {
            let f = dist.cdf(x);
            ks = ks.max((f - i as f64 / reps as f64).abs());
            ks = ks.max(((i + 1) as f64 / reps as f64 - f).abs());
        }
        assert!(ks < 0.002, "KS statistic {ks}");
    }

    #[test]
    fn gig_table_coupling_and_moment_bound() {
        let dist = Arc::new(GigDist::new(paper_gig()));
        for &eps in &[1e-2, 1e-4] {
            let table = GigTable::new(Arc::clone(&dist), eps).unwrap();
            let mut rng = stream(19, 0, Purpose::Heights);
            let mut moment = 0.0;
            let reps = 100_000;
            for _ in 0..reps {
                let u = rng.gen::<f64>();
                let (exact, approx) = table.sample_coupled(u);
                // Central draws differ by at most one table cell.
                if u > 1e-6 && u < 1.0 - 1e-6 {
                    assert!(
                        (exact - approx).abs() <= table.delta() * 1.0001,
                        "eps {eps}: |{exact} - {approx}| > delta {}",
                        table.delta()
                    );
                }
                moment += (exact - approx).powi(2);
            }
            assert!(moment / reps as f64 <= eps, "eps {eps}: moment {}", moment / reps as f64);
        }
    }

    #[test]
    fn gig_table_large_eps_and_cap_error() {
        let dist = Arc::new(GigDist::new(paper_gig()));
        // Var(P) is finite; a huge eps still yields draws in the support.
        let table = GigTable::new(Arc::clone(&dist), 100.0).unwrap();
        let mut rng = stream(20, 0, Purpose::Heights);
        for _ in 0..100 {
            assert!(table.sample(&mut rng) > 0.0);
        }
        match GigTable::new(dist, 1e-30) {
            Err(Error::TableTooLarge { min_achievable, .. }) => assert!(min_achievable > 1e-30),
            other => panic!("expected table cap error, got {other:?}"),
        }
    }

    #[test]
    fn max_height_error_scales_with_partition_measure() {
        // Thm 3.10-style bound: E(max_i |P~_i - P_i|^2) <= |D| intensity eps
        // (here: 12 eps) for intensity-12 partitions with coupled draws.
        let dist = Arc::new(GigDist::new(paper_gig()));
        for &eps in &[1e-2, 1e-3, 1e-4] {
            let table = GigTable::new(Arc::clone(&dist), eps).unwrap();
            let reps = 10_000u64;
            let mut acc = 0.0;
            for i in 0..reps {
                let mut prng = stream(21, i, Purpose::Partition);
                let tau = sample_partition_1d(12.0, &mut prng).cell_count();
                let mut hrng = stream(21, i, Purpose::Heights);
                let max_sq = (0..tau)
                    .map(|_| {
                        let (exact, approx) = table.sample_coupled(hrng.gen::<f64>());
                        (exact - approx).powi(2)
                    })
                    .fold(0.0f64, f64::max);
                acc += max_sq;
            }
            let moment = acc / reps as f64;
            assert!(moment <= 12.0 * eps, "eps {eps}: moment {moment}");
        }
    }

    #[test]
    fn heights_use_streams_disjoint_from_partition() {
        let partition_label = StreamLabel::new(22, 0, None, 3, Purpose::Partition);
        let heights_label = partition_label.with_purpose(Purpose::Heights);
        assert_ne!(partition_label, heights_label);
        let mut prng = RngStream::from_label(partition_label);
        let mut hrng = RngStream::from_label(heights_label);
        let p = sample_partition_1d(12.0, &mut prng);
        let h = sample_uniform_heights(p.cell_count(), 0.0, 10.0, &mut hrng);
        assert_eq!(h.values.len(), p.cell_count());
    }

    #[test]
    fn determinism_partitions_and_heights() {
        let mut a = stream(23, 5, Purpose::Partition);
        let mut b = stream(23, 5, Purpose::Partition);
        let pa = sample_partition_1d(12.0, &mut a);
        let pb = sample_partition_1d(12.0, &mut b);
        assert_eq!(pa.breakpoints(), pb.breakpoints());
        let mut a2 = stream(23, 5, Purpose::Partition);
        let mut b2 = stream(23, 5, Purpose::Partition);
        let qa = sample_line_partition_2d(1.0, &mut a2);
        let qb = sample_line_partition_2d(1.0, &mut b2);
        assert_eq!(qa.cell_count(), qb.cell_count());
        for (ca, cb) in qa.cells().iter().zip(qb.cells()) {
            assert_eq!(ca.vertices, cb.vertices);
        }
    }
}
