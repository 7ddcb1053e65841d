//! One-dimensional P1 finite elements on sample-adaptive or uniform meshes,
//! with a quadrature-based pathwise oracle and H1 distances on the 1001-point
//! reference grid.

use crate::coefficient::CoefficientSample;
use crate::jumps::Partition1D;
use crate::{Error, Result};

/// Number of points of the 1D reference grid.
pub const REF_POINTS_1D: usize = 1001;

/// Quadrature used for element integrals. The harmonic rule is the default:
/// the effective element coefficient is the harmonic average
/// `len / \int_e 1/a`, computed by a composite midpoint rule fine enough to
/// resolve the within-element variation of the sampled field — in 1D this is
/// the choice that makes the nodal values of the P1 solution exact for the
/// integrated coefficient. The plain midpoint and five-point Gauss–Legendre
/// switches exist for quadrature-sensitivity checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature1d {
    Harmonic,
    Midpoint,
    GaussLegendre5,
}

/// Mesh on `[0,1]` given by strictly increasing nodes.
#[derive(Debug, Clone)]
pub struct Mesh1D {
    nodes: Vec<f64>,
    realized_h: f64,
    interface_conforming: bool,
}

impl Mesh1D {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Maximum node spacing `h_hat`.
    pub fn realized_h(&self) -> f64 {
        self.realized_h
    }

    pub fn interface_conforming(&self) -> bool {
        self.interface_conforming
    }

    fn from_nodes(nodes: Vec<f64>, interface_conforming: bool) -> Self {
        let realized_h = nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0f64, f64::max);
        Self { nodes, realized_h, interface_conforming }
    }
}

/// Interface-fitted mesh: the uniform grid of width `h_bar` with every
/// breakpoint inserted as a node, so `h_hat <= h_bar` and every interface lies
/// on a cell boundary. Keeping the dyadic grid points as nodes aligns the mesh
/// with the level representation grids, where the solution values are then
/// nodal. Grid points closer than 1e-9 to a breakpoint are dropped in its
/// favour to avoid degenerate cells.
pub fn adaptive_mesh_1d(partition: &Partition1D, h_bar: f64) -> Result<Mesh1D> {
    mesh_from_interfaces(partition.breakpoints(), h_bar)
}

/// [`adaptive_mesh_1d`] for an explicit (possibly empty) interface list.
pub fn mesh_from_interfaces(breakpoints: &[f64], h_bar: f64) -> Result<Mesh1D> {
    assert!(h_bar > 0.0, "mesh threshold must be positive");
    if breakpoints.windows(2).any(|w| w[1] - w[0] < 1e-12)
        || breakpoints.iter().any(|&b| !(1e-12..=1.0 - 1e-12).contains(&b))
    {
        return Err(Error::MeshDegeneracy(
            "partition breakpoints closer than 1e-12".into(),
        ));
    }
    let n = (1.0 / h_bar).ceil() as usize;
    let mut nodes: Vec<f64> = (0..=n)
        .map(|k| k as f64 / n as f64)
        .filter(|&x| {
            x <= 0.0 || x >= 1.0 || breakpoints.iter().all(|&b| (x - b).abs() > 1e-9)
        })
        .collect();
    nodes.extend_from_slice(breakpoints);
    nodes.sort_by(f64::total_cmp);
    Ok(Mesh1D::from_nodes(nodes, true))
}

/// Equally spaced mesh with spacing `h`; `1/h` must be an integer (meshes are
/// constructed from levels as `h = 2^{-l-1}`).
pub fn uniform_mesh_1d(h: f64) -> Mesh1D {
    let n = (1.0 / h).round();
    assert!((n * h - 1.0).abs() < 1e-12, "1/h must be an integer, got h={h}");
    let n = n as usize;
    let nodes = (0..=n).map(|k| k as f64 / n as f64).collect();
    Mesh1D::from_nodes(nodes, false)
}

/// Uniform mesh at level `l`: `h_l = 2^{-l-1}`.
pub fn uniform_mesh_1d_level(level: u32) -> Mesh1D {
    uniform_mesh_1d(0.5f64.powi(level as i32 + 1))
}

/// P1 Galerkin solution: nodal values on the mesh, zero at both ends.
#[derive(Debug, Clone)]
pub struct Solution1D {
    pub mesh: Mesh1D,
    pub nodal: Vec<f64>,
}

impl Solution1D {
    /// Piecewise-linear evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        let nodes = self.mesh.nodes();
        let i = nodes.partition_point(|&n| n < x).clamp(1, nodes.len() - 1);
        let (x0, x1) = (nodes[i - 1], nodes[i]);
        let t = (x - x0) / (x1 - x0);
        self.nodal[i - 1] * (1.0 - t) + self.nodal[i] * t
    }
}

/// Assembles and solves `-(a u')' = f` with homogeneous Dirichlet conditions.
///
/// Element integrals use the harmonic rule; the tridiagonal system is solved
/// by direct elimination and the residual is verified.
pub fn assemble_solve_1d(
    coeff: &CoefficientSample,
    f: &dyn Fn(f64) -> f64,
    mesh: &Mesh1D,
) -> Result<Solution1D> {
    assemble_solve_1d_quad(coeff, f, mesh, Quadrature1d::Harmonic)
}

/// [`assemble_solve_1d`] with an explicit quadrature rule.
pub fn assemble_solve_1d_quad(
    coeff: &CoefficientSample,
    f: &dyn Fn(f64) -> f64,
    mesh: &Mesh1D,
    quad: Quadrature1d,
) -> Result<Solution1D> {
    let nodes = mesh.nodes();
    let n = nodes.len();
    assert!(n >= 2, "mesh needs at least two nodes");
    // Tridiagonal stiffness matrix over all nodes; Dirichlet rows eliminated
    // after assembly.
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n - 1]; // off[k] couples nodes k and k+1
    let mut load = vec![0.0; n];
    let profile = match quad {
        Quadrature1d::Harmonic => Some(coeff.smooth_profile_1d()),
        _ => None,
    };
    for k in 0..n - 1 {
        let (x0, x1) = (nodes[k], nodes[k + 1]);
        let len = x1 - x0;
        let (a_eff, f0, f1) = match quad {
            Quadrature1d::Harmonic => {
                let a = coeff.harmonic_avg_1d(profile.as_ref().unwrap(), x0, x1)?;
                let fm = f(0.5 * (x0 + x1));
                (a, fm * len / 2.0, fm * len / 2.0)
            }
            Quadrature1d::Midpoint => {
                let mid = 0.5 * (x0 + x1);
                let a = coeff.eval_1d(mid)?;
                let fm = f(mid);
                (a, fm * len / 2.0, fm * len / 2.0)
            }
            Quadrature1d::GaussLegendre5 => {
                // 5-point Gauss–Legendre on [0,1].
                const T: [f64; 5] = [
                    0.046910077030668,
                    0.230765344947158,
                    0.5,
                    0.769234655052842,
                    0.953089922969332,
                ];
                const W: [f64; 5] = [
                    0.118463442528095,
                    0.239314335249683,
                    0.284444444444444,
                    0.239314335249683,
                    0.118463442528095,
                ];
                let mut a = 0.0;
                let mut f0 = 0.0;
                let mut f1 = 0.0;
                for q in 0..5 {
                    let x = x0 + T[q] * len;
                    a += W[q] * coeff.eval_1d(x)?;
                    let fx = f(x) * len * W[q];
                    f0 += fx * (1.0 - T[q]);
                    f1 += fx * T[q];
                }
                (a, f0, f1)
            }
        };
        if a_eff <= 0.0 {
            return Err(Error::Assembly(format!(
                "non-positive coefficient {a_eff} on element ({x0}, {x1})"
            )));
        }
        let k_e = a_eff / len;
        diag[k] += k_e;
        diag[k + 1] += k_e;
        off[k] -= k_e;
        load[k] += f0;
        load[k + 1] += f1;
    }

    // Homogeneous Dirichlet at both ends: solve on interior nodes only.
    let m = n - 2;
    let mut nodal = vec![0.0; n];
    if m > 0 {
        let mut c_diag: Vec<f64> = diag[1..n - 1].to_vec();
        let mut c_rhs: Vec<f64> = load[1..n - 1].to_vec();
        let sub: Vec<f64> = off[1..n - 1].to_vec(); // couples interior i, i+1
        // Thomas elimination.
        for i in 1..m {
            if c_diag[i - 1] <= 0.0 {
                return Err(Error::Assembly(format!("non-positive pivot at row {i}")));
            }
            let w = sub[i - 1] / c_diag[i - 1];
            c_diag[i] -= w * sub[i - 1];
            c_rhs[i] -= w * c_rhs[i - 1];
        }
        if c_diag[m - 1] <= 0.0 {
            return Err(Error::Assembly("non-positive final pivot".into()));
        }
        nodal[m] = c_rhs[m - 1] / c_diag[m - 1];
        for i in (0..m - 1).rev() {
            nodal[i + 1] = (c_rhs[i] - sub[i] * nodal[i + 2]) / c_diag[i];
        }
    }

    // Residual check on the interior rows. The scale combines the load with
    // `||A||_inf ||u||_inf`: on strongly graded meshes the stiffness entries
    // dwarf the load, and rounding in the elimination is proportional to the
    // matrix scale, not the right-hand side.
    let f_max = load[1..n - 1].iter().fold(0.0f64, |s, &v| s.max(v.abs())).max(1e-300);
    let u_max = nodal.iter().fold(0.0f64, |s, &v| s.max(v.abs()));
    let a_max = (1..n - 1)
        .map(|i| diag[i].abs() + off[i - 1].abs() + off[i].abs())
        .fold(0.0f64, f64::max);
    let scale = f_max.max(a_max * u_max);
    for i in 1..n - 1 {
        let r = diag[i] * nodal[i] + off[i - 1] * nodal[i - 1] + off[i] * nodal[i + 1] - load[i];
        if r.abs() > 1e-10 * scale {
            return Err(Error::Solver(format!(
                "residual {r:e} at row {i} exceeds 1e-10 of the system scale"
            )));
        }
    }
    Ok(Solution1D { mesh: mesh.clone(), nodal })
}

/// Reference solution of the same two-point problem by quadrature.
///
/// In 1D, `-(a u')' = f` with `u(0) = u(1) = 0` gives
/// `u'(x) = (C - F(x)) / a(x)` with `F(x) = int_0^x f` and `C` fixed by
/// `u(1) = 0`. Cumulative integrals are accumulated per panel with Simpson's
/// rule, panels never straddling a jump interface.
#[derive(Clone)]
pub struct OracleSolution1d {
    coeff: CoefficientSample,
    f: SourceFn1d,
    /// Panel endpoints (cell-aligned composite grid).
    grid: Vec<f64>,
    /// Partition cell owning each panel `[grid[k], grid[k+1]]`.
    cell_of_panel: Vec<usize>,
    /// Cumulative `int f` at the grid points.
    cum_f: Vec<f64>,
    /// Cumulative `int 1/a` at the grid points.
    cum_inv_a: Vec<f64>,
    /// Cumulative `int F/a` at the grid points.
    cum_f_over_a: Vec<f64>,
    /// Flux constant `C`.
    c: f64,
}

/// Source term for the 1D problem.
pub type SourceFn1d = std::sync::Arc<dyn Fn(f64) -> f64 + Send + Sync>;

impl OracleSolution1d {
    pub fn flux_constant(&self) -> f64 {
        self.c
    }

    fn panel(&self, x: f64) -> usize {
        self.grid.partition_point(|&g| g < x).clamp(1, self.grid.len() - 1) - 1
    }

    /// `u(x) = C int_0^x 1/a - int_0^x F/a`.
    pub fn eval(&self, x: f64) -> f64 {
        let k = self.panel(x);
        let cell = self.cell_of_panel[k];
        let x0 = self.grid[k];
        let cum_f0 = self.cum_f[k];
        let a = |t: f64| self.coeff.eval_1d_in_cell(t, cell);
        let g1 = simpson(&|t| 1.0 / a(t), x0, x);
        let g2 = simpson(&|t| (cum_f0 + simpson(self.f.as_ref(), x0, t)) / a(t), x0, x);
        self.c * (self.cum_inv_a[k] + g1) - (self.cum_f_over_a[k] + g2)
    }

    /// `u'(x) = (C - F(x)) / a(x)` (half-open cell convention at interfaces).
    pub fn eval_deriv(&self, x: f64) -> f64 {
        let k = self.panel(x);
        let f_x = self.cum_f[k] + simpson(self.f.as_ref(), self.grid[k], x);
        (self.c - f_x) / self.coeff.eval_1d(x).expect("in-domain evaluation")
    }
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
}

/// Builds the quadrature oracle for one coefficient sample, with a built-in
/// self-convergence check (the panel count is doubled and the two solutions
/// compared at probe points). Panels never straddle a jump interface, and the
/// coefficient is always evaluated on the owning cell's side of a breakpoint.
pub fn oracle_solve_1d(
    coeff: &CoefficientSample,
    f: SourceFn1d,
    quad_points_per_cell: usize,
) -> Result<OracleSolution1d> {
    assert!(quad_points_per_cell >= 64, "oracle needs at least 64 panels per cell");
    if coeff.dim() != 1 {
        return Err(Error::InvalidParameter("1D oracle needs a 1D sample".into()));
    }
    let coarse = build_oracle(coeff, &f, quad_points_per_cell)?;
    let fine = build_oracle(coeff, &f, 2 * quad_points_per_cell)?;
    for g in 0..=16 {
        let x = g as f64 / 16.0;
        let d = (coarse.eval(x) - fine.eval(x)).abs();
        if d > 1e-10 {
            return Err(Error::OracleResolution(format!(
                "doubling the oracle quadrature moves u({x}) by {d:e} (> 1e-10)"
            )));
        }
    }
    Ok(fine)
}

fn build_oracle(
    coeff: &CoefficientSample,
    f: &SourceFn1d,
    panels_per_cell: usize,
) -> Result<OracleSolution1d> {
    let breakpoints = match &coeff.jumps {
        crate::coefficient::PartitionWithJumps::One { partition, .. } => partition.breakpoints(),
        _ => unreachable!("dimension checked by the caller"),
    };
    let mut bounds = vec![0.0];
    bounds.extend_from_slice(breakpoints);
    bounds.push(1.0);
    let mut grid = vec![0.0];
    let mut cell_of_panel = Vec::new();
    for (cell, w) in bounds.windows(2).enumerate() {
        for k in 1..=panels_per_cell {
            grid.push(w[0] + (w[1] - w[0]) * k as f64 / panels_per_cell as f64);
            cell_of_panel.push(cell);
        }
    }
    let n = grid.len();
    let mut cum_f = vec![0.0; n];
    let mut cum_inv_a = vec![0.0; n];
    let mut cum_f_over_a = vec![0.0; n];
    for k in 1..n {
        let (x0, x1) = (grid[k - 1], grid[k]);
        let cell = cell_of_panel[k - 1];
        let a = |t: f64| coeff.eval_1d_in_cell(t, cell);
        cum_f[k] = cum_f[k - 1] + simpson(f.as_ref(), x0, x1);
        cum_inv_a[k] = cum_inv_a[k - 1] + simpson(&|t| 1.0 / a(t), x0, x1);
        let cf = cum_f[k - 1];
        cum_f_over_a[k] = cum_f_over_a[k - 1]
            + simpson(&|t| (cf + simpson(f.as_ref(), x0, t)) / a(t), x0, x1);
    }
    let denom = cum_inv_a[n - 1];
    if !(denom > 0.0) {
        return Err(Error::InvalidCoefficient(denom));
    }
    let c = cum_f_over_a[n - 1] / denom;
    Ok(OracleSolution1d {
        coeff: coeff.clone(),
        f: std::sync::Arc::clone(f),
        grid,
        cell_of_panel,
        cum_f,
        cum_inv_a,
        cum_f_over_a,
        c,
    })
}

/// The 1001-point equally spaced reference grid on `[0,1]`.
pub fn ref_grid_1d() -> Vec<f64> {
    (0..REF_POINTS_1D).map(|k| k as f64 / (REF_POINTS_1D - 1) as f64).collect()
}

/// Piecewise-linear prolongation of a solution onto a reference grid.
pub fn prolong_1d(sol: &Solution1D, ref_grid: &[f64]) -> Vec<f64> {
    ref_grid.iter().map(|&x| sol.eval(x)).collect()
}

/// True H1 error of a P1 solution against the quadrature oracle, integrated
/// elementwise with a 3-point Gauss rule (free of reference-grid resolution
/// effects; used by the pathwise convergence checks).
pub fn h1_error_vs_oracle(sol: &Solution1D, oracle: &OracleSolution1d) -> f64 {
    const T: [f64; 3] = [0.112701665379258, 0.5, 0.887298334620742];
    const W: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
    let nodes = sol.mesh.nodes();
    let mut acc = 0.0;
    for k in 0..nodes.len() - 1 {
        let (x0, x1) = (nodes[k], nodes[k + 1]);
        let len = x1 - x0;
        let slope = (sol.nodal[k + 1] - sol.nodal[k]) / len;
        for q in 0..3 {
            let x = x0 + T[q] * len;
            let uh = sol.nodal[k] + slope * (x - x0);
            let du = slope - oracle.eval_deriv(x);
            let dv = uh - oracle.eval(x);
            acc += W[q] * len * (dv * dv + du * du);
        }
    }
    acc.sqrt()
}

/// Discrete H1 distance of two gridded functions: trapezoid rule for the L2
/// part, forward differences on the grid intervals for the gradient part.
pub fn h1_dist(f: &[f64], g: &[f64], ref_grid: &[f64]) -> f64 {
    assert!(f.len() == g.len() && f.len() == ref_grid.len());
    let mut l2 = 0.0;
    let mut grad = 0.0;
    for i in 0..ref_grid.len() - 1 {
        let h = ref_grid[i + 1] - ref_grid[i];
        let (d0, d1) = (f[i] - g[i], f[i + 1] - g[i + 1]);
        l2 += 0.5 * h * (d0 * d0 + d1 * d1);
        let slope = (d1 - d0) / h;
        grad += h * slope * slope;
    }
    (l2 + grad).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::{
        make_coefficient, CoefficientSample, DeterministicPart, PartitionWithJumps, Transform,
    };
    use crate::jumps::{sample_partition_1d, sample_uniform_heights, JumpHeights};
    use crate::rng::{Purpose, RngStream, StreamLabel};
    use crate::spectra::{draw_noise, sample_gaussian_field, SpectrumModel};
    use std::sync::Arc;

    /// Coefficient that is constant `value` everywhere (degenerate field).
    fn constant_coeff(value: f64) -> CoefficientSample {
        let s = Arc::new(SpectrumModel::brownian_motion_1d());
        make_coefficient(
            DeterministicPart::Constant(value - 1.0),
            sample_gaussian_field(&s, 0, &[]),
            PartitionWithJumps::One {
                partition: Partition1D::from_breakpoints(vec![0.5]).unwrap(),
                heights: JumpHeights { values: vec![0.0, 0.0], bias: 0.0 },
            },
            Transform::Exp,
        )
        .unwrap()
    }

    /// Piecewise coefficient {1 on (0, 0.5), 2 on (0.5, 1)} (via heights
    /// 0 and 1 on top of exp(0) = 1).
    fn two_piece_coeff() -> CoefficientSample {
        let s = Arc::new(SpectrumModel::brownian_motion_1d());
        make_coefficient(
            DeterministicPart::Zero,
            sample_gaussian_field(&s, 0, &[]),
            PartitionWithJumps::One {
                partition: Partition1D::from_breakpoints(vec![0.5]).unwrap(),
                heights: JumpHeights { values: vec![0.0, 1.0], bias: 0.0 },
            },
            Transform::Exp,
        )
        .unwrap()
    }

    /// One draw of the 1D uniform-jump configuration.
    fn bm_uniform_sample(index: u64, n_modes: usize) -> CoefficientSample {
        let s = Arc::new(SpectrumModel::brownian_motion_1d());
        let label = StreamLabel::new(41, 0, None, index, Purpose::Noise);
        let mut nrng = RngStream::from_label(label);
        let mut prng = RngStream::from_label(label.with_purpose(Purpose::Partition));
        let mut hrng = RngStream::from_label(label.with_purpose(Purpose::Heights));
        let gaussian = sample_gaussian_field(&s, n_modes, &draw_noise(&mut nrng, n_modes));
        let partition = sample_partition_1d(12.0, &mut prng);
        let heights = sample_uniform_heights(partition.cell_count(), 0.0, 10.0, &mut hrng);
        make_coefficient(
            DeterministicPart::Zero,
            gaussian,
            PartitionWithJumps::One { partition, heights },
            Transform::Exp,
        )
        .unwrap()
    }

    #[test]
    fn adaptive_mesh_examples() {
        let m = mesh_from_interfaces(&[], 0.25).unwrap();
        assert_eq!(m.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(m.realized_h(), 0.25);

        let p = Partition1D::from_breakpoints(vec![0.3]).unwrap();
        let m = adaptive_mesh_1d(&p, 0.5).unwrap();
        let expected = [0.0, 0.3, 0.5, 1.0];
        assert_eq!(m.nodes().len(), expected.len());
        for (a, b) in m.nodes().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "node {a} vs {b}");
        }
        assert!((m.realized_h() - 0.5).abs() < 1e-12);
        assert!(m.interface_conforming());
    }

    #[test]
    fn adaptive_mesh_contains_breakpoints_exactly() {
        for i in 0..200u64 {
            let mut rng = RngStream::from_label(StreamLabel::new(42, 0, None, i, Purpose::Partition));
            let p = sample_partition_1d(12.0, &mut rng);
            let m = adaptive_mesh_1d(&p, 0.1).unwrap();
            assert!(m.realized_h() <= 0.1 + 1e-15);
            for b in p.breakpoints() {
                assert!(m.nodes().contains(b), "breakpoint {b} missing");
            }
        }
    }

    #[test]
    fn degenerate_breakpoints_rejected() {
        let p = Partition1D::from_breakpoints(vec![0.5, 0.5 + 1e-13]).unwrap();
        assert!(matches!(adaptive_mesh_1d(&p, 0.1), Err(Error::MeshDegeneracy(_))));
    }

    #[test]
    fn uniform_mesh_examples() {
        let m = uniform_mesh_1d_level(0);
        assert_eq!(m.nodes(), &[0.0, 0.5, 1.0]);
        assert!(!m.interface_conforming());
        let m = uniform_mesh_1d_level(2);
        assert_eq!(m.nodes().len(), 9);
        assert_eq!(m.realized_h(), 0.125);
    }

    #[test]
    fn laplace_nodal_exactness() {
        let coeff = constant_coeff(1.0);
        let mesh = uniform_mesh_1d(0.125);
        let sol = assemble_solve_1d(&coeff, &|_| 1.0, &mesh).unwrap();
        for (i, &x) in mesh.nodes().iter().enumerate() {
            assert!((sol.nodal[i] - x * (1.0 - x) / 2.0).abs() < 1e-12);
        }
        assert!((sol.eval(0.5) - 0.125).abs() < 1e-12);
        assert_eq!(sol.nodal[0], 0.0);
        assert_eq!(*sol.nodal.last().unwrap(), 0.0);
    }

    #[test]
    fn two_piece_interface_value() {
        let coeff = two_piece_coeff();
        let p = Partition1D::from_breakpoints(vec![0.5]).unwrap();
        let mesh = adaptive_mesh_1d(&p, 0.125).unwrap();
        let sol = assemble_solve_1d(&coeff, &|_| 1.0, &mesh).unwrap();
        assert!((sol.eval(0.5) - 1.0 / 12.0).abs() < 1e-10, "u(0.5) = {}", sol.eval(0.5));
    }

    #[test]
    fn constant_scaling_linearity() {
        let mesh = uniform_mesh_1d(0.0625);
        let sol1 = assemble_solve_1d(&constant_coeff(1.0), &|_| 1.0, &mesh).unwrap();
        let sol2 = assemble_solve_1d(&constant_coeff(2.0), &|_| 1.0, &mesh).unwrap();
        for (v1, v2) in sol1.nodal.iter().zip(&sol2.nodal) {
            assert!((v1 / 2.0 - v2).abs() < 1e-12);
        }
    }

    fn unit_source() -> SourceFn1d {
        Arc::new(|_x: f64| 1.0)
    }

    #[test]
    fn oracle_analytic_cases() {
        let coeff = constant_coeff(1.0);
        let oracle = oracle_solve_1d(&coeff, unit_source(), 64).unwrap();
        for g in 0..=20 {
            let x = g as f64 / 20.0;
            assert!((oracle.eval(x) - x * (1.0 - x) / 2.0).abs() < 1e-12);
        }
        let coeff2 = constant_coeff(2.0);
        let oracle2 = oracle_solve_1d(&coeff2, unit_source(), 64).unwrap();
        for g in 0..=20 {
            let x = g as f64 / 20.0;
            assert!((oracle2.eval(x) - x * (1.0 - x) / 4.0).abs() < 1e-12);
            assert!((oracle2.eval(x) - oracle.eval(x) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_two_piece_flux_and_value() {
        let coeff = two_piece_coeff();
        let oracle = oracle_solve_1d(&coeff, unit_source(), 64).unwrap();
        assert!((oracle.flux_constant() - 5.0 / 12.0).abs() < 1e-12);
        assert!((oracle.eval(0.5) - 1.0 / 12.0).abs() < 1e-12);
        // u'(0.25) = (5/12 - 1/4) / 1.
        assert!((oracle.eval_deriv(0.25) - (5.0 / 12.0 - 0.25)).abs() < 1e-12);
    }

    #[test]
    fn fem_matches_oracle_at_nodes_for_aligned_piecewise_constant() {
        let coeff = two_piece_coeff();
        let p = Partition1D::from_breakpoints(vec![0.5]).unwrap();
        let mesh = adaptive_mesh_1d(&p, 0.25).unwrap();
        let sol = assemble_solve_1d(&coeff, &|_| 1.0, &mesh).unwrap();
        let oracle = oracle_solve_1d(&coeff, unit_source(), 64).unwrap();
        for (i, &x) in mesh.nodes().iter().enumerate() {
            assert!((sol.nodal[i] - oracle.eval(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn prolong_and_h1_basics() {
        let grid = ref_grid_1d();
        // Linear functions are reproduced exactly.
        let mesh = uniform_mesh_1d(0.25);
        let lin = Solution1D {
            mesh: mesh.clone(),
            nodal: mesh.nodes().iter().map(|&x| 2.0 * x).collect(),
        };
        let vals = prolong_1d(&lin, &grid);
        for (v, &x) in vals.iter().zip(&grid) {
            assert!((v - 2.0 * x).abs() < 1e-14);
        }
        // Hat with peak between grid points.
        let hat = Solution1D {
            mesh: Mesh1D::from_nodes(vec![0.0, 0.33335, 1.0], false),
            nodal: vec![0.0, 1.0, 0.0],
        };
        let x = 0.2;
        assert!((hat.eval(x) - x / 0.33335).abs() < 1e-14);

        // H1 norm of x on [0,1] is sqrt(1/3 + 1).
        let fx: Vec<f64> = grid.clone();
        let zero = vec![0.0; grid.len()];
        let d = h1_dist(&fx, &zero, &grid);
        assert!((d - (1.0f64 / 3.0 + 1.0).sqrt()).abs() < 1e-3);
        assert_eq!(h1_dist(&fx, &zero, &grid), h1_dist(&zero, &fx, &grid));
        assert_eq!(h1_dist(&fx, &fx, &grid), 0.0);
    }

    #[test]
    fn quadrature_switch_is_insignificant() {
        let coeff = bm_uniform_sample(11, 64);
        let f = |_x: f64| 1.0;
        let p = match &coeff.jumps {
            PartitionWithJumps::One { partition, .. } => partition.clone(),
            _ => unreachable!(),
        };
        let mesh = adaptive_mesh_1d(&p, 0.02).unwrap();
        let mid = assemble_solve_1d_quad(&coeff, &f, &mesh, Quadrature1d::Midpoint).unwrap();
        let gl = assemble_solve_1d_quad(&coeff, &f, &mesh, Quadrature1d::GaussLegendre5).unwrap();
        let grid = ref_grid_1d();
        let mid_vals = prolong_1d(&mid, &grid);
        let d = h1_dist(&mid_vals, &prolong_1d(&gl, &grid), &grid);
        let norm = h1_dist(&mid_vals, &vec![0.0; grid.len()], &grid);
        assert!(d < 0.05 * norm, "quadrature switch moved the solution by {d} (norm {norm})");
    }

    #[test]
    fn pathwise_adaptive_rate_and_uniform_degradation() {
        let f = |_x: f64| 1.0;
        let samples = 20;
        let mut adaptive_slopes = Vec::new();
        let mut uniform_slopes = Vec::new();
        for i in 0..samples {
            let coeff = bm_uniform_sample(100 + i, 16);
            let p = match &coeff.jumps {
                PartitionWithJumps::One { partition, .. } => partition.clone(),
                _ => unreachable!(),
            };
            let oracle = oracle_solve_1d(&coeff, unit_source(), 1024).unwrap();
            let fit = |meshes: Vec<Mesh1D>| -> f64 {
                let pts: Vec<(f64, f64)> = meshes
                    .iter()
                    .map(|m| {
                        let sol = assemble_solve_1d(&coeff, &f, m).unwrap();
                        let err = h1_error_vs_oracle(&sol, &oracle);
                        (m.realized_h().ln(), err.max(1e-300).ln())
                    })
                    .collect();
                // Least-squares slope of log err vs log h.
                let n = pts.len() as f64;
                let sx: f64 = pts.iter().map(|p| p.0).sum();
                let sy: f64 = pts.iter().map(|p| p.1).sum();
                let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
                let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
                (n * sxy - sx * sy) / (n * sxx - sx * sx)
            };
            let adaptive: Vec<Mesh1D> = (4..=8)
                .map(|l| adaptive_mesh_1d(&p, 0.5f64.powi(l + 1)).unwrap())
                .collect();
            let uniform: Vec<Mesh1D> = (4..=8).map(|l| uniform_mesh_1d_level(l)).collect();
            adaptive_slopes.push(fit(adaptive));
            uniform_slopes.push(fit(uniform));
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        for (i, &s) in adaptive_slopes.iter().enumerate() {
            assert!(s >= 0.9, "sample {i}: adaptive slope {s} < 0.9");
        }
        assert!(
            mean(&uniform_slopes) <= mean(&adaptive_slopes),
            "uniform slopes {:?} should not beat adaptive {:?}",
            mean(&uniform_slopes),
            mean(&adaptive_slopes)
        );
    }
}
