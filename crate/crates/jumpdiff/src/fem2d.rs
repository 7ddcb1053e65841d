//! Two-dimensional P1 finite elements on the line-partitioned unit square:
//! interface-fitted triangulations, structured uniform meshes, assembly with
//! mixed Dirichlet/Neumann boundary conditions, a Jacobi-preconditioned
//! conjugate gradient solve, and prolongation onto the 400x400 reference grid.

use std::collections::HashMap;
use std::sync::Arc;

use crate::coefficient::CoefficientSample;
use crate::jumps::LinePartition2D;
use crate::{Error, Result};

/// Points per side of the 2D reference grid (400x400 total).
pub const REF_POINTS_2D: usize = 400;

/// Element quadrature for 2D assembly. Centroid is the default; the 3-point
/// edge-midpoint switch exists to confirm quadrature insensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature2d {
    Centroid,
    EdgeMidpoint3,
}

/// Tag of one boundary edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    Dirichlet,
    Neumann,
}

/// Boundary data: a geometric tagging rule plus the Dirichlet trace and the
/// Neumann flux. Every boundary edge is tagged from its midpoint.
#[derive(Clone)]
pub struct MixedBC {
    tag: Arc<dyn Fn([f64; 2]) -> BoundaryTag + Send + Sync>,
    dirichlet: Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>,
    neumann: Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for MixedBC {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MixedBC(..)")
    }
}

impl MixedBC {
    /// `u = 0` on the whole boundary.
    pub fn homogeneous_dirichlet() -> Self {
        Self::dirichlet(Arc::new(|_| 0.0))
    }

    /// `u = g` on the whole boundary.
    pub fn dirichlet(g: Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>) -> Self {
        Self {
            tag: Arc::new(|_| BoundaryTag::Dirichlet),
            dirichlet: g,
            neumann: Arc::new(|_| 0.0),
        }
    }

    /// The heterogeneous-media preset: `u = 0.1` on `{0}x[0,1]`, `u = 0.3` on
    /// `{1}x[0,1]`, zero flux on the top and bottom edges. Edges are Dirichlet
    /// exactly when their midpoint has `|x1| < 1e-12` or `|x1 - 1| < 1e-12`.
    pub fn mixed_preset() -> Self {
        Self {
            tag: Arc::new(|m| {
                if m[0].abs() < 1e-12 || (m[0] - 1.0).abs() < 1e-12 {
                    BoundaryTag::Dirichlet
                } else {
                    BoundaryTag::Neumann
                }
            }),
            dirichlet: Arc::new(|p| 0.1 + 0.2 * p[0]),
            neumann: Arc::new(|_| 0.0),
        }
    }

    pub fn tag(&self, midpoint: [f64; 2]) -> BoundaryTag {
        (self.tag)(midpoint)
    }

    pub fn dirichlet_value(&self, p: [f64; 2]) -> f64 {
        (self.dirichlet)(p)
    }

    pub fn neumann_flux(&self, p: [f64; 2]) -> f64 {
        (self.neumann)(p)
    }
}

/// Conforming triangle mesh of the unit square.
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    /// Partition cell containing each triangle (all zero on uniform meshes).
    cell_of_tri: Vec<usize>,
    /// Edges used by exactly one triangle.
    boundary_edges: Vec<[usize; 2]>,
    realized_h: f64,
    min_angle_deg: f64,
    interface_conforming: bool,
}

impl TriMesh {
    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Partition cell owning triangle `t` (meaningful on interface-fitted
    /// meshes, where quadrature must stay on the element's side of a chord).
    pub fn cell_of_tri(&self, t: usize) -> usize {
        self.cell_of_tri[t]
    }

    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary_edges
    }

    /// Maximum triangle diameter `h_hat`.
    pub fn realized_h(&self) -> f64 {
        self.realized_h
    }

    /// Minimum interior angle over all triangles, in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        self.min_angle_deg
    }

    pub fn interface_conforming(&self) -> bool {
        self.interface_conforming
    }

    /// Builds the edge census, checks conformity (no edge used by more than
    /// two triangles) and computes the quality summaries.
    fn finalize(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        cell_of_tri: Vec<usize>,
        interface_conforming: bool,
    ) -> Result<Self> {
        let mut edge_use: HashMap<[usize; 2], u32> = HashMap::new();
        for t in &triangles {
            for k in 0..3 {
                let e = undirected(t[k], t[(k + 1) % 3]);
                *edge_use.entry(e).or_insert(0) += 1;
            }
        }
        if let Some((e, n)) = edge_use.iter().find(|&(_, &n)| n > 2) {
            return Err(Error::MeshDegeneracy(format!(
                "edge {e:?} shared by {n} triangles"
            )));
        }
        let mut boundary_edges: Vec<[usize; 2]> =
            edge_use.iter().filter(|&(_, &n)| n == 1).map(|(&e, _)| e).collect();
        boundary_edges.sort_unstable();
        let mut realized_h = 0.0f64;
        let mut min_angle_deg = 180.0f64;
        for t in &triangles {
            let (p, q, r) = (vertices[t[0]], vertices[t[1]], vertices[t[2]]);
            realized_h = realized_h.max(triangle_diameter(p, q, r));
            min_angle_deg = min_angle_deg.min(triangle_min_angle_deg(p, q, r));
        }
        Ok(Self {
            vertices,
            triangles,
            cell_of_tri,
            boundary_edges,
            realized_h,
            min_angle_deg,
            interface_conforming,
        })
    }
}

fn undirected(a: usize, b: usize) -> [usize; 2] {
    if a < b { [a, b] } else { [b, a] }
}

fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

/// The diameter of a triangle is its longest edge.
pub fn triangle_diameter(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
    dist(p, q).max(dist(q, r)).max(dist(r, p))
}

/// Minimum interior angle in degrees (0 for degenerate triangles).
pub fn triangle_min_angle_deg(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
    let corners = [(p, q, r), (q, r, p), (r, p, q)];
    let mut min = 180.0f64;
    for (a, b, c) in corners {
        let u = [b[0] - a[0], b[1] - a[1]];
        let v = [c[0] - a[0], c[1] - a[1]];
        let (nu, nv) = ((u[0] * u[0] + u[1] * u[1]).sqrt(), (v[0] * v[0] + v[1] * v[1]).sqrt());
        if nu == 0.0 || nv == 0.0 {
            return 0.0;
        }
        let cos = ((u[0] * v[0] + u[1] * v[1]) / (nu * nv)).clamp(-1.0, 1.0);
        min = min.min(cos.acos().to_degrees());
    }
    min
}

fn signed_area2(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
    (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
}

/// Boundary line of the chord arrangement: `x = a + b y` for vertical lines
/// (walls have `b = 0`), `y = c + d x` for horizontal ones.
#[derive(Clone, Copy)]
struct ArrLine {
    offset: f64,
    slope: f64,
}

/// Intersection of vertical line `x = a + b y` with horizontal `y = c + d x`.
/// Chord slopes are bounded by 1 in magnitude, so the denominator is positive
/// and the crossing lies inside the closed square.
fn line_intersection(v: ArrLine, h: ArrLine) -> [f64; 2] {
    let y = (h.offset + h.slope * v.offset) / (1.0 - h.slope * v.slope);
    [v.offset + v.slope * y, y]
}

/// Interface-fitted triangulation: the chord arrangement's cells (convex
/// quadrilaterals indexed exactly as [`LinePartition2D::locate`]) are
/// fan-triangulated from their centroids — falling back to the better
/// diagonal split (the Delaunay choice for a quadrilateral) when a fan
/// triangle violates `theta_min_deg` — and the whole mesh is then uniformly
/// refined (edge-midpoint 1->4) until the realized mesh width is at most
/// `h_bar`. Shared cell corners are computed once from canonical chord
/// intersections, so the mesh is conforming by construction and every chord
/// is a union of mesh edges.
pub fn triangulate_conforming(
    partition: &LinePartition2D,
    h_bar: f64,
    theta_min_deg: f64,
) -> Result<TriMesh> {
    assert!(h_bar > 0.0, "mesh threshold must be positive");
    assert!(theta_min_deg > 0.0, "angle floor must be positive");
    let vert = partition.vertical_chords();
    let horiz = partition.horizontal_chords();
    let (nv, nh) = (vert.len(), horiz.len());
    // Boundary lines, walls first and last.
    let vlines: Vec<ArrLine> = std::iter::once(ArrLine { offset: 0.0, slope: 0.0 })
        .chain(vert.iter().map(|c| ArrLine { offset: c.start, slope: c.end - c.start }))
        .chain(std::iter::once(ArrLine { offset: 1.0, slope: 0.0 }))
        .collect();
    let hlines: Vec<ArrLine> = std::iter::once(ArrLine { offset: 0.0, slope: 0.0 })
        .chain(horiz.iter().map(|c| ArrLine { offset: c.start, slope: c.end - c.start }))
        .chain(std::iter::once(ArrLine { offset: 1.0, slope: 0.0 }))
        .collect();
    // Corner grid: one canonical vertex per line crossing.
    let mut vertices = Vec::with_capacity((nv + 2) * (nh + 2));
    for hl in &hlines {
        for vl in &vlines {
            vertices.push(line_intersection(*vl, *hl));
        }
    }
    let vid = |i: usize, j: usize| i + j * (nv + 2);

    let mut triangles = Vec::new();
    let mut cell_of_tri = Vec::new();
    for j in 0..=nh {
        for i in 0..=nv {
            let cell = i + j * (nv + 1);
            let quad = [vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)];
            let pts: Vec<[f64; 2]> = quad.iter().map(|&v| vertices[v]).collect();
            // Area centroid of the convex quadrilateral.
            let (mut cx, mut cy, mut twice) = (0.0, 0.0, 0.0);
            for k in 0..4 {
                let (p, q) = (pts[k], pts[(k + 1) % 4]);
                let cross = p[0] * q[1] - q[0] * p[1];
                twice += cross;
                cx += (p[0] + q[0]) * cross;
                cy += (p[1] + q[1]) * cross;
            }
            if twice <= 1e-14 {
                return Err(Error::MeshQuality(format!(
                    "cell {cell} (strip {i},{j}) is degenerate (doubled area {twice:e})"
                )));
            }
            let centroid = [cx / (3.0 * twice), cy / (3.0 * twice)];
            let fan_ok = (0..4).all(|k| {
                triangle_min_angle_deg(centroid, pts[k], pts[(k + 1) % 4]) >= theta_min_deg
            });
            if fan_ok {
                let c = vertices.len();
                vertices.push(centroid);
                for k in 0..4 {
                    triangles.push([c, quad[k], quad[(k + 1) % 4]]);
                    cell_of_tri.push(cell);
                }
            } else {
                // Ear-clipping a quadrilateral leaves one diagonal choice; the
                // Delaunay flip selects the diagonal maximizing the minimum
                // angle. Keep the better of the two splits.
                let split_a = [[quad[0], quad[1], quad[2]], [quad[0], quad[2], quad[3]]];
                let split_b = [[quad[0], quad[1], quad[3]], [quad[1], quad[2], quad[3]]];
                let quality = |s: &[[usize; 3]; 2]| {
                    s.iter()
                        .map(|t| {
                            triangle_min_angle_deg(
                                vertices[t[0]],
                                vertices[t[1]],
                                vertices[t[2]],
                            )
                        })
                        .fold(f64::INFINITY, f64::min)
                };
                let (qa, qb) = (quality(&split_a), quality(&split_b));
                let (best, q) = if qa >= qb { (split_a, qa) } else { (split_b, qb) };
                if q < theta_min_deg {
                    return Err(Error::MeshQuality(format!(
                        "cell {cell} (strip {i},{j}): minimum angle {q:.3} deg below the {theta_min_deg} deg floor"
                    )));
                }
                for t in best {
                    triangles.push(t);
                    cell_of_tri.push(cell);
                }
            }
        }
    }

    // Global uniform refinement until the realized width meets the threshold.
    // Refining everything keeps shared edges matched (no hanging nodes) and
    // 1->4 midpoint subdivision preserves all angles.
    loop {
        let h = triangles
            .iter()
            .map(|t| triangle_diameter(vertices[t[0]], vertices[t[1]], vertices[t[2]]))
            .fold(0.0f64, f64::max);
        if h <= h_bar {
            break;
        }
        refine_uniform(&mut vertices, &mut triangles, &mut cell_of_tri);
    }
    TriMesh::finalize(vertices, triangles, cell_of_tri, true)
}

/// One global 1->4 refinement sweep; edge midpoints are shared through a map
/// keyed on the undirected edge, so conformity is preserved exactly.
fn refine_uniform(
    vertices: &mut Vec<[f64; 2]>,
    triangles: &mut Vec<[usize; 3]>,
    cell_of_tri: &mut Vec<usize>,
) {
    let mut midpoint: HashMap<[usize; 2], usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<[f64; 2]>| -> usize {
        *midpoint.entry(undirected(a, b)).or_insert_with(|| {
            let (p, q) = (vertices[a], vertices[b]);
            vertices.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
            vertices.len() - 1
        })
    };
    let mut new_tris = Vec::with_capacity(4 * triangles.len());
    let mut new_cells = Vec::with_capacity(4 * triangles.len());
    for (t, &[a, b, c]) in triangles.iter().enumerate() {
        let (ab, bc, ca) = (mid(a, b, vertices), mid(b, c, vertices), mid(c, a, vertices));
        for tri in [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]] {
            new_tris.push(tri);
            new_cells.push(cell_of_tri[t]);
        }
    }
    *triangles = new_tris;
    *cell_of_tri = new_cells;
}

/// Structured criss-cross mesh: `n = ceil(sqrt(2)/h)` squares per side, each
/// split along its main diagonal into two right isoceles triangles, so the
/// realized width (the diagonal `sqrt(2)/n`) is at most `h`.
pub fn uniform_tri_mesh(h: f64) -> TriMesh {
    assert!(h > 0.0, "mesh width must be positive");
    let n = (std::f64::consts::SQRT_2 / h).ceil() as usize;
    let vid = |i: usize, j: usize| i + j * (n + 1);
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            triangles.push([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)]);
            triangles.push([vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)]);
        }
    }
    let cell_of_tri = vec![0; triangles.len()];
    TriMesh::finalize(vertices, triangles, cell_of_tri, false)
        .expect("structured mesh is conforming")
}

/// Uniform mesh at level `l`: threshold `h_l = (2/5) 2^{-l}`.
pub fn uniform_tri_mesh_level(level: u32) -> TriMesh {
    uniform_tri_mesh(0.4 * 0.5f64.powi(level as i32))
}

/// P1 Galerkin solution: one value per mesh vertex.
#[derive(Debug, Clone)]
pub struct Solution2D {
    pub mesh: Arc<TriMesh>,
    pub nodal: Vec<f64>,
}

/// Assembles and solves `-div(a grad u) = f` with the given boundary data,
/// using centroid quadrature.
pub fn assemble_solve_2d(
    coeff: &CoefficientSample,
    f: &dyn Fn(f64, f64) -> f64,
    mesh: &Arc<TriMesh>,
    bc: &MixedBC,
) -> Result<Solution2D> {
    assemble_solve_2d_quad(coeff, f, mesh, bc, Quadrature2d::Centroid)
}

/// [`assemble_solve_2d`] with an explicit quadrature rule.
pub fn assemble_solve_2d_quad(
    coeff: &CoefficientSample,
    f: &dyn Fn(f64, f64) -> f64,
    mesh: &Arc<TriMesh>,
    bc: &MixedBC,
    quad: Quadrature2d,
) -> Result<Solution2D> {
    let verts = mesh.vertices();
    let n = verts.len();

    // Dirichlet constraints from tagged boundary edges.
    let mut dirichlet: Vec<Option<f64>> = vec![None; n];
    let mut neumann_edges = Vec::new();
    for &[a, b] in mesh.boundary_edges() {
        let (p, q) = (verts[a], verts[b]);
        let m = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
        match bc.tag(m) {
            BoundaryTag::Dirichlet => {
                dirichlet[a] = Some(bc.dirichlet_value(p));
                dirichlet[b] = Some(bc.dirichlet_value(q));
            }
            BoundaryTag::Neumann => neumann_edges.push([a, b]),
        }
    }

    // Coefficient lookup, pinned to the owning cell on interface-fitted
    // meshes so quadrature points on a chord land on the element's side.
    let a_at = |x: f64, y: f64, tri: usize| -> Result<f64> {
        if mesh.interface_conforming() {
            Ok(coeff.eval_2d_in_cell(x, y, mesh.cell_of_tri(tri)))
        } else {
            coeff.eval_2d(x.clamp(0.0, 1.0), y.clamp(0.0, 1.0))
        }
    };

    let mut load = vec![0.0; n];
    let mut triplets: Vec<(u32, u32, f64)> = Vec::with_capacity(9 * mesh.triangles().len());
    for (t, &[i0, i1, i2]) in mesh.triangles().iter().enumerate() {
        let (p, q, r) = (verts[i0], verts[i1], verts[i2]);
        let area2 = signed_area2(p, q, r);
        if area2.abs() < 1e-30 {
            return Err(Error::Assembly(format!("triangle {t} is degenerate")));
        }
        let area = 0.5 * area2.abs();
        // Constant P1 gradients: grad phi_k = (b_k, c_k).
        let s = 1.0 / area2;
        let grads = [
            [(q[1] - r[1]) * s, (r[0] - q[0]) * s],
            [(r[1] - p[1]) * s, (p[0] - r[0]) * s],
            [(p[1] - q[1]) * s, (q[0] - p[0]) * s],
        ];
        let idx = [i0, i1, i2];
        let (a_eff, elem_load) = match quad {
            Quadrature2d::Centroid => {
                let c = [(p[0] + q[0] + r[0]) / 3.0, (p[1] + q[1] + r[1]) / 3.0];
                let a = a_at(c[0], c[1], t)?;
                let fl = f(c[0], c[1]) * area / 3.0;
                (a, [fl, fl, fl])
            }
            Quadrature2d::EdgeMidpoint3 => {
                // Quadrature points at edge midpoints, each of weight area/3;
                // phi_k is 1/2 on its two adjacent edge midpoints.
                let mids = [
                    [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])],
                    [0.5 * (q[0] + r[0]), 0.5 * (q[1] + r[1])],
                    [0.5 * (r[0] + p[0]), 0.5 * (r[1] + p[1])],
                ];
                let mut a = 0.0;
                let mut fl = [0.0; 3];
                for (e, m) in mids.iter().enumerate() {
                    a += a_at(m[0], m[1], t)? / 3.0;
                    let fv = f(m[0], m[1]) * area / 3.0;
                    fl[e] += 0.5 * fv;
                    fl[(e + 1) % 3] += 0.5 * fv;
                }
                (a, fl)
            }
        };
        if a_eff <= 0.0 {
            return Err(Error::Assembly(format!(
                "non-positive coefficient {a_eff} on triangle {t}"
            )));
        }
        for k in 0..3 {
            load[idx[k]] += elem_load[k];
            for l in 0..3 {
                let v = a_eff * area * (grads[k][0] * grads[l][0] + grads[k][1] * grads[l][1]);
                triplets.push((idx[k] as u32, idx[l] as u32, v));
            }
        }
    }

    // Neumann edge loads: g(midpoint) * |edge| / 2 per endpoint.
    for [a, b] in neumann_edges {
        let (p, q) = (verts[a], verts[b]);
        let m = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
        let half = 0.5 * bc.neumann_flux(m) * dist(p, q);
        load[a] += half;
        load[b] += half;
    }

    // Dirichlet elimination: keep free rows/columns, move known values to the
    // right-hand side.
    let mut reduced_index = vec![usize::MAX; n];
    let mut free = Vec::new();
    for v in 0..n {
        if dirichlet[v].is_none() {
            reduced_index[v] = free.len();
            free.push(v);
        }
    }
    let m = free.len();
    let mut rhs: Vec<f64> = free.iter().map(|&v| load[v]).collect();
    let mut reduced: Vec<(u32, u32, f64)> = Vec::with_capacity(triplets.len());
    for (i, j, v) in triplets {
        let (i, j) = (i as usize, j as usize);
        match (dirichlet[i], dirichlet[j]) {
            (None, None) => reduced.push((reduced_index[i] as u32, reduced_index[j] as u32, v)),
            (None, Some(g)) => rhs[reduced_index[i]] -= v * g,
            _ => {}
        }
    }
    let matrix = Csr::from_triplets(m, reduced);
    if let Some(k) = (0..m).find(|&k| matrix.diagonal(k) <= 0.0) {
        return Err(Error::Assembly(format!(
            "non-positive stiffness diagonal at free vertex {}",
            free[k]
        )));
    }
    let x = cg_jacobi(&matrix, &rhs, 1e-10, 20 * m.max(1))?;

    let mut nodal = vec![0.0; n];
    for v in 0..n {
        nodal[v] = match dirichlet[v] {
            Some(g) => g,
            None => x[reduced_index[v]],
        };
    }
    Ok(Solution2D { mesh: Arc::clone(mesh), nodal })
}

/// Compressed sparse rows, built from possibly duplicated triplets.
struct Csr {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl Csr {
    fn from_triplets(n: usize, mut triplets: Vec<(u32, u32, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut counts = vec![0usize; n];
        let mut cols = Vec::new();
        let mut vals: Vec<f64> = Vec::new();
        let mut last = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                counts[i as usize] += 1;
                last = Some((i, j));
            }
        }
        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            row_ptr[i + 1] = row_ptr[i] + counts[i];
        }
        Self { row_ptr, cols, vals }
    }

    fn diagonal(&self, i: usize) -> f64 {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[lo..hi]
            .iter()
            .position(|&c| c as usize == i)
            .map_or(0.0, |k| self.vals[lo + k])
    }

    fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..y.len() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            y[i] = acc;
        }
    }
}

/// Jacobi-preconditioned conjugate gradient to relative residual `tol`.
fn cg_jacobi(a: &Csr, b: &[f64], tol: f64, max_iters: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let inv_diag: Vec<f64> = (0..n).map(|i| 1.0 / a.diagonal(i)).collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, d)| ri * d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for _ in 0..max_iters {
        a.matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::Solver(format!(
                "CG direction with non-positive curvature {pap:e} (matrix not SPD?)"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r_norm <= tol * b_norm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (dmin, dmax) = inv_diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| {
        (lo.min(1.0 / d), hi.max(1.0 / d))
    });
    Err(Error::Solver(format!(
        "CG stalled at relative residual {:e} after {max_iters} iterations (n = {n}, stiffness diagonal in [{dmin:e}, {dmax:e}])",
        r_norm / b_norm
    )))
}

/// Bucket-grid point locator over a triangle mesh.
pub struct TriLocator {
    nb: usize,
    buckets: Vec<Vec<u32>>,
}

impl TriLocator {
    pub fn new(mesh: &TriMesh) -> Self {
        let nb = ((mesh.triangles().len() as f64).sqrt() as usize).clamp(1, 512);
        let mut buckets = vec![Vec::new(); nb * nb];
        let clampb = |v: f64| ((v * nb as f64) as usize).min(nb - 1);
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let xs = tri.iter().map(|&v| mesh.vertices()[v][0]);
            let ys = tri.iter().map(|&v| mesh.vertices()[v][1]);
            let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(v), b.max(v))
            });
            let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(v), b.max(v))
            });
            for bj in clampb(y0)..=clampb(y1) {
                for bi in clampb(x0)..=clampb(x1) {
                    buckets[bi + bj * nb].push(t as u32);
                }
            }
        }
        Self { nb, buckets }
    }

    /// Triangle containing `p` and its barycentric coordinates, or `None` if
    /// the point is outside the mesh.
    pub fn locate(&self, mesh: &TriMesh, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let clampb = |v: f64| ((v * self.nb as f64) as usize).min(self.nb - 1);
        let bucket = &self.buckets[clampb(p[0]) + clampb(p[1]) * self.nb];
        for &t in bucket {
            if let Some(bary) = barycentric(mesh, t as usize, p, 1e-10) {
                return Some((t as usize, bary));
            }
        }
        // Roundoff near bucket borders: fall back to the neighbouring buckets.
        let (bi, bj) = (clampb(p[0]) as isize, clampb(p[1]) as isize);
        for dj in -1..=1isize {
            for di in -1..=1isize {
                let (i, j) = (bi + di, bj + dj);
                if (di == 0 && dj == 0) || i < 0 || j < 0 || i >= self.nb as isize || j >= self.nb as isize {
                    continue;
                }
                for &t in &self.buckets[i as usize + j as usize * self.nb] {
                    if let Some(bary) = barycentric(mesh, t as usize, p, 1e-10) {
                        return Some((t as usize, bary));
                    }
                }
            }
        }
        None
    }
}

/// Barycentric coordinates of `p` in triangle `t` if all are `>= -tol`.
pub fn barycentric(mesh: &TriMesh, t: usize, p: [f64; 2], tol: f64) -> Option<[f64; 3]> {
    let [a, b, c] = mesh.triangles()[t];
    let (pa, pb, pc) = (mesh.vertices()[a], mesh.vertices()[b], mesh.vertices()[c]);
    let area2 = signed_area2(pa, pb, pc);
    let l0 = signed_area2(p, pb, pc) / area2;
    let l1 = signed_area2(pa, p, pc) / area2;
    let l2 = 1.0 - l0 - l1;
    if l0 >= -tol && l1 >= -tol && l2 >= -tol {
        Some([l0, l1, l2])
    } else {
        None
    }
}

/// Coordinates of the 400-point-per-side reference grid.
pub fn ref_grid_2d() -> Vec<f64> {
    (0..REF_POINTS_2D).map(|k| k as f64 / (REF_POINTS_2D - 1) as f64).collect()
}

/// Prolongs a P1 solution onto the 400x400 reference grid (row-major, the
/// first coordinate fastest) by barycentric interpolation with bucket-grid
/// point location.
pub fn prolong_2d(sol: &Solution2D) -> Result<Vec<f64>> {
    let locator = TriLocator::new(&sol.mesh);
    let grid = ref_grid_2d();
    let mut out = Vec::with_capacity(REF_POINTS_2D * REF_POINTS_2D);
    for &y in &grid {
        for &x in &grid {
            let (t, bary) = locator
                .locate(&sol.mesh, [x, y])
                .ok_or_else(|| Error::OutsideDomain(vec![x, y]))?;
            let [a, b, c] = sol.mesh.triangles()[t];
            out.push(bary[0] * sol.nodal[a] + bary[1] * sol.nodal[b] + bary[2] * sol.nodal[c]);
        }
    }
    Ok(out)
}

/// Discrete H1 distance of two functions on the 400x400 grid: tensor
/// trapezoid rule for the L2 part, central differences (one-sided at the
/// borders) for the gradient part.
pub fn h1_dist_2d(f: &[f64], g: &[f64]) -> f64 {
    let n = REF_POINTS_2D;
    assert!(f.len() == n * n && g.len() == n * n);
    let h = 1.0 / (n - 1) as f64;
    let w = |k: usize| if k == 0 || k == n - 1 { 0.5 * h } else { h };
    let d = |i: usize, j: usize| f[i + j * n] - g[i + j * n];
    let mut acc = 0.0;
    for j in 0..n {
        for i in 0..n {
            let v = d(i, j);
            let dx = if i == 0 {
                (d(1, j) - d(0, j)) / h
            } else if i == n - 1 {
                (d(n - 1, j) - d(n - 2, j)) / h
            } else {
                (d(i + 1, j) - d(i - 1, j)) / (2.0 * h)
            };
            let dy = if j == 0 {
                (d(i, 1) - d(i, 0)) / h
            } else if j == n - 1 {
                (d(i, n - 1) - d(i, n - 2)) / h
            } else {
                (d(i, j + 1) - d(i, j - 1)) / (2.0 * h)
            };
            acc += w(i) * w(j) * (v * v + dx * dx + dy * dy);
        }
    }
    acc.sqrt()
}
