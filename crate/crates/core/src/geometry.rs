//! Structured coarse/fine grids on the unit square, DOF numbering and
//! oversampling patches.
//!
//! Vertices are numbered row by row, `(i, j) ↦ j (nf + 1) + i`. Fine square
//! `s = j nf + i` is split along its lower-left → upper-right diagonal into
//! triangle `2s = (v00, v10, v11)` and triangle `2s + 1 = (v00, v11, v01)`.
//! Local edge `k` of a triangle joins its vertices `k` and `k + 1`. Global
//! edges are oriented from the lower to the higher vertex index; their normal
//! is the +90° rotation of that direction.

use crate::error::{Error, Result};
use crate::fem::BcSpec;

/// Side of the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundarySide {
    Bottom,
    Right,
    Top,
    Left,
}

impl BoundarySide {
    pub const ALL: [BoundarySide; 4] = [
        BoundarySide::Bottom,
        BoundarySide::Right,
        BoundarySide::Top,
        BoundarySide::Left,
    ];
}

/// Edge of the fine triangulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Endpoints, `vertices[0] < vertices[1]`.
    pub vertices: [usize; 2],
    /// Incident triangles in ascending order; `None` in the second slot for
    /// boundary edges.
    pub triangles: [Option<usize>; 2],
    pub boundary: Option<BoundarySide>,
}

/// Coarse quadrilateral grid with its fine triangulation.
#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    nc: usize,
    nf: usize,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    tri_edges: Vec<[usize; 3]>,
    edges: Vec<Edge>,
}

/// Whether local edge `k` of a triangle of the given type runs along the
/// global orientation.
const ORIENT: [[bool; 3]; 2] = [[true, true, false], [true, false, false]];

/// Builds the coarse grid with `nc × nc` cells and its `nf × nf` fine grid.
pub fn build_mesh(nc: usize, nf: usize) -> Result<MeshHierarchy> {
    if nc < 2 {
        return Err(Error::InvalidInput(format!("nc must be at least 2, got {nc}")));
    }
    if nf < nc || nf % nc != 0 {
        return Err(Error::InvalidInput(format!(
            "nf = {nf} must be a multiple of nc = {nc}"
        )));
    }
    let h = 1.0 / nf as f64;
    let nv1 = nf + 1;
    let vertices: Vec<[f64; 2]> = (0..nv1 * nv1)
        .map(|v| [(v % nv1) as f64 * h, (v / nv1) as f64 * h])
        .collect();

    let mut triangles = Vec::with_capacity(2 * nf * nf);
    for j in 0..nf {
        for i in 0..nf {
            let v00 = j * nv1 + i;
            let (v10, v01, v11) = (v00 + 1, v00 + nv1, v00 + nv1 + 1);
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }

    let mut keyed: Vec<((usize, usize), usize)> = Vec::with_capacity(3 * triangles.len());
    for (t, tri) in triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            keyed.push(((a.min(b), a.max(b)), t));
        }
    }
    keyed.sort_unstable();

    let mut edges: Vec<Edge> = Vec::with_capacity(2 * nf * (nf + 1) + nf * nf);
    let mut edge_of: Vec<(usize, usize, usize)> = Vec::with_capacity(keyed.len());
    for &((lo, hi), t) in &keyed {
        match edges.last_mut() {
            Some(e) if e.vertices == [lo, hi] => e.triangles[1] = Some(t),
            _ => edges.push(Edge {
                vertices: [lo, hi],
                triangles: [Some(t), None],
                boundary: None,
            }),
        }
        edge_of.push((lo, hi, edges.len() - 1));
    }
    for e in &mut edges {
        if e.triangles[1].is_none() {
            e.boundary = side_of(&vertices[e.vertices[0]], &vertices[e.vertices[1]]);
        }
    }

    let find = |a: usize, b: usize| -> usize {
        let key = (a.min(b), a.max(b));
        let k = edge_of
            .binary_search_by(|&(lo, hi, _)| (lo, hi).cmp(&key))
            .expect("edge present");
        edge_of[k].2
    };
    let tri_edges = triangles
        .iter()
        .map(|tri| [find(tri[0], tri[1]), find(tri[1], tri[2]), find(tri[2], tri[0])])
        .collect();

    Ok(MeshHierarchy {
        nc,
        nf,
        vertices,
        triangles,
        tri_edges,
        edges,
    })
}

fn side_of(a: &[f64; 2], b: &[f64; 2]) -> Option<BoundarySide> {
    let on = |x: f64, c: f64| (x - c).abs() < 1e-12;
    if on(a[1], 0.0) && on(b[1], 0.0) {
        Some(BoundarySide::Bottom)
    } else if on(a[0], 1.0) && on(b[0], 1.0) {
        Some(BoundarySide::Right)
    } else if on(a[1], 1.0) && on(b[1], 1.0) {
        Some(BoundarySide::Top)
    } else if on(a[0], 0.0) && on(b[0], 0.0) {
        Some(BoundarySide::Left)
    } else {
        None
    }
}

impl MeshHierarchy {
    pub fn nc(&self) -> usize {
        self.nc
    }

    pub fn nf(&self) -> usize {
        self.nf
    }

    /// Coarse mesh size `H`.
    pub fn coarse_h(&self) -> f64 {
        1.0 / self.nc as f64
    }

    /// Fine mesh size `h`.
    pub fn fine_h(&self) -> f64 {
        1.0 / self.nf as f64
    }

    /// Fine squares per coarse cell side.
    pub fn ratio(&self) -> usize {
        self.nf / self.nc
    }

    pub fn n_cells(&self) -> usize {
        self.nc * self.nc
    }

    pub fn n_squares(&self) -> usize {
        self.nf * self.nf
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex(&self, v: usize) -> [f64; 2] {
        self.vertices[v]
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    /// Global edges of triangle `t`, local edge `k` joining vertices `k`, `k+1`.
    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.tri_edges[t]
    }

    /// Whether each local edge of `t` runs along its global orientation.
    pub fn triangle_orientation(&self, t: usize) -> [bool; 3] {
        ORIENT[t % 2]
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn square_of_triangle(&self, t: usize) -> usize {
        t / 2
    }

    /// `(i, j)` position of a fine square.
    pub fn square_ij(&self, s: usize) -> (usize, usize) {
        (s % self.nf, s / self.nf)
    }

    /// `(i, j)` position of a coarse cell.
    pub fn cell_ij(&self, c: usize) -> (usize, usize) {
        (c % self.nc, c / self.nc)
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        j * self.nc + i
    }

    pub fn cell_of_square(&self, s: usize) -> usize {
        let (i, j) = self.square_ij(s);
        let r = self.ratio();
        self.cell_index(i / r, j / r)
    }

    pub fn cell_of_triangle(&self, t: usize) -> usize {
        self.cell_of_square(self.square_of_triangle(t))
    }

    /// Fine squares of coarse cell `c` in ascending order.
    pub fn squares_of_cell(&self, c: usize) -> Vec<usize> {
        let (ci, cj) = self.cell_ij(c);
        let r = self.ratio();
        let mut out = Vec::with_capacity(r * r);
        for j in cj * r..(cj + 1) * r {
            for i in ci * r..(ci + 1) * r {
                out.push(j * self.nf + i);
            }
        }
        out
    }

    /// Triangles of coarse cell `c` in ascending order.
    pub fn triangles_of_cell(&self, c: usize) -> Vec<usize> {
        self.squares_of_cell(c)
            .into_iter()
            .flat_map(|s| [2 * s, 2 * s + 1])
            .collect()
    }

    /// Triangle area, identical for all triangles.
    pub fn triangle_area(&self) -> f64 {
        0.5 * self.fine_h() * self.fine_h()
    }

    pub fn dofs(&self) -> DofLayout {
        DofLayout {
            n_edges: self.n_edges(),
            n_triangles: self.n_triangles(),
        }
    }
}

/// Global numbering of stress and displacement unknowns.
///
/// Stress: 4 per edge (`4e + 2·comp + moment`, traction component `comp`,
/// `moment` 0 for the mean and 1 for the first moment) followed by 3 per
/// triangle (`4·#edges + 3t + c`, cell means of σ₁₁, σ₁₂, σ₂₂).
/// Displacement: `6t + 2·vertex + comp`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofLayout {
    n_edges: usize,
    n_triangles: usize,
}

impl DofLayout {
    pub fn n_sigma(&self) -> usize {
        4 * self.n_edges + 3 * self.n_triangles
    }

    pub fn n_u(&self) -> usize {
        6 * self.n_triangles
    }

    pub fn edge_dof(&self, e: usize, comp: usize, moment: usize) -> usize {
        4 * e + 2 * comp + moment
    }

    pub fn cell_dof(&self, t: usize, c: usize) -> usize {
        4 * self.n_edges + 3 * t + c
    }

    pub fn u_dof(&self, t: usize, vertex: usize, comp: usize) -> usize {
        6 * t + 2 * vertex + comp
    }

    /// The 15 stress DOFs of triangle `t` in element order: 4 per local edge,
    /// then the 3 cell means.
    pub fn triangle_sigma_dofs(&self, mesh: &MeshHierarchy, t: usize) -> [usize; 15] {
        let mut out = [0; 15];
        for (k, &e) in mesh.triangle_edges(t).iter().enumerate() {
            for m in 0..4 {
                out[4 * k + m] = 4 * e + m;
            }
        }
        for c in 0..3 {
            out[12 + c] = self.cell_dof(t, c);
        }
        out
    }

    /// Edge DOFs on one side of the square, ascending.
    pub fn boundary_sigma_dofs(&self, mesh: &MeshHierarchy, side: BoundarySide) -> Vec<usize> {
        mesh.edges()
            .iter()
            .enumerate()
            .filter(|(_, e)| e.boundary == Some(side))
            .flat_map(|(k, _)| 4 * k..4 * k + 4)
            .collect()
    }
}

/// Coarse cell `center` enlarged by `layers` coarse layers.
#[derive(Debug, Clone)]
pub struct PatchRegion {
    pub center: usize,
    pub layers: usize,
    /// Member coarse cells, ascending.
    pub cells: Vec<usize>,
    /// Member triangles, ascending.
    pub triangles: Vec<usize>,
    /// Edges of member triangles, ascending.
    pub edges: Vec<usize>,
    /// Edges with exactly one incident member triangle, ascending.
    pub boundary_edges: Vec<usize>,
    /// Local → global stress DOF map, ascending.
    pub sigma_dofs: Vec<usize>,
    /// Local → global displacement DOF map, ascending.
    pub u_dofs: Vec<usize>,
}

impl PatchRegion {
    pub fn local_sigma(&self, global: usize) -> Option<usize> {
        self.sigma_dofs.binary_search(&global).ok()
    }

    pub fn local_u(&self, global: usize) -> Option<usize> {
        self.u_dofs.binary_search(&global).ok()
    }

    pub fn contains_cell(&self, c: usize) -> bool {
        self.cells.binary_search(&c).is_ok()
    }

    pub fn contains_triangle(&self, t: usize) -> bool {
        self.triangles.binary_search(&t).is_ok()
    }
}

/// Cells within Chebyshev distance `layers` of `center`, clipped to the grid.
pub fn oversample(mesh: &MeshHierarchy, center: usize, layers: usize) -> PatchRegion {
    let nc = mesh.nc();
    let (ci, cj) = mesh.cell_ij(center);
    let (i0, i1) = (ci.saturating_sub(layers), (ci + layers).min(nc - 1));
    let (j0, j1) = (cj.saturating_sub(layers), (cj + layers).min(nc - 1));
    let mut cells = Vec::new();
    for j in j0..=j1 {
        for i in i0..=i1 {
            cells.push(mesh.cell_index(i, j));
        }
    }
    let mut triangles: Vec<usize> = cells
        .iter()
        .flat_map(|&c| mesh.triangles_of_cell(c))
        .collect();
    triangles.sort_unstable();

    let mut edge_hits: Vec<usize> = triangles
        .iter()
        .flat_map(|&t| mesh.triangle_edges(t))
        .collect();
    edge_hits.sort_unstable();
    let mut edges = Vec::new();
    let mut boundary_edges = Vec::new();
    let mut k = 0;
    while k < edge_hits.len() {
        let e = edge_hits[k];
        let mut n = 0;
        while k < edge_hits.len() && edge_hits[k] == e {
            n += 1;
            k += 1;
        }
        edges.push(e);
        if n == 1 {
            boundary_edges.push(e);
        }
    }

    let dofs = mesh.dofs();
    let mut sigma_dofs: Vec<usize> = edges.iter().flat_map(|&e| 4 * e..4 * e + 4).collect();
    sigma_dofs.extend(triangles.iter().flat_map(|&t| (0..3).map(move |c| dofs.cell_dof(t, c))));
    let u_dofs = triangles.iter().flat_map(|&t| 6 * t..6 * t + 6).collect();

    PatchRegion {
        center,
        layers,
        cells,
        triangles,
        edges,
        boundary_edges,
        sigma_dofs,
        u_dofs,
    }
}

/// Stress DOFs of `patch` that the local space fixes to zero: all DOFs of
/// patch-boundary edges lying inside the domain or on the traction part of
/// the boundary. Edges on the displacement part stay free. Ascending.
pub fn patch_boundary_stress_dofs(
    mesh: &MeshHierarchy,
    patch: &PatchRegion,
    bc: &BcSpec,
) -> Vec<usize> {
    patch
        .boundary_edges
        .iter()
        .filter(|&&e| match mesh.edge(e).boundary {
            None => true,
            Some(side) => bc.is_traction_side(side),
        })
        .flat_map(|&e| 4 * e..4 * e + 4)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::BcKind;

    #[test]
    fn counts_2_2() {
        let m = build_mesh(2, 2).unwrap();
        assert_eq!(m.n_triangles(), 8);
        assert_eq!(m.n_edges(), 16);
        assert_eq!(m.dofs().n_sigma(), 88);
        assert_eq!(m.dofs().n_u(), 48);
    }

    #[test]
    fn counts_2_4() {
        let m = build_mesh(2, 4).unwrap();
        assert_eq!(m.n_triangles(), 32);
        assert_eq!(m.n_edges(), 56);
    }

    #[test]
    fn counts_16_128() {
        let m = build_mesh(16, 128).unwrap();
        assert_eq!(m.n_triangles(), 32768);
        assert_eq!(m.n_edges(), 2 * 128 * 129 + 128 * 128);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(build_mesh(3, 8).is_err());
        assert!(build_mesh(1, 4).is_err());
        assert!(build_mesh(4, 2).is_err());
        assert!(build_mesh(3, 9).is_ok());
    }

    #[test]
    fn orientation_table_matches_vertices() {
        let m = build_mesh(2, 6).unwrap();
        for t in 0..m.n_triangles() {
            let tri = m.triangle(t);
            let o = m.triangle_orientation(t);
            for k in 0..3 {
                assert_eq!(o[k], tri[k] < tri[(k + 1) % 3]);
                let e = m.edge(m.triangle_edges(t)[k]);
                assert!(e.triangles.contains(&Some(t)));
            }
        }
    }

    #[test]
    fn oversample_examples() {
        let m = build_mesh(8, 8).unwrap();
        let c = m.cell_index(3, 4);
        assert_eq!(oversample(&m, c, 1).cells.len(), 9);
        assert_eq!(oversample(&m, 0, 1).cells.len(), 4);
        assert_eq!(oversample(&m, c, 8).cells.len(), 64);
    }

    #[test]
    fn boundary_constraints_by_bc() {
        let m = build_mesh(4, 8).unwrap();
        let whole = oversample(&m, 0, 4);
        let all_bdry: usize = m.edges().iter().filter(|e| e.boundary.is_some()).count();
        let neu = patch_boundary_stress_dofs(&m, &whole, &BcSpec::new(BcKind::Neumann));
        assert_eq!(neu.len(), 4 * all_bdry);
        let dir = patch_boundary_stress_dofs(&m, &whole, &BcSpec::new(BcKind::Dirichlet));
        assert!(dir.is_empty());

        // Interior-row cell on the left face: left edges free, others fixed.
        let p = oversample(&m, m.cell_index(0, 2), 1);
        let fixed = patch_boundary_stress_dofs(&m, &p, &BcSpec::new(BcKind::Mixed));
        for &e in &p.boundary_edges {
            let constrained = fixed.contains(&(4 * e));
            let on_left = m.edge(e).boundary == Some(BoundarySide::Left);
            assert_eq!(constrained, !on_left);
        }
    }
}
