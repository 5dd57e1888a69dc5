//! Global numbering of the four discrete spaces.
//!
//! Nodes are mesh vertices followed by edge midpoints (`n_vertices + edge`).
//! Constrained components are eliminated: they receive no global index.

use alloc::vec;
use alloc::vec::Vec;

use super::element::ElementKind;
use super::FemError;
use crate::mesh::{validate, FacetTag, Mesh, Subdomain, Topology};

/// Marker for an eliminated (constrained) local dof.
pub const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    ZeroVector,
    ZeroScalar,
    ZeroTangential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Constraint {
    pub node: usize,
    pub comp: usize,
    pub kind: ConstraintKind,
}

#[derive(Debug, Clone)]
pub struct Space {
    pub kind: ElementKind,
    pub sub: Subdomain,
    /// Triangles of the subdomain, in mesh order.
    pub cells: Vec<usize>,
    /// Position of each mesh triangle in `cells`, or `NONE`.
    pub cell_index: Vec<usize>,
    /// `n_local` global indices per cell, `NONE` where constrained.
    pub cell_dofs: Vec<usize>,
    /// Global index of `(node, comp)` at `2 * node + comp`, or `NONE`.
    pub node_dofs: Vec<usize>,
    pub in_space: Vec<bool>,
    pub constraints: Vec<Constraint>,
    /// `(node, comp)` of every free dof.
    pub dof_node: Vec<(usize, usize)>,
}

impl Space {
    pub fn n_dofs(&self) -> usize {
        self.dof_node.len()
    }

    pub fn local(&self, cell: usize) -> &[usize] {
        let n = self.kind.n_local();
        &self.cell_dofs[cell * n..(cell + 1) * n]
    }

    pub fn dof(&self, node: usize, comp: usize) -> usize {
        self.node_dofs[2 * node + comp]
    }

    pub fn is_constrained(&self, node: usize, comp: usize) -> bool {
        self.in_space[node] && self.dof(node, comp) == NONE
    }

    /// Nodal interpolant of `f` on the free dofs. Scalar spaces use `f(x)[0]`.
    pub fn interpolate(&self, node_xy: &[[f64; 2]], f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
        self.dof_node
            .iter()
            .map(|&(node, comp)| f(node_xy[node])[comp])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofOptions {
    /// Polynomial degree of the pore-pressure space (1 or 2).
    pub pore_degree: usize,
}

impl Default for DofOptions {
    fn default() -> Self {
        DofOptions { pore_degree: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct DofMap {
    pub velocity: Space,
    pub pressure_f: Space,
    pub displacement: Space,
    pub pressure_p: Space,
    pub topo: Topology,
    pub n_vertices: usize,
    pub node_xy: Vec<[f64; 2]>,
}

impl DofMap {
    /// Mesh node ids of the scalar nodes of triangle `tri` for a degree.
    pub fn tri_nodes(&self, mesh: &Mesh, tri: usize, degree: usize) -> [usize; 6] {
        let v = mesh.triangles[tri].v;
        let e = self.topo.tri_edges[tri];
        let mut n = [v[0], v[1], v[2], NONE, NONE, NONE];
        if degree == 2 {
            for k in 0..3 {
                n[3 + k] = self.n_vertices + e[k];
            }
        }
        n
    }
}

fn collect_constraints(
    mesh: &Mesh,
    topo: &Topology,
    degree: usize,
    ncomp: usize,
    rule: impl Fn(FacetTag, [f64; 2]) -> Result<[Option<ConstraintKind>; 2], FemError>,
) -> Result<Vec<[Option<ConstraintKind>; 2]>, FemError> {
    let nv = mesh.vertices.len();
    let mut marks = vec![[None, None]; nv + topo.edges.len()];
    for (fi, f) in mesh.facets.iter().enumerate() {
        let (a, b) = (mesh.vertices[f.v[0]], mesh.vertices[f.v[1]]);
        let kinds = rule(f.tag, [b[0] - a[0], b[1] - a[1]]).map_err(|e| match e {
            FemError::NonAxisAligned(_) => FemError::NonAxisAligned(fi),
            e => e,
        })?;
        let mut nodes = vec![f.v[0], f.v[1]];
        if degree == 2 {
            if let Some(e) = topo.facet_edge[fi] {
                nodes.push(nv + e);
            }
        }
        for n in nodes {
            for c in 0..ncomp {
                if let Some(k) = kinds[c] {
                    let slot: &mut Option<ConstraintKind> = &mut marks[n][c];
                    // A zero-vector constraint wins over a tangential one.
                    if slot.is_none() || k == ConstraintKind::ZeroVector {
                        *slot = Some(k);
                    }
                }
            }
        }
    }
    Ok(marks)
}

fn build_space(
    mesh: &Mesh,
    topo: &Topology,
    kind: ElementKind,
    sub: Subdomain,
    marks: &[[Option<ConstraintKind>; 2]],
) -> Space {
    let nv = mesh.vertices.len();
    let nnodes = nv + topo.edges.len();
    let degree = kind.degree();
    let ncomp = kind.components();
    let mut in_space = vec![false; nnodes];
    let mut cells = Vec::new();
    let mut cell_index = vec![NONE; mesh.triangles.len()];
    for (ti, t) in mesh.triangles.iter().enumerate() {
        if t.sub != sub {
            continue;
        }
        cell_index[ti] = cells.len();
        cells.push(ti);
        for &v in &t.v {
            in_space[v] = true;
        }
        if degree == 2 {
            for &e in &topo.tri_edges[ti] {
                in_space[nv + e] = true;
            }
        }
    }
    let mut node_dofs = vec![NONE; 2 * nnodes];
    let mut dof_node = Vec::new();
    let mut constraints = Vec::new();
    for n in 0..nnodes {
        if !in_space[n] {
            continue;
        }
        for c in 0..ncomp {
            match marks[n][c] {
                Some(k) => constraints.push(Constraint {
                    node: n,
                    comp: c,
                    kind: k,
                }),
                None => {
                    node_dofs[2 * n + c] = dof_node.len();
                    dof_node.push((n, c));
                }
            }
        }
    }
    let ns = kind.n_scalar();
    let mut cell_dofs = Vec::with_capacity(cells.len() * kind.n_local());
    for &ti in &cells {
        let v = mesh.triangles[ti].v;
        let e = topo.tri_edges[ti];
        for c in 0..ncomp {
            for a in 0..ns {
                let node = if a < 3 { v[a] } else { nv + e[a - 3] };
                cell_dofs.push(node_dofs[2 * node + c]);
            }
        }
    }
    Space {
        kind,
        sub,
        cells,
        cell_index,
        cell_dofs,
        node_dofs,
        in_space,
        constraints,
        dof_node,
    }
}

/// Space of `kind` on subdomain `sub` with every component fixed to zero on
/// facets tagged with one of `zero_on`.
pub fn auxiliary_space(
    mesh: &Mesh,
    topo: &Topology,
    kind: ElementKind,
    sub: Subdomain,
    zero_on: &[FacetTag],
) -> Space {
    let k = match kind.components() {
        1 => [Some(ConstraintKind::ZeroScalar), None],
        _ => [Some(ConstraintKind::ZeroVector), Some(ConstraintKind::ZeroVector)],
    };
    let marks = collect_constraints(mesh, topo, kind.degree(), kind.components(), |tag, _| {
        Ok(if zero_on.contains(&tag) { k } else { [None, None] })
    })
    .expect("tag rule is infallible");
    build_space(mesh, topo, kind, sub, &marks)
}

pub fn build_dofmaps(mesh: &Mesh, opts: DofOptions) -> Result<DofMap, FemError> {
    if !validate(mesh).is_empty() {
        return Err(FemError::InvalidMesh);
    }
    if !(opts.pore_degree == 1 || opts.pore_degree == 2) {
        return Err(FemError::UnsupportedDegree(opts.pore_degree));
    }
    let topo = Topology::build(mesh);
    let zv = Some(ConstraintKind::ZeroVector);
    let vel_marks = collect_constraints(mesh, &topo, 2, 2, |tag, _| {
        Ok(if tag == FacetTag::FluidExternal {
            [zv, zv]
        } else {
            [None, None]
        })
    })?;
    let disp_marks = collect_constraints(mesh, &topo, 2, 2, |tag, d| match tag {
        FacetTag::PoroSolid => Ok([zv, zv]),
        FacetTag::PoroExternal => {
            let len = crate::math::sqrt(d[0] * d[0] + d[1] * d[1]);
            let zt = Some(ConstraintKind::ZeroTangential);
            if d[0].abs() <= 1e-12 * len {
                Ok([None, zt])
            } else if d[1].abs() <= 1e-12 * len {
                Ok([zt, None])
            } else {
                Err(FemError::NonAxisAligned(0))
            }
        }
        _ => Ok([None, None]),
    })?;
    let pp_marks = collect_constraints(mesh, &topo, opts.pore_degree, 1, |tag, _| {
        Ok(if tag == FacetTag::PoroExternal {
            [Some(ConstraintKind::ZeroScalar), None]
        } else {
            [None, None]
        })
    })?;
    let free = vec![[None, None]; mesh.vertices.len() + topo.edges.len()];
    let pore_kind = if opts.pore_degree == 1 {
        ElementKind::P1
    } else {
        ElementKind::P2
    };
    let velocity = build_space(mesh, &topo, ElementKind::VectorP2, Subdomain::Fluid, &vel_marks);
    let pressure_f = build_space(mesh, &topo, ElementKind::P1, Subdomain::Fluid, &free);
    let displacement = build_space(mesh, &topo, ElementKind::VectorP2, Subdomain::Poro, &disp_marks);
    let pressure_p = build_space(mesh, &topo, pore_kind, Subdomain::Poro, &pp_marks);
    let nv = mesh.vertices.len();
    let mut node_xy = mesh.vertices.clone();
    for e in &topo.edges {
        let (a, b) = (mesh.vertices[e[0]], mesh.vertices[e[1]]);
        node_xy.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
    }
    Ok(DofMap {
        velocity,
        pressure_f,
        displacement,
        pressure_p,
        topo,
        n_vertices: nv,
        node_xy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_rect_two_domain;

    #[test]
    fn top_velocity_constrained_interface_free() {
        let m = build_rect_two_domain(4, 4, 0.5).unwrap();
        let d = build_dofmaps(&m, DofOptions::default()).unwrap();
        for (n, xy) in d.node_xy.iter().enumerate() {
            if !d.velocity.in_space[n] {
                continue;
            }
            let top = (xy[1] - 1.0).abs() < 1e-14;
            let iface = (xy[1] - 0.5).abs() < 1e-14;
            for c in 0..2 {
                assert_eq!(d.velocity.is_constrained(n, c), top);
                if iface {
                    assert!(!d.velocity.is_constrained(n, c));
                }
            }
        }
    }

    #[test]
    fn poro_external_tangential() {
        let m = build_rect_two_domain(4, 4, 0.5).unwrap();
        let d = build_dofmaps(&m, DofOptions::default()).unwrap();
        let node = d
            .node_xy
            .iter()
            .position(|p| p[0] == 0.0 && (p[1] - 0.25).abs() < 1e-14)
            .unwrap();
        assert!(!d.displacement.is_constrained(node, 0));
        assert!(d.displacement.is_constrained(node, 1));
        let c = d
            .displacement
            .constraints
            .iter()
            .find(|c| c.node == node)
            .unwrap();
        assert_eq!(c.kind, ConstraintKind::ZeroTangential);
    }

    #[test]
    fn pore_pressure_count_by_hand() {
        // Poro vertices: 3 x 2 = 6, of which 4 lie on the left/right edges.
        let m = build_rect_two_domain(2, 2, 0.5).unwrap();
        let d = build_dofmaps(&m, DofOptions::default()).unwrap();
        assert_eq!(d.pressure_p.n_dofs(), 2);
        assert_eq!(d.pressure_f.n_dofs(), 6);
    }
}
