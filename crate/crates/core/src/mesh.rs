//! Two-subdomain conforming triangulations with tagged facets.
//!
//! The fluid region sits above the poroelastic region. Tags live on facets
//! only; a corner vertex shared by two boundary segments carries no tag of
//! its own.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subdomain {
    Fluid,
    Poro,
}

impl Subdomain {
    pub fn as_str(self) -> &'static str {
        match self {
            Subdomain::Fluid => "Fluid",
            Subdomain::Poro => "Poro",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "Fluid" => Some(Subdomain::Fluid),
            "Poro" => Some(Subdomain::Poro),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FacetTag {
    FluidInlet,
    FluidOutlet,
    FluidExternal,
    Interface,
    PoroSolid,
    PoroExternal,
    InteriorFluid,
    InteriorPoro,
}

impl FacetTag {
    pub const ALL: [FacetTag; 8] = [
        FacetTag::FluidInlet,
        FacetTag::FluidOutlet,
        FacetTag::FluidExternal,
        FacetTag::Interface,
        FacetTag::PoroSolid,
        FacetTag::PoroExternal,
        FacetTag::InteriorFluid,
        FacetTag::InteriorPoro,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FacetTag::FluidInlet => "FluidInlet",
            FacetTag::FluidOutlet => "FluidOutlet",
            FacetTag::FluidExternal => "FluidExternal",
            FacetTag::Interface => "Interface",
            FacetTag::PoroSolid => "PoroSolid",
            FacetTag::PoroExternal => "PoroExternal",
            FacetTag::InteriorFluid => "InteriorFluid",
            FacetTag::InteriorPoro => "InteriorPoro",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        FacetTag::ALL.iter().copied().find(|t| t.as_str() == s)
    }

    /// Subdomain whose boundary this tag belongs to, for boundary tags.
    pub fn boundary_side(self) -> Option<Subdomain> {
        match self {
            FacetTag::FluidInlet | FacetTag::FluidOutlet | FacetTag::FluidExternal => {
                Some(Subdomain::Fluid)
            }
            FacetTag::PoroSolid | FacetTag::PoroExternal => Some(Subdomain::Poro),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub v: [usize; 3],
    pub sub: Subdomain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Facet {
    pub v: [usize; 2],
    pub tag: FacetTag,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<Triangle>,
    pub facets: Vec<Facet>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeshError {
    #[error("nx and ny must be at least 1 (got nx={nx}, ny={ny})")]
    EmptyGrid { nx: usize, ny: usize },
    #[error("split {split} must lie strictly between 0 and 1")]
    SplitRange { split: f64 },
    #[error("split {split} is not aligned to the grid: split*ny = {product} is not an integer in 1..{ny}")]
    SplitNotAligned { split: f64, ny: usize, product: f64 },
    #[error("mesh is invalid: {0}")]
    Invalid(String),
}

/// Unit-square mesh with fluid above `y = split` and poro below.
///
/// Each grid cell is cut along its lower-left to upper-right diagonal.
pub fn build_rect_two_domain(nx: usize, ny: usize, split: f64) -> Result<Mesh, MeshError> {
    if nx == 0 || ny == 0 {
        return Err(MeshError::EmptyGrid { nx, ny });
    }
    if !(split > 0.0 && split < 1.0) {
        return Err(MeshError::SplitRange { split });
    }
    let product = split * ny as f64;
    let k = math::round(product);
    if (product - k).abs() > 1e-9 * (1.0 + product) || k < 1.0 || k > (ny - 1) as f64 {
        return Err(MeshError::SplitNotAligned { split, ny, product });
    }
    let k = k as usize;
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([i as f64 / nx as f64, j as f64 / ny as f64]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        let sub = if j < k { Subdomain::Poro } else { Subdomain::Fluid };
        for i in 0..nx {
            let (a, b, c, d) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
            triangles.push(Triangle { v: [a, b, c], sub });
            triangles.push(Triangle { v: [a, c, d], sub });
        }
    }
    let mut facets = Vec::new();
    let mut push = |a: usize, b: usize, tag: FacetTag| facets.push(Facet { v: [a, b], tag });
    for i in 0..nx {
        push(vid(i, 0), vid(i + 1, 0), FacetTag::PoroSolid);
    }
    for j in 0..ny {
        let tag = if j < k {
            FacetTag::PoroExternal
        } else {
            FacetTag::FluidOutlet
        };
        push(vid(nx, j), vid(nx, j + 1), tag);
    }
    for i in (0..nx).rev() {
        push(vid(i + 1, ny), vid(i, ny), FacetTag::FluidExternal);
    }
    for j in (0..ny).rev() {
        let tag = if j < k {
            FacetTag::PoroExternal
        } else {
            FacetTag::FluidInlet
        };
        push(vid(0, j + 1), vid(0, j), tag);
    }
    for i in 0..nx {
        push(vid(i, k), vid(i + 1, k), FacetTag::Interface);
    }
    Ok(Mesh {
        vertices,
        triangles,
        facets,
    })
}

/// Edge adjacency derived from a mesh.
///
/// Local edge `k` of a triangle joins its vertices `k` and `(k+1) % 3`.
#[derive(Debug, Clone)]
pub struct Topology {
    /// Vertex pairs, smaller index first.
    pub edges: Vec<[usize; 2]>,
    pub edge_tris: Vec<Vec<usize>>,
    pub tri_edges: Vec<[usize; 3]>,
    /// Edge of each facet, `None` if the facet is not an edge of any triangle.
    pub facet_edge: Vec<Option<usize>>,
    pub edge_facets: Vec<Vec<usize>>,
}

fn sq(x: f64) -> f64 {
    x * x
}

fn key(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

impl Topology {
    pub fn build(mesh: &Mesh) -> Self {
        let mut lookup: BTreeMap<[usize; 2], usize> = BTreeMap::new();
        let mut edges = Vec::new();
        let mut edge_tris: Vec<Vec<usize>> = Vec::new();
        let mut tri_edges = Vec::with_capacity(mesh.triangles.len());
        for (ti, tri) in mesh.triangles.iter().enumerate() {
            let mut te = [0usize; 3];
            for (k, slot) in te.iter_mut().enumerate() {
                let kk = key(tri.v[k], tri.v[(k + 1) % 3]);
                let id = *lookup.entry(kk).or_insert_with(|| {
                    edges.push(kk);
                    edge_tris.push(Vec::new());
                    edges.len() - 1
                });
                edge_tris[id].push(ti);
                *slot = id;
            }
            tri_edges.push(te);
        }
        let mut edge_facets = vec![Vec::new(); edges.len()];
        let facet_edge = mesh
            .facets
            .iter()
            .enumerate()
            .map(|(fi, f)| {
                let e = lookup.get(&key(f.v[0], f.v[1])).copied();
                if let Some(e) = e {
                    edge_facets[e].push(fi);
                }
                e
            })
            .collect();
        Topology {
            edges,
            edge_tris,
            tri_edges,
            facet_edge,
            edge_facets,
        }
    }

    /// Local edge index of `edge` within triangle `tri`.
    pub fn local_edge(&self, tri: usize, edge: usize) -> Option<usize> {
        self.tri_edges[tri].iter().position(|&e| e == edge)
    }
}

impl Mesh {
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].v;
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    pub fn area(&self, sub: Subdomain) -> f64 {
        (0..self.triangles.len())
            .filter(|&t| self.triangles[t].sub == sub)
            .map(|t| self.signed_area(t))
            .sum()
    }

    pub fn facet_length(&self, f: usize) -> f64 {
        let [a, b] = self.facets[f].v;
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        math::sqrt(sq(pb[0] - pa[0]) + sq(pb[1] - pa[1]))
    }

    /// Outward unit normal of triangle `tri` across its local edge `k`.
    pub fn outward_normal(&self, tri: usize, k: usize) -> [f64; 2] {
        let v = self.triangles[tri].v;
        let (pa, pb) = (self.vertices[v[k]], self.vertices[v[(k + 1) % 3]]);
        let (dx, dy) = (pb[0] - pa[0], pb[1] - pa[1]);
        let len = math::sqrt(dx * dx + dy * dy);
        let s = if self.signed_area(tri) >= 0.0 { 1.0 } else { -1.0 };
        [s * dy / len, -s * dx / len]
    }

    /// Unit normal of each Interface facet, pointing from the fluid into the
    /// poro region. Facets that are not conforming interface edges are skipped.
    pub fn interface_orientation(&self, topo: &Topology) -> Vec<(usize, [f64; 2])> {
        let mut out = Vec::new();
        for (fi, f) in self.facets.iter().enumerate() {
            if f.tag != FacetTag::Interface {
                continue;
            }
            let Some(e) = topo.facet_edge[fi] else { continue };
            let fluid = topo.edge_tris[e]
                .iter()
                .copied()
                .find(|&t| self.triangles[t].sub == Subdomain::Fluid);
            if let Some(t) = fluid {
                let k = topo.local_edge(t, e).unwrap();
                out.push((fi, self.outward_normal(t, k)));
            }
        }
        out
    }

    /// Uniform refinement: each triangle splits into four, each facet into two.
    pub fn refine_uniform(&self) -> Mesh {
        let topo = Topology::build(self);
        let nv = self.vertices.len();
        let mut vertices = self.vertices.clone();
        for e in &topo.edges {
            let (a, b) = (self.vertices[e[0]], self.vertices[e[1]]);
            vertices.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
        }
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for (ti, t) in self.triangles.iter().enumerate() {
            let [a, b, c] = t.v;
            let [eab, ebc, eca] = topo.tri_edges[ti].map(|e| nv + e);
            for v in [[a, eab, eca], [eab, b, ebc], [eca, ebc, c], [eab, ebc, eca]] {
                triangles.push(Triangle { v, sub: t.sub });
            }
        }
        let mut facets = Vec::with_capacity(2 * self.facets.len());
        for (fi, f) in self.facets.iter().enumerate() {
            match topo.facet_edge[fi] {
                Some(e) => {
                    let m = nv + e;
                    facets.push(Facet { v: [f.v[0], m], tag: f.tag });
                    facets.push(Facet { v: [m, f.v[1]], tag: f.tag });
                }
                None => facets.push(*f),
            }
        }
        Mesh {
            vertices,
            triangles,
            facets,
        }
    }

    /// Largest edge length.
    pub fn h_max(&self) -> f64 {
        let mut h: f64 = 0.0;
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (self.vertices[t.v[k]], self.vertices[t.v[(k + 1) % 3]]);
                h = h.max(math::sqrt(sq(a[0] - b[0]) + sq(a[1] - b[1])));
            }
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    VertexOutOfRange,
    NegativeArea,
    NonConformingInterface,
    WrongSideTag,
    UntaggedBoundaryEdge,
    UntaggedInterfaceEdge,
    DuplicateFacet,
    OrphanFacet,
    NonManifoldEdge,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::VertexOutOfRange => "vertex index out of range",
            Rule::NegativeArea => "negative area",
            Rule::NonConformingInterface => "non-conforming interface",
            Rule::WrongSideTag => "wrong-side tag",
            Rule::UntaggedBoundaryEdge => "untagged boundary edge",
            Rule::UntaggedInterfaceEdge => "untagged interface edge",
            Rule::DuplicateFacet => "duplicate facet",
            Rule::OrphanFacet => "facet is not a mesh edge",
            Rule::NonManifoldEdge => "edge shared by more than two triangles",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Site {
    Triangle(usize),
    Facet(usize),
    Edge([usize; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub rule: Rule,
    pub site: Site,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.site {
            Site::Triangle(t) => write!(f, "triangle {}: {}", t, self.rule.as_str()),
            Site::Facet(i) => write!(f, "facet {}: {}", i, self.rule.as_str()),
            Site::Edge([a, b]) => write!(f, "edge ({}, {}): {}", a, b, self.rule.as_str()),
        }
    }
}

/// Check every mesh invariant. An empty result means the mesh is valid.
pub fn validate(mesh: &Mesh) -> Vec<Violation> {
    let mut out = Vec::new();
    let nv = mesh.vertices.len();
    let mut bad_index = false;
    for (ti, t) in mesh.triangles.iter().enumerate() {
        if t.v.iter().any(|&v| v >= nv) {
            out.push(Violation {
                rule: Rule::VertexOutOfRange,
                site: Site::Triangle(ti),
            });
            bad_index = true;
        }
    }
    for (fi, f) in mesh.facets.iter().enumerate() {
        if f.v.iter().any(|&v| v >= nv) {
            out.push(Violation {
                rule: Rule::VertexOutOfRange,
                site: Site::Facet(fi),
            });
            bad_index = true;
        }
    }
    if bad_index {
        return out;
    }
    for ti in 0..mesh.triangles.len() {
        if mesh.signed_area(ti) <= 0.0 {
            out.push(Violation {
                rule: Rule::NegativeArea,
                site: Site::Triangle(ti),
            });
        }
    }
    let topo = Topology::build(mesh);
    for (fi, f) in mesh.facets.iter().enumerate() {
        let Some(e) = topo.facet_edge[fi] else {
            out.push(Violation {
                rule: Rule::OrphanFacet,
                site: Site::Facet(fi),
            });
            continue;
        };
        let subs: Vec<Subdomain> = topo.edge_tris[e]
            .iter()
            .map(|&t| mesh.triangles[t].sub)
            .collect();
        let ok = match f.tag {
            FacetTag::Interface => {
                subs.len() == 2 && subs.contains(&Subdomain::Fluid) && subs.contains(&Subdomain::Poro)
            }
            FacetTag::InteriorFluid => subs == [Subdomain::Fluid, Subdomain::Fluid],
            FacetTag::InteriorPoro => subs == [Subdomain::Poro, Subdomain::Poro],
            tag => subs.len() == 1 && Some(subs[0]) == tag.boundary_side(),
        };
        if !ok {
            let rule = if f.tag == FacetTag::Interface {
                Rule::NonConformingInterface
            } else {
                Rule::WrongSideTag
            };
            out.push(Violation {
                rule,
                site: Site::Facet(fi),
            });
        }
    }
    for (e, tris) in topo.edge_tris.iter().enumerate() {
        let facets = &topo.edge_facets[e];
        if facets.len() > 1 {
            out.push(Violation {
                rule: Rule::DuplicateFacet,
                site: Site::Facet(facets[1]),
            });
        }
        match tris.len() {
            1 => {
                let tagged = facets
                    .iter()
                    .any(|&fi| mesh.facets[fi].tag.boundary_side().is_some());
                if !tagged {
                    out.push(Violation {
                        rule: Rule::UntaggedBoundaryEdge,
                        site: Site::Edge(topo.edges[e]),
                    });
                }
            }
            2 => {
                let (s0, s1) = (mesh.triangles[tris[0]].sub, mesh.triangles[tris[1]].sub);
                if s0 != s1
                    && !facets
                        .iter()
                        .any(|&fi| mesh.facets[fi].tag == FacetTag::Interface)
                {
                    out.push(Violation {
                        rule: Rule::UntaggedInterfaceEdge,
                        site: Site::Edge(topo.edges[e]),
                    });
                }
            }
            _ => out.push(Violation {
                rule: Rule::NonManifoldEdge,
                site: Site::Edge(topo.edges[e]),
            }),
        }
    }
    out
}

/// Validate and turn violations into an error.
pub fn ensure_valid(mesh: &Mesh) -> Result<(), MeshError> {
    let v = validate(mesh);
    if v.is_empty() {
        Ok(())
    } else {
        let mut msg = format!("{} violation(s)", v.len());
        for x in v.iter().take(5) {
            msg.push_str(&format!("; {}", x));
        }
        Err(MeshError::Invalid(msg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_case() {
        let m = build_rect_two_domain(1, 2, 0.5).unwrap();
        assert_eq!(m.triangles.len(), 4);
        let nf = m.triangles.iter().filter(|t| t.sub == Subdomain::Fluid).count();
        assert_eq!(nf, 2);
        let ni = m.facets.iter().filter(|f| f.tag == FacetTag::Interface).count();
        assert_eq!(ni, 1);
        assert!(validate(&m).is_empty());
    }

    #[test]
    fn four_by_four_counts() {
        let m = build_rect_two_domain(4, 4, 0.5).unwrap();
        assert_eq!(m.triangles.len(), 32);
        let ni = m.facets.iter().filter(|f| f.tag == FacetTag::Interface).count();
        assert_eq!(ni, 4);
        assert_eq!(m.triangles.iter().filter(|t| t.sub == Subdomain::Poro).count(), 16);
        assert!(validate(&m).is_empty());
    }

    #[test]
    fn rejects_unaligned_split() {
        assert!(matches!(
            build_rect_two_domain(2, 2, 0.25),
            Err(MeshError::SplitNotAligned { .. })
        ));
        assert!(build_rect_two_domain(3, 3, 1.0 / 3.0).is_ok());
    }

    #[test]
    fn interface_normal_points_into_poro() {
        let m = build_rect_two_domain(3, 4, 0.5).unwrap();
        let topo = Topology::build(&m);
        let normals = m.interface_orientation(&topo);
        assert_eq!(normals.len(), 3);
        for (_, n) in normals {
            assert!((n[0]).abs() < 1e-15 && (n[1] + 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn swapped_vertices_give_one_negative_area() {
        let mut m = build_rect_two_domain(4, 4, 0.5).unwrap();
        m.triangles[5].v.swap(1, 2);
        let v = validate(&m);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::NegativeArea);
        assert_eq!(v[0].site, Site::Triangle(5));
    }

    #[test]
    fn refinement_preserves_validity_and_area() {
        let m = build_rect_two_domain(2, 2, 0.5).unwrap();
        let r = m.refine_uniform();
        assert!(validate(&r).is_empty());
        assert_eq!(r.triangles.len(), 32);
        assert!((r.area(Subdomain::Fluid) - 0.5).abs() < 1e-14);
        assert!((r.h_max() - m.h_max() / 2.0).abs() < 1e-14);
    }
}
