//! Quadrature-point iteration and the generic bilinear forms built on it.

use alloc::vec;
use alloc::vec::Vec;

use crate::fem::{shape, Geom, QuadratureRule, Shape, Space};
use crate::mesh::{FacetTag, Mesh, Subdomain, Topology};
use crate::sparse::{Csr, Triplets};

/// Physical shape values and gradients at a point.
#[derive(Debug, Clone, Copy)]
pub struct Basis {
    pub n: usize,
    pub phi: [f64; 6],
    pub grad: [[f64; 2]; 6],
}

impl Basis {
    fn from_shape(s: &Shape, g: &Geom) -> Basis {
        let mut grad = [[0.0; 2]; 6];
        for a in 0..s.n {
            grad[a] = g.grad(s.dphi[a]);
        }
        Basis {
            n: s.n,
            phi: s.phi,
            grad,
        }
    }
}

/// Shape data of both polynomial degrees at one volume quadrature point.
#[derive(Debug, Clone, Copy)]
pub struct CellPoint {
    pub x: [f64; 2],
    /// Quadrature weight times the Jacobian determinant.
    pub w: f64,
    pub p1: Basis,
    pub p2: Basis,
}

impl CellPoint {
    pub fn basis(&self, degree: usize) -> &Basis {
        if degree == 1 {
            &self.p1
        } else {
            &self.p2
        }
    }
}

pub fn cell_points(mesh: &Mesh, tri: usize, rule: &QuadratureRule) -> Vec<CellPoint> {
    let g = Geom::new(mesh, tri);
    rule.points
        .iter()
        .zip(&rule.weights)
        .map(|(p, w)| CellPoint {
            x: g.map(*p),
            w: w * g.det.abs(),
            p1: Basis::from_shape(&shape(1, *p), &g),
            p2: Basis::from_shape(&shape(2, *p), &g),
        })
        .collect()
}

fn to_ref(g: &Geom, x: [f64; 2]) -> [f64; 2] {
    let (dx, dy) = (x[0] - g.origin[0], x[1] - g.origin[1]);
    [
        g.jit[0][0] * dx + g.jit[1][0] * dy,
        g.jit[0][1] * dx + g.jit[1][1] * dy,
    ]
}

/// Shape data at a point on a facet, seen from one adjacent triangle.
#[derive(Debug, Clone, Copy)]
pub struct FacetPoint {
    pub tri: usize,
    pub facet: usize,
    pub x: [f64; 2],
    /// Quadrature weight times facet length.
    pub w: f64,
    /// Outward unit normal of `tri`.
    pub n: [f64; 2],
    pub p1: Basis,
    pub p2: Basis,
}

impl FacetPoint {
    pub fn basis(&self, degree: usize) -> &Basis {
        if degree == 1 {
            &self.p1
        } else {
            &self.p2
        }
    }
}

/// Quadrature points on all facets with tag `tag`, evaluated in the
/// adjacent triangle that belongs to `side`.
pub fn facet_points(
    mesh: &Mesh,
    topo: &Topology,
    tag: FacetTag,
    side: Subdomain,
    edge_rule: &(Vec<f64>, Vec<f64>),
) -> Vec<FacetPoint> {
    let mut out = Vec::new();
    for (fi, f) in mesh.facets.iter().enumerate() {
        if f.tag != tag {
            continue;
        }
        let Some(e) = topo.facet_edge[fi] else { continue };
        let Some(&tri) = topo.edge_tris[e]
            .iter()
            .find(|&&t| mesh.triangles[t].sub == side)
        else {
            continue;
        };
        let k = topo.local_edge(tri, e).unwrap();
        let n = mesh.outward_normal(tri, k);
        let g = Geom::new(mesh, tri);
        let (a, b) = (mesh.vertices[f.v[0]], mesh.vertices[f.v[1]]);
        let len = mesh.facet_length(fi);
        for (s, w) in edge_rule.0.iter().zip(&edge_rule.1) {
            let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            let r = to_ref(&g, x);
            out.push(FacetPoint {
                tri,
                facet: fi,
                x,
                w: w * len,
                n,
                p1: Basis::from_shape(&shape(1, r), &g),
                p2: Basis::from_shape(&shape(2, r), &g),
            });
        }
    }
    out
}

/// A quadrature point on the fluid/poro interface with traces from both sides.
#[derive(Debug, Clone, Copy)]
pub struct InterfacePoint {
    pub fluid: FacetPoint,
    pub poro: FacetPoint,
    /// Unit normal pointing from the fluid into the poro region.
    pub n: [f64; 2],
    /// Unit tangent, `n` rotated by +90 degrees.
    pub t: [f64; 2],
}

pub fn interface_points(
    mesh: &Mesh,
    topo: &Topology,
    edge_rule: &(Vec<f64>, Vec<f64>),
) -> Vec<InterfacePoint> {
    let f = facet_points(mesh, topo, FacetTag::Interface, Subdomain::Fluid, edge_rule);
    let p = facet_points(mesh, topo, FacetTag::Interface, Subdomain::Poro, edge_rule);
    f.into_iter()
        .zip(p)
        .map(|(fluid, poro)| {
            let n = fluid.n;
            InterfacePoint {
                fluid,
                poro,
                n,
                t: [-n[1], n[0]],
            }
        })
        .collect()
}

/// Assemble `sum_cells sum_points kernel` over the common cells of two
/// spaces on the same subdomain. The kernel adds into a row-major local
/// matrix of size `rows.n_local() x cols.n_local()`.
pub fn assemble_cells(
    mesh: &Mesh,
    rows: &Space,
    cols: &Space,
    rule: &QuadratureRule,
    kernel: impl Fn(&CellPoint, &mut [f64]),
) -> Csr {
    assert_eq!(rows.sub, cols.sub);
    let nr = rows.kind.n_local();
    let nc = cols.kind.n_local();
    let mut t = Triplets::new(rows.n_dofs(), cols.n_dofs());
    let mut local = vec![0.0; nr * nc];
    for (ci, &tri) in rows.cells.iter().enumerate() {
        local.iter_mut().for_each(|v| *v = 0.0);
        for cp in cell_points(mesh, tri, rule) {
            kernel(&cp, &mut local);
        }
        let rd = rows.local(ci);
        let cd = cols.local(cols.cell_index[tri]);
        for i in 0..nr {
            for j in 0..nc {
                t.push(rd[i], cd[j], local[i * nc + j]);
            }
        }
    }
    t.to_csr()
}

/// `coeff * (u, v)`, componentwise for vector spaces.
pub fn mass(mesh: &Mesh, space: &Space, rule: &QuadratureRule, coeff: f64) -> Csr {
    let deg = space.kind.degree();
    let ns = space.kind.n_scalar();
    let nc = space.kind.components();
    let nl = space.kind.n_local();
    assemble_cells(mesh, space, space, rule, |cp, m| {
        let b = cp.basis(deg);
        for c in 0..nc {
            for a in 0..ns {
                for bb in 0..ns {
                    m[(c * ns + a) * nl + c * ns + bb] += coeff * cp.w * b.phi[a] * b.phi[bb];
                }
            }
        }
    })
}

/// `(k grad u, grad v)`, componentwise for vector spaces.
pub fn stiffness(mesh: &Mesh, space: &Space, rule: &QuadratureRule, k: [[f64; 2]; 2]) -> Csr {
    let deg = space.kind.degree();
    let ns = space.kind.n_scalar();
    let nc = space.kind.components();
    let nl = space.kind.n_local();
    assemble_cells(mesh, space, space, rule, |cp, m| {
        let b = cp.basis(deg);
        for a in 0..ns {
            let ga = b.grad[a];
            for bb in 0..ns {
                let gb = b.grad[bb];
                let kg = [
                    k[0][0] * gb[0] + k[0][1] * gb[1],
                    k[1][0] * gb[0] + k[1][1] * gb[1],
                ];
                let v = cp.w * (kg[0] * ga[0] + kg[1] * ga[1]);
                for c in 0..nc {
                    m[(c * ns + a) * nl + c * ns + bb] += v;
                }
            }
        }
    })
}

/// `2 coeff (D(u), D(v))` on a vector space.
pub fn strain(mesh: &Mesh, space: &Space, rule: &QuadratureRule, coeff: f64) -> Csr {
    let deg = space.kind.degree();
    let ns = space.kind.n_scalar();
    let nl = space.kind.n_local();
    assemble_cells(mesh, space, space, rule, |cp, m| {
        let b = cp.basis(deg);
        for c in 0..2 {
            for a in 0..ns {
                let ga = b.grad[a];
                for d in 0..2 {
                    for bb in 0..ns {
                        let gb = b.grad[bb];
                        let mut v = ga[d] * gb[c];
                        if c == d {
                            v += ga[0] * gb[0] + ga[1] * gb[1];
                        }
                        m[(c * ns + a) * nl + d * ns + bb] += coeff * cp.w * v;
                    }
                }
            }
        }
    })
}

/// `coeff (div u, div v)` on a vector space.
pub fn divdiv(mesh: &Mesh, space: &Space, rule: &QuadratureRule, coeff: f64) -> Csr {
    let deg = space.kind.degree();
    let ns = space.kind.n_scalar();
    let nl = space.kind.n_local();
    assemble_cells(mesh, space, space, rule, |cp, m| {
        let b = cp.basis(deg);
        for c in 0..2 {
            for a in 0..ns {
                for d in 0..2 {
                    for bb in 0..ns {
                        m[(c * ns + a) * nl + d * ns + bb] +=
                            coeff * cp.w * b.grad[a][c] * b.grad[bb][d];
                    }
                }
            }
        }
    })
}

/// `coeff <u, v>` over facets with the given tags, seen from `space`'s
/// subdomain. With `tangential`, only the tangential components couple.
pub fn boundary_mass(
    mesh: &Mesh,
    topo: &Topology,
    space: &Space,
    tags: &[FacetTag],
    edge_rule: &(Vec<f64>, Vec<f64>),
    coeff: f64,
    tangential: bool,
) -> Csr {
    let deg = space.kind.degree();
    let ns = space.kind.n_scalar();
    let ncomp = space.kind.components();
    let mut t = Triplets::new(space.n_dofs(), space.n_dofs());
    for &tag in tags {
        for fp in facet_points(mesh, topo, tag, space.sub, edge_rule) {
            let b = fp.basis(deg);
            let dofs = space.local(space.cell_index[fp.tri]);
            let tv = [-fp.n[1], fp.n[0]];
            for c in 0..ncomp {
                for d in 0..ncomp {
                    let wcd = if tangential {
                        tv[c] * tv[d]
                    } else if c == d {
                        1.0
                    } else {
                        continue;
                    };
                    for a in 0..ns {
                        for bb in 0..ns {
                            t.push(
                                dofs[c * ns + a],
                                dofs[d * ns + bb],
                                coeff * fp.w * wcd * b.phi[a] * b.phi[bb],
                            );
                        }
                    }
                }
            }
        }
    }
    t.to_csr()
}
