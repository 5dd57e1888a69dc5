//! Lagrange bases on the reference triangle and the affine element map.

use alloc::vec::Vec;

use super::FemError;
use crate::mesh::Mesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    P1,
    P2,
    VectorP1,
    VectorP2,
}

impl ElementKind {
    pub fn degree(self) -> usize {
        match self {
            ElementKind::P1 | ElementKind::VectorP1 => 1,
            ElementKind::P2 | ElementKind::VectorP2 => 2,
        }
    }

    pub fn components(self) -> usize {
        match self {
            ElementKind::P1 | ElementKind::P2 => 1,
            ElementKind::VectorP1 | ElementKind::VectorP2 => 2,
        }
    }

    /// Scalar shape functions per triangle.
    pub fn n_scalar(self) -> usize {
        if self.degree() == 1 {
            3
        } else {
            6
        }
    }

    pub fn n_local(self) -> usize {
        self.n_scalar() * self.components()
    }
}

/// Scalar shape function values and reference gradients at one point.
///
/// Ordering: vertex functions 0, 1, 2, then for degree 2 the edge functions
/// of edges (0,1), (1,2), (2,0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shape {
    pub n: usize,
    pub phi: [f64; 6],
    pub dphi: [[f64; 2]; 6],
}

pub fn shape(degree: usize, p: [f64; 2]) -> Shape {
    let (x, y) = (p[0], p[1]);
    let l = [1.0 - x - y, x, y];
    let dl = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
    let mut s = Shape {
        n: 3,
        phi: [0.0; 6],
        dphi: [[0.0; 2]; 6],
    };
    if degree == 1 {
        s.phi[..3].copy_from_slice(&l);
        s.dphi[..3].copy_from_slice(&dl);
        return s;
    }
    s.n = 6;
    for i in 0..3 {
        s.phi[i] = l[i] * (2.0 * l[i] - 1.0);
        let c = 4.0 * l[i] - 1.0;
        s.dphi[i] = [c * dl[i][0], c * dl[i][1]];
    }
    for k in 0..3 {
        let (a, b) = (k, (k + 1) % 3);
        s.phi[3 + k] = 4.0 * l[a] * l[b];
        s.dphi[3 + k] = [
            4.0 * (dl[a][0] * l[b] + l[a] * dl[b][0]),
            4.0 * (dl[a][1] * l[b] + l[a] * dl[b][1]),
        ];
    }
    s
}

/// Values and reference gradients of every local dof of `kind` at `point`.
///
/// Vector kinds number local dofs component-major: dof `c * n_scalar + a`
/// is scalar function `a` in component `c`; its value entry is that scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisEval {
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
}

pub fn basis_eval(kind: ElementKind, point: [f64; 2]) -> Result<BasisEval, FemError> {
    const TOL: f64 = 1e-12;
    let (x, y) = (point[0], point[1]);
    if !(x >= -TOL && y >= -TOL && x + y <= 1.0 + TOL) {
        return Err(FemError::OutsideReference(point));
    }
    let s = shape(kind.degree(), point);
    let mut values = Vec::with_capacity(kind.n_local());
    let mut grads = Vec::with_capacity(kind.n_local());
    for _ in 0..kind.components() {
        values.extend_from_slice(&s.phi[..s.n]);
        grads.extend_from_slice(&s.dphi[..s.n]);
    }
    Ok(BasisEval { values, grads })
}

/// Affine map from the reference triangle onto a mesh triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geom {
    pub origin: [f64; 2],
    pub jac: [[f64; 2]; 2],
    pub det: f64,
    /// Inverse transpose of `jac`, mapping reference to physical gradients.
    pub jit: [[f64; 2]; 2],
}

impl Geom {
    pub fn new(mesh: &Mesh, tri: usize) -> Geom {
        let [a, b, c] = mesh.triangles[tri].v;
        let (p0, p1, p2) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
        let jac = [[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let jit = [
            [jac[1][1] / det, -jac[1][0] / det],
            [-jac[0][1] / det, jac[0][0] / det],
        ];
        Geom {
            origin: p0,
            jac,
            det,
            jit,
        }
    }

    pub fn map(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + self.jac[0][0] * p[0] + self.jac[0][1] * p[1],
            self.origin[1] + self.jac[1][0] * p[0] + self.jac[1][1] * p[1],
        ]
    }

    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.jit[0][0] * g[0] + self.jit[0][1] * g[1],
            self.jit[1][0] * g[0] + self.jit[1][1] * g[1],
        ]
    }

    pub fn area(&self) -> f64 {
        0.5 * self.det.abs()
    }
}

/// Reference coordinates of the endpoints of local edge `k`.
pub fn ref_edge(k: usize) -> ([f64; 2], [f64; 2]) {
    const V: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    (V[k], V[(k + 1) % 3])
}

/// Reference coordinates of the scalar nodes of a degree-`p` element.
pub fn ref_nodes(degree: usize) -> &'static [[f64; 2]] {
    const N: [[f64; 2]; 6] = [
        [0.0, 0.0],
        [1.0, 0.0],
        [0.0, 1.0],
        [0.5, 0.0],
        [0.5, 0.5],
        [0.0, 0.5],
    ];
    if degree == 1 {
        &N[..3]
    } else {
        &N
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p1_barycenter() {
        let b = basis_eval(ElementKind::P1, [1.0 / 3.0, 1.0 / 3.0]).unwrap();
        for v in b.values {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn p2_lagrange_property() {
        for (i, node) in ref_nodes(2).iter().enumerate() {
            let b = basis_eval(ElementKind::P2, *node).unwrap();
            for (j, v) in b.values.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn outside_point_rejected() {
        assert!(basis_eval(ElementKind::P2, [0.8, 0.4]).is_err());
        assert!(basis_eval(ElementKind::P1, [-0.1, 0.0]).is_err());
    }

    #[test]
    fn vector_kind_layout() {
        let b = basis_eval(ElementKind::VectorP2, [0.2, 0.3]).unwrap();
        assert_eq!(b.values.len(), 12);
        assert_eq!(b.values[..6], b.values[6..]);
    }
}
