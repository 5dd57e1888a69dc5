//! Discrete best constants of the functional inequalities used by the a
//! priori bounds, computed as generalized Rayleigh-quotient extrema on the
//! finite element spaces of a discretization.
//!
//! All values are maxima (or, for `Kappa`, a minimum) over a finite
//! dimensional subspace, so they bound the continuous constants from below
//! (from above for `Kappa`).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use faer::linalg::triangular_solve::solve_upper_triangular_in_place;
use faer::{Mat, Par};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::assembly::{boundary_mass, cell_points, mass, stiffness, strain, Discretization};
use crate::dense::{self, DenseError};
use crate::fem::{auxiliary_space, quadrature, ElementKind, FemError, Space, NONE};
use crate::math;
use crate::mesh::{build_rect_two_domain, FacetTag, Mesh, Subdomain, Topology};
use crate::sparse::{Csr, SolveError, SparseLu};

const IDENTITY: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstantKind {
    T1,
    T2,
    T3,
    T4,
    T5,
    P1c,
    P2c,
    P3c,
    Sf,
    Kf,
    Kappa,
    Cj,
}

impl ConstantKind {
    pub const ALL: [ConstantKind; 12] = [
        ConstantKind::T1,
        ConstantKind::T2,
        ConstantKind::T3,
        ConstantKind::T4,
        ConstantKind::T5,
        ConstantKind::P1c,
        ConstantKind::P2c,
        ConstantKind::P3c,
        ConstantKind::Sf,
        ConstantKind::Kf,
        ConstantKind::Kappa,
        ConstantKind::Cj,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConstantKind::T1 => "T1",
            ConstantKind::T2 => "T2",
            ConstantKind::T3 => "T3",
            ConstantKind::T4 => "T4",
            ConstantKind::T5 => "T5",
            ConstantKind::P1c => "P1c",
            ConstantKind::P2c => "P2c",
            ConstantKind::P3c => "P3c",
            ConstantKind::Sf => "Sf",
            ConstantKind::Kf => "Kf",
            ConstantKind::Kappa => "Kappa",
            ConstantKind::Cj => "Cj",
        }
    }

    pub fn parse(s: &str) -> Option<ConstantKind> {
        ConstantKind::ALL.iter().copied().find(|k| k.as_str() == s)
    }

    /// Quadratic quotients over nested spaces with mesh-independent forms,
    /// whose discrete maxima cannot decrease under refinement.
    pub fn is_monotone(self) -> bool {
        matches!(
            self,
            ConstantKind::T1
                | ConstantKind::T2
                | ConstantKind::T4
                | ConstantKind::T5
                | ConstantKind::P1c
                | ConstantKind::P2c
                | ConstantKind::P3c
                | ConstantKind::Kf
        )
    }

    /// Norm choices behind the value, for the report.
    pub fn note(self) -> &'static str {
        match self {
            ConstantKind::T3 => "H^1/2(interface) norm: minimal H^1 extension into the porous domain",
            ConstantKind::Cj => "H^1/2_00(inlet) norm: Dirichlet energy of the harmonic extension plus L2",
            ConstantKind::Sf => "best of 20 seeded ascent runs; a lower bound",
            ConstantKind::Kappa => "smallest eigenvalue of the pressure Schur complement",
            _ => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConstantError {
    #[error("{0} has zero measure: no facets tagged {1}")]
    EmptyBoundary(&'static str, &'static str),
    #[error("eigen-iteration for {0} did not converge")]
    NoConvergence(&'static str),
    #[error("at least {0} refinement levels are required")]
    TooFewLevels(usize),
    #[error(transparent)]
    Dense(#[from] DenseError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Fem(#[from] FemError),
}

/// Extremal quotient on one mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Quotient {
    pub value: f64,
    pub dofs: usize,
    /// Coefficients of a vector attaining the extremum.
    pub maximizer: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelValue {
    pub level: usize,
    pub h: f64,
    pub dofs: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantEstimate {
    pub kind: ConstantKind,
    /// Value on the finest level.
    pub value: f64,
    pub history: Vec<LevelValue>,
    /// Non-fatal diagnostics (monotonicity, stability).
    pub warnings: Vec<String>,
}

impl ConstantEstimate {
    pub fn finest(&self) -> &LevelValue {
        self.history.last().unwrap()
    }

    pub fn previous(&self) -> Option<&LevelValue> {
        let n = self.history.len();
        if n >= 2 {
            Some(&self.history[n - 2])
        } else {
            None
        }
    }
}

/// Largest `x^T N x / x^T K x` for `N` supported on few rows. The dense
/// reduction `W = P K^{-1} P^T` is formed on the support and factored.
pub fn max_boundary_quotient(n: &Csr, k: &Csr) -> Result<Quotient, ConstantError> {
    let support: Vec<usize> = (0..n.nrows)
        .filter(|&i| (n.indptr[i]..n.indptr[i + 1]).any(|p| n.data[p] != 0.0))
        .collect();
    let lu = SparseLu::new(k)?;
    let rhs: Vec<Vec<f64>> = support
        .iter()
        .map(|&i| {
            let mut e = vec![0.0; k.nrows];
            e[i] = 1.0;
            e
        })
        .collect();
    let x = lu.solve_many(&rhs)?;
    let m = support.len();
    let w = Mat::from_fn(m, m, |i, j| x[j][support[i]]);
    let nb = dense::from_csr(&n.submatrix(&support, &support));
    let l = dense::cholesky(&w)?;
    let c = l.transpose() * &nb * &l;
    let (vals, y) = dense::sym_eig(&c)?;
    let top = m - 1;
    let mut z = Mat::from_fn(m, 1, |i, _| y[(i, top)]);
    solve_upper_triangular_in_place(l.transpose(), z.as_mut(), Par::Seq);
    let mut maximizer = vec![0.0; k.nrows];
    for (j, col) in x.iter().enumerate() {
        for (v, c) in maximizer.iter_mut().zip(col) {
            *v += z[(j, 0)] * c;
        }
    }
    Ok(Quotient {
        value: vals[top],
        dofs: k.nrows,
        maximizer,
    })
}

fn start_vectors(n: usize, b: usize) -> Vec<Vec<f64>> {
    (0..b)
        .map(|j| {
            (0..n)
                .map(|i| 1.0 + 0.5 * math::sin(0.37 * (i + 1) as f64 * (j + 1) as f64 + j as f64))
                .collect()
        })
        .collect()
}

/// Largest eigenvalue of `M x = lambda K x` (both symmetric positive
/// definite) by subspace iteration on `K^{-1} M` with Rayleigh-Ritz.
pub fn max_full_quotient(m: &Csr, k: &Csr, name: &'static str) -> Result<Quotient, ConstantError> {
    let n = k.nrows;
    let lu = SparseLu::new(k)?;
    let b = n.min(8);
    let mut q = start_vectors(n, b);
    let mut prev = f64::NAN;
    for _ in 0..1000 {
        let mq: Vec<Vec<f64>> = q.iter().map(|v| m.mul(v)).collect();
        let y = lu.solve_many(&mq)?;
        let ar = Mat::from_fn(b, b, |i, j| m.form(&y[i], &y[j]));
        let br = Mat::from_fn(b, b, |i, j| k.form(&y[i], &y[j]));
        let (vals, v) = dense::gen_sym_eig(&ar, &br)?;
        q = (0..b)
            .map(|jj| {
                let col = b - 1 - jj;
                let mut out = vec![0.0; n];
                for (i, yi) in y.iter().enumerate() {
                    let c = v[(i, col)];
                    for (o, e) in out.iter_mut().zip(yi) {
                        *o += c * e;
                    }
                }
                out
            })
            .collect();
        let lam = vals[b - 1];
        if (lam - prev).abs() <= 1e-14 * lam {
            return Ok(Quotient {
                value: lam,
                dofs: n,
                maximizer: q.swap_remove(0),
            });
        }
        prev = lam;
    }
    Err(ConstantError::NoConvergence(name))
}

/// Matrices of the spaces of one discretization, assembled on demand.
struct Forms<'a> {
    d: &'a Discretization,
}

impl<'a> Forms<'a> {
    fn mesh(&self) -> &Mesh {
        &self.d.mesh
    }
    fn topo(&self) -> &Topology {
        &self.d.dofs.topo
    }
    fn lap(&self, s: &Space) -> Csr {
        stiffness(self.mesh(), s, &self.d.rule, IDENTITY)
    }
    fn mass(&self, s: &Space) -> Csr {
        mass(self.mesh(), s, &self.d.rule, 1.0)
    }
    fn trace(&self, s: &Space, tag: FacetTag) -> Csr {
        boundary_mass(self.mesh(), self.topo(), s, &[tag], &self.d.edge_rule, 1.0, false)
    }
}

fn require_facets(mesh: &Mesh, tag: FacetTag, what: &'static str) -> Result<(), ConstantError> {
    if mesh.facets.iter().any(|f| f.tag == tag) {
        Ok(())
    } else {
        Err(ConstantError::EmptyBoundary(what, tag.as_str()))
    }
}

/// Extremal quotient of `kind` on the spaces of `disc`. For every kind but
/// `Kappa` the value is the square root of the maximal quotient.
pub fn compute(disc: &Discretization, kind: ConstantKind) -> Result<Quotient, ConstantError> {
    let f = Forms { d: disc };
    let dofs = &disc.dofs;
    let (vel, disp, pp) = (&dofs.velocity, &dofs.displacement, &dofs.pressure_p);
    let q = match kind {
        ConstantKind::T1 => {
            require_facets(&disc.mesh, FacetTag::Interface, "interface")?;
            max_boundary_quotient(&f.trace(vel, FacetTag::Interface), &f.lap(vel))?
        }
        ConstantKind::T2 => {
            require_facets(&disc.mesh, FacetTag::FluidInlet, "fluid inlet")?;
            max_boundary_quotient(&f.trace(vel, FacetTag::FluidInlet), &f.lap(vel))?
        }
        ConstantKind::T3 => {
            require_facets(&disc.mesh, FacetTag::Interface, "interface")?;
            t3_quotient(disc)?
        }
        ConstantKind::T4 => {
            require_facets(&disc.mesh, FacetTag::PoroSolid, "porous solid wall")?;
            max_boundary_quotient(&f.trace(pp, FacetTag::PoroSolid), &f.lap(pp))?
        }
        ConstantKind::T5 => {
            require_facets(&disc.mesh, FacetTag::Interface, "interface")?;
            max_boundary_quotient(&f.trace(disp, FacetTag::Interface), &f.lap(disp))?
        }
        ConstantKind::P1c => max_full_quotient(&f.mass(vel), &f.lap(vel), "P1c")?,
        ConstantKind::P2c => max_full_quotient(&f.mass(disp), &f.lap(disp), "P2c")?,
        ConstantKind::P3c => max_full_quotient(&f.mass(pp), &f.lap(pp), "P3c")?,
        ConstantKind::Kf => {
            let d2 = strain(&disc.mesh, vel, &disc.rule, 0.5);
            max_full_quotient(&f.lap(vel), &d2, "Kf")?
        }
        ConstantKind::Sf => return sobolev_l4(disc, 20, 0x5eed),
        ConstantKind::Kappa => return inf_sup(disc),
        ConstantKind::Cj => {
            let nrm = InletNorm::new(disc)?;
            let (vals, v) = dense::gen_sym_eig(&nrm.h1_gram, &nrm.gram)?;
            let top = vals.len() - 1;
            Quotient {
                value: vals[top],
                dofs: vals.len(),
                maximizer: dense::column(&v, top),
            }
        }
    };
    Ok(Quotient {
        value: math::sqrt(q.value),
        ..q
    })
}

/// Scalar nodes on facets with any of `tags`, seen from subdomain `sub`.
fn facet_nodes(mesh: &Mesh, topo: &Topology, degree: usize, tags: &[FacetTag]) -> Vec<usize> {
    let nv = mesh.vertices.len();
    let mut on = vec![false; nv + topo.edges.len()];
    for (fi, fa) in mesh.facets.iter().enumerate() {
        if !tags.contains(&fa.tag) {
            continue;
        }
        on[fa.v[0]] = true;
        on[fa.v[1]] = true;
        if degree == 2 {
            if let Some(e) = topo.facet_edge[fi] {
                on[nv + e] = true;
            }
        }
    }
    (0..on.len()).filter(|&n| on[n]).collect()
}

/// Schur complement of `a` onto the index set `b` (dense).
fn schur(a: &Csr, b: &[usize]) -> Result<Mat<f64>, ConstantError> {
    let mut is_b = vec![false; a.nrows];
    b.iter().for_each(|&i| is_b[i] = true);
    let inner: Vec<usize> = (0..a.nrows).filter(|&i| !is_b[i]).collect();
    let abb = dense::from_csr(&a.submatrix(b, b));
    if inner.is_empty() {
        return Ok(abb);
    }
    let aii = a.submatrix(&inner, &inner);
    let aib = a.submatrix(&inner, b);
    let lu = SparseLu::new(&aii)?;
    let cols: Vec<Vec<f64>> = (0..b.len())
        .map(|j| (0..inner.len()).map(|i| aib.get(i, j)).collect())
        .collect();
    let x = lu.solve_many(&cols)?;
    // S = A_bb - A_ib^T A_ii^{-1} A_ib
    Ok(Mat::from_fn(b.len(), b.len(), |i, j| {
        abb[(i, j)] - (0..inner.len()).map(|r| aib.get(r, i) * x[j][r]).sum::<f64>()
    }))
}

fn t3_quotient(disc: &Discretization) -> Result<Quotient, ConstantError> {
    let mesh = &disc.mesh;
    let topo = &disc.dofs.topo;
    let pp = &disc.dofs.pressure_p;
    let deg = pp.kind.degree();
    let full = auxiliary_space(mesh, topo, pp.kind, Subdomain::Poro, &[]);
    let h1 = stiffness(mesh, &full, &disc.rule, IDENTITY).add(&mass(mesh, &full, &disc.rule, 1.0), 1.0);
    let nodes = facet_nodes(mesh, topo, deg, &[FacetTag::Interface]);
    let b: Vec<usize> = nodes.iter().map(|&n| full.dof(n, 0)).collect();
    let s = schur(&h1, &b)?;
    // Embed the Schur form into Q_p coordinates.
    let mut t = crate::sparse::Triplets::new(pp.n_dofs(), pp.n_dofs());
    for (i, &ni) in nodes.iter().enumerate() {
        for (j, &nj) in nodes.iter().enumerate() {
            t.push(pp.dof(ni, 0), pp.dof(nj, 0), s[(i, j)]);
        }
    }
    let lap = stiffness(mesh, pp, &disc.rule, IDENTITY);
    max_boundary_quotient(&t.to_csr(), &lap)
}

/// Discrete `H^1/2_00` norm on the fluid inlet: for nodal inlet values `g`
/// (zero at the inlet end points), `|E g|_1^2 + ||g||^2_inlet` where `E g`
/// is the discrete harmonic extension vanishing on the rest of the fluid
/// boundary. Scalar functions use the velocity degree.
#[derive(Debug, Clone)]
pub struct InletNorm {
    /// Mesh node ids of the inlet-interior nodes.
    pub nodes: Vec<usize>,
    /// Gram matrix of the norm on `nodes`.
    pub gram: Mat<f64>,
    /// Gram matrix of `||E g||_1^2`.
    pub h1_gram: Mat<f64>,
}

impl InletNorm {
    pub fn new(disc: &Discretization) -> Result<InletNorm, ConstantError> {
        let mesh = &disc.mesh;
        require_facets(mesh, FacetTag::FluidInlet, "fluid inlet")?;
        let topo = &disc.dofs.topo;
        let w = auxiliary_space(mesh, topo, ElementKind::P2, Subdomain::Fluid, &[]);
        let k = stiffness(mesh, &w, &disc.rule, IDENTITY);
        let m = mass(mesh, &w, &disc.rule, 1.0);
        let min = boundary_mass(mesh, topo, &w, &[FacetTag::FluidInlet], &disc.edge_rule, 1.0, false);
        let inlet = facet_nodes(mesh, topo, 2, &[FacetTag::FluidInlet]);
        let others = facet_nodes(
            mesh,
            topo,
            2,
            &[FacetTag::FluidOutlet, FacetTag::FluidExternal, FacetTag::Interface],
        );
        let nodes: Vec<usize> = inlet.into_iter().filter(|n| !others.contains(n)).collect();
        let mut fixed = vec![false; w.n_dofs()];
        for n in others {
            fixed[w.dof(n, 0)] = true;
        }
        let g: Vec<usize> = nodes.iter().map(|&n| w.dof(n, 0)).collect();
        g.iter().for_each(|&i| fixed[i] = true);
        let inner: Vec<usize> = (0..w.n_dofs()).filter(|&i| !fixed[i]).collect();
        // E g restricted to interior dofs: -K_ii^{-1} K_ig g
        let kii = k.submatrix(&inner, &inner);
        let kig = k.submatrix(&inner, &g);
        let lu = SparseLu::new(&kii)?;
        let cols: Vec<Vec<f64>> = (0..g.len())
            .map(|j| (0..inner.len()).map(|i| -kig.get(i, j)).collect())
            .collect();
        let ext = lu.solve_many(&cols)?;
        let full: Vec<Vec<f64>> = ext
            .iter()
            .enumerate()
            .map(|(j, e)| {
                let mut v = vec![0.0; w.n_dofs()];
                for (r, &i) in inner.iter().enumerate() {
                    v[i] = e[r];
                }
                v[g[j]] = 1.0;
                v
            })
            .collect();
        let n = g.len();
        let kf: Vec<Vec<f64>> = full.iter().map(|v| k.mul(v)).collect();
        let mf: Vec<Vec<f64>> = full.iter().map(|v| m.mul(v)).collect();
        let sk = Mat::from_fn(n, n, |i, j| math::dot(&full[i], &kf[j]));
        let gram = Mat::from_fn(n, n, |i, j| sk[(i, j)] + min.get(g[i], g[j]));
        let h1_gram = Mat::from_fn(n, n, |i, j| sk[(i, j)] + math::dot(&full[i], &mf[j]));
        Ok(InletNorm {
            nodes,
            gram: dense::symmetrize(&gram),
            h1_gram: dense::symmetrize(&h1_gram),
        })
    }

    /// Squared norm of a function given by its values at mesh nodes.
    pub fn norm_sq(&self, node_xy: &[[f64; 2]], g: impl Fn([f64; 2]) -> f64) -> f64 {
        let v: Vec<f64> = self.nodes.iter().map(|&n| g(node_xy[n])).collect();
        let gv = dense::mat_vec(&self.gram, &v);
        math::dot(&v, &gv)
    }
}

fn inf_sup(disc: &Discretization) -> Result<Quotient, ConstantError> {
    let f = Forms { d: disc };
    let vel = &disc.dofs.velocity;
    let pf = &disc.dofs.pressure_f;
    let a = f.lap(vel).add(&f.mass(vel), 1.0);
    let g = &disc.blocks.gdiv;
    let lu = SparseLu::new(&a)?;
    let gt = g.transpose();
    let np = g.nrows;
    let cols: Vec<Vec<f64>> = (0..np)
        .map(|j| (0..gt.nrows).map(|i| gt.get(i, j)).collect())
        .collect();
    let x = lu.solve_many(&cols)?;
    let s = Mat::from_fn(np, np, |i, j| {
        (g.indptr[i]..g.indptr[i + 1]).map(|p| g.data[p] * x[j][g.indices[p]]).sum::<f64>()
    });
    let mp = dense::from_csr(&f.mass(pf));
    let (vals, v) = dense::gen_sym_eig(&s, &mp)?;
    let floor = 1e-12 * vals[np - 1].abs();
    let idx = (0..np).find(|&i| vals[i] > floor).ok_or(ConstantError::NoConvergence("Kappa"))?;
    Ok(Quotient {
        value: math::sqrt(vals[idx]),
        dofs: np,
        maximizer: dense::column(&v, idx),
    })
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64) * 2.0 - 1.0
}

/// `int |v|^4` and its gradient for a velocity coefficient vector.
fn l4_functional(
    mesh: &Mesh,
    space: &Space,
    rule: &quadrature::QuadratureRule,
    v: &[f64],
    grad: Option<&mut [f64]>,
) -> f64 {
    let mut total = 0.0;
    let mut grad = grad;
    if let Some(g) = grad.as_deref_mut() {
        g.iter_mut().for_each(|x| *x = 0.0);
    }
    for (ci, &tri) in space.cells.iter().enumerate() {
        let dofs = space.local(ci);
        for cp in cell_points(mesh, tri, rule) {
            let b = &cp.p2;
            let mut u = [0.0; 2];
            for c in 0..2 {
                for a in 0..6 {
                    let d = dofs[c * 6 + a];
                    if d != NONE {
                        u[c] += v[d] * b.phi[a];
                    }
                }
            }
            let s = u[0] * u[0] + u[1] * u[1];
            total += cp.w * s * s;
            if let Some(g) = grad.as_deref_mut() {
                for c in 0..2 {
                    for a in 0..6 {
                        let d = dofs[c * 6 + a];
                        if d != NONE {
                            g[d] += 4.0 * cp.w * s * u[c] * b.phi[a];
                        }
                    }
                }
            }
        }
    }
    total
}

/// `max ||v||_{L4} / |v|_1` over the velocity space by the ascent
/// `v <- K^{-1} grad F(v)` normalized in the `K` norm, from seeded starts.
pub fn sobolev_l4(disc: &Discretization, starts: usize, seed: u64) -> Result<Quotient, ConstantError> {
    let vel = &disc.dofs.velocity;
    let mesh = &disc.mesh;
    let rule = quadrature::triangle(8)?;
    let k = stiffness(mesh, vel, &disc.rule, IDENTITY);
    let m = mass(mesh, vel, &disc.rule, 1.0);
    let lu = SparseLu::new(&k)?;
    let n = vel.n_dofs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normalize = |v: &mut Vec<f64>| {
        let s = math::sqrt(k.form(v, v));
        v.iter_mut().for_each(|x| *x /= s);
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut grad = vec![0.0; n];
    for _ in 0..starts {
        let r: Vec<f64> = (0..n).map(|_| uniform(&mut rng)).collect();
        // one smoothing step so that starts are resolved functions
        let mut v = lu.solve(&m.mul(&r))?;
        normalize(&mut v);
        let mut fv = l4_functional(mesh, vel, &rule, &v, None);
        for _ in 0..500 {
            l4_functional(mesh, vel, &rule, &v, Some(&mut grad));
            let mut w = lu.solve(&grad)?;
            normalize(&mut w);
            let fw = l4_functional(mesh, vel, &rule, &w, None);
            let done = fw - fv <= 1e-13 * fw;
            v = w;
            fv = fw;
            if done {
                break;
            }
        }
        if best.as_ref().map_or(true, |(b, _)| fv > *b) {
            best = Some((fv, v));
        }
    }
    let (fv, v) = best.ok_or(ConstantError::NoConvergence("Sf"))?;
    Ok(Quotient {
        value: math::sqrt(math::sqrt(fv)),
        dofs: n,
        maximizer: v,
    })
}

/// `||v||_{L4}^4` by quadrature, for checking a maximizer.
pub fn l4_norm_pow4(disc: &Discretization, v: &[f64]) -> Result<f64, ConstantError> {
    let rule = quadrature::triangle(8)?;
    Ok(l4_functional(&disc.mesh, &disc.dofs.velocity, &rule, v, None))
}

/// Estimate over a refinement sequence (coarse to fine).
pub fn estimate(kind: ConstantKind, levels: &[Discretization]) -> Result<ConstantEstimate, ConstantError> {
    if levels.len() < 2 {
        return Err(ConstantError::TooFewLevels(2));
    }
    let mut history = Vec::new();
    for (level, d) in levels.iter().enumerate() {
        let q = compute(d, kind)?;
        history.push(LevelValue {
            level,
            h: d.mesh.h_max(),
            dofs: q.dofs,
            value: q.value,
        });
    }
    let mut warnings = Vec::new();
    for w in history.windows(2) {
        let (a, b) = (w[0].value, w[1].value);
        if kind.is_monotone() && b < a * (1.0 - 1e-8) {
            warnings.push(format!(
                "{} decreased from {a:.12e} to {b:.12e} at level {}",
                kind.as_str(),
                w[1].level
            ));
        }
    }
    if kind == ConstantKind::Kappa {
        let first = history[0].value;
        if let Some(l) = history.iter().find(|l| l.value < 0.5 * first) {
            warnings.push(format!(
                "Kappa fell below half its coarsest value at level {} ({:.6e} < 0.5 * {:.6e})",
                l.level, l.value, first
            ));
        }
    }
    Ok(ConstantEstimate {
        kind,
        value: history.last().unwrap().value,
        history,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantTable {
    pub rows: Vec<ConstantEstimate>,
}

impl ConstantTable {
    pub fn get(&self, kind: ConstantKind) -> Option<f64> {
        self.rows.iter().find(|r| r.kind == kind).map(|r| r.value)
    }

    pub fn warnings(&self) -> Vec<String> {
        self.rows.iter().flat_map(|r| r.warnings.iter().cloned()).collect()
    }
}

/// One value per constant kind, as consumed by the bound evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Constants {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    pub t5: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub sf: f64,
    pub kf: f64,
    pub kappa: f64,
    pub cj: f64,
}

impl Constants {
    fn slot(&mut self, kind: ConstantKind) -> &mut f64 {
        match kind {
            ConstantKind::T1 => &mut self.t1,
            ConstantKind::T2 => &mut self.t2,
            ConstantKind::T3 => &mut self.t3,
            ConstantKind::T4 => &mut self.t4,
            ConstantKind::T5 => &mut self.t5,
            ConstantKind::P1c => &mut self.p1,
            ConstantKind::P2c => &mut self.p2,
            ConstantKind::P3c => &mut self.p3,
            ConstantKind::Sf => &mut self.sf,
            ConstantKind::Kf => &mut self.kf,
            ConstantKind::Kappa => &mut self.kappa,
            ConstantKind::Cj => &mut self.cj,
        }
    }

    pub fn get(&self, kind: ConstantKind) -> f64 {
        *self.clone().slot(kind)
    }

    pub fn set(&mut self, kind: ConstantKind, value: f64) {
        *self.slot(kind) = value;
    }

    /// `None` unless every kind is present.
    pub fn from_table(table: &ConstantTable) -> Option<Constants> {
        let mut c = Constants::default();
        for k in ConstantKind::ALL {
            c.set(k, table.get(k)?);
        }
        Some(c)
    }
}

/// All twelve constants on a refinement sequence.
pub fn report(levels: &[Discretization]) -> Result<ConstantTable, ConstantError> {
    let rows = ConstantKind::ALL
        .iter()
        .map(|&k| estimate(k, levels))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ConstantTable { rows })
}

/// Unit square on an `n x n` grid (`n >= 2`) with every triangle in the
/// fluid subdomain and every boundary facet tagged `FluidExternal`.
pub fn unit_square_single(n: usize) -> Mesh {
    let mut m = build_rect_two_domain(n, n, 1.0 / n as f64).expect("split on the first row");
    for t in &mut m.triangles {
        t.sub = Subdomain::Fluid;
    }
    m.facets.retain(|f| f.tag != FacetTag::Interface);
    for f in &mut m.facets {
        f.tag = FacetTag::FluidExternal;
    }
    m
}

/// `max ||v|| / |v|_1` over scalar P1 functions vanishing on the boundary of
/// the unit square with an `n x n` grid.
pub fn dirichlet_poincare_unit_square(n: usize) -> Result<f64, ConstantError> {
    let mesh = unit_square_single(n);
    let topo = Topology::build(&mesh);
    let s = auxiliary_space(&mesh, &topo, ElementKind::P1, Subdomain::Fluid, &[FacetTag::FluidExternal]);
    let rule = quadrature::triangle(4)?;
    let k = stiffness(&mesh, &s, &rule, IDENTITY);
    let m = mass(&mesh, &s, &rule, 1.0);
    Ok(math::sqrt(max_full_quotient(&m, &k, "Dirichlet Poincare")?.value))
}

/// Richardson extrapolation of three values on meshes refined by 2.
/// Returns the limit and the observed order.
pub fn richardson(v: [f64; 3]) -> (f64, f64) {
    let d1 = v[1] - v[0];
    let d2 = v[2] - v[1];
    let p = math::log2(d1 / d2);
    let r = math::exp(p * core::f64::consts::LN_2) - 1.0;
    (v[2] + d2 / r, p)
}
