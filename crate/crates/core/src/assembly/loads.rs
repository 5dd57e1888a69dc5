use alloc::vec;
use alloc::vec::Vec;

use super::forms::{cell_points, facet_points};
use super::Discretization;
use crate::expr::{Expr, Program, Var};
use crate::fem::{Space, NONE};
use crate::mesh::{FacetTag, Subdomain};

/// Equation row that an additional boundary load enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadRow {
    Momentum,
    Structure,
    Darcy,
}

impl LoadRow {
    fn side(self) -> Subdomain {
        match self {
            LoadRow::Momentum => Subdomain::Fluid,
            LoadRow::Structure | LoadRow::Darcy => Subdomain::Poro,
        }
    }
}

/// Boundary source `<g, test>` over facets with `tag`. The expressions may
/// use `nx, ny`, bound to the outward normal of the triangle on the row's
/// side. Darcy loads use `value[0]` only.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryLoad {
    pub row: LoadRow,
    pub tag: FacetTag,
    pub value: [Expr; 2],
}

/// Body forces, source and inlet stress as closed-form expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemData {
    pub f_f: [Expr; 2],
    pub f_s: [Expr; 2],
    pub f_p: Expr,
    pub p_in: Expr,
    /// Extra boundary sources (used by manufactured solutions).
    pub extra: Vec<BoundaryLoad>,
}

impl Default for ProblemData {
    fn default() -> Self {
        ProblemData::zero()
    }
}

impl ProblemData {
    pub fn zero() -> ProblemData {
        ProblemData {
            f_f: [Expr::zero(), Expr::zero()],
            f_s: [Expr::zero(), Expr::zero()],
            f_p: Expr::zero(),
            p_in: Expr::zero(),
            extra: Vec::new(),
        }
    }

    fn map(&self, f: impl Fn(&Expr) -> Expr) -> ProblemData {
        ProblemData {
            f_f: [f(&self.f_f[0]), f(&self.f_f[1])],
            f_s: [f(&self.f_s[0]), f(&self.f_s[1])],
            f_p: f(&self.f_p),
            p_in: f(&self.p_in),
            extra: self
                .extra
                .iter()
                .map(|l| BoundaryLoad {
                    row: l.row,
                    tag: l.tag,
                    value: [f(&l.value[0]), f(&l.value[1])],
                })
                .collect(),
        }
    }

    /// Symbolic time derivative of every field.
    pub fn time_derivative(&self) -> ProblemData {
        self.map(|e| e.diff(Var::T))
    }

    /// Every field multiplied by `s`.
    pub fn scaled(&self, s: f64) -> ProblemData {
        self.map(|e| crate::expr::mul(crate::expr::num(s), e.clone()))
    }

    pub fn compile(&self) -> CompiledData {
        CompiledData {
            f_f: [self.f_f[0].compile(), self.f_f[1].compile()],
            f_s: [self.f_s[0].compile(), self.f_s[1].compile()],
            f_p: self.f_p.compile(),
            p_in: self.p_in.compile(),
            extra: self
                .extra
                .iter()
                .map(|l| (l.row, l.tag, [l.value[0].compile(), l.value[1].compile()]))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledData {
    pub f_f: [Program; 2],
    pub f_s: [Program; 2],
    pub f_p: Program,
    pub p_in: Program,
    pub extra: Vec<(LoadRow, FacetTag, [Program; 2])>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Loads {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

fn volume_load(disc: &Discretization, space: &Space, f: &[&Program], t: f64, out: &mut [f64]) {
    let deg = space.kind.degree();
    let ns = space.kind.n_scalar();
    for (ci, &tri) in space.cells.iter().enumerate() {
        let dofs = space.local(ci);
        for cp in cell_points(&disc.mesh, tri, &disc.rule) {
            let b = cp.basis(deg);
            for (c, prog) in f.iter().enumerate() {
                let v = prog.eval_xyt(cp.x[0], cp.x[1], t);
                if v == 0.0 {
                    continue;
                }
                for a in 0..ns {
                    let g = dofs[c * ns + a];
                    if g != NONE {
                        out[g] += cp.w * v * b.phi[a];
                    }
                }
            }
        }
    }
}

fn boundary_load(
    disc: &Discretization,
    space: &Space,
    tag: FacetTag,
    side: Subdomain,
    f: impl Fn([f64; 2], [f64; 2]) -> [f64; 2],
    out: &mut [f64],
) {
    let deg = space.kind.degree();
    let ns = space.kind.n_scalar();
    let ncomp = space.kind.components();
    for fp in facet_points(&disc.mesh, &disc.dofs.topo, tag, side, &disc.edge_rule) {
        let dofs = space.local(space.cell_index[fp.tri]);
        let b = fp.basis(deg);
        let g = f(fp.x, fp.n);
        for c in 0..ncomp {
            for a in 0..ns {
                let i = dofs[c * ns + a];
                if i != NONE {
                    out[i] += fp.w * g[c] * b.phi[a];
                }
            }
        }
    }
}

/// Load vectors `a(t)`, `b(t)`, `c(t)`.
pub fn assemble_loads(disc: &Discretization, data: &CompiledData, t: f64) -> Loads {
    let s = disc.sizes();
    let d = &disc.dofs;
    let mut a = vec![0.0; s.n_u];
    let mut b = vec![0.0; s.n_s];
    let mut c = vec![0.0; s.n_q];
    volume_load(disc, &d.velocity, &[&data.f_f[0], &data.f_f[1]], t, &mut a);
    volume_load(disc, &d.displacement, &[&data.f_s[0], &data.f_s[1]], t, &mut b);
    volume_load(disc, &d.pressure_p, &[&data.f_p], t, &mut c);
    boundary_load(
        disc,
        &d.velocity,
        FacetTag::FluidInlet,
        Subdomain::Fluid,
        |x, n| {
            let p = data.p_in.eval_xyt(x[0], x[1], t);
            [-p * n[0], -p * n[1]]
        },
        &mut a,
    );
    for (row, tag, prog) in &data.extra {
        let (space, out) = match row {
            LoadRow::Momentum => (&d.velocity, &mut a),
            LoadRow::Structure => (&d.displacement, &mut b),
            LoadRow::Darcy => (&d.pressure_p, &mut c),
        };
        boundary_load(
            disc,
            space,
            *tag,
            row.side(),
            |x, n| {
                let e = [x[0], x[1], t, n[0], n[1]];
                [prog[0].eval(&e), prog[1].eval(&e)]
            },
            out,
        );
    }
    Loads { a, b, c }
}
