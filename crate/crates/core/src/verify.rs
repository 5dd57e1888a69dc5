//! Manufactured solutions, convergence studies, interface-condition
//! residuals and the divergence-free kernel oracle.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use faer::Mat;

use crate::assembly::{
    interface_points, cell_points, AssemblyError, Basis, BoundaryLoad, ConvectionForm, Discretization,
    InterfacePoint, LoadRow, PhysicalParams, ProblemData, QuadOptions, StateVector,
};
use crate::dense::{self, DenseError};
use crate::expr::{self, Env, Expr, Program, Var};
use crate::fem::{quadrature, DofOptions, FemError, Space, NONE};
use crate::math;
use crate::mesh::{build_rect_two_domain, FacetTag, MeshError};
use crate::sparse::SolveError;
use crate::timestepper::{run, Scheme, SchemeConfig, StepError, Stepper};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VerifyError {
    #[error("unknown manufactured case '{0}' (expected smooth-polynomial, smooth-trig or interface-compatible-trig)")]
    UnknownCase(String),
    #[error("manufactured forcing is not available for the skew-symmetric convection form")]
    UnsupportedConvection,
    #[error("a convergence study needs at least {0} levels")]
    TooFewLevels(usize),
    #[error("velocity space has {0} dofs; the kernel oracle is limited to 400")]
    TooLarge(usize),
    #[error("divergence matrix has rank {rank}, expected {expected}")]
    RankDeficient { rank: usize, expected: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Dense(#[from] DenseError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseId {
    SmoothPolynomial,
    SmoothTrig,
    InterfaceCompatibleTrig,
}

impl CaseId {
    pub const ALL: [CaseId; 3] = [CaseId::SmoothPolynomial, CaseId::SmoothTrig, CaseId::InterfaceCompatibleTrig];

    pub fn as_str(self) -> &'static str {
        match self {
            CaseId::SmoothPolynomial => "smooth-polynomial",
            CaseId::SmoothTrig => "smooth-trig",
            CaseId::InterfaceCompatibleTrig => "interface-compatible-trig",
        }
    }

    pub fn parse(s: &str) -> Result<CaseId, VerifyError> {
        CaseId::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| VerifyError::UnknownCase(String::from(s)))
    }
}

type Vector = [Expr; 2];

fn x() -> Expr {
    expr::var(Var::X)
}
fn y() -> Expr {
    expr::var(Var::Y)
}
fn t() -> Expr {
    expr::var(Var::T)
}
fn n(v: f64) -> Expr {
    expr::num(v)
}
fn add(a: Expr, b: Expr) -> Expr {
    expr::add(a, b)
}
fn sub(a: Expr, b: Expr) -> Expr {
    expr::sub(a, b)
}
fn mul(a: Expr, b: Expr) -> Expr {
    expr::mul(a, b)
}
fn dx(e: &Expr) -> Expr {
    e.diff(Var::X)
}
fn dy(e: &Expr) -> Expr {
    e.diff(Var::Y)
}
fn dt(e: &Expr) -> Expr {
    e.diff(Var::T)
}
fn vdt(v: &Vector) -> Vector {
    [dt(&v[0]), dt(&v[1])]
}
fn vadd(a: Vector, b: Vector) -> Vector {
    let [a0, a1] = a;
    let [b0, b1] = b;
    [add(a0, b0), add(a1, b1)]
}
fn vsub(a: Vector, b: Vector) -> Vector {
    let [a0, a1] = a;
    let [b0, b1] = b;
    [sub(a0, b0), sub(a1, b1)]
}
fn vscale(s: &Expr, v: Vector) -> Vector {
    let [v0, v1] = v;
    [mul(s.clone(), v0), mul(s.clone(), v1)]
}
fn dot(a: &Vector, b: &Vector) -> Expr {
    add(mul(a[0].clone(), b[0].clone()), mul(a[1].clone(), b[1].clone()))
}
fn grad(s: &Expr) -> Vector {
    [dx(s), dy(s)]
}
fn div(v: &Vector) -> Expr {
    add(dx(&v[0]), dy(&v[1]))
}

/// Symmetric 2x2 tensor `[s11, s12, s22]`.
type Sym = [Expr; 3];

fn strain(v: &Vector) -> Sym {
    [dx(&v[0]), mul(n(0.5), add(dy(&v[0]), dx(&v[1]))), dy(&v[1])]
}
fn div_sym(s: &Sym) -> Vector {
    [add(dx(&s[0]), dy(&s[1])), add(dx(&s[1]), dy(&s[2]))]
}
fn sym_times(s: &Sym, v: &Vector) -> Vector {
    [
        add(mul(s[0].clone(), v[0].clone()), mul(s[1].clone(), v[1].clone())),
        add(mul(s[1].clone(), v[0].clone()), mul(s[2].clone(), v[1].clone())),
    ]
}
fn normal() -> Vector {
    [expr::var(Var::Nx), expr::var(Var::Ny)]
}
/// Tangent `n` rotated by +90 degrees.
fn tangent() -> Vector {
    [expr::neg(expr::var(Var::Ny)), expr::var(Var::Nx)]
}
fn k_grad(k: [[f64; 2]; 2], s: &Expr) -> Vector {
    let g = grad(s);
    [
        add(mul(n(k[0][0]), g[0].clone()), mul(n(k[0][1]), g[1].clone())),
        add(mul(n(k[1][0]), g[0].clone()), mul(n(k[1][1]), g[1].clone())),
    ]
}

/// Closed-form solution fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactFields {
    pub u: Vector,
    pub p_f: Expr,
    pub eta: Vector,
    pub p_p: Expr,
}

impl ExactFields {
    /// `2 mu_f D(u) - p_f I`.
    pub fn sigma_f(&self, p: &PhysicalParams) -> Sym {
        let d = strain(&self.u);
        [
            sub(mul(n(2.0 * p.mu_f), d[0].clone()), self.p_f.clone()),
            mul(n(2.0 * p.mu_f), d[1].clone()),
            sub(mul(n(2.0 * p.mu_f), d[2].clone()), self.p_f.clone()),
        ]
    }

    /// `2 mu_s D(eta) + lambda_s div(eta) I - alpha p_p I`.
    pub fn sigma_p(&self, p: &PhysicalParams) -> Sym {
        let d = strain(&self.eta);
        let iso = sub(mul(n(p.lambda_s), div(&self.eta)), mul(n(p.alpha_bw), self.p_p.clone()));
        [
            add(mul(n(2.0 * p.mu_s), d[0].clone()), iso.clone()),
            mul(n(2.0 * p.mu_s), d[1].clone()),
            add(mul(n(2.0 * p.mu_s), d[2].clone()), iso),
        ]
    }

    fn stream(psi: Expr) -> Vector {
        [dy(&psi), expr::neg(dx(&psi))]
    }
}

/// Interface defects: the difference between the exact interface
/// tractions and fluxes and what the discrete coupling terms produce.
/// Expressions use `nx, ny`, the outward normal of the row's side.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceDefect {
    pub momentum: Vector,
    pub structure: Vector,
    pub darcy: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManufacturedCase {
    pub id: CaseId,
    pub params: PhysicalParams,
    pub convection: bool,
    pub exact: ExactFields,
    /// Forcing, with all boundary and interface corrections in `extra`.
    pub data: ProblemData,
    pub defect: InterfaceDefect,
}

fn exact_fields(id: CaseId) -> ExactFields {
    let pi = core::f64::consts::PI;
    let sx = || expr::sin(mul(n(pi), x()));
    let cx = || expr::cos(mul(n(pi), x()));
    let sy = || expr::sin(mul(n(pi), y()));
    let cy = || expr::cos(mul(n(pi), y()));
    let top = || expr::pow(sub(n(1.0), y()), 2);
    match id {
        CaseId::SmoothPolynomial => {
            let g = add(n(1.0), t());
            let psi = mul(g.clone(), mul(expr::pow(x(), 2), top()));
            let h = add(n(1.0), expr::pow(t(), 2));
            ExactFields {
                u: ExactFields::stream(psi),
                p_f: mul(g.clone(), add(x(), expr::pow(y(), 2))),
                eta: [
                    mul(h.clone(), mul(x(), y())),
                    mul(h, mul(y(), mul(x(), sub(n(1.0), x())))),
                ],
                p_p: mul(g, mul(mul(x(), sub(n(1.0), x())), add(n(1.0), y()))),
            }
        }
        CaseId::SmoothTrig => {
            let c = expr::cos(t());
            let psi = mul(mul(n(0.5), c.clone()), mul(top(), mul(sx(), cy())));
            let h = mul(n(0.5), add(n(1.0), expr::sin(t())));
            ExactFields {
                u: ExactFields::stream(psi),
                p_f: mul(c.clone(), mul(cx(), sy())),
                eta: [mul(h.clone(), mul(cx(), sy())), mul(h, mul(sx(), sy()))],
                p_p: mul(c, mul(sx(), cy())),
            }
        }
        CaseId::InterfaceCompatibleTrig => {
            // every field vanishes to the needed order at y = 1/2
            let s = sub(y(), n(0.5));
            let c = expr::cos(t());
            let psi = mul(mul(n(32.0), c.clone()), mul(top(), mul(expr::pow(s.clone(), 3), sx())));
            let h = mul(n(4.0), add(n(1.0), expr::sin(t())));
            let e = mul(h, mul(y(), expr::pow(s.clone(), 2)));
            ExactFields {
                u: ExactFields::stream(psi),
                p_f: mul(c.clone(), mul(cx(), s.clone())),
                eta: [mul(e.clone(), cx()), mul(e, sx())],
                p_p: mul(mul(n(4.0), c), mul(sx(), expr::pow(s, 2))),
            }
        }
    }
}

/// Interface defects of `f` for the coupling used by the assembly.
pub fn interface_defect(f: &ExactFields, p: &PhysicalParams) -> InterfaceDefect {
    let nn = normal();
    let tt = tangent();
    let eta_dot = vdt(&f.eta);
    let slip = mul(n(p.beta_slip), dot(&vsub(f.u.clone(), eta_dot.clone()), &tt));
    // fluid side: n is the interface normal
    let momentum = vadd(
        vadd(sym_times(&f.sigma_f(p), &nn), vscale(&f.p_p, nn.clone())),
        vscale(&slip, tt.clone()),
    );
    // poro side: n is minus the interface normal
    let structure = vadd(
        vsub(vscale(&f.p_p, nn.clone()), vscale(&slip, tt)),
        sym_times(&f.sigma_p(p), &nn),
    );
    let darcy = add(dot(&vsub(f.u.clone(), eta_dot), &nn), dot(&k_grad(p.k, &f.p_p), &nn));
    InterfaceDefect {
        momentum,
        structure,
        darcy,
    }
}

/// Manufactured case with forcing derived from the strong equations.
pub fn manufactured_case(
    id: CaseId,
    params: &PhysicalParams,
    convection: ConvectionForm,
) -> Result<ManufacturedCase, VerifyError> {
    if convection == ConvectionForm::SkewSymmetric {
        return Err(VerifyError::UnsupportedConvection);
    }
    let p = params;
    let f = exact_fields(id);
    let sf = f.sigma_f(p);
    let sp = f.sigma_p(p);

    let mut f_f = vsub(vscale(&n(p.rho_f), vdt(&f.u)), div_sym(&sf));
    if convection == ConvectionForm::Standard {
        let conv = [dot(&f.u, &grad(&f.u[0])), dot(&f.u, &grad(&f.u[1]))];
        f_f = vadd(f_f, vscale(&n(p.rho_f), conv));
    }
    let f_s = vsub(vscale(&n(p.rho_s), vdt(&vdt(&f.eta))), div_sym(&sp));
    let k = k_grad(p.k, &f.p_p);
    let f_p = sub(
        add(mul(n(p.s0), dt(&f.p_p)), mul(n(p.alpha_bw), div(&vdt(&f.eta)))),
        div(&k),
    );

    let defect = interface_defect(&f, p);
    let nn = normal();
    let traction = sym_times(&sf, &nn);
    let mut extra = vec![
        BoundaryLoad {
            row: LoadRow::Momentum,
            tag: FacetTag::FluidInlet,
            value: traction.clone(),
        },
        BoundaryLoad {
            row: LoadRow::Momentum,
            tag: FacetTag::FluidOutlet,
            value: traction,
        },
        BoundaryLoad {
            row: LoadRow::Structure,
            tag: FacetTag::PoroExternal,
            value: sym_times(&sp, &nn),
        },
        BoundaryLoad {
            row: LoadRow::Darcy,
            tag: FacetTag::PoroSolid,
            value: [dot(&k, &nn), Expr::zero()],
        },
    ];
    extra.push(BoundaryLoad {
        row: LoadRow::Momentum,
        tag: FacetTag::Interface,
        value: defect.momentum.clone(),
    });
    extra.push(BoundaryLoad {
        row: LoadRow::Structure,
        tag: FacetTag::Interface,
        value: defect.structure.clone(),
    });
    extra.push(BoundaryLoad {
        row: LoadRow::Darcy,
        tag: FacetTag::Interface,
        value: [defect.darcy.clone(), Expr::zero()],
    });
    Ok(ManufacturedCase {
        id,
        params: p.clone(),
        convection: convection == ConvectionForm::Standard,
        exact: f,
        data: ProblemData {
            f_f,
            f_s,
            f_p,
            p_in: Expr::zero(),
            extra,
        },
        defect,
    })
}

/// Compiled exact fields and their first derivatives.
struct ExactPrograms {
    u: [Program; 2],
    u_grad: [[Program; 2]; 2],
    p_f: Program,
    eta: [Program; 2],
    eta_grad: [[Program; 2]; 2],
    eta_dot: [Program; 2],
    p_p: Program,
    p_p_grad: [Program; 2],
}

impl ExactPrograms {
    fn new(f: &ExactFields) -> ExactPrograms {
        let g = |v: &Vector| [[dx(&v[0]).compile(), dy(&v[0]).compile()], [dx(&v[1]).compile(), dy(&v[1]).compile()]];
        ExactPrograms {
            u: [f.u[0].compile(), f.u[1].compile()],
            u_grad: g(&f.u),
            p_f: f.p_f.compile(),
            eta: [f.eta[0].compile(), f.eta[1].compile()],
            eta_grad: g(&f.eta),
            eta_dot: [dt(&f.eta[0]).compile(), dt(&f.eta[1]).compile()],
            p_p: f.p_p.compile(),
            p_p_grad: [dx(&f.p_p).compile(), dy(&f.p_p).compile()],
        }
    }
}

fn ev2(p: &[Program; 2], e: &Env) -> [f64; 2] {
    [p[0].eval(e), p[1].eval(e)]
}

fn ev22(p: &[[Program; 2]; 2], e: &Env) -> [[f64; 2]; 2] {
    [[p[0][0].eval(e), p[0][1].eval(e)], [p[1][0].eval(e), p[1][1].eval(e)]]
}

/// Finite element field value and gradient (`grad[c][d] = d_d u_c`).
#[derive(Debug, Clone, Copy, Default)]
struct Local {
    val: [f64; 2],
    grad: [[f64; 2]; 2],
}

fn eval_fe(space: &Space, coeffs: &[f64], tri: usize, p1: &Basis, p2: &Basis) -> Local {
    let ci = space.cell_index[tri];
    let mut out = Local::default();
    if ci == NONE {
        return out;
    }
    let b = if space.kind.degree() == 1 { p1 } else { p2 };
    let ns = space.kind.n_scalar();
    let dofs = space.local(ci);
    for c in 0..space.kind.components() {
        for a in 0..ns {
            let g = dofs[c * ns + a];
            if g == NONE {
                continue;
            }
            let v = coeffs[g];
            out.val[c] += v * b.phi[a];
            out.grad[c][0] += v * b.grad[a][0];
            out.grad[c][1] += v * b.grad[a][1];
        }
    }
    out
}

/// Exact-solution initial state by nodal interpolation at `t`.
pub fn interpolate_state(disc: &Discretization, f: &ExactFields, t0: f64) -> StateVector {
    let p = ExactPrograms::new(f);
    let d = &disc.dofs;
    let xy = &d.node_xy;
    let at = |q: [f64; 2]| expr::env(q[0], q[1], t0);
    StateVector {
        alpha: d.velocity.interpolate(xy, |q| ev2(&p.u, &at(q))),
        beta: d.displacement.interpolate(xy, |q| ev2(&p.eta, &at(q))),
        gamma: d.pressure_p.interpolate(xy, |q| [p.p_p.eval(&at(q)), 0.0]),
        theta: d.displacement.interpolate(xy, |q| ev2(&p.eta_dot, &at(q))),
        pi: d.pressure_f.interpolate(xy, |q| [p.p_f.eval(&at(q)), 0.0]),
        t: t0,
    }
}

/// Errors of a discrete state against exact fields.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldErrors {
    pub u_l2: f64,
    pub u_h1: f64,
    pub pf_l2: f64,
    pub eta_h1: f64,
    pub pp_l2: f64,
    pub pp_h1: f64,
}

impl FieldErrors {
    pub const NAMES: [&'static str; 6] = ["e_uL2", "e_uH1", "e_pfL2", "e_etaH1", "e_ppL2", "e_ppH1"];

    pub fn as_array(&self) -> [f64; 6] {
        [self.u_l2, self.u_h1, self.pf_l2, self.eta_h1, self.pp_l2, self.pp_h1]
    }
}

/// Quadrature order used for error integrals.
pub const ERROR_QUAD_ORDER: usize = 10;

/// `L^2` and `H^1`-seminorm errors of `state` at time `t`; the fluid
/// pressure is compared at `t_pf`.
pub fn field_errors(
    disc: &Discretization,
    f: &ExactFields,
    state: &StateVector,
    t: f64,
    t_pf: f64,
) -> Result<FieldErrors, VerifyError> {
    let p = ExactPrograms::new(f);
    let rule = quadrature::triangle(ERROR_QUAD_ORDER)?;
    let d = &disc.dofs;
    let mut e = FieldErrors::default();
    let sq = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]);
    for tri in 0..disc.mesh.triangles.len() {
        for cp in cell_points(&disc.mesh, tri, &rule) {
            let env = expr::env(cp.x[0], cp.x[1], t);
            let w = cp.w;
            if d.velocity.cell_index[tri] != NONE {
                let u = eval_fe(&d.velocity, &state.alpha, tri, &cp.p1, &cp.p2);
                let g = ev22(&p.u_grad, &env);
                e.u_l2 += w * sq(u.val, ev2(&p.u, &env));
                e.u_h1 += w * (sq(u.grad[0], g[0]) + sq(u.grad[1], g[1]));
                let pf = eval_fe(&d.pressure_f, &state.pi, tri, &cp.p1, &cp.p2);
                let ex = p.p_f.eval(&expr::env(cp.x[0], cp.x[1], t_pf));
                e.pf_l2 += w * (pf.val[0] - ex) * (pf.val[0] - ex);
            }
            if d.displacement.cell_index[tri] != NONE {
                let eta = eval_fe(&d.displacement, &state.beta, tri, &cp.p1, &cp.p2);
                let g = ev22(&p.eta_grad, &env);
                e.eta_h1 += w * (sq(eta.grad[0], g[0]) + sq(eta.grad[1], g[1]));
                let pp = eval_fe(&d.pressure_p, &state.gamma, tri, &cp.p1, &cp.p2);
                let ex = p.p_p.eval(&env);
                e.pp_l2 += w * (pp.val[0] - ex) * (pp.val[0] - ex);
                e.pp_h1 += w * sq(pp.grad[0], ev2(&p.p_p_grad, &env));
            }
        }
    }
    e.u_l2 = math::sqrt(e.u_l2);
    e.u_h1 = math::sqrt(e.u_h1);
    e.pf_l2 = math::sqrt(e.pf_l2);
    e.eta_h1 = math::sqrt(e.eta_h1);
    e.pp_l2 = math::sqrt(e.pp_l2);
    e.pp_h1 = math::sqrt(e.pp_h1);
    Ok(e)
}

/// Errors of the nodal interpolant of the exact fields at `t`.
pub fn interpolation_errors(disc: &Discretization, f: &ExactFields, t: f64) -> Result<FieldErrors, VerifyError> {
    let s = interpolate_state(disc, f, t);
    field_errors(disc, f, &s, t, t)
}

/// Settings of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub params: PhysicalParams,
    pub scheme: Scheme,
    /// `dt = dt_coeff * h^2` (implicit Euler) or `dt_coeff * h^{3/2}`
    /// (midpoint), rounded down to divide `t_final`.
    pub dt_coeff: f64,
    pub t_final: f64,
    pub pore_degree: usize,
    pub quad: QuadOptions,
    pub convection: ConvectionForm,
    pub newton_tol: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            params: PhysicalParams::default(),
            scheme: Scheme::ImplicitMidpoint,
            dt_coeff: 0.5,
            t_final: 0.1,
            pore_degree: 2,
            quad: QuadOptions::default(),
            convection: ConvectionForm::Standard,
            newton_tol: 1e-11,
        }
    }
}

impl StudyConfig {
    pub fn dt(&self, h: f64) -> f64 {
        let target = match self.scheme {
            Scheme::ImplicitEuler => self.dt_coeff * h * h,
            Scheme::ImplicitMidpoint => self.dt_coeff * h * math::sqrt(h),
        };
        let steps = math::ceil(self.t_final / target - 1e-9).max(1.0);
        self.t_final / steps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelErrors {
    /// Cells per side.
    pub level: usize,
    pub h: f64,
    pub dt: f64,
    pub errors: FieldErrors,
    pub interpolation: FieldErrors,
    pub interface: InterfaceResiduals,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub case: CaseId,
    pub rows: Vec<LevelErrors>,
    /// Level and message of a failed solve; rows hold the levels before it.
    pub failure: Option<(usize, String)>,
}

/// Observed order `log2(e_k / e_{k+1})` for halved `h`.
pub fn rate(e0: f64, e1: f64, h0: f64, h1: f64) -> f64 {
    math::ln(e0 / e1) / math::ln(h0 / h1)
}

/// Expected asymptotic orders in the order of [`FieldErrors::as_array`].
pub fn expected_rates(pore_degree: usize) -> [f64; 6] {
    let q = pore_degree as f64;
    [3.0, 2.0, 2.0, 2.0, q + 1.0, q]
}

impl ConvergenceTable {
    /// Rates between consecutive levels, per error column.
    pub fn rates(&self) -> Vec<[f64; 6]> {
        self.rows
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0].errors.as_array(), w[1].errors.as_array());
                core::array::from_fn(|i| rate(a[i], b[i], w[0].h, w[1].h))
            })
            .collect()
    }

    pub fn interpolation_rates(&self) -> Vec<[f64; 6]> {
        self.rows
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0].interpolation.as_array(), w[1].interpolation.as_array());
                core::array::from_fn(|i| rate(a[i], b[i], w[0].h, w[1].h))
            })
            .collect()
    }

    /// Columns whose finest observed rate falls more than `slack` below
    /// `expected`.
    pub fn shortfalls(&self, expected: [f64; 6], slack: f64) -> Vec<String> {
        let Some(last) = self.rates().pop() else {
            return Vec::new();
        };
        (0..6)
            .filter(|&i| !(last[i] >= expected[i] - slack))
            .map(|i| format!("{}: observed {:.3}, expected {:.1}", FieldErrors::NAMES[i], last[i], expected[i]))
            .collect()
    }
}

/// Discretization of the unit square split at `y = 1/2`.
pub fn study_disc(level: usize, cfg: &StudyConfig) -> Result<Discretization, VerifyError> {
    let mesh = build_rect_two_domain(level, level, 0.5)?;
    Ok(Discretization::new(
        mesh,
        cfg.params.clone(),
        DofOptions {
            pore_degree: cfg.pore_degree,
        },
        cfg.quad,
    )?)
}

/// Solve one manufactured case from its exact initial state on each level.
pub fn convergence_study(id: CaseId, levels: &[usize], cfg: &StudyConfig) -> Result<ConvergenceTable, VerifyError> {
    if levels.len() < 3 {
        return Err(VerifyError::TooFewLevels(3));
    }
    let case = manufactured_case(id, &cfg.params, cfg.convection)?;
    let mut table = ConvergenceTable {
        case: id,
        rows: Vec::new(),
        failure: None,
    };
    for &level in levels {
        let disc = match study_disc(level, cfg) {
            Ok(d) => d,
            Err(e) => {
                table.failure = Some((level, format!("{e}")));
                return Ok(table);
            }
        };
        let h = 1.0 / level as f64;
        let dt = cfg.dt(h);
        let scfg = SchemeConfig {
            scheme: cfg.scheme,
            dt,
            t_final: cfg.t_final,
            newton_tol: cfg.newton_tol,
            convection: cfg.convection,
            ..SchemeConfig::default()
        };
        let init = interpolate_state(&disc, &case.exact, 0.0);
        let traj = match run(&disc, &case.data, scfg, Some(init)) {
            Ok(t) => t,
            Err(e) => {
                table.failure = Some((level, format!("step {}: {}", e.step, e.error)));
                return Ok(table);
            }
        };
        let last = traj.states.last().unwrap();
        let t_pf = last.t - (1.0 - cfg.scheme.stage_weight()) * dt;
        let errors = field_errors(&disc, &case.exact, last, last.t, t_pf)?;
        let interpolation = interpolation_errors(&disc, &case.exact, last.t)?;
        let interface = interface_residuals(&disc, last);
        table.rows.push(LevelErrors {
            level,
            h,
            dt,
            errors,
            interpolation,
            interface,
        });
    }
    Ok(table)
}

/// `L^2(Gamma)` norms of the four interface-condition residuals.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InterfaceResiduals {
    /// `u.n - (eta' - K grad p_p).n`
    pub flux: f64,
    /// `|sigma_f n - sigma_p n|`
    pub stress_balance: f64,
    /// `n.sigma_f n + p_p`
    pub normal_stress: f64,
    /// `n.sigma_f t + beta (u - eta').t`
    pub slip: f64,
}

impl InterfaceResiduals {
    pub const NAMES: [&'static str; 4] = ["flux", "stress_balance", "normal_stress", "slip"];

    pub fn as_array(&self) -> [f64; 4] {
        [self.flux, self.stress_balance, self.normal_stress, self.slip]
    }
}

/// Traces of all fields at an interface point.
#[derive(Debug, Clone, Copy)]
struct Traces {
    u: [f64; 2],
    u_grad: [[f64; 2]; 2],
    p_f: f64,
    eta_grad: [[f64; 2]; 2],
    eta_dot: [f64; 2],
    p_p: f64,
    p_p_grad: [f64; 2],
}

fn residuals_from(disc: &Discretization, pts: &[InterfacePoint], traces: impl Fn(&InterfacePoint) -> Traces) -> InterfaceResiduals {
    let p = &disc.params;
    let mut r = InterfaceResiduals::default();
    for ip in pts {
        let tr = traces(ip);
        let (nv, tv) = (ip.n, ip.t);
        let d = |g: &[[f64; 2]; 2]| [g[0][0], 0.5 * (g[0][1] + g[1][0]), g[1][1]];
        let times = |s: [f64; 3], v: [f64; 2]| [s[0] * v[0] + s[1] * v[1], s[1] * v[0] + s[2] * v[1]];
        let du = d(&tr.u_grad);
        let sf = [2.0 * p.mu_f * du[0] - tr.p_f, 2.0 * p.mu_f * du[1], 2.0 * p.mu_f * du[2] - tr.p_f];
        let de = d(&tr.eta_grad);
        let iso = p.lambda_s * (tr.eta_grad[0][0] + tr.eta_grad[1][1]) - p.alpha_bw * tr.p_p;
        let sp = [2.0 * p.mu_s * de[0] + iso, 2.0 * p.mu_s * de[1], 2.0 * p.mu_s * de[2] + iso];
        let kg = [
            p.k[0][0] * tr.p_p_grad[0] + p.k[0][1] * tr.p_p_grad[1],
            p.k[1][0] * tr.p_p_grad[0] + p.k[1][1] * tr.p_p_grad[1],
        ];
        let dotp = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
        let sfn = times(sf, nv);
        let spn = times(sp, nv);
        let flux = dotp(tr.u, nv) - dotp([tr.eta_dot[0] - kg[0], tr.eta_dot[1] - kg[1]], nv);
        let bal = [sfn[0] - spn[0], sfn[1] - spn[1]];
        let normal = dotp(sfn, nv) + tr.p_p;
        let slip = dotp(sfn, tv) + p.beta_slip * dotp([tr.u[0] - tr.eta_dot[0], tr.u[1] - tr.eta_dot[1]], tv);
        let w = ip.fluid.w;
        r.flux += w * flux * flux;
        r.stress_balance += w * dotp(bal, bal);
        r.normal_stress += w * normal * normal;
        r.slip += w * slip * slip;
    }
    r.flux = math::sqrt(r.flux);
    r.stress_balance = math::sqrt(r.stress_balance);
    r.normal_stress = math::sqrt(r.normal_stress);
    r.slip = math::sqrt(r.slip);
    r
}

/// Interface-condition residuals of a discrete state. Each trace is taken
/// from its own subdomain.
pub fn interface_residuals(disc: &Discretization, state: &StateVector) -> InterfaceResiduals {
    let d = &disc.dofs;
    let pts = interface_points(&disc.mesh, &d.topo, &disc.edge_rule);
    residuals_from(disc, &pts, |ip| {
        let (f, q) = (&ip.fluid, &ip.poro);
        let u = eval_fe(&d.velocity, &state.alpha, f.tri, &f.p1, &f.p2);
        let pf = eval_fe(&d.pressure_f, &state.pi, f.tri, &f.p1, &f.p2);
        let eta = eval_fe(&d.displacement, &state.beta, q.tri, &q.p1, &q.p2);
        let th = eval_fe(&d.displacement, &state.theta, q.tri, &q.p1, &q.p2);
        let pp = eval_fe(&d.pressure_p, &state.gamma, q.tri, &q.p1, &q.p2);
        Traces {
            u: u.val,
            u_grad: u.grad,
            p_f: pf.val[0],
            eta_grad: eta.grad,
            eta_dot: th.val,
            p_p: pp.val[0],
            p_p_grad: pp.grad[0],
        }
    })
}

/// Interface-condition residuals of exact fields at time `t`.
pub fn exact_interface_residuals(disc: &Discretization, f: &ExactFields, t: f64) -> InterfaceResiduals {
    let p = ExactPrograms::new(f);
    let pts = interface_points(&disc.mesh, &disc.dofs.topo, &disc.edge_rule);
    residuals_from(disc, &pts, |ip| {
        let e = expr::env(ip.fluid.x[0], ip.fluid.x[1], t);
        Traces {
            u: ev2(&p.u, &e),
            u_grad: ev22(&p.u_grad, &e),
            p_f: p.p_f.eval(&e),
            eta_grad: ev22(&p.eta_grad, &e),
            eta_dot: ev2(&p.eta_dot, &e),
            p_p: p.p_p.eval(&e),
            p_p_grad: ev2(&p.p_p_grad, &e),
        }
    })
}

/// Agreement between the saddle-point step and the step on an explicit
/// basis of the discrete divergence-free velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelReport {
    pub n_u: usize,
    pub n_pf: usize,
    /// Rank of `Gdiv` from its singular values.
    pub rank_svd: usize,
    /// Rank from the eigenvalues of `Gdiv Gdiv^T`.
    pub rank_gram: usize,
    pub kernel_dim: usize,
    /// Max-norm differences between the two paths, scaled by
    /// `max(1, |full|_inf)`.
    pub velocity_diff: f64,
    pub rate_diff: f64,
    pub displacement_diff: f64,
    pub pore_diff: f64,
    /// `|r0 - Gdiv^T pi|_inf / max(1, |r0|_inf)` where `r0` is the momentum
    /// residual of the reduced solution without the pressure term and `pi`
    /// the saddle multiplier.
    pub pressure_relation: f64,
    /// Scaled difference between `pi` and the least-squares pressure of
    /// the reduced residual.
    pub pressure_diff: f64,
    pub full_pi_norm: f64,
}

impl KernelReport {
    pub fn max_diff(&self) -> f64 {
        [
            self.velocity_diff,
            self.rate_diff,
            self.displacement_diff,
            self.pore_diff,
            self.pressure_relation,
            self.pressure_diff,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn agrees(&self, tol: f64) -> bool {
        self.max_diff() <= tol && self.kernel_dim == self.n_u - self.rank_gram
    }
}

fn scaled_diff(a: &[f64], b: &[f64]) -> f64 {
    let d = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    d / math::norm_inf(b).max(1.0)
}

/// One step of `scheme` from `prev`, solved both on the saddle system and
/// on `ker(Gdiv)`.
pub fn kernel_oracle(
    disc: &Discretization,
    data: &ProblemData,
    cfg: SchemeConfig,
    prev: &StateVector,
) -> Result<KernelReport, VerifyError> {
    let b = &disc.blocks;
    let s = b.sizes;
    if s.n_u > 400 {
        return Err(VerifyError::TooLarge(s.n_u));
    }
    let g = dense::from_csr(&b.gdiv);
    let (z, rank_svd) = dense::null_space(&g, 1e-10)?;
    let ggt = &g * g.transpose();
    let (ev, _) = dense::sym_eig(&ggt)?;
    let emax = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let rank_gram = ev.iter().filter(|v| **v > 1e-20 * emax.max(f64::MIN_POSITIVE)).count();
    if rank_svd < s.n_pf {
        return Err(VerifyError::RankDeficient {
            rank: rank_svd,
            expected: s.n_pf,
        });
    }

    let mut stepper = Stepper::new(disc, data, cfg)?;
    let (full, _) = stepper.step(prev)?;

    // reduced unknowns y = (a, theta, gamma) with alpha = Z a
    let k = z.ncols();
    let (n_s, n_q) = (s.n_s, s.n_q);
    let ny = k + n_s + n_q;
    let nz = s.n_u + n_s + n_q + s.n_pf;
    let lift = |yv: &[f64]| -> Vec<f64> {
        let mut out = dense::mat_vec(&z, &yv[..k]);
        out.extend_from_slice(&yv[k..]);
        out.extend(core::iter::repeat(0.0).take(s.n_pf));
        out
    };
    let mut p_mat = Mat::<f64>::zeros(nz, ny);
    for i in 0..s.n_u {
        for j in 0..k {
            p_mat[(i, j)] = z[(i, j)];
        }
    }
    for j in 0..n_s + n_q {
        p_mat[(s.n_u + j, k + j)] = 1.0;
    }
    let reduce = |r: &[f64]| -> Vec<f64> {
        let mut out: Vec<f64> = (0..k).map(|j| (0..s.n_u).map(|i| z[(i, j)] * r[i]).sum()).collect();
        out.extend_from_slice(&r[s.n_u..s.n_u + n_s + n_q]);
        out
    };
    let loads = stepper.loads(stepper.stage_time(prev));
    let z0 = stepper.pack(prev);
    let mut yv: Vec<f64> = {
        let a0 = &z0[..s.n_u];
        let mut v: Vec<f64> = (0..k).map(|j| (0..s.n_u).map(|i| z[(i, j)] * a0[i]).sum()).collect();
        v.extend_from_slice(&z0[s.n_u..s.n_u + n_s + n_q]);
        v
    };
    for _ in 0..cfg.newton_max_iters.max(1) {
        let zz = lift(&yv);
        let r = reduce(&stepper.stage_residual(prev, &zz, &loads).concat());
        let jf = dense::from_csr(&stepper.jacobian(prev, &zz));
        let jp = &jf * &p_mat;
        let jr = Mat::from_fn(ny, ny, |i, j| {
            if i < k {
                (0..s.n_u).map(|m| z[(m, i)] * jp[(m, j)]).sum()
            } else {
                jp[(s.n_u + i - k, j)]
            }
        });
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let dy = dense::solve(&jr, &neg)?;
        let step = math::norm_inf(&dy);
        for (a, d) in yv.iter_mut().zip(dy) {
            *a += d;
        }
        if step <= 1e-15 * math::norm_inf(&yv).max(1.0) {
            break;
        }
    }
    let red = stepper.unpack(prev, &lift(&yv));

    // pressure of the reduced solution from the momentum residual
    let r0 = stepper.stage_residual(prev, &lift(&yv), &loads).momentum;
    let gr0 = dense::mat_vec(&g, &r0);
    let pi_ls = dense::solve(&ggt, &gr0)?;
    let gtp = b.gdiv.mul_t(&full.pi);
    let rel = r0.iter().zip(&gtp).fold(0.0f64, |m, (a, c)| m.max((a - c).abs()));

    Ok(KernelReport {
        n_u: s.n_u,
        n_pf: s.n_pf,
        rank_svd,
        rank_gram,
        kernel_dim: k,
        velocity_diff: scaled_diff(&red.alpha, &full.alpha),
        rate_diff: scaled_diff(&red.theta, &full.theta),
        displacement_diff: scaled_diff(&red.beta, &full.beta),
        pore_diff: scaled_diff(&red.gamma, &full.gamma),
        pressure_relation: rel / math::norm_inf(&r0).max(1.0),
        pressure_diff: scaled_diff(&pi_ls, &full.pi),
        full_pi_norm: math::norm_inf(&full.pi),
    })
}

/// Local order of convergence of a Newton residual history,
/// `log(r_{k+1}/r_k) / log(r_k/r_{k-1})`, from the last triple whose
/// entries all exceed `floor`.
pub fn contraction_exponent(residuals: &[f64], floor: f64) -> Option<f64> {
    residuals
        .windows(3)
        .filter(|w| w.iter().all(|r| *r > floor) && w[1] < w[0])
        .last()
        .map(|w| math::ln(w[2] / w[1]) / math::ln(w[1] / w[0]))
}

/// Residual norm of the strong equations at the interpolated exact
/// solution, through the assembled semi-discrete residual.
pub fn consistency_residual(disc: &Discretization, case: &ManufacturedCase, t0: f64) -> f64 {
    use crate::assembly::{assemble_loads, residual, StateDot};
    let s = interpolate_state(disc, &case.exact, t0);
    let p = ExactPrograms::new(&case.exact);
    let d = &disc.dofs;
    let xy = &d.node_xy;
    let at = |q: [f64; 2]| expr::env(q[0], q[1], t0);
    let u_t = [dt(&case.exact.u[0]).compile(), dt(&case.exact.u[1]).compile()];
    let eta_tt = [
        dt(&dt(&case.exact.eta[0])).compile(),
        dt(&dt(&case.exact.eta[1])).compile(),
    ];
    let p_t = dt(&case.exact.p_p).compile();
    let dot = StateDot {
        alpha: d.velocity.interpolate(xy, |q| ev2(&u_t, &at(q))),
        beta: d.displacement.interpolate(xy, |q| ev2(&p.eta_dot, &at(q))),
        gamma: d.pressure_p.interpolate(xy, |q| [p_t.eval(&at(q)), 0.0]),
        theta: d.displacement.interpolate(xy, |q| ev2(&eta_tt, &at(q))),
    };
    let form = if case.convection {
        ConvectionForm::Standard
    } else {
        ConvectionForm::Off
    };
    let loads = assemble_loads(disc, &case.data.compile(), t0);
    let r = residual(disc, form, &s, &dot, &loads);
    math::norm_inf(&r.momentum)
        .max(math::norm_inf(&r.structure))
        .max(math::norm_inf(&r.darcy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> PhysicalParams {
        PhysicalParams {
            rho_f: 1.3,
            mu_f: 0.7,
            rho_s: 1.1,
            mu_s: 0.9,
            lambda_s: 1.7,
            s0: 0.6,
            alpha_bw: 0.8,
            k: [[1.2, 0.1], [0.1, 0.9]],
            beta_slip: 0.5,
        }
    }

    #[test]
    fn unknown_case_is_rejected() {
        assert!(matches!(CaseId::parse("nope"), Err(VerifyError::UnknownCase(_))));
        for c in CaseId::ALL {
            assert_eq!(CaseId::parse(c.as_str()).unwrap(), c);
        }
    }

    #[test]
    fn stream_function_velocity_is_solenoidal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for id in CaseId::ALL {
            let f = exact_fields(id);
            let d = div(&f.u).compile();
            for _ in 0..100 {
                let e = expr::env(rng.gen(), rng.gen(), rng.gen());
                assert!(d.eval(&e).abs() <= 1e-13, "{}", id.as_str());
            }
        }
    }

    #[test]
    fn essential_conditions_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for id in CaseId::ALL {
            let p = ExactPrograms::new(&exact_fields(id));
            for _ in 0..20 {
                let (s, t): (f64, f64) = (rng.gen(), rng.gen());
                let top = ev2(&p.u, &expr::env(s, 1.0, t));
                let bottom = ev2(&p.eta, &expr::env(s, 0.0, t));
                for side in [0.0, 1.0] {
                    let e = expr::env(side, 0.5 * s, t);
                    assert!(p.eta[1].eval(&e).abs() < 1e-14);
                    assert!(p.p_p.eval(&e).abs() < 1e-14);
                }
                assert!(top.iter().chain(&bottom).all(|v| v.abs() < 1e-14));
            }
        }
    }

    fn fd<F: Fn(f64, f64, f64) -> f64>(f: F, var: usize, e: [f64; 3], h: f64) -> f64 {
        let mut a = e;
        let mut b = e;
        a[var] += h;
        b[var] -= h;
        (f(a[0], a[1], a[2]) - f(b[0], b[1], b[2])) / (2.0 * h)
    }

    #[test]
    fn forcing_matches_finite_differences() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for id in CaseId::ALL {
            let case = manufactured_case(id, &p, ConvectionForm::Off).unwrap();
            let ex = &case.exact;
            let pp = ex.p_p.compile();
            let eta = [ex.eta[0].compile(), ex.eta[1].compile()];
            let fp = case.data.f_p.compile();
            let h = 1e-4;
            for _ in 0..20 {
                let e = [rng.gen::<f64>(), 0.5 * rng.gen::<f64>(), rng.gen::<f64>()];
                let pv = |x: f64, y: f64, t: f64| pp.eval_xyt(x, y, t);
                let p_t = fd(pv, 2, e, h);
                let div_eta_t = fd(|x, y, t| fd(|x, y, t| eta[0].eval_xyt(x, y, t), 0, [x, y, t], h), 2, e, h)
                    + fd(|x, y, t| fd(|x, y, t| eta[1].eval_xyt(x, y, t), 1, [x, y, t], h), 2, e, h);
                let flux = |i: usize| {
                    move |x: f64, y: f64, t: f64| {
                        let g = [fd(pv, 0, [x, y, t], h), fd(pv, 1, [x, y, t], h)];
                        p.k[i][0] * g[0] + p.k[i][1] * g[1]
                    }
                };
                let div_flux = fd(flux(0), 0, e, h) + fd(flux(1), 1, e, h);
                let strong = p.s0 * p_t + p.alpha_bw * div_eta_t - div_flux;
                let got = fp.eval_xyt(e[0], e[1], e[2]);
                assert!((strong - got).abs() <= 1e-6 * (1.0 + got.abs()), "{}: {strong} vs {got}", id.as_str());
            }
        }
    }

    #[test]
    fn compatible_case_has_no_interface_defect() {
        let p = params();
        let case = manufactured_case(CaseId::InterfaceCompatibleTrig, &p, ConvectionForm::Standard).unwrap();
        let progs = [
            case.defect.momentum[0].compile(),
            case.defect.momentum[1].compile(),
            case.defect.structure[0].compile(),
            case.defect.structure[1].compile(),
            case.defect.darcy.compile(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let (x, t): (f64, f64) = (rng.gen(), rng.gen());
            for ny in [-1.0, 1.0] {
                let e = [x, 0.5, t, 0.0, ny];
                assert!(progs.iter().all(|q| q.eval(&e).abs() < 1e-13));
            }
        }
        let disc = study_disc(4, &StudyConfig::default()).unwrap();
        let r = exact_interface_residuals(&disc, &case.exact, 0.3);
        assert!(r.as_array().iter().all(|v| *v < 1e-13), "{r:?}");
        let trig = manufactured_case(CaseId::SmoothTrig, &p, ConvectionForm::Standard).unwrap();
        let r = exact_interface_residuals(&disc, &trig.exact, 0.3);
        assert!(r.as_array().iter().all(|v| *v > 1e-3), "{r:?}");
    }

    #[test]
    fn zero_state_has_zero_interface_residuals() {
        let disc = study_disc(4, &StudyConfig::default()).unwrap();
        let r = interface_residuals(&disc, &StateVector::zeros(disc.sizes()));
        assert_eq!(r.as_array(), [0.0; 4]);
    }

    #[test]
    fn discrete_and_exact_interface_residuals_agree_on_interpolants() {
        let p = params();
        let cfg = StudyConfig {
            params: p.clone(),
            ..StudyConfig::default()
        };
        let case = manufactured_case(CaseId::SmoothTrig, &p, ConvectionForm::Standard).unwrap();
        let mut prev = f64::INFINITY;
        for level in [4, 8, 16] {
            let disc = study_disc(level, &cfg).unwrap();
            let s = interpolate_state(&disc, &case.exact, 0.2);
            let a = interface_residuals(&disc, &s).as_array();
            let b = exact_interface_residuals(&disc, &case.exact, 0.2).as_array();
            let gap = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(gap < prev);
            prev = gap;
        }
        assert!(prev < 0.05);
    }

    #[test]
    fn consistency_residual_shrinks() {
        let p = params();
        let cfg = StudyConfig {
            params: p.clone(),
            ..StudyConfig::default()
        };
        for id in CaseId::ALL {
            let case = manufactured_case(id, &p, ConvectionForm::Standard).unwrap();
            let r: Vec<f64> = [4, 8, 16]
                .iter()
                .map(|&l| consistency_residual(&study_disc(l, &cfg).unwrap(), &case, 0.25))
                .collect();
            assert!(r[1] < r[0] && r[2] < r[1], "{}: {r:?}", id.as_str());
        }
    }

    #[test]
    fn interpolation_rates() {
        let p = params();
        let cfg = StudyConfig {
            params: p,
            ..StudyConfig::default()
        };
        let f = exact_fields(CaseId::SmoothTrig);
        let e: Vec<[f64; 6]> = [8, 16, 32]
            .iter()
            .map(|&l| interpolation_errors(&study_disc(l, &cfg).unwrap(), &f, 0.1).unwrap().as_array())
            .collect();
        let exp = expected_rates(2);
        for i in 0..6 {
            let r = rate(e[1][i], e[2][i], 1.0 / 16.0, 1.0 / 32.0);
            assert!(r > exp[i] - 0.15, "{}: {r}", FieldErrors::NAMES[i]);
        }
    }

    fn tiny(n: usize, split: f64) -> Discretization {
        let mesh = build_rect_two_domain(n, n, split).unwrap();
        Discretization::new(mesh, params(), DofOptions::default(), QuadOptions::default()).unwrap()
    }

    #[test]
    fn kernel_oracle_zero_data() {
        let d = tiny(2, 0.5);
        let cfg = SchemeConfig {
            scheme: Scheme::ImplicitEuler,
            dt: 0.1,
            t_final: 0.1,
            ..SchemeConfig::default()
        };
        let r = kernel_oracle(&d, &ProblemData::zero(), cfg, &StateVector::zeros(d.sizes())).unwrap();
        assert_eq!(r.max_diff(), 0.0);
        assert_eq!(r.full_pi_norm, 0.0);
        assert_eq!(r.rank_svd, r.n_pf);
        assert_eq!(r.rank_gram, r.rank_svd);
        assert_eq!(r.kernel_dim, r.n_u - r.rank_svd);
    }

    #[test]
    fn kernel_oracle_inlet_pressure() {
        let mut data = ProblemData::zero();
        data.p_in = expr::num(1.0);
        for (n, split) in [(2, 0.5), (3, 1.0 / 3.0)] {
            let d = tiny(n, split);
            for convection in [ConvectionForm::Off, ConvectionForm::Standard] {
                let cfg = SchemeConfig {
                    scheme: Scheme::ImplicitEuler,
                    dt: 0.1,
                    t_final: 0.1,
                    convection,
                    newton_tol: 1e-13,
                    ..SchemeConfig::default()
                };
                let r = kernel_oracle(&d, &data, cfg, &StateVector::zeros(d.sizes())).unwrap();
                assert!(r.agrees(1e-10), "{r:?}");
                assert!(r.full_pi_norm > 0.0);
            }
        }
    }

    #[test]
    fn contraction_of_synthetic_histories() {
        let quad = [1e-1, 1e-2, 1e-4, 1e-8, 1e-16];
        let p = contraction_exponent(&quad, 1e-12).unwrap();
        assert!((p - 2.0).abs() < 1e-12);
        let lin = [1.0, 0.5, 0.25, 0.125];
        assert!((contraction_exponent(&lin, 0.0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(contraction_exponent(&[1.0, 1e-20], 1e-12), None);
    }
}
