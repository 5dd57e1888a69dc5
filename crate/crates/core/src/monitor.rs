//! Data functionals, the small-data condition and the a priori bounds,
//! evaluated along a discrete trajectory.
//!
//! Every constant entering a bound is a discrete estimate from
//! [`crate::constants`], so verdicts are "discrete-constant certificates"
//! tied to the mesh level the constants were computed on.
//!
//! Time derivatives of the solution are backward differences
//! `(w_n - w_{n-1}) / dt`. For the midpoint rule these are second-order
//! accurate at `t_{n-1/2}` and first-order at `t_n`.

use alloc::string::String;
use alloc::vec::Vec;

use crate::assembly::{
    assemble_loads, cell_points, convection, facet_points, mass, stiffness, CompiledData,
    ConvectionForm, Discretization, PhysicalParams, ProblemData, StateVector,
};
use crate::constants::{ConstantError, Constants, InletNorm};
use crate::fem::quadrature;
use crate::math;
use crate::mesh::{FacetTag, Subdomain};
use crate::sparse::Csr;
use crate::timestepper::{Scheme, Trajectory};

pub const LABEL: &str = "discrete-constant certificates";

const IDENTITY: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];

/// Per-row flag bits.
pub mod flag {
    pub const SMALL_DATA: u32 = 1 << 0;
    pub const MAINBOUND1: u32 = 1 << 1;
    pub const DUMBOUND: u32 = 1 << 2;
    pub const MAINBOUND2_ROOTED: u32 = 1 << 3;
    pub const MAINBOUND2_SQUARED: u32 = 1 << 4;
    pub const PFBOUND: u32 = 1 << 5;
    pub const UNIQUENESS: u32 = 1 << 6;
    /// Set when the row has derivative-based bounds.
    pub const EVALUATED: u32 = 1 << 7;
    /// Energy identity of the step into this row failed.
    pub const INCONSISTENT: u32 = 1 << 8;
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MonitorError {
    #[error("final time must be positive and finite (got {0})")]
    Horizon(f64),
    #[error("time quadrature needs at least one panel")]
    Panels,
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error(transparent)]
    Constants(#[from] ConstantError),
}

/// Squared `L^2` norms of the data at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DataNorms {
    /// On the fluid inlet.
    pub p_in: f64,
    pub f_f: f64,
    pub f_p: f64,
    pub f_s: f64,
}

/// Squared norms of the data at time `t`, using the assembly quadrature.
pub fn data_norms(disc: &Discretization, data: &CompiledData, t: f64) -> DataNorms {
    let mesh = &disc.mesh;
    let mut out = DataNorms::default();
    for (tri, cell) in mesh.triangles.iter().enumerate() {
        for cp in cell_points(mesh, tri, &disc.rule) {
            let [x, y] = cp.x;
            match cell.sub {
                Subdomain::Fluid => {
                    let a = data.f_f[0].eval_xyt(x, y, t);
                    let b = data.f_f[1].eval_xyt(x, y, t);
                    out.f_f += cp.w * (a * a + b * b);
                }
                Subdomain::Poro => {
                    let a = data.f_s[0].eval_xyt(x, y, t);
                    let b = data.f_s[1].eval_xyt(x, y, t);
                    let p = data.f_p.eval_xyt(x, y, t);
                    out.f_s += cp.w * (a * a + b * b);
                    out.f_p += cp.w * p * p;
                }
            }
        }
    }
    for fp in facet_points(mesh, &disc.dofs.topo, FacetTag::FluidInlet, Subdomain::Fluid, &disc.edge_rule) {
        let p = data.p_in.eval_xyt(fp.x[0], fp.x[1], t);
        out.p_in += fp.w * p * p;
    }
    out
}

/// Composite Gauss rule in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeQuadrature {
    pub panels: usize,
    /// Points per panel.
    pub points: usize,
}

impl Default for TimeQuadrature {
    fn default() -> Self {
        TimeQuadrature { panels: 64, points: 5 }
    }
}

impl TimeQuadrature {
    /// Nodes and weights on `[0, t_final]`.
    pub fn nodes(&self, t_final: f64) -> Vec<(f64, f64)> {
        let (x, w) = quadrature::gauss_legendre(self.points);
        let h = t_final / self.panels as f64;
        let mut out = Vec::with_capacity(self.panels * self.points);
        for k in 0..self.panels {
            for (xi, wi) in x.iter().zip(&w) {
                out.push((h * (k as f64 + xi), h * wi));
            }
        }
        out
    }
}

/// Data functionals `C1(t)`, `C2(t)`, `C3` and their time norms.
#[derive(Debug, Clone, PartialEq)]
pub struct DataFunctionals {
    pub t_final: f64,
    /// Weights of `(p_in, f_f, f_p, f_s)` in `C1^2`.
    pub w1: [f64; 4],
    /// Weights in `C2^2` (applied to time-differentiated data).
    pub w2: [f64; 4],
    pub data: CompiledData,
    pub data_dot: CompiledData,
    pub c1_l2_sq: f64,
    pub c1_linf_sq: f64,
    pub c2_l2_sq: f64,
    pub c2_linf_sq: f64,
    /// `C3^2`.
    pub c3_sq: f64,
    /// `||f_s(0)||^2` over the poroelastic domain.
    pub fs0_sq: f64,
}

fn weighted(w: &[f64; 4], n: &DataNorms) -> f64 {
    w[0] * n.p_in + w[1] * n.f_f + w[2] * n.f_p + w[3] * n.f_s
}

impl DataFunctionals {
    /// Derivatives of the data are taken symbolically.
    pub fn new(
        disc: &Discretization,
        data: &ProblemData,
        constants: &Constants,
        t_final: f64,
        tq: TimeQuadrature,
    ) -> Result<DataFunctionals, MonitorError> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(MonitorError::Horizon(t_final));
        }
        if tq.panels == 0 || tq.points == 0 {
            return Err(MonitorError::Panels);
        }
        let p = &disc.params;
        let c = constants;
        let kf2 = c.kf * c.kf;
        let w1 = [
            3.0 * c.t2 * c.t2 * kf2 / (4.0 * p.mu_f),
            3.0 * c.p1 * c.p1 * kf2 / (4.0 * p.mu_f),
            c.p3 * c.p3 / (2.0 * p.k_min()),
            0.5,
        ];
        let w2 = [2.0 * w1[0], 2.0 * w1[1], w1[2], w1[3]];
        let compiled = data.compile();
        let dot = data.time_derivative().compile();

        let (mut c1_l2_sq, mut c1_linf_sq, mut c2_l2_sq, mut c2_linf_sq) = (0.0, 0.0, 0.0, 0.0);
        let mut sample = |t: f64, w: f64| {
            let a = weighted(&w1, &data_norms(disc, &compiled, t));
            let b = weighted(&w2, &data_norms(disc, &dot, t));
            c1_l2_sq += w * a;
            c2_l2_sq += w * b;
            c1_linf_sq = f64::max(c1_linf_sq, a);
            c2_linf_sq = f64::max(c2_linf_sq, b);
        };
        for (t, w) in tq.nodes(t_final) {
            sample(t, w);
        }
        for k in 0..=tq.panels {
            sample(t_final * k as f64 / tq.panels as f64, 0.0);
        }

        let n0 = data_norms(disc, &compiled, 0.0);
        let inlet_h00 = if data.p_in.is_zero() {
            0.0
        } else {
            let norm = InletNorm::new(disc)?;
            let prog = &compiled.p_in;
            norm.norm_sq(&disc.dofs.node_xy, |x| prog.eval_xyt(x[0], x[1], 0.0))
        };
        let c3_sq = c.cj * c.cj / p.rho_f * inlet_h00
            + n0.f_f / p.rho_f
            + n0.f_p / (2.0 * p.s0)
            + n0.f_s / (2.0 * p.rho_s);
        Ok(DataFunctionals {
            t_final,
            w1,
            w2,
            data: compiled,
            data_dot: dot,
            c1_l2_sq,
            c1_linf_sq,
            c2_l2_sq,
            c2_linf_sq,
            c3_sq,
            fs0_sq: n0.f_s,
        })
    }

    pub fn c1(&self, disc: &Discretization, t: f64) -> f64 {
        math::sqrt(weighted(&self.w1, &data_norms(disc, &self.data, t)))
    }

    pub fn c2(&self, disc: &Discretization, t: f64) -> f64 {
        math::sqrt(weighted(&self.w2, &data_norms(disc, &self.data_dot, t)))
    }

    /// `C3` as defined, with the square root.
    pub fn c3(&self) -> f64 {
        math::sqrt(self.c3_sq)
    }

    pub fn c1_l2(&self) -> f64 {
        math::sqrt(self.c1_l2_sq)
    }

    pub fn c2_l2(&self) -> f64 {
        math::sqrt(self.c2_l2_sq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallData {
    pub ok: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

pub fn small_data_lhs(f: &DataFunctionals, rho_s: f64) -> f64 {
    let t = f.t_final;
    let e = math::exp(t / rho_s);
    (1.0 + t / rho_s * e) * f.c2_l2_sq
        + t / (rho_s * rho_s) * e * f.fs0_sq
        + (1.0 + e / rho_s + t / (rho_s * rho_s) * e) * f.c1_l2_sq
        + f.c1_linf_sq
}

pub fn small_data_rhs(params: &PhysicalParams, c: &Constants) -> f64 {
    let mu3 = params.mu_f * params.mu_f * params.mu_f;
    let kf6 = math::powi(c.kf, 6);
    mu3 / (9.0 * params.rho_f * params.rho_f * math::powi(c.sf, 4) * kf6)
}

pub fn check_small_data(f: &DataFunctionals, params: &PhysicalParams, c: &Constants) -> SmallData {
    let lhs = small_data_lhs(f, params.rho_s);
    let rhs = small_data_rhs(params, c);
    SmallData {
        ok: lhs < rhs,
        lhs,
        rhs,
        margin: rhs - lhs,
    }
}

/// Data scale at which the small-data condition becomes an equality, from
/// `LHS(s) = s^2 LHS(1)`. `None` for zero data.
pub fn critical_scale(sd: &SmallData) -> Option<f64> {
    (sd.lhs > 0.0).then(|| math::sqrt(sd.rhs / sd.lhs))
}

/// Root of `lhs(s) = rhs` for increasing `lhs` with `lhs(0) < rhs`, by
/// bisection. `None` if no bracket is found below `1e12`.
pub fn bisect_scale(lhs: impl Fn(f64) -> f64, rhs: f64) -> Option<f64> {
    let (mut lo, mut hi) = (0.0, 1.0);
    while lhs(hi) < rhs {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if lhs(mid) < rhs {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Derivative-based bound of one row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mainbound2Row {
    pub lhs: f64,
    /// RHS with `C3` taken as defined (rooted).
    pub rhs_rooted: f64,
    /// RHS with `C3^2` in place of `C3`.
    pub rhs_squared: f64,
}

/// Fluid pressure bound of one row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfRow {
    /// `||pi||` in `L^2` of the fluid domain.
    pub lhs: f64,
    /// Bound with the computed `||u'||`.
    pub rhs: f64,
    /// Bound with `||u'||` replaced by its a priori bound, per `C3` reading.
    pub rhs_apriori_rooted: f64,
    pub rhs_apriori_squared: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateRow {
    pub step: usize,
    pub t: f64,
    pub ke_f: f64,
    pub ke_s: f64,
    pub elastic: f64,
    pub div_elastic: f64,
    pub storage: f64,
    /// Cumulative `int 2 mu_f ||D u||^2`.
    pub diss_f: f64,
    /// Cumulative `int ||K^{1/2} grad p_p||^2`.
    pub diss_p: f64,
    /// Cumulative interface slip dissipation.
    pub diss_beta: f64,
    pub c1_t: f64,
    pub lhs_mb1: f64,
    pub rhs_mb1: f64,
    /// `||D u||` at this level.
    pub dumbound_lhs: f64,
    pub dumbound_rhs: f64,
    pub uniqueness_rhs: f64,
    pub mb2: Option<Mainbound2Row>,
    pub pf: Option<PfRow>,
    /// Relative defect of the energy identity of the step into this row.
    pub identity_defect: f64,
    pub flags: u32,
}

impl CertificateRow {
    pub fn energy(&self) -> f64 {
        self.ke_f + self.ke_s + self.elastic + self.div_elastic + self.storage
    }

    pub fn margin_mb1(&self) -> f64 {
        self.rhs_mb1 - self.lhs_mb1
    }

    pub fn margin_dumbound(&self) -> f64 {
        self.dumbound_rhs - self.dumbound_lhs
    }

    pub fn margin_uniqueness(&self) -> f64 {
        self.uniqueness_rhs - self.dumbound_lhs
    }

    pub fn margin_mb2_rooted(&self) -> Option<f64> {
        self.mb2.map(|m| m.rhs_rooted - m.lhs)
    }

    pub fn margin_mb2_squared(&self) -> Option<f64> {
        self.mb2.map(|m| m.rhs_squared - m.lhs)
    }

    pub fn margin_pf(&self) -> Option<f64> {
        self.pf.map(|p| p.rhs - p.lhs)
    }

    pub fn has(&self, bit: u32) -> bool {
        self.flags & bit != 0
    }
}

/// Result of the per-step discrete energy identity check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    pub max_defect: f64,
    pub tol: f64,
    pub ok: bool,
}

/// Discrete Gronwall check on `zeta_n = ||theta_n||^2` with
/// `B = 2 ||C1||^2_{L2} / rho_s` and `C = 1 / rho_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GronwallCheck {
    pub b: f64,
    pub c: f64,
    /// `zeta_n <= B + C dt sum_{k<n} zeta_k` for every `n`.
    pub premise_ok: bool,
    /// `zeta_n <= B exp(C t_n)` for every `n`.
    pub conclusion_ok: bool,
    /// Smallest `B + C dt sum - zeta_n`.
    pub premise_margin: f64,
    /// Smallest `B exp(C t_n) - zeta_n`.
    pub conclusion_margin: f64,
}

impl GronwallCheck {
    /// False only if the premise holds and the conclusion fails.
    pub fn implication_holds(&self) -> bool {
        !self.premise_ok || self.conclusion_ok
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalFlags {
    pub small_data_ok: bool,
    pub mainbound1_ok: bool,
    pub dumbound_ok: bool,
    /// `None` when no row has derivative data.
    pub mainbound2_rooted_ok: Option<bool>,
    pub mainbound2_squared_ok: Option<bool>,
    pub pfbound_ok: Option<bool>,
    pub uniqueness_ok: bool,
    pub integrator_consistent: bool,
}

impl GlobalFlags {
    /// Holds under both `C3` readings.
    pub fn mainbound2_ok(&self) -> Option<bool> {
        Some(self.mainbound2_rooted_ok? && self.mainbound2_squared_ok?)
    }
}

/// Smallest margin of each bound over all rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalMargins {
    pub small_data: f64,
    pub mainbound1: f64,
    pub dumbound: f64,
    pub mainbound2_rooted: Option<f64>,
    pub mainbound2_squared: Option<f64>,
    pub pfbound: Option<f64>,
    pub uniqueness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub label: &'static str,
    /// Mesh level the constants were computed on.
    pub mesh_level: String,
    pub scheme: Scheme,
    pub t_final: f64,
    pub rows: Vec<CertificateRow>,
    pub small_data: SmallData,
    pub s_star: Option<f64>,
    pub identity: IdentityCheck,
    pub gronwall: GronwallCheck,
    pub flags: GlobalFlags,
    pub margins: GlobalMargins,
}

impl CertificateReport {
    pub fn regime(&self) -> &'static str {
        if self.small_data.ok {
            "inside small-data regime"
        } else {
            "outside small-data regime"
        }
    }

    pub fn status(&self) -> &'static str {
        if self.flags.integrator_consistent {
            "integrator-consistent"
        } else {
            "integrator-inconsistent"
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub convection: ConvectionForm,
    /// Relative tolerance of the energy identity.
    pub identity_rtol: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            convection: ConvectionForm::Standard,
            identity_rtol: 1e-6,
        }
    }
}

struct Norms {
    vel_h1: Csr,
    disp_h1: Csr,
    pore_h1: Csr,
    pf_mass: Csr,
}

impl Norms {
    fn new(disc: &Discretization) -> Norms {
        let (m, r, d) = (&disc.mesh, &disc.rule, &disc.dofs);
        let h1 = |s| stiffness(m, s, r, IDENTITY).add(&mass(m, s, r, 1.0), 1.0);
        Norms {
            vel_h1: h1(&d.velocity),
            disp_h1: h1(&d.displacement),
            pore_h1: h1(&d.pressure_p),
            pf_mass: mass(m, &d.pressure_f, r, 1.0),
        }
    }
}

fn quad(a: &Csr, x: &[f64]) -> f64 {
    a.form(x, x)
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn mix(a: &[f64], b: &[f64], c: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (1.0 - c) * x + c * y).collect()
}

fn slip_form(disc: &Discretization, alpha: &[f64], theta: &[f64]) -> f64 {
    let b = &disc.blocks;
    quad(&b.bf_slip, alpha) - 2.0 * b.e.form(alpha, theta) + quad(&b.f, theta)
}

/// Energy identity defect of one step and the magnitude it is measured
/// against. Testing the stage equations with the stage values gives
///
/// ```text
/// E_{n+1} - E_n + (c - 1/2)(|da|_Af^2 + |dth|_As^2 + |db|_Bs^2 + |dg|_Ap^2)
///   + dt (a*.Bf_visc a* + g*.Bp g* + slip(a*, th*))
///   = dt (a*.a + th*.b + g*.c - a*.N(a*) + pi.G a*)
/// ```
fn identity_defect(
    disc: &Discretization,
    data: &CompiledData,
    form: ConvectionForm,
    c: f64,
    dt: f64,
    prev: &StateVector,
    next: &StateVector,
) -> (f64, f64) {
    let b = &disc.blocks;
    let energy = |s: &StateVector| {
        0.5 * (quad(&b.af, &s.alpha) + quad(&b.as_, &s.theta) + quad(&b.bs, &s.beta) + quad(&b.ap, &s.gamma))
    };
    let (e0, e1) = (energy(prev), energy(next));
    let jumps = quad(&b.af, &sub(&next.alpha, &prev.alpha))
        + quad(&b.as_, &sub(&next.theta, &prev.theta))
        + quad(&b.bs, &sub(&next.beta, &prev.beta))
        + quad(&b.ap, &sub(&next.gamma, &prev.gamma));
    let numerical = (c - 0.5) * jumps;
    let a = mix(&prev.alpha, &next.alpha, c);
    let th = mix(&prev.theta, &next.theta, c);
    let g = mix(&prev.gamma, &next.gamma, c);
    let diss = dt * (quad(&b.bf_visc, &a) + quad(&b.bp, &g) + slip_form(disc, &a, &th));
    let loads = assemble_loads(disc, data, prev.t + c * dt);
    let (n, _) = convection(disc, &a, form, false);
    let work = dt
        * (math::dot(&a, &loads.a) + math::dot(&th, &loads.b) + math::dot(&g, &loads.c) - math::dot(&a, &n)
            + b.gdiv.form(&next.pi, &a));
    let defect = e1 - e0 + numerical + diss - work;
    let scale = e0.abs() + e1.abs() + numerical.abs() + diss.abs() + work.abs();
    (defect, scale)
}

/// Per-step certificate of a trajectory.
pub fn energy_report(
    disc: &Discretization,
    traj: &Trajectory,
    functionals: &DataFunctionals,
    constants: &Constants,
    mesh_level: &str,
    opts: ReportOptions,
) -> Result<CertificateReport, MonitorError> {
    if traj.states.is_empty() {
        return Err(MonitorError::EmptyTrajectory);
    }
    let p = &disc.params;
    let k = constants;
    let b = &disc.blocks;
    let norms = Norms::new(disc);
    let dt = traj.dt;
    let c = traj.scheme.stage_weight();
    let t_final = functionals.t_final;
    let rs = p.rho_s;

    let small_data = check_small_data(functionals, p, k);
    let rhs_mb1 = (1.0 + t_final / rs * math::exp(t_final / rs)) * functionals.c1_l2_sq;
    let sk = k.sf * k.sf * k.kf * k.kf * k.kf;
    let dumbound_rhs = p.mu_f / (3.0 * p.rho_f * sk);
    let uniqueness_rhs = p.mu_f / sk;
    let e2 = math::exp(2.0 * t_final / (rs * rs));
    let mb2_base = (1.0 + t_final / rs * e2) * functionals.c2_l2_sq;
    let mb2_c3 = 0.5 * t_final * e2;
    let mb2_rooted = mb2_base + mb2_c3 * functionals.c3();
    let mb2_squared = mb2_base + mb2_c3 * functionals.c3_sq;

    let d_norm = |alpha: &[f64]| math::sqrt((quad(&b.bf_visc, alpha) / (2.0 * p.mu_f)).max(0.0));
    let h1 = |m: &Csr, x: &[f64]| math::sqrt(quad(m, x).max(0.0));

    let mut rows = Vec::with_capacity(traj.states.len());
    let (mut diss_f, mut diss_p, mut diss_beta) = (0.0, 0.0, 0.0);
    let mut diss_rate = 0.0;
    let mut max_defect: f64 = 0.0;
    for (n, s) in traj.states.iter().enumerate() {
        let mut defect = 0.0;
        let mut mb2 = None;
        let mut pf = None;
        if n > 0 {
            let prev = &traj.states[n - 1];
            let (d, scale) = identity_defect(disc, &functionals.data, opts.convection, c, dt, prev, s);
            defect = if scale > 0.0 { d.abs() / scale } else { d.abs() };
            max_defect = max_defect.max(defect);

            let a = mix(&prev.alpha, &s.alpha, c);
            let th = mix(&prev.theta, &s.theta, c);
            let g = mix(&prev.gamma, &s.gamma, c);
            diss_f += dt * quad(&b.bf_visc, &a);
            diss_p += dt * quad(&b.bp, &g);
            diss_beta += dt * slip_form(disc, &a, &th);

            let r = &traj.rates[n - 1];
            diss_rate += dt * 0.5 * (quad(&b.bf_visc, &r.alpha) + quad(&b.bp, &r.gamma));
            let lhs = 0.5
                * (quad(&b.af, &r.alpha)
                    + quad(&b.as_, &r.theta)
                    + quad(&b.bs_mu, &s.theta)
                    + quad(&b.bs_lambda, &s.theta)
                    + quad(&b.ap, &r.gamma))
                + diss_rate;
            mb2 = Some(Mainbound2Row {
                lhs,
                rhs_rooted: mb2_rooted,
                rhs_squared: mb2_squared,
            });

            let ts = prev.t + c * dt;
            let nd = data_norms(disc, &functionals.data, ts);
            let u_h1 = h1(&norms.vel_h1, &a);
            let rest = 2.0 * p.mu_f * d_norm(&a)
                + p.rho_f * k.sf * k.sf * u_h1 * u_h1
                + k.t1 * k.t3 * h1(&norms.pore_h1, &g)
                + p.beta_slip * k.t1 * k.t1 * u_h1
                + p.beta_slip * k.t1 * k.t5 * h1(&norms.disp_h1, &th)
                + k.t2 * math::sqrt(nd.p_in)
                + math::sqrt(nd.f_f);
            let udot = math::sqrt((quad(&b.af, &r.alpha) / p.rho_f).max(0.0));
            let udot_bound = |rhs: f64| math::sqrt(2.0 / p.rho_f * rhs);
            pf = Some(PfRow {
                lhs: h1(&norms.pf_mass, &s.pi),
                rhs: (p.rho_f * udot + rest) / k.kappa,
                rhs_apriori_rooted: (p.rho_f * udot_bound(mb2_rooted) + rest) / k.kappa,
                rhs_apriori_squared: (p.rho_f * udot_bound(mb2_squared) + rest) / k.kappa,
            });
        }
        let ke_f = 0.5 * quad(&b.af, &s.alpha);
        let ke_s = 0.5 * quad(&b.as_, &s.theta);
        let elastic = 0.5 * quad(&b.bs_mu, &s.beta);
        let div_elastic = 0.5 * quad(&b.bs_lambda, &s.beta);
        let storage = 0.5 * quad(&b.ap, &s.gamma);
        let lhs_mb1 = ke_f + ke_s + elastic + div_elastic + storage + 0.5 * diss_f + 0.5 * diss_p;
        let dumbound_lhs = d_norm(&s.alpha);

        let mut row = CertificateRow {
            step: n,
            t: s.t,
            ke_f,
            ke_s,
            elastic,
            div_elastic,
            storage,
            diss_f,
            diss_p,
            diss_beta,
            c1_t: functionals.c1(disc, s.t),
            lhs_mb1,
            rhs_mb1,
            dumbound_lhs,
            dumbound_rhs,
            uniqueness_rhs,
            mb2,
            pf,
            identity_defect: defect,
            flags: 0,
        };
        let mut f = 0;
        if small_data.ok {
            f |= flag::SMALL_DATA;
        }
        if row.margin_mb1() >= 0.0 {
            f |= flag::MAINBOUND1;
        }
        if row.margin_dumbound() > 0.0 {
            f |= flag::DUMBOUND;
        }
        if row.margin_uniqueness() >= 0.0 {
            f |= flag::UNIQUENESS;
        }
        if row.mb2.is_some() {
            f |= flag::EVALUATED;
        }
        if row.margin_mb2_rooted().is_some_and(|m| m >= 0.0) {
            f |= flag::MAINBOUND2_ROOTED;
        }
        if row.margin_mb2_squared().is_some_and(|m| m >= 0.0) {
            f |= flag::MAINBOUND2_SQUARED;
        }
        if row.margin_pf().is_some_and(|m| m >= 0.0) {
            f |= flag::PFBOUND;
        }
        if defect > opts.identity_rtol {
            f |= flag::INCONSISTENT;
        }
        row.flags = f;
        rows.push(row);
    }

    let identity = IdentityCheck {
        max_defect,
        tol: opts.identity_rtol,
        ok: max_defect <= opts.identity_rtol,
    };
    let gronwall = gronwall_check(disc, traj, functionals);

    let min = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::INFINITY, f64::min);
    let min_opt = |it: &mut dyn Iterator<Item = f64>| {
        let m = it.fold(f64::INFINITY, f64::min);
        (m < f64::INFINITY).then_some(m)
    };
    let margins = GlobalMargins {
        small_data: small_data.margin,
        mainbound1: min(&mut rows.iter().map(|r| r.margin_mb1())),
        dumbound: min(&mut rows.iter().map(|r| r.margin_dumbound())),
        mainbound2_rooted: min_opt(&mut rows.iter().filter_map(|r| r.margin_mb2_rooted())),
        mainbound2_squared: min_opt(&mut rows.iter().filter_map(|r| r.margin_mb2_squared())),
        pfbound: min_opt(&mut rows.iter().filter_map(|r| r.margin_pf())),
        uniqueness: min(&mut rows.iter().map(|r| r.margin_uniqueness())),
    };
    let ok = identity.ok;
    let flags = GlobalFlags {
        small_data_ok: ok && small_data.ok,
        mainbound1_ok: ok && margins.mainbound1 >= 0.0,
        dumbound_ok: ok && margins.dumbound > 0.0,
        mainbound2_rooted_ok: margins.mainbound2_rooted.map(|m| ok && m >= 0.0),
        mainbound2_squared_ok: margins.mainbound2_squared.map(|m| ok && m >= 0.0),
        pfbound_ok: margins.pfbound.map(|m| ok && m >= 0.0),
        uniqueness_ok: ok && margins.uniqueness >= 0.0,
        integrator_consistent: ok,
    };
    Ok(CertificateReport {
        label: LABEL,
        mesh_level: String::from(mesh_level),
        scheme: traj.scheme,
        t_final,
        rows,
        small_data,
        s_star: critical_scale(&small_data),
        identity,
        gronwall,
        flags,
        margins,
    })
}

/// Discrete Gronwall premise and conclusion on `zeta_n = ||theta_n||^2`.
pub fn gronwall_check(disc: &Discretization, traj: &Trajectory, f: &DataFunctionals) -> GronwallCheck {
    let rs = disc.params.rho_s;
    let b = 2.0 / rs * f.c1_l2_sq;
    let c = 1.0 / rs;
    let slack = |v: f64| 1e-12 * v.abs();
    let t0 = traj.states.first().map_or(0.0, |s| s.t);
    let mut sum = 0.0;
    let (mut pm, mut cm) = (f64::INFINITY, f64::INFINITY);
    let (mut premise_ok, mut conclusion_ok) = (true, true);
    for s in &traj.states {
        let zeta = quad(&disc.blocks.as_, &s.theta) / rs;
        let bound = b + c * traj.dt * sum;
        let concl = b * math::exp(c * (s.t - t0));
        premise_ok &= zeta <= bound + slack(bound);
        conclusion_ok &= zeta <= concl + slack(concl);
        pm = pm.min(bound - zeta);
        cm = cm.min(concl - zeta);
        sum += zeta;
    }
    GronwallCheck {
        b,
        c,
        premise_ok,
        conclusion_ok,
        premise_margin: pm,
        conclusion_margin: cm,
    }
}

/// Bounds at scale `s` of the data, from the unit-scale functionals.
pub fn scaled_small_data(sd: &SmallData, s: f64) -> SmallData {
    let lhs = s * s * sd.lhs;
    SmallData {
        ok: lhs < sd.rhs,
        lhs,
        rhs: sd.rhs,
        margin: sd.rhs - lhs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::assembly::QuadOptions;
    use crate::expr::{self, Var};
    use crate::fem::DofOptions;
    use crate::mesh::build_rect_two_domain;
    use crate::timestepper::{run, SchemeConfig};

    fn disc(n: usize) -> Discretization {
        let mesh = build_rect_two_domain(n, n, 0.5).unwrap();
        Discretization::new(mesh, PhysicalParams::default(), DofOptions::default(), QuadOptions::default()).unwrap()
    }

    fn unit_constants() -> Constants {
        Constants {
            t1: 0.7,
            t2: 0.6,
            t3: 1.0,
            t4: 0.6,
            t5: 0.7,
            p1: 0.32,
            p2: 0.32,
            p3: 0.32,
            sf: 0.44,
            kf: 3.0,
            kappa: 0.6,
            cj: 1.0,
        }
    }

    fn forced() -> ProblemData {
        let t = expr::var(Var::T);
        let x = expr::var(Var::X);
        let mut d = ProblemData::zero();
        d.f_f = [expr::mul(expr::sin(x.clone()), expr::add(expr::num(1.0), t.clone())), expr::num(0.5)];
        d.f_s = [expr::num(0.2), expr::mul(t.clone(), t.clone())];
        d.f_p = expr::cos(expr::add(x, t.clone()));
        d.p_in = expr::mul(expr::num(0.3), expr::add(expr::num(1.0), t));
        d
    }

    #[test]
    fn zero_data_gives_zero_functionals() {
        let d = disc(4);
        let f = DataFunctionals::new(&d, &ProblemData::zero(), &unit_constants(), 1.0, TimeQuadrature::default()).unwrap();
        assert_eq!(f.c1_l2_sq, 0.0);
        assert_eq!(f.c2_l2_sq, 0.0);
        assert_eq!(f.c3(), 0.0);
        let sd = check_small_data(&f, &d.params, &unit_constants());
        assert!(sd.ok);
        assert_eq!(sd.margin, small_data_rhs(&d.params, &unit_constants()));
        assert_eq!(critical_scale(&sd), None);
    }

    #[test]
    fn constant_structure_force() {
        let d = disc(4);
        let mut data = ProblemData::zero();
        data.f_s = [expr::num(3.0), expr::num(-1.0)];
        let f = DataFunctionals::new(&d, &data, &unit_constants(), 0.5, TimeQuadrature::default()).unwrap();
        // poroelastic area is 0.5
        let g = math::sqrt(10.0 * 0.5);
        for t in [0.0, 0.2, 0.5] {
            assert!((f.c1(&d, t) - g / math::sqrt(2.0)).abs() < 1e-13);
        }
        assert!((f.c1_l2_sq - 0.5 * g * g * 0.5).abs() < 1e-13);
        assert_eq!(f.c2_l2_sq, 0.0);
    }

    #[test]
    fn homogeneity_in_data_scale() {
        let d = disc(4);
        let k = unit_constants();
        let tq = TimeQuadrature::default();
        let f1 = DataFunctionals::new(&d, &forced(), &k, 0.5, tq).unwrap();
        let l1 = small_data_lhs(&f1, d.params.rho_s);
        for s in [0.5, 2.0] {
            let fs = DataFunctionals::new(&d, &forced().scaled(s), &k, 0.5, tq).unwrap();
            assert!((fs.c1_l2() - s * f1.c1_l2()).abs() <= 1e-12 * s * f1.c1_l2());
            assert!((fs.c2_l2() - s * f1.c2_l2()).abs() <= 1e-12 * s * f1.c2_l2());
            assert!((fs.c3() - s * f1.c3()).abs() <= 1e-12 * s * f1.c3());
            let ls = small_data_lhs(&fs, d.params.rho_s);
            assert!((ls - s * s * l1).abs() <= 1e-12 * ls);
        }
    }

    #[test]
    fn lhs_increases_with_horizon() {
        let d = disc(4);
        let k = unit_constants();
        let tq = TimeQuadrature::default();
        let a = DataFunctionals::new(&d, &forced(), &k, 0.5, tq).unwrap();
        let b = DataFunctionals::new(&d, &forced(), &k, 1.0, tq).unwrap();
        assert!(small_data_lhs(&b, 1.0) > small_data_lhs(&a, 1.0));
    }

    #[test]
    fn bisection_matches_closed_form() {
        let d = disc(4);
        let k = unit_constants();
        let f = DataFunctionals::new(&d, &forced(), &k, 0.5, TimeQuadrature::default()).unwrap();
        let sd = check_small_data(&f, &d.params, &k);
        let s_star = critical_scale(&sd).unwrap();
        let s_bis = bisect_scale(|s| scaled_small_data(&sd, s).lhs, sd.rhs).unwrap();
        assert!((s_bis - s_star).abs() <= 1e-12 * s_star);
        let at = scaled_small_data(&sd, s_bis);
        assert!((at.lhs - sd.rhs).abs() <= 1e-10 * sd.rhs);
    }

    #[test]
    fn time_quadrature_is_exact_for_polynomials() {
        let d = disc(4);
        let k = unit_constants();
        let t = expr::var(Var::T);
        let mut data = ProblemData::zero();
        data.f_s = [expr::add(expr::num(1.0), expr::mul(t.clone(), t)), expr::num(0.0)];
        let a = DataFunctionals::new(&d, &data, &k, 0.7, TimeQuadrature { panels: 8, points: 5 }).unwrap();
        let b = DataFunctionals::new(&d, &data, &k, 0.7, TimeQuadrature { panels: 16, points: 5 }).unwrap();
        assert!((a.c1_l2() - b.c1_l2()).abs() <= 1e-10);
        // int_0^T (1 + t^2)^2 dt * area / 2
        let tt: f64 = 0.7;
        let exact = 0.25 * (tt + 2.0 * tt.powi(3) / 3.0 + tt.powi(5) / 5.0);
        assert!((a.c1_l2_sq - exact).abs() < 1e-13);
    }

    #[test]
    fn zero_run_has_zero_terms_and_true_flags() {
        let d = disc(4);
        let k = unit_constants();
        let cfg = SchemeConfig {
            dt: 0.05,
            t_final: 0.2,
            ..SchemeConfig::default()
        };
        let traj = run(&d, &ProblemData::zero(), cfg, None).unwrap();
        let f = DataFunctionals::new(&d, &ProblemData::zero(), &k, 0.2, TimeQuadrature::default()).unwrap();
        let rep = energy_report(&d, &traj, &f, &k, "4", ReportOptions::default()).unwrap();
        assert_eq!(rep.rows.len(), 5);
        for r in &rep.rows {
            assert_eq!(r.lhs_mb1, 0.0);
            assert_eq!(r.dumbound_lhs, 0.0);
        }
        let g = rep.flags;
        assert!(g.small_data_ok && g.mainbound1_ok && g.dumbound_ok && g.uniqueness_ok);
        assert_eq!(g.mainbound2_ok(), Some(true));
        assert_eq!(g.pfbound_ok, Some(true));
        assert!(g.integrator_consistent);
        assert_eq!(rep.label, LABEL);
        assert!(rep.gronwall.premise_ok && rep.gronwall.conclusion_ok);
    }

    #[test]
    fn energy_identity_holds_for_both_schemes() {
        let d = disc(4);
        let k = unit_constants();
        let data = forced().scaled(0.1);
        for scheme in [Scheme::ImplicitEuler, Scheme::ImplicitMidpoint] {
            let cfg = SchemeConfig {
                scheme,
                dt: 0.05,
                t_final: 0.2,
                ..SchemeConfig::default()
            };
            let traj = run(&d, &data, cfg, None).unwrap();
            let f = DataFunctionals::new(&d, &data, &k, 0.2, TimeQuadrature::default()).unwrap();
            let rep = energy_report(&d, &traj, &f, &k, "4", ReportOptions::default()).unwrap();
            assert!(rep.identity.max_defect < 1e-9, "{scheme:?}: {}", rep.identity.max_defect);
            for r in &rep.rows {
                assert_eq!(r.has(flag::MAINBOUND1), r.margin_mb1() >= 0.0);
                assert_eq!(r.has(flag::DUMBOUND), r.margin_dumbound() > 0.0);
                assert_eq!(r.mb2.is_some(), r.step > 0);
            }
            assert!(rep.gronwall.implication_holds());
        }
    }

    #[test]
    fn tampered_trajectory_is_inconsistent() {
        let d = disc(4);
        let k = unit_constants();
        let data = forced().scaled(0.1);
        let cfg = SchemeConfig {
            dt: 0.05,
            t_final: 0.1,
            ..SchemeConfig::default()
        };
        let mut traj = run(&d, &data, cfg, None).unwrap();
        for v in traj.states[2].alpha.iter_mut() {
            *v *= 1.5;
        }
        let f = DataFunctionals::new(&d, &data, &k, 0.1, TimeQuadrature::default()).unwrap();
        let rep = energy_report(&d, &traj, &f, &k, "4", ReportOptions::default()).unwrap();
        assert!(!rep.flags.integrator_consistent);
        assert!(!rep.flags.mainbound1_ok);
        assert_eq!(rep.status(), "integrator-inconsistent");
        assert!(rep.rows[2].has(flag::INCONSISTENT));
    }

    #[test]
    fn single_state_leaves_mainbound2_unevaluated() {
        let d = disc(4);
        let k = unit_constants();
        let traj = Trajectory {
            scheme: Scheme::ImplicitEuler,
            dt: 0.1,
            states: vec![StateVector::zeros(d.sizes())],
            rates: Vec::new(),
            steps: Vec::new(),
        };
        let f = DataFunctionals::new(&d, &ProblemData::zero(), &k, 0.1, TimeQuadrature::default()).unwrap();
        let rep = energy_report(&d, &traj, &f, &k, "4", ReportOptions::default()).unwrap();
        assert_eq!(rep.flags.mainbound2_ok(), None);
        assert_eq!(rep.flags.pfbound_ok, None);
    }
}
