//! Galerkin block system of the coupled problem.
//!
//! Unknown coefficient vectors: `alpha` (fluid velocity), `beta`
//! (displacement), `gamma` (pore pressure), `theta` (displacement rate) and
//! `pi` (fluid pressure). Rows of the residual are the momentum, structure,
//! Darcy, kinematic and incompressibility equations.

mod blocks;
mod convection;
mod forms;
mod loads;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

pub use blocks::{assemble_constant_blocks, BlockSystem};
pub use convection::{convection, ConvectionForm};
pub use forms::{
    boundary_mass, cell_points, Basis, divdiv, facet_points, interface_points, mass, stiffness, strain,
    CellPoint, FacetPoint, InterfacePoint,
};
pub use loads::{assemble_loads, BoundaryLoad, CompiledData, LoadRow, Loads, ProblemData};

use crate::fem::{build_dofmaps, quadrature, DofMap, DofOptions, FemError, QuadratureRule};
use crate::math;
use crate::mesh::Mesh;

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalParams {
    pub rho_f: f64,
    pub mu_f: f64,
    /// Density of the saturated medium.
    pub rho_s: f64,
    pub mu_s: f64,
    pub lambda_s: f64,
    /// Constrained specific storage.
    pub s0: f64,
    /// Biot-Willis constant.
    pub alpha_bw: f64,
    /// Symmetric positive-definite hydraulic conductivity.
    pub k: [[f64; 2]; 2],
    /// Beavers-Joseph-Saffman resistance.
    pub beta_slip: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        PhysicalParams {
            rho_f: 1.0,
            mu_f: 1.0,
            rho_s: 1.0,
            mu_s: 1.0,
            lambda_s: 1.0,
            s0: 1.0,
            alpha_bw: 1.0,
            k: [[1.0, 0.0], [0.0, 1.0]],
            beta_slip: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("parameter {field}: {message}")]
pub struct ParamError {
    pub field: &'static str,
    pub message: String,
}

impl PhysicalParams {
    /// Eigenvalues of `K`, smallest first.
    pub fn k_bounds(&self) -> (f64, f64) {
        let [[a, b], [c, d]] = self.k;
        let off = 0.5 * (b + c);
        let mean = 0.5 * (a + d);
        let r = math::sqrt(0.25 * (a - d) * (a - d) + off * off);
        (mean - r, mean + r)
    }

    pub fn k_min(&self) -> f64 {
        self.k_bounds().0
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let positive = [
            ("rho_f", self.rho_f),
            ("mu_f", self.mu_f),
            ("rho_s", self.rho_s),
            ("mu_s", self.mu_s),
            ("s0", self.s0),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ParamError {
                    field,
                    message: alloc::format!("must be positive and finite (got {})", v),
                });
            }
        }
        for (field, v) in [
            ("lambda_s", self.lambda_s),
            ("beta_slip", self.beta_slip),
            ("alpha_bw", self.alpha_bw),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ParamError {
                    field,
                    message: alloc::format!("must be non-negative and finite (got {})", v),
                });
            }
        }
        let [[_, b], [c, _]] = self.k;
        if (b - c).abs() > 1e-14 * (1.0 + b.abs()) {
            return Err(ParamError {
                field: "k",
                message: "must be symmetric".into(),
            });
        }
        if !(self.k_min() > 0.0) {
            return Err(ParamError {
                field: "k",
                message: "must be positive definite".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadOptions {
    /// Triangle rule order for every volume integral.
    pub volume_order: usize,
    /// Gauss points per facet.
    pub edge_points: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            volume_order: 6,
            edge_points: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AssemblyError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("dof map does not match the mesh ({0})")]
    DimensionMismatch(String),
}

/// Mesh, spaces, coefficients and the assembled constant blocks.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Mesh,
    pub dofs: DofMap,
    pub params: PhysicalParams,
    pub quad: QuadOptions,
    pub rule: QuadratureRule,
    pub edge_rule: (Vec<f64>, Vec<f64>),
    pub blocks: BlockSystem,
}

impl Discretization {
    pub fn new(
        mesh: Mesh,
        params: PhysicalParams,
        dof_opts: DofOptions,
        quad: QuadOptions,
    ) -> Result<Discretization, AssemblyError> {
        params.validate()?;
        let dofs = build_dofmaps(&mesh, dof_opts)?;
        let blocks = assemble_constant_blocks(&mesh, &dofs, &params, &quad)?;
        let rule = quadrature::triangle(quad.volume_order)?;
        let edge_rule = quadrature::gauss_legendre(quad.edge_points.max(1));
        Ok(Discretization {
            mesh,
            dofs,
            params,
            quad,
            rule,
            edge_rule,
            blocks,
        })
    }

    pub fn sizes(&self) -> Sizes {
        self.blocks.sizes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sizes {
    pub n_u: usize,
    pub n_s: usize,
    pub n_q: usize,
    pub n_pf: usize,
}

/// Coefficient vectors of one discrete state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub theta: Vec<f64>,
    pub pi: Vec<f64>,
    pub t: f64,
}

impl StateVector {
    pub fn zeros(s: Sizes) -> StateVector {
        StateVector {
            alpha: vec![0.0; s.n_u],
            beta: vec![0.0; s.n_s],
            gamma: vec![0.0; s.n_q],
            theta: vec![0.0; s.n_s],
            pi: vec![0.0; s.n_pf],
            t: 0.0,
        }
    }
}

/// Time derivatives of the dynamic coefficient vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDot {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub theta: Vec<f64>,
}

impl StateDot {
    pub fn zeros(s: Sizes) -> StateDot {
        StateDot {
            alpha: vec![0.0; s.n_u],
            beta: vec![0.0; s.n_s],
            gamma: vec![0.0; s.n_q],
            theta: vec![0.0; s.n_s],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub momentum: Vec<f64>,
    pub structure: Vec<f64>,
    pub darcy: Vec<f64>,
    pub kinematic: Vec<f64>,
    pub constraint: Vec<f64>,
}

impl Residual {
    pub fn norm(&self) -> f64 {
        let all = [
            &self.momentum,
            &self.structure,
            &self.darcy,
            &self.kinematic,
            &self.constraint,
        ];
        math::sqrt(all.iter().map(|v| math::dot(v, v)).sum())
    }
}

/// Full semi-discrete residual:
///
/// ```text
/// momentum   Af a' + Bf a + N(a) + D g - E th - G^T pi - a(t)
/// structure  As th' + Bs b - C g - E^T a + F th - b(t)
/// darcy      Ap g' + Bp g + C^T th - D^T a - c(t)
/// kinematic  b' - th
/// constraint G a
/// ```
pub fn residual(
    disc: &Discretization,
    form: ConvectionForm,
    state: &StateVector,
    dot: &StateDot,
    loads: &Loads,
) -> Residual {
    let b = &disc.blocks;
    let mut mom = b.af.mul(&dot.alpha);
    b.bf.mul_add(&state.alpha, &mut mom, 1.0);
    if form != ConvectionForm::Off {
        let (n, _) = convection(disc, &state.alpha, form, false);
        for (m, v) in mom.iter_mut().zip(n) {
            *m += v;
        }
    }
    b.d.mul_add(&state.gamma, &mut mom, 1.0);
    b.e.mul_add(&state.theta, &mut mom, -1.0);
    b.gdiv.mul_t_add(&state.pi, &mut mom, -1.0);
    for (m, l) in mom.iter_mut().zip(&loads.a) {
        *m -= l;
    }

    let mut st = b.as_.mul(&dot.theta);
    b.bs.mul_add(&state.beta, &mut st, 1.0);
    b.c.mul_add(&state.gamma, &mut st, -1.0);
    b.e.mul_t_add(&state.alpha, &mut st, -1.0);
    b.f.mul_add(&state.theta, &mut st, 1.0);
    for (m, l) in st.iter_mut().zip(&loads.b) {
        *m -= l;
    }

    let mut da = b.ap.mul(&dot.gamma);
    b.bp.mul_add(&state.gamma, &mut da, 1.0);
    b.c.mul_t_add(&state.theta, &mut da, 1.0);
    b.d.mul_t_add(&state.alpha, &mut da, -1.0);
    for (m, l) in da.iter_mut().zip(&loads.c) {
        *m -= l;
    }

    let kin = dot
        .beta
        .iter()
        .zip(&state.theta)
        .map(|(bd, th)| bd - th)
        .collect();
    let con = b.gdiv.mul(&state.alpha);
    Residual {
        momentum: mom,
        structure: st,
        darcy: da,
        kinematic: kin,
        constraint: con,
    }
}
