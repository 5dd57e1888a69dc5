//! Reference elements, quadrature and degree-of-freedom numbering.

pub mod dofmap;
pub mod element;
pub mod quadrature;

pub use dofmap::{auxiliary_space, build_dofmaps, Constraint, ConstraintKind, DofMap, DofOptions, Space, NONE};
pub use element::{basis_eval, shape, BasisEval, ElementKind, Geom, Shape};
pub use quadrature::QuadratureRule;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FemError {
    #[error("quadrature order {0} is not implemented")]
    UnsupportedOrder(usize),
    #[error("point ({}, {}) lies outside the reference triangle", .0[0], .0[1])]
    OutsideReference([f64; 2]),
    #[error("pore-pressure degree {0} is not supported (use 1 or 2)")]
    UnsupportedDegree(usize),
    #[error("PoroExternal facet {0} is not axis-aligned")]
    NonAxisAligned(usize),
    #[error("mesh fails validation")]
    InvalidMesh,
}
