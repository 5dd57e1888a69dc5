//! Finite element discretization of incompressible Navier-Stokes flow
//! coupled to Biot poroelasticity across a sharp interface, together with
//! the discrete constants and energy certificates used to check a priori
//! bounds along computed trajectories.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, the
//! command-line driver and configuration live in the companion `fpsi` crate.

#![no_std]

extern crate alloc;

pub mod assembly;
pub mod constants;
pub mod dense;
pub mod expr;
pub mod fem;
pub mod math;
pub mod mesh;
pub mod monitor;
pub mod sparse;
pub mod timestepper;
pub mod verify;

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
