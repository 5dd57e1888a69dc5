//! Command-line front end, file formats and output writers for the
//! coupled free-flow/poroelastic solver in `fpsi-core`.

pub mod app;
pub mod config;
pub mod mesh_io;
pub mod output;
pub mod vtk;
