//! Legacy ASCII VTK output of one discrete state.
//!
//! Fields are written as point data at mesh vertices. Quadratic fields are
//! sampled at the vertices and their edge-midpoint coefficients dropped.
//! Each field is zero outside its subdomain and at constrained nodes.

use std::fmt::Write as _;
use std::path::Path;

use fpsi_core::assembly::{Discretization, StateVector};
use fpsi_core::fem::{Space, NONE};

#[derive(Debug, thiserror::Error)]
pub enum VtkError {
    #[error("state does not match the discretization: {0}")]
    Dimension(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn vertex_values(space: &Space, coeffs: &[f64], n_vertices: usize, comps: usize) -> Vec<[f64; 2]> {
    (0..n_vertices)
        .map(|v| {
            let mut out = [0.0; 2];
            if space.in_space[v] {
                for (c, o) in out.iter_mut().enumerate().take(comps) {
                    let g = space.dof(v, c);
                    if g != NONE {
                        *o = coeffs[g];
                    }
                }
            }
            out
        })
        .collect()
}

fn check(name: &str, got: usize, want: usize) -> Result<(), VtkError> {
    if got == want {
        Ok(())
    } else {
        Err(VtkError::Dimension(format!("{name} has {got} entries, expected {want}")))
    }
}

pub fn to_string(disc: &Discretization, state: &StateVector) -> Result<String, VtkError> {
    let s = disc.sizes();
    check("alpha", state.alpha.len(), s.n_u)?;
    check("pi", state.pi.len(), s.n_pf)?;
    check("beta", state.beta.len(), s.n_s)?;
    check("gamma", state.gamma.len(), s.n_q)?;
    let mesh = &disc.mesh;
    let d = &disc.dofs;
    let nv = mesh.vertices.len();
    let u = vertex_values(&d.velocity, &state.alpha, nv, 2);
    let pf = vertex_values(&d.pressure_f, &state.pi, nv, 1);
    let eta = vertex_values(&d.displacement, &state.beta, nv, 2);
    let pp = vertex_values(&d.pressure_p, &state.gamma, nv, 1);

    let mut o = String::new();
    writeln!(o, "# vtk DataFile Version 3.0").unwrap();
    writeln!(
        o,
        "t = {:?}; quadratic fields sampled at vertices, edge-midpoint dofs dropped",
        state.t
    )
    .unwrap();
    writeln!(o, "ASCII").unwrap();
    writeln!(o, "DATASET UNSTRUCTURED_GRID").unwrap();
    writeln!(o, "POINTS {nv} double").unwrap();
    for [x, y] in &mesh.vertices {
        writeln!(o, "{x:?} {y:?} 0").unwrap();
    }
    let nt = mesh.triangles.len();
    writeln!(o, "CELLS {nt} {}", 4 * nt).unwrap();
    for t in &mesh.triangles {
        writeln!(o, "3 {} {} {}", t.v[0], t.v[1], t.v[2]).unwrap();
    }
    writeln!(o, "CELL_TYPES {nt}").unwrap();
    for _ in 0..nt {
        writeln!(o, "5").unwrap();
    }
    writeln!(o, "CELL_DATA {nt}").unwrap();
    writeln!(o, "SCALARS subdomain int 1").unwrap();
    writeln!(o, "LOOKUP_TABLE default").unwrap();
    for t in &mesh.triangles {
        let id = match t.sub {
            fpsi_core::mesh::Subdomain::Fluid => 0,
            fpsi_core::mesh::Subdomain::Poro => 1,
        };
        writeln!(o, "{id}").unwrap();
    }
    writeln!(o, "POINT_DATA {nv}").unwrap();
    for (name, vals) in [("velocity", &u), ("displacement", &eta)] {
        writeln!(o, "VECTORS {name} double").unwrap();
        for [a, b] in vals {
            writeln!(o, "{a:?} {b:?} 0").unwrap();
        }
    }
    for (name, vals) in [("fluid_pressure", &pf), ("pore_pressure", &pp)] {
        writeln!(o, "SCALARS {name} double 1").unwrap();
        writeln!(o, "LOOKUP_TABLE default").unwrap();
        for v in vals {
            writeln!(o, "{:?}", v[0]).unwrap();
        }
    }
    Ok(o)
}

pub fn emit_vtk(disc: &Discretization, state: &StateVector, path: &Path) -> Result<(), VtkError> {
    let text = to_string(disc, state)?;
    std::fs::write(path, text).map_err(|source| VtkError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use fpsi_core::assembly::{PhysicalParams, QuadOptions};
    use fpsi_core::fem::DofOptions;
    use fpsi_core::mesh::build_rect_two_domain;

    fn disc() -> Discretization {
        let mesh = build_rect_two_domain(2, 2, 0.5).unwrap();
        Discretization::new(mesh, PhysicalParams::default(), DofOptions::default(), QuadOptions::default()).unwrap()
    }

    #[test]
    fn zero_state_writes_zero_arrays() {
        let d = disc();
        let text = to_string(&d, &StateVector::zeros(d.sizes())).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let start = lines.iter().position(|l| l.starts_with("POINT_DATA 9")).unwrap();
        let data = &lines[start + 1..];
        assert_eq!(data.iter().filter(|l| l.starts_with("VECTORS")).count(), 2);
        assert_eq!(data.iter().filter(|l| l.starts_with("SCALARS")).count(), 2);
        let numeric: Vec<&str> = data
            .iter()
            .filter(|l| !l.starts_with("VECTORS") && !l.starts_with("SCALARS") && !l.starts_with("LOOKUP"))
            .copied()
            .collect();
        assert_eq!(numeric.len(), 4 * 9);
        assert!(numeric.iter().all(|l| l.split(' ').all(|w| w.parse::<f64>().unwrap() == 0.0)));
    }

    #[test]
    fn output_is_deterministic_and_checks_sizes() {
        let d = disc();
        let mut s = StateVector::zeros(d.sizes());
        for (i, v) in s.alpha.iter_mut().enumerate() {
            *v = (i as f64).sin();
        }
        assert_eq!(to_string(&d, &s).unwrap(), to_string(&d, &s).unwrap());
        s.gamma.pop();
        assert!(matches!(to_string(&d, &s), Err(VtkError::Dimension(_))));
    }
}
