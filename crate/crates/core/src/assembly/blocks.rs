use alloc::format;

use super::forms::{assemble_cells, boundary_mass, divdiv, interface_points, mass, stiffness, strain};
use super::{AssemblyError, PhysicalParams, QuadOptions, Sizes};
use crate::fem::{quadrature, DofMap};
use crate::mesh::{FacetTag, Mesh};
use crate::sparse::{Csr, Triplets};

/// Constant-coefficient blocks. Rows index test functions, columns trial
/// functions.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub sizes: Sizes,
    /// `rho_f (v_j, v_i)`
    pub af: Csr,
    /// `2 mu_f (D v_j, D v_i)`
    pub bf_visc: Csr,
    /// `beta <v_j . t, v_i . t>` on the interface
    pub bf_slip: Csr,
    pub bf: Csr,
    /// `rho_s (xi_j, xi_i)`
    pub as_: Csr,
    /// `2 mu_s (D xi_j, D xi_i)`
    pub bs_mu: Csr,
    /// `lambda_s (div xi_j, div xi_i)`
    pub bs_lambda: Csr,
    pub bs: Csr,
    /// `s0 (r_j, r_i)`
    pub ap: Csr,
    /// `(K grad r_j, grad r_i)`
    pub bp: Csr,
    /// `alpha (r_j, div xi_i) + <r_j n, xi_i>`, displacement rows
    pub c: Csr,
    /// `<r_j n, v_i>`, velocity rows
    pub d: Csr,
    /// `beta <xi_j . t, v_i . t>`, velocity rows
    pub e: Csr,
    /// `beta <xi_j . t, xi_i . t>`
    pub f: Csr,
    /// `(q_i, div v_j)`, fluid-pressure rows
    pub gdiv: Csr,
}

pub fn assemble_constant_blocks(
    mesh: &Mesh,
    dofs: &DofMap,
    params: &PhysicalParams,
    quad: &QuadOptions,
) -> Result<BlockSystem, AssemblyError> {
    let nnodes = mesh.vertices.len() + dofs.topo.edges.len();
    if dofs.n_vertices != mesh.vertices.len()
        || dofs.velocity.in_space.len() != nnodes
        || dofs.velocity.cell_index.len() != mesh.triangles.len()
    {
        return Err(AssemblyError::DimensionMismatch(format!(
            "mesh has {} vertices and {} triangles",
            mesh.vertices.len(),
            mesh.triangles.len()
        )));
    }
    let rule = quadrature::triangle(quad.volume_order)?;
    let edge = quadrature::gauss_legendre(quad.edge_points.max(1));
    let (vel, pf, disp, pp) = (&dofs.velocity, &dofs.pressure_f, &dofs.displacement, &dofs.pressure_p);
    let sizes = Sizes {
        n_u: vel.n_dofs(),
        n_s: disp.n_dofs(),
        n_q: pp.n_dofs(),
        n_pf: pf.n_dofs(),
    };

    let af = mass(mesh, vel, &rule, params.rho_f);
    let bf_visc = strain(mesh, vel, &rule, params.mu_f);
    let bf_slip = boundary_mass(mesh, &dofs.topo, vel, &[FacetTag::Interface], &edge, params.beta_slip, true);
    let bf = bf_visc.add(&bf_slip, 1.0);
    let as_ = mass(mesh, disp, &rule, params.rho_s);
    let bs_mu = strain(mesh, disp, &rule, params.mu_s);
    let bs_lambda = divdiv(mesh, disp, &rule, params.lambda_s);
    let bs = bs_mu.add(&bs_lambda, 1.0);
    let ap = mass(mesh, pp, &rule, params.s0);
    let bp = stiffness(mesh, pp, &rule, params.k);
    let f = boundary_mass(mesh, &dofs.topo, disp, &[FacetTag::Interface], &edge, params.beta_slip, true);

    let np = pf.kind.n_scalar();
    let nv = vel.kind.n_scalar();
    let gdiv = assemble_cells(mesh, pf, vel, &rule, |cp, m| {
        let nl = vel.kind.n_local();
        for i in 0..np {
            for d in 0..2 {
                for b in 0..nv {
                    m[i * nl + d * nv + b] += cp.w * cp.p1.phi[i] * cp.p2.grad[b][d];
                }
            }
        }
    });

    let qdeg = pp.kind.degree();
    let nq = pp.kind.n_scalar();
    let ns = disp.kind.n_scalar();
    let alpha_bw = params.alpha_bw;
    let c_vol = assemble_cells(mesh, disp, pp, &rule, |cp, m| {
        let rb = cp.basis(qdeg);
        for c in 0..2 {
            for a in 0..ns {
                for j in 0..nq {
                    m[(c * ns + a) * nq + j] += alpha_bw * cp.w * rb.phi[j] * cp.p2.grad[a][c];
                }
            }
        }
    });

    let mut ct = Triplets::new(sizes.n_s, sizes.n_q);
    let mut dt = Triplets::new(sizes.n_u, sizes.n_q);
    let mut et = Triplets::new(sizes.n_u, sizes.n_s);
    for ip in interface_points(mesh, &dofs.topo, &edge) {
        let vd = vel.local(vel.cell_index[ip.fluid.tri]);
        let sd = disp.local(disp.cell_index[ip.poro.tri]);
        let qd = pp.local(pp.cell_index[ip.poro.tri]);
        let w = ip.fluid.w;
        let (vb, sb, qb) = (&ip.fluid.p2, &ip.poro.p2, ip.poro.basis(qdeg));
        for c in 0..2 {
            for a in 0..ns {
                for j in 0..nq {
                    let v = w * qb.phi[j] * ip.n[c];
                    ct.push(sd[c * ns + a], qd[j], v * sb.phi[a]);
                    dt.push(vd[c * nv + a], qd[j], v * vb.phi[a]);
                }
            }
            for a in 0..nv {
                for d in 0..2 {
                    for b in 0..ns {
                        let v = params.beta_slip * w * ip.t[c] * ip.t[d] * vb.phi[a] * sb.phi[b];
                        et.push(vd[c * nv + a], sd[d * ns + b], v);
                    }
                }
            }
        }
    }
    let c = c_vol.add(&ct.to_csr(), 1.0);
    let d = dt.to_csr();
    let e = et.to_csr();

    Ok(BlockSystem {
        sizes,
        af,
        bf_visc,
        bf_slip,
        bf,
        as_,
        bs_mu,
        bs_lambda,
        bs,
        ap,
        bp,
        c,
        d,
        e,
        f,
        gdiv,
    })
}
