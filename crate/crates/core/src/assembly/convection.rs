use alloc::vec;
use alloc::vec::Vec;

use super::forms::cell_points;
use super::Discretization;
use crate::fem::NONE;
use crate::sparse::{Csr, Triplets};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvectionForm {
    /// Linear Stokes momentum (no convection term).
    Off,
    /// `rho_f (u . grad u, v)`.
    Standard,
    /// `rho_f/2 [(u . grad u, v) - (u . grad v, u)]`. Not the form the a
    /// priori bounds are stated for; provided for long-horizon runs.
    SkewSymmetric,
}

/// Convection vector `N(alpha)` and, when requested, its exact Jacobian.
pub fn convection(
    disc: &Discretization,
    alpha: &[f64],
    form: ConvectionForm,
    jacobian: bool,
) -> (Vec<f64>, Option<Csr>) {
    let vel = &disc.dofs.velocity;
    let n = vel.n_dofs();
    let mut out = vec![0.0; n];
    let mut jt = if jacobian {
        Some(Triplets::new(n, n))
    } else {
        None
    };
    if form == ConvectionForm::Off {
        return (out, jt.map(|t| t.to_csr()));
    }
    let rho = disc.params.rho_f;
    let skew = form == ConvectionForm::SkewSymmetric;
    let ns = 6;
    let mut local_v = [0.0f64; 12];
    let mut local_j = [0.0f64; 144];
    for (ci, &tri) in vel.cells.iter().enumerate() {
        let dofs = vel.local(ci);
        let mut coef = [0.0f64; 12];
        for (k, &g) in dofs.iter().enumerate() {
            if g != NONE {
                coef[k] = alpha[g];
            }
        }
        local_v.iter_mut().for_each(|v| *v = 0.0);
        local_j.iter_mut().for_each(|v| *v = 0.0);
        for cp in cell_points(&disc.mesh, tri, &disc.rule) {
            let b = &cp.p2;
            let mut u = [0.0; 2];
            let mut gu = [[0.0; 2]; 2]; // gu[c][k] = d u_c / d x_k
            for c in 0..2 {
                for a in 0..ns {
                    let cf = coef[c * ns + a];
                    u[c] += cf * b.phi[a];
                    gu[c][0] += cf * b.grad[a][0];
                    gu[c][1] += cf * b.grad[a][1];
                }
            }
            let w = rho * cp.w;
            let adv = [
                u[0] * gu[0][0] + u[1] * gu[0][1],
                u[0] * gu[1][0] + u[1] * gu[1][1],
            ];
            for c in 0..2 {
                for a in 0..ns {
                    let i = c * ns + a;
                    let u_grad_phi = u[0] * b.grad[a][0] + u[1] * b.grad[a][1];
                    if skew {
                        local_v[i] += 0.5 * w * (adv[c] * b.phi[a] - u_grad_phi * u[c]);
                    } else {
                        local_v[i] += w * adv[c] * b.phi[a];
                    }
                    if !jacobian {
                        continue;
                    }
                    for d in 0..2 {
                        for bb in 0..ns {
                            let j = d * ns + bb;
                            let u_grad_phib = u[0] * b.grad[bb][0] + u[1] * b.grad[bb][1];
                            // d/d alpha_j of (u . grad u)_c phi_a
                            let mut v = b.phi[bb] * gu[c][d] * b.phi[a];
                            if c == d {
                                v += u_grad_phib * b.phi[a];
                            }
                            if skew {
                                // d/d alpha_j of (u . grad phi_a) u_c
                                let mut s = b.phi[bb] * b.grad[a][d] * u[c];
                                if c == d {
                                    s += u_grad_phi * b.phi[bb];
                                }
                                v = 0.5 * (v - s);
                            }
                            local_j[i * 12 + j] += w * v;
                        }
                    }
                }
            }
        }
        for (k, &g) in dofs.iter().enumerate() {
            if g != NONE {
                out[g] += local_v[k];
            }
        }
        if let Some(t) = jt.as_mut() {
            for i in 0..12 {
                for j in 0..12 {
                    t.push(dofs[i], dofs[j], local_j[i * 12 + j]);
                }
            }
        }
    }
    (out, jt.map(|t| t.to_csr()))
}
