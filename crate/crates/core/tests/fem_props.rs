use fpsi_core::assembly::{Discretization, PhysicalParams, QuadOptions};
use fpsi_core::fem::quadrature::{self, MAX_ORDER};
use fpsi_core::fem::{basis_eval, DofOptions, ElementKind, Space};
use fpsi_core::mesh::build_rect_two_domain;
use fpsi_core::sparse::Csr;
use proptest::prelude::*;

const KINDS: [ElementKind; 4] = [
    ElementKind::P1,
    ElementKind::P2,
    ElementKind::VectorP1,
    ElementKind::VectorP2,
];

fn reference_point() -> impl Strategy<Value = [f64; 2]> {
    (0.0f64..1.0, 0.0f64..1.0).prop_map(|(a, b)| if a + b > 1.0 { [1.0 - a, 1.0 - b] } else { [a, b] })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn partition_of_unity(p in reference_point()) {
        for kind in KINDS {
            let b = basis_eval(kind, p).unwrap();
            let n = kind.n_scalar();
            for c in 0..kind.components() {
                let vals = &b.values[c * n..(c + 1) * n];
                let grads = &b.grads[c * n..(c + 1) * n];
                prop_assert!((vals.iter().sum::<f64>() - 1.0).abs() < 1e-14);
                let gx: f64 = grads.iter().map(|g| g[0]).sum();
                let gy: f64 = grads.iter().map(|g| g[1]).sum();
                prop_assert!(gx.abs() < 1e-13 && gy.abs() < 1e-13);
            }
        }
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

#[test]
fn quadrature_exactness_sweep() {
    for k in 1..=MAX_ORDER {
        let rule = quadrature::triangle(k).unwrap();
        for a in 0..=k as u32 {
            for b in 0..=(k as u32 - a) {
                let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                let got = rule.integrate(|x, y| x.powi(a as i32) * y.powi(b as i32));
                assert!((got - exact).abs() < 1e-14, "order {k}, x^{a} y^{b}: {got} vs {exact}");
            }
        }
    }
}

fn nonzero_indices(m: &Csr, rows: bool) -> Vec<usize> {
    let mut out = Vec::new();
    for i in 0..m.nrows {
        for k in m.indptr[i]..m.indptr[i + 1] {
            if m.data[k] != 0.0 {
                out.push(if rows { i } else { m.indices[k] });
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

fn assert_unconstrained(space: &Space, dofs: &[usize]) {
    for &g in dofs {
        let (node, comp) = space.dof_node[g];
        assert!(
            !space.constraints.iter().any(|c| c.node == node && c.comp == comp),
            "coupled dof {g} at node {node} is constrained"
        );
    }
}

#[test]
fn coupling_rows_avoid_constrained_dofs() {
    for (n, split, pore_degree) in [(2, 0.5, 1), (4, 0.25, 1), (3, 1.0 / 3.0, 2)] {
        let mesh = build_rect_two_domain(n, n, split).unwrap();
        let d = Discretization::new(
            mesh,
            PhysicalParams::default(),
            DofOptions { pore_degree },
            QuadOptions::default(),
        )
        .unwrap();
        let (b, s) = (&d.blocks, &d.dofs);
        assert_unconstrained(&s.velocity, &nonzero_indices(&b.d, true));
        assert_unconstrained(&s.pressure_p, &nonzero_indices(&b.d, false));
        assert_unconstrained(&s.velocity, &nonzero_indices(&b.e, true));
        assert_unconstrained(&s.displacement, &nonzero_indices(&b.e, false));
        assert_unconstrained(&s.displacement, &nonzero_indices(&b.c, true));
        assert_unconstrained(&s.pressure_p, &nonzero_indices(&b.c, false));
        for (node, comp) in &s.velocity.dof_node {
            assert!(!s.velocity.is_constrained(*node, *comp));
        }
    }
}
