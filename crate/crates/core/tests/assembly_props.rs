use fpsi_core::assembly::{BlockSystem, Discretization, PhysicalParams, QuadOptions};
use fpsi_core::fem::DofOptions;
use fpsi_core::math::dot;
use fpsi_core::mesh::build_rect_two_domain;
use fpsi_core::sparse::Csr;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params() -> PhysicalParams {
    PhysicalParams {
        rho_f: 1.3,
        mu_f: 0.7,
        rho_s: 2.1,
        mu_s: 1.4,
        lambda_s: 3.0,
        s0: 0.6,
        alpha_bw: 0.8,
        k: [[1.2, 0.3], [0.3, 0.9]],
        beta_slip: 1.7,
    }
}

fn disc(n: usize, quad: QuadOptions, pore_degree: usize) -> Discretization {
    let mesh = build_rect_two_domain(n, n, 0.5).unwrap();
    Discretization::new(mesh, params(), DofOptions { pore_degree }, quad).unwrap()
}

fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn max_diff(a: &Csr, b: &Csr) -> f64 {
    assert_eq!((a.nrows, a.ncols), (b.nrows, b.ncols));
    a.to_dense()
        .iter()
        .zip(b.to_dense())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn named(b: &BlockSystem) -> [(&'static str, &Csr); 15] {
    [
        ("af", &b.af),
        ("bf_visc", &b.bf_visc),
        ("bf_slip", &b.bf_slip),
        ("bf", &b.bf),
        ("as", &b.as_),
        ("bs_mu", &b.bs_mu),
        ("bs_lambda", &b.bs_lambda),
        ("bs", &b.bs),
        ("ap", &b.ap),
        ("bp", &b.bp),
        ("c", &b.c),
        ("d", &b.d),
        ("e", &b.e),
        ("f", &b.f),
        ("gdiv", &b.gdiv),
    ]
}

#[test]
fn quadrature_order_is_sufficient() {
    for pore_degree in [1, 2] {
        let base = disc(4, QuadOptions::default(), pore_degree);
        let q = QuadOptions::default();
        let rich = disc(
            4,
            QuadOptions {
                volume_order: q.volume_order + 2,
                edge_points: q.edge_points + 1,
            },
            pore_degree,
        );
        for ((name, a), (_, b)) in named(&base.blocks).into_iter().zip(named(&rich.blocks)) {
            let d = max_diff(a, b);
            assert!(d <= 1e-13, "{name}: {d:e}");
        }
    }
}

#[test]
fn symmetric_blocks_to_machine_precision() {
    let d = disc(6, QuadOptions::default(), 1);
    let b = &d.blocks;
    for (name, m) in [("af", &b.af), ("as", &b.as_), ("ap", &b.ap), ("bs", &b.bs), ("bp", &b.bp), ("f", &b.f)] {
        assert!(m.asymmetry() <= 1e-14, "{name}: {:e}", m.asymmetry());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn coupling_terms_cancel_in_the_energy_test(seed in any::<u64>()) {
        let d = disc(4, QuadOptions::default(), 1);
        let b = &d.blocks;
        let s = d.sizes();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, be, th, g) = (
            random(&mut rng, s.n_u),
            random(&mut rng, s.n_s),
            random(&mut rng, s.n_s),
            random(&mut rng, s.n_q),
        );
        prop_assert!((dot(&a, &b.d.mul(&g)) - dot(&g, &b.d.mul_t(&a))).abs() <= 1e-12);

        let mut mom = b.bf.mul(&a);
        b.d.mul_add(&g, &mut mom, 1.0);
        b.e.mul_add(&th, &mut mom, -1.0);
        let mut st = b.bs.mul(&be);
        b.c.mul_add(&g, &mut st, -1.0);
        b.e.mul_t_add(&a, &mut st, -1.0);
        b.f.mul_add(&th, &mut st, 1.0);
        let mut dar = b.bp.mul(&g);
        b.c.mul_t_add(&th, &mut dar, 1.0);
        b.d.mul_t_add(&a, &mut dar, -1.0);
        let q = dot(&a, &mom) + dot(&th, &st) + dot(&g, &dar);

        let slip = b.bf_slip.form(&a, &a) - 2.0 * b.e.form(&a, &th) + b.f.form(&th, &th);
        let expected = b.bf_visc.form(&a, &a) + slip + b.bp.form(&g, &g) + b.bs.form(&th, &be);
        prop_assert!((q - expected).abs() <= 1e-12 * expected.abs().max(1.0), "{} vs {}", q, expected);
        prop_assert!(slip >= -1e-12);
    }

    #[test]
    fn solenoidal_interpolants_satisfy_the_constraint(c in prop::array::uniform3(-2.0f64..2.0)) {
        // stream function (1 - y)^2 (c0 + c1 x + c2 y)
        let d = disc(4, QuadOptions::default(), 1);
        let [c0, c1, c2] = c;
        let u = d.dofs.velocity.interpolate(&d.dofs.node_xy, |[x, y]| {
            let w = 1.0 - y;
            [-2.0 * w * (c0 + c1 * x + c2 * y) + w * w * c2, -w * w * c1]
        });
        let r = d.blocks.gdiv.mul(&u);
        prop_assert!(r.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-12);
    }
}
