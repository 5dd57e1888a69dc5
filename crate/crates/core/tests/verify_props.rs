use fpsi_core::assembly::{ConvectionForm, Discretization, PhysicalParams, ProblemData, QuadOptions, StateVector};
use fpsi_core::expr::parse;
use fpsi_core::fem::DofOptions;
use fpsi_core::mesh::build_rect_two_domain;
use fpsi_core::timestepper::{project_divergence_free, Scheme, SchemeConfig};
use fpsi_core::verify::kernel_oracle;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny(n: usize, split: f64, params: PhysicalParams) -> Discretization {
    let mesh = build_rect_two_domain(n, n, split).unwrap();
    Discretization::new(mesh, params, DofOptions::default(), QuadOptions::default()).unwrap()
}

fn params() -> impl Strategy<Value = PhysicalParams> {
    (0.5f64..2.0, 0.5f64..2.0, 0.0f64..2.0, 0.2f64..2.0).prop_map(|(rho_f, mu_f, beta_slip, s0)| PhysicalParams {
        rho_f,
        mu_f,
        beta_slip,
        s0,
        ..PhysicalParams::default()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn saddle_and_kernel_paths_agree(
        p in params(),
        amp in 0.1f64..3.0,
        seed in any::<u64>(),
        three in any::<bool>(),
        midpoint in any::<bool>(),
        convective in any::<bool>(),
    ) {
        let d = if three { tiny(3, 1.0 / 3.0, p) } else { tiny(2, 0.5, p) };
        let mut data = ProblemData::zero();
        data.p_in = parse("1 + t").unwrap();
        data.f_f = [parse("y").unwrap(), parse("x*t").unwrap()];
        data.f_p = parse("x - y").unwrap();
        let data = data.scaled(amp);

        let s = d.sizes();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect() };
        let mut prev = StateVector::zeros(s);
        let a = v(s.n_u);
        prev.beta = v(s.n_s);
        prev.theta = v(s.n_s);
        prev.gamma = v(s.n_q);
        prev.alpha = project_divergence_free(&d, &a).unwrap();

        let cfg = SchemeConfig {
            scheme: if midpoint { Scheme::ImplicitMidpoint } else { Scheme::ImplicitEuler },
            dt: 0.1,
            t_final: 0.1,
            newton_tol: 1e-13,
            convection: if convective { ConvectionForm::Standard } else { ConvectionForm::Off },
            ..SchemeConfig::default()
        };
        let r = kernel_oracle(&d, &data, cfg, &prev).unwrap();
        prop_assert!(r.agrees(1e-10), "{:?}", r);
        prop_assert_eq!(r.rank_svd, r.n_pf);
        prop_assert_eq!(r.rank_gram, r.rank_svd);
    }
}
