use fpsi_core::assembly::{Discretization, PhysicalParams, ProblemData, QuadOptions};
use fpsi_core::constants::Constants;
use fpsi_core::expr::parse;
use fpsi_core::fem::DofOptions;
use fpsi_core::mesh::build_rect_two_domain;
use fpsi_core::monitor::{
    bisect_scale, check_small_data, critical_scale, energy_report, scaled_small_data, small_data_lhs,
    DataFunctionals, ReportOptions, TimeQuadrature,
};
use fpsi_core::timestepper::{run, Scheme, SchemeConfig};
use proptest::prelude::*;

fn disc() -> Discretization {
    let mesh = build_rect_two_domain(4, 4, 0.5).unwrap();
    Discretization::new(mesh, PhysicalParams::default(), DofOptions::default(), QuadOptions::default()).unwrap()
}

fn constants() -> Constants {
    Constants {
        t1: 0.7,
        t2: 0.6,
        t3: 1.0,
        t4: 0.6,
        t5: 0.7,
        p1: 0.32,
        p2: 0.32,
        p3: 0.32,
        sf: 0.44,
        kf: 3.0,
        kappa: 0.6,
        cj: 1.0,
    }
}

fn data() -> ProblemData {
    let mut d = ProblemData::zero();
    d.f_f = [parse("sin(pi*x)*(1 + t)").unwrap(), parse("0.5*y").unwrap()];
    d.f_s = [parse("0.2 + x*y").unwrap(), parse("t*t").unwrap()];
    d.f_p = parse("cos(x + t)").unwrap();
    d.p_in = parse("0.3*(1 + t)*y*(1 - y)").unwrap();
    d
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn functionals_are_homogeneous(s in 0.05f64..20.0, t_final in 0.1f64..1.0) {
        let d = disc();
        let k = constants();
        let tq = TimeQuadrature::default();
        let f1 = DataFunctionals::new(&d, &data(), &k, t_final, tq).unwrap();
        let fs = DataFunctionals::new(&d, &data().scaled(s), &k, t_final, tq).unwrap();
        prop_assert!(rel(fs.c1_l2(), s * f1.c1_l2()) <= 1e-12);
        prop_assert!(rel(fs.c2_l2(), s * f1.c2_l2()) <= 1e-12);
        prop_assert!(rel(fs.c3(), s * f1.c3()) <= 1e-12);
        for t in [0.0, 0.5 * t_final, t_final] {
            prop_assert!(rel(fs.c1(&d, t), s * f1.c1(&d, t)) <= 1e-12);
            prop_assert!(rel(fs.c2(&d, t), s * f1.c2(&d, t)) <= 1e-12);
        }
        let l1 = small_data_lhs(&f1, d.params.rho_s);
        prop_assert!(rel(small_data_lhs(&fs, d.params.rho_s), s * s * l1) <= 1e-12);
    }

    #[test]
    fn closed_form_and_bisected_scales_agree(t_final in 0.1f64..2.0) {
        let d = disc();
        let k = constants();
        let f = DataFunctionals::new(&d, &data(), &k, t_final, TimeQuadrature::default()).unwrap();
        let sd = check_small_data(&f, &d.params, &k);
        let s_star = critical_scale(&sd).unwrap();
        let s_bis = bisect_scale(|s| scaled_small_data(&sd, s).lhs, sd.rhs).unwrap();
        prop_assert!(rel(s_bis, s_star) <= 1e-12);
        prop_assert!(scaled_small_data(&sd, 0.99 * s_star).ok);
        prop_assert!(!scaled_small_data(&sd, 1.01 * s_star).ok);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn tampering_invalidates_every_flag(step in 1usize..4, factor in 1.1f64..3.0) {
        let d = disc();
        let k = constants();
        let cfg = SchemeConfig {
            dt: 0.05,
            t_final: 0.15,
            ..SchemeConfig::default()
        };
        let data = data().scaled(0.01);
        let mut tr = run(&d, &data, cfg, None).unwrap();
        let f = DataFunctionals::new(&d, &data, &k, cfg.t_final, TimeQuadrature::default()).unwrap();
        let clean = energy_report(&d, &tr, &f, &k, "4", ReportOptions::default()).unwrap();
        prop_assert!(clean.flags.integrator_consistent);
        prop_assert!(clean.gronwall.implication_holds());
        for v in tr.states[step].theta.iter_mut() {
            *v *= factor;
        }
        let rep = energy_report(&d, &tr, &f, &k, "4", ReportOptions::default()).unwrap();
        let g = rep.flags;
        prop_assert!(!g.integrator_consistent);
        prop_assert!(!g.small_data_ok && !g.mainbound1_ok && !g.dumbound_ok && !g.uniqueness_ok);
        prop_assert!(g.mainbound2_ok() != Some(true) && g.pfbound_ok != Some(true));
        prop_assert_eq!(rep.status(), "integrator-inconsistent");
    }

    #[test]
    fn gronwall_implication_for_both_schemes(amp in 0.01f64..1.0, midpoint in any::<bool>()) {
        let d = disc();
        let k = constants();
        let scheme = if midpoint { Scheme::ImplicitMidpoint } else { Scheme::ImplicitEuler };
        let cfg = SchemeConfig {
            scheme,
            dt: 0.05,
            t_final: 0.2,
            ..SchemeConfig::default()
        };
        let data = data().scaled(amp);
        let tr = run(&d, &data, cfg, None).unwrap();
        let f = DataFunctionals::new(&d, &data, &k, cfg.t_final, TimeQuadrature::default()).unwrap();
        let rep = energy_report(&d, &tr, &f, &k, "4", ReportOptions::default()).unwrap();
        prop_assert!(rep.identity.ok);
        prop_assert!(rep.gronwall.implication_holds());
    }
}
