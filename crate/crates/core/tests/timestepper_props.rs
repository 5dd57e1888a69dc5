use fpsi_core::assembly::{ConvectionForm, Discretization, PhysicalParams, ProblemData, QuadOptions, StateVector};
use fpsi_core::expr::parse;
use fpsi_core::fem::DofOptions;
use fpsi_core::math::norm_inf;
use fpsi_core::mesh::build_rect_two_domain;
use fpsi_core::timestepper::{project_divergence_free, run, Scheme, SchemeConfig, Stepper};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn disc() -> Discretization {
    let mesh = build_rect_two_domain(3, 4, 0.5).unwrap();
    let params = PhysicalParams {
        beta_slip: 2.0,
        k: [[1.5, 0.2], [0.2, 0.5]],
        ..PhysicalParams::default()
    };
    Discretization::new(mesh, params, DofOptions::default(), QuadOptions::default()).unwrap()
}

fn random_state(d: &Discretization, seed: u64) -> StateVector {
    let s = d.sizes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let mut st = StateVector::zeros(s);
    let a = v(s.n_u);
    st.beta = v(s.n_s);
    st.theta = v(s.n_s);
    st.gamma = v(s.n_q);
    st.alpha = project_divergence_free(d, &a).unwrap();
    st
}

fn energy(d: &Discretization, s: &StateVector) -> f64 {
    let b = &d.blocks;
    0.5 * (b.af.form(&s.alpha, &s.alpha)
        + b.as_.form(&s.theta, &s.theta)
        + b.bs.form(&s.beta, &s.beta)
        + b.ap.form(&s.gamma, &s.gamma))
}

fn dissipation(d: &Discretization, s: &StateVector) -> f64 {
    let b = &d.blocks;
    b.bf_visc.form(&s.alpha, &s.alpha)
        + b.bp.form(&s.gamma, &s.gamma)
        + b.bf_slip.form(&s.alpha, &s.alpha)
        - 2.0 * b.e.form(&s.alpha, &s.theta)
        + b.f.form(&s.theta, &s.theta)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn euler_energy_inequality_without_convection(seed in any::<u64>(), dt in 0.01f64..0.2) {
        let d = disc();
        let cfg = SchemeConfig {
            scheme: Scheme::ImplicitEuler,
            dt,
            t_final: 5.0 * dt,
            convection: ConvectionForm::Off,
            ..SchemeConfig::default()
        };
        let tr = run(&d, &ProblemData::zero(), cfg, Some(random_state(&d, seed))).unwrap();
        for w in tr.states.windows(2) {
            let lhs = energy(&d, &w[1]) + dt * dissipation(&d, &w[1]);
            prop_assert!(lhs <= energy(&d, &w[0]) + 1e-10, "{} > {}", lhs, energy(&d, &w[0]));
        }
    }

    #[test]
    fn accepted_steps_respect_constraint_and_kinematics(
        amp in 0.1f64..10.0,
        midpoint in any::<bool>(),
    ) {
        let d = disc();
        let mut data = ProblemData::zero();
        data.f_f = [parse("sin(pi*y)*(1 + t)").unwrap(), parse("x").unwrap()];
        data.f_s = [parse("y").unwrap(), parse("t").unwrap()];
        data.p_in = parse("y*(1 - y)").unwrap();
        let data = data.scaled(amp);
        let scheme = if midpoint { Scheme::ImplicitMidpoint } else { Scheme::ImplicitEuler };
        let cfg = SchemeConfig {
            scheme,
            dt: 0.05,
            t_final: 0.15,
            ..SchemeConfig::default()
        };
        let tr = run(&d, &data, cfg, None).unwrap();
        let c = scheme.stage_weight();
        for n in 0..tr.rates.len() {
            let (a, b) = (&tr.states[n], &tr.states[n + 1]);
            prop_assert!(norm_inf(&d.blocks.gdiv.mul(&b.alpha)) <= 10.0 * cfg.newton_tol);
            let kin = (0..a.theta.len())
                .map(|i| (tr.rates[n].beta[i] - ((1.0 - c) * a.theta[i] + c * b.theta[i])).abs())
                .fold(0.0f64, f64::max);
            prop_assert!(kin <= 1e-13 * (1.0 + norm_inf(&b.theta)), "{}", kin);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// `R(z + t v) - R(z) - t J v` shrinks by 100 per decade of `t` when
    /// the Jacobian is exact.
    #[test]
    fn taylor_remainder_is_second_order(seed in any::<u64>(), midpoint in any::<bool>()) {
        let d = disc();
        let mut data = ProblemData::zero();
        data.f_f = [parse("sin(pi*y)*(1 + t)").unwrap(), parse("x").unwrap()];
        let scheme = if midpoint { Scheme::ImplicitMidpoint } else { Scheme::ImplicitEuler };
        let cfg = SchemeConfig {
            scheme,
            dt: 0.1,
            t_final: 0.1,
            convection: ConvectionForm::Standard,
            ..SchemeConfig::default()
        };
        let st = Stepper::new(&d, &data, cfg).unwrap();
        let prev = random_state(&d, seed);
        let loads = st.loads(st.stage_time(&prev));
        let z = st.pack(&random_state(&d, seed.wrapping_add(1)));
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
        let v: Vec<f64> = (0..z.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r0 = st.stage_residual(&prev, &z, &loads).concat();
        let jv = st.jacobian(&prev, &z).mul(&v);
        let remainder = |t: f64| {
            let zt: Vec<f64> = z.iter().zip(&v).map(|(a, b)| a + t * b).collect();
            let rt = st.stage_residual(&prev, &zt, &loads).concat();
            (0..rt.len()).map(|i| (rt[i] - r0[i] - t * jv[i]).abs()).fold(0.0f64, f64::max)
        };
        let (e1, e2) = (remainder(0.1), remainder(0.01));
        prop_assert!(e1 > 0.0);
        let ratio = e1 / e2;
        prop_assert!((ratio - 100.0).abs() <= 1.0, "ratio {}", ratio);
    }
}
