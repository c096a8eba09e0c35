use proptest::prelude::*;
use pxflow_core::domain::{DiffusionFamily, Domain1D, SubdomainSpec};
use pxflow_core::error::Error;
use pxflow_core::estimates::*;
use pxflow_core::initial::{member_rng, smooth_random_field};
use pxflow_core::lebesgue::{check_power_inequality, ExponentField, NodalField};
use pxflow_core::semiflow::{EnergyParams, Reaction, Regime, Semiflow, SolverOptions};
use pxflow_core::state::{Space, State};

fn flow(n: usize, regime: Regime, kappa: f64, forcing: f64, d0: f64) -> Semiflow {
    let dom = Domain1D::new(n, &[SubdomainSpec::new(0.4, 0.6)]).unwrap();
    let p = ExponentField::constant(&dom, 3.0).unwrap();
    let fam = DiffusionFamily::constant(&dom, d0).unwrap();
    let params = EnergyParams {
        eta: 0.5,
        regime,
        reaction: Reaction::with_profile(&dom, kappa, forcing, 0.0, 1).unwrap(),
    };
    Semiflow::new(&dom, &p, &fam, params, SolverOptions::default()).unwrap()
}

fn small_budget() -> ProbeBudget {
    ProbeBudget {
        fields: 12,
        trajectories: 2,
        seed: 5,
        initial_radius: 1.0,
    }
}

fn smooth_state(f: &Semiflow, radius: f64, seed: u64, modes: usize) -> State {
    let u = smooth_random_field(f.domain(), modes, radius, &mut member_rng(seed, 0)).unwrap();
    f.state_from_nodal(&u).unwrap()
}

#[test]
fn rho1_closed_form_example() {
    assert!((rho1_closed_form(1.0, 2.0, 0.0, 1.0, 0.5) - 3.0).abs() < 1e-15);
}

#[test]
fn constants_match_independent_recomputation() {
    let f = flow(64, Regime::Limit, 1.0, 0.0, 1.0);
    let c = compute_constants(&f, &small_budget()).unwrap();
    // recompute every closed form from the reported inputs
    let (pm, pp) = (c.p_minus, c.p_plus);
    assert_eq!(c.c_emb, 2.0);
    assert_eq!(c.c_coerc, c.c_coerc_probe_min.min(c.m0.min(1.0)));
    let theta = pm / 2.0;
    let theta_c = theta / (theta - 1.0);
    let q = pm / (pm - 1.0);
    let eps = c.epsilon_star;
    let gs = c.c_coerc / 2f64.powf(pp) - eps.powf(theta) / theta - eps.powf(pm) / pm;
    assert!(gs > 0.0);
    assert!((gs - c.gamma_small).abs() <= 1e-12 * gs);
    let c1 = c.l_b * c.c_emb * c.c_emb;
    let c2 = c.c_emb * c.b0_norm;
    assert_eq!(c2, 0.0);
    let delta = (2.0 / theta_c) * (c1 / eps).powf(theta_c) + (2.0 / q) * (c2 / eps).powf(q);
    assert!((delta - c.delta).abs() <= 1e-12 * delta);
    let gt = 2.0 * gs / c.c_emb.powf(pm);
    let k1 = (delta / gt).powf(1.0 / pm) + (gt * (pm - 2.0) / 2.0).powf(-1.0 / (pm - 2.0));
    assert!((k1 - c.k1).abs() <= 1e-12 * k1);
    assert_eq!(c.r0, c.k1.max(c.c_emb));
    assert!(c.r0 >= c.c_emb);
    let k2 = c.l_b * c.r0 + c.b0_norm;
    let k3 = c.r0 * c.r0 / 2.0 + k2 * c.r0;
    let k4 = k3 + k2 * k2 / 2.0;
    assert!((k4 - c.k4).abs() <= 1e-12 * k4);
    let base = 2f64.powf(pp) * pp * k4 / c.m0.min(1.0);
    let rv = base.powf(1.0 / pp).max(base.powf(1.0 / pm)).max(1.0);
    assert!((rv - c.r_v).abs() <= 1e-12 * rv);
    let beta = (pp - 1.0) * c.observed_range.powf(pp - 2.0);
    let gamma = c.big_m * (beta + c.eta) + c.alpha_poincare.powi(2) * (beta + c.l_b);
    assert!((gamma - c.gamma_big).abs() <= 1e-12 * gamma);
    let rho1 = (1.0 + c.alpha1_embed * gamma) * ((4.0 * c.l_b).exp() / (2.0 * c.m0 * c.eta)).sqrt();
    assert!((rho1 - c.rho1).abs() <= 1e-12 * rho1);
    assert!((c.c3 - 2.0 * (c.c1_velocity + (c.l_b).exp())).abs() <= 1e-12 * c.c3);
    // continuous Poincaré constant on the limit space is below 1/π
    assert!(c.alpha_poincare > 0.0 && c.alpha_poincare < 1.0 / std::f64::consts::PI);
}

#[test]
fn epsilon_star_minimizes_r0_on_the_grid() {
    let f = flow(64, Regime::Limit, 1.0, 0.5, 1.0);
    let c = compute_constants(&f, &small_budget()).unwrap();
    for i in 0..61 {
        let eps = 10f64.powf(-6.0 + 6.0 * i as f64 / 60.0);
        if let Some(chain) = radius_chain(eps, c.c_coerc, c.p_minus, c.p_plus, c.c_emb, c.young_c1, c.young_c2) {
            assert!(chain.r0 >= c.r0);
        }
    }
    assert!(c.young_c2 > 0.0);
}

#[test]
fn constants_are_bit_stable() {
    let f = flow(64, Regime::Lambda(0.5), 1.0, 0.0, 1.0);
    let a = compute_constants(&f, &small_budget()).unwrap();
    let b = compute_constants(&f, &small_budget()).unwrap();
    assert_eq!(a, b);
    // the full regime uses the largest value of d_λ
    assert!(a.big_m > 2.9);
}

#[test]
fn constants_unavailable_when_coercivity_is_tiny() {
    let f = flow(32, Regime::Limit, 1.0, 0.0, 1e-9);
    match compute_constants(&f, &small_budget()) {
        Err(Error::ConstantsUnavailable(msg)) => assert!(msg.contains("C = "), "{msg}"),
        other => panic!("expected unavailable constants, got {other:?}"),
    }
}

#[test]
fn tartar_examples() {
    assert_eq!(check_tartar(&[0.5], &[0.5], 3.0).unwrap(), 0.0);
    let m = check_tartar(&[0.3, -2.0, 1.0], &[1.5, 0.5, -0.25], 2.0).unwrap();
    assert!(m.abs() < 1e-14);
    assert!((check_tartar(&[1.0], &[0.0], 4.0).unwrap() - 7.0 / 8.0).abs() < 1e-15);
    assert!(matches!(check_tartar(&[1.0], &[0.0], 0.9), Err(Error::Precondition(_))));
}

proptest! {
    #[test]
    fn tartar_margin_nonnegative(
        x in prop::collection::vec(-3.0f64..3.0, 1..4),
        shift in prop::collection::vec(-3.0f64..3.0, 4),
        p in 1.1f64..6.0,
    ) {
        let y: Vec<f64> = x.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let (lhs, rhs) = tartar_sides(&x, &y, p).unwrap();
        prop_assert!(lhs - rhs >= -1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn power_and_tartar_checkers_agree_in_one_dimension(a in 0.0f64..3.0, b in 0.0f64..3.0, p in 2.0f64..6.0) {
        // both report nonnegative margins on shared samples
        let m = check_power_inequality(a, b, p, 2.0).unwrap();
        prop_assert!(m.lower_margin >= -1e-12 * m.sum.max(1.0));
        prop_assert!(m.upper_margin >= -1e-12 * m.upper.max(1.0));
        prop_assert!(check_tartar(&[a], &[-b], p).unwrap() >= -1e-12 * (1.0 + (a + b).powf(p)));
    }
}

#[test]
fn tartar_suite_has_no_negative_margin() {
    let r = check_tartar_suite(20_000, 3, 1e-6);
    assert!(r.pass && r.margin >= -1e-12, "{r:?}");
    assert_eq!(r.samples, 20_000);
}

#[test]
fn gronwall_examples() {
    // κ = 0: nonexpansive
    let f = flow(64, Regime::Limit, 0.0, 0.0, 1.0);
    let u = smooth_state(&f, 1.0, 1, 4);
    let v = smooth_state(&f, 1.0, 2, 4);
    let r = check_gronwall_contraction(&f, &u, &v, 1.0, 1e-6).unwrap();
    assert!(r.pass && r.margin >= 0.0, "{r:?}");
    // identical data: w ≡ 0
    let r = check_gronwall_contraction(&f, &u, &u, 1.0, 1e-6).unwrap();
    assert_eq!((r.bound, r.empirical, r.margin), (0.0, 0.0, 0.0));
    let g = flow(64, Regime::Lambda(1.0), 1.0, 0.0, 1.0);
    let r = check_gronwall_suite(&g, 3, 2.0, 4, 1.0, 1e-6).unwrap();
    assert!(r.pass && r.margin >= -1e-12 * r.bound, "{r:?}");
}

#[test]
fn absorbing_examples() {
    let f = flow(64, Regime::Limit, 1.0, 0.0, 1.0);
    let c = compute_constants(&f, &small_budget()).unwrap();
    let data = absorbing_data(&f, 10, 3, 6, c.r0).unwrap();
    for (k, u) in data.iter().enumerate() {
        assert!((u.norm_h(f.domain()).unwrap() - (k + 1) as f64 * c.r0).abs() < 1e-9 * c.r0);
    }
    let big = data[9].clone();
    let (h, v) = check_absorbing(&f, &c, &[big.clone(), State::zeros(f.domain(), Space::Limit)], 2.0, 1e-6).unwrap();
    assert!(h.pass && v.pass, "{h:?} {v:?}");
    assert!((h.metadata["largest initial norm"] - 10.0 * c.r0).abs() < 1e-9 * c.r0);
    // sup over [1, 2] dominates sup over [2, 4]
    let tr = f.evolve(&big, 4.0).unwrap();
    let per = (1.0 / f.options().sample_dt).round() as usize;
    let sup = |a: usize, b: usize| {
        tr.samples()[a..=b].iter().map(|s| s.norm_h(f.domain()).unwrap()).fold(0.0, f64::max)
    };
    assert!(sup(2 * per, 4 * per) <= sup(per, 2 * per));
}

#[test]
fn integral_bound_examples() {
    let f = flow(64, Regime::Lambda(1.0), 0.0, 0.0, 1.0);
    let zero = State::zeros(f.domain(), Space::Full);
    let (a, b) = check_integral_bounds(&f, &zero, 1.0, 1e-6).unwrap();
    assert_eq!((a.bound, a.empirical, b.bound, b.empirical), (0.0, 0.0, 0.0, 0.0));
    let u = smooth_state(&f, 1.0, 7, 2);
    let (a, b) = check_integral_bounds(&f, &u, 2.0, 1e-6).unwrap();
    let n0 = u.norm_h(f.domain()).unwrap().powi(2);
    assert!((a.bound - 0.5 * n0).abs() < 1e-14);
    assert!(a.pass && b.pass && a.empirical > 0.0 && b.empirical > 0.0);
    let forced = flow(64, Regime::Limit, 1.0, 0.5, 1.0);
    let u = smooth_state(&forced, 1.0, 7, 2);
    assert!(matches!(check_integral_bounds(&forced, &u, 1.0, 1e-6), Err(Error::Precondition(_))));
}

#[test]
fn sup_bounds_are_reported_only() {
    let f = flow(64, Regime::Lambda(1.0), 0.0, 0.0, 1.0);
    let tr = f.evolve(&State::zeros(f.domain(), Space::Full), 0.5).unwrap();
    let (u, g) = check_sup_bounds(&f, &tr).unwrap();
    assert_eq!((u.empirical, g.empirical), (0.0, 0.0));
    let u0 = NodalField::from_fn(f.domain(), |x| 0.5 * (std::f64::consts::PI * x).sin());
    let tr = f.evolve(&f.state_from_nodal(&u0).unwrap(), 1.0).unwrap();
    let (u, _) = check_sup_bounds(&f, &tr).unwrap();
    assert!(u.empirical <= 0.5 + 1e-12 && u.pass && !u.asserted);
    let forced = flow(64, Regime::Lambda(1.0), 0.0, 200.0, 1.0);
    let tr = forced.evolve(&State::zeros(forced.domain(), Space::Full), 1.0).unwrap();
    let (u, _) = check_sup_bounds(&forced, &tr).unwrap();
    assert!(u.empirical > 1.0 && u.pass);
}

#[test]
fn lipschitz_and_holder_on_pairs() {
    let f = flow(64, Regime::Limit, 1.0, 0.0, 1.0);
    let c = compute_constants(&f, &small_budget()).unwrap();
    let mut pairs = l_trajectory_pairs(&f, 4, 9, 1.0).unwrap();
    let r = estimate_l1_lipschitz(&f, &c, &pairs, 1e-6).unwrap();
    assert!(r.pass && r.empirical > 0.0 && r.empirical <= r.bound, "{r:?}");
    assert_eq!(r.samples, 4);
    assert!(check_end_map_lipschitz(&f, &pairs, 1e-6).unwrap().pass);
    let h = check_shift_holder_suite(&f, &c, &pairs, 6, 2, 1e-6).unwrap();
    assert!(h.pass, "{h:?}");

    // identical trajectories: skipped for the ratio, zero on both Hölder sides at s = t
    let same = LPair {
        chi1: pairs[0].chi1.clone(),
        chi2: pairs[0].chi1.clone(),
        long1: pairs[0].long1.clone(),
        long2: pairs[0].long1.clone(),
    };
    let h = check_shift_holder(&f, &c, &same, 0.5, 0.5, 1e-6).unwrap();
    assert_eq!((h.bound, h.empirical, h.margin), (0.0, 0.0, 0.0));
    let h = check_shift_holder(&f, &c, &same, 0.25, 0.75, 1e-6).unwrap();
    assert!(h.pass && h.empirical > 0.0);
    assert!(check_shift_holder(&f, &c, &same, 0.25, 1.5, 1e-6).is_err());
    pairs.push(same);
    let r = estimate_l1_lipschitz(&f, &c, &pairs, 1e-6).unwrap();
    assert_eq!(r.samples, 4);
    assert!(r.notes.iter().any(|n| n.contains("coincident")));
}

#[test]
fn monotone_and_coercive() {
    let f = flow(64, Regime::Limit, 1.0, 0.0, 1.0);
    let (m, c) = check_monotone_coercive(&f, 12, 1, 1e-6).unwrap();
    assert!(m.pass && c.pass && m.margin >= -1e-10, "{m:?} {c:?}");
    assert!(check_monotone_coercive(&f, 5, 1, 1e-6).is_err());
}

#[test]
fn gradient_consistency_in_both_spaces() {
    for regime in [Regime::Lambda(0.3), Regime::Limit] {
        let f = flow(48, regime, 1.0, 0.2, 1.0);
        let r = check_gradient_consistency(&f, 3, 11, 1e-6).unwrap();
        assert!(r.pass, "{r:?}");
    }
}

#[test]
fn margin_report_tolerance() {
    let r = MarginReport::new("x", 1.0, 1.0 + 5e-7, 0.0, 1e-6);
    assert!(r.pass && r.margin < 0.0);
    let r = MarginReport::new("x", 1.0, 1.0 + 5e-6, 0.0, 1e-6);
    assert!(!r.pass);
    assert!((r.tolerance - 1e-6 * (1.0 + 5e-6)).abs() < 1e-18);
}

#[test]
fn v_norm_of_zero_and_scaling() {
    let f = flow(32, Regime::Lambda(1.0), 1.0, 0.0, 1.0);
    assert_eq!(v_norm(&f, &State::zeros(f.domain(), Space::Full)).unwrap(), 0.0);
    let u = smooth_state(&f, 1.0, 1, 3);
    let u2 = f.state_from_nodal(&u.to_nodal(f.domain()).unwrap().scaled(3.0)).unwrap();
    let (a, b) = (v_norm(&f, &u).unwrap(), v_norm(&f, &u2).unwrap());
    assert!((b - 3.0 * a).abs() < 1e-9 * b);
    }
