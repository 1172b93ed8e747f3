use super::*;
use crate::game::{
    compile, lift_integer_cost, make_cournot_instance, make_dsm_instance, make_flow_instance, matching_pennies,
    CostSpec, CournotParams, DsmParams, FlowParams, GmiGame, AgentSpec,
};
use crate::operators::build_problem;
use crate::regularizers::LegendreKind;
use crate::solvers::{regularizer_for, run_algorithm1, SolveConfig, Status};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn pennies() -> MsGnep {
    compile(&matching_pennies()).unwrap()
}

/// Two players with linear cost `x_1ᵀ M x_2` and `x_2ᵀ N x_1`.
fn bimatrix(m: DMatrix<f64>, n: DMatrix<f64>) -> MsGnep {
    // one-hot actions so that the cost of pure actions (j, k) is M[j, k]
    let acts = |k: usize| {
        (0..k)
            .map(|j| (0..k).map(|c| i64::from(c == j)).collect())
            .collect::<Vec<Vec<i64>>>()
    };
    let agents = vec![
        AgentSpec::finite(
            acts(m.nrows()),
            0,
            CostSpec::LinearCoupled {
                pi_bar: vec![0.0; m.nrows()],
                blocks: vec![None, Some(m.clone())],
            },
        ),
        AgentSpec::finite(
            acts(n.nrows()),
            0,
            CostSpec::LinearCoupled {
                pi_bar: vec![0.0; n.nrows()],
                blocks: vec![Some(n), None],
            },
        ),
    ];
    compile(&GmiGame {
        agents,
        rho: vec![],
        continuous_cost: None,
    })
    .unwrap()
}

#[test]
fn exploitability_examples() {
    let ms = pennies();
    assert_eq!(exploitability(&ms, &[0.5; 4]).unwrap(), 0.0);
    assert_eq!(exploitability(&ms, &[1.0, 0.0, 1.0, 0.0]).unwrap(), 2.0);
    let dsm = compile(&make_dsm_instance(&DsmParams::default()).unwrap()).unwrap();
    assert!(matches!(exploitability(&dsm, &dsm.uniform_strategies()), Err(Error::Config(_))));
    assert!(exploitability(&ms, &[0.5; 3]).is_err());
}

#[test]
fn grid_search_finds_uniform_pennies() {
    let (x, e) = grid_search_equilibrium(&pennies(), 1e-3).unwrap();
    assert_eq!(x, vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
    assert!(e <= 1e-12);
}

#[test]
fn grid_search_three_actions() {
    // rock-paper-scissors costs: unique equilibrium at (1/3, 1/3, 1/3)
    let m = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, -1.0, -1.0, 0.0, 1.0, 1.0, -1.0, 0.0]);
    let ms = bimatrix(m.clone(), m);
    let (x, e) = grid_search_equilibrium(&ms, 0.02).unwrap();
    for xi in &x {
        for &v in xi {
            assert!((v - 1.0 / 3.0).abs() <= 0.02);
        }
    }
    assert!(e <= 0.05);
    let dsm = compile(&make_dsm_instance(&DsmParams::default()).unwrap()).unwrap();
    assert!(grid_search_equilibrium(&dsm, 1e-3).is_err());
}

#[test]
fn certificate_vanishes_at_the_pennies_equilibrium() {
    let ms = pennies();
    let p = build_problem(&ms, crate::operators::Variant::SemiDecentralized, None, 0).unwrap();
    let spec = regularizer_for(&p, LegendreKind::GibbsShannon).unwrap();
    let c = kkt_residual(&ms, &p, &spec, &[0.2, 0.2], &[0.5; 4]).unwrap();
    assert!(c.fixed_point_residual_inf <= 1e-12);
    assert_eq!(c.exploitability, Some(0.0));
    assert_eq!((c.coupling_violation_inf, c.local_violation_inf, c.complementarity_gap), (0.0, 0.0, 0.0));
}

#[test]
fn converged_dsm_certificate() {
    let ms = compile(&make_dsm_instance(&DsmParams::default()).unwrap()).unwrap();
    let cfg = SolveConfig {
        epsilon: 1e-6,
        ..SolveConfig::default()
    };
    let r = run_algorithm1(&ms, &cfg).unwrap();
    assert_eq!(r.status, Status::Converged);
    let p = build_problem(&ms, crate::operators::Variant::SemiDecentralized, None, 0).unwrap();
    let spec = regularizer_for(&p, LegendreKind::GibbsShannon).unwrap();
    let c = kkt_residual(&ms, &p, &spec, &p.block_steps(&r.gamma, r.zeta), &r.final_iterate).unwrap();
    assert!(c.fixed_point_residual_inf <= 2e-6, "{}", c.fixed_point_residual_inf);
    assert!(c.exploitability.is_none());
    assert!(c.coupling_violation_inf >= 0.0 && c.local_violation_inf >= 0.0 && c.complementarity_gap >= 0.0);
}

#[test]
fn exploitability_and_residual_agree() {
    let ms = pennies();
    let p = build_problem(&ms, crate::operators::Variant::SemiDecentralized, None, 0).unwrap();
    let spec = regularizer_for(&p, LegendreKind::GibbsShannon).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let a: f64 = rng.gen_range(0.01..0.99);
        let b: f64 = rng.gen_range(0.01..0.99);
        let x = [a, 1.0 - a, b, 1.0 - b];
        let e = exploitability(&ms, &x).unwrap();
        let c = kkt_residual(&ms, &p, &spec, &[0.2, 0.2], &x).unwrap();
        assert!(e >= 0.0);
        assert_eq!(e <= 1e-8, c.fixed_point_residual_inf <= 1e-8, "{e} vs {}", c.fixed_point_residual_inf);
    }
    let c = kkt_residual(&ms, &p, &spec, &[0.2, 0.2], &[0.5; 4]).unwrap();
    assert!(c.fixed_point_residual_inf <= 1e-8 && c.exploitability.unwrap() <= 1e-8);
}

#[test]
fn monotonicity_examples() {
    let skew = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, -1.0, -2.0, 0.0, 0.5, 1.0, -0.5, 0.0]);
    let oracle = |z: &[f64]| Ok((&skew * nalgebra::DVector::from_column_slice(z)).as_slice().to_vec());
    let mut sampler = |rng: &mut ChaCha8Rng| (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect::<Vec<f64>>();
    let s = monotonicity_sample(&oracle, &mut sampler, 500, 1).unwrap();
    assert!(s.min_inner.abs() <= 1e-12 && s.failure.is_none());
    let identity = |z: &[f64]| Ok(z.to_vec());
    let s = monotonicity_sample(&identity, &mut sampler, 500, 1).unwrap();
    assert!(s.min_inner > 0.0 && s.passed(0.0));
    // a linear cost whose symmetric part is negative definite
    let bad = DMatrix::from_row_slice(2, 2, &[-1.0, 0.3, 0.1, -2.0]);
    let oracle = |z: &[f64]| Ok((&bad * nalgebra::DVector::from_column_slice(z)).as_slice().to_vec());
    let mut sampler2 = |rng: &mut ChaCha8Rng| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    let s = monotonicity_sample(&oracle, &mut sampler2, 100, 2).unwrap();
    let (z, zp) = s.failure.clone().expect("violating pair");
    let d: Vec<f64> = z.iter().zip(&zp).map(|(a, b)| a - b).collect();
    assert!(dot((&bad * nalgebra::DVector::from_column_slice(&d)).as_slice(), &d) < MONOTONICITY_FAILURE);
    assert!(!s.passed(-1e-10));
}

#[test]
fn rounding_examples() {
    let ms = pennies();
    assert_eq!(round_to_pure(&ms, &[0.9, 0.1, 0.5, 0.5]).unwrap(), vec![vec![0], vec![0]]);
    assert_eq!(round_to_pure(&ms, &[0.2, 0.8, 0.4, 0.6]).unwrap(), vec![vec![1], vec![1]]);
    assert_eq!(argmax_lowest(&[0.2, 0.4, 0.4]), 1);
    assert!(round_to_pure(&ms, &[1.0]).is_err());
}

#[test]
fn dsm_rounding_turns_devices_on_off_peak() {
    let params = DsmParams::default();
    let ms = compile(&make_dsm_instance(&params).unwrap()).unwrap();
    let r = run_algorithm1(&ms, &SolveConfig::default()).unwrap();
    let x: Vec<f64> = r.strategies().concat();
    let pure = round_to_pure(&ms, &x).unwrap();
    let peak = params.peak_slots();
    let mut on_off_peak = 0;
    for a in &pure {
        for (t, &v) in a.iter().enumerate() {
            if peak[t % params.horizon] {
                assert_eq!(v, 0, "device on in peak slot {t}");
            } else {
                on_off_peak += v;
            }
        }
    }
    assert!(on_off_peak > 0);
}

#[test]
fn finite_difference_examples() {
    let lin = |p: &[f64]| 3.0 * p[0] - 2.0 * p[1] + 0.5;
    let lin_grad = |_: &[f64]| vec![3.0, -2.0];
    assert!(finite_difference_check(&lin, &lin_grad, &[0.3, -1.2], 1e-5).unwrap() <= 1e-10);
    assert!(finite_difference_check(&lin, &lin_grad, &[0.3, -1.2], 1e-3).is_err());
    assert!(finite_difference_check(&lin, &lin_grad, &[0.3, -1.2], 1e-9).is_err());
    let wrong = |_: &[f64]| vec![3.0, 2.0];
    assert!(finite_difference_check(&lin, &wrong, &[0.3, -1.2], 1e-5).unwrap() > 1.0);
}

/// Own-coordinate gradient of each agent's continuous cost against differences.
fn own_gradient_error(ms: &MsGnep, y: &[f64]) -> f64 {
    let cost = ms.continuous_cost().unwrap().clone();
    let mut grad = vec![0.0; ms.n()];
    ms.fc(y, &mut grad).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..ms.n_agents() {
        let r = ms.y_range(i);
        let value = |yi: &[f64]| {
            let mut full = y.to_vec();
            full[r.clone()].copy_from_slice(yi);
            cost.cost(i, &full)
        };
        let gradient = |yi: &[f64]| {
            let mut full = y.to_vec();
            full[r.clone()].copy_from_slice(yi);
            let mut g = vec![0.0; full.len()];
            ms.fc(&full, &mut g).unwrap();
            g[r.clone()].to_vec()
        };
        worst = worst.max(finite_difference_check(&value, &gradient, &y[r.clone()], 1e-5).unwrap());
    }
    worst
}

#[test]
fn cournot_gradient_matches_differences() {
    let ms = compile(&make_cournot_instance(&CournotParams::default()).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let y: Vec<f64> = (0..ms.n()).map(|_| rng.gen_range(0.0..1.0)).collect();
        assert!(own_gradient_error(&ms, &y) <= 1e-6);
    }
}

#[test]
fn flow_gradient_matches_differences() {
    let ms = compile(&lift_integer_cost(&make_flow_instance(&FlowParams::default()).unwrap()).unwrap()).unwrap();
    assert!(own_gradient_error(&ms, &ms.y_centers()) <= 1e-5);
}

#[test]
fn coupling_audit_matches_expectation() {
    let ms = compile(&make_dsm_instance(&DsmParams::default()).unwrap()).unwrap();
    let r = run_algorithm1(&ms, &SolveConfig::default()).unwrap();
    let x: Vec<f64> = r.strategies().concat();
    let y: Vec<f64> = r.continuous().concat();
    let audit = coupling_audit(&ms, &x, &y, 20_000, 7).unwrap();
    assert!(audit.consistent(3.0, 1e-9));
    assert!(audit.within_bound(&ms.rho, 3.0, 1e-6));
    assert!(coupling_audit(&ms, &x, &y, 1, 0).is_err());
}

proptest! {
    #[test]
    fn rounding_is_invariant_under_increasing_maps(
        a in proptest::collection::vec(0.0f64..1.0, 2),
        b in proptest::collection::vec(0.0f64..1.0, 2),
        shift in -3.0f64..3.0,
        scale in 0.1f64..5.0,
    ) {
        let ms = pennies();
        let x: Vec<f64> = a.iter().chain(&b).copied().collect();
        let t: Vec<f64> = x.iter().map(|v| (scale * v).exp() + shift).collect();
        prop_assert_eq!(round_to_pure(&ms, &x).unwrap(), round_to_pure(&ms, &t).unwrap());
    }

    #[test]
    fn exploitability_is_nonnegative(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let x = [a, 1.0 - a, b, 1.0 - b];
        prop_assert!(exploitability(&pennies(), &x).unwrap() >= 0.0);
    }
}
