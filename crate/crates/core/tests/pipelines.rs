use msgne::game::{
    compile, lift_integer_cost, make_cournot_instance, make_flow_instance, make_pwa_instance, min_auxiliary_cost,
    reformulate_pwa, CournotParams, FlowParams, PwaParams,
};
use msgne::linalg::dist_inf;
use msgne::network::CommGraph;
use msgne::solvers::{run_algorithm1, run_algorithm2, run_alternative, SolveConfig, Status};
use msgne::verify::{coupling_audit, round_to_pure};

#[test]
fn cournot_three_algorithms_agree() {
    let ms = compile(&make_cournot_instance(&CournotParams::default()).unwrap()).unwrap();
    let cfg = SolveConfig {
        epsilon: 1e-6,
        ..SolveConfig::default()
    };
    let a = run_algorithm1(&ms, &cfg).unwrap();
    let b = run_alternative(&ms, &cfg).unwrap();
    let c = run_algorithm2(&ms, &CommGraph::ring(5).unwrap(), &cfg).unwrap();
    for r in [&a, &b, &c] {
        assert_eq!(r.status, Status::Converged);
    }
    assert!(dist_inf(&a.primal(), &b.primal()) <= 1e-3);
    assert!(dist_inf(&a.primal(), &c.primal()) <= 1e-3);
}

#[test]
fn flow_lift_solve_and_round() {
    let g = make_flow_instance(&FlowParams::default()).unwrap();
    let ms = compile(&lift_integer_cost(&g).unwrap()).unwrap();
    let r = run_algorithm1(&ms, &SolveConfig::default()).unwrap();
    assert_eq!(r.status, Status::Converged);
    let x: Vec<f64> = r.strategies().concat();
    let pure = round_to_pure(&ms, &x).unwrap();
    // rounded flows stay inside each agent's integer range
    for (a, spec) in pure.iter().zip(&g.agents) {
        assert!(spec.components[0].contains(a));
    }
    let y: Vec<f64> = r.continuous().concat();
    let audit = coupling_audit(&ms, &x, &y, 20_000, 3).unwrap();
    assert!(audit.consistent(3.0, 1e-9));
}

#[test]
fn pwa_solution_respects_value_identity() {
    let spec = make_pwa_instance(&PwaParams {
        n_agents: 2,
        max_regions: 2,
        seed: 0,
    })
    .unwrap();
    let ms = compile(&reformulate_pwa(&spec).unwrap()).unwrap();
    let cfg = SolveConfig {
        max_iters: 2000,
        ..SolveConfig::default()
    };
    let r = run_alternative(&ms, &cfg).unwrap();
    assert_ne!(r.status, Status::Diverged);
    for (i, ag) in spec.agents.iter().enumerate() {
        let y = r.y(i)[0].clamp(ag.lower(), ag.upper());
        if let Some(v) = ag.value(y) {
            let (best, _) = min_auxiliary_cost(&ms.agents[i], y, 1e-9).unwrap();
            assert!((best - v).abs() <= 1e-8);
        }
    }
}
