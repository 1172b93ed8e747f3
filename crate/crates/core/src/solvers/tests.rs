use super::*;
use crate::game::{
    compile, make_cournot_instance, make_dsm_instance, matching_pennies, ActionMap, ConstraintMap,
    CournotParams, DsmParams, GmiGame,
};
use crate::operators::{eval_forward_S, random_domain_point, Variant};
use crate::regularizers::project_euclidean;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pennies() -> MsGnep {
    compile(&matching_pennies()).unwrap()
}

/// Off-center start for matching pennies (the uniform point is already the equilibrium).
fn pennies_start() -> Vec<f64> {
    vec![0.8, 0.2, 0.3, 0.7]
}

/// Matching pennies with one continuous variable per player in `[0, 2]`, a loose
/// local row `a_i + y_i ≤ 100` and a shared row `Σ_i (a_i + y_i) ≤ 1.5`.
fn pennies_with_continuous(theta: f64) -> MsGnep {
    let mut g = matching_pennies();
    for a in &mut g.agents {
        a.y_set = SetDescriptor::Box {
            lower: vec![0.0],
            upper: vec![2.0],
        };
        a.local_discrete = ActionMap::Affine {
            matrix: DMatrix::from_element(1, 1, 1.0),
            offset: vec![0.0],
        };
        a.local_continuous = ConstraintMap::linear(DMatrix::from_element(1, 1, 1.0));
        a.theta = vec![theta];
        a.coupling_discrete = ActionMap::Affine {
            matrix: DMatrix::from_element(1, 1, 1.0),
            offset: vec![0.0],
        };
        a.coupling_continuous = ConstraintMap::linear(DMatrix::from_element(1, 1, 1.0));
    }
    g.rho = vec![1.5];
    compile(&g).unwrap()
}

fn cournot(n: usize) -> MsGnep {
    compile(
        &make_cournot_instance(&CournotParams {
            n_agents: n,
            ..CournotParams::default()
        })
        .unwrap(),
    )
    .unwrap()
}

fn dsm() -> MsGnep {
    compile(&make_dsm_instance(&DsmParams::default()).unwrap()).unwrap()
}

fn softmax_step(x: &[f64], c: &[f64], gamma: f64) -> Vec<f64> {
    let w: Vec<f64> = x.iter().zip(c).map(|(a, b)| a * (-gamma * b).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

#[test]
fn equilibrium_is_a_fixed_point() {
    let ms = pennies();
    let p = build_problem(&ms, Variant::SemiDecentralized, None, 0).unwrap();
    let spec = regularizer_for(&p, LegendreKind::GibbsShannon).unwrap();
    let star = vec![0.5; 4];
    let b = p.eval(&star).unwrap();
    let (next, fresh) = bforb_step(&p, &spec, &[0.2; 2], &star, &b).unwrap();
    assert_eq!(fresh, b);
    assert!(dist_inf(&next, &star) <= 1e-15);
}

#[test]
fn free_blocks_give_the_unconstrained_forb_step() {
    let ms = dsm();
    let g = CommGraph::ring(ms.n_agents()).unwrap();
    let p = build_problem(&ms, Variant::Distributed, Some(&g), 0).unwrap();
    let spec = regularizer_for(&p, LegendreKind::Euclidean).unwrap();
    let kinds = block_kinds(&p, &spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w = random_domain_point(&ms, &p.layout, &mut rng, 1.0);
    let b = p.eval(&w).unwrap();
    let bp: Vec<f64> = b.iter().map(|v| v + rng.gen_range(-1.0..1.0)).collect();
    let steps = vec![0.01; p.blocks.len()];
    let mut out = vec![0.0; p.dim()];
    bforb_update(&p, &kinds, &steps, &w, &b, &bp, &mut out).unwrap();
    for r in &p.layout.nu {
        for k in r.clone() {
            assert_eq!(out[k], w[k] - 0.01 * (2.0 * b[k] - bp[k]));
        }
    }
}

#[test]
fn euclidean_step_is_projected_forb() {
    let ms = pennies_with_continuous(100.0);
    let p = build_problem(&ms, Variant::SemiDecentralized, None, 0).unwrap();
    let spec = regularizer_for(&p, LegendreKind::Euclidean).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let w = random_domain_point(&ms, &p.layout, &mut rng, 1.0);
    let w_prev = random_domain_point(&ms, &p.layout, &mut rng, 1.0);
    let bp = p.eval(&w_prev).unwrap();
    let steps: Vec<f64> = (0..p.blocks.len()).map(|k| 0.05 + 0.01 * k as f64).collect();
    let (next, b) = bforb_step(&p, &spec, &steps, &w, &bp).unwrap();
    for (blk, &g) in p.blocks.iter().zip(&steps) {
        let r = blk.range.clone();
        let z: Vec<f64> = r.clone().map(|k| w[k] - g * (2.0 * b[k] - bp[k])).collect();
        let set = match &blk.set {
            BackwardSet::Simplex => SetDescriptor::Simplex,
            BackwardSet::Set(s) => s.clone(),
            other => panic!("{other:?}"),
        };
        assert_eq!(next[r], project_euclidean(&set, &z).unwrap()[..]);
    }
}

#[test]
fn entropy_step_matches_softmax() {
    let ms = pennies();
    let p = build_problem(&ms, Variant::SemiDecentralized, None, 0).unwrap();
    let spec = regularizer_for(&p, LegendreKind::GibbsShannon).unwrap();
    let kinds = block_kinds(&p, &spec).unwrap();
    let w = pennies_start();
    let c = vec![0.3, -1.2, 2.0, 0.1];
    let mut out = vec![0.0; 4];
    // constant B: 2B(ω^k) − B(ω^{k−1}) = c
    bforb_update(&p, &kinds, &[0.2, 0.2], &w, &c, &c, &mut out).unwrap();
    let e1 = softmax_step(&w[0..2], &c[0..2], 0.2);
    let e2 = softmax_step(&w[2..4], &c[2..4], 0.2);
    assert!(dist_inf(&out[0..2], &e1) <= 1e-15);
    assert!(dist_inf(&out[2..4], &e2) <= 1e-15);
}

#[test]
fn entropy_rejected_off_simplex() {
    let ms = dsm();
    let p = build_problem(&ms, Variant::SemiDecentralized, None, 0).unwrap();
    let spec = RegularizerSpec::gibbs_shannon(p.dim());
    assert!(block_kinds(&p, &spec).is_err());
    assert!(block_kinds(&p, &RegularizerSpec::euclidean(p.dim() + 1)).is_err());
}

#[test]
fn infinite_tolerance_stops_after_one_iteration() {
    let cfg = SolveConfig {
        epsilon: f64::INFINITY,
        initial: Some(pennies_start()),
        ..SolveConfig::default()
    };
    let r = run_algorithm1(&pennies(), &cfg).unwrap();
    assert_eq!((r.status, r.iterations), (Status::Converged, 1));
    assert_eq!(r.trace.len(), 1);
}

#[test]
fn step_configuration_checks() {
    let ms = pennies();
    for gamma in [vec![0.0], vec![-0.1], vec![f64::NAN], vec![0.25], vec![0.1, 0.1, 0.1]] {
        let cfg = SolveConfig {
            gamma: Some(gamma.clone()),
            ..SolveConfig::default()
        };
        assert!(matches!(run_algorithm1(&ms, &cfg), Err(Error::Config(_)) | Err(Error::Dimension { .. })), "{gamma:?}");
    }
    let zero = SolveConfig {
        gamma: Some(vec![0.0]),
        zeta: Some(0.0),
        ..SolveConfig::default()
    };
    assert!(run_alternative(&ms, &zero).is_err());
    // an oversized step is accepted once the check is off
    let loose = SolveConfig {
        gamma: Some(vec![0.3]),
        check_steps: false,
        max_iters: 5,
        ..SolveConfig::default()
    };
    assert!(run_algorithm1(&ms, &loose).is_ok());
    for bad in [
        SolveConfig {
            epsilon: 0.0,
            ..SolveConfig::default()
        },
        SolveConfig {
            trace_every: 0,
            ..SolveConfig::default()
        },
        SolveConfig {
            initial: Some(vec![0.5; 3]),
            ..SolveConfig::default()
        },
    ] {
        assert!(run_algorithm1(&ms, &bad).is_err());
    }
}

#[test]
fn default_steps_are_ninety_percent_of_the_bound() {
    let ms = pennies();
    let p = build_problem(&ms, Variant::SemiDecentralized, None, 0).unwrap();
    let (g, z) = resolve_steps(&p, &SolveConfig::default(), 2).unwrap();
    let expected = 0.9 * step_size_bound(p.lipschitz, 1.0);
    assert_eq!(g, vec![expected; 2]);
    assert_eq!(z, expected);
}

#[test]
fn matching_pennies_converges_to_uniform() {
    let cfg = SolveConfig {
        epsilon: 1e-6,
        initial: Some(pennies_start()),
        ..SolveConfig::default()
    };
    let r = run_algorithm1(&pennies(), &cfg).unwrap();
    assert_eq!(r.status, Status::Converged);
    assert!(dist_inf(&r.final_iterate, &[0.5; 4]) <= 1e-4);
    let alt = run_alternative(&pennies(), &cfg).unwrap();
    assert_eq!(alt.status, Status::Converged);
    assert!(dist_inf(&alt.primal(), &r.primal()) <= 2e-4);
}

/// Every strategy block sums to one and stays positive; multipliers stay nonnegative.
fn check_domain(ms: &MsGnep, layout: &Layout, w: &[f64]) {
    for (i, a) in ms.agents.iter().enumerate() {
        let xi = &w[layout.x[i].clone()];
        for r in a.component_ranges() {
            let s: f64 = xi[r.clone()].iter().sum();
            assert!((s - 1.0).abs() <= 1e-12, "sum {s}");
            assert!(xi[r].iter().all(|&v| v > 0.0 || layout.variant == Variant::Alternative && v >= 0.0));
        }
    }
    for r in layout.mu.iter().chain(&layout.lambda) {
        assert!(w[r.clone()].iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn iterates_stay_in_the_domain() {
    let ms = dsm();
    let g = CommGraph::ring(ms.n_agents()).unwrap();
    for (variant, graph) in [
        (Variant::SemiDecentralized, None),
        (Variant::Alternative, None),
        (Variant::Distributed, Some(&g)),
    ] {
        let p = build_problem(&ms, variant, graph, 0).unwrap();
        let kind = if variant == Variant::Alternative {
            LegendreKind::Euclidean
        } else {
            LegendreKind::GibbsShannon
        };
        let spec = regularizer_for(&p, kind).unwrap();
        let (gamma, zeta) = resolve_steps(&p, &SolveConfig::default(), ms.n_agents()).unwrap();
        let steps = p.block_steps(&gamma, zeta);
        let mut w = p.layout.initial_point(&ms);
        let mut bp = p.eval(&w).unwrap();
        for _ in 0..200 {
            let (next, b) = bforb_step(&p, &spec, &steps, &w, &bp).unwrap();
            check_domain(&ms, &p.layout, &next);
            w = next;
            bp = b;
        }
    }
}

#[test]
fn driver_iterates_stay_in_the_domain() {
    let ms = pennies_with_continuous(100.0);
    for max_iters in [1, 7, 50] {
        let cfg = SolveConfig {
            max_iters,
            initial: None,
            ..SolveConfig::default()
        };
        let r = run_algorithm1(&ms, &cfg).unwrap();
        check_domain(&ms, &r.layout, &r.final_iterate);
        let r = run_alternative(&ms, &cfg).unwrap();
        check_domain(&ms, &r.layout, &r.final_iterate);
    }
}

#[test]
fn runs_are_deterministic() {
    let ms = cournot(4);
    let cfg = SolveConfig {
        max_iters: 300,
        ..SolveConfig::default()
    };
    let (a, b) = (run_algorithm1(&ms, &cfg).unwrap(), run_algorithm1(&ms, &cfg).unwrap());
    assert_eq!(a.final_iterate, b.final_iterate);
    assert_eq!(a.trace, b.trace);
    let g = CommGraph::ring(4).unwrap();
    let (a, b) = (run_algorithm2(&ms, &g, &cfg).unwrap(), run_algorithm2(&ms, &g, &cfg).unwrap());
    assert_eq!(a.final_iterate, b.final_iterate);
    let (a, b) = (run_alternative(&ms, &cfg).unwrap(), run_alternative(&ms, &cfg).unwrap());
    assert_eq!(a.final_iterate, b.final_iterate);
}

#[test]
fn lyapunov_vanishes_at_the_solution() {
    let ms = pennies();
    let p = build_problem(&ms, Variant::SemiDecentralized, None, 0).unwrap();
    let spec = regularizer_for(&p, LegendreKind::GibbsShannon).unwrap();
    let star = vec![0.5; 4];
    let b = p.eval(&star).unwrap();
    let v = lyapunov_diagnostic(&p, &spec, &[0.2, 0.2], &star, &star, &star, &b, &b).unwrap();
    assert_eq!(v, 0.0);
}

#[test]
fn lyapunov_decreases_along_matching_pennies() {
    let cfg = SolveConfig {
        epsilon: 1e-9,
        initial: Some(pennies_start()),
        reference: Some(vec![0.5; 4]),
        ..SolveConfig::default()
    };
    let r = run_algorithm1(&pennies(), &cfg).unwrap();
    let values: Vec<f64> = r.trace.iter().map(|t| t.lyapunov.unwrap()).collect();
    assert!(values.len() > 10);
    for w in values.windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "{} then {}", w[0], w[1]);
    }
    assert!(values.iter().all(|&v| v >= -1e-12));
}

#[test]
fn converged_iterate_is_nearly_fixed() {
    let ms = cournot(5);
    let cfg = SolveConfig {
        epsilon: 1e-6,
        ..SolveConfig::default()
    };
    let r = run_algorithm1(&ms, &cfg).unwrap();
    assert_eq!(r.status, Status::Converged);
    let p = build_problem(&ms, Variant::SemiDecentralized, None, 0).unwrap();
    let spec = regularizer_for(&p, LegendreKind::GibbsShannon).unwrap();
    let steps = p.block_steps(&r.gamma, r.zeta);
    let b = p.eval(&r.final_iterate).unwrap();
    let (next, _) = bforb_step(&p, &spec, &steps, &r.final_iterate, &b).unwrap();
    assert!(dist_inf(&next, &r.final_iterate) <= 2.0 * cfg.epsilon);
}

#[test]
fn inactive_local_rows_match_separate_projections() {
    let ms = pennies_with_continuous(100.0);
    let cfg = SolveConfig {
        max_iters: 200,
        epsilon: 1e-300,
        initial: None,
        ..SolveConfig::default()
    };
    let r = run_alternative(&ms, &cfg).unwrap();
    let layout = Layout::new(&ms, Variant::Alternative);
    let p = build_problem(&ms, Variant::Alternative, None, 0).unwrap();
    let (gamma, zeta) = resolve_steps(&p, &cfg, 2).unwrap();
    let mut w = layout.initial_point(&ms);
    let mut bp = eval_forward_S(&ms, &w).unwrap();
    for _ in 0..200 {
        let b = eval_forward_S(&ms, &w).unwrap();
        let mut next = w.clone();
        let reflect = |k: usize, g: f64| w[k] - g * (2.0 * b[k] - bp[k]);
        for i in 0..2 {
            let z: Vec<f64> = layout.x[i].clone().map(|k| reflect(k, gamma[i])).collect();
            next[layout.x[i].clone()].copy_from_slice(&project_euclidean(&SetDescriptor::Simplex, &z).unwrap());
            let z: Vec<f64> = layout.y[i].clone().map(|k| reflect(k, gamma[i])).collect();
            let boxed = &ms.agents[i].y_set;
            next[layout.y[i].clone()].copy_from_slice(&project_euclidean(boxed, &z).unwrap());
        }
        for k in layout.lambda[0].clone() {
            next[k] = reflect(k, zeta).max(0.0);
        }
        bp = b;
        w = next;
    }
    assert!(dist_inf(&w, &r.final_iterate) <= 1e-10, "{}", dist_inf(&w, &r.final_iterate));
}

#[test]
fn distributed_cournot_reaches_consensus() {
    let ms = cournot(5);
    let cfg = SolveConfig {
        epsilon: 1e-6,
        ..SolveConfig::default()
    };
    let g = CommGraph::ring(5).unwrap();
    let r = run_algorithm2(&ms, &g, &cfg).unwrap();
    assert_eq!(r.status, Status::Converged);
    assert!(consensus_spread(&r) <= 1e-4, "{}", consensus_spread(&r));
}

#[test]
fn two_agent_complete_graph_matches_centralized_multipliers() {
    let ms = cournot(2);
    let cfg = SolveConfig {
        epsilon: 1e-7,
        max_iters: 1_000_000,
        ..SolveConfig::default()
    };
    let central = run_algorithm1(&ms, &cfg).unwrap();
    let dist = run_algorithm2(&ms, &CommGraph::complete(2).unwrap(), &cfg).unwrap();
    assert_eq!(central.status, Status::Converged);
    assert_eq!(dist.status, Status::Converged);
    for i in 0..2 {
        assert!(dist_inf(dist.lambda(i), central.lambda(0)) <= 1e-3);
    }
}

#[test]
fn zero_weight_graph_rejected() {
    let ms = cournot(3);
    let g = CommGraph::from_edges(3, &[(0, 1, 1.0)]).unwrap();
    assert!(run_algorithm2(&ms, &g, &SolveConfig::default()).is_err());
    let wrong_size = CommGraph::ring(4).unwrap();
    assert!(run_algorithm2(&ms, &wrong_size, &SolveConfig::default()).is_err());
}

#[test]
fn divergence_is_a_status() {
    let ms = pennies_with_continuous(100.0);
    let p = build_problem(&ms, Variant::SemiDecentralized, None, 0).unwrap();
    let mut w = p.layout.initial_point(&ms);
    w[p.layout.lambda[0].clone()][0] = 2e12;
    let cfg = SolveConfig {
        initial: Some(w),
        ..SolveConfig::default()
    };
    let r = run_algorithm1(&ms, &cfg).unwrap();
    assert_eq!(r.status, Status::Diverged);
}

#[test]
fn max_iters_status_and_trace_sampling() {
    let cfg = SolveConfig {
        epsilon: 1e-300,
        max_iters: 25,
        trace_every: 10,
        initial: Some(pennies_start()),
        ..SolveConfig::default()
    };
    let r = run_algorithm1(&pennies(), &cfg).unwrap();
    assert_eq!((r.status, r.iterations), (Status::MaxIters, 25));
    let iters: Vec<usize> = r.trace.iter().map(|t| t.iter).collect();
    assert_eq!(iters, vec![10, 20, 25]);
}

#[test]
fn trace_csv_format() {
    let rows = vec![
        TraceRow {
            iter: 1,
            residual_inf: 0.1,
            coupling_violation: 0.0,
            local_violation: 1.0 / 3.0,
            lyapunov: None,
        },
        TraceRow {
            iter: 2,
            residual_inf: 0.05,
            coupling_violation: 0.0,
            local_violation: 0.0,
            lyapunov: None,
        },
    ];
    let mut buf = Vec::new();
    write_trace_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "iter,residual_inf,coupling_violation,local_violation");
    assert_eq!(lines.len(), 3);
    let third: f64 = lines[1].split(',').nth(3).unwrap().parse().unwrap();
    assert_eq!(third, 1.0 / 3.0);
    let with_lyap = vec![TraceRow {
        lyapunov: Some(2.5),
        ..rows[0]
    }];
    let mut buf = Vec::new();
    write_trace_csv(&with_lyap, &mut buf).unwrap();
    assert!(String::from_utf8(buf).unwrap().starts_with("iter,residual_inf,coupling_violation,local_violation,lyapunov\n"));
}

#[test]
fn game_without_constraints_has_no_multipliers() {
    let g = GmiGame {
        agents: matching_pennies().agents,
        rho: vec![],
        continuous_cost: None,
    };
    let ms = compile(&g).unwrap();
    let r = run_algorithm1(&ms, &SolveConfig { max_iters: 3, ..SolveConfig::default() }).unwrap();
    assert!(r.lambda(0).is_empty() && r.mu(0).is_empty());
}
