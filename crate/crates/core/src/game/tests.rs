use super::*;
use crate::linalg::{dist_inf, dot, matvec};
use crate::verify::{finite_difference_check, monotonicity_sample};
use approx::assert_abs_diff_eq;
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_simplex(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..m).map(|_| rng.gen_range(0.01..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn random_profile(rng: &mut ChaCha8Rng, ms: &MsGnep) -> Vec<f64> {
    ms.agents
        .iter()
        .flat_map(|a| {
            a.components
                .iter()
                .flat_map(|c| random_simplex(rng, c.len()))
                .collect::<Vec<_>>()
        })
        .collect()
}

#[test]
fn enumerate_examples() {
    let a = enumerate_binary(3, |a| a.iter().sum::<i64>() <= 1).unwrap();
    assert_eq!(a, vec![vec![0, 0, 0], vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
    // exhaustive oracle: every member of {0,1}^3 passing the filter appears once
    let mut count = 0;
    for bits in 0..8i64 {
        let v = [bits & 1, (bits >> 1) & 1, (bits >> 2) & 1];
        if v.iter().sum::<i64>() <= 1 {
            count += 1;
            assert!(a.contains(&v.to_vec()));
        }
    }
    assert_eq!(count, a.len());
    assert_eq!(enumerate_binary(1, |_| true).unwrap(), vec![vec![0], vec![1]]);
    assert_eq!(enumerate_actions(&[0], &[2], |_| true).unwrap(), vec![vec![0], vec![1], vec![2]]);
}

#[test]
fn enumerate_rejects_overflow() {
    match enumerate_binary(21, |_| true) {
        Err(Error::Cardinality { count, .. }) => assert_eq!(count, 1 << 21),
        other => panic!("{other:?}"),
    }
    assert!(enumerate_actions(&[2], &[1], |_| true).is_err());
}

#[test]
fn matching_pennies_expected_costs() {
    let g = matching_pennies();
    let f = expected_cost_vector(&g, 0, &[vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
    assert_eq!(f, vec![1.0, -1.0]);
    let f = expected_cost_vector(&g, 0, &[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
    assert_abs_diff_eq!(f[0], 0.0, epsilon = 1e-15);
    assert_abs_diff_eq!(f[1], 0.0, epsilon = 1e-15);
    assert!(expected_cost_vector(&g, 0, &[vec![0.5, 0.5], vec![1.0]]).is_err());
}

#[test]
fn zero_cost_expected_vector() {
    let g = make_cournot_instance(&CournotParams::default()).unwrap();
    let x: Vec<Vec<f64>> = g.agents.iter().map(|a| vec![1.0 / a.m() as f64; a.m()]).collect();
    let f = expected_cost_vector(&g, 2, &x).unwrap();
    assert!(f.iter().all(|&v| v == 0.0));
}

#[test]
fn relax_dsm_device_example() {
    let comps = vec![vec![vec![0], vec![1]]];
    let map = ActionMap::Affine {
        matrix: DMatrix::from_row_slice(2, 1, &[1.0, -3.0]),
        offset: vec![0.0; 2],
    };
    let g = relax_constraints(&map, &comps);
    assert_eq!(g, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -3.0]));
    // oracle: columns are the map evaluated at each action
    for j in 0..2 {
        assert_eq!(g.column(j).iter().copied().collect::<Vec<_>>(), map.eval(&comps, &[j]));
    }
    assert_eq!(relax_constraints(&ActionMap::Zero { rows: 3 }, &comps), DMatrix::zeros(3, 2));
}

#[test]
fn cournot_discrete_coupling_is_zero() {
    let ms = compile(&make_cournot_instance(&CournotParams::default()).unwrap()).unwrap();
    assert!(ms.agents.iter().all(|a| a.hd.iter().all(|&v| v == 0.0)));
}

#[test]
fn compile_matching_pennies() {
    let ms = compile(&matching_pennies()).unwrap();
    assert_eq!((ms.m(), ms.n(), ms.n_theta(), ms.n_rho()), (4, 0, 0, 0));
    let m = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let x = random_profile(&mut rng, &ms);
        let mut f = vec![0.0; 4];
        ms.fd(&x, &mut f).unwrap();
        let f1 = matvec(&m, &x[2..4]);
        let f2: Vec<f64> = matvec(&m.transpose(), &x[0..2]).iter().map(|v| -v).collect();
        assert!(dist_inf(&f[0..2], &f1) <= 1e-15);
        assert!(dist_inf(&f[2..4], &f2) <= 1e-15);
    }
}

#[test]
fn compile_dsm_gradient_matches_finite_differences() {
    let g = make_dsm_instance(&DsmParams::default()).unwrap();
    let ms = compile(&g).unwrap();
    assert!(ms.fd_is_zero());
    let cost = ms.continuous_cost().unwrap().clone();
    let y = ms.y_centers();
    let mut grad = vec![0.0; ms.n()];
    ms.fc(&y, &mut grad).unwrap();
    for i in 0..ms.n_agents() {
        let r = ms.y_range(i);
        let value = |yi: &[f64]| {
            let mut full = y.clone();
            full[r.clone()].copy_from_slice(yi);
            cost.cost(i, &full)
        };
        let gradient = |_: &[f64]| grad[r.clone()].to_vec();
        let err = finite_difference_check(&value, &gradient, &y[r.clone()], 1e-5).unwrap();
        assert!(err <= 1e-6, "agent {i}: {err}");
    }
}

#[test]
fn compile_empty_coupling() {
    let ms = compile(&matching_pennies()).unwrap();
    assert!(ms.rho.is_empty());
    assert!(ms.agents.iter().all(|a| a.hd.nrows() == 0));
}

#[test]
fn dsm_coupling_rows() {
    let g = make_dsm_instance(&DsmParams {
        n_agents: 10,
        horizon: 24,
        devices_per_agent: 1,
        seed: 1,
    })
    .unwrap();
    assert_eq!(g.rho.len(), 48);
}

#[test]
fn dsm_rejects_oversized() {
    let p = DsmParams {
        n_agents: 31,
        ..DsmParams::default()
    };
    assert!(make_dsm_instance(&p).is_err());
    let p = DsmParams {
        horizon: 7,
        ..DsmParams::default()
    };
    assert!(make_dsm_instance(&p).is_err());
}

#[test]
fn cournot_action_counts() {
    assert_eq!(enumerate_binary(3, |a| a.iter().sum::<i64>() <= 1).unwrap().len(), 4);
    // with M = 3 the budget ν̄ ∈ {1, 2, 3} gives 4, 7 or 8 actions
    let mut seen_four = false;
    for seed in 0..10 {
        let g = make_cournot_instance(&CournotParams {
            n_agents: 5,
            n_markets: 3,
            seed,
        })
        .unwrap();
        for a in &g.agents {
            assert!([4, 7, 8].contains(&a.m()));
            seen_four |= a.m() == 4;
        }
    }
    assert!(seen_four);
}

#[test]
fn generators_are_deterministic() {
    let a = compile(&make_dsm_instance(&DsmParams::default()).unwrap()).unwrap();
    let b = compile(&make_dsm_instance(&DsmParams::default()).unwrap()).unwrap();
    assert_eq!(io::game_to_string(&make_dsm_instance(&DsmParams::default()).unwrap()).unwrap(),
        io::game_to_string(&make_dsm_instance(&DsmParams::default()).unwrap()).unwrap());
    assert_eq!(a.rho, b.rho);
    let c1 = make_cournot_instance(&CournotParams::default()).unwrap();
    let c2 = make_cournot_instance(&CournotParams::default()).unwrap();
    assert_eq!(io::game_to_string(&c1).unwrap(), io::game_to_string(&c2).unwrap());
    let f1 = compile(&lift_integer_cost(&make_flow_instance(&FlowParams::default()).unwrap()).unwrap()).unwrap();
    let f2 = compile(&lift_integer_cost(&make_flow_instance(&FlowParams::default()).unwrap()).unwrap()).unwrap();
    assert_eq!(f1.rho, f2.rho);
    for (x, y) in f1.agents.iter().zip(&f2.agents) {
        assert_eq!(x.hd, y.hd);
        assert_eq!(x.gd, y.gd);
    }
    let other = make_cournot_instance(&CournotParams {
        seed: 1,
        ..CournotParams::default()
    })
    .unwrap();
    assert_ne!(io::game_to_string(&c1).unwrap(), io::game_to_string(&other).unwrap());
}

#[test]
fn expectation_identity_monte_carlo() {
    let g = make_dsm_instance(&DsmParams::default()).unwrap();
    let ms = compile(&g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let agent = &g.agents[0];
    let x: Vec<f64> = agent.components.iter().flat_map(|c| random_simplex(&mut rng, c.len())).collect();
    let expected = matvec(&ms.agents[0].gd, &x);
    let dists: Vec<WeightedIndex<f64>> = ms.agents[0]
        .component_ranges()
        .into_iter()
        .map(|r| WeightedIndex::new(&x[r]).unwrap())
        .collect();
    let n = 10_000;
    let rows = expected.len();
    let (mut sum, mut sum_sq) = (vec![0.0; rows], vec![0.0; rows]);
    for _ in 0..n {
        let picks: Vec<usize> = dists.iter().map(|d| d.sample(&mut rng)).collect();
        let v = agent.local_discrete.eval(&agent.components, &picks);
        for r in 0..rows {
            sum[r] += v[r];
            sum_sq[r] += v[r] * v[r];
        }
    }
    for r in 0..rows {
        let mean = sum[r] / n as f64;
        let var = (sum_sq[r] / n as f64 - mean * mean).max(0.0);
        let se = (var / n as f64).sqrt();
        assert!((mean - expected[r]).abs() <= 3.0 * se + 1e-12, "row {r}: {mean} vs {}", expected[r]);
    }
}

/// Dense tensor of a linearly coupled cost, with agent 0 varying slowest.
fn expand_linear(game: &GmiGame, i: usize) -> Vec<f64> {
    let CostSpec::LinearCoupled { pi_bar, blocks } = &game.agents[i].discrete_cost else {
        panic!("not linear")
    };
    let dims: Vec<usize> = game.agents.iter().map(|a| a.m()).collect();
    let a_mats: Vec<DMatrix<f64>> = game.agents.iter().map(|a| action_matrix(&a.components)).collect();
    let total: usize = dims.iter().product();
    let mut out = Vec::with_capacity(total);
    for flat in 0..total {
        let mut idx = vec![0; dims.len()];
        let mut rem = flat;
        for k in (0..dims.len()).rev() {
            idx[k] = rem % dims[k];
            rem /= dims[k];
        }
        let own: Vec<f64> = a_mats[i].column(idx[i]).iter().copied().collect();
        let mut v = pi_bar[idx[i]];
        for (k, b) in blocks.iter().enumerate() {
            if let (Some(b), true) = (b, k != i) {
                let ak: Vec<f64> = a_mats[k].column(idx[k]).iter().copied().collect();
                v += dot(&own, &matvec(b, &ak));
            }
        }
        out.push(v);
    }
    out
}

fn linear_game(seed: u64, skew: bool) -> GmiGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comps = [
        enumerate_binary(2, |_| true).unwrap(),
        enumerate_binary(2, |a| a.iter().sum::<i64>() <= 1).unwrap(),
        enumerate_actions(&[0], &[2], |_| true).unwrap(),
    ];
    let p: Vec<usize> = comps.iter().map(|c| c[0].len()).collect();
    let n = if skew { 2 } else { 3 };
    let mut m_blocks: Vec<Vec<Option<DMatrix<f64>>>> = vec![vec![None; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && (!skew || i < j) {
                m_blocks[i][j] = Some(DMatrix::from_fn(p[i], p[j], |_, _| rng.gen_range(-1.0..1.0)));
            }
        }
    }
    if skew {
        m_blocks[1][0] = Some(-m_blocks[0][1].clone().unwrap().transpose());
    }
    let agents = (0..n)
        .map(|i| {
            let m = comps[i].len();
            AgentSpec::finite(
                comps[i].clone(),
                0,
                CostSpec::LinearCoupled {
                    pi_bar: if skew { vec![0.0; m] } else { (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect() },
                    blocks: m_blocks[i].clone(),
                },
            )
        })
        .collect();
    GmiGame {
        agents,
        rho: vec![],
        continuous_cost: None,
    }
}

#[test]
fn tensor_and_linear_costs_agree() {
    let lin = linear_game(5, false);
    let dims: Vec<usize> = lin.agents.iter().map(|a| a.m()).collect();
    let mut tensor = lin.clone();
    for i in 0..lin.n_agents() {
        tensor.agents[i].discrete_cost = CostSpec::Tensor {
            dims: dims.clone(),
            values: expand_linear(&lin, i),
        };
    }
    let (ml, mt) = (compile(&lin).unwrap(), compile(&tensor).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let x = random_profile(&mut rng, &ml);
        let (mut a, mut b) = (vec![0.0; ml.m()], vec![0.0; ml.m()]);
        ml.fd(&x, &mut a).unwrap();
        mt.fd(&x, &mut b).unwrap();
        assert!(dist_inf(&a, &b) <= 1e-12);
    }
}

#[test]
fn skew_linear_cost_is_monotone() {
    let ms = compile(&linear_game(6, true)).unwrap();
    let oracle = |x: &[f64]| {
        let mut f = vec![0.0; ms.m()];
        ms.fd(x, &mut f).map(|_| f)
    };
    let mut sampler = |rng: &mut ChaCha8Rng| random_profile(rng, &ms);
    let s = monotonicity_sample(&oracle, &mut sampler, 1000, 1).unwrap();
    assert!(s.min_inner >= -1e-10, "{}", s.min_inner);
}

#[test]
fn cournot_fc_strongly_monotone() {
    let p = CournotParams::default();
    let ms = compile(&make_cournot_instance(&p).unwrap()).unwrap();
    let q = &ms.continuous_cost().unwrap().as_quadratic().unwrap().q_matrix;
    let mk = p.n_markets;
    // diagonal entry q_i + 2 d_v minus twice the cross-agent entry d_v
    let sigma = (0..p.n_agents)
        .map(|i| q[(i * mk, i * mk)] - 2.0 * q[(i * mk, ((i + 1) % p.n_agents) * mk)])
        .fold(f64::INFINITY, f64::min);
    assert!(sigma >= 1.0 - 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..500 {
        let y: Vec<f64> = (0..ms.n()).map(|_| rng.gen_range(0.0..1.2)).collect();
        let z: Vec<f64> = (0..ms.n()).map(|_| rng.gen_range(0.0..1.2)).collect();
        let (mut fy, mut fz) = (vec![0.0; ms.n()], vec![0.0; ms.n()]);
        ms.fc(&y, &mut fy).unwrap();
        ms.fc(&z, &mut fz).unwrap();
        let dy: Vec<f64> = y.iter().zip(&z).map(|(a, b)| a - b).collect();
        let df: Vec<f64> = fy.iter().zip(&fz).map(|(a, b)| a - b).collect();
        assert!(dot(&df, &dy) >= sigma * dot(&dy, &dy) - 1e-10);
    }
}

fn single_region_spec(regions: Vec<(f64, f64)>, slopes: Vec<f64>, intercepts: Vec<f64>) -> PwaGameSpec {
    PwaGameSpec {
        agents: vec![PwaAgent {
            regions,
            slopes,
            intercepts,
        }],
        epsilon: PWA_EPSILON,
        continuous_cost: None,
        coupling: vec![ConstraintMap::zero(0, 1)],
        rho: vec![],
    }
}

/// Interval of `z_1` allowed by the rows at a fixed action column and `y`.
fn z_interval(block: &AgentBlock, col: usize, y: f64) -> (f64, f64) {
    let ConstraintMap::Affine { matrix: gc, offset } = &block.gc else { panic!() };
    let SetDescriptor::Box { lower, upper } = &block.y_set else { panic!() };
    let (mut lo, mut hi) = (lower[1], upper[1]);
    for r in 0..gc.nrows() {
        let slack = block.theta[r] - offset[r] - block.gd[(r, col)] - gc[(r, 0)] * y;
        let a = gc[(r, 1)];
        if a > 0.0 {
            hi = hi.min(slack / a);
        } else if a < 0.0 {
            lo = lo.max(slack / a);
        }
    }
    (lo, hi)
}

#[test]
fn pwa_single_region_forces_z() {
    let g = reformulate_pwa(&single_region_spec(vec![(0.0, 2.0)], vec![1.0], vec![0.0])).unwrap();
    let ms = compile(&g).unwrap();
    let block = &ms.agents[0];
    let SetDescriptor::Box { lower, upper } = &block.y_set else { panic!() };
    assert_eq!((lower[1], upper[1]), (0.0, 2.0));
    // action (δ, α, β) = (1, 1, 1)
    let col = g.agents[0].components[0].iter().position(|a| a == &vec![1, 1, 1]).unwrap();
    let (lo, hi) = z_interval(block, col, 1.5);
    assert_abs_diff_eq!(lo, 1.5, epsilon = 1e-12);
    assert_abs_diff_eq!(hi, 1.5, epsilon = 1e-12);
}

#[test]
fn pwa_two_regions_unique_activation() {
    let eps = PWA_EPSILON;
    let g = reformulate_pwa(&single_region_spec(
        vec![(0.0, 1.0), (1.0 + eps, 2.0)],
        vec![0.0, 1.0],
        vec![0.0, 0.0],
    ))
    .unwrap();
    let ms = compile(&g).unwrap();
    let block = &ms.agents[0];
    let actions = &g.agents[0].components[0];
    assert_eq!(actions.len(), 64);
    // enumerate all 2^6 patterns; keep those admitting some z at y = 0.5
    let mut feasible_deltas = Vec::new();
    let ConstraintMap::Affine { matrix: gc, offset } = &block.gc else { panic!() };
    for (col, a) in actions.iter().enumerate() {
        let mut ok = true;
        for r in 0..gc.nrows() {
            let slack = block.theta[r] - offset[r] - block.gd[(r, col)] - gc[(r, 0)] * 0.5;
            if (1..3).all(|k| gc[(r, k)] == 0.0) && slack < -1e-12 {
                ok = false;
            }
        }
        if ok {
            feasible_deltas.push(a[0..2].to_vec());
        }
    }
    assert!(!feasible_deltas.is_empty());
    assert!(feasible_deltas.iter().all(|d| d == &vec![1, 0]));
    let (cost, _) = min_auxiliary_cost(block, 0.5, 1e-12).unwrap();
    assert_abs_diff_eq!(cost, 0.0, epsilon = 1e-12);
}

#[test]
fn pwa_all_ones_rows_feasible() {
    let g = reformulate_pwa(&single_region_spec(vec![(0.0, 2.0)], vec![1.0], vec![0.0])).unwrap();
    let ms = compile(&g).unwrap();
    let block = &ms.agents[0];
    let col = g.agents[0].components[0].iter().position(|a| a == &vec![1, 1, 1]).unwrap();
    // rows 4..7 of the piece: −α + δ ≤ 0, −β + δ ≤ 0, α + β − δ ≤ 1, all tight at ones
    for r in 4..7 {
        assert_abs_diff_eq!(block.gd[(r, col)], block.theta[r], epsilon = 1e-15);
    }
}

#[test]
fn pwa_rejects_overlap_and_holes() {
    let bad = single_region_spec(vec![(0.0, 1.0), (0.5, 2.0)], vec![0.0, 1.0], vec![0.0, 0.0]);
    assert!(reformulate_pwa(&bad).is_err());
    let hole = single_region_spec(vec![(0.0, 1.0), (1.5, 2.0)], vec![0.0, 1.0], vec![0.0, 0.0]);
    assert!(reformulate_pwa(&hole).is_err());
}

#[test]
fn pwa_value_identity() {
    for seed in 0..3 {
        let spec = make_pwa_instance(&PwaParams {
            n_agents: 2,
            max_regions: MAX_REGIONS,
            seed,
        })
        .unwrap();
        let ms = compile(&reformulate_pwa(&spec).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (i, ag) in spec.agents.iter().enumerate() {
            for _ in 0..200 {
                let y = rng.gen_range(ag.lower()..ag.upper());
                let Some(j) = ag.value(y) else { continue };
                let (best, _) = min_auxiliary_cost(&ms.agents[i], y, 1e-9).unwrap();
                assert!((best - j).abs() <= 1e-8, "agent {i}, y = {y}: {best} vs {j}");
            }
        }
    }
}

#[test]
fn lift_flow_rows() {
    let g = make_flow_instance(&FlowParams::default()).unwrap();
    let i = g.agents.iter().position(|a| a.m() == 4).expect("an agent with ā = 3");
    let lifted = lift_integer_cost(&g).unwrap();
    let ms = compile(&lifted).unwrap();
    let a = &ms.agents[i];
    let rows = a.gd.nrows();
    let gd_last: Vec<f64> = a.gd.row(rows - 2).iter().copied().collect();
    let gd_mirror: Vec<f64> = a.gd.row(rows - 1).iter().copied().collect();
    assert_eq!(gd_last, vec![0.0, 1.0, 2.0, 3.0]);
    assert_eq!(gd_mirror, vec![0.0, -1.0, -2.0, -3.0]);
    let ConstraintMap::Affine { matrix, .. } = &a.gc else { panic!() };
    let v = matrix.ncols() - 1;
    assert_eq!(matrix[(rows - 2, v)], -1.0);
    assert_eq!(matrix[(rows - 1, v)], 1.0);
    assert!(lifted.agents.iter().all(|a| matches!(a.discrete_cost, CostSpec::Zero)));
}

#[test]
fn lift_zero_cost_is_noop() {
    let g = make_cournot_instance(&CournotParams::default()).unwrap();
    let lifted = lift_integer_cost(&g).unwrap();
    assert_eq!(io::game_to_string(&g).unwrap(), io::game_to_string(&lifted).unwrap());
}

#[test]
fn lift_rejects_matching_pennies() {
    assert!(matches!(lift_integer_cost(&matching_pennies()), Err(Error::Config(_))));
}

#[test]
fn json_round_trip() {
    for g in [
        matching_pennies(),
        make_dsm_instance(&DsmParams::default()).unwrap(),
        make_cournot_instance(&CournotParams::default()).unwrap(),
    ] {
        let text = io::game_to_string(&g).unwrap();
        let back = io::game_from_str(&text).unwrap();
        assert_eq!(io::game_to_string(&back).unwrap(), text);
        let (a, b) = (compile(&g).unwrap(), compile(&back).unwrap());
        assert_eq!(a.rho, b.rho);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_profile(&mut rng, &a);
        let (mut fa, mut fb) = (vec![0.0; a.m()], vec![0.0; a.m()]);
        a.fd(&x, &mut fa).unwrap();
        b.fd(&x, &mut fb).unwrap();
        assert_eq!(fa, fb);
        let y = a.y_centers();
        let (mut ga, mut gb) = (vec![0.0; a.n()], vec![0.0; a.n()]);
        a.fc(&y, &mut ga).unwrap();
        b.fc(&y, &mut gb).unwrap();
        assert_eq!(ga, gb);
        assert_eq!(a.coupling_load(&x, &y), b.coupling_load(&x, &y));
    }
}

#[test]
fn json_rejects_malformed() {
    assert!(io::game_from_str("{\"agents\": 3}").is_err());
    assert!(io::game_from_str("not json").is_err());
}
