use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::costs::QuadraticCost;
use super::{
    enumerate_actions, enumerate_binary, ActionMap, AgentSpec, ConstraintMap, CostSpec, GmiGame,
    SmoothActionCost,
};
use crate::error::{Error, Result};
use crate::regularizers::SetDescriptor;

/// Hours (1-based, hourly resolution) in which household demand peaks.
pub const PEAK_HOURS: [usize; 11] = [7, 8, 9, 13, 14, 15, 18, 19, 20, 21, 22];

/// Two players, two actions each; player 1 pays `M[a1][a2]` and player 2 pays its
/// negation, with `M = [[1, −1], [−1, 1]]`.
pub fn matching_pennies() -> GmiGame {
    let m = [1.0, -1.0, -1.0, 1.0];
    let actions = vec![vec![0], vec![1]];
    let agents = vec![
        AgentSpec::finite(
            actions.clone(),
            0,
            CostSpec::Tensor {
                dims: vec![2, 2],
                values: m.to_vec(),
            },
        ),
        AgentSpec::finite(
            actions,
            0,
            CostSpec::Tensor {
                dims: vec![2, 2],
                values: m.iter().map(|v| -v).collect(),
            },
        ),
    ];
    GmiGame {
        agents,
        rho: vec![],
        continuous_cost: None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DsmParams {
    pub n_agents: usize,
    pub horizon: usize,
    pub devices_per_agent: usize,
    pub seed: u64,
}

impl Default for DsmParams {
    fn default() -> Self {
        Self {
            n_agents: 5,
            horizon: 8,
            devices_per_agent: 1,
            seed: 0,
        }
    }
}

impl DsmParams {
    /// Whether each time slot lies in the household peak window: a slot is a peak
    /// slot when most of its hours are peak hours.
    pub fn peak_slots(&self) -> Vec<bool> {
        let h = 24 / self.horizon;
        (0..self.horizon)
            .map(|s| {
                let peak = (s * h + 1..=(s + 1) * h)
                    .filter(|hr| PEAK_HOURS.contains(hr))
                    .count();
                2 * peak > h
            })
            .collect()
    }
}

pub const DSM_PRICE_SLOPE: f64 = 0.1;
pub const DSM_GRID_UPPER: f64 = 24_000.0;
pub const DSM_GRID_LOWER: f64 = 0.0;

/// Demand-side management with on/off devices.
///
/// Variables are ordered device-major: entry `d·T + t` of `x_i` (one simplex over
/// {off, on}) and of `y_i` refers to device `d` at slot `t`. Coupling rows `0..T`
/// bound total grid load from above, rows `T..2T` from below.
pub fn make_dsm_instance(p: &DsmParams) -> Result<GmiGame> {
    let (n, t_len, d_len) = (p.n_agents, p.horizon, p.devices_per_agent);
    if n == 0 || n > 30 || t_len == 0 || t_len > 24 || 24 % t_len != 0 || d_len == 0 || d_len > 4 {
        return Err(Error::Config(format!(
            "dsm sizes out of range: N={n} (1..=30), T={t_len} (divisor of 24), devices={d_len} (1..=4)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let hours_per_slot = 24 / t_len;
    let nd = t_len * d_len;

    // Synthetic inflexible household load: a flat base plus strong peaks.
    let mut load = vec![vec![0.0; t_len]; n];
    for row in load.iter_mut() {
        let base = rng.gen_range(300.0..500.0);
        let peak = rng.gen_range(1000.0..1500.0);
        for (s, v) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for hr in s * hours_per_slot + 1..=(s + 1) * hours_per_slot {
                acc += base + rng.gen_range(0.0..100.0);
                if PEAK_HOURS.contains(&hr) {
                    acc += peak;
                }
            }
            *v = acc / hours_per_slot as f64;
        }
    }
    let total_load: Vec<f64> = (0..t_len).map(|t| load.iter().map(|r| r[t]).sum()).collect();

    let mut agents = Vec::with_capacity(n);
    for load_i in &load {
        let mut parts = Vec::with_capacity(d_len);
        let mut kd = DMatrix::zeros(2 * nd, nd);
        let mut gc = DMatrix::zeros(2 * nd, nd);
        for d in 0..d_len {
            let energy = rng.gen_range(160.0..1000.0) * t_len as f64 / 24.0;
            let y_lo = rng.gen_range(1.0..18.0);
            let y_hi = rng.gen_range(30.0..180.0);
            let energy = energy.min(0.5 * t_len as f64 * y_hi);
            parts.push(SetDescriptor::box_halfspace_geq(
                vec![0.0; t_len],
                vec![y_hi; t_len],
                vec![1.0; t_len],
                energy,
            ));
            for t in 0..t_len {
                let k = d * t_len + t;
                kd[(2 * k, k)] = y_lo;
                gc[(2 * k, k)] = -1.0;
                kd[(2 * k + 1, k)] = -y_hi;
                gc[(2 * k + 1, k)] = 1.0;
            }
        }
        let mut hc = DMatrix::zeros(2 * t_len, nd);
        let mut offset = vec![0.0; 2 * t_len];
        for t in 0..t_len {
            for d in 0..d_len {
                hc[(t, d * t_len + t)] = 1.0;
                hc[(t_len + t, d * t_len + t)] = -1.0;
            }
            offset[t] = load_i[t];
            offset[t_len + t] = -load_i[t];
        }
        agents.push(AgentSpec {
            components: vec![vec![vec![0], vec![1]]; nd],
            y_set: SetDescriptor::Product {
                parts,
                dims: vec![t_len; d_len],
            },
            local_discrete: ActionMap::Affine {
                matrix: kd,
                offset: vec![0.0; 2 * nd],
            },
            local_continuous: ConstraintMap::linear(gc),
            theta: vec![0.0; 2 * nd],
            coupling_discrete: ActionMap::Zero { rows: 2 * t_len },
            coupling_continuous: ConstraintMap::Affine { matrix: hc, offset },
            discrete_cost: CostSpec::Zero,
        });
    }

    // ∂J_i/∂y_{i,d,t} = r (ΣP_t + Σ_k 1ᵀy_{k,t}) + r 1ᵀy_{i,t}
    let dim = n * nd;
    let r = DSM_PRICE_SLOPE;
    let mut q = DMatrix::zeros(dim, dim);
    let mut lin = vec![0.0; dim];
    for i in 0..n {
        for d in 0..d_len {
            for t in 0..t_len {
                let row = i * nd + d * t_len + t;
                lin[row] = r * total_load[t];
                for k in 0..n {
                    for d2 in 0..d_len {
                        let col = k * nd + d2 * t_len + t;
                        q[(row, col)] = if k == i { 2.0 * r } else { r };
                    }
                }
            }
        }
    }
    let cost = QuadraticCost::new(vec![nd; n], q, lin)?;
    let mut rho = vec![DSM_GRID_UPPER; t_len];
    rho.extend(std::iter::repeat_n(-DSM_GRID_LOWER, t_len));
    Ok(GmiGame {
        agents,
        rho,
        continuous_cost: Some(Arc::new(cost)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CournotParams {
    pub n_agents: usize,
    pub n_markets: usize,
    pub seed: u64,
}

impl Default for CournotParams {
    fn default() -> Self {
        Self {
            n_agents: 5,
            n_markets: 4,
            seed: 0,
        }
    }
}

/// Networked Cournot competition with market-participation decisions.
///
/// Agent `i` pays `½ q_i‖y_i‖² + c_iᵀy_i + y_iᵀD y_i − P̄ᵀy_i + Σ_{j≠i} y_jᵀD y_i`.
pub fn make_cournot_instance(p: &CournotParams) -> Result<GmiGame> {
    let (n, mk) = (p.n_agents, p.n_markets);
    if n == 0 || n > 30 || mk == 0 || mk > 10 {
        return Err(Error::Config(format!(
            "cournot sizes out of range: N={n} (1..=30), M={mk} (1..=10)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let d: Vec<f64> = (0..mk).map(|_| rng.gen_range(0.5..1.0)).collect();
    let p_bar: Vec<f64> = (0..mk).map(|_| rng.gen_range(4.0..6.0)).collect();
    let cap: Vec<f64> = (0..mk).map(|_| rng.gen_range(0.15..0.3) * n as f64).collect();
    let min_bid: Vec<f64> = (0..mk).map(|_| rng.gen_range(0.05..0.1)).collect();

    let dim = n * mk;
    let mut q = DMatrix::zeros(dim, dim);
    let mut lin = vec![0.0; dim];
    let mut agents = Vec::with_capacity(n);
    for i in 0..n {
        let qi = rng.gen_range(1.0..8.0);
        let y_max = rng.gen_range(0.8..1.2);
        let nu_max = rng.gen_range(1..=mk) as i64;
        for v in 0..mk {
            lin[i * mk + v] = rng.gen_range(0.1..0.6) - p_bar[v];
            for j in 0..n {
                q[(i * mk + v, j * mk + v)] = if i == j { qi + 2.0 * d[v] } else { d[v] };
            }
        }
        let actions = enumerate_binary(mk, |a| a.iter().sum::<i64>() <= nu_max)?;
        let mut kd = DMatrix::zeros(2 * mk, mk);
        let mut gc = DMatrix::zeros(2 * mk, mk);
        for v in 0..mk {
            kd[(v, v)] = min_bid[v];
            gc[(v, v)] = -1.0;
            kd[(mk + v, v)] = -y_max;
            gc[(mk + v, v)] = 1.0;
        }
        agents.push(AgentSpec {
            components: vec![actions],
            y_set: SetDescriptor::BoxHalfspace {
                lower: vec![0.0; mk],
                upper: vec![y_max; mk],
                a: vec![1.0; mk],
                b: y_max,
            },
            local_discrete: ActionMap::Affine {
                matrix: kd,
                offset: vec![0.0; 2 * mk],
            },
            local_continuous: ConstraintMap::linear(gc),
            theta: vec![0.0; 2 * mk],
            coupling_discrete: ActionMap::Zero { rows: mk },
            coupling_continuous: ConstraintMap::linear(DMatrix::identity(mk, mk)),
            discrete_cost: CostSpec::Zero,
        });
    }
    let cost = QuadraticCost::new(vec![mk; n], q, lin)?;
    Ok(GmiGame {
        agents,
        rho: cap,
        continuous_cost: Some(Arc::new(cost)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FlowParams {
    pub n_agents: usize,
    pub n_links: usize,
    pub seed: u64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            n_agents: 10,
            n_links: 6,
            seed: 0,
        }
    }
}

/// Congestion cost on shared links plus a concave utility of the own flow:
/// agent `i` pays `Σ_{l∈P_i} q_l / (b_l + ρ_l − S_l) − d_i ln(e_i (1 + v_i))` where
/// `S_l` is the total flow on link `l`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowCost {
    /// `links_of[i]` lists the links agent `i` uses.
    pub links_of: Vec<Vec<usize>>,
    pub q: Vec<f64>,
    pub b: Vec<f64>,
    pub capacity: Vec<f64>,
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    pub a_max: Vec<f64>,
}

impl FlowCost {
    fn link_flows(&self, v: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.q.len()];
        for (i, links) in self.links_of.iter().enumerate() {
            for &l in links {
                s[l] += v[i];
            }
        }
        s
    }
}

impl SmoothActionCost for FlowCost {
    fn n_agents(&self) -> usize {
        self.links_of.len()
    }

    fn value(&self, agent: usize, v: &[f64]) -> f64 {
        let s = self.link_flows(v);
        let congestion: f64 = self.links_of[agent]
            .iter()
            .map(|&l| self.q[l] / (self.b[l] + self.capacity[l] - s[l]))
            .sum();
        congestion - self.d[agent] * (self.e[agent] * (1.0 + v[agent])).ln()
    }

    fn partial(&self, agent: usize, v: &[f64]) -> f64 {
        let s = self.link_flows(v);
        let congestion: f64 = self.links_of[agent]
            .iter()
            .map(|&l| {
                let gap = self.b[l] + self.capacity[l] - s[l];
                self.q[l] / (gap * gap)
            })
            .sum();
        congestion - self.d[agent] / (1.0 + v[agent])
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        // Jacobian = Σ_l c_l 1_{U_l} 1_{U_l}ᵀ + diag(d_i / (1 + v_i)²) on the box, with
        // c_l ≤ 2 q_l / gap_l³. Its largest eigenvalue is below the largest row sum.
        let mut users = vec![0usize; self.q.len()];
        let mut s_max = vec![0.0; self.q.len()];
        for (i, links) in self.links_of.iter().enumerate() {
            for &l in links {
                users[l] += 1;
                s_max[l] += self.a_max[i];
            }
        }
        let c: Vec<f64> = (0..self.q.len())
            .map(|l| {
                let gap = self.b[l] + self.capacity[l] - s_max[l];
                2.0 * self.q[l] / gap.powi(3)
            })
            .collect();
        let bound = self
            .links_of
            .iter()
            .zip(&self.d)
            .map(|(links, d)| d + links.iter().map(|&l| c[l] * users[l] as f64).sum::<f64>())
            .fold(0.0, f64::max);
        Some(bound)
    }
}

/// Discrete-flow control: each agent picks an integer flow `a_i ∈ {0, …, ā_i}`
/// routed over a fixed set of links with capacities `ρ`. The returned game is
/// integer-only, with its differentiable cost still attached to the actions.
pub fn make_flow_instance(p: &FlowParams) -> Result<GmiGame> {
    let (n, l_len) = (p.n_agents, p.n_links);
    if n == 0 || n > 30 || l_len == 0 || l_len > 60 {
        return Err(Error::Config(format!(
            "flow sizes out of range: N={n} (1..=30), L={l_len} (1..=60)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let a_max: Vec<i64> = (0..n).map(|_| rng.gen_range(1..=3)).collect();
    let mut links_of = Vec::with_capacity(n);
    for _ in 0..n {
        let mut links: Vec<usize> = (0..l_len).filter(|_| rng.gen_bool(0.4)).collect();
        if links.is_empty() {
            links.push(rng.gen_range(0..l_len));
        }
        links_of.push(links);
    }
    let mut s_max = vec![0.0; l_len];
    for (i, links) in links_of.iter().enumerate() {
        for &l in links {
            s_max[l] += a_max[i] as f64;
        }
    }
    let mut capacity = vec![0.0; l_len];
    let mut b = vec![0.0; l_len];
    let mut q = vec![0.0; l_len];
    for l in 0..l_len {
        capacity[l] = if s_max[l] > 0.0 {
            rng.gen_range(0.5..0.8) * s_max[l]
        } else {
            1.0
        };
        // keeps b + ρ − S ≥ 1 for every admissible flow
        b[l] = (s_max[l] - capacity[l]).max(0.0) + rng.gen_range(1.0..3.0);
        q[l] = rng.gen_range(1.0..5.0);
    }
    let d: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..5.0)).collect();
    let e: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..2.0)).collect();
    let cost = Arc::new(FlowCost {
        links_of: links_of.clone(),
        q,
        b,
        capacity: capacity.clone(),
        d,
        e,
        a_max: a_max.iter().map(|&a| a as f64).collect(),
    });
    let mut agents = Vec::with_capacity(n);
    for i in 0..n {
        let mut k = DMatrix::zeros(l_len, 1);
        for &l in &links_of[i] {
            k[(l, 0)] = 1.0;
        }
        let mut ag = AgentSpec::finite(
            enumerate_actions(&[0], &[a_max[i]], |_| true)?,
            l_len,
            CostSpec::Smooth(cost.clone()),
        );
        ag.coupling_discrete = ActionMap::Affine {
            matrix: k,
            offset: vec![0.0; l_len],
        };
        agents.push(ag);
    }
    Ok(GmiGame {
        agents,
        rho: capacity,
        continuous_cost: None,
    })
}
