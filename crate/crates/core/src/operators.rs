//! Splitting operators of the three formulations and their Lipschitz and step-size
//! machinery.
//!
//! Stacked layouts:
//! * semi-decentralized: `(x_1..x_N, y_1..y_N, μ_1..μ_N, λ)`
//! * alternative: `((x_1, y_1), …, (x_N, y_N), λ)`, one joint block per agent
//! * distributed: `(x_1..x_N, y_1..y_N, μ_1..μ_N, λ_1..λ_N, ν_1..ν_N)`

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::game::{ConstraintMap, MsGnep};
use crate::linalg::{dist2, gemv_t_acc};
use crate::network::CommGraph;
use crate::regularizers::{Polytope, SetDescriptor};

pub const POWER_ITERS: usize = 500;
pub const POWER_TOL: f64 = 1e-8;
/// Sampled pairs for Lipschitz estimates of nonlinear maps.
pub const LIPSCHITZ_SAMPLES: usize = 10_000;
/// Safety factor applied to sampled Lipschitz ratios.
pub const LIPSCHITZ_SAFETY: f64 = 2.0;
/// Fraction of the step-size bound used by default.
pub const DEFAULT_STEP_FRACTION: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    SemiDecentralized,
    Alternative,
    Distributed,
}

/// Where each agent's blocks live inside the stacked variable.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub variant: Variant,
    pub x: Vec<Range<usize>>,
    pub y: Vec<Range<usize>>,
    /// Empty for the alternative formulation.
    pub mu: Vec<Range<usize>>,
    /// One shared range, or one per agent in the distributed formulation.
    pub lambda: Vec<Range<usize>>,
    /// Distributed formulation only.
    pub nu: Vec<Range<usize>>,
    pub dim: usize,
}

impl Layout {
    pub fn new(ms: &MsGnep, variant: Variant) -> Self {
        let n_ag = ms.n_agents();
        let n_rho = ms.n_rho();
        let mut at = 0;
        let mut take = |len: usize| {
            let r = at..at + len;
            at += len;
            r
        };
        let (mut x, mut y, mut mu, mut lambda, mut nu) = (vec![], vec![], vec![], vec![], vec![]);
        match variant {
            Variant::Alternative => {
                for a in &ms.agents {
                    x.push(take(a.m()));
                    y.push(take(a.n()));
                }
                lambda.push(take(n_rho));
            }
            Variant::SemiDecentralized | Variant::Distributed => {
                for a in &ms.agents {
                    x.push(take(a.m()));
                }
                for a in &ms.agents {
                    y.push(take(a.n()));
                }
                for a in &ms.agents {
                    mu.push(take(a.n_theta()));
                }
                if variant == Variant::SemiDecentralized {
                    lambda.push(take(n_rho));
                } else {
                    for _ in 0..n_ag {
                        lambda.push(take(n_rho));
                    }
                    for _ in 0..n_ag {
                        nu.push(take(n_rho));
                    }
                }
            }
        }
        Self {
            variant,
            x,
            y,
            mu,
            lambda,
            nu,
            dim: at,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.x.len()
    }

    /// Multiplier range agent `i` reads.
    pub fn lambda_of(&self, i: usize) -> Range<usize> {
        if self.variant == Variant::Distributed {
            self.lambda[i].clone()
        } else {
            self.lambda[0].clone()
        }
    }

    pub fn gather_x(&self, w: &[f64]) -> Vec<f64> {
        self.x.iter().flat_map(|r| w[r.clone()].iter().copied()).collect()
    }

    pub fn gather_y(&self, w: &[f64]) -> Vec<f64> {
        self.y.iter().flat_map(|r| w[r.clone()].iter().copied()).collect()
    }

    /// All primal coordinates `(x, y)` in agent-block order.
    pub fn gather_primal(&self, w: &[f64]) -> Vec<f64> {
        let mut v = self.gather_x(w);
        v.extend(self.gather_y(w));
        v
    }

    /// Default starting point: uniform strategies, box-centered `y`, zero multipliers.
    pub fn initial_point(&self, ms: &MsGnep) -> Vec<f64> {
        let mut w = vec![0.0; self.dim];
        for (i, a) in ms.agents.iter().enumerate() {
            w[self.x[i].clone()].copy_from_slice(&a.uniform_strategy());
            w[self.y[i].clone()].copy_from_slice(&a.y_set.center(a.n()));
        }
        w
    }
}

/// `out += sign · Σ_j w_ij (own − v_j)` over neighbors in ascending order.
pub(crate) fn consensus_acc<'a>(
    own: &[f64],
    neighbors: impl Iterator<Item = (f64, &'a [f64])>,
    sign: f64,
    out: &mut [f64],
) {
    for (w, v) in neighbors {
        for ((o, &a), &b) in out.iter_mut().zip(own).zip(v) {
            *o += sign * w * (a - b);
        }
    }
}

/// Primal rows of agent `i`: `f_i + G_iᵀμ_i + H_iᵀλ` and the continuous analogue.
pub(crate) fn agent_primal_rows(
    ms: &MsGnep,
    i: usize,
    fx_i: &[f64],
    fy_i: &[f64],
    y_i: &[f64],
    mu_i: Option<&[f64]>,
    lambda: &[f64],
    out_x: &mut [f64],
    out_y: &mut [f64],
) {
    let a = &ms.agents[i];
    out_x.copy_from_slice(fx_i);
    out_y.copy_from_slice(fy_i);
    if let Some(mu) = mu_i {
        gemv_t_acc(out_x, &a.gd, mu);
        a.gc.jt_acc(y_i, mu, out_y);
    }
    gemv_t_acc(out_x, &a.hd, lambda);
    a.hc.jt_acc(y_i, lambda, out_y);
}

/// `θ_i − G_i^d x_i − g_i^c(y_i)`
pub(crate) fn agent_mu_row(ms: &MsGnep, i: usize, x_i: &[f64], y_i: &[f64], out: &mut [f64]) {
    let a = &ms.agents[i];
    let mut load = vec![0.0; a.n_theta()];
    a.local_load_acc(x_i, y_i, &mut load);
    for ((o, t), l) in out.iter_mut().zip(&a.theta).zip(load) {
        *o = t - l;
    }
}

/// `ρ_share − H_i^d x_i − h_i^c(y_i)`
pub(crate) fn agent_lambda_row(
    ms: &MsGnep,
    i: usize,
    rho_share: &[f64],
    x_i: &[f64],
    y_i: &[f64],
    out: &mut [f64],
) {
    let mut load = vec![0.0; ms.n_rho()];
    ms.agents[i].coupling_load_acc(x_i, y_i, &mut load);
    for ((o, r), l) in out.iter_mut().zip(rho_share).zip(load) {
        *o = r - l;
    }
}

/// `(w_ij, λ_j, ν_j)` as seen by a node.
pub(crate) type NeighborDuals<'a> = (f64, &'a [f64], &'a [f64]);

/// `λ_i`-rows `ρ/N − H_i x_i − h_i(y_i) − Σ_j w_ij(ν_i − ν_j)` and
/// `ν_i`-rows `Σ_j w_ij(λ_i − λ_j)` from each node's neighbor values.
pub(crate) fn distributed_dual_rows(
    ms: &MsGnep,
    layout: &Layout,
    x: &[f64],
    y: &[f64],
    w: &[f64],
    nbrs: &[Vec<NeighborDuals<'_>>],
    out: &mut [f64],
) {
    let n_ag = ms.n_agents() as f64;
    let share: Vec<f64> = ms.rho.iter().map(|r| r / n_ag).collect();
    for i in 0..ms.n_agents() {
        let lr = layout.lambda[i].clone();
        let nr = layout.nu[i].clone();
        agent_lambda_row(ms, i, &share, &x[ms.x_range(i)], &y[ms.y_range(i)], &mut out[lr.clone()]);
        consensus_acc(&w[nr.clone()], nbrs[i].iter().map(|&(wij, _, nu)| (wij, nu)), -1.0, &mut out[lr.clone()]);
        out[nr.clone()].fill(0.0);
        consensus_acc(&w[lr], nbrs[i].iter().map(|&(wij, lam, _)| (wij, lam)), 1.0, &mut out[nr]);
    }
}

/// Per-node rows of the forward operator except the distributed dual rows.
pub(crate) fn primal_rows_into(ms: &MsGnep, layout: &Layout, w: &[f64], x: &[f64], y: &[f64], out: &mut [f64]) -> Result<()> {
    let mut fx = vec![0.0; ms.m()];
    ms.fd(x, &mut fx)?;
    let mut fy = vec![0.0; ms.n()];
    ms.fc(y, &mut fy)?;
    let has_mu = layout.variant != Variant::Alternative;
    for i in 0..ms.n_agents() {
        let (xr, yr) = (ms.x_range(i), ms.y_range(i));
        let lam = &w[layout.lambda_of(i)];
        let mu = has_mu.then(|| &w[layout.mu[i].clone()]);
        let mut ox = vec![0.0; xr.len()];
        let mut oy = vec![0.0; yr.len()];
        agent_primal_rows(ms, i, &fx[xr.clone()], &fy[yr.clone()], &y[yr.clone()], mu, lam, &mut ox, &mut oy);
        out[layout.x[i].clone()].copy_from_slice(&ox);
        out[layout.y[i].clone()].copy_from_slice(&oy);
        if has_mu {
            agent_mu_row(ms, i, &x[xr], &y[yr], &mut out[layout.mu[i].clone()]);
        }
    }
    Ok(())
}

fn forward_into(
    ms: &MsGnep,
    layout: &Layout,
    graph: Option<&CommGraph>,
    w: &[f64],
    out: &mut [f64],
) -> Result<()> {
    check_dim("stacked iterate", layout.dim, w.len())?;
    check_dim("forward output", layout.dim, out.len())?;
    let x = layout.gather_x(w);
    let y = layout.gather_y(w);
    primal_rows_into(ms, layout, w, &x, &y, out)?;
    match layout.variant {
        Variant::SemiDecentralized | Variant::Alternative => {
            let r = layout.lambda[0].clone();
            let load = ms.coupling_load(&x, &y);
            for ((o, rho), l) in out[r].iter_mut().zip(&ms.rho).zip(load) {
                *o = rho - l;
            }
        }
        Variant::Distributed => {
            let g = graph.ok_or_else(|| Error::Config("the distributed operator needs a graph".into()))?;
            let nbrs: Vec<Vec<NeighborDuals<'_>>> = (0..ms.n_agents())
                .map(|i| {
                    g.neighbors(i)
                        .iter()
                        .map(|&(j, wij)| (wij, &w[layout.lambda[j].clone()], &w[layout.nu[j].clone()]))
                        .collect()
                })
                .collect();
            distributed_dual_rows(ms, layout, &x, &y, w, &nbrs, out);
        }
    }
    Ok(())
}

/// `(T₂ + T₃ + T₄)(ω)` on the semi-decentralized layout.
#[allow(non_snake_case)]
pub fn eval_forward_T(ms: &MsGnep, w: &[f64]) -> Result<Vec<f64>> {
    let layout = Layout::new(ms, Variant::SemiDecentralized);
    let mut out = vec![0.0; layout.dim];
    forward_into(ms, &layout, None, w, &mut out)?;
    Ok(out)
}

/// `(S₂ + S₃)(ω')` on the alternative layout.
#[allow(non_snake_case)]
pub fn eval_forward_S(ms: &MsGnep, w: &[f64]) -> Result<Vec<f64>> {
    let layout = Layout::new(ms, Variant::Alternative);
    let mut out = vec![0.0; layout.dim];
    forward_into(ms, &layout, None, w, &mut out)?;
    Ok(out)
}

/// `(T̃₂ + T̃₃ + T̃₄ + T̃₅)(ω̃)` on the distributed layout.
#[allow(non_snake_case)]
pub fn eval_forward_Ttilde(ms: &MsGnep, graph: &CommGraph, w: &[f64]) -> Result<Vec<f64>> {
    check_graph(ms, graph)?;
    let layout = Layout::new(ms, Variant::Distributed);
    let mut out = vec![0.0; layout.dim];
    forward_into(ms, &layout, Some(graph), w, &mut out)?;
    Ok(out)
}

pub(crate) fn check_graph(ms: &MsGnep, graph: &CommGraph) -> Result<()> {
    check_dim("graph nodes", ms.n_agents(), graph.n_nodes())?;
    graph.ensure_connected()?;
    if ms.n_agents() > 1 && (0..ms.n_agents()).any(|i| graph.neighbors(i).is_empty()) {
        return Err(Error::Disconnected);
    }
    Ok(())
}

/// Largest singular value by power iteration on the smaller Gram matrix.
pub fn spectral_norm(m: &DMatrix<f64>, iters: usize, seed: u64) -> Result<f64> {
    if m.is_empty() {
        return Ok(0.0);
    }
    let gram = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    let d = gram.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = nalgebra::DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
    let nv = v.norm();
    if nv == 0.0 {
        return Err(Error::PowerIteration { rayleigh: 0.0 });
    }
    v /= nv;
    let mut rayleigh = 0.0;
    for _ in 0..iters {
        let gv = &gram * &v;
        let r = v.dot(&gv);
        let norm = gv.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        v = gv / norm;
        if (r - rayleigh).abs() <= POWER_TOL * r.abs() {
            return Ok(r.max(0.0).sqrt());
        }
        rayleigh = r;
    }
    Err(Error::PowerIteration { rayleigh })
}

/// [`spectral_norm`] with a dense symmetric eigen-solve when power iteration stalls
/// (clustered top singular values).
pub fn spectral_norm_robust(m: &DMatrix<f64>, seed: u64) -> f64 {
    match spectral_norm(m, POWER_ITERS, seed) {
        Ok(v) => v,
        Err(_) => {
            let gram = if m.nrows() <= m.ncols() {
                m * m.transpose()
            } else {
                m.transpose() * m
            };
            SymmetricEigen::new(gram)
                .eigenvalues
                .iter()
                .fold(0.0f64, |a, &b| a.max(b))
                .sqrt()
        }
    }
}

/// Dense matrix of a linear oracle on ℝ^dim, one probe per column.
pub fn probe_matrix(map: &dyn Fn(&[f64]) -> Vec<f64>, dim: usize) -> DMatrix<f64> {
    let mut e = vec![0.0; dim];
    let mut cols = Vec::with_capacity(dim);
    for j in 0..dim {
        e[j] = 1.0;
        cols.push(map(&e));
        e[j] = 0.0;
    }
    let rows = cols.first().map_or(0, |c| c.len());
    DMatrix::from_fn(rows, dim, |r, c| cols[c][r])
}

/// Operator norm of a linear oracle by power iteration on `MᵀM`.
pub fn estimate_lipschitz(map: &dyn Fn(&[f64]) -> Vec<f64>, dim: usize, iters: usize, seed: u64) -> Result<f64> {
    spectral_norm(&probe_matrix(map, dim), iters, seed)
}

/// `γ_max = σ / (2ℓ)`
pub fn step_size_bound(lipschitz: f64, modulus: f64) -> f64 {
    modulus / (2.0 * lipschitz)
}

/// Pieces of the Lipschitz bound of the forward operator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LipschitzParts {
    /// Pseudogradient `(F^d, F^c)`.
    pub f: f64,
    /// Local-constraint coupling (`T₃`).
    pub t3: f64,
    /// Shared-constraint coupling (`T₄`, `S₃` or `T̃₄`).
    pub t4: f64,
    /// Consensus operator (`T̃₅`).
    pub cns: f64,
}

impl LipschitzParts {
    /// `ℓ_F + ‖[G; H]‖ + ℓ^cns`, with the constraint part bounded by
    /// `√(ℓ_T₃² + ℓ_T₄²)` since both skew blocks act on disjoint dual rows.
    pub fn combined(&self) -> f64 {
        self.f + self.t3.hypot(self.t4) + self.cns
    }
}

fn random_simplex_point(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len).map(|_| -rng.gen_range(f64::EPSILON..1.0f64).ln()).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|a| *a /= s);
    v
}

fn random_strategies(ms: &MsGnep, rng: &mut ChaCha8Rng) -> Vec<f64> {
    ms.agents
        .iter()
        .flat_map(|a| {
            a.component_ranges()
                .into_iter()
                .flat_map(|r| random_simplex_point(rng, r.len()))
                .collect::<Vec<_>>()
        })
        .collect()
}

fn box_hull(set: &SetDescriptor, dim: usize) -> (Vec<f64>, Vec<f64>) {
    match set {
        SetDescriptor::Box { lower, upper } | SetDescriptor::BoxHalfspace { lower, upper, .. } => {
            (lower.clone(), upper.clone())
        }
        SetDescriptor::Product { parts, dims } => {
            let (mut l, mut u) = (vec![], vec![]);
            for (p, &d) in parts.iter().zip(dims) {
                let (a, b) = box_hull(p, d);
                l.extend(a);
                u.extend(b);
            }
            (l, u)
        }
        _ => (vec![-1.0; dim], vec![1.0; dim]),
    }
}

fn random_continuous(ms: &MsGnep, rng: &mut ChaCha8Rng) -> Vec<f64> {
    ms.agents
        .iter()
        .flat_map(|a| {
            let (l, u) = box_hull(&a.y_set, a.n());
            l.iter()
                .zip(&u)
                .map(|(&lo, &hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Largest sampled ratio `‖F(z) − F(z')‖ / ‖z − z'‖` times the safety factor.
fn sampled_ratio(
    samples: usize,
    rng: &mut ChaCha8Rng,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> Vec<f64>,
    eval: impl Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<f64> {
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let (a, b) = (draw(rng), draw(rng));
        let d = dist2(&a, &b);
        if d > 0.0 {
            best = best.max(dist2(&eval(&a)?, &eval(&b)?) / d);
        }
    }
    Ok(best * LIPSCHITZ_SAFETY)
}

fn pseudogradient_lipschitz(ms: &MsGnep, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = ms.m();
    let lf_d = if ms.fd_is_zero() || m == 0 {
        0.0
    } else if ms.fd_is_affine() {
        let mut f0 = vec![0.0; m];
        ms.fd(&vec![0.0; m], &mut f0)?;
        let lin = |z: &[f64]| {
            let mut f = vec![0.0; m];
            ms.fd(z, &mut f).expect("dimension checked");
            f.iter_mut().zip(&f0).for_each(|(a, b)| *a -= b);
            f
        };
        spectral_norm_robust(&probe_matrix(&lin, m), seed)
    } else {
        sampled_ratio(LIPSCHITZ_SAMPLES, &mut rng, |r| random_strategies(ms, r), |x| {
            let mut f = vec![0.0; m];
            ms.fd(x, &mut f)?;
            Ok(f)
        })?
    };
    let n = ms.n();
    let lf_c = match ms.continuous_cost() {
        None => 0.0,
        _ if n == 0 => 0.0,
        Some(c) => {
            if let Some(q) = c.as_quadratic() {
                spectral_norm_robust(&q.q_matrix, seed)
            } else if c.is_affine() {
                let mut f0 = vec![0.0; n];
                c.pseudogradient(&vec![0.0; n], &mut f0);
                let lin = |z: &[f64]| {
                    let mut f = vec![0.0; n];
                    c.pseudogradient(z, &mut f);
                    f.iter_mut().zip(&f0).for_each(|(a, b)| *a -= b);
                    f
                };
                spectral_norm_robust(&probe_matrix(&lin, n), seed)
            } else if let Some(b) = c.lipschitz_bound() {
                b
            } else {
                sampled_ratio(LIPSCHITZ_SAMPLES, &mut rng, |r| random_continuous(ms, r), |y| {
                    let mut f = vec![0.0; n];
                    c.pseudogradient(y, &mut f);
                    Ok(f)
                })?
            }
        }
    };
    // F^d and F^c act on separate coordinates
    Ok(lf_d.max(lf_c))
}

/// `‖[M^d  M^c]‖` for an agent's pair of constraint maps; nonlinear continuous maps
/// use their stated bound or the sampled Jacobian norm times the safety factor.
fn constraint_pair_norm(
    md: &DMatrix<f64>,
    mc: &ConstraintMap,
    y_set: &SetDescriptor,
    seed: u64,
) -> f64 {
    match mc {
        ConstraintMap::Affine { matrix, .. } => {
            let mut both = DMatrix::zeros(md.nrows(), md.ncols() + matrix.ncols());
            both.view_mut((0, 0), (md.nrows(), md.ncols())).copy_from(md);
            both.view_mut((0, md.ncols()), (matrix.nrows(), matrix.ncols()))
                .copy_from(matrix);
            spectral_norm_robust(&both, seed)
        }
        ConstraintMap::Smooth(s) => {
            let jac = s.lipschitz_bound().unwrap_or_else(|| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (l, u) = box_hull(y_set, s.cols());
                let mut best: f64 = 0.0;
                for _ in 0..LIPSCHITZ_SAMPLES / 10 {
                    let y: Vec<f64> = l
                        .iter()
                        .zip(&u)
                        .map(|(&lo, &hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
                        .collect();
                    best = best.max(spectral_norm_robust(&s.jacobian(&y), seed));
                }
                best * LIPSCHITZ_SAFETY
            });
            spectral_norm_robust(md, seed).hypot(jac)
        }
    }
}

fn stacked_coupling_matrix(ms: &MsGnep) -> Option<DMatrix<f64>> {
    let cols: usize = ms.agents.iter().map(|a| a.m() + a.n()).sum();
    let mut out = DMatrix::zeros(ms.n_rho(), cols);
    let mut at = 0;
    for a in &ms.agents {
        let ConstraintMap::Affine { matrix, .. } = &a.hc else {
            return None;
        };
        out.view_mut((0, at), (a.hd.nrows(), a.m())).copy_from(&a.hd);
        at += a.m();
        out.view_mut((0, at), (matrix.nrows(), a.n())).copy_from(matrix);
        at += a.n();
    }
    Some(out)
}

/// Lipschitz pieces of the forward operator of `variant`.
pub fn lipschitz_parts(ms: &MsGnep, variant: Variant, graph: Option<&CommGraph>, seed: u64) -> Result<LipschitzParts> {
    let f = pseudogradient_lipschitz(ms, seed)?;
    let t3 = if variant == Variant::Alternative {
        0.0
    } else {
        ms.agents
            .iter()
            .map(|a| constraint_pair_norm(&a.gd, &a.gc, &a.y_set, seed))
            .fold(0.0, f64::max)
    };
    let per_agent_h = || {
        ms.agents
            .iter()
            .map(|a| constraint_pair_norm(&a.hd, &a.hc, &a.y_set, seed))
            .collect::<Vec<_>>()
    };
    let (t4, cns) = match variant {
        Variant::Distributed => {
            let g = graph.ok_or_else(|| Error::Config("the distributed operator needs a graph".into()))?;
            (per_agent_h().into_iter().fold(0.0, f64::max), g.consensus_lipschitz())
        }
        _ => {
            let t4 = match stacked_coupling_matrix(ms) {
                Some(h) => spectral_norm_robust(&h, seed),
                // ‖[H_1 … H_N]‖² ≤ Σ_i ‖H_i‖²
                None => per_agent_h().iter().map(|v| v * v).sum::<f64>().sqrt(),
            };
            (t4, 0.0)
        }
    };
    Ok(LipschitzParts { f, t3, t4, cns })
}

/// Set realized by the backward step on one block.
#[derive(Clone, Debug)]
pub enum BackwardSet {
    /// A probability simplex (mirror step under the entropy).
    Simplex,
    Set(SetDescriptor),
    /// Joint set of an agent's strategies and continuous variables.
    Polytope(Arc<Polytope>),
    Free,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOwner {
    Agent(usize),
    Coordinator,
}

#[derive(Clone, Debug)]
pub struct BackwardBlock {
    pub range: Range<usize>,
    pub set: BackwardSet,
    pub owner: StepOwner,
}

type ForwardFn = dyn Fn(&[f64], &mut [f64]) -> Result<()> + Send + Sync;

/// `A + B` split into a block-separable backward part and a forward oracle.
#[derive(Clone)]
pub struct SplitProblem {
    pub variant: Variant,
    pub layout: Layout,
    pub blocks: Vec<BackwardBlock>,
    pub lipschitz: f64,
    pub parts: LipschitzParts,
    forward: Arc<ForwardFn>,
}

impl fmt::Debug for SplitProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SplitProblem")
            .field("variant", &self.variant)
            .field("dim", &self.layout.dim)
            .field("blocks", &self.blocks.len())
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl SplitProblem {
    /// Checks that the blocks tile `0..layout.dim` in order and `lipschitz > 0`.
    pub fn new(
        variant: Variant,
        layout: Layout,
        blocks: Vec<BackwardBlock>,
        parts: LipschitzParts,
        lipschitz: f64,
        forward: Arc<ForwardFn>,
    ) -> Result<Self> {
        let mut at = 0;
        for b in &blocks {
            if b.range.start != at || b.range.end < b.range.start {
                return Err(Error::Config(format!(
                    "backward blocks must tile the iterate; block {:?} starts at {at}",
                    b.range
                )));
            }
            at = b.range.end;
        }
        check_dim("backward blocks", layout.dim, at)?;
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(Error::Config(format!("Lipschitz constant {lipschitz} must be positive")));
        }
        Ok(Self {
            variant,
            layout,
            blocks,
            lipschitz,
            parts,
            forward,
        })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn forward(&self, w: &[f64], out: &mut [f64]) -> Result<()> {
        (self.forward)(w, out)
    }

    pub fn eval(&self, w: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.forward(w, &mut out)?;
        Ok(out)
    }

    /// Per-block steps: `gamma[i]` for agent blocks and `zeta` for coordinator blocks.
    pub fn block_steps(&self, gamma: &[f64], zeta: f64) -> Vec<f64> {
        self.blocks
            .iter()
            .map(|b| match b.owner {
                StepOwner::Agent(i) => gamma[i],
                StepOwner::Coordinator => zeta,
            })
            .collect()
    }
}

/// `Ω_i`: the agent's simplices and continuous set cut by its local rows.
pub fn agent_polytope(ms: &MsGnep, i: usize) -> Result<Polytope> {
    let a = &ms.agents[i];
    let (m, n) = (a.m(), a.n());
    let ConstraintMap::Affine { matrix, offset } = &a.gc else {
        return Err(Error::Config(format!(
            "agent {i}: the alternative formulation needs affine local constraints"
        )));
    };
    let mut poly = Polytope::new(m + n);
    for r in a.component_ranges() {
        poly = poly.with_simplex(r)?;
    }
    if n > 0 {
        poly = poly.with_piece(m..m + n, a.y_set.clone())?;
    }
    let rows = a.n_theta();
    let mut rows_a = Vec::with_capacity(rows * (m + n));
    let mut rhs = Vec::with_capacity(rows);
    for r in 0..rows {
        rows_a.extend(a.gd.row(r).iter());
        rows_a.extend(matrix.row(r).iter());
        rhs.push(a.theta[r] - offset[r]);
    }
    poly.with_halfspaces(&rows_a, &rhs)
}

/// Assembles the split problem of one formulation.
pub fn build_problem(ms: &MsGnep, variant: Variant, graph: Option<&CommGraph>, seed: u64) -> Result<SplitProblem> {
    if variant == Variant::Distributed {
        let g = graph.ok_or_else(|| Error::Config("the distributed formulation needs a graph".into()))?;
        check_graph(ms, g)?;
    }
    let layout = Layout::new(ms, variant);
    let mut blocks = Vec::new();
    let mut push = |range: Range<usize>, set: BackwardSet, owner: StepOwner| {
        if !range.is_empty() {
            blocks.push(BackwardBlock { range, set, owner });
        }
    };
    let n_ag = ms.n_agents();
    match variant {
        Variant::Alternative => {
            for i in 0..n_ag {
                let poly = Arc::new(agent_polytope(ms, i)?);
                push(layout.x[i].start..layout.y[i].end, BackwardSet::Polytope(poly), StepOwner::Agent(i));
            }
            push(layout.lambda[0].clone(), BackwardSet::Set(SetDescriptor::NonNegative), StepOwner::Coordinator);
        }
        Variant::SemiDecentralized | Variant::Distributed => {
            for i in 0..n_ag {
                let base = layout.x[i].start;
                for r in ms.agents[i].component_ranges() {
                    push(base + r.start..base + r.end, BackwardSet::Simplex, StepOwner::Agent(i));
                }
            }
            for i in 0..n_ag {
                push(layout.y[i].clone(), BackwardSet::Set(ms.agents[i].y_set.clone()), StepOwner::Agent(i));
            }
            for i in 0..n_ag {
                push(layout.mu[i].clone(), BackwardSet::Set(SetDescriptor::NonNegative), StepOwner::Agent(i));
            }
            if variant == Variant::SemiDecentralized {
                push(layout.lambda[0].clone(), BackwardSet::Set(SetDescriptor::NonNegative), StepOwner::Coordinator);
            } else {
                for i in 0..n_ag {
                    push(layout.lambda[i].clone(), BackwardSet::Set(SetDescriptor::NonNegative), StepOwner::Agent(i));
                }
                for i in 0..n_ag {
                    push(layout.nu[i].clone(), BackwardSet::Free, StepOwner::Agent(i));
                }
            }
        }
    }
    let parts = lipschitz_parts(ms, variant, graph, seed)?;
    let lipschitz = parts.combined().max(f64::MIN_POSITIVE);
    let ms_owned = Arc::new(ms.clone());
    let graph_owned = graph.cloned();
    let lay = layout.clone();
    let forward: Arc<ForwardFn> =
        Arc::new(move |w: &[f64], out: &mut [f64]| forward_into(&ms_owned, &lay, graph_owned.as_ref(), w, out));
    SplitProblem::new(variant, layout, blocks, parts, lipschitz, forward)
}

/// Maximum relative deviation `‖B(ω) − B(ω')‖ / ‖ω − ω'‖` over supplied pairs.
pub fn observed_lipschitz(problem: &SplitProblem, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    let mut best: f64 = 0.0;
    for (a, b) in pairs {
        let d = dist2(a, b);
        if d > 0.0 {
            let fa = problem.eval(a)?;
            let fb = problem.eval(b)?;
            best = best.max(dist2(&fa, &fb) / d);
        }
    }
    Ok(best)
}

/// A random point of the domain of `problem`: interior strategies, continuous
/// variables in the box hull of each set, multipliers in `[0, scale]`, free
/// auxiliaries in `[−scale, scale]`.
pub fn random_domain_point(ms: &MsGnep, layout: &Layout, rng: &mut ChaCha8Rng, scale: f64) -> Vec<f64> {
    let mut w = vec![0.0; layout.dim];
    let x = random_strategies(ms, rng);
    let y = random_continuous(ms, rng);
    for i in 0..ms.n_agents() {
        w[layout.x[i].clone()].copy_from_slice(&x[ms.x_range(i)]);
        w[layout.y[i].clone()].copy_from_slice(&y[ms.y_range(i)]);
    }
    for r in layout.mu.iter().chain(&layout.lambda) {
        for v in &mut w[r.clone()] {
            *v = rng.gen_range(0.0..=scale);
        }
    }
    for r in &layout.nu {
        for v in &mut w[r.clone()] {
            *v = rng.gen_range(-scale..=scale);
        }
    }
    w
}
