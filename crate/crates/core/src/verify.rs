//! Equilibrium certificates, feasibility audits, monotonicity sampling, brute-force
//! oracles and the pure-strategy rounding heuristic.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::game::MsGnep;
use crate::linalg::{dist_inf, dot, sub};
use crate::operators::{Layout, SplitProblem, Variant};
use crate::regularizers::RegularizerSpec;
use crate::solvers::{block_kinds, bforb_update};

/// Inner products below this count as a certified monotonicity failure.
pub const MONOTONICITY_FAILURE: f64 = -1e-8;

/// Cap on the strategy profiles visited by [`grid_search_equilibrium`].
pub const GRID_SEARCH_CAP: usize = 20_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumCertificate {
    /// `‖ω − ω⁺‖_∞` for one step from a stationary cache.
    pub fixed_point_residual_inf: f64,
    pub coupling_violation_inf: f64,
    pub local_violation_inf: f64,
    /// Only for plain finite games.
    #[serde(default)]
    pub exploitability: Option<f64>,
    /// `max |dual · slack|` over the multiplier rows.
    pub complementarity_gap: f64,
}

/// Certificate of an iterate of `problem` under the given regularizer and steps.
pub fn kkt_residual(
    ms: &MsGnep,
    problem: &SplitProblem,
    spec: &RegularizerSpec,
    steps: &[f64],
    w: &[f64],
) -> Result<EquilibriumCertificate> {
    let kinds = block_kinds(problem, spec)?;
    let b = problem.eval(w)?;
    let mut next = vec![0.0; w.len()];
    bforb_update(problem, &kinds, steps, w, &b, &b, &mut next)?;
    let layout = &problem.layout;
    let x = layout.gather_x(w);
    let y = layout.gather_y(w);
    Ok(EquilibriumCertificate {
        fixed_point_residual_inf: dist_inf(w, &next),
        coupling_violation_inf: ms.coupling_violation(&x, &y),
        local_violation_inf: ms.local_violation(&x, &y),
        exploitability: if ms.is_unconstrained_finite() {
            Some(exploitability(ms, &x)?)
        } else {
            None
        },
        complementarity_gap: complementarity_gap(ms, layout, w),
    })
}

/// `max |μ_i,r (θ_i − G_i^d x_i − g_i^c(y_i))_r|` and the same for every multiplier
/// of the shared rows against `ρ − Σ loads`.
pub fn complementarity_gap(ms: &MsGnep, layout: &Layout, w: &[f64]) -> f64 {
    let x = layout.gather_x(w);
    let y = layout.gather_y(w);
    let mut worst: f64 = 0.0;
    if layout.variant != Variant::Alternative {
        for (i, a) in ms.agents.iter().enumerate() {
            let mut load = vec![0.0; a.n_theta()];
            a.local_load_acc(&x[ms.x_range(i)], &y[ms.y_range(i)], &mut load);
            for ((l, t), m) in load.iter().zip(&a.theta).zip(&w[layout.mu[i].clone()]) {
                worst = worst.max((m * (t - l)).abs());
            }
        }
    }
    let load = ms.coupling_load(&x, &y);
    for r in &layout.lambda {
        for ((l, rho), lam) in load.iter().zip(&ms.rho).zip(&w[r.clone()]) {
            worst = worst.max((lam * (rho - l)).abs());
        }
    }
    worst
}

fn require_unconstrained(ms: &MsGnep) -> Result<()> {
    if !ms.is_unconstrained_finite() {
        return Err(Error::Config(
            "exploitability is only defined here for finite games without constraints or continuous variables"
                .into(),
        ));
    }
    Ok(())
}

/// `Σ_i (⟨f_i(x_{−i}), x_i⟩ − min_j f_i^j(x_{−i}))`, summed per component for agents
/// with several action components.
pub fn exploitability(ms: &MsGnep, x: &[f64]) -> Result<f64> {
    require_unconstrained(ms)?;
    check_dim("strategy profile", ms.m(), x.len())?;
    let mut f = vec![0.0; ms.m()];
    ms.fd(x, &mut f)?;
    let mut total = 0.0;
    for (i, a) in ms.agents.iter().enumerate() {
        let base = ms.x_range(i).start;
        for r in a.component_ranges() {
            let r = base + r.start..base + r.end;
            let fr = &f[r.clone()];
            let best = fr.iter().copied().fold(f64::INFINITY, f64::min);
            total += (dot(fr, &x[r]) - best).max(0.0);
        }
    }
    Ok(total)
}

/// Points of the `m`-simplex whose coordinates are multiples of `1/steps`.
fn simplex_grid(m: usize, steps: usize) -> Vec<Vec<f64>> {
    let h = 1.0 / steps as f64;
    match m {
        1 => vec![vec![1.0]],
        2 => (0..=steps).map(|k| vec![k as f64 * h, (steps - k) as f64 * h]).collect(),
        3 => {
            let mut out = Vec::new();
            for a in 0..=steps {
                for b in 0..=steps - a {
                    out.push(vec![a as f64 * h, b as f64 * h, (steps - a - b) as f64 * h]);
                }
            }
            out
        }
        _ => Vec::new(),
    }
}

/// Brute-force exploitability minimizer of a two-player finite game with at most
/// three actions each, over the grid of spacing `resolution`.
pub fn grid_search_equilibrium(ms: &MsGnep, resolution: f64) -> Result<(Vec<Vec<f64>>, f64)> {
    require_unconstrained(ms)?;
    if ms.n_agents() != 2 || ms.agents.iter().any(|a| a.components.len() != 1 || a.m() > 3) {
        return Err(Error::Config(
            "the grid oracle handles two single-component players with at most three actions".into(),
        ));
    }
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(Error::Config(format!("grid resolution {resolution} outside (0, 1]")));
    }
    let steps = (1.0 / resolution).round() as usize;
    let g0 = simplex_grid(ms.agents[0].m(), steps);
    let g1 = simplex_grid(ms.agents[1].m(), steps);
    if g0.len().saturating_mul(g1.len()) > GRID_SEARCH_CAP {
        return Err(Error::Config(format!(
            "grid of {} profiles exceeds the cap {GRID_SEARCH_CAP}",
            g0.len() * g1.len()
        )));
    }
    let (m0, m1) = (ms.agents[0].m(), ms.agents[1].m());
    // f_1 is linear in x_2 and f_2 in x_1, so each grid point of one player
    // contributes a precomputed cost vector for the other.
    let vertex = |i: usize, j: usize| {
        let mut x = ms.uniform_strategies();
        for (k, v) in x[ms.x_range(i)].iter_mut().enumerate() {
            *v = if k == j { 1.0 } else { 0.0 };
        }
        let mut f = vec![0.0; ms.m()];
        ms.fd(&x, &mut f).map(|_| f)
    };
    let mut f0_cols = Vec::with_capacity(m1);
    for j in 0..m1 {
        f0_cols.push(vertex(1, j)?[ms.x_range(0)].to_vec());
    }
    let mut f1_cols = Vec::with_capacity(m0);
    for j in 0..m0 {
        f1_cols.push(vertex(0, j)?[ms.x_range(1)].to_vec());
    }
    let mix = |cols: &[Vec<f64>], w: &[f64], len: usize| {
        let mut out = vec![0.0; len];
        for (c, &p) in cols.iter().zip(w) {
            for (o, v) in out.iter_mut().zip(c) {
                *o += p * v;
            }
        }
        out
    };
    let f0: Vec<Vec<f64>> = g1.iter().map(|x1| mix(&f0_cols, x1, m0)).collect();
    let f1: Vec<Vec<f64>> = g0.iter().map(|x0| mix(&f1_cols, x0, m1)).collect();
    let gap = |f: &[f64], x: &[f64]| dot(f, x) - f.iter().copied().fold(f64::INFINITY, f64::min);
    let mut best = (f64::INFINITY, 0, 0);
    for (a, x0) in g0.iter().enumerate() {
        for (b, x1) in g1.iter().enumerate() {
            let e = gap(&f0[b], x0).max(0.0) + gap(&f1[a], x1).max(0.0);
            if e < best.0 {
                best = (e, a, b);
            }
        }
    }
    Ok((vec![g0[best.1].clone(), g1[best.2].clone()], best.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonotonicitySample {
    /// `min ⟨F(z) − F(z'), z − z'⟩` over the sampled pairs.
    pub min_inner: f64,
    /// A pair whose inner product falls below [`MONOTONICITY_FAILURE`].
    pub failure: Option<(Vec<f64>, Vec<f64>)>,
}

impl MonotonicitySample {
    pub fn passed(&self, margin: f64) -> bool {
        self.min_inner >= margin
    }
}

pub fn monotonicity_sample(
    oracle: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    sampler: &mut dyn FnMut(&mut ChaCha8Rng) -> Vec<f64>,
    n_pairs: usize,
    seed: u64,
) -> Result<MonotonicitySample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_inner = f64::INFINITY;
    let mut failure = None;
    for _ in 0..n_pairs {
        let z = sampler(&mut rng);
        let zp = sampler(&mut rng);
        check_dim("sampled pair", z.len(), zp.len())?;
        let (f, fp) = (oracle(&z)?, oracle(&zp)?);
        let v = dot(&sub(&f, &fp), &sub(&z, &zp));
        if v < min_inner {
            min_inner = v;
            if v < MONOTONICITY_FAILURE {
                failure = Some((z, zp));
            }
        }
    }
    Ok(MonotonicitySample { min_inner, failure })
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, &p) in v.iter().enumerate() {
        if p > v[best] {
            best = j;
        }
    }
    best
}

/// Most probable action of every component of every agent, as concatenated integer
/// vectors.
pub fn round_to_pure(ms: &MsGnep, x: &[f64]) -> Result<Vec<Vec<i64>>> {
    check_dim("strategy profile", ms.m(), x.len())?;
    Ok(ms
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let xi = &x[ms.x_range(i)];
            a.component_ranges()
                .into_iter()
                .zip(&a.components)
                .flat_map(|(r, comp)| comp[argmax_lowest(&xi[r])].clone())
                .collect()
        })
        .collect())
}

/// Largest `|g_k − (f(p + h e_k) − f(p − h e_k)) / 2h| / max(1, |g_k|)`.
pub fn finite_difference_check(
    value: &dyn Fn(&[f64]) -> f64,
    gradient: &dyn Fn(&[f64]) -> Vec<f64>,
    point: &[f64],
    h: f64,
) -> Result<f64> {
    if !(1e-8..=1e-4).contains(&h) {
        return Err(Error::Config(format!("difference step {h} outside [1e-8, 1e-4]")));
    }
    let g = gradient(point);
    check_dim("gradient", point.len(), g.len())?;
    let mut p = point.to_vec();
    let mut worst: f64 = 0.0;
    for k in 0..point.len() {
        p[k] = point[k] + h;
        let up = value(&p);
        p[k] = point[k] - h;
        let down = value(&p);
        p[k] = point[k];
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((g[k] - fd).abs() / g[k].abs().max(1.0));
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingAudit {
    pub samples: usize,
    /// Empirical mean of the realized shared load per row.
    pub mean: Vec<f64>,
    /// Standard error of each mean.
    pub std_err: Vec<f64>,
    /// `H^d x + h^c(y)`
    pub expected: Vec<f64>,
}

impl CouplingAudit {
    /// Every row satisfies `mean ≤ ρ + k·std_err` (up to `slack`).
    pub fn within_bound(&self, rho: &[f64], k: f64, slack: f64) -> bool {
        self.mean
            .iter()
            .zip(&self.std_err)
            .zip(rho)
            .all(|((m, s), r)| *m <= r + k * s + slack)
    }

    /// Every empirical mean lies within `k` standard errors of its expectation.
    pub fn consistent(&self, k: f64, slack: f64) -> bool {
        self.mean
            .iter()
            .zip(&self.std_err)
            .zip(&self.expected)
            .all(|((m, s), e)| (m - e).abs() <= k * s + slack)
    }
}

/// Draws integer actions from `x` and tabulates the realized shared loads.
pub fn coupling_audit(ms: &MsGnep, x: &[f64], y: &[f64], samples: usize, seed: u64) -> Result<CouplingAudit> {
    check_dim("strategy profile", ms.m(), x.len())?;
    check_dim("continuous profile", ms.n(), y.len())?;
    if samples < 2 {
        return Err(Error::Config("the audit needs at least two samples".into()));
    }
    let n_rho = ms.n_rho();
    let mut deterministic = vec![0.0; n_rho];
    let mut dists = Vec::new();
    for (i, a) in ms.agents.iter().enumerate() {
        a.hc.eval_acc(&y[ms.y_range(i)], &mut deterministic);
        let xi = &x[ms.x_range(i)];
        for r in a.component_ranges() {
            let w: Vec<f64> = xi[r.clone()].iter().map(|p| p.max(0.0)).collect();
            let d = WeightedIndex::new(&w).map_err(|e| Error::Domain(format!("agent {i}: {e}")))?;
            dists.push((i, r.start, d));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = vec![0.0; n_rho];
    let mut sum_sq = vec![0.0; n_rho];
    let mut load = vec![0.0; n_rho];
    for _ in 0..samples {
        load.copy_from_slice(&deterministic);
        for (i, start, d) in &dists {
            let col = start + d.sample(&mut rng);
            let hd = &ms.agents[*i].hd;
            for (r, l) in load.iter_mut().enumerate() {
                *l += hd[(r, col)];
            }
        }
        for r in 0..n_rho {
            sum[r] += load[r];
            sum_sq[r] += load[r] * load[r];
        }
    }
    let n = samples as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std_err = sum_sq
        .iter()
        .zip(&mean)
        .map(|(sq, m)| ((sq / n - m * m).max(0.0) * n / (n - 1.0) / n).sqrt())
        .collect();
    Ok(CouplingAudit {
        samples,
        mean,
        std_err,
        expected: ms.coupling_load(x, y),
    })
}

#[cfg(test)]
mod tests;
