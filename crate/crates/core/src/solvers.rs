//! The B-FoRB iteration and the three algorithm drivers.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::game::MsGnep;
use crate::linalg::{dist2, dist_inf, dot, norm_inf};
use crate::network::{CommGraph, Mailboxes};
use crate::operators::{
    build_problem, check_graph, distributed_dual_rows, primal_rows_into, step_size_bound, BackwardBlock,
    BackwardSet, Layout, NeighborDuals, SplitProblem, Variant, DEFAULT_STEP_FRACTION,
};
use crate::parallel;
use crate::regularizers::{
    bregman_distance, mirror_step_simplex_into, project_in_place, project_polytope, DykstraOptions,
    LegendreKind, RegularizerSpec, SetDescriptor,
};

/// Iterates with `‖ω‖_∞` above this are declared divergent.
pub const DIVERGENCE_BOUND: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Per-agent steps `γ_i`; derived from the Lipschitz bound when absent.
    pub gamma: Option<Vec<f64>>,
    /// Coordinator step `ζ`; derived when absent.
    pub zeta: Option<f64>,
    /// Stopping tolerance on `‖ω^{k+1} − ω^k‖_∞`.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Legendre function on strategy blocks (the alternative driver is Euclidean).
    pub regularizer: LegendreKind,
    /// Record every this many iterations (the last one is always recorded).
    pub trace_every: usize,
    /// Reject user steps at or above the bound.
    pub check_steps: bool,
    /// Seed of the sampled Lipschitz estimates.
    pub seed: u64,
    /// Known solution; enables the Lyapunov trace.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<f64>>,
    /// Starting point; defaults to [`Layout::initial_point`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            gamma: None,
            zeta: None,
            epsilon: 1e-5,
            max_iters: 100_000,
            regularizer: LegendreKind::GibbsShannon,
            trace_every: 1,
            check_steps: true,
            seed: 0,
            reference: None,
            initial: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIters,
    Diverged,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub residual_inf: f64,
    pub coupling_violation: f64,
    pub local_violation: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub status: Status,
    pub iterations: usize,
    pub final_iterate: Vec<f64>,
    pub layout: Layout,
    pub trace: Vec<TraceRow>,
    pub gamma: Vec<f64>,
    pub zeta: f64,
    pub lipschitz: f64,
    /// `‖ω^{k} − ω^{k−1}‖_∞` of the last iteration.
    pub last_residual: f64,
}

impl SolveReport {
    pub fn x(&self, i: usize) -> &[f64] {
        &self.final_iterate[self.layout.x[i].clone()]
    }

    pub fn y(&self, i: usize) -> &[f64] {
        &self.final_iterate[self.layout.y[i].clone()]
    }

    pub fn mu(&self, i: usize) -> &[f64] {
        self.layout
            .mu
            .get(i)
            .map_or(&[], |r| &self.final_iterate[r.clone()])
    }

    /// Shared multiplier, or agent `i`'s copy in the distributed formulation.
    pub fn lambda(&self, i: usize) -> &[f64] {
        &self.final_iterate[self.layout.lambda_of(i)]
    }

    pub fn strategies(&self) -> Vec<Vec<f64>> {
        (0..self.layout.n_agents()).map(|i| self.x(i).to_vec()).collect()
    }

    pub fn continuous(&self) -> Vec<Vec<f64>> {
        (0..self.layout.n_agents()).map(|i| self.y(i).to_vec()).collect()
    }

    /// `(x, y)` stacked agent by agent.
    pub fn primal(&self) -> Vec<f64> {
        self.layout.gather_primal(&self.final_iterate)
    }

    pub fn write_trace_csv(&self, out: &mut dyn Write) -> Result<()> {
        write_trace_csv(&self.trace, out)
    }

    pub fn write_trace_path(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_trace_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

/// CSV with header `iter,residual_inf,coupling_violation,local_violation[,lyapunov]`.
pub fn write_trace_csv(trace: &[TraceRow], out: &mut dyn Write) -> Result<()> {
    let lyap = trace.iter().any(|r| r.lyapunov.is_some());
    write!(out, "iter,residual_inf,coupling_violation,local_violation")?;
    if lyap {
        write!(out, ",lyapunov")?;
    }
    writeln!(out)?;
    for r in trace {
        write!(
            out,
            "{},{:.16e},{:.16e},{:.16e}",
            r.iter, r.residual_inf, r.coupling_violation, r.local_violation
        )?;
        if lyap {
            write!(out, ",{:.16e}", r.lyapunov.unwrap_or(f64::NAN))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// `ω_j − γ(2b_j − b'_j)`, the reflected forward point of one block.
#[inline]
fn reflected(w: &[f64], b: &[f64], bp: &[f64], gamma: f64, out: &mut [f64]) {
    for (((o, &wj), &bj), &pj) in out.iter_mut().zip(w).zip(b).zip(bp) {
        *o = wj - gamma * (2.0 * bj - pj);
    }
}

/// Legendre kind of every backward block; entropy is only allowed on simplices.
pub fn block_kinds(problem: &SplitProblem, spec: &RegularizerSpec) -> Result<Vec<LegendreKind>> {
    check_dim("regularizer", problem.dim(), spec.dim())?;
    let mut coord = Vec::with_capacity(spec.dim());
    for &(k, d) in spec.blocks() {
        coord.extend(std::iter::repeat_n(k, d));
    }
    problem
        .blocks
        .iter()
        .map(|b| {
            let k = coord.get(b.range.start).copied().unwrap_or(LegendreKind::Euclidean);
            if coord[b.range.clone()].iter().any(|&c| c != k) {
                return Err(Error::Config(format!(
                    "regularizer changes kind inside the block {:?}",
                    b.range
                )));
            }
            if k == LegendreKind::GibbsShannon && !matches!(b.set, BackwardSet::Simplex) {
                return Err(Error::Config(format!(
                    "the entropy needs a simplex block, got {:?}",
                    b.range
                )));
            }
            Ok(k)
        })
        .collect()
}

/// Regularizer with `kind` on strategy simplices and the squared norm elsewhere.
pub fn regularizer_for(problem: &SplitProblem, kind: LegendreKind) -> Result<RegularizerSpec> {
    RegularizerSpec::new(
        problem
            .blocks
            .iter()
            .map(|b| {
                let k = match b.set {
                    BackwardSet::Simplex => kind,
                    _ => LegendreKind::Euclidean,
                };
                (k, b.range.len())
            })
            .collect(),
    )
}

/// Backward step of one block from the reflected forward direction.
pub(crate) fn backward_block(
    block: &BackwardBlock,
    kind: LegendreKind,
    gamma: f64,
    w: &[f64],
    b: &[f64],
    bp: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let r = block.range.clone();
    let (w, b, bp) = (&w[r.clone()], &b[r.clone()], &bp[r]);
    match (&block.set, kind) {
        (BackwardSet::Simplex, LegendreKind::GibbsShannon) => {
            let d: Vec<f64> = b.iter().zip(bp).map(|(&x, &y)| 2.0 * x - y).collect();
            mirror_step_simplex_into(w, &d, gamma, out)
        }
        (BackwardSet::Simplex, LegendreKind::Euclidean) => {
            reflected(w, b, bp, gamma, out);
            project_in_place(&SetDescriptor::Simplex, out)
        }
        (BackwardSet::Set(s), LegendreKind::Euclidean) => {
            reflected(w, b, bp, gamma, out);
            project_in_place(s, out)
        }
        (BackwardSet::Polytope(p), LegendreKind::Euclidean) => {
            reflected(w, b, bp, gamma, out);
            let v = project_polytope(p, out, DykstraOptions::default())?;
            out.copy_from_slice(&v);
            Ok(())
        }
        (BackwardSet::Free, LegendreKind::Euclidean) => {
            reflected(w, b, bp, gamma, out);
            Ok(())
        }
        (_, LegendreKind::GibbsShannon) => Err(Error::Config("the entropy needs a simplex block".into())),
    }
}

fn parallel_worthwhile(problem: &SplitProblem) -> bool {
    problem.blocks.len() > 1
        && (problem.dim() >= parallel::PARALLEL_WORK_THRESHOLD
            || problem
                .blocks
                .iter()
                .any(|b| matches!(b.set, BackwardSet::Polytope(_))))
}

/// `ω^{k+1}` from `ω^k`, `B(ω^k)` and `B(ω^{k−1})`; `steps` has one entry per block.
pub fn bforb_update(
    problem: &SplitProblem,
    kinds: &[LegendreKind],
    steps: &[f64],
    w: &[f64],
    b: &[f64],
    bp: &[f64],
    out: &mut [f64],
) -> Result<()> {
    check_dim("iterate", problem.dim(), w.len())?;
    check_dim("forward value", problem.dim(), b.len())?;
    check_dim("cached forward value", problem.dim(), bp.len())?;
    check_dim("block steps", problem.blocks.len(), steps.len())?;
    check_dim("block kinds", problem.blocks.len(), kinds.len())?;
    if parallel_worthwhile(problem) {
        let parts = parallel::map_indices(problem.blocks.len(), |k| {
            let blk = &problem.blocks[k];
            let mut o = vec![0.0; blk.range.len()];
            backward_block(blk, kinds[k], steps[k], w, b, bp, &mut o).map(|_| o)
        });
        for (blk, p) in problem.blocks.iter().zip(parts) {
            out[blk.range.clone()].copy_from_slice(&p?);
        }
    } else {
        for (k, blk) in problem.blocks.iter().enumerate() {
            backward_block(blk, kinds[k], steps[k], w, b, bp, &mut out[blk.range.clone()])?;
        }
    }
    Ok(())
}

/// One B-FoRB step: returns `ω^{k+1}` and the fresh `B(ω^k)` for caching.
pub fn bforb_step(
    problem: &SplitProblem,
    spec: &RegularizerSpec,
    steps: &[f64],
    w: &[f64],
    b_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let kinds = block_kinds(problem, spec)?;
    let b = problem.eval(w)?;
    let mut out = vec![0.0; w.len()];
    bforb_update(problem, &kinds, steps, w, &b, b_prev, &mut out)?;
    Ok((out, b))
}

/// `dist_φ̂(ω*, ω^k) + (σ_φ̂/4)‖ω^k − ω^{k−1}‖² + ⟨B(ω^k) − B(ω^{k−1}), ω* − ω^k⟩`
/// with `φ̂ = Σ_b γ_b^{−1} φ_b`, whose modulus is `σ / max_b γ_b`.
#[allow(clippy::too_many_arguments)]
pub fn lyapunov_diagnostic(
    problem: &SplitProblem,
    spec: &RegularizerSpec,
    steps: &[f64],
    w_star: &[f64],
    w: &[f64],
    w_prev: &[f64],
    b: &[f64],
    b_prev: &[f64],
) -> Result<f64> {
    let kinds = block_kinds(problem, spec)?;
    let mut dist = 0.0;
    for ((blk, &k), &g) in problem.blocks.iter().zip(&kinds).zip(steps) {
        let r = blk.range.clone();
        let sub = RegularizerSpec::new(vec![(k, r.len())])?;
        dist += bregman_distance(&sub, &w_star[r.clone()], &w[r])? / g;
    }
    let gmax = steps.iter().copied().fold(0.0, f64::max);
    let sigma = spec.strong_convexity_modulus() / gmax;
    let step = dist2(w, w_prev);
    let db: Vec<f64> = b.iter().zip(b_prev).map(|(a, c)| a - c).collect();
    let dw: Vec<f64> = w_star.iter().zip(w).map(|(a, c)| a - c).collect();
    Ok(dist + 0.25 * sigma * step * step + dot(&db, &dw))
}

/// Resolved `(γ_1..γ_N, ζ)`.
pub fn resolve_steps(problem: &SplitProblem, cfg: &SolveConfig, n_agents: usize) -> Result<(Vec<f64>, f64)> {
    let gmax = step_size_bound(problem.lipschitz, 1.0);
    let default = DEFAULT_STEP_FRACTION * gmax;
    let gamma = match &cfg.gamma {
        None => vec![default; n_agents],
        Some(g) if g.len() == 1 => vec![g[0]; n_agents],
        Some(g) => {
            check_dim("per-agent steps", n_agents, g.len())?;
            g.clone()
        }
    };
    let zeta = cfg.zeta.unwrap_or(default);
    for &s in gamma.iter().chain(std::iter::once(&zeta)) {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Config(format!("step sizes must be positive, got {s}")));
        }
        if cfg.check_steps && s >= gmax {
            return Err(Error::Config(format!(
                "step {s} is not below the bound {gmax} (Lipschitz estimate {})",
                problem.lipschitz
            )));
        }
    }
    Ok((gamma, zeta))
}

fn check_config(cfg: &SolveConfig) -> Result<()> {
    if !(cfg.epsilon > 0.0) {
        return Err(Error::Config(format!("stopping tolerance must be positive, got {}", cfg.epsilon)));
    }
    if cfg.trace_every == 0 {
        return Err(Error::Config("trace_every must be at least 1".into()));
    }
    Ok(())
}

fn is_divergent(w: &[f64], b: &[f64]) -> bool {
    w.iter().chain(b).any(|v| !v.is_finite()) || norm_inf(w) > DIVERGENCE_BOUND
}

/// Per-iteration bookkeeping shared by the drivers.
struct Recorder<'a> {
    ms: &'a MsGnep,
    layout: &'a Layout,
    cfg: &'a SolveConfig,
    trace: Vec<TraceRow>,
}

impl Recorder<'_> {
    fn record(&mut self, iter: usize, residual: f64, w: &[f64], lyapunov: Option<f64>, last: bool) {
        if !(last || iter.is_multiple_of(self.cfg.trace_every)) {
            return;
        }
        let x = self.layout.gather_x(w);
        let y = self.layout.gather_y(w);
        self.trace.push(TraceRow {
            iter,
            residual_inf: residual,
            coupling_violation: self.ms.coupling_violation(&x, &y),
            local_violation: self.ms.local_violation(&x, &y),
            lyapunov,
        });
    }
}

/// Everything a driver needs besides its update rule.
struct Run<'a> {
    problem: &'a SplitProblem,
    spec: RegularizerSpec,
    kinds: Vec<LegendreKind>,
    steps: Vec<f64>,
    gamma: Vec<f64>,
    zeta: f64,
    w0: Vec<f64>,
}

fn prepare<'a>(ms: &MsGnep, problem: &'a SplitProblem, cfg: &SolveConfig, kind: LegendreKind) -> Result<Run<'a>> {
    check_config(cfg)?;
    let (gamma, zeta) = resolve_steps(problem, cfg, ms.n_agents())?;
    let steps = problem.block_steps(&gamma, zeta);
    let spec = regularizer_for(problem, kind)?;
    let kinds = block_kinds(problem, &spec)?;
    let w0 = match &cfg.initial {
        Some(w) => {
            check_dim("initial iterate", problem.dim(), w.len())?;
            w.clone()
        }
        None => problem.layout.initial_point(ms),
    };
    if let Some(r) = &cfg.reference {
        check_dim("reference point", problem.dim(), r.len())?;
    }
    Ok(Run {
        problem,
        spec,
        kinds,
        steps,
        gamma,
        zeta,
        w0,
    })
}

/// Generic loop: `update(ω^k, B(ω^k), B(ω^{k−1}), out)` then one forward evaluation.
fn iterate(
    ms: &MsGnep,
    run: &Run<'_>,
    cfg: &SolveConfig,
    mut forward: impl FnMut(&[f64], &mut [f64]) -> Result<()>,
    mut update: impl FnMut(&[f64], &[f64], &[f64], &mut [f64]) -> Result<()>,
) -> Result<SolveReport> {
    let problem = run.problem;
    let dim = problem.dim();
    let mut rec = Recorder {
        ms,
        layout: &problem.layout,
        cfg,
        trace: Vec::new(),
    };
    let mut w = run.w0.clone();
    let mut b = vec![0.0; dim];
    forward(&w, &mut b)?;
    let mut bp = b.clone();
    let mut next = vec![0.0; dim];
    let mut b_next = vec![0.0; dim];
    let mut status = Status::MaxIters;
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    if is_divergent(&w, &b) {
        status = Status::Diverged;
    } else {
        for k in 1..=cfg.max_iters {
            update(&w, &b, &bp, &mut next)?;
            iterations = k;
            residual = dist_inf(&next, &w);
            if next.iter().any(|v| !v.is_finite()) || norm_inf(&next) > DIVERGENCE_BOUND {
                status = Status::Diverged;
                w.copy_from_slice(&next);
                rec.record(k, residual, &w, None, true);
                break;
            }
            forward(&next, &mut b_next)?;
            if is_divergent(&next, &b_next) {
                status = Status::Diverged;
                w.copy_from_slice(&next);
                rec.record(k, residual, &w, None, true);
                break;
            }
            let lyap = match &cfg.reference {
                Some(star) => Some(lyapunov_diagnostic(
                    problem, &run.spec, &run.steps, star, &next, &w, &b_next, &b,
                )?),
                None => None,
            };
            let done = residual <= cfg.epsilon;
            std::mem::swap(&mut bp, &mut b);
            std::mem::swap(&mut b, &mut b_next);
            std::mem::swap(&mut w, &mut next);
            rec.record(k, residual, &w, lyap, done || k == cfg.max_iters);
            if done {
                status = Status::Converged;
                break;
            }
        }
    }
    Ok(SolveReport {
        status,
        iterations,
        final_iterate: w,
        layout: problem.layout.clone(),
        trace: rec.trace,
        gamma: run.gamma.clone(),
        zeta: run.zeta,
        lipschitz: problem.lipschitz,
        last_residual: residual,
    })
}

/// Runs the generic B-FoRB engine on an assembled problem.
pub fn run_problem(ms: &MsGnep, problem: &SplitProblem, cfg: &SolveConfig, kind: LegendreKind) -> Result<SolveReport> {
    let run = prepare(ms, problem, cfg, kind)?;
    iterate(
        ms,
        &run,
        cfg,
        |w, out| problem.forward(w, out),
        |w, b, bp, out| bforb_update(problem, &run.kinds, &run.steps, w, b, bp, out),
    )
}

/// Semi-decentralized B-FoRB: mirror steps on strategies, projected steps on the
/// continuous variables and local multipliers, and a coordinator update of `λ`.
pub fn run_algorithm1(ms: &MsGnep, cfg: &SolveConfig) -> Result<SolveReport> {
    let problem = build_problem(ms, Variant::SemiDecentralized, None, cfg.seed)?;
    run_problem(ms, &problem, cfg, cfg.regularizer)
}

/// Euclidean FoRB on the alternative formulation: each agent projects its joint
/// `(x_i, y_i)` onto `Ω_i`, the coordinator projects `λ` onto the orthant.
pub fn run_alternative(ms: &MsGnep, cfg: &SolveConfig) -> Result<SolveReport> {
    let problem = build_problem(ms, Variant::Alternative, None, cfg.seed)?;
    run_alternative_problem(ms, &problem, cfg)
}

/// [`run_alternative`] on an already assembled alternative problem.
pub fn run_alternative_problem(ms: &MsGnep, problem: &SplitProblem, cfg: &SolveConfig) -> Result<SolveReport> {
    if problem.variant != Variant::Alternative {
        return Err(Error::Config("the alternative driver needs the alternative formulation".into()));
    }
    let run = prepare(ms, problem, cfg, LegendreKind::Euclidean)?;
    let layout = &problem.layout;
    let n_ag = ms.n_agents();
    let opts = DykstraOptions::default();
    let polys: Vec<_> = problem
        .blocks
        .iter()
        .filter_map(|b| match &b.set {
            BackwardSet::Polytope(p) => Some(p.clone()),
            _ => None,
        })
        .collect();
    let gamma = run.gamma.clone();
    let zeta = run.zeta;
    iterate(
        ms,
        &run,
        cfg,
        |w, out| problem.forward(w, out),
        |w, b, bp, out| {
            let joint = |i: usize| layout.x[i].start..layout.y[i].end;
            let per_agent = |i: usize| -> Result<Vec<f64>> {
                let r = joint(i);
                let mut z = vec![0.0; r.len()];
                reflected(&w[r.clone()], &b[r.clone()], &bp[r], gamma[i], &mut z);
                project_polytope(&polys[i], &z, opts)
            };
            let results = if n_ag > 1 {
                parallel::map_indices(n_ag, per_agent)
            } else {
                (0..n_ag).map(per_agent).collect()
            };
            for (i, v) in results.into_iter().enumerate() {
                out[joint(i)].copy_from_slice(&v?);
            }
            let lr = layout.lambda[0].clone();
            reflected(&w[lr.clone()], &b[lr.clone()], &bp[lr.clone()], zeta, &mut out[lr.clone()]);
            project_in_place(&SetDescriptor::NonNegative, &mut out[lr])
        },
    )
}

/// Fully distributed B-FoRB: every agent keeps a copy `λ_i` of the multipliers
/// and an auxiliary `ν_i`, exchanged with graph neighbors in synchronous rounds.
pub fn run_algorithm2(ms: &MsGnep, graph: &CommGraph, cfg: &SolveConfig) -> Result<SolveReport> {
    check_graph(ms, graph)?;
    let problem = build_problem(ms, Variant::Distributed, Some(graph), cfg.seed)?;
    run_algorithm2_problem(ms, &problem, graph, cfg)
}

/// [`run_algorithm2`] on an already assembled distributed problem over `graph`.
pub fn run_algorithm2_problem(
    ms: &MsGnep,
    problem: &SplitProblem,
    graph: &CommGraph,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    check_graph(ms, graph)?;
    if problem.variant != Variant::Distributed {
        return Err(Error::Config("the distributed driver needs the distributed formulation".into()));
    }
    let run = prepare(ms, problem, cfg, cfg.regularizer)?;
    let layout = &problem.layout;
    let n_ag = ms.n_agents();
    let mut mailboxes: Mailboxes<(Vec<f64>, Vec<f64>)> = Mailboxes::new(n_ag);
    let forward = |w: &[f64], out: &mut [f64]| -> Result<()> {
        for i in 0..n_ag {
            mailboxes.deposit(
                i,
                (w[layout.lambda[i].clone()].to_vec(), w[layout.nu[i].clone()].to_vec()),
            )?;
        }
        let delivered = mailboxes.synchronous_round(graph)?;
        let x = layout.gather_x(w);
        let y = layout.gather_y(w);
        primal_rows_into(ms, layout, w, &x, &y, out)?;
        let nbrs: Vec<Vec<NeighborDuals<'_>>> = delivered
            .iter()
            .enumerate()
            .map(|(i, msgs)| {
                msgs.iter()
                    .zip(graph.neighbors(i))
                    .map(|((_, (lam, nu)), &(_, wij))| (wij, lam.as_slice(), nu.as_slice()))
                    .collect()
            })
            .collect();
        distributed_dual_rows(ms, layout, &x, &y, w, &nbrs, out);
        Ok(())
    };
    iterate(ms, &run, cfg, forward, |w, b, bp, out| {
        bforb_update(problem, &run.kinds, &run.steps, w, b, bp, out)
    })
}

/// `max_{i,j} ‖λ_i − λ_j‖_∞` of a distributed iterate.
pub fn consensus_spread(report: &SolveReport) -> f64 {
    let n = report.layout.lambda.len();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max(dist_inf(report.lambda(i), report.lambda(j)));
        }
    }
    worst
}

#[cfg(test)]
mod tests;
