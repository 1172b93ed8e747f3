use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::costs::{offsets, tensor_contract, ContinuousCost};
use super::{action_matrix, relax_constraints, ActionSet, ConstraintMap, CostSpec, GmiGame};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{gemv_acc, gemv_t_acc};
use crate::parallel;
use crate::regularizers::SetDescriptor;

/// One agent's data in operator form.
#[derive(Clone, Debug)]
pub struct AgentBlock {
    pub components: Vec<ActionSet>,
    /// `G_i^d` (n_θi × m_i)
    pub gd: DMatrix<f64>,
    pub gc: ConstraintMap,
    pub theta: Vec<f64>,
    /// `H_i^d` (n_ρ × m_i)
    pub hd: DMatrix<f64>,
    pub hc: ConstraintMap,
    pub y_set: SetDescriptor,
}

impl AgentBlock {
    pub fn m(&self) -> usize {
        self.gd.ncols()
    }

    pub fn n(&self) -> usize {
        self.gc.cols()
    }

    pub fn n_theta(&self) -> usize {
        self.theta.len()
    }

    /// Ranges of the component simplices inside `x_i`.
    pub fn component_ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.components
            .iter()
            .map(|c| {
                let r = start..start + c.len();
                start += c.len();
                r
            })
            .collect()
    }

    /// `out += G_i^d x_i + g_i^c(y_i)`
    pub fn local_load_acc(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        gemv_acc(out, &self.gd, x);
        self.gc.eval_acc(y, out);
    }

    /// `out += H_i^d x_i + h_i^c(y_i)`
    pub fn coupling_load_acc(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        gemv_acc(out, &self.hd, x);
        self.hc.eval_acc(y, out);
    }

    /// Uniform strategy on every component.
    pub fn uniform_strategy(&self) -> Vec<f64> {
        self.components
            .iter()
            .flat_map(|c| std::iter::repeat_n(1.0 / c.len() as f64, c.len()))
            .collect()
    }
}

#[derive(Clone, Debug)]
enum CompiledCost {
    Zero,
    Tensor { dims: Vec<usize>, values: Vec<f64> },
    /// `f_i = π̄_i + Σ_j C_ij x_j` with `C_ij = A_iᵀ M_ij A_j`.
    Linear {
        pi_bar: Vec<f64>,
        blocks: Vec<Option<DMatrix<f64>>>,
    },
}

/// The mixed-strategy extension of a game, compiled to the data the splitting
/// operators consume.
#[derive(Clone)]
pub struct MsGnep {
    pub agents: Vec<AgentBlock>,
    pub rho: Vec<f64>,
    costs: Vec<CompiledCost>,
    continuous: Option<Arc<dyn ContinuousCost>>,
    x_off: Vec<usize>,
    y_off: Vec<usize>,
    theta_off: Vec<usize>,
}

impl fmt::Debug for MsGnep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MsGnep")
            .field("n_agents", &self.agents.len())
            .field("m", &self.m())
            .field("n", &self.n())
            .field("n_theta", &self.n_theta())
            .field("n_rho", &self.n_rho())
            .finish()
    }
}

pub fn compile(game: &GmiGame) -> Result<MsGnep> {
    game.validate()?;
    let mut agents = Vec::with_capacity(game.n_agents());
    let mut costs = Vec::with_capacity(game.n_agents());
    let action_mats: Vec<DMatrix<f64>> = game
        .agents
        .iter()
        .map(|a| action_matrix(&a.components))
        .collect();
    for (i, ag) in game.agents.iter().enumerate() {
        let gd = relax_constraints(&ag.local_discrete, &ag.components);
        let hd = relax_constraints(&ag.coupling_discrete, &ag.components);
        agents.push(AgentBlock {
            components: ag.components.clone(),
            gd,
            gc: ag.local_continuous.clone(),
            theta: ag.theta.clone(),
            hd,
            hc: ag.coupling_continuous.clone(),
            y_set: ag.y_set.clone(),
        });
        costs.push(match &ag.discrete_cost {
            CostSpec::Zero => CompiledCost::Zero,
            CostSpec::Tensor { dims, values } => CompiledCost::Tensor {
                dims: dims.clone(),
                values: values.clone(),
            },
            CostSpec::LinearCoupled { pi_bar, blocks } => CompiledCost::Linear {
                pi_bar: pi_bar.clone(),
                blocks: blocks
                    .iter()
                    .enumerate()
                    .map(|(j, b)| {
                        b.as_ref()
                            .map(|mij| action_mats[i].transpose() * mij * &action_mats[j])
                    })
                    .collect(),
            },
            CostSpec::Smooth(_) => {
                return Err(Error::Config(format!(
                    "agent {i} has a differentiable action cost; lift it onto continuous variables first"
                )))
            }
        });
    }
    let x_off = offsets(&agents.iter().map(|a| a.m()).collect::<Vec<_>>());
    let y_off = offsets(&agents.iter().map(|a| a.n()).collect::<Vec<_>>());
    let theta_off = offsets(&agents.iter().map(|a| a.n_theta()).collect::<Vec<_>>());
    Ok(MsGnep {
        agents,
        rho: game.rho.clone(),
        costs,
        continuous: game.continuous_cost.clone(),
        x_off,
        y_off,
        theta_off,
    })
}

impl MsGnep {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn m(&self) -> usize {
        *self.x_off.last().unwrap()
    }

    pub fn n(&self) -> usize {
        *self.y_off.last().unwrap()
    }

    pub fn n_theta(&self) -> usize {
        *self.theta_off.last().unwrap()
    }

    pub fn n_rho(&self) -> usize {
        self.rho.len()
    }

    pub fn x_range(&self, i: usize) -> Range<usize> {
        self.x_off[i]..self.x_off[i + 1]
    }

    pub fn y_range(&self, i: usize) -> Range<usize> {
        self.y_off[i]..self.y_off[i + 1]
    }

    pub fn theta_range(&self, i: usize) -> Range<usize> {
        self.theta_off[i]..self.theta_off[i + 1]
    }

    pub fn continuous_cost(&self) -> Option<&Arc<dyn ContinuousCost>> {
        self.continuous.as_ref()
    }

    /// True when no agent has a discrete cost.
    pub fn fd_is_zero(&self) -> bool {
        self.costs.iter().all(|c| matches!(c, CompiledCost::Zero))
    }

    /// True when `F^d` is linear in the stacked strategy.
    pub fn fd_is_affine(&self) -> bool {
        self.costs.iter().all(|c| match c {
            CompiledCost::Tensor { dims, .. } => dims.len() <= 2,
            _ => true,
        })
    }

    pub fn all_constraints_affine(&self) -> bool {
        self.agents
            .iter()
            .all(|a| a.gc.is_affine() && a.hc.is_affine())
    }

    /// A plain finite game: no continuous variables and no constraints.
    pub fn is_unconstrained_finite(&self) -> bool {
        self.n() == 0 && self.n_theta() == 0 && self.n_rho() == 0
    }

    /// `out = F^d(x)` for the stacked strategy `x`.
    pub fn fd(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim("F^d argument", self.m(), x.len())?;
        check_dim("F^d output", self.m(), out.len())?;
        let tensor_work: usize = self
            .costs
            .iter()
            .map(|c| match c {
                CompiledCost::Tensor { values, dims } => values.len() * dims.len(),
                _ => 0,
            })
            .sum();
        if tensor_work >= parallel::PARALLEL_WORK_THRESHOLD {
            let blocks = parallel::map_indices(self.n_agents(), |i| {
                let mut f = vec![0.0; self.agents[i].m()];
                self.fd_agent(i, x, &mut f);
                f
            });
            for (i, f) in blocks.into_iter().enumerate() {
                out[self.x_range(i)].copy_from_slice(&f);
            }
        } else {
            for i in 0..self.n_agents() {
                let r = self.x_range(i);
                self.fd_agent(i, x, &mut out[r]);
            }
        }
        Ok(())
    }

    /// `out = f_i(x_{−i})`
    pub fn fd_agent(&self, i: usize, x: &[f64], out: &mut [f64]) {
        match &self.costs[i] {
            CompiledCost::Zero => out.fill(0.0),
            CompiledCost::Tensor { dims, values } => {
                let refs: Vec<&[f64]> = (0..self.n_agents()).map(|j| &x[self.x_range(j)]).collect();
                out.copy_from_slice(&tensor_contract(dims, values, i, &refs));
            }
            CompiledCost::Linear { pi_bar, blocks } => {
                out.copy_from_slice(pi_bar);
                for (j, b) in blocks.iter().enumerate() {
                    if let Some(c) = b {
                        gemv_acc(out, c, &x[self.x_range(j)]);
                    }
                }
            }
        }
    }

    /// `out = F^c(y)`; zero when the game has no continuous cost.
    pub fn fc(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim("F^c argument", self.n(), y.len())?;
        check_dim("F^c output", self.n(), out.len())?;
        match &self.continuous {
            Some(c) => c.pseudogradient(y, out),
            None => out.fill(0.0),
        }
        Ok(())
    }

    /// `Σ_i (H_i^d x_i + h_i^c(y_i))` for stacked `x`, `y`.
    pub fn coupling_load(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut load = vec![0.0; self.n_rho()];
        for (i, a) in self.agents.iter().enumerate() {
            a.coupling_load_acc(&x[self.x_range(i)], &y[self.y_range(i)], &mut load);
        }
        load
    }

    /// `max(0, max_r (load − ρ)_r)`
    pub fn coupling_violation(&self, x: &[f64], y: &[f64]) -> f64 {
        self.coupling_load(x, y)
            .iter()
            .zip(&self.rho)
            .fold(0.0, |m, (l, r)| m.max(l - r))
    }

    /// `max(0, max_i max_r (G_i^d x_i + g_i^c(y_i) − θ_i)_r)`
    pub fn local_violation(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.agents.iter().enumerate() {
            let mut load = vec![0.0; a.n_theta()];
            a.local_load_acc(&x[self.x_range(i)], &y[self.y_range(i)], &mut load);
            for (l, t) in load.iter().zip(&a.theta) {
                worst = worst.max(l - t);
            }
        }
        worst
    }

    /// `out += H^{dᵀ} λ` restricted to agent `i`.
    pub fn hd_t_acc(&self, i: usize, lambda: &[f64], out: &mut [f64]) {
        gemv_t_acc(out, &self.agents[i].hd, lambda);
    }

    /// Uniform strategies stacked over agents.
    pub fn uniform_strategies(&self) -> Vec<f64> {
        self.agents.iter().flat_map(|a| a.uniform_strategy()).collect()
    }

    /// A point of each `Y_i`, stacked.
    pub fn y_centers(&self) -> Vec<f64> {
        self.agents
            .iter()
            .flat_map(|a| a.y_set.center(a.n()))
            .collect()
    }
}
