//! Generalized mixed-integer games, their mixed-strategy extension, and the benchmark
//! instance generators.
//!
//! An agent's integer decision is a tuple of independent components, each drawn from
//! its own finite action list. The mixed strategy `x_i` stacks one probability vector
//! per component, so an agent with a single component plays on one simplex.

mod compile;
mod costs;
mod instances;
pub mod io;
mod lift;
mod pwa;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{gemv_acc, gemv_t_acc};
use crate::regularizers::SetDescriptor;

pub use compile::{compile, AgentBlock, MsGnep};
pub use costs::{AugmentedCost, ContinuousCost, QuadraticCost};
pub use instances::{
    make_cournot_instance, make_dsm_instance, make_flow_instance, matching_pennies, CournotParams,
    DsmParams, FlowCost, FlowParams, DSM_GRID_LOWER, DSM_GRID_UPPER, DSM_PRICE_SLOPE, PEAK_HOURS,
};
pub use lift::lift_integer_cost;
pub use pwa::{
    make_pwa_instance, min_auxiliary_cost, reformulate_pwa, PwaAgent, PwaGameSpec, PwaParams,
    MAX_REGIONS, PWA_EPSILON,
};

/// Upper bound on the number of enumerated actions per component.
pub const MAX_ACTIONS: u128 = 1_000_000;

/// Upper bound on the number of stored joint actions of a dense cost tensor.
pub const MAX_TENSOR_ENTRIES: usize = 1_000_000;

pub type ActionSet = Vec<Vec<i64>>;

/// Integer vectors of the box `lower ≤ a ≤ upper` accepted by `member`, in
/// lexicographic order with the first coordinate varying fastest.
pub fn enumerate_actions(
    lower: &[i64],
    upper: &[i64],
    member: impl Fn(&[i64]) -> bool,
) -> Result<ActionSet> {
    check_dim("action box", lower.len(), upper.len())?;
    let mut count: u128 = 1;
    for (l, u) in lower.iter().zip(upper) {
        if u < l {
            return Err(Error::Config(format!("empty integer range [{l}, {u}]")));
        }
        count = count.saturating_mul((u - l + 1) as u128);
    }
    if count > MAX_ACTIONS {
        return Err(Error::Cardinality {
            count,
            cap: MAX_ACTIONS,
        });
    }
    let mut out = Vec::new();
    let mut a = lower.to_vec();
    loop {
        if member(&a) {
            out.push(a.clone());
        }
        let mut k = 0;
        loop {
            if k == a.len() {
                return Ok(out);
            }
            if a[k] < upper[k] {
                a[k] += 1;
                break;
            }
            a[k] = lower[k];
            k += 1;
        }
    }
}

/// `{0,1}^dim` filtered by `member`.
pub fn enumerate_binary(dim: usize, member: impl Fn(&[i64]) -> bool) -> Result<ActionSet> {
    enumerate_actions(&vec![0; dim], &vec![1; dim], member)
}

/// A map from an agent's integer actions to ℝ^rows.
#[derive(Clone, Debug, PartialEq)]
pub enum ActionMap {
    Zero { rows: usize },
    /// `a ↦ K a + offset`, with `K` acting on the concatenation of all components.
    Affine { matrix: DMatrix<f64>, offset: Vec<f64> },
    /// Already relaxed: one column per entry of the stacked mixed strategy.
    Relaxed(DMatrix<f64>),
}

impl ActionMap {
    pub fn rows(&self) -> usize {
        match self {
            ActionMap::Zero { rows } => *rows,
            ActionMap::Affine { matrix, .. } => matrix.nrows(),
            ActionMap::Relaxed(m) => m.nrows(),
        }
    }

    /// Evaluates the map on one integer action (concatenated components).
    pub fn eval(&self, components: &[ActionSet], picks: &[usize]) -> Vec<f64> {
        match self {
            ActionMap::Zero { rows } => vec![0.0; *rows],
            ActionMap::Affine { matrix, offset } => {
                let a: Vec<f64> = components
                    .iter()
                    .zip(picks)
                    .flat_map(|(c, &j)| c[j].iter().map(|&v| v as f64))
                    .collect();
                let mut out = offset.clone();
                gemv_acc(&mut out, matrix, &a);
                out
            }
            ActionMap::Relaxed(m) => {
                let mut out = vec![0.0; m.nrows()];
                let mut start = 0;
                for (c, &j) in components.iter().zip(picks) {
                    for r in 0..m.nrows() {
                        out[r] += m[(r, start + j)];
                    }
                    start += c.len();
                }
                out
            }
        }
    }

    fn check(&self, context: &'static str, rows: usize, action_dim: usize, m: usize) -> Result<()> {
        check_dim(context, rows, self.rows())?;
        match self {
            ActionMap::Zero { .. } => Ok(()),
            ActionMap::Affine { matrix, offset } => {
                check_dim(context, action_dim, matrix.ncols())?;
                check_dim(context, rows, offset.len())
            }
            ActionMap::Relaxed(mat) => check_dim(context, m, mat.ncols()),
        }
    }
}

/// Column `j` of the result is the map evaluated at the `j`-th action, so that the
/// expectation of the map under independent component strategies is `matrix · x_i`.
///
/// For multi-component agents the affine offset is carried by the first component's
/// columns, which is exact because every component's probabilities sum to one.
pub fn relax_constraints(map: &ActionMap, components: &[ActionSet]) -> DMatrix<f64> {
    let m: usize = components.iter().map(|c| c.len()).sum();
    match map {
        ActionMap::Zero { rows } => DMatrix::zeros(*rows, m),
        ActionMap::Relaxed(mat) => mat.clone(),
        ActionMap::Affine { matrix, offset } => {
            let rows = matrix.nrows();
            let mut out = DMatrix::zeros(rows, m);
            let mut col = 0;
            let mut coord = 0;
            for (k, comp) in components.iter().enumerate() {
                let p = comp.first().map_or(0, |a| a.len());
                for a in comp {
                    for r in 0..rows {
                        let mut v = if k == 0 { offset[r] } else { 0.0 };
                        for (c, &ac) in a.iter().enumerate() {
                            v += matrix[(r, coord + c)] * ac as f64;
                        }
                        out[(r, col)] = v;
                    }
                    col += 1;
                }
                coord += p;
            }
            out
        }
    }
}

/// Nonlinear continuous constraint map with its Jacobian.
pub trait SmoothMap: Send + Sync + fmt::Debug {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn value(&self, y: &[f64]) -> Vec<f64>;
    fn jacobian(&self, y: &[f64]) -> DMatrix<f64>;
    /// Bound on the Lipschitz constant over the continuous set, when known.
    fn lipschitz_bound(&self) -> Option<f64> {
        None
    }
}

/// A continuous constraint map `g^c` or `h^c`.
#[derive(Clone, Debug)]
pub enum ConstraintMap {
    /// `y ↦ matrix · y + offset`
    Affine { matrix: DMatrix<f64>, offset: Vec<f64> },
    Smooth(Arc<dyn SmoothMap>),
}

impl ConstraintMap {
    pub fn zero(rows: usize, cols: usize) -> Self {
        ConstraintMap::Affine {
            matrix: DMatrix::zeros(rows, cols),
            offset: vec![0.0; rows],
        }
    }

    pub fn linear(matrix: DMatrix<f64>) -> Self {
        let rows = matrix.nrows();
        ConstraintMap::Affine {
            matrix,
            offset: vec![0.0; rows],
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            ConstraintMap::Affine { matrix, .. } => matrix.nrows(),
            ConstraintMap::Smooth(s) => s.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            ConstraintMap::Affine { matrix, .. } => matrix.ncols(),
            ConstraintMap::Smooth(s) => s.cols(),
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, ConstraintMap::Affine { .. })
    }

    /// `out += map(y)`
    pub fn eval_acc(&self, y: &[f64], out: &mut [f64]) {
        match self {
            ConstraintMap::Affine { matrix, offset } => {
                for (o, b) in out.iter_mut().zip(offset) {
                    *o += b;
                }
                gemv_acc(out, matrix, y);
            }
            ConstraintMap::Smooth(s) => {
                for (o, v) in out.iter_mut().zip(s.value(y)) {
                    *o += v;
                }
            }
        }
    }

    /// `out += ∇map(y)ᵀ dual`
    pub fn jt_acc(&self, y: &[f64], dual: &[f64], out: &mut [f64]) {
        match self {
            ConstraintMap::Affine { matrix, .. } => gemv_t_acc(out, matrix, dual),
            ConstraintMap::Smooth(s) => gemv_t_acc(out, &s.jacobian(y), dual),
        }
    }

    fn with_extra_cols(&self, extra: usize) -> Result<Self> {
        match self {
            ConstraintMap::Affine { matrix, offset } => {
                let mut m = DMatrix::zeros(matrix.nrows(), matrix.ncols() + extra);
                m.view_mut((0, 0), (matrix.nrows(), matrix.ncols())).copy_from(matrix);
                Ok(ConstraintMap::Affine {
                    matrix: m,
                    offset: offset.clone(),
                })
            }
            ConstraintMap::Smooth(_) => Err(Error::Config(
                "cannot extend a nonlinear constraint map with auxiliary variables".into(),
            )),
        }
    }
}

/// Differentiable cost over the (continuously extended) scalar integer actions of
/// all agents, evaluated at the stacked profile `v`.
pub trait SmoothActionCost: Send + Sync + fmt::Debug {
    fn n_agents(&self) -> usize;
    fn value(&self, agent: usize, v: &[f64]) -> f64;
    /// Partial derivative of agent `agent`'s cost with respect to its own action.
    fn partial(&self, agent: usize, v: &[f64]) -> f64;
    fn lipschitz_bound(&self) -> Option<f64> {
        None
    }
}

/// The cost an agent attaches to integer actions.
#[derive(Clone, Debug)]
pub enum CostSpec {
    Zero,
    /// Dense `J_i^d` over joint actions; row-major with agent 0 varying slowest.
    Tensor { dims: Vec<usize>, values: Vec<f64> },
    /// `f_i = π̄_i + A_iᵀ Σ_{j≠i} M_ij A_j x_j`; `blocks[j]` holds `M_ij` (p_i × p_j).
    LinearCoupled {
        pi_bar: Vec<f64>,
        blocks: Vec<Option<DMatrix<f64>>>,
    },
    /// Must be moved onto continuous variables with [`lift_integer_cost`].
    Smooth(Arc<dyn SmoothActionCost>),
}

#[derive(Clone, Debug)]
pub struct AgentSpec {
    pub components: Vec<ActionSet>,
    pub y_set: SetDescriptor,
    pub local_discrete: ActionMap,
    pub local_continuous: ConstraintMap,
    pub theta: Vec<f64>,
    pub coupling_discrete: ActionMap,
    pub coupling_continuous: ConstraintMap,
    pub discrete_cost: CostSpec,
}

impl AgentSpec {
    /// Unconstrained agent with a single action component and no continuous variables.
    pub fn finite(actions: ActionSet, n_rho: usize, cost: CostSpec) -> Self {
        Self {
            components: vec![actions],
            y_set: SetDescriptor::Box {
                lower: vec![],
                upper: vec![],
            },
            local_discrete: ActionMap::Zero { rows: 0 },
            local_continuous: ConstraintMap::zero(0, 0),
            theta: vec![],
            coupling_discrete: ActionMap::Zero { rows: n_rho },
            coupling_continuous: ConstraintMap::zero(n_rho, 0),
            discrete_cost: cost,
        }
    }

    /// Number of pure actions summed over components (`m_i`).
    pub fn m(&self) -> usize {
        self.components.iter().map(|c| c.len()).sum()
    }

    /// Dimension of the concatenated integer action (`p_i`).
    pub fn action_dim(&self) -> usize {
        self.components
            .iter()
            .map(|c| c.first().map_or(0, |a| a.len()))
            .sum()
    }

    /// Dimension of the continuous variable (`n_i`).
    pub fn n(&self) -> usize {
        self.y_set.dim().unwrap_or(0)
    }

    pub fn n_theta(&self) -> usize {
        self.theta.len()
    }
}

#[derive(Clone)]
pub struct GmiGame {
    pub agents: Vec<AgentSpec>,
    pub rho: Vec<f64>,
    pub continuous_cost: Option<Arc<dyn ContinuousCost>>,
}

impl fmt::Debug for GmiGame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GmiGame")
            .field("agents", &self.agents.len())
            .field("rho", &self.rho)
            .field("continuous_cost", &self.continuous_cost)
            .finish()
    }
}

impl GmiGame {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents.is_empty() {
            return Err(Error::Config("a game needs at least one agent".into()));
        }
        let n_rho = self.rho.len();
        for (i, ag) in self.agents.iter().enumerate() {
            if ag.components.is_empty() {
                return Err(Error::Config(format!("agent {i} has no action component")));
            }
            for (k, comp) in ag.components.iter().enumerate() {
                if comp.is_empty() {
                    return Err(Error::Config(format!("agent {i} component {k} has no actions")));
                }
                let p = comp[0].len();
                if comp.iter().any(|a| a.len() != p) {
                    return Err(Error::Config(format!(
                        "agent {i} component {k}: actions of different lengths"
                    )));
                }
                let mut sorted = comp.clone();
                sorted.sort();
                if sorted.windows(2).any(|w| w[0] == w[1]) {
                    return Err(Error::Config(format!(
                        "agent {i} component {k}: duplicate actions"
                    )));
                }
            }
            if !ag.y_set.is_compact() || ag.y_set.dim().is_none() {
                return Err(Error::Config(format!(
                    "agent {i}: continuous set must be a bounded box-type set"
                )));
            }
            ag.y_set.validate()?;
            let (m, p, n, nt) = (ag.m(), ag.action_dim(), ag.n(), ag.n_theta());
            ag.local_discrete.check("local discrete constraint", nt, p, m)?;
            check_dim("local continuous constraint rows", nt, ag.local_continuous.rows())?;
            check_dim("local continuous constraint cols", n, ag.local_continuous.cols())?;
            ag.coupling_discrete.check("coupling discrete map", n_rho, p, m)?;
            check_dim("coupling continuous rows", n_rho, ag.coupling_continuous.rows())?;
            check_dim("coupling continuous cols", n, ag.coupling_continuous.cols())?;
            match &ag.discrete_cost {
                CostSpec::Tensor { dims, values } => {
                    if self.agents.iter().any(|a| a.components.len() != 1) {
                        return Err(Error::Config(
                            "tensor costs need single-component agents".into(),
                        ));
                    }
                    let expect: Vec<usize> = self.agents.iter().map(|a| a.m()).collect();
                    if *dims != expect {
                        return Err(Error::Config(format!(
                            "agent {i}: tensor dims {dims:?} differ from action counts {expect:?}"
                        )));
                    }
                    let total: usize = dims.iter().product();
                    if total > MAX_TENSOR_ENTRIES {
                        return Err(Error::Cardinality {
                            count: total as u128,
                            cap: MAX_TENSOR_ENTRIES as u128,
                        });
                    }
                    check_dim("tensor values", total, values.len())?;
                }
                CostSpec::LinearCoupled { pi_bar, blocks } => {
                    check_dim("linear cost offset", m, pi_bar.len())?;
                    check_dim("linear cost blocks", self.agents.len(), blocks.len())?;
                    for (j, b) in blocks.iter().enumerate() {
                        if let Some(b) = b {
                            if j == i {
                                return Err(Error::Config(format!(
                                    "agent {i}: linear cost has a self-coupling block"
                                )));
                            }
                            check_dim("linear cost block rows", p, b.nrows())?;
                            check_dim("linear cost block cols", self.agents[j].action_dim(), b.ncols())?;
                        }
                    }
                }
                CostSpec::Smooth(s) => {
                    check_dim("smooth action cost agents", self.agents.len(), s.n_agents())?;
                }
                CostSpec::Zero => {}
            }
        }
        if let Some(c) = &self.continuous_cost {
            let dims: Vec<usize> = self.agents.iter().map(|a| a.n()).collect();
            if c.dims() != dims.as_slice() {
                return Err(Error::Config(format!(
                    "continuous cost dims {:?} differ from agents' {:?}",
                    c.dims(),
                    dims
                )));
            }
        }
        Ok(())
    }
}

/// Action matrix `A_i`: column `j` is the expected concatenated action when the
/// stacked strategy is the `j`-th unit vector, block-diagonal over components.
pub fn action_matrix(components: &[ActionSet]) -> DMatrix<f64> {
    let p: usize = components.iter().map(|c| c.first().map_or(0, |a| a.len())).sum();
    let m: usize = components.iter().map(|c| c.len()).sum();
    let mut out = DMatrix::zeros(p, m);
    let (mut row, mut col) = (0, 0);
    for comp in components {
        let pk = comp.first().map_or(0, |a| a.len());
        for a in comp {
            for (r, &v) in a.iter().enumerate() {
                out[(row + r, col)] = v as f64;
            }
            col += 1;
        }
        row += pk;
    }
    out
}

/// Expected cost vector `f_i(x_{−i})` of agent `i`; `x[j]` is agent `j`'s stacked
/// mixed strategy.
pub fn expected_cost_vector(game: &GmiGame, i: usize, x: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_dim("strategy profile", game.n_agents(), x.len())?;
    for (j, (ag, xj)) in game.agents.iter().zip(x).enumerate() {
        if j != i {
            check_dim("opponent strategy", ag.m(), xj.len())?;
        }
    }
    let m = game.agents[i].m();
    match &game.agents[i].discrete_cost {
        CostSpec::Zero => Ok(vec![0.0; m]),
        CostSpec::Tensor { dims, values } => {
            let refs: Vec<&[f64]> = x.iter().map(|v| v.as_slice()).collect();
            Ok(costs::tensor_contract(dims, values, i, &refs))
        }
        CostSpec::LinearCoupled { pi_bar, blocks } => {
            let ai = action_matrix(&game.agents[i].components);
            let mut s = vec![0.0; ai.nrows()];
            for (j, b) in blocks.iter().enumerate() {
                if let Some(b) = b {
                    let aj = action_matrix(&game.agents[j].components);
                    let ajx = crate::linalg::matvec(&aj, &x[j]);
                    gemv_acc(&mut s, b, &ajx);
                }
            }
            let mut f = pi_bar.clone();
            gemv_t_acc(&mut f, &ai, &s);
            Ok(f)
        }
        CostSpec::Smooth(_) => Err(Error::Config(
            "a differentiable action cost has no closed-form expectation; lift it first".into(),
        )),
    }
}

#[cfg(test)]
mod tests;
