use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::SmoothActionCost;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, gemv_acc};

/// Pseudogradient oracle of the continuous costs, acting on the stacked `y`.
pub trait ContinuousCost: Send + Sync + fmt::Debug {
    /// Per-agent dimensions `n_i`, in stacking order.
    fn dims(&self) -> &[usize];
    /// `out = col(∇_{y_i} J_i^c(y))`
    fn pseudogradient(&self, y: &[f64], out: &mut [f64]);
    /// `J_i^c(y)`
    fn cost(&self, agent: usize, y: &[f64]) -> f64;
    /// True when the pseudogradient is affine in `y`.
    fn is_affine(&self) -> bool {
        false
    }
    /// Known Lipschitz bound of the pseudogradient over the continuous sets.
    fn lipschitz_bound(&self) -> Option<f64> {
        None
    }
    /// `(Q, q)` when the pseudogradient is `Qy + q` and the cost is stored densely.
    fn as_quadratic(&self) -> Option<&QuadraticCost> {
        None
    }
}

/// Costs whose pseudogradient is `Q y + q`.
///
/// Agent `i` pays `½ y_iᵀ Q_ii y_i + Σ_{j≠i} y_iᵀ Q_ij y_j + q_iᵀ y_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticCost {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    pub q_matrix: DMatrix<f64>,
    pub q_vector: Vec<f64>,
}

impl QuadraticCost {
    pub fn new(dims: Vec<usize>, q_matrix: DMatrix<f64>, q_vector: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().sum();
        check_dim("quadratic cost rows", n, q_matrix.nrows())?;
        check_dim("quadratic cost cols", n, q_matrix.ncols())?;
        check_dim("quadratic cost vector", n, q_vector.len())?;
        let offsets = offsets(&dims);
        Ok(Self {
            dims,
            offsets,
            q_matrix,
            q_vector,
        })
    }
}

pub(crate) fn offsets(dims: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(dims.len() + 1);
    let mut s = 0;
    out.push(0);
    for d in dims {
        s += d;
        out.push(s);
    }
    out
}

impl ContinuousCost for QuadraticCost {
    fn dims(&self) -> &[usize] {
        &self.dims
    }

    fn pseudogradient(&self, y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.q_vector);
        gemv_acc(out, &self.q_matrix, y);
    }

    fn cost(&self, agent: usize, y: &[f64]) -> f64 {
        let r = self.offsets[agent]..self.offsets[agent + 1];
        let mut total = dot(&self.q_vector[r.clone()], &y[r.clone()]);
        for row in r.clone() {
            for (col, &yc) in y.iter().enumerate() {
                let w = if r.contains(&col) { 0.5 } else { 1.0 };
                total += w * y[row] * self.q_matrix[(row, col)] * yc;
            }
        }
        total
    }

    fn is_affine(&self) -> bool {
        true
    }

    fn as_quadratic(&self) -> Option<&QuadraticCost> {
        Some(self)
    }
}

/// An inner cost over the original continuous variables, extended by per-agent
/// auxiliary variables appended after each agent's original block.
///
/// Auxiliary variables carry a linear cost (`linear[i]`) and optionally a smooth
/// cost coupled across agents whose stacked argument holds one auxiliary scalar per
/// agent.
#[derive(Clone, Debug)]
pub struct AugmentedCost {
    inner: Option<Arc<dyn ContinuousCost>>,
    inner_dims: Vec<usize>,
    extra_dims: Vec<usize>,
    dims: Vec<usize>,
    linear: Vec<Vec<f64>>,
    smooth: Option<Arc<dyn SmoothActionCost>>,
}

impl AugmentedCost {
    pub fn new(
        inner: Option<Arc<dyn ContinuousCost>>,
        inner_dims: Vec<usize>,
        extra_dims: Vec<usize>,
        linear: Vec<Vec<f64>>,
        smooth: Option<Arc<dyn SmoothActionCost>>,
    ) -> Result<Self> {
        check_dim("augmented cost agents", inner_dims.len(), extra_dims.len())?;
        check_dim("augmented cost linear terms", inner_dims.len(), linear.len())?;
        if let Some(c) = &inner {
            if c.dims() != inner_dims.as_slice() {
                return Err(Error::Config("inner cost dimensions disagree".into()));
            }
        }
        for (l, &e) in linear.iter().zip(&extra_dims) {
            check_dim("augmented linear term", e, l.len())?;
        }
        if let Some(s) = &smooth {
            check_dim("smooth auxiliary cost agents", inner_dims.len(), s.n_agents())?;
            if extra_dims.iter().any(|&e| e != 1) {
                return Err(Error::Config(
                    "a smooth auxiliary cost needs exactly one auxiliary scalar per agent".into(),
                ));
            }
        }
        let dims = inner_dims.iter().zip(&extra_dims).map(|(a, b)| a + b).collect();
        Ok(Self {
            inner,
            inner_dims,
            extra_dims,
            dims,
            linear,
            smooth,
        })
    }

    fn split(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut inner = Vec::new();
        let mut extra = Vec::new();
        let mut at = 0;
        for (&a, &b) in self.inner_dims.iter().zip(&self.extra_dims) {
            inner.extend_from_slice(&y[at..at + a]);
            extra.extend_from_slice(&y[at + a..at + a + b]);
            at += a + b;
        }
        (inner, extra)
    }
}

impl ContinuousCost for AugmentedCost {
    fn dims(&self) -> &[usize] {
        &self.dims
    }

    fn pseudogradient(&self, y: &[f64], out: &mut [f64]) {
        let (inner_y, extra) = self.split(y);
        let mut g_inner = vec![0.0; inner_y.len()];
        if let Some(c) = &self.inner {
            c.pseudogradient(&inner_y, &mut g_inner);
        }
        let (mut at, mut ai) = (0, 0);
        for (i, (&a, &b)) in self.inner_dims.iter().zip(&self.extra_dims).enumerate() {
            out[at..at + a].copy_from_slice(&g_inner[ai..ai + a]);
            for k in 0..b {
                let mut g = self.linear[i][k];
                if let Some(s) = &self.smooth {
                    g += s.partial(i, &extra);
                }
                out[at + a + k] = g;
            }
            at += a + b;
            ai += a;
        }
    }

    fn cost(&self, agent: usize, y: &[f64]) -> f64 {
        let (inner_y, extra) = self.split(y);
        let mut total = self.inner.as_ref().map_or(0.0, |c| c.cost(agent, &inner_y));
        let start: usize = self.extra_dims[..agent].iter().sum();
        total += dot(&self.linear[agent], &extra[start..start + self.extra_dims[agent]]);
        if let Some(s) = &self.smooth {
            total += s.value(agent, &extra);
        }
        total
    }

    fn is_affine(&self) -> bool {
        self.smooth.is_none() && self.inner.as_ref().is_none_or(|c| c.is_affine())
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        // The two parts act on disjoint coordinates.
        let a = match &self.inner {
            None => Some(0.0),
            Some(c) => c.lipschitz_bound(),
        }?;
        let b = match &self.smooth {
            None => 0.0,
            Some(s) => s.lipschitz_bound()?,
        };
        Some(a.max(b))
    }
}

/// Contracts agent `i`'s cost tensor against all opponents' strategies.
pub(crate) fn tensor_contract(dims: &[usize], values: &[f64], i: usize, x: &[&[f64]]) -> Vec<f64> {
    let n = dims.len();
    let mut f = vec![0.0; dims[i]];
    let mut digits = vec![0usize; n];
    for &v in values {
        let mut w = 1.0;
        for (k, &d) in digits.iter().enumerate() {
            if k != i {
                w *= x[k][d];
            }
        }
        f[digits[i]] += v * w;
        // row-major odometer, last agent fastest
        for k in (0..n).rev() {
            digits[k] += 1;
            if digits[k] < dims[k] {
                break;
            }
            digits[k] = 0;
        }
    }
    f
}
