//! Communication graphs for the distributed algorithm and an in-process synchronous
//! message exchange.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Attempts made by [`CommGraph::erdos_renyi`] before giving up on connectivity.
pub const ER_MAX_TRIES: usize = 1000;

/// Undirected weighted graph given by a symmetric, nonnegative, hollow weight matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CommGraph {
    weights: DMatrix<f64>,
    neighbors: Vec<Vec<(usize, f64)>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct GraphFile {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

fn check_weights(w: &DMatrix<f64>) -> Result<()> {
    if w.nrows() != w.ncols() {
        return Err(Error::Dimension {
            context: "weight matrix",
            expected: w.nrows(),
            got: w.ncols(),
        });
    }
    for i in 0..w.nrows() {
        if w[(i, i)] != 0.0 {
            return Err(Error::Config(format!("weight matrix has a nonzero diagonal at {i}")));
        }
        for j in 0..w.ncols() {
            let v = w[(i, j)];
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("weight ({i}, {j}) = {v} is not a nonnegative number")));
            }
            if v != w[(j, i)] {
                return Err(Error::Config(format!("weight matrix is asymmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// `L = diag(W 1) − W`
pub fn laplacian(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_weights(w)?;
    let mut l = -w.clone();
    for i in 0..w.nrows() {
        l[(i, i)] = w.row(i).sum();
    }
    Ok(l)
}

/// `2 max_i Σ_j w_ij`, an upper bound on `‖L‖₂`.
pub fn consensus_lipschitz(w: &DMatrix<f64>) -> f64 {
    (0..w.nrows()).map(|i| w.row(i).sum()).fold(0.0, f64::max) * 2.0
}

impl CommGraph {
    /// Validates the weights; connectivity is not required here.
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        check_weights(&weights)?;
        let n = weights.nrows();
        let neighbors = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| weights[(i, j)] > 0.0)
                    .map(|j| (j, weights[(i, j)]))
                    .collect()
            })
            .collect();
        Ok(Self { weights, neighbors })
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut w = DMatrix::zeros(n, n);
        for &(i, j, v) in edges {
            if i >= n || j >= n {
                return Err(Error::Config(format!("edge ({i}, {j}) outside a {n}-node graph")));
            }
            if i == j {
                return Err(Error::Config(format!("self-loop at node {i}")));
            }
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
        Self::new(w)
    }

    pub fn ring(n: usize) -> Result<Self> {
        let edges: Vec<_> = match n {
            0 | 1 => vec![],
            2 => vec![(0, 1, 1.0)],
            _ => (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect(),
        };
        Self::from_edges(n, &edges)
    }

    /// Node 0 is the center.
    pub fn star(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (0, i, 1.0)).collect();
        Self::from_edges(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j, 1.0)))
            .collect();
        Self::from_edges(n, &edges)
    }

    /// Unit-weight G(n, p), redrawn until connected.
    pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("edge probability {p} outside [0, 1]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..ER_MAX_TRIES {
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.gen_bool(p) {
                        edges.push((i, j, 1.0));
                    }
                }
            }
            let g = Self::from_edges(n, &edges)?;
            if g.is_connected() {
                return Ok(g);
            }
        }
        Err(Error::Disconnected)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: GraphFile = serde_json::from_str(text)?;
        Self::from_edges(f.n, &f.edges)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let n = self.n_nodes();
        let edges = (0..n)
            .flat_map(|i| {
                self.neighbors[i]
                    .iter()
                    .filter(move |&&(j, _)| j > i)
                    .map(move |&(j, w)| (i, j, w))
            })
            .collect();
        serde_json::to_string(&GraphFile { n, edges }).expect("graph serializes")
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Positive-weight neighbors of `i` in ascending index order.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        laplacian(&self.weights).expect("weights validated at construction")
    }

    pub fn consensus_lipschitz(&self) -> f64 {
        consensus_lipschitz(&self.weights)
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n_nodes();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &(j, _) in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn ensure_connected(&self) -> Result<()> {
        if self.is_connected() {
            Ok(())
        } else {
            Err(Error::Disconnected)
        }
    }

    /// Parses `ring`, `star`, `complete`, `er:p=<prob>` or a path to a graph file.
    pub fn from_descriptor(desc: &str, n: usize, seed: u64) -> Result<Self> {
        match desc {
            "ring" => Self::ring(n),
            "star" => Self::star(n),
            "complete" => Self::complete(n),
            _ => {
                if let Some(rest) = desc.strip_prefix("er:") {
                    let p = rest
                        .strip_prefix("p=")
                        .and_then(|v| v.parse::<f64>().ok())
                        .ok_or_else(|| Error::Config(format!("bad graph descriptor {desc:?}")))?;
                    return Self::erdos_renyi(n, p, seed);
                }
                let g = Self::from_path(Path::new(desc))?;
                if g.n_nodes() != n {
                    return Err(Error::Dimension {
                        context: "graph file nodes",
                        expected: n,
                        got: g.n_nodes(),
                    });
                }
                Ok(g)
            }
        }
    }
}

/// One deposit slot per node; a round delivers every node its neighbors' deposits.
#[derive(Clone, Debug)]
pub struct Mailboxes<T> {
    round: u64,
    slots: Vec<Option<T>>,
}

impl<T: Clone> Mailboxes<T> {
    pub fn new(n_nodes: usize) -> Self {
        Self {
            round: 0,
            slots: vec![None; n_nodes],
        }
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    /// Stores node `node`'s message for the current round, replacing an earlier one.
    pub fn deposit(&mut self, node: usize, value: T) -> Result<()> {
        let n = self.slots.len();
        let slot = self.slots.get_mut(node).ok_or(Error::Dimension {
            context: "mailbox node",
            expected: n,
            got: node,
        })?;
        *slot = Some(value);
        Ok(())
    }

    /// Delivers the current round and empties every slot. `out[i]` lists
    /// `(j, value_j)` for the neighbors `j` of `i` in ascending order.
    pub fn synchronous_round(&mut self, graph: &CommGraph) -> Result<Vec<Vec<(usize, T)>>> {
        if graph.n_nodes() != self.slots.len() {
            return Err(Error::Dimension {
                context: "mailboxes vs graph nodes",
                expected: graph.n_nodes(),
                got: self.slots.len(),
            });
        }
        if let Some(missing) = self.slots.iter().position(|s| s.is_none()) {
            return Err(Error::MissingDeposit(missing));
        }
        let values: Vec<T> = self.slots.iter_mut().map(|s| s.take().unwrap()).collect();
        self.round += 1;
        Ok((0..values.len())
            .map(|i| {
                graph
                    .neighbors(i)
                    .iter()
                    .map(|&(j, _)| (j, values[j].clone()))
                    .collect()
            })
            .collect())
    }
}
