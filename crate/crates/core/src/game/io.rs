//! JSON interchange for games.
//!
//! ```json
//! {
//!   "agents": [
//!     {"actions": [[0], [1]], "y_box": {"lower": [], "upper": []},
//!      "Gd": [], "Gc": [], "theta": [],
//!      "cost": {"kind": "tensor", "data": {"dims": [2, 2], "values": [1, -1, -1, 1]}}}
//!   ],
//!   "rho": [],
//!   "coupling": {"hd": [[]], "hc": [[]]}
//! }
//! ```
//!
//! Matrices are arrays of rows. `Gd` and `hd` act on the stacked mixed strategy (one
//! column per action). Multi-component agents use `action_components` instead of
//! `actions`. `y_set` may replace `y_box` / `y_halfspace` for product sets. `cost` is
//! one object or an array of them; `quadratic_continuous` carries agent `i`'s rows
//! `(Q_i·, q_i)` of the stacked pseudogradient `Qy + q`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::costs::QuadraticCost;
use super::{relax_constraints, ActionMap, ActionSet, AgentSpec, ConstraintMap, CostSpec, GmiGame};
use crate::error::{check_dim, Error, Result};
use crate::linalg::from_rows;
use crate::regularizers::SetDescriptor;

type Rows = Vec<Vec<f64>>;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct BoxFile {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct HalfspaceFile {
    a: Vec<f64>,
    b: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
enum CostFile {
    Zero,
    Tensor {
        dims: Vec<usize>,
        values: Vec<f64>,
    },
    LinearCoupled {
        pi_bar: Vec<f64>,
        blocks: Vec<Option<Rows>>,
    },
    QuadraticContinuous {
        q_rows: Rows,
        q_vector: Vec<f64>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum CostEntry {
    One(CostFile),
    Many(Vec<CostFile>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct AgentFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    actions: Option<ActionSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    action_components: Option<Vec<ActionSet>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y_box: Option<BoxFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y_halfspace: Option<HalfspaceFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y_set: Option<SetDescriptor>,
    #[serde(rename = "Gd", default)]
    gd: Rows,
    #[serde(rename = "Gc", default)]
    gc: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gc_offset: Option<Vec<f64>>,
    #[serde(default)]
    theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cost: Option<CostEntry>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct CouplingFile {
    #[serde(default)]
    hd: Vec<Rows>,
    #[serde(default)]
    hc: Vec<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    offset: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct GameFile {
    agents: Vec<AgentFile>,
    #[serde(default)]
    rho: Vec<f64>,
    #[serde(default)]
    coupling: CouplingFile,
}

fn matrix(rows: &Rows, n_rows: usize, n_cols: usize, context: &'static str) -> Result<DMatrix<f64>> {
    check_dim(context, n_rows, rows.len())?;
    let mut flat = Vec::with_capacity(n_rows * n_cols);
    for r in rows {
        check_dim(context, n_cols, r.len())?;
        flat.extend_from_slice(r);
    }
    Ok(from_rows(n_rows, n_cols, &flat))
}

fn rows_of(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows())
        .map(|r| m.row(r).iter().copied().collect())
        .collect()
}

pub fn game_from_str(text: &str) -> Result<GmiGame> {
    let file: GameFile = serde_json::from_str(text)?;
    game_from_file(file)
}

pub fn game_from_path(path: &std::path::Path) -> Result<GmiGame> {
    game_from_str(&std::fs::read_to_string(path)?)
}

fn game_from_file(file: GameFile) -> Result<GmiGame> {
    let n = file.agents.len();
    let n_rho = file.rho.len();
    let mut agents = Vec::with_capacity(n);
    let mut quad: Vec<Option<(Rows, Vec<f64>)>> = vec![None; n];
    for (i, af) in file.agents.into_iter().enumerate() {
        let components = match (af.actions, af.action_components) {
            (Some(a), None) => vec![a],
            (None, Some(c)) => c,
            _ => {
                return Err(Error::Config(format!(
                    "agent {i}: give exactly one of `actions` and `action_components`"
                )))
            }
        };
        let y_set = match (af.y_set, af.y_box, af.y_halfspace) {
            (Some(s), None, None) => s,
            (None, Some(b), None) => SetDescriptor::Box {
                lower: b.lower,
                upper: b.upper,
            },
            (None, Some(b), Some(h)) => SetDescriptor::BoxHalfspace {
                lower: b.lower,
                upper: b.upper,
                a: h.a,
                b: h.b,
            },
            (None, None, None) => SetDescriptor::Box {
                lower: vec![],
                upper: vec![],
            },
            _ => {
                return Err(Error::Config(format!(
                    "agent {i}: use either `y_set` or `y_box` with an optional `y_halfspace`"
                )))
            }
        };
        let m: usize = components.iter().map(|c| c.len()).sum();
        let ny = y_set.dim().unwrap_or(0);
        let nt = af.theta.len();
        let gd = matrix(&af.gd, nt, m, "Gd")?;
        let gc = matrix(&af.gc, nt, ny, "Gc")?;
        let gc_offset = af.gc_offset.unwrap_or_else(|| vec![0.0; nt]);
        check_dim("Gc offset", nt, gc_offset.len())?;

        let hd = match file.coupling.hd.get(i) {
            Some(r) => matrix(r, n_rho, m, "hd")?,
            None => DMatrix::zeros(n_rho, m),
        };
        let hc = match file.coupling.hc.get(i) {
            Some(r) => matrix(r, n_rho, ny, "hc")?,
            None => DMatrix::zeros(n_rho, ny),
        };
        let h_off = match file.coupling.offset.as_ref().and_then(|o| o.get(i)) {
            Some(o) => o.clone(),
            None => vec![0.0; n_rho],
        };
        check_dim("coupling offset", n_rho, h_off.len())?;

        let costs = match af.cost {
            None => vec![],
            Some(CostEntry::One(c)) => vec![c],
            Some(CostEntry::Many(v)) => v,
        };
        let mut discrete = CostSpec::Zero;
        let mut seen_discrete = false;
        for c in costs {
            let d = match c {
                CostFile::QuadraticContinuous { q_rows, q_vector } => {
                    if quad[i].is_some() {
                        return Err(Error::Config(format!("agent {i}: two continuous costs")));
                    }
                    quad[i] = Some((q_rows, q_vector));
                    continue;
                }
                CostFile::Zero => CostSpec::Zero,
                CostFile::Tensor { dims, values } => CostSpec::Tensor { dims, values },
                CostFile::LinearCoupled { pi_bar, blocks } => CostSpec::LinearCoupled {
                    pi_bar,
                    blocks: blocks
                        .into_iter()
                        .map(|b| {
                            b.map(|rows| {
                                let c = rows.first().map_or(0, |r| r.len());
                                matrix(&rows, rows.len(), c, "linear cost block")
                            })
                            .transpose()
                        })
                        .collect::<Result<_>>()?,
                },
            };
            if seen_discrete {
                return Err(Error::Config(format!("agent {i}: two discrete costs")));
            }
            seen_discrete = true;
            discrete = d;
        }
        agents.push(AgentSpec {
            components,
            y_set,
            local_discrete: ActionMap::Relaxed(gd),
            local_continuous: ConstraintMap::Affine {
                matrix: gc,
                offset: gc_offset,
            },
            theta: af.theta,
            coupling_discrete: ActionMap::Relaxed(hd),
            coupling_continuous: ConstraintMap::Affine {
                matrix: hc,
                offset: h_off,
            },
            discrete_cost: discrete,
        });
    }
    let continuous_cost = if quad.iter().any(|q| q.is_some()) {
        let dims: Vec<usize> = agents.iter().map(|a| a.n()).collect();
        let total: usize = dims.iter().sum();
        let mut rows = Vec::with_capacity(total);
        let mut vector = Vec::with_capacity(total);
        for (i, q) in quad.into_iter().enumerate() {
            let (r, v) = q.unwrap_or_else(|| (vec![vec![0.0; total]; dims[i]], vec![0.0; dims[i]]));
            check_dim("quadratic cost rows", dims[i], r.len())?;
            check_dim("quadratic cost vector", dims[i], v.len())?;
            rows.extend(r);
            vector.extend(v);
        }
        let q = matrix(&rows, total, total, "quadratic cost")?;
        Some(Arc::new(QuadraticCost::new(dims, q, vector)?) as Arc<dyn super::ContinuousCost>)
    } else {
        None
    };
    let game = GmiGame {
        agents,
        rho: file.rho,
        continuous_cost,
    };
    game.validate()?;
    Ok(game)
}

/// Serializes a game with affine constraint maps and a dense quadratic (or absent)
/// continuous cost. Constraint maps are written in relaxed form.
pub fn game_to_value(game: &GmiGame) -> Result<Value> {
    game.validate()?;
    let quad = match &game.continuous_cost {
        None => None,
        Some(c) => Some(c.as_quadratic().ok_or_else(|| {
            Error::Config("only quadratic continuous costs can be written".into())
        })?),
    };
    let mut agents = Vec::with_capacity(game.n_agents());
    let mut coupling = CouplingFile::default();
    let mut offsets = Vec::new();
    let mut y_at = 0;
    for (i, ag) in game.agents.iter().enumerate() {
        let affine = |c: &ConstraintMap| match c {
            ConstraintMap::Affine { matrix, offset } => Ok((matrix.clone(), offset.clone())),
            ConstraintMap::Smooth(_) => Err(Error::Config(format!(
                "agent {i}: nonlinear constraint maps cannot be written"
            ))),
        };
        let (gc, gc_off) = affine(&ag.local_continuous)?;
        let (hc, hc_off) = affine(&ag.coupling_continuous)?;
        let mut costs = vec![match &ag.discrete_cost {
            CostSpec::Zero => CostFile::Zero,
            CostSpec::Tensor { dims, values } => CostFile::Tensor {
                dims: dims.clone(),
                values: values.clone(),
            },
            CostSpec::LinearCoupled { pi_bar, blocks } => CostFile::LinearCoupled {
                pi_bar: pi_bar.clone(),
                blocks: blocks.iter().map(|b| b.as_ref().map(rows_of)).collect(),
            },
            CostSpec::Smooth(_) => {
                return Err(Error::Config(format!(
                    "agent {i}: differentiable action costs cannot be written"
                )))
            }
        }];
        let ny = ag.n();
        if let Some(q) = quad {
            costs.push(CostFile::QuadraticContinuous {
                q_rows: rows_of(&q.q_matrix.rows(y_at, ny).into_owned()),
                q_vector: q.q_vector[y_at..y_at + ny].to_vec(),
            });
        }
        y_at += ny;
        let (actions, action_components) = if ag.components.len() == 1 {
            (Some(ag.components[0].clone()), None)
        } else {
            (None, Some(ag.components.clone()))
        };
        let (y_box, y_halfspace, y_set) = match &ag.y_set {
            SetDescriptor::Box { lower, upper } => (
                Some(BoxFile {
                    lower: lower.clone(),
                    upper: upper.clone(),
                }),
                None,
                None,
            ),
            SetDescriptor::BoxHalfspace { lower, upper, a, b } => (
                Some(BoxFile {
                    lower: lower.clone(),
                    upper: upper.clone(),
                }),
                Some(HalfspaceFile { a: a.clone(), b: *b }),
                None,
            ),
            other => (None, None, Some(other.clone())),
        };
        agents.push(AgentFile {
            actions,
            action_components,
            y_box,
            y_halfspace,
            y_set,
            gd: rows_of(&relax_constraints(&ag.local_discrete, &ag.components)),
            gc: rows_of(&gc),
            gc_offset: gc_off.iter().any(|&v| v != 0.0).then_some(gc_off),
            theta: ag.theta.clone(),
            cost: Some(CostEntry::Many(costs)),
        });
        coupling
            .hd
            .push(rows_of(&relax_constraints(&ag.coupling_discrete, &ag.components)));
        coupling.hc.push(rows_of(&hc));
        offsets.push(hc_off);
    }
    if offsets.iter().flatten().any(|&v| v != 0.0) {
        coupling.offset = Some(offsets);
    }
    Ok(serde_json::to_value(GameFile {
        agents,
        rho: game.rho.clone(),
        coupling,
    })?)
}

pub fn game_to_string(game: &GmiGame) -> Result<String> {
    Ok(serde_json::to_string_pretty(&game_to_value(game)?)?)
}
