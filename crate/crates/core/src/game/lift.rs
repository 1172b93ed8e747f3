use std::sync::Arc;

use nalgebra::DMatrix;

use super::costs::AugmentedCost;
use super::{relax_constraints, ActionMap, AgentSpec, ConstraintMap, CostSpec, GmiGame, SmoothActionCost};
use crate::error::{Error, Result};
use crate::regularizers::SetDescriptor;

/// Moves a differentiable cost on scalar integer actions onto new continuous
/// variables `v_i ∈ [min a, max a]` tied to the actions by `E[a_i] = v_i`.
///
/// Every agent must carry the same smooth cost. A game without any action cost is
/// returned unchanged; any other action cost is rejected.
pub fn lift_integer_cost(game: &GmiGame) -> Result<GmiGame> {
    if game
        .agents
        .iter()
        .all(|a| matches!(a.discrete_cost, CostSpec::Zero))
    {
        return Ok(game.clone());
    }
    let mut smooth: Option<Arc<dyn SmoothActionCost>> = None;
    for (i, ag) in game.agents.iter().enumerate() {
        match &ag.discrete_cost {
            CostSpec::Smooth(s) => match &smooth {
                None => smooth = Some(s.clone()),
                Some(prev) if Arc::ptr_eq(prev, s) => {}
                Some(_) => {
                    return Err(Error::Config(
                        "lifting needs one differentiable cost shared by all agents".into(),
                    ))
                }
            },
            _ => {
                return Err(Error::Config(format!(
                    "agent {i}: only differentiable costs on scalar actions can be lifted"
                )))
            }
        }
        if ag.components.len() != 1 || ag.action_dim() != 1 {
            return Err(Error::Config(format!(
                "agent {i}: lifting needs a single scalar action component"
            )));
        }
    }
    game.validate()?;
    let smooth = smooth.expect("at least one agent");

    let mut agents = Vec::with_capacity(game.n_agents());
    for ag in &game.agents {
        let acts: Vec<f64> = ag.components[0].iter().map(|a| a[0] as f64).collect();
        let lo = acts.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = acts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let n_old = ag.n();
        let m = acts.len();

        let old_local = relax_constraints(&ag.local_discrete, &ag.components);
        let nt = old_local.nrows();
        let mut local = DMatrix::zeros(nt + 2, m);
        local.view_mut((0, 0), (nt, m)).copy_from(&old_local);
        for (j, &a) in acts.iter().enumerate() {
            local[(nt, j)] = a;
            local[(nt + 1, j)] = -a;
        }

        let (gc_old, gc_off) = match &ag.local_continuous {
            ConstraintMap::Affine { matrix, offset } => (matrix, offset),
            ConstraintMap::Smooth(_) => {
                return Err(Error::Config(
                    "lifting needs affine local continuous constraints".into(),
                ))
            }
        };
        let mut gc = DMatrix::zeros(nt + 2, n_old + 1);
        gc.view_mut((0, 0), (nt, n_old)).copy_from(gc_old);
        gc[(nt, n_old)] = -1.0;
        gc[(nt + 1, n_old)] = 1.0;
        let mut offset = gc_off.clone();
        offset.extend([0.0, 0.0]);

        let mut theta = ag.theta.clone();
        theta.extend([0.0, 0.0]);

        let v_set = SetDescriptor::Box {
            lower: vec![lo],
            upper: vec![hi],
        };
        let y_set = if n_old == 0 {
            v_set
        } else {
            SetDescriptor::Product {
                parts: vec![ag.y_set.clone(), v_set],
                dims: vec![n_old, 1],
            }
        };

        agents.push(AgentSpec {
            components: ag.components.clone(),
            y_set,
            local_discrete: ActionMap::Relaxed(local),
            local_continuous: ConstraintMap::Affine { matrix: gc, offset },
            theta,
            coupling_discrete: ag.coupling_discrete.clone(),
            coupling_continuous: ag.coupling_continuous.with_extra_cols(1)?,
            discrete_cost: CostSpec::Zero,
        });
    }
    let inner_dims: Vec<usize> = game.agents.iter().map(|a| a.n()).collect();
    let n = game.n_agents();
    let cost = AugmentedCost::new(
        game.continuous_cost.clone(),
        inner_dims,
        vec![1; n],
        vec![vec![0.0]; n],
        Some(smooth),
    )?;
    let lifted = GmiGame {
        agents,
        rho: game.rho.clone(),
        continuous_cost: Some(Arc::new(cost)),
    };
    lifted.validate()?;
    Ok(lifted)
}
