use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::costs::{AugmentedCost, ContinuousCost, QuadraticCost};
use super::{enumerate_binary, ActionMap, AgentBlock, AgentSpec, ConstraintMap, CostSpec, GmiGame};
use crate::error::{check_dim, Error, Result};
use crate::regularizers::SetDescriptor;

/// Largest number of affine pieces per agent (the reformulation enumerates
/// `2^{3p}` binary patterns).
pub const MAX_REGIONS: usize = 4;

/// A scalar piece-wise affine cost: `c_j y + b_j` on `[lo_j, hi_j]`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PwaAgent {
    pub regions: Vec<(f64, f64)>,
    pub slopes: Vec<f64>,
    pub intercepts: Vec<f64>,
}

impl PwaAgent {
    pub fn lower(&self) -> f64 {
        self.regions.iter().map(|r| r.0).fold(f64::INFINITY, f64::min)
    }

    pub fn upper(&self) -> f64 {
        self.regions.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `J^pwa(y)`, or `None` when `y` falls outside every region.
    pub fn value(&self, y: f64) -> Option<f64> {
        self.regions
            .iter()
            .position(|&(lo, hi)| lo <= y && y <= hi)
            .map(|j| self.slopes[j] * y + self.intercepts[j])
    }

    fn validate(&self, eps: f64) -> Result<()> {
        let p = self.regions.len();
        if p == 0 || p > MAX_REGIONS {
            return Err(Error::Config(format!(
                "piece-wise affine cost needs 1..={MAX_REGIONS} regions, got {p}"
            )));
        }
        check_dim("pwa slopes", p, self.slopes.len())?;
        check_dim("pwa intercepts", p, self.intercepts.len())?;
        if self.regions.iter().any(|r| !r.0.is_finite() || !r.1.is_finite())
            || self.slopes.iter().chain(&self.intercepts).any(|v| !v.is_finite())
        {
            return Err(Error::Config("pwa data must be finite".into()));
        }
        let mut sorted = self.regions.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        for r in &sorted {
            if r.0 > r.1 {
                return Err(Error::Config(format!("empty pwa region [{}, {}]", r.0, r.1)));
            }
        }
        for w in sorted.windows(2) {
            let gap = w[1].0 - w[0].1;
            if gap <= 0.0 {
                return Err(Error::Config(format!(
                    "pwa regions [{}, {}] and [{}, {}] overlap",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
            if gap > 2.0 * eps {
                return Err(Error::Config(format!(
                    "pwa regions leave the gap ({}, {}) uncovered",
                    w[0].1, w[1].0
                )));
            }
        }
        Ok(())
    }
}

/// A game whose agents each own one scalar continuous variable with a piece-wise
/// affine cost, plus an optional smooth cost over all scalars and coupling rows.
#[derive(Clone, Debug)]
pub struct PwaGameSpec {
    pub agents: Vec<PwaAgent>,
    /// Strictness margin of the region indicators.
    pub epsilon: f64,
    pub continuous_cost: Option<Arc<dyn ContinuousCost>>,
    /// Per agent, `n_ρ × 1` coupling map of its scalar.
    pub coupling: Vec<ConstraintMap>,
    pub rho: Vec<f64>,
}

/// Region indicator rows for one piece, in the order
/// `(δ, α, β)`-coefficients, `y`-coefficient, `z`-coefficient, right-hand side.
struct Row {
    delta: f64,
    alpha: f64,
    beta: f64,
    y: f64,
    z: f64,
    rhs: f64,
}

fn region_rows(lo_j: f64, hi_j: f64, lo: f64, hi: f64, c: f64, b: f64, eps: f64) -> [Row; 11] {
    let (m, big_m) = value_range(lo, hi, c, b);
    let r = |delta, alpha, beta, y, z, rhs| Row {
        delta,
        alpha,
        beta,
        y,
        z,
        rhs,
    };
    [
        // α = 1 ⇒ y ≤ hi_j
        r(0.0, hi - hi_j, 0.0, 1.0, 0.0, hi),
        // α = 0 ⇒ y ≥ hi_j + ε
        r(0.0, lo - hi_j - eps, 0.0, -1.0, 0.0, -hi_j - eps),
        // β = 1 ⇒ y ≥ lo_j
        r(0.0, 0.0, lo_j - lo, -1.0, 0.0, -lo),
        // β = 0 ⇒ y ≤ lo_j − ε
        r(0.0, 0.0, lo_j - hi - eps, 1.0, 0.0, lo_j - eps),
        // δ = α ∧ β
        r(1.0, -1.0, 0.0, 0.0, 0.0, 0.0),
        r(1.0, 0.0, -1.0, 0.0, 0.0, 0.0),
        r(-1.0, 1.0, 1.0, 0.0, 0.0, 1.0),
        // z = δ (c y + b)
        r(m, 0.0, 0.0, 0.0, -1.0, 0.0),
        r(-m, 0.0, 0.0, -c, 1.0, b - m),
        r(-big_m, 0.0, 0.0, 0.0, 1.0, 0.0),
        r(big_m, 0.0, 0.0, c, -1.0, big_m - b),
    ]
}

/// Range of `c y + b` over `[lo, hi]`.
fn value_range(lo: f64, hi: f64, c: f64, b: f64) -> (f64, f64) {
    let (u, v) = (c * lo + b, c * hi + b);
    (u.min(v), u.max(v))
}

/// Rewrites each piece-wise affine cost with region indicators `(δ, α, β)` and
/// auxiliary values `z`, so that `J^pwa(y) = Σ_j z_j` on every feasible point.
///
/// Agent `i` gets the action `(δ_1..δ_p, α_1..α_p, β_1..β_p) ∈ {0,1}^{3p}` and the
/// continuous variable `(y, z_1, …, z_p)`.
pub fn reformulate_pwa(spec: &PwaGameSpec) -> Result<GmiGame> {
    let n = spec.agents.len();
    check_dim("pwa coupling maps", n, spec.coupling.len())?;
    if !(spec.epsilon > 0.0 && spec.epsilon.is_finite()) {
        return Err(Error::Config("pwa epsilon must be positive".into()));
    }
    if let Some(c) = &spec.continuous_cost {
        if c.dims().iter().any(|&d| d != 1) || c.dims().len() != n {
            return Err(Error::Config("pwa continuous cost must act on one scalar per agent".into()));
        }
    }
    let eps = spec.epsilon;
    let mut agents = Vec::with_capacity(n);
    let mut extra_dims = Vec::with_capacity(n);
    let mut linear = Vec::with_capacity(n);
    for (i, ag) in spec.agents.iter().enumerate() {
        ag.validate(eps)?;
        if spec.coupling[i].cols() != 1 || spec.coupling[i].rows() != spec.rho.len() {
            return Err(Error::Dimension {
                context: "pwa coupling map",
                expected: spec.rho.len(),
                got: spec.coupling[i].rows(),
            });
        }
        let p = ag.regions.len();
        let (lo, hi) = (ag.lower(), ag.upper());
        let rows = 11 * p;
        let mut gd = DMatrix::zeros(rows, 3 * p);
        let mut gc = DMatrix::zeros(rows, 1 + p);
        let mut theta = vec![0.0; rows];
        let mut z_lo = vec![lo];
        let mut z_hi = vec![hi];
        for j in 0..p {
            let (lo_j, hi_j) = ag.regions[j];
            let (c, b) = (ag.slopes[j], ag.intercepts[j]);
            for (k, row) in region_rows(lo_j, hi_j, lo, hi, c, b, eps).iter().enumerate() {
                let r = 11 * j + k;
                gd[(r, j)] = row.delta;
                gd[(r, p + j)] = row.alpha;
                gd[(r, 2 * p + j)] = row.beta;
                gc[(r, 0)] = row.y;
                gc[(r, 1 + j)] = row.z;
                theta[r] = row.rhs;
            }
            let (m, big_m) = value_range(lo, hi, c, b);
            z_lo.push(m.min(0.0));
            z_hi.push(big_m.max(0.0));
        }
        let hc = match &spec.coupling[i] {
            ConstraintMap::Affine { matrix, offset } => {
                let mut mtx = DMatrix::zeros(matrix.nrows(), 1 + p);
                mtx.view_mut((0, 0), (matrix.nrows(), 1)).copy_from(matrix);
                ConstraintMap::Affine {
                    matrix: mtx,
                    offset: offset.clone(),
                }
            }
            ConstraintMap::Smooth(_) => {
                return Err(Error::Config("pwa coupling maps must be affine".into()))
            }
        };
        agents.push(AgentSpec {
            components: vec![enumerate_binary(3 * p, |_| true)?],
            y_set: SetDescriptor::Box {
                lower: z_lo,
                upper: z_hi,
            },
            local_discrete: ActionMap::Affine {
                matrix: gd,
                offset: vec![0.0; rows],
            },
            local_continuous: ConstraintMap::linear(gc),
            theta,
            coupling_discrete: ActionMap::Zero {
                rows: spec.rho.len(),
            },
            coupling_continuous: hc,
            discrete_cost: CostSpec::Zero,
        });
        extra_dims.push(p);
        linear.push(vec![1.0; p]);
    }
    let cost = AugmentedCost::new(
        spec.continuous_cost.clone(),
        vec![1; n],
        extra_dims,
        linear,
        None,
    )?;
    let game = GmiGame {
        agents,
        rho: spec.rho.clone(),
        continuous_cost: Some(Arc::new(cost)),
    };
    game.validate()?;
    Ok(game)
}

/// Smallest `Σ_j z_j` over all binary patterns and auxiliary values compatible
/// with the scalar `y` in the reformulated block, together with the number of
/// feasible patterns. `None` when no pattern admits `y`.
///
/// Every row involves at most one auxiliary value, so for a fixed pattern the
/// feasible `z_j` form intervals and the minimum is the sum of lower ends.
pub fn min_auxiliary_cost(block: &AgentBlock, y: f64, tol: f64) -> Option<(f64, usize)> {
    let ConstraintMap::Affine { matrix: gc, offset } = &block.gc else {
        return None;
    };
    let p = gc.ncols() - 1;
    let (z_lo_box, z_hi_box) = match &block.y_set {
        SetDescriptor::Box { lower, upper } => (lower[1..].to_vec(), upper[1..].to_vec()),
        _ => return None,
    };
    let mut best: Option<f64> = None;
    let mut feasible = 0;
    for col in 0..block.m() {
        let mut z_lo = z_lo_box.clone();
        let mut z_hi = z_hi_box.clone();
        let mut ok = true;
        for r in 0..gc.nrows() {
            let slack = block.theta[r] - offset[r] - block.gd[(r, col)] - gc[(r, 0)] * y;
            match (1..=p).find(|&k| gc[(r, k)] != 0.0) {
                None => {
                    if slack < -tol {
                        ok = false;
                        break;
                    }
                }
                Some(k) => {
                    let a = gc[(r, k)];
                    if a > 0.0 {
                        z_hi[k - 1] = z_hi[k - 1].min(slack / a);
                    } else {
                        z_lo[k - 1] = z_lo[k - 1].max(slack / a);
                    }
                }
            }
        }
        if !ok || z_lo.iter().zip(&z_hi).any(|(l, h)| *l > *h + tol) {
            continue;
        }
        feasible += 1;
        let v: f64 = z_lo.iter().sum();
        best = Some(best.map_or(v, |b: f64| b.min(v)));
    }
    best.map(|b| (b, feasible))
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PwaParams {
    pub n_agents: usize,
    pub max_regions: usize,
    pub seed: u64,
}

impl Default for PwaParams {
    fn default() -> Self {
        Self {
            n_agents: 3,
            max_regions: 3,
            seed: 0,
        }
    }
}

pub const PWA_EPSILON: f64 = 1e-9;

/// Random continuous piece-wise affine costs on `[0, ȳ_i]`, a strongly monotone
/// quadratic coupling cost and one shared capacity row `Σ y_i ≤ ρ`.
pub fn make_pwa_instance(p: &PwaParams) -> Result<PwaGameSpec> {
    if p.n_agents == 0 || p.n_agents > 10 || p.max_regions == 0 || p.max_regions > MAX_REGIONS {
        return Err(Error::Config(format!(
            "pwa sizes out of range: N={} (1..=10), regions={} (1..={MAX_REGIONS})",
            p.n_agents, p.max_regions
        )));
    }
    let n = p.n_agents;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut agents = Vec::with_capacity(n);
    let mut total_hi = 0.0;
    for _ in 0..n {
        let hi: f64 = rng.gen_range(1.0..2.0);
        total_hi += hi;
        let k = rng.gen_range(1..=p.max_regions);
        let mut cuts: Vec<f64> = (1..k).map(|_| rng.gen_range(0.1..0.9) * hi).collect();
        cuts.sort_by(f64::total_cmp);
        let mut bounds = vec![0.0];
        bounds.extend(cuts);
        bounds.push(hi);
        let mut regions = Vec::with_capacity(k);
        let mut slopes = Vec::with_capacity(k);
        let mut intercepts = Vec::with_capacity(k);
        for j in 0..k {
            let lo_j = if j == 0 { bounds[0] } else { bounds[j] + PWA_EPSILON };
            regions.push((lo_j, bounds[j + 1]));
            let c = rng.gen_range(-1.0..1.0);
            // continuity at the shared breakpoint
            let b = if j == 0 {
                rng.gen_range(-1.0..1.0)
            } else {
                slopes[j - 1] * bounds[j] + intercepts[j - 1] - c * bounds[j]
            };
            slopes.push(c);
            intercepts.push(b);
        }
        agents.push(PwaAgent {
            regions,
            slopes,
            intercepts,
        });
    }
    let mut q = DMatrix::from_element(n, n, 0.1);
    for i in 0..n {
        q[(i, i)] += rng.gen_range(0.5..2.0);
    }
    let lin: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..0.0)).collect();
    let cost = QuadraticCost::new(vec![1; n], q, lin)?;
    let rho = vec![rng.gen_range(0.4..0.7) * total_hi];
    Ok(PwaGameSpec {
        agents,
        epsilon: PWA_EPSILON,
        continuous_cost: Some(Arc::new(cost)),
        coupling: (0..n)
            .map(|_| ConstraintMap::linear(DMatrix::from_element(1, 1, 1.0)))
            .collect(),
        rho,
    })
}
