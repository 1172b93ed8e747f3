//! Legendre functions, Bregman distances, and the backward steps of the splitting.
//!
//! Two Legendre kinds are supported: the squared Euclidean norm `½‖v‖²` and the
//! negative Gibbs–Shannon entropy `Σ v ln v` restricted to probability simplices.
//! Both are 1-strongly convex on the sets where the solvers use them, so every
//! [`RegularizerSpec`] carries modulus 1.

use std::ops::Range;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dist2, dot};

/// Components of a mirror-step output are never allowed below this value.
pub const INTERIOR_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegendreKind {
    Euclidean,
    GibbsShannon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerSpec {
    blocks: Vec<(LegendreKind, usize)>,
    modulus: f64,
}

impl RegularizerSpec {
    pub fn new(blocks: Vec<(LegendreKind, usize)>) -> Result<Self> {
        if blocks.iter().any(|&(_, d)| d == 0) {
            return Err(Error::Config("regularizer blocks must have positive dimension".into()));
        }
        Ok(Self {
            blocks,
            modulus: 1.0,
        })
    }

    pub fn euclidean(dim: usize) -> Self {
        Self {
            blocks: vec![(LegendreKind::Euclidean, dim)],
            modulus: 1.0,
        }
    }

    pub fn gibbs_shannon(dim: usize) -> Self {
        Self {
            blocks: vec![(LegendreKind::GibbsShannon, dim)],
            modulus: 1.0,
        }
    }

    pub fn blocks(&self) -> &[(LegendreKind, usize)] {
        &self.blocks
    }

    pub fn strong_convexity_modulus(&self) -> f64 {
        self.modulus
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.1).sum()
    }

    fn ranges(&self) -> impl Iterator<Item = (LegendreKind, Range<usize>)> + '_ {
        let mut start = 0;
        self.blocks.iter().map(move |&(k, d)| {
            let r = start..start + d;
            start += d;
            (k, r)
        })
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim("regularizer value", self.dim(), x.len())?;
        let mut total = 0.0;
        for (kind, r) in self.ranges() {
            total += match kind {
                LegendreKind::Euclidean => 0.5 * dot(&x[r.clone()], &x[r]),
                LegendreKind::GibbsShannon => entropy_value(&x[r])?,
            };
        }
        Ok(total)
    }

    /// Gradient at a point of the interior of the domain.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("regularizer gradient", self.dim(), x.len())?;
        let mut g = Vec::with_capacity(x.len());
        for (kind, r) in self.ranges() {
            match kind {
                LegendreKind::Euclidean => g.extend_from_slice(&x[r]),
                LegendreKind::GibbsShannon => {
                    for &v in &x[r] {
                        if !(v > 0.0) {
                            return Err(Error::Domain(format!(
                                "entropy gradient needs a strictly positive point, got {v}"
                            )));
                        }
                        g.push(1.0 + v.ln());
                    }
                }
            }
        }
        Ok(g)
    }
}

fn entropy_value(x: &[f64]) -> Result<f64> {
    let mut s = 0.0;
    for &v in x {
        if v < 0.0 || !v.is_finite() {
            return Err(Error::Domain(format!("negative component {v} on an entropy block")));
        }
        if v > 0.0 {
            s += v * v.ln();
        }
    }
    Ok(s)
}

/// `φ(x) − φ(y) − ⟨∇φ(y), x − y⟩`, evaluated block by block.
///
/// On entropy blocks this is the generalized Kullback–Leibler sum
/// `Σ x ln(x/y) − x + y` with `0 ln 0 = 0`; `y` must be strictly positive there.
pub fn bregman_distance(spec: &RegularizerSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    check_dim("bregman distance (x)", spec.dim(), x.len())?;
    check_dim("bregman distance (y)", spec.dim(), y.len())?;
    let mut total = 0.0;
    for (kind, r) in spec.ranges() {
        let (xb, yb) = (&x[r.clone()], &y[r]);
        match kind {
            LegendreKind::Euclidean => {
                let d = dist2(xb, yb);
                total += 0.5 * d * d;
            }
            LegendreKind::GibbsShannon => {
                for (&a, &b) in xb.iter().zip(yb) {
                    if a < 0.0 || !a.is_finite() {
                        return Err(Error::Domain(format!("negative component {a} in x")));
                    }
                    if !(b > 0.0) || !b.is_finite() {
                        return Err(Error::Domain(format!(
                            "y must be in the interior of the entropy domain, got {b}"
                        )));
                    }
                    let xlogx = if a > 0.0 { a * (a / b).ln() } else { 0.0 };
                    total += xlogx - a + b;
                }
            }
        }
    }
    // Cancellation can leave a tiny negative residue.
    Ok(total.max(0.0))
}

/// Multiplicative-weights step `x_j ∝ x_prev_j · exp(−γ d_j)`, evaluated in the log
/// domain with max-subtraction and floored at [`INTERIOR_FLOOR`].
pub fn mirror_step_simplex(x_prev: &[f64], d: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; x_prev.len()];
    mirror_step_simplex_into(x_prev, d, gamma, &mut out)?;
    Ok(out)
}

pub fn mirror_step_simplex_into(x_prev: &[f64], d: &[f64], gamma: f64, out: &mut [f64]) -> Result<()> {
    check_dim("mirror step", x_prev.len(), d.len())?;
    check_dim("mirror step output", x_prev.len(), out.len())?;
    if x_prev.is_empty() {
        return Err(Error::Domain("mirror step on an empty simplex".into()));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("step size must be positive, got {gamma}")));
    }
    // Centering the direction makes shifts d + c·1 cancel before they meet γ.
    let d_min = d.iter().copied().fold(f64::INFINITY, f64::min);
    let mut max_log = f64::NEG_INFINITY;
    for ((o, &x), &g) in out.iter_mut().zip(x_prev).zip(d) {
        if !(x > 0.0) {
            return Err(Error::Domain(format!(
                "mirror step needs a strictly positive point, got component {x}"
            )));
        }
        if !g.is_finite() {
            return Err(Error::Domain(format!("non-finite dual direction {g}")));
        }
        let l = x.ln() - gamma * (g - d_min);
        *o = l;
        max_log = max_log.max(l);
    }
    let mut sum = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max_log).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    if out.iter().any(|&v| v < INTERIOR_FLOOR) {
        for o in out.iter_mut() {
            *o = o.max(INTERIOR_FLOOR);
        }
        let s: f64 = out.iter().sum();
        for o in out.iter_mut() {
            *o /= s;
        }
    }
    Ok(())
}

/// Closed convex sets with an explicit Euclidean projection.
///
/// Halfspaces are stored in `aᵀv ≤ b` form; use [`SetDescriptor::halfspace_geq`] for
/// the `≥` orientation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SetDescriptor {
    Free,
    NonNegative,
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Halfspace { a: Vec<f64>, b: f64 },
    Simplex,
    BoxHalfspace { lower: Vec<f64>, upper: Vec<f64>, a: Vec<f64>, b: f64 },
    /// Cartesian product; `dims[k]` is the dimension of `parts[k]`.
    Product { parts: Vec<SetDescriptor>, dims: Vec<usize> },
}

impl SetDescriptor {
    pub fn halfspace_geq(a: Vec<f64>, b: f64) -> Self {
        SetDescriptor::Halfspace {
            a: a.into_iter().map(|v| -v).collect(),
            b: -b,
        }
    }

    /// `{l ≤ v ≤ u, aᵀv ≥ b}`
    pub fn box_halfspace_geq(lower: Vec<f64>, upper: Vec<f64>, a: Vec<f64>, b: f64) -> Self {
        SetDescriptor::BoxHalfspace {
            lower,
            upper,
            a: a.into_iter().map(|v| -v).collect(),
            b: -b,
        }
    }

    /// Dimension fixed by the descriptor, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            SetDescriptor::Box { lower, .. } | SetDescriptor::BoxHalfspace { lower, .. } => {
                Some(lower.len())
            }
            SetDescriptor::Halfspace { a, .. } => Some(a.len()),
            SetDescriptor::Product { dims, .. } => Some(dims.iter().sum()),
            _ => None,
        }
    }

    /// Closed and bounded with finite bounds.
    pub fn is_compact(&self) -> bool {
        match self {
            SetDescriptor::Box { lower, upper } | SetDescriptor::BoxHalfspace { lower, upper, .. } => {
                lower.iter().chain(upper).all(|v| v.is_finite())
            }
            SetDescriptor::Simplex => true,
            SetDescriptor::Product { parts, .. } => parts.iter().all(|p| p.is_compact()),
            _ => false,
        }
    }

    fn product_ranges(dims: &[usize]) -> impl Iterator<Item = Range<usize>> + '_ {
        let mut start = 0;
        dims.iter().map(move |&d| {
            let r = start..start + d;
            start += d;
            r
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SetDescriptor::Box { lower, upper } => check_box(lower, upper),
            SetDescriptor::Halfspace { a, .. } => {
                if a.iter().all(|&v| v == 0.0) {
                    return Err(Error::Config("halfspace with zero normal".into()));
                }
                Ok(())
            }
            SetDescriptor::BoxHalfspace { lower, upper, a, b } => {
                check_box(lower, upper)?;
                check_dim("box-halfspace normal", lower.len(), a.len())?;
                let min_val: f64 = a
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(&ai, (&l, &u))| if ai >= 0.0 { ai * l } else { ai * u })
                    .sum();
                if min_val > *b + 1e-12 * (1.0 + b.abs()) {
                    return Err(Error::Config(format!(
                        "box-halfspace set is empty (min aᵀv = {min_val} > {b})"
                    )));
                }
                Ok(())
            }
            SetDescriptor::Product { parts, dims } => {
                check_dim("product set", parts.len(), dims.len())?;
                for (p, &d) in parts.iter().zip(dims) {
                    if let Some(pd) = p.dim() {
                        check_dim("product part", d, pd)?;
                    }
                    p.validate()?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        match self {
            SetDescriptor::Free => true,
            SetDescriptor::NonNegative => v.iter().all(|&x| x >= -tol),
            SetDescriptor::Box { lower, upper } => in_box(v, lower, upper, tol),
            SetDescriptor::Halfspace { a, b } => dot(a, v) <= b + tol,
            SetDescriptor::Simplex => {
                v.iter().all(|&x| x >= -tol) && (v.iter().sum::<f64>() - 1.0).abs() <= tol
            }
            SetDescriptor::BoxHalfspace { lower, upper, a, b } => {
                in_box(v, lower, upper, tol) && dot(a, v) <= b + tol
            }
            SetDescriptor::Product { parts, dims } => parts
                .iter()
                .zip(Self::product_ranges(dims))
                .all(|(p, r)| p.contains(&v[r], tol)),
        }
    }

    /// A point guaranteed to lie in the set, used for default initialization.
    pub fn center(&self, dim: usize) -> Vec<f64> {
        match self {
            SetDescriptor::Free | SetDescriptor::NonNegative => vec![0.0; dim],
            SetDescriptor::Simplex => vec![1.0 / dim as f64; dim],
            SetDescriptor::Box { lower, upper } => {
                lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect()
            }
            SetDescriptor::Product { parts, dims } => parts
                .iter()
                .zip(dims)
                .flat_map(|(p, &d)| p.center(d))
                .collect(),
            SetDescriptor::Halfspace { .. } | SetDescriptor::BoxHalfspace { .. } => {
                let c = match self {
                    SetDescriptor::BoxHalfspace { lower, upper, .. } => {
                        lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect()
                    }
                    _ => vec![0.0; dim],
                };
                project_euclidean(self, &c).unwrap_or(c)
            }
        }
    }
}

fn check_box(lower: &[f64], upper: &[f64]) -> Result<()> {
    check_dim("box bounds", lower.len(), upper.len())?;
    for (i, (l, u)) in lower.iter().zip(upper).enumerate() {
        if l > u || l.is_nan() || u.is_nan() {
            return Err(Error::Config(format!("empty box in coordinate {i}: [{l}, {u}]")));
        }
    }
    Ok(())
}

fn in_box(v: &[f64], lower: &[f64], upper: &[f64], tol: f64) -> bool {
    v.iter()
        .zip(lower.iter().zip(upper))
        .all(|(&x, (&l, &u))| x >= l - tol && x <= u + tol)
}

/// Euclidean projection onto one of the simple sets.
pub fn project_euclidean(set: &SetDescriptor, v: &[f64]) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    project_in_place(set, &mut out)?;
    Ok(out)
}

pub fn project_in_place(set: &SetDescriptor, v: &mut [f64]) -> Result<()> {
    if let Some(d) = set.dim() {
        check_dim("projection", d, v.len())?;
    }
    match set {
        SetDescriptor::Free => {}
        SetDescriptor::NonNegative => {
            for x in v.iter_mut() {
                *x = x.max(0.0);
            }
        }
        SetDescriptor::Box { lower, upper } => {
            check_box(lower, upper)?;
            clamp_box(v, lower, upper);
        }
        SetDescriptor::Halfspace { a, b } => {
            let nn = dot(a, a);
            if nn == 0.0 {
                return Err(Error::Config("halfspace with zero normal".into()));
            }
            let excess = dot(a, v) - b;
            if excess > 0.0 {
                let t = excess / nn;
                for (x, ai) in v.iter_mut().zip(a) {
                    *x -= t * ai;
                }
            }
        }
        SetDescriptor::Simplex => project_simplex_in_place(v)?,
        SetDescriptor::BoxHalfspace { lower, upper, a, b } => {
            set.validate()?;
            project_box_halfspace(v, lower, upper, a, *b);
        }
        SetDescriptor::Product { parts, dims } => {
            check_dim("product set", parts.len(), dims.len())?;
            for (p, r) in parts.iter().zip(SetDescriptor::product_ranges(dims)) {
                project_in_place(p, &mut v[r])?;
            }
        }
    }
    Ok(())
}

fn clamp_box(v: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((x, &l), &u) in v.iter_mut().zip(lower).zip(upper) {
        *x = x.clamp(l, u);
    }
}

/// Sort-and-threshold projection onto the probability simplex.
fn project_simplex_in_place(v: &mut [f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Domain("projection onto an empty simplex".into()));
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &s) in sorted.iter().enumerate() {
        cumsum += s;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
    Ok(())
}

/// Projection onto `{l ≤ v ≤ u, aᵀv ≤ b}`. The multiplier `τ ≥ 0` of the halfspace
/// solves `aᵀ clamp(v − τa) = b`, a piecewise-linear nonincreasing equation whose
/// breakpoints are enumerated exactly.
fn project_box_halfspace(v: &mut [f64], lower: &[f64], upper: &[f64], a: &[f64], b: f64) {
    let mut p = v.to_vec();
    clamp_box(&mut p, lower, upper);
    if dot(a, &p) <= b {
        v.copy_from_slice(&p);
        return;
    }
    let eval = |tau: f64| -> f64 {
        v.iter()
            .zip(a)
            .zip(lower.iter().zip(upper))
            .map(|((&x, &ai), (&l, &u))| ai * (x - tau * ai).clamp(l, u))
            .sum()
    };
    let mut breaks: Vec<f64> = Vec::with_capacity(2 * v.len() + 1);
    breaks.push(0.0);
    for ((&x, &ai), (&l, &u)) in v.iter().zip(a).zip(lower.iter().zip(upper)) {
        if ai != 0.0 {
            for t in [(x - l) / ai, (x - u) / ai] {
                if t > 0.0 && t.is_finite() {
                    breaks.push(t);
                }
            }
        }
    }
    breaks.sort_by(|x, y| x.total_cmp(y));
    breaks.dedup();
    // g(0) > b and g(∞) = min over the box ≤ b.
    let mut lo = 0.0;
    let mut g_lo = eval(0.0);
    let mut tau = *breaks.last().unwrap();
    for &t in &breaks[1..] {
        let g_t = eval(t);
        if g_t <= b {
            // g is linear on [lo, t]
            tau = if g_lo == g_t { t } else { lo + (g_lo - b) * (t - lo) / (g_lo - g_t) };
            break;
        }
        lo = t;
        g_lo = g_t;
    }
    for ((x, &ai), (&l, &u)) in v.iter_mut().zip(a).zip(lower.iter().zip(upper)) {
        *x = (*x - tau * ai).clamp(l, u);
    }
}

/// One constituent of a [`Polytope`]: a simple set acting on a coordinate range.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub range: Range<usize>,
    pub set: SetDescriptor,
}

/// Intersection of simple sets, projected onto with Dykstra's algorithm.
///
/// Pieces on disjoint coordinate ranges that are not halfspaces over the full vector are
/// grouped into one separable product set projected exactly; every halfspace row is
/// its own Dykstra component.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    dim: usize,
    product: Vec<Piece>,
    rows: Vec<(Vec<f64>, f64)>,
}

#[derive(Debug, Clone, Copy)]
pub struct DykstraOptions {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for DykstraOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_sweeps: 100_000,
        }
    }
}

impl Polytope {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            product: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Adds a simple set on a coordinate range. Ranges of product pieces must not overlap.
    pub fn with_piece(mut self, range: Range<usize>, set: SetDescriptor) -> Result<Self> {
        if range.end > self.dim {
            return Err(Error::Config(format!(
                "piece range {range:?} exceeds polytope dimension {}",
                self.dim
            )));
        }
        if self
            .product
            .iter()
            .any(|p| p.range.start < range.end && range.start < p.range.end)
        {
            return Err(Error::Config(format!("overlapping polytope pieces at {range:?}")));
        }
        if let Some(d) = set.dim() {
            check_dim("polytope piece", range.len(), d)?;
        }
        set.validate()?;
        self.product.push(Piece { range, set });
        Ok(self)
    }

    pub fn with_box(self, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let d = self.dim;
        self.with_piece(0..d, SetDescriptor::Box { lower, upper })
    }

    pub fn with_simplex(self, range: Range<usize>) -> Result<Self> {
        self.with_piece(range, SetDescriptor::Simplex)
    }

    /// Adds the rows of `A v ≤ b` (row-major `a`, one row per entry of `b`).
    pub fn with_halfspaces(mut self, a: &[f64], b: &[f64]) -> Result<Self> {
        check_dim("polytope halfspaces", b.len() * self.dim, a.len())?;
        for (r, &br) in b.iter().enumerate() {
            let row = a[r * self.dim..(r + 1) * self.dim].to_vec();
            if row.iter().all(|&x| x == 0.0) {
                if br < 0.0 {
                    return Err(Error::Config(format!("row {r} reads 0 ≤ {br}: empty set")));
                }
                continue;
            }
            self.rows.push((row, br));
        }
        Ok(self)
    }

    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        self.product
            .iter()
            .all(|p| p.set.contains(&v[p.range.clone()], tol))
            && self.rows.iter().all(|(a, b)| dot(a, v) <= b + tol)
    }

    fn project_product(&self, v: &mut [f64]) -> Result<()> {
        for p in &self.product {
            project_in_place(&p.set, &mut v[p.range.clone()])?;
        }
        Ok(())
    }
}

/// Dykstra's alternating projections; stops when a full sweep moves the iterate by
/// less than `opts.tol` in Euclidean norm.
pub fn project_polytope(poly: &Polytope, v: &[f64], opts: DykstraOptions) -> Result<Vec<f64>> {
    check_dim("polytope projection", poly.dim, v.len())?;
    if !(opts.tol > 0.0) {
        return Err(Error::Config("Dykstra tolerance must be positive".into()));
    }
    let mut x = v.to_vec();
    if poly.rows.is_empty() {
        poly.project_product(&mut x)?;
        return Ok(x);
    }
    let n_sets = poly.rows.len() + 1;
    let mut incr = vec![vec![0.0; poly.dim]; n_sets];
    let mut prev = vec![0.0; poly.dim];
    let mut y = vec![0.0; poly.dim];
    let mut change = f64::INFINITY;
    for _ in 0..opts.max_sweeps {
        prev.copy_from_slice(&x);
        for (k, inc) in incr.iter_mut().enumerate() {
            for ((yi, &xi), &pi) in y.iter_mut().zip(&x).zip(inc.iter()) {
                *yi = xi + pi;
            }
            x.copy_from_slice(&y);
            // the product set goes last so returned points lie exactly on it
            if k == poly.rows.len() {
                poly.project_product(&mut x)?;
            } else {
                let (a, b) = &poly.rows[k];
                let excess = dot(a, &x) - b;
                if excess > 0.0 {
                    let t = excess / dot(a, a);
                    for (xi, ai) in x.iter_mut().zip(a) {
                        *xi -= t * ai;
                    }
                }
            }
            for ((pi, &yi), &xi) in inc.iter_mut().zip(&y).zip(&x) {
                *pi = yi - xi;
            }
        }
        change = dist2(&x, &prev);
        if change < opts.tol {
            return Ok(x);
        }
    }
    Err(Error::Projection {
        iterations: opts.max_sweeps,
        residual: change,
    })
}
