//! Exact penalties that replace `min f(x), x ∈ D` by an unconstrained problem.
//!
//! Three constructions are provided, all of which evaluate `f` only at
//! feasible points:
//!
//! * [`PenaltyKind::ConstraintSum`]: `f(π_D(x)) + M (Σ max{0, g_j(x)} + Σ |h_k(x)|)`
//! * [`PenaltyKind::Distance`]: `f(π_D(x)) + M ρ_D(x)` with `ρ_D` the Euclidean distance to `D`
//! * [`PenaltyKind::RayRetraction`]: `f(p_D(x)) + M ‖x − p_D(x)‖`, where `p_D(x)` is the
//!   boundary point of `D` on the segment from an interior anchor to `x`
//!
//! For convex `D` and any `M > 0` the minimizers of the penalized function
//! coincide with those of the constrained problem.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::vector::{dist, norm};
use crate::Objective;

/// Feasibility threshold for constraint values and distances.
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// Default penalty multiplier.
pub const DEFAULT_MULTIPLIER: f64 = 10.0;

/// Default ray-retraction bracket length, relative to the segment length.
pub const RELATIVE_RETRACTION_TOL: f64 = 1e-10;

pub type ProjectFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type ConstraintFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A set described by a user projection oracle and, optionally, explicit
/// constraints `g_j(x) ≤ 0` (convex) and `h_k(x) = 0` (affine).
///
/// The oracle must return the Euclidean projection onto a closed convex set.
/// This is documented, not verified, except that when constraints are given
/// the returned point is checked against them.
#[derive(Clone)]
pub struct CustomSet {
    pub dim: usize,
    pub project: ProjectFn,
    pub inequalities: Vec<ConstraintFn>,
    pub equalities: Vec<ConstraintFn>,
}

impl fmt::Debug for CustomSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomSet")
            .field("dim", &self.dim)
            .field("inequalities", &self.inequalities.len())
            .field("equalities", &self.equalities.len())
            .finish()
    }
}

impl CustomSet {
    fn has_constraints(&self) -> bool {
        !self.inequalities.is_empty() || !self.equalities.is_empty()
    }

    fn violation(&self, x: &[f64]) -> f64 {
        let ineq: f64 = self.inequalities.iter().map(|g| g(x).max(0.0)).sum();
        let eq: f64 = self.equalities.iter().map(|h| h(x).abs()).sum();
        ineq + eq
    }
}

/// A closed convex region with projection, distance and membership oracles.
#[derive(Debug, Clone)]
pub enum FeasibleSet {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Custom(CustomSet),
}

impl FeasibleSet {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::invalid(format!(
                "box bounds must be non-empty and of equal length (got {} and {})",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() || l > u {
                return Err(Error::invalid(format!("box bound {i}: [{l}, {u}] is not a finite interval")));
            }
        }
        Ok(FeasibleSet::Box { lower, upper })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() || !crate::vector::is_finite(&center) {
            return Err(Error::invalid("ball center must be a non-empty finite vector"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(format!("ball radius must be positive, got {radius}")));
        }
        Ok(FeasibleSet::Ball { center, radius })
    }

    pub fn custom(dim: usize, project: ProjectFn) -> Self {
        FeasibleSet::Custom(CustomSet { dim, project, inequalities: Vec::new(), equalities: Vec::new() })
    }

    pub fn custom_with_constraints(
        dim: usize,
        project: ProjectFn,
        inequalities: Vec<ConstraintFn>,
        equalities: Vec<ConstraintFn>,
    ) -> Self {
        FeasibleSet::Custom(CustomSet { dim, project, inequalities, equalities })
    }

    /// The intersection of a box with the half-space `a·x ≤ b`.
    ///
    /// The projection is `clamp(x − λa)` with the multiplier `λ ≥ 0` found by
    /// bisection on the monotone map `λ ↦ a·clamp(x − λa)`.
    pub fn box_halfspace(lower: Vec<f64>, upper: Vec<f64>, a: Vec<f64>, b: f64) -> Result<Self> {
        let bx = FeasibleSet::boxed(lower.clone(), upper.clone())?;
        if a.len() != lower.len() || norm(&a) == 0.0 {
            return Err(Error::invalid("half-space normal must be non-zero with the box dimension"));
        }
        let min_ax: f64 =
            a.iter().zip(lower.iter().zip(&upper)).map(|(ai, (l, u))| if *ai > 0.0 { ai * l } else { ai * u }).sum();
        if min_ax > b {
            return Err(Error::invalid("box and half-space do not intersect"));
        }
        let dim = lower.len();
        let (lo_b, up_b, a_p, a_g) = (lower, upper, a.clone(), a);
        let project: ProjectFn = Arc::new(move |x: &[f64]| {
            let at = |lam: f64| -> Vec<f64> {
                x.iter()
                    .zip(&a_p)
                    .zip(lo_b.iter().zip(&up_b))
                    .map(|((xi, ai), (l, u))| (xi - lam * ai).clamp(*l, *u))
                    .collect()
            };
            let ax = |y: &[f64]| crate::vector::dot(&a_p, y);
            let y0 = at(0.0);
            if ax(&y0) <= b {
                return y0;
            }
            let mut hi = 1.0;
            while ax(&at(hi)) > b {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if ax(&at(mid)) > b {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= f64::EPSILON * hi {
                    break;
                }
            }
            at(hi)
        });
        let mut ineq: Vec<ConstraintFn> = vec![Arc::new(move |x: &[f64]| crate::vector::dot(&a_g, x) - b)];
        if let FeasibleSet::Box { lower, upper } = bx {
            ineq.extend(box_constraints(&lower, &upper));
        }
        Ok(FeasibleSet::custom_with_constraints(dim, project, ineq, Vec::new()))
    }

    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::Box { lower, .. } => lower.len(),
            FeasibleSet::Ball { center, .. } => center.len(),
            FeasibleSet::Custom(c) => c.dim,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!("point has dimension {}, set has {}", x.len(), self.dim())));
        }
        Ok(())
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        match self {
            FeasibleSet::Box { lower, upper } => {
                Ok(x.iter().zip(lower.iter().zip(upper)).map(|(v, (l, u))| v.clamp(*l, *u)).collect())
            }
            FeasibleSet::Ball { center, radius } => {
                let d = dist(x, center);
                if d <= *radius {
                    Ok(x.to_vec())
                } else {
                    let s = radius / d;
                    Ok(x.iter().zip(center).map(|(v, c)| c + s * (v - c)).collect())
                }
            }
            FeasibleSet::Custom(c) => {
                let y = (c.project)(x);
                if y.len() != c.dim {
                    return Err(Error::invalid("projection oracle returned a point of the wrong dimension"));
                }
                if c.has_constraints() {
                    let v = c.violation(&y);
                    if v > FEASIBILITY_TOL {
                        return Err(Error::ContractViolation { point: y, violation: v });
                    }
                }
                Ok(y)
            }
        }
    }

    /// Euclidean distance from `x` to the set.
    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        match self {
            FeasibleSet::Ball { center, radius } => Ok((dist(x, center) - radius).max(0.0)),
            _ => Ok(dist(x, &self.project(x)?)),
        }
    }

    /// Membership test: explicit constraints within [`FEASIBILITY_TOL`] when
    /// available, otherwise `distance(x) ≤ FEASIBILITY_TOL`.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        self.check_dim(x)?;
        match self {
            FeasibleSet::Box { lower, upper } => {
                Ok(x.iter().zip(lower.iter().zip(upper)).all(|(v, (l, u))| *v >= *l && *v <= *u))
            }
            FeasibleSet::Ball { center, radius } => Ok(dist(x, center) <= radius + FEASIBILITY_TOL),
            FeasibleSet::Custom(c) if c.has_constraints() => Ok(c.violation(x) <= FEASIBILITY_TOL),
            FeasibleSet::Custom(_) => Ok(self.distance(x)? <= FEASIBILITY_TOL),
        }
    }

    fn is_interior(&self, x: &[f64]) -> Result<bool> {
        self.check_dim(x)?;
        match self {
            FeasibleSet::Box { lower, upper } => {
                Ok(x.iter().zip(lower.iter().zip(upper)).all(|(v, (l, u))| *v > *l && *v < *u))
            }
            FeasibleSet::Ball { center, radius } => Ok(dist(x, center) < *radius),
            FeasibleSet::Custom(c) if !c.inequalities.is_empty() => {
                Ok(c.inequalities.iter().all(|g| g(x) < 0.0) && c.equalities.iter().all(|h| h(x).abs() <= FEASIBILITY_TOL))
            }
            FeasibleSet::Custom(_) => self.contains(x),
        }
    }

    /// Explicit constraint functions `(g_j, h_k)`, if the set has them.
    ///
    /// Boxes expose `l_i − x_i ≤ 0`, `x_i − u_i ≤ 0`; balls expose `‖x − c‖ − r ≤ 0`.
    pub fn constraints(&self) -> Option<(Vec<ConstraintFn>, Vec<ConstraintFn>)> {
        match self {
            FeasibleSet::Box { lower, upper } => Some((box_constraints(lower, upper), Vec::new())),
            FeasibleSet::Ball { center, radius } => {
                let (c, r) = (center.clone(), *radius);
                let g: ConstraintFn = Arc::new(move |x: &[f64]| dist(x, &c) - r);
                Some((vec![g], Vec::new()))
            }
            FeasibleSet::Custom(c) if c.has_constraints() => Some((c.inequalities.clone(), c.equalities.clone())),
            FeasibleSet::Custom(_) => None,
        }
    }

    /// Axis-aligned bounds, when they can be read off the description.
    pub fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            FeasibleSet::Box { lower, upper } => Some((lower.clone(), upper.clone())),
            FeasibleSet::Ball { center, radius } => Some((
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            )),
            FeasibleSet::Custom(_) => None,
        }
    }

    pub fn diameter(&self) -> Option<f64> {
        match self {
            FeasibleSet::Box { lower, upper } => Some(dist(lower, upper)),
            FeasibleSet::Ball { radius, .. } => Some(2.0 * radius),
            FeasibleSet::Custom(_) => None,
        }
    }

    /// The bounding box widened symmetrically so each side grows by `fraction` of its width.
    pub fn inflated_bounding_box(&self, fraction: f64) -> Option<FeasibleSet> {
        let (lower, upper) = self.bounding_box()?;
        let (lo, up) = lower
            .iter()
            .zip(&upper)
            .map(|(l, u)| {
                let pad = 0.5 * fraction * (u - l);
                (l - pad, u + pad)
            })
            .unzip();
        Some(FeasibleSet::Box { lower: lo, upper: up })
    }
}

fn box_constraints(lower: &[f64], upper: &[f64]) -> Vec<ConstraintFn> {
    let mut out: Vec<ConstraintFn> = Vec::with_capacity(2 * lower.len());
    for (i, (&l, &u)) in lower.iter().zip(upper).enumerate() {
        out.push(Arc::new(move |x: &[f64]| l - x[i]));
        out.push(Arc::new(move |x: &[f64]| x[i] - u));
    }
    out
}

/// The boundary point of `set` on the segment from `anchor` to `x`.
///
/// Returns `x` itself when it is feasible. Otherwise the segment is bisected
/// until the bracket `[feasible, infeasible]` is at most `tol` long and the
/// feasible end is returned.
pub fn ray_retraction(set: &FeasibleSet, anchor: &[f64], x: &[f64], tol: f64) -> Result<Vec<f64>> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::invalid(format!("retraction tolerance must be positive, got {tol}")));
    }
    if !set.contains(anchor)? {
        return Err(Error::invalid("ray-retraction anchor is not feasible"));
    }
    set.check_dim(x)?;
    if set.contains(x)? {
        return Ok(x.to_vec());
    }
    let len = dist(anchor, x);
    if len == 0.0 {
        return Ok(anchor.to_vec());
    }
    let at = |s: f64| -> Vec<f64> { anchor.iter().zip(x).map(|(a, b)| a + s * (b - a)).collect() };
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while (hi - lo) * len > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if set.contains(&at(mid))? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(at(lo))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyKind {
    ConstraintSum,
    Distance,
    RayRetraction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    pub multiplier: f64,
    /// Interior feasible point; required by [`PenaltyKind::RayRetraction`].
    pub anchor: Option<Vec<f64>>,
    /// Absolute bisection tolerance. `None` means
    /// [`RELATIVE_RETRACTION_TOL`] times the segment length.
    pub retraction_tol: Option<f64>,
}

impl PenaltySpec {
    pub fn new(kind: PenaltyKind, multiplier: f64) -> Self {
        Self { kind, multiplier, anchor: None, retraction_tol: None }
    }

    pub fn ray_retraction(anchor: Vec<f64>, multiplier: f64) -> Self {
        Self { kind: PenaltyKind::RayRetraction, multiplier, anchor: Some(anchor), retraction_tol: None }
    }

    pub fn validate(&self, set: &FeasibleSet) -> Result<()> {
        if !(self.multiplier > 0.0 && self.multiplier.is_finite()) {
            return Err(Error::config(format!("penalty multiplier must be positive, got {}", self.multiplier)));
        }
        if let Some(t) = self.retraction_tol {
            if t.is_nan() || t <= 0.0 {
                return Err(Error::config(format!("retraction tolerance must be positive, got {t}")));
            }
        }
        match self.kind {
            PenaltyKind::ConstraintSum if set.constraints().is_none() => {
                Err(Error::config("constraint-sum penalty needs a set with explicit constraint functions"))
            }
            PenaltyKind::RayRetraction => {
                let anchor =
                    self.anchor.as_ref().ok_or_else(|| Error::config("ray-retraction penalty needs an anchor point"))?;
                if !set.is_interior(anchor)? {
                    return Err(Error::config("ray-retraction anchor must be an interior feasible point"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

impl Default for PenaltySpec {
    fn default() -> Self {
        Self::new(PenaltyKind::Distance, DEFAULT_MULTIPLIER)
    }
}

/// The value of the selected exact penalty at `x`.
///
/// `f` is only ever called at feasible points.
pub fn penalize<F: Objective + ?Sized>(f: &F, set: &FeasibleSet, spec: &PenaltySpec, x: &[f64]) -> Result<f64> {
    let m = spec.multiplier;
    match spec.kind {
        PenaltyKind::ConstraintSum => {
            let (ineq, eq) = set
                .constraints()
                .ok_or_else(|| Error::config("constraint-sum penalty needs a set with explicit constraint functions"))?;
            let y = set.project(x)?;
            let viol: f64 =
                ineq.iter().map(|g| g(x).max(0.0)).sum::<f64>() + eq.iter().map(|h| h(x).abs()).sum::<f64>();
            Ok(f.eval(&y) + m * viol)
        }
        PenaltyKind::Distance => {
            let y = set.project(x)?;
            Ok(f.eval(&y) + m * dist(x, &y))
        }
        PenaltyKind::RayRetraction => {
            let anchor =
                spec.anchor.as_deref().ok_or_else(|| Error::config("ray-retraction penalty needs an anchor point"))?;
            let tol = spec.retraction_tol.unwrap_or_else(|| (RELATIVE_RETRACTION_TOL * dist(anchor, x)).max(f64::MIN_POSITIVE));
            let y = ray_retraction(set, anchor, x, tol)?;
            Ok(f.eval(&y) + m * dist(x, &y))
        }
    }
}

/// An objective bundled with its feasible set and penalty, usable as an
/// unconstrained [`Objective`].
///
/// Penalty failures (a projection oracle breaking its contract) surface as
/// NaN through [`Objective::eval`], which the estimators report as a
/// non-finite evaluation; [`Penalized::try_eval`] returns the error itself.
pub struct Penalized<F> {
    f: F,
    set: FeasibleSet,
    spec: PenaltySpec,
}

impl<F: Objective> Penalized<F> {
    pub fn new(f: F, set: FeasibleSet, spec: PenaltySpec) -> Result<Self> {
        spec.validate(&set)?;
        Ok(Self { f, set, spec })
    }

    pub fn try_eval(&self, x: &[f64]) -> Result<f64> {
        penalize(&self.f, &self.set, &self.spec, x)
    }

    pub fn set(&self) -> &FeasibleSet {
        &self.set
    }

    pub fn spec(&self) -> &PenaltySpec {
        &self.spec
    }

    pub fn inner(&self) -> &F {
        &self.f
    }
}

impl<F: Objective> Objective for Penalized<F> {
    fn eval(&self, x: &[f64]) -> f64 {
        self.try_eval(x).unwrap_or(f64::NAN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_box() -> FeasibleSet {
        FeasibleSet::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()
    }

    fn unit_ball() -> FeasibleSet {
        FeasibleSet::ball(vec![0.0, 0.0], 1.0).unwrap()
    }

    #[test]
    fn project_examples() {
        assert_eq!(unit_box().project(&[2.0, -1.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(unit_box().project(&[0.3, 0.7]).unwrap(), vec![0.3, 0.7]);
        let p = unit_ball().project(&[3.0, 4.0]).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn distance_examples() {
        assert_eq!(unit_box().distance(&[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(unit_ball().distance(&[3.0, 4.0]).unwrap(), 4.0);
        assert!((unit_box().distance(&[2.0, 2.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        assert!(matches!(unit_box().project(&[1.0]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn bad_sets_are_rejected() {
        assert!(FeasibleSet::boxed(vec![1.0], vec![0.0]).is_err());
        assert!(FeasibleSet::boxed(vec![], vec![]).is_err());
        assert!(FeasibleSet::ball(vec![0.0], 0.0).is_err());
        assert!(FeasibleSet::box_halfspace(vec![0.0, 0.0], vec![1.0, 1.0], vec![1.0, 1.0], -1.0).is_err());
    }

    #[test]
    fn custom_oracle_contract_violation() {
        // claims to project onto x ≤ 0 but returns the input unchanged
        let lying: ProjectFn = Arc::new(|x: &[f64]| x.to_vec());
        let g: ConstraintFn = Arc::new(|x: &[f64]| x[0]);
        let set = FeasibleSet::custom_with_constraints(1, lying, vec![g], vec![]);
        assert!(matches!(set.project(&[1.0]), Err(Error::ContractViolation { .. })));
        assert_eq!(set.project(&[-1.0]).unwrap(), vec![-1.0]);
    }

    #[test]
    fn custom_without_constraints_trusts_oracle() {
        let halfline: ProjectFn = Arc::new(|x: &[f64]| vec![x[0].min(0.0)]);
        let set = FeasibleSet::custom(1, halfline);
        assert_eq!(set.distance(&[2.5]).unwrap(), 2.5);
        assert!(set.contains(&[-1.0]).unwrap());
        assert!(!set.contains(&[1e-6]).unwrap());
    }

    #[test]
    fn ray_retraction_examples() {
        let ball = unit_ball();
        assert_eq!(ray_retraction(&ball, &[0.0, 0.0], &[0.2, 0.1], 1e-12).unwrap(), vec![0.2, 0.1]);
        let y = ray_retraction(&ball, &[0.0, 0.0], &[2.0, 0.0], 1e-12).unwrap();
        assert!((y[0] - 1.0).abs() <= 1e-12 && y[1] == 0.0);

        // segment (0.5,0.5)→(0.5,2) meets the top edge of the box at s = 1/3
        let y = ray_retraction(&unit_box(), &[0.5, 0.5], &[0.5, 2.0], 1e-10).unwrap();
        let exact = [0.5, 0.5 + (2.0 - 0.5) / 3.0];
        assert!(dist(&y, &exact) <= 1e-10, "{y:?}");
        assert!(unit_box().contains(&y).unwrap());
    }

    #[test]
    fn ray_retraction_degenerate_and_errors() {
        let b = unit_box();
        assert!(ray_retraction(&b, &[2.0, 2.0], &[3.0, 3.0], 1e-10).is_err());
        assert!(ray_retraction(&b, &[0.5, 0.5], &[3.0, 3.0], 0.0).is_err());
        // anchor on the boundary, x = anchor
        assert_eq!(ray_retraction(&b, &[1.0, 0.5], &[1.0, 0.5], 1e-10).unwrap(), vec![1.0, 0.5]);
    }

    #[test]
    fn penalize_examples() {
        let f = |x: &[f64]| x[0];
        let spec = PenaltySpec::new(PenaltyKind::Distance, 1.0);
        assert_eq!(penalize(&f, &unit_box(), &spec, &[2.0, 0.5]).unwrap(), 2.0);

        let zero = |_: &[f64]| 0.0;
        let spec = PenaltySpec::ray_retraction(vec![0.0, 0.0], 10.0);
        let v = penalize(&zero, &unit_ball(), &spec, &[2.0, 0.0]).unwrap();
        assert!((v - 10.0).abs() < 1e-8, "{v}");
    }

    #[test]
    fn penalties_agree_with_f_on_feasible_points() {
        let f = |x: &[f64]| (x[0] - 0.2).abs() + x[1] * x[1];
        let set = unit_box();
        for kind in [PenaltyKind::ConstraintSum, PenaltyKind::Distance, PenaltyKind::RayRetraction] {
            let mut spec = PenaltySpec::new(kind, 3.0);
            spec.anchor = Some(vec![0.5, 0.5]);
            for x in [[0.0, 0.0], [0.3, 0.9], [1.0, 1.0], [0.5, 0.5]] {
                assert_eq!(penalize(&f, &set, &spec, &x).unwrap(), f(&x));
            }
        }
    }

    #[test]
    fn f_is_never_called_outside_the_set() {
        let set = unit_ball();
        let f = |x: &[f64]| {
            assert!(norm(x) <= 1.0 + 1e-12, "evaluated outside: {x:?}");
            x[0]
        };
        for kind in [PenaltyKind::ConstraintSum, PenaltyKind::Distance, PenaltyKind::RayRetraction] {
            let mut spec = PenaltySpec::new(kind, 1.0);
            spec.anchor = Some(vec![0.0, 0.0]);
            for x in [[5.0, -3.0], [1.0001, 0.0], [-0.2, 7.0]] {
                penalize(&f, &set, &spec, &x).unwrap();
            }
        }
    }

    #[test]
    fn spec_validation() {
        let bare = FeasibleSet::custom(1, Arc::new(|x: &[f64]| vec![x[0].min(0.0)]));
        let spec = PenaltySpec::new(PenaltyKind::ConstraintSum, 1.0);
        assert!(matches!(spec.validate(&bare), Err(Error::Config(_))));
        assert!(matches!(penalize(&|_: &[f64]| 0.0, &bare, &spec, &[1.0]), Err(Error::Config(_))));
        assert!(PenaltySpec::new(PenaltyKind::Distance, 0.0).validate(&unit_box()).is_err());
        assert!(PenaltySpec::new(PenaltyKind::RayRetraction, 1.0).validate(&unit_box()).is_err());
        // boundary anchor is not interior
        assert!(PenaltySpec::ray_retraction(vec![1.0, 0.5], 1.0).validate(&unit_box()).is_err());
        assert!(PenaltySpec::ray_retraction(vec![0.5, 0.5], 1.0).validate(&unit_box()).is_ok());
    }

    #[test]
    fn box_halfspace_projection() {
        // [0,1]² ∩ {x + y ≤ 1}
        let set = FeasibleSet::box_halfspace(vec![0.0, 0.0], vec![1.0, 1.0], vec![1.0, 1.0], 1.0).unwrap();
        let p = set.project(&[1.0, 1.0]).unwrap();
        assert!(dist(&p, &[0.5, 0.5]) < 1e-12, "{p:?}");
        let p = set.project(&[3.0, -1.0]).unwrap();
        assert!(dist(&p, &[1.0, 0.0]) < 1e-12, "{p:?}");
        assert_eq!(set.project(&[0.2, 0.3]).unwrap(), vec![0.2, 0.3]);
    }

    fn arb_point() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-4.0..4.0f64, 2)
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_nonexpansive(x in arb_point(), y in arb_point()) {
            let hs = FeasibleSet::box_halfspace(vec![-1.0, 0.0], vec![2.0, 1.5], vec![1.0, 2.0], 1.0).unwrap();
            for set in [unit_box(), unit_ball(), hs] {
                let px = set.project(&x).unwrap();
                let py = set.project(&y).unwrap();
                let ppx = set.project(&px).unwrap();
                prop_assert!(dist(&px, &ppx) <= 1e-12);
                prop_assert!(dist(&px, &py) <= dist(&x, &y) + 1e-12);
                prop_assert!(set.contains(&px).unwrap());
                let d = set.distance(&x).unwrap();
                prop_assert!((d - dist(&x, &px)).abs() <= 1e-12);
                prop_assert_eq!(d <= FEASIBILITY_TOL, set.contains(&x).unwrap());
            }
        }

        #[test]
        fn penalties_dominate_f_at_projection(x in arb_point()) {
            let f = |x: &[f64]| x[0] - 2.0 * x[1];
            for set in [unit_box(), unit_ball()] {
                let fp = f(&set.project(&x).unwrap());
                let feasible = set.contains(&x).unwrap();
                for kind in [PenaltyKind::ConstraintSum, PenaltyKind::Distance] {
                    let v = penalize(&f, &set, &PenaltySpec::new(kind, 0.5), &x).unwrap();
                    prop_assert!(v >= fp);
                    prop_assert_eq!(v == fp, feasible);
                }
            }
        }

        #[test]
        fn retraction_lands_on_the_boundary(x in arb_point()) {
            let set = unit_ball();
            let tol = 1e-9;
            let y = ray_retraction(&set, &[0.1, -0.2], &x, tol).unwrap();
            prop_assert!(set.contains(&y).unwrap());
            if !set.contains(&x).unwrap() {
                prop_assert!((1.0 - norm(&y)).abs() <= tol);
            }
        }
    }
}
