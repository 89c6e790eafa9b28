//! Problems by name.

use crate::penalty::{FeasibleSet, PenaltyKind, PenaltySpec, Penalized};
use crate::problems::{Calibration, CalibrationKind, DiameterPenalty, PolygonProblem};
use crate::Objective;

use super::config::{ConstraintConfig, SetConfig};
use super::config::KeyError;

/// Default half-width of the iterate box for unconstrained calibration problems.
pub const DEFAULT_HALF_WIDTH: f64 = 3.0;
/// Relative inflation of a feasible set's bounding box when it serves as `X`.
pub const REGION_INFLATION: f64 = 0.1;

/// Every name the registry knows.
pub fn problem_names() -> Vec<&'static str> {
    let mut names = vec!["polygon"];
    names.extend(CalibrationKind::ALL.iter().map(|k| k.name()));
    names
}

/// A problem ready to be minimized.
pub struct Instance {
    pub name: String,
    pub n: usize,
    /// Minimization form: the polygon's penalized area enters with a minus sign.
    pub objective: Box<dyn Objective + Send>,
    /// Iterate region `X`.
    pub region: FeasibleSet,
    pub start: Vec<f64>,
    /// Reported values are negated objective values.
    pub maximize: bool,
    /// Known optimum in the problem's own sense.
    pub ideal: Option<f64>,
    /// Known Lipschitz constant of the objective on `X`, if any.
    pub lipschitz: Option<f64>,
}

impl Instance {
    /// Objective value in the problem's own sense.
    pub fn natural(&self, v: f64) -> f64 {
        if self.maximize {
            -v
        } else {
            v
        }
    }

    pub fn dim(&self) -> usize {
        self.start.len()
    }
}

pub fn build_set(set: &SetConfig) -> crate::Result<FeasibleSet> {
    match set {
        SetConfig::Box { lower, upper } => FeasibleSet::boxed(lower.clone(), upper.clone()),
        SetConfig::Ball { center, radius } => FeasibleSet::ball(center.clone(), *radius),
        SetConfig::BoxHalfspace { lower, upper, normal, offset } => {
            FeasibleSet::box_halfspace(lower.clone(), upper.clone(), normal.clone(), *offset)
        }
    }
}

fn center(set: &FeasibleSet) -> Vec<f64> {
    match set {
        FeasibleSet::Ball { center, .. } => center.clone(),
        other => {
            let (lo, hi) = other.bounding_box().expect("regions are boxes or balls");
            lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect()
        }
    }
}

/// Builds the named problem with `n` vertices (polygon) or dimensions.
pub fn instance(
    name: &str,
    n: usize,
    diameter: DiameterPenalty,
    constraint: Option<&ConstraintConfig>,
    region: Option<&SetConfig>,
    start: Option<&[f64]>,
) -> Result<Instance, KeyError> {
    let region = match region {
        Some(SetConfig::BoxHalfspace { .. }) => {
            return Err(KeyError::new("region", "the iterate region must be a box or a ball"));
        }
        Some(r) => Some(build_set(r).map_err(|e| KeyError::new("region", e.to_string()))?),
        None => None,
    };
    let mut inst = if name == "polygon" {
        if constraint.is_some() {
            return Err(KeyError::new("constraint", "the polygon problem carries its own constraints"));
        }
        let mut problem = PolygonProblem::new(n).map_err(|e| KeyError::new("problem.n", e.to_string()))?;
        problem.diameter = diameter;
        let region = match region {
            Some(r) => r,
            None => problem.reduced_box().inflated_bounding_box(REGION_INFLATION).expect("box"),
        };
        Instance {
            name: name.into(),
            n,
            start: problem.reduced_start(),
            objective: Box::new(problem.objective()),
            region,
            maximize: true,
            ideal: Some(problem.ideal_value()),
            // the box violation is charged at rate p3, which dominates the slope
            lipschitz: Some(problem.p3),
        }
    } else {
        let kind: CalibrationKind = name.parse().map_err(|_| {
            KeyError::new("problem.name", format!("unknown problem '{name}' (known: {})", problem_names().join(", ")))
        })?;
        let cal = Calibration::new(kind, n).map_err(|e| KeyError::new("problem.n", e.to_string()))?;
        match constraint {
            None => {
                let region = match region {
                    Some(r) => r,
                    None => FeasibleSet::boxed(vec![-DEFAULT_HALF_WIDTH; n], vec![DEFAULT_HALF_WIDTH; n])
                        .expect("valid box"),
                };
                Instance {
                    name: name.into(),
                    n,
                    start: center(&region),
                    ideal: Some(cal.minimum),
                    lipschitz: cal.lipschitz,
                    objective: Box::new(cal),
                    region,
                    maximize: false,
                }
            }
            Some(c) => {
                let set = build_set(&c.set).map_err(|e| KeyError::new("constraint.set", e.to_string()))?;
                if set.dim() != n {
                    return Err(KeyError::new(
                        "constraint.set",
                        format!("set has dimension {}, problem has {n}", set.dim()),
                    ));
                }
                let spec = PenaltySpec {
                    kind: c.penalty,
                    multiplier: c.multiplier,
                    anchor: c.anchor.clone(),
                    retraction_tol: None,
                };
                let ideal = match set.contains(&cal.minimizer) {
                    Ok(true) => Some(cal.minimum),
                    _ => None,
                };
                let lipschitz = match c.penalty {
                    PenaltyKind::Distance => cal.lipschitz.map(|l| l + 2.0 * c.multiplier),
                    _ => None,
                };
                let region = match region {
                    Some(r) => r,
                    None => set.inflated_bounding_box(REGION_INFLATION).expect("boxes and balls are bounded"),
                };
                let penalized =
                    Penalized::new(cal, set, spec).map_err(|e| KeyError::new("constraint", e.to_string()))?;
                Instance {
                    name: name.into(),
                    n,
                    start: center(&region),
                    objective: Box::new(penalized),
                    region,
                    maximize: false,
                    ideal,
                    lipschitz,
                }
            }
        }
    };
    if inst.region.dim() != inst.start.len() {
        return Err(KeyError::new(
            "region",
            format!("region has dimension {}, problem has {}", inst.region.dim(), inst.start.len()),
        ));
    }
    if let Some(s) = start {
        if s.len() != inst.start.len() {
            return Err(KeyError::new(
                "problem.start",
                format!("start has length {}, expected {}", s.len(), inst.start.len()),
            ));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(KeyError::new("problem.start", "start coordinates must be finite"));
        }
        if !inst.region.contains(s).unwrap_or(false) {
            return Err(KeyError::new("problem.start", "start lies outside the iterate region"));
        }
        inst.start = s.to_vec();
    }
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_name_builds() {
        for name in problem_names() {
            let n = if name == "polygon" { 4 } else if name.ends_with("1d") { 1 } else { 3 };
            let inst = instance(name, n, DiameterPenalty::default(), None, None, None).unwrap();
            let v = inst.objective.eval(&inst.start);
            assert!(v.is_finite(), "{name}");
            assert!(inst.region.contains(&inst.start).unwrap());
        }
        assert_eq!(instance("nope", 2, DiameterPenalty::default(), None, None, None).err().unwrap().key, "problem.name");
    }

    #[test]
    fn polygon_region_and_sign() {
        let inst = instance("polygon", 4, DiameterPenalty::default(), None, None, None).unwrap();
        assert_eq!(inst.dim(), 6);
        assert!(inst.maximize);
        assert_eq!(inst.ideal, Some(0.5));
        // unit-diagonal square, free coordinates only
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let q = std::f64::consts::FRAC_PI_4;
        let v = inst.objective.eval(&[h, 1.0, h, q, q, q]);
        assert!((inst.natural(v) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constrained_calibration() {
        let c = ConstraintConfig {
            set: SetConfig::Ball { center: vec![2.0, 0.0], radius: 1.0 },
            penalty: PenaltyKind::Distance,
            multiplier: 10.0,
            anchor: None,
        };
        let inst = instance("l1-norm", 2, DiameterPenalty::default(), Some(&c), None, None).unwrap();
        assert_eq!(inst.ideal, None);
        assert_eq!(inst.start, vec![2.0, 0.0]);
        // f at the projection (1, 0) plus 10 × distance 1
        assert!((inst.objective.eval(&[0.0, 0.0]) - 11.0).abs() < 1e-12);
    }
}
