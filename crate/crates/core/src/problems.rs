//! Built-in test problems.
//!
//! * The largest small polygon: maximize the area of an `n`-gon of diameter
//!   at most one, written in polar coordinates around the first vertex, with
//!   its constraints folded into a nested penalty ([`PolygonProblem`]).
//! * Calibration functions with known minima and, for the discontinuous
//!   step, a closed-form Gaussian smoothing ([`Calibration`]).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::penalty::FeasibleSet;
use crate::Objective;

/// Area of the polygon with vertices at polar radii `r` and angle increments
/// `phi` (vertex `i` sits at angle `phi_1 + … + phi_i`):
/// `½ Σ_{i=1}^{n−1} r_{i+1} r_i sin φ_{i+1}`.
pub fn polygon_area(r: &[f64], phi: &[f64]) -> Result<f64> {
    if r.len() != phi.len() {
        return Err(Error::invalid(format!("radii ({}) and angles ({}) differ in length", r.len(), phi.len())));
    }
    Ok(area(r, phi, 1.0))
}

fn area(r: &[f64], phi: &[f64], angle_scale: f64) -> f64 {
    0.5 * r.windows(2).zip(&phi[1..]).map(|(w, p)| w[1] * w[0] * (angle_scale * p).sin()).sum::<f64>()
}

/// How the pairwise diameter violations enter the penalty.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiameterPenalty {
    /// `max{0, Σ_{i<j} (d_ij − 1)}`. Short pairs offset long ones, so
    /// optimizers can reach infeasible polygons with area above the ideal.
    Aggregate,
    /// `Σ_{i<j} max{0, d_ij − 1}`
    #[default]
    PerPair,
}

/// The largest small polygon with `n` vertices and penalty coefficients
/// `p1` (angle sum), `p2` (diameter) and `p3` (box violation).
///
/// Decision vectors are `z = (r_1..r_n, φ_1..φ_n)` with `r ∈ [0,1]ⁿ` and
/// `φ ∈ [0, 2π/n]ⁿ`; `r_1 = φ_1 = 0` are pinned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolygonProblem {
    pub n: usize,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    #[serde(default)]
    pub diameter: DiameterPenalty,
}

impl PolygonProblem {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid(format!("a polygon needs at least 3 vertices, got {n}")));
        }
        Ok(Self { n, p1: 1.0, p2: 1.0, p3: 10.0, diameter: DiameterPenalty::PerPair })
    }

    pub fn angle_cap(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Best known area: `√3/4` for triangles, `1/2` for quadrilaterals and the
    /// limit `π/4` otherwise.
    pub fn ideal_value(&self) -> f64 {
        match self.n {
            3 => 3f64.sqrt() / 4.0,
            4 => 0.5,
            _ => PI / 4.0,
        }
    }

    /// Projection of `z` onto the variable boxes, pinned coordinates included.
    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n;
        let cap = self.angle_cap();
        z.iter()
            .enumerate()
            .map(|(i, v)| match i {
                0 => 0.0,
                i if i < n => v.clamp(0.0, 1.0),
                i if i == n => 0.0,
                _ => v.clamp(0.0, cap),
            })
            .collect()
    }

    /// Sum of pairwise diameter terms at `(r, φ)`.
    fn diameter_violation(&self, r: &[f64], phi: &[f64]) -> f64 {
        let n = self.n;
        let mut agg = 0.0;
        for i in 0..n {
            let mut angle = 0.0;
            for j in i + 1..n {
                angle += phi[j];
                let d2 = r[i] * r[i] + r[j] * r[j] - 2.0 * r[i] * r[j] * angle.cos();
                let excess = d2.max(0.0).sqrt() - 1.0;
                agg += match self.diameter {
                    DiameterPenalty::Aggregate => excess,
                    DiameterPenalty::PerPair => excess.max(0.0),
                };
            }
        }
        agg.max(0.0)
    }

    /// The nested penalty, to be maximized; equals the area on feasible points.
    ///
    /// 1. `(r̂, φ̂)` is the projection onto the boxes.
    /// 2. If `Σφ̂ > π` the area is taken at the rescaled angles `λφ̂`,
    ///    `λ = π / Σφ̂`, and `p1 (Σφ̂ − π)` is subtracted.
    /// 3. `p2` times the diameter violation at `(r̂, φ̂)` is subtracted.
    /// 4. `p3 (‖r − r̂‖ + ‖φ − φ̂‖)` is subtracted.
    pub fn penalized(&self, z: &[f64]) -> Result<f64> {
        let n = self.n;
        if z.len() != 2 * n {
            return Err(Error::invalid(format!("expected a decision vector of length {}, got {}", 2 * n, z.len())));
        }
        let zh = self.project(z);
        let (r, phi) = zh.split_at(n);
        let total: f64 = phi.iter().sum();
        let f1 = if total <= PI { area(r, phi, 1.0) } else { area(r, phi, PI / total) - self.p1 * (total - PI) };
        let f2 = f1 - self.p2 * self.diameter_violation(r, phi);
        let (dr, dphi) = z
            .iter()
            .zip(&zh)
            .enumerate()
            .fold((0.0, 0.0), |(a, b), (i, (v, p))| if i < n { (a + (v - p) * (v - p), b) } else { (a, b + (v - p) * (v - p)) });
        Ok(f2 - self.p3 * (dr.sqrt() + dphi.sqrt()))
    }

    /// Feasibility in the original constrained sense, with tolerance `tol`.
    pub fn is_feasible(&self, z: &[f64], tol: f64) -> bool {
        let n = self.n;
        if z.len() != 2 * n || z[0].abs() > tol || z[n].abs() > tol {
            return false;
        }
        let (r, phi) = z.split_at(n);
        let in_box = r.iter().all(|v| *v >= -tol && *v <= 1.0 + tol)
            && phi.iter().all(|v| *v >= -tol && *v <= self.angle_cap() + tol);
        if !in_box || phi.iter().sum::<f64>() > PI + tol {
            return false;
        }
        (0..n).all(|i| {
            let mut angle = 0.0;
            (i + 1..n).all(|j| {
                angle += phi[j];
                (r[i] * r[i] + r[j] * r[j] - 2.0 * r[i] * r[j] * angle.cos()).max(0.0).sqrt() <= 1.0 + tol
            })
        })
    }

    /// Length of the free decision vector seen by the optimizer (pinned coordinates removed).
    pub fn reduced_dim(&self) -> usize {
        2 * self.n - 2
    }

    /// Full `z` from the free coordinates `(r_2..r_n, φ_2..φ_n)`.
    pub fn expand(&self, w: &[f64]) -> Vec<f64> {
        let m = self.n - 1;
        let mut z = Vec::with_capacity(2 * self.n);
        z.push(0.0);
        z.extend_from_slice(&w[..m]);
        z.push(0.0);
        z.extend_from_slice(&w[m..]);
        z
    }

    /// Box of the free coordinates.
    pub fn reduced_box(&self) -> FeasibleSet {
        let m = self.n - 1;
        let mut upper = vec![1.0; m];
        upper.extend(std::iter::repeat_n(self.angle_cap(), m));
        FeasibleSet::Box { lower: vec![0.0; 2 * m], upper }
    }

    /// Centre of the free-coordinate box.
    pub fn reduced_start(&self) -> Vec<f64> {
        let m = self.n - 1;
        let mut w = vec![0.5; m];
        w.extend(std::iter::repeat_n(0.5 * self.angle_cap(), m));
        w
    }

    /// Minimization form over the free coordinates: `w ↦ −F(expand(w))`.
    pub fn objective(&self) -> PolygonObjective {
        PolygonObjective { problem: *self }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PolygonObjective {
    pub problem: PolygonProblem,
}

impl Objective for PolygonObjective {
    fn eval(&self, w: &[f64]) -> f64 {
        if w.len() != self.problem.reduced_dim() {
            return f64::NAN;
        }
        -self.problem.penalized(&self.problem.expand(w)).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationKind {
    /// `‖x‖₁`
    L1Norm,
    /// `max_i |x_i|`
    MaxCoordinate,
    /// `min{0.05 + |x + 1|, |x − 1|}`: a local well at −1 and the global one at +1.
    TwoWell1d,
    /// `1` for `x < 0`, `0` for `x ≥ 0`: lower semicontinuous with a jump at 0.
    LscStep1d,
}

impl CalibrationKind {
    pub const ALL: [CalibrationKind; 4] =
        [CalibrationKind::L1Norm, CalibrationKind::MaxCoordinate, CalibrationKind::TwoWell1d, CalibrationKind::LscStep1d];

    pub fn name(&self) -> &'static str {
        match self {
            CalibrationKind::L1Norm => "l1-norm",
            CalibrationKind::MaxCoordinate => "max-coordinate",
            CalibrationKind::TwoWell1d => "two-well-1d",
            CalibrationKind::LscStep1d => "lsc-step-1d",
        }
    }
}

impl std::str::FromStr for CalibrationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CalibrationKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown calibration function '{s}'")))
    }
}

/// A closed-form test function with a known minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub kind: CalibrationKind,
    pub dim: usize,
    pub minimizer: Vec<f64>,
    pub minimum: f64,
    /// Euclidean Lipschitz constant, when finite.
    pub lipschitz: Option<f64>,
}

/// Looks up a calibration function by name.
pub fn calibration(name: &str, dim: usize) -> Result<Calibration> {
    let kind: CalibrationKind = name.parse()?;
    Calibration::new(kind, dim)
}

impl Calibration {
    pub fn new(kind: CalibrationKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        let one_d = matches!(kind, CalibrationKind::TwoWell1d | CalibrationKind::LscStep1d);
        if one_d && dim != 1 {
            return Err(Error::invalid(format!("{} is one-dimensional", kind.name())));
        }
        let (minimizer, lipschitz) = match kind {
            CalibrationKind::L1Norm => (vec![0.0; dim], Some((dim as f64).sqrt())),
            CalibrationKind::MaxCoordinate => (vec![0.0; dim], Some(1.0)),
            CalibrationKind::TwoWell1d => (vec![1.0], Some(1.0)),
            // any x ≥ 0 attains the minimum
            CalibrationKind::LscStep1d => (vec![0.0], None),
        };
        Ok(Calibration { kind, dim, minimizer, minimum: 0.0, lipschitz })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self.kind {
            CalibrationKind::L1Norm => x.iter().map(|v| v.abs()).sum(),
            CalibrationKind::MaxCoordinate => x.iter().fold(0.0, |m, v| m.max(v.abs())),
            CalibrationKind::TwoWell1d => (0.05 + (x[0] + 1.0).abs()).min((x[0] - 1.0).abs()),
            CalibrationKind::LscStep1d => {
                if x[0] < 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Closed-form Gaussian smoothing `E F(x + hη)`, where one is known.
    ///
    /// For the step this is `Φ(−x/h)`; for `‖x‖₁` it is
    /// `Σ (x_i (2Φ(x_i/h) − 1) + 2h φ(x_i/h))`.
    pub fn gaussian_smoothed(&self, x: &[f64], h: f64) -> Option<f64> {
        match self.kind {
            CalibrationKind::LscStep1d => Some(normal_cdf(-x[0] / h)),
            CalibrationKind::L1Norm => Some(
                x.iter()
                    .map(|&v| {
                        let s = v / h;
                        v * (2.0 * normal_cdf(s) - 1.0) + 2.0 * h * (-0.5 * s * s).exp() / (2.0 * PI).sqrt()
                    })
                    .sum(),
            ),
            _ => None,
        }
    }
}

impl Objective for Calibration {
    fn eval(&self, x: &[f64]) -> f64 {
        self.value(x)
    }
}

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}
