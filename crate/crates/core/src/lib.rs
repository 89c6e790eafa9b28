//! Derivative-free constrained global optimization by successive stochastic
//! smoothing.
//!
//! A constrained problem `min f(x), x ∈ D` is first turned into an
//! unconstrained one with an exact penalty ([`penalty`]). The penalized
//! function is then minimized over a decreasing sequence of kernel-smoothed
//! approximations ([`continuation`]), each stage running projected stochastic
//! finite-difference gradient descent with trajectory averaging
//! ([`optimizer`]) on gradients estimated from random two-point differences
//! ([`smoothing`]).
//!
//! The function `f` is never evaluated outside `D`: every penalty evaluates it
//! at a feasible surrogate point and adds a multiple of the constraint
//! violation.
//!
//! ```
//! use smoothopt::penalty::{FeasibleSet, PenaltyKind, PenaltySpec, Penalized};
//! use smoothopt::continuation::{successive_smoothing, SmoothingPlan};
//!
//! // minimize x0 + x1 on the unit disk
//! let disk = FeasibleSet::ball(vec![0.0, 0.0], 1.0).unwrap();
//! let f = |x: &[f64]| x[0] + x[1];
//! let penalized = Penalized::new(f, disk.clone(), PenaltySpec::new(PenaltyKind::Distance, 10.0)).unwrap();
//! let bounds = FeasibleSet::boxed(vec![-1.5, -1.5], vec![1.5, 1.5]).unwrap();
//! let plan = SmoothingPlan::geometric(1.0, 0.5, 6, 400, 4).unwrap();
//! let out = successive_smoothing(&penalized, &bounds, &[0.0, 0.0], &plan, 7).unwrap();
//! assert!(out.best_value < -1.3);
//! ```

pub mod continuation;
pub mod error;
pub mod harness;
pub mod optimizer;
pub mod penalty;
pub mod problems;
pub mod rng;
pub mod smoothing;
pub mod vector;

pub use error::{Error, Result};

/// A black-box scalar function of a point.
///
/// Implementations must be free of side effects: the estimators may call
/// them from several threads at once.
pub trait Objective: Sync {
    fn eval(&self, x: &[f64]) -> f64;
}

impl<F> Objective for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn eval(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

impl Objective for Box<dyn Objective + Send> {
    fn eval(&self, x: &[f64]) -> f64 {
        (**self).eval(x)
    }
}
