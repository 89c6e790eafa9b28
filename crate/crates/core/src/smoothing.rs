//! Kernel smoothing and two-point stochastic gradient estimates.
//!
//! For a kernel density `μ` and width `h` the smoothed function is
//! `F_h(x) = E F(x + h z)`, `z ~ μ`. Two kernels are supported:
//!
//! * [`KernelKind::Ball`]: `z` uniform in the unit Euclidean ball. Its
//!   gradient is `n/(2h) E (F(x + hy) − F(x − hy)) y` with `y` uniform on the
//!   unit sphere.
//! * [`KernelKind::Gaussian`]: `z` standard normal. Its gradient is
//!   `1/(2h) E (F(x + hη) − F(x − hη)) η` with the same `η ~ N(0, I)`.
//!
//! Each sample of a batch draws from its own lane of a [`Stream`], so batches
//! can be evaluated in parallel without changing the result.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Rng, Stream};
use crate::vector::{axpy, norm};
use crate::Objective;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    /// Uniform on the unit ball; gradient directions uniform on the unit sphere.
    #[serde(alias = "sphere", alias = "sphere-uniform")]
    Ball,
    /// Standard normal.
    #[serde(alias = "gaussian-standard")]
    Gaussian,
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ball" | "sphere" | "sphere-uniform" => Ok(KernelKind::Ball),
            "gaussian" | "gaussian-standard" => Ok(KernelKind::Gaussian),
            other => Err(Error::invalid(format!("unknown kernel '{other}' (expected ball or gaussian)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub kind: KernelKind,
    pub h: f64,
}

impl Kernel {
    pub fn new(kind: KernelKind, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid(format!("smoothing width must be positive, got {h}")));
        }
        Ok(Self { kind, h })
    }

    pub fn ball(h: f64) -> Result<Self> {
        Self::new(KernelKind::Ball, h)
    }

    pub fn gaussian(h: f64) -> Result<Self> {
        Self::new(KernelKind::Gaussian, h)
    }
}

/// How the samples of one batch are evaluated. The result is identical either way.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Exec {
    #[default]
    Serial,
    Parallel,
}

fn standard_normal_vec(dim: usize, rng: &mut Rng) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// A random direction for the two-point estimator: unit-sphere uniform for
/// [`KernelKind::Ball`], standard normal for [`KernelKind::Gaussian`].
pub fn sample_direction(kind: KernelKind, dim: usize, rng: &mut Rng) -> Vec<f64> {
    assert!(dim >= 1, "dimension must be at least 1");
    match kind {
        KernelKind::Gaussian => standard_normal_vec(dim, rng),
        KernelKind::Ball => loop {
            let v = standard_normal_vec(dim, rng);
            let r = norm(&v);
            if r > 0.0 && r.is_finite() {
                break v.into_iter().map(|c| c / r).collect();
            }
        },
    }
}

/// A draw from the kernel density itself (uniform in the ball, or standard normal).
pub fn sample_offset(kind: KernelKind, dim: usize, rng: &mut Rng) -> Vec<f64> {
    match kind {
        KernelKind::Gaussian => standard_normal_vec(dim, rng),
        KernelKind::Ball => {
            let dir = sample_direction(kind, dim, rng);
            let u: f64 = rng.random();
            let r = u.powf(1.0 / dim as f64);
            dir.into_iter().map(|c| c * r).collect()
        }
    }
}

fn checked<F: Objective + ?Sized>(f: &F, point: Vec<f64>) -> Result<(f64, Vec<f64>)> {
    let value = f.eval(&point);
    if value.is_finite() {
        Ok((value, point))
    } else {
        Err(Error::NonFinite { point, value })
    }
}

fn run_lanes<T, G>(count: usize, exec: Exec, lane: G) -> Result<Vec<T>>
where
    T: Send,
    G: Fn(u64) -> Result<T> + Sync + Send,
{
    match exec {
        Exec::Serial => (0..count as u64).map(&lane).collect(),
        // collect keeps lane order, and the first failing lane wins, as in serial
        Exec::Parallel => (0..count as u64).into_par_iter().map(&lane).collect::<Vec<_>>().into_iter().collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    /// Batch mean of the single-sample vectors `(F(x+hy) − F(x−hy)) / (2h) · y`.
    pub direction: Vec<f64>,
    /// Unbiased estimate of `∇F_h(x)`: `n · direction` for the ball kernel,
    /// `direction` for the Gaussian kernel.
    pub unbiased_gradient: Vec<f64>,
    pub samples_used: usize,
    pub h: f64,
    /// Lowest objective value among the `2K` probe points, with its location.
    pub best_probe: (f64, Vec<f64>),
}

impl GradientEstimate {
    pub fn evaluations(&self) -> usize {
        2 * self.samples_used
    }
}

struct LaneSample {
    contribution: Vec<f64>,
    best: (f64, Vec<f64>),
}

/// Batch two-point estimate of the smoothed gradient at `x` from `batch`
/// independent directions. Performs exactly `2 * batch` evaluations of `f`.
pub fn grad_estimate<F: Objective + ?Sized>(
    f: &F,
    x: &[f64],
    kernel: Kernel,
    batch: usize,
    stream: Stream,
    exec: Exec,
) -> Result<GradientEstimate> {
    if batch == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    if x.is_empty() {
        return Err(Error::invalid("point must have dimension at least 1"));
    }
    let dim = x.len();
    let h = kernel.h;
    let lanes = run_lanes(batch, exec, |k| {
        let mut rng = stream.lane(k);
        let y = sample_direction(kernel.kind, dim, &mut rng);
        let (fp, xp) = checked(f, axpy(x, h, &y))?;
        let (fm, xm) = checked(f, axpy(x, -h, &y))?;
        let c = (fp - fm) / (2.0 * h);
        let best = if fm < fp { (fm, xm) } else { (fp, xp) };
        Ok(LaneSample { contribution: y.iter().map(|v| c * v).collect(), best })
    })?;

    let mut sum = vec![0.0; dim];
    let mut best: Option<(f64, Vec<f64>)> = None;
    for lane in lanes {
        for (s, c) in sum.iter_mut().zip(&lane.contribution) {
            *s += c;
        }
        if best.as_ref().is_none_or(|b| lane.best.0 < b.0) {
            best = Some(lane.best);
        }
    }
    let direction: Vec<f64> = sum.into_iter().map(|s| s / batch as f64).collect();
    let unbiased_gradient = match kernel.kind {
        KernelKind::Ball => direction.iter().map(|v| v * dim as f64).collect(),
        KernelKind::Gaussian => direction.clone(),
    };
    Ok(GradientEstimate { direction, unbiased_gradient, samples_used: batch, h, best_probe: best.expect("batch >= 1") })
}

/// Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

impl Estimate {
    /// Welford accumulation in the given order; a constant sequence yields
    /// exactly that constant with zero error.
    pub fn from_values<I: IntoIterator<Item = f64>>(values: I) -> Self {
        let (mut n, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
        for v in values {
            n += 1;
            let delta = v - mean;
            mean += delta / n as f64;
            m2 += delta * (v - mean);
        }
        let std_err = if n > 1 { (m2 / (n - 1) as f64 / n as f64).sqrt() } else { 0.0 };
        Estimate { mean, std_err, samples: n }
    }
}

/// Monte-Carlo estimate of `F_h(x) = E F(x + h z)` from `samples` kernel draws.
/// Performs exactly `samples` evaluations of `f`.
pub fn smoothed_value<F: Objective + ?Sized>(
    f: &F,
    x: &[f64],
    kernel: Kernel,
    samples: usize,
    stream: Stream,
    exec: Exec,
) -> Result<Estimate> {
    if samples == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let values = run_lanes(samples, exec, |k| {
        let mut rng = stream.lane(k);
        let z = sample_offset(kernel.kind, x.len(), &mut rng);
        checked(f, axpy(x, kernel.h, &z)).map(|(v, _)| v)
    })?;
    Ok(Estimate::from_values(values))
}

/// Empirical mean of the squared norm of single-sample two-point estimates,
/// `‖(F(x+hy) − F(x−hy)) / (2h) · y‖²`, over `probes` independent directions.
///
/// For an `L`-Lipschitz `F` this is at most `C L² / n` with the sphere
/// directions of the ball kernel (`C` around 1) and at most `n L²` with
/// Gaussian directions.
pub fn second_moment<F: Objective + ?Sized>(
    f: &F,
    x: &[f64],
    kernel: Kernel,
    probes: usize,
    stream: Stream,
    exec: Exec,
) -> Result<Estimate> {
    if probes == 0 {
        return Err(Error::invalid("probe count must be at least 1"));
    }
    let h = kernel.h;
    let values = run_lanes(probes, exec, |k| {
        let mut rng = stream.lane(k);
        let y = sample_direction(kernel.kind, x.len(), &mut rng);
        let (fp, _) = checked(f, axpy(x, h, &y))?;
        let (fm, _) = checked(f, axpy(x, -h, &y))?;
        let c = (fp - fm) / (2.0 * h);
        Ok(c * c * y.iter().map(|v| v * v).sum::<f64>())
    })?;
    Ok(Estimate::from_values(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn stream() -> Stream {
        Stream::new(2024, 0)
    }

    #[test]
    fn sphere_directions_are_unit() {
        let mut rng = stream().lane(0);
        for dim in [1, 2, 5, 17] {
            for _ in 0..200 {
                let y = sample_direction(KernelKind::Ball, dim, &mut rng);
                assert!((norm(&y) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_dimensional_sphere_is_a_fair_sign() {
        let mut rng = stream().lane(1);
        let n = 20_000;
        let mut plus = 0;
        for _ in 0..n {
            let y = sample_direction(KernelKind::Ball, 1, &mut rng);
            assert!(y[0] == 1.0 || y[0] == -1.0);
            plus += (y[0] > 0.0) as usize;
        }
        let p = plus as f64 / n as f64;
        assert!((p - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt(), "{p}");
    }

    #[test]
    fn gaussian_directions_are_standard_and_reproducible() {
        let a = sample_direction(KernelKind::Gaussian, 2, &mut stream().lane(9));
        let b = sample_direction(KernelKind::Gaussian, 2, &mut stream().lane(9));
        assert_eq!(a, b);

        let mut rng = stream().lane(3);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_direction(KernelKind::Gaussian, 1, &mut rng)[0]).collect();
        let e = Estimate::from_values(xs.iter().copied());
        let var = Estimate::from_values(xs.iter().map(|x| x * x)).mean;
        assert!(e.mean.abs() < 4.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn ball_offsets_fill_the_ball() {
        // E‖z‖² = n/(n+2) for z uniform in the unit ball
        let mut rng = stream().lane(4);
        let n = 3;
        let m = 50_000;
        let sq = Estimate::from_values((0..m).map(|_| {
            let z = sample_offset(KernelKind::Ball, n, &mut rng);
            assert!(norm(&z) <= 1.0);
            z.iter().map(|v| v * v).sum::<f64>()
        }));
        assert!((sq.mean - 0.6).abs() < 4.0 * sq.std_err);
    }

    #[test]
    fn constant_function_has_zero_direction() {
        let f = |_: &[f64]| 3.5;
        for kernel in [Kernel::ball(0.3).unwrap(), Kernel::gaussian(0.3).unwrap()] {
            for k in [1, 7] {
                let g = grad_estimate(&f, &[1.0, -2.0, 0.5], kernel, k, stream(), Exec::Serial).unwrap();
                assert!(g.direction.iter().all(|v| *v == 0.0));
                assert!(g.unbiased_gradient.iter().all(|v| *v == 0.0));
                assert_eq!(g.samples_used, k);
            }
        }
    }

    #[test]
    fn even_function_at_symmetry_point() {
        let f = |x: &[f64]| x[0].abs();
        let g = grad_estimate(&f, &[0.0], Kernel::gaussian(0.7).unwrap(), 64, stream(), Exec::Serial).unwrap();
        assert_eq!(g.direction, vec![0.0]);
    }

    #[test]
    fn square_gradient_is_unbiased_with_gaussian_kernel() {
        // each sample is 2η², so the mean tends to 2 = d/dx (x² + h²) at x = 1
        let f = |x: &[f64]| x[0] * x[0];
        let k = 200_000;
        let g = grad_estimate(&f, &[1.0], Kernel::gaussian(0.5).unwrap(), k, stream(), Exec::Parallel).unwrap();
        // Var(2η²) = 8
        let se = (8.0 / k as f64).sqrt();
        assert!((g.unbiased_gradient[0] - 2.0).abs() < 4.0 * se, "{:?}", g.unbiased_gradient);
    }

    #[test]
    fn ball_estimate_is_scaled_by_dimension() {
        let f = |x: &[f64]| 2.0 * x[0] - x[1] + 0.5 * x[2];
        let g = grad_estimate(&f, &[0.1, 0.2, 0.3], Kernel::ball(0.1).unwrap(), 5, stream(), Exec::Serial).unwrap();
        for (u, d) in g.unbiased_gradient.iter().zip(&g.direction) {
            assert_eq!(*u, 3.0 * d);
        }
    }

    #[test]
    fn evaluation_counts_are_exact() {
        let calls = AtomicUsize::new(0);
        let f = |x: &[f64]| {
            calls.fetch_add(1, Ordering::Relaxed);
            x[0]
        };
        grad_estimate(&f, &[0.0, 0.0], Kernel::ball(1.0).unwrap(), 13, stream(), Exec::Parallel).unwrap();
        assert_eq!(calls.swap(0, Ordering::Relaxed), 26);
        smoothed_value(&f, &[0.0, 0.0], Kernel::gaussian(1.0).unwrap(), 41, stream(), Exec::Serial).unwrap();
        assert_eq!(calls.load(Ordering::Relaxed), 41);
    }

    #[test]
    fn serial_and_parallel_agree_bitwise() {
        let f = |x: &[f64]| x.iter().map(|v| v.abs()).sum::<f64>() + (3.0 * x[0]).sin();
        let x = [0.3, -0.2, 0.9];
        for kernel in [Kernel::ball(0.2).unwrap(), Kernel::gaussian(0.2).unwrap()] {
            let a = grad_estimate(&f, &x, kernel, 33, stream(), Exec::Serial).unwrap();
            let b = grad_estimate(&f, &x, kernel, 33, stream(), Exec::Parallel).unwrap();
            assert_eq!(a, b);
            let a = smoothed_value(&f, &x, kernel, 500, stream(), Exec::Serial).unwrap();
            let b = smoothed_value(&f, &x, kernel, 500, stream(), Exec::Parallel).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn non_finite_values_abort() {
        let f = |x: &[f64]| if x[0] > 0.0 { f64::NAN } else { 0.0 };
        let err = grad_estimate(&f, &[0.0], Kernel::ball(1.0).unwrap(), 4, stream(), Exec::Serial).unwrap_err();
        match err {
            Error::NonFinite { point, value } => {
                assert!(point[0] > 0.0);
                assert!(value.is_nan());
            }
            e => panic!("unexpected {e}"),
        }
        let g = |_: &[f64]| f64::INFINITY;
        assert!(smoothed_value(&g, &[0.0], Kernel::ball(1.0).unwrap(), 3, stream(), Exec::Serial).is_err());
    }

    #[test]
    fn smoothed_constant_is_exact() {
        let f = |_: &[f64]| 0.1;
        let e = smoothed_value(&f, &[0.0, 1.0], Kernel::ball(2.0).unwrap(), 1000, stream(), Exec::Serial).unwrap();
        assert_eq!(e.mean, 0.1);
        assert_eq!(e.std_err, 0.0);
    }

    #[test]
    fn smoothed_abs_matches_closed_forms() {
        let f = |x: &[f64]| x[0].abs();
        let h = 0.8;
        let g = smoothed_value(&f, &[0.0], Kernel::gaussian(h).unwrap(), 100_000, stream(), Exec::Serial).unwrap();
        assert!((g.mean - h * (2.0 / PI).sqrt()).abs() < 4.0 * g.std_err);
        let b = smoothed_value(&f, &[0.0], Kernel::ball(h).unwrap(), 100_000, stream(), Exec::Serial).unwrap();
        assert!((b.mean - h / 2.0).abs() < 4.0 * b.std_err);
    }

    #[test]
    fn second_moment_examples() {
        let zero = second_moment(&|_: &[f64]| 1.0, &[0.0; 3], Kernel::ball(0.1).unwrap(), 100, stream(), Exec::Serial)
            .unwrap();
        assert_eq!(zero.mean, 0.0);

        // linear F = c·x: single sample (c·y)², mean ‖c‖²/n for sphere directions
        let c = [1.0, -2.0, 2.0, 0.0];
        let f = |x: &[f64]| crate::vector::dot(&c, x);
        let m = second_moment(&f, &[0.0; 4], Kernel::ball(0.3).unwrap(), 100_000, stream(), Exec::Serial).unwrap();
        assert!((m.mean - 9.0 / 4.0).abs() < 4.0 * m.std_err, "{m:?}");
    }

    #[test]
    fn bad_arguments() {
        assert!(Kernel::ball(0.0).is_err());
        assert!(Kernel::gaussian(f64::NAN).is_err());
        let f = |x: &[f64]| x[0];
        assert!(grad_estimate(&f, &[0.0], Kernel::ball(1.0).unwrap(), 0, stream(), Exec::Serial).is_err());
        assert!("cube".parse::<KernelKind>().is_err());
        assert_eq!("sphere".parse::<KernelKind>().unwrap(), KernelKind::Ball);
    }
}
