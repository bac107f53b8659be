//! The regression relaxation cascade and its closed-form solutions.
//!
//! Starting from the norm-constrained problem
//! `min (1/m)||K a - Y||^2  s.t.  a^T K a <= B`, the cascade relaxes it to a
//! lagrangian (`a = (K + lambda m I)^{-1} Y`), preconditions with
//! `K_gamma = K + gamma m I`, and sparsifies by replacing `K_gamma` with a
//! Nystrom sketch, giving a k-sparse coefficient vector supported on the
//! selected columns. Each step loses a quantified amount of accuracy:
//!
//! * sparsification: `||Kbar_g abar - Y|| <= ||K_g a_g - Y|| + eta sqrt(m)/(lambda+gamma)`
//!   whenever `||K_g - Kbar_g|| <= eta m`,
//! * preconditioning: `||K_g a_g - Y|| <= ||K a - Y|| + gamma sqrt(m)/(lambda+gamma)`,
//! * relaxation: `||K a - Y|| <= ||K a_B - Y|| + sqrt(lambda m B)`.
//!
//! The bounded problem itself is solved exactly (as a test oracle) by KKT
//! bisection on the dual variable.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::GramMatrix;
use crate::nystrom::NystromSketch;
use crate::spectral::symmetric_eigen_sorted;

/// Which problem of the cascade a solution solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Bounded,
    Lagrangian,
    Perturbed,
    Sketched,
    Sparse,
}

/// A coefficient vector together with its problem's objective value.
#[derive(Debug, Clone)]
pub struct Solution {
    pub alpha: DVector<f64>,
    pub objective: f64,
    pub variant: Variant,
}

/// Sparse coefficient vector with sorted support.
#[derive(Debug, Clone)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn new(dim: usize, mut entries: Vec<(usize, f64)>) -> Self {
        entries.sort_by_key(|(i, _)| *i);
        SparseVector { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn support(&self) -> Vec<usize> {
        self.entries.iter().map(|(i, _)| *i).collect()
    }

    pub fn to_dense(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim);
        for &(i, x) in &self.entries {
            v[i] = x;
        }
        v
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, x)| x * x).sum::<f64>().sqrt()
    }
}

/// Result of the sketched solve: the dense minimizer of the sketched problem
/// and the equivalent sparse vector supported on the selected columns.
#[derive(Debug, Clone)]
pub struct SketchedSolution {
    pub alpha_bar: Solution,
    pub alpha_star: SparseVector,
    /// Relative residual of the identity K_gamma a* = Kbar_gamma abar.
    pub identity_residual: f64,
}

fn solve_spd(a: DMatrix<f64>, y: &DVector<f64>, context: &'static str) -> Result<DVector<f64>> {
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol.solve(y));
    }
    a.lu().solve(y).ok_or(Error::SingularSystem { context })
}

fn shifted(k: &GramMatrix, coeff: f64) -> DMatrix<f64> {
    let mut a = k.matrix().clone();
    let m = k.m();
    for i in 0..m {
        a[(i, i)] += coeff;
    }
    a
}

fn check_labels(k: &GramMatrix, y: &DVector<f64>) -> Result<()> {
    if y.len() != k.m() {
        return Err(Error::DimensionMismatch { expected: k.m(), got: y.len() });
    }
    Ok(())
}

/// Lagrangian objective (1/m)||K a - Y||^2 + lambda a^T K a.
pub fn lagrangian_objective(k: &GramMatrix, y: &DVector<f64>, lambda: f64, alpha: &DVector<f64>) -> f64 {
    let m = k.m() as f64;
    let ka = k.matrix() * alpha;
    let r = &ka - y;
    r.norm_squared() / m + lambda * alpha.dot(&ka)
}

/// Residual of the stationarity condition grad = (2/m) K (K a - Y) + 2 lambda K a.
pub fn stationarity_residual(k: &GramMatrix, y: &DVector<f64>, lambda: f64, alpha: &DVector<f64>) -> f64 {
    let m = k.m() as f64;
    let ka = k.matrix() * alpha;
    let grad = k.matrix() * ((&ka - y) * (2.0 / m) + alpha * (2.0 * lambda));
    grad.norm()
}

/// a = (K + lambda m I)^{-1} Y, the closed-form lagrangian minimizer.
pub fn solve_lagrangian(k: &GramMatrix, y: &DVector<f64>, lambda: f64) -> Result<Solution> {
    check_labels(k, y)?;
    if lambda < 0.0 {
        return Err(Error::InvalidParameter { name: "lambda", value: lambda, constraint: "lambda >= 0" });
    }
    let a = shifted(k, lambda * k.m() as f64);
    let alpha = if lambda > 0.0 {
        solve_spd(a, y, "lagrangian solve")?
    } else {
        a.lu().solve(y).ok_or(Error::SingularSystem { context: "lagrangian solve at lambda = 0" })?
    };
    let objective = lagrangian_objective(k, y, lambda, &alpha);
    Ok(Solution { alpha, objective, variant: Variant::Lagrangian })
}

/// a_gamma = (K_gamma + lambda m I)^{-1} Y = (K + (lambda + gamma) m I)^{-1} Y.
///
/// Solved through the shifted form; the perturb-then-solve route agrees to
/// within round-off (checked in tests as an algebraic identity).
pub fn solve_perturbed(k: &GramMatrix, y: &DVector<f64>, lambda: f64, gamma: f64) -> Result<Solution> {
    check_labels(k, y)?;
    if !(lambda + gamma > 0.0) {
        return Err(Error::InvalidParameter {
            name: "lambda + gamma",
            value: lambda + gamma,
            constraint: "lambda + gamma > 0",
        });
    }
    let a = shifted(k, (lambda + gamma) * k.m() as f64);
    let alpha = solve_spd(a, y, "perturbed solve")?;
    let k_gamma = k.perturb(gamma)?;
    let objective = lagrangian_objective(&k_gamma, y, lambda, &alpha);
    Ok(Solution { alpha, objective, variant: Variant::Perturbed })
}

/// Solve the sketched problem and extract the sparse coefficient vector.
///
/// `abar = (Kbar_gamma + lambda m I)^{-1} Y` and
/// `a* = S (S^T K_gamma S)^+ S^T K_gamma abar`, supported on the selected
/// columns, with `K_gamma a* = Kbar_gamma abar` up to round-off.
pub fn solve_sketched(
    sketch: &NystromSketch,
    k_gamma: &GramMatrix,
    y: &DVector<f64>,
    lambda: f64,
) -> Result<SketchedSolution> {
    check_labels(k_gamma, y)?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter { name: "lambda", value: lambda, constraint: "lambda > 0" });
    }
    let m = k_gamma.m();
    let cols = sketch.columns(k_gamma)?; // m x k, errors on fingerprint mismatch
    let kbar = &cols * sketch.core_pinv() * cols.transpose();
    let mut sys = kbar.clone();
    for i in 0..m {
        sys[(i, i)] += lambda * m as f64;
    }
    let alpha_bar = solve_spd(sys, y, "sketched solve")?;

    // a*[selected] = (S^T K_gamma S)^+ (S^T K_gamma) abar.
    let coeffs = sketch.core_pinv() * (cols.transpose() * &alpha_bar);
    let entries: Vec<(usize, f64)> = sketch
        .selected()
        .iter()
        .copied()
        .zip(coeffs.iter().copied())
        .collect();
    let alpha_star = SparseVector::new(m, entries);

    let lhs = k_gamma.matrix() * alpha_star.to_dense();
    let rhs = &kbar * &alpha_bar;
    let scale = rhs.norm().max(1e-300);
    let identity_residual = (lhs - &rhs).norm() / scale;

    let objective = {
        let r = &rhs - y;
        r.norm_squared() / m as f64 + lambda * alpha_bar.dot(&rhs)
    };
    Ok(SketchedSolution {
        alpha_bar: Solution { alpha: alpha_bar, objective, variant: Variant::Sketched },
        alpha_star,
        identity_residual,
    })
}

/// Exact solution of `min (1/m)||K a - Y||^2  s.t.  a^T K a <= B`.
///
/// If the pseudoinverse minimizer `a0 = K^+ Y` is feasible it is returned
/// (inactive constraint). Otherwise the KKT conditions give
/// `a(mu) = (K + mu m I)^{-1} Y` with the unique mu > 0 making the
/// constraint active, found by bisection on the monotone map
/// `mu -> a(mu)^T K a(mu)`. Implemented on the eigendecomposition, so each
/// bisection step is O(m).
pub fn solve_bounded_oracle(k: &GramMatrix, y: &DVector<f64>, b: f64) -> Result<Solution> {
    check_labels(k, y)?;
    if !(b > 0.0) {
        return Err(Error::InvalidParameter { name: "B", value: b, constraint: "B > 0" });
    }
    let m = k.m();
    let mf = m as f64;
    let (raw_vals, vecs) = symmetric_eigen_sorted(k.matrix());
    let vals: Vec<f64> = raw_vals.iter().map(|&l| l.max(0.0)).collect();
    let c = vecs.transpose() * y;
    let top = vals.first().copied().unwrap_or(0.0);
    let cutoff = mf * f64::EPSILON * top;

    // Unconstrained (pseudoinverse) minimizer.
    let quad0: f64 = vals
        .iter()
        .zip(c.iter())
        .filter(|(l, _)| **l > cutoff)
        .map(|(l, ci)| ci * ci / l)
        .sum();
    if quad0 <= b {
        let mut alpha_spec = DVector::zeros(m);
        for i in 0..m {
            if vals[i] > cutoff {
                alpha_spec[i] = c[i] / vals[i];
            }
        }
        let alpha = &vecs * alpha_spec;
        let r = k.matrix() * &alpha - y;
        return Ok(Solution { alpha, objective: r.norm_squared() / mf, variant: Variant::Bounded });
    }

    let quad = |mu: f64| -> f64 {
        vals.iter()
            .zip(c.iter())
            .map(|(l, ci)| {
                let d = l + mu * mf;
                l * ci * ci / (d * d)
            })
            .sum()
    };

    let mut lo = 1e-16;
    let mut hi = 1e-12;
    let mut doublings = 0;
    while quad(hi) > b {
        hi *= 2.0;
        doublings += 1;
        if doublings > 400 {
            return Err(Error::BisectionDidNotConverge { iterations: doublings });
        }
    }
    // Numerical corner: even the negligible-ridge end already satisfies the
    // constraint (sub-cutoff eigenvalue dust); accept it.
    if quad(lo) < b {
        hi = lo;
    }

    let mut mu = hi;
    let mut ok = quad(mu) >= b * (1.0 - 1e-9) && quad(mu) <= b * (1.0 + 1e-9);
    for _ in 0..200 {
        if ok {
            break;
        }
        mu = 0.5 * (lo + hi);
        let q = quad(mu);
        if (q - b).abs() <= 1e-9 * b {
            ok = true;
            break;
        }
        if q > b {
            lo = mu;
        } else {
            hi = mu;
        }
    }
    if !ok {
        return Err(Error::BisectionDidNotConverge { iterations: 200 });
    }

    let mut alpha_spec = DVector::zeros(m);
    for i in 0..m {
        alpha_spec[i] = c[i] / (vals[i] + mu * mf);
    }
    let alpha = &vecs * alpha_spec;
    let r = k.matrix() * &alpha - y;
    Ok(Solution { alpha, objective: r.norm_squared() / mf, variant: Variant::Bounded })
}

/// Measured relaxation gap ||K a - Y|| - ||K a_B - Y|| for the lagrangian
/// minimizer `a` at ridge weight lambda; bounded above by sqrt(lambda m B).
pub fn lagrangian_gap(k: &GramMatrix, y: &DVector<f64>, lambda: f64, b: f64) -> Result<f64> {
    let lag = solve_lagrangian(k, y, lambda)?;
    let bounded = solve_bounded_oracle(k, y, b)?;
    let r_lag = (k.matrix() * &lag.alpha - y).norm();
    let r_b = (k.matrix() * &bounded.alpha - y).norm();
    Ok(r_lag - r_b)
}

/// The total-error parameter schedule:
/// lambda = eps^2/(81 B), gamma = eps^3/(729 B m), eta = gamma * m
/// (so gamma m = eta holds bitwise and eta matches eps^3/(729 B) to 1 ulp).
pub fn theorem5_schedule(eps: f64, b: f64, m: usize) -> Result<(f64, f64, f64)> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidParameter { name: "eps", value: eps, constraint: "0 < eps <= 1" });
    }
    if !(b >= 1.0) {
        return Err(Error::InvalidParameter { name: "B", value: b, constraint: "B >= 1" });
    }
    let lambda = eps * eps / (81.0 * b);
    let gamma = eps.powi(3) / (729.0 * b * m as f64);
    let eta = gamma * m as f64;
    if lambda == 0.0 || gamma == 0.0 {
        return Err(Error::ScheduleUnderflow { name: "theorem5 schedule" });
    }
    Ok((lambda, eta, gamma))
}
