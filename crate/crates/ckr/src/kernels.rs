//! Kernel functions, datasets and Gram matrices.
//!
//! Four kernels are supported: `linear` and `rbf` as diagnostics, and the two
//! constructions used for approximating networks — the multinomial kernel
//! `MK_d(x,x') = sum_{i=0}^d (x.x')^i` and the composed kernel
//! `K^(D)(x,x') = 1/(2 - K^(D-1)(x,x'))` with `K^(1)(x,x') = 1/(2 - x.x')`.
//! The sphere-only kernels reject inputs off the unit sphere instead of
//! renormalizing them.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on | ||x||_2 - 1 | for sphere-constrained kernels.
pub const SPHERE_TOL: f64 = 1e-9;

/// Kernel identity and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Linear,
    Rbf { bandwidth: f64 },
    Multinomial { degree: u32 },
    Composed { depth: u32 },
}

impl KernelSpec {
    pub fn multinomial(degree: u32) -> Result<Self> {
        if degree < 1 {
            return Err(Error::InvalidParameter {
                name: "degree",
                value: degree as f64,
                constraint: "d >= 1",
            });
        }
        Ok(KernelSpec::Multinomial { degree })
    }

    pub fn composed(depth: u32) -> Result<Self> {
        if depth < 1 {
            return Err(Error::InvalidParameter {
                name: "depth",
                value: depth as f64,
                constraint: "D >= 1",
            });
        }
        Ok(KernelSpec::Composed { depth })
    }

    pub fn rbf(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) {
            return Err(Error::InvalidParameter {
                name: "bandwidth",
                value: bandwidth,
                constraint: "bandwidth > 0",
            });
        }
        Ok(KernelSpec::Rbf { bandwidth })
    }

    /// The finite bound M with |k(x,x')| <= M on the kernel's domain.
    ///
    /// Multinomial on the unit sphere: M = d + 1. Composed: M = 2. The
    /// diagnostic kernels report M = 1 (valid on the unit ball for linear).
    pub fn bound(&self) -> f64 {
        match self {
            KernelSpec::Linear | KernelSpec::Rbf { .. } => 1.0,
            KernelSpec::Multinomial { degree } => *degree as f64 + 1.0,
            KernelSpec::Composed { .. } => 2.0,
        }
    }

    /// Whether inputs must lie on the unit sphere.
    pub fn sphere_constrained(&self) -> bool {
        matches!(
            self,
            KernelSpec::Multinomial { .. } | KernelSpec::Composed { .. }
        )
    }

    /// Short identifier used in file formats and reports.
    pub fn id(&self) -> String {
        match self {
            KernelSpec::Linear => "linear".into(),
            KernelSpec::Rbf { bandwidth } => format!("rbf({bandwidth})"),
            KernelSpec::Multinomial { degree } => format!("multinomial({degree})"),
            KernelSpec::Composed { depth } => format!("composed({depth})"),
        }
    }
}

/// A labeled sample: m points in R^n with labels in [0,1].
#[derive(Debug, Clone)]
pub struct Dataset {
    points: Vec<DVector<f64>>,
    labels: Vec<f64>,
}

impl Dataset {
    pub fn new(points: Vec<DVector<f64>>, labels: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if points.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: labels.len(),
            });
        }
        let dim = points[0].len();
        for p in points.iter() {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { context: "dataset point" });
            }
        }
        for (i, &y) in labels.iter().enumerate() {
            if !(0.0..=1.0).contains(&y) {
                return Err(Error::LabelOutOfRange { index: i, value: y });
            }
        }
        Ok(Dataset { points, labels })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn label_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.labels)
    }

    /// Check the sphere invariant when `spec` requires it.
    pub fn validate_for(&self, spec: &KernelSpec) -> Result<()> {
        if spec.sphere_constrained() {
            for (i, p) in self.points.iter().enumerate() {
                let deviation = (p.norm() - 1.0).abs();
                if deviation > SPHERE_TOL {
                    return Err(Error::OffSphere { index: i, deviation });
                }
            }
        }
        Ok(())
    }
}

/// Dense symmetric PSD Gram matrix together with its sample count.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
    m: usize,
}

impl GramMatrix {
    /// Wrap an already-symmetric matrix. Symmetrizes via (A + A^T)/2.
    pub fn from_matrix(mut entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                got: entries.ncols(),
            });
        }
        if !entries.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { context: "gram matrix" });
        }
        let m = entries.nrows();
        for i in 0..m {
            for j in (i + 1)..m {
                let v = 0.5 * (entries[(i, j)] + entries[(j, i)]);
                entries[(i, j)] = v;
                entries[(j, i)] = v;
            }
        }
        Ok(GramMatrix { entries, m })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    /// K + gamma * m * I.
    pub fn perturb(&self, gamma: f64) -> Result<GramMatrix> {
        if !(gamma >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                value: gamma,
                constraint: "gamma >= 0",
            });
        }
        let mut entries = self.entries.clone();
        let shift = gamma * self.m as f64;
        for i in 0..self.m {
            entries[(i, i)] += shift;
        }
        Ok(GramMatrix { entries, m: self.m })
    }

    /// SHA-256 fingerprint of the entries, used to tie sketches to their source.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update((self.m as u64).to_le_bytes());
        for v in self.entries.iter() {
            hasher.update(v.to_bits().to_le_bytes());
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Evaluate k(x, x').
///
/// Sphere-constrained kernels reject off-sphere inputs (tolerance 1e-9).
/// Symmetry in the arguments is exact: every kernel reduces to the dot
/// product or to coordinate-wise squared differences, both of which are
/// bitwise symmetric under IEEE arithmetic.
pub fn eval_kernel(spec: &KernelSpec, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if spec.sphere_constrained() {
        for (idx, p) in [x, y].into_iter().enumerate() {
            let deviation = (p.norm() - 1.0).abs();
            if deviation > SPHERE_TOL {
                return Err(Error::OffSphere { index: idx, deviation });
            }
        }
    }
    eval_unchecked(spec, x, y)
}

/// Kernel evaluation with preconditions already verified by the caller.
fn eval_unchecked(spec: &KernelSpec, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    match spec {
        KernelSpec::Linear => Ok(x.dot(y)),
        KernelSpec::Rbf { bandwidth } => {
            let sq = x
                .iter()
                .zip(y.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            Ok((-sq / (2.0 * bandwidth * bandwidth)).exp())
        }
        KernelSpec::Multinomial { degree } => {
            // Horner form of sum_{i=0}^d t^i.
            let t = x.dot(y);
            let mut acc = 1.0;
            for _ in 0..*degree {
                acc = acc * t + 1.0;
            }
            Ok(acc)
        }
        KernelSpec::Composed { depth } => {
            let t = x.dot(y);
            let mut k = t;
            for _ in 0..*depth {
                let denom = 2.0 - k;
                if denom <= 1e-12 {
                    return Err(Error::DegenerateDenominator { denom });
                }
                k = 1.0 / denom;
            }
            Ok(k)
        }
    }
}

/// Build the m x m Gram matrix K with K[i,j] = k(x_i, x_j).
///
/// Only the upper triangle is computed; the lower is mirrored, so symmetry is
/// exact by construction. Rows are filled in parallel; each entry is an
/// independent pure evaluation, so the result does not depend on the number
/// of workers.
pub fn gram(dataset: &Dataset, spec: &KernelSpec) -> Result<GramMatrix> {
    dataset.validate_for(spec)?;
    let m = dataset.len();
    let pts = dataset.points();

    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::with_capacity(m - i);
            for j in i..m {
                row.push(eval_unchecked(spec, &pts[i], &pts[j])?);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let mut entries = DMatrix::zeros(m, m);
    for (i, row) in rows.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + off;
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
    }
    Ok(GramMatrix { entries, m })
}
