//! Spectra of Gram matrices, eigenvalue-decay envelopes and effective
//! dimension.
//!
//! Decay is always stated for the normalized matrix K/m: a profile certifies
//! the pointwise envelope `lambda_i <= C * i^{-p}` (polynomial) or
//! `lambda_i <= C * e^{-i}` (exponential) from some tail index onward. The
//! fitting procedure regresses in log space and then inflates C to the
//! smallest value that makes the envelope hold with no violations, so a
//! returned profile is a certificate for the spectrum it was fitted to.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::GramMatrix;

/// Relative floor applied to eigenvalues before log-space regression.
const LOG_FLOOR_REL: f64 = 1e-14;

/// Eigenvalues of K (or K/m), sorted descending, tiny negatives clamped to 0.
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    normalized: bool,
    /// Most negative raw eigenvalue seen before clamping, for PSD diagnostics.
    min_raw: f64,
}

impl Spectrum {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn min_raw(&self) -> f64 {
        self.min_raw
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Build directly from known values (planted spectra, tests).
    pub fn from_values(mut values: Vec<f64>, normalized: bool) -> Self {
        values.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let min_raw = values.last().copied().unwrap_or(0.0);
        for v in values.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Spectrum { eigenvalues: values, normalized, min_raw }
    }
}

/// Sorted eigendecomposition of a symmetric matrix, descending.
pub(crate) fn symmetric_eigen_sorted(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let se = a.clone().symmetric_eigen();
    let m = a.nrows();
    let mut order: Vec<usize> = (0..m).collect();
    let vals = &se.eigenvalues;
    order.sort_by(|&i, &j| vals[j].partial_cmp(&vals[i]).unwrap().then(i.cmp(&j)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
    let mut vectors = DMatrix::zeros(m, m);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &se.eigenvectors.column(src));
    }
    (eigenvalues, vectors)
}

/// Full spectrum of K (or of K/m when `normalize` is set).
pub fn spectrum(k: &GramMatrix, normalize: bool) -> Result<Spectrum> {
    let a = k.matrix();
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { context: "spectrum input" });
    }
    let (mut vals, _) = symmetric_eigen_sorted(a);
    if normalize {
        let m = k.m() as f64;
        for v in vals.iter_mut() {
            *v /= m;
        }
    }
    let min_raw = vals.last().copied().unwrap_or(0.0);
    let top = vals.first().copied().unwrap_or(0.0);
    for v in vals.iter_mut() {
        if *v < 0.0 {
            // Clamp round-off negatives; anything below -1e-8*lambda_1 would be
            // a genuine PSD violation and is preserved in min_raw.
            *v = 0.0;
        }
    }
    let _ = top;
    Ok(Spectrum { eigenvalues: vals, normalized: normalize, min_raw })
}

/// Decay envelope kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecayKind {
    Polynomial { c: f64, p: f64 },
    Exponential { c: f64 },
    None,
}

/// A fitted decay envelope, enforced from `tail_start` (1-based) onward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayProfile {
    pub kind: DecayKind,
    pub tail_start: usize,
    pub max_violation: f64,
}

impl DecayProfile {
    pub fn polynomial(c: f64, p: f64) -> Self {
        DecayProfile { kind: DecayKind::Polynomial { c, p }, tail_start: 1, max_violation: 0.0 }
    }

    pub fn exponential(c: f64) -> Self {
        DecayProfile { kind: DecayKind::Exponential { c }, tail_start: 1, max_violation: 0.0 }
    }

    /// Envelope value at index i (1-based). None for kind `None`.
    pub fn envelope_at(&self, i: usize) -> Option<f64> {
        match self.kind {
            DecayKind::Polynomial { c, p } => Some(c * (i as f64).powf(-p)),
            DecayKind::Exponential { c } => Some(c * (-(i as f64)).exp()),
            DecayKind::None => None,
        }
    }
}

fn least_squares_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

fn mean_sq_residual(xs: &[f64], ys: &[f64], slope: f64, intercept: f64) -> f64 {
    let n = ys.len() as f64;
    xs.iter()
        .zip(ys.iter())
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum::<f64>()
        / n
}

/// Fit a decay envelope to the tail of a spectrum.
///
/// Regresses log(lambda_i) against log(i) (polynomial, slope free) and
/// against i (exponential, slope fixed at -1), picks the kind with the
/// smaller log-space residual, then inflates C to the exact envelope
/// `max_i lambda_i / f(i)` over the tail so the profile certifies the bound.
/// A best fit that is polynomial with p <= 1 means the spectrum does not
/// decay fast enough to certify anything and yields kind `None`.
pub fn fit_decay(s: &Spectrum, tail_start: usize) -> Result<DecayProfile> {
    if !s.normalized() {
        return Err(Error::InvalidParameter {
            name: "spectrum",
            value: 0.0,
            constraint: "decay is defined on K/m; pass a normalized spectrum",
        });
    }
    let m = s.len();
    if tail_start < 1 || tail_start >= m {
        return Err(Error::InvalidParameter {
            name: "tail_start",
            value: tail_start as f64,
            constraint: "1 <= tail_start < m",
        });
    }
    let lam = s.eigenvalues();
    let top = lam[0];
    if top <= 0.0 {
        return Ok(DecayProfile { kind: DecayKind::None, tail_start, max_violation: 0.0 });
    }
    let floor = LOG_FLOOR_REL * top;
    let tail: Vec<(usize, f64)> = (tail_start..=m).map(|i| (i, lam[i - 1])).collect();
    if tail.iter().all(|(_, l)| *l <= floor) {
        return Ok(DecayProfile { kind: DecayKind::None, tail_start, max_violation: 0.0 });
    }

    let idx: Vec<f64> = tail.iter().map(|(i, _)| *i as f64).collect();
    let logs: Vec<f64> = tail.iter().map(|(_, l)| l.max(floor).ln()).collect();
    let log_idx: Vec<f64> = idx.iter().map(|i| i.ln()).collect();

    // Polynomial: log lambda = log C - p log i.
    let (slope_poly, icept_poly) = least_squares_line(&log_idx, &logs);
    let p_hat = -slope_poly;
    let rss_poly = mean_sq_residual(&log_idx, &logs, slope_poly, icept_poly);

    // Exponential: log lambda = log C - i (slope fixed).
    let icept_exp = logs
        .iter()
        .zip(idx.iter())
        .map(|(l, i)| l + i)
        .sum::<f64>()
        / logs.len() as f64;
    let rss_exp = mean_sq_residual(&idx, &logs, -1.0, icept_exp);

    let prefer_poly = rss_poly <= rss_exp || icept_exp > 700.0;
    if prefer_poly {
        if p_hat <= 1.0 {
            return Ok(DecayProfile { kind: DecayKind::None, tail_start, max_violation: 0.0 });
        }
        // Envelope scan: smallest C with lambda_i <= C i^{-p} on the tail.
        let c = tail
            .iter()
            .map(|(i, l)| l * (*i as f64).powf(p_hat))
            .fold(0.0_f64, f64::max);
        let profile = DecayProfile {
            kind: DecayKind::Polynomial { c, p: p_hat },
            tail_start,
            max_violation: 0.0,
        };
        let viol = max_violation(&profile, lam);
        Ok(DecayProfile { max_violation: viol, ..profile })
    } else {
        let ln_c = tail
            .iter()
            .map(|(i, l)| if *l > 0.0 { l.ln() + *i as f64 } else { f64::NEG_INFINITY })
            .fold(f64::NEG_INFINITY, f64::max);
        if ln_c > 700.0 {
            // C would overflow; the spectrum is not genuinely exponential.
            if p_hat > 1.0 {
                let c = tail
                    .iter()
                    .map(|(i, l)| l * (*i as f64).powf(p_hat))
                    .fold(0.0_f64, f64::max);
                let profile = DecayProfile {
                    kind: DecayKind::Polynomial { c, p: p_hat },
                    tail_start,
                    max_violation: 0.0,
                };
                let viol = max_violation(&profile, lam);
                return Ok(DecayProfile { max_violation: viol, ..profile });
            }
            return Ok(DecayProfile { kind: DecayKind::None, tail_start, max_violation: 0.0 });
        }
        let profile = DecayProfile {
            kind: DecayKind::Exponential { c: ln_c.exp() },
            tail_start,
            max_violation: 0.0,
        };
        let viol = max_violation(&profile, lam);
        Ok(DecayProfile { max_violation: viol, ..profile })
    }
}

/// Largest relative excess of lambda_i over the envelope on the tail
/// (0 when the envelope holds).
fn max_violation(profile: &DecayProfile, lam: &[f64]) -> f64 {
    let mut worst = 0.0_f64;
    for i in profile.tail_start..=lam.len() {
        if let Some(env) = profile.envelope_at(i) {
            if env > 0.0 {
                worst = worst.max((lam[i - 1] - env) / env);
            }
        }
    }
    worst.max(0.0)
}

/// Fit with the tail index chosen by the fixed-point substitution from the
/// effective-dimension proof: start from a whole-spectrum fit, compute
/// j = (C/((p-1) eta))^{1/p} (polynomial) or j = log(C/((e-1) eta))
/// (exponential), refit from j, and iterate until j stabilizes.
pub fn fit_decay_auto(s: &Spectrum, eta: f64) -> Result<DecayProfile> {
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter { name: "eta", value: eta, constraint: "eta > 0" });
    }
    let m = s.len();
    let mut tail = 1usize;
    let mut profile = fit_decay(s, tail)?;
    for _ in 0..32 {
        let j = match profile.kind {
            DecayKind::Polynomial { c, p } => (c / ((p - 1.0) * eta)).powf(1.0 / p),
            DecayKind::Exponential { c } => (c / ((std::f64::consts::E - 1.0) * eta)).ln(),
            DecayKind::None => break,
        };
        let next = j.round().clamp(1.0, (m - 1) as f64) as usize;
        if next == tail {
            break;
        }
        tail = next;
        profile = fit_decay(s, tail)?;
    }
    Ok(profile)
}

/// eta-effective dimension d_eta(K) = tr(K (K + eta m I)^{-1}), computed via
/// the (clamped) spectrum.
pub fn effective_dimension(k: &GramMatrix, eta: f64) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter { name: "eta", value: eta, constraint: "eta > 0" });
    }
    let s = spectrum(k, false)?;
    let em = eta * k.m() as f64;
    Ok(s.eigenvalues().iter().map(|&l| l / (l + em)).sum())
}

/// The closed-form effective-dimension bound as stated by the source theorem:
/// polynomial `(C/((p-1) eta))^{1/p} + 2`, exponential
/// `log(C/((e-1) eta)) + 2` (natural log).
///
/// Callers must ensure `gamma * m <= eta` for the bound to apply to
/// d_eta(K_gamma). Note: the stated polynomial form is strictly tighter than
/// what the theorem's own proof delivers and is empirically violated by exact
/// power-law spectra; see [`effective_dimension_bound_proof_form`] for the
/// form the proof supports.
pub fn effective_dimension_bound(profile: &DecayProfile, eta: f64) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter { name: "eta", value: eta, constraint: "eta > 0" });
    }
    match profile.kind {
        DecayKind::Polynomial { c, p } => {
            if p <= 1.0 {
                return Err(Error::ProfileUnusable { why: "polynomial bound needs p > 1" });
            }
            Ok((c / ((p - 1.0) * eta)).powf(1.0 / p) + 2.0)
        }
        DecayKind::Exponential { c } => {
            Ok((c / ((std::f64::consts::E - 1.0) * eta)).ln() + 2.0)
        }
        DecayKind::None => Err(Error::ProfileUnusable { why: "no decay envelope fitted" }),
    }
}

/// The effective-dimension bound that the theorem's proof actually yields.
///
/// The proof splits the trace at index j and bounds the tail by
/// `C j^{1-p} / ((p-1) eta)`, which at the substituted j equals j itself, so
/// the polynomial case gives `2 j + 2`, not `j + 2`. The exponential case's
/// geometric tail is exactly 1, so there the stated and proof forms agree.
pub fn effective_dimension_bound_proof_form(profile: &DecayProfile, eta: f64) -> Result<f64> {
    match profile.kind {
        DecayKind::Polynomial { c, p } => {
            if p <= 1.0 {
                return Err(Error::ProfileUnusable { why: "polynomial bound needs p > 1" });
            }
            if !(eta > 0.0) {
                return Err(Error::InvalidParameter { name: "eta", value: eta, constraint: "eta > 0" });
            }
            Ok(2.0 * (c / ((p - 1.0) * eta)).powf(1.0 / p) + 2.0)
        }
        _ => effective_dimension_bound(profile, eta),
    }
}
