//! Inverse-temperature thresholds and the singular-Hessian verdict.
//!
//! `beta_m` is the largest `beta` for which `max f_beta = f_beta(0) = 0`;
//! `beta_m_tilde` is the same for the truncated functional; `beta_H` is the
//! smallest `beta` at which `M(beta) = -diag(lambda) + beta^2 Q` acquires a
//! nonnegative eigenvalue. Under positivity of `xi` off the origin,
//! `beta_m` equals the critical inverse temperature exactly when `M(beta_m)`
//! is singular.

use nalgebra::DMatrix;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::landscape::{
    hessian_at_zero, maximize, Landscape, MaximizeOptions, MaximizeResult, Objective,
    DEFAULT_TOL_ZERO,
};
use crate::linalg::{lambda_max, sym_eigenvalues};
use crate::model::ModelSpec;

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CritOptions {
    pub tol_zero: f64,
    pub tol_sing: f64,
    pub bisection_tol: f64,
    pub beta_cap: f64,
    #[serde(skip)]
    pub maximize: MaximizeOptions,
}

impl Default for CritOptions {
    fn default() -> Self {
        Self {
            tol_zero: DEFAULT_TOL_ZERO,
            tol_sing: 1e-6,
            bisection_tol: 1e-9,
            beta_cap: 1e6,
            maximize: MaximizeOptions::default(),
        }
    }
}

impl CritOptions {
    fn maximize_opts(&self) -> MaximizeOptions {
        MaximizeOptions {
            tol_zero: self.tol_zero,
            ..self.maximize
        }
    }
}

/// JSON has no infinities; non-finite values are written as strings.
pub(crate) fn serialize_extended<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

/// Outcome of one monotone-predicate bisection.
#[derive(Debug, Clone, Serialize)]
pub struct Threshold {
    #[serde(serialize_with = "serialize_extended")]
    pub beta: f64,
    /// Last bracket `[lo, hi]` with the predicate true at `lo`, false at `hi`.
    #[serde(serialize_with = "serialize_extended")]
    pub lo: f64,
    #[serde(serialize_with = "serialize_extended")]
    pub hi: f64,
    pub steps: usize,
    /// Every maximization along the way reported convergence.
    pub converged: bool,
    pub witness_lo: Option<MaximizeResult>,
    pub witness_hi: Option<MaximizeResult>,
}

struct Probe {
    holds: bool,
    converged: bool,
    witness: Option<MaximizeResult>,
}

fn bisect<P>(opts: &CritOptions, mut predicate: P) -> Result<Threshold>
where
    P: FnMut(f64) -> Result<Probe>,
{
    let at_zero = predicate(0.0)?;
    if !at_zero.holds {
        return Err(Error::NonConvergence(
            "bracket anomaly: predicate fails at beta = 0".into(),
        ));
    }
    let mut converged = at_zero.converged;
    let mut lo = 0.0;
    let mut lo_probe = at_zero;
    let mut hi = 1.0;
    let mut steps = 1;
    let mut hi_probe = loop {
        let p = predicate(hi)?;
        steps += 1;
        converged &= p.converged;
        if !p.holds {
            break p;
        }
        lo = hi;
        lo_probe = p;
        hi *= 2.0;
        if hi > opts.beta_cap {
            return Ok(Threshold {
                beta: f64::INFINITY,
                lo,
                hi: f64::INFINITY,
                steps,
                converged,
                witness_lo: lo_probe.witness,
                witness_hi: None,
            });
        }
    };
    while hi - lo > opts.bisection_tol {
        let mid = 0.5 * (lo + hi);
        let p = predicate(mid)?;
        steps += 1;
        converged &= p.converged;
        if p.holds {
            lo = mid;
            lo_probe = p;
        } else {
            hi = mid;
            hi_probe = p;
        }
    }
    debug_assert!(lo_probe.holds && !hi_probe.holds);
    Ok(Threshold {
        beta: lo,
        lo,
        hi,
        steps,
        converged,
        witness_lo: lo_probe.witness,
        witness_hi: hi_probe.witness,
    })
}

/// `max f <= tol_zero` together with the second-order test at the origin.
///
/// Near a threshold driven by `M(beta)` the maximum grows only like
/// `(beta - beta_H)^2`, far below any value tolerance, while a positive
/// eigenvalue of `M(beta)` (with a nonnegative Perron vector, since the
/// off-diagonal entries are nonnegative) already forces `max f > 0`.
fn landscape_probe(
    model: &ModelSpec,
    beta: f64,
    objective: Objective,
    opts: &CritOptions,
) -> Result<Probe> {
    let res = maximize(model, beta, objective, &opts.maximize_opts())?;
    let curvature = match objective {
        Objective::Talagrand => {
            Landscape::new(model, beta, objective)?.hessian(&[0.0])[(0, 0)]
        }
        _ => lambda_max(&hessian_at_zero(model, beta)),
    };
    Ok(Probe {
        holds: res.value <= opts.tol_zero && curvature <= 0.0,
        converged: res.converged,
        witness: Some(res),
    })
}

fn require_positive_xi(model: &ModelSpec) -> Result<()> {
    if model.xi_one() > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidModel("xi(1) must be positive".into()))
    }
}

pub fn beta_m_with(model: &ModelSpec, opts: &CritOptions) -> Result<Threshold> {
    require_positive_xi(model)?;
    bisect(opts, |b| landscape_probe(model, b, Objective::Plain, opts))
}

pub fn beta_m_tilde_with(model: &ModelSpec, opts: &CritOptions) -> Result<Threshold> {
    require_positive_xi(model)?;
    bisect(opts, |b| landscape_probe(model, b, Objective::Tilde, opts))
}

/// Independent critical-temperature oracle for single-species models:
/// the largest `beta` with `sup_r g_beta(r) <= 0`.
pub fn beta_c_talagrand_with(model: &ModelSpec, opts: &CritOptions) -> Result<Threshold> {
    if model.n_species() != 1 {
        return Err(Error::Domain(
            "the g_beta criterion is single-species only".into(),
        ));
    }
    require_positive_xi(model)?;
    bisect(opts, |b| landscape_probe(model, b, Objective::Talagrand, opts))
}

pub fn beta_m(model: &ModelSpec) -> Result<f64> {
    Ok(beta_m_with(model, &CritOptions::default())?.beta)
}

pub fn beta_m_tilde(model: &ModelSpec) -> Result<f64> {
    Ok(beta_m_tilde_with(model, &CritOptions::default())?.beta)
}

pub fn beta_c_talagrand(model: &ModelSpec) -> Result<f64> {
    Ok(beta_c_talagrand_with(model, &CritOptions::default())?.beta)
}

/// Smallest `beta` with `lambda_max(M(beta)) >= 0`, i.e.
/// `1 / sqrt(mu_max(Lambda^{-1/2} Q Lambda^{-1/2}))`; infinite when `Q = 0`.
pub fn beta_hessian_singular(model: &ModelSpec) -> f64 {
    let q = model.mixture().quadratic_part();
    let inv_sqrt: Vec<f64> = model.lambda().iter().map(|l| 1.0 / l.sqrt()).collect();
    let n = q.nrows();
    let scaled = DMatrix::from_fn(n, n, |s, t| inv_sqrt[s] * q[(s, t)] * inv_sqrt[t]);
    let mu = lambda_max(&scaled);
    if mu > 0.0 {
        1.0 / mu.sqrt()
    } else {
        f64::INFINITY
    }
}

/// Magnitude against which singularity of `M(beta)` is judged: the size of
/// its two constituents, since `M` itself tends to zero at a 1x1 singularity.
pub fn singularity_scale(model: &ModelSpec, beta: f64) -> f64 {
    let lam = model.lambda().iter().copied().fold(0.0, f64::max);
    lam + beta * beta * model.mixture().quadratic_part().norm()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NsdCheck {
    pub lambda_max: f64,
    pub is_nsd: bool,
}

pub fn check_nsd(model: &ModelSpec, beta: f64, tol_sing: f64) -> NsdCheck {
    let lambda_max = lambda_max(&hessian_at_zero(model, beta));
    NsdCheck {
        lambda_max,
        is_nsd: lambda_max <= tol_sing,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Equal,
    StrictlyLess,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct Witnesses {
    pub beta_m: Threshold,
    pub beta_m_tilde: Threshold,
}

#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    pub tol_zero: f64,
    pub tol_sing: f64,
    pub bisection_tol: f64,
    pub singularity_band: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CritReport {
    pub tool: String,
    pub tool_version: String,
    pub model_hash: String,
    #[serde(serialize_with = "serialize_extended")]
    pub beta_m: f64,
    #[serde(serialize_with = "serialize_extended")]
    pub beta_m_tilde: f64,
    #[serde(rename = "beta_H", serialize_with = "serialize_extended")]
    pub beta_h: f64,
    pub spectrum_at_beta_m: Vec<f64>,
    pub verdict: Verdict,
    /// Critical inverse temperature, reported only when it equals `beta_m`.
    pub beta_c: Option<f64>,
    pub assumption_a: bool,
    pub converged: bool,
    pub witnesses: Witnesses,
    pub tolerances: Tolerances,
}

pub fn verdict(model: &ModelSpec) -> Result<CritReport> {
    verdict_with(model, &CritOptions::default())
}

pub fn verdict_with(model: &ModelSpec, opts: &CritOptions) -> Result<CritReport> {
    let bm = beta_m_with(model, opts)?;
    let bmt = beta_m_tilde_with(model, opts)?;
    let beta_h = beta_hessian_singular(model);
    let assumption_a = model.mixture().satisfies_assumption_a();

    let (spectrum, band) = if bm.beta.is_finite() {
        (
            sym_eigenvalues(&hessian_at_zero(model, bm.beta)),
            opts.tol_sing * singularity_scale(model, bm.beta),
        )
    } else {
        (Vec::new(), f64::NAN)
    };
    let top = spectrum.last().copied();
    let verdict = match top {
        _ if !assumption_a => Verdict::Inconclusive,
        Some(l) if l.abs() <= band => Verdict::Equal,
        Some(l) if l < -band => Verdict::StrictlyLess,
        _ => Verdict::Inconclusive,
    };
    Ok(CritReport {
        tool: TOOL_NAME.to_string(),
        tool_version: TOOL_VERSION.to_string(),
        model_hash: model.hash(),
        beta_m: bm.beta,
        beta_m_tilde: bmt.beta,
        beta_h,
        spectrum_at_beta_m: spectrum,
        beta_c: (verdict == Verdict::Equal).then_some(bm.beta),
        verdict,
        assumption_a,
        converged: bm.converged && bmt.converged,
        witnesses: Witnesses {
            beta_m: bm,
            beta_m_tilde: bmt,
        },
        tolerances: Tolerances {
            tol_zero: opts.tol_zero,
            tol_sing: opts.tol_sing,
            bisection_tol: opts.bisection_tol,
            singularity_band: band,
        },
    })
}
