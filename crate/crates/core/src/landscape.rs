//! Deterministic functionals on overlap space and their global maximization.
//!
//! `f_beta(r) = 1/2 sum_s lambda(s) log(1 - r(s)^2) + beta^2 xi(r)` is the
//! exponent of the annealed second moment; `f_tilde_beta` replaces the energy
//! by `beta^2 xi(1) xi(r) / (xi(1) + xi(r))`; `g_beta` is the single-species
//! high-temperature criterion `log(1 - r) + r + beta^2 xi(r)`.

use std::cmp::Ordering;
use std::ops::Deref;

use nalgebra::{Cholesky, DMatrix};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::ModelSpec;

/// Upper clamp applied to each overlap coordinate during ascent.
pub const DOMAIN_CLAMP: f64 = 1.0 - 1e-8;
pub const DEFAULT_TOL_ZERO: f64 = 1e-10;

/// A point of overlap space indexed by species.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct OverlapVector(Vec<f64>);

impl OverlapVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Argument check for landscape functions: every entry in `[0, 1)`.
    pub fn check_landscape(r: &[f64], n_species: usize) -> Result<()> {
        if r.len() != n_species {
            return Err(Error::Domain(format!(
                "overlap has {} entries, model has {n_species} species",
                r.len()
            )));
        }
        match r.iter().find(|v| !(0.0..1.0).contains(*v)) {
            Some(bad) => Err(Error::Domain(format!("overlap entry {bad} outside [0, 1)"))),
            None => Ok(()),
        }
    }

    /// Raw overlaps between configurations live in `[-1, 1]`.
    pub fn check_raw(r: &[f64]) -> Result<()> {
        match r.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            Some(bad) => Err(Error::Domain(format!("overlap entry {bad} outside [-1, 1]"))),
            None => Ok(()),
        }
    }
}

impl Deref for OverlapVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Plain,
    Tilde,
    /// `g_beta`; single species only.
    Talagrand,
}

/// Value, gradient and Hessian of one objective at fixed `beta`.
#[derive(Debug, Clone, Copy)]
pub struct Landscape<'a> {
    model: &'a ModelSpec,
    beta: f64,
    objective: Objective,
    xi_one: f64,
}

impl<'a> Landscape<'a> {
    pub fn new(model: &'a ModelSpec, beta: f64, objective: Objective) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!("beta = {beta} must be finite and >= 0")));
        }
        let xi_one = model.xi_one();
        match objective {
            Objective::Tilde if xi_one <= 0.0 => {
                return Err(Error::Domain("truncated functional needs xi(1) > 0".into()))
            }
            Objective::Talagrand if model.n_species() != 1 => {
                return Err(Error::Domain(
                    "g_beta is defined for single-species models only".into(),
                ))
            }
            _ => {}
        }
        Ok(Self {
            model,
            beta,
            objective,
            xi_one,
        })
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn n(&self) -> usize {
        self.model.n_species()
    }

    pub fn value(&self, r: &[f64]) -> f64 {
        let b2 = self.beta * self.beta;
        let xi = self.model.mixture().eval(r);
        match self.objective {
            Objective::Plain => entropy(self.model.lambda(), r) + b2 * xi,
            Objective::Tilde => {
                entropy(self.model.lambda(), r) + b2 * self.xi_one * xi / (self.xi_one + xi)
            }
            Objective::Talagrand => (-r[0]).ln_1p() + r[0] + b2 * xi,
        }
    }

    pub fn grad(&self, r: &[f64]) -> Vec<f64> {
        let b2 = self.beta * self.beta;
        let lambda = self.model.lambda();
        let mix = self.model.mixture();
        let mut g = mix.grad(r);
        match self.objective {
            Objective::Plain => {
                for s in 0..g.len() {
                    g[s] = -lambda[s] * r[s] / (1.0 - r[s] * r[s]) + b2 * g[s];
                }
            }
            Objective::Tilde => {
                let denom = self.xi_one + mix.eval(r);
                let scale = b2 * self.xi_one * self.xi_one / (denom * denom);
                for s in 0..g.len() {
                    g[s] = -lambda[s] * r[s] / (1.0 - r[s] * r[s]) + scale * g[s];
                }
            }
            Objective::Talagrand => {
                g[0] = -r[0] / (1.0 - r[0]) + b2 * g[0];
            }
        }
        g
    }

    pub fn hessian(&self, r: &[f64]) -> DMatrix<f64> {
        let b2 = self.beta * self.beta;
        let lambda = self.model.lambda();
        let mix = self.model.mixture();
        let n = r.len();
        let mut h = match self.objective {
            Objective::Plain | Objective::Talagrand => mix.hessian(r) * b2,
            Objective::Tilde => {
                let denom = self.xi_one + mix.eval(r);
                let g = mix.grad(r);
                let c = b2 * self.xi_one * self.xi_one;
                let mut h = mix.hessian(r) * (c / (denom * denom));
                for s in 0..n {
                    for t in 0..n {
                        h[(s, t)] -= 2.0 * c * g[s] * g[t] / (denom * denom * denom);
                    }
                }
                h
            }
        };
        for s in 0..n {
            let q = 1.0 - r[s] * r[s];
            h[(s, s)] += match self.objective {
                Objective::Talagrand => -1.0 / ((1.0 - r[0]) * (1.0 - r[0])),
                _ => -lambda[s] * (1.0 + r[s] * r[s]) / (q * q),
            };
        }
        h
    }
}

fn entropy(lambda: &[f64], r: &[f64]) -> f64 {
    0.5 * lambda
        .iter()
        .zip(r)
        .map(|(&l, &v)| l * (-v * v).ln_1p())
        .sum::<f64>()
}

pub fn f_beta(model: &ModelSpec, beta: f64, r: &[f64]) -> Result<f64> {
    OverlapVector::check_landscape(r, model.n_species())?;
    Ok(Landscape::new(model, beta, Objective::Plain)?.value(r))
}

pub fn f_tilde_beta(model: &ModelSpec, beta: f64, r: &[f64]) -> Result<f64> {
    OverlapVector::check_landscape(r, model.n_species())?;
    Ok(Landscape::new(model, beta, Objective::Tilde)?.value(r))
}

pub fn g_beta(model: &ModelSpec, beta: f64, r: f64) -> Result<f64> {
    OverlapVector::check_landscape(&[r], model.n_species())?;
    Ok(Landscape::new(model, beta, Objective::Talagrand)?.value(&[r]))
}

pub fn f_grad(model: &ModelSpec, beta: f64, r: &[f64]) -> Result<Vec<f64>> {
    OverlapVector::check_landscape(r, model.n_species())?;
    Ok(Landscape::new(model, beta, Objective::Plain)?.grad(r))
}

pub fn f_hessian(model: &ModelSpec, beta: f64, r: &[f64]) -> Result<DMatrix<f64>> {
    OverlapVector::check_landscape(r, model.n_species())?;
    Ok(Landscape::new(model, beta, Objective::Plain)?.hessian(r))
}

/// `M(beta) = -diag(lambda) + beta^2 Q`, built from the degree-two
/// coefficients alone.
pub fn hessian_at_zero(model: &ModelSpec, beta: f64) -> DMatrix<f64> {
    let mut m = model.mixture().quadratic_part() * (beta * beta);
    for (s, &l) in model.lambda().iter().enumerate() {
        m[(s, s)] -= l;
    }
    m
}

#[derive(Debug, Clone, Copy)]
pub struct MaximizeOptions {
    pub tol_zero: f64,
    /// Grid points per axis for the certification pass when `|S| <= 3`.
    pub dense_per_axis: usize,
    /// Total grid budget for the coarse pass when `|S| > 3`.
    pub coarse_budget: usize,
    pub max_iter: usize,
    pub refine_starts: usize,
}

impl Default for MaximizeOptions {
    fn default() -> Self {
        Self {
            tol_zero: DEFAULT_TOL_ZERO,
            dense_per_axis: 200,
            coarse_budget: 200_000,
            max_iter: 200,
            refine_starts: 12,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MaximizeResult {
    pub argmax: OverlapVector,
    pub value: f64,
    pub starts_used: usize,
    pub converged: bool,
    pub iterations: usize,
    pub grid_points: usize,
    /// Distinct candidates within `tol_zero` of the maximum.
    pub near_maximizers: Vec<OverlapVector>,
}

#[derive(Debug, Clone)]
struct Candidate {
    r: Vec<f64>,
    value: f64,
    converged: bool,
}

fn norm2(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Larger value first, then smaller norm, then lexicographically smaller.
fn better(a: &Candidate, b: &Candidate) -> Ordering {
    b.value
        .total_cmp(&a.value)
        .then_with(|| norm2(&a.r).total_cmp(&norm2(&b.r)))
        .then_with(|| {
            a.r.iter()
                .zip(&b.r)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

/// Projected Newton ascent on `[0, DOMAIN_CLAMP]^S`, falling back to the
/// projected gradient where the free-block Hessian is not negative definite.
fn ascend(land: &Landscape, start: &[f64], max_iter: usize) -> (Candidate, usize) {
    let n = start.len();
    let project = |v: f64| v.clamp(0.0, DOMAIN_CLAMP);
    let mut r: Vec<f64> = start.iter().map(|&v| project(v)).collect();
    let mut fr = land.value(&r);
    for it in 0..max_iter {
        let g = land.grad(&r);
        let free: Vec<usize> = (0..n)
            .filter(|&s| !(r[s] <= 0.0 && g[s] <= 0.0) && !(r[s] >= DOMAIN_CLAMP && g[s] >= 0.0))
            .collect();
        let pg = free.iter().map(|&s| g[s].abs()).fold(0.0, f64::max);
        if pg <= 1e-13 {
            return (
                Candidate {
                    r,
                    value: fr,
                    converged: true,
                },
                it,
            );
        }
        let h = land.hessian(&r);
        let k = free.len();
        let neg_h = DMatrix::from_fn(k, k, |i, j| -h[(free[i], free[j])]);
        let g_free = nalgebra::DVector::from_fn(k, |i, _| g[free[i]]);
        let dir_free = match Cholesky::new(neg_h) {
            Some(ch) => ch.solve(&g_free),
            None => g_free.clone(),
        };
        let mut dir = vec![0.0; n];
        for (i, &s) in free.iter().enumerate() {
            dir[s] = dir_free[i];
        }
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-20 {
            let cand: Vec<f64> = (0..n).map(|s| project(r[s] + t * dir[s])).collect();
            let fc = land.value(&cand);
            let lin: f64 = (0..n).map(|s| g[s] * (cand[s] - r[s])).sum();
            if fc.is_finite() && fc >= fr + 1e-4 * lin && fc >= fr {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc)) = accepted else {
            // no ascent possible at machine precision
            return (
                Candidate {
                    r,
                    value: fr,
                    converged: pg <= 1e-7,
                },
                it,
            );
        };
        let step = (0..n).map(|s| (cand[s] - r[s]).abs()).fold(0.0, f64::max);
        r = cand;
        fr = fc;
        if step <= 1e-15 {
            return (
                Candidate {
                    r,
                    value: fr,
                    converged: true,
                },
                it + 1,
            );
        }
    }
    (
        Candidate {
            r,
            value: fr,
            converged: false,
        },
        max_iter,
    )
}

/// Evaluates the objective on the grid `{0, h, ..., (m-1) h}^S`, `h = 1/m`,
/// and returns the best grid point plus up to `keep` grid-local maxima.
fn grid_pass(land: &Landscape, per_axis: usize, keep: usize) -> (Candidate, Vec<Vec<f64>>, usize) {
    let n = land.n();
    let total = per_axis.pow(n as u32);
    let h = 1.0 / per_axis as f64;
    let decode = |mut idx: usize, buf: &mut [f64]| {
        for slot in buf.iter_mut().rev() {
            *slot = (idx % per_axis) as f64 * h;
            idx /= per_axis;
        }
    };
    let values: Vec<f64> = (0..total)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, idx| {
                decode(idx, buf);
                land.value(buf)
            },
        )
        .collect();
    let mut best = Candidate {
        r: vec![0.0; n],
        value: values[0],
        converged: true,
    };
    let mut buf = vec![0.0; n];
    let mut local: Vec<(f64, usize)> = Vec::new();
    let stride = |s: usize| per_axis.pow((n - 1 - s) as u32);
    for (idx, &v) in values.iter().enumerate() {
        decode(idx, &mut buf);
        let cand = Candidate {
            r: buf.clone(),
            value: v,
            converged: true,
        };
        if better(&cand, &best) == Ordering::Less {
            best = cand;
        }
        let is_local = (0..n).all(|s| {
            let coord = (idx / stride(s)) % per_axis;
            let lo = coord == 0 || values[idx - stride(s)] <= v;
            let hi = coord + 1 == per_axis || values[idx + stride(s)] <= v;
            lo && hi
        });
        if is_local {
            local.push((v, idx));
        }
    }
    local.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let starts = local
        .into_iter()
        .take(keep)
        .map(|(_, idx)| {
            let mut r = vec![0.0; n];
            decode(idx, &mut r);
            r
        })
        .collect();
    (best, starts, total)
}

/// Global maximum of the chosen objective over `[0, 1)^S`.
///
/// Multi-start projected Newton ascent from origin-perturbed and grid starts,
/// combined with a grid certification pass; the better candidate wins, ties
/// going to the smallest norm.
pub fn maximize(
    model: &ModelSpec,
    beta: f64,
    objective: Objective,
    opts: &MaximizeOptions,
) -> Result<MaximizeResult> {
    let land = Landscape::new(model, beta, objective)?;
    let n = model.n_species();
    if n > 6 {
        return Err(Error::Domain(format!(
            "maximization supports at most 6 species, model has {n}"
        )));
    }
    let per_axis = if n <= 3 {
        opts.dense_per_axis
    } else {
        ((opts.coarse_budget as f64).powf(1.0 / n as f64).floor() as usize).max(3)
    };
    let (grid_best, grid_starts, grid_points) = grid_pass(&land, per_axis, opts.refine_starts);

    let mut starts: Vec<Vec<f64>> = Vec::new();
    // push away from the origin along the Perron direction of the local Hessian
    let (_, v) = linalg::top_eigenpair(&land.hessian(&vec![0.0; n]));
    let v: Vec<f64> = v.iter().map(|c| c.abs()).collect();
    for alpha in [1e-3, 1e-2, 0.1] {
        starts.push(v.iter().map(|c| alpha * c).collect());
    }
    for c in [0.25, 0.5, 0.75, 0.9] {
        starts.push(vec![c; n]);
    }
    starts.extend(grid_starts);

    let refined: Vec<(Candidate, usize)> = starts
        .par_iter()
        .map(|s| ascend(&land, s, opts.max_iter))
        .collect();
    let iterations = refined.iter().map(|(_, it)| it).sum();

    let origin = Candidate {
        r: vec![0.0; n],
        value: land.value(&vec![0.0; n]),
        converged: true,
    };
    let mut pool: Vec<Candidate> = vec![origin, grid_best];
    pool.extend(refined.into_iter().map(|(c, _)| c));
    pool.retain(|c| c.value.is_finite());
    pool.sort_by(better);
    let best = pool[0].clone();

    let mut near: Vec<OverlapVector> = Vec::new();
    for c in pool.iter().filter(|c| c.value >= best.value - opts.tol_zero) {
        let distinct = near.iter().all(|q| {
            q.iter()
                .zip(&c.r)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                > 1e-4
        });
        if distinct {
            near.push(OverlapVector::new(c.r.clone()));
        }
    }

    let value = land.value(&best.r);
    Ok(MaximizeResult {
        argmax: OverlapVector::new(best.r),
        value,
        starts_used: starts.len(),
        converged: best.converged,
        iterations,
        grid_points,
        near_maximizers: near,
    })
}

pub fn maximize_f(model: &ModelSpec, beta: f64, objective: Objective) -> Result<MaximizeResult> {
    maximize(model, beta, objective, &MaximizeOptions::default())
}
