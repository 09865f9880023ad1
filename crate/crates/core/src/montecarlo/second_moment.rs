//! Exact finite-N annealed second moment via the coarea formula.
//!
//! `E Z^2 = int_{[-1,1]^S} prod_s (w_{N_s-1}/w_{N_s}) (1 - r_s^2)^{(N_s-3)/2}
//! exp(N beta^2 (xi(1) + xi(r))) dr`, where `w_d` is the surface area of the
//! unit sphere in `R^d`. Everything is carried in the log domain.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::montecarlo::finite::FiniteModel;
use crate::montecarlo::quadrature::integrate;

/// `log` of the surface area of the unit sphere in `R^d`.
pub fn log_sphere_area(d: usize) -> f64 {
    let d = d as f64;
    std::f64::consts::LN_2 + 0.5 * d * std::f64::consts::PI.ln() - ln_gamma(0.5 * d)
}

/// Log normalizer of the density of one coordinate of a uniform point on
/// the unit sphere in `R^ns`.
pub fn log_overlap_norm(ns: usize) -> f64 {
    log_sphere_area(ns - 1) - log_sphere_area(ns)
}

fn log_weight(ns: usize, r: f64) -> f64 {
    if ns == 3 {
        log_overlap_norm(3)
    } else {
        log_overlap_norm(ns) + 0.5 * (ns as f64 - 3.0) * (-r * r).ln_1p()
    }
}

const REL_TOL: f64 = 1e-11;
const MAX_INTERVALS: usize = 4000;

/// `(1/N) log E Z_{N,beta}^2`, exact up to quadrature error.
pub fn log_e_z2_exact(model: &FiniteModel, beta: f64) -> Result<f64> {
    let k = model.n_species();
    if k > 3 {
        return Err(Error::Domain(format!(
            "exact second moment supports at most 3 species, got {k}"
        )));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::Domain(format!("beta = {beta} must be finite and >= 0")));
    }
    let n = model.n() as f64;
    let sizes = model.block_sizes().to_vec();
    let mix = model.spec().mixture();
    let energy = n * beta * beta;
    let log_integrand = |r: &[f64]| -> f64 {
        let w: f64 = sizes.iter().zip(r).map(|(&ns, &x)| log_weight(ns, x)).sum();
        w + energy * mix.eval(r)
    };

    // shift by a grid maximum so the integrand peaks near 1
    let per_axis: usize = match k {
        1 => 2001,
        2 => 401,
        _ => 81,
    };
    let node = |i: usize| -1.0 + 2.0 * (i as f64 + 0.5) / per_axis as f64;
    let mut shift = f64::NEG_INFINITY;
    let mut peak = vec![0.0; k];
    let mut idx = vec![0usize; k];
    let mut buf = vec![0.0; k];
    'grid: loop {
        for s in 0..k {
            buf[s] = node(idx[s]);
        }
        let v = log_integrand(&buf);
        if v > shift {
            shift = v;
            peak.copy_from_slice(&buf);
        }
        for slot in idx.iter_mut() {
            *slot += 1;
            if *slot < per_axis {
                continue 'grid;
            }
            *slot = 0;
        }
        break;
    }

    let breaks: Vec<Vec<f64>> = (0..k)
        .map(|s| {
            let width = 4.0 / (sizes[s] as f64).sqrt();
            let mut b = vec![-1.0, 0.0, 1.0, peak[s], peak[s] - width, peak[s] + width];
            b.retain(|v| (-1.0..=1.0).contains(v));
            b.sort_by(f64::total_cmp);
            b.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
            b
        })
        .collect();

    fn nested(
        depth: usize,
        prefix: &mut Vec<f64>,
        breaks: &[Vec<f64>],
        integrand: &dyn Fn(&[f64]) -> f64,
    ) -> Result<f64> {
        let last = depth + 1 == breaks.len();
        let res = integrate(
            |x| {
                prefix.push(x);
                let v = if last {
                    Ok(integrand(prefix))
                } else {
                    nested(depth + 1, prefix, breaks, integrand)
                };
                prefix.pop();
                v
            },
            &breaks[depth],
            REL_TOL,
            1e-300,
            MAX_INTERVALS,
        )?;
        Ok(res.value)
    }

    let shifted = |r: &[f64]| (log_integrand(r) - shift).exp();
    let integral = nested(0, &mut Vec::with_capacity(k), &breaks, &shifted)?;
    if integral <= 0.0 || !integral.is_finite() {
        return Err(Error::Quadrature {
            message: format!("non-positive integral {integral}"),
            residual: integral,
        });
    }
    Ok(beta * beta * mix.eval_scalar(1.0) + (shift + integral.ln()) / n)
}
