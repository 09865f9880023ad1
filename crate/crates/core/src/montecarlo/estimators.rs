//! Plain Monte Carlo estimators of free energies and level-set volumes.
//!
//! Sample `i` always draws from stream `(seed, domain, i)` and reductions run
//! in index order, so results do not depend on the thread count.

use rayon::prelude::*;
use serde::Serialize;

use crate::criticality::serialize_extended;
use crate::error::{Error, Result};
use crate::montecarlo::disorder::DisorderSample;
use crate::montecarlo::finite::{sample_on_band, sample_uniform, Configuration};
use crate::montecarlo::rng::{Domain, KeyedStream};

pub const MIN_SAMPLES: usize = 100;
const LOW_ESS: f64 = 10.0;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EstimatorResult {
    #[serde(serialize_with = "serialize_extended")]
    pub estimate: f64,
    #[serde(serialize_with = "serialize_extended")]
    pub std_error: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Effective sample size of the exponential weights, when weighted.
    pub ess: Option<f64>,
    /// Number of samples inside the set, for level-set estimates.
    pub hits: Option<usize>,
    pub warnings: Vec<String>,
}

/// Fixed-order pairwise summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        v.iter().sum()
    } else {
        let (a, b) = v.split_at(v.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// `log mean exp(v)`, its delta-method standard error and the effective
/// sample size of the weights.
pub fn log_mean_exp(v: &[f64]) -> (f64, f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let sum = pairwise_sum(&w);
    let mean = sum / n;
    let sq: Vec<f64> = w.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0).max(1.0);
    let w2: Vec<f64> = w.iter().map(|x| x * x).collect();
    let ess = sum * sum / pairwise_sum(&w2);
    (m + mean.ln(), var.sqrt() / (n.sqrt() * mean), ess)
}

fn check_samples(n: usize) -> Result<()> {
    if n < MIN_SAMPLES {
        return Err(Error::Config(format!(
            "need at least {MIN_SAMPLES} samples, got {n}"
        )));
    }
    Ok(())
}

fn energies<F>(n_samples: usize, draw: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    (0..n_samples).into_par_iter().map(draw).collect()
}

fn weighted(values: &[f64], n_model: usize, seed: u64) -> EstimatorResult {
    let n = n_model as f64;
    let (lme, se, ess) = log_mean_exp(values);
    let mut warnings = Vec::new();
    if ess < LOW_ESS {
        warnings.push(format!("effective sample size {ess:.2} below {LOW_ESS}"));
    }
    EstimatorResult {
        estimate: lme / n,
        std_error: se / n,
        n_samples: values.len(),
        seed,
        ess: Some(ess),
        hits: None,
        warnings,
    }
}

/// `(1/N) log` of the uniform-sample mean of `exp(beta H)`.
pub fn estimate_free_energy(
    disorder: &DisorderSample,
    beta: f64,
    n_samples: usize,
    seed: u64,
) -> Result<EstimatorResult> {
    check_samples(n_samples)?;
    let model = disorder.model();
    let v = energies(n_samples, |i| {
        let sigma = sample_uniform(model, &mut KeyedStream::new(seed, Domain::Uniform, i as u64));
        beta * disorder.evaluate_h(&sigma)
    });
    Ok(weighted(&v, model.n(), seed))
}

/// `(1/N) log mu{ |H/N - beta xi(1)| < epsilon }` by hit counting.
pub fn estimate_level_set(
    disorder: &DisorderSample,
    beta: f64,
    epsilon: f64,
    n_samples: usize,
    seed: u64,
) -> Result<EstimatorResult> {
    check_samples(n_samples)?;
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(Error::Domain(format!("epsilon = {epsilon} must be positive")));
    }
    let model = disorder.model();
    let n = model.n() as f64;
    let target = beta * model.spec().xi_one();
    let inside: Vec<f64> = energies(n_samples, |i| {
        let sigma = sample_uniform(model, &mut KeyedStream::new(seed, Domain::Uniform, i as u64));
        f64::from(u8::from((disorder.evaluate_h(&sigma) / n - target).abs() < epsilon))
    });
    let hits = inside.iter().filter(|&&x| x > 0.0).count();
    let p = hits as f64 / n_samples as f64;
    let mut warnings = Vec::new();
    let (estimate, std_error) = if hits == 0 {
        warnings.push("no samples hit the level set".to_string());
        (f64::NEG_INFINITY, f64::INFINITY)
    } else {
        let se_p = (p * (1.0 - p) / n_samples as f64).sqrt();
        (p.ln() / n, se_p / p / n)
    };
    Ok(EstimatorResult {
        estimate,
        std_error,
        n_samples,
        seed,
        ess: None,
        hits: Some(hits),
        warnings,
    })
}

/// Free energy restricted to the exact-overlap band around `anchor`.
pub fn estimate_band_free_energy(
    disorder: &DisorderSample,
    anchor: &Configuration,
    r: &[f64],
    beta: f64,
    n_samples: usize,
    seed: u64,
) -> Result<EstimatorResult> {
    check_samples(n_samples)?;
    let model = disorder.model();
    // validate once so the parallel draws cannot fail
    sample_on_band(model, anchor, r, &mut KeyedStream::new(seed, Domain::Band, 0))?;
    let v = energies(n_samples, |i| {
        let mut st = KeyedStream::new(seed, Domain::Band, i as u64);
        let sigma = sample_on_band(model, anchor, r, &mut st).expect("validated overlap");
        beta * disorder.evaluate_h(&sigma)
    });
    Ok(weighted(&v, model.n(), seed))
}

/// Uniform draw conditioned on the level set, by rejection.
pub fn sample_level_set_anchor(
    disorder: &DisorderSample,
    beta: f64,
    epsilon: f64,
    seed: u64,
    max_tries: usize,
) -> Result<Configuration> {
    let model = disorder.model();
    let n = model.n() as f64;
    let target = beta * model.spec().xi_one();
    for i in 0..max_tries {
        let sigma = sample_uniform(model, &mut KeyedStream::new(seed, Domain::Anchor, i as u64));
        if (disorder.evaluate_h(&sigma) / n - target).abs() < epsilon {
            return Ok(sigma);
        }
    }
    Err(Error::NonConvergence(format!(
        "no level-set point found in {max_tries} draws"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_mean_exp_basics() {
        let (l, se, ess) = log_mean_exp(&[0.0; 10]);
        assert_eq!(l, 0.0);
        assert_eq!(se, 0.0);
        assert!((ess - 10.0).abs() < 1e-12);
        let (l, _, _) = log_mean_exp(&[1000.0, 1000.0 + 2f64.ln()]);
        assert!((l - (1000.0 + 1.5f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let v: Vec<f64> = (0..1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
    }
}
