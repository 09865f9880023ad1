//! Gaussian disorder, Hamiltonian evaluation and the exact covariance oracle.
//!
//! `H(sigma) = sqrt(N) sum_k sum_{i_1..i_k} Delta_{i_1..i_k} J_{i_1..i_k}
//! sigma_{i_1}..sigma_{i_k}` over all ordered tuples, where the tuple variance
//! depends only on the species counts `p` of the tuple:
//! `Delta_p^2 (prod_s p(s)!) / |p|! * prod_s N_s^{-p(s)}`.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mixture::MultiIndex;
use crate::montecarlo::finite::{overlap, Configuration, FiniteModel};
use crate::montecarlo::rng::{Domain, KeyedStream};

pub const DEFAULT_TENSOR_BUDGET: u128 = 100_000_000;
const FILL_CHUNK: usize = 1 << 15;

/// Per-tuple variance law. `MissingFactorial` drops the multinomial factor
/// and exists to check that the covariance oracle catches it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoefficientLaw {
    #[default]
    Exact,
    MissingFactorial,
}

impl CoefficientLaw {
    pub fn tuple_variance(self, p: &MultiIndex, delta_sq: f64, block_sizes: &[usize]) -> f64 {
        let sizes: f64 = p
            .degrees()
            .iter()
            .zip(block_sizes)
            .map(|(&d, &n)| (n as f64).powi(-(d as i32)))
            .product();
        let multinomial = match self {
            CoefficientLaw::Exact => {
                p.factorial_product() / crate::mixture::factorial(p.total())
            }
            CoefficientLaw::MissingFactorial => 1.0,
        };
        delta_sq * multinomial * sizes
    }
}

/// Dense coefficient tensor for one term of the mixture.
#[derive(Debug, Clone)]
pub struct TermTensor {
    pub index: MultiIndex,
    /// Position of the term in the canonical term order; keys its stream.
    pub term_id: u64,
    pub order: usize,
    /// `sqrt(N) * Delta_{i_1..i_k}` for tuples of this term.
    pub scale: f64,
    /// Species sequences `(s_1..s_k)` whose counts equal `index`.
    pub sequences: Vec<Vec<usize>>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DisorderSample {
    model: FiniteModel,
    seed: u64,
    terms: Vec<TermTensor>,
}

fn species_sequences(p: &MultiIndex) -> Vec<Vec<usize>> {
    fn rec(left: &mut [u32], cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left.iter().all(|&d| d == 0) {
            out.push(cur.clone());
            return;
        }
        for s in 0..left.len() {
            if left[s] > 0 {
                left[s] -= 1;
                cur.push(s);
                rec(left, cur, out);
                cur.pop();
                left[s] += 1;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut p.degrees().to_vec(), &mut Vec::new(), &mut out);
    out
}

/// Total scalars the dense tensors of `model` would need.
pub fn tensor_entries(model: &FiniteModel) -> u128 {
    model
        .spec()
        .mixture()
        .terms()
        .filter(|(_, c)| *c > 0.0)
        .map(|(p, _)| (model.n() as u128).pow(p.total()))
        .sum()
}

pub fn sample_disorder(model: &FiniteModel, seed: u64) -> Result<DisorderSample> {
    sample_disorder_with(model, seed, DEFAULT_TENSOR_BUDGET, CoefficientLaw::Exact)
}

pub fn sample_disorder_with(
    model: &FiniteModel,
    seed: u64,
    budget: u128,
    law: CoefficientLaw,
) -> Result<DisorderSample> {
    let n = model.n();
    let mut used: u128 = 0;
    let mut terms = Vec::new();
    for (term_id, (p, c)) in model.spec().mixture().terms().enumerate() {
        if c == 0.0 {
            continue;
        }
        let entries = (n as u128).pow(p.total());
        used += entries;
        if used > budget {
            return Err(Error::Budget {
                term: model.spec().term_label(p),
                entries: used,
                budget,
            });
        }
        let mut data = vec![0.0; entries as usize];
        data.par_chunks_mut(FILL_CHUNK)
            .enumerate()
            .for_each(|(chunk, out)| {
                KeyedStream::new(seed, Domain::Tensor, term_id as u64)
                    .at((chunk * FILL_CHUNK) as u64)
                    .fill_normal(out);
            });
        let variance = law.tuple_variance(p, c, model.block_sizes());
        terms.push(TermTensor {
            index: p.clone(),
            term_id: term_id as u64,
            order: p.total() as usize,
            scale: (n as f64).sqrt() * variance.sqrt(),
            sequences: species_sequences(p),
            data,
        });
    }
    Ok(DisorderSample {
        model: model.clone(),
        seed,
        terms,
    })
}

/// `sum_{i_j in I_{seq[j]}} T[i_1..i_k] prod_j sigma_{i_j}` with row-major `T`.
fn contract(
    model: &FiniteModel,
    data: &[f64],
    seq: &[usize],
    sigma: &[f64],
    depth: usize,
    prefix: usize,
) -> f64 {
    let n = model.n();
    let range = model.block(seq[depth]);
    if depth + 1 == seq.len() {
        let base = prefix * n;
        data[base + range.start..base + range.end]
            .iter()
            .zip(&sigma[range])
            .map(|(j, s)| j * s)
            .sum()
    } else {
        range
            .map(|i| sigma[i] * contract(model, data, seq, sigma, depth + 1, prefix * n + i))
            .sum()
    }
}

impl DisorderSample {
    pub fn model(&self) -> &FiniteModel {
        &self.model
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn terms(&self) -> &[TermTensor] {
        &self.terms
    }

    pub fn evaluate_h(&self, sigma: &Configuration) -> f64 {
        let x = sigma.coords();
        self.terms
            .iter()
            .map(|t| {
                let raw: f64 = t
                    .sequences
                    .iter()
                    .map(|seq| contract(&self.model, &t.data, seq, x, 0, 0))
                    .sum();
                t.scale * raw
            })
            .sum()
    }
}

/// Literal sum over all ordered index tuples of
/// `N * Delta^2_{i_1..i_k} prod_j sigma_{i_j} sigma'_{i_j}`.
pub fn covariance_tuple_sum(
    model: &FiniteModel,
    law: CoefficientLaw,
    a: &Configuration,
    b: &Configuration,
) -> f64 {
    let n = model.n();
    let species: Vec<usize> = (0..n).map(|i| model.species_of(i)).collect();
    let prod: Vec<f64> = a.coords().iter().zip(b.coords()).map(|(x, y)| x * y).collect();
    let mut by_order: HashMap<u32, HashMap<Vec<u32>, f64>> = HashMap::new();
    for (p, c) in model.spec().mixture().terms() {
        by_order
            .entry(p.total())
            .or_default()
            .insert(p.degrees().to_vec(), law.tuple_variance(p, c, model.block_sizes()));
    }

    struct Walk<'a> {
        n: usize,
        k: usize,
        species: &'a [usize],
        prod: &'a [f64],
        variances: &'a HashMap<Vec<u32>, f64>,
    }
    impl Walk<'_> {
        fn go(&self, depth: usize, counts: &mut Vec<u32>, acc: f64) -> f64 {
            if depth == self.k {
                return self.variances.get(counts.as_slice()).map_or(0.0, |v| v * acc);
            }
            let mut total = 0.0;
            for i in 0..self.n {
                let s = self.species[i];
                counts[s] += 1;
                total += self.go(depth + 1, counts, acc * self.prod[i]);
                counts[s] -= 1;
            }
            total
        }
    }

    let mut orders: Vec<_> = by_order.iter().collect();
    orders.sort_by_key(|(k, _)| **k);
    let sum: f64 = orders
        .into_iter()
        .map(|(&k, variances)| {
            let walk = Walk {
                n,
                k: k as usize,
                species: &species,
                prod: &prod,
                variances,
            };
            walk.go(0, &mut vec![0; model.n_species()], 1.0)
        })
        .sum();
    n as f64 * sum
}

/// `E H(sigma) H(sigma')` by the explicit tuple sum, certified against
/// `N xi(R(sigma, sigma'))` to relative error `1e-10`.
pub fn covariance_exact(model: &FiniteModel, a: &Configuration, b: &Configuration) -> Result<f64> {
    covariance_exact_with(model, CoefficientLaw::Exact, a, b)
}

pub fn covariance_exact_with(
    model: &FiniteModel,
    law: CoefficientLaw,
    a: &Configuration,
    b: &Configuration,
) -> Result<f64> {
    let tuple_sum = covariance_tuple_sum(model, law, a, b);
    let r = overlap(model, a, b);
    let mix = model.spec().mixture();
    let n = model.n() as f64;
    let closed_form = n * mix.eval(&r);
    // |xi|(|R|) bounds the size of the summands when odd powers cancel
    let abs_r: Vec<f64> = r.iter().map(|v| v.abs()).collect();
    let scale = closed_form.abs().max(n * mix.eval(&abs_r));
    let rel_err = if scale > 0.0 {
        (tuple_sum - closed_form).abs() / scale
    } else {
        (tuple_sum - closed_form).abs()
    };
    if rel_err > 1e-10 {
        return Err(Error::CoefficientLaw {
            tuple_sum,
            closed_form,
            rel_err,
        });
    }
    Ok(tuple_sum)
}
