use std::ops::Range;

use crate::error::{Error, Result};
use crate::landscape::OverlapVector;
use crate::model::ModelSpec;
use crate::montecarlo::rng::KeyedStream;

/// A size-`N` discretization: species blocks `I_s` laid out contiguously in
/// species order.
#[derive(Debug, Clone)]
pub struct FiniteModel {
    spec: ModelSpec,
    n: usize,
    block_sizes: Vec<usize>,
    block_starts: Vec<usize>,
}

impl FiniteModel {
    /// Largest-remainder rounding of `lambda(s) N`, ties to the earlier
    /// species, then every block raised to at least 3 by taking from the
    /// largest block.
    pub fn build(spec: &ModelSpec, n: usize) -> Result<Self> {
        let k = spec.n_species();
        if n < 3 * k {
            return Err(Error::Config(format!(
                "N = {n} too small for {k} species (need N >= {})",
                3 * k
            )));
        }
        let quotas: Vec<f64> = spec.lambda().iter().map(|l| l * n as f64).collect();
        let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let assigned: usize = sizes.iter().sum();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            let fa = quotas[a] - quotas[a].floor();
            let fb = quotas[b] - quotas[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &s in order.iter().cycle().take(n.saturating_sub(assigned)) {
            sizes[s] += 1;
        }
        while let Some(s) = sizes.iter().position(|&v| v < 3) {
            let donor = (0..k)
                .filter(|&t| sizes[t] > 3)
                .max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)))
                .expect("N >= 3|S| leaves a donor");
            sizes[donor] -= 1;
            sizes[s] += 1;
        }
        Self::with_blocks(spec, sizes)
    }

    pub fn with_blocks(spec: &ModelSpec, block_sizes: Vec<usize>) -> Result<Self> {
        if block_sizes.len() != spec.n_species() {
            return Err(Error::Config("one block size per species required".into()));
        }
        if let Some(b) = block_sizes.iter().find(|&&b| b < 3) {
            return Err(Error::Config(format!("block size {b} below 3")));
        }
        let block_starts = block_sizes
            .iter()
            .scan(0, |acc, &b| {
                let start = *acc;
                *acc += b;
                Some(start)
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            n: block_sizes.iter().sum(),
            block_sizes,
            block_starts,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_species(&self) -> usize {
        self.block_sizes.len()
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn block(&self, s: usize) -> Range<usize> {
        self.block_starts[s]..self.block_starts[s] + self.block_sizes[s]
    }

    /// Species of coordinate `i`.
    pub fn species_of(&self, i: usize) -> usize {
        self.block_starts.partition_point(|&start| start <= i) - 1
    }
}

/// A point of the product of spheres `S(N_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration(Vec<f64>);

impl Configuration {
    pub fn new(model: &FiniteModel, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != model.n() {
            return Err(Error::Domain(format!(
                "configuration has {} coordinates, model has N = {}",
                coords.len(),
                model.n()
            )));
        }
        for s in 0..model.n_species() {
            let ns = model.block_sizes()[s] as f64;
            let sq: f64 = coords[model.block(s)].iter().map(|v| v * v).sum();
            if (sq - ns).abs() > 1e-9 * ns {
                return Err(Error::Domain(format!(
                    "block {s} has squared norm {sq}, expected {ns}"
                )));
            }
        }
        Ok(Self(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|v| -v).collect())
    }
}

pub fn overlap(model: &FiniteModel, a: &Configuration, b: &Configuration) -> OverlapVector {
    OverlapVector::new(
        (0..model.n_species())
            .map(|s| {
                let r = model.block(s);
                let dot: f64 = a.0[r.clone()].iter().zip(&b.0[r]).map(|(x, y)| x * y).sum();
                dot / model.block_sizes()[s] as f64
            })
            .collect(),
    )
}

fn normalized_gaussian(out: &mut [f64], stream: &mut KeyedStream, avoid: Option<&[f64]>) {
    let radius = (out.len() as f64).sqrt();
    loop {
        stream.fill_normal(out);
        if let Some(dir) = avoid {
            // Gram-Schmidt twice keeps the orthogonality at rounding level
            let dd: f64 = dir.iter().map(|v| v * v).sum();
            for _ in 0..2 {
                let c = out.iter().zip(dir).map(|(x, y)| x * y).sum::<f64>() / dd;
                for (x, y) in out.iter_mut().zip(dir) {
                    *x -= c * y;
                }
            }
        }
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-150 {
            for v in out.iter_mut() {
                *v *= radius / norm;
            }
            return;
        }
    }
}

/// Uniform draw from the product of spheres.
pub fn sample_uniform(model: &FiniteModel, stream: &mut KeyedStream) -> Configuration {
    let mut coords = vec![0.0; model.n()];
    for s in 0..model.n_species() {
        normalized_gaussian(&mut coords[model.block(s)], stream, None);
    }
    Configuration(coords)
}

/// Uniform draw from `{sigma : R(anchor, sigma) = r}`.
pub fn sample_on_band(
    model: &FiniteModel,
    anchor: &Configuration,
    r: &[f64],
    stream: &mut KeyedStream,
) -> Result<Configuration> {
    OverlapVector::check_landscape(r, model.n_species())?;
    let mut coords = vec![0.0; model.n()];
    for (s, &rs) in r.iter().enumerate() {
        let range = model.block(s);
        let star = &anchor.0[range.clone()];
        let block = &mut coords[range];
        normalized_gaussian(block, stream, Some(star));
        let c = (1.0 - rs * rs).sqrt();
        for (x, y) in block.iter_mut().zip(star) {
            *x = rs * y + c * *x;
        }
    }
    Ok(Configuration(coords))
}
