//! Multi-species mixture polynomials.
//!
//! A mixture is the covariance polynomial
//! `xi(x) = sum_p delta_sq[p] * prod_s x(s)^p(s)` with nonnegative
//! coefficients, indexed by multi-indices `p` over the species. Coefficients
//! are always stored as variances (the squared `Delta_p`).

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Coefficients of a recentred mixture below this are discarded.
pub const COEFF_FLOOR: f64 = 1e-300;

/// Ordered species labels with their limiting proportions.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesSet {
    names: Vec<String>,
    lambda: Vec<f64>,
}

impl SpeciesSet {
    pub fn new(names: Vec<String>, lambda: Vec<f64>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidModel("species set is empty".into()));
        }
        if names.len() != lambda.len() {
            return Err(Error::InvalidModel(format!(
                "{} species names but {} proportions",
                names.len(),
                lambda.len()
            )));
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(Error::InvalidModel(format!("duplicate species `{name}`")));
            }
        }
        let single = names.len() == 1;
        for (name, &l) in names.iter().zip(&lambda) {
            let ok = if single {
                (l - 1.0).abs() <= 1e-12
            } else {
                l > 0.0 && l < 1.0
            };
            if !l.is_finite() || !ok {
                return Err(Error::InvalidModel(format!(
                    "species `{name}`: lambda = {l} outside the admissible range"
                )));
            }
        }
        let total: f64 = lambda.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!(
                "species proportions sum to {total}, expected 1"
            )));
        }
        Ok(Self { names, lambda })
    }

    pub fn single(name: &str) -> Self {
        Self {
            names: vec![name.to_string()],
            lambda: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Per-species degrees `p(s)`, positionally aligned with a [`SpeciesSet`].
///
/// The derived ordering is lexicographic in species order, which gives every
/// coefficient map a unique canonical iteration order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(degrees: Vec<u32>) -> Self {
        Self(degrees)
    }

    /// `degree` on species `s`, zero elsewhere.
    pub fn pure(n_species: usize, s: usize, degree: u32) -> Self {
        let mut d = vec![0; n_species];
        d[s] = degree;
        Self(d)
    }

    pub fn degrees(&self) -> &[u32] {
        &self.0
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn n_species(&self) -> usize {
        self.0.len()
    }

    /// True when every degree outside species `s` is zero.
    pub fn supported_on(&self, s: usize) -> bool {
        self.0.iter().enumerate().all(|(t, &d)| t == s || d == 0)
    }

    /// `prod_s p(s)!`
    pub fn factorial_product(&self) -> f64 {
        self.0.iter().map(|&d| factorial(d)).product()
    }

    fn monomial(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .map(|(&d, &xs)| xs.powi(d as i32))
            .product()
    }
}

pub(crate) fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// Finite nonnegative combination of monomials over a fixed number of species.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    n_species: usize,
    terms: BTreeMap<MultiIndex, f64>,
    min_degree: u32,
}

impl Mixture {
    /// Builds a mixture, rejecting negative coefficients, degree vectors of the
    /// wrong length, repeated multi-indices and total degrees below `min_degree`.
    pub fn new<I>(n_species: usize, terms: I, min_degree: u32) -> Result<Self>
    where
        I: IntoIterator<Item = (MultiIndex, f64)>,
    {
        if n_species == 0 {
            return Err(Error::InvalidModel("mixture over zero species".into()));
        }
        if !(1..=2).contains(&min_degree) {
            return Err(Error::InvalidModel(format!(
                "min_degree must be 1 or 2, got {min_degree}"
            )));
        }
        let mut map = BTreeMap::new();
        for (p, c) in terms {
            if p.n_species() != n_species {
                return Err(Error::InvalidModel(format!(
                    "multi-index {:?} has {} entries, expected {n_species}",
                    p.degrees(),
                    p.n_species()
                )));
            }
            if !c.is_finite() || c < 0.0 {
                return Err(Error::InvalidModel(format!(
                    "coefficient {c} for {:?} must be finite and nonnegative",
                    p.degrees()
                )));
            }
            if p.total() < min_degree {
                return Err(Error::InvalidModel(format!(
                    "multi-index {:?} has total degree {} < {min_degree}",
                    p.degrees(),
                    p.total()
                )));
            }
            if map.insert(p.clone(), c).is_some() {
                return Err(Error::InvalidModel(format!(
                    "multi-index {:?} listed twice",
                    p.degrees()
                )));
            }
        }
        Ok(Self {
            n_species,
            terms: map,
            min_degree,
        })
    }

    pub fn n_species(&self) -> usize {
        self.n_species
    }

    pub fn min_degree(&self) -> u32 {
        self.min_degree
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.terms.iter().map(|(p, &c)| (p, c))
    }

    pub fn coefficient(&self, p: &MultiIndex) -> f64 {
        self.terms.get(p).copied().unwrap_or(0.0)
    }

    pub fn max_degree(&self) -> u32 {
        self.terms.keys().map(MultiIndex::total).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n_species);
        self.terms.iter().map(|(p, &c)| c * p.monomial(x)).sum()
    }

    /// `xi(a)` at the constant vector `x = a`.
    pub fn eval_scalar(&self, a: f64) -> f64 {
        self.eval(&vec![a; self.n_species])
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n_species;
        let mut g = vec![0.0; n];
        for (p, &c) in &self.terms {
            let d = p.degrees();
            for s in 0..n {
                if d[s] == 0 {
                    continue;
                }
                let mut term = c * f64::from(d[s]) * x[s].powi(d[s] as i32 - 1);
                for t in (0..n).filter(|&t| t != s) {
                    term *= x[t].powi(d[t] as i32);
                }
                g[s] += term;
            }
        }
        g
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.n_species;
        let mut h = DMatrix::zeros(n, n);
        for (p, &c) in &self.terms {
            let d = p.degrees();
            for s in 0..n {
                for t in s..n {
                    let term = if s == t {
                        if d[s] < 2 {
                            continue;
                        }
                        let mut v = c
                            * f64::from(d[s] * (d[s] - 1))
                            * x[s].powi(d[s] as i32 - 2);
                        for u in (0..n).filter(|&u| u != s) {
                            v *= x[u].powi(d[u] as i32);
                        }
                        v
                    } else {
                        if d[s] == 0 || d[t] == 0 {
                            continue;
                        }
                        let mut v = c
                            * f64::from(d[s] * d[t])
                            * x[s].powi(d[s] as i32 - 1)
                            * x[t].powi(d[t] as i32 - 1);
                        for u in (0..n).filter(|&u| u != s && u != t) {
                            v *= x[u].powi(d[u] as i32);
                        }
                        v
                    };
                    h[(s, t)] += term;
                    if s != t {
                        h[(t, s)] += term;
                    }
                }
            }
        }
        h
    }

    /// Degree-two coefficient matrix: `Q(s,s) = 2 delta_sq[2e_s]`,
    /// `Q(s,t) = delta_sq[e_s + e_t]`. Read straight off the coefficient map.
    pub fn quadratic_part(&self) -> DMatrix<f64> {
        let n = self.n_species;
        let mut q = DMatrix::zeros(n, n);
        for (p, &c) in self.terms.iter().filter(|(p, _)| p.total() == 2) {
            let support: Vec<usize> = (0..n).filter(|&s| p.degrees()[s] > 0).collect();
            match support.as_slice() {
                [s] => q[(*s, *s)] += 2.0 * c,
                [s, t] => {
                    q[(*s, *t)] += c;
                    q[(*t, *s)] += c;
                }
                _ => unreachable!("total degree two has one or two supported species"),
            }
        }
        q
    }

    /// Recentred mixture `x -> xi((1 - r^2) x + r^2) - xi(r^2)`.
    ///
    /// The result has degree-one terms in general, so its `min_degree` is 1.
    pub fn tilde_transform(&self, r: &[f64]) -> Result<Mixture> {
        if r.len() != self.n_species {
            return Err(Error::Domain(format!(
                "overlap has {} entries, mixture has {} species",
                r.len(),
                self.n_species
            )));
        }
        if let Some(bad) = r.iter().find(|v| !(0.0..1.0).contains(*v)) {
            return Err(Error::Domain(format!(
                "recentring overlap {bad} outside [0, 1)"
            )));
        }
        let shrink: Vec<f64> = r.iter().map(|v| 1.0 - v * v).collect();
        let shift: Vec<f64> = r.iter().map(|v| v * v).collect();
        let mut out: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        for (outer, &c) in &self.terms {
            let top = outer.degrees();
            let mut p = vec![0u32; self.n_species];
            loop {
                if p.iter().any(|&d| d > 0) {
                    let mut w = c;
                    for s in 0..self.n_species {
                        w *= binomial(top[s], p[s])
                            * shrink[s].powi(p[s] as i32)
                            * shift[s].powi((top[s] - p[s]) as i32);
                    }
                    *out.entry(MultiIndex(p.clone())).or_insert(0.0) += w;
                }
                // odometer over 0 <= p <= top
                let mut s = 0;
                while s < self.n_species {
                    if p[s] < top[s] {
                        p[s] += 1;
                        break;
                    }
                    p[s] = 0;
                    s += 1;
                }
                if s == self.n_species {
                    break;
                }
            }
        }
        out.retain(|_, c| *c >= COEFF_FLOOR);
        Ok(Mixture {
            n_species: self.n_species,
            terms: out,
            min_degree: 1,
        })
    }

    /// Derivative of the recentred mixture in the direction `x`, evaluated at `z`:
    /// `sum_s (d_s xi(z) x(s) (1 - z(s)) - d_s xi(0) x(s))`.
    pub fn eta_direction(&self, x: &[f64], z: &[f64]) -> f64 {
        let gz = self.grad(z);
        let g0 = self.grad(&vec![0.0; self.n_species]);
        (0..self.n_species)
            .map(|s| gz[s] * x[s] * (1.0 - z[s]) - g0[s] * x[s])
            .sum()
    }

    /// Positivity of `xi` on the unit box minus the origin.
    ///
    /// With nonnegative coefficients this holds exactly when every species
    /// carries a positive pure-support term, since an axis vector kills every
    /// mixed monomial.
    pub fn satisfies_assumption_a(&self) -> bool {
        (0..self.n_species).all(|s| {
            self.terms
                .iter()
                .any(|(p, &c)| c > 0.0 && p.total() > 0 && p.supported_on(s))
        })
    }
}
