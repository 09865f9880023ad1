//! The asymptotic model `(xi, lambda)` and its JSON file format.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mixture::{Mixture, MultiIndex, SpeciesSet};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SpeciesEntry {
    pub name: String,
    pub lambda: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TermEntry {
    pub degrees: BTreeMap<String, u32>,
    pub delta_sq: f64,
}

/// On-disk model document.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub species: Vec<SpeciesEntry>,
    pub terms: Vec<TermEntry>,
}

/// Species proportions together with a base mixture (`min_degree` 2).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    species: SpeciesSet,
    mixture: Mixture,
}

impl ModelSpec {
    pub fn new(species: SpeciesSet, mixture: Mixture) -> Result<Self> {
        if mixture.n_species() != species.len() {
            return Err(Error::InvalidModel(format!(
                "mixture over {} species but {} species declared",
                mixture.n_species(),
                species.len()
            )));
        }
        if mixture.min_degree() != 2 {
            return Err(Error::InvalidModel(
                "base models need every term of total degree >= 2".into(),
            ));
        }
        Ok(Self { species, mixture })
    }

    /// Single-species model from `(degree, delta_sq)` pairs.
    pub fn single_species(terms: &[(u32, f64)]) -> Result<Self> {
        let mixture = Mixture::new(
            1,
            terms.iter().map(|&(d, c)| (MultiIndex::new(vec![d]), c)),
            2,
        )?;
        Self::new(SpeciesSet::single("s"), mixture)
    }

    pub fn species(&self) -> &SpeciesSet {
        &self.species
    }

    pub fn mixture(&self) -> &Mixture {
        &self.mixture
    }

    pub fn lambda(&self) -> &[f64] {
        self.species.lambda()
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn xi_one(&self) -> f64 {
        self.mixture.eval_scalar(1.0)
    }

    pub fn from_file_doc(doc: &ModelFile) -> Result<Self> {
        let names: Vec<String> = doc.species.iter().map(|s| s.name.clone()).collect();
        let lambda: Vec<f64> = doc.species.iter().map(|s| s.lambda).collect();
        let species = SpeciesSet::new(names, lambda)?;
        let mut terms = Vec::with_capacity(doc.terms.len());
        for (k, t) in doc.terms.iter().enumerate() {
            let mut deg = vec![0u32; species.len()];
            for (name, &d) in &t.degrees {
                let s = species.index_of(name).ok_or_else(|| {
                    Error::InvalidModel(format!("terms[{k}].degrees names unknown species `{name}`"))
                })?;
                deg[s] = d;
            }
            terms.push((MultiIndex::new(deg), t.delta_sq));
        }
        let mixture = Mixture::new(species.len(), terms, 2)?;
        Self::new(species, mixture)
    }

    /// Canonical document: species in declaration order, terms in multi-index
    /// order, zero degrees omitted.
    pub fn to_file_doc(&self) -> ModelFile {
        let names = self.species.names();
        ModelFile {
            species: names
                .iter()
                .zip(self.species.lambda())
                .map(|(name, &lambda)| SpeciesEntry {
                    name: name.clone(),
                    lambda,
                })
                .collect(),
            terms: self
                .mixture
                .terms()
                .map(|(p, c)| TermEntry {
                    degrees: p
                        .degrees()
                        .iter()
                        .enumerate()
                        .filter(|(_, &d)| d > 0)
                        .map(|(s, &d)| (names[s].clone(), d))
                        .collect(),
                    delta_sq: c,
                })
                .collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidModel(format!("malformed model document: {e}")))?;
        Self::from_file_doc(&doc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file_doc()).expect("model document serializes")
    }

    /// Hex SHA-256 of the compact canonical document.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(&self.to_file_doc()).expect("model document serializes");
        hex::encode(Sha256::digest(canon.as_bytes()))
    }

    pub fn term_label(&self, p: &MultiIndex) -> String {
        let parts: Vec<String> = p
            .degrees()
            .iter()
            .zip(self.species.names())
            .filter(|(&d, _)| d > 0)
            .map(|(d, n)| format!("{n}^{d}"))
            .collect();
        parts.join("*")
    }
}
