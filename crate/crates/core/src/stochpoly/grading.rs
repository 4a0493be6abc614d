use std::collections::BTreeMap;

use super::{Monomial, Registry, TermKey, Var};

/// Order-counting convention: a non-negative weight per variable.
/// Variables without a weight, and all noise factors, count zero.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Grading {
    weights: BTreeMap<Var, u32>,
}

impl Grading {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, v: Var, weight: u32) -> Self {
        self.set(v, weight);
        self
    }

    pub fn set(&mut self, v: Var, weight: u32) {
        if weight == 0 {
            self.weights.remove(&v);
        } else {
            self.weights.insert(v, weight);
        }
    }

    pub fn weight(&self, v: Var) -> u32 {
        self.weights.get(&v).copied().unwrap_or(0)
    }

    pub fn weights(&self) -> impl Iterator<Item = (Var, u32)> + '_ {
        self.weights.iter().map(|(&v, &w)| (v, w))
    }

    pub fn mono_degree(&self, m: &Monomial) -> u32 {
        m.pairs().iter().map(|&(v, e)| self.weight(v) * e).sum()
    }

    pub fn degree(&self, key: &TermKey) -> u32 {
        self.mono_degree(&key.mono)
    }

    pub fn to_names(&self, reg: &Registry) -> BTreeMap<String, u32> {
        self.weights
            .iter()
            .map(|(&v, &w)| (reg.name(v).to_string(), w))
            .collect()
    }
}
