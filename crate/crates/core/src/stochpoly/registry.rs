use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::PolyError;

/// Role a variable plays in a slow/fast system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarKind {
    Slow,
    Fast,
    /// Small parameter treated as a state with zero dynamics (ε, μ).
    Grading,
    /// Noise amplitude (σ).
    Amplitude,
}

impl fmt::Display for VarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            VarKind::Slow => "slow",
            VarKind::Fast => "fast",
            VarKind::Grading => "grading",
            VarKind::Amplitude => "amplitude",
        };
        f.write_str(s)
    }
}

/// Index of a registered variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) u16);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Ordered set of named variables. Polynomials built over the same registry
/// can be combined; the registration order fixes the term order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Registry {
    names: Vec<String>,
    kinds: Vec<VarKind>,
    index: HashMap<String, Var>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, kind: VarKind) -> Result<Var, PolyError> {
        if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
            return Err(PolyError::BadName(name.to_string()));
        }
        if self.index.contains_key(name) {
            return Err(PolyError::DuplicateVariable(name.to_string()));
        }
        let v = Var(u16::try_from(self.names.len()).expect("too many variables"));
        self.names.push(name.to_string());
        self.kinds.push(kind);
        self.index.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn lookup(&self, name: &str) -> Option<Var> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Result<Var, PolyError> {
        self.lookup(name)
            .ok_or_else(|| PolyError::UnknownVariable(name.to_string()))
    }

    pub fn name(&self, v: Var) -> &str {
        &self.names[v.index()]
    }

    pub fn kind(&self, v: Var) -> VarKind {
        self.kinds[v.index()]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        (0..self.names.len()).map(|i| Var(i as u16))
    }

    pub fn vars_of(&self, kind: VarKind) -> Vec<Var> {
        self.vars().filter(|&v| self.kind(v) == kind).collect()
    }
}
