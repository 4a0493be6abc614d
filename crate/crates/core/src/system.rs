//! Slow/fast system definitions and their JSON file format.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stochpoly::{
    parse_rational, Grading, Monomial, NoiseMonomial, PolyError, PolyJson, Registry, StochPoly, TermKey, Var, VarKind,
    Q,
};

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("field `{field}`: {msg}")]
    Field { field: String, msg: String },
    #[error("spectral condition violated: {0}")]
    Spectral(String),
    #[error("unknown grading `{0}`")]
    UnknownGrading(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

fn field(field: impl Into<String>, msg: impl Into<String>) -> SystemError {
    SystemError::Field {
        field: field.into(),
        msg: msg.into(),
    }
}

/// On-disk description of a system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub variables: Vec<VariableSpec>,
    pub rhs: BTreeMap<String, PolyJson>,
    /// Optional declared linear blocks, checked against the right-hand sides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<LinearSpec>,
    /// Named order-counting conventions: variable name to weight.
    #[serde(default)]
    pub gradings: BTreeMap<String, BTreeMap<String, u32>>,
    /// Default numeric values of grading parameters and amplitudes.
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableSpec {
    pub name: String,
    pub kind: VarKind,
    /// Name of the corresponding normal-form coordinate (state variables only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSpec {
    pub slow: Vec<Vec<String>>,
    pub fast: Vec<Vec<String>>,
}

/// A system `x' = A x + f(x, y, p)`, `y' = B y + g(x, y, p)` with grading
/// parameters `p` of zero dynamics. Noise enters through noise factors in
/// the right-hand sides.
#[derive(Clone, Debug, PartialEq)]
pub struct SlowFastSystem {
    pub name: String,
    pub reg: Arc<Registry>,
    pub slow: Vec<Var>,
    pub fast: Vec<Var>,
    pub params: Vec<Var>,
    pub amplitudes: Vec<Var>,
    /// Original state variable to its normal-form coordinate.
    pub new_coords: BTreeMap<Var, Var>,
    pub rhs: BTreeMap<Var, StochPoly>,
    pub gradings: BTreeMap<String, Grading>,
    pub parameters: BTreeMap<Var, f64>,
}

impl SlowFastSystem {
    pub fn from_json_str(s: &str) -> Result<Self, SystemError> {
        let file: SystemFile = serde_json::from_str(s).map_err(|e| SystemError::Parse(e.to_string()))?;
        Self::from_file(&file)
    }

    pub fn from_file(file: &SystemFile) -> Result<Self, SystemError> {
        let mut reg = Registry::new();
        let mut slow = Vec::new();
        let mut fast = Vec::new();
        let mut params = Vec::new();
        let mut amplitudes = Vec::new();
        for (i, spec) in file.variables.iter().enumerate() {
            let v = reg
                .register(&spec.name, spec.kind)
                .map_err(|e| field(format!("variables[{i}].name"), e.to_string()))?;
            match spec.kind {
                VarKind::Slow => slow.push(v),
                VarKind::Fast => fast.push(v),
                VarKind::Grading => params.push(v),
                VarKind::Amplitude => amplitudes.push(v),
            }
            if spec.new.is_some() && !matches!(spec.kind, VarKind::Slow | VarKind::Fast) {
                return Err(field(
                    format!("variables[{i}].new"),
                    "only state variables have new coordinates",
                ));
            }
        }
        let mut new_coords = BTreeMap::new();
        for (i, spec) in file.variables.iter().enumerate() {
            if let Some(n) = &spec.new {
                let nv = reg
                    .register(n, spec.kind)
                    .map_err(|e| field(format!("variables[{i}].new"), e.to_string()))?;
                new_coords.insert(reg.get(&spec.name)?, nv);
            }
        }
        let reg = Arc::new(reg);
        let mut rhs = BTreeMap::new();
        for (name, pj) in &file.rhs {
            let v = reg
                .get(name)
                .map_err(|_| field(format!("rhs.{name}"), "not a declared variable"))?;
            let p = StochPoly::from_json(&reg, pj).map_err(|e| field(format!("rhs.{name}"), e.to_string()))?;
            rhs.insert(v, p);
        }
        let mut gradings = BTreeMap::new();
        for (gname, weights) in &file.gradings {
            let mut g = Grading::new();
            for (vname, &w) in weights {
                let v = reg
                    .get(vname)
                    .map_err(|e| field(format!("gradings.{gname}.{vname}"), e.to_string()))?;
                g.set(v, w);
            }
            gradings.insert(gname.clone(), g);
        }
        let mut parameters = BTreeMap::new();
        for (pname, &val) in &file.parameters {
            let v = reg
                .get(pname)
                .map_err(|e| field(format!("parameters.{pname}"), e.to_string()))?;
            parameters.insert(v, val);
        }
        let sys = SlowFastSystem {
            name: file.name.clone(),
            reg,
            slow,
            fast,
            params,
            amplitudes,
            new_coords,
            rhs,
            gradings,
            parameters,
        };
        sys.validate()?;
        if let Some(lin) = &file.linear {
            sys.check_declared_linear(lin)?;
        }
        Ok(sys)
    }

    pub fn to_file(&self) -> SystemFile {
        let name = |v: Var| self.reg.name(v).to_string();
        let mut variables = Vec::new();
        let originals = self
            .slow
            .iter()
            .chain(&self.fast)
            .chain(&self.params)
            .chain(&self.amplitudes);
        for &v in originals {
            variables.push(VariableSpec {
                name: name(v),
                kind: self.reg.kind(v),
                new: self.new_coords.get(&v).map(|&n| name(n)),
            });
        }
        let fmt = |m: Vec<Vec<Q>>| m.into_iter().map(|r| r.iter().map(Q::to_string).collect()).collect();
        SystemFile {
            name: self.name.clone(),
            description: None,
            variables,
            rhs: self.rhs.iter().map(|(&v, p)| (name(v), p.to_json())).collect(),
            linear: Some(LinearSpec {
                slow: fmt(self.linear_block(&self.slow, &self.slow)),
                fast: fmt(self.linear_block(&self.fast, &self.fast)),
            }),
            gradings: self
                .gradings
                .iter()
                .map(|(k, g)| (k.clone(), g.to_names(&self.reg)))
                .collect(),
            parameters: self.parameters.iter().map(|(&v, &x)| (name(v), x)).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), SystemError> {
        for &v in self.slow.iter().chain(&self.fast) {
            if !self.rhs.contains_key(&v) {
                return Err(field(format!("rhs.{}", self.reg.name(v)), "missing equation"));
            }
        }
        for (&v, p) in &self.rhs {
            let vname = self.reg.name(v);
            match self.reg.kind(v) {
                VarKind::Grading if !p.is_zero() => {
                    return Err(field(
                        format!("rhs.{vname}"),
                        "grading parameters must have zero dynamics",
                    ));
                }
                VarKind::Amplitude => {
                    return Err(field(format!("rhs.{vname}"), "amplitudes have no equation"));
                }
                _ => {}
            }
            if self.new_coords.values().any(|&n| n == v) {
                return Err(field(
                    format!("rhs.{vname}"),
                    "equations are given in original variables",
                ));
            }
            if let Some(&n) = self.new_coords.values().find(|&&n| p.depends_on(n)) {
                return Err(field(
                    format!("rhs.{vname}"),
                    format!("uses normal-form coordinate `{}`", self.reg.name(n)),
                ));
            }
            if p.has_future() {
                return Err(field(
                    format!("rhs.{vname}"),
                    "anticipatory convolution in a model equation",
                ));
            }
        }
        Ok(())
    }

    fn check_declared_linear(&self, lin: &LinearSpec) -> Result<(), SystemError> {
        for (label, vars, declared) in [("slow", &self.slow, &lin.slow), ("fast", &self.fast, &lin.fast)] {
            let actual = self.linear_block(vars, vars);
            let parsed: Result<Vec<Vec<Q>>, _> = declared
                .iter()
                .map(|r| r.iter().map(|s| parse_rational(s)).collect())
                .collect();
            let parsed = parsed.map_err(|e| field(format!("linear.{label}"), e.to_string()))?;
            if parsed != actual {
                return Err(field(
                    format!("linear.{label}"),
                    "declared block disagrees with the right-hand sides",
                ));
            }
        }
        Ok(())
    }

    /// Coefficients of the linear terms `d rhs[row] / d col` at the origin
    /// with grading parameters set to zero.
    pub fn linear_block(&self, rows: &[Var], cols: &[Var]) -> Vec<Vec<Q>> {
        rows.iter()
            .map(|r| {
                cols.iter()
                    .map(|&c| self.rhs[r].coefficient(&TermKey::new(Monomial::var(c, 1), NoiseMonomial::one())))
                    .collect()
            })
            .collect()
    }

    /// Checks numerically that the slow block has eigenvalues on the imaginary
    /// axis and the fast block has eigenvalues with negative real part.
    pub fn check_spectrum(&self) -> Result<(), SystemError> {
        let eig = |vars: &[Var]| {
            let n = vars.len();
            let block = self.linear_block(vars, vars);
            let m = DMatrix::from_fn(n, n, |i, j| block[i][j].to_f64().unwrap_or(f64::NAN));
            m.complex_eigenvalues()
        };
        let tol = 1e-9;
        for ev in eig(&self.slow).iter() {
            if ev.re.abs() > tol {
                return Err(SystemError::Spectral(format!(
                    "slow block eigenvalue {ev} off the imaginary axis"
                )));
            }
        }
        for ev in eig(&self.fast).iter() {
            if ev.re >= -tol {
                return Err(SystemError::Spectral(format!(
                    "fast block eigenvalue {ev} is not decaying"
                )));
            }
        }
        Ok(())
    }

    /// Decay rates of a diagonal fast block.
    pub fn fast_rates(&self) -> Result<Vec<Q>, SystemError> {
        let b = self.linear_block(&self.fast, &self.fast);
        let mut rates = Vec::new();
        for (i, row) in b.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                if i != j && !c.is_zero() {
                    return Err(SystemError::Spectral("fast block is not diagonal".into()));
                }
            }
            let r = -row[i].clone();
            if r <= Q::zero() {
                return Err(SystemError::Spectral(format!(
                    "fast variable `{}` does not decay",
                    self.reg.name(self.fast[i])
                )));
            }
            rates.push(r);
        }
        Ok(rates)
    }

    pub fn grading(&self, name: &str) -> Result<&Grading, SystemError> {
        self.gradings
            .get(name)
            .ok_or_else(|| SystemError::UnknownGrading(name.to_string()))
    }

    pub fn is_deterministic(&self) -> bool {
        self.rhs.values().all(StochPoly::is_deterministic)
    }

    /// The same system with every noise term removed.
    pub fn deterministic(&self) -> SlowFastSystem {
        let mut s = self.clone();
        for p in s.rhs.values_mut() {
            *p = p.deterministic_part();
        }
        s
    }

    pub fn var(&self, name: &str) -> Result<Var, SystemError> {
        Ok(self.reg.get(name)?)
    }

    pub fn new_coord(&self, v: Var) -> Option<Var> {
        self.new_coords.get(&v).copied()
    }

    pub fn noise_channels(&self) -> Vec<u32> {
        let mut s = std::collections::BTreeSet::new();
        for p in self.rhs.values() {
            for (k, _) in p.terms() {
                s.extend(k.noise.channels());
            }
        }
        s.into_iter().collect()
    }
}
