//! JSON records for manifolds and transforms, and report-directory helpers.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::cm::{ManifoldExpansion, ManifoldKind};
use crate::nf::{diff_terms, CoordinateTransform, IterationRecord};
use crate::stochpoly::{PolyJson, Registry, StochPoly};
use crate::system::SlowFastSystem;

/// A polynomial in both human-readable and machine-readable form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyRecord {
    pub expression: String,
    pub poly: PolyJson,
}

impl PolyRecord {
    pub fn of(p: &StochPoly) -> Self {
        PolyRecord {
            expression: p.to_string(),
            poly: p.to_json(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldRecord {
    pub target: String,
    pub order: Option<u32>,
    pub kind: ManifoldKind,
    #[serde(flatten)]
    pub body: PolyRecord,
    /// Optional sampled curve `[x, value]` at fixed parameter values.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curve: Vec<[f64; 2]>,
}

impl ManifoldRecord {
    pub fn of(reg: &Registry, m: &ManifoldExpansion) -> Self {
        ManifoldRecord {
            target: reg.name(m.target).to_string(),
            order: m.order,
            kind: m.kind,
            body: PolyRecord::of(&m.body),
            curve: Vec::new(),
        }
    }
}

/// Contents of `transform.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub system: String,
    pub order: u32,
    pub iterations: u32,
    pub grading: BTreeMap<String, u32>,
    /// Original variable in terms of the new ones.
    pub maps: BTreeMap<String, PolyRecord>,
    /// Evolution of each new variable.
    pub evolutions: BTreeMap<String, PolyRecord>,
    #[serde(default)]
    pub history: Vec<IterationRecord>,
}

impl TransformRecord {
    pub fn of(sys: &SlowFastSystem, ct: &CoordinateTransform) -> Self {
        let named = |m: &BTreeMap<_, StochPoly>| {
            m.iter()
                .map(|(v, p)| (sys.reg.name(*v).to_string(), PolyRecord::of(p)))
                .collect()
        };
        TransformRecord {
            system: sys.name.clone(),
            order: ct.order,
            iterations: ct.iteration,
            grading: ct.grading.to_names(&sys.reg),
            maps: named(&ct.maps),
            evolutions: named(&ct.evolutions),
            history: ct.history.clone(),
        }
    }
}

/// A term that differs between a fixture and a computed transform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureMismatch {
    /// `map:<var>` or `evolution:<var>`.
    pub entry: String,
    pub term: String,
    pub expected: String,
    pub actual: String,
}

/// Compares every map and evolution listed in `fixture` with `ct`, term by
/// term. Entries absent from the fixture are not checked.
pub fn check_fixture(
    sys: &SlowFastSystem,
    ct: &CoordinateTransform,
    fixture: &TransformRecord,
) -> Result<Vec<FixtureMismatch>, ExperimentError> {
    let mut out = Vec::new();
    for (label, expected, actual) in [
        ("map", &fixture.maps, &ct.maps),
        ("evolution", &fixture.evolutions, &ct.evolutions),
    ] {
        for (name, rec) in expected {
            let v = sys.var(name)?;
            let want = StochPoly::from_json(&sys.reg, &rec.poly)?;
            let got = actual.get(&v).cloned().unwrap_or_else(|| StochPoly::zero(&sys.reg));
            for d in diff_terms(&want, &got) {
                let unit = StochPoly::term(&sys.reg, num_traits::One::one(), d.key.clone());
                out.push(FixtureMismatch {
                    entry: format!("{label}:{name}"),
                    term: unit.to_string(),
                    expected: d.expected.to_string(),
                    actual: d.actual.to_string(),
                });
            }
        }
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), ExperimentError> {
    fs::write(dir.join(name), serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

pub fn create_file(dir: &Path, name: &str) -> Result<fs::File, ExperimentError> {
    Ok(fs::File::create(dir.join(name))?)
}
