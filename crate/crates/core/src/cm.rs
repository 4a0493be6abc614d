//! Deterministic center manifolds by series expansion and coefficient matching.

use std::collections::BTreeMap;

use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, SolveError};
use crate::stochpoly::{Grading, Monomial, PolyError, StochPoly, TermKey, Var, Q};
use crate::system::{SlowFastSystem, SystemError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Deterministic,
    Stochastic,
    Averaged,
}

/// Graph `target = body(slow, params)` of a manifold, truncated at `order`
/// (None for a leading-order or untruncated expression).
#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldExpansion {
    pub target: Var,
    pub body: StochPoly,
    pub order: Option<u32>,
    pub kind: ManifoldKind,
}

#[derive(Debug, Error)]
pub enum CmError {
    #[error("system has noise terms; center manifolds need a deterministic system")]
    NotDeterministic,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("resonance at order {order}: no unique coefficient for {monomials:?}")]
    Resonance { order: u32, monomials: Vec<String> },
    #[error("order {order}: residual does not vanish: {residual}")]
    Residual { order: u32, residual: String },
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

fn bindings(h: &[ManifoldExpansion]) -> BTreeMap<Var, StochPoly> {
    h.iter().map(|m| (m.target, m.body.clone())).collect()
}

/// Leading-order manifold: grading parameters set to zero and the fast
/// equations solved for the fast variables. The fast right-hand sides must
/// then be affine in the fast variables.
pub fn slow_manifold(sys: &SlowFastSystem) -> Result<Vec<ManifoldExpansion>, CmError> {
    if !sys.is_deterministic() {
        return Err(CmError::NotDeterministic);
    }
    let b = sys.linear_block(&sys.fast, &sys.fast);
    let binv = linalg::inverse(&b).ok_or_else(|| CmError::Unsupported("fast block is singular".into()))?;
    let mut rest = Vec::new();
    for &f in &sys.fast {
        let g = sys.rhs[&f].at_zero(&sys.params);
        let nonlinear = g.filter(|k, _| {
            let deg: u32 = sys.fast.iter().map(|&v| k.mono.exp(v)).sum();
            deg > 1 || (deg == 1 && k.mono.total_degree() > 1)
        });
        if !nonlinear.is_zero() {
            return Err(CmError::Unsupported(format!(
                "fast equation for `{}` is not affine in the fast variables: {nonlinear}",
                sys.reg.name(f)
            )));
        }
        rest.push(g.at_zero(&sys.fast));
    }
    let mut out = Vec::new();
    for (i, &f) in sys.fast.iter().enumerate() {
        // B y + rest = 0  =>  y = -B^{-1} rest
        let mut body = StochPoly::zero(&sys.reg);
        for (j, r) in rest.iter().enumerate() {
            body = &body - &r.scale(&binv[i][j]);
        }
        out.push(ManifoldExpansion {
            target: f,
            body,
            order: None,
            kind: ManifoldKind::Deterministic,
        });
    }
    Ok(out)
}

/// Residual of the invariance condition `∂h/∂x · x'(x, h) - y'(x, h)` for each
/// fast variable, truncated at `order` under `grading`.
pub fn cm_condition(
    sys: &SlowFastSystem,
    h: &[ManifoldExpansion],
    grading: &Grading,
    order: u32,
) -> Result<Vec<StochPoly>, CmError> {
    let b = bindings(h);
    let slow_on: Vec<StochPoly> = sys
        .slow
        .iter()
        .map(|v| sys.rhs[v].substitute_truncated(&b, grading, order))
        .collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for m in h {
        let mut r = -&sys.rhs[&m.target].substitute_truncated(&b, grading, order)?;
        for (v, xdot) in sys.slow.iter().zip(&slow_on) {
            r = &r + &m.body.d(*v).mul_truncated(xdot, grading, order);
        }
        out.push(r.truncate(grading, order));
    }
    Ok(out)
}

/// All monomials over `vars` with graded degree exactly `d`.
pub fn monomials_of_degree(vars: &[Var], grading: &Grading, d: u32) -> Vec<Monomial> {
    fn rec(vars: &[Var], grading: &Grading, d: u32, acc: Monomial, out: &mut Vec<Monomial>) {
        let Some((&v, rest)) = vars.split_first() else {
            if d == 0 {
                out.push(acc);
            }
            return;
        };
        let w = grading.weight(v);
        let mut e = 0;
        while e * w <= d {
            rec(rest, grading, d - e * w, acc.mul(&Monomial::var(v, e)), out);
            if w == 0 {
                break;
            }
            e += 1;
        }
    }
    let mut out = Vec::new();
    rec(vars, grading, d, Monomial::one(), &mut out);
    out.sort();
    out
}

/// Solves the center-manifold condition order by order with an ansatz over
/// every monomial in the slow variables and grading parameters (constant
/// term included) up to graded degree `order`.
pub fn solve_center_manifold(
    sys: &SlowFastSystem,
    grading: &Grading,
    order: u32,
) -> Result<Vec<ManifoldExpansion>, CmError> {
    if !sys.is_deterministic() {
        return Err(CmError::NotDeterministic);
    }
    sys.check_spectrum()?;
    let basis_vars: Vec<Var> = sys.slow.iter().chain(&sys.params).copied().collect();
    if let Some(&v) = basis_vars.iter().find(|&&v| grading.weight(v) == 0) {
        return Err(CmError::Unsupported(format!(
            "`{}` has zero weight; the ansatz would be infinite",
            sys.reg.name(v)
        )));
    }
    let mut h: Vec<ManifoldExpansion> = sys
        .fast
        .iter()
        .map(|&f| ManifoldExpansion {
            target: f,
            body: StochPoly::zero(&sys.reg),
            order: Some(order),
            kind: ManifoldKind::Deterministic,
        })
        .collect();
    for d in 0..=order {
        let monos = monomials_of_degree(&basis_vars, grading, d);
        if monos.is_empty() {
            continue;
        }
        let part = |res: Vec<StochPoly>| -> Vec<StochPoly> {
            res.into_iter()
                .map(|r| r.filter(|k, _| grading.degree(k) == d))
                .collect()
        };
        let base = part(cm_condition(sys, &h, grading, d)?);
        let mut columns = Vec::new();
        let mut unknowns = Vec::new();
        for j in 0..h.len() {
            for m in &monos {
                let mut trial = h.clone();
                trial[j]
                    .body
                    .add_term(TermKey::new(m.clone(), Default::default()), Q::from_integer(1.into()));
                let r = part(cm_condition(sys, &trial, grading, d)?);
                let col: Vec<StochPoly> = r.iter().zip(&base).map(|(a, b)| a - b).collect();
                columns.push(col);
                unknowns.push((j, m.clone()));
            }
        }
        // rows: (equation, term key) pairs appearing anywhere
        let mut rows: Vec<(usize, TermKey)> = Vec::new();
        for eq in 0..h.len() {
            let mut keys: Vec<TermKey> = base[eq].terms().map(|(k, _)| k.clone()).collect();
            for col in &columns {
                keys.extend(col[eq].terms().map(|(k, _)| k.clone()));
            }
            keys.sort();
            keys.dedup();
            rows.extend(keys.into_iter().map(|k| (eq, k)));
        }
        let a: Vec<Vec<Q>> = rows
            .iter()
            .map(|(eq, k)| columns.iter().map(|c| c[*eq].coefficient(k)).collect())
            .collect();
        let rhs: Vec<Q> = rows.iter().map(|(eq, k)| -base[*eq].coefficient(k)).collect();
        let sol = match linalg::solve(&a, &rhs) {
            Ok(s) => s,
            Err(SolveError::Singular { free_columns }) => {
                return Err(CmError::Resonance {
                    order: d,
                    monomials: free_columns
                        .iter()
                        .map(|&c| {
                            let (j, m) = &unknowns[c];
                            let p = StochPoly::term(
                                &sys.reg,
                                Q::from_integer(1.into()),
                                TermKey::new(m.clone(), Default::default()),
                            );
                            format!("{} in {}", p, sys.reg.name(h[*j].target))
                        })
                        .collect(),
                })
            }
            Err(SolveError::Inconsistent { .. }) => {
                return Err(CmError::Resonance {
                    order: d,
                    monomials: vec!["inconsistent coefficient equations".into()],
                })
            }
        };
        for ((j, m), c) in unknowns.into_iter().zip(sol) {
            if !c.is_zero() {
                h[j].body.add_term(TermKey::new(m, Default::default()), c);
            }
        }
        for r in cm_condition(sys, &h, grading, d)? {
            if !r.is_zero() {
                return Err(CmError::Residual {
                    order: d,
                    residual: r.to_string(),
                });
            }
        }
    }
    Ok(h)
}

/// Slow evolution on the manifold: the slow right-hand sides with the fast
/// variables replaced by `h`, truncated when a grading is given.
pub fn reduce_on_manifold(
    sys: &SlowFastSystem,
    h: &[ManifoldExpansion],
    truncation: Option<(&Grading, u32)>,
) -> Result<Vec<(Var, StochPoly)>, CmError> {
    for &f in &sys.fast {
        if !h.iter().any(|m| m.target == f) {
            return Err(CmError::Unsupported(format!(
                "no manifold given for `{}`",
                sys.reg.name(f)
            )));
        }
    }
    let b = bindings(h);
    sys.slow
        .iter()
        .map(|&v| {
            let p = match truncation {
                Some((g, o)) => sys.rhs[&v].substitute_truncated(&b, g, o)?,
                None => sys.rhs[&v].substitute(&b)?,
            };
            Ok((v, p))
        })
        .collect()
}
