//! Stochastic normal-form coordinate transforms built by iteration.
//!
//! Each original variable gets a map `x = X + ξ(X, Y, τ)` and each new
//! variable an evolution equation. A sweep computes the residual of the
//! original equations under the current transform, truncates it at the
//! working order, and splits every residual term between a map correction
//! and an evolution correction. Sweeps alternate between the fast and the
//! slow equations, starting with the fast ones.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cm::{ManifoldExpansion, ManifoldKind};
use crate::stochpoly::{int, Direction, Grading, NoiseFactor, NoiseMonomial, PolyError, StochPoly, TermKey, Var, Q};
use crate::system::{SlowFastSystem, SystemError};

#[derive(Debug, Error)]
pub enum NfError {
    #[error("cannot place term `{term}` in the {equation} equation: {reason}")]
    Unresolvable {
        equation: String,
        term: String,
        reason: String,
    },
    #[error("variable `{0}` has no normal-form coordinate")]
    MissingCoordinate(String),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sweep {
    Fast,
    Slow,
}

impl Sweep {
    /// Sweep performed by iteration `k` (1-based).
    pub fn of_iteration(k: u32) -> Sweep {
        if k % 2 == 1 {
            Sweep::Fast
        } else {
            Sweep::Slow
        }
    }
}

/// Bookkeeping for one sweep.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub sweep: Sweep,
    /// Lowest graded degree among the residual terms that were resolved.
    pub residual_degree: Option<u32>,
    pub to_map: usize,
    pub to_evolution: usize,
}

/// Maps from new to original variables and the evolution of the new ones.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordinateTransform {
    /// Original variable expressed in new variables and noise.
    pub maps: BTreeMap<Var, StochPoly>,
    /// Right-hand side of each new variable's evolution equation.
    pub evolutions: BTreeMap<Var, StochPoly>,
    pub iteration: u32,
    pub grading: Grading,
    pub order: u32,
    pub history: Vec<IterationRecord>,
}

/// A homological equation `E + ∂τ M - Σ λ_l Y_l ∂M/∂Y_l + rate·M = residual`
/// for map correction `M` and evolution correction `E`. `rate` is zero for
/// slow variables.
#[derive(Clone, Debug)]
pub struct HomologicalProblem {
    pub equation: String,
    pub rate: Q,
    /// Fast new variables and their decay rates.
    pub fast: Vec<(Var, Q)>,
    pub residual: StochPoly,
}

/// Split of a residual between map and evolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Correction {
    pub map: StochPoly,
    pub evolution: StochPoly,
}

impl HomologicalProblem {
    fn fail(&self, coef: &Q, key: &TermKey, reason: &str) -> NfError {
        let t = StochPoly::term(self.residual.registry(), coef.clone(), key.clone());
        NfError::Unresolvable {
            equation: self.equation.clone(),
            term: t.to_string(),
            reason: reason.to_string(),
        }
    }

    fn is_slow(&self) -> bool {
        self.rate.is_zero()
    }
}

/// Fast homological equation (`rate > 0`). Terms go to the map unless the
/// only bounded, causal solution would need evolution content.
pub fn solve_fast_correction(hp: &HomologicalProblem) -> Result<Correction, NfError> {
    assert!(hp.rate.is_positive(), "fast correction needs a positive decay rate");
    solve_homological(hp)
}

/// Slow homological equation (`rate = 0`). Secular terms go to the
/// evolution; decaying and memory terms go to the map.
pub fn solve_slow_correction(hp: &HomologicalProblem) -> Result<Correction, NfError> {
    assert!(hp.rate.is_zero(), "slow correction needs rate zero");
    solve_homological(hp)
}

fn solve_homological(hp: &HomologicalProblem) -> Result<Correction, NfError> {
    let reg = hp.residual.registry();
    let mut map = StochPoly::zero(reg);
    let mut evolution = StochPoly::zero(reg);
    for (key, coef) in hp.residual.terms() {
        // effective rate of the operator on this term's Y-dependence
        let mut r = hp.rate.clone();
        for (y, lam) in &hp.fast {
            r -= lam * int(key.mono.exp(*y) as i64);
        }
        if key.is_deterministic() {
            if r.is_zero() {
                evolution.add_term(key.clone(), coef.clone());
            } else {
                map.add_term(key.clone(), coef / &r);
            }
            continue;
        }
        let m = &key.noise;
        if r.is_positive() {
            // w' + r w = c m  =>  w = c e^{-rτ}*m
            let f = NoiseFactor::conv(r, Direction::Past, m.clone());
            map.add_term(TermKey::new(key.mono.clone(), NoiseMonomial::single(f)), coef.clone());
        } else if r.is_negative() {
            if hp.is_slow() {
                // w' = |r| w + c m  =>  w = -c e^{+|r|τ}*m (anticipatory, map only)
                let f = NoiseFactor::conv(-r, Direction::Future, m.clone());
                map.add_term(TermKey::new(key.mono.clone(), NoiseMonomial::single(f)), -coef);
            } else {
                evolution.add_term(key.clone(), coef.clone());
            }
        } else {
            // w' = c m: integrate the convolutions exactly where possible
            match split_derivative(m) {
                Some((lambda, sources)) => {
                    map.add_term(key.clone(), -(coef / &lambda));
                    for (sign, src) in sources {
                        let k = TermKey::new(key.mono.clone(), src);
                        if hp.is_slow() && k.noise.has_future() {
                            return Err(hp.fail(coef, key, "memory term would leave anticipation in a slow evolution"));
                        }
                        evolution.add_term(k, coef * sign / &lambda);
                    }
                }
                None => {
                    if hp.is_slow() && m.has_future() {
                        return Err(hp.fail(coef, key, "anticipatory noise cannot be removed from a slow evolution"));
                    }
                    evolution.add_term(key.clone(), coef.clone());
                }
            }
        }
    }
    Ok(Correction { map, evolution })
}

/// For a product of convolutions `m = Π z_i` with `z_i' = -κ_i z_i + χ_i ψ_i`,
/// returns `Λ = Σ κ_i` and the source terms `χ_i ψ_i Π_{j≠i} z_j`, so that
/// `m' = -Λ m + Σ sources`. None if `m` contains bare white noise or `Λ = 0`.
fn split_derivative(m: &NoiseMonomial) -> Option<(Q, Vec<(Q, NoiseMonomial)>)> {
    let mut lambda = Q::zero();
    let mut sources = Vec::new();
    for (i, f) in m.factors().iter().enumerate() {
        let NoiseFactor::Conv(c) = f else {
            return None;
        };
        let (kappa, chi) = match c.dir {
            Direction::Past => (c.rate.clone(), int(1)),
            Direction::Future => (-c.rate.clone(), int(-1)),
        };
        lambda += kappa;
        sources.push((chi, m.without(i).mul(&c.arg)));
    }
    if lambda.is_zero() {
        None
    } else {
        Some((lambda, sources))
    }
}

/// Builds normal-form transforms for one system at a fixed working order.
pub struct NfEngine<'a> {
    sys: &'a SlowFastSystem,
    grading: Grading,
    order: u32,
    fast: Vec<(Var, Var, Q)>,
    slow: Vec<(Var, Var)>,
}

impl<'a> NfEngine<'a> {
    pub fn new(sys: &'a SlowFastSystem, grading: Grading, order: u32) -> Result<Self, NfError> {
        let rates = sys.fast_rates()?;
        let coord = |v: Var| {
            sys.new_coord(v)
                .ok_or_else(|| NfError::MissingCoordinate(sys.reg.name(v).to_string()))
        };
        let fast = sys
            .fast
            .iter()
            .zip(rates)
            .map(|(&v, r)| Ok((v, coord(v)?, r)))
            .collect::<Result<_, NfError>>()?;
        let slow = sys
            .slow
            .iter()
            .map(|&v| Ok((v, coord(v)?)))
            .collect::<Result<_, NfError>>()?;
        Ok(NfEngine {
            sys,
            grading,
            order,
            fast,
            slow,
        })
    }

    pub fn system(&self) -> &SlowFastSystem {
        self.sys
    }

    pub fn fast_new(&self) -> Vec<Var> {
        self.fast.iter().map(|&(_, n, _)| n).collect()
    }

    pub fn slow_new(&self) -> Vec<Var> {
        self.slow.iter().map(|&(_, n)| n).collect()
    }

    /// Identity maps; fast coordinates decay linearly, slow ones are frozen.
    pub fn identity(&self) -> CoordinateTransform {
        let reg = &self.sys.reg;
        let mut maps = BTreeMap::new();
        let mut evolutions = BTreeMap::new();
        for &(v, n) in &self.slow {
            maps.insert(v, StochPoly::var(reg, n));
            evolutions.insert(n, StochPoly::zero(reg));
        }
        for (v, n, r) in &self.fast {
            maps.insert(*v, StochPoly::var(reg, *n));
            evolutions.insert(*n, StochPoly::var(reg, *n).scale(&-r.clone()));
        }
        CoordinateTransform {
            maps,
            evolutions,
            iteration: 0,
            grading: self.grading.clone(),
            order: self.order,
            history: Vec::new(),
        }
    }

    /// Total time derivative of an expression in new variables along the
    /// current evolutions.
    fn total_derivative(&self, p: &StochPoly, ct: &CoordinateTransform) -> Result<StochPoly, NfError> {
        let (g, o) = (&self.grading, self.order);
        let mut out = p.time_derivative()?.truncate(g, o);
        for (&n, e) in &ct.evolutions {
            let dp = p.d(n);
            if !dp.is_zero() {
                out = &out + &dp.mul_truncated(e, g, o);
            }
        }
        Ok(out)
    }

    /// Defect of each original equation under the transform, truncated at
    /// the working order.
    pub fn residual(&self, ct: &CoordinateTransform) -> Result<BTreeMap<Var, StochPoly>, NfError> {
        let mut out = BTreeMap::new();
        for (&v, map) in &ct.maps {
            let rhs = self.sys.rhs[&v].substitute_truncated(&ct.maps, &self.grading, self.order)?;
            let lhs = self.total_derivative(map, ct)?;
            out.insert(v, (&rhs - &lhs).truncate(&self.grading, self.order));
        }
        Ok(out)
    }

    /// One sweep of the fast or slow equations, per the iteration schedule.
    pub fn iterate(&self, ct: &CoordinateTransform) -> Result<CoordinateTransform, NfError> {
        let k = ct.iteration + 1;
        let sweep = Sweep::of_iteration(k);
        let residual = self.residual(ct)?;
        let fast_rates: Vec<(Var, Q)> = self.fast.iter().map(|(_, n, r)| (*n, r.clone())).collect();
        let targets: Vec<(Var, Var, Q)> = match sweep {
            Sweep::Fast => self.fast.clone(),
            Sweep::Slow => self.slow.iter().map(|&(v, n)| (v, n, Q::zero())).collect(),
        };
        let mut next = ct.clone();
        let mut record = IterationRecord {
            sweep,
            residual_degree: None,
            to_map: 0,
            to_evolution: 0,
        };
        for (v, n, rate) in targets {
            let r = &residual[&v];
            if let Some(d) = r.min_degree(&self.grading) {
                record.residual_degree = Some(record.residual_degree.map_or(d, |e: u32| e.min(d)));
            }
            let hp = HomologicalProblem {
                equation: self.sys.reg.name(v).to_string(),
                rate,
                fast: fast_rates.clone(),
                residual: r.clone(),
            };
            let c = match sweep {
                Sweep::Fast => solve_fast_correction(&hp)?,
                Sweep::Slow => solve_slow_correction(&hp)?,
            };
            record.to_map += c.map.len();
            record.to_evolution += c.evolution.len();
            let m = next.maps.get_mut(&v).expect("map exists");
            *m = &*m + &c.map;
            let e = next.evolutions.get_mut(&n).expect("evolution exists");
            *e = &*e + &c.evolution;
        }
        next.iteration = k;
        next.history.push(record);
        Ok(next)
    }

    /// `n` sweeps from the identity transform.
    pub fn run(&self, n: u32) -> Result<CoordinateTransform, NfError> {
        let mut ct = self.identity();
        for _ in 0..n {
            ct = self.iterate(&ct)?;
        }
        Ok(ct)
    }

    /// Fast maps with every fast coordinate set to zero.
    pub fn stochastic_cm(&self, ct: &CoordinateTransform) -> Vec<ManifoldExpansion> {
        let fast_new = self.fast_new();
        self.fast
            .iter()
            .map(|&(v, _, _)| ManifoldExpansion {
                target: v,
                body: ct.maps[&v].at_zero(&fast_new),
                order: Some(ct.order),
                kind: ManifoldKind::Stochastic,
            })
            .collect()
    }

    /// Slow maps on the slow manifold `Y = 0`.
    pub fn slow_maps_on_manifold(&self, ct: &CoordinateTransform) -> Vec<(Var, StochPoly)> {
        let fast_new = self.fast_new();
        self.slow
            .iter()
            .map(|&(v, _)| (v, ct.maps[&v].at_zero(&fast_new)))
            .collect()
    }

    /// Expectation of the stochastic manifold, with the terms whose moments
    /// could not be reduced.
    pub fn averaged_cm(&self, ct: &CoordinateTransform) -> (Vec<ManifoldExpansion>, Vec<StochPoly>) {
        let mut avg = Vec::new();
        let mut unreduced = Vec::new();
        for m in self.stochastic_cm(ct) {
            let e = m.body.expectation();
            avg.push(ManifoldExpansion {
                target: m.target,
                body: e.mean,
                order: m.order,
                kind: ManifoldKind::Averaged,
            });
            unreduced.push(e.unreduced);
        }
        (avg, unreduced)
    }

    /// Slow evolution equations, optionally keeping only deterministic terms
    /// and additive noise (dropping memory and multiplicative noise).
    pub fn slow_model(
        &self,
        ct: &CoordinateTransform,
        policy: SlowModelPolicy,
    ) -> Result<Vec<(Var, StochPoly)>, NfError> {
        let slow_new = self.slow_new();
        let mut out = Vec::new();
        for &(_, n) in &self.slow {
            let e = &ct.evolutions[&n];
            if let Some((k, c)) = e.terms().find(|(k, _)| k.noise.has_future()) {
                let t = StochPoly::term(&self.sys.reg, c.clone(), k.clone());
                return Err(NfError::Unresolvable {
                    equation: self.sys.reg.name(n).to_string(),
                    term: t.to_string(),
                    reason: "anticipation in slow evolution".into(),
                });
            }
            let kept = match policy {
                SlowModelPolicy::Full => e.clone(),
                SlowModelPolicy::AdditiveNoise => e.filter(|k, _| {
                    k.is_deterministic()
                        || (matches!(k.noise.factors(), [NoiseFactor::White(_)])
                            && slow_new.iter().all(|&v| k.mono.exp(v) == 0))
                }),
            };
            out.push((n, kept));
        }
        Ok(out)
    }
}

/// Which terms of the slow evolution to keep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlowModelPolicy {
    Full,
    /// Deterministic drift plus state-independent white noise.
    AdditiveNoise,
}

impl CoordinateTransform {
    /// True if every fast evolution vanishes on `Y = 0`.
    pub fn fast_manifold_invariant(&self, fast_new: &[Var]) -> bool {
        fast_new.iter().all(|n| self.evolutions[n].at_zero(fast_new).is_zero())
    }

    pub fn slow_evolutions_causal(&self, slow_new: &[Var]) -> bool {
        slow_new.iter().all(|n| !self.evolutions[n].has_future())
    }
}

/// A term-by-term difference between two polynomials.
#[derive(Clone, Debug, PartialEq)]
pub struct TermDiff {
    pub key: TermKey,
    pub expected: Q,
    pub actual: Q,
}

pub fn diff_terms(expected: &StochPoly, actual: &StochPoly) -> Vec<TermDiff> {
    let mut keys: Vec<TermKey> = expected.terms().chain(actual.terms()).map(|(k, _)| k.clone()).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .filter_map(|k| {
            let (e, a) = (expected.coefficient(&k), actual.coefficient(&k));
            (e != a).then_some(TermDiff {
                key: k,
                expected: e,
                actual: a,
            })
        })
        .collect()
}
