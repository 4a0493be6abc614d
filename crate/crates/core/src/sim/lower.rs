//! Lowering of symbolic evolution equations to floating-point form.

use std::collections::BTreeMap;

use num_traits::ToPrimitive;

use super::SimError;
use crate::stochpoly::{Conv, Direction, NoiseFactor, NoiseMonomial, Registry, StochPoly, Var, Q};

/// `coef * prod u[i]^e`.
#[derive(Clone, Debug, PartialEq)]
pub struct CompiledTerm {
    pub coef: f64,
    pub factors: Vec<(usize, u32)>,
}

/// A polynomial over the simulation state vector.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CompiledPoly {
    pub terms: Vec<CompiledTerm>,
}

impl CompiledPoly {
    pub fn eval(&self, u: &[f64]) -> f64 {
        let mut acc = 0.0;
        for t in &self.terms {
            let mut p = t.coef;
            for &(i, e) in &t.factors {
                p *= if e == 1 { u[i] } else { u[i].powi(e as i32) };
            }
            acc += p;
        }
        acc
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn push(&mut self, coef: f64, factors: Vec<(usize, u32)>) {
        if let Some(t) = self.terms.iter_mut().find(|t| t.factors == factors) {
            t.coef += coef;
        } else {
            self.terms.push(CompiledTerm { coef, factors });
        }
    }
}

/// State-dependent coefficient of one white-noise channel.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseCoupling {
    /// Position of the channel in [`SimSystem::channels`].
    pub slot: usize,
    pub coef: CompiledPoly,
}

/// An auxiliary variable realizing a past convolution `z' = -c z + arg`,
/// simulated as `dz = -decay z dt + gain arg dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxVar {
    pub rate: f64,
    pub decay: f64,
    pub gain: f64,
    /// Source channel when `arg` is a single white noise.
    pub source: Option<u32>,
}

/// Floating-point SDE system `du = f(u) dt + sum_k g_k(u) ∘ dW_k`. The state
/// vector holds the model variables followed by auxiliary variables.
#[derive(Clone, Debug, PartialEq)]
pub struct SimSystem {
    pub names: Vec<String>,
    pub n_model: usize,
    pub drift: Vec<CompiledPoly>,
    pub noise: Vec<Vec<NoiseCoupling>>,
    /// Distinct white-noise channel ids, sorted.
    pub channels: Vec<u32>,
    pub aux: Vec<AuxVar>,
}

impl SimSystem {
    pub fn dim(&self) -> usize {
        self.drift.len()
    }

    pub fn is_deterministic(&self) -> bool {
        self.noise.iter().all(Vec::is_empty)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

struct Lowering<'a> {
    reg: &'a Registry,
    state: BTreeMap<Var, usize>,
    values: &'a BTreeMap<Var, f64>,
    scale: f64,
    names: Vec<String>,
    drift: Vec<CompiledPoly>,
    couplings: Vec<Vec<(u32, CompiledPoly)>>,
    aux: Vec<AuxVar>,
    aux_index: BTreeMap<Conv, usize>,
}

impl Lowering<'_> {
    fn value(&self, q: &Q) -> f64 {
        q.to_f64().unwrap_or(f64::NAN)
    }

    /// Adds `coef * factors * noise` to the equation of state slot `eq`.
    fn add(
        &mut self,
        eq: usize,
        coef: f64,
        mut factors: Vec<(usize, u32)>,
        noise: &NoiseMonomial,
    ) -> Result<(), SimError> {
        let mut white = None;
        for f in noise.factors() {
            match f {
                NoiseFactor::White(ch) => {
                    if white.replace(*ch).is_some() {
                        return Err(SimError::Unsupported(format!(
                            "product of white noises in the equation for `{}`",
                            self.names[eq]
                        )));
                    }
                }
                NoiseFactor::Conv(c) => {
                    let z = self.aux_var(c)?;
                    match factors.iter_mut().find(|(i, _)| *i == z) {
                        Some((_, e)) => *e += 1,
                        None => factors.push((z, 1)),
                    }
                }
            }
        }
        factors.sort_unstable();
        match white {
            None => self.drift[eq].push(coef, factors),
            Some(ch) => {
                let list = &mut self.couplings[eq];
                match list.iter_mut().find(|(c, _)| *c == ch) {
                    Some((_, p)) => p.push(coef, factors),
                    None => {
                        let mut p = CompiledPoly::default();
                        p.push(coef, factors);
                        list.push((ch, p));
                    }
                }
            }
        }
        Ok(())
    }

    fn aux_var(&mut self, c: &Conv) -> Result<usize, SimError> {
        if c.dir == Direction::Future {
            return Err(SimError::Anticipatory);
        }
        if let Some(&i) = self.aux_index.get(c) {
            return Ok(i);
        }
        let idx = self.names.len();
        let rate = self.value(&c.rate);
        let source = match c.arg.factors() {
            [NoiseFactor::White(ch)] => Some(*ch),
            _ => None,
        };
        self.names.push(format!("z{}", self.aux.len() + 1));
        self.drift.push(CompiledPoly::default());
        self.couplings.push(Vec::new());
        self.aux.push(AuxVar {
            rate,
            decay: rate / self.scale,
            gain: 1.0 / self.scale,
            source,
        });
        self.aux_index.insert(c.clone(), idx);
        self.drift[idx].push(-rate / self.scale, vec![(idx, 1)]);
        self.add(idx, 1.0 / self.scale, Vec::new(), &c.arg)?;
        Ok(idx)
    }
}

/// Lowers `var' = rhs` equations: symbols other than the equation variables
/// must be bound in `values`, and every right-hand side is divided by
/// `time_scale` (for simulating in a time `t = time_scale * tau`).
pub fn lower(
    reg: &Registry,
    equations: &[(Var, StochPoly)],
    values: &BTreeMap<Var, f64>,
    time_scale: f64,
) -> Result<SimSystem, SimError> {
    if !(time_scale > 0.0 && time_scale.is_finite()) {
        return Err(SimError::Config(format!(
            "time scale must be positive, got {time_scale}"
        )));
    }
    let state: BTreeMap<Var, usize> = equations.iter().enumerate().map(|(i, (v, _))| (*v, i)).collect();
    let n = equations.len();
    let mut lw = Lowering {
        reg,
        state,
        values,
        scale: time_scale,
        names: equations.iter().map(|(v, _)| reg.name(*v).to_string()).collect(),
        drift: vec![CompiledPoly::default(); n],
        couplings: vec![Vec::new(); n],
        aux: Vec::new(),
        aux_index: BTreeMap::new(),
    };
    for (eq, (_, rhs)) in equations.iter().enumerate() {
        for (key, q) in rhs.terms() {
            let mut coef = lw.value(q) / time_scale;
            let mut factors = Vec::new();
            for &(v, e) in key.mono.pairs() {
                if let Some(&i) = lw.state.get(&v) {
                    factors.push((i, e));
                } else {
                    let x = lw
                        .values
                        .get(&v)
                        .ok_or_else(|| SimError::Unbound(lw.reg.name(v).to_string()))?;
                    coef *= x.powi(e as i32);
                }
            }
            if coef != 0.0 {
                lw.add(eq, coef, factors, &key.noise)?;
            }
        }
    }
    let mut channels: Vec<u32> = lw.couplings.iter().flatten().map(|(c, _)| *c).collect();
    channels.sort_unstable();
    channels.dedup();
    let noise = lw
        .couplings
        .into_iter()
        .map(|list| {
            let mut v: Vec<NoiseCoupling> = list
                .into_iter()
                .map(|(ch, coef)| NoiseCoupling {
                    slot: channels.binary_search(&ch).expect("collected above"),
                    coef,
                })
                .collect();
            v.sort_by_key(|c| c.slot);
            v
        })
        .collect();
    Ok(SimSystem {
        names: lw.names,
        n_model: n,
        drift: lw.drift,
        noise,
        channels,
        aux: lw.aux,
    })
}

/// Value of a noise-free polynomial with every variable bound in `values`.
pub fn evaluate(reg: &Registry, p: &StochPoly, values: &BTreeMap<Var, f64>) -> Result<f64, SimError> {
    let mut acc = 0.0;
    for (key, q) in p.terms() {
        if !key.noise.factors().is_empty() {
            return Err(SimError::Unsupported(format!("noise term in `{p}`")));
        }
        let mut t = q.to_f64().unwrap_or(f64::NAN);
        for &(v, e) in key.mono.pairs() {
            let x = values
                .get(&v)
                .ok_or_else(|| SimError::Unbound(reg.name(v).to_string()))?;
            t *= x.powi(e as i32);
        }
        acc += t;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochpoly::{int, VarKind};
    use std::sync::Arc;

    fn reg() -> (Arc<Registry>, Var, Var, Var) {
        let mut r = Registry::new();
        let x = r.register("X", VarKind::Slow).unwrap();
        let e = r.register("e", VarKind::Grading).unwrap();
        let s = r.register("s", VarKind::Amplitude).unwrap();
        (Arc::new(r), x, e, s)
    }

    #[test]
    fn deterministic_polynomial_has_no_noise() {
        let (r, x, e, _) = reg();
        let px = StochPoly::var(&r, x);
        let rhs = &px - &px.pow(3);
        let sim = lower(&r, &[(x, rhs)], &BTreeMap::from([(e, 0.1)]), 1.0).unwrap();
        assert!(sim.is_deterministic());
        assert!(sim.channels.is_empty());
        assert!((sim.drift[0].eval(&[2.0]) + 6.0).abs() < 1e-15);
    }

    #[test]
    fn convolution_becomes_auxiliary_variable() {
        let (r, x, _, _) = reg();
        let z = StochPoly::conv(int(1), Direction::Past, &StochPoly::white(&r, 1)).unwrap();
        let rhs = &StochPoly::constant(&r, int(3)) * &(&StochPoly::var(&r, x).pow(2) * &z);
        let sim = lower(&r, &[(x, rhs)], &BTreeMap::new(), 1.0).unwrap();
        assert_eq!(sim.dim(), 2);
        assert_eq!(
            sim.aux,
            vec![AuxVar {
                rate: 1.0,
                decay: 1.0,
                gain: 1.0,
                source: Some(1)
            }]
        );
        // drift 3 X^2 z, aux z' = -z + phi1
        assert!((sim.drift[0].eval(&[2.0, 0.5]) - 6.0).abs() < 1e-15);
        assert!((sim.drift[1].eval(&[2.0, 0.5]) + 0.5).abs() < 1e-15);
        assert_eq!(sim.noise[1].len(), 1);
        assert!((sim.noise[1][0].coef.eval(&[0.0, 0.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn evaluate_binds_every_variable() {
        let (r, x, e, _) = reg();
        let p = &StochPoly::var(&r, x).pow(2) - &StochPoly::var(&r, e);
        let vals = BTreeMap::from([(x, 3.0), (e, 0.5)]);
        assert_eq!(evaluate(&r, &p, &vals), Ok(8.5));
        assert_eq!(
            evaluate(&r, &p, &BTreeMap::from([(x, 1.0)])),
            Err(SimError::Unbound("e".into()))
        );
        assert!(evaluate(&r, &StochPoly::white(&r, 1), &vals).is_err());
    }

    #[test]
    fn unbound_and_anticipatory_are_errors() {
        let (r, x, e, _) = reg();
        let rhs = StochPoly::var(&r, e);
        assert_eq!(
            lower(&r, &[(x, rhs)], &BTreeMap::new(), 1.0),
            Err(SimError::Unbound("e".into()))
        );
        let fut = StochPoly::conv(int(1), Direction::Future, &StochPoly::white(&r, 1)).unwrap();
        assert_eq!(
            lower(&r, &[(x, fut)], &BTreeMap::new(), 1.0),
            Err(SimError::Anticipatory)
        );
    }
}
