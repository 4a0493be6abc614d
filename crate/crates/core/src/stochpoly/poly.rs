use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_traits::{One, Signed, Zero};

use super::{Direction, Grading, Monomial, NoiseFactor, NoiseMonomial, PolyError, Registry, TermKey, Var, Q};

/// What to differentiate with respect to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wrt {
    Var(Var),
    Noise(u32),
}

/// Polynomial in registered variables whose terms may carry white-noise
/// symbols and exponential-kernel convolutions. Always canonical: no zero
/// coefficients, terms keyed and ordered by their factor structure.
#[derive(Clone, Debug)]
pub struct StochPoly {
    reg: Arc<Registry>,
    terms: BTreeMap<TermKey, Q>,
}

impl PartialEq for StochPoly {
    fn eq(&self, other: &Self) -> bool {
        same_registry(&self.reg, &other.reg) && self.terms == other.terms
    }
}

impl Eq for StochPoly {}

fn same_registry(a: &Arc<Registry>, b: &Arc<Registry>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

pub fn int(n: i64) -> Q {
    Q::from_integer(n.into())
}

pub fn ratio(n: i64, d: i64) -> Q {
    Q::new(n.into(), d.into())
}

impl StochPoly {
    pub fn zero(reg: &Arc<Registry>) -> Self {
        StochPoly {
            reg: Arc::clone(reg),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(reg: &Arc<Registry>, c: Q) -> Self {
        Self::term(reg, c, TermKey::one())
    }

    pub fn one(reg: &Arc<Registry>) -> Self {
        Self::constant(reg, Q::one())
    }

    pub fn var(reg: &Arc<Registry>, v: Var) -> Self {
        Self::term(reg, Q::one(), TermKey::new(Monomial::var(v, 1), NoiseMonomial::one()))
    }

    pub fn white(reg: &Arc<Registry>, ch: u32) -> Self {
        Self::term(reg, Q::one(), TermKey::new(Monomial::one(), NoiseMonomial::white(ch)))
    }

    pub fn term(reg: &Arc<Registry>, coef: Q, key: TermKey) -> Self {
        let mut p = Self::zero(reg);
        p.add_term(key, coef);
        p
    }

    /// Convolution of a noise-only integrand, distributed over its terms.
    /// Constant terms integrate to `a / c`.
    pub fn conv(rate: Q, dir: Direction, integrand: &StochPoly) -> Result<Self, PolyError> {
        if !rate.is_positive() {
            return Err(PolyError::NonPositiveRate(rate.to_string()));
        }
        let mut out = Self::zero(&integrand.reg);
        for (key, c) in &integrand.terms {
            if !key.mono.is_one() {
                return Err(PolyError::StateInConvolution);
            }
            if key.noise.is_one() {
                out.add_term(TermKey::one(), c / &rate);
            } else {
                let f = NoiseFactor::conv(rate.clone(), dir, key.noise.clone());
                out.add_term(TermKey::new(Monomial::one(), NoiseMonomial::single(f)), c.clone());
            }
        }
        Ok(out)
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.reg
    }

    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&TermKey, &Q)> + ExactSizeIterator {
        self.terms.iter()
    }

    pub fn into_terms(self) -> impl Iterator<Item = (TermKey, Q)> {
        self.terms.into_iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, key: &TermKey) -> Q {
        self.terms.get(key).cloned().unwrap_or_else(Q::zero)
    }

    /// Coefficient of a deterministic monomial.
    pub fn coeff_of(&self, mono: &Monomial) -> Q {
        self.coefficient(&TermKey::new(mono.clone(), NoiseMonomial::one()))
    }

    pub fn add_term(&mut self, key: TermKey, coef: Q) {
        if coef.is_zero() {
            return;
        }
        match self.terms.entry(key) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(coef);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += coef;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    fn check(&self, other: &StochPoly) -> Result<(), PolyError> {
        if same_registry(&self.reg, &other.reg) {
            Ok(())
        } else {
            Err(PolyError::RegistryMismatch)
        }
    }

    pub fn checked_add(&self, other: &StochPoly) -> Result<StochPoly, PolyError> {
        self.check(other)?;
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.add_term(k.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn checked_sub(&self, other: &StochPoly) -> Result<StochPoly, PolyError> {
        self.check(other)?;
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.add_term(k.clone(), -c);
        }
        Ok(out)
    }

    pub fn checked_mul(&self, other: &StochPoly) -> Result<StochPoly, PolyError> {
        self.check(other)?;
        Ok(self.mul_filtered(other, |_| true))
    }

    /// Product with every term of graded degree above `order` dropped.
    pub fn mul_truncated(&self, other: &StochPoly, grading: &Grading, order: u32) -> StochPoly {
        self.check(other).expect("registry mismatch");
        let da: Vec<u32> = self.terms.keys().map(|k| grading.degree(k)).collect();
        let db: Vec<u32> = other.terms.keys().map(|k| grading.degree(k)).collect();
        let mut out = Self::zero(&self.reg);
        for ((ka, ca), &a) in self.terms.iter().zip(&da) {
            if a > order {
                continue;
            }
            for ((kb, cb), &b) in other.terms.iter().zip(&db) {
                if a + b <= order {
                    out.add_term(ka.mul(kb), ca * cb);
                }
            }
        }
        out
    }

    fn mul_filtered(&self, other: &StochPoly, keep: impl Fn(&TermKey) -> bool) -> StochPoly {
        let mut out = Self::zero(&self.reg);
        for (ka, ca) in &self.terms {
            for (kb, cb) in &other.terms {
                let k = ka.mul(kb);
                if keep(&k) {
                    out.add_term(k, ca * cb);
                }
            }
        }
        out
    }

    pub fn scale(&self, c: &Q) -> StochPoly {
        if c.is_zero() {
            return Self::zero(&self.reg);
        }
        StochPoly {
            reg: Arc::clone(&self.reg),
            terms: self.terms.iter().map(|(k, v)| (k.clone(), v * c)).collect(),
        }
    }

    pub fn pow(&self, n: u32) -> StochPoly {
        let mut acc = Self::one(&self.reg);
        for _ in 0..n {
            acc = &acc * self;
        }
        acc
    }

    /// Keeps the terms satisfying `pred`.
    pub fn filter(&self, pred: impl Fn(&TermKey, &Q) -> bool) -> StochPoly {
        StochPoly {
            reg: Arc::clone(&self.reg),
            terms: self
                .terms
                .iter()
                .filter(|(k, c)| pred(k, c))
                .map(|(k, c)| (k.clone(), c.clone()))
                .collect(),
        }
    }

    pub fn truncate(&self, grading: &Grading, order: u32) -> StochPoly {
        self.filter(|k, _| grading.degree(k) <= order)
    }

    pub fn min_degree(&self, grading: &Grading) -> Option<u32> {
        self.terms.keys().map(|k| grading.degree(k)).min()
    }

    pub fn max_degree(&self, grading: &Grading) -> Option<u32> {
        self.terms.keys().map(|k| grading.degree(k)).max()
    }

    pub fn deterministic_part(&self) -> StochPoly {
        self.filter(|k, _| k.is_deterministic())
    }

    pub fn noise_part(&self) -> StochPoly {
        self.filter(|k, _| !k.is_deterministic())
    }

    pub fn is_deterministic(&self) -> bool {
        self.terms.keys().all(TermKey::is_deterministic)
    }

    pub fn has_future(&self) -> bool {
        self.terms.keys().any(|k| k.noise.has_future())
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        self.terms
            .keys()
            .flat_map(|k| k.mono.pairs().iter().map(|&(v, _)| v))
            .collect()
    }

    pub fn depends_on(&self, v: Var) -> bool {
        self.terms.keys().any(|k| k.mono.exp(v) > 0)
    }

    pub fn differentiate(&self, wrt: Wrt) -> Result<StochPoly, PolyError> {
        match wrt {
            Wrt::Var(v) => Ok(self.d(v)),
            Wrt::Noise(ch) => Err(PolyError::NoiseDerivative(ch)),
        }
    }

    /// Partial derivative with respect to a variable; noise factors are constants.
    pub fn d(&self, v: Var) -> StochPoly {
        let mut out = Self::zero(&self.reg);
        for (k, c) in &self.terms {
            if let Some((e, m)) = k.mono.derivative(v) {
                out.add_term(TermKey::new(m, k.noise.clone()), c * int(e as i64));
            }
        }
        out
    }

    /// Derivative with respect to the explicit time dependence carried by
    /// convolution factors. Bare white noise has no derivative.
    pub fn time_derivative(&self) -> Result<StochPoly, PolyError> {
        let mut out = Self::zero(&self.reg);
        for (k, c) in &self.terms {
            let fs = k.noise.factors();
            for (i, f) in fs.iter().enumerate() {
                let conv = match f {
                    NoiseFactor::Conv(conv) => conv,
                    NoiseFactor::White(ch) => return Err(PolyError::WhiteNoiseTimeDerivative(*ch)),
                };
                let rest = k.noise.without(i);
                let sign = match conv.dir {
                    Direction::Past => int(1),
                    Direction::Future => int(-1),
                };
                // d/dτ e^{∓cτ}*m = ∓c (e^{∓cτ}*m) ± m
                out.add_term(TermKey::new(k.mono.clone(), k.noise.clone()), -(c * &conv.rate * &sign));
                out.add_term(TermKey::new(k.mono.clone(), rest.mul(&conv.arg)), c * &sign);
            }
        }
        Ok(out)
    }

    /// Simultaneous substitution of variables by polynomials.
    pub fn substitute(&self, bindings: &BTreeMap<Var, StochPoly>) -> Result<StochPoly, PolyError> {
        self.substitute_impl(bindings, None)
    }

    /// Substitution with graded truncation applied to every intermediate product.
    pub fn substitute_truncated(
        &self,
        bindings: &BTreeMap<Var, StochPoly>,
        grading: &Grading,
        order: u32,
    ) -> Result<StochPoly, PolyError> {
        self.substitute_impl(bindings, Some((grading, order)))
    }

    fn substitute_impl(
        &self,
        bindings: &BTreeMap<Var, StochPoly>,
        trunc: Option<(&Grading, u32)>,
    ) -> Result<StochPoly, PolyError> {
        for b in bindings.values() {
            self.check(b)?;
        }
        check_acyclic(bindings, &self.reg)?;
        let mul = |a: &StochPoly, b: &StochPoly| match trunc {
            Some((g, o)) => a.mul_truncated(b, g, o),
            None => a * b,
        };
        let mut powers: HashMap<(Var, u32), StochPoly> = HashMap::new();
        let mut out = Self::zero(&self.reg);
        for (k, c) in &self.terms {
            let mut kept = Monomial::one();
            let mut acc: Option<StochPoly> = None;
            for &(v, e) in k.mono.pairs() {
                match bindings.get(&v) {
                    None => kept = kept.mul(&Monomial::var(v, e)),
                    Some(b) => {
                        let p = powers.entry((v, e)).or_insert_with(|| {
                            let mut p = Self::one(&self.reg);
                            for _ in 0..e {
                                p = mul(&p, b);
                            }
                            p
                        });
                        acc = Some(match acc {
                            None => p.clone(),
                            Some(a) => mul(&a, p),
                        });
                    }
                }
            }
            let head = Self::term(&self.reg, c.clone(), TermKey::new(kept, k.noise.clone()));
            let piece = match acc {
                None => head,
                Some(a) => mul(&head, &a),
            };
            for (pk, pc) in piece.terms {
                if trunc.is_none_or(|(g, o)| g.degree(&pk) <= o) {
                    out.add_term(pk, pc);
                }
            }
        }
        Ok(out)
    }

    /// Exact division by a monomial that divides every term.
    pub fn divide_monomial(&self, m: &Monomial) -> Result<StochPoly, PolyError> {
        let mut out = Self::zero(&self.reg);
        for (k, c) in &self.terms {
            let q = k.mono.divide(m).ok_or(PolyError::NotDivisible)?;
            out.add_term(TermKey::new(q, k.noise.clone()), c.clone());
        }
        Ok(out)
    }

    /// Groups terms by their powers of `vars`: `p = Σ m · coeffs[m]`.
    pub fn collect(&self, vars: &[Var]) -> BTreeMap<Monomial, StochPoly> {
        let mut out: BTreeMap<Monomial, StochPoly> = BTreeMap::new();
        for (k, c) in &self.terms {
            let outer = Monomial::from_pairs(vars.iter().map(|&v| (v, k.mono.exp(v))));
            let inner = k.mono.divide(&outer).expect("outer divides");
            out.entry(outer)
                .or_insert_with(|| Self::zero(&self.reg))
                .add_term(TermKey::new(inner, k.noise.clone()), c.clone());
        }
        out
    }

    /// Sets the given variables to zero.
    pub fn at_zero(&self, vars: &[Var]) -> StochPoly {
        self.filter(|k, _| vars.iter().all(|&v| k.mono.exp(v) == 0))
    }

    /// Replaces the registry by an equal one (for combining independently built values).
    pub fn with_registry(mut self, reg: &Arc<Registry>) -> Result<StochPoly, PolyError> {
        if !same_registry(&self.reg, reg) {
            return Err(PolyError::RegistryMismatch);
        }
        self.reg = Arc::clone(reg);
        Ok(self)
    }
}

fn check_acyclic(bindings: &BTreeMap<Var, StochPoly>, reg: &Registry) -> Result<(), PolyError> {
    // Self references are allowed (simultaneous substitution); longer cycles are not.
    let edges: BTreeMap<Var, Vec<Var>> = bindings
        .iter()
        .map(|(&v, p)| {
            let deps = p
                .vars()
                .into_iter()
                .filter(|w| *w != v && bindings.contains_key(w))
                .collect();
            (v, deps)
        })
        .collect();
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    fn visit(
        v: Var,
        edges: &BTreeMap<Var, Vec<Var>>,
        marks: &mut BTreeMap<Var, Mark>,
        reg: &Registry,
    ) -> Result<(), PolyError> {
        match marks.get(&v) {
            Some(Mark::Done) => return Ok(()),
            Some(Mark::Open) => return Err(PolyError::CyclicBinding(reg.name(v).to_string())),
            None => {}
        }
        marks.insert(v, Mark::Open);
        for &w in &edges[&v] {
            visit(w, edges, marks, reg)?;
        }
        marks.insert(v, Mark::Done);
        Ok(())
    }
    let mut marks = BTreeMap::new();
    for &v in edges.keys() {
        visit(v, &edges, &mut marks, reg)?;
    }
    Ok(())
}

impl Add for &StochPoly {
    type Output = StochPoly;
    /// Panics on mismatched registries; see [`StochPoly::checked_add`].
    fn add(self, rhs: &StochPoly) -> StochPoly {
        self.checked_add(rhs).expect("registry mismatch")
    }
}

impl Sub for &StochPoly {
    type Output = StochPoly;
    fn sub(self, rhs: &StochPoly) -> StochPoly {
        self.checked_sub(rhs).expect("registry mismatch")
    }
}

impl Mul for &StochPoly {
    type Output = StochPoly;
    fn mul(self, rhs: &StochPoly) -> StochPoly {
        self.checked_mul(rhs).expect("registry mismatch")
    }
}

impl Neg for &StochPoly {
    type Output = StochPoly;
    fn neg(self) -> StochPoly {
        self.scale(&int(-1))
    }
}

impl Add for StochPoly {
    type Output = StochPoly;
    fn add(self, rhs: StochPoly) -> StochPoly {
        &self + &rhs
    }
}

impl Sub for StochPoly {
    type Output = StochPoly;
    fn sub(self, rhs: StochPoly) -> StochPoly {
        &self - &rhs
    }
}

impl Mul for StochPoly {
    type Output = StochPoly;
    fn mul(self, rhs: StochPoly) -> StochPoly {
        &self * &rhs
    }
}

impl Neg for StochPoly {
    type Output = StochPoly;
    fn neg(self) -> StochPoly {
        -&self
    }
}
