use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Var, Q};

/// Product of variable powers, stored sparsely and sorted by variable.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<(Var, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(v: Var, exp: u32) -> Self {
        if exp == 0 {
            Monomial::one()
        } else {
            Monomial(vec![(v, exp)])
        }
    }

    /// Builds a monomial from (variable, exponent) pairs in any order.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Var, u32)>) -> Self {
        let mut m = Monomial::one();
        for (v, e) in pairs {
            m = m.mul(&Monomial::var(v, e));
        }
        m
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn pairs(&self) -> &[(Var, u32)] {
        &self.0
    }

    pub fn exp(&self, v: Var) -> u32 {
        self.0.iter().find(|(w, _)| *w == v).map_or(0, |&(_, e)| e)
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().map(|&(_, e)| e).sum()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let (a, b) = (&self.0, &other.0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((a[i].0, a[i].1 + b[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Monomial(out)
    }

    /// Exponent of `v` and the monomial with `v` removed.
    pub fn split_off(&self, v: Var) -> (u32, Monomial) {
        let e = self.exp(v);
        let rest = self.0.iter().filter(|(w, _)| *w != v).copied().collect();
        (e, Monomial(rest))
    }

    /// Formal derivative: returns (multiplier, reduced monomial), or None when `v` is absent.
    pub fn derivative(&self, v: Var) -> Option<(u32, Monomial)> {
        let pos = self.0.iter().position(|(w, _)| *w == v)?;
        let e = self.0[pos].1;
        let mut rest = self.0.clone();
        if e == 1 {
            rest.remove(pos);
        } else {
            rest[pos].1 = e - 1;
        }
        Some((e, Monomial(rest)))
    }

    /// `self / other` when `other` divides `self`.
    pub fn divide(&self, other: &Monomial) -> Option<Monomial> {
        let mut out = self.0.clone();
        for &(v, e) in &other.0 {
            let pos = out.iter().position(|(w, _)| *w == v)?;
            if out[pos].1 < e {
                return None;
            }
            out[pos].1 -= e;
            if out[pos].1 == 0 {
                out.remove(pos);
            }
        }
        Some(Monomial(out))
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.total_degree()
            .cmp(&other.total_degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Kernel direction of a convolution factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `∫_{-∞}^τ e^{-c(τ-s)} m(s) ds`
    Past,
    /// `∫_τ^{∞} e^{c(τ-s)} m(s) ds` (anticipatory)
    Future,
}

/// Exponential-kernel convolution of a noise monomial.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Conv {
    pub rate: Q,
    pub dir: Direction,
    pub arg: NoiseMonomial,
}

/// A single noise factor: a white-noise channel or a convolution.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NoiseFactor {
    White(u32),
    Conv(Box<Conv>),
}

impl NoiseFactor {
    pub fn conv(rate: Q, dir: Direction, arg: NoiseMonomial) -> Self {
        NoiseFactor::Conv(Box::new(Conv { rate, dir, arg }))
    }

    /// Number of white-noise leaves underneath this factor.
    pub fn white_leaves(&self) -> usize {
        match self {
            NoiseFactor::White(_) => 1,
            NoiseFactor::Conv(c) => c.arg.white_leaves(),
        }
    }

    pub fn collect_channels(&self, out: &mut BTreeSet<u32>) {
        match self {
            NoiseFactor::White(ch) => {
                out.insert(*ch);
            }
            NoiseFactor::Conv(c) => c.arg.collect_channels(out),
        }
    }

    pub fn has_future(&self) -> bool {
        match self {
            NoiseFactor::White(_) => false,
            NoiseFactor::Conv(c) => c.dir == Direction::Future || c.arg.has_future(),
        }
    }
}

/// Multiset of noise factors, kept sorted. The empty product is the unit.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NoiseMonomial(Vec<NoiseFactor>);

impl NoiseMonomial {
    pub fn one() -> Self {
        NoiseMonomial(Vec::new())
    }

    pub fn white(ch: u32) -> Self {
        NoiseMonomial(vec![NoiseFactor::White(ch)])
    }

    pub fn single(f: NoiseFactor) -> Self {
        NoiseMonomial(vec![f])
    }

    pub fn from_factors(mut factors: Vec<NoiseFactor>) -> Self {
        factors.sort();
        NoiseMonomial(factors)
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn factors(&self) -> &[NoiseFactor] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mul(&self, other: &NoiseMonomial) -> NoiseMonomial {
        if other.is_one() {
            return self.clone();
        }
        if self.is_one() {
            return other.clone();
        }
        let mut v = Vec::with_capacity(self.0.len() + other.0.len());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(&other.0);
        v.sort();
        NoiseMonomial(v)
    }

    /// The product with the factor at `i` removed.
    pub fn without(&self, i: usize) -> NoiseMonomial {
        let mut v = self.0.clone();
        v.remove(i);
        NoiseMonomial(v)
    }

    pub fn white_leaves(&self) -> usize {
        self.0.iter().map(NoiseFactor::white_leaves).sum()
    }

    pub fn channels(&self) -> BTreeSet<u32> {
        let mut s = BTreeSet::new();
        self.collect_channels(&mut s);
        s
    }

    fn collect_channels(&self, out: &mut BTreeSet<u32>) {
        for f in &self.0 {
            f.collect_channels(out);
        }
    }

    pub fn has_white(&self) -> bool {
        self.0.iter().any(|f| matches!(f, NoiseFactor::White(_)))
    }

    pub fn has_future(&self) -> bool {
        self.0.iter().any(NoiseFactor::has_future)
    }

    /// Maximum convolution nesting depth (0 for white noise only).
    pub fn depth(&self) -> usize {
        self.0
            .iter()
            .map(|f| match f {
                NoiseFactor::White(_) => 0,
                NoiseFactor::Conv(c) => 1 + c.arg.depth(),
            })
            .max()
            .unwrap_or(0)
    }
}

/// Factor structure of a term: everything except the coefficient.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermKey {
    pub mono: Monomial,
    pub noise: NoiseMonomial,
}

impl TermKey {
    pub fn new(mono: Monomial, noise: NoiseMonomial) -> Self {
        TermKey { mono, noise }
    }

    pub fn one() -> Self {
        TermKey::new(Monomial::one(), NoiseMonomial::one())
    }

    pub fn mul(&self, other: &TermKey) -> TermKey {
        TermKey {
            mono: self.mono.mul(&other.mono),
            noise: self.noise.mul(&other.noise),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.noise.is_one()
    }
}
