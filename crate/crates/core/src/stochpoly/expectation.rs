use num_traits::{One, Zero};

use super::{poly::int, Direction, NoiseFactor, NoiseMonomial, StochPoly, TermKey, Q};

/// Result of averaging over the noise.
#[derive(Clone, Debug, PartialEq)]
pub struct Expectation {
    /// Deterministic mean of every reducible term.
    pub mean: StochPoly,
    /// Terms whose moment structure is not supported, kept verbatim.
    pub unreduced: StochPoly,
}

impl StochPoly {
    /// Expectation over independent unit white noises.
    ///
    /// Odd products vanish, channels factor independently, `E[e^{∓cτ}*m] = E[m]/c`,
    /// and products of single-level convolutions of bare white noise are paired
    /// with covariance `1/(c1+c2)` for equal directions (zero otherwise).
    /// Anything else is reported in `unreduced`.
    pub fn expectation(&self) -> Expectation {
        let mut mean = StochPoly::zero(self.registry());
        let mut unreduced = StochPoly::zero(self.registry());
        for (k, c) in self.terms() {
            match moment(&k.noise) {
                Some(m) => mean.add_term(TermKey::new(k.mono.clone(), NoiseMonomial::one()), c * m),
                None => unreduced.add_term(k.clone(), c.clone()),
            }
        }
        Expectation { mean, unreduced }
    }
}

/// `E[m]`, or None when unsupported.
pub fn moment(m: &NoiseMonomial) -> Option<Q> {
    if m.is_one() {
        return Some(Q::one());
    }
    if m.white_leaves() % 2 == 1 {
        return Some(Q::zero());
    }
    let mut total = Q::one();
    for comp in components(m.factors()) {
        let v = component_moment(&comp)?;
        if v.is_zero() {
            return Some(v);
        }
        total *= v;
    }
    Some(total)
}

/// Splits factors into groups that share no noise channel.
fn components(fs: &[NoiseFactor]) -> Vec<Vec<NoiseFactor>> {
    let chans: Vec<_> = fs
        .iter()
        .map(|f| {
            let mut s = std::collections::BTreeSet::new();
            f.collect_channels(&mut s);
            s
        })
        .collect();
    let mut group: Vec<usize> = (0..fs.len()).collect();
    fn root(g: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while g[r] != r {
            r = g[r];
        }
        g[i] = r;
        r
    }
    for i in 0..fs.len() {
        for j in i + 1..fs.len() {
            if !chans[i].is_disjoint(&chans[j]) {
                let (a, b) = (root(&mut group, i), root(&mut group, j));
                group[a] = b;
            }
        }
    }
    let mut out: Vec<(usize, Vec<NoiseFactor>)> = Vec::new();
    for (i, f) in fs.iter().enumerate() {
        let r = root(&mut group, i);
        match out.iter_mut().find(|(g, _)| *g == r) {
            Some((_, v)) => v.push(f.clone()),
            None => out.push((r, vec![f.clone()])),
        }
    }
    out.into_iter().map(|(_, v)| v).collect()
}

fn component_moment(fs: &[NoiseFactor]) -> Option<Q> {
    let leaves: usize = fs.iter().map(NoiseFactor::white_leaves).sum();
    if leaves % 2 == 1 {
        return Some(Q::zero());
    }
    if let [NoiseFactor::Conv(c)] = fs {
        return moment(&c.arg).map(|m| m / &c.rate);
    }
    let linear: Option<Vec<(Q, Direction)>> = fs
        .iter()
        .map(|f| match f {
            NoiseFactor::Conv(c) if matches!(c.arg.factors(), [NoiseFactor::White(_)]) => Some((c.rate.clone(), c.dir)),
            _ => None,
        })
        .collect();
    wick(&linear?)
}

/// Sum over perfect pairings of pairwise covariances.
fn wick(fs: &[(Q, Direction)]) -> Option<Q> {
    if fs.is_empty() {
        return Some(Q::one());
    }
    let (first, rest) = fs.split_first().expect("non-empty");
    let mut total = Q::zero();
    for i in 0..rest.len() {
        let cov = if first.1 == rest[i].1 {
            int(1) / (&first.0 + &rest[i].0)
        } else {
            Q::zero()
        };
        if cov.is_zero() {
            continue;
        }
        let mut others = rest.to_vec();
        others.remove(i);
        total += cov * wick(&others)?;
    }
    Some(total)
}
