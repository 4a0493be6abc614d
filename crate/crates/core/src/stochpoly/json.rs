use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Direction, Monomial, NoiseFactor, NoiseMonomial, PolyError, Registry, StochPoly, TermKey, Q};

/// Serialized polynomial: `{"terms":[{"coef":"p/q","vars":{"X":3},"noise":[1],"conv":[...]}]}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyJson {
    pub terms: Vec<TermJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermJson {
    pub coef: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub vars: BTreeMap<String, u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub noise: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conv: Vec<ConvJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvJson {
    pub rate: String,
    pub dir: Direction,
    pub arg: NoiseJson,
}

/// Integrand of a convolution: a product of noise factors with unit coefficient.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseJson {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub noise: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conv: Vec<ConvJson>,
}

pub fn parse_rational(s: &str) -> Result<Q, PolyError> {
    let t = s.trim();
    let bad = || PolyError::BadRational(s.to_string());
    match t.split_once('/') {
        Some((n, d)) => {
            let n = n.trim().parse().map_err(|_| bad())?;
            let d: num_bigint::BigInt = d.trim().parse().map_err(|_| bad())?;
            if d == 0.into() {
                return Err(bad());
            }
            Ok(Q::new(n, d))
        }
        None => Ok(Q::from_integer(t.parse().map_err(|_| bad())?)),
    }
}

fn noise_from_json(n: &NoiseJson) -> Result<NoiseMonomial, PolyError> {
    let mut fs = Vec::new();
    for &ch in &n.noise {
        if ch == 0 {
            return Err(PolyError::BadChannel(ch));
        }
        fs.push(NoiseFactor::White(ch));
    }
    for c in &n.conv {
        let rate = parse_rational(&c.rate)?;
        if rate <= Q::from_integer(0.into()) {
            return Err(PolyError::NonPositiveRate(c.rate.clone()));
        }
        let arg = noise_from_json(&c.arg)?;
        if arg.is_one() {
            return Err(PolyError::Parse("convolution integrand has no noise".into()));
        }
        fs.push(NoiseFactor::conv(rate, c.dir, arg));
    }
    Ok(NoiseMonomial::from_factors(fs))
}

fn noise_to_json(m: &NoiseMonomial) -> NoiseJson {
    let mut out = NoiseJson::default();
    for f in m.factors() {
        match f {
            NoiseFactor::White(ch) => out.noise.push(*ch),
            NoiseFactor::Conv(c) => out.conv.push(ConvJson {
                rate: c.rate.to_string(),
                dir: c.dir,
                arg: noise_to_json(&c.arg),
            }),
        }
    }
    out
}

impl StochPoly {
    pub fn from_json(reg: &Arc<Registry>, j: &PolyJson) -> Result<StochPoly, PolyError> {
        let mut p = StochPoly::zero(reg);
        for t in &j.terms {
            let coef = parse_rational(&t.coef)?;
            let mut mono = Monomial::one();
            for (name, &e) in &t.vars {
                mono = mono.mul(&Monomial::var(reg.get(name)?, e));
            }
            let noise = noise_from_json(&NoiseJson {
                noise: t.noise.clone(),
                conv: t.conv.clone(),
            })?;
            p.add_term(TermKey::new(mono, noise), coef);
        }
        Ok(p)
    }

    pub fn to_json(&self) -> PolyJson {
        let reg = self.registry();
        PolyJson {
            terms: self
                .terms()
                .map(|(k, c)| {
                    let n = noise_to_json(&k.noise);
                    TermJson {
                        coef: c.to_string(),
                        vars: k
                            .mono
                            .pairs()
                            .iter()
                            .map(|&(v, e)| (reg.name(v).to_string(), e))
                            .collect(),
                        noise: n.noise,
                        conv: n.conv,
                    }
                })
                .collect(),
        }
    }

    pub fn parse_json_str(reg: &Arc<Registry>, s: &str) -> Result<StochPoly, PolyError> {
        let j: PolyJson = serde_json::from_str(s).map_err(|e| PolyError::Parse(e.to_string()))?;
        StochPoly::from_json(reg, &j)
    }
}
