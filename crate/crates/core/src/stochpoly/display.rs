use std::fmt;

use num_traits::{One, Signed};

use super::{Direction, Monomial, NoiseFactor, NoiseMonomial, Registry, StochPoly, Var, Q};

fn rate_str(q: &Q) -> String {
    if q.is_one() {
        "t".into()
    } else if q.is_integer() {
        format!("{q}t")
    } else {
        format!("{q} t")
    }
}

fn factor_str(f: &NoiseFactor) -> String {
    match f {
        NoiseFactor::White(ch) => format!("phi{ch}"),
        NoiseFactor::Conv(c) => {
            let sign = match c.dir {
                Direction::Past => '-',
                Direction::Future => '+',
            };
            let arg = noise_str(&c.arg);
            let arg = if c.arg.len() > 1 { format!("({arg})") } else { arg };
            format!("[exp({sign}{})*{arg}]", rate_str(&c.rate))
        }
    }
}

fn noise_str(m: &NoiseMonomial) -> String {
    m.factors().iter().map(factor_str).collect::<Vec<_>>().join("*")
}

fn mono_str(reg: &Registry, m: &Monomial) -> String {
    m.pairs()
        .iter()
        .map(|&(v, e)| {
            if e == 1 {
                reg.name(v).to_string()
            } else {
                format!("{}^{e}", reg.name(v))
            }
        })
        .collect::<Vec<_>>()
        .join("*")
}

/// Writes `terms` as a signed sum, e.g. `x - x^3 + 2*e*x`.
fn write_sum<'a>(
    out: &mut String,
    reg: &Registry,
    terms: impl Iterator<Item = (&'a Monomial, &'a NoiseMonomial, &'a Q)>,
) {
    let mut first = true;
    for (mono, noise, c) in terms {
        let body: Vec<String> = [mono_str(reg, mono), noise_str(noise)]
            .into_iter()
            .filter(|s| !s.is_empty())
            .collect();
        let body = body.join("*");
        let mag = c.abs();
        let text = if body.is_empty() {
            mag.to_string()
        } else if mag.is_one() {
            body
        } else if mag.is_integer() {
            format!("{mag}*{body}")
        } else {
            format!("({mag})*{body}")
        };
        match (first, c.is_negative()) {
            (true, true) => out.push('-'),
            (true, false) => {}
            (false, true) => out.push_str(" - "),
            (false, false) => out.push_str(" + "),
        }
        out.push_str(&text);
        first = false;
    }
    if first {
        out.push('0');
    }
}

impl fmt::Display for StochPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_sum(
            &mut s,
            self.registry(),
            self.terms().map(|(k, c)| (&k.mono, &k.noise, c)),
        );
        f.write_str(&s)
    }
}

impl StochPoly {
    /// Pretty-print grouped by powers of `by`, e.g. `x - x^3 + e*(-x + 4*x^3)`.
    pub fn display_grouped(&self, by: &[Var]) -> String {
        let reg = self.registry();
        let groups = self.collect(by);
        if groups.is_empty() {
            return "0".into();
        }
        let mut out = String::new();
        for (i, (outer, inner)) in groups.iter().enumerate() {
            let mut body = String::new();
            write_sum(&mut body, reg, inner.terms().map(|(k, c)| (&k.mono, &k.noise, c)));
            let piece = if outer.is_one() {
                body
            } else if inner.len() == 1 {
                let (k, c) = inner.terms().next().expect("one term");
                let mut one = String::new();
                write_sum(&mut one, reg, std::iter::once((&outer.mul(&k.mono), &k.noise, c)));
                one
            } else {
                format!("{}*({body})", mono_str(reg, outer))
            };
            if i == 0 {
                out.push_str(&piece);
            } else if let Some(rest) = piece.strip_prefix('-') {
                out.push_str(" - ");
                out.push_str(rest);
            } else {
                out.push_str(" + ");
                out.push_str(&piece);
            }
        }
        out
    }
}
