//! The SEIR epidemic model in the transformed `(U, V, W)` coordinates about
//! its endemic state, built with exact coefficients.
//!
//! Time is the rescaled `tau`; the rates `alpha0 = alpha mu` and
//! `gamma0 = gamma mu` are O(1). The grading parameter `k` stands for the
//! rational function `mu^2 alpha0 gamma0 / ((gamma0 + mu^2)(alpha0 + mu^2))`,
//! which has weight 2 and is bound to its numeric value for simulation.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::{Num, One, ToPrimitive, Zero};

use crate::cm::ManifoldExpansion;
use crate::stochpoly::{Grading, Registry, StochPoly, Var, VarKind, Q};
use crate::system::{SlowFastSystem, SystemError};

/// Exact epidemiological rates (per year).
#[derive(Clone, Debug, PartialEq)]
pub struct SeirParams {
    pub mu: Q,
    pub beta: Q,
    pub alpha: Q,
    pub gamma: Q,
}

impl SeirParams {
    /// Measles-like defaults: mu = 0.02, beta = 1575, alpha = 1/0.0279, gamma = 1/0.01.
    pub fn measles() -> Self {
        SeirParams {
            mu: Q::new(1.into(), 50.into()),
            beta: Q::from_integer(1575.into()),
            alpha: Q::new(10000.into(), 279.into()),
            gamma: Q::from_integer(100.into()),
        }
    }

    /// Converts floating-point rates to the nearest short rationals.
    pub fn from_f64(mu: f64, beta: f64, alpha: f64, gamma: f64) -> Option<Self> {
        Some(SeirParams {
            mu: rationalize(mu)?,
            beta: rationalize(beta)?,
            alpha: rationalize(alpha)?,
            gamma: rationalize(gamma)?,
        })
    }

    pub fn alpha0(&self) -> Q {
        &self.alpha * &self.mu
    }

    pub fn gamma0(&self) -> Q {
        &self.gamma * &self.mu
    }

    pub fn r0(&self) -> Q {
        let (m, a, g) = (&self.mu, &self.alpha, &self.gamma);
        a * &self.beta / ((a + m) * (g + m))
    }

    /// Endemic equilibrium `(S0, E0, I0)`.
    pub fn fixed_point(&self) -> [Q; 3] {
        let (m, b, a, g) = (&self.mu, &self.beta, &self.alpha, &self.gamma);
        [
            (g + m) * (a + m) / (b * a),
            m / (a + m) - m * (g + m) / (a * b),
            m * a / ((g + m) * (a + m)) - m / b,
        ]
    }

    /// Numeric value of the grading parameter `k`.
    pub fn kappa(&self) -> Q {
        let (a0, g0) = (self.alpha0(), self.gamma0());
        let m2 = &self.mu * &self.mu;
        &m2 * &a0 * &g0 / ((&g0 + &m2) * (&a0 + &m2))
    }
}

/// Continued-fraction approximation of `x` with relative error below 1e-12.
pub fn rationalize(x: f64) -> Option<Q> {
    if !x.is_finite() {
        return None;
    }
    let tol = 1e-12 * x.abs().max(1.0);
    let (mut h0, mut h1) = (num_bigint::BigInt::zero(), num_bigint::BigInt::one());
    let (mut k0, mut k1) = (num_bigint::BigInt::one(), num_bigint::BigInt::zero());
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        let ai = num_bigint::BigInt::from(a as i64);
        let h2 = &ai * &h1 + &h0;
        let k2 = &ai * &k1 + &k0;
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let q = Q::new(h1.clone(), k1.clone());
        if (q.to_f64()? - x).abs() <= tol {
            return Some(q);
        }
        let frac = r - a;
        if frac == 0.0 {
            return Some(q);
        }
        r = 1.0 / frac;
    }
    None
}

/// Deviations `(S-S0, E-E0, I-I0)` to transformed coordinates `(U, V, W)`.
pub fn forward<T: Num + Clone>(alpha0: &T, gamma0: &T, dev: [T; 3]) -> [T; 3] {
    let [s, e, i] = dev;
    let c = gamma0.clone() / (alpha0.clone() + gamma0.clone());
    let u = T::zero() - c.clone() * e.clone();
    let v = s + c * e.clone();
    let w = i + e;
    [u, v, w]
}

/// Inverse of [`forward`].
pub fn inverse<T: Num + Clone>(alpha0: &T, gamma0: &T, uvw: [T; 3]) -> [T; 3] {
    let [u, v, w] = uvw;
    let e = T::zero() - (alpha0.clone() + gamma0.clone()) / gamma0.clone() * u.clone();
    let s = v + u;
    let i = w - e.clone();
    [s, e, i]
}

/// Handles into the registry of a transformed SEIR system.
#[derive(Clone, Copy, Debug)]
pub struct SeirVars {
    pub u: Var,
    pub v: Var,
    pub w: Var,
    pub mu: Var,
    pub k: Var,
    pub sigma: [Var; 3],
    pub sigma5: Var,
    pub sigma6: Var,
    pub y: Var,
    pub x1: Var,
    pub x2: Var,
}

impl SeirVars {
    pub fn of(sys: &SlowFastSystem) -> Result<Self, SystemError> {
        let v = |n: &str| sys.var(n);
        Ok(SeirVars {
            u: v("U")?,
            v: v("V")?,
            w: v("W")?,
            mu: v("mu")?,
            k: v("k")?,
            sigma: [v("s1")?, v("s2")?, v("s3")?],
            sigma5: v("s5")?,
            sigma6: v("s6")?,
            y: v("Y")?,
            x1: v("X1")?,
            x2: v("X2")?,
        })
    }
}

/// Amplitudes of the two lumped noise channels of the naive reduced model,
/// chosen so that each has the variance of the combination it replaces.
pub fn lumped_amplitudes(p: &SeirParams, sigma: [f64; 3]) -> (f64, f64) {
    let mu = p.mu.to_f64().unwrap_or(f64::NAN);
    let c = (p.gamma0() / (p.alpha0() + p.gamma0())).to_f64().unwrap_or(f64::NAN);
    let s5 = mu * (sigma[0].powi(2) + (c * sigma[1]).powi(2)).sqrt();
    let s6 = mu * (sigma[1].powi(2) + sigma[2].powi(2)).sqrt();
    (s5, s6)
}

/// The transformed SEIR system with noise channels 1-3 carrying the
/// original additive noises through the linear change of variables.
pub fn transformed_system(p: &SeirParams, sigma: [f64; 3]) -> SlowFastSystem {
    let mut reg = Registry::new();
    let mut reg_var = |n: &str, k: VarKind| reg.register(n, k).expect("fixed names are valid");
    let v = reg_var("V", VarKind::Slow);
    let w = reg_var("W", VarKind::Slow);
    let u = reg_var("U", VarKind::Fast);
    let mu = reg_var("mu", VarKind::Grading);
    let k = reg_var("k", VarKind::Grading);
    let s1 = reg_var("s1", VarKind::Amplitude);
    let s2 = reg_var("s2", VarKind::Amplitude);
    let s3 = reg_var("s3", VarKind::Amplitude);
    let s5 = reg_var("s5", VarKind::Amplitude);
    let s6 = reg_var("s6", VarKind::Amplitude);
    let x1 = reg_var("X1", VarKind::Slow);
    let x2 = reg_var("X2", VarKind::Slow);
    let y = reg_var("Y", VarKind::Fast);
    let reg = Arc::new(reg);

    let a0 = p.alpha0();
    let g0 = p.gamma0();
    let s = &a0 + &g0;
    let c = |q: Q| StochPoly::constant(&reg, q);
    let x = |var: Var| StochPoly::var(&reg, var);
    let phi = |ch: u32| StochPoly::white(&reg, ch);
    let (pu, pv, pw, pmu, pk) = (x(u), x(v), x(w), x(mu), x(k));
    let mu2 = pmu.pow(2);

    // (gamma0 + mu^2)(alpha0 + mu^2) [(alpha0 + gamma0) U + gamma0 W]
    let pp = &(&(&c(g0.clone()) + &mu2) * &(&c(a0.clone()) + &mu2)) * &(&pu.scale(&s) + &pw.scale(&g0));
    // (gamma0 W + (alpha0 + gamma0) U + k)(U + V)
    let qq = &(&(&pw.scale(&g0) + &pu.scale(&s)) + &pk) * &(&pu + &pv);
    // mu^2 (gamma0 V - alpha0 U) / (alpha0 + gamma0)
    let mix = (&mu2 * &(&pv.scale(&g0) - &pu.scale(&a0))).scale(&(Q::one() / &s));
    let mb = pmu.scale(&p.beta);

    let inv = |q: Q| Q::one() / q;
    let noise = |amp: Var, ch: u32| &(&pmu * &x(amp)) * &phi(ch);
    let mbq = &mb * &qq;
    let c_u = &g0 / &s;

    let du = sum(vec![
        pu.scale(&-a0.clone()),
        mix.clone(),
        pp.scale(&-inv(&a0 * &s)),
        mbq.scale(&-inv(s.clone())),
        noise(s2, 2).scale(&-c_u.clone()),
    ]);
    let dv = sum(vec![
        pu.scale(&a0),
        -&mix,
        pp.scale(&-inv(&g0 * &s)),
        mbq.scale(&-(&a0 / (&g0 * &s))),
        noise(s1, 1),
        noise(s2, 2).scale(&c_u),
    ]);
    let dw = sum(vec![
        pu.scale(&-a0.clone()),
        -&(&(&c(g0.clone()) + &mu2) * &(&pu + &pw)),
        pp.scale(&inv(&a0 * &g0)),
        -&(&mu2 * &pv),
        mbq.scale(&inv(g0.clone())),
        noise(s2, 2),
        noise(s3, 3),
    ]);

    let mut gradings = BTreeMap::new();
    let mut cm = Grading::new();
    for var in [v, w, mu] {
        cm.set(var, 1);
    }
    cm.set(k, 2);
    let mut nf = Grading::new();
    for var in [y, x1, x2, mu] {
        nf.set(var, 1);
    }
    nf.set(k, 2);
    gradings.insert("manifold".to_string(), cm);
    gradings.insert("normal_form".to_string(), nf);

    let (l5, l6) = lumped_amplitudes(p, sigma);
    let mut parameters = BTreeMap::new();
    parameters.insert(mu, p.mu.to_f64().unwrap_or(f64::NAN));
    parameters.insert(k, p.kappa().to_f64().unwrap_or(f64::NAN));
    for (var, val) in [(s1, sigma[0]), (s2, sigma[1]), (s3, sigma[2]), (s5, l5), (s6, l6)] {
        parameters.insert(var, val);
    }

    let sys = SlowFastSystem {
        name: "seir_transformed".to_string(),
        reg,
        slow: vec![v, w],
        fast: vec![u],
        params: vec![mu, k],
        amplitudes: vec![s1, s2, s3, s5, s6],
        new_coords: BTreeMap::from([(v, x1), (w, x2), (u, y)]),
        rhs: BTreeMap::from([(u, du), (v, dv), (w, dw)]),
        gradings,
        parameters,
    };
    sys.validate().expect("transformed SEIR system is well formed");
    sys
}

fn sum(parts: Vec<StochPoly>) -> StochPoly {
    let mut it = parts.into_iter();
    let first = it.next().expect("at least one part");
    it.fold(first, |acc, p| &acc + &p)
}

/// Naive reduced model: the deterministic reduction on `h` plus the lumped
/// noises `s5 phi5` and `s6 phi6` on fresh channels 5 and 6.
pub fn naive_model(sys: &SlowFastSystem, reduced: &[(Var, StochPoly)]) -> Result<Vec<(Var, StochPoly)>, SystemError> {
    let sv = SeirVars::of(sys)?;
    let lumped = |amp: Var, ch: u32| &StochPoly::var(&sys.reg, amp) * &StochPoly::white(&sys.reg, ch);
    Ok(reduced
        .iter()
        .map(|(var, p)| {
            let noise = if *var == sv.v {
                lumped(sv.sigma5, 5)
            } else {
                lumped(sv.sigma6, 6)
            };
            (*var, &p.deterministic_part() + &noise)
        })
        .collect())
}

/// `U` on a manifold `U = h(V, W)` given as an expansion of the fast variable.
pub fn manifold_u(h: &[ManifoldExpansion], sys: &SlowFastSystem) -> Option<StochPoly> {
    let u = sys.fast.first()?;
    h.iter().find(|m| m.target == *u).map(|m| m.body.clone())
}
