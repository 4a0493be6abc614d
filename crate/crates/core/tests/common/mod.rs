//! Hand-derived expressions shared by the integration tests and the
//! acceptance runner.
#![allow(dead_code)]

use modelred::nf::diff_terms;
use modelred::seir::{SeirParams, SeirVars};
use modelred::stochpoly::{int, ratio, Direction, StochPoly, Var, Q};
use modelred::system::SlowFastSystem;
use modelred::systems;
use num_traits::One;

/// Err with both sides and the differing terms unless `expected == actual`.
pub fn same(what: &str, expected: &StochPoly, actual: &StochPoly) -> Result<(), String> {
    let d = diff_terms(expected, actual);
    if d.is_empty() {
        Ok(())
    } else {
        let terms: Vec<String> = d
            .iter()
            .map(|t| {
                let unit = StochPoly::term(expected.registry(), Q::one(), t.key.clone());
                format!("{unit}: expected {}, got {}", t.expected, t.actual)
            })
            .collect();
        Err(format!("{what}: {}", terms.join("; ")))
    }
}

pub fn assert_same(what: &str, expected: &StochPoly, actual: &StochPoly) {
    if let Err(e) = same(what, expected, actual) {
        panic!("{e}\n expected {expected}\n got {actual}");
    }
}

/// The bundled Duffing system and its variables.
pub struct D {
    pub sys: SlowFastSystem,
    pub x: Var,
    pub y: Var,
    pub xn: Var,
    pub yn: Var,
    pub e: Var,
    pub s: Var,
}

pub fn setup() -> D {
    let sys = systems::duffing();
    let v = |n: &str| sys.var(n).unwrap();
    D {
        x: v("x"),
        y: v("y"),
        xn: v("X"),
        yn: v("Y"),
        e: v("e"),
        s: v("s"),
        sys,
    }
}

impl D {
    pub fn p(&self, v: Var) -> StochPoly {
        StochPoly::var(&self.sys.reg, v)
    }
    pub fn c(&self, n: i64) -> StochPoly {
        StochPoly::constant(&self.sys.reg, int(n))
    }
    pub fn q(&self, n: i64, d: i64) -> StochPoly {
        StochPoly::constant(&self.sys.reg, ratio(n, d))
    }
    pub fn phi(&self) -> StochPoly {
        StochPoly::white(&self.sys.reg, 1)
    }
    /// `e^{-tau} * phi`
    pub fn z(&self) -> StochPoly {
        StochPoly::conv(int(1), Direction::Past, &self.phi()).unwrap()
    }
    /// `a_1 v + a_3 v^3 + a_5 v^5 + ...`
    pub fn odd_in(&self, v: Var, coefs: &[i64]) -> StochPoly {
        let x = self.p(v);
        let mut out = self.c(0);
        for (i, &a) in coefs.iter().enumerate() {
            out = &out + &(&self.c(a) * &x.pow(2 * i as u32 + 1));
        }
        out
    }
    /// Odd polynomial in the normal-form `X`.
    pub fn odd(&self, coefs: &[i64]) -> StochPoly {
        self.odd_in(self.xn, coefs)
    }
    /// `sum_k e^k rows[k]`
    pub fn in_e(&self, rows: &[StochPoly]) -> StochPoly {
        let e = self.p(self.e);
        rows.iter()
            .enumerate()
            .fold(self.c(0), |acc, (k, r)| &acc + &(&e.pow(k as u32) * r))
    }

    pub fn engine(&self) -> modelred::nf::NfEngine<'_> {
        let g = self.sys.grading("normal_form").unwrap().clone();
        modelred::nf::NfEngine::new(&self.sys, g, 4).unwrap()
    }

    /// Sixth-order deterministic manifold `y = h(x, e)`.
    pub fn sixth_order_manifold(&self) -> StochPoly {
        let x = self.x;
        self.in_e(&[
            self.odd_in(x, &[1, -1]),
            self.odd_in(x, &[-1, 4, -3]),
            self.odd_in(x, &[2, -20]),
            self.odd_in(x, &[-5, 104]),
            self.odd_in(x, &[14]),
            self.odd_in(x, &[-42]),
        ])
    }

    /// `[y map, Y']` after the first iteration.
    pub fn iteration_one(&self) -> [StochPoly; 2] {
        let y = self.p(self.yn);
        [&y + &self.odd(&[1, -1]), -&y]
    }

    /// `[x map, y map, X', Y']` after four iterations.
    pub fn iteration_four(&self) -> [StochPoly; 4] {
        let (x, y, e, s) = (self.p(self.xn), self.p(self.yn), self.p(self.e), self.p(self.s));
        let (phi, z) = (self.phi(), self.z());
        let x2 = x.pow(2);
        let e2 = e.pow(2);
        let y_map = &(&(&(&y + &self.odd(&[1, -1])) + &(&e * &self.odd(&[-1, 4, -3])))
            + &(&(&e * &s) * &(&(&self.c(-1) + &(&self.c(3) * &x2)) * &z)))
            + &(&self.c(3) * &(&(&e2 * &x) * &y.pow(2)));
        let y_evo = &-&y + &(&e * &(&-&y + &(&self.c(3) * &(&x2 * &y))));
        let x_map = &(&(&x - &(&e * &y)) + &(&e2 * &(&y - &(&self.c(3) * &(&x2 * &y)))))
            + &(&(&e2 * &s) * &(&(&self.c(1) - &(&self.c(3) * &x2)) * &z));
        let x_evo = &(&(&(&e * &self.odd(&[1, -1])) + &(&(&e * &s) * &phi)) + &(&e2 * &self.odd(&[-1, 4, -3])))
            + &(&(&e2 * &s) * &(&(&self.c(-1) + &(&self.c(3) * &x2)) * &phi));
        [x_map, y_map, x_evo, y_evo]
    }

    /// `e^4 s^2 (-3X/2 + 9X^3 - 27X^5/2)`
    pub fn quadratic_noise_block(&self) -> StochPoly {
        let x = self.p(self.xn);
        let body = &(&(&self.q(-3, 2) * &x) + &(&self.c(9) * &x.pow(3))) + &(&self.q(-27, 2) * &x.pow(5));
        &(&self.p(self.e).pow(4) * &self.p(self.s).pow(2)) * &body
    }

    /// Reference averaged manifold after six iterations, with the
    /// second-order row `2X - 20X^3 + 42X^5`.
    pub fn reference_averaged_manifold(&self) -> StochPoly {
        &self.in_e(&[
            self.odd(&[1, -1]),
            self.odd(&[-1, 4, -3]),
            self.odd(&[2, -20, 42]),
            self.odd(&[-1, 16, -66, 96, -45]),
        ]) + &self.quadratic_noise_block()
    }
}

/// Slow equations `(V', W')` on the manifold `U = -gamma0^2 W / (alpha0 + gamma0)^2`.
pub fn seir_reference_reduction(sys: &SlowFastSystem, p: &SeirParams, sv: &SeirVars) -> [StochPoly; 2] {
    let reg = &sys.reg;
    let (a0, g0, beta) = (p.alpha0(), p.gamma0(), p.beta.clone());
    let s = &a0 + &g0;
    let c = |q: Q| StochPoly::constant(reg, q);
    let (v, w, mu, k) = (
        StochPoly::var(reg, sv.v),
        StochPoly::var(reg, sv.w),
        StochPoly::var(reg, sv.mu),
        StochPoly::var(reg, sv.k),
    );
    let mu2 = mu.pow(2);
    let mu4 = mu.pow(4);
    // (W + k (alpha0 + gamma0) / (alpha0 gamma0)) (V - gamma0^2 W / (alpha0 + gamma0)^2)
    let first = &w + &k.scale(&(&s / (&a0 * &g0)));
    let second = &v - &w.scale(&(&g0 * &g0 / (&s * &s)));
    let prod = &first * &second;

    let dv = &(&(&(&(-&(&mu2 * &w)).scale(&(&g0 * &g0 * &a0 / (&s * &s * &s)))
        - &(&mu4 * &w).scale(&(&a0 / (&s * &s))))
        - &(&mu2 * &v).scale(&(&g0 / &s)))
        - &(&(&c(g0.clone()) + &mu2) * &w).scale(&(&a0 / &s)))
        - &(&mu * &prod).scale(&(&beta * &a0 * &a0 / (&s * &s)));
    let dw = &(&(&(&mu2 * &w).scale(&(&g0 * &g0 / (&s * &s))) + &(&mu4 * &w).scale(&(Q::one() / &s))) - &(&mu2 * &v))
        + &(&mu * &prod).scale(&(&beta * &a0 / &s));
    [dv, dw]
}
