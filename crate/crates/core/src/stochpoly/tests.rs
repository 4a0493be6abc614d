use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;

use super::*;

struct Fx {
    reg: Arc<Registry>,
    x: Var,
    y: Var,
    e: Var,
    s: Var,
}

fn fx() -> Fx {
    let mut r = Registry::new();
    let x = r.register("x", VarKind::Slow).unwrap();
    let y = r.register("y", VarKind::Fast).unwrap();
    let e = r.register("e", VarKind::Grading).unwrap();
    let s = r.register("s", VarKind::Amplitude).unwrap();
    Fx {
        reg: Arc::new(r),
        x,
        y,
        e,
        s,
    }
}

impl Fx {
    fn v(&self, v: Var) -> StochPoly {
        StochPoly::var(&self.reg, v)
    }
    fn c(&self, n: i64) -> StochPoly {
        StochPoly::constant(&self.reg, int(n))
    }
    fn q(&self, n: i64, d: i64) -> StochPoly {
        StochPoly::constant(&self.reg, ratio(n, d))
    }
    fn phi(&self, ch: u32) -> StochPoly {
        StochPoly::white(&self.reg, ch)
    }
    fn past(&self, rate: i64, p: &StochPoly) -> StochPoly {
        StochPoly::conv(int(rate), Direction::Past, p).unwrap()
    }
    fn future(&self, rate: i64, p: &StochPoly) -> StochPoly {
        StochPoly::conv(int(rate), Direction::Future, p).unwrap()
    }
}

#[test]
fn additive_inverse_cancels() {
    let f = fx();
    let x = f.v(f.x);
    assert!((&x + &(-&x)).is_zero());
}

#[test]
fn disjoint_sum_keeps_all_terms() {
    let f = fx();
    let x = f.v(f.x);
    let a = &x - &x.pow(3);
    let b = &f.v(f.e) * &f.v(f.y);
    let s = &a + &b;
    assert_eq!(s.len(), 3);
    assert_eq!(s.to_string(), "x + y*e - x^3");
}

#[test]
fn block_sum() {
    let f = fx();
    let x = f.v(f.x);
    let a = &(&f.c(2) * &x) - &(&f.c(20) * &x.pow(3));
    let s = &a + &(&f.c(42) * &x.pow(5));
    assert_eq!(s.coeff_of(&Monomial::var(f.x, 1)), int(2));
    assert_eq!(s.coeff_of(&Monomial::var(f.x, 3)), int(-20));
    assert_eq!(s.coeff_of(&Monomial::var(f.x, 5)), int(42));
}

#[test]
fn noise_symbols_merge_as_multisets() {
    let f = fx();
    let sp = &f.v(f.s) * &f.phi(1);
    let sq = &sp * &sp;
    let (k, c) = sq.terms().next().unwrap();
    assert_eq!(*c, int(1));
    assert_eq!(k.mono, Monomial::var(f.s, 2));
    assert_eq!(k.noise.factors(), &[NoiseFactor::White(1), NoiseFactor::White(1)]);

    let z = f.past(1, &f.phi(1));
    let z2 = &z * &z;
    assert_eq!(z2.terms().next().unwrap().0.noise.len(), 2);

    let t = &(&f.c(3) * &f.v(f.x).pow(2)) * &z;
    assert_eq!(t.to_string(), "3*x^2*[exp(-t)*phi1]");
}

#[test]
fn derivatives() {
    let f = fx();
    let x = f.v(f.x);
    let p = &x - &x.pow(3);
    assert_eq!(p.d(f.x), &f.c(1) - &(&f.c(3) * &x.pow(2)));
    let z = f.past(1, &f.phi(1));
    let t = &(&f.c(3) * &x.pow(2)) * &z;
    assert_eq!(t.d(f.x), &(&f.c(6) * &x) * &z);
    assert_eq!(p.differentiate(Wrt::Noise(1)), Err(PolyError::NoiseDerivative(1)));
}

#[test]
fn time_derivative_of_convolutions() {
    let f = fx();
    let phi = f.phi(1);
    let z = f.past(2, &phi);
    assert_eq!(z.time_derivative().unwrap(), &(&f.c(-2) * &z) + &phi);
    let w = f.future(3, &phi);
    assert_eq!(w.time_derivative().unwrap(), &(&f.c(3) * &w) - &phi);
    // product rule across factors
    let zz = &z * &z;
    assert_eq!(
        zz.time_derivative().unwrap(),
        &(&f.c(-4) * &zz) + &(&f.c(2) * &(&z * &phi))
    );
    assert_eq!(phi.time_derivative(), Err(PolyError::WhiteNoiseTimeDerivative(1)));
    assert!(f.v(f.x).time_derivative().unwrap().is_zero());
}

#[test]
fn convolution_of_constant_integrates() {
    let f = fx();
    let p = &f.c(3) + &f.phi(1);
    let c = StochPoly::conv(int(2), Direction::Past, &p).unwrap();
    assert_eq!(c, &f.q(3, 2) + &f.past(2, &f.phi(1)));
    assert_eq!(
        StochPoly::conv(int(1), Direction::Past, &f.v(f.x)),
        Err(PolyError::StateInConvolution)
    );
    assert!(StochPoly::conv(int(0), Direction::Past, &f.phi(1)).is_err());
}

#[test]
fn substitution() {
    let f = fx();
    let x = f.v(f.x);
    let slow_rhs = f.v(f.y);
    let h = &x - &x.pow(3);
    let b = BTreeMap::from([(f.y, h.clone())]);
    assert_eq!(slow_rhs.substitute(&b).unwrap(), h);

    let p = &(&x * &f.v(f.y)) + &f.phi(1);
    let id = BTreeMap::from([(f.x, x.clone()), (f.y, f.v(f.y))]);
    assert_eq!(p.substitute(&id).unwrap(), p);

    let y0 = BTreeMap::from([(f.y, f.c(0))]);
    assert_eq!(p.substitute(&y0).unwrap(), f.phi(1));

    let cyc = BTreeMap::from([(f.x, f.v(f.y)), (f.y, x.clone())]);
    assert!(matches!(p.substitute(&cyc), Err(PolyError::CyclicBinding(_))));

    // simultaneous, self-referencing binding
    let shift = BTreeMap::from([(f.x, &x + &f.c(1))]);
    assert_eq!(x.pow(2).substitute(&shift).unwrap(), (&x + &f.c(1)).pow(2));
}

fn duffing_manifold(f: &Fx) -> StochPoly {
    // y = h(x, e) through sixth order
    let x = f.v(f.x);
    let e = f.v(f.e);
    let terms: [(i64, u32, u32); 11] = [
        (1, 0, 1),
        (-1, 0, 3),
        (-1, 1, 1),
        (4, 1, 3),
        (-3, 1, 5),
        (2, 2, 1),
        (-20, 2, 3),
        (-5, 3, 1),
        (104, 3, 3),
        (14, 4, 1),
        (-42, 5, 1),
    ];
    let mut h = StochPoly::zero(&f.reg);
    for (c, ei, xi) in terms {
        h = &h + &(&f.c(c) * &(&e.pow(ei) * &x.pow(xi)));
    }
    h
}

#[test]
fn truncation_counts_graded_degree() {
    let f = fx();
    let g = Grading::new().with(f.x, 1).with(f.e, 1);
    let h = duffing_manifold(&f);
    let t = h.truncate(&g, 3);
    // degrees by hand: x 1, x^3 3, ex 2, e^2x 3; all others >= 4
    let x = f.v(f.x);
    let e = f.v(f.e);
    let want = &(&(&x - &x.pow(3)) - &(&e * &x)) + &(&f.c(2) * &(&e.pow(2) * &x));
    assert_eq!(t, want);
    assert!(StochPoly::zero(&f.reg).truncate(&g, 4).is_zero());

    // e^4 s^2 x: degree 4 + 2 + 1 = 7 under the all-ones grading
    let g2 = Grading::new().with(f.x, 1).with(f.y, 1).with(f.e, 1).with(f.s, 1);
    let term = &(&f.v(f.e).pow(4) * &f.v(f.s).pow(2)) * &x;
    assert!(term.truncate(&g2, 6).is_zero());
    assert_eq!(term.truncate(&g2, 7), term);
}

#[test]
fn expectation_identities() {
    let f = fx();
    let phi = f.phi(1);
    let z = f.past(1, &phi);
    let sp = &f.v(f.s) * &phi;
    assert!(sp.expectation().mean.is_zero());
    assert!(z.expectation().mean.is_zero());
    assert_eq!((&z * &z).expectation().mean, f.q(1, 2));
    let w = f.future(1, &phi);
    assert_eq!((&w * &w).expectation().mean, f.q(1, 2));
    assert!((&z * &w).expectation().mean.is_zero());
    // nested: E[e^{-t}*(z^2)] = E[z^2] / 1
    let nested = f.past(1, &(&z * &z));
    assert_eq!(nested.expectation().mean, f.q(1, 2));
    // independent channels
    let z2 = f.past(1, &f.phi(2));
    assert!((&z * &z2).expectation().mean.is_zero());
    assert_eq!((&(&z * &z) * &(&z2 * &z2)).expectation().mean, f.q(1, 4));
    // Isserlis: E[z^4] = 3 (1/2)^2
    assert_eq!(z.pow(4).expectation().mean, f.q(3, 4));
    // general rates
    let za = f.past(2, &phi);
    let zb = f.past(3, &phi);
    assert_eq!((&za * &zb).expectation().mean, f.q(1, 5));
    // same-channel white times convolution is not reduced
    let mixed = &(&f.v(f.x) * &phi) * &z;
    let ex = mixed.expectation();
    assert!(ex.mean.is_zero());
    assert_eq!(ex.unreduced, mixed);
    // odd count vanishes even when unsupported otherwise
    assert!((&(&phi * &z) * &z).expectation().unreduced.is_zero());
}

#[test]
fn json_roundtrip_and_errors() {
    let f = fx();
    let z = f.past(1, &f.phi(1));
    let p = &(&(&f.q(-3, 7) * &f.v(f.x).pow(3)) * &z) + &(&f.v(f.e) * &f.phi(2));
    let j = serde_json::to_string(&p.to_json()).unwrap();
    assert_eq!(StochPoly::parse_json_str(&f.reg, &j).unwrap(), p);
    let raw = r#"{"terms":[{"coef":"1/2","vars":{"x":2},"conv":[{"rate":"1","dir":"past","arg":{"noise":[1]}}]}]}"#;
    let q = StochPoly::parse_json_str(&f.reg, raw).unwrap();
    assert_eq!(q, &(&f.q(1, 2) * &f.v(f.x).pow(2)) * &z);
    let bad = r#"{"terms":[{"coef":"1","vars":{"q":1}}]}"#;
    assert_eq!(
        StochPoly::parse_json_str(&f.reg, bad),
        Err(PolyError::UnknownVariable("q".into()))
    );
    assert!(StochPoly::parse_json_str(&f.reg, r#"{"terms":[{"coef":"1/0"}]}"#).is_err());
}

#[test]
fn registry_mismatch_is_an_error() {
    let a = fx();
    let mut r = Registry::new();
    let q = r.register("q", VarKind::Slow).unwrap();
    let other = StochPoly::var(&Arc::new(r), q);
    assert_eq!(a.v(a.x).checked_add(&other), Err(PolyError::RegistryMismatch));
    assert_eq!(a.v(a.x).checked_mul(&other), Err(PolyError::RegistryMismatch));
    let mut r = Registry::new();
    r.register("x", VarKind::Slow).unwrap();
    assert_eq!(
        r.register("x", VarKind::Fast),
        Err(PolyError::DuplicateVariable("x".into()))
    );
}

#[test]
fn grouped_display() {
    let f = fx();
    let h = duffing_manifold(&f).truncate(&Grading::new().with(f.x, 1).with(f.e, 1), 4);
    assert_eq!(
        h.display_grouped(&[f.e]),
        "x - x^3 + e*(-x + 4*x^3) + 2*x*e^2 - 5*x*e^3"
    );
}

// property tests

fn arb_noise(f: &Fx, i: u8) -> StochPoly {
    match i {
        0 => f.c(1),
        1 => f.phi(1),
        2 => f.phi(2),
        3 => f.past(1, &f.phi(1)),
        4 => f.past(2, &f.phi(1)),
        _ => f.future(1, &f.phi(2)),
    }
}

fn build(f: &Fx, spec: &[(i64, i64, u32, u32, u32, u8)]) -> StochPoly {
    let mut p = StochPoly::zero(&f.reg);
    for &(n, d, ex, ey, ee, noise) in spec {
        let t = &(&(&f.q(n, d) * &f.v(f.x).pow(ex)) * &(&f.v(f.y).pow(ey) * &f.v(f.e).pow(ee))) * &arb_noise(f, noise);
        p = &p + &t;
    }
    p
}

fn spec_strategy() -> impl Strategy<Value = Vec<(i64, i64, u32, u32, u32, u8)>> {
    prop::collection::vec((-5i64..=5, 1i64..=4, 0u32..3, 0u32..3, 0u32..3, 0u8..6), 0..5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ring_axioms(a in spec_strategy(), b in spec_strategy(), c in spec_strategy()) {
        let f = fx();
        let (a, b, c) = (build(&f, &a), build(&f, &b), build(&f, &c));
        prop_assert_eq!(&a + &b, &b + &a);
        prop_assert_eq!(&a * &b, &b * &a);
        prop_assert_eq!(&(&a + &b) + &c, &a + &(&b + &c));
        prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
        prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
    }

    #[test]
    fn canonical_form_is_order_independent(mut a in spec_strategy()) {
        let f = fx();
        let p = build(&f, &a);
        a.reverse();
        prop_assert_eq!(build(&f, &a), p.clone());
        let again = StochPoly::from_json(&f.reg, &p.to_json()).unwrap();
        prop_assert_eq!(again, p);
    }

    #[test]
    fn leibniz_rule(a in spec_strategy(), b in spec_strategy()) {
        let f = fx();
        let (a, b) = (build(&f, &a), build(&f, &b));
        prop_assert_eq!((&a * &b).d(f.x), &(&a.d(f.x) * &b) + &(&a * &b.d(f.x)));
    }

    #[test]
    fn time_derivative_leibniz(a in spec_strategy(), b in spec_strategy()) {
        let f = fx();
        let strip = |p: StochPoly| p.filter(|k, _| !k.noise.has_white());
        let (a, b) = (strip(build(&f, &a)), strip(build(&f, &b)));
        let lhs = (&a * &b).time_derivative().unwrap();
        let rhs = &(&a.time_derivative().unwrap() * &b) + &(&a * &b.time_derivative().unwrap());
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn truncation_is_idempotent(a in spec_strategy(), k in 0u32..6) {
        let f = fx();
        let g = Grading::new().with(f.x, 1).with(f.e, 1);
        let p = build(&f, &a);
        prop_assert_eq!(p.truncate(&g, k).truncate(&g, k), p.truncate(&g, k));
    }

    #[test]
    fn truncated_product_matches(a in spec_strategy(), b in spec_strategy(), k in 0u32..6) {
        let f = fx();
        let g = Grading::new().with(f.y, 1).with(f.e, 2);
        let (a, b) = (build(&f, &a), build(&f, &b));
        prop_assert_eq!(a.mul_truncated(&b, &g, k), (&a * &b).truncate(&g, k));
    }

    #[test]
    fn identity_substitution_is_noop(a in spec_strategy()) {
        let f = fx();
        let p = build(&f, &a);
        let id = BTreeMap::from([(f.x, f.v(f.x)), (f.y, f.v(f.y))]);
        prop_assert_eq!(p.substitute(&id).unwrap(), p);
    }

    #[test]
    fn substitution_is_a_ring_map(a in spec_strategy(), b in spec_strategy(), h in spec_strategy()) {
        let f = fx();
        let (a, b) = (build(&f, &a), build(&f, &b));
        let h = build(&f, &h).at_zero(&[f.y]);
        let bind = BTreeMap::from([(f.y, h)]);
        let s = |p: &StochPoly| p.substitute(&bind).unwrap();
        prop_assert_eq!(s(&(&a * &b)), &s(&a) * &s(&b));
        prop_assert_eq!(s(&(&a + &b)), &s(&a) + &s(&b));
    }

    #[test]
    fn expectation_is_linear(a in spec_strategy(), b in spec_strategy()) {
        let f = fx();
        let (a, b) = (build(&f, &a), build(&f, &b));
        let (ea, eb) = (a.expectation(), b.expectation());
        let eab = (&a + &b).expectation();
        prop_assert_eq!(eab.mean, &ea.mean + &eb.mean);
        prop_assert_eq!(eab.unreduced, &ea.unreduced + &eb.unreduced);
        let det = a.deterministic_part();
        prop_assert_eq!(det.expectation().mean, det);
    }
}
