use modelred::cm::solve_center_manifold;
use modelred::experiments::artifacts::{check_fixture, PolyRecord, TransformRecord};
use modelred::nf::{SlowModelPolicy, Sweep};
use modelred::stochpoly::{int, Monomial, StochPoly};

mod common;

use common::{assert_same, setup, D};

#[test]
fn iteration_one() {
    let d = setup();
    let ct = d.engine().run(1).unwrap();
    let (x, y) = (d.p(d.xn), d.p(d.yn));
    assert_same("y map", &(&(&y + &x) - &x.pow(3)), &ct.maps[&d.y]);
    assert_same("Y'", &-&y, &ct.evolutions[&d.yn]);
    assert_same("x map", &x, &ct.maps[&d.x]);
    assert!(ct.evolutions[&d.xn].is_zero());
}

#[test]
fn iterations_through_four() {
    let d = setup();
    let eng = d.engine();
    let ct = eng.run(4).unwrap();
    let [x_map, y_map, x_evo, y_evo] = d.iteration_four();
    assert_same("y map", &y_map, &ct.maps[&d.y]);
    assert_same("Y'", &y_evo, &ct.evolutions[&d.yn]);
    assert_same("x map", &x_map, &ct.maps[&d.x]);
    assert_same("X'", &x_evo, &ct.evolutions[&d.xn]);

    let slow = eng.slow_model(&ct, SlowModelPolicy::Full).unwrap();
    assert_same("slow model", &x_evo, &slow[0].1);
}

/// The bundled fixture holds exactly the hand-derived expressions. Set
/// `MODELRED_BLESS=1` to regenerate it.
#[test]
fn bundled_iteration_four_fixture() {
    let d = setup();
    let [x_map, y_map, x_evo, y_evo] = d.iteration_four();
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/duffing_iter4.json");
    if std::env::var_os("MODELRED_BLESS").is_some() {
        let rec = TransformRecord {
            system: d.sys.name.clone(),
            order: 4,
            iterations: 4,
            grading: d.sys.grading("normal_form").unwrap().to_names(&d.sys.reg),
            maps: [("x", &x_map), ("y", &y_map)]
                .into_iter()
                .map(|(n, p)| (n.to_string(), PolyRecord::of(p)))
                .collect(),
            evolutions: [("X", &x_evo), ("Y", &y_evo)]
                .into_iter()
                .map(|(n, p)| (n.to_string(), PolyRecord::of(p)))
                .collect(),
            history: Vec::new(),
        };
        std::fs::write(&path, serde_json::to_string_pretty(&rec).unwrap() + "\n").unwrap();
    }
    let rec: TransformRecord = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let load = |m: &std::collections::BTreeMap<String, PolyRecord>, n: &str| {
        StochPoly::from_json(&d.sys.reg, &m[n].poly).unwrap()
    };
    assert_same("x map", &x_map, &load(&rec.maps, "x"));
    assert_same("y map", &y_map, &load(&rec.maps, "y"));
    assert_same("X'", &x_evo, &load(&rec.evolutions, "X"));
    assert_same("Y'", &y_evo, &load(&rec.evolutions, "Y"));

    let ct = d.engine().run(4).unwrap();
    assert!(check_fixture(&d.sys, &ct, &rec).unwrap().is_empty());
    let ct3 = d.engine().run(3).unwrap();
    assert!(!check_fixture(&d.sys, &ct3, &rec).unwrap().is_empty());
}

#[test]
fn schedule_and_invariants() {
    let d = setup();
    let eng = d.engine();
    let ct = eng.run(6).unwrap();
    let sweeps: Vec<Sweep> = ct.history.iter().map(|r| r.sweep).collect();
    assert_eq!(
        sweeps,
        [
            Sweep::Fast,
            Sweep::Slow,
            Sweep::Fast,
            Sweep::Slow,
            Sweep::Fast,
            Sweep::Slow
        ]
    );
    assert!(ct.fast_manifold_invariant(&eng.fast_new()));
    assert!(ct.slow_evolutions_causal(&eng.slow_new()));
    // residual contraction: each equation's resolved residual starts at a
    // strictly higher degree than at its previous sweep
    for kind in [Sweep::Fast, Sweep::Slow] {
        let degs: Vec<u32> = ct
            .history
            .iter()
            .filter(|r| r.sweep == kind)
            .map(|r| r.residual_degree.unwrap())
            .collect();
        assert!(degs.windows(2).all(|w| w[0] < w[1]), "{kind:?}: {degs:?}");
    }
}

#[test]
fn stochastic_manifold_at_low_iterations() {
    let d = setup();
    let eng = d.engine();
    let x = d.p(d.xn);
    let ct2 = eng.run(2).unwrap();
    assert_same("iter 2", &d.odd(&[1, -1]), &eng.stochastic_cm(&ct2)[0].body);

    let ct4 = eng.run(4).unwrap();
    let (e, s) = (d.p(d.e), d.p(d.s));
    let want = &(&d.odd(&[1, -1]) + &(&e * &d.odd(&[-1, 4, -3])))
        + &(&(&e * &s) * &(&(&d.c(-1) + &(&d.c(3) * &x.pow(2))) * &d.z()));
    assert_same("iter 4", &want, &eng.stochastic_cm(&ct4)[0].body);

    // single convolutions average out
    let ct3 = eng.run(3).unwrap();
    let (avg, unreduced) = eng.averaged_cm(&ct3);
    assert!(unreduced[0].is_zero());
    assert_same(
        "iter 3 mean",
        &eng.stochastic_cm(&ct3)[0].body.deterministic_part(),
        &avg[0].body,
    );
}

/// y-map at Y = 0 and sigma = 0, rewritten in the slow manifold variable.
fn deterministic_rows(d: &D, p: &StochPoly) -> StochPoly {
    p.deterministic_part().at_zero(&[d.s])
}

#[test]
fn six_iterations_average() {
    let d = setup();
    let eng = d.engine();
    let ct = eng.run(6).unwrap();
    let (avg, _) = eng.averaged_cm(&ct);
    let det = deterministic_rows(&d, &avg[0].body);
    let rows = det.collect(&[d.e]);
    let row = |k: u32| rows.get(&Monomial::var(d.e, k)).cloned().unwrap_or(d.c(0));
    assert_same("e^0", &d.odd(&[1, -1]), &rows[&Monomial::one()]);
    assert_same("e^1", &d.odd(&[-1, 4, -3]), &row(1));
    assert_same("e^3", &d.odd(&[-1, 16, -66, 96, -45]), &row(3));
    // the exact second-order row carries an X^7 term
    assert_same("e^2", &d.odd(&[2, -20, 42, -24]), &row(2));
    let noise_block = avg[0].body.filter(|k, _| k.mono.exp(d.s) > 0);
    assert_same("e^4 s^2", &d.quadratic_noise_block(), &noise_block);
}

#[test]
fn seventh_iteration_closes_third_order_gap() {
    let d = setup();
    let eng = d.engine();
    let ct = eng.run(7).unwrap();
    let (avg, _) = eng.averaged_cm(&ct);
    let det = deterministic_rows(&d, &avg[0].body);
    let rows = det.collect(&[d.e]);
    let third = &rows[&Monomial::var(d.e, 3)];
    assert_eq!(third.coeff_of(&Monomial::var(d.xn, 1)), int(-5));
    assert_eq!(third.coeff_of(&Monomial::var(d.xn, 3)), int(104));
}

#[test]
fn engine_agrees_with_series_solution_through_second_order() {
    let d = setup();
    let det = d.sys.deterministic();
    let g = det.grading("manifold").unwrap().clone();
    let h = solve_center_manifold(&det, &g, 9).unwrap();
    let eng = d.engine();
    let ct = eng.run(6).unwrap();
    let (avg, _) = eng.averaged_cm(&ct);
    // rename X -> x
    let bind = std::collections::BTreeMap::from([(d.xn, d.p(d.x))]);
    let engine_h = deterministic_rows(&d, &avg[0].body).substitute(&bind).unwrap();
    let low = |p: &StochPoly| p.filter(|k, _| k.mono.exp(d.e) <= 2);
    assert_same("through e^2", &low(&h[0].body), &low(&engine_h));
}
