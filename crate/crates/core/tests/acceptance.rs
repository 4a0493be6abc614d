//! Acceptance runner: one PASS/FAIL line per criterion.
//!
//! `MODELRED_ACCEPTANCE=full` runs the Duffing ensemble with 10 000 paths
//! instead of the quick 1 000. `MODELRED_ACCEPTANCE_STRICT=1` turns any FAIL
//! into a nonzero exit status; by default the runner reports and exits 0.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use modelred::cm::{reduce_on_manifold, solve_center_manifold};
use modelred::experiments::artifacts::{check_fixture, TransformRecord};
use modelred::experiments::duffing::{duffing_pipeline, DuffingConfig, DuffingReport};
use modelred::experiments::seir::{seir_pipeline, SeirConfig};
use modelred::experiments::Check;
use modelred::nf::diff_terms;
use modelred::seir::{SeirParams, SeirVars};
use modelred::sim::{escape_times, integrate, lower, run_path, EnsembleConfig, PathStreams, Prehistory, SimSystem};
use modelred::stochpoly::{int, Direction, Monomial, Registry, StochPoly, Var, VarKind};
use modelred::system::SlowFastSystem;
use modelred::systems;

mod common;

use common::{same, setup, D};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn from(r: Result<String, String>) -> Self {
        match r {
            Ok(detail) => Outcome { pass: true, detail },
            Err(detail) => Outcome { pass: false, detail },
        }
    }
}

fn repo(rel: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn secs(d: Duration) -> String {
    format!("{:.2} s", d.as_secs_f64())
}

/// Runs `f`, adds its runtime to the detail and fails it past `limit`.
fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let t = Instant::now();
    let mut o = f();
    let took = t.elapsed();
    match limit {
        Some(l) if took > l => {
            o.pass = false;
            o.detail = format!("{}; runtime {} exceeds {}", o.detail, secs(took), secs(l));
        }
        Some(l) => o.detail = format!("{}; runtime {} (limit {})", o.detail, secs(took), secs(l)),
        None => o.detail = format!("{}; runtime {}", o.detail, secs(took)),
    }
    o
}

fn checks_outcome(checks: &[&Check]) -> Outcome {
    let pass = checks.iter().all(|c| c.pass);
    let detail = checks
        .iter()
        .map(|c| match c.value {
            Some(v) => format!("{} = {v:.4} ({})", c.name, c.band),
            None => format!("{} = n/a ({})", c.name, c.band),
        })
        .collect::<Vec<_>>()
        .join(", ");
    Outcome { pass, detail }
}

fn y_rows(d: &D, p: &StochPoly) -> BTreeMap<Monomial, StochPoly> {
    p.deterministic_part().at_zero(&[d.s]).collect(&[d.e])
}

fn c1_sixth_order_manifold() -> Outcome {
    Outcome::from((|| {
        let d = setup();
        let text = std::fs::read_to_string(repo("systems/duffing.json")).map_err(|e| e.to_string())?;
        let sys = SlowFastSystem::from_json_str(&text)
            .map_err(|e| e.to_string())?
            .deterministic();
        let g = sys.grading("manifold").map_err(|e| e.to_string())?.clone();
        let h = solve_center_manifold(&sys, &g, 6).map_err(|e| e.to_string())?;
        same("y = h(x, e)", &d.sixth_order_manifold(), &h[0].body)?;
        Ok(format!("{} terms equal", h[0].body.len()))
    })())
}

fn c2_iterations() -> Outcome {
    Outcome::from((|| {
        let d = setup();
        let eng = d.engine();
        let ct1 = eng.run(1).map_err(|e| e.to_string())?;
        let [y1, yevo1] = d.iteration_one();
        same("iteration 1 y map", &y1, &ct1.maps[&d.y])?;
        same("iteration 1 Y'", &yevo1, &ct1.evolutions[&d.yn])?;
        let ct4 = eng.run(4).map_err(|e| e.to_string())?;
        let [x_map, y_map, x_evo, y_evo] = d.iteration_four();
        same("iteration 4 x map", &x_map, &ct4.maps[&d.x])?;
        same("iteration 4 y map", &y_map, &ct4.maps[&d.y])?;
        same("iteration 4 X'", &x_evo, &ct4.evolutions[&d.xn])?;
        same("iteration 4 Y'", &y_evo, &ct4.evolutions[&d.yn])?;
        let rec: TransformRecord = serde_json::from_str(
            &std::fs::read_to_string(repo("fixtures/duffing_iter4.json")).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        let bad = check_fixture(&d.sys, &ct4, &rec).map_err(|e| e.to_string())?;
        if !bad.is_empty() {
            return Err(format!("{} fixture mismatches", bad.len()));
        }
        Ok("iterations 1 and 4 equal term for term, convolution and 3e^2XY^2 terms included; fixture clean".into())
    })())
}

fn c3_averaged_manifold() -> Outcome {
    Outcome::from((|| {
        let d = setup();
        let eng = d.engine();
        let ct6 = eng.run(6).map_err(|e| e.to_string())?;
        let (avg, _) = eng.averaged_cm(&ct6);
        let got = &avg[0].body;
        let reference = d.reference_averaged_manifold();

        let ct7 = eng.run(7).map_err(|e| e.to_string())?;
        let (avg7, _) = eng.averaged_cm(&ct7);
        let rows = y_rows(&d, &avg7[0].body);
        let e3x = rows
            .get(&Monomial::var(d.e, 3))
            .map(|r| r.coeff_of(&Monomial::var(d.xn, 1)))
            .unwrap_or_else(|| int(0));
        let seventh = if e3x == int(-5) {
            "iteration 7 e^3 X coefficient = -5".to_string()
        } else {
            return Err(format!("iteration 7 e^3 X coefficient = {e3x}, expected -5"));
        };

        if let Err(msg) = same("averaged manifold after 6 iterations", &reference, got) {
            // say whether the gap is exactly the second-order X^7 term
            let x7 = &(&d.p(d.e).pow(2) * &d.p(d.xn).pow(7)) * &d.c(-24);
            let completed = &reference + &x7;
            let note = if diff_terms(&completed, got).is_empty() {
                "; every other term, the e^4 s^2 block included, is equal. The exact e^2 row is \
                 2X - 20X^3 + 42X^5 - 24X^7 (confirmed by the series solver at order 9), so the \
                 reference row omits -24 e^2 X^7"
            } else {
                ""
            };
            return Err(format!("{msg}{note}; {seventh}"));
        }
        Ok(format!("all terms equal; {seventh}"))
    })())
}

fn c4_cross_method() -> Outcome {
    Outcome::from((|| {
        let d = setup();
        let det = d.sys.deterministic();
        let g = det.grading("manifold").map_err(|e| e.to_string())?.clone();
        let h = solve_center_manifold(&det, &g, 9).map_err(|e| e.to_string())?;
        let eng = d.engine();
        let ct = eng.run(6).map_err(|e| e.to_string())?;
        let (avg, _) = eng.averaged_cm(&ct);
        let bind = BTreeMap::from([(d.xn, d.p(d.x))]);
        let engine_h = avg[0]
            .body
            .deterministic_part()
            .at_zero(&[d.s])
            .substitute(&bind)
            .map_err(|e| e.to_string())?;
        let low = |p: &StochPoly| p.filter(|k, _| k.mono.exp(d.e) <= 2);
        same("through e^2", &low(&h[0].body), &low(&engine_h))?;
        Ok(format!("{} terms through e^2 equal", low(&engine_h).len()))
    })())
}

fn c5_seir_reduction() -> Outcome {
    Outcome::from((|| {
        let sys = systems::seir_transformed();
        let p = SeirParams::measles();
        let sv = SeirVars::of(&sys).map_err(|e| e.to_string())?;
        let det = sys.deterministic();
        let g = det.grading("manifold").map_err(|e| e.to_string())?.clone();
        let h = solve_center_manifold(&det, &g, 2).map_err(|e| e.to_string())?;
        let s = p.alpha0() + p.gamma0();
        let coef = -(p.gamma0() * p.gamma0() / (&s * &s));
        same("U = h(V, W)", &StochPoly::var(&sys.reg, sv.w).scale(&coef), &h[0].body)?;
        let reduced = reduce_on_manifold(&det, &h, None).map_err(|e| e.to_string())?;
        let [dv, dw] = common::seir_reference_reduction(&sys, &p, &sv);
        same("V'", &dv, &reduced[0].1)?;
        same("W'", &dw, &reduced[1].1)?;
        Ok(format!("U = ({coef})*W; V' and W' equal"))
    })())
}

fn c6_seir_battery() -> Outcome {
    match seir_pipeline(&SeirConfig::default()) {
        Ok(r) => {
            let mut o = checks_outcome(&r.summary.checks.iter().collect::<Vec<_>>());
            o.detail = format!("{} seeds: {}", r.summary.battery.len(), o.detail);
            o
        }
        Err(e) => Outcome {
            pass: false,
            detail: e.to_string(),
        },
    }
}

fn duffing_config() -> (DuffingConfig, &'static str, Duration) {
    let full = std::env::var("MODELRED_ACCEPTANCE").is_ok_and(|v| v == "full");
    let paths = if full { 10_000 } else { 1_000 };
    let limit = Duration::from_secs(if full { 30 * 60 } else { 2 * 60 });
    (
        DuffingConfig {
            paths,
            ..DuffingConfig::default()
        },
        if full { "full" } else { "quick" },
        limit,
    )
}

fn c7_escape(report: &Result<DuffingReport, String>, mode: &str) -> Outcome {
    match report {
        Ok(r) => {
            let s = &r.summary;
            let picked: Vec<&Check> = s.checks.iter().filter(|c| !c.name.starts_with("ridge")).collect();
            let mut o = checks_outcome(&picked);
            let mean = |m: Option<f64>| m.map_or("n/a".to_string(), |v| format!("{v:.1}"));
            o.detail = format!(
                "{mode} mode, {} paths: mean escape full {} reduced {}; {}",
                s.config.paths,
                mean(s.full.mean),
                mean(s.reduced.mean),
                o.detail
            );
            o
        }
        Err(e) => Outcome {
            pass: false,
            detail: e.clone(),
        },
    }
}

fn c8_ridge(report: &Result<DuffingReport, String>) -> Outcome {
    match report {
        Ok(r) => {
            let s = &r.summary;
            let picked: Vec<&Check> = s.checks.iter().filter(|c| c.name.starts_with("ridge")).collect();
            let mut o = checks_outcome(&picked);
            if let Some(ridge) = &s.ridge {
                let worst: Vec<String> = ridge
                    .points
                    .iter()
                    .filter(|p| p.deviation_bins.is_some_and(|b| b > s.config.ridge_tolerance_bins))
                    .map(|p| format!("x = {:.3}: {:.1} bins", p.x, p.deviation_bins.unwrap_or(f64::NAN)))
                    .collect();
                o.detail = format!(
                    "order-{} manifold, {} histogram paths: {}",
                    ridge.manifold_order, s.histogram_paths, o.detail
                );
                if !worst.is_empty() {
                    o.detail = format!("{}; columns outside tolerance: {}", o.detail, worst.join(", "));
                }
            }
            o
        }
        Err(e) => Outcome {
            pass: false,
            detail: e.clone(),
        },
    }
}

fn one_var(kind: VarKind) -> (std::sync::Arc<Registry>, Var, Var) {
    let mut r = Registry::new();
    let x = r.register("x", kind).unwrap();
    let s = r.register("s", VarKind::Amplitude).unwrap();
    (std::sync::Arc::new(r), x, s)
}

fn ensemble(seed: u64, paths: usize, dt: f64, t_max: f64, threads: Option<usize>) -> EnsembleConfig {
    EnsembleConfig {
        seed,
        paths,
        dt,
        t_max,
        threads,
    }
}

/// Squares of state `idx` sampled every `gap` after `burn`.
fn squares(sys: &SimSystem, c: &EnsembleConfig, idx: usize, burn: f64, gap: f64) -> Vec<f64> {
    let (burn, gap) = ((burn / c.dt).round() as u64, (gap / c.dt).round() as u64);
    let mut out = Vec::new();
    for p in 0..c.paths as u64 {
        run_path(sys, &[0.0], &PathStreams::new(c.seed, p), c.dt, c.steps(), |step, u| {
            if step >= burn && (step - burn) % gap == 0 {
                out.push(u[idx] * u[idx]);
            }
            true
        });
    }
    out
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// `E[x^2]` under the density `(1 + x^2)^(-p)`.
fn second_moment(p: f64) -> f64 {
    let (h, n) = (1e-3, 200_000i64);
    let (mut num, mut den) = (0.0, 0.0);
    for i in -n..=n {
        let x = i as f64 * h;
        let w = if i.abs() == n { 0.5 } else { 1.0 } * (1.0 + x * x).powf(-p);
        num += w * x * x;
        den += w;
    }
    num / den
}

fn c9_infrastructure() -> Outcome {
    Outcome::from((|| {
        let err = |e: modelred::sim::SimError| e.to_string();

        let (r, q, _) = one_var(VarKind::Slow);
        let z = StochPoly::conv(int(1), Direction::Past, &StochPoly::white(&r, 1)).map_err(|e| e.to_string())?;
        let aux = lower(&r, &[(q, z)], &BTreeMap::new(), 1.0).map_err(err)?;
        let (m, se) = mean_and_se(&squares(&aux, &ensemble(3, 100, 1e-2, 200.0, None), 1, 0.0, 5.0));
        if (m - 0.5).abs() >= 3.0 * se {
            return Err(format!("auxiliary E[z^2] = {m:.4} +- {se:.4}, expected 1/2"));
        }
        let ou = format!("OU auxiliary E[z^2] = {m:.4} +- {se:.4}");

        // stationary density (1 + x^2)^-3 for Stratonovich, (1 + x^2)^-4 for Ito
        let (r, x, s) = one_var(VarKind::Slow);
        let px = StochPoly::var(&r, x);
        let g = &StochPoly::var(&r, s) * &(&StochPoly::constant(&r, int(1)) + &px.pow(2));
        let rhs = &(-&(&px + &px.pow(3))) + &(&g * &StochPoly::white(&r, 1));
        let mult = lower(&r, &[(x, rhs)], &BTreeMap::from([(s, 0.5f64.sqrt())]), 1.0).map_err(err)?;
        let (strat, ito) = (second_moment(3.0), second_moment(4.0));
        let (m, se) = mean_and_se(&squares(&mult, &ensemble(5, 200, 2e-3, 202.0, None), 0, 2.0, 2.0));
        if (m - strat).abs() >= 4.0 * se || (m - ito).abs() <= 10.0 * se {
            return Err(format!(
                "E[x^2] = {m:.4} +- {se:.4}; Stratonovich {strat:.4}, Ito {ito:.4}; {ou}"
            ));
        }
        let sv = format!("E[x^2] = {m:.4} +- {se:.4} vs Stratonovich {strat:.4}, Ito {ito:.4}");

        let d = systems::duffing();
        let mut values = d.parameters.clone();
        values.insert(d.var("s").map_err(|e| e.to_string())?, 0.8);
        let eqs: Vec<_> = d.slow.iter().chain(&d.fast).map(|v| (*v, d.rhs[v].clone())).collect();
        let noisy = lower(&d.reg, &eqs, &values, 0.1).map_err(err)?;
        let pre = Prehistory {
            x: 0,
            y: 1,
            window: 5.0,
            sample_every: 10,
            bins: [30, 30],
            x_range: [-1.5, 1.5],
            y_range: [-1.5, 1.5],
        };
        let init = |rng: &mut rand_chacha::ChaCha8Rng| {
            use rand::Rng;
            vec![1.0 + 0.1 * rng.random::<f64>(), 0.0]
        };
        let runs = [Some(1), Some(2), Some(4)]
            .into_iter()
            .map(|threads| {
                let c = ensemble(99, 24, 1e-3, 30.0, threads);
                Ok((
                    integrate(
                        &noisy,
                        &EnsembleConfig {
                            t_max: 2.0,
                            ..c.clone()
                        },
                        100,
                        &init,
                    )
                    .map_err(err)?,
                    escape_times(&noisy, &c, &init, &|u| u[0] < -0.2, Some(&pre)).map_err(err)?,
                ))
            })
            .collect::<Result<Vec<_>, String>>()?;
        for (ens, esc) in &runs[1..] {
            let bitwise = ens.paths == runs[0].0.paths
                && esc.records == runs[0].1.records
                && esc.histogram == runs[0].1.histogram
                && esc.stats == runs[0].1.stats;
            if !bitwise {
                return Err(format!("ensembles differ across thread counts; {ou}; {sv}"));
            }
        }
        Ok(format!("{ou}; {sv}; identical ensembles with 1, 2 and 4 threads"))
    })())
}

fn main() {
    println!("acceptance: one line per criterion");
    let mut results = Vec::new();
    let mut report = |n: u32, name: &str, o: Outcome| {
        println!("{} {n} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push(o.pass);
    };

    report(
        1,
        "duffing-manifold-order-6",
        timed(Some(Duration::from_secs(5)), c1_sixth_order_manifold),
    );
    report(
        2,
        "normal-form-iterations",
        timed(Some(Duration::from_secs(30)), c2_iterations),
    );
    report(3, "averaged-manifold", timed(None, c3_averaged_manifold));
    report(4, "cross-method-consistency", timed(None, c4_cross_method));
    report(
        5,
        "seir-reduction",
        timed(Some(Duration::from_secs(30)), c5_seir_reduction),
    );
    report(
        6,
        "seir-cross-correlation",
        timed(Some(Duration::from_secs(300)), c6_seir_battery),
    );

    let (cfg, mode, limit) = duffing_config();
    let t = Instant::now();
    let duffing = duffing_pipeline(&cfg).map_err(|e| e.to_string());
    let took = t.elapsed();
    let mut c7 = c7_escape(&duffing, mode);
    if took > limit {
        c7.pass = false;
        c7.detail = format!("{}; runtime {} exceeds {}", c7.detail, secs(took), secs(limit));
    } else {
        c7.detail = format!("{}; runtime {} (limit {})", c7.detail, secs(took), secs(limit));
    }
    report(7, "duffing-escape-times", c7);
    report(8, "prehistory-ridge", c8_ridge(&duffing));
    report(9, "numerical-infrastructure", timed(None, c9_infrastructure));

    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    if passed < results.len() && std::env::var_os("MODELRED_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
