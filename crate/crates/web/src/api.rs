//! Plain-Rust operations behind the browser bindings. Every result is a
//! JSON string so the page needs no generated types.

use std::collections::BTreeMap;

use modelred::cm::{reduce_on_manifold, solve_center_manifold};
use modelred::nf::{NfEngine, SlowModelPolicy};
use modelred::sim::{lower, simulate_path, PathStreams};
use modelred::stochpoly::StochPoly;
use modelred::system::SlowFastSystem;
use modelred::systems;
use serde::Serialize;

const MAX_ORDER: u32 = 12;
const MAX_ITERATIONS: u32 = 10;
const MAX_STEPS: u64 = 2_000_000;

#[derive(Serialize)]
struct Equation {
    lhs: String,
    rhs: String,
}

fn eq(lhs: impl Into<String>, p: &StochPoly) -> Equation {
    Equation {
        lhs: lhs.into(),
        rhs: p.to_string(),
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

/// `duffing`, `seir`, or the text of a system file.
pub fn load_system(spec: &str) -> Result<SlowFastSystem, String> {
    match spec.trim() {
        "duffing" => Ok(systems::duffing()),
        "seir" => Ok(systems::seir_transformed()),
        text => SlowFastSystem::from_json_str(text).map_err(|e| e.to_string()),
    }
}

#[derive(Serialize)]
struct Reduction {
    manifolds: Vec<Equation>,
    reduced: Vec<Equation>,
}

/// Deterministic center manifold to `order` and the slow evolution on it.
pub fn center_manifold(system: &str, order: u32) -> Result<String, String> {
    if order > MAX_ORDER {
        return Err(format!("order is limited to {MAX_ORDER} here"));
    }
    let sys = load_system(system)?.deterministic();
    let g = sys.grading("manifold").map_err(|e| e.to_string())?;
    let h = solve_center_manifold(&sys, g, order).map_err(|e| e.to_string())?;
    let reduced = reduce_on_manifold(&sys, &h, None).map_err(|e| e.to_string())?;
    let name = |v| sys.reg.name(v).to_string();
    to_json(&Reduction {
        manifolds: h.iter().map(|m| eq(name(m.target), &m.body)).collect(),
        reduced: reduced.iter().map(|(v, p)| eq(format!("{}'", name(*v)), p)).collect(),
    })
}

#[derive(Serialize)]
struct NormalForm {
    maps: Vec<Equation>,
    evolutions: Vec<Equation>,
    averaged: Vec<Equation>,
}

/// Stochastic normal form of a system after `iterations` iterations, with
/// the averaged manifold.
pub fn normal_form(system: &str, iterations: u32, order: u32) -> Result<String, String> {
    if iterations > MAX_ITERATIONS || order > MAX_ORDER {
        return Err(format!(
            "at most {MAX_ITERATIONS} iterations and order {MAX_ORDER} here"
        ));
    }
    let sys = load_system(system)?;
    let g = sys.grading("normal_form").map_err(|e| e.to_string())?.clone();
    let eng = NfEngine::new(&sys, g, order).map_err(|e| e.to_string())?;
    let ct = eng.run(iterations).map_err(|e| e.to_string())?;
    let (avg, _) = eng.averaged_cm(&ct);
    let name = |v| sys.reg.name(v).to_string();
    to_json(&NormalForm {
        maps: ct.maps.iter().map(|(v, p)| eq(name(*v), p)).collect(),
        evolutions: ct
            .evolutions
            .iter()
            .map(|(v, p)| eq(format!("{}'", name(*v)), p))
            .collect(),
        averaged: avg
            .iter()
            .map(|m| eq(format!("E[{}]", name(m.target)), &m.body))
            .collect(),
    })
}

#[derive(Serialize)]
struct Paths {
    t: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    x_reduced: Vec<f64>,
    /// First recorded time with `x < barrier`, if any.
    escape_full: Option<f64>,
    escape_reduced: Option<f64>,
    slow_model: String,
}

/// Parameters of [`duffing_paths`].
#[derive(Clone, Debug)]
pub struct PathRequest {
    pub epsilon: f64,
    pub sigma: f64,
    pub x0: f64,
    pub y0: f64,
    pub t_max: f64,
    pub seed: u64,
    pub iterations: u32,
    pub barrier: f64,
}

/// One path of the full Duffing system and one of its normal-form slow
/// model, driven by the same noise.
pub fn duffing_paths(r: &PathRequest) -> Result<String, String> {
    if !(r.epsilon > 0.0 && r.sigma >= 0.0 && r.t_max > 0.0) {
        return Err("need epsilon > 0, sigma >= 0 and t_max > 0".into());
    }
    if r.iterations > MAX_ITERATIONS {
        return Err(format!("at most {MAX_ITERATIONS} iterations here"));
    }
    let sys = systems::duffing();
    let e = sys.var("e").map_err(|e| e.to_string())?;
    let s = sys.var("s").map_err(|e| e.to_string())?;
    let values = BTreeMap::from([(e, r.epsilon), (s, r.sigma)]);
    let full_eqs: Vec<_> = sys
        .slow
        .iter()
        .chain(&sys.fast)
        .map(|v| (*v, sys.rhs[v].clone()))
        .collect();
    let full = lower(&sys.reg, &full_eqs, &values, r.epsilon).map_err(|e| e.to_string())?;

    let g = sys.grading("normal_form").map_err(|e| e.to_string())?.clone();
    let eng = NfEngine::new(&sys, g, 4).map_err(|e| e.to_string())?;
    let ct = eng.run(r.iterations).map_err(|e| e.to_string())?;
    let slow = eng.slow_model(&ct, SlowModelPolicy::Full).map_err(|e| e.to_string())?;
    let reduced = lower(&sys.reg, &slow, &values, r.epsilon).map_err(|e| e.to_string())?;

    let dt = (r.epsilon / 100.0).min(1e-3);
    let steps = (r.t_max / dt).ceil() as u64;
    if steps > MAX_STEPS {
        return Err(format!("t_max / dt exceeds {MAX_STEPS} steps"));
    }
    let every = (steps / 2000).max(1) as usize;
    let streams = PathStreams::new(r.seed, 0);
    let a = simulate_path(&full, &[r.x0, r.y0], &streams, dt, steps, every);
    let b = simulate_path(&reduced, &[r.x0], &streams, dt, steps, every);
    let escape = |times: &[f64], xs: &mut dyn Iterator<Item = f64>| {
        times.iter().zip(xs).find(|(_, x)| *x < r.barrier).map(|(t, _)| *t)
    };
    let n = a.times.len().min(b.times.len());
    to_json(&Paths {
        escape_full: escape(&a.times, &mut a.states.iter().map(|u| u[0])),
        escape_reduced: escape(&b.times, &mut b.states.iter().map(|u| u[0])),
        t: a.times[..n].to_vec(),
        x: a.states[..n].iter().map(|u| u[0]).collect(),
        y: a.states[..n].iter().map(|u| u[1]).collect(),
        x_reduced: b.states[..n].iter().map(|u| u[0]).collect(),
        slow_model: format!("X' = {}", slow[0].1),
    })
}
