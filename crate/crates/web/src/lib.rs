//! WebAssembly bindings for the browser demo in `www/`.

pub mod api;

use wasm_bindgen::prelude::*;

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

/// Center manifold of `duffing`, `seir` or a pasted system file, as JSON.
#[wasm_bindgen(js_name = centerManifold)]
pub fn center_manifold(system: &str, order: u32) -> Result<String, JsError> {
    js(api::center_manifold(system, order))
}

/// Normal-form transform after `iterations` iterations, as JSON.
#[wasm_bindgen(js_name = normalForm)]
pub fn normal_form(system: &str, iterations: u32, order: u32) -> Result<String, JsError> {
    js(api::normal_form(system, iterations, order))
}

/// Full and reduced Duffing paths on shared noise, as JSON.
#[allow(clippy::too_many_arguments)]
#[wasm_bindgen(js_name = duffingPaths)]
pub fn duffing_paths(
    epsilon: f64,
    sigma: f64,
    x0: f64,
    y0: f64,
    t_max: f64,
    seed: u32,
    iterations: u32,
    barrier: f64,
) -> Result<String, JsError> {
    js(api::duffing_paths(&api::PathRequest {
        epsilon,
        sigma,
        x0,
        y0,
        t_max,
        seed: seed.into(),
        iterations,
        barrier,
    }))
}
