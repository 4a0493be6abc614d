//! Noisy Duffing oscillator: manifolds, normal form, escape statistics and
//! the prehistory of escapes.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::artifacts::{self, ManifoldRecord, PolyRecord, TransformRecord};
use super::{Check, ExperimentError};
use crate::cm::{solve_center_manifold, ManifoldExpansion};
use crate::nf::{NfEngine, SlowModelPolicy};
use crate::sim::{
    self, escape_times, evaluate, lower, EnsembleConfig, EscapeRun, EscapeStats, Histogram2d, Prehistory, SimSystem,
};
use crate::stochpoly::{Monomial, StochPoly, Var};
use crate::system::SlowFastSystem;
use crate::systems;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DuffingConfig {
    pub epsilon: f64,
    /// Noise amplitude; the noise intensity is `sigma^2 / 2`.
    pub sigma: f64,
    pub manifold_orders: Vec<u32>,
    pub paths: usize,
    pub t_max: f64,
    /// Prehistory length before each escape.
    pub window: f64,
    /// Escape when `x < barrier`.
    pub barrier: f64,
    pub init_center: [f64; 2],
    pub init_radius: f64,
    /// Step of the full system; None uses `min(1e-3, epsilon / 100)`.
    pub dt: Option<f64>,
    /// Step of the reduced slow model; None uses ten times the full step.
    pub reduced_dt: Option<f64>,
    pub nf_order: u32,
    /// Iterations for the averaged manifold.
    pub nf_iterations: u32,
    /// Iterations whose slow model is simulated.
    pub reduced_iterations: u32,
    pub seed: u64,
    pub threads: Option<usize>,
    pub bins: [usize; 2],
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    /// Prehistory sampling interval in time units.
    pub sample_interval: f64,
    /// Histogram counts are exported normalized to this total.
    pub normalization: f64,
    /// Normalized counts below this are omitted from `histogram.csv`.
    pub threshold: f64,
    /// x interval over which the density ridge is compared with the manifold.
    pub ridge_x: [f64; 2],
    /// Allowed ridge deviation in bins.
    pub ridge_tolerance_bins: f64,
    /// Allowed relative difference of mean escape times.
    pub escape_tolerance: f64,
    /// Allowed standard error relative to the mean escape time.
    pub std_err_tolerance: f64,
}

impl Default for DuffingConfig {
    fn default() -> Self {
        DuffingConfig {
            epsilon: 0.1,
            sigma: 0.3,
            manifold_orders: vec![3, 4, 5],
            paths: 10_000,
            t_max: 20_000.0,
            window: 200.0,
            barrier: -0.2,
            init_center: [1.0, 0.0],
            init_radius: 0.1,
            dt: None,
            reduced_dt: None,
            nf_order: 4,
            nf_iterations: 6,
            reduced_iterations: 6,
            seed: 20_240_601,
            threads: None,
            bins: [200, 200],
            x_range: [-1.5, 1.5],
            y_range: [-1.5, 1.5],
            sample_interval: 0.1,
            normalization: 1e5,
            threshold: 0.0,
            ridge_x: [0.2, 0.9],
            ridge_tolerance_bins: 2.0,
            escape_tolerance: 0.2,
            std_err_tolerance: 0.05,
        }
    }
}

impl DuffingConfig {
    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or_else(|| (self.epsilon / 100.0).min(1e-3))
    }

    pub fn reduced_dt(&self) -> f64 {
        self.reduced_dt.unwrap_or_else(|| 10.0 * self.dt())
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be nonnegative, got {}", self.sigma));
        }
        if self.manifold_orders.is_empty() {
            return bad("manifold_orders is empty".into());
        }
        if self.window > self.t_max {
            return bad(format!("window {} exceeds t_max {}", self.window, self.t_max));
        }
        if self.init_radius.is_nan() || self.init_radius < 0.0 {
            return bad("init_radius must be nonnegative".into());
        }
        if self.sample_interval.is_nan() || self.sample_interval <= 0.0 {
            return bad("sample_interval must be positive".into());
        }
        if self.bins[0] == 0 || self.bins[1] == 0 {
            return bad("bins must be positive".into());
        }
        if self.nf_iterations == 0 || self.reduced_iterations == 0 {
            return bad("normal-form iteration counts must be positive".into());
        }
        for dt in [self.dt(), self.reduced_dt()] {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad(format!("time steps must be positive, got {dt}"));
            }
        }
        Ok(())
    }

    /// Initial state uniform in the disk about `init_center`.
    pub fn sample_init(&self, rng: &mut ChaCha8Rng) -> [f64; 2] {
        let r = self.init_radius * rng.random::<f64>().sqrt();
        let th = std::f64::consts::TAU * rng.random::<f64>();
        [self.init_center[0] + r * th.cos(), self.init_center[1] + r * th.sin()]
    }
}

/// Symbolic part of the pipeline.
pub struct DuffingModels {
    pub sys: SlowFastSystem,
    /// Deterministic manifolds at each configured order.
    pub manifolds: Vec<ManifoldExpansion>,
    pub averaged: ManifoldExpansion,
    pub transform: TransformRecord,
    pub reduced_transform: TransformRecord,
    /// Slow model `X' = f(X, phi)` of the reduced iteration.
    pub slow_model: (Var, StochPoly),
    pub values: BTreeMap<Var, f64>,
}

impl DuffingModels {
    pub fn build(cfg: &DuffingConfig) -> Result<Self, ExperimentError> {
        cfg.validate()?;
        let sys = systems::duffing();
        let (e, s) = (sys.var("e")?, sys.var("s")?);
        let values = BTreeMap::from([(e, cfg.epsilon), (s, cfg.sigma)]);

        let det = sys.deterministic();
        let g = det.grading("manifold")?.clone();
        let mut manifolds = Vec::new();
        for &k in &cfg.manifold_orders {
            manifolds.extend(solve_center_manifold(&det, &g, k)?);
        }

        let eng = NfEngine::new(&sys, sys.grading("normal_form")?.clone(), cfg.nf_order)?;
        let reduced_ct = eng.run(cfg.reduced_iterations)?;
        let mut ct = reduced_ct.clone();
        while ct.iteration < cfg.nf_iterations {
            ct = eng.iterate(&ct)?;
        }
        let (mut avg, _) = eng.averaged_cm(&ct);
        let slow = eng
            .slow_model(&reduced_ct, SlowModelPolicy::Full)?
            .into_iter()
            .next()
            .expect("one slow variable");
        Ok(DuffingModels {
            transform: TransformRecord::of(&sys, &ct),
            reduced_transform: TransformRecord::of(&sys, &reduced_ct),
            averaged: avg.remove(0),
            manifolds,
            slow_model: slow,
            values,
            sys,
        })
    }

    /// Full `(x, y)` system in time `t = epsilon tau`.
    pub fn full_system(&self, cfg: &DuffingConfig) -> Result<SimSystem, ExperimentError> {
        let eqs: Vec<_> = self
            .sys
            .slow
            .iter()
            .chain(&self.sys.fast)
            .map(|v| (*v, self.sys.rhs[v].clone()))
            .collect();
        Ok(lower(&self.sys.reg, &eqs, &self.values, cfg.epsilon)?)
    }

    /// Reduced slow model in time `t = epsilon tau`.
    pub fn reduced_system(&self, cfg: &DuffingConfig) -> Result<SimSystem, ExperimentError> {
        Ok(lower(
            &self.sys.reg,
            std::slice::from_ref(&self.slow_model),
            &self.values,
            cfg.epsilon,
        )?)
    }

    /// Samples `y = h(x)` on `[x0, x1]` for the given manifold.
    pub fn curve(&self, m: &ManifoldExpansion, x_range: [f64; 2], n: usize) -> Result<Vec<[f64; 2]>, ExperimentError> {
        let free = m
            .body
            .vars()
            .into_iter()
            .find(|v| !self.values.contains_key(v))
            .unwrap_or(self.sys.slow[0]);
        let mut vals = self.values.clone();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let x = x_range[0] + (x_range[1] - x_range[0]) * i as f64 / (n.max(2) - 1) as f64;
            vals.insert(free, x);
            out.push([x, evaluate(&self.sys.reg, &m.body, &vals)?]);
        }
        Ok(out)
    }

    /// Coefficient of `e^3 X` in the deterministic part of the averaged manifold.
    pub fn averaged_e3x(&self) -> Result<String, ExperimentError> {
        let (e, xn) = (self.sys.var("e")?, self.sys.var("X")?);
        let m = Monomial::var(e, 3).mul(&Monomial::var(xn, 1));
        Ok(self.averaged.body.deterministic_part().coeff_of(&m).to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgePoint {
    pub x: f64,
    pub ridge_y: Option<f64>,
    pub manifold_y: f64,
    pub deviation_bins: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeComparison {
    pub manifold_order: u32,
    pub points: Vec<RidgePoint>,
    /// Largest deviation over the compared columns; None if any is empty.
    pub max_deviation_bins: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DuffingSummary {
    pub config: DuffingConfig,
    pub dt: f64,
    pub reduced_dt: f64,
    /// Fewer paths than the reference protocol; wider Monte Carlo error.
    pub quick: bool,
    pub full: EscapeStats,
    pub reduced: EscapeStats,
    pub relative_difference: Option<f64>,
    pub histogram_paths: usize,
    pub ridge: Option<RidgeComparison>,
    pub averaged_e3x: String,
    pub checks: Vec<Check>,
}

pub struct DuffingReport {
    pub models: DuffingModels,
    pub full: EscapeRun,
    pub reduced: EscapeRun,
    pub summary: DuffingSummary,
}

/// Compares the per-column mode of `h` with `y = curve(x)` over `x_range`.
pub fn compare_ridge(
    h: &Histogram2d,
    x_range: [f64; 2],
    mut curve: impl FnMut(f64) -> f64,
    order: u32,
) -> RidgeComparison {
    let bin_h = h.bin_width()[1];
    let mut points = Vec::new();
    let mut worst = Some(0.0f64);
    for ix in 0..h.nx {
        let x = h.x_center(ix);
        if x < x_range[0] || x > x_range[1] {
            continue;
        }
        let my = curve(x);
        let ry = h.column_argmax(ix).map(|iy| h.y_center(iy));
        let dev = ry.map(|y| (y - my).abs() / bin_h);
        worst = match (worst, dev) {
            (Some(w), Some(d)) => Some(w.max(d)),
            _ => None,
        };
        points.push(RidgePoint {
            x,
            ridge_y: ry,
            manifold_y: my,
            deviation_bins: dev,
        });
    }
    RidgeComparison {
        manifold_order: order,
        points,
        max_deviation_bins: worst,
    }
}

pub fn duffing_pipeline(cfg: &DuffingConfig) -> Result<DuffingReport, ExperimentError> {
    let models = DuffingModels::build(cfg)?;
    let (dt, rdt) = (cfg.dt(), cfg.reduced_dt());
    let ens = |dt: f64| EnsembleConfig {
        seed: cfg.seed,
        paths: cfg.paths,
        dt,
        t_max: cfg.t_max,
        threads: cfg.threads,
    };
    let barrier = cfg.barrier;
    let pre = Prehistory {
        x: 0,
        y: 1,
        window: cfg.window,
        sample_every: ((cfg.sample_interval / dt).round() as u64).max(1),
        bins: cfg.bins,
        x_range: cfg.x_range,
        y_range: cfg.y_range,
    };

    let full_sys = models.full_system(cfg)?;
    let full = escape_times(
        &full_sys,
        &ens(dt),
        &|rng| cfg.sample_init(rng).to_vec(),
        &|u| u[0] < barrier,
        Some(&pre),
    )?;
    let reduced_sys = models.reduced_system(cfg)?;
    // same initial x as the full system (the disk draw uses the same stream)
    let reduced = escape_times(
        &reduced_sys,
        &ens(rdt),
        &|rng| vec![cfg.sample_init(rng)[0]],
        &|u| u[0] < barrier,
        None,
    )?;

    let top = *cfg.manifold_orders.iter().max().expect("validated");
    let top_m = models
        .manifolds
        .iter()
        .find(|m| m.order == Some(top))
        .expect("manifold for every order");
    let mut vals = models.values.clone();
    let x = models.sys.slow[0];
    let reg = models.sys.reg.clone();
    let ridge = match &full.histogram {
        Some(h) if full.histogram_paths > 0 => Some(compare_ridge(
            h,
            cfg.ridge_x,
            |xv| {
                vals.insert(x, xv);
                evaluate(&reg, &top_m.body, &vals).unwrap_or(f64::NAN)
            },
            top,
        )),
        _ => None,
    };

    let rel = match (full.stats.mean, reduced.stats.mean) {
        (Some(a), Some(b)) if a > 0.0 => Some((b - a).abs() / a),
        _ => None,
    };
    let tol = cfg.escape_tolerance;
    let se_tol = cfg.std_err_tolerance;
    let checks = vec![
        Check::new("escape_time_relative_difference", rel, &format!("<= {tol}"), |v| {
            v <= tol
        }),
        Check::new(
            "full_relative_std_err",
            full.stats.relative_error(),
            &format!("< {se_tol}"),
            |v| v < se_tol,
        ),
        Check::new(
            "reduced_relative_std_err",
            reduced.stats.relative_error(),
            &format!("< {se_tol}"),
            |v| v < se_tol,
        ),
        Check::new(
            "ridge_max_deviation_bins",
            ridge.as_ref().and_then(|r| r.max_deviation_bins),
            &format!("<= {}", cfg.ridge_tolerance_bins),
            |v| v <= cfg.ridge_tolerance_bins,
        ),
    ];
    let summary = DuffingSummary {
        config: cfg.clone(),
        dt,
        reduced_dt: rdt,
        quick: cfg.paths < 10_000,
        full: full.stats.clone(),
        reduced: reduced.stats.clone(),
        relative_difference: rel,
        histogram_paths: full.histogram_paths,
        ridge,
        averaged_e3x: models.averaged_e3x()?,
        checks,
    };
    Ok(DuffingReport {
        models,
        full,
        reduced,
        summary,
    })
}

#[derive(Serialize)]
struct ManifoldsFile {
    epsilon: f64,
    deterministic: Vec<ManifoldRecord>,
    averaged: ManifoldRecord,
    reduced_slow_model: PolyRecord,
}

impl DuffingReport {
    /// Writes the report directory.
    pub fn write(&self, dir: &Path) -> Result<(), ExperimentError> {
        std::fs::create_dir_all(dir)?;
        let cfg = &self.summary.config;
        let reg = &self.models.sys.reg;
        let mut det = Vec::new();
        for m in &self.models.manifolds {
            let mut r = ManifoldRecord::of(reg, m);
            r.curve = self.models.curve(m, cfg.x_range, 121)?;
            det.push(r);
        }
        let mut averaged = ManifoldRecord::of(reg, &self.models.averaged);
        averaged.curve = self
            .models
            .curve(
                &ManifoldExpansion {
                    body: self.models.averaged.body.deterministic_part(),
                    ..self.models.averaged.clone()
                },
                cfg.x_range,
                121,
            )
            .unwrap_or_default();
        artifacts::write_json(
            dir,
            "manifolds.json",
            &ManifoldsFile {
                epsilon: cfg.epsilon,
                deterministic: det,
                averaged,
                reduced_slow_model: PolyRecord::of(&self.models.slow_model.1),
            },
        )?;
        artifacts::write_json(dir, "transform.json", &self.models.transform)?;
        artifacts::write_json(dir, "summary.json", &self.summary)?;
        sim::io::write_escape_table(artifacts::create_file(dir, "escapes_full.csv")?, &self.full.records)?;
        sim::io::write_escape_table(
            artifacts::create_file(dir, "escapes_reduced.csv")?,
            &self.reduced.records,
        )?;
        if let Some(h) = &self.full.histogram {
            sim::io::write_histogram(
                artifacts::create_file(dir, "histogram.csv")?,
                h,
                cfg.normalization,
                cfg.threshold,
            )?;
            let meta = sim::io::HistogramMeta {
                bins: cfg.bins,
                x_range: cfg.x_range,
                y_range: cfg.y_range,
                window: cfg.window,
                normalization: cfg.normalization,
                total_raw: h.total(),
                threshold: cfg.threshold,
                escaped_paths: self.full.histogram_paths,
                seed: cfg.seed,
                dt: self.summary.dt,
            };
            artifacts::write_json(dir, "histogram.json", &meta)?;
        }
        // one sample path of the full system over the prehistory window
        let full_sys = self.models.full_system(cfg)?;
        let ens = sim::integrate(
            &full_sys,
            &EnsembleConfig {
                seed: cfg.seed,
                paths: 1,
                dt: self.summary.dt,
                t_max: cfg.window,
                threads: Some(1),
            },
            ((cfg.sample_interval / self.summary.dt).round() as usize).max(1),
            &|rng| cfg.sample_init(rng).to_vec(),
        )?;
        let p = &ens.paths[0];
        sim::io::write_series(
            artifacts::create_file(dir, "series_full_path0.csv")?,
            &ens.names,
            &p.times,
            &p.states,
        )?;
        Ok(())
    }
}
