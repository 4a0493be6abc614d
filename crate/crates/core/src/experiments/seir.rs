//! Stochastic SEIR model: full transformed system against the naive and the
//! normal-form reduced models on shared noise.

use std::collections::BTreeMap;
use std::path::Path;

use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::artifacts::{self, ManifoldRecord, PolyRecord, TransformRecord};
use super::{Check, ExperimentError};
use crate::cm::{reduce_on_manifold, solve_center_manifold, ManifoldExpansion};
use crate::nf::{NfEngine, SlowModelPolicy};
use crate::seir::{self, SeirParams, SeirVars};
use crate::sim::{self, cross_correlation, evaluate, lower, PathStreams, SimSystem, Trajectory};
use crate::stochpoly::{StochPoly, Var};
use crate::system::SlowFastSystem;

/// Which noise realizations drive the normal-form model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    /// Same increments on channels 1-3 as the full system.
    Shared,
    /// Independent increments.
    Independent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeirConfig {
    /// Rates per year.
    pub mu: f64,
    pub beta: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// Amplitudes of the additive noises on S, E, I.
    pub sigma: [f64; 3],
    /// Length of the compared window in rescaled time.
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    /// Initial `(V, W)`; the full system starts on the manifold above it.
    pub initial: [f64; 2],
    pub nf_order: u32,
    pub nf_iterations: u32,
    pub noise: NoiseMode,
    /// Realizations in the seed battery (path ids `0..battery`).
    pub battery: usize,
    /// Record every this many steps.
    pub record_every: usize,
    /// End of the transient window.
    pub split: f64,
    pub cc_naive_max: f64,
    pub cc_nf_min: f64,
    /// Battery members that must have `cc_nf > cc_naive`.
    pub min_ordered: usize,
    pub threads: Option<usize>,
}

impl Default for SeirConfig {
    fn default() -> Self {
        SeirConfig {
            mu: 0.02,
            beta: 1575.0,
            alpha: 1.0 / 0.0279,
            gamma: 1.0 / 0.01,
            sigma: [5e-4; 3],
            horizon: 100.0,
            dt: 0.01,
            seed: 20_240_601,
            initial: [5e-4, 0.0],
            nf_order: 4,
            nf_iterations: 8,
            noise: NoiseMode::Shared,
            battery: 20,
            record_every: 10,
            split: 40.0,
            cc_naive_max: 0.55,
            cc_nf_min: 0.90,
            min_ordered: 19,
            threads: None,
        }
    }
}

impl SeirConfig {
    pub fn params(&self) -> Result<SeirParams, ExperimentError> {
        let p = SeirParams::from_f64(self.mu, self.beta, self.alpha, self.gamma)
            .ok_or_else(|| ExperimentError::Config("rates must be finite".into()))?;
        if !(p.mu > Zero::zero() && p.alpha > Zero::zero() && p.gamma > Zero::zero() && p.beta > Zero::zero()) {
            return Err(ExperimentError::Config("rates must be positive".into()));
        }
        if p.r0() <= num_traits::One::one() {
            return Err(ExperimentError::Config(format!(
                "basic reproductive rate {} does not exceed 1",
                p.r0().to_f64().unwrap_or(f64::NAN)
            )));
        }
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("horizon must be positive");
        }
        if self.sigma.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("sigma must be nonnegative");
        }
        if self.battery == 0 || self.record_every == 0 {
            return bad("battery and record_every must be positive");
        }
        if !(0.0..self.horizon).contains(&self.split) {
            return bad("split must lie inside the horizon");
        }
        self.params().map(|_| ())
    }
}

/// Symbolic models of the pipeline.
pub struct SeirModels {
    pub params: SeirParams,
    pub sys: SlowFastSystem,
    pub vars: SeirVars,
    /// Second-order center manifold `U = h(V, W)`.
    pub manifold: Vec<ManifoldExpansion>,
    /// Deterministic reduction on the manifold.
    pub reduced: Vec<(Var, StochPoly)>,
    pub naive: Vec<(Var, StochPoly)>,
    pub transform: TransformRecord,
    /// Normal-form slow model in `(X1, X2)`.
    pub nf: Vec<(Var, StochPoly)>,
    /// Deterministic `V`, `W`, `U` in terms of `(X1, X2)` on `Y = 0`.
    pub nf_maps: [StochPoly; 3],
    pub values: BTreeMap<Var, f64>,
}

impl SeirModels {
    pub fn build(cfg: &SeirConfig) -> Result<Self, ExperimentError> {
        cfg.validate()?;
        let params = cfg.params()?;
        let sys = seir::transformed_system(&params, cfg.sigma);
        let vars = SeirVars::of(&sys)?;
        let det = sys.deterministic();
        let manifold = solve_center_manifold(&det, det.grading("manifold")?, 2)?;
        let reduced = reduce_on_manifold(&det, &manifold, None)?;
        let naive = seir::naive_model(&sys, &reduced)?;

        let eng = NfEngine::new(&sys, sys.grading("normal_form")?.clone(), cfg.nf_order)?;
        let ct = eng.run(cfg.nf_iterations)?;
        let nf = eng.slow_model(&ct, SlowModelPolicy::AdditiveNoise)?;
        let fast_new = eng.fast_new();
        let on_manifold = |v: Var| ct.maps[&v].at_zero(&fast_new).deterministic_part();
        let nf_maps = [on_manifold(vars.v), on_manifold(vars.w), on_manifold(vars.u)];
        Ok(SeirModels {
            transform: TransformRecord::of(&sys, &ct),
            values: sys.parameters.clone(),
            params,
            vars,
            manifold,
            reduced,
            naive,
            nf,
            nf_maps,
            sys,
        })
    }

    fn alpha0_gamma0(&self) -> (f64, f64) {
        let f = |q: crate::stochpoly::Q| q.to_f64().unwrap_or(f64::NAN);
        (f(self.params.alpha0()), f(self.params.gamma0()))
    }

    /// Full `(V, W, U)` system.
    pub fn full_system(&self) -> Result<SimSystem, ExperimentError> {
        let s = &self.sys;
        let eqs: Vec<_> = s.slow.iter().chain(&s.fast).map(|v| (*v, s.rhs[v].clone())).collect();
        Ok(lower(&s.reg, &eqs, &self.values, 1.0)?)
    }

    /// Naive reduced `(V, W)` model with lumped noises.
    pub fn naive_system(&self) -> Result<SimSystem, ExperimentError> {
        Ok(lower(&self.sys.reg, &self.naive, &self.values, 1.0)?)
    }

    /// Normal-form reduced `(X1, X2)` model.
    pub fn nf_system(&self) -> Result<SimSystem, ExperimentError> {
        Ok(lower(&self.sys.reg, &self.nf, &self.values, 1.0)?)
    }

    fn eval(&self, p: &StochPoly, binds: &[(Var, f64)]) -> Result<f64, ExperimentError> {
        let mut vals = self.values.clone();
        vals.extend(binds.iter().copied());
        Ok(evaluate(&self.sys.reg, p, &vals)?)
    }

    /// `U` on the second-order manifold.
    pub fn manifold_u(&self, v: f64, w: f64) -> Result<f64, ExperimentError> {
        let h = seir::manifold_u(&self.manifold, &self.sys).expect("manifold for U");
        self.eval(&h, &[(self.vars.v, v), (self.vars.w, w)])
    }

    /// `(V, W, U)` from normal-form coordinates.
    pub fn from_normal_form(&self, x1: f64, x2: f64) -> Result<[f64; 3], ExperimentError> {
        let b = [(self.vars.x1, x1), (self.vars.x2, x2)];
        Ok([
            self.eval(&self.nf_maps[0], &b)?,
            self.eval(&self.nf_maps[1], &b)?,
            self.eval(&self.nf_maps[2], &b)?,
        ])
    }

    /// Normal-form coordinates mapping to `(v, w)`, by fixed-point iteration.
    pub fn to_normal_form(&self, v: f64, w: f64) -> Result<[f64; 2], ExperimentError> {
        let mut x = [v, w];
        for _ in 0..100 {
            let [mv, mw, _] = self.from_normal_form(x[0], x[1])?;
            let (dv, dw) = (v - mv, w - mw);
            x = [x[0] + dv, x[1] + dw];
            if dv.abs().max(dw.abs()) < 1e-15 {
                break;
            }
        }
        Ok(x)
    }

    /// `(S, E, I)` from transformed coordinates.
    pub fn reconstruct(&self, u: f64, v: f64, w: f64) -> [f64; 3] {
        let (a0, g0) = self.alpha0_gamma0();
        let fp = self.params.fixed_point().map(|q| q.to_f64().unwrap_or(f64::NAN));
        let [s, e, i] = seir::inverse(&a0, &g0, [u, v, w]);
        [s + fp[0], e + fp[1], i + fp[2]]
    }
}

/// Recorded realization of the three models.
#[derive(Clone, Debug, PartialEq)]
pub struct Realization {
    pub path: u64,
    pub times: Vec<f64>,
    pub full: Trajectory,
    pub naive: Trajectory,
    pub nf: Trajectory,
    pub i_full: Vec<f64>,
    pub i_naive: Vec<f64>,
    pub i_nf: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowCorrelations {
    pub whole: Option<f64>,
    pub transient: Option<f64>,
    pub post_transient: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryEntry {
    pub path: u64,
    pub cc_naive: Option<f64>,
    pub cc_nf: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub time: f64,
    /// Peak of `I - I0`.
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeirSummary {
    pub config: SeirConfig,
    pub r0: f64,
    pub alpha0: f64,
    pub gamma0: f64,
    pub kappa: f64,
    pub fixed_point: [f64; 3],
    pub sigma5: f64,
    pub sigma6: f64,
    pub naive: WindowCorrelations,
    pub nf: WindowCorrelations,
    pub battery: Vec<BatteryEntry>,
    /// Battery medians, used for the acceptance bands.
    pub median_cc_naive: Option<f64>,
    pub median_cc_nf: Option<f64>,
    pub ordered: usize,
    pub first_peak_full: Option<Peak>,
    pub first_peak_nf: Option<Peak>,
    pub diverged: bool,
    pub checks: Vec<Check>,
}

pub struct SeirReport {
    pub models: SeirModels,
    pub realization: Realization,
    pub summary: SeirSummary,
}

fn window(times: &[f64], a: &[f64], b: &[f64], lo: f64, hi: f64) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(a.iter().zip(b))
        .filter(|(t, _)| (lo..=hi).contains(*t))
        .map(|(_, (p, q))| (*p, *q))
        .unzip();
    cross_correlation(&x, &y)
}

/// Largest excursion of `i - i0` within `[0, until]`.
fn first_peak(times: &[f64], i: &[f64], i0: f64, until: f64) -> Option<Peak> {
    let n = times.iter().take_while(|t| **t <= until).count();
    (0..n)
        .filter(|&k| i[k].is_finite())
        .max_by(|&a, &b| i[a].total_cmp(&i[b]))
        .map(|k| Peak {
            time: times[k],
            amplitude: i[k] - i0,
        })
}

fn median(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let mut v: Vec<f64> = values.collect::<Option<_>>()?;
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 0 {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    })
}

impl Realization {
    pub fn correlations(&self, cfg: &SeirConfig) -> (WindowCorrelations, WindowCorrelations) {
        let t = &self.times;
        let w = |b: &[f64]| WindowCorrelations {
            whole: window(t, &self.i_full, b, 0.0, cfg.horizon),
            transient: window(t, &self.i_full, b, 0.0, cfg.split),
            post_transient: window(t, &self.i_full, b, cfg.split, cfg.horizon),
        };
        (w(&self.i_naive), w(&self.i_nf))
    }

    fn diverged(&self) -> bool {
        [&self.full, &self.naive, &self.nf]
            .iter()
            .any(|p| matches!(p.end, sim::PathEnd::Diverged { .. }))
    }
}

/// Simulates realization `path` of the full, naive and normal-form models.
pub fn simulate_realization(
    models: &SeirModels,
    systems: &[SimSystem; 3],
    cfg: &SeirConfig,
    path: u64,
) -> Result<Realization, ExperimentError> {
    let [v0, w0] = cfg.initial;
    let x0 = models.to_normal_form(v0, w0)?;
    let u0 = models.from_normal_form(x0[0], x0[1])?[2];
    let steps = (cfg.horizon / cfg.dt).round() as u64;
    let shared = PathStreams::new(cfg.seed, path);
    let nf_streams = match cfg.noise {
        NoiseMode::Shared => shared,
        NoiseMode::Independent => PathStreams::new(cfg.seed ^ 0x9e37_79b9_7f4a_7c15, path),
    };
    let [full_sys, naive_sys, nf_sys] = systems;
    let full = sim::simulate_path(full_sys, &[v0, w0, u0], &shared, cfg.dt, steps, cfg.record_every);
    let naive = sim::simulate_path(naive_sys, &[v0, w0], &shared, cfg.dt, steps, cfg.record_every);
    let nf = sim::simulate_path(nf_sys, &x0, &nf_streams, cfg.dt, steps, cfg.record_every);

    let i_full = full
        .states
        .iter()
        .map(|s| models.reconstruct(s[2], s[0], s[1])[2])
        .collect();
    let i_naive = naive
        .states
        .iter()
        .map(|s| Ok(models.reconstruct(models.manifold_u(s[0], s[1])?, s[0], s[1])[2]))
        .collect::<Result<_, ExperimentError>>()?;
    let i_nf = nf
        .states
        .iter()
        .map(|s| {
            let [v, w, u] = models.from_normal_form(s[0], s[1])?;
            Ok(models.reconstruct(u, v, w)[2])
        })
        .collect::<Result<_, ExperimentError>>()?;
    let len = full.times.len().min(naive.times.len()).min(nf.times.len());
    let trim = |mut v: Vec<f64>| {
        v.truncate(len);
        v
    };
    Ok(Realization {
        path,
        times: full.times[..len].to_vec(),
        i_full: trim(i_full),
        i_naive: trim(i_naive),
        i_nf: trim(i_nf),
        full,
        naive,
        nf,
    })
}

pub fn seir_pipeline(cfg: &SeirConfig) -> Result<SeirReport, ExperimentError> {
    let models = SeirModels::build(cfg)?;
    let systems = [models.full_system()?, models.naive_system()?, models.nf_system()?];
    let runs = sim::par_map(cfg.battery, cfg.threads, |p| {
        simulate_realization(&models, &systems, cfg, p as u64)
    })?;
    let battery: Vec<BatteryEntry> = runs
        .iter()
        .map(|r| {
            let (n, f) = r.correlations(cfg);
            BatteryEntry {
                path: r.path,
                cc_naive: n.whole,
                cc_nf: f.whole,
            }
        })
        .collect();
    let ordered = battery
        .iter()
        .filter(|b| matches!((b.cc_naive, b.cc_nf), (Some(a), Some(b)) if b > a))
        .count();
    let median_cc_naive = median(battery.iter().map(|b| b.cc_naive));
    let median_cc_nf = median(battery.iter().map(|b| b.cc_nf));
    let realization = runs.into_iter().next().expect("battery is nonempty");
    let (naive, nf) = realization.correlations(cfg);

    let f = |q: crate::stochpoly::Q| q.to_f64().unwrap_or(f64::NAN);
    let p = &models.params;
    let fixed_point = p.fixed_point().map(f);
    let (sigma5, sigma6) = seir::lumped_amplitudes(p, cfg.sigma);
    let t = &realization.times;
    let peak_full = first_peak(t, &realization.i_full, fixed_point[2], cfg.split);
    let peak_nf = first_peak(t, &realization.i_nf, fixed_point[2], cfg.split);

    let (lo, hi) = (cfg.cc_naive_max, cfg.cc_nf_min);
    let checks = vec![
        Check::new("median_cc_nf", median_cc_nf, &format!(">= {hi}"), |v| v >= hi),
        Check::new("median_cc_naive", median_cc_naive, &format!("<= {lo}"), |v| v <= lo),
        Check::new(
            "battery_ordered",
            Some(ordered as f64),
            &format!(">= {} of {}", cfg.min_ordered, cfg.battery),
            |v| v >= cfg.min_ordered as f64,
        ),
    ];
    let summary = SeirSummary {
        config: cfg.clone(),
        r0: f(p.r0()),
        alpha0: f(p.alpha0()),
        gamma0: f(p.gamma0()),
        kappa: f(p.kappa()),
        fixed_point,
        sigma5,
        sigma6,
        naive,
        nf,
        battery,
        median_cc_naive,
        median_cc_nf,
        ordered,
        first_peak_full: peak_full,
        first_peak_nf: peak_nf,
        diverged: realization.diverged(),
        checks,
    };
    Ok(SeirReport {
        models,
        realization,
        summary,
    })
}

#[derive(Serialize)]
struct ManifoldsFile {
    center_manifold: Vec<ManifoldRecord>,
    reduced: BTreeMap<String, PolyRecord>,
    naive: BTreeMap<String, PolyRecord>,
    normal_form_slow_model: BTreeMap<String, PolyRecord>,
    /// `V`, `W`, `U` on the normal-form manifold `Y = 0`, deterministic part.
    normal_form_maps: BTreeMap<String, PolyRecord>,
}

impl SeirReport {
    pub fn write(&self, dir: &Path) -> Result<(), ExperimentError> {
        std::fs::create_dir_all(dir)?;
        let m = &self.models;
        let reg = &m.sys.reg;
        let named = |eqs: &[(Var, StochPoly)]| {
            eqs.iter()
                .map(|(v, p)| (reg.name(*v).to_string(), PolyRecord::of(p)))
                .collect::<BTreeMap<_, _>>()
        };
        let maps = ["V", "W", "U"]
            .iter()
            .zip(&m.nf_maps)
            .map(|(n, p)| (n.to_string(), PolyRecord::of(p)))
            .collect();
        artifacts::write_json(
            dir,
            "manifolds.json",
            &ManifoldsFile {
                center_manifold: m.manifold.iter().map(|h| ManifoldRecord::of(reg, h)).collect(),
                reduced: named(&m.reduced),
                naive: named(&m.naive),
                normal_form_slow_model: named(&m.nf),
                normal_form_maps: maps,
            },
        )?;
        artifacts::write_json(dir, "transform.json", &m.transform)?;
        artifacts::write_json(dir, "summary.json", &self.summary)?;

        let r = &self.realization;
        let n = r.times.len();
        let rows: Vec<Vec<f64>> = (0..n).map(|k| vec![r.i_full[k], r.i_naive[k], r.i_nf[k]]).collect();
        let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        sim::io::write_series(
            artifacts::create_file(dir, "series_I.csv")?,
            &names(&["I_full", "I_naive", "I_nf"]),
            &r.times,
            &rows,
        )?;
        let full_rows: Vec<Vec<f64>> = r.full.states[..n]
            .iter()
            .map(|s| {
                let [se, e, i] = m.reconstruct(s[2], s[0], s[1]);
                vec![s[0], s[1], s[2], se, e, i]
            })
            .collect();
        sim::io::write_series(
            artifacts::create_file(dir, "series_full.csv")?,
            &names(&["V", "W", "U", "S", "E", "I"]),
            &r.times,
            &full_rows,
        )?;
        sim::io::write_series(
            artifacts::create_file(dir, "series_naive.csv")?,
            &names(&["V", "W"]),
            &r.times,
            &r.naive.states[..n],
        )?;
        sim::io::write_series(
            artifacts::create_file(dir, "series_nf.csv")?,
            &names(&["X1", "X2"]),
            &r.times,
            &r.nf.states[..n],
        )?;
        Ok(())
    }
}
