//! Stratonovich Heun stepping, seeded per-path noise streams and ensembles.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{par_map, SimError, SimSystem};

const STREAM_BITS: u32 = 24;
const INIT_STREAM: u64 = 0;
const WARMUP_FLAG: u64 = 1 << (STREAM_BITS - 1);

/// Random streams of one path: one ChaCha stream per white-noise channel,
/// keyed by `(seed, path, channel)` so that models sharing a channel see the
/// same increments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PathStreams {
    pub seed: u64,
    pub path: u64,
}

impl PathStreams {
    pub fn new(seed: u64, path: u64) -> Self {
        PathStreams { seed, path }
    }

    fn stream(&self, id: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream((self.path << STREAM_BITS) | id);
        r
    }

    /// Stream for initial conditions.
    pub fn init(&self) -> ChaCha8Rng {
        self.stream(INIT_STREAM)
    }

    /// Stream for sampling the model initial state.
    pub fn init_sampler(&self) -> ChaCha8Rng {
        self.stream(WARMUP_FLAG)
    }

    /// Stream of standard normals driving channel `ch`.
    pub fn channel(&self, ch: u32) -> ChaCha8Rng {
        self.stream(u64::from(ch) + 1)
    }

    fn warmup(&self, ch: u32) -> ChaCha8Rng {
        self.stream(WARMUP_FLAG | (u64::from(ch) + 1))
    }
}

/// Wiener increments `sqrt(dt) N(0, 1)` per channel.
pub struct Increments {
    rngs: Vec<ChaCha8Rng>,
    sqrt_dt: f64,
}

impl Increments {
    pub fn new(streams: &PathStreams, channels: &[u32], dt: f64) -> Self {
        Increments {
            rngs: channels.iter().map(|&c| streams.channel(c)).collect(),
            sqrt_dt: dt.sqrt(),
        }
    }

    fn warmup(streams: &PathStreams, channels: &[u32], dt: f64) -> Self {
        Increments {
            rngs: channels.iter().map(|&c| streams.warmup(c)).collect(),
            sqrt_dt: dt.sqrt(),
        }
    }

    pub fn fill(&mut self, dw: &mut [f64]) {
        for (x, r) in dw.iter_mut().zip(&mut self.rngs) {
            let n: f64 = r.sample(StandardNormal);
            *x = n * self.sqrt_dt;
        }
    }
}

/// Predictor-corrector step with the same increment in both stages, which
/// converges to the Stratonovich solution.
pub struct Heun<'a> {
    sys: &'a SimSystem,
    f0: Vec<f64>,
    g0: Vec<f64>,
    pred: Vec<f64>,
}

impl<'a> Heun<'a> {
    pub fn new(sys: &'a SimSystem) -> Self {
        let n = sys.dim();
        Heun {
            sys,
            f0: vec![0.0; n],
            g0: vec![0.0; n],
            pred: vec![0.0; n],
        }
    }

    fn eval(sys: &SimSystem, u: &[f64], dw: &[f64], i: usize) -> (f64, f64) {
        let f = sys.drift[i].eval(u);
        let g = sys.noise[i].iter().map(|c| c.coef.eval(u) * dw[c.slot]).sum();
        (f, g)
    }

    #[allow(clippy::needless_range_loop)]
    pub fn step(&mut self, u: &mut [f64], dt: f64, dw: &[f64]) {
        let sys = self.sys;
        for i in 0..u.len() {
            let (f, g) = Self::eval(sys, u, dw, i);
            self.f0[i] = f;
            self.g0[i] = g;
            self.pred[i] = u[i] + f * dt + g;
        }
        for i in 0..u.len() {
            let (f, g) = Self::eval(sys, &self.pred, dw, i);
            u[i] += 0.5 * (self.f0[i] + f) * dt + 0.5 * (self.g0[i] + g);
        }
    }
}

/// Draws the auxiliary variables from their stationary law. Single-level
/// convolutions of white noise are jointly Gaussian with covariance
/// `gain_i gain_j / (decay_i + decay_j)` within a channel; any other
/// auxiliary variable triggers a warm-up run of the (closed) auxiliary
/// subsystem over ten slowest decay times.
pub fn init_aux(sys: &SimSystem, u: &mut [f64], streams: &PathStreams, dt: f64) {
    if sys.aux.is_empty() {
        return;
    }
    let base = sys.n_model;
    let mut rng = streams.init();
    let mut by_channel: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
    for (k, a) in sys.aux.iter().enumerate() {
        if let Some(ch) = a.source {
            by_channel.entry(ch).or_default().push(k);
        }
    }
    for idx in by_channel.values() {
        let n = idx.len();
        let cov = DMatrix::from_fn(n, n, |i, j| {
            let (a, b) = (&sys.aux[idx[i]], &sys.aux[idx[j]]);
            a.gain * b.gain / (a.decay + b.decay)
        });
        let l = match cov.clone().cholesky() {
            Some(c) => c.l(),
            // nearly equal rates: fall back to independent marginals
            None => DMatrix::from_diagonal(&cov.diagonal().map(f64::sqrt)),
        };
        let xi = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let z = l * xi;
        for (i, &k) in idx.iter().enumerate() {
            u[base + k] = z[i];
        }
    }
    if sys.aux.iter().all(|a| a.source.is_some()) {
        return;
    }
    let slowest = sys.aux.iter().map(|a| a.decay).fold(f64::INFINITY, f64::min);
    let steps = (10.0 / (slowest * dt)).ceil() as usize;
    let frozen: Vec<f64> = u[..base].to_vec();
    let mut inc = Increments::warmup(streams, &sys.channels, dt);
    let mut dw = vec![0.0; sys.channels.len()];
    let mut heun = Heun::new(sys);
    for _ in 0..steps {
        inc.fill(&mut dw);
        heun.step(u, dt, &dw);
        u[..base].copy_from_slice(&frozen);
    }
}

/// How a single path ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathEnd {
    Completed,
    Stopped { step: u64 },
    Diverged { step: u64 },
}

/// Integrates one path for `steps` steps. `observe(step, state)` sees the
/// initial state (step 0) and the state after every step; returning false
/// stops the path.
pub fn run_path(
    sys: &SimSystem,
    model_init: &[f64],
    streams: &PathStreams,
    dt: f64,
    steps: u64,
    mut observe: impl FnMut(u64, &[f64]) -> bool,
) -> PathEnd {
    let mut u = vec![0.0; sys.dim()];
    u[..sys.n_model].copy_from_slice(model_init);
    init_aux(sys, &mut u, streams, dt);
    if !observe(0, &u) {
        return PathEnd::Stopped { step: 0 };
    }
    let mut inc = Increments::new(streams, &sys.channels, dt);
    let mut dw = vec![0.0; sys.channels.len()];
    let mut heun = Heun::new(sys);
    for step in 1..=steps {
        inc.fill(&mut dw);
        heun.step(&mut u, dt, &dw);
        if !u.iter().all(|x| x.is_finite()) {
            return PathEnd::Diverged { step };
        }
        if !observe(step, &u) {
            return PathEnd::Stopped { step };
        }
    }
    PathEnd::Completed
}

/// Ensemble parameters; `paths` paths with ids `0..paths` share the base seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub seed: u64,
    pub paths: usize,
    pub dt: f64,
    pub t_max: f64,
    /// Worker threads; None uses the available parallelism.
    #[serde(default)]
    pub threads: Option<usize>,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return Err(SimError::Config(format!(
                "t_max must be nonnegative, got {}",
                self.t_max
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        (self.t_max / self.dt).round() as u64
    }
}

/// Draws the model-variable initial state of a path from its init stream.
pub type InitSampler<'a> = dyn Fn(&mut ChaCha8Rng) -> Vec<f64> + Sync + 'a;

/// A recorded path, thinned to every `record_every`-th step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub path: u64,
    pub times: Vec<f64>,
    /// Model variables only.
    pub states: Vec<Vec<f64>>,
    pub end: PathEnd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub config: EnsembleConfig,
    pub record_every: usize,
    pub names: Vec<String>,
    pub paths: Vec<Trajectory>,
}

impl PathEnsemble {
    pub fn diverged(&self) -> usize {
        self.paths
            .iter()
            .filter(|p| matches!(p.end, PathEnd::Diverged { .. }))
            .count()
    }
}

pub fn simulate_path(
    sys: &SimSystem,
    model_init: &[f64],
    streams: &PathStreams,
    dt: f64,
    steps: u64,
    record_every: usize,
) -> Trajectory {
    let every = record_every.max(1) as u64;
    let mut times = Vec::new();
    let mut states = Vec::new();
    let end = run_path(sys, model_init, streams, dt, steps, |step, u| {
        if step % every == 0 {
            times.push(step as f64 * dt);
            states.push(u[..sys.n_model].to_vec());
        }
        true
    });
    Trajectory {
        path: streams.path,
        times,
        states,
        end,
    }
}

/// Integrates `cfg.paths` independent paths, recording every
/// `record_every`-th state. The result does not depend on the thread count.
pub fn integrate(
    sys: &SimSystem,
    cfg: &EnsembleConfig,
    record_every: usize,
    init: &InitSampler<'_>,
) -> Result<PathEnsemble, SimError> {
    cfg.validate()?;
    let steps = cfg.steps();
    let paths = par_map(cfg.paths, cfg.threads, |p| {
        let streams = PathStreams::new(cfg.seed, p as u64);
        let x0 = init(&mut streams.init_sampler());
        check_init(sys, &x0)?;
        Ok(simulate_path(sys, &x0, &streams, cfg.dt, steps, record_every))
    })?;
    Ok(PathEnsemble {
        config: cfg.clone(),
        record_every,
        names: sys.names[..sys.n_model].to_vec(),
        paths,
    })
}

pub(super) fn check_init(sys: &SimSystem, x0: &[f64]) -> Result<(), SimError> {
    if x0.len() != sys.n_model {
        return Err(SimError::Config(format!(
            "initial state has {} components, system has {}",
            x0.len(),
            sys.n_model
        )));
    }
    Ok(())
}
