//! First-passage ensembles with optional prehistory histograms.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::integrate::{check_init, run_path, EnsembleConfig, InitSampler, PathEnd, PathStreams};
use super::stats::{EscapeStats, Histogram2d};
use super::{fold_paths, SimError, SimSystem};

/// Collects the trailing `window` of `(x, y)` samples before each escape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prehistory {
    /// State indices of the two histogram coordinates.
    pub x: usize,
    pub y: usize,
    /// Length of the retained history, in simulation time.
    pub window: f64,
    /// Record one sample every this many steps.
    pub sample_every: u64,
    pub bins: [usize; 2],
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
}

impl Prehistory {
    fn capacity(&self, dt: f64) -> usize {
        ((self.window / (dt * self.sample_every.max(1) as f64)).floor() as usize).max(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeRecord {
    pub path: u64,
    /// First time the barrier holds; the end time for censored or diverged
    /// paths.
    pub time: f64,
    pub escaped: bool,
    pub diverged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeRun {
    pub config: EnsembleConfig,
    pub records: Vec<EscapeRecord>,
    pub stats: EscapeStats,
    pub histogram: Option<Histogram2d>,
    /// Escaped paths that contributed to the histogram.
    pub histogram_paths: usize,
}

struct Acc {
    records: Vec<EscapeRecord>,
    hist: Option<Histogram2d>,
    hist_paths: usize,
}

/// Runs paths until `barrier(model state)` first holds, censoring at
/// `cfg.t_max`. Times are in simulation time (multiples of `cfg.dt`).
pub fn escape_times(
    sys: &SimSystem,
    cfg: &EnsembleConfig,
    init: &InitSampler<'_>,
    barrier: &(dyn Fn(&[f64]) -> bool + Sync),
    prehistory: Option<&Prehistory>,
) -> Result<EscapeRun, SimError> {
    cfg.validate()?;
    if let Some(p) = prehistory {
        if p.x >= sys.dim() || p.y >= sys.dim() {
            return Err(SimError::Config("prehistory coordinate out of range".into()));
        }
        if p.window > cfg.t_max {
            return Err(SimError::Config(format!(
                "prehistory window {} exceeds t_max {}",
                p.window, cfg.t_max
            )));
        }
    }
    let steps = cfg.steps();
    let empty_hist = || prehistory.map(|p| Histogram2d::new(p.bins, p.x_range, p.y_range));
    let acc = fold_paths(
        cfg.paths,
        cfg.threads,
        || Acc {
            records: Vec::new(),
            hist: empty_hist(),
            hist_paths: 0,
        },
        |acc, p| {
            let streams = PathStreams::new(cfg.seed, p as u64);
            let x0 = init(&mut streams.init_sampler());
            check_init(sys, &x0)?;
            let cap = prehistory.map_or(0, |h| h.capacity(cfg.dt));
            let mut ring: VecDeque<(f64, f64)> = VecDeque::with_capacity(cap);
            let n = sys.n_model;
            let end = run_path(sys, &x0, &streams, cfg.dt, steps, |step, u| {
                if let Some(h) = prehistory {
                    if step % h.sample_every.max(1) == 0 {
                        if ring.len() == cap {
                            ring.pop_front();
                        }
                        ring.push_back((u[h.x], u[h.y]));
                    }
                }
                !barrier(&u[..n])
            });
            let (time, escaped, diverged) = match end {
                PathEnd::Completed => (steps as f64 * cfg.dt, false, false),
                PathEnd::Stopped { step } => (step as f64 * cfg.dt, true, false),
                PathEnd::Diverged { step } => (step as f64 * cfg.dt, false, true),
            };
            if escaped {
                if let Some(h) = acc.hist.as_mut() {
                    for &(x, y) in &ring {
                        h.add(x, y);
                    }
                    acc.hist_paths += 1;
                }
            }
            acc.records.push(EscapeRecord {
                path: p as u64,
                time,
                escaped,
                diverged,
            });
            Ok(())
        },
        |mut a, b| {
            a.records.extend(b.records);
            if let (Some(h), Some(g)) = (a.hist.as_mut(), b.hist.as_ref()) {
                h.merge(g);
            }
            a.hist_paths += b.hist_paths;
            a
        },
    )?;
    let mut records = acc.records;
    records.sort_unstable_by_key(|r| r.path);
    let times: Vec<f64> = records.iter().filter(|r| r.escaped).map(|r| r.time).collect();
    let diverged = records.iter().filter(|r| r.diverged).count();
    let censored = records.len() - times.len() - diverged;
    Ok(EscapeRun {
        config: cfg.clone(),
        stats: EscapeStats::from_times(&times, censored, diverged),
        records,
        histogram: acc.hist,
        histogram_paths: acc.hist_paths,
    })
}
