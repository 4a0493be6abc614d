//! Stratonovich simulation of lowered stochastic polynomial systems.

mod escape;
mod integrate;
pub mod io;
mod lower;
mod stats;

pub use escape::{escape_times, EscapeRecord, EscapeRun, Prehistory};
pub use integrate::{
    init_aux, integrate, run_path, simulate_path, EnsembleConfig, Heun, Increments, InitSampler, PathEnd, PathEnsemble,
    PathStreams, Trajectory,
};
pub use lower::{evaluate, lower, AuxVar, CompiledPoly, CompiledTerm, NoiseCoupling, SimSystem};
pub use stats::{cross_correlation, EscapeStats, Histogram2d};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("unsupported noise structure: {0}")]
    Unsupported(String),
    #[error("anticipatory convolution cannot be simulated")]
    Anticipatory,
    #[error("unbound parameter `{0}`")]
    Unbound(String),
    #[error("invalid simulation config: {0}")]
    Config(String),
}

/// Folds `step` over path ids `0..n`, in parallel when available. `combine`
/// must be associative and commutative so that the result is independent of
/// how paths are split across threads.
pub(crate) fn fold_paths<A, E, I, S, C>(
    n: usize,
    threads: Option<usize>,
    identity: I,
    step: S,
    combine: C,
) -> Result<A, E>
where
    A: Send,
    E: Send + From<SimError>,
    I: Fn() -> A + Sync + Send,
    S: Fn(&mut A, usize) -> Result<(), E> + Sync + Send,
    C: Fn(A, A) -> A + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let run = || {
            (0..n)
                .into_par_iter()
                .try_fold(&identity, |mut a, p| step(&mut a, p).map(|_| a))
                .try_reduce(&identity, |a, b| Ok(combine(a, b)))
        };
        match threads {
            Some(k) => rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| SimError::Config(e.to_string()))?
                .install(run),
            None => run(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = (threads, &combine);
        let mut acc = identity();
        for p in 0..n {
            step(&mut acc, p)?;
        }
        Ok(acc)
    }
}

/// Maps path ids `0..n` to results collected in path order, in parallel
/// when available.
pub fn par_map<T, E, F>(n: usize, threads: Option<usize>, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send + From<SimError>,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    let mut pairs = fold_paths::<_, E, _, _, _>(
        n,
        threads,
        Vec::new,
        |acc: &mut Vec<(usize, T)>, p| {
            acc.push((p, f(p)?));
            Ok(())
        },
        |mut a, mut b| {
            a.append(&mut b);
            a
        },
    )?;
    pairs.sort_unstable_by_key(|(p, _)| *p);
    Ok(pairs.into_iter().map(|(_, t)| t).collect())
}
