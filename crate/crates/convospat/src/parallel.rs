//! Chain-level parallelism. Each chain owns its RNG stream, so the pooled
//! output does not depend on the number of threads or their scheduling.

use std::num::NonZeroUsize;
use std::thread;

use convospat_core::mcmc::{run_chain, ChainConfig, ChainDraws, PosteriorSamples};
use convospat_core::model::{CellLikelihood, ModelContext};
use convospat_core::{Result, Scheme};

pub const THREADS_ENV: &str = "CONVOSPAT_THREADS";

/// Worker threads for chains: `CONVOSPAT_THREADS` if set to a positive
/// integer, else the available parallelism.
pub fn thread_cap() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| thread::available_parallelism().map_or(1, NonZeroUsize::get))
}

/// Runs all chains on up to `threads` scoped threads (chain `c` goes to
/// worker `c % threads`) and returns them in chain order.
pub fn run_chains_parallel<L: CellLikelihood + Sync + ?Sized>(
    config: &ChainConfig,
    ctx: &ModelContext<'_, L>,
    scheme: Scheme,
    threads: usize,
) -> Result<PosteriorSamples> {
    config.validate()?;
    let workers = threads.clamp(1, config.n_chains);
    let mut results: Vec<(usize, Result<ChainDraws>)> = if workers == 1 {
        (0..config.n_chains)
            .map(|c| (c, run_chain(config, ctx, scheme, c)))
            .collect()
    } else {
        thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    s.spawn(move || {
                        (w..config.n_chains)
                            .step_by(workers)
                            .map(|c| (c, run_chain(config, ctx, scheme, c)))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("chain worker panicked"))
                .collect()
        })
    };
    results.sort_by_key(|(c, _)| *c);
    let chains = results
        .into_iter()
        .map(|(_, r)| r)
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorSamples::from_chains(ctx, scheme, chains))
}
