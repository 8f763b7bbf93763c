//! Worker-pool drivers. Every driver splits its work at the same
//! boundaries as the sequential core routines, so results do not depend on
//! the number of workers.

use rayon::prelude::*;
use rayon::ThreadPool;
use rectiforge_core::analysis::{self, chunks, SweepRecord, SweepSpec};
use rectiforge_core::linear::{s_parameters_at, SParameterMatrix};
use rectiforge_core::netlist::Circuit;
use rectiforge_core::optimize::{optimize_matching_with, OptSpec, OptimizeReport};
use rectiforge_core::Result;

/// Worker count: explicit request, else all available cores.
pub fn jobs(requested: Option<usize>) -> usize {
    requested
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn pool(jobs: usize) -> ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool")
}

/// [`analysis::sweep`] with chunks solved concurrently.
pub fn sweep(pool: &ThreadPool, circuit: &Circuit, spec: &SweepSpec) -> Result<Vec<SweepRecord>> {
    analysis::check_sweep(circuit, spec)?;
    let parts: Vec<Vec<SweepRecord>> = pool.install(|| {
        chunks(spec.grid.len())
            .into_par_iter()
            .map(|r| analysis::sweep_chunk(circuit, spec, r))
            .collect()
    });
    Ok(parts.into_iter().flatten().collect())
}

/// [`analysis::s11_curve`] with chunks solved concurrently.
pub fn s11_curve(
    pool: &ThreadPool,
    circuit: &Circuit,
    freqs: &[f64],
    pin: Option<f64>,
    harmonics: usize,
) -> Result<Vec<(f64, f64)>> {
    let parts: Vec<Result<Vec<(f64, f64)>>> = pool.install(|| {
        chunks(freqs.len())
            .into_par_iter()
            .map(|r| analysis::s11_curve(circuit, &freqs[r], pin, harmonics))
            .collect()
    });
    let mut out = Vec::with_capacity(freqs.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

pub fn s_parameters(
    pool: &ThreadPool,
    circuit: &Circuit,
    freqs: &[f64],
    bias: Option<&[f64]>,
) -> Result<Vec<SParameterMatrix>> {
    pool.install(|| freqs.par_iter().map(|&f| s_parameters_at(circuit, f, bias)).collect())
}

/// Matching optimization with each simplex batch evaluated concurrently.
pub fn optimize(pool: &ThreadPool, circuit: &Circuit, spec: &OptSpec) -> Result<OptimizeReport> {
    optimize_matching_with(circuit, spec, &|xs, f| pool.install(|| xs.par_iter().map(|x| f(x)).collect()))
}
