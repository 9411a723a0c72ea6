//! Thread-sharded evaluation with results independent of the worker count.

use std::ops::Range;
use std::thread;

use xdiff_core::entropy::{EntropyEval, GluedEntropy};
use xdiff_core::model::CrossDiffusion;
use xdiff_core::verify::{certify_shard, finish_report, CertificationReport, SampleGrid, Subspace};
use xdiff_core::Result;

/// Splits `0..len` into at most `parts` contiguous, nearly equal ranges.
pub fn split(len: usize, parts: usize) -> Vec<Range<usize>> {
    let parts = parts.clamp(1, len.max(1));
    let (base, extra) = (len / parts, len % parts);
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let end = start + base + usize::from(p < extra);
        out.push(start..end);
        start = end;
    }
    out
}

/// `f(0), …, f(len − 1)` evaluated on `threads` workers, in index order.
pub fn ordered_map<T, F>(len: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    if threads <= 1 || len <= 1 {
        return (0..len).map(f).collect();
    }
    let f = &f;
    thread::scope(|s| {
        let handles: Vec<_> = split(len, threads).into_iter().map(|r| s.spawn(move || r.map(f).collect::<Vec<T>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// Sampled certification with the grid sharded over `threads` workers.
pub fn certify<M, E>(model: &M, entropy: &E, sub: &Subspace, m: usize, target: f64, threads: usize) -> Result<CertificationReport>
where
    M: CrossDiffusion + ?Sized,
    E: EntropyEval + Sync + ?Sized,
{
    let grid = SampleGrid::new(model, entropy, m)?;
    let ranges = split(grid.len(), threads);
    let shards = ordered_map(ranges.len(), threads, |i| certify_shard(model, entropy, sub, &grid, ranges[i].clone()));
    let mut merged = None;
    for s in shards {
        let s = s?;
        merged = Some(match merged {
            None => s,
            Some(m) => s.merge(m),
        });
    }
    let shard = merged.expect("at least one shard");
    Ok(finish_report(model, entropy, sub, &grid, shard, target, None))
}

pub fn certify_glued<M>(model: &M, glued: &GluedEntropy, sub: &Subspace, m: usize, target: f64, threads: usize) -> Result<CertificationReport>
where
    M: CrossDiffusion + ?Sized,
{
    let mut report = certify(model, glued, sub, m, target, threads)?;
    report.epsilon = Some(glued.epsilon());
    report.hessian_bounds = (glued.lambda_prime(), glued.big_lambda_prime());
    Ok(report)
}
