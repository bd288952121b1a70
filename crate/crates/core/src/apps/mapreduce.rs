//! Master/worker map-reduce: workers are constructed on their hosts in
//! parallel, `compute` runs in parallel, and the reduction consumes the
//! results in index order.

use crate::api::{Ctx, Future, Params, RemoteError};
use crate::runtime::{KindDescriptor, KindRegistry, RegistryError};
use crate::wire::{KindId, MethodId, RemoteRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const WORKER_KIND: KindId = KindId(0x0100);
/// `compute(x) -> x * x`
pub const WORKER_COMPUTE: MethodId = MethodId(1);

pub struct Worker {
    pub index: u64,
}

pub fn register(kinds: &mut KindRegistry) -> Result<(), RegistryError> {
    kinds.register(
        KindDescriptor::builder(WORKER_KIND, "Worker", |_, args| Ok(Worker { index: args.get(0)? }))
            .shared_method(WORKER_COMPUTE, |_: &Worker, _, args| {
                let x: f64 = args.get(0)?;
                Ok(x * x)
            })
            .build(),
    )?;
    Ok(())
}

/// Runs the map-reduce over `data`, one worker per element, worker `i`
/// placed on agent `i mod agents`.
pub fn mapreduce_demo(ctx: &Ctx, n_workers: usize, data: &[f64]) -> Result<f64, RemoteError> {
    if data.len() != n_workers {
        return Err(RemoteError::Usage(format!("{n_workers} workers but {} data items", data.len())));
    }
    let hosts = ctx.agents();
    let workers: Vec<Future<RemoteRef>> = (0..n_workers)
        .map(|i| ctx.construct(hosts[i % hosts.len()].agent, WORKER_KIND, Params::new().arg(&(i as u64))))
        .collect();
    let results: Vec<Future<f64>> = workers
        .iter()
        .zip(data)
        .map(|(w, x)| ctx.invoke(w, WORKER_COMPUTE, Params::new().arg(x)))
        .collect();
    let mut total = 0.0;
    for r in &results {
        total += r.get()?;
    }
    Ok(total)
}

/// Sequential reference: the same squares summed in the same order.
pub fn mapreduce_oracle(data: &[f64]) -> f64 {
    data.iter().fold(0.0, |t, x| t + x * x)
}

/// Seeded input in `[-1, 1)`.
pub fn seeded_data(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}
