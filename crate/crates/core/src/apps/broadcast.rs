//! `for i in 0..N { a[i] = b }` over remote arrays: the same block is
//! copied to every array inside one barrier.

use crate::api::{Ctx, Future, RemoteArray, RemoteError};

#[derive(Debug, Clone, PartialEq)]
pub struct BroadcastRun {
    pub arrays: Vec<RemoteArray>,
    pub payload_len: u64,
}

/// Allocates `n` arrays of `len` doubles round-robin over the agents and
/// assigns `values` to each. Array `i` then checks element `i mod len`.
pub fn broadcast_demo(ctx: &Ctx, n: usize, values: &[f64]) -> Result<BroadcastRun, RemoteError> {
    let len = values.len() as u64;
    let hosts = ctx.agents();
    let arrays = ctx.barrier(|c| {
        (0..n).map(|i| RemoteArray::allocate(c, hosts[i % hosts.len()].agent, len)).collect::<Vec<_>>()
    })?;
    let arrays = arrays.iter().map(Future::get).collect::<Result<Vec<_>, _>>()?;
    ctx.barrier(|c| {
        for a in &arrays {
            a.write(c, 0, values);
        }
    })?;
    if len > 0 {
        let probes = ctx.barrier(|c| {
            arrays.iter().enumerate().map(|(i, a)| (i, a.get(c, i as u64 % len))).collect::<Vec<_>>()
        })?;
        for (i, f) in probes {
            let got = f.get()?;
            let want = values[i % values.len()];
            if got.to_bits() != want.to_bits() {
                return Err(RemoteError::Usage(format!("array {i} holds {got} at {}, expected {want}", i as u64 % len)));
            }
        }
    }
    Ok(BroadcastRun { arrays, payload_len: len * 8 })
}

/// The assigned block: `0, 1, 2, ...`, so probes of different arrays
/// return different values.
pub fn broadcast_values(len: usize) -> Vec<f64> {
    (0..len).map(|i| i as f64).collect()
}
