use super::{Ctx, Future, Params, RemoteError};
use crate::runtime::builtin::{F64_ARRAY_KIND, F64_WIDTH};
use crate::runtime::outcome::ErrorCode;
use crate::wire::{AgentId, RemoteRef};
use serde::{Deserialize, Serialize};

/// A remote array of doubles with element-level access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteArray {
    pub target: RemoteRef,
    pub len: u64,
}

impl RemoteArray {
    /// Allocates a zero-initialised array of `len` doubles on `host`.
    pub fn allocate(ctx: &Ctx, host: AgentId, len: u64) -> Future<RemoteArray> {
        ctx.construct(host, F64_ARRAY_KIND, Params::new().arg(&len))
            .map(move |target| RemoteArray { target, len })
    }

    fn check(&self, i: u64, count: u64) -> Result<(), RemoteError> {
        if i.checked_add(count).is_some_and(|end| end <= self.len) {
            Ok(())
        } else {
            Err(RemoteError::remote(
                ErrorCode::OutOfRange,
                format!("elements {i}..{} outside array of length {}", i.saturating_add(count), self.len),
            ))
        }
    }

    pub fn get(&self, ctx: &Ctx, i: u64) -> Future<f64> {
        if let Err(e) = self.check(i, 1) {
            return ctx.failed(e);
        }
        ctx.remote_read(self.target, i * F64_WIDTH, F64_WIDTH)
            .map(|b| f64::from_le_bytes(b[..8].try_into().expect("8 bytes read")))
    }

    pub fn set(&self, ctx: &Ctx, i: u64, value: f64) -> Future<()> {
        if let Err(e) = self.check(i, 1) {
            return ctx.failed(e);
        }
        ctx.remote_write(self.target, i * F64_WIDTH, value.to_le_bytes().to_vec())
    }

    /// Writes `values` starting at element `start`.
    pub fn write(&self, ctx: &Ctx, start: u64, values: &[f64]) -> Future<()> {
        if let Err(e) = self.check(start, values.len() as u64) {
            return ctx.failed(e);
        }
        let bytes = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        ctx.remote_write(self.target, start * F64_WIDTH, bytes)
    }

    pub fn read_all(&self, ctx: &Ctx) -> Future<Vec<f64>> {
        ctx.remote_read(self.target, 0, self.len * F64_WIDTH).map(|b| {
            b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect()
        })
    }
}
