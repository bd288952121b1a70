//! Kinds every agent knows: named hosts and flat arrays of doubles.

use super::kind::{AppError, KindDescriptor};
use crate::wire::{KindId, MethodId};

/// Kind ids at or above this value are reserved for the runtime.
pub const RESERVED_KIND_BASE: u32 = 0xFFFF_0000;

pub const HOST_KIND: KindId = KindId(RESERVED_KIND_BASE + 1);
pub const F64_ARRAY_KIND: KindId = KindId(RESERVED_KIND_BASE + 2);

pub const HOST_NAME: MethodId = MethodId(1);
/// Returns its single byte-blob argument unchanged; used as a reachability
/// probe.
pub const HOST_ECHO: MethodId = MethodId(2);

pub const ARRAY_LEN: MethodId = MethodId(1);
pub const ARRAY_SUM: MethodId = MethodId(2);

/// The object representing a virtual host on its agent.
pub struct Host {
    pub name: String,
}

/// Zero-initialised array of `f64`, byte-addressable through the block
/// accessor (element `i` lives at byte offset `8 * i`).
pub struct F64Array {
    pub values: Vec<f64>,
}

pub const F64_WIDTH: u64 = 8;

fn byte_range(len_elems: usize, offset: u64, len: u64) -> Result<(usize, usize), AppError> {
    let total = len_elems as u64 * F64_WIDTH;
    let end = offset.checked_add(len).filter(|&e| e <= total).ok_or_else(|| {
        AppError::out_of_range(format!("bytes {offset}..{} outside array of {total} bytes", offset.saturating_add(len)))
    })?;
    if !offset.is_multiple_of(F64_WIDTH) || !len.is_multiple_of(F64_WIDTH) {
        return Err(AppError::out_of_range(format!("unaligned block access at {offset}+{len}")));
    }
    Ok(((offset / F64_WIDTH) as usize, (end / F64_WIDTH) as usize))
}

pub(crate) fn kinds() -> Vec<KindDescriptor> {
    let host = KindDescriptor::builder(HOST_KIND, "Host", |_, args| Ok(Host { name: args.get(0)? }))
        .shared_method(HOST_NAME, |h: &Host, _, _| Ok(h.name.clone()))
        .shared_method(HOST_ECHO, |_: &Host, _, args| args.get::<Vec<u8>>(0))
        .build();
    let array = KindDescriptor::builder(F64_ARRAY_KIND, "F64Array", |_, args| {
        let len: u64 = args.get(0)?;
        Ok(F64Array { values: vec![0.0; len as usize] })
    })
    .shared_method(ARRAY_LEN, |a: &F64Array, _, _| Ok(a.values.len() as u64))
    .shared_method(ARRAY_SUM, |a: &F64Array, _, _| Ok(a.values.iter().sum::<f64>()))
    .block_access(
        |a: &F64Array, offset, len| {
            let (lo, hi) = byte_range(a.values.len(), offset, len)?;
            Ok(a.values[lo..hi].iter().flat_map(|v| v.to_le_bytes()).collect())
        },
        |a: &mut F64Array, offset, bytes| {
            let (lo, hi) = byte_range(a.values.len(), offset, bytes.len() as u64)?;
            for (v, chunk) in a.values[lo..hi].iter_mut().zip(bytes.chunks_exact(8)) {
                *v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
            }
            Ok(())
        },
    )
    .build();
    vec![host, array]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_ranges() {
        assert_eq!(byte_range(4, 8, 16).unwrap(), (1, 3));
        assert_eq!(byte_range(4, 0, 32).unwrap(), (0, 4));
        assert!(byte_range(4, 32, 8).is_err());
        assert!(byte_range(4, 3, 8).is_err());
        assert!(byte_range(4, u64::MAX, 8).is_err());
    }
}
