//! Inputs shared by the benchmarks.

use parobj_core::wire::{AgentId, Envelope, GuardRef, Instruction, KindId, MethodId, Param, RemoteRef, ResultSlot};

/// One envelope of every instruction kind, with `payload` bytes in each
/// blob.
pub fn sample_envelopes(payload: usize) -> Vec<Envelope> {
    let blob = vec![0xa5u8; payload];
    let guard = GuardRef { agent: AgentId(1), guard: 7 };
    let slot = ResultSlot { agent: AgentId(1), slot: 3 };
    let target = RemoteRef::new(AgentId(2), 11);
    let e = |i| Envelope::new(AgentId(1), AgentId(2), i);
    vec![
        e(Instruction::Construct { kind: KindId(0x100), result: slot, guard, params: vec![Param::by_value(blob.clone())] }),
        e(Instruction::Invoke {
            target,
            method: MethodId(1),
            result: slot,
            guard,
            params: vec![Param::by_value(blob.clone()), Param::by_reference(slot, blob.clone())],
        }),
        e(Instruction::WriteResult { slot, payload: blob.clone() }),
        e(Instruction::ReleaseGuard { guard }),
        e(Instruction::Destroy { target, guard }),
        e(Instruction::CopyBlock { target, offset: 64, payload: blob, guard }),
        e(Instruction::ReadBlock { target, offset: 64, length: payload as u64, result: slot, guard }),
    ]
}
