//! Golden encodings, computed independently with Python's `struct` module
//! from the documented little-endian layout.

use parobj_core::wire::{AgentId, Envelope, GuardRef, Instruction, KindId, MethodId, Param, RemoteRef, ResultSlot};

pub fn g(agent: u64, guard: u64) -> GuardRef {
    GuardRef { agent: AgentId(agent), guard }
}

pub fn s(agent: u64, slot: u64) -> ResultSlot {
    ResultSlot { agent: AgentId(agent), slot }
}

pub fn r(agent: u64, object: u64) -> RemoteRef {
    RemoteRef::new(AgentId(agent), object)
}

pub fn golden() -> Vec<(Envelope, &'static str)> {
    let e = |src, dst, i| Envelope::new(AgentId(src), AgentId(dst), i);
    vec![
        (
            e(1, 2, Instruction::Construct { kind: KindId(0x100), result: s(1, 3), guard: g(1, 4), params: vec![Param::by_value(vec![0x2a])] }),
            "01000100000000000000020000000000000001000100000100000000000000030000000000000001000000000000000400000000000000010000010000002a",
        ),
        (
            e(
                1,
                2,
                Instruction::Invoke {
                    target: r(2, 9),
                    method: MethodId(7),
                    result: s(1, 5),
                    guard: g(1, 6),
                    params: vec![Param::by_value(vec![1, 2]), Param::by_reference(s(1, 8), vec![0xff])],
                },
            ),
            "0100010000000000000002000000000000000202000000000000000900000000000000070000000100000000000000050000000000000001000000000000000600000000000000020000020000000102010100000000000000080000000000000001000000ff",
        ),
        (
            e(2, 1, Instruction::WriteResult { slot: s(1, 5), payload: vec![0xde, 0xad] }),
            "010002000000000000000100000000000000030100000000000000050000000000000002000000dead",
        ),
        (
            e(3, 2, Instruction::ReleaseGuard { guard: g(2, 7) }),
            "0100030000000000000002000000000000000402000000000000000700000000000000",
        ),
        (
            e(1, 4, Instruction::Destroy { target: r(4, 11), guard: g(1, 12) }),
            "0100010000000000000004000000000000000504000000000000000b0000000000000001000000000000000c00000000000000",
        ),
        (
            e(1, 2, Instruction::CopyBlock { target: r(2, 3), offset: 16, payload: vec![0x10, 0x20, 0x30], guard: g(1, 13) }),
            "010001000000000000000200000000000000060200000000000000030000000000000010000000000000000300000010203001000000000000000d00000000000000",
        ),
        (
            e(1, 2, Instruction::ReadBlock { target: r(2, 3), offset: 8, length: 24, result: s(1, 14), guard: g(1, 15) }),
            "01000100000000000000020000000000000007020000000000000003000000000000000800000000000000180000000000000001000000000000000e0000000000000001000000000000000f00000000000000",
        ),
    ]
}
