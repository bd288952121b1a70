use parobj_core::wire::{decode, encode, AgentId, Envelope, GuardRef, Instruction, KindId, MethodId, Param, RemoteRef, ResultSlot};
use proptest::prelude::*;

#[path = "common/golden.rs"]
mod golden;
use golden::{g, golden, r, s};

#[test]
fn golden_vectors_for_every_variant() {
    let vectors = golden();
    let mut tags: Vec<u8> = vectors.iter().map(|(e, _)| e.instruction.tag()).collect();
    tags.sort();
    assert_eq!(tags, (1..=7).collect::<Vec<u8>>());
    for (env, hex_str) in vectors {
        let want = hex::decode(hex_str).unwrap();
        assert_eq!(encode(&env), want, "{}", env.instruction.name());
        assert_eq!(decode(&want).unwrap(), env);
    }
}

fn arb_guard() -> impl Strategy<Value = GuardRef> {
    (any::<u64>(), any::<u64>()).prop_map(|(a, b)| g(a, b))
}

fn arb_slot() -> impl Strategy<Value = ResultSlot> {
    (any::<u64>(), any::<u64>()).prop_map(|(a, b)| s(a, b))
}

fn arb_ref() -> impl Strategy<Value = RemoteRef> {
    (any::<u64>(), any::<u64>()).prop_map(|(a, b)| r(a, b))
}

fn arb_blob() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(any::<u8>(), 0..48)
}

fn arb_params() -> impl Strategy<Value = Vec<Param>> {
    prop::collection::vec(
        prop_oneof![
            arb_blob().prop_map(Param::by_value),
            (arb_slot(), arb_blob()).prop_map(|(w, b)| Param::by_reference(w, b)),
        ],
        0..5,
    )
}

fn arb_instruction() -> impl Strategy<Value = Instruction> {
    prop_oneof![
        (any::<u32>(), arb_slot(), arb_guard(), arb_params())
            .prop_map(|(k, result, guard, params)| Instruction::Construct { kind: KindId(k), result, guard, params }),
        (arb_ref(), any::<u32>(), arb_slot(), arb_guard(), arb_params()).prop_map(|(target, m, result, guard, params)| {
            Instruction::Invoke { target, method: MethodId(m), result, guard, params }
        }),
        (arb_slot(), arb_blob()).prop_map(|(slot, payload)| Instruction::WriteResult { slot, payload }),
        arb_guard().prop_map(|guard| Instruction::ReleaseGuard { guard }),
        (arb_ref(), arb_guard()).prop_map(|(target, guard)| Instruction::Destroy { target, guard }),
        (arb_ref(), any::<u64>(), arb_blob(), arb_guard())
            .prop_map(|(target, offset, payload, guard)| Instruction::CopyBlock { target, offset, payload, guard }),
        (arb_ref(), any::<u64>(), any::<u64>(), arb_slot(), arb_guard()).prop_map(
            |(target, offset, length, result, guard)| Instruction::ReadBlock { target, offset, length, result, guard }
        ),
    ]
}

fn arb_envelope() -> impl Strategy<Value = Envelope> {
    (any::<u64>(), any::<u64>(), arb_instruction()).prop_map(|(a, b, i)| Envelope::new(AgentId(a), AgentId(b), i))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100_000, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn round_trip(env in arb_envelope()) {
        let bytes = encode(&env);
        prop_assert_eq!(encode(&env), bytes.clone());
        prop_assert_eq!(decode(&bytes).unwrap(), env.clone());
        prop_assert_eq!(env.instruction.initiates_work(), env.instruction.guard().is_some()
            && !matches!(env.instruction, Instruction::ReleaseGuard { .. }));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 2_000, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn truncation_and_trailing_bytes_are_rejected(env in arb_envelope(), cut in any::<prop::sample::Index>(), extra in 1u8..8) {
        let bytes = encode(&env);
        let at = cut.index(bytes.len());
        prop_assert!(decode(&bytes[..at]).is_err());
        let mut longer = bytes.clone();
        longer.extend(std::iter::repeat_n(0u8, extra as usize));
        prop_assert!(decode(&longer).is_err());
    }
}
