//! The IR instruction set exchanged between agents and its binary encoding.
//!
//! Every byte that crosses between two agents is a length-prefixed frame
//! whose payload is one encoded [`Envelope`]. The format is little-endian and
//! fixed-width throughout; the full field table lives in `docs/wire-format.md`.
//!
//! ```text
//! envelope := version:u16 src:u64 dst:u64 tag:u8 body
//! blob     := len:u32 bytes[len]
//! params   := count:u16 { mode:u8 [writeback:slot if mode=1] blob }*
//! ref      := agent:u64 object:u64
//! slot     := agent:u64 slot:u64
//! guard    := agent:u64 guard:u64
//! ```

mod codec;
mod frame;

use serde::{Deserialize, Serialize};
use std::fmt;

pub use codec::{decode, encode, MalformedFrame, MalformedKind};
pub use frame::{encode_frame, read_frame, write_frame, FrameError, FRAME_HEADER_LEN, MAX_FRAME_LEN};

/// Current envelope version. Decoders reject anything else.
pub const WIRE_VERSION: u16 = 1;

pub const TAG_CONSTRUCT: u8 = 0x01;
pub const TAG_INVOKE: u8 = 0x02;
pub const TAG_WRITE_RESULT: u8 = 0x03;
pub const TAG_RELEASE_GUARD: u8 = 0x04;
pub const TAG_DESTROY: u8 = 0x05;
pub const TAG_COPY_BLOCK: u8 = 0x06;
pub const TAG_READ_BLOCK: u8 = 0x07;

pub const MODE_BY_VALUE: u8 = 0x00;
pub const MODE_BY_REFERENCE: u8 = 0x01;

/// Address of a virtual host. `AgentId(0)` is reserved for the launcher's
/// registry service; running agents are numbered densely from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u64);

impl AgentId {
    pub const REGISTRY: AgentId = AgentId(0);

    pub fn is_registry(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "agent#{}", self.0)
    }
}

/// Identifier of a registered object kind (a "class").
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KindId(pub u32);

/// Identifier of a method within a kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MethodId(pub u32);

/// Generalized pointer: the agent hosting an object plus the object's id
/// within that agent. Object id 0 is the null reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RemoteRef {
    pub agent: AgentId,
    pub object: u64,
}

impl RemoteRef {
    pub const NULL: RemoteRef = RemoteRef { agent: AgentId(0), object: 0 };

    pub fn new(agent: AgentId, object: u64) -> Self {
        RemoteRef { agent, object }
    }

    pub fn is_null(&self) -> bool {
        self.object == 0
    }
}

impl fmt::Display for RemoteRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/obj#{}", self.agent, self.object)
    }
}

/// A guard living on `agent` (the waiting side).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GuardRef {
    pub agent: AgentId,
    pub guard: u64,
}

/// A result cell on the calling agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ResultSlot {
    pub agent: AgentId,
    pub slot: u64,
}

/// How a parameter travels: by value, or by reference with a write-back slot
/// that receives the re-serialized parameter after the method returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamMode {
    ByValue,
    ByReference { writeback: ResultSlot },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub mode: ParamMode,
    pub payload: Vec<u8>,
}

impl Param {
    pub fn by_value(payload: Vec<u8>) -> Self {
        Param { mode: ParamMode::ByValue, payload }
    }

    pub fn by_reference(writeback: ResultSlot, payload: Vec<u8>) -> Self {
        Param { mode: ParamMode::ByReference { writeback }, payload }
    }
}

/// One IR operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instruction {
    Construct { kind: KindId, result: ResultSlot, guard: GuardRef, params: Vec<Param> },
    Invoke { target: RemoteRef, method: MethodId, result: ResultSlot, guard: GuardRef, params: Vec<Param> },
    WriteResult { slot: ResultSlot, payload: Vec<u8> },
    ReleaseGuard { guard: GuardRef },
    Destroy { target: RemoteRef, guard: GuardRef },
    CopyBlock { target: RemoteRef, offset: u64, payload: Vec<u8>, guard: GuardRef },
    ReadBlock { target: RemoteRef, offset: u64, length: u64, result: ResultSlot, guard: GuardRef },
}

impl Instruction {
    pub fn tag(&self) -> u8 {
        match self {
            Instruction::Construct { .. } => TAG_CONSTRUCT,
            Instruction::Invoke { .. } => TAG_INVOKE,
            Instruction::WriteResult { .. } => TAG_WRITE_RESULT,
            Instruction::ReleaseGuard { .. } => TAG_RELEASE_GUARD,
            Instruction::Destroy { .. } => TAG_DESTROY,
            Instruction::CopyBlock { .. } => TAG_COPY_BLOCK,
            Instruction::ReadBlock { .. } => TAG_READ_BLOCK,
        }
    }

    /// The guard of an instruction that initiates remote work (or the guard
    /// being released, for `ReleaseGuard`). `WriteResult` has none.
    pub fn guard(&self) -> Option<GuardRef> {
        match self {
            Instruction::Construct { guard, .. }
            | Instruction::Invoke { guard, .. }
            | Instruction::Destroy { guard, .. }
            | Instruction::CopyBlock { guard, .. }
            | Instruction::ReadBlock { guard, .. }
            | Instruction::ReleaseGuard { guard } => Some(*guard),
            Instruction::WriteResult { .. } => None,
        }
    }

    /// True for instructions that ask the receiver to do work and answer.
    pub fn initiates_work(&self) -> bool {
        !matches!(self, Instruction::WriteResult { .. } | Instruction::ReleaseGuard { .. })
    }

    pub fn name(&self) -> &'static str {
        tag_name(self.tag())
    }
}

pub fn tag_name(tag: u8) -> &'static str {
    match tag {
        TAG_CONSTRUCT => "construct",
        TAG_INVOKE => "invoke",
        TAG_WRITE_RESULT => "write_result",
        TAG_RELEASE_GUARD => "release_guard",
        TAG_DESTROY => "destroy",
        TAG_COPY_BLOCK => "copy_block",
        TAG_READ_BLOCK => "read_block",
        _ => "unknown",
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub version: u16,
    pub src: AgentId,
    pub dst: AgentId,
    pub instruction: Instruction,
}

impl Envelope {
    pub fn new(src: AgentId, dst: AgentId, instruction: Instruction) -> Self {
        Envelope { version: WIRE_VERSION, src, dst, instruction }
    }
}
