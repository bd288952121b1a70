use super::*;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MalformedKind {
    #[error("unknown instruction tag 0x{0:02x}")]
    UnknownTag(u8),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated body: needed {needed} more bytes")]
    Truncated { needed: usize },
    #[error("{0} trailing bytes after instruction")]
    TrailingBytes(usize),
    #[error("unknown parameter mode 0x{0:02x}")]
    UnknownParamMode(u8),
    #[error("guard owned by the reserved registry agent")]
    RegistryGuard,
}

/// Protocol error for a frame that does not decode. `offset` is the byte
/// position at which decoding failed.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed frame at byte {offset}: {kind}")]
pub struct MalformedFrame {
    pub offset: usize,
    pub kind: MalformedKind,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn blob(&mut self, bytes: &[u8]) {
        let len = u32::try_from(bytes.len()).expect("blob longer than u32::MAX bytes");
        self.u32(len);
        self.buf.extend_from_slice(bytes);
    }
    fn remote_ref(&mut self, r: &RemoteRef) {
        self.u64(r.agent.0);
        self.u64(r.object);
    }
    fn slot(&mut self, s: &ResultSlot) {
        self.u64(s.agent.0);
        self.u64(s.slot);
    }
    fn guard(&mut self, g: &GuardRef) {
        self.u64(g.agent.0);
        self.u64(g.guard);
    }
    fn params(&mut self, params: &[Param]) {
        let count = u16::try_from(params.len()).expect("more than u16::MAX parameters");
        self.u16(count);
        for p in params {
            match &p.mode {
                ParamMode::ByValue => self.u8(MODE_BY_VALUE),
                ParamMode::ByReference { writeback } => {
                    self.u8(MODE_BY_REFERENCE);
                    self.slot(writeback);
                }
            }
            self.blob(&p.payload);
        }
    }
}

/// Canonical encoding of an envelope (without the frame length prefix).
pub fn encode(envelope: &Envelope) -> Vec<u8> {
    let mut w = Writer { buf: Vec::with_capacity(64) };
    w.u16(envelope.version);
    w.u64(envelope.src.0);
    w.u64(envelope.dst.0);
    let instr = &envelope.instruction;
    w.u8(instr.tag());
    match instr {
        Instruction::Construct { kind, result, guard, params } => {
            w.u32(kind.0);
            w.slot(result);
            w.guard(guard);
            w.params(params);
        }
        Instruction::Invoke { target, method, result, guard, params } => {
            w.remote_ref(target);
            w.u32(method.0);
            w.slot(result);
            w.guard(guard);
            w.params(params);
        }
        Instruction::WriteResult { slot, payload } => {
            w.slot(slot);
            w.blob(payload);
        }
        Instruction::ReleaseGuard { guard } => w.guard(guard),
        Instruction::Destroy { target, guard } => {
            w.remote_ref(target);
            w.guard(guard);
        }
        Instruction::CopyBlock { target, offset, payload, guard } => {
            w.remote_ref(target);
            w.u64(*offset);
            w.blob(payload);
            w.guard(guard);
        }
        Instruction::ReadBlock { target, offset, length, result, guard } => {
            w.remote_ref(target);
            w.u64(*offset);
            w.u64(*length);
            w.slot(result);
            w.guard(guard);
        }
    }
    w.buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail(&self, offset: usize, kind: MalformedKind) -> MalformedFrame {
        MalformedFrame { offset, kind }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], MalformedFrame> {
        let remaining = self.buf.len() - self.pos;
        if remaining < n {
            return Err(self.fail(self.pos, MalformedKind::Truncated { needed: n - remaining }));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, MalformedFrame> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, MalformedFrame> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, MalformedFrame> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, MalformedFrame> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn blob(&mut self) -> Result<Vec<u8>, MalformedFrame> {
        let len = self.u32()? as usize;
        Ok(self.take(len)?.to_vec())
    }
    fn remote_ref(&mut self) -> Result<RemoteRef, MalformedFrame> {
        Ok(RemoteRef { agent: AgentId(self.u64()?), object: self.u64()? })
    }
    fn slot(&mut self) -> Result<ResultSlot, MalformedFrame> {
        Ok(ResultSlot { agent: AgentId(self.u64()?), slot: self.u64()? })
    }
    fn guard(&mut self) -> Result<GuardRef, MalformedFrame> {
        let at = self.pos;
        let g = GuardRef { agent: AgentId(self.u64()?), guard: self.u64()? };
        if g.agent.is_registry() {
            return Err(self.fail(at, MalformedKind::RegistryGuard));
        }
        Ok(g)
    }
    fn params(&mut self) -> Result<Vec<Param>, MalformedFrame> {
        let count = self.u16()? as usize;
        let mut params = Vec::with_capacity(count.min(256));
        for _ in 0..count {
            let at = self.pos;
            let mode = match self.u8()? {
                MODE_BY_VALUE => ParamMode::ByValue,
                MODE_BY_REFERENCE => ParamMode::ByReference { writeback: self.slot()? },
                other => return Err(self.fail(at, MalformedKind::UnknownParamMode(other))),
            };
            params.push(Param { mode, payload: self.blob()? });
        }
        Ok(params)
    }
}

/// Decodes one envelope, consuming the whole input.
pub fn decode(bytes: &[u8]) -> Result<Envelope, MalformedFrame> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let version = r.u16()?;
    if version != WIRE_VERSION {
        return Err(r.fail(0, MalformedKind::UnsupportedVersion(version)));
    }
    let src = AgentId(r.u64()?);
    let dst = AgentId(r.u64()?);
    let tag_at = r.pos;
    let tag = r.u8()?;
    let instruction = match tag {
        TAG_CONSTRUCT => Instruction::Construct {
            kind: KindId(r.u32()?),
            result: r.slot()?,
            guard: r.guard()?,
            params: r.params()?,
        },
        TAG_INVOKE => Instruction::Invoke {
            target: r.remote_ref()?,
            method: MethodId(r.u32()?),
            result: r.slot()?,
            guard: r.guard()?,
            params: r.params()?,
        },
        TAG_WRITE_RESULT => Instruction::WriteResult { slot: r.slot()?, payload: r.blob()? },
        TAG_RELEASE_GUARD => Instruction::ReleaseGuard { guard: r.guard()? },
        TAG_DESTROY => Instruction::Destroy { target: r.remote_ref()?, guard: r.guard()? },
        TAG_COPY_BLOCK => Instruction::CopyBlock {
            target: r.remote_ref()?,
            offset: r.u64()?,
            payload: r.blob()?,
            guard: r.guard()?,
        },
        TAG_READ_BLOCK => Instruction::ReadBlock {
            target: r.remote_ref()?,
            offset: r.u64()?,
            length: r.u64()?,
            result: r.slot()?,
            guard: r.guard()?,
        },
        other => return Err(r.fail(tag_at, MalformedKind::UnknownTag(other))),
    };
    if r.pos != bytes.len() {
        return Err(r.fail(r.pos, MalformedKind::TrailingBytes(bytes.len() - r.pos)));
    }
    Ok(Envelope { version, src, dst, instruction })
}
