//! Object kinds: hand-registered constructors, methods and block accessors.

use crate::api::Ctx;
use crate::value::{from_bytes, to_bytes, CodecError};
use crate::wire::{KindId, MethodId, Param, ParamMode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::any::Any;
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

use super::outcome::ErrorCode;

/// Error raised by application code running inside a remote method. It is
/// carried back to the caller as an error payload.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{code}: {message}")]
pub struct AppError {
    pub code: ErrorCode,
    pub message: String,
}

impl AppError {
    pub fn new(message: impl Into<String>) -> Self {
        AppError { code: ErrorCode::Application, message: message.into() }
    }

    pub fn with_code(code: ErrorCode, message: impl Into<String>) -> Self {
        AppError { code, message: message.into() }
    }

    pub fn out_of_range(message: impl Into<String>) -> Self {
        AppError::with_code(ErrorCode::OutOfRange, message)
    }
}

impl From<CodecError> for AppError {
    fn from(e: CodecError) -> Self {
        AppError::with_code(ErrorCode::Codec, e.0)
    }
}

impl From<crate::api::RemoteError> for AppError {
    fn from(e: crate::api::RemoteError) -> Self {
        match e {
            crate::api::RemoteError::Remote(p) => AppError { code: p.code, message: p.message },
            other => AppError::new(other.to_string()),
        }
    }
}

impl From<String> for AppError {
    fn from(message: String) -> Self {
        AppError::new(message)
    }
}

impl From<&str> for AppError {
    fn from(message: &str) -> Self {
        AppError::new(message)
    }
}

/// Decoded parameter list as seen by the executing agent.
#[derive(Debug, Clone, Default)]
pub struct Args {
    params: Vec<Param>,
}

impl Args {
    pub fn new(params: Vec<Param>) -> Self {
        Args { params }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn raw(&self, i: usize) -> Result<&[u8], AppError> {
        self.params
            .get(i)
            .map(|p| p.payload.as_slice())
            .ok_or_else(|| AppError::new(format!("missing parameter {i} (got {})", self.params.len())))
    }

    pub fn get<T: DeserializeOwned>(&self, i: usize) -> Result<T, AppError> {
        Ok(from_bytes(self.raw(i)?)?)
    }

    pub fn is_by_reference(&self, i: usize) -> bool {
        matches!(self.params.get(i).map(|p| p.mode), Some(ParamMode::ByReference { .. }))
    }

    /// Replaces a by-reference parameter; the new value is written back to
    /// the caller after the method returns.
    pub fn set<T: Serialize>(&mut self, i: usize, value: &T) -> Result<(), AppError> {
        match self.params.get_mut(i) {
            Some(p) if matches!(p.mode, ParamMode::ByReference { .. }) => {
                p.payload = to_bytes(value);
                Ok(())
            }
            Some(_) => Err(AppError::new(format!("parameter {i} is passed by value"))),
            None => Err(AppError::new(format!("missing parameter {i}"))),
        }
    }

    pub(crate) fn into_params(self) -> Vec<Param> {
        self.params
    }
}

pub type Instance = Box<dyn Any + Send + Sync>;

type CtorFn = dyn Fn(&Ctx, &mut Args) -> Result<Instance, AppError> + Send + Sync;
type ExclusiveFn = dyn Fn(&mut (dyn Any + Send + Sync), &Ctx, &mut Args) -> Result<Vec<u8>, AppError> + Send + Sync;
type SharedFn = dyn Fn(&(dyn Any + Send + Sync), &Ctx, &mut Args) -> Result<Vec<u8>, AppError> + Send + Sync;
type ReadBlockFn = dyn Fn(&(dyn Any + Send + Sync), u64, u64) -> Result<Vec<u8>, AppError> + Send + Sync;
type WriteBlockFn = dyn Fn(&mut (dyn Any + Send + Sync), u64, &[u8]) -> Result<(), AppError> + Send + Sync;

/// How a method gets at its object. Exclusive methods run under the
/// object's write lock (one at a time per object); shared methods hold a
/// read lock and may run concurrently with each other.
pub(crate) enum MethodImpl {
    Exclusive(Box<ExclusiveFn>),
    Shared(Box<SharedFn>),
}

pub(crate) struct BlockAccess {
    pub read: Box<ReadBlockFn>,
    pub write: Box<WriteBlockFn>,
}

pub struct KindDescriptor {
    pub id: KindId,
    pub name: String,
    pub(crate) constructor: Box<CtorFn>,
    pub(crate) methods: HashMap<MethodId, MethodImpl>,
    pub(crate) block: Option<BlockAccess>,
}

impl fmt::Debug for KindDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut methods: Vec<u32> = self.methods.keys().map(|m| m.0).collect();
        methods.sort_unstable();
        f.debug_struct("KindDescriptor")
            .field("id", &self.id)
            .field("name", &self.name)
            .field("methods", &methods)
            .field("block", &self.block.is_some())
            .finish()
    }
}

impl KindDescriptor {
    pub fn builder<T, F>(id: KindId, name: impl Into<String>, constructor: F) -> KindBuilder<T>
    where
        T: Send + Sync + 'static,
        F: Fn(&Ctx, &mut Args) -> Result<T, AppError> + Send + Sync + 'static,
    {
        KindBuilder {
            desc: KindDescriptor {
                id,
                name: name.into(),
                constructor: Box::new(move |ctx, args| Ok(Box::new(constructor(ctx, args)?) as Instance)),
                methods: HashMap::new(),
                block: None,
            },
            _marker: std::marker::PhantomData,
        }
    }

    pub fn has_method(&self, method: MethodId) -> bool {
        self.methods.contains_key(&method)
    }

    /// True if some method may run concurrently with others on one object.
    pub fn is_concurrent(&self) -> bool {
        self.methods.values().any(|m| matches!(m, MethodImpl::Shared(_)))
    }
}

pub struct KindBuilder<T> {
    desc: KindDescriptor,
    _marker: std::marker::PhantomData<fn() -> T>,
}

fn downcast_mut<T: 'static>(obj: &mut (dyn Any + Send + Sync)) -> Result<&mut T, AppError> {
    obj.downcast_mut::<T>().ok_or_else(|| AppError::new("object has an unexpected type"))
}

fn downcast_ref<T: 'static>(obj: &(dyn Any + Send + Sync)) -> Result<&T, AppError> {
    obj.downcast_ref::<T>().ok_or_else(|| AppError::new("object has an unexpected type"))
}

impl<T: Send + Sync + 'static> KindBuilder<T> {
    pub fn method<R, F>(mut self, id: MethodId, f: F) -> Self
    where
        R: Serialize,
        F: Fn(&mut T, &Ctx, &mut Args) -> Result<R, AppError> + Send + Sync + 'static,
    {
        let wrapped = move |obj: &mut (dyn Any + Send + Sync), ctx: &Ctx, args: &mut Args| {
            f(downcast_mut::<T>(obj)?, ctx, args).map(|r| to_bytes(&r))
        };
        self.desc.methods.insert(id, MethodImpl::Exclusive(Box::new(wrapped)));
        self
    }

    pub fn shared_method<R, F>(mut self, id: MethodId, f: F) -> Self
    where
        R: Serialize,
        F: Fn(&T, &Ctx, &mut Args) -> Result<R, AppError> + Send + Sync + 'static,
    {
        let wrapped = move |obj: &(dyn Any + Send + Sync), ctx: &Ctx, args: &mut Args| {
            f(downcast_ref::<T>(obj)?, ctx, args).map(|r| to_bytes(&r))
        };
        self.desc.methods.insert(id, MethodImpl::Shared(Box::new(wrapped)));
        self
    }

    /// Raw byte access used by `CopyBlock` / `ReadBlock`.
    pub fn block_access<R, W>(mut self, read: R, write: W) -> Self
    where
        R: Fn(&T, u64, u64) -> Result<Vec<u8>, AppError> + Send + Sync + 'static,
        W: Fn(&mut T, u64, &[u8]) -> Result<(), AppError> + Send + Sync + 'static,
    {
        self.desc.block = Some(BlockAccess {
            read: Box::new(move |obj, off, len| read(downcast_ref::<T>(obj)?, off, len)),
            write: Box::new(move |obj, off, bytes| write(downcast_mut::<T>(obj)?, off, bytes)),
        });
        self
    }

    pub fn build(self) -> KindDescriptor {
        self.desc
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("kind id {0} already registered")]
    DuplicateKind(u32),
}

/// The set of kinds known to an agent. Every agent of a cluster must be
/// started with the same registry.
#[derive(Default)]
pub struct KindRegistry {
    kinds: HashMap<KindId, Arc<KindDescriptor>>,
}

impl fmt::Debug for KindRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.kinds.values()).finish()
    }
}

impl KindRegistry {
    /// An empty registry with the runtime's builtin kinds.
    pub fn new() -> Self {
        let mut reg = KindRegistry { kinds: HashMap::new() };
        for k in super::builtin::kinds() {
            reg.register(k).expect("builtin kind ids are distinct");
        }
        reg
    }

    pub fn register(&mut self, descriptor: KindDescriptor) -> Result<KindId, RegistryError> {
        let id = descriptor.id;
        if self.kinds.contains_key(&id) {
            return Err(RegistryError::DuplicateKind(id.0));
        }
        self.kinds.insert(id, Arc::new(descriptor));
        Ok(id)
    }

    pub fn get(&self, id: KindId) -> Option<&Arc<KindDescriptor>> {
        self.kinds.get(&id)
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{AgentId, ResultSlot};

    struct Counter(u64);

    fn counter_kind(id: u32) -> KindDescriptor {
        KindDescriptor::builder(KindId(id), "Counter", |_, args| Ok(Counter(args.get(0)?)))
            .method(MethodId(1), |c: &mut Counter, _, _| {
                c.0 += 1;
                Ok(c.0)
            })
            .build()
    }

    #[test]
    fn duplicate_kind_rejected() {
        let mut reg = KindRegistry::new();
        reg.register(counter_kind(10)).unwrap();
        assert_eq!(reg.register(counter_kind(10)).unwrap_err(), RegistryError::DuplicateKind(10));
        assert!(reg.get(KindId(10)).unwrap().has_method(MethodId(1)));
        assert!(!reg.get(KindId(10)).unwrap().has_method(MethodId(2)));
        assert!(!reg.get(KindId(10)).unwrap().is_concurrent());
    }

    #[test]
    fn by_value_parameters_cannot_be_set() {
        let slot = ResultSlot { agent: AgentId(1), slot: 3 };
        let mut args = Args::new(vec![Param::by_value(to_bytes(&1u32)), Param::by_reference(slot, to_bytes(&2u32))]);
        assert!(args.set(0, &5u32).is_err());
        args.set(1, &7u32).unwrap();
        assert_eq!(args.get::<u32>(1).unwrap(), 7);
        assert!(args.get::<u32>(2).is_err());
    }
}
