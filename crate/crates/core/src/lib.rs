//! Distributed object runtime.
//!
//! Agents are virtual hosts that own objects and execute IR instructions
//! sent to them. Applications construct objects on remote agents, invoke
//! their methods and receive implicit futures; scopes and barriers order
//! the resulting parallel work.
//!
//! ```no_run
//! use parobj_core::prelude::*;
//!
//! let cluster = Cluster::spawn(ClusterConfig::new(4, TransportKind::InProc), KindRegistry::new()).unwrap();
//! let sum = cluster
//!     .run(|ctx| {
//!         let arr = RemoteArray::allocate(ctx, AgentId(2), 16).get()?;
//!         arr.set(ctx, 3, 1.5).wait()?;
//!         arr.get(ctx, 3).get()
//!     })
//!     .unwrap()
//!     .unwrap();
//! assert_eq!(sum, 1.5);
//! cluster.shutdown();
//! ```

pub mod analysis;
pub mod api;
pub mod apps;
pub mod runtime;
pub mod scenarios;
pub mod transport;
pub mod value;
pub mod wire;

pub mod prelude {
    pub use crate::api::{ByRef, Ctx, ExecMode, Future, Params, RemoteArray, RemoteError, Target};
    pub use crate::runtime::{
        AppError, Args, Cluster, ClusterConfig, ClusterReport, ErrorCode, KindDescriptor, KindRegistry, RuntimeConfig,
    };
    pub use crate::transport::{AgentAddress, TransportKind};
    pub use crate::wire::{AgentId, KindId, MethodId, RemoteRef};
}
