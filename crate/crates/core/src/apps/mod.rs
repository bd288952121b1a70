//! Applications built on the object API, each with a sequential oracle.

pub mod bfs;
pub mod broadcast;
pub mod fft;
pub mod mapreduce;

use crate::runtime::{KindRegistry, RegistryError};

/// Adds every application kind to `kinds`.
pub fn register_all(kinds: &mut KindRegistry) -> Result<(), RegistryError> {
    mapreduce::register(kinds)?;
    bfs::register(kinds)?;
    fft::register(kinds)?;
    Ok(())
}

/// A registry with the builtin and all application kinds.
pub fn registry() -> KindRegistry {
    let mut kinds = KindRegistry::new();
    register_all(&mut kinds).expect("application kind ids are distinct");
    kinds
}
