//! Parameter and result payload codec.
//!
//! The runtime treats payloads as opaque blobs; application values are
//! converted with bincode on either side.

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("payload codec: {0}")]
pub struct CodecError(pub String);

pub fn to_bytes<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    bincode::serialize(value).expect("in-memory bincode serialization does not fail")
}

pub fn from_bytes<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, CodecError> {
    bincode::deserialize(bytes).map_err(|e| CodecError(e.to_string()))
}
