//! Result-slot payloads: one status byte, then either the value bytes or an
//! encoded [`ErrorPayload`].

use crate::value::{from_bytes, to_bytes};
use serde::{Deserialize, Serialize};
use std::fmt;

const STATUS_OK: u8 = 0;
const STATUS_ERR: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    UnknownKind,
    UnknownObject,
    UnknownMethod,
    NoBlockAccess,
    OutOfRange,
    Application,
    Panic,
    Transport,
    Codec,
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ErrorCode::UnknownKind => "unknown kind",
            ErrorCode::UnknownObject => "unknown object",
            ErrorCode::UnknownMethod => "unknown method",
            ErrorCode::NoBlockAccess => "no block access",
            ErrorCode::OutOfRange => "out of range",
            ErrorCode::Application => "application error",
            ErrorCode::Panic => "method panicked",
            ErrorCode::Transport => "transport error",
            ErrorCode::Codec => "codec error",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: ErrorCode,
    pub message: String,
}

pub fn encode_ok(value: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(value.len() + 1);
    out.push(STATUS_OK);
    out.extend_from_slice(value);
    out
}

pub fn encode_err(code: ErrorCode, message: impl Into<String>) -> Vec<u8> {
    let mut out = vec![STATUS_ERR];
    out.extend(to_bytes(&ErrorPayload { code, message: message.into() }));
    out
}

pub fn decode(payload: &[u8]) -> Result<&[u8], ErrorPayload> {
    match payload.split_first() {
        Some((&STATUS_OK, rest)) => Ok(rest),
        Some((&STATUS_ERR, rest)) => Err(from_bytes(rest).unwrap_or_else(|e| ErrorPayload {
            code: ErrorCode::Codec,
            message: format!("undecodable error payload: {e}"),
        })),
        _ => Err(ErrorPayload { code: ErrorCode::Codec, message: "result payload has no status byte".into() }),
    }
}
