//! u32 little-endian length prefix + payload.

use std::io::{self, Read, Write};
use thiserror::Error;

pub const FRAME_HEADER_LEN: usize = 4;

/// Upper bound accepted by [`read_frame`]; protects against hostile headers.
pub const MAX_FRAME_LEN: usize = 1 << 30;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("stream closed mid-frame after {read} of {expected} bytes")]
    Truncated { read: usize, expected: usize },
    #[error("frame length {0} exceeds the {MAX_FRAME_LEN} byte limit")]
    TooLarge(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn encode_frame(payload: &[u8]) -> Vec<u8> {
    let len = u32::try_from(payload.len()).expect("frame payload must be shorter than 2^32 bytes");
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN + payload.len());
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(payload);
    out
}

pub fn write_frame<W: Write>(mut w: W, payload: &[u8]) -> io::Result<()> {
    let len = u32::try_from(payload.len())
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame payload too long"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(payload)?;
    Ok(())
}

/// Reads exactly one frame. Returns `Ok(None)` when the stream ends cleanly
/// on a frame boundary.
pub fn read_frame<R: Read>(mut r: R) -> Result<Option<Vec<u8>>, FrameError> {
    let mut header = [0u8; FRAME_HEADER_LEN];
    let got = read_full(&mut r, &mut header)?;
    if got == 0 {
        return Ok(None);
    }
    if got < FRAME_HEADER_LEN {
        return Err(FrameError::Truncated { read: got, expected: FRAME_HEADER_LEN });
    }
    let len = u32::from_le_bytes(header) as usize;
    if len > MAX_FRAME_LEN {
        return Err(FrameError::TooLarge(len));
    }
    let mut payload = vec![0u8; len];
    let got = read_full(&mut r, &mut payload)?;
    if got < len {
        return Err(FrameError::Truncated { read: FRAME_HEADER_LEN + got, expected: FRAME_HEADER_LEN + len });
    }
    Ok(Some(payload))
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn empty_payload_frame() {
        assert_eq!(encode_frame(&[]), vec![0, 0, 0, 0]);
    }

    #[test]
    fn frame_of_35_bytes() {
        let frame = encode_frame(&[7u8; 35]);
        assert_eq!(frame.len(), 39);
        assert_eq!(&frame[..4], &[0x23, 0, 0, 0]);
    }

    #[test]
    fn back_to_back_frames_keep_boundaries() {
        let mut stream = Vec::new();
        write_frame(&mut stream, b"first").unwrap();
        write_frame(&mut stream, b"").unwrap();
        write_frame(&mut stream, b"third!").unwrap();
        let mut cur = Cursor::new(stream);
        assert_eq!(read_frame(&mut cur).unwrap().unwrap(), b"first");
        assert_eq!(read_frame(&mut cur).unwrap().unwrap(), b"");
        assert_eq!(read_frame(&mut cur).unwrap().unwrap(), b"third!");
        assert!(read_frame(&mut cur).unwrap().is_none());
    }

    #[test]
    fn closed_mid_frame_is_truncated() {
        let frame = encode_frame(b"hello world");
        let err = read_frame(Cursor::new(&frame[..8])).unwrap_err();
        assert!(matches!(err, FrameError::Truncated { read: 8, expected: 15 }), "{err}");
        let err = read_frame(Cursor::new(&frame[..2])).unwrap_err();
        assert!(matches!(err, FrameError::Truncated { read: 2, expected: 4 }));
    }

    #[test]
    fn oversized_header_rejected() {
        let header = u32::MAX.to_le_bytes();
        assert!(matches!(read_frame(Cursor::new(header)).unwrap_err(), FrameError::TooLarge(_)));
    }
}
