//! Length-prefixed frames: four ASCII decimal digits giving the payload
//! length in bytes, then that many bytes of UTF-8.

use std::io::{self, Read, Write};

use super::SyncError;

pub const MAX_PAYLOAD: usize = 9999;
const PREFIX: usize = 4;

pub fn encode_frame(payload: &str) -> Result<Vec<u8>, SyncError> {
    if payload.len() > MAX_PAYLOAD {
        return Err(SyncError::FrameTooLarge(payload.len()));
    }
    let mut out = Vec::with_capacity(PREFIX + payload.len());
    out.extend_from_slice(format!("{:04}", payload.len()).as_bytes());
    out.extend_from_slice(payload.as_bytes());
    Ok(out)
}

pub fn write_frame<W: Write + ?Sized>(w: &mut W, payload: &str) -> Result<(), SyncError> {
    w.write_all(&encode_frame(payload)?)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame. `Ok(None)` on a clean end of stream before a prefix.
pub fn read_frame<R: Read + ?Sized>(r: &mut R) -> Result<Option<String>, SyncError> {
    let mut prefix = [0u8; PREFIX];
    let mut filled = 0;
    while filled < PREFIX {
        match r.read(&mut prefix[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(SyncError::Malformed("truncated length prefix".into())),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    if !prefix.iter().all(u8::is_ascii_digit) {
        return Err(SyncError::Malformed(format!(
            "length prefix {:?} is not four decimal digits",
            String::from_utf8_lossy(&prefix)
        )));
    }
    let len: usize = std::str::from_utf8(&prefix)
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => SyncError::Malformed("truncated payload".into()),
        _ => e.into(),
    })?;
    String::from_utf8(payload)
        .map(Some)
        .map_err(|_| SyncError::Malformed("payload is not UTF-8".into()))
}

/// Splits a captured byte stream into frame payloads; stops at the first
/// incomplete or malformed frame.
pub fn split_frames(mut bytes: &[u8]) -> Vec<String> {
    let mut out = Vec::new();
    while let Ok(Some(payload)) = read_frame(&mut bytes) {
        out.push(payload);
    }
    out
}
