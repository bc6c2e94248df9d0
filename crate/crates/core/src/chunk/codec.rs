//! One zstd frame per chunk at a fixed level, with content checksums so
//! corrupted payloads are caught on decompression.

use std::io::Read;

use crate::error::{Error, Result};

pub const COMPRESSION_LEVEL: i32 = 19;

pub fn compress_chunk(raw: &[u8]) -> Vec<u8> {
    let mut c = zstd::bulk::Compressor::new(COMPRESSION_LEVEL).expect("valid zstd level");
    c.include_checksum(true).expect("checksum flag");
    c.include_contentsize(true).expect("content size flag");
    c.compress(raw).expect("in-memory compression cannot fail")
}

/// Inflates a frame that must decode to exactly `expected_len` bytes. The
/// output buffer only grows with data actually decoded, so a corrupted size
/// field cannot trigger a huge allocation.
pub fn decompress_chunk(compressed: &[u8], expected_len: u64) -> Result<Vec<u8>> {
    match zstd::zstd_safe::get_frame_content_size(compressed) {
        Ok(Some(n)) if n == expected_len => {}
        Ok(Some(n)) => return Err(Error::Corruption(format!("frame declares {n} bytes, expected {expected_len}"))),
        _ => return Err(Error::Corruption("frame lacks a valid content size".into())),
    }
    if zstd::zstd_safe::find_frame_compressed_size(compressed) != Ok(compressed.len()) {
        return Err(Error::Corruption("payload is not exactly one zstd frame".into()));
    }
    let corrupt = |e: std::io::Error| Error::Corruption(format!("zstd: {e}"));
    let decoder = zstd::stream::read::Decoder::with_buffer(compressed).map_err(corrupt)?.single_frame();
    let initial = expected_len.min(compressed.len() as u64 * 16 + 4096) as usize;
    let mut out = Vec::with_capacity(initial);
    decoder.take(expected_len.saturating_add(1)).read_to_end(&mut out).map_err(corrupt)?;
    if out.len() as u64 != expected_len {
        return Err(Error::Corruption(format!("chunk inflated to {} bytes, expected {expected_len}", out.len())));
    }
    Ok(out)
}
