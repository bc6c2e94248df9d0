//! Length-prefixed binary framing shared by server and client:
//! `[u32 payload length][u8 type][payload]`, little-endian throughout.

use std::io::{self, Read, Write};
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::chunk::container::Reader;
use crate::chunk::{Chunk, ChunkDescriptor, Container, Header};
use crate::error::{Error, Result};

pub const PROTOCOL_VERSION: u16 = 1;
pub const MAX_TEXT_BYTES: usize = 4096;
/// Frames above this size are treated as a broken stream.
pub const MAX_FRAME_BYTES: u32 = 1 << 30;

pub mod frame_type {
    pub const HELLO: u8 = 0x01;
    pub const OBJECT_INFO: u8 = 0x02;
    pub const GEOMETRY: u8 = 0x03;
    pub const CHUNK: u8 = 0x04;
    pub const ACK: u8 = 0x05;
    pub const ANNOTATION_ADD: u8 = 0x06;
    pub const ANNOTATION_EVENT: u8 = 0x07;
    pub const ANNOTATION_SYNC: u8 = 0x08;
    pub const ERROR: u8 = 0x0F;

    pub fn is_known(t: u8) -> bool {
        matches!(t, 0x01..=0x08 | 0x0F)
    }
}

/// Codes carried by ERROR frames.
pub mod error_code {
    pub const VERSION_MISMATCH: u16 = 1;
    pub const UNKNOWN_FRAME: u16 = 2;
    pub const MALFORMED: u16 = 3;
    pub const BAD_POSITION: u16 = 4;
    pub const BAD_TEXT: u16 = 5;
    pub const UNEXPECTED: u16 = 6;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnnotationKind {
    Marker = 0,
    Text = 1,
    StrokePoint = 2,
}

impl AnnotationKind {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(AnnotationKind::Marker),
            1 => Some(AnnotationKind::Text),
            2 => Some(AnnotationKind::StrokePoint),
            _ => None,
        }
    }
}

impl std::str::FromStr for AnnotationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "marker" => Ok(AnnotationKind::Marker),
            "text" => Ok(AnnotationKind::Text),
            "stroke" | "stroke-point" => Ok(AnnotationKind::StrokePoint),
            _ => Err(Error::invalid(format!("unknown annotation kind {s:?}"))),
        }
    }
}

/// What a client submits.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationBody {
    pub kind: AnnotationKind,
    pub position: [f32; 3],
    pub stroke_id: u32,
    pub text: String,
}

impl AnnotationBody {
    pub fn marker(position: [f32; 3]) -> Self {
        AnnotationBody { kind: AnnotationKind::Marker, position, stroke_id: 0, text: String::new() }
    }

    pub fn text(position: [f32; 3], text: impl Into<String>) -> Self {
        AnnotationBody { kind: AnnotationKind::Text, position, stroke_id: 0, text: text.into() }
    }

    pub fn stroke_point(position: [f32; 3], stroke_id: u32) -> Self {
        AnnotationBody { kind: AnnotationKind::StrokePoint, position, stroke_id, text: String::new() }
    }

    /// Checks semantic constraints, returning the error code that applies.
    pub fn check(&self) -> std::result::Result<(), (u16, String)> {
        if self.position.iter().any(|p| !p.is_finite() || !(0.0..=1.0).contains(p)) {
            return Err((error_code::BAD_POSITION, format!("position {:?} outside the unit cube", self.position)));
        }
        match self.kind {
            AnnotationKind::Text if self.text.is_empty() => Err((error_code::BAD_TEXT, "text annotation without text".into())),
            AnnotationKind::Text if self.text.len() > MAX_TEXT_BYTES => {
                Err((error_code::BAD_TEXT, format!("text of {} bytes exceeds {MAX_TEXT_BYTES}", self.text.len())))
            }
            AnnotationKind::Marker | AnnotationKind::StrokePoint if !self.text.is_empty() => {
                Err((error_code::BAD_TEXT, "only text annotations carry text".into()))
            }
            AnnotationKind::Marker | AnnotationKind::Text if self.stroke_id != 0 => {
                Err((error_code::MALFORMED, "only stroke points carry a stroke id".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|(_, m)| Error::InvalidInput(m))
    }

    fn encode(&self, out: &mut Vec<u8>) {
        out.push(self.kind as u8);
        for p in self.position {
            out.write_f32::<LittleEndian>(p).unwrap();
        }
        out.write_u32::<LittleEndian>(self.stroke_id).unwrap();
        let text = &self.text.as_bytes()[..self.text.len().min(u16::MAX as usize)];
        out.write_u16::<LittleEndian>(text.len() as u16).unwrap();
        out.extend_from_slice(text);
    }

    fn read(r: &mut Reader<'_>) -> Result<Self> {
        let kind = r.u8()?;
        let kind = AnnotationKind::from_u8(kind).ok_or_else(|| Error::Protocol(format!("unknown annotation kind {kind}")))?;
        let mut position = [0f32; 3];
        for p in &mut position {
            *p = f32::from_bits(r.u32()?);
        }
        let stroke_id = r.u32()?;
        let len = r.u16()? as usize;
        let text = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::Protocol("annotation text is not UTF-8".into()))?;
        Ok(AnnotationBody { kind, position, stroke_id, text })
    }
}

/// A stored annotation with its server-assigned sequence number.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub sequence: u64,
    pub author: u32,
    pub body: AnnotationBody,
}

impl Annotation {
    pub fn encode(&self, out: &mut Vec<u8>) {
        out.write_u64::<LittleEndian>(self.sequence).unwrap();
        out.write_u32::<LittleEndian>(self.author).unwrap();
        self.body.encode(out);
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self> {
        Ok(Annotation { sequence: r.u64()?, author: r.u32()?, body: AnnotationBody::read(r)? })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let a = Annotation::read(&mut r)?;
        finish(r, "annotation")?;
        Ok(a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    Hello { version: u16 },
    /// Container header followed by the id the server gave this session.
    ObjectInfo { header: Header, session: u32 },
    Geometry(Arc<[u8]>),
    Chunk(Chunk),
    Ack { count: u32 },
    AnnotationAdd(AnnotationBody),
    AnnotationEvent(Annotation),
    AnnotationSync(Vec<Annotation>),
    Error { code: u16, message: String },
}

fn finish(mut r: Reader<'_>, what: &str) -> Result<()> {
    if r.rest().is_empty() {
        Ok(())
    } else {
        Err(Error::Protocol(format!("trailing bytes in {what}")))
    }
}

fn malformed(e: Error) -> Error {
    match e {
        Error::Bounds { .. } | Error::Format(_) => Error::Protocol(format!("malformed frame: {e}")),
        other => other,
    }
}

impl Frame {
    pub fn type_byte(&self) -> u8 {
        use frame_type::*;
        match self {
            Frame::Hello { .. } => HELLO,
            Frame::ObjectInfo { .. } => OBJECT_INFO,
            Frame::Geometry(_) => GEOMETRY,
            Frame::Chunk(_) => CHUNK,
            Frame::Ack { .. } => ACK,
            Frame::AnnotationAdd(_) => ANNOTATION_ADD,
            Frame::AnnotationEvent(_) => ANNOTATION_EVENT,
            Frame::AnnotationSync(_) => ANNOTATION_SYNC,
            Frame::Error { .. } => ERROR,
        }
    }

    pub fn encode_payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Frame::Hello { version } => out.write_u16::<LittleEndian>(*version).unwrap(),
            Frame::ObjectInfo { header, session } => {
                header.encode(&mut out);
                out.write_u32::<LittleEndian>(*session).unwrap();
            }
            Frame::Geometry(blob) => out.extend_from_slice(blob),
            Frame::Chunk(chunk) => {
                chunk.descriptor.encode(&mut out);
                out.extend_from_slice(&chunk.payload);
            }
            Frame::Ack { count } => out.write_u32::<LittleEndian>(*count).unwrap(),
            Frame::AnnotationAdd(body) => body.encode(&mut out),
            Frame::AnnotationEvent(a) => a.encode(&mut out),
            Frame::AnnotationSync(list) => {
                out.write_u32::<LittleEndian>(list.len() as u32).unwrap();
                for a in list {
                    a.encode(&mut out);
                }
            }
            Frame::Error { code, message } => {
                out.write_u16::<LittleEndian>(*code).unwrap();
                out.extend_from_slice(message.as_bytes());
            }
        }
        out
    }

    /// Parses a payload of a known frame type. Malformed payloads give
    /// protocol errors; unknown types give protocol violations.
    pub fn decode(ty: u8, payload: &[u8]) -> Result<Frame> {
        use frame_type::*;
        let mut r = Reader::new(payload);
        let frame = match ty {
            HELLO => Frame::Hello { version: r.u16().map_err(malformed)? },
            OBJECT_INFO => {
                let header = Header::read(&mut r).map_err(malformed)?;
                Frame::ObjectInfo { header, session: r.u32().map_err(malformed)? }
            }
            GEOMETRY => Frame::Geometry(r.rest().into()),
            CHUNK => {
                let descriptor = ChunkDescriptor::decode(r.take(ChunkDescriptor::ENCODED_LEN).map_err(malformed)?).map_err(malformed)?;
                let payload: Arc<[u8]> = r.rest().into();
                if payload.len() as u64 != descriptor.compressed {
                    return Err(Error::Protocol(format!("{} frame carries {} of {} bytes", descriptor.key, payload.len(), descriptor.compressed)));
                }
                Frame::Chunk(Chunk { descriptor, payload })
            }
            ACK => Frame::Ack { count: r.u32().map_err(malformed)? },
            ANNOTATION_ADD => Frame::AnnotationAdd(AnnotationBody::read(&mut r).map_err(malformed)?),
            ANNOTATION_EVENT => Frame::AnnotationEvent(Annotation::read(&mut r).map_err(malformed)?),
            ANNOTATION_SYNC => {
                let n = r.u32().map_err(malformed)?;
                let mut list = Vec::with_capacity(n.min(1 << 16) as usize);
                for _ in 0..n {
                    list.push(Annotation::read(&mut r).map_err(malformed)?);
                }
                Frame::AnnotationSync(list)
            }
            ERROR => {
                let code = r.u16().map_err(malformed)?;
                Frame::Error { code, message: String::from_utf8_lossy(r.rest()).into_owned() }
            }
            other => return Err(Error::ProtocolViolation(format!("unknown frame type 0x{other:02x}"))),
        };
        finish(r, "frame")?;
        Ok(frame)
    }
}

pub fn write_frame(w: &mut impl Write, frame: &Frame) -> io::Result<()> {
    let payload = frame.encode_payload();
    w.write_u32::<LittleEndian>(payload.len() as u32)?;
    w.write_u8(frame.type_byte())?;
    w.write_all(&payload)
}

/// Reads one raw frame; `None` on a clean end of stream between frames.
pub fn read_raw_frame(r: &mut impl Read) -> Result<Option<(u8, Vec<u8>)>> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Error::Io(io::ErrorKind::UnexpectedEof.into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_le_bytes(len);
    if len > MAX_FRAME_BYTES {
        return Err(Error::Protocol(format!("frame of {len} bytes exceeds limit")));
    }
    let ty = r.read_u8()?;
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)?;
    Ok(Some((ty, payload)))
}

pub fn read_frame(r: &mut impl Read) -> Result<Option<Frame>> {
    match read_raw_frame(r)? {
        None => Ok(None),
        Some((ty, payload)) => Frame::decode(ty, &payload).map(Some),
    }
}

/// The server-to-client frames a fresh session receives for `container`,
/// with no annotations: OBJECT_INFO, GEOMETRY, an empty sync, every chunk.
pub fn replay_frames(container: &Container, session: u32) -> Vec<Frame> {
    let mut frames = vec![
        Frame::ObjectInfo { header: container.header.clone(), session },
        Frame::Geometry(container.geometry.clone()),
        Frame::AnnotationSync(Vec::new()),
    ];
    frames.extend(container.chunks.iter().cloned().map(Frame::Chunk));
    frames
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunk::ChunkKey;

    fn roundtrip(f: Frame) {
        let mut bytes = Vec::new();
        write_frame(&mut bytes, &f).unwrap();
        assert_eq!(u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize, bytes.len() - 5);
        assert_eq!(bytes[4], f.type_byte());
        let mut r = &bytes[..];
        assert_eq!(read_frame(&mut r).unwrap(), Some(f));
        assert_eq!(read_frame(&mut r).unwrap(), None);
    }

    #[test]
    fn frames_roundtrip() {
        let header = Header {
            d_min: 1,
            d_max: 2,
            k_y: 8,
            k_uv: 4,
            light_res: 2,
            view_res: 3,
            voxel_counts: vec![8, 20],
            geometry_len: 77,
            geometry_crc: 5,
            chunk_count: 12,
        };
        let a = Annotation { sequence: 3, author: 9, body: AnnotationBody::text([0.1, 0.2, 0.3], "héllo") };
        let chunk = Chunk::compress(ChunkKey::Angular { channel: 1, layer: 0 }, &[1, 2, 3, 4]);
        for f in [
            Frame::Hello { version: 1 },
            Frame::ObjectInfo { header, session: 4 },
            Frame::Geometry(vec![1u8, 2, 3].into()),
            Frame::Chunk(chunk),
            Frame::Ack { count: 2 },
            Frame::AnnotationAdd(AnnotationBody::stroke_point([0.5; 3], 7)),
            Frame::AnnotationEvent(a.clone()),
            Frame::AnnotationSync(vec![a.clone(), a]),
            Frame::AnnotationSync(vec![]),
            Frame::Error { code: 5, message: "nope".into() },
        ] {
            roundtrip(f);
        }
    }

    #[test]
    fn add_body_layout() {
        let f = Frame::AnnotationAdd(AnnotationBody::text([1.0, 0.0, 0.5], "ab"));
        let p = f.encode_payload();
        assert_eq!(p.len(), 1 + 12 + 4 + 2 + 2);
        assert_eq!(p[0], 1);
        assert_eq!(&p[17..19], &[2, 0]);
        assert_eq!(&p[19..], b"ab");
    }

    #[test]
    fn bad_input() {
        assert!(matches!(Frame::decode(0x42, &[]), Err(Error::ProtocolViolation(_))));
        assert!(matches!(Frame::decode(frame_type::HELLO, &[1]), Err(Error::Protocol(_))));
        assert!(matches!(Frame::decode(frame_type::ACK, &[1, 0, 0, 0, 9]), Err(Error::Protocol(_))));
        let mut truncated = Vec::new();
        write_frame(&mut truncated, &Frame::Ack { count: 1 }).unwrap();
        truncated.pop();
        assert!(read_frame(&mut &truncated[..]).is_err());
    }

    #[test]
    fn annotation_checks() {
        assert!(AnnotationBody::marker([0.5; 3]).check().is_ok());
        assert_eq!(AnnotationBody::marker([1.5, 0.0, 0.0]).check().unwrap_err().0, error_code::BAD_POSITION);
        assert_eq!(AnnotationBody::marker([f32::NAN, 0.0, 0.0]).check().unwrap_err().0, error_code::BAD_POSITION);
        assert_eq!(AnnotationBody::text([0.5; 3], "").check().unwrap_err().0, error_code::BAD_TEXT);
        assert_eq!(AnnotationBody::text([0.5; 3], "x".repeat(4097)).check().unwrap_err().0, error_code::BAD_TEXT);
        assert!(AnnotationBody::text([0.5; 3], "x".repeat(4096)).check().is_ok());
        assert_eq!("stroke".parse::<AnnotationKind>().unwrap(), AnnotationKind::StrokePoint);
    }
}
