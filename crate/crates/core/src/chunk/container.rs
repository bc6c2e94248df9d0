//! The "OBTF" container: header, chunk table in load order, compressed
//! geometry, then chunk payloads. All integers little-endian.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};
use rayon::prelude::*;

use super::codec::{compress_chunk, decompress_chunk};
use super::order::{build_load_order, ChunkDescriptor, ChunkKey, LoadOrder};
use super::payload::{assemble_tree, build_chunks, Chunk, VOXEL_RECORD};
use crate::btf::dfmf::LAYER_WIDTH;
use crate::error::{Error, Result};
use crate::octree::io::{decode_geometry, encode_geometry};
use crate::octree::{Mesh, OctreeBtf};

pub const MAGIC: &[u8; 4] = b"OBTF";
pub const VERSION: u32 = 1;
const TABLE_ENTRY: usize = ChunkDescriptor::ENCODED_LEN + 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub d_min: u8,
    pub d_max: u8,
    pub k_y: u16,
    pub k_uv: u16,
    pub light_res: u16,
    pub view_res: u16,
    /// Voxels per streamed level, coarsest first.
    pub voxel_counts: Vec<u32>,
    /// Compressed geometry size.
    pub geometry_len: u64,
    /// CRC-32 of the compressed geometry.
    pub geometry_crc: u32,
    pub chunk_count: u32,
}

/// Bounds-checked little-endian reader over a byte slice.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Bounds { offset: self.pos as u64, needed: n as u64 });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(LittleEndian::read_u16(self.take(2)?))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(LittleEndian::read_u32(self.take(4)?))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(LittleEndian::read_u64(self.take(8)?))
    }

    pub(crate) fn rest(&mut self) -> &'a [u8] {
        let out = &self.buf[self.pos..];
        self.pos = self.buf.len();
        out
    }
}

impl Header {
    pub fn level_count(&self) -> usize {
        (self.d_max - self.d_min) as usize + 1
    }

    pub fn components(&self) -> [usize; 3] {
        [self.k_y as usize, self.k_uv as usize, self.k_uv as usize]
    }

    pub fn direction_pairs(&self) -> usize {
        (self.light_res as usize).pow(2) * (self.view_res as usize).pow(2)
    }

    pub fn load_order(&self) -> Result<LoadOrder> {
        build_load_order(self.level_count(), self.k_y as usize, self.k_uv as usize)
    }

    /// Magic, version and header fields.
    pub fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.write_u32::<LittleEndian>(VERSION).unwrap();
        out.push(self.d_min);
        out.push(self.d_max);
        for v in [self.k_y, self.k_uv, self.light_res, self.view_res] {
            out.write_u16::<LittleEndian>(v).unwrap();
        }
        for &c in &self.voxel_counts {
            out.write_u32::<LittleEndian>(c).unwrap();
        }
        out.write_u64::<LittleEndian>(self.geometry_len).unwrap();
        out.write_u32::<LittleEndian>(self.geometry_crc).unwrap();
        out.write_u32::<LittleEndian>(self.chunk_count).unwrap();
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode(&mut out);
        out
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Header> {
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not an OBTF container".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported container version {version}")));
        }
        let d_min = r.u8()?;
        let d_max = r.u8()?;
        if d_min > d_max {
            return Err(Error::Format(format!("d_min {d_min} > d_max {d_max}")));
        }
        let (k_y, k_uv, light_res, view_res) = (r.u16()?, r.u16()?, r.u16()?, r.u16()?);
        let voxel_counts = (0..=(d_max - d_min)).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let header = Header { d_min, d_max, k_y, k_uv, light_res, view_res, voxel_counts, geometry_len: r.u64()?, geometry_crc: r.u32()?, chunk_count: r.u32()? };
        let expected = header.load_order().map_err(|e| Error::Format(e.to_string()))?.len();
        if header.chunk_count as usize != expected {
            return Err(Error::Format(format!("chunk count {} does not match configuration ({expected})", header.chunk_count)));
        }
        if light_res == 0 || view_res == 0 {
            return Err(Error::Format("zero direction-grid resolution".into()));
        }
        Ok(header)
    }

    pub fn decode(bytes: &[u8]) -> Result<(Header, usize)> {
        let mut r = Reader::new(bytes);
        let h = Header::read(&mut r)?;
        Ok((h, r.position()))
    }
}

/// Header, compressed geometry and compressed chunks in load order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Container {
    pub header: Header,
    pub geometry: Arc<[u8]>,
    pub chunks: Vec<Chunk>,
}

impl Container {
    pub fn from_tree(tree: &OctreeBtf, mesh: &Mesh) -> Result<Container> {
        let chunks = build_chunks(tree)?;
        let angular = tree.angular().expect("chunks imply a populated tree");
        let [k_y, k_uv, _] = tree.components();
        let narrow = |v: usize, what: &str| u16::try_from(v).map_err(|_| Error::ResourceLimit(format!("{what} {v}")));
        let geometry: Arc<[u8]> = compress_chunk(&encode_geometry(mesh)).into();
        let header = Header {
            d_min: tree.d_min() as u8,
            d_max: tree.d_max() as u8,
            k_y: narrow(k_y, "k_Y")?,
            k_uv: narrow(k_uv, "k_UV")?,
            light_res: narrow(angular.light_res, "light resolution")?,
            view_res: narrow(angular.view_res, "view resolution")?,
            voxel_counts: (tree.d_min()..=tree.d_max()).map(|d| tree.level(d).len() as u32).collect(),
            geometry_len: geometry.len() as u64,
            geometry_crc: crc32fast::hash(&geometry),
            chunk_count: chunks.len() as u32,
        };
        Ok(Container { header, geometry, chunks })
    }

    pub fn order(&self) -> LoadOrder {
        self.chunks.iter().map(|c| c.descriptor.key).collect()
    }

    /// Serialized container bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.header.encode(&mut out);
        let table_end = out.len() + self.chunks.len() * TABLE_ENTRY;
        let mut offset = (table_end + self.geometry.len()) as u64;
        for c in &self.chunks {
            c.descriptor.encode(&mut out);
            out.write_u64::<LittleEndian>(offset).unwrap();
            offset += c.payload.len() as u64;
        }
        out.extend_from_slice(&self.geometry);
        for c in &self.chunks {
            out.extend_from_slice(&c.payload);
        }
        out
    }

    /// Parses and fully verifies a container, including decompressing every
    /// payload so corruption is caught up front.
    pub fn from_bytes(bytes: &[u8]) -> Result<Container> {
        let mut r = Reader::new(bytes);
        let header = Header::read(&mut r)?;
        let order = header.load_order()?;
        let mut table = Vec::with_capacity(order.len());
        for _ in 0..header.chunk_count {
            let entry = r.take(TABLE_ENTRY)?;
            let d = ChunkDescriptor::decode(entry)?;
            table.push((d, LittleEndian::read_u64(&entry[ChunkDescriptor::ENCODED_LEN..])));
        }
        let keys: Vec<ChunkKey> = table.iter().map(|(d, _)| d.key).collect();
        if keys != order {
            return Err(Error::Corruption("chunk table is not in load order".into()));
        }
        let geometry: Arc<[u8]> = r.take(header.geometry_len as usize)?.into();
        let mut chunks = Vec::with_capacity(table.len());
        for (d, offset) in table {
            if offset != r.position() as u64 {
                return Err(Error::Corruption(format!("{} at offset {offset}, expected {}", d.key, r.position())));
            }
            chunks.push(Chunk { descriptor: d, payload: r.take(d.compressed as usize)?.into() });
        }
        if !r.rest().is_empty() {
            return Err(Error::Corruption("trailing bytes after the last chunk".into()));
        }
        let container = Container { header, geometry, chunks };
        container.verify()?;
        Ok(container)
    }

    /// Decompresses everything and checks sizes against the header.
    pub fn verify(&self) -> Result<()> {
        decode_geometry(&self.decompress_geometry()?).map_err(|e| Error::Corruption(e.to_string()))?;
        let raw = self.raw_payloads()?;
        let ks = self.header.components();
        for (key, bytes) in &raw {
            let expected = match *key {
                ChunkKey::Voxel { level } => self.header.voxel_counts[level as usize] as usize * VOXEL_RECORD,
                ChunkKey::Spatial { level, channel } => self.header.voxel_counts[level as usize] as usize * ks[channel as usize] * 4,
                ChunkKey::Angular { .. } => self.header.direction_pairs() * LAYER_WIDTH * 4,
            };
            if bytes.len() != expected {
                return Err(Error::Corruption(format!("{key} holds {} bytes, header implies {expected}", bytes.len())));
            }
        }
        Ok(())
    }

    pub fn decompress_geometry(&self) -> Result<Vec<u8>> {
        if crc32fast::hash(&self.geometry) != self.header.geometry_crc {
            return Err(Error::Corruption("geometry fails its CRC".into()));
        }
        // The geometry frame carries its content size.
        let size = zstd::zstd_safe::get_frame_content_size(&self.geometry)
            .ok()
            .flatten()
            .ok_or_else(|| Error::Corruption("geometry frame lacks a content size".into()))?;
        decompress_chunk(&self.geometry, size)
    }

    pub fn mesh(&self) -> Result<Mesh> {
        decode_geometry(&self.decompress_geometry()?)
    }

    pub fn raw_payloads(&self) -> Result<HashMap<ChunkKey, Vec<u8>>> {
        self.chunks.par_iter().map(|c| Ok((c.descriptor.key, c.decompress()?))).collect()
    }

    pub fn tree(&self) -> Result<OctreeBtf> {
        assemble_tree(&self.header, &self.raw_payloads()?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Container> {
        Container::from_bytes(&std::fs::read(path)?)
    }
}

pub fn write_container(container: &Container, path: &Path) -> Result<()> {
    container.write(path)
}

pub fn read_container(path: &Path) -> Result<Container> {
    Container::read(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::btf::{synthesize_btf, DirectionGrid};
    use crate::pipeline::{compress_to_container, CompressOptions};

    fn fixture() -> (Container, OctreeBtf) {
        let grid = DirectionGrid::new(2).unwrap();
        let tensor = synthesize_btf(4, &grid, &grid, 3).unwrap();
        let opts = CompressOptions { k_y: 8, k_uv: 4, d_min: 1, d_max: 3 };
        compress_to_container(&tensor, &Mesh::placeholder_sphere(), opts).unwrap()
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let (c, tree) = fixture();
        let bytes = c.to_bytes();
        let back = Container::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.tree().unwrap(), tree);
        assert_eq!(back.mesh().unwrap(), Mesh::placeholder_sphere());
        assert_eq!(c.chunks.len(), 4 * 3 + 2 + 2);
    }

    #[test]
    fn header_counts_match_tree() {
        let (c, tree) = fixture();
        let counts: Vec<u32> = (1..=3).map(|d| tree.level(d).len() as u32).collect();
        assert_eq!(c.header.voxel_counts, counts);
        assert_eq!(c.header.voxel_counts[0], 8);
        let (h, used) = Header::decode(&c.to_bytes()).unwrap();
        assert_eq!(h, c.header);
        assert_eq!(used, 4 + 4 + 2 + 8 + 12 + 8 + 4 + 4);
    }

    #[test]
    fn damaged_files_are_rejected() {
        let (c, _) = fixture();
        let bytes = c.to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Container::from_bytes(&bad), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(Container::from_bytes(&bad), Err(Error::Format(_))));
        assert!(matches!(Container::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Bounds { .. })));
        assert!(matches!(Container::from_bytes(&bytes[..20]), Err(Error::Bounds { .. })));
        let last = c.chunks.last().unwrap();
        let mut bad = bytes.clone();
        let at = bytes.len() - last.payload.len() / 2;
        bad[at] ^= 0x01;
        assert!(matches!(Container::from_bytes(&bad), Err(Error::Corruption(_))));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(Container::from_bytes(&long), Err(Error::Corruption(_))));
    }

    #[test]
    fn every_single_byte_flip_is_detected() {
        let (c, _) = fixture();
        let bytes = c.to_bytes();
        let mut missed = Vec::new();
        for i in 0..bytes.len() {
            for mask in [0x01, 0x80] {
                let mut bad = bytes.clone();
                bad[i] ^= mask;
                if Container::from_bytes(&bad).is_ok() {
                    missed.push((i, mask));
                }
            }
        }
        assert!(missed.is_empty(), "{} of {} bytes: undetected flips {missed:?}", bytes.len(), bytes.len());
    }

    #[test]
    fn compression_is_reproducible() {
        assert_eq!(fixture().0.to_bytes(), fixture().0.to_bytes());
    }
}
