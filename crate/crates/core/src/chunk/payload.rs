//! Raw chunk payloads. Voxel records are 32 bytes (code u32, normal 3 x f32,
//! tangent 3 x f32, source u32 with `u32::MAX` for none); spatial chunks hold
//! all components of voxel 0, then voxel 1, and so on; angular layers hold
//! four components per direction pair in nested-parabolic row order.

use std::collections::HashMap;
use std::sync::Arc;

use byteorder::{ByteOrder, LittleEndian};
use nalgebra::DMatrix;
use rayon::prelude::*;

use super::codec::compress_chunk;
use super::container::Header;
use super::order::{build_load_order, chunk_set, ChunkDescriptor, ChunkKey};
use crate::btf::dfmf::LAYER_WIDTH;
use crate::error::{Error, Result};
use crate::octree::tree::{complete_codes, DEFAULT_NORMAL};
use crate::octree::{AngularFactors, Level, OctreeBtf, Voxel};

pub const VOXEL_RECORD: usize = 32;
const NO_SOURCE: u32 = u32::MAX;

/// A compressed chunk as stored and transmitted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub descriptor: ChunkDescriptor,
    pub payload: Arc<[u8]>,
}

impl Chunk {
    pub fn compress(key: ChunkKey, raw: &[u8]) -> Chunk {
        let payload = compress_chunk(raw);
        Chunk {
            descriptor: ChunkDescriptor {
                key,
                uncompressed: raw.len() as u64,
                compressed: payload.len() as u64,
                crc: crc32fast::hash(&payload),
            },
            payload: payload.into(),
        }
    }

    pub fn decompress(&self) -> Result<Vec<u8>> {
        if self.payload.len() as u64 != self.descriptor.compressed {
            return Err(Error::Corruption(format!(
                "{} holds {} bytes, descriptor says {}",
                self.descriptor.key,
                self.payload.len(),
                self.descriptor.compressed
            )));
        }
        if crc32fast::hash(&self.payload) != self.descriptor.crc {
            return Err(Error::Corruption(format!("{} fails its CRC", self.descriptor.key)));
        }
        super::codec::decompress_chunk(&self.payload, self.descriptor.uncompressed)
    }
}

pub fn encode_voxels(voxels: &[Voxel]) -> Vec<u8> {
    let mut out = vec![0u8; voxels.len() * VOXEL_RECORD];
    for (v, rec) in voxels.iter().zip(out.chunks_exact_mut(VOXEL_RECORD)) {
        LittleEndian::write_u32(&mut rec[0..4], v.code);
        LittleEndian::write_f32_into(&v.normal, &mut rec[4..16]);
        LittleEndian::write_f32_into(&v.tangent, &mut rec[16..28]);
        LittleEndian::write_u32(&mut rec[28..32], v.source.unwrap_or(NO_SOURCE));
    }
    out
}

pub fn decode_voxels(bytes: &[u8]) -> Result<Vec<Voxel>> {
    if !bytes.len().is_multiple_of(VOXEL_RECORD) {
        return Err(Error::Corruption(format!("voxel payload of {} bytes", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(VOXEL_RECORD)
        .map(|rec| {
            let mut normal = [0f32; 3];
            let mut tangent = [0f32; 3];
            LittleEndian::read_f32_into(&rec[4..16], &mut normal);
            LittleEndian::read_f32_into(&rec[16..28], &mut tangent);
            let source = LittleEndian::read_u32(&rec[28..32]);
            Voxel {
                code: LittleEndian::read_u32(&rec[0..4]),
                normal,
                tangent,
                source: (source != NO_SOURCE).then_some(source),
            }
        })
        .collect())
}

pub fn encode_f32s(values: &[f32]) -> Vec<u8> {
    let mut out = vec![0u8; values.len() * 4];
    LittleEndian::write_f32_into(values, &mut out);
    out
}

pub fn decode_f32s(bytes: &[u8]) -> Result<Vec<f32>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::Corruption(format!("float payload of {} bytes", bytes.len())));
    }
    let mut out = vec![0f32; bytes.len() / 4];
    LittleEndian::read_f32_into(bytes, &mut out);
    Ok(out)
}

/// Components `4g..4g+4` of every row of `angular`, interleaved per row.
pub fn angular_layer(angular: &DMatrix<f32>, layer: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(angular.nrows() * LAYER_WIDTH);
    for r in 0..angular.nrows() {
        for c in layer * LAYER_WIDTH..(layer + 1) * LAYER_WIDTH {
            out.push(angular[(r, c)]);
        }
    }
    out
}

/// Uncompressed payload of every chunk in canonical chunk-set order.
pub fn raw_payloads(tree: &OctreeBtf) -> Result<Vec<(ChunkKey, Vec<u8>)>> {
    if !tree.is_populated() {
        return Err(Error::Ordering("tree lacks spatial rows or angular factors".into()));
    }
    let [k_y, k_uv, k_v] = tree.components();
    if k_uv != k_v {
        return Err(Error::invalid("U and V must share a component count"));
    }
    let angular = tree.angular().expect("populated");
    let keys = chunk_set(tree.level_count(), k_y, k_uv)?;
    Ok(keys
        .into_par_iter()
        .map(|key| {
            let bytes = match key {
                ChunkKey::Voxel { level } => encode_voxels(&tree.level(tree.d_min() + level as u32).voxels),
                ChunkKey::Spatial { level, channel } => {
                    encode_f32s(&tree.level(tree.d_min() + level as u32).spatial[channel as usize])
                }
                ChunkKey::Angular { channel, layer } => {
                    encode_f32s(&angular_layer(&angular.channels[channel as usize], layer as usize))
                }
            };
            (key, bytes)
        })
        .collect())
}

/// Compressed chunks of a populated tree in load order.
pub fn build_chunks(tree: &OctreeBtf) -> Result<Vec<Chunk>> {
    let raw: HashMap<ChunkKey, Vec<u8>> = raw_payloads(tree)?.into_iter().collect();
    let [k_y, k_uv, _] = tree.components();
    let order = build_load_order(tree.level_count(), k_y, k_uv)?;
    Ok(order.par_iter().map(|key| Chunk::compress(*key, &raw[key])).collect())
}

/// Rebuilds a tree from the raw payload of every chunk. Levels below `d_min`
/// are regenerated as filler.
pub fn assemble_tree(header: &Header, raw: &HashMap<ChunkKey, Vec<u8>>) -> Result<OctreeBtf> {
    let (d_min, d_max) = (header.d_min as u32, header.d_max as u32);
    let ks = header.components();
    let levels_n = header.level_count();
    let missing = |key: ChunkKey| Error::Corruption(format!("missing {key}"));
    let mut levels: Vec<Level> = (0..d_min)
        .map(|depth| Level::new(depth, complete_codes(depth).map(|c| Voxel::new(c, DEFAULT_NORMAL)).collect()))
        .collect();
    for i in 0..levels_n as u16 {
        let key = ChunkKey::Voxel { level: i };
        let mut level = Level::new(d_min + i as u32, decode_voxels(raw.get(&key).ok_or_else(|| missing(key))?)?);
        for ch in 0..3u8 {
            let key = ChunkKey::Spatial { level: i, channel: ch };
            level.spatial[ch as usize] = decode_f32s(raw.get(&key).ok_or_else(|| missing(key))?)?;
        }
        levels.push(level);
    }
    let rows = header.direction_pairs();
    let mut channels = Vec::with_capacity(3);
    for (ch, &k) in ks.iter().enumerate() {
        let mut m = DMatrix::<f32>::zeros(rows, k);
        for g in 0..k / LAYER_WIDTH {
            let key = ChunkKey::Angular { channel: ch as u8, layer: g as u16 };
            let values = decode_f32s(raw.get(&key).ok_or_else(|| missing(key))?)?;
            if values.len() != rows * LAYER_WIDTH {
                return Err(Error::Corruption(format!("{key} holds {} values", values.len())));
            }
            for r in 0..rows {
                for j in 0..LAYER_WIDTH {
                    m[(r, g * LAYER_WIDTH + j)] = values[r * LAYER_WIDTH + j];
                }
            }
        }
        channels.push(m);
    }
    let angular = AngularFactors {
        light_res: header.light_res as usize,
        view_res: header.view_res as usize,
        channels: channels.try_into().expect("three channels"),
    };
    OctreeBtf::from_parts(d_min, d_max, levels, ks, Some(angular)).map_err(|e| Error::Corruption(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn voxel_records_roundtrip() {
        let vs = vec![
            Voxel::new(5, [0.0, 0.0, 1.0]),
            Voxel { code: 9, normal: [1.0, 0.0, 0.0], tangent: [0.0, 0.0, 1.0], source: Some(3) },
        ];
        let bytes = encode_voxels(&vs);
        assert_eq!(bytes.len(), 64);
        assert_eq!(&bytes[28..32], &[0xFF; 4]);
        assert_eq!(decode_voxels(&bytes).unwrap(), vs);
        assert!(decode_voxels(&bytes[..40]).is_err());
    }

    #[test]
    fn angular_layer_interleaves_rows() {
        let m = DMatrix::from_fn(3, 8, |r, c| (r * 10 + c) as f32);
        assert_eq!(angular_layer(&m, 1), vec![4.0, 5.0, 6.0, 7.0, 14.0, 15.0, 16.0, 17.0, 24.0, 25.0, 26.0, 27.0]);
    }
}
