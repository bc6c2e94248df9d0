use std::fmt;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::btf::dfmf::{check_component_count, LAYER_WIDTH};
use crate::error::{Error, Result};

/// Color channel indices of a decorrelated BTF.
pub const CHANNEL_NAMES: [char; 3] = ['Y', 'U', 'V'];

const KIND_VOXEL: u8 = 0;
const KIND_SPATIAL: u8 = 1;
const KIND_ANGULAR: u8 = 2;
const UNUSED_CHANNEL: u8 = 0xFF;
const UNUSED_LEVEL: u16 = 0xFFFF;

/// Identity of a chunk. `level` is the index of a streamed level, so depth
/// is `d_min + level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChunkKey {
    Voxel { level: u16 },
    Spatial { level: u16, channel: u8 },
    Angular { channel: u8, layer: u16 },
}

impl ChunkKey {
    pub fn channel(&self) -> Option<usize> {
        match *self {
            ChunkKey::Voxel { .. } => None,
            ChunkKey::Spatial { channel, .. } | ChunkKey::Angular { channel, .. } => Some(channel as usize),
        }
    }

    pub fn level(&self) -> Option<usize> {
        match *self {
            ChunkKey::Voxel { level } | ChunkKey::Spatial { level, .. } => Some(level as usize),
            ChunkKey::Angular { .. } => None,
        }
    }
}

impl fmt::Display for ChunkKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ChunkKey::Voxel { level } => write!(f, "voxel(level {level})"),
            ChunkKey::Spatial { level, channel } => {
                write!(f, "spatial(level {level}, {})", CHANNEL_NAMES[channel as usize])
            }
            ChunkKey::Angular { channel, layer } => {
                write!(f, "angular({}, layer {layer})", CHANNEL_NAMES[channel as usize])
            }
        }
    }
}

/// Key, the byte sizes before and after compression, and a CRC-32 of the
/// compressed bytes. The CRC catches damage that still decodes to the same
/// content, which the zstd content checksum cannot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChunkDescriptor {
    pub key: ChunkKey,
    pub uncompressed: u64,
    pub compressed: u64,
    pub crc: u32,
}

impl ChunkDescriptor {
    /// Fixed-width encoding: kind u8, channel u8, level u16, layer u16,
    /// reserved u16, uncompressed u64, compressed u64, crc u32.
    pub const ENCODED_LEN: usize = 28;

    pub fn encode(&self, out: &mut Vec<u8>) {
        let (kind, channel, level, layer) = match self.key {
            ChunkKey::Voxel { level } => (KIND_VOXEL, UNUSED_CHANNEL, level, 0),
            ChunkKey::Spatial { level, channel } => (KIND_SPATIAL, channel, level, 0),
            ChunkKey::Angular { channel, layer } => (KIND_ANGULAR, channel, UNUSED_LEVEL, layer),
        };
        out.push(kind);
        out.push(channel);
        out.write_u16::<LittleEndian>(level).unwrap();
        out.write_u16::<LittleEndian>(layer).unwrap();
        out.write_u16::<LittleEndian>(0).unwrap();
        out.write_u64::<LittleEndian>(self.uncompressed).unwrap();
        out.write_u64::<LittleEndian>(self.compressed).unwrap();
        out.write_u32::<LittleEndian>(self.crc).unwrap();
    }

    pub fn decode(mut bytes: &[u8]) -> Result<Self> {
        if bytes.len() < Self::ENCODED_LEN {
            return Err(Error::Format("chunk descriptor is truncated".into()));
        }
        let kind = bytes.read_u8()?;
        let channel = bytes.read_u8()?;
        let level = bytes.read_u16::<LittleEndian>()?;
        let layer = bytes.read_u16::<LittleEndian>()?;
        let reserved = bytes.read_u16::<LittleEndian>()?;
        let uncompressed = bytes.read_u64::<LittleEndian>()?;
        let compressed = bytes.read_u64::<LittleEndian>()?;
        let crc = bytes.read_u32::<LittleEndian>()?;
        let bad = |what: &str| Error::Format(format!("chunk descriptor: {what}"));
        if reserved != 0 {
            return Err(bad("reserved field is not zero"));
        }
        let key = match kind {
            KIND_VOXEL if channel == UNUSED_CHANNEL && layer == 0 && level != UNUSED_LEVEL => ChunkKey::Voxel { level },
            KIND_SPATIAL if channel < 3 && layer == 0 && level != UNUSED_LEVEL => ChunkKey::Spatial { level, channel },
            KIND_ANGULAR if channel < 3 && level == UNUSED_LEVEL => ChunkKey::Angular { channel, layer },
            KIND_VOXEL | KIND_SPATIAL | KIND_ANGULAR => return Err(bad("inconsistent fields")),
            k => return Err(bad(&format!("unknown kind {k}"))),
        };
        Ok(ChunkDescriptor { key, uncompressed, compressed, crc })
    }
}

pub type LoadOrder = Vec<ChunkKey>;

/// `4l + k_Y/4 + k_UV/2`.
pub fn chunk_count(levels: usize, k_y: usize, k_uv: usize) -> usize {
    4 * levels + k_y / LAYER_WIDTH + 2 * (k_uv / LAYER_WIDTH)
}

fn check_order_params(levels: usize, k_y: usize, k_uv: usize) -> Result<()> {
    if levels == 0 {
        return Err(Error::invalid("at least one level is required"));
    }
    if levels > UNUSED_LEVEL as usize {
        return Err(Error::ResourceLimit(format!("{levels} levels")));
    }
    check_component_count(k_y)?;
    check_component_count(k_uv)?;
    if k_y.max(k_uv) / LAYER_WIDTH > u16::MAX as usize {
        return Err(Error::ResourceLimit("too many angular layers".into()));
    }
    Ok(())
}

/// Every chunk of a configuration in canonical order: voxel, spatial, angular.
pub fn chunk_set(levels: usize, k_y: usize, k_uv: usize) -> Result<Vec<ChunkKey>> {
    check_order_params(levels, k_y, k_uv)?;
    let mut out = Vec::with_capacity(chunk_count(levels, k_y, k_uv));
    out.extend((0..levels as u16).map(|level| ChunkKey::Voxel { level }));
    for level in 0..levels as u16 {
        out.extend((0..3).map(|channel| ChunkKey::Spatial { level, channel }));
    }
    for (channel, k) in [k_y, k_uv, k_uv].into_iter().enumerate() {
        out.extend((0..(k / LAYER_WIDTH) as u16).map(|layer| ChunkKey::Angular { channel: channel as u8, layer }));
    }
    Ok(out)
}

/// Progressive delivery order. The coarsest level and the first angular layer
/// of every channel come first; each finer level then brings its own voxel
/// and spatial chunks and an even share of further angular layers. Layers not
/// yet scheduled after the last level follow, Y before U before V.
pub fn build_load_order(levels: usize, k_y: usize, k_uv: usize) -> Result<LoadOrder> {
    check_order_params(levels, k_y, k_uv)?;
    let layers_y = (k_y / LAYER_WIDTH) as u16;
    let layers_uv = (k_uv / LAYER_WIDTH) as u16;
    let per_level_y = (layers_y as usize / levels).max(1);
    let per_level_uv = (layers_uv as usize / levels).max(1);
    let spatial = |level: u16, channel: u8| ChunkKey::Spatial { level, channel };
    let angular = |channel: u8, layer: u16| ChunkKey::Angular { channel, layer };

    let mut order = Vec::with_capacity(chunk_count(levels, k_y, k_uv));
    order.extend([ChunkKey::Voxel { level: 0 }, spatial(0, 0), spatial(0, 1), spatial(0, 2)]);
    order.extend([angular(0, 0), angular(1, 0), angular(2, 0)]);
    let (mut added_y, mut added_uv) = (1u16, 1u16);
    for level in 1..levels as u16 {
        order.extend([ChunkKey::Voxel { level }, spatial(level, 0)]);
        for _ in 0..per_level_y {
            if added_y < layers_y {
                order.push(angular(0, added_y));
                added_y += 1;
            }
        }
        order.extend([spatial(level, 1), spatial(level, 2)]);
        for _ in 0..per_level_uv {
            if added_uv < layers_uv {
                order.extend([angular(1, added_uv), angular(2, added_uv)]);
                added_uv += 1;
            }
        }
    }
    order.extend((added_y..layers_y).map(|g| angular(0, g)));
    order.extend((added_uv..layers_uv).map(|g| angular(1, g)));
    order.extend((added_uv..layers_uv).map(|g| angular(2, g)));
    Ok(order)
}

/// Checks that `order` is a permutation of the configuration's chunk set in
/// which angular layers of a channel ascend and spatial chunks follow their
/// level's voxel chunk.
pub fn check_order(order: &[ChunkKey], levels: usize, k_y: usize, k_uv: usize) -> Result<()> {
    let mut expected = chunk_set(levels, k_y, k_uv)?;
    let mut got = order.to_vec();
    expected.sort();
    got.sort();
    if expected != got {
        return Err(Error::Ordering("order is not a permutation of the chunk set".into()));
    }
    let mut next_layer = [0u16; 3];
    let mut voxel_seen = vec![false; levels];
    for key in order {
        match *key {
            ChunkKey::Voxel { level } => voxel_seen[level as usize] = true,
            ChunkKey::Spatial { level, .. } if !voxel_seen[level as usize] => {
                return Err(Error::Ordering(format!("{key} precedes its voxel chunk")));
            }
            ChunkKey::Angular { channel, layer } => {
                if next_layer[channel as usize] != layer {
                    return Err(Error::Ordering(format!("{key} out of layer order")));
                }
                next_layer[channel as usize] += 1;
            }
            _ => {}
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vox(level: u16) -> ChunkKey {
        ChunkKey::Voxel { level }
    }
    fn sp(level: u16, channel: u8) -> ChunkKey {
        ChunkKey::Spatial { level, channel }
    }
    fn an(channel: u8, layer: u16) -> ChunkKey {
        ChunkKey::Angular { channel, layer }
    }

    #[test]
    fn hand_executed_two_level_order() {
        let order = build_load_order(2, 8, 4).unwrap();
        let expected = vec![
            vox(0), sp(0, 0), sp(0, 1), sp(0, 2), an(0, 0), an(1, 0), an(2, 0),
            vox(1), sp(1, 0), an(0, 1), sp(1, 1), sp(1, 2),
        ];
        assert_eq!(order, expected);
    }

    #[test]
    fn single_level_flushes_remaining_layers() {
        let order = build_load_order(1, 12, 8).unwrap();
        let expected = vec![
            vox(0), sp(0, 0), sp(0, 1), sp(0, 2), an(0, 0), an(1, 0), an(2, 0),
            an(0, 1), an(0, 2), an(1, 1), an(2, 1),
        ];
        assert_eq!(order, expected);
    }

    #[test]
    fn counts() {
        assert_eq!(chunk_set(5, 72, 8).unwrap().len(), 42);
        assert_eq!(chunk_set(1, 4, 4).unwrap().len(), 7);
        assert_eq!(chunk_count(5, 72, 8), 42);
        assert!(matches!(build_load_order(2, 6, 4), Err(Error::InvalidComponentCount(6))));
        assert!(build_load_order(0, 4, 4).is_err());
    }

    #[test]
    fn descriptor_roundtrip_and_layout() {
        for key in [vox(3), sp(2, 1), an(2, 17)] {
            let d = ChunkDescriptor { key, uncompressed: 1234, compressed: 99, crc: 0xDEAD_BEEF };
            let mut bytes = Vec::new();
            d.encode(&mut bytes);
            assert_eq!(bytes.len(), ChunkDescriptor::ENCODED_LEN);
            assert_eq!(ChunkDescriptor::decode(&bytes).unwrap(), d);
        }
        let mut bytes = Vec::new();
        ChunkDescriptor { key: an(1, 2), uncompressed: 1, compressed: 1, crc: 7 }.encode(&mut bytes);
        assert_eq!(&bytes[..6], &[2, 1, 0xFF, 0xFF, 2, 0]);
        bytes[0] = 9;
        assert!(ChunkDescriptor::decode(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn every_order_is_a_valid_permutation(levels in 1usize..12, ly in 1usize..30, luv in 1usize..10) {
            let order = build_load_order(levels, 4 * ly, 4 * luv).unwrap();
            prop_assert_eq!(order.len(), chunk_count(levels, 4 * ly, 4 * luv));
            check_order(&order, levels, 4 * ly, 4 * luv).unwrap();
            prop_assert_eq!(&order[4..7], &[an(0, 0), an(1, 0), an(2, 0)]);
        }
    }
}
