use std::sync::Arc;

use crate::btf::dfmf::{sample_channel, AngularSource, LAYER_WIDTH};
use crate::btf::{AngularTaps, Direction};
use crate::chunk::payload::{decode_f32s, decode_voxels};
use crate::chunk::{Chunk, ChunkKey, Container, Header};
use crate::error::{Error, Result};
use crate::octree::io::decode_geometry;
use crate::octree::tree::encode;
use crate::octree::{Mesh, Voxel};
use crate::protocol::{Annotation, Frame};

/// Decoded contents of one chunk.
#[derive(Debug, Clone, PartialEq)]
pub enum ChunkData {
    Voxels(Arc<Vec<Voxel>>),
    Floats(Arc<Vec<f32>>),
}

/// A server frame after the expensive work (decompression, parsing) is done,
/// ready to be applied.
#[derive(Debug, Clone, PartialEq)]
pub enum Decoded {
    ObjectInfo { header: Header, session: u32 },
    Geometry { blob: Arc<[u8]>, mesh: Arc<Mesh> },
    Chunk { chunk: Chunk, data: ChunkData },
    Event(Annotation),
    Sync(Vec<Annotation>),
    Error { code: u16, message: String },
}

/// Decompresses and parses a server-to-client frame.
pub fn decode_frame(frame: Frame) -> Result<Decoded> {
    Ok(match frame {
        Frame::ObjectInfo { header, session } => Decoded::ObjectInfo { header, session },
        Frame::Geometry(blob) => {
            let size = zstd::zstd_safe::get_frame_content_size(&blob)
                .ok()
                .flatten()
                .ok_or_else(|| Error::Corruption("geometry frame lacks a content size".into()))?;
            let raw = crate::chunk::decompress_chunk(&blob, size)?;
            let mesh = decode_geometry(&raw).map_err(|e| Error::Corruption(e.to_string()))?;
            Decoded::Geometry { blob, mesh: Arc::new(mesh) }
        }
        Frame::Chunk(chunk) => {
            let raw = chunk.decompress()?;
            let data = match chunk.descriptor.key {
                ChunkKey::Voxel { .. } => ChunkData::Voxels(Arc::new(decode_voxels(&raw)?)),
                _ => ChunkData::Floats(Arc::new(decode_f32s(&raw)?)),
            };
            Decoded::Chunk { chunk, data }
        }
        Frame::AnnotationEvent(a) => Decoded::Event(a),
        Frame::AnnotationSync(list) => Decoded::Sync(list),
        Frame::Error { code, message } => Decoded::Error { code, message },
        other => {
            return Err(Error::ProtocolViolation(format!("client received frame type 0x{:02x}", other.type_byte())));
        }
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LevelData {
    pub voxels: Option<Arc<Vec<Voxel>>>,
    pub spatial: [Option<Arc<Vec<f32>>>; 3],
}

/// Angular layers received so far for one channel.
pub struct Layers<'a>(pub &'a [Arc<Vec<f32>>]);

impl AngularSource for Layers<'_> {
    fn component(&self, row: usize, c: usize) -> f32 {
        self.0[c / LAYER_WIDTH][row * LAYER_WIDTH + c % LAYER_WIDTH]
    }
}

/// Immutable snapshot of everything a client has received. Each applied
/// frame yields a new snapshot with a higher version.
#[derive(Debug, Clone)]
pub struct ProgressiveState {
    version: u64,
    session: Option<u32>,
    header: Option<Arc<Header>>,
    order: Arc<Vec<ChunkKey>>,
    geometry: Option<(Arc<[u8]>, Arc<Mesh>)>,
    placeholder: Arc<Mesh>,
    levels: Vec<LevelData>,
    angular: [Vec<Arc<Vec<f32>>>; 3],
    chunks: Vec<Chunk>,
    annotations: Arc<Vec<Annotation>>,
    synced: bool,
}

impl Default for ProgressiveState {
    fn default() -> Self {
        ProgressiveState::new()
    }
}

fn violation(msg: impl Into<String>) -> Error {
    Error::ProtocolViolation(msg.into())
}

impl ProgressiveState {
    pub fn new() -> Self {
        ProgressiveState {
            version: 0,
            session: None,
            header: None,
            order: Arc::new(Vec::new()),
            geometry: None,
            placeholder: Arc::new(Mesh::placeholder_sphere()),
            levels: Vec::new(),
            angular: Default::default(),
            chunks: Vec::new(),
            annotations: Arc::new(Vec::new()),
            synced: false,
        }
    }

    /// State after receiving every frame of a container.
    pub fn from_container(container: &Container) -> Result<Self> {
        let mut state = ProgressiveState::new();
        for frame in crate::protocol::replay_frames(container, 0) {
            state = state.apply(&decode_frame(frame)?)?;
        }
        Ok(state)
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn session(&self) -> Option<u32> {
        self.session
    }

    pub fn header(&self) -> Option<&Header> {
        self.header.as_deref()
    }

    pub fn is_placeholder(&self) -> bool {
        self.geometry.is_none()
    }

    /// Real geometry once received, the placeholder sphere before.
    pub fn mesh(&self) -> &Mesh {
        self.geometry.as_ref().map_or(&self.placeholder, |(_, m)| m)
    }

    pub fn mesh_arc(&self) -> Arc<Mesh> {
        self.geometry.as_ref().map_or_else(|| self.placeholder.clone(), |(_, m)| m.clone())
    }

    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn chunks_received(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_complete(&self) -> bool {
        self.header.is_some() && self.geometry.is_some() && self.chunks.len() == self.order.len()
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, i: usize) -> &LevelData {
        &self.levels[i]
    }

    pub fn angular_layers(&self, channel: usize) -> usize {
        self.angular[channel].len()
    }

    fn components(&self) -> [usize; 3] {
        self.header.as_ref().map_or([0; 3], |h| h.components())
    }

    /// Renderable rank per channel.
    pub fn ranks(&self) -> [usize; 3] {
        let ks = self.components();
        [0, 1, 2].map(|c| (LAYER_WIDTH * self.angular[c].len()).min(ks[c]))
    }

    pub fn evaluable_in(&self, level: usize, channel: usize) -> bool {
        self.levels.get(level).is_some_and(|l| l.voxels.is_some() && l.spatial[channel].is_some())
            && !self.angular[channel].is_empty()
    }

    /// A level is evaluable when every channel can be evaluated there.
    pub fn evaluable(&self, level: usize) -> bool {
        (0..3).all(|c| self.evaluable_in(level, c))
    }

    pub fn deepest_evaluable(&self) -> Option<usize> {
        (0..self.levels.len()).rev().find(|&l| self.evaluable(l))
    }

    pub fn voxels(&self, level: usize) -> Option<&[Voxel]> {
        self.levels.get(level)?.voxels.as_deref().map(Vec::as_slice)
    }

    /// Voxel containing `position` at streamed level `level`, or its deepest
    /// present ancestor. Returns the level and index found.
    pub fn find_voxel(&self, position: [f64; 3], level: usize) -> Option<(usize, usize)> {
        let d_min = self.header.as_ref()?.d_min as u32;
        let depth = d_min + level as u32;
        let n = 1u32 << depth;
        let cell = position.map(|p| ((p.clamp(0.0, 1.0) * n as f64) as u32).min(n - 1));
        let mut code = encode(cell, depth);
        for l in (0..=level).rev() {
            if let Some(vs) = self.voxels(l) {
                if let Ok(i) = vs.binary_search_by_key(&code, |v| v.code) {
                    return Some((l, i));
                }
            }
            code >>= 3;
        }
        None
    }

    /// Reflectance of one voxel for local light and view directions using the
    /// first `k_used[c]` components of each channel.
    pub fn evaluate(&self, level: usize, voxel: usize, light: Direction, view: Direction, k_used: [usize; 3]) -> Result<[f64; 3]> {
        let header = self.header.as_ref().ok_or(Error::NotReady)?;
        if !self.evaluable(level) {
            return Err(Error::NotReady);
        }
        let ks = header.components();
        let taps = AngularTaps::new(header.light_res as usize, header.view_res as usize, light, view);
        let data = &self.levels[level];
        let mut decorrelated = [0.0; 3];
        for c in 0..3 {
            let rows = data.spatial[c].as_ref().expect("evaluable");
            let row = rows.get(voxel * ks[c]..(voxel + 1) * ks[c]).ok_or(Error::Index { index: voxel, len: rows.len() / ks[c].max(1) })?;
            let k = k_used[c].min(self.ranks()[c]);
            decorrelated[c] = sample_channel(&taps, &Layers(&self.angular[c]), row, k);
        }
        Ok(crate::btf::color::recorrelate_rgb(decorrelated))
    }

    /// Container rebuilt from the received frames; byte-identical to the
    /// served one once complete.
    pub fn to_container(&self) -> Result<Container> {
        if !self.is_complete() {
            return Err(Error::NotReady);
        }
        Ok(Container {
            header: self.header.as_deref().expect("complete").clone(),
            geometry: self.geometry.as_ref().expect("complete").0.clone(),
            chunks: self.chunks.clone(),
        })
    }

    /// Returns the successor state. Chunks must arrive in load order and
    /// annotation sequence numbers must be dense.
    pub fn apply(&self, d: &Decoded) -> Result<ProgressiveState> {
        let mut next = self.clone();
        match d {
            Decoded::ObjectInfo { header, session } => {
                if self.header.is_some() {
                    return Err(violation("second OBJECT_INFO"));
                }
                next.order = Arc::new(header.load_order().map_err(|e| violation(e.to_string()))?);
                next.levels = vec![LevelData::default(); header.level_count()];
                next.header = Some(Arc::new(header.clone()));
                next.session = Some(*session);
                next.version += 1;
            }
            Decoded::Geometry { blob, mesh } => {
                let header = self.header.as_ref().ok_or_else(|| violation("GEOMETRY before OBJECT_INFO"))?;
                if self.geometry.is_some() {
                    return Err(violation("second GEOMETRY"));
                }
                if blob.len() as u64 != header.geometry_len {
                    return Err(Error::Corruption(format!("geometry of {} bytes, header says {}", blob.len(), header.geometry_len)));
                }
                if crc32fast::hash(blob) != header.geometry_crc {
                    return Err(Error::Corruption("geometry fails its CRC".into()));
                }
                next.geometry = Some((blob.clone(), mesh.clone()));
                next.version += 1;
            }
            Decoded::Chunk { chunk, data } => {
                next.apply_chunk(chunk, data)?;
                next.chunks.push(chunk.clone());
                next.version += 1;
            }
            Decoded::Sync(list) => {
                if self.synced {
                    return Err(violation("second ANNOTATION_SYNC"));
                }
                next.synced = true;
                for a in list {
                    next.push_annotation(a)?;
                }
            }
            Decoded::Event(a) => next.push_annotation(a)?,
            Decoded::Error { .. } => {}
        }
        Ok(next)
    }

    fn push_annotation(&mut self, a: &Annotation) -> Result<()> {
        let expected = self.annotations.len() as u64 + 1;
        if a.sequence != expected {
            return Err(violation(format!("annotation {} where {expected} was due", a.sequence)));
        }
        Arc::make_mut(&mut self.annotations).push(a.clone());
        self.version += 1;
        Ok(())
    }

    fn apply_chunk(&mut self, chunk: &Chunk, data: &ChunkData) -> Result<()> {
        let header = self.header.clone().ok_or_else(|| violation("CHUNK before OBJECT_INFO"))?;
        if self.geometry.is_none() {
            return Err(violation("CHUNK before GEOMETRY"));
        }
        let key = chunk.descriptor.key;
        match self.order.get(self.chunks.len()) {
            Some(&due) if due == key => {}
            Some(&due) => return Err(violation(format!("received {key} where {due} was due"))),
            None => return Err(violation(format!("received {key} after the last chunk"))),
        }
        let ks = header.components();
        match (key, data) {
            (ChunkKey::Voxel { level }, ChunkData::Voxels(vs)) => {
                let expected = header.voxel_counts[level as usize] as usize;
                if vs.len() != expected {
                    return Err(Error::Corruption(format!("{key} holds {} voxels, header says {expected}", vs.len())));
                }
                self.levels[level as usize].voxels = Some(vs.clone());
            }
            (ChunkKey::Spatial { level, channel }, ChunkData::Floats(rows)) => {
                let expected = header.voxel_counts[level as usize] as usize * ks[channel as usize];
                if rows.len() != expected {
                    return Err(Error::Corruption(format!("{key} holds {} values, expected {expected}", rows.len())));
                }
                self.levels[level as usize].spatial[channel as usize] = Some(rows.clone());
            }
            (ChunkKey::Angular { channel, .. }, ChunkData::Floats(values)) => {
                let expected = header.direction_pairs() * LAYER_WIDTH;
                if values.len() != expected {
                    return Err(Error::Corruption(format!("{key} holds {} values, expected {expected}", values.len())));
                }
                self.angular[channel as usize].push(values.clone());
            }
            _ => return Err(Error::Corruption(format!("{key} payload has the wrong shape"))),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::btf::{synthesize_btf, DirectionGrid};
    use crate::pipeline::{compress_to_container, CompressOptions};
    use crate::protocol::{replay_frames, AnnotationBody};

    fn fixture() -> Container {
        let grid = DirectionGrid::new(2).unwrap();
        let tensor = synthesize_btf(4, &grid, &grid, 3).unwrap();
        let opts = CompressOptions { k_y: 8, k_uv: 4, d_min: 1, d_max: 3 };
        compress_to_container(&tensor, &Mesh::placeholder_sphere(), opts).unwrap().0
    }

    fn decoded(c: &Container) -> Vec<Decoded> {
        replay_frames(c, 7).into_iter().map(|f| decode_frame(f).unwrap()).collect()
    }

    #[test]
    fn initial_state_is_placeholder() {
        let s = ProgressiveState::new();
        assert!(s.is_placeholder());
        assert_eq!(s.mesh().triangles().len(), 320);
        assert_eq!(s.deepest_evaluable(), None);
        assert!(matches!(s.evaluate(0, 0, Direction::NORMAL, Direction::NORMAL, [4; 3]), Err(Error::NotReady)));
    }

    #[test]
    fn prefix_then_completion() {
        let c = fixture();
        let frames = decoded(&c);
        let mut s = ProgressiveState::new();
        for d in &frames[..3 + 7] {
            s = s.apply(d).unwrap();
        }
        assert_eq!(s.deepest_evaluable(), Some(0));
        assert_eq!(s.ranks(), [4, 4, 4]);
        for i in 0..s.voxels(0).unwrap().len() {
            s.evaluate(0, i, Direction::NORMAL, Direction::NORMAL, [4; 3]).unwrap();
        }
        for d in &frames[10..] {
            let v = s.version();
            s = s.apply(d).unwrap();
            assert_eq!(s.version(), v + 1);
        }
        assert!(s.is_complete());
        assert_eq!(s.ranks(), [8, 4, 4]);
        assert_eq!(s.deepest_evaluable(), Some(2));
        assert_eq!(s.to_container().unwrap().to_bytes(), c.to_bytes());
        assert_eq!(ProgressiveState::from_container(&c).unwrap().to_container().unwrap(), c);
    }

    #[test]
    fn violations() {
        let c = fixture();
        let frames = decoded(&c);
        let mut s = ProgressiveState::new();
        assert!(matches!(s.apply(&frames[3]), Err(Error::ProtocolViolation(_))));
        for d in &frames[..4] {
            s = s.apply(d).unwrap();
        }
        assert!(matches!(s.apply(&frames[3]), Err(Error::ProtocolViolation(_))));
        assert!(matches!(s.apply(&frames[5]), Err(Error::ProtocolViolation(_))));
        let a = |sequence| Decoded::Event(Annotation { sequence, author: 1, body: AnnotationBody::marker([0.5; 3]) });
        s = s.apply(&a(1)).unwrap();
        assert!(matches!(s.apply(&a(3)), Err(Error::ProtocolViolation(_))));
        assert!(matches!(s.apply(&a(1)), Err(Error::ProtocolViolation(_))));
        assert_eq!(s.apply(&a(2)).unwrap().annotations().len(), 2);
    }

    #[test]
    fn full_state_matches_offline_tree() {
        let c = fixture();
        let tree = c.tree().unwrap();
        let s = ProgressiveState::from_container(&c).unwrap();
        for i in 0..s.level_count() {
            let depth = tree.d_min() + i as u32;
            assert_eq!(s.voxels(i).unwrap(), tree.level(depth).voxels.as_slice());
            for ch in 0..3 {
                assert_eq!(s.level(i).spatial[ch].as_deref().unwrap(), &tree.level(depth).spatial[ch]);
            }
        }
        let (level, idx) = s.find_voxel([0.5, 0.5, 0.02], 2).unwrap();
        let hit = tree.lookup([0.5, 0.5, 0.02], 3).unwrap();
        assert_eq!((level as u32 + 1, idx), (hit.depth, hit.index));
    }
}
