use nalgebra::DMatrix;

use super::mesh::{Mesh, Vec3};
use super::sat::triangle_box_overlap;
use crate::error::{Error, Result};

pub const MAX_DEPTH: u32 = 10;
/// Forced-complete levels hold `8^depth` voxels; this bounds their memory.
pub const MAX_COMPLETE_DEPTH: u32 = 7;
pub const DEFAULT_NORMAL: [f32; 3] = [0.0, 0.0, 1.0];

/// Interleaves cell coordinates at `depth` into a locational code, root
/// child first. Child index is `x | y << 1 | z << 2`.
pub fn encode(cell: [u32; 3], depth: u32) -> u32 {
    let mut code = 0;
    for bit in (0..depth).rev() {
        let child = ((cell[0] >> bit) & 1) | (((cell[1] >> bit) & 1) << 1) | (((cell[2] >> bit) & 1) << 2);
        code = (code << 3) | child;
    }
    code
}

pub fn decode(code: u32, depth: u32) -> [u32; 3] {
    let mut cell = [0u32; 3];
    for level in 0..depth {
        let child = (code >> (3 * (depth - 1 - level))) & 7;
        for (a, c) in cell.iter_mut().enumerate() {
            *c = (*c << 1) | ((child >> a) & 1);
        }
    }
    cell
}

/// Center of a cell in the unit cube.
pub fn cell_center(code: u32, depth: u32) -> [f64; 3] {
    let n = (1u64 << depth) as f64;
    decode(code, depth).map(|c| (c as f64 + 0.5) / n)
}

/// Deterministic unit tangent orthogonal to `normal`.
pub fn tangent_for(normal: [f32; 3]) -> [f32; 3] {
    let n = Vec3::new(normal[0] as f64, normal[1] as f64, normal[2] as f64);
    let a = if n.x.abs() > 0.9 { Vec3::y() } else { Vec3::x() };
    let t = n.cross(&a).normalize();
    [t.x as f32, t.y as f32, t.z as f32]
}

/// Unit normal from an accumulated vector, or the default when it vanishes.
pub(crate) fn unit_or_default(v: Vec3) -> [f32; 3] {
    let len = v.norm();
    if len > 0.0 && len.is_finite() {
        [(v.x / len) as f32, (v.y / len) as f32, (v.z / len) as f32]
    } else {
        DEFAULT_NORMAL
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Voxel {
    pub code: u32,
    pub normal: [f32; 3],
    pub tangent: [f32; 3],
    /// Source point whose spatial rows a finest-level voxel carries.
    pub source: Option<u32>,
}

impl Voxel {
    pub fn new(code: u32, normal: [f32; 3]) -> Self {
        Voxel { code, normal, tangent: tangent_for(normal), source: None }
    }
}

/// One octree depth: voxels sorted by code plus per-channel spatial rows laid
/// out voxel by voxel (`voxel * k + c`).
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub depth: u32,
    pub voxels: Vec<Voxel>,
    pub spatial: [Vec<f32>; 3],
}

impl Level {
    pub fn new(depth: u32, voxels: Vec<Voxel>) -> Self {
        Level { depth, voxels, spatial: Default::default() }
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn find(&self, code: u32) -> Option<usize> {
        self.voxels.binary_search_by_key(&code, |v| v.code).ok()
    }

    pub fn has_spatial(&self) -> bool {
        self.spatial.iter().all(|s| !s.is_empty()) || self.voxels.is_empty()
    }

    pub fn spatial_row(&self, channel: usize, voxel: usize, k: usize) -> &[f32] {
        &self.spatial[channel][voxel * k..(voxel + 1) * k]
    }
}

/// Angular factors shared by all levels, one `D x k` matrix per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularFactors {
    pub light_res: usize,
    pub view_res: usize,
    pub channels: [DMatrix<f32>; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct OctreeBtf {
    pub(crate) d_min: u32,
    pub(crate) d_max: u32,
    /// Every depth `0..=d_max`.
    pub(crate) levels: Vec<Level>,
    pub(crate) components: [usize; 3],
    pub(crate) angular: Option<AngularFactors>,
}

/// Result of a point query: the voxel found and whether it sits at the
/// requested depth or is a coarser ancestor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hit {
    pub depth: u32,
    pub index: usize,
    pub exact: bool,
}

fn check_depths(d_min: u32, d_max: u32) -> Result<()> {
    if d_max > MAX_DEPTH {
        return Err(Error::ResourceLimit(format!("d_max {d_max} exceeds {MAX_DEPTH}")));
    }
    if d_min > MAX_COMPLETE_DEPTH {
        return Err(Error::ResourceLimit(format!("d_min {d_min} exceeds {MAX_COMPLETE_DEPTH}")));
    }
    if d_min > d_max {
        return Err(Error::invalid(format!("d_min {d_min} > d_max {d_max}")));
    }
    Ok(())
}

/// All `8^depth` codes in order.
pub(crate) fn complete_codes(depth: u32) -> std::ops::Range<u32> {
    0..(1u32 << (3 * depth))
}

/// Builds the surface octree of a unit-cube mesh. Finest voxels carry the
/// area-weighted normal of the triangles touching them; coarser voxels get
/// the default normal until [`OctreeBtf::build_lod`] fills them in.
pub fn voxelize(mesh: &Mesh, d_min: u32, d_max: u32) -> Result<OctreeBtf> {
    if mesh.is_empty() {
        return Err(Error::invalid("mesh has no triangles"));
    }
    if !mesh.in_unit_cube() {
        return Err(Error::invalid("mesh must be normalized to the unit cube"));
    }
    check_depths(d_min, d_max)?;

    let mut finest: std::collections::BTreeMap<u32, Vec3> = Default::default();
    for i in 0..mesh.triangles().len() {
        let tri = mesh.triangle(i);
        let weight = mesh.face_cross(i);
        descend(&tri, 0, [0, 0, 0], d_max, &mut |code| *finest.entry(code).or_insert_with(Vec3::zeros) += weight);
    }

    let mut levels = vec![Level::new(d_max, finest.iter().map(|(&c, &n)| Voxel::new(c, unit_or_default(n))).collect())];
    for depth in (0..d_max).rev() {
        let codes: Vec<u32> = if depth <= d_min {
            complete_codes(depth).collect()
        } else {
            let mut parents: Vec<u32> = levels.last().unwrap().voxels.iter().map(|v| v.code >> 3).collect();
            parents.dedup();
            parents
        };
        levels.push(Level::new(depth, codes.into_iter().map(|c| Voxel::new(c, DEFAULT_NORMAL)).collect()));
    }
    levels.reverse();
    if d_max <= d_min {
        let full = &mut levels[d_max as usize];
        let present: std::collections::HashMap<u32, [f32; 3]> = full.voxels.iter().map(|v| (v.code, v.normal)).collect();
        full.voxels = complete_codes(d_max)
            .map(|c| Voxel::new(c, present.get(&c).copied().unwrap_or(DEFAULT_NORMAL)))
            .collect();
    }
    Ok(OctreeBtf { d_min, d_max, levels, components: [0; 3], angular: None })
}

fn descend(tri: &[Vec3; 3], depth: u32, cell: [u32; 3], d_max: u32, hit: &mut impl FnMut(u32)) {
    let n = (1u64 << depth) as f64;
    let half = 0.5 / n;
    let center = Vec3::new((cell[0] as f64 + 0.5) / n, (cell[1] as f64 + 0.5) / n, (cell[2] as f64 + 0.5) / n);
    if !triangle_box_overlap(center, half, tri) {
        return;
    }
    if depth == d_max {
        hit(encode(cell, depth));
        return;
    }
    for child in 0..8u32 {
        let c = [cell[0] * 2 + (child & 1), cell[1] * 2 + ((child >> 1) & 1), cell[2] * 2 + ((child >> 2) & 1)];
        descend(tri, depth + 1, c, d_max, hit);
    }
}

impl OctreeBtf {
    /// Assembles a tree from already-built parts, checking structure.
    pub fn from_parts(
        d_min: u32,
        d_max: u32,
        levels: Vec<Level>,
        components: [usize; 3],
        angular: Option<AngularFactors>,
    ) -> Result<Self> {
        check_depths(d_min, d_max)?;
        let tree = OctreeBtf { d_min, d_max, levels, components, angular };
        tree.validate()?;
        Ok(tree)
    }

    pub fn d_min(&self) -> u32 {
        self.d_min
    }

    pub fn d_max(&self) -> u32 {
        self.d_max
    }

    /// Number of streamed levels, depths `d_min..=d_max`.
    pub fn level_count(&self) -> usize {
        (self.d_max - self.d_min + 1) as usize
    }

    pub fn level(&self, depth: u32) -> &Level {
        &self.levels[depth as usize]
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn components(&self) -> [usize; 3] {
        self.components
    }

    pub fn angular(&self) -> Option<&AngularFactors> {
        self.angular.as_ref()
    }

    /// True once spatial rows and angular factors are present everywhere.
    pub fn is_populated(&self) -> bool {
        self.angular.is_some() && self.levels[self.d_min as usize..].iter().all(Level::has_spatial)
    }

    /// Checks ordering, completeness, parent closure, row layout and tangent
    /// frames.
    pub fn validate(&self) -> Result<()> {
        if self.levels.len() != self.d_max as usize + 1 {
            return Err(Error::invalid("level list does not cover every depth"));
        }
        for (depth, level) in self.levels.iter().enumerate() {
            let depth = depth as u32;
            if level.depth != depth {
                return Err(Error::invalid(format!("level {depth} labelled {}", level.depth)));
            }
            if level.voxels.windows(2).any(|w| w[0].code >= w[1].code) {
                return Err(Error::invalid(format!("level {depth} codes not strictly increasing")));
            }
            if level.voxels.last().is_some_and(|v| (v.code as u64) >= 1u64 << (3 * depth)) {
                return Err(Error::invalid(format!("level {depth} code out of range")));
            }
            if depth <= self.d_min && level.len() != 1usize << (3 * depth) {
                return Err(Error::invalid(format!("level {depth} is not complete")));
            }
            if depth > self.d_min {
                let parent = &self.levels[depth as usize - 1];
                if let Some(v) = level.voxels.iter().find(|v| parent.find(v.code >> 3).is_none()) {
                    return Err(Error::invalid(format!("voxel {} at depth {depth} has no parent", v.code)));
                }
            }
            for (ch, rows) in level.spatial.iter().enumerate() {
                if !rows.is_empty() && rows.len() != level.len() * self.components[ch] {
                    return Err(Error::invalid(format!("level {depth} channel {ch} row length mismatch")));
                }
            }
            for v in &level.voxels {
                let n = Vec3::new(v.normal[0] as f64, v.normal[1] as f64, v.normal[2] as f64);
                let t = Vec3::new(v.tangent[0] as f64, v.tangent[1] as f64, v.tangent[2] as f64);
                if (n.norm() - 1.0).abs() > 1e-5 || (t.norm() - 1.0).abs() > 1e-5 || n.dot(&t).abs() > 1e-5 {
                    return Err(Error::invalid(format!("voxel {} at depth {depth} has a bad frame", v.code)));
                }
            }
        }
        if let Some(a) = &self.angular {
            for (ch, m) in a.channels.iter().enumerate() {
                if m.ncols() != self.components[ch] {
                    return Err(Error::invalid(format!("angular channel {ch} width mismatch")));
                }
            }
        }
        Ok(())
    }

    /// Finds the voxel containing `position` at `depth`, falling back to the
    /// deepest present ancestor. Complete levels guarantee a result.
    pub fn lookup(&self, position: [f64; 3], depth: u32) -> Result<Hit> {
        if position.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Domain(position));
        }
        if depth < self.d_min || depth > self.d_max {
            return Err(Error::invalid(format!("depth {depth} outside {}..={}", self.d_min, self.d_max)));
        }
        let n = 1u32 << depth;
        let cell = position.map(|p| ((p * n as f64) as u32).min(n - 1));
        let mut code = encode(cell, depth);
        for d in (0..=depth).rev() {
            if let Some(index) = self.levels[d as usize].find(code) {
                return Ok(Hit { depth: d, index, exact: d == depth });
            }
            code >>= 3;
        }
        unreachable!("root level is always complete")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force_cells(mesh: &Mesh, depth: u32) -> Vec<u32> {
        let n = 1u32 << depth;
        let mut out = Vec::new();
        for code in complete_codes(depth) {
            let c = cell_center(code, depth);
            let center = Vec3::new(c[0], c[1], c[2]);
            if (0..mesh.triangles().len()).any(|i| triangle_box_overlap(center, 0.5 / n as f64, &mesh.triangle(i))) {
                out.push(code);
            }
        }
        out
    }

    proptest! {
        #[test]
        fn codes_roundtrip(x in 0u32..1024, y in 0u32..1024, z in 0u32..1024, depth in 0u32..=10) {
            let mask = (1u32 << depth) - 1;
            let cell = [x & mask, y & mask, z & mask];
            prop_assert_eq!(decode(encode(cell, depth), depth), cell);
        }
    }

    #[test]
    fn parent_is_shift() {
        let cell = [5, 2, 7];
        assert_eq!(encode(cell, 3) >> 3, encode([2, 1, 3], 2));
        assert_eq!(encode([1, 0, 0], 1), 1);
        assert_eq!(encode([0, 1, 0], 1), 2);
        assert_eq!(encode([0, 0, 1], 1), 4);
    }

    #[test]
    fn unit_cube_surface_fills_depth_one() {
        let m = Mesh::box_surface([0.0; 3], [1.0; 3]).unwrap();
        let t = voxelize(&m, 0, 1).unwrap();
        assert_eq!(t.level(1).len(), 8);
        assert_eq!(t.level(1).voxels.iter().map(|v| v.code).collect::<Vec<_>>(), brute_force_cells(&m, 1));
    }

    #[test]
    fn single_triangle_in_one_octant() {
        let m = Mesh::new(vec![[0.05, 0.05, 0.25], [0.45, 0.05, 0.25], [0.05, 0.45, 0.25]], vec![[0, 1, 2]]).unwrap();
        let t = voxelize(&m, 0, 1).unwrap();
        assert_eq!(t.level(0).len(), 1);
        assert_eq!(t.level(1).voxels.iter().map(|v| v.code).collect::<Vec<_>>(), vec![0]);
        assert_eq!(t.level(1).voxels[0].normal, [0.0, 0.0, 1.0]);
        // With d_min = 1 the same level is forced complete.
        assert_eq!(voxelize(&m, 1, 1).unwrap().level(1).len(), 8);
    }

    #[test]
    fn root_only_tree() {
        let t = voxelize(&Mesh::placeholder_sphere(), 0, 0).unwrap();
        assert_eq!(t.levels().len(), 1);
        assert_eq!(t.level(0).len(), 1);
        assert_eq!(t.level_count(), 1);
    }

    #[test]
    fn depth_limits() {
        let m = Mesh::placeholder_sphere();
        assert!(matches!(voxelize(&m, 0, 11), Err(Error::ResourceLimit(_))));
        assert!(matches!(voxelize(&m, 8, 9), Err(Error::ResourceLimit(_))));
        assert!(matches!(voxelize(&m, 3, 2), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn sphere_matches_brute_force_and_invariants() {
        let m = Mesh::placeholder_sphere();
        let t = voxelize(&m, 2, 4).unwrap();
        t.validate().unwrap();
        assert_eq!(t.level(4).voxels.iter().map(|v| v.code).collect::<Vec<_>>(), brute_force_cells(&m, 4));
        assert_eq!(t.level(2).len(), 64);
        for v in &t.level(4).voxels {
            let c = cell_center(v.code, 4);
            let outward = Vec3::new(c[0] - 0.5, c[1] - 0.5, c[2] - 0.5);
            let n = Vec3::new(v.normal[0] as f64, v.normal[1] as f64, v.normal[2] as f64);
            assert!(n.dot(&outward) > 0.0);
        }
    }

    #[test]
    fn tangent_rule() {
        assert_eq!(tangent_for([0.0, 0.0, 1.0]), [0.0, 1.0, 0.0]);
        let t = tangent_for([1.0, 0.0, 0.0]);
        assert_eq!(t, [0.0, 0.0, 1.0]);
    }

    #[test]
    fn lookup_matches_list_scan() {
        let t = voxelize(&Mesh::placeholder_sphere(), 1, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let p = [0; 3].map(|_: i32| rng.random_range(0.0..1.0));
            let depth = rng.random_range(1..=4);
            let hit = t.lookup(p, depth).unwrap();
            // Oracle: walk depths from the requested one upward with a linear scan.
            let mut expected = None;
            for d in (1..=depth).rev() {
                let n = (1u32 << d) as f64;
                let cell = p.map(|x| (x * n) as u32);
                let code = encode(cell, d);
                if let Some(i) = t.level(d).voxels.iter().position(|v| v.code == code) {
                    expected = Some(Hit { depth: d, index: i, exact: d == depth });
                    break;
                }
            }
            assert_eq!(Some(hit), expected);
        }
        assert!(t.lookup([0.5, 0.5, 0.5], 1).unwrap().exact);
        assert!(matches!(t.lookup([1.5, 0.0, 0.0], 2), Err(Error::Domain(_))));
        let last = t.level(4).voxels[7];
        let hit = t.lookup(cell_center(last.code, 4), 4).unwrap();
        assert_eq!((hit.index, hit.exact), (7, true));
    }
}
