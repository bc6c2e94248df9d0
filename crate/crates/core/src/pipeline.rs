//! End-to-end helpers tying the stages together.

use crate::btf::synth::lattice_points;
use crate::btf::{compress_dfmf, BtfTensor, CompressedBtf};
use crate::chunk::Container;
use crate::error::{Error, Result};
use crate::octree::{voxelize, Mesh, OctreeBtf};

/// Voxelizes `mesh`, assigns spatial rows from `points` and builds the LOD.
pub fn build_octree(mesh: &Mesh, btf: &CompressedBtf, points: &[[f64; 3]], d_min: u32, d_max: u32) -> Result<OctreeBtf> {
    let mut tree = voxelize(mesh, d_min, d_max)?;
    tree.assign_spatial(btf, points)?;
    tree.build_lod()?;
    Ok(tree)
}

/// Side length of the cubic lattice a tensor's columns were sampled on.
pub fn lattice_side(point_count: usize) -> Result<usize> {
    let g = (point_count as f64).cbrt().round() as usize;
    if g == 0 || g * g * g != point_count {
        return Err(Error::invalid(format!("{point_count} points do not form a cubic lattice")));
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompressOptions {
    pub k_y: usize,
    pub k_uv: usize,
    pub d_min: u32,
    pub d_max: u32,
}

/// Factorizes a lattice-sampled tensor and packs it onto `mesh`.
pub fn compress_to_container(tensor: &BtfTensor, mesh: &Mesh, opts: CompressOptions) -> Result<(Container, OctreeBtf)> {
    let points = lattice_points(lattice_side(tensor.point_count())?);
    let btf = compress_dfmf(tensor, opts.k_y, opts.k_uv)?;
    let tree = build_octree(mesh, &btf, &points, opts.d_min, opts.d_max)?;
    Ok((Container::from_tree(&tree, mesh)?, tree))
}
