//! Decorrelated full matrix factorization: per-channel truncated SVD of the
//! log-luminance and chroma-ratio matrices, and rank-k evaluation.

use nalgebra::DMatrix;

use super::color::{decorrelate, recorrelate_rgb};
use super::direction::{AngularTaps, Direction};
use super::svd::truncated_svd;
use super::tensor::BtfTensor;
use crate::error::{Error, Result};

pub const DEFAULT_K_Y: usize = 72;
pub const DEFAULT_K_UV: usize = 8;
/// Components are grouped into RGBA layers of four.
pub const LAYER_WIDTH: usize = 4;

pub fn check_component_count(k: usize) -> Result<()> {
    if k == 0 || !k.is_multiple_of(LAYER_WIDTH) {
        Err(Error::InvalidComponentCount(k))
    } else {
        Ok(())
    }
}

/// Anything that can serve entries of an angular factor `U~`.
pub trait AngularSource {
    fn component(&self, row: usize, c: usize) -> f32;
}

/// Truncated factorization of one decorrelated channel.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedChannel {
    /// `D x k` eigen-ABRDFs.
    pub angular: DMatrix<f32>,
    /// `k x P` eigen-textures with singular values multiplied in.
    pub spatial: DMatrix<f32>,
}

impl CompressedChannel {
    pub fn components(&self) -> usize {
        self.angular.ncols()
    }

    /// Column of `S~V~` for one point.
    pub fn spatial_row(&self, point: usize) -> &[f32] {
        let k = self.components();
        &self.spatial.as_slice()[point * k..(point + 1) * k]
    }

    /// `U~[:, 0..k_used] * S~V~[0..k_used, :]` computed in f64.
    pub fn reconstruct(&self, k_used: usize) -> DMatrix<f64> {
        let u = self.angular.columns(0, k_used).map(|v| v as f64);
        let s = self.spatial.rows(0, k_used).map(|v| v as f64);
        u * s
    }
}

impl AngularSource for CompressedChannel {
    fn component(&self, row: usize, c: usize) -> f32 {
        self.angular[(row, c)]
    }
}

/// Y, U and V channels plus the direction-grid layout of their rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedBtf {
    pub light_res: usize,
    pub view_res: usize,
    pub channels: [CompressedChannel; 3],
}

impl CompressedBtf {
    pub fn point_count(&self) -> usize {
        self.channels[0].spatial.ncols()
    }

    pub fn components(&self) -> [usize; 3] {
        self.channels.each_ref().map(|c| c.components())
    }
}

pub fn compress_dfmf(tensor: &BtfTensor, k_y: usize, k_uv: usize) -> Result<CompressedBtf> {
    check_component_count(k_y)?;
    check_component_count(k_uv)?;
    let decorrelated = decorrelate(tensor);
    let ks = [k_y, k_uv, k_uv];
    let mut out = Vec::with_capacity(3);
    for (m, &k) in decorrelated.channels.iter().zip(ks.iter()) {
        let svd = truncated_svd(m, k)?;
        out.push(CompressedChannel {
            angular: svd.angular.map(|v| v as f32),
            spatial: svd.spatial.map(|v| v as f32),
        });
    }
    Ok(CompressedBtf {
        light_res: tensor.light_res(),
        view_res: tensor.view_res(),
        channels: out.try_into().expect("three channels"),
    })
}

/// `sum_{c < k_used} u_c(taps) * s_c` for one channel.
pub fn sample_channel(taps: &AngularTaps, angular: &impl AngularSource, spatial_row: &[f32], k_used: usize) -> f64 {
    let k_used = k_used.min(spatial_row.len());
    if k_used == 0 {
        return 0.0;
    }
    taps.sample(|row| {
        spatial_row[..k_used]
            .iter()
            .enumerate()
            .map(|(c, &s)| angular.component(row, c) as f64 * s as f64)
            .sum()
    })
}

/// Reflectance of one point for a local light/view pair using the first
/// `k_used[ch]` components of each channel.
pub fn evaluate(btf: &CompressedBtf, point: usize, light: Direction, view: Direction, k_used: [usize; 3]) -> Result<[f64; 3]> {
    let points = btf.point_count();
    if point >= points {
        return Err(Error::Index { index: point, len: points });
    }
    for (ch, &k) in btf.channels.iter().zip(k_used.iter()) {
        if k > ch.components() {
            return Err(Error::InvalidRank { k, max: ch.components() });
        }
    }
    let taps = AngularTaps::new(btf.light_res, btf.view_res, light, view);
    let mut decorrelated = [0.0; 3];
    for c in 0..3 {
        let ch = &btf.channels[c];
        decorrelated[c] = sample_channel(&taps, ch, ch.spatial_row(point), k_used[c]);
    }
    Ok(recorrelate_rgb(decorrelated))
}
