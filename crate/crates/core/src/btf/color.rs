//! Color decorrelation: BT.601 YUV, log-luminance and chroma ratios.

use nalgebra::DMatrix;

use super::tensor::BtfTensor;
use crate::error::Result;

/// Luminance floor applied before the logarithm and the chroma division.
pub const LUMINANCE_EPSILON: f64 = 1e-6;

const WR: f64 = 0.299;
const WG: f64 = 0.587;
const WB: f64 = 0.114;
const U_SCALE: f64 = 0.492;
const V_SCALE: f64 = 0.877;

pub fn rgb_to_yuv([r, g, b]: [f64; 3]) -> [f64; 3] {
    let y = WR * r + WG * g + WB * b;
    [y, U_SCALE * (b - y), V_SCALE * (r - y)]
}

pub fn yuv_to_rgb([y, u, v]: [f64; 3]) -> [f64; 3] {
    let r = y + v / V_SCALE;
    let b = y + u / U_SCALE;
    let g = (y - WR * r - WB * b) / WG;
    [r, g, b]
}

/// `(ln Y, U / Y, V / Y)` with `Y` clamped to [`LUMINANCE_EPSILON`].
pub fn decorrelate_rgb(rgb: [f64; 3]) -> [f64; 3] {
    let [y, u, v] = rgb_to_yuv(rgb);
    let y = y.max(LUMINANCE_EPSILON);
    [y.ln(), u / y, v / y]
}

/// Inverse of [`decorrelate_rgb`]; negative RGB results are clamped to zero.
pub fn recorrelate_rgb([ly, u, v]: [f64; 3]) -> [f64; 3] {
    let y = ly.exp();
    yuv_to_rgb([y, u * y, v * y]).map(|c| c.max(0.0))
}

/// Decorrelated `Y'`, `U'`, `V'` matrices with the shape of the source tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct DecorrelatedChannels {
    pub light_res: usize,
    pub view_res: usize,
    pub channels: [DMatrix<f32>; 3],
}

impl DecorrelatedChannels {
    pub fn luminance(&self) -> &DMatrix<f32> {
        &self.channels[0]
    }
}

pub fn decorrelate(tensor: &BtfTensor) -> DecorrelatedChannels {
    let (rows, cols) = (tensor.pair_count(), tensor.point_count());
    let mut out = [
        DMatrix::<f32>::zeros(rows, cols),
        DMatrix::<f32>::zeros(rows, cols),
        DMatrix::<f32>::zeros(rows, cols),
    ];
    let [r, g, b] = tensor.channels();
    for j in 0..cols {
        for i in 0..rows {
            let d = decorrelate_rgb([r[(i, j)] as f64, g[(i, j)] as f64, b[(i, j)] as f64]);
            for c in 0..3 {
                out[c][(i, j)] = d[c] as f32;
            }
        }
    }
    DecorrelatedChannels {
        light_res: tensor.light_res(),
        view_res: tensor.view_res(),
        channels: out,
    }
}

pub fn recorrelate(channels: &DecorrelatedChannels) -> Result<BtfTensor> {
    let [dy, du, dv] = &channels.channels;
    let (rows, cols) = (dy.nrows(), dy.ncols());
    let mut out = [
        DMatrix::<f32>::zeros(rows, cols),
        DMatrix::<f32>::zeros(rows, cols),
        DMatrix::<f32>::zeros(rows, cols),
    ];
    for j in 0..cols {
        for i in 0..rows {
            let rgb = recorrelate_rgb([dy[(i, j)] as f64, du[(i, j)] as f64, dv[(i, j)] as f64]);
            for c in 0..3 {
                out[c][(i, j)] = rgb[c] as f32;
            }
        }
    }
    BtfTensor::new(channels.light_res, channels.view_res, out)
}
