use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;

use super::direction::DirectionGrid;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"BTFT";
const VERSION: u32 = 1;

/// One matrix per color channel. Rows are nested (view, light) direction
/// pairs, columns are surface points.
#[derive(Debug, Clone, PartialEq)]
pub struct BtfTensor {
    light_res: usize,
    view_res: usize,
    channels: [DMatrix<f32>; 3],
}

impl BtfTensor {
    pub fn new(light_res: usize, view_res: usize, channels: [DMatrix<f32>; 3]) -> Result<Self> {
        if light_res == 0 || view_res == 0 {
            return Err(Error::invalid("grid resolutions must be at least 1"));
        }
        let rows = light_res * light_res * view_res * view_res;
        let cols = channels[0].ncols();
        if cols == 0 {
            return Err(Error::invalid("tensor has no surface points"));
        }
        for m in &channels {
            if m.nrows() != rows || m.ncols() != cols {
                return Err(Error::invalid(format!(
                    "channel shape {}x{} does not match {rows}x{cols}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::invalid("reflectance values must be finite and non-negative"));
            }
        }
        Ok(BtfTensor { light_res, view_res, channels })
    }

    pub fn light_res(&self) -> usize {
        self.light_res
    }

    pub fn view_res(&self) -> usize {
        self.view_res
    }

    pub fn light_grid(&self) -> DirectionGrid {
        DirectionGrid::new(self.light_res).expect("validated at construction")
    }

    pub fn view_grid(&self) -> DirectionGrid {
        DirectionGrid::new(self.view_res).expect("validated at construction")
    }

    /// Number of direction pairs `D`.
    pub fn pair_count(&self) -> usize {
        self.channels[0].nrows()
    }

    /// Number of surface points `P`.
    pub fn point_count(&self) -> usize {
        self.channels[0].ncols()
    }

    pub fn channel(&self, c: usize) -> &DMatrix<f32> {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[DMatrix<f32>; 3] {
        &self.channels
    }

    pub fn rgb(&self, row: usize, point: usize) -> [f32; 3] {
        [
            self.channels[0][(row, point)],
            self.channels[1][(row, point)],
            self.channels[2][(row, point)],
        ]
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u32::<LittleEndian>(self.pair_count() as u32)?;
        w.write_u32::<LittleEndian>(self.point_count() as u32)?;
        w.write_u32::<LittleEndian>(self.light_res as u32)?;
        w.write_u32::<LittleEndian>(self.view_res as u32)?;
        let mut row_buf = Vec::with_capacity(self.point_count() * 4);
        for m in &self.channels {
            for r in 0..m.nrows() {
                row_buf.clear();
                for v in m.row(r).iter() {
                    row_buf.extend_from_slice(&v.to_le_bytes());
                }
                w.write_all(&row_buf)?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a BTF tensor file (bad magic)".into()));
        }
        let version = r.read_u32::<LittleEndian>().map_err(truncated)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported tensor version {version}")));
        }
        let pairs = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        let points = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        let light_res = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        let view_res = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        if pairs != light_res * light_res * view_res * view_res {
            return Err(Error::Format(format!(
                "pair count {pairs} inconsistent with grid resolutions {light_res}/{view_res}"
            )));
        }
        let mut channels = Vec::with_capacity(3);
        let mut row = vec![0f32; points];
        for _ in 0..3 {
            let mut m = DMatrix::<f32>::zeros(pairs, points);
            for i in 0..pairs {
                r.read_f32_into::<LittleEndian>(&mut row).map_err(truncated)?;
                for (j, v) in row.iter().enumerate() {
                    m[(i, j)] = *v;
                }
            }
            channels.push(m);
        }
        let channels: [DMatrix<f32>; 3] = channels.try_into().expect("three channels");
        BtfTensor::new(light_res, view_res, channels)
    }
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("tensor file is truncated".into())
    } else {
        Error::Io(e)
    }
}
