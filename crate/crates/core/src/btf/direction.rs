//! Hemispherical directions and their parabolic-map parameterization.
//!
//! A direction `(x, y, z)` with `z >= 0` maps to the disk point
//! `p = (x / (1 + z), y / (1 + z))`. A [`DirectionGrid`] tiles the square
//! `[-1, 1]^2` with `R x R` cells; cells whose center lies outside the unit
//! disk are flagged invalid but still carry a direction (the center pulled
//! onto the horizon) so interpolation near grazing angles stays smooth.

use crate::error::{Error, Result};

/// Unit vector in the upper hemisphere of a local shading frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    x: f64,
    y: f64,
    z: f64,
}

impl Direction {
    pub const NORMAL: Direction = Direction { x: 0.0, y: 0.0, z: 1.0 };

    /// Normalizes `(x, y, z)`. Fails for zero-length or lower-hemisphere input.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let len = (x * x + y * y + z * z).sqrt();
        if !len.is_finite() || len == 0.0 {
            return Err(Error::invalid("direction has zero or non-finite length"));
        }
        let (x, y, z) = (x / len, y / len, z / len);
        if z < 0.0 {
            return Err(Error::invalid(format!("direction below the hemisphere (z = {z})")));
        }
        Ok(Direction { x, y, z })
    }

    /// Inverse parabolic map. Points outside the unit disk are pulled onto
    /// its boundary, i.e. onto the horizon.
    pub fn from_parabolic(px: f64, py: f64) -> Self {
        let mut r2 = px * px + py * py;
        let (mut px, mut py) = (px, py);
        if r2 > 1.0 {
            let r = r2.sqrt();
            px /= r;
            py /= r;
            r2 = 1.0;
        }
        let denom = 1.0 + r2;
        Direction {
            x: 2.0 * px / denom,
            y: 2.0 * py / denom,
            z: ((1.0 - r2) / denom).max(0.0),
        }
    }

    pub fn to_parabolic(self) -> (f64, f64) {
        let d = 1.0 + self.z;
        (self.x / d, self.y / d)
    }

    pub fn x(self) -> f64 {
        self.x
    }

    pub fn y(self) -> f64 {
        self.y
    }

    pub fn z(self) -> f64 {
        self.z
    }

    pub fn dot(self, other: Direction) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Normalized half vector between two directions.
    pub fn halfway(self, other: Direction) -> Direction {
        let (x, y, z) = (self.x + other.x, self.y + other.y, self.z + other.z);
        let len = (x * x + y * y + z * z).sqrt();
        if len == 0.0 {
            return Direction::NORMAL;
        }
        Direction { x: x / len, y: y / len, z: z / len }
    }
}

/// `R x R` parabolic-map grid over the hemisphere.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionGrid {
    resolution: usize,
    directions: Vec<Direction>,
    valid: Vec<bool>,
}

impl DirectionGrid {
    /// Builds the grid; `resolution` must be at least 1.
    pub fn new(resolution: usize) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::invalid("direction grid resolution must be at least 1"));
        }
        let mut directions = Vec::with_capacity(resolution * resolution);
        let mut valid = Vec::with_capacity(resolution * resolution);
        for row in 0..resolution {
            for col in 0..resolution {
                let (px, py) = Self::center(resolution, row, col);
                valid.push(px * px + py * py <= 1.0);
                directions.push(Direction::from_parabolic(px, py));
            }
        }
        Ok(DirectionGrid { resolution, directions, valid })
    }

    /// Parabolic coordinates of the center of cell `(row, col)`; rows run
    /// along `y`, columns along `x`.
    pub fn center(resolution: usize, row: usize, col: usize) -> (f64, f64) {
        let r = resolution as f64;
        (
            (col as f64 + 0.5) / r * 2.0 - 1.0,
            (row as f64 + 0.5) / r * 2.0 - 1.0,
        )
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn direction(&self, row: usize, col: usize) -> Direction {
        self.directions[row * self.resolution + col]
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.valid[row * self.resolution + col]
    }

    /// Directions in row-major cell order.
    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    /// The cell a direction falls into, as `(row, col)`.
    pub fn cell_of(&self, dir: Direction) -> (usize, usize) {
        let (px, py) = dir.to_parabolic();
        let r = self.resolution as f64;
        let to_index = |p: f64| (((p + 1.0) / 2.0 * r).floor().max(0.0) as usize).min(self.resolution - 1);
        (to_index(py), to_index(px))
    }
}

/// Bilinear interpolation stencil over one grid: up to four `(cell, weight)`
/// pairs, cells given as row-major indices.
fn bilinear(resolution: usize, dir: Direction) -> [(usize, f64); 4] {
    let (px, py) = dir.to_parabolic();
    let r = resolution as f64;
    let axis = |p: f64| -> (usize, usize, f64) {
        let f = ((p + 1.0) / 2.0 * r - 0.5).clamp(0.0, r - 1.0);
        let i0 = (f.floor() as usize).min(resolution - 1);
        let i1 = (i0 + 1).min(resolution - 1);
        (i0, i1, f - i0 as f64)
    };
    let (c0, c1, tx) = axis(px);
    let (r0, r1, ty) = axis(py);
    [
        (r0 * resolution + c0, (1.0 - ty) * (1.0 - tx)),
        (r0 * resolution + c1, (1.0 - ty) * tx),
        (r1 * resolution + c0, ty * (1.0 - tx)),
        (r1 * resolution + c1, ty * tx),
    ]
}

/// Row of the nested (view outer, light inner) parabolic layout.
pub fn nested_row(light_res: usize, view_cell: usize, light_cell: usize) -> usize {
    view_cell * light_res * light_res + light_cell
}

/// Sixteen-tap stencil into the rows of an angular factor: bilinear in the
/// view grid composed with bilinear in the light grid.
#[derive(Debug, Clone, Copy)]
pub struct AngularTaps {
    taps: [(usize, f64); 16],
}

impl AngularTaps {
    pub fn new(light_res: usize, view_res: usize, light: Direction, view: Direction) -> Self {
        let lt = bilinear(light_res, light);
        let vt = bilinear(view_res, view);
        let mut taps = [(0usize, 0.0f64); 16];
        for (i, &(vc, vw)) in vt.iter().enumerate() {
            for (j, &(lc, lw)) in lt.iter().enumerate() {
                taps[i * 4 + j] = (nested_row(light_res, vc, lc), vw * lw);
            }
        }
        AngularTaps { taps }
    }

    pub fn taps(&self) -> &[(usize, f64); 16] {
        &self.taps
    }

    /// Interpolates `column(row)` over the stencil.
    pub fn sample(&self, mut column: impl FnMut(usize) -> f64) -> f64 {
        self.taps
            .iter()
            .filter(|(_, w)| *w != 0.0)
            .map(|&(row, w)| w * column(row))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution_one_is_the_pole() {
        let grid = DirectionGrid::new(1).unwrap();
        assert_eq!(grid.len(), 1);
        assert!(grid.is_valid(0, 0));
        let d = grid.direction(0, 0);
        assert_eq!((d.x(), d.y(), d.z()), (0.0, 0.0, 1.0));
    }

    #[test]
    fn resolution_two_is_all_valid() {
        let grid = DirectionGrid::new(2).unwrap();
        assert_eq!(grid.len(), 4);
        for row in 0..2 {
            for col in 0..2 {
                let (px, py) = DirectionGrid::center(2, row, col);
                assert!((px * px + py * py).sqrt() < 1.0);
                assert!(grid.is_valid(row, col));
            }
        }
    }

    #[test]
    fn zero_resolution_rejected() {
        assert!(DirectionGrid::new(0).is_err());
    }

    #[test]
    fn cell_directions_roundtrip_into_their_cell() {
        for res in [1, 2, 3, 5, 8, 16] {
            let grid = DirectionGrid::new(res).unwrap();
            for row in 0..res {
                for col in 0..res {
                    let d = grid.direction(row, col);
                    let len = (d.x() * d.x() + d.y() * d.y() + d.z() * d.z()).sqrt();
                    assert!((len - 1.0).abs() < 1e-6);
                    assert!(d.z() >= 0.0);
                    if grid.is_valid(row, col) {
                        let (px, py) = d.to_parabolic();
                        let (cx, cy) = DirectionGrid::center(res, row, col);
                        assert!((px - cx).abs() < 1e-6 && (py - cy).abs() < 1e-6);
                        assert_eq!(grid.cell_of(d), (row, col));
                    }
                }
            }
        }
    }

    #[test]
    fn invalid_cells_are_exactly_outside_the_disk() {
        let grid = DirectionGrid::new(8).unwrap();
        for row in 0..8 {
            for col in 0..8 {
                let (px, py) = DirectionGrid::center(8, row, col);
                assert_eq!(grid.is_valid(row, col), px * px + py * py <= 1.0);
            }
        }
        // Corner cells of an 8x8 grid fall outside the disk.
        assert!(!grid.is_valid(0, 0));
        assert!(grid.is_valid(3, 4));
    }

    #[test]
    fn taps_at_cell_centers_hit_one_row() {
        let light = DirectionGrid::new(4).unwrap();
        let view = DirectionGrid::new(2).unwrap();
        let taps = AngularTaps::new(4, 2, light.direction(1, 2), view.direction(1, 0));
        let expected = nested_row(4, 2, 1 * 4 + 2);
        let total: f64 = taps.taps().iter().map(|t| t.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let at_expected: f64 = taps.taps().iter().filter(|t| t.0 == expected).map(|t| t.1).sum();
        assert!((at_expected - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_lower_hemisphere() {
        assert!(Direction::new(0.0, 0.0, -1.0).is_err());
        assert!(Direction::new(0.0, 0.0, 0.0).is_err());
        assert!(Direction::new(1.0, 0.0, 0.0).is_ok());
    }
}
