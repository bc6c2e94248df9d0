//! Analytic test materials: Lambert plus a Blinn-Phong lobe, laid out as a
//! seeded palette over cubic patches of object space.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::direction::{nested_row, Direction, DirectionGrid};
use super::tensor::BtfTensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub albedo: [f64; 3],
    pub specular: [f64; 3],
    pub exponent: f64,
}

impl Material {
    pub fn lambertian(albedo: [f64; 3]) -> Self {
        Material { albedo, specular: [0.0; 3], exponent: 1.0 }
    }

    /// Reflectance in the local frame with normal `(0, 0, 1)`. The Lambert
    /// term carries the cosine, like a measured apparent BRDF would.
    pub fn reflectance(&self, light: Direction, view: Direction) -> [f64; 3] {
        let cos_l = light.z().max(0.0);
        let lobe = light.halfway(view).z().max(0.0).powf(self.exponent);
        let mut out = [0.0; 3];
        for c in 0..3 {
            out[c] = self.albedo[c] * cos_l / PI + self.specular[c] * lobe;
        }
        out
    }
}

/// Assignment of materials to object-space positions: the unit cube is cut
/// into `2^patch_depth` patches per axis, each carrying one palette entry.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialField {
    palette: Vec<Material>,
    patch_depth: u32,
    assignment: Vec<u16>,
}

impl MaterialField {
    pub const DEFAULT_PALETTE: usize = 4;
    pub const DEFAULT_PATCH_DEPTH: u32 = 2;

    pub fn uniform(material: Material) -> Self {
        MaterialField { palette: vec![material], patch_depth: 0, assignment: vec![0] }
    }

    pub fn from_seed(seed: u64, palette_size: usize, patch_depth: u32, lambertian_only: bool) -> Result<Self> {
        if palette_size == 0 || palette_size > u16::MAX as usize {
            return Err(Error::invalid("palette size must be between 1 and 65535"));
        }
        if patch_depth > 6 {
            return Err(Error::ResourceLimit(format!("patch depth {patch_depth} > 6")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let palette = (0..palette_size)
            .map(|_| {
                let albedo = [0; 3].map(|_: i32| rng.random_range(0.15..0.9));
                let weight = rng.random_range(0.05..0.5);
                let tint = [0; 3].map(|_: i32| rng.random_range(0.7..1.0));
                let exponent = rng.random_range(4.0..48.0);
                if lambertian_only {
                    Material::lambertian(albedo)
                } else {
                    Material { albedo, specular: tint.map(|t| t * weight), exponent }
                }
            })
            .collect();
        let patches = 1usize << (3 * patch_depth);
        let assignment = (0..patches).map(|_| rng.random_range(0..palette_size) as u16).collect();
        Ok(MaterialField { palette, patch_depth, assignment })
    }

    pub fn palette(&self) -> &[Material] {
        &self.palette
    }

    pub fn material_index(&self, position: [f64; 3]) -> usize {
        let n = 1usize << self.patch_depth;
        let cell = position.map(|p| ((p.clamp(0.0, 1.0) * n as f64) as usize).min(n - 1));
        self.assignment[(cell[2] * n + cell[1]) * n + cell[0]] as usize
    }

    pub fn material_at(&self, position: [f64; 3]) -> &Material {
        &self.palette[self.material_index(position)]
    }
}

/// Lattice of `g^3` cell-center points in the unit cube, x fastest.
pub fn lattice_points(point_grid: usize) -> Vec<[f64; 3]> {
    let g = point_grid as f64;
    let mut out = Vec::with_capacity(point_grid.pow(3));
    for z in 0..point_grid {
        for y in 0..point_grid {
            for x in 0..point_grid {
                out.push([(x as f64 + 0.5) / g, (y as f64 + 0.5) / g, (z as f64 + 0.5) / g]);
            }
        }
    }
    out
}

/// Seeded synthetic BTF over a `g^3` point lattice with the default palette.
pub fn synthesize_btf(point_grid: usize, light: &DirectionGrid, view: &DirectionGrid, material_seed: u64) -> Result<BtfTensor> {
    let field = MaterialField::from_seed(
        material_seed,
        MaterialField::DEFAULT_PALETTE,
        MaterialField::DEFAULT_PATCH_DEPTH,
        false,
    )?;
    synthesize_with_field(&lattice_points(point_grid.max(1)), light, view, &field)
}

pub fn synthesize_with_field(
    points: &[[f64; 3]],
    light: &DirectionGrid,
    view: &DirectionGrid,
    field: &MaterialField,
) -> Result<BtfTensor> {
    if points.is_empty() {
        return Err(Error::invalid("no surface points"));
    }
    let rows = light.len() * view.len();
    let lr = light.resolution();
    // Columns of one material are identical, so tabulate per palette entry.
    let tables: Vec<Vec<[f32; 3]>> = field
        .palette()
        .iter()
        .map(|m| {
            let mut t = vec![[0f32; 3]; rows];
            for (vc, &v) in view.directions().iter().enumerate() {
                for (lc, &l) in light.directions().iter().enumerate() {
                    t[nested_row(lr, vc, lc)] = m.reflectance(l, v).map(|x| x as f32);
                }
            }
            t
        })
        .collect();
    let index: Vec<usize> = points.iter().map(|&p| field.material_index(p)).collect();
    let channel = |c: usize| DMatrix::from_fn(rows, points.len(), |i, j| tables[index[j]][i][c]);
    BtfTensor::new(lr, view.resolution(), [channel(0), channel(1), channel(2)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambert_pi_albedo_overhead_light_is_one() {
        let light = DirectionGrid::new(1).unwrap();
        let view = DirectionGrid::new(3).unwrap();
        let field = MaterialField::uniform(Material::lambertian([PI; 3]));
        let t = synthesize_with_field(&lattice_points(2), &light, &view, &field).unwrap();
        for c in 0..3 {
            assert!(t.channel(c).iter().all(|v| (v - 1.0).abs() < 1e-6));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let light = DirectionGrid::new(2).unwrap();
        let view = DirectionGrid::new(2).unwrap();
        let a = synthesize_btf(3, &light, &view, 42).unwrap();
        let b = synthesize_btf(3, &light, &view, 42).unwrap();
        assert_eq!(a, b);
        let c = synthesize_btf(3, &light, &view, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn grazing_light_has_no_lambert_term() {
        let m = Material::lambertian([0.8, 0.5, 0.2]);
        let grazing = Direction::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(m.reflectance(grazing, Direction::NORMAL), [0.0; 3]);
    }

    #[test]
    fn patches_are_constant() {
        let f = MaterialField::from_seed(3, 4, 2, false).unwrap();
        assert_eq!(f.material_index([0.01, 0.01, 0.01]), f.material_index([0.24, 0.2, 0.1]));
        assert_eq!(lattice_points(4).len(), 64);
    }
}
