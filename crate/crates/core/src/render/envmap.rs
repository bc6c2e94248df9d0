//! Median-cut approximation of an equirectangular environment by
//! directional lights.
//!
//! Row `y` of an `W x H` map covers polar angles `theta` (from +z) in
//! `[pi y / H, pi (y + 1) / H]`, column `x` covers azimuths `phi` in
//! `[2 pi x / W, 2 pi (x + 1) / W]`. A texel's power is its RGB value times
//! its solid angle.

use std::f64::consts::PI;

use super::image::Image;
use super::scene::{LightKind, LightSource, Vec3};
use crate::error::{Error, Result};

/// Luminance weights applied before splitting.
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

struct Texels {
    width: usize,
    height: usize,
    power: Vec<[f64; 3]>,
    weight: Vec<f64>,
    direction: Vec<Vec3>,
}

impl Texels {
    fn new(env: &Image) -> Self {
        let (w, h) = (env.width(), env.height());
        let mut t = Texels { width: w, height: h, power: Vec::new(), weight: Vec::new(), direction: Vec::new() };
        for y in 0..h {
            let (t0, t1) = (PI * y as f64 / h as f64, PI * (y + 1) as f64 / h as f64);
            let omega = (2.0 * PI / w as f64) * (t0.cos() - t1.cos());
            let theta = 0.5 * (t0 + t1);
            for x in 0..w {
                let phi = 2.0 * PI * (x as f64 + 0.5) / w as f64;
                let p = env.get(x, y).map(|c| c as f64 * omega);
                t.weight.push(LUMA.iter().zip(&p).map(|(l, c)| l * c).sum());
                t.power.push(p);
                t.direction.push(direction(theta, phi));
            }
        }
        t
    }
}

/// Unit direction for polar angle `theta` from +z and azimuth `phi`.
pub fn direction(theta: f64, phi: f64) -> Vec3 {
    Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
}

#[derive(Debug, Clone, Copy)]
struct Region {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
}

impl Region {
    fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.y0..self.y1).flat_map(move |y| (self.x0..self.x1).map(move |x| (x, y)))
    }

    /// Split along the angularly longer side at the texel boundary closest
    /// to half the luminance weight.
    fn split(&self, t: &Texels) -> Option<(Region, Region)> {
        let (nx, ny) = (self.x1 - self.x0, self.y1 - self.y0);
        let mid_theta = PI * (self.y0 + self.y1) as f64 / (2.0 * t.height as f64);
        let width = nx as f64 * 2.0 * PI / t.width as f64 * mid_theta.sin();
        let height = ny as f64 * PI / t.height as f64;
        let by_rows = match (nx > 1, ny > 1) {
            (false, false) => return None,
            (true, false) => false,
            (false, true) => true,
            (true, true) => height >= width,
        };
        let slices: Vec<f64> = if by_rows {
            (self.y0..self.y1).map(|y| (self.x0..self.x1).map(|x| t.weight[y * t.width + x]).sum()).collect()
        } else {
            (self.x0..self.x1).map(|x| (self.y0..self.y1).map(|y| t.weight[y * t.width + x]).sum()).collect()
        };
        let total: f64 = slices.iter().sum();
        let cut = if total > 0.0 {
            let mut acc = 0.0;
            let mut best = (f64::INFINITY, 1);
            for (i, s) in slices[..slices.len() - 1].iter().enumerate() {
                acc += s;
                let gap = (acc - total / 2.0).abs();
                if gap < best.0 {
                    best = (gap, i + 1);
                }
            }
            best.1
        } else {
            slices.len() / 2
        };
        Some(if by_rows {
            (Region { y1: self.y0 + cut, ..*self }, Region { y0: self.y0 + cut, ..*self })
        } else {
            (Region { x1: self.x0 + cut, ..*self }, Region { x0: self.x0 + cut, ..*self })
        })
    }

    fn light(&self, t: &Texels) -> LightSource {
        let mut power = [0.0; 3];
        let mut centroid = Vec3::zeros();
        for (x, y) in self.cells() {
            let i = y * t.width + x;
            for c in 0..3 {
                power[c] += t.power[i][c];
            }
            centroid += t.direction[i] * t.weight[i];
        }
        if centroid.norm() < 1e-300 {
            let theta = PI * (self.y0 + self.y1) as f64 / (2.0 * t.height as f64);
            let phi = PI * (self.x0 + self.x1) as f64 / t.width as f64;
            centroid = direction(theta, phi);
        }
        LightSource { kind: LightKind::Directional { to_light: centroid.normalize().into() }, intensity: power }
    }
}

/// Replaces `env` by `n` directional lights, `n` a power of two. Each light
/// sits at its region's luminance centroid and carries the region's power.
pub fn approximate_environment(env: &Image, n: usize) -> Result<Vec<LightSource>> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::invalid(format!("light count {n} must be a power of two")));
    }
    if env.width() == 0 || env.height() == 0 {
        return Err(Error::invalid("empty environment map"));
    }
    if n > env.width() * env.height() {
        return Err(Error::invalid(format!("{n} lights from a {}x{} map", env.width(), env.height())));
    }
    if env.pixels().iter().flatten().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::invalid("environment map must be finite and non-negative"));
    }
    let t = Texels::new(env);
    let mut regions = vec![Region { x0: 0, x1: t.width, y0: 0, y1: t.height }];
    while regions.len() < n {
        let mut next = Vec::with_capacity(regions.len() * 2);
        for r in &regions {
            let (a, b) = r.split(&t).ok_or_else(|| Error::invalid("environment map too small for the light count"))?;
            next.push(a);
            next.push(b);
        }
        regions = next;
    }
    Ok(regions.iter().map(|r| r.light(&t)).collect())
}

/// Total RGB power of an environment map, integrated per texel.
pub fn environment_power(env: &Image) -> [f64; 3] {
    let t = Texels::new(env);
    t.power.iter().fold([0.0; 3], |acc, p| [acc[0] + p[0], acc[1] + p[1], acc[2] + p[2]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant(w: usize, h: usize, v: f32) -> Image {
        Image::from_pixels(w, h, vec![[v; 3]; w * h]).unwrap()
    }

    fn sum(lights: &[LightSource]) -> [f64; 3] {
        lights.iter().fold([0.0; 3], |a, l| [a[0] + l.intensity[0], a[1] + l.intensity[1], a[2] + l.intensity[2]])
    }

    #[test]
    fn constant_map_gives_equal_lights() {
        let env = constant(64, 32, 1.0);
        let lights = approximate_environment(&env, 8).unwrap();
        assert_eq!(lights.len(), 8);
        let total = sum(&lights)[0];
        assert!((total - 4.0 * PI).abs() < 1e-9 * 4.0 * PI);
        for l in &lights {
            assert!((l.intensity[0] - total / 8.0).abs() <= 1e-3 * total / 8.0);
        }
    }

    #[test]
    fn single_bright_texel() {
        let mut env = constant(16, 8, 0.0);
        env.set(5, 2, [3.0, 2.0, 1.0]);
        let lights = approximate_environment(&env, 1).unwrap();
        let LightKind::Directional { to_light } = lights[0].kind else { panic!() };
        let theta = PI * 2.5 / 8.0;
        let phi = 2.0 * PI * 5.5 / 16.0;
        assert!((Vec3::from(to_light) - direction(theta, phi)).norm() < 1e-12);
    }

    #[test]
    fn black_map_gives_zero_lights() {
        let lights = approximate_environment(&constant(8, 4, 0.0), 8).unwrap();
        assert_eq!(lights.len(), 8);
        assert!(lights.iter().all(|l| l.intensity == [0.0; 3]));
    }

    #[test]
    fn rejects_bad_counts() {
        let env = constant(4, 2, 1.0);
        assert!(approximate_environment(&env, 3).is_err());
        assert!(approximate_environment(&env, 0).is_err());
        assert!(approximate_environment(&env, 16).is_err());
    }

    /// Power against a direct closed-form integral of each texel's solid angle.
    #[test]
    fn random_maps_conserve_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [1, 2, 4, 8, 16, 32] {
            let (w, h) = (rng.random_range(8..40), rng.random_range(4..20));
            let px: Vec<[f32; 3]> = (0..w * h).map(|_| [rng.random(), rng.random(), rng.random::<f32>() * 5.0]).collect();
            let env = Image::from_pixels(w, h, px.clone()).unwrap();
            let mut oracle = [0.0; 3];
            for y in 0..h {
                let band = 2.0 * PI * ((PI * y as f64 / h as f64).cos() - (PI * (y + 1) as f64 / h as f64).cos());
                for x in 0..w {
                    for c in 0..3 {
                        oracle[c] += px[y * w + x][c] as f64 * band / w as f64;
                    }
                }
            }
            let got = sum(&approximate_environment(&env, n).unwrap());
            for c in 0..3 {
                assert!((got[c] - oracle[c]).abs() <= 1e-4 * oracle[c], "n={n} c={c}");
            }
        }
    }
}
