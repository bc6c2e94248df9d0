//! CPU ray casting of a progressive client state.

mod bvh;
pub mod envmap;
mod image;
mod scene;

use rayon::prelude::*;

pub use self::image::{psnr, Image, ImageMetrics, PSNR_CAP};
pub use bvh::{ray_triangle, Bvh, RayHit};
pub use envmap::{approximate_environment, environment_power};
pub use scene::{Camera, LightKind, LightSource, Vec3};

use crate::btf::Direction;
use crate::client::{decode_frame, Decoded, ProgressiveState};
use crate::error::{Error, Result};
use crate::protocol::{AnnotationKind, Frame};

pub const ANNOTATION_RADIUS: f64 = 0.01;

pub fn annotation_color(kind: AnnotationKind) -> [f32; 3] {
    match kind {
        AnnotationKind::Marker => [0.0, 1.0, 0.0],
        AnnotationKind::Text => [0.0, 0.0, 1.0],
        AnnotationKind::StrokePoint => [1.0, 0.0, 0.0],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    /// Components per channel to use instead of everything received.
    pub ranks: Option<[usize; 3]>,
    /// Streamed level to shade from instead of the deepest evaluable one.
    pub level: Option<usize>,
    pub annotations: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { ranks: None, level: None, annotations: true }
    }
}

/// Renders `state` as seen by `camera`. Fails with `NotReady` until some
/// octree level can be evaluated.
pub fn render(state: &ProgressiveState, camera: &Camera, lights: &[LightSource], options: &RenderOptions) -> Result<Image> {
    let level = match options.level {
        Some(l) if state.evaluable(l) => l,
        Some(_) => return Err(Error::NotReady),
        None => state.deepest_evaluable().ok_or(Error::NotReady)?,
    };
    let ranks = options.ranks.unwrap_or_else(|| state.ranks());
    let bvh = Bvh::new(state.mesh());
    let spheres: Vec<(Vec3, [f32; 3])> = if options.annotations {
        state.annotations().iter().map(|a| (Vec3::from(a.body.position.map(f64::from)), annotation_color(a.body.kind))).collect()
    } else {
        Vec::new()
    };
    let (w, h) = (camera.width(), camera.height());
    let origin = camera.position();
    let rows: Vec<Vec<[f32; 3]>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let dir = camera.ray(x, y);
                    let hit = bvh.intersect(origin, dir);
                    let t_mesh = hit.map_or(f64::INFINITY, |h| h.t);
                    if let Some(color) = nearest_sphere(&spheres, origin, dir, t_mesh) {
                        return color;
                    }
                    match hit {
                        Some(h) => shade(state, level, ranks, lights, origin + dir * h.t, dir),
                        None => [0.0; 3],
                    }
                })
                .collect()
        })
        .collect();
    Image::from_pixels(w, h, rows.into_iter().flatten().collect())
}

fn nearest_sphere(spheres: &[(Vec3, [f32; 3])], o: Vec3, d: Vec3, t_max: f64) -> Option<[f32; 3]> {
    let mut best = (t_max, None);
    for (c, color) in spheres {
        let oc = o - c;
        let b = oc.dot(&d);
        let disc = b * b - (oc.norm_squared() - ANNOTATION_RADIUS * ANNOTATION_RADIUS);
        if disc < 0.0 {
            continue;
        }
        let s = disc.sqrt();
        let t = if -b - s > 0.0 { -b - s } else { -b + s };
        if t > 0.0 && t < best.0 {
            best = (t, Some(*color));
        }
    }
    best.1
}

/// Radiance towards the camera at surface point `p`, summed over lights.
fn shade(state: &ProgressiveState, level: usize, ranks: [usize; 3], lights: &[LightSource], p: Vec3, ray: Vec3) -> [f32; 3] {
    let pos = [p.x.clamp(0.0, 1.0), p.y.clamp(0.0, 1.0), p.z.clamp(0.0, 1.0)];
    let Some((l, i)) = state.find_voxel(pos, level) else { return [0.0; 3] };
    if !state.evaluable(l) {
        return [0.0; 3];
    }
    let voxel = &state.voxels(l).expect("evaluable")[i];
    let n = Vec3::from(voxel.normal.map(f64::from));
    let t = Vec3::from(voxel.tangent.map(f64::from));
    let b = n.cross(&t);
    let local = |d: Vec3| (d.dot(&t), d.dot(&b), d.dot(&n));
    let (vx, vy, vz) = local(-ray);
    if vz < 0.0 {
        return [0.0; 3];
    }
    let Ok(view) = Direction::new(vx, vy, vz) else { return [0.0; 3] };
    let mut acc = [0.0f64; 3];
    for light in lights {
        let Some((to_light, e)) = light.incidence(p) else { continue };
        let (lx, ly, lz) = local(to_light);
        if lz < 0.0 {
            continue;
        }
        let Ok(dir) = Direction::new(lx, ly, lz) else { continue };
        let Ok(rgb) = state.evaluate(l, i, dir, view, ranks) else { continue };
        for c in 0..3 {
            acc[c] += rgb[c] * e[c];
        }
    }
    acc.map(|v| v as f32)
}

/// Reference image for a quality curve, tied to the camera it was taken with.
#[derive(Debug, Clone)]
pub struct Reference {
    pub camera: Camera,
    pub image: Image,
}

impl Reference {
    pub fn render(state: &ProgressiveState, camera: &Camera, lights: &[LightSource]) -> Result<Self> {
        Ok(Reference { camera: camera.clone(), image: render(state, camera, lights, &RenderOptions::default())? })
    }

    /// Wraps an image loaded from disk; only its size can be checked.
    pub fn from_image(camera: &Camera, image: Image) -> Result<Self> {
        if (image.width(), image.height()) != (camera.width(), camera.height()) {
            return Err(Error::invalid(format!(
                "reference is {}x{}, camera renders {}x{}",
                image.width(),
                image.height(),
                camera.width(),
                camera.height()
            )));
        }
        Ok(Reference { camera: camera.clone(), image })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub version: u64,
    pub chunks: usize,
    pub metrics: ImageMetrics,
}

/// Replays server frames and, after every chunk that changes what can be
/// rendered (deepest evaluable level or renderable ranks), compares a fresh
/// render against `reference`.
pub fn quality_curve(frames: &[Frame], camera: &Camera, lights: &[LightSource], reference: &Reference) -> Result<Vec<CurvePoint>> {
    if reference.camera != *camera {
        return Err(Error::invalid("curve camera differs from the reference camera"));
    }
    let options = RenderOptions { annotations: false, ..RenderOptions::default() };
    let mut state = ProgressiveState::new();
    let mut last_key = None;
    let mut curve = Vec::new();
    for frame in frames {
        let decoded = decode_frame(frame.clone())?;
        state = state.apply(&decoded)?;
        if !matches!(decoded, Decoded::Chunk { .. }) {
            continue;
        }
        let Some(level) = state.deepest_evaluable() else { continue };
        let key = (level, state.ranks());
        if last_key == Some(key) {
            continue;
        }
        last_key = Some(key);
        let image = render(&state, camera, lights, &options)?;
        curve.push(CurvePoint { version: state.version(), chunks: state.chunks_received(), metrics: ImageMetrics::between(&image, &reference.image)? });
    }
    Ok(curve)
}
