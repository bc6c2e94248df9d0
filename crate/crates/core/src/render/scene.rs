use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Pinhole camera in object space.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    position: Vec3,
    look_at: Vec3,
    up: Vec3,
    fov_deg: f64,
    width: usize,
    height: usize,
    basis: [Vec3; 3],
}

impl Camera {
    pub fn new(position: [f64; 3], look_at: [f64; 3], up: [f64; 3], fov_deg: f64, width: usize, height: usize) -> Result<Self> {
        let (position, look_at, up) = (Vec3::from(position), Vec3::from(look_at), Vec3::from(up));
        if !(fov_deg > 0.0 && fov_deg < 180.0) {
            return Err(Error::invalid(format!("field of view {fov_deg} outside (0, 180)")));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("image size must be positive"));
        }
        let forward = look_at - position;
        if !forward.iter().all(|v| v.is_finite()) || forward.norm() == 0.0 {
            return Err(Error::invalid("camera position equals look-at point"));
        }
        let forward = forward.normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-9 * up.norm().max(1e-300) || up.norm() == 0.0 {
            return Err(Error::invalid("up vector is collinear with the view direction"));
        }
        let right = right.normalize();
        let true_up = right.cross(&forward);
        Ok(Camera { position, look_at, up, fov_deg, width, height, basis: [right, true_up, forward] })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn position(&self) -> Vec3 {
        self.position
    }

    pub fn look_at(&self) -> Vec3 {
        self.look_at
    }

    pub fn up(&self) -> Vec3 {
        self.up
    }

    pub fn fov_deg(&self) -> f64 {
        self.fov_deg
    }

    /// Unit ray direction through the center of pixel `(x, y)`, row 0 at
    /// the top.
    pub fn ray(&self, x: usize, y: usize) -> Vec3 {
        let [right, up, forward] = self.basis;
        let half = (self.fov_deg.to_radians() * 0.5).tan();
        let aspect = self.width as f64 / self.height as f64;
        let sx = ((x as f64 + 0.5) / self.width as f64 * 2.0 - 1.0) * half * aspect;
        let sy = (1.0 - (y as f64 + 0.5) / self.height as f64 * 2.0) * half;
        (forward + right * sx + up * sy).normalize()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LightKind {
    Point { position: [f64; 3] },
    /// `axis` is the direction the spot shines along; `cone_deg` is the full
    /// opening angle.
    Spot { position: [f64; 3], axis: [f64; 3], cone_deg: f64 },
    /// `to_light` points from the surface towards the light.
    Directional { to_light: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightSource {
    pub kind: LightKind,
    pub intensity: [f64; 3],
}

fn unit(v: [f64; 3], what: &str) -> Result<Vec3> {
    let v = Vec3::from(v);
    let n = v.norm();
    if !n.is_finite() || n == 0.0 {
        return Err(Error::invalid(format!("{what} must be a non-zero finite vector")));
    }
    Ok(v / n)
}

impl LightSource {
    pub fn point(position: [f64; 3], intensity: [f64; 3]) -> Result<Self> {
        LightSource { kind: LightKind::Point { position }, intensity }.validated()
    }

    pub fn spot(position: [f64; 3], axis: [f64; 3], cone_deg: f64, intensity: [f64; 3]) -> Result<Self> {
        LightSource { kind: LightKind::Spot { position, axis, cone_deg }, intensity }.validated()
    }

    pub fn directional(to_light: [f64; 3], intensity: [f64; 3]) -> Result<Self> {
        let to_light = unit(to_light, "light direction")?.into();
        LightSource { kind: LightKind::Directional { to_light }, intensity }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if self.intensity.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::invalid(format!("light intensity {:?} must be finite and non-negative", self.intensity)));
        }
        match self.kind {
            LightKind::Point { position } if position.iter().any(|p| !p.is_finite()) => Err(Error::invalid("light position must be finite")),
            LightKind::Spot { position, axis, cone_deg } => {
                if position.iter().any(|p| !p.is_finite()) {
                    return Err(Error::invalid("light position must be finite"));
                }
                unit(axis, "spot axis")?;
                if !(cone_deg > 0.0 && cone_deg < 180.0) {
                    return Err(Error::invalid(format!("spot cone angle {cone_deg} outside (0, 180)")));
                }
                Ok(self)
            }
            LightKind::Directional { to_light } => unit(to_light, "light direction").map(|_| self),
            _ => Ok(self),
        }
    }

    /// Unit direction towards the light and the irradiance scale at `p`, or
    /// `None` when `p` is not lit.
    pub fn incidence(&self, p: Vec3) -> Option<(Vec3, [f64; 3])> {
        let scaled = |s: f64| self.intensity.map(|c| c * s);
        match self.kind {
            LightKind::Directional { to_light } => Some((Vec3::from(to_light).normalize(), self.intensity)),
            LightKind::Point { position } => {
                let d = Vec3::from(position) - p;
                let r2 = d.norm_squared();
                (r2 > 0.0).then(|| (d / r2.sqrt(), scaled(1.0 / r2)))
            }
            LightKind::Spot { position, axis, cone_deg } => {
                let d = Vec3::from(position) - p;
                let r2 = d.norm_squared();
                if r2 == 0.0 {
                    return None;
                }
                let to_light = d / r2.sqrt();
                let cos = (-to_light).dot(&Vec3::from(axis).normalize());
                (cos >= (cone_deg.to_radians() * 0.5).cos()).then(|| (to_light, scaled(1.0 / r2)))
            }
        }
    }
}
