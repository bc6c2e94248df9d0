use crate::error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;

pub(crate) fn v3(p: [f32; 3]) -> Vec3 {
    Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64)
}

/// Indexed triangle mesh in object units.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    positions: Vec<[f32; 3]>,
    triangles: Vec<[u32; 3]>,
    normals: Vec<[f32; 3]>,
}

impl Mesh {
    /// Validates indices and triangle areas and derives area-weighted vertex
    /// normals.
    pub fn new(positions: Vec<[f32; 3]>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("mesh has non-finite vertex positions"));
        }
        for (i, t) in triangles.iter().enumerate() {
            if t.iter().any(|&v| v as usize >= positions.len()) {
                return Err(Error::invalid(format!("triangle {i} references a missing vertex")));
            }
            if face_cross(&positions, t).norm() == 0.0 {
                return Err(Error::invalid(format!("triangle {i} is degenerate")));
            }
        }
        let normals = vertex_normals(&positions, &triangles);
        Ok(Mesh { positions, triangles, normals })
    }

    /// Like [`Mesh::new`] but silently drops degenerate triangles.
    pub fn new_skipping_degenerate(positions: Vec<[f32; 3]>, mut triangles: Vec<[u32; 3]>) -> Result<Self> {
        let before = triangles.len();
        triangles.retain(|t| t.iter().all(|&v| (v as usize) < positions.len()) && face_cross(&positions, t).norm() > 0.0);
        if triangles.len() != before {
            log::warn!("dropped {} degenerate or invalid triangles", before - triangles.len());
        }
        Mesh::new(positions, triangles)
    }

    pub fn positions(&self) -> &[[f32; 3]] {
        &self.positions
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> &[[f32; 3]] {
        &self.normals
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        self.triangles[i].map(|v| v3(self.positions[v as usize]))
    }

    /// Unnormalized face normal, twice the triangle area in length.
    pub fn face_cross(&self, i: usize) -> Vec3 {
        face_cross(&self.positions, &self.triangles[i])
    }

    pub fn bounds(&self) -> Option<([f64; 3], [f64; 3])> {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for t in &self.triangles {
            for &v in t {
                let p = self.positions[v as usize];
                for a in 0..3 {
                    lo[a] = lo[a].min(p[a] as f64);
                    hi[a] = hi[a].max(p[a] as f64);
                }
            }
        }
        (lo[0] <= hi[0]).then_some((lo, hi))
    }

    pub fn in_unit_cube(&self) -> bool {
        self.positions.iter().flatten().all(|&v| (0.0..=1.0).contains(&v))
    }

    /// Uniformly scales and centers the mesh so its longest extent spans
    /// `[margin, 1 - margin]`.
    pub fn normalized(&self, margin: f64) -> Result<Mesh> {
        let (lo, hi) = self.bounds().ok_or_else(|| Error::invalid("empty mesh"))?;
        let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
        if extent == 0.0 {
            return Err(Error::invalid("mesh has zero extent"));
        }
        let scale = (1.0 - 2.0 * margin) / extent;
        let positions = self
            .positions
            .iter()
            .map(|p| {
                let mut out = [0f32; 3];
                for a in 0..3 {
                    let centered = (p[a] as f64 - (lo[a] + hi[a]) * 0.5) * scale + 0.5;
                    out[a] = (centered as f32).clamp(0.0, 1.0);
                }
                out
            })
            .collect();
        Mesh::new_skipping_degenerate(positions, self.triangles.clone())
    }

    /// Icosphere with 320 triangles inscribed in the unit cube.
    pub fn placeholder_sphere() -> Mesh {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut verts: Vec<Vec3> = [
            (-1.0, t, 0.0), (1.0, t, 0.0), (-1.0, -t, 0.0), (1.0, -t, 0.0),
            (0.0, -1.0, t), (0.0, 1.0, t), (0.0, -1.0, -t), (0.0, 1.0, -t),
            (t, 0.0, -1.0), (t, 0.0, 1.0), (-t, 0.0, -1.0), (-t, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
        .collect();
        let mut faces: Vec<[u32; 3]> = vec![
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ];
        for _ in 0..2 {
            let mut midpoints = std::collections::HashMap::new();
            let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vec3>| -> u32 {
                *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    verts.push(((verts[a as usize] + verts[b as usize]) * 0.5).normalize());
                    (verts.len() - 1) as u32
                })
            };
            let mut next = Vec::with_capacity(faces.len() * 4);
            for [a, b, c] in faces {
                let ab = midpoint(a, b, &mut verts);
                let bc = midpoint(b, c, &mut verts);
                let ca = midpoint(c, a, &mut verts);
                next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            faces = next;
        }
        let positions = verts
            .iter()
            .map(|v| [(v.x * 0.5 + 0.5) as f32, (v.y * 0.5 + 0.5) as f32, (v.z * 0.5 + 0.5) as f32])
            .collect();
        Mesh::new(positions, faces).expect("icosphere is well formed")
    }

    /// Two-triangle quad through four corners given counter-clockwise as
    /// seen from the side the normal points to.
    pub fn quad(corners: [[f32; 3]; 4]) -> Result<Mesh> {
        Mesh::new(corners.to_vec(), vec![[0, 1, 2], [0, 2, 3]])
    }

    /// Closed axis-aligned box surface, outward normals.
    pub fn box_surface(lo: [f32; 3], hi: [f32; 3]) -> Result<Mesh> {
        let mut positions = Vec::with_capacity(8);
        for z in [lo[2], hi[2]] {
            for y in [lo[1], hi[1]] {
                for x in [lo[0], hi[0]] {
                    positions.push([x, y, z]);
                }
            }
        }
        let quads = [
            [0, 2, 3, 1], // z = lo
            [4, 5, 7, 6], // z = hi
            [0, 1, 5, 4], // y = lo
            [2, 6, 7, 3], // y = hi
            [0, 4, 6, 2], // x = lo
            [1, 3, 7, 5], // x = hi
        ];
        let triangles = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
        Mesh::new(positions, triangles)
    }
}

fn face_cross(positions: &[[f32; 3]], t: &[u32; 3]) -> Vec3 {
    let [a, b, c] = t.map(|v| v3(positions[v as usize]));
    (b - a).cross(&(c - a))
}

fn vertex_normals(positions: &[[f32; 3]], triangles: &[[u32; 3]]) -> Vec<[f32; 3]> {
    let mut acc = vec![Vec3::zeros(); positions.len()];
    for t in triangles {
        let n = face_cross(positions, t);
        for &v in t {
            acc[v as usize] += n;
        }
    }
    acc.iter()
        .map(|n| {
            let len = n.norm();
            if len > 0.0 {
                [(n.x / len) as f32, (n.y / len) as f32, (n.z / len) as f32]
            } else {
                [0.0, 0.0, 1.0]
            }
        })
        .collect()
}
