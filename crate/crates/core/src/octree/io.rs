//! Mesh import/export and the little-endian geometry wire form:
//! `u32 vertex count, u32 triangle count, f32 positions x3, u32 indices x3`.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ply_rs::parser::Parser;
use ply_rs::ply::{DefaultElement, Property};

use super::mesh::Mesh;
use crate::error::{Error, Result};

pub fn encode_geometry(mesh: &Mesh) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + mesh.positions().len() * 12 + mesh.triangles().len() * 12);
    out.write_u32::<LittleEndian>(mesh.positions().len() as u32).unwrap();
    out.write_u32::<LittleEndian>(mesh.triangles().len() as u32).unwrap();
    for p in mesh.positions() {
        for v in p {
            out.write_f32::<LittleEndian>(*v).unwrap();
        }
    }
    for t in mesh.triangles() {
        for i in t {
            out.write_u32::<LittleEndian>(*i).unwrap();
        }
    }
    out
}

pub fn decode_geometry(bytes: &[u8]) -> Result<Mesh> {
    let mut r = bytes;
    let short = |_| Error::Format("geometry blob is truncated".into());
    let verts = r.read_u32::<LittleEndian>().map_err(short)? as usize;
    let tris = r.read_u32::<LittleEndian>().map_err(short)? as usize;
    let expected = verts as u64 * 12 + tris as u64 * 12;
    if r.len() as u64 != expected {
        return Err(Error::Format(format!(
            "geometry blob holds {} bytes after its header, expected {expected}",
            r.len()
        )));
    }
    let mut positions = Vec::with_capacity(verts);
    for _ in 0..verts {
        let mut p = [0f32; 3];
        r.read_f32_into::<LittleEndian>(&mut p).map_err(short)?;
        positions.push(p);
    }
    let mut triangles = Vec::with_capacity(tris);
    for _ in 0..tris {
        let mut t = [0u32; 3];
        r.read_u32_into::<LittleEndian>(&mut t).map_err(short)?;
        triangles.push(t);
    }
    Mesh::new(positions, triangles)
}

pub fn read_obj(reader: impl BufRead) -> Result<Mesh> {
    let mut reader = reader;
    let options = tobj::LoadOptions { triangulate: true, single_index: true, ..Default::default() };
    let (models, _) = tobj::load_obj_buf(&mut reader, &options, |_| Ok(Default::default()))
        .map_err(|e| Error::Format(format!("OBJ: {e}")))?;
    let mut positions = Vec::new();
    let mut triangles = Vec::new();
    for model in models {
        let base = positions.len() as u32;
        positions.extend(model.mesh.positions.chunks_exact(3).map(|c| [c[0], c[1], c[2]]));
        triangles.extend(model.mesh.indices.chunks_exact(3).map(|c| [base + c[0], base + c[1], base + c[2]]));
    }
    if triangles.is_empty() {
        return Err(Error::invalid("OBJ file contains no faces"));
    }
    Mesh::new_skipping_degenerate(positions, triangles)
}

pub fn write_obj(mesh: &Mesh, mut w: impl Write) -> Result<()> {
    for p in mesh.positions() {
        writeln!(w, "v {} {} {}", p[0], p[1], p[2])?;
    }
    for t in mesh.triangles() {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

fn as_f32(p: &Property) -> Option<f32> {
    Some(match *p {
        Property::Float(v) => v,
        Property::Double(v) => v as f32,
        Property::Char(v) => v as f32,
        Property::UChar(v) => v as f32,
        Property::Short(v) => v as f32,
        Property::UShort(v) => v as f32,
        Property::Int(v) => v as f32,
        Property::UInt(v) => v as f32,
        _ => return None,
    })
}

fn as_indices(p: &Property) -> Option<Vec<u32>> {
    Some(match p {
        Property::ListInt(v) => v.iter().map(|&i| i as u32).collect(),
        Property::ListUInt(v) => v.clone(),
        Property::ListUChar(v) => v.iter().map(|&i| i as u32).collect(),
        Property::ListChar(v) => v.iter().map(|&i| i as u32).collect(),
        Property::ListShort(v) => v.iter().map(|&i| i as u32).collect(),
        Property::ListUShort(v) => v.iter().map(|&i| i as u32).collect(),
        _ => return None,
    })
}

/// Reads positions and faces from a PLY file; other properties are ignored
/// and vertex normals are recomputed.
pub fn read_ply(reader: impl Read) -> Result<Mesh> {
    let mut reader = std::io::BufReader::new(reader);
    let parser = Parser::<DefaultElement>::new();
    let ply = parser.read_ply(&mut reader).map_err(|e| Error::Format(format!("PLY: {e}")))?;
    let vertices = ply.payload.get("vertex").ok_or_else(|| Error::Format("PLY has no vertex element".into()))?;
    let faces = ply.payload.get("face").ok_or_else(|| Error::Format("PLY has no face element".into()))?;
    let mut positions = Vec::with_capacity(vertices.len());
    for v in vertices {
        let coord = |name: &str| v.get(name).and_then(as_f32);
        match (coord("x"), coord("y"), coord("z")) {
            (Some(x), Some(y), Some(z)) => positions.push([x, y, z]),
            _ => return Err(Error::Format("PLY vertex without numeric x/y/z".into())),
        }
    }
    let mut triangles = Vec::with_capacity(faces.len());
    for f in faces {
        let idx = f
            .get("vertex_indices")
            .or_else(|| f.get("vertex_index"))
            .and_then(as_indices)
            .ok_or_else(|| Error::Format("PLY face without vertex index list".into()))?;
        for i in 1..idx.len().saturating_sub(1) {
            triangles.push([idx[0], idx[i], idx[i + 1]]);
        }
    }
    if triangles.is_empty() {
        return Err(Error::invalid("PLY file contains no faces"));
    }
    Mesh::new_skipping_degenerate(positions, triangles)
}

/// Loads `.obj` or `.ply` by extension.
pub fn load_mesh(path: &Path) -> Result<Mesh> {
    let file = std::fs::File::open(path)?;
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("obj") => read_obj(std::io::BufReader::new(file)),
        Some("ply") => read_ply(file),
        _ => Err(Error::invalid(format!("unsupported mesh format: {}", path.display()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_wire_roundtrip() {
        let m = Mesh::box_surface([0.1, 0.2, 0.3], [0.9, 0.8, 0.7]).unwrap();
        let bytes = encode_geometry(&m);
        assert_eq!(bytes.len(), 8 + 8 * 12 + 12 * 12);
        assert_eq!(&bytes[..4], &8u32.to_le_bytes());
        assert_eq!(decode_geometry(&bytes).unwrap(), m);
        assert!(decode_geometry(&bytes[..bytes.len() - 2]).is_err());
    }

    #[test]
    fn obj_roundtrip_and_quads() {
        let m = Mesh::box_surface([0.0; 3], [1.0; 3]).unwrap();
        let mut text = Vec::new();
        write_obj(&m, &mut text).unwrap();
        let back = read_obj(&text[..]).unwrap();
        assert_eq!(back.triangles().len(), 12);
        let quad = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2/2/1 3/3/1 4/4/1\n";
        assert_eq!(read_obj(quad.as_bytes()).unwrap().triangles().len(), 2);
    }

    #[test]
    fn binary_ply() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n".to_vec();
        for p in [[0f32, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]] {
            for v in p {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        bytes.push(4);
        for i in 0i32..4 {
            bytes.extend_from_slice(&i.to_le_bytes());
        }
        let m = read_ply(&bytes[..]).unwrap();
        assert_eq!(m.positions().len(), 4);
        assert_eq!(m.triangles(), &[[0, 1, 2], [0, 2, 3]]);
        assert_eq!(m.normals()[0], [0.0, 0.0, 1.0]);
    }
}
