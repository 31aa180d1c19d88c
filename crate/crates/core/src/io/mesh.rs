//! Minimal OBJ subset: `v x y z` vertex lines and `f i j k` triangle lines
//! with 1-based indices. Comments and the usual grouping/material/normal
//! directives are skipped; anything else is an error.

use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::mask::TriangleMesh;

const IGNORED: &[&str] = &["vn", "vt", "vp", "o", "g", "s", "usemtl", "mtllib", "l"];

pub fn decode_mesh(bytes: &[u8]) -> Result<TriangleMesh> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::format(e.valid_up_to(), "mesh is not valid UTF-8"))?;
    let mut vertices = Vec::new();
    // (face, byte offset of its line)
    let mut faces: Vec<([usize; 3], usize)> = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let content = line.split('#').next().unwrap_or("").trim();
        let mut tokens = content.split_ascii_whitespace();
        let Some(tag) = tokens.next() else { continue };
        let args: Vec<&str> = tokens.collect();
        match tag {
            "v" => {
                if args.len() != 3 {
                    return Err(Error::format(
                        start,
                        format!("vertex needs 3 coordinates, got {}", args.len()),
                    ));
                }
                let mut xyz = [0.0; 3];
                for (dst, a) in xyz.iter_mut().zip(&args) {
                    *dst = a
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::format(start, format!("bad coordinate `{a}`")))?;
                }
                vertices.push(Vector3::from(xyz));
            }
            "f" => {
                if args.len() != 3 {
                    return Err(Error::format(
                        start,
                        format!(
                            "only triangles are supported, face has {} vertices",
                            args.len()
                        ),
                    ));
                }
                let mut face = [0usize; 3];
                for (dst, a) in face.iter_mut().zip(&args) {
                    let idx = a.split('/').next().unwrap_or("");
                    let i: usize = idx
                        .parse()
                        .map_err(|_| Error::format(start, format!("bad face index `{a}`")))?;
                    if i == 0 {
                        return Err(Error::format(
                            start,
                            "face index 0 (OBJ indices are 1-based)",
                        ));
                    }
                    *dst = i - 1;
                }
                faces.push((face, start));
            }
            t if IGNORED.contains(&t) => {}
            t => {
                return Err(Error::format(
                    start,
                    format!("unsupported OBJ directive `{t}`"),
                ))
            }
        }
    }
    let n = vertices.len();
    if let Some((f, at)) = faces.iter().find(|(f, _)| f.iter().any(|&i| i >= n)) {
        let bad = f.iter().find(|&&i| i >= n).map_or(0, |i| i + 1);
        return Err(Error::format(
            *at,
            format!("face index {bad} exceeds the {n} vertices"),
        ));
    }
    Ok(TriangleMesh {
        vertices,
        faces: faces.into_iter().map(|(f, _)| f).collect(),
    })
}

/// Shortest round-trip float text, so decoding restores the exact values.
pub fn encode_mesh(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = String::new();
    for v in &mesh.vertices {
        out.push_str(&format!("v {:?} {:?} {:?}\n", v.x, v.y, v.z));
    }
    for f in &mesh.faces {
        out.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    out.into_bytes()
}

pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    super::in_file(path, decode_mesh(&super::read_file(path)?))
}

pub fn write_mesh(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    mesh.validate()?;
    super::write_atomic(path, &encode_mesh(mesh))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_triangle() {
        let m =
            decode_mesh(b"# tri\nv 0 0 1\nv 1 0 1\nv 0 1 1\nvn 0 0 1\nf 1//1 2//1 3//1\n").unwrap();
        assert_eq!(m.vertices.len(), 3);
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn out_of_range_indices() {
        let base = "v 0 0 0\nv 1 0 0\nv 0 1 0\n";
        let zero = format!("{base}f 0 1 2\n");
        assert!(matches!(
            decode_mesh(zero.as_bytes()),
            Err(Error::Format { offset: 24, .. })
        ));
        let big = format!("{base}f 1 2 4\n");
        assert!(matches!(
            decode_mesh(big.as_bytes()),
            Err(Error::Format { offset: 24, .. })
        ));
        assert!(decode_mesh(format!("{base}f -1 2 3\n").as_bytes()).is_err());
    }

    #[test]
    fn malformed_lines() {
        assert!(decode_mesh(b"v 1 2\n").is_err());
        assert!(decode_mesh(b"v 1 2 nan\n").is_err());
        assert!(decode_mesh(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n").is_err());
        assert!(decode_mesh(b"curv 0 1\n").is_err());
    }

    proptest! {
        #[test]
        fn round_trip(
            verts in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3), 3..20),
            faces in prop::collection::vec((0usize..3, 0usize..3, 0usize..3), 1..10),
        ) {
            let mesh = TriangleMesh::new(
                verts.iter().map(|&(x, y, z)| Vector3::new(x, y, z)).collect(),
                faces.iter().map(|&(a, b, c)| [a, b, c]).collect(),
            ).unwrap();
            let back = decode_mesh(&encode_mesh(&mesh)).unwrap();
            prop_assert_eq!(&back.faces, &mesh.faces);
            for (a, b) in back.vertices.iter().zip(&mesh.vertices) {
                prop_assert!((a - b).amax() <= 1e-6);
            }
        }
    }
}
