//! ASCII OBJ / PLY meshes (triangles only) and CSV point lists.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Point3, Polyline3, TriMesh};
use crate::error::{Error, Result};

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

fn parse_f64(path: &Path, line: usize, tok: &str) -> Result<f64> {
    tok.trim().parse::<f64>().map_err(|_| parse_err(path, line, format!("bad number `{tok}`")))
}

/// Loads `.obj` or `.ply` by extension.
pub fn read_mesh(path: &Path) -> Result<TriMesh> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("obj") => read_obj(path),
        Some("ply") => read_ply(path),
        _ => Err(Error::InvalidInput(format!("unsupported mesh format: {}", path.display()))),
    }
}

pub fn write_mesh(path: &Path, mesh: &TriMesh) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("obj") => write_text(path, &obj_string(mesh)),
        Some("ply") => write_text(path, &ply_string(mesh)),
        _ => Err(Error::InvalidInput(format!("unsupported mesh format: {}", path.display()))),
    }
}

pub fn read_obj(path: &Path) -> Result<TriMesh> {
    parse_obj(path, &read_text(path)?)
}

fn parse_obj(path: &Path, text: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let mut toks = raw.split_whitespace();
        match toks.next() {
            Some("v") => {
                let c: Vec<&str> = toks.collect();
                if c.len() < 3 {
                    return Err(parse_err(path, line, "vertex needs 3 coordinates"));
                }
                vertices.push(Point3::new(
                    parse_f64(path, line, c[0])?,
                    parse_f64(path, line, c[1])?,
                    parse_f64(path, line, c[2])?,
                ));
            }
            Some("f") => {
                let idx = toks
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or("");
                        let i: i64 = first.parse().map_err(|_| parse_err(path, line, format!("bad index `{t}`")))?;
                        // OBJ is 1-based; negative indices count back from the latest vertex.
                        let resolved = if i < 0 { vertices.len() as i64 + i } else { i - 1 };
                        usize::try_from(resolved).map_err(|_| parse_err(path, line, format!("index `{t}` out of range")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                if idx.len() != 3 {
                    return Err(parse_err(path, line, format!("only triangles are supported, got {} vertices", idx.len())));
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, faces)
}

fn obj_string(mesh: &TriMesh) -> String {
    let mut s = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(s, "v {:?} {:?} {:?}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

pub fn read_ply(path: &Path) -> Result<TriMesh> {
    parse_ply(path, &read_text(path)?)
}

fn parse_ply(path: &Path, text: &str) -> Result<TriMesh> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(parse_err(path, 1, "missing `ply` magic")),
    }
    let mut n_vertices = 0usize;
    let mut n_faces = 0usize;
    let mut vertex_props: Vec<String> = Vec::new();
    let mut current = String::new();
    for (ln, raw) in lines.by_ref() {
        let toks: Vec<&str> = raw.split_whitespace().collect();
        match toks.as_slice() {
            ["format", fmt, ..] if *fmt != "ascii" => {
                return Err(parse_err(path, ln + 1, "only ASCII PLY is supported"));
            }
            ["element", name, count] => {
                current = name.to_string();
                let count = count.parse().map_err(|_| parse_err(path, ln + 1, "bad element count"))?;
                match *name {
                    "vertex" => n_vertices = count,
                    "face" => n_faces = count,
                    _ if count > 0 => return Err(parse_err(path, ln + 1, format!("unsupported element `{name}`"))),
                    _ => {}
                }
            }
            ["property", "list", ..] => {}
            ["property", _, name] if current == "vertex" => vertex_props.push(name.to_string()),
            ["end_header"] => break,
            _ => {}
        }
    }
    let pos = |name: &str| vertex_props.iter().position(|p| p == name);
    let (xi, yi, zi) = match (pos("x"), pos("y"), pos("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(parse_err(path, 0, "vertex element lacks x/y/z properties")),
    };

    let mut body = lines.filter(|(_, l)| !l.trim().is_empty());
    let mut vertices = Vec::with_capacity(n_vertices);
    for _ in 0..n_vertices {
        let (ln, l) = body.next().ok_or_else(|| parse_err(path, 0, "truncated vertex list"))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() < vertex_props.len() {
            return Err(parse_err(path, ln + 1, "short vertex row"));
        }
        vertices.push(Point3::new(
            parse_f64(path, ln + 1, toks[xi])?,
            parse_f64(path, ln + 1, toks[yi])?,
            parse_f64(path, ln + 1, toks[zi])?,
        ));
    }
    let mut faces = Vec::with_capacity(n_faces);
    for _ in 0..n_faces {
        let (ln, l) = body.next().ok_or_else(|| parse_err(path, 0, "truncated face list"))?;
        let idx: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| parse_err(path, ln + 1, format!("bad index `{t}`"))))
            .collect::<Result<_>>()?;
        if idx.first() != Some(&3) || idx.len() != 4 {
            return Err(parse_err(path, ln + 1, "only triangles are supported"));
        }
        faces.push([idx[1], idx[2], idx[3]]);
    }
    TriMesh::new(vertices, faces)
}

fn ply_string(mesh: &TriMesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "ply\nformat ascii 1.0");
    let _ = writeln!(s, "element vertex {}", mesh.vertices().len());
    let _ = writeln!(s, "property double x\nproperty double y\nproperty double z");
    let _ = writeln!(s, "element face {}", mesh.faces().len());
    let _ = writeln!(s, "property list uchar int vertex_indices\nend_header");
    for v in mesh.vertices() {
        let _ = writeln!(s, "{:?} {:?} {:?}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    s
}

/// Reads `x,y,z` rows; a non-numeric first row is treated as a header.
pub fn read_points_csv(path: &Path) -> Result<Vec<Point3>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let raw = raw.trim();
        if raw.is_empty() || raw.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = raw.split(',').collect();
        if toks.len() != 3 {
            return Err(parse_err(path, ln + 1, "expected x,y,z"));
        }
        if out.is_empty() && toks[0].trim().parse::<f64>().is_err() {
            continue;
        }
        out.push(Point3::new(
            parse_f64(path, ln + 1, toks[0])?,
            parse_f64(path, ln + 1, toks[1])?,
            parse_f64(path, ln + 1, toks[2])?,
        ));
    }
    Ok(out)
}

pub fn read_polyline_csv(path: &Path) -> Result<Polyline3> {
    Polyline3::new(read_points_csv(path)?)
}

pub fn write_points_csv(path: &Path, points: &[Point3]) -> Result<()> {
    let mut s = String::from("x,y,z\n");
    for p in points {
        let _ = writeln!(s, "{:?},{:?},{:?}", p.x, p.y, p.z);
    }
    write_text(path, &s)
}

/// Named points, one `name,x,y,z` row each; optional header.
pub fn read_named_points_csv(path: &Path) -> Result<Vec<(String, Point3)>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let raw = raw.trim();
        if raw.is_empty() || raw.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = raw.split(',').collect();
        if toks.len() != 4 {
            return Err(parse_err(path, ln + 1, "expected name,x,y,z"));
        }
        if out.is_empty() && toks[1].trim().parse::<f64>().is_err() {
            continue;
        }
        out.push((
            toks[0].trim().to_string(),
            Point3::new(
                parse_f64(path, ln + 1, toks[1])?,
                parse_f64(path, ln + 1, toks[2])?,
                parse_f64(path, ln + 1, toks[3])?,
            ),
        ));
    }
    Ok(out)
}

pub fn write_named_points_csv(path: &Path, points: &[(String, Point3)]) -> Result<()> {
    let mut s = String::from("name,x,y,z\n");
    for (n, p) in points {
        let _ = writeln!(s, "{n},{:?},{:?},{:?}", p.x, p.y, p.z);
    }
    write_text(path, &s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obj_and_ply_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = TriMesh::sphere(Point3::new(1.0, -2.0, 0.5), 3.25, 8, 12);
        for name in ["m.obj", "m.ply"] {
            let p = dir.path().join(name);
            write_mesh(&p, &mesh).unwrap();
            assert_eq!(read_mesh(&p).unwrap(), mesh);
        }
    }

    #[test]
    fn obj_with_slashes_and_comments() {
        let text = "# comment\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\nf -3 -2 -1\n";
        let m = parse_obj(Path::new("x.obj"), text).unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2], [0, 1, 2]]);
        assert!(parse_obj(Path::new("x.obj"), "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n").is_err());
    }

    #[test]
    fn ply_rejects_binary_and_quads() {
        assert!(parse_ply(Path::new("x.ply"), "ply\nformat binary_little_endian 1.0\nend_header\n").is_err());
        let quad = "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\n\
                    element face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        assert!(parse_ply(Path::new("x.ply"), quad).is_err());
    }

    #[test]
    fn csv_points_and_landmarks() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pl.csv");
        std::fs::write(&p, "x,y,z\n0,0,0\n1.5,2,3\n").unwrap();
        let pl = read_polyline_csv(&p).unwrap();
        assert_eq!(pl.points()[1], Point3::new(1.5, 2.0, 3.0));

        let l = dir.path().join("lm.csv");
        let pts = vec![("RAT_origin".to_string(), Point3::new(1.0, 2.0, 3.0))];
        write_named_points_csv(&l, &pts).unwrap();
        assert_eq!(read_named_points_csv(&l).unwrap(), pts);
    }
}
