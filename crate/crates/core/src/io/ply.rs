//! PLY export of colored point clouds and triangle soups, plus a reader for
//! vertex positions and colors (ASCII and binary little endian).

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::scene::TriangleSoup;

/// Colored points as read from or written to a PLY file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    /// Colors in `[0, 1]`; empty when the file has none.
    pub colors: Vec<Vector3<f64>>,
}

fn header(vertices: usize, faces: Option<usize>) -> String {
    let mut h = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {vertices}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n"
    );
    if let Some(f) = faces {
        h += &format!("element face {f}\nproperty list uchar int vertex_indices\n");
    }
    h + "end_header\n"
}

fn push_vertex(out: &mut Vec<u8>, p: &Vector3<f64>, c: &Vector3<f64>) {
    for k in 0..3 {
        out.extend_from_slice(&(p[k] as f32).to_le_bytes());
    }
    for k in 0..3 {
        out.push((c[k].clamp(0.0, 1.0) * 255.0).round() as u8);
    }
}

pub fn write_points(path: &Path, cloud: &PointCloud) -> Result<()> {
    if !cloud.colors.is_empty() && cloud.colors.len() != cloud.points.len() {
        return Err(Error::Contract("point and color counts differ".into()));
    }
    let mut out = header(cloud.points.len(), None).into_bytes();
    let grey = Vector3::repeat(0.5);
    for (i, p) in cloud.points.iter().enumerate() {
        push_vertex(&mut out, p, cloud.colors.get(i).unwrap_or(&grey));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes every triangle as its own face with three unshared vertices
/// colored by their view-independent (DC) color.
pub fn write_soup<T: Real>(path: &Path, soup: &TriangleSoup<T>) -> Result<()> {
    let n = soup.count();
    let mut out = header(3 * n, Some(n)).into_bytes();
    for i in 0..n {
        let lay = soup.layout(i);
        let sh = soup.sh(i);
        for j in 0..3 {
            let dc = Vector3::from_fn(|c, _| crate::geometry::sh::dc_to_rgb(sh[j * 3 + c].as_f64()));
            push_vertex(&mut out, &lay.vertices[j].map(|v| v.as_f64()), &dc);
        }
    }
    for i in 0..n {
        out.push(3);
        for j in 0..3 {
            out.extend_from_slice(&((3 * i + j) as i32).to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    fn is_int(self) -> bool {
        !matches!(self, Self::F32 | Self::F64)
    }
}

/// Reads the `vertex` element (which must come first) of a PLY file.
pub fn read_points(path: &Path) -> Result<PointCloud> {
    if !path.is_file() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    let bad = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let end = bytes.windows(11).position(|w| w == b"end_header\n").ok_or_else(|| bad(1, "no end_header line".into()))?;
    let head = std::str::from_utf8(&bytes[..end]).map_err(|_| bad(1, "header is not text".into()))?;
    let body = &bytes[end + 11..];
    let mut binary = None;
    let mut count = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    let mut in_vertex = false;
    for (i, line) in head.lines().enumerate() {
        let ln = i + 1;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["ply"] if ln == 1 => {}
            _ if ln == 1 => return Err(bad(1, "missing `ply` magic".into())),
            ["format", "ascii", _] => binary = Some(false),
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", other, _] => return Err(bad(ln, format!("unsupported format `{other}`"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, n] => {
                if count.is_none() && *name != "vertex" {
                    return Err(bad(ln, "the vertex element must come first".into()));
                }
                in_vertex = *name == "vertex";
                if in_vertex {
                    count = Some(n.parse::<usize>().map_err(|_| bad(ln, format!("bad element count `{n}`")))?);
                }
            }
            ["property", "list", ..] if in_vertex => return Err(bad(ln, "list properties on vertices are unsupported".into())),
            ["property", ty, name] if in_vertex => {
                let s = Scalar::parse(ty).ok_or_else(|| bad(ln, format!("unknown property type `{ty}`")))?;
                props.push((name.to_string(), s));
            }
            ["property", ..] => {}
            _ => return Err(bad(ln, format!("unexpected header line `{line}`"))),
        }
    }
    let binary = binary.ok_or_else(|| bad(2, "missing format line".into()))?;
    let count = count.ok_or_else(|| bad(2, "missing vertex element".into()))?;
    let find = |n: &str| props.iter().position(|(p, _)| p == n);
    let (Some(ix), Some(iy), Some(iz)) = (find("x"), find("y"), find("z")) else {
        return Err(bad(2, "vertex element lacks x, y, z".into()));
    };
    let rgb = match (find("red"), find("green"), find("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        _ => None,
    };
    let header_lines = head.lines().count() + 1;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(count);
    if binary {
        let stride: usize = props.iter().map(|(_, s)| s.size()).sum();
        if body.len() < stride * count {
            return Err(bad(header_lines, format!("file holds {} bytes of vertex data, expected {}", body.len(), stride * count)));
        }
        for v in 0..count {
            let mut off = v * stride;
            let mut row = Vec::with_capacity(props.len());
            for (_, s) in &props {
                row.push(s.read_le(&body[off..]));
                off += s.size();
            }
            rows.push(row);
        }
    } else {
        let text = std::str::from_utf8(body).map_err(|_| bad(header_lines, "ASCII body is not text".into()))?;
        let mut lines = text.lines().enumerate();
        while rows.len() < count {
            let (i, line) = lines.next().ok_or_else(|| bad(header_lines, format!("expected {count} vertices, found {}", rows.len())))?;
            let ln = header_lines + i + 1;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad(ln, format!("bad number `{t}`"))))
                .collect::<Result<_>>()?;
            if row.len() < props.len() {
                return Err(bad(ln, format!("expected {} values, found {}", props.len(), row.len())));
            }
            rows.push(row);
        }
    }
    let mut cloud = PointCloud::default();
    for row in rows {
        cloud.points.push(Vector3::new(row[ix], row[iy], row[iz]));
        if let Some([r, g, b]) = rgb {
            let norm = |k: usize| if props[k].1.is_int() { row[k] / 255.0 } else { row[k] };
            cloud.colors.push(Vector3::new(norm(r), norm(g), norm(b)));
        }
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = PointCloud {
            points: vec![Vector3::new(0.5, -1.25, 2.0), Vector3::new(3.0, 0.0, -0.125)],
            colors: vec![Vector3::new(1.0, 0.0, 0.2), Vector3::new(0.0, 0.6, 1.0)],
        };
        let p = dir.path().join("c.ply");
        write_points(&p, &cloud).unwrap();
        let back = read_points(&p).unwrap();
        assert_eq!(back.points, cloud.points);
        for (a, b) in back.colors.iter().zip(&cloud.colors) {
            assert!((a - b).abs().max() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn reads_ascii() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ply");
        fs::write(&p, "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\nproperty double z\nend_header\n1 2 3\n4 5 6\n").unwrap();
        let c = read_points(&p).unwrap();
        assert_eq!(c.points[1], Vector3::new(4.0, 5.0, 6.0));
        assert!(c.colors.is_empty());
        fs::write(&p, "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\nproperty double z\nend_header\n1 2 3\n4 x 6\n").unwrap();
        assert!(matches!(read_points(&p), Err(Error::Parse { line: 9, .. })));
    }

    #[test]
    fn soup_export_has_three_vertices_per_face() {
        let dir = tempfile::tempdir().unwrap();
        let mut soup = TriangleSoup::<f64>::new(0);
        soup.push(Vector3::zeros(), &[0.0; 9], Vector3::zeros(), [1.0, 0.0, 0.0, 0.0], 0.0, 0.0);
        let p = dir.path().join("s.ply");
        write_soup(&p, &soup).unwrap();
        let c = read_points(&p).unwrap();
        assert_eq!(c.points.len(), 3);
        let lay = soup.layout(0);
        for j in 0..3 {
            assert!((c.points[j] - lay.vertices[j]).norm() < 1e-6);
        }
    }
}
