//! Text sparse-reconstruction files: `cameras.txt`, `images.txt` and
//! `points3D.txt`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use super::dataset::{Dataset, View};
use super::images::load_rgb;
use crate::error::{Error, Result};
use crate::raster::Camera;
use crate::scalar::Real;
use crate::scene::SparseSeed;

/// Pinhole intrinsics. `SIMPLE_PINHOLE` parses to `fx == fy`.
#[derive(Clone, Debug, PartialEq)]
pub struct Intrinsics {
    pub model: CameraModel,
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CameraModel {
    SimplePinhole,
    Pinhole,
}

/// Registered image: world-to-camera rotation quaternion `(w, x, y, z)` and
/// translation.
#[derive(Clone, Debug, PartialEq)]
pub struct SfmImage {
    pub id: u32,
    pub qvec: [f64; 4],
    pub tvec: Vector3<f64>,
    pub camera_id: u32,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SfmPoint {
    pub id: u64,
    pub xyz: Vector3<f64>,
    pub rgb: [u8; 3],
    pub error: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SfmModel {
    pub cameras: BTreeMap<u32, Intrinsics>,
    pub images: Vec<SfmImage>,
    pub points: Vec<SfmPoint>,
}

struct Lines<'a> {
    path: &'a Path,
}

impl Lines<'_> {
    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse { path: self.path.to_path_buf(), line, msg: msg.into() }
    }

    fn num<N: std::str::FromStr>(&self, line: usize, tok: Option<&str>, what: &str) -> Result<N> {
        let tok = tok.ok_or_else(|| self.err(line, format!("missing {what}")))?;
        tok.parse().map_err(|_| self.err(line, format!("invalid {what} `{tok}`")))
    }

    fn finite(&self, line: usize, tok: Option<&str>, what: &str) -> Result<f64> {
        let v: f64 = self.num(line, tok, what)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(line, format!("{what} is not finite")))
        }
    }
}

/// Non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.starts_with('#'))
}

pub fn parse_cameras(text: &str, path: &Path) -> Result<BTreeMap<u32, Intrinsics>> {
    let p = Lines { path };
    let mut out = BTreeMap::new();
    for (ln, line) in content_lines(text).filter(|(_, l)| !l.is_empty()) {
        let mut it = line.split_whitespace();
        let id: u32 = p.num(ln, it.next(), "camera id")?;
        let model_name = it.next().ok_or_else(|| p.err(ln, "missing camera model"))?;
        let model = match model_name {
            "SIMPLE_PINHOLE" => CameraModel::SimplePinhole,
            "PINHOLE" => CameraModel::Pinhole,
            other => return Err(Error::UnsupportedCamera { path: path.to_path_buf(), line: ln, model: other.to_string() }),
        };
        let width: usize = p.num(ln, it.next(), "width")?;
        let height: usize = p.num(ln, it.next(), "height")?;
        let params: Vec<f64> = it.map(|t| p.finite(ln, Some(t), "camera parameter")).collect::<Result<_>>()?;
        let want = if model == CameraModel::Pinhole { 4 } else { 3 };
        if params.len() != want {
            return Err(p.err(ln, format!("{model_name} needs {want} parameters, got {}", params.len())));
        }
        let (fx, fy, cx, cy) = match model {
            CameraModel::Pinhole => (params[0], params[1], params[2], params[3]),
            CameraModel::SimplePinhole => (params[0], params[0], params[1], params[2]),
        };
        if width == 0 || height == 0 || fx <= 0.0 || fy <= 0.0 {
            return Err(p.err(ln, "image size and focal lengths must be positive"));
        }
        if out.insert(id, Intrinsics { model, width, height, fx, fy, cx, cy }).is_some() {
            return Err(p.err(ln, format!("duplicate camera id {id}")));
        }
    }
    Ok(out)
}

/// Image records come in pairs of lines; the second one (2D observations) is
/// ignored but must be present, possibly empty.
pub fn parse_images(text: &str, path: &Path) -> Result<Vec<SfmImage>> {
    let p = Lines { path };
    let mut out = Vec::new();
    let mut lines = content_lines(text);
    while let Some((ln, line)) = lines.next() {
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let id: u32 = p.num(ln, it.next(), "image id")?;
        let mut q = [0.0; 4];
        for (k, v) in q.iter_mut().enumerate() {
            *v = p.finite(ln, it.next(), ["QW", "QX", "QY", "QZ"][k])?;
        }
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 1e-12) {
            return Err(p.err(ln, "rotation quaternion is zero"));
        }
        let tvec = Vector3::new(p.finite(ln, it.next(), "TX")?, p.finite(ln, it.next(), "TY")?, p.finite(ln, it.next(), "TZ")?);
        let camera_id: u32 = p.num(ln, it.next(), "camera id")?;
        let name = it.collect::<Vec<_>>().join(" ");
        if name.is_empty() {
            return Err(p.err(ln, "missing image name"));
        }
        out.push(SfmImage { id, qvec: q.map(|v| v / norm), tvec, camera_id, name });
        lines.next();
    }
    Ok(out)
}

pub fn parse_points(text: &str, path: &Path) -> Result<Vec<SfmPoint>> {
    let p = Lines { path };
    let mut out = Vec::new();
    for (ln, line) in content_lines(text).filter(|(_, l)| !l.is_empty()) {
        let mut it = line.split_whitespace();
        let id: u64 = p.num(ln, it.next(), "point id")?;
        let xyz = Vector3::new(p.finite(ln, it.next(), "X")?, p.finite(ln, it.next(), "Y")?, p.finite(ln, it.next(), "Z")?);
        let rgb = [p.num(ln, it.next(), "R")?, p.num(ln, it.next(), "G")?, p.num(ln, it.next(), "B")?];
        let error = p.num(ln, it.next(), "reprojection error")?;
        out.push(SfmPoint { id, xyz, rgb, error });
    }
    Ok(out)
}

pub fn write_cameras(cams: &BTreeMap<u32, Intrinsics>) -> String {
    let mut s = String::from("# CAMERA_ID MODEL WIDTH HEIGHT PARAMS[]\n");
    for (id, c) in cams {
        match c.model {
            CameraModel::Pinhole => {
                writeln!(s, "{id} PINHOLE {} {} {:?} {:?} {:?} {:?}", c.width, c.height, c.fx, c.fy, c.cx, c.cy).unwrap()
            }
            CameraModel::SimplePinhole => {
                writeln!(s, "{id} SIMPLE_PINHOLE {} {} {:?} {:?} {:?}", c.width, c.height, c.fx, c.cx, c.cy).unwrap()
            }
        }
    }
    s
}

pub fn write_images(images: &[SfmImage]) -> String {
    let mut s = String::from("# IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME\n# POINTS2D[] as (X, Y, POINT3D_ID)\n");
    for im in images {
        let [w, x, y, z] = im.qvec;
        let t = im.tvec;
        writeln!(s, "{} {w:?} {x:?} {y:?} {z:?} {:?} {:?} {:?} {} {}\n", im.id, t.x, t.y, t.z, im.camera_id, im.name).unwrap();
    }
    s
}

pub fn write_points(points: &[SfmPoint]) -> String {
    let mut s = String::from("# POINT3D_ID X Y Z R G B ERROR TRACK[]\n");
    for p in points {
        let [r, g, b] = p.rgb;
        writeln!(s, "{} {:?} {:?} {:?} {r} {g} {b} {:?}", p.id, p.xyz.x, p.xyz.y, p.xyz.z, p.error).unwrap();
    }
    s
}

/// Directory holding the three text files: `dir`, `dir/sparse/0` or
/// `dir/sparse`.
pub fn find_sparse_dir(dir: &Path) -> Result<PathBuf> {
    if !dir.is_dir() {
        return Err(Error::Missing(dir.to_path_buf()));
    }
    [dir.to_path_buf(), dir.join("sparse/0"), dir.join("sparse")]
        .into_iter()
        .find(|d| d.join("cameras.txt").is_file())
        .ok_or_else(|| Error::Missing(dir.join("cameras.txt")))
}

fn read_text(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    Ok(fs::read_to_string(path)?)
}

impl SfmModel {
    pub fn read(sparse_dir: &Path) -> Result<Self> {
        let cp = sparse_dir.join("cameras.txt");
        let ip = sparse_dir.join("images.txt");
        let pp = sparse_dir.join("points3D.txt");
        let cameras = parse_cameras(&read_text(&cp)?, &cp)?;
        let images = parse_images(&read_text(&ip)?, &ip)?;
        let points = parse_points(&read_text(&pp)?, &pp)?;
        for im in &images {
            if !cameras.contains_key(&im.camera_id) {
                return Err(Error::Validation(format!("image `{}` references unknown camera {}", im.name, im.camera_id)));
            }
        }
        Ok(Self { cameras, images, points })
    }

    pub fn write(&self, sparse_dir: &Path) -> Result<()> {
        fs::create_dir_all(sparse_dir)?;
        fs::write(sparse_dir.join("cameras.txt"), write_cameras(&self.cameras))?;
        fs::write(sparse_dir.join("images.txt"), write_images(&self.images))?;
        fs::write(sparse_dir.join("points3D.txt"), write_points(&self.points))?;
        Ok(())
    }

    /// Camera of image `im`, scaled by `scale`.
    pub fn camera<T: Real>(&self, im: &SfmImage, scale: f64) -> Result<Camera<T>> {
        let c = self
            .cameras
            .get(&im.camera_id)
            .ok_or_else(|| Error::Validation(format!("image `{}` references unknown camera {}", im.name, im.camera_id)))?;
        let [w, x, y, z] = im.qvec;
        let rot: Matrix3<f64> = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, x, y, z)).to_rotation_matrix().into_inner();
        let cam = Camera::new(
            c.width,
            c.height,
            T::lit(c.fx),
            T::lit(c.fy),
            T::lit(c.cx),
            T::lit(c.cy),
            rot.map(T::lit),
            im.tvec.map(T::lit),
        )?;
        Ok(if scale == 1.0 { cam } else { cam.scaled(scale) })
    }

    /// Inverse of [`SfmModel::camera`] at unit scale: one PINHOLE camera per
    /// view.
    pub fn from_views<T: Real>(views: &[(String, Camera<T>)], seed: &SparseSeed<T>) -> Self {
        let mut m = Self::default();
        for (k, (name, cam)) in views.iter().enumerate() {
            let id = k as u32 + 1;
            m.cameras.insert(
                id,
                Intrinsics {
                    model: CameraModel::Pinhole,
                    width: cam.width,
                    height: cam.height,
                    fx: cam.fx.as_f64(),
                    fy: cam.fy.as_f64(),
                    cx: cam.cx.as_f64(),
                    cy: cam.cy.as_f64(),
                },
            );
            let rot = nalgebra::Rotation3::from_matrix_unchecked(cam.rot.map(|v| v.as_f64()));
            let q = UnitQuaternion::from_rotation_matrix(&rot);
            m.images.push(SfmImage {
                id,
                qvec: [q.w, q.i, q.j, q.k],
                tvec: cam.trans.map(|v| v.as_f64()),
                camera_id: id,
                name: name.clone(),
            });
        }
        for (k, (p, c)) in seed.points.iter().zip(&seed.colors).enumerate() {
            m.points.push(SfmPoint {
                id: k as u64 + 1,
                xyz: p.map(|v| v.as_f64()),
                rgb: [0, 1, 2].map(|i| (c[i].as_f64().clamp(0.0, 1.0) * 255.0).round() as u8),
                error: 0.0,
            });
        }
        m
    }

    pub fn seed<T: Real>(&self) -> SparseSeed<T> {
        SparseSeed {
            points: self.points.iter().map(|p| p.xyz.map(T::lit)).collect(),
            colors: self.points.iter().map(|p| Vector3::from_fn(|c, _| T::lit(p.rgb[c] as f64 / 255.0))).collect(),
        }
    }
}

/// Loads a dataset directory: sparse text files (see [`find_sparse_dir`])
/// plus images under `dir/images`. Images are resized to the scaled camera
/// resolution. Views are ordered by image name.
pub fn load_sfm<T: Real>(dir: &Path, scale: f64) -> Result<Dataset<T>> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Config(format!("resolution scale must be positive, got {scale}")));
    }
    let model = SfmModel::read(&find_sparse_dir(dir)?)?;
    let image_dir = dir.join("images");
    let mut images = model.images.clone();
    images.sort_by(|a, b| a.name.cmp(&b.name));
    let mut views = Vec::with_capacity(images.len());
    for im in &images {
        let camera: Camera<T> = model.camera(im, scale)?;
        let raster = load_rgb(&image_dir.join(&im.name), Some((camera.width, camera.height)))?;
        views.push(View { name: im.name.clone(), camera, image: raster.pixels });
    }
    let data = Dataset { views, seed: model.seed() };
    data.validate()?;
    Ok(data)
}

/// Writes a dataset in the layout [`load_sfm`] reads (images as PNG under
/// their view names).
pub fn save_sfm<T: Real>(data: &Dataset<T>, dir: &Path) -> Result<()> {
    let views: Vec<(String, Camera<T>)> = data.views.iter().map(|v| (v.name.clone(), v.camera.clone())).collect();
    SfmModel::from_views(&views, &data.seed).write(&dir.join("sparse/0"))?;
    let image_dir = dir.join("images");
    fs::create_dir_all(&image_dir)?;
    for v in &data.views {
        super::images::save_png(&image_dir.join(&v.name), v.camera.width, v.camera.height, &v.image)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CAMERAS: &str = "# Camera list\n1 PINHOLE 640 480 500.5 501.0 320.0 240.5\n2 SIMPLE_PINHOLE 320 240 250 160 120\n";
    const IMAGES: &str = "# Image list\n1 1 0 0 0 0.1 -0.2 3 1 a.png\n10.0 20.0 -1\n2 0.7071067811865476 0 0.7071067811865476 0 0 0 4 2 b.png\n\n";
    const POINTS: &str = "1 0 0 0 255 0 0 0.5 1 0 2 0\n2 1 0 0 0 255 0 0.25\n3 0 1 0 0 0 255 0.1\n4 1 1 1 128 128 128 0.0\n";

    fn p() -> PathBuf {
        PathBuf::from("fixture")
    }

    #[test]
    fn parses_fixture_exactly() {
        let cams = parse_cameras(CAMERAS, &p()).unwrap();
        assert_eq!(cams[&1], Intrinsics { model: CameraModel::Pinhole, width: 640, height: 480, fx: 500.5, fy: 501.0, cx: 320.0, cy: 240.5 });
        assert_eq!(cams[&2].fx, 250.0);
        assert_eq!(cams[&2].fy, 250.0);
        let ims = parse_images(IMAGES, &p()).unwrap();
        assert_eq!(ims.len(), 2);
        assert_eq!(ims[0].tvec, Vector3::new(0.1, -0.2, 3.0));
        assert_eq!(ims[1].name, "b.png");
        assert_eq!(ims[1].camera_id, 2);
        let pts = parse_points(POINTS, &p()).unwrap();
        assert_eq!(pts.len(), 4);
        assert_eq!(pts[3].rgb, [128, 128, 128]);
        assert_eq!(pts[0].error, 0.5);
    }

    #[test]
    fn identity_pose_principal_ray_is_optical_axis() {
        let m = SfmModel {
            cameras: parse_cameras(CAMERAS, &p()).unwrap(),
            images: parse_images(IMAGES, &p()).unwrap(),
            points: Vec::new(),
        };
        let cam: Camera<f64> = m.camera(&m.images[0], 1.0).unwrap();
        let d = cam.cam_dir(320.0, 240.5);
        assert!((d.normalize() - Vector3::z()).norm() < 1e-15);
        assert_eq!(cam.center(), -Vector3::new(0.1, -0.2, 3.0));
    }

    #[test]
    fn serialization_round_trips() {
        let m = SfmModel {
            cameras: parse_cameras(CAMERAS, &p()).unwrap(),
            images: parse_images(IMAGES, &p()).unwrap(),
            points: parse_points(POINTS, &p()).unwrap(),
        };
        let again = SfmModel {
            cameras: parse_cameras(&write_cameras(&m.cameras), &p()).unwrap(),
            images: parse_images(&write_images(&m.images), &p()).unwrap(),
            points: parse_points(&write_points(&m.points), &p()).unwrap(),
        };
        assert_eq!(m, again);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_cameras("# c\n1 PINHOLE 10 10 1 1 5\n", &p()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let e = parse_points("1 0 0 x 1 1 1 0\n", &p()).unwrap_err();
        assert!(e.to_string().contains("fixture:1"), "{e}");
        assert!(matches!(parse_cameras("1 OPENCV 1 1 1 1 1 1 0 0 0 0", &p()), Err(Error::UnsupportedCamera { line: 1, .. })));
        let e = parse_images("1 0 0 0 0 0 0 0 1 a.png\n\n", &p()).unwrap_err();
        assert!(e.to_string().contains("zero"));
    }

    #[test]
    fn missing_directory_is_reported() {
        let e = load_sfm::<f64>(Path::new("/nonexistent/scene"), 1.0).unwrap_err();
        assert!(e.to_string().contains("/nonexistent/scene"));
    }
}
