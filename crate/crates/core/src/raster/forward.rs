//! Forward rendering: per-triangle preparation, tile binning and per-pixel
//! front-to-back blending of color, depth and normal.

use nalgebra::Vector3;
use rayon::prelude::*;

use super::{Camera, DepthMode, RenderConfig};
use crate::geometry::sh::{eval_vertex, VertexColor};
use crate::geometry::{diffuse_weight, interpolate_color, Hit, TriangleFrame};
use crate::scalar::{logit, Real};
use crate::scene::TriangleSoup;

/// Camera-dependent per-triangle data shared by every pixel.
#[derive(Clone, Debug)]
pub struct Prepared<T: Real> {
    pub frame: TriangleFrame<T>,
    pub colors: [VertexColor<T>; 3],
    /// Unit SH view directions (identical for all vertices unless per-vertex).
    pub dirs: [Vector3<T>; 3],
    pub dir_norms: [T; 3],
    pub alpha: T,
    pub sigma: T,
    /// `±1`, flips the normal to face the camera.
    pub orient: T,
}

impl<T: Real> Prepared<T> {
    pub fn oriented_normal(&self) -> Vector3<T> {
        self.frame.n * self.orient
    }

    pub fn rgb(&self) -> [Vector3<T>; 3] {
        [self.colors[0].rgb, self.colors[1].rgb, self.colors[2].rgb]
    }
}

pub(crate) fn prepare<T: Real>(soup: &TriangleSoup<T>, i: usize, origin: &Vector3<T>, cfg: &RenderConfig) -> Option<Prepared<T>> {
    let layout = soup.layout(i);
    let frame = TriangleFrame::from_layout(&layout, *origin)?;
    let act = soup.activated(i);
    let mut dirs = [Vector3::zeros(); 3];
    let mut dir_norms = [T::one(); 3];
    let targets = if cfg.per_vertex_view_dir { layout.vertices } else { [soup.mu(i); 3] };
    for j in 0..3 {
        let v = targets[j] - origin;
        let n = v.norm();
        if !(n > T::zero()) {
            return None;
        }
        dirs[j] = v / n;
        dir_norms[j] = n;
    }
    let stride = soup.sh_stride() * 3;
    let sh = soup.sh(i);
    let colors = std::array::from_fn(|j| eval_vertex(&sh[j * stride..(j + 1) * stride], soup.active_sh, &dirs[j]));
    let orient = if frame.n.dot(&(frame.b - origin)) > T::zero() { -T::one() } else { T::one() };
    Some(Prepared { frame, colors, dirs, dir_norms, alpha: act.alpha, sigma: act.sigma, orient })
}

/// Per-tile triangle lists.
#[derive(Clone, Debug, Default)]
pub struct TileBins {
    pub tile_size: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub lists: Vec<Vec<u32>>,
}

impl TileBins {
    /// Pixel rectangle `(x0, y0, x1, y1)` (exclusive end) of tile `t`.
    pub fn rect(&self, t: usize, width: usize, height: usize) -> (usize, usize, usize, usize) {
        let tx = t % self.tiles_x;
        let ty = t / self.tiles_x;
        let x0 = tx * self.tile_size;
        let y0 = ty * self.tile_size;
        (x0, y0, (x0 + self.tile_size).min(width), (y0 + self.tile_size).min(height))
    }
}

/// In-plane distance beyond the edges where a triangle can still reach the
/// effective-opacity cutoff, or `None` if it never can.
fn reach<T: Real>(alpha: T, sigma: T, alpha_min: f64) -> Option<T> {
    let need = T::lit(alpha_min) / alpha;
    if need > T::one() {
        return None;
    }
    // w >= need  <=>  σ l >= logit(need)
    Some((-logit(need)).max(T::zero()) / sigma)
}

/// Inclusive pixel bounds `(x0, y0, x1, y1)` that may see the triangle.
fn screen_bounds<T: Real>(p: &Prepared<T>, cam: &Camera<T>, cfg: &RenderConfig) -> Option<(usize, usize, usize, usize)> {
    let m = reach(p.alpha, p.sigma, cfg.alpha_min)?;
    let v = &p.frame.v;
    let e1 = (v[1] - v[0]).normalize();
    let e2 = p.frame.n.cross(&e1);
    let full = (0, 0, cam.width - 1, cam.height - 1);
    let eps = T::lit(1e-9);
    let mut any_front = false;
    let mut any_back = false;
    let (mut umin, mut umax, mut vmin, mut vmax) = (T::max_value().unwrap(), T::min_value().unwrap(), T::max_value().unwrap(), T::min_value().unwrap());
    for vert in v {
        for (sa, sb) in [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)] {
            let q = vert + e1 * (m * T::lit(sa)) + e2 * (m * T::lit(sb));
            let c = cam.to_camera(&q);
            if c.z <= eps {
                any_back = true;
                continue;
            }
            any_front = true;
            let u = cam.fx * c.x / c.z + cam.cx;
            let w = cam.fy * c.y / c.z + cam.cy;
            umin = umin.min(u);
            umax = umax.max(u);
            vmin = vmin.min(w);
            vmax = vmax.max(w);
        }
    }
    if !any_front {
        return None;
    }
    if any_back {
        return Some(full);
    }
    let half = T::lit(0.5);
    let lo = |x: T| (x - half).floor().as_f64() - 1.0;
    let hi = |x: T| (x - half).ceil().as_f64() + 1.0;
    let (x0, x1, y0, y1) = (lo(umin), hi(umax), lo(vmin), hi(vmax));
    let (wf, hf) = ((cam.width - 1) as f64, (cam.height - 1) as f64);
    if x1 < 0.0 || y1 < 0.0 || x0 > wf || y0 > hf {
        return None;
    }
    Some((x0.max(0.0) as usize, y0.max(0.0) as usize, x1.min(wf) as usize, y1.min(hf) as usize))
}

fn bin<T: Real>(prepared: &[Option<Prepared<T>>], cam: &Camera<T>, cfg: &RenderConfig) -> TileBins {
    let ts = cfg.tile_size.max(1);
    let tiles_x = cam.width.div_ceil(ts);
    let tiles_y = cam.height.div_ceil(ts);
    let mut lists = vec![Vec::new(); tiles_x * tiles_y];
    let bounds: Vec<_> = prepared
        .par_iter()
        .map(|p| p.as_ref().and_then(|p| screen_bounds(p, cam, cfg)))
        .collect();
    for (i, b) in bounds.iter().enumerate() {
        if let Some((x0, y0, x1, y1)) = *b {
            for ty in y0 / ts..=y1 / ts {
                for tx in x0 / ts..=x1 / ts {
                    lists[ty * tiles_x + tx].push(i as u32);
                }
            }
        }
    }
    TileBins { tile_size: ts, tiles_x, tiles_y, lists }
}

/// Conservative per-tile triangle lists for `soup` seen from `cam`.
pub fn tile_bin<T: Real>(soup: &TriangleSoup<T>, cam: &Camera<T>, cfg: &RenderConfig) -> TileBins {
    let origin = cam.center();
    let prepared: Vec<_> = (0..soup.count()).into_par_iter().map(|i| prepare(soup, i, &origin, cfg)).collect();
    bin(&prepared, cam, cfg)
}

/// One blended (pixel, triangle) pair.
#[derive(Clone, Copy, Debug)]
pub struct Contributor<T: Real> {
    pub tri: u32,
    /// Index into the tile's triangle list.
    pub local: u32,
    pub hit: Hit<T>,
    /// Diffuse weight `w_σ`.
    pub w: T,
    /// Effective opacity `α·w_σ`.
    pub alpha_eff: T,
    /// Transmittance before this contributor.
    pub t_before: T,
}

impl<T: Real> Contributor<T> {
    /// Blending weight `α_eff · T`.
    pub fn weight(&self) -> T {
        self.alpha_eff * self.t_before
    }
}

/// Contributor records of one tile, CSR by pixel (row-major within the tile).
#[derive(Clone, Debug, Default)]
pub struct TileRecords<T: Real> {
    pub start: Vec<u32>,
    pub recs: Vec<Contributor<T>>,
    /// Index (into the pixel's records) of the median-depth contributor.
    pub median: Vec<u32>,
}

pub const NO_MEDIAN: u32 = u32::MAX;

#[derive(Clone, Debug)]
pub struct RenderOutput<T: Real> {
    pub width: usize,
    pub height: usize,
    pub color: Vec<Vector3<T>>,
    pub depth: Vec<T>,
    pub normal: Vec<Vector3<T>>,
    pub transmittance: Vec<T>,
    pub camera: Camera<T>,
    pub config: RenderConfig,
    pub bins: TileBins,
    pub tiles: Vec<TileRecords<T>>,
    pub prepared: Vec<Option<Prepared<T>>>,
    /// Number of triangles in the rendered soup.
    pub count: usize,
}

impl<T: Real> RenderOutput<T> {
    /// Contributor records of pixel `(x, y)`.
    pub fn contributors(&self, x: usize, y: usize) -> &[Contributor<T>] {
        let ts = self.bins.tile_size;
        let t = (y / ts) * self.bins.tiles_x + x / ts;
        let (x0, y0, x1, _) = self.bins.rect(t, self.width, self.height);
        let local = (y - y0) * (x1 - x0) + (x - x0);
        let rec = &self.tiles[t];
        &rec.recs[rec.start[local] as usize..rec.start[local + 1] as usize]
    }

    /// Triangles binned to at least one tile.
    pub fn visible(&self) -> Vec<bool> {
        let mut v = vec![false; self.count];
        for list in &self.bins.lists {
            for &i in list {
                v[i as usize] = true;
            }
        }
        v
    }

    /// True where some surface was hit (depth > 0).
    pub fn valid_depth(&self) -> Vec<bool> {
        self.depth.iter().map(|d| *d > T::zero()).collect()
    }
}

struct PixelOut<T: Real> {
    color: Vector3<T>,
    depth: T,
    normal: Vector3<T>,
    t: T,
    median: u32,
}

#[allow(clippy::too_many_arguments)]
fn shade_pixel<T: Real>(
    prepared: &[Option<Prepared<T>>],
    list: &[u32],
    origin: &Vector3<T>,
    dir: &Vector3<T>,
    cfg: &RenderConfig,
    scratch: &mut Vec<Contributor<T>>,
    recs: &mut Vec<Contributor<T>>,
) -> PixelOut<T> {
    let near = T::lit(cfg.near);
    let eps = T::lit(cfg.eps_parallel);
    let alpha_min = T::lit(cfg.alpha_min);
    scratch.clear();
    for (local, &tri) in list.iter().enumerate() {
        let Some(p) = &prepared[tri as usize] else { continue };
        debug_assert_eq!(p.frame.origin, *origin);
        let Some(hit) = p.frame.hit(dir, near, eps) else { continue };
        let w = diffuse_weight(hit.l, p.sigma);
        let a = p.alpha * w;
        if a < alpha_min {
            continue;
        }
        scratch.push(Contributor { tri, local: local as u32, hit, w, alpha_eff: a, t_before: T::zero() });
    }
    scratch.sort_by(|a, b| a.hit.d.partial_cmp(&b.hit.d).unwrap_or(std::cmp::Ordering::Equal).then(a.tri.cmp(&b.tri)));

    let half = T::lit(0.5);
    let t_min = T::lit(cfg.t_min);
    let mut t = T::one();
    let mut color = Vector3::zeros();
    let mut normal = Vector3::zeros();
    let mut sum_w = T::zero();
    let mut sum_wd = T::zero();
    let mut median = NO_MEDIAN;
    let first = recs.len();
    for c in scratch.iter() {
        let p = prepared[c.tri as usize].as_ref().unwrap();
        let mut c = *c;
        c.t_before = t;
        let wgt = c.alpha_eff * t;
        color += interpolate_color(&p.rgb(), &c.hit.lambda) * wgt;
        normal += p.oriented_normal() * wgt;
        sum_w += wgt;
        sum_wd += wgt * c.hit.d;
        let b = if cfg.transmittance_uses_diffuse { c.alpha_eff } else { p.alpha };
        let t_next = t * (T::one() - b);
        if median == NO_MEDIAN && t_next < half {
            median = (recs.len() - first) as u32;
        }
        recs.push(c);
        t = t_next;
        if t < t_min {
            break;
        }
    }
    let bg = Vector3::new(T::lit(cfg.background[0]), T::lit(cfg.background[1]), T::lit(cfg.background[2]));
    color += bg * t;
    let depth = match cfg.depth_mode {
        DepthMode::Median => {
            if median == NO_MEDIAN {
                T::zero()
            } else {
                recs[first + median as usize].hit.d
            }
        }
        DepthMode::Mean => {
            if sum_w > T::lit(1e-6) {
                sum_wd / sum_w
            } else {
                T::zero()
            }
        }
    };
    PixelOut { color, depth, normal, t, median }
}

/// Renders color, depth, normal and transmittance, keeping the contributor
/// records the backward pass needs.
pub fn render<T: Real>(soup: &TriangleSoup<T>, cam: &Camera<T>, cfg: &RenderConfig) -> RenderOutput<T> {
    let origin = cam.center();
    let prepared: Vec<_> = (0..soup.count()).into_par_iter().map(|i| prepare(soup, i, &origin, cfg)).collect();
    let bins = bin(&prepared, cam, cfg);
    let (w, h) = (cam.width, cam.height);
    let results: Vec<(TileRecords<T>, Vec<PixelOut<T>>)> = (0..bins.lists.len())
        .into_par_iter()
        .map(|t| {
            let (x0, y0, x1, y1) = bins.rect(t, w, h);
            let list = &bins.lists[t];
            let mut rec = TileRecords { start: vec![0], recs: Vec::new(), median: Vec::new() };
            let mut px = Vec::with_capacity((x1 - x0) * (y1 - y0));
            let mut scratch = Vec::new();
            for y in y0..y1 {
                for x in x0..x1 {
                    let dir = cam.pixel_dir(x, y);
                    let out = shade_pixel(&prepared, list, &origin, &dir, cfg, &mut scratch, &mut rec.recs);
                    rec.start.push(rec.recs.len() as u32);
                    rec.median.push(out.median);
                    px.push(out);
                }
            }
            (rec, px)
        })
        .collect();

    let mut out = RenderOutput {
        width: w,
        height: h,
        color: vec![Vector3::zeros(); w * h],
        depth: vec![T::zero(); w * h],
        normal: vec![Vector3::zeros(); w * h],
        transmittance: vec![T::one(); w * h],
        camera: cam.clone(),
        config: cfg.clone(),
        tiles: Vec::with_capacity(results.len()),
        bins,
        prepared,
        count: soup.count(),
    };
    for (t, (rec, px)) in results.into_iter().enumerate() {
        let (x0, y0, x1, y1) = out.bins.rect(t, w, h);
        let mut k = 0;
        for y in y0..y1 {
            for x in x0..x1 {
                let i = y * w + x;
                let p = &px[k];
                out.color[i] = p.color;
                out.depth[i] = p.depth;
                out.normal[i] = p.normal;
                out.transmittance[i] = p.t;
                k += 1;
            }
        }
        out.tiles.push(rec);
    }
    out
}
