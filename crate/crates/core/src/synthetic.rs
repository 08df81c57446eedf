//! Synthetic scenes with exactly known geometry: a textured quad and a
//! folded two-plane scene. Ground-truth images are rendered from a sharp,
//! opaque triangle soup that tiles the textured surfaces.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::sh::rgb_to_dc;
use crate::io::fusion::{fuse_depth_maps, DepthView, FusedCloud, FusionParams};
use crate::io::{chamfer, Dataset, View};
use crate::raster::{render, Camera, RenderConfig};
use crate::scalar::{logit, Real};
use crate::scene::{fit_layout, SparseSeed, TriangleSoup};

/// A planar textured rectangle `origin + u·axis_u + v·axis_v`, `u, v ∈ [0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    pub origin: Vector3<f64>,
    pub axis_u: Vector3<f64>,
    pub axis_v: Vector3<f64>,
    /// Texture phase so panels look different.
    pub phase: f64,
}

impl Panel {
    pub fn point(&self, u: f64, v: f64) -> Vector3<f64> {
        self.origin + self.axis_u * u + self.axis_v * v
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.axis_u.cross(&self.axis_v).normalize()
    }

    /// Smooth color pattern in `[0.1, 0.9]`.
    pub fn texture(&self, u: f64, v: f64) -> Vector3<f64> {
        let p = self.phase;
        let tau = std::f64::consts::TAU;
        Vector3::new(
            0.5 + 0.4 * (tau * (1.5 * u + 0.5 * v) + p).sin(),
            0.5 + 0.4 * (tau * (2.0 * v - 0.5 * u) + 1.3 * p).cos(),
            0.5 + 0.4 * (tau * (u * v * 2.0) + 0.7 + p).sin(),
        )
    }

    /// Ray distance to the panel, if the ray hits it.
    pub fn ray_hit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let n = self.axis_u.cross(&self.axis_v);
        let den = n.dot(dir);
        if den.abs() < 1e-12 {
            return None;
        }
        let t = n.dot(&(self.origin - origin)) / den;
        if t <= 0.0 {
            return None;
        }
        let rel = origin + dir * t - self.origin;
        let m = Matrix3::from_columns(&[self.axis_u, self.axis_v, n]);
        let uvw = m.try_inverse()? * rel;
        ((0.0..=1.0).contains(&uvw.x) && (0.0..=1.0).contains(&uvw.y)).then_some(t)
    }

    /// Unsigned distance from `p` to the panel.
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        let n = self.axis_u.cross(&self.axis_v);
        let m = Matrix3::from_columns(&[self.axis_u, self.axis_v, n]);
        let Some(inv) = m.try_inverse() else { return f64::INFINITY };
        let uvw = inv * (p - self.origin);
        let q = self.point(uvw.x.clamp(0.0, 1.0), uvw.y.clamp(0.0, 1.0));
        // clamping in the oblique (u, v) frame is exact for rectangles
        (p - q).norm()
    }
}

/// Scene description plus generation knobs.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub panels: Vec<Panel>,
    pub views: usize,
    pub held_out: usize,
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    /// Cameras sit on a spherical cap of this radius around `target`.
    pub radius: f64,
    pub target: Vector3<f64>,
    /// Half-angle of the camera cap around `view_axis` in degrees.
    pub cap_degrees: f64,
    /// Direction from the target toward the cameras.
    pub view_axis: Vector3<f64>,
    /// Ground-truth soup resolution per panel side.
    pub grid: usize,
    pub seed_points: usize,
    /// Standard deviation of seed position noise (world units).
    pub seed_noise: f64,
    pub rng_seed: u64,
}

impl SceneSpec {
    /// A 2×2 textured square facing the cameras.
    pub fn quad() -> Self {
        Self {
            panels: vec![Panel {
                origin: Vector3::new(-1.0, -1.0, 0.0),
                axis_u: Vector3::new(2.0, 0.0, 0.0),
                axis_v: Vector3::new(0.0, 2.0, 0.0),
                phase: 0.0,
            }],
            views: 20,
            held_out: 4,
            width: 128,
            height: 128,
            focal: 140.0,
            radius: 3.2,
            target: Vector3::zeros(),
            cap_degrees: 30.0,
            view_axis: Vector3::new(0.0, 0.0, -1.0),
            grid: 12,
            seed_points: 300,
            seed_noise: 0.0,
            rng_seed: 11,
        }
    }

    /// Two 2×2 panels meeting along the y axis at a 120° fold (convex toward
    /// the cameras).
    pub fn two_planes() -> Self {
        let a = 30f64.to_radians();
        let half = Vector3::new(a.cos(), 0.0, a.sin());
        Self {
            panels: vec![
                Panel { origin: Vector3::new(0.0, -1.0, 0.0), axis_u: -half * 1.6, axis_v: Vector3::new(0.0, 2.0, 0.0), phase: 0.0 },
                Panel {
                    origin: Vector3::new(0.0, -1.0, 0.0),
                    axis_u: Vector3::new(half.x, 0.0, -half.z) * 1.6,
                    axis_v: Vector3::new(0.0, 2.0, 0.0),
                    phase: 2.0,
                },
            ],
            target: Vector3::new(0.0, 0.0, 0.3),
            ..Self::quad()
        }
    }

    /// Largest bounding-box side of the panels.
    pub fn extent(&self) -> f64 {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for p in &self.panels {
            for (u, v) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
                let q = p.point(u, v);
                lo = lo.inf(&q);
                hi = hi.sup(&q);
            }
        }
        (hi - lo).max()
    }

    pub fn cameras(&self) -> Vec<Camera<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        let axis = self.view_axis.normalize();
        let helper = if axis.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let e1 = axis.cross(&helper).normalize();
        let e2 = axis.cross(&e1);
        let total = self.views + self.held_out;
        let cap = self.cap_degrees.to_radians();
        (0..total)
            .map(|k| {
                // golden-angle spiral over the cap, lightly jittered
                let f = (k as f64 + 0.5) / total as f64;
                let theta = cap * f.sqrt() + rng.random_range(-0.02..0.02);
                let phi = k as f64 * 2.399_963_229_728_653 + rng.random_range(-0.05..0.05);
                let dir = axis * theta.cos() + (e1 * phi.cos() + e2 * phi.sin()) * theta.sin();
                let eye = self.target + dir * self.radius;
                Camera::look_at(self.width, self.height, self.focal, eye, self.target, e2)
            })
            .collect()
    }

    /// Sharp, opaque soup tiling every panel with slightly enlarged grid
    /// triangles whose vertex colors sample the texture.
    pub fn ground_truth_soup(&self) -> TriangleSoup<f64> {
        let mut soup = TriangleSoup::new(0);
        let n = self.grid;
        let cell = self.panels.iter().map(|p| p.axis_u.norm().min(p.axis_v.norm())).fold(f64::INFINITY, f64::min) / n as f64;
        let sigma = 400.0 / cell;
        // enlarge each triangle so that neighbors overlap by several falloff widths
        let grow = 8.0 / sigma;
        for p in &self.panels {
            for i in 0..n {
                for j in 0..n {
                    let uv = |a: usize, b: usize| (a as f64 / n as f64, b as f64 / n as f64);
                    let corners = [uv(i, j), uv(i + 1, j), uv(i + 1, j + 1), uv(i, j + 1)];
                    for tri in [[0, 1, 2], [0, 2, 3]] {
                        let uvs = tri.map(|k| corners[k]);
                        let pts = uvs.map(|(u, v)| p.point(u, v));
                        let c = (pts[0] + pts[1] + pts[2]) / 3.0;
                        let inr = inradius(&pts);
                        let pts = pts.map(|q| c + (q - c) * (1.0 + grow / inr));
                        let Some((mu, sc, q)) = fit_layout(&pts) else { continue };
                        let mut sh = vec![0.0; 9];
                        for (k, (u, v)) in uvs.iter().enumerate() {
                            let col = p.texture(*u, *v);
                            for ch in 0..3 {
                                sh[k * 3 + ch] = rgb_to_dc(col[ch]);
                            }
                        }
                        soup.push(mu, &sh, sc.map(f64::ln), q, logit(1.0 - 1e-6), sigma.ln());
                    }
                }
            }
        }
        soup
    }

    /// Analytic ray distance to the nearest panel per pixel (0 = miss).
    pub fn analytic_depth(&self, cam: &Camera<f64>) -> Vec<f64> {
        let c = cam.center();
        let mut out = Vec::with_capacity(cam.pixel_count());
        for y in 0..cam.height {
            for x in 0..cam.width {
                let d = cam.pixel_dir(x, y);
                let hit = self.panels.iter().filter_map(|p| p.ray_hit(&c, &d)).fold(f64::INFINITY, f64::min);
                out.push(if hit.is_finite() { hit } else { 0.0 });
            }
        }
        out
    }

    /// Distance from `p` to the nearest panel.
    pub fn surface_distance(&self, p: &Vector3<f64>) -> f64 {
        self.panels.iter().map(|s| s.distance(p)).fold(f64::INFINITY, f64::min)
    }

    pub fn seed(&self) -> SparseSeed<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed ^ 0x5eed);
        let mut seed = SparseSeed::default();
        for k in 0..self.seed_points {
            let p = &self.panels[k % self.panels.len()];
            let (u, v) = (rng.random_range(0.02..0.98), rng.random_range(0.02..0.98));
            let noise = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)) * self.seed_noise;
            seed.points.push(p.point(u, v) + noise);
            seed.colors.push(p.texture(u, v));
        }
        seed
    }

    /// Renders the ground truth for every camera. The first `views` views
    /// are for training, the rest held out.
    pub fn generate<T: Real>(&self) -> GeneratedScene<T> {
        let gt = self.ground_truth_soup();
        let cfg = RenderConfig::default();
        let mut views = Vec::new();
        let mut depths = Vec::new();
        for (k, cam) in self.cameras().into_iter().enumerate() {
            let out = render(&gt, &cam, &cfg);
            views.push(View {
                name: format!("view_{k:03}.png"),
                camera: cam.cast(),
                image: out.color.iter().map(|c| c.map(|x| T::lit(x.clamp(0.0, 1.0)))).collect(),
            });
            depths.push(self.analytic_depth(&cam));
        }
        let seed = self.seed();
        let dataset = Dataset {
            views,
            seed: SparseSeed {
                points: seed.points.iter().map(|p| p.map(T::lit)).collect(),
                colors: seed.colors.iter().map(|p| p.map(T::lit)).collect(),
            },
        };
        GeneratedScene { dataset, train: (0..self.views).collect(), held_out: (self.views..self.views + self.held_out).collect(), depths }
    }
}

/// Geometric accuracy of a reconstruction against the analytic surfaces.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GeometryReport {
    /// Mean analytic depth over covered pixels.
    pub mean_depth: f64,
    /// Mean absolute depth error over the best `keep` fraction of covered
    /// pixels (a pixel the reconstruction misses counts as the worst).
    pub depth_mae: f64,
    /// Fraction of covered pixels that received a depth.
    pub coverage: f64,
    /// Mean exact distance of fused points to the surfaces.
    pub accuracy: f64,
    /// Mean distance from the analytic surface samples to the fused cloud.
    pub completeness: f64,
    /// `(accuracy + completeness) / 2`.
    pub chamfer: f64,
    pub fused_points: usize,
}

impl SceneSpec {
    /// Renders `soup` from `cameras`, scores its depth maps against the
    /// analytic depth and fuses them into a cloud scored against the surface.
    pub fn evaluate_geometry<T: Real>(
        &self,
        soup: &TriangleSoup<T>,
        cameras: &[Camera<T>],
        render_cfg: &RenderConfig,
        fusion: &FusionParams,
        keep: f64,
    ) -> (GeometryReport, FusedCloud) {
        let mut errors = Vec::new();
        let mut depth_sum = 0.0;
        let mut hit = 0usize;
        let mut views = Vec::with_capacity(cameras.len());
        let mut reference = Vec::new();
        for cam in cameras {
            let out = render(soup, cam, render_cfg);
            let cam64: Camera<f64> = cam.cast();
            let truth = self.analytic_depth(&cam64);
            for (i, (r, t)) in out.depth.iter().zip(&truth).enumerate() {
                if *t <= 0.0 {
                    continue;
                }
                depth_sum += t;
                let r = r.as_f64();
                if r > 0.0 {
                    hit += 1;
                    errors.push((r - t).abs());
                } else {
                    errors.push(f64::INFINITY);
                }
                let (x, y) = (i % cam.width, i / cam.width);
                reference.push(cam64.unproject(x as f64 + 0.5, y as f64 + 0.5, *t));
            }
            views.push(DepthView { camera: cam.clone(), depth: out.depth, color: out.color });
        }
        let n = errors.len();
        errors.sort_by(f64::total_cmp);
        let k = ((n as f64 * keep).ceil() as usize).clamp(1, n.max(1));
        let depth_mae = if n == 0 { f64::INFINITY } else { errors[..k].iter().sum::<f64>() / k as f64 };
        let cloud = fuse_depth_maps(&views, fusion);
        let accuracy = if cloud.is_empty() {
            f64::INFINITY
        } else {
            cloud.points.iter().map(|p| self.surface_distance(p)).sum::<f64>() / cloud.len() as f64
        };
        let completeness = if cloud.is_empty() { f64::INFINITY } else { chamfer(&cloud.points, &reference).completeness };
        let report = GeometryReport {
            mean_depth: depth_sum / n.max(1) as f64,
            depth_mae,
            coverage: hit as f64 / n.max(1) as f64,
            accuracy,
            completeness,
            chamfer: (accuracy + completeness) / 2.0,
            fused_points: cloud.len(),
        };
        (report, cloud)
    }
}

/// Output of [`SceneSpec::generate`].
#[derive(Clone, Debug)]
pub struct GeneratedScene<T: Real> {
    pub dataset: Dataset<T>,
    pub train: Vec<usize>,
    pub held_out: Vec<usize>,
    /// Analytic depth per view.
    pub depths: Vec<Vec<f64>>,
}

fn inradius(p: &[Vector3<f64>; 3]) -> f64 {
    let a = (p[1] - p[2]).norm();
    let b = (p[0] - p[2]).norm();
    let c = (p[0] - p[1]).norm();
    let area = (p[1] - p[0]).cross(&(p[2] - p[0])).norm() / 2.0;
    2.0 * area / (a + b + c)
}
