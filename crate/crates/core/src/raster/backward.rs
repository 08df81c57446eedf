//! Reverse-mode pass of [`render`](super::render): pixel gradients to raw
//! triangle parameter gradients.

use nalgebra::Vector3;
use rayon::prelude::*;

use super::forward::{Prepared, RenderOutput, NO_MEDIAN};
use super::DepthMode;
use crate::error::{Error, Result};
use crate::geometry::sh::{eval_vertex_backward, normalize_backward};
use crate::geometry::{diffuse_weight_grad, interpolate_color, FrameGrad};
use crate::scalar::Real;
use crate::scene::{layout_backward, ParamGroup, TriangleSoup};

/// Upstream gradients on the rendered images.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrads<T: Real> {
    pub color: Vec<Vector3<T>>,
    pub depth: Vec<T>,
    pub normal: Vec<Vector3<T>>,
}

impl<T: Real> ImageGrads<T> {
    pub fn zeros(pixels: usize) -> Self {
        Self { color: vec![Vector3::zeros(); pixels], depth: vec![T::zero(); pixels], normal: vec![Vector3::zeros(); pixels] }
    }

    pub fn add_scaled(&mut self, o: &Self, s: T) {
        for (a, b) in self.color.iter_mut().zip(&o.color) {
            *a += b * s;
        }
        for (a, b) in self.depth.iter_mut().zip(&o.depth) {
            *a += *b * s;
        }
        for (a, b) in self.normal.iter_mut().zip(&o.normal) {
            *a += b * s;
        }
    }
}

/// Per-triangle intermediate gradients (before the parameter chain rule).
#[derive(Clone, Copy, Debug)]
struct TriGrad<T: Real> {
    frame: FrameGrad<T>,
    normal: Vector3<T>,
    alpha: T,
    sigma: T,
    rgb: [Vector3<T>; 3],
    touched: bool,
}

impl<T: Real> Default for TriGrad<T> {
    fn default() -> Self {
        Self {
            frame: FrameGrad::default(),
            normal: Vector3::zeros(),
            alpha: T::zero(),
            sigma: T::zero(),
            rgb: [Vector3::zeros(); 3],
            touched: false,
        }
    }
}

impl<T: Real> TriGrad<T> {
    fn add(&mut self, o: &Self) {
        if !o.touched {
            return;
        }
        self.frame.add(&o.frame);
        self.normal += o.normal;
        self.alpha += o.alpha;
        self.sigma += o.sigma;
        for j in 0..3 {
            self.rgb[j] += o.rgb[j];
        }
        self.touched = true;
    }
}

fn tile_backward<T: Real>(out: &RenderOutput<T>, g: &ImageGrads<T>, t: usize) -> Vec<TriGrad<T>> {
    let list = &out.bins.lists[t];
    let mut acc = vec![TriGrad::default(); list.len()];
    let rec = &out.tiles[t];
    let cfg = &out.config;
    let (x0, y0, x1, y1) = out.bins.rect(t, out.width, out.height);
    let bg = Vector3::new(T::lit(cfg.background[0]), T::lit(cfg.background[1]), T::lit(cfg.background[2]));
    let mut k = 0;
    for y in y0..y1 {
        for x in x0..x1 {
            let recs = &rec.recs[rec.start[k] as usize..rec.start[k + 1] as usize];
            let median = rec.median[k];
            k += 1;
            if recs.is_empty() {
                continue;
            }
            let pix = y * out.width + x;
            let (gc, gd, gn) = (g.color[pix], g.depth[pix], g.normal[pix]);
            let dir = out.camera.pixel_dir(x, y);
            let (mut sum_w, mut sum_wd) = (T::zero(), T::zero());
            for c in recs {
                sum_w += c.weight();
                sum_wd += c.weight() * c.hit.d;
            }
            let mean_active = cfg.depth_mode == DepthMode::Mean && sum_w > T::lit(1e-6);
            let mean_d = if mean_active { sum_wd / sum_w } else { T::zero() };
            let mut g_t = gc.dot(&bg);
            for (i, c) in recs.iter().enumerate().rev() {
                let p: &Prepared<T> = out.prepared[c.tri as usize].as_ref().expect("contributor was prepared");
                let rgb = p.rgb();
                let col = interpolate_color(&rgb, &c.hit.lambda);
                let n_o = p.oriented_normal();
                let a = c.alpha_eff;
                let t_i = c.t_before;
                let w_i = a * t_i;
                let mut g_w = gc.dot(&col) + gn.dot(&n_o);
                let mut g_d = T::zero();
                if mean_active {
                    g_w += gd * (c.hit.d - mean_d) / sum_w;
                    g_d += gd * w_i / sum_w;
                } else if cfg.depth_mode == DepthMode::Median && median != NO_MEDIAN && i == median as usize {
                    g_d += gd;
                }
                let g_a = g_w * t_i;
                let b = if cfg.transmittance_uses_diffuse { a } else { p.alpha };
                let g_b = -t_i * g_t;
                g_t = g_w * a + g_t * (T::one() - b);

                let tg = &mut acc[c.local as usize];
                tg.touched = true;
                let (_, dw_dl, dw_ds) = diffuse_weight_grad(c.hit.l, p.sigma);
                let (g_alpha, g_ws) = if cfg.transmittance_uses_diffuse {
                    ((g_a + g_b) * c.w, (g_a + g_b) * p.alpha)
                } else {
                    (g_a * c.w + g_b, g_a * p.alpha)
                };
                tg.alpha += g_alpha;
                tg.sigma += g_ws * dw_ds;
                let g_l = g_ws * dw_dl;
                let g_col = gc * w_i;
                let g_lambda = [g_col.dot(&rgb[0]), g_col.dot(&rgb[1]), g_col.dot(&rgb[2])];
                for j in 0..3 {
                    tg.rgb[j] += g_col * c.hit.lambda[j];
                }
                tg.normal += gn * (w_i * p.orient);
                p.frame.hit_backward(&c.hit, &dir, g_d, g_lambda, g_l, &mut tg.frame);
            }
        }
    }
    acc
}

/// Accumulates parameter gradients of the loss whose image gradients are `g`
/// into `soup.grads`. Returns this render's gradient on each `μ` (zero for
/// triangles that did not contribute).
pub fn render_backward<T: Real>(soup: &mut TriangleSoup<T>, out: &RenderOutput<T>, g: &ImageGrads<T>) -> Result<Vec<Vector3<T>>> {
    let px = out.width * out.height;
    if g.color.len() != px || g.depth.len() != px || g.normal.len() != px {
        return Err(Error::Contract(format!("image gradients do not match a {}x{} render", out.width, out.height)));
    }
    if soup.count() != out.count {
        return Err(Error::Contract(format!("render has {} triangles, soup has {}", out.count, soup.count())));
    }
    let n = soup.count();
    let tiles = out.bins.lists.len();
    let totals: Vec<TriGrad<T>> = if out.config.deterministic {
        let locals: Vec<Vec<TriGrad<T>>> = (0..tiles).into_par_iter().map(|t| tile_backward(out, g, t)).collect();
        let mut totals = vec![TriGrad::default(); n];
        for (t, local) in locals.iter().enumerate() {
            for (tg, &tri) in local.iter().zip(&out.bins.lists[t]) {
                totals[tri as usize].add(tg);
            }
        }
        totals
    } else {
        (0..tiles)
            .into_par_iter()
            .fold(
                || vec![TriGrad::default(); n],
                |mut acc, t| {
                    for (tg, &tri) in tile_backward(out, g, t).iter().zip(&out.bins.lists[t]) {
                        acc[tri as usize].add(tg);
                    }
                    acc
                },
            )
            .reduce(
                || vec![TriGrad::default(); n],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(&b) {
                        x.add(y);
                    }
                    a
                },
            )
    };

    let per_vertex = out.config.per_vertex_view_dir;
    let stride = soup.sh_stride() * 3;
    let active = soup.active_sh;
    let soup_ref = &*soup;
    type Row<T> = (Vector3<T>, Vec<T>, Vector3<T>, [T; 4], T, T);
    let rows: Vec<Option<Row<T>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let tg = &totals[i];
            if !tg.touched {
                return None;
            }
            let p = out.prepared[i].as_ref()?;
            let (mut g_v, g_n_frame) = p.frame.finish_backward(&tg.frame);
            let g_n = g_n_frame + tg.normal;
            let sh = soup_ref.sh(i);
            let mut g_sh = vec![T::zero(); 3 * stride];
            let mut g_mu_dir = Vector3::zeros();
            for j in 0..3 {
                let g_dir = eval_vertex_backward(
                    &sh[j * stride..(j + 1) * stride],
                    active,
                    &p.dirs[j],
                    &p.colors[j],
                    &tg.rgb[j],
                    &mut g_sh[j * stride..(j + 1) * stride],
                );
                let g_target = normalize_backward(&p.dirs[j], p.dir_norms[j], &g_dir);
                if per_vertex {
                    g_v[j] += g_target;
                } else {
                    g_mu_dir += g_target;
                }
            }
            let (g_mu, g_s, g_q) = layout_backward(&soup_ref.scale_raw(i), &soup_ref.quat(i), &g_v, &g_n);
            let g_op = tg.alpha * p.alpha * (T::one() - p.alpha);
            let g_sig = tg.sigma * p.sigma;
            Some((g_mu + g_mu_dir, g_sh, g_s, g_q, g_op, g_sig))
        })
        .collect();

    let mut mu_grads = vec![Vector3::zeros(); n];
    let w_sh = stride * 3;
    for (i, row) in rows.into_iter().enumerate() {
        let Some((g_mu, g_sh, g_s, g_q, g_op, g_sig)) = row else { continue };
        mu_grads[i] = g_mu;
        let gr = &mut soup.grads;
        for k in 0..3 {
            gr.get_mut(ParamGroup::Mu)[3 * i + k] += g_mu[k];
            gr.get_mut(ParamGroup::Scale)[3 * i + k] += g_s[k];
        }
        for (dst, src) in gr.get_mut(ParamGroup::Sh)[i * w_sh..(i + 1) * w_sh].iter_mut().zip(&g_sh) {
            *dst += *src;
        }
        for k in 0..4 {
            gr.get_mut(ParamGroup::Rotation)[4 * i + k] += g_q[k];
        }
        gr.get_mut(ParamGroup::Opacity)[i] += g_op;
        gr.get_mut(ParamGroup::Sigma)[i] += g_sig;
    }
    Ok(mu_grads)
}
