//! Population control: splitting, cloning, pruning and opacity resets driven
//! by accumulated reference-point gradients.

use nalgebra::Vector3;

use crate::connectivity::{circumradius, EdgeGraph};
use crate::error::{Error, Result};
use crate::scalar::{logit, sigmoid, Real};
use crate::scene::{ParamGroup, TriangleSoup};

/// Largest `|∂L/∂μ|` seen per triangle since the last densification, and
/// the gradient at which it occurred.
#[derive(Clone, Debug, PartialEq)]
pub struct DensifyStats<T: Real> {
    pub max_grad: Vec<T>,
    pub grad_at_max: Vec<Vector3<T>>,
    pub iterations: u64,
}

impl<T: Real> DensifyStats<T> {
    pub fn new(count: usize) -> Self {
        Self { max_grad: vec![T::zero(); count], grad_at_max: vec![Vector3::zeros(); count], iterations: 0 }
    }

    pub fn len(&self) -> usize {
        self.max_grad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.max_grad.is_empty()
    }

    pub fn accumulate(&mut self, mu_grads: &[Vector3<T>]) -> Result<()> {
        if mu_grads.len() != self.len() {
            return Err(Error::Contract(format!(
                "{} gradient entries for {} tracked triangles",
                mu_grads.len(),
                self.len()
            )));
        }
        for (i, g) in mu_grads.iter().enumerate() {
            let n = g.norm();
            if n > self.max_grad[i] {
                self.max_grad[i] = n;
                self.grad_at_max[i] = *g;
            }
        }
        self.iterations += 1;
        Ok(())
    }

    pub fn reset(&mut self, count: usize) {
        *self = Self::new(count);
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensifyParams {
    /// Gradient magnitude above which a triangle is densified.
    pub grad_threshold: f64,
    /// Triangles with a larger circumradius are split, smaller ones cloned.
    pub split_radius: f64,
    /// Clone offset as a fraction of the circumradius.
    pub clone_offset: f64,
    pub prune_alpha: f64,
    /// Growth budget: densification stops adding triangles beyond this
    /// count, preferring the largest gradients (0 = unlimited).
    pub max_count: usize,
}

impl Default for DensifyParams {
    fn default() -> Self {
        Self { grad_threshold: 7.5e-5, split_radius: 0.0, clone_offset: 0.1, prune_alpha: 0.005, max_count: 0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DensifyReport {
    pub split: usize,
    pub cloned: usize,
    pub pruned: usize,
    pub count: usize,
}

/// Appends the four midpoint-subdivision children of triangle `i`, with
/// zeroed gradients and optimizer moments.
pub fn split_into_four<T: Real>(soup: &mut TriangleSoup<T>, i: usize) {
    let layout = soup.layout(i);
    let v = layout.vertices;
    let mu = soup.mu(i);
    let half_scale = soup.scale_raw(i).map(|s| s - T::lit(2f64.ln()));
    let q = soup.quat(i);
    let (op, sg) = (soup.opacity_raw(i), soup.sigma_raw(i));
    let stride = soup.sh_stride() * 3;
    let sh = soup.sh(i).to_vec();
    let vert = |k: usize| &sh[k * stride..(k + 1) * stride];
    let avg = |a: usize, b: usize| -> Vec<T> { vert(a).iter().zip(vert(b)).map(|(x, y)| (*x + *y) / T::lit(2.0)).collect() };
    let two = T::lit(2.0);
    for j in 0..3 {
        // homothety about V_j with ratio 1/2
        let mut block = Vec::with_capacity(3 * stride);
        for k in 0..3 {
            if k == j {
                block.extend_from_slice(vert(j));
            } else {
                block.extend(avg(j, k));
            }
        }
        soup.push((v[j] + mu) / two, &block, half_scale, q, op, sg);
    }
    // homothety about the centroid with ratio -1/2: a half-turn in the plane
    let g3 = v[0] + v[1] + v[2];
    let mut block = Vec::with_capacity(3 * stride);
    for k in 0..3 {
        block.extend(avg((k + 1) % 3, (k + 2) % 3));
    }
    let q_half_turn = [-q[3], q[2], -q[1], q[0]];
    soup.push((g3 - mu) / two, &block, half_scale, q_half_turn, op, sg);
}

/// Splits large and clones small high-gradient triangles, then prunes
/// transparent or degenerate ones. Marks `graph` stale and resets `stats`.
pub fn densify_and_prune<T: Real>(
    soup: &mut TriangleSoup<T>,
    stats: &mut DensifyStats<T>,
    graph: &mut EdgeGraph<T>,
    params: &DensifyParams,
) -> Result<DensifyReport> {
    let n = soup.count();
    if stats.len() != n {
        return Err(Error::Contract(format!("densify stats track {} triangles, soup has {n}", stats.len())));
    }
    let threshold = T::lit(params.grad_threshold);
    let split_radius = T::lit(params.split_radius);
    let mut report = DensifyReport::default();
    let mut remove = vec![false; n];
    let mut chosen: Vec<(usize, T)> = (0..n)
        .filter(|&i| stats.max_grad[i] > threshold)
        .filter_map(|i| {
            let layout = soup.layout(i);
            (!layout.degenerate).then(|| (i, circumradius(&layout)))
        })
        .collect();
    if params.max_count > 0 {
        chosen.sort_by(|a, b| stats.max_grad[b.0].partial_cmp(&stats.max_grad[a.0]).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
        let mut total = n;
        chosen.retain(|&(_, r)| {
            let grow = if r > split_radius { 3 } else { 1 };
            let ok = total + grow <= params.max_count;
            if ok {
                total += grow;
            }
            ok
        });
        chosen.sort_by_key(|c| c.0);
    }
    for (i, r) in chosen {
        if r > split_radius {
            split_into_four(soup, i);
            remove[i] = true;
            report.split += 1;
        } else {
            soup.push_copy(i);
            let g = stats.grad_at_max[i];
            let gn = g.norm();
            if gn > T::zero() {
                let k = soup.count() - 1;
                soup.set_mu(k, soup.mu(k) - g * (T::lit(params.clone_offset) * r / gn));
            }
            report.cloned += 1;
        }
    }
    let m = soup.count();
    let prune_alpha = T::lit(params.prune_alpha);
    let keep: Vec<bool> = (0..m)
        .map(|i| {
            if i < n && remove[i] {
                return false;
            }
            let alive = sigmoid(soup.opacity_raw(i)) >= prune_alpha && !soup.layout(i).degenerate;
            if !alive {
                report.pruned += 1;
            }
            alive
        })
        .collect();
    soup.retain(&keep);
    stats.reset(soup.count());
    graph.stale = true;
    report.count = soup.count();
    Ok(report)
}

/// Lowers every opacity to at most `cap` (or sets it exactly to `cap`) and
/// clears the opacity optimizer moments.
pub fn reset_opacity<T: Real>(soup: &mut TriangleSoup<T>, cap: f64, exact: bool) {
    let cap_raw = T::lit(logit(cap));
    for i in 0..soup.count() {
        let raw = soup.opacity_raw(i);
        soup.set_opacity_raw(i, if exact || raw > cap_raw { cap_raw } else { raw });
    }
    soup.adam_m.get_mut(ParamGroup::Opacity).iter_mut().for_each(|x| *x = T::zero());
    soup.adam_v.get_mut(ParamGroup::Opacity).iter_mut().for_each(|x| *x = T::zero());
}
