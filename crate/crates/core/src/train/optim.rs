//! Adam with per-group learning rates and the loss/density schedule.

use crate::scalar::Real;
use crate::scene::{ParamGroup, TriangleSoup};
use crate::train::config::TrainConfig;

/// Exponential interpolation from `start` at `t = 0` to `end` at `t = total`.
pub fn lr_exp_decay(t: u64, total: u64, start: f64, end: f64) -> f64 {
    if total == 0 {
        return start;
    }
    let f = (t.min(total) as f64) / total as f64;
    (start.ln() * (1.0 - f) + end.ln() * f).exp()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-15 }
    }
}

/// One bias-corrected Adam update (`step` is 1-based). Entries with a
/// non-finite gradient are left untouched; their count is returned.
pub fn adam_step<T: Real>(params: &mut [T], grads: &[T], m: &mut [T], v: &mut [T], lr: f64, step: u64, p: &AdamParams) -> usize {
    let (b1, b2) = (T::lit(p.beta1), T::lit(p.beta2));
    let c1 = T::lit(1.0 - p.beta1.powf(step as f64));
    let c2 = T::lit(1.0 - p.beta2.powf(step as f64));
    let (lr, eps) = (T::lit(lr), T::lit(p.eps));
    let one = T::one();
    let mut skipped = 0;
    for i in 0..params.len() {
        let g = grads[i];
        if !g.is_finite_val() {
            skipped += 1;
            continue;
        }
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let mh = m[i] / c1;
        let vh = v[i] / c2;
        params[i] -= lr * mh / (vh.sqrt() + eps);
    }
    skipped
}

/// Applies Adam to every parameter group of `soup`, then renormalizes the
/// quaternions. `lrs` is indexed by [`ParamGroup::index`].
pub fn step_soup<T: Real>(soup: &mut TriangleSoup<T>, lrs: &[f64; 6], step: u64, p: &AdamParams) -> usize {
    let mut skipped = 0;
    for g in ParamGroup::ALL {
        let k = g.index();
        skipped += adam_step(
            &mut soup.params.groups[k],
            &soup.grads.groups[k],
            &mut soup.adam_m.groups[k],
            &mut soup.adam_v.groups[k],
            lrs[k],
            step,
            p,
        );
    }
    soup.renormalize_quats();
    skipped
}

/// Iteration-indexed schedule queries (iterations are 1-based).
#[derive(Clone, Copy, Debug)]
pub struct Schedule<'a>(pub &'a TrainConfig);

impl Schedule<'_> {
    pub fn normal_active(&self, t: u64) -> bool {
        self.0.loss.w_normal > 0.0 && t >= self.0.loss.normal_from
    }

    pub fn smooth_active(&self, t: u64) -> bool {
        self.0.loss.w_smooth > 0.0 && t >= self.0.loss.smooth_from
    }

    pub fn connectivity_active(&self, t: u64) -> bool {
        self.0.loss.w_connectivity > 0.0 && t >= self.0.loss.connectivity_from
    }

    pub fn densify_at(&self, t: u64) -> bool {
        let d = &self.0.densify;
        t > d.from && t.is_multiple_of(d.every) && (d.until == 0 || t <= d.until)
    }

    pub fn opacity_reset_at(&self, t: u64) -> bool {
        t.is_multiple_of(self.0.densify.opacity_reset_every)
    }

    pub fn active_sh(&self, t: u64) -> usize {
        ((t / self.0.init.sh_unlock_every) as usize).min(self.0.init.sh_degree)
    }

    pub fn graph_rebuild_due(&self, t: u64) -> bool {
        t.is_multiple_of(self.0.connectivity.rebuild_every)
    }

    pub fn learning_rates(&self, t: u64) -> [f64; 6] {
        let lr = &self.0.lr;
        let mut out = [0.0; 6];
        out[ParamGroup::Mu.index()] = lr_exp_decay(t, self.0.iterations, lr.mu_start, lr.mu_end);
        out[ParamGroup::Sh.index()] = lr.sh;
        out[ParamGroup::Scale.index()] = lr.scale;
        out[ParamGroup::Rotation.index()] = lr.rotation;
        out[ParamGroup::Opacity.index()] = lr.opacity;
        out[ParamGroup::Sigma.index()] = lr.sigma;
        out
    }

    pub fn adam(&self) -> AdamParams {
        AdamParams { beta1: self.0.lr.beta1, beta2: self.0.lr.beta2, eps: self.0.lr.eps }
    }
}
