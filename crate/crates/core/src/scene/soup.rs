//! Structure-of-arrays storage of every optimizable triangle parameter, with
//! mirrored gradient and Adam moment buffers.

use nalgebra::Vector3;

use crate::geometry::sh::coeff_count;
use crate::scalar::Real;
use crate::scene::layout::{activate, layout_from_raw, normalize_quat, Activated, VertexLayout};

/// The independently optimized parameter groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Mu,
    Sh,
    Scale,
    Rotation,
    Opacity,
    Sigma,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 6] = [Self::Mu, Self::Sh, Self::Scale, Self::Rotation, Self::Opacity, Self::Sigma];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Mu => "mu",
            Self::Sh => "sh",
            Self::Scale => "scale",
            Self::Rotation => "rotation",
            Self::Opacity => "opacity",
            Self::Sigma => "sigma",
        }
    }
}

/// One flat array per [`ParamGroup`], each holding `count` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBuffers<T: Real> {
    pub groups: [Vec<T>; 6],
}

impl<T: Real> ParamBuffers<T> {
    pub fn zeros(count: usize, widths: &[usize; 6]) -> Self {
        Self { groups: std::array::from_fn(|g| vec![T::zero(); count * widths[g]]) }
    }

    pub fn get(&self, g: ParamGroup) -> &[T] {
        &self.groups[g.index()]
    }

    pub fn get_mut(&mut self, g: ParamGroup) -> &mut [T] {
        &mut self.groups[g.index()]
    }

    pub fn fill_zero(&mut self) {
        for g in &mut self.groups {
            g.iter_mut().for_each(|x| *x = T::zero());
        }
    }

    pub fn zero_row(&mut self, i: usize, widths: &[usize; 6]) {
        for (g, w) in self.groups.iter_mut().zip(widths) {
            g[i * w..(i + 1) * w].iter_mut().for_each(|x| *x = T::zero());
        }
    }

    pub fn push_row_from(&mut self, src: &Self, i: usize, widths: &[usize; 6]) {
        for ((g, s), w) in self.groups.iter_mut().zip(&src.groups).zip(widths) {
            g.extend_from_slice(&s[i * w..(i + 1) * w]);
        }
    }

    pub fn push_zero_row(&mut self, widths: &[usize; 6]) {
        for (g, w) in self.groups.iter_mut().zip(widths) {
            g.extend(std::iter::repeat_n(T::zero(), *w));
        }
    }

    /// Keeps the rows whose `keep` flag is set, preserving order.
    pub fn retain_rows(&mut self, keep: &[bool], widths: &[usize; 6]) {
        for (g, w) in self.groups.iter_mut().zip(widths) {
            let mut out = Vec::with_capacity(g.len());
            for (i, k) in keep.iter().enumerate() {
                if *k {
                    out.extend_from_slice(&g[i * w..(i + 1) * w]);
                }
            }
            *g = out;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.groups.iter().all(|g| g.iter().all(|x| x.is_finite_val()))
    }
}

/// The triangle soup. Parameters are raw (pre-activation); see
/// [`layout_from_raw`] and [`activate`].
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleSoup<T: Real> {
    /// Maximum SH degree stored per vertex.
    pub sh_degree: usize,
    /// Degree currently evaluated (grows during training).
    pub active_sh: usize,
    pub params: ParamBuffers<T>,
    pub grads: ParamBuffers<T>,
    pub adam_m: ParamBuffers<T>,
    pub adam_v: ParamBuffers<T>,
}

impl<T: Real> TriangleSoup<T> {
    pub fn new(sh_degree: usize) -> Self {
        let w = Self::widths_for(sh_degree);
        Self {
            sh_degree,
            active_sh: 0,
            params: ParamBuffers::zeros(0, &w),
            grads: ParamBuffers::zeros(0, &w),
            adam_m: ParamBuffers::zeros(0, &w),
            adam_v: ParamBuffers::zeros(0, &w),
        }
    }

    pub fn widths_for(sh_degree: usize) -> [usize; 6] {
        [3, 3 * coeff_count(sh_degree) * 3, 3, 4, 1, 1]
    }

    pub fn widths(&self) -> [usize; 6] {
        Self::widths_for(self.sh_degree)
    }

    /// Coefficients per vertex.
    pub fn sh_stride(&self) -> usize {
        coeff_count(self.sh_degree)
    }

    pub fn count(&self) -> usize {
        self.params.groups[ParamGroup::Opacity.index()].len()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Appends a triangle with zero gradients and moments. `sh` holds
    /// `[vertex][coef][channel]` for this soup's degree.
    pub fn push(&mut self, mu: Vector3<T>, sh: &[T], scale_raw: Vector3<T>, quat: [T; 4], opacity_raw: T, sigma_raw: T) {
        let w = self.widths();
        assert_eq!(sh.len(), w[1], "SH block size");
        let p = &mut self.params.groups;
        p[0].extend_from_slice(mu.as_slice());
        p[1].extend_from_slice(sh);
        p[2].extend_from_slice(scale_raw.as_slice());
        p[3].extend_from_slice(&quat);
        p[4].push(opacity_raw);
        p[5].push(sigma_raw);
        self.grads.push_zero_row(&w);
        self.adam_m.push_zero_row(&w);
        self.adam_v.push_zero_row(&w);
    }

    pub fn mu(&self, i: usize) -> Vector3<T> {
        Vector3::from_column_slice(&self.params.groups[0][3 * i..3 * i + 3])
    }

    pub fn set_mu(&mut self, i: usize, v: Vector3<T>) {
        self.params.groups[0][3 * i..3 * i + 3].copy_from_slice(v.as_slice());
    }

    pub fn sh(&self, i: usize) -> &[T] {
        let w = self.widths()[1];
        &self.params.groups[1][i * w..(i + 1) * w]
    }

    pub fn sh_mut(&mut self, i: usize) -> &mut [T] {
        let w = self.widths()[1];
        &mut self.params.groups[1][i * w..(i + 1) * w]
    }

    pub fn scale_raw(&self, i: usize) -> Vector3<T> {
        Vector3::from_column_slice(&self.params.groups[2][3 * i..3 * i + 3])
    }

    pub fn set_scale_raw(&mut self, i: usize, v: Vector3<T>) {
        self.params.groups[2][3 * i..3 * i + 3].copy_from_slice(v.as_slice());
    }

    /// Stored (possibly unnormalized) quaternion `(w, x, y, z)`.
    pub fn quat(&self, i: usize) -> [T; 4] {
        let q = &self.params.groups[3][4 * i..4 * i + 4];
        [q[0], q[1], q[2], q[3]]
    }

    pub fn set_quat(&mut self, i: usize, q: [T; 4]) {
        self.params.groups[3][4 * i..4 * i + 4].copy_from_slice(&q);
    }

    pub fn opacity_raw(&self, i: usize) -> T {
        self.params.groups[4][i]
    }

    pub fn set_opacity_raw(&mut self, i: usize, v: T) {
        self.params.groups[4][i] = v;
    }

    pub fn sigma_raw(&self, i: usize) -> T {
        self.params.groups[5][i]
    }

    pub fn set_sigma_raw(&mut self, i: usize, v: T) {
        self.params.groups[5][i] = v;
    }

    pub fn activated(&self, i: usize) -> Activated<T> {
        activate(&self.scale_raw(i), &self.quat(i), self.opacity_raw(i), self.sigma_raw(i))
    }

    pub fn layout(&self, i: usize) -> VertexLayout<T> {
        layout_from_raw(&self.mu(i), &self.scale_raw(i), &self.quat(i))
    }

    pub fn layouts(&self) -> Vec<VertexLayout<T>> {
        (0..self.count()).map(|i| self.layout(i)).collect()
    }

    /// Rescales every stored quaternion to unit length.
    pub fn renormalize_quats(&mut self) {
        for i in 0..self.count() {
            let (q, _) = normalize_quat(&self.quat(i));
            self.set_quat(i, q);
        }
    }

    pub fn zero_grads(&mut self) {
        self.grads.fill_zero();
    }

    /// Appends a copy of triangle `i` (parameters and moments; zero gradient).
    pub fn push_copy(&mut self, i: usize) {
        let w = self.widths();
        let src = self.params.clone();
        self.params.push_row_from(&src, i, &w);
        self.grads.push_zero_row(&w);
        let m = self.adam_m.clone();
        self.adam_m.push_row_from(&m, i, &w);
        let v = self.adam_v.clone();
        self.adam_v.push_row_from(&v, i, &w);
    }

    /// Keeps triangles whose flag is set, in every buffer at once.
    pub fn retain(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.count());
        let w = self.widths();
        self.params.retain_rows(keep, &w);
        self.grads.retain_rows(keep, &w);
        self.adam_m.retain_rows(keep, &w);
        self.adam_v.retain_rows(keep, &w);
    }

    /// Checks that every buffer holds exactly `count` rows.
    pub fn lengths_consistent(&self) -> bool {
        let n = self.count();
        let w = self.widths();
        [&self.params, &self.grads, &self.adam_m, &self.adam_v]
            .iter()
            .all(|b| b.groups.iter().zip(&w).all(|(g, w)| g.len() == n * w))
    }

    /// Converts every buffer to another scalar type.
    pub fn cast<U: Real>(&self) -> TriangleSoup<U> {
        let conv = |b: &ParamBuffers<T>| ParamBuffers {
            groups: std::array::from_fn(|g| b.groups[g].iter().map(|x| U::lit(x.as_f64())).collect()),
        };
        TriangleSoup {
            sh_degree: self.sh_degree,
            active_sh: self.active_sh,
            params: conv(&self.params),
            grads: conv(&self.grads),
            adam_m: conv(&self.adam_m),
            adam_v: conv(&self.adam_v),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn soup3() -> TriangleSoup<f64> {
        let mut s = TriangleSoup::new(1);
        let w = s.widths()[1];
        for i in 0..3 {
            let f = i as f64;
            s.push(Vector3::repeat(f), &vec![f; w], Vector3::repeat(-f), [1.0, 0.0, 0.0, f], f, f);
        }
        s
    }

    #[test]
    fn buffers_stay_in_lockstep() {
        let mut s = soup3();
        assert_eq!(s.count(), 3);
        assert!(s.lengths_consistent());
        s.push_copy(1);
        assert_eq!(s.count(), 4);
        assert_eq!(s.mu(3), s.mu(1));
        s.retain(&[true, false, true, true]);
        assert_eq!(s.count(), 3);
        assert!(s.lengths_consistent());
        assert_eq!(s.mu(1), Vector3::repeat(2.0));
        assert_eq!(s.opacity_raw(2), 1.0);
    }

    #[test]
    fn renormalize_gives_unit_quaternions() {
        let mut s = soup3();
        s.renormalize_quats();
        for i in 0..3 {
            let q = s.quat(i);
            let n: f64 = q.iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn activations() {
        let mut s = TriangleSoup::<f64>::new(0);
        s.push(Vector3::zeros(), &[0.0; 9], Vector3::zeros(), [1.0, 0.0, 0.0, 0.0], 0.0, 0.0);
        let a = s.activated(0);
        assert_eq!(a.alpha, 0.5);
        assert_eq!(a.scales, Vector3::repeat(1.0));
        assert_eq!(a.sigma, 1.0);
        assert_eq!(a.rotation, nalgebra::Matrix3::identity());
    }
}
