//! Multi-view depth fusion with pixel reprojection filtering.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::raster::Camera;
use crate::scalar::Real;

/// One rendered view: ray-distance depth (0 = invalid) and color.
#[derive(Clone, Debug)]
pub struct DepthView<T: Real> {
    pub camera: Camera<T>,
    pub depth: Vec<T>,
    pub color: Vec<Vector3<T>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionParams {
    /// Maximum round-trip reprojection error in pixels.
    pub px_thresh: f64,
    /// Number of consistent neighbor views needed to keep a depth.
    pub min_views: usize,
    /// Use only the `k` neighbors with the nearest camera centers (0 = all).
    pub neighbors: usize,
    /// Optional relative depth agreement (0 disables it).
    pub rel_depth: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self { px_thresh: 1.0, min_views: 3, neighbors: 0, rel_depth: 0.0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FusedCloud {
    pub points: Vec<Vector3<f64>>,
    pub colors: Vec<Vector3<f64>>,
    pub source_view: Vec<u32>,
    /// Number of neighbor views that agreed.
    pub consistency: Vec<u32>,
}

impl FusedCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Neighbor indices for every view.
fn neighbor_sets<T: Real>(views: &[DepthView<T>], k: usize) -> Vec<Vec<usize>> {
    let centers: Vec<Vector3<f64>> = views.iter().map(|v| v.camera.center().map(|x| x.as_f64())).collect();
    (0..views.len())
        .map(|r| {
            let mut others: Vec<usize> = (0..views.len()).filter(|j| *j != r).collect();
            if k > 0 && k < others.len() {
                others.sort_by(|a, b| (centers[*a] - centers[r]).norm().total_cmp(&(centers[*b] - centers[r]).norm()).then(a.cmp(b)));
                others.truncate(k);
            }
            others
        })
        .collect()
}

/// Round-trip check of reference pixel `(x, y)` through view `nb`: the
/// reprojection error in pixels, or `None` when the depth cannot be looked
/// up there.
pub fn reprojection_error<T: Real>(refv: &DepthView<T>, nb: &DepthView<T>, x: usize, y: usize, rel_depth: f64) -> Option<f64> {
    let rc = &refv.camera;
    let d = refv.depth[y * rc.width + x].as_f64();
    if !(d > 0.0) {
        return None;
    }
    let half = T::lit(0.5);
    let u0 = T::of_usize(x) + half;
    let v0 = T::of_usize(y) + half;
    let p = rc.unproject(u0, v0, refv.depth[y * rc.width + x]);
    let nc = &nb.camera;
    let (u, v, _) = nc.project(&p)?;
    let (uf, vf) = (u.as_f64(), v.as_f64());
    if !(uf >= 0.0 && vf >= 0.0 && uf < nc.width as f64 && vf < nc.height as f64) {
        return None;
    }
    let (px, py) = (uf.floor() as usize, vf.floor() as usize);
    let dn = nb.depth[py * nc.width + px];
    if !(dn > T::zero()) {
        return None;
    }
    if rel_depth > 0.0 {
        let expect = (p - nc.center()).norm().as_f64();
        if (dn.as_f64() - expect).abs() > rel_depth * expect {
            return None;
        }
    }
    let q = nc.unproject(u, v, dn);
    let (ru, rv, _) = rc.project(&q)?;
    Some(((ru - u0).as_f64().powi(2) + (rv - v0).as_f64().powi(2)).sqrt())
}

/// Keeps every reference depth that reprojects within `px_thresh` through
/// at least `min_views` neighbors. Views are processed in parallel; the
/// output is ordered by view then pixel.
pub fn fuse_depth_maps<T: Real>(views: &[DepthView<T>], params: &FusionParams) -> FusedCloud {
    let sets = neighbor_sets(views, params.neighbors);
    let per_view: Vec<FusedCloud> = views
        .par_iter()
        .enumerate()
        .map(|(r, refv)| {
            let mut out = FusedCloud::default();
            if sets[r].len() < params.min_views {
                return out;
            }
            let cam = &refv.camera;
            for y in 0..cam.height {
                for x in 0..cam.width {
                    let i = y * cam.width + x;
                    if !(refv.depth[i] > T::zero()) {
                        continue;
                    }
                    let agree = sets[r]
                        .iter()
                        .filter(|&&j| reprojection_error(refv, &views[j], x, y, params.rel_depth).is_some_and(|e| e <= params.px_thresh))
                        .count();
                    if agree >= params.min_views {
                        let half = T::lit(0.5);
                        let p = cam.unproject(T::of_usize(x) + half, T::of_usize(y) + half, refv.depth[i]);
                        out.points.push(p.map(|v| v.as_f64()));
                        out.colors.push(refv.color[i].map(|v| v.as_f64()));
                        out.source_view.push(r as u32);
                        out.consistency.push(agree as u32);
                    }
                }
            }
            out
        })
        .collect();
    let mut cloud = FusedCloud::default();
    for v in per_view {
        cloud.points.extend(v.points);
        cloud.colors.extend(v.colors);
        cloud.source_view.extend(v.source_view);
        cloud.consistency.extend(v.consistency);
    }
    cloud
}
