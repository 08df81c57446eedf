//! Uniform hash grid over 3D points: exact k-nearest, nearest and radius
//! queries.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::scalar::Real;

type Cell = (i64, i64, i64);

pub struct PointGrid<T: Real> {
    points: Vec<Vector3<T>>,
    cells: HashMap<Cell, Vec<u32>>,
    inv_cell: f64,
    cell: f64,
    lo: Cell,
    hi: Cell,
}

impl<T: Real> PointGrid<T> {
    /// Builds a grid with cell edge `cell` (world units, > 0).
    pub fn new(points: &[Vector3<T>], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "grid cell size must be positive");
        let inv_cell = 1.0 / cell;
        let mut cells: HashMap<Cell, Vec<u32>> = HashMap::new();
        let mut lo = (i64::MAX, i64::MAX, i64::MAX);
        let mut hi = (i64::MIN, i64::MIN, i64::MIN);
        for (i, p) in points.iter().enumerate() {
            let c = Self::key(p, inv_cell);
            lo = (lo.0.min(c.0), lo.1.min(c.1), lo.2.min(c.2));
            hi = (hi.0.max(c.0), hi.1.max(c.1), hi.2.max(c.2));
            cells.entry(c).or_default().push(i as u32);
        }
        Self { points: points.to_vec(), cells, inv_cell, cell, lo, hi }
    }

    /// Picks a cell size suited to points sampled from surfaces.
    pub fn auto(points: &[Vector3<T>]) -> Self {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for p in points {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k].as_f64());
                hi[k] = hi[k].max(p[k].as_f64());
            }
        }
        let extent = (hi - lo).max();
        let n = points.len().max(1) as f64;
        let cell = if extent.is_finite() && extent > 0.0 { 2.0 * extent / n.sqrt() } else { 1.0 };
        Self::new(points, cell)
    }

    #[inline]
    fn key(p: &Vector3<T>, inv_cell: f64) -> Cell {
        (
            (p.x.as_f64() * inv_cell).floor() as i64,
            (p.y.as_f64() * inv_cell).floor() as i64,
            (p.z.as_f64() * inv_cell).floor() as i64,
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn visit_ring(&self, c: Cell, r: i64, mut f: impl FnMut(u32)) {
        for dz in -r..=r {
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                        continue;
                    }
                    if let Some(ids) = self.cells.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                        ids.iter().for_each(|&i| f(i));
                    }
                }
            }
        }
    }

    fn max_ring(&self, c: Cell) -> i64 {
        let d = |a: i64, lo: i64, hi: i64| (a - lo).abs().max((hi - a).abs());
        d(c.0, self.lo.0, self.hi.0).max(d(c.1, self.lo.1, self.hi.1)).max(d(c.2, self.lo.2, self.hi.2))
    }

    /// The `k` nearest points to `q` as `(index, distance)` sorted by distance
    /// then index, skipping `exclude`.
    pub fn knn(&self, q: &Vector3<T>, k: usize, exclude: Option<usize>) -> Vec<(usize, T)> {
        let mut best: Vec<(f64, u32)> = Vec::with_capacity(k + 1);
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let c = Self::key(q, self.inv_cell);
        let last = self.max_ring(c);
        let mut r = 0;
        loop {
            self.visit_ring(c, r, |i| {
                if Some(i as usize) == exclude {
                    return;
                }
                let d2 = (self.points[i as usize] - q).norm_squared().as_f64();
                if best.len() < k || (d2, i) < best[best.len() - 1] {
                    let pos = best.partition_point(|e| *e < (d2, i));
                    best.insert(pos, (d2, i));
                    best.truncate(k);
                }
            });
            let bound = r as f64 * self.cell;
            if (best.len() == k && best[k - 1].0 <= bound * bound) || r >= last {
                break;
            }
            r += 1;
        }
        best.into_iter().map(|(d2, i)| (i as usize, T::lit(d2.sqrt()))).collect()
    }

    pub fn nearest(&self, q: &Vector3<T>) -> Option<(usize, T)> {
        self.knn(q, 1, None).into_iter().next()
    }

    /// Calls `f(index)` for every point within `radius` of `q` (inclusive).
    pub fn within(&self, q: &Vector3<T>, radius: T, mut f: impl FnMut(usize)) {
        let rr = radius.as_f64();
        let reach = (rr * self.inv_cell).ceil() as i64;
        let c = Self::key(q, self.inv_cell);
        let r2 = radius * radius;
        for dz in -reach..=reach {
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    if let Some(ids) = self.cells.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                        for &i in ids {
                            if (self.points[i as usize] - q).norm_squared() <= r2 {
                                f(i as usize);
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn knn_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Vector3<f64>> = (0..500)
            .map(|_| Vector3::new(rng.random::<f64>(), rng.random::<f64>(), 0.1 * rng.random::<f64>()))
            .collect();
        let grid = PointGrid::auto(&pts);
        for (qi, q) in pts.iter().enumerate().take(100) {
            let got = grid.knn(q, 3, Some(qi));
            let mut all: Vec<(f64, usize)> =
                pts.iter().enumerate().filter(|(i, _)| *i != qi).map(|(i, p)| ((p - q).norm(), i)).collect();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for k in 0..3 {
                assert_eq!(got[k].0, all[k].1);
                assert!((got[k].1 - all[k].0).abs() < 1e-12);
            }
        }
        let far = Vector3::new(10.0, 10.0, 10.0);
        let (i, _) = grid.nearest(&far).unwrap();
        let want = pts
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - far).norm().partial_cmp(&(b.1 - far).norm()).unwrap())
            .unwrap()
            .0;
        assert_eq!(i, want);
    }

    #[test]
    fn radius_query_is_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Vector3<f64>> =
            (0..300).map(|_| Vector3::new(rng.random(), rng.random(), rng.random())).collect();
        let grid = PointGrid::new(&pts, 0.07);
        let q = Vector3::new(0.5, 0.5, 0.5);
        let mut got = Vec::new();
        grid.within(&q, 0.2, |i| got.push(i));
        got.sort();
        let want: Vec<usize> = (0..pts.len()).filter(|&i| (pts[i] - q).norm() <= 0.2).collect();
        assert_eq!(got, want);
    }
}
