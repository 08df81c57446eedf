//! Seeding a soup from sparse structure-from-motion points.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::sh::rgb_to_dc;
use crate::scalar::{logit, Real};
use crate::scene::soup::TriangleSoup;
use crate::spatial::PointGrid;

/// Sparse points with colors in `[0, 1]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseSeed<T: Real> {
    pub points: Vec<Vector3<T>>,
    pub colors: Vec<Vector3<T>>,
}

impl<T: Real> SparseSeed<T> {
    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.colors.len() {
            return Err(Error::Validation(format!(
                "{} seed points but {} colors",
                self.points.len(),
                self.colors.len()
            )));
        }
        for (i, (p, c)) in self.points.iter().zip(&self.colors).enumerate() {
            if !p.iter().chain(c.iter()).all(|x| x.is_finite_val()) {
                return Err(Error::Validation(format!("seed point {i} is not finite")));
            }
        }
        Ok(())
    }
}

/// Knobs of [`init_from_points`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitOptions {
    pub sh_degree: usize,
    /// Diffuse falloff width `4/σ` as a fraction of the mean neighbor distance.
    pub sigma_fraction: f64,
    pub opacity: f64,
}

impl Default for InitOptions {
    fn default() -> Self {
        Self { sh_degree: 3, sigma_fraction: 0.5, opacity: 0.1 }
    }
}

/// Uniformly distributed unit quaternion `(w, x, y, z)` (Shoemake).
pub fn random_quat(rng: &mut impl Rng) -> [f64; 4] {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let u3: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    [b * u3.cos(), a * u2.sin(), a * u2.cos(), b * u3.sin()]
}

/// Mean distance of every point to its three nearest neighbors.
pub fn mean_neighbor_distances<T: Real>(points: &[Vector3<T>]) -> Vec<T> {
    let grid = PointGrid::auto(points);
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let nn = grid.knn(p, 3, Some(i));
            nn.iter().fold(T::zero(), |acc, (_, d)| acc + *d) / T::of_usize(nn.len().max(1))
        })
        .collect()
}

/// One equilateral triangle per seed point, sized by its neighborhood, with
/// a seeded random orientation.
pub fn init_from_points<T: Real>(seed: &SparseSeed<T>, opts: &InitOptions, rng_seed: u64) -> Result<TriangleSoup<T>> {
    if seed.points.len() < 4 {
        return Err(Error::TooFewPoints { needed: 4, got: seed.points.len() });
    }
    seed.validate()?;
    if !(opts.sigma_fraction > 0.0 && opts.opacity > 0.0 && opts.opacity < 1.0) {
        return Err(Error::Validation("sigma fraction must be positive and opacity in (0, 1)".into()));
    }
    let mut dists = mean_neighbor_distances(&seed.points);
    // Coincident points would produce zero-size triangles; borrow the
    // smallest positive spacing in the cloud instead.
    let min_pos = dists.iter().copied().filter(|d| *d > T::zero()).fold(None, |m: Option<T>, d| {
        Some(m.map_or(d, |m| m.min(d)))
    });
    let fallback = min_pos.unwrap_or(T::one());
    for d in &mut dists {
        if !(*d > T::zero()) {
            *d = fallback;
        }
    }

    let mut soup = TriangleSoup::new(opts.sh_degree);
    let stride = soup.sh_stride();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let opacity_raw = T::lit(logit(opts.opacity));
    let mut sh = vec![T::zero(); 3 * stride * 3];
    for (i, p) in seed.points.iter().enumerate() {
        let d = dists[i];
        let color = seed.colors[i];
        for v in 0..3 {
            for ch in 0..3 {
                sh[v * stride * 3 + ch] = rgb_to_dc(color[ch]);
            }
        }
        let q = random_quat(&mut rng).map(T::lit);
        let sigma = T::lit(4.0) / (T::lit(opts.sigma_fraction) * d);
        soup.push(*p, &sh, Vector3::repeat(d.ln()), q, opacity_raw, sigma.ln());
    }
    Ok(soup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::diffuse_weight;
    use crate::scalar::sigmoid;

    fn tetra() -> SparseSeed<f64> {
        SparseSeed {
            points: vec![
                Vector3::new(1.0, 1.0, 1.0),
                Vector3::new(1.0, -1.0, -1.0),
                Vector3::new(-1.0, 1.0, -1.0),
                Vector3::new(-1.0, -1.0, 1.0),
            ],
            colors: vec![Vector3::new(0.2, 0.4, 0.6); 4],
        }
    }

    #[test]
    fn tetrahedron_init() {
        let soup = init_from_points(&tetra(), &InitOptions::default(), 7).unwrap();
        assert_eq!(soup.count(), 4);
        for i in 0..4 {
            assert!((sigmoid(soup.opacity_raw(i)) - 0.1).abs() < 1e-12);
            let l = soup.layout(i);
            let e: Vec<f64> = (0..3).map(|j| (l.vertices[j] - l.vertices[(j + 1) % 3]).norm()).collect();
            assert!((e[0] - e[1]).abs() < 1e-9 && (e[1] - e[2]).abs() < 1e-9);
            // circumradius equals the neighbor distance (edge length of the tetrahedron)
            assert!(((l.vertices[0] - soup.mu(i)).norm() - 8f64.sqrt()).abs() < 1e-9);
        }
        assert_eq!(soup, init_from_points(&tetra(), &InitOptions::default(), 7).unwrap());
        assert_ne!(soup, init_from_points(&tetra(), &InitOptions::default(), 8).unwrap());
    }

    #[test]
    fn circumradius_is_mean_neighbor_distance() {
        let seed = SparseSeed {
            points: vec![
                Vector3::zeros(),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 2.0, 0.0),
                Vector3::new(0.0, 0.0, 3.0),
                Vector3::new(50.0, 50.0, 50.0),
            ],
            colors: vec![Vector3::repeat(0.5); 5],
        };
        // brute-force neighbor search
        let p = &seed.points[0];
        let mut d: Vec<f64> = seed.points[1..].iter().map(|q| (q - p).norm()).collect();
        d.sort_by(f64::total_cmp);
        let expect = (d[0] + d[1] + d[2]) / 3.0;
        assert_eq!(expect, 2.0);
        let soup: TriangleSoup<f64> = init_from_points(&seed, &InitOptions::default(), 1).unwrap();
        let l = soup.layout(0);
        for v in l.vertices {
            assert!(((v - soup.mu(0)).norm() - 2.0).abs() < 1e-12);
        }
        // 4/σ = 0.5 * 2: w goes from 0.88 to 0.12 over that width
        let sigma: f64 = soup.sigma_raw(0).exp();
        assert!((diffuse_weight(0.5, sigma) - 0.880_797_077_977_882_4).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_seeds() {
        let mut s = tetra();
        s.points.pop();
        s.colors.pop();
        assert!(matches!(init_from_points(&s, &InitOptions::default(), 0), Err(Error::TooFewPoints { .. })));
        let mut s = tetra();
        s.points[2].x = f64::NAN;
        assert!(matches!(init_from_points(&s, &InitOptions::default(), 0), Err(Error::Validation(_))));
    }

    #[test]
    fn dc_reproduces_point_color() {
        let soup = init_from_points(&tetra(), &InitOptions { sh_degree: 2, ..Default::default() }, 3).unwrap();
        let dir = Vector3::new(0.3, -0.2, 0.9).normalize();
        let c = crate::geometry::eval_sh(soup.sh(1), soup.sh_stride(), 2, &dir);
        for vc in c {
            assert!((vc.rgb - Vector3::new(0.2, 0.4, 0.6)).norm() < 1e-12);
        }
    }
}
