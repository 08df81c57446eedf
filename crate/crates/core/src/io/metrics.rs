//! Image and geometry quality metrics.

use nalgebra::Vector3;

use crate::scalar::Real;
use crate::spatial::PointGrid;

/// PSNR in dB for images in `[0, 1]`, capped at 99 for identical inputs.
pub fn psnr<T: Real>(a: &[Vector3<T>], b: &[Vector3<T>]) -> f64 {
    assert_eq!(a.len(), b.len(), "psnr expects images of equal size");
    if a.is_empty() {
        return 99.0;
    }
    let mse = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).map(|v| v.as_f64().powi(2)).sum())
        .sum::<f64>()
        / (3 * a.len()) as f64;
    if mse <= 1e-10 {
        99.0
    } else {
        (-10.0 * mse.log10()).min(99.0)
    }
}

/// Accuracy, completeness and their mean between a reconstruction and a
/// reference point set (mean nearest-neighbor distances).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Chamfer {
    pub accuracy: f64,
    pub completeness: f64,
    pub mean: f64,
}

fn mean_nn<T: Real>(from: &[Vector3<T>], to: &PointGrid<T>) -> f64 {
    if from.is_empty() {
        return f64::INFINITY;
    }
    from.iter().map(|p| to.nearest(p).map_or(f64::INFINITY, |(_, d)| d.as_f64())).sum::<f64>() / from.len() as f64
}

pub fn chamfer<T: Real>(recon: &[Vector3<T>], reference: &[Vector3<T>]) -> Chamfer {
    let accuracy = mean_nn(recon, &PointGrid::auto(reference));
    let completeness = mean_nn(reference, &PointGrid::auto(recon));
    Chamfer { accuracy, completeness, mean: 0.5 * (accuracy + completeness) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_of_uniform_error() {
        let a = vec![Vector3::repeat(0.5f64); 10];
        let b = vec![Vector3::repeat(0.6f64); 10];
        assert!((psnr(&a, &b) - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&a, &a), 99.0);
    }

    #[test]
    fn chamfer_of_shifted_grid() {
        let grid: Vec<Vector3<f64>> =
            (0..20).flat_map(|i| (0..20).map(move |j| Vector3::new(i as f64 * 0.1, j as f64 * 0.1, 0.0))).collect();
        let shifted: Vec<_> = grid.iter().map(|p| p + Vector3::new(0.0, 0.0, 0.01)).collect();
        let c = chamfer(&shifted, &grid);
        assert!((c.accuracy - 0.01).abs() < 1e-12 && (c.completeness - 0.01).abs() < 1e-12);
        assert!((c.mean - 0.01).abs() < 1e-12);
    }
}
