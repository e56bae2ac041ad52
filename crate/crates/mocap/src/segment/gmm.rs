//! Full-covariance Gaussian mixtures over RGB, fitted deterministically
//! (luminance-quantile k-means seeding, fixed Lloyd iterations).

use nalgebra::{Matrix3, Vector3};

/// Covariance regularization added to every fitted component.
const COV_REG: f64 = 1e-5;
const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone)]
pub struct Component {
    pub weight: f64,
    pub mean: Vector3<f64>,
    pub cov: Matrix3<f64>,
    cov_inv: Matrix3<f64>,
    // -ln weight + (3/2) ln 2π + (1/2) ln det Σ
    neg_log_norm: f64,
}

/// A k-component full-covariance Gaussian mixture color model.
#[derive(Debug, Clone)]
pub struct ColorModel {
    pub components: Vec<Component>,
}

impl ColorModel {
    /// Fits `k` components (reduced when there are fewer samples or empty
    /// clusters). Deterministic for identical input order.
    pub fn fit(pixels: &[Vector3<f64>], k: usize) -> ColorModel {
        let k = k.clamp(1, pixels.len().max(1));
        let assignments = kmeans_assign(pixels, k);
        Self::fit_assigned(pixels, &assignments, k)
    }

    /// Fits component parameters from explicit assignments; empty
    /// components are dropped.
    pub fn fit_assigned(pixels: &[Vector3<f64>], assignments: &[usize], k: usize) -> ColorModel {
        let n = pixels.len();
        let mut components = Vec::new();
        for c in 0..k {
            let members: Vec<&Vector3<f64>> = pixels
                .iter()
                .zip(assignments.iter())
                .filter(|(_, &a)| a == c)
                .map(|(p, _)| p)
                .collect();
            if members.is_empty() {
                continue;
            }
            let m = members.len() as f64;
            let mut mean = Vector3::zeros();
            for p in &members {
                mean += **p;
            }
            mean /= m;
            let mut cov = Matrix3::zeros();
            for p in &members {
                let d = **p - mean;
                cov += d * d.transpose();
            }
            cov /= m;
            cov += Matrix3::identity() * COV_REG;
            let det = cov.determinant();
            let cov_inv = cov.try_inverse().expect("regularized covariance is invertible");
            let weight = m / n as f64;
            components.push(Component {
                weight,
                mean,
                cov,
                cov_inv,
                neg_log_norm: -weight.ln() + 1.5 * LN_2PI + 0.5 * det.ln(),
            });
        }
        // Renormalize in case empty components were dropped.
        let total: f64 = components.iter().map(|c| c.weight).sum();
        for c in components.iter_mut() {
            c.weight /= total;
            c.neg_log_norm = -c.weight.ln() + 1.5 * LN_2PI + 0.5 * c.cov.determinant().ln();
        }
        ColorModel { components }
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// Negative log of `π_c · N(x; μ_c, Σ_c)` for one component.
    #[inline]
    pub fn component_nll(&self, c: usize, x: &Vector3<f64>) -> f64 {
        let comp = &self.components[c];
        let d = x - comp.mean;
        comp.neg_log_norm + 0.5 * (d.transpose() * comp.cov_inv * d)[0]
    }

    /// The joint-energy data term: the best component's negative log
    /// likelihood, `min_c [−ln π_c − ln N_c(x)]`.
    pub fn min_nll(&self, x: &Vector3<f64>) -> f64 {
        (0..self.k())
            .map(|c| self.component_nll(c, x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of the most likely component.
    pub fn best_component(&self, x: &Vector3<f64>) -> usize {
        let mut best = 0;
        let mut best_v = f64::INFINITY;
        for c in 0..self.k() {
            let v = self.component_nll(c, x);
            if v < best_v {
                best_v = v;
                best = c;
            }
        }
        best
    }
}

/// Deterministic k-means: seed centers from luminance quantile chunks, run
/// a fixed number of Lloyd iterations, ties to the lowest index.
fn kmeans_assign(pixels: &[Vector3<f64>], k: usize) -> Vec<usize> {
    let n = pixels.len();
    if k <= 1 || n == 0 {
        return vec![0; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let la = pixels[a].sum();
        let lb = pixels[b].sum();
        la.partial_cmp(&lb).unwrap().then(a.cmp(&b))
    });
    let mut centers: Vec<Vector3<f64>> = Vec::with_capacity(k);
    for c in 0..k {
        let lo = c * n / k;
        let hi = ((c + 1) * n / k).max(lo + 1).min(n);
        let mut mean = Vector3::zeros();
        for &i in &order[lo..hi] {
            mean += pixels[i];
        }
        centers.push(mean / (hi - lo) as f64);
    }
    let mut assignments = vec![0usize; n];
    for _ in 0..10 {
        for (i, p) in pixels.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = (p - center).norm_squared();
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            assignments[i] = best;
        }
        let mut sums = vec![Vector3::zeros(); k];
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            sums[a] += pixels[i];
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c] / counts[c] as f64;
            }
        }
    }
    assignments
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one_and_covariances_are_positive_definite() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let pixels: Vec<Vector3<f64>> = (0..500)
            .map(|_| Vector3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let model = ColorModel::fit(&pixels, 5);
        let total: f64 = model.components.iter().map(|c| c.weight).sum();
        assert!((total - 1.0).abs() < 1e-9);
        for c in &model.components {
            assert!(c.cov.cholesky().is_some(), "covariance not PD");
        }
    }

    #[test]
    fn distinct_clusters_are_separated() {
        let mut pixels = Vec::new();
        for i in 0..100 {
            let t = (i % 10) as f64 * 1e-4;
            pixels.push(Vector3::new(0.1 + t, 0.1, 0.1));
            pixels.push(Vector3::new(0.9 - t, 0.9, 0.9));
        }
        let model = ColorModel::fit(&pixels, 2);
        assert_eq!(model.k(), 2);
        let dark = Vector3::new(0.1, 0.1, 0.1);
        let bright = Vector3::new(0.9, 0.9, 0.9);
        assert!(model.min_nll(&dark) < model.component_nll(model.best_component(&bright), &dark));
    }

    #[test]
    fn identical_pixels_do_not_break_the_fit() {
        let pixels = vec![Vector3::new(0.5, 0.5, 0.5); 40];
        let model = ColorModel::fit(&pixels, 5);
        assert!(model.k() >= 1);
        let v = model.min_nll(&Vector3::new(0.5, 0.5, 0.5));
        assert!(v.is_finite());
    }

    #[test]
    fn fewer_samples_than_components_reduces_k() {
        let pixels = vec![
            Vector3::new(0.1, 0.2, 0.3),
            Vector3::new(0.9, 0.8, 0.7),
        ];
        let model = ColorModel::fit(&pixels, 5);
        assert!(model.k() <= 2);
    }
}
