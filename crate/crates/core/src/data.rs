//! Synthetic three-Gaussian data, out-of-distribution samplers and plotting
//! lattices.

use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)] // inherent float methods shadow it whenever std is linked
use num_traits::Float;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dirichlet::categorical_entropy;
use crate::{Error, Result};

/// Row-major `N × D` feature matrix with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(
        features: Vec<f64>,
        dim: usize,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid(
                "dataset",
                "a labeled dataset needs at least one row",
            ));
        }
        check_matrix(&features, dim, labels.len())?;
        if num_classes < 2 {
            return Err(Error::invalid("num_classes", "need at least 2 classes"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::invalid(
                "labels",
                alloc::format!("label {bad} is not below the class count {num_classes}"),
            ));
        }
        Ok(Self {
            features,
            dim,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.dim)
    }

    /// The same points without labels.
    pub fn unlabeled(&self) -> UnlabeledDataset {
        UnlabeledDataset {
            features: self.features.clone(),
            dim: self.dim,
        }
    }
}

/// Row-major `N × D` feature matrix without labels.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledDataset {
    features: Vec<f64>,
    dim: usize,
}

impl UnlabeledDataset {
    pub fn new(features: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "feature dimension must be positive"));
        }
        let rows = features.len() / dim;
        check_matrix(&features, dim, rows)?;
        Ok(Self { features, dim })
    }

    pub fn len(&self) -> usize {
        self.features.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.dim)
    }
}

fn check_matrix(features: &[f64], dim: usize, rows: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::invalid("dim", "feature dimension must be positive"));
    }
    if features.len() != rows * dim {
        return Err(Error::DimensionMismatch {
            context: "feature matrix",
            expected: rows * dim,
            found: features.len(),
        });
    }
    if let Some(v) = features.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain {
            function: "dataset",
            value: *v,
            requirement: "finite features",
        });
    }
    Ok(())
}

/// `K` isotropic Gaussian classes in the plane with means equally spaced on
/// a circle, the first at 90°.
///
/// Only `K ∈ {2, 3}` keeps every pair of means equidistant in two dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GaussianMixtureSpec {
    pub num_classes: usize,
    pub radius: f64,
    pub sigma: f64,
    pub per_class: usize,
}

impl Default for GaussianMixtureSpec {
    fn default() -> Self {
        Self {
            num_classes: 3,
            radius: 4.0,
            sigma: 1.0,
            per_class: 1000,
        }
    }
}

impl GaussianMixtureSpec {
    pub fn new(num_classes: usize, radius: f64, sigma: f64, per_class: usize) -> Result<Self> {
        let spec = Self {
            num_classes,
            radius,
            sigma,
            per_class,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.num_classes) {
            return Err(Error::invalid(
                "num_classes",
                "equidistant class means in the plane need 2 or 3 classes",
            ));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::invalid("radius", "must be finite and > 0"));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::invalid("sigma", "must be finite and > 0"));
        }
        if self.per_class == 0 {
            return Err(Error::invalid(
                "per_class",
                "need at least one sample per class",
            ));
        }
        Ok(())
    }

    /// Class means at angles `90° + c · 360°/K` on the circle.
    pub fn means(&self) -> Vec<[f64; 2]> {
        (0..self.num_classes)
            .map(|c| {
                let angle = PI / 2.0 + 2.0 * PI * c as f64 / self.num_classes as f64;
                [self.radius * angle.cos(), self.radius * angle.sin()]
            })
            .collect()
    }

    /// Radius beyond which the in-domain data is considered to end, `r + 3σ`.
    pub fn data_radius(&self) -> f64 {
        self.radius + 3.0 * self.sigma
    }

    /// Default annulus for out-of-distribution training samples:
    /// from `r + 3σ` out to `r + 7σ`.
    pub fn ood_annulus(&self) -> (f64, f64) {
        let inner = self.data_radius();
        (inner, inner + 4.0 * self.sigma)
    }

    /// Midpoints between each pair of class means, on the decision
    /// boundaries of the Bayes classifier.
    pub fn boundary_midpoints(&self) -> Vec<[f64; 2]> {
        let means = self.means();
        let mut out = Vec::new();
        for i in 0..means.len() {
            for j in i + 1..means.len() {
                out.push([
                    0.5 * (means[i][0] + means[j][0]),
                    0.5 * (means[i][1] + means[j][1]),
                ]);
            }
        }
        out
    }
}

/// Draw `per_class` points from each `N(mean_c, σ²I)`, class by class.
pub fn generate_gaussian_classes(spec: &GaussianMixtureSpec, seed: u64) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(spec.num_classes * spec.per_class * 2);
    let mut labels = Vec::with_capacity(spec.num_classes * spec.per_class);
    for (c, mean) in spec.means().into_iter().enumerate() {
        for _ in 0..spec.per_class {
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            features.push(mean[0] + spec.sigma * dx);
            features.push(mean[1] + spec.sigma * dy);
            labels.push(c);
        }
    }
    LabeledDataset::new(features, 2, labels, spec.num_classes)
}

/// Bayes posterior over the classes at `x` (equal priors).
pub fn true_posterior(spec: &GaussianMixtureSpec, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != 2 {
        return Err(Error::DimensionMismatch {
            context: "mixture point",
            expected: 2,
            found: x.len(),
        });
    }
    let logits: Vec<f64> = spec
        .means()
        .iter()
        .map(|m| {
            let d2 = (x[0] - m[0]).powi(2) + (x[1] - m[1]).powi(2);
            -d2 / (2.0 * spec.sigma * spec.sigma)
        })
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Entropy of the Bayes posterior over classes at `x`.
pub fn true_posterior_entropy(spec: &GaussianMixtureSpec, x: &[f64]) -> Result<f64> {
    Ok(categorical_entropy(&true_posterior(spec, x)?))
}

/// `n` points uniform (by area) on the annulus `inner ≤ |x| ≤ outer`.
pub fn sample_ood_annulus(inner: f64, outer: f64, n: usize, seed: u64) -> Result<UnlabeledDataset> {
    if !(inner > 0.0 && inner < outer && outer.is_finite()) {
        return Err(Error::invalid("annulus", "need 0 < inner < outer < ∞"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (inner2, outer2) = (inner * inner, outer * outer);
    let mut features = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let angle = 2.0 * PI * rng.random::<f64>();
        let r = (inner2 + rng.random::<f64>() * (outer2 - inner2)).sqrt();
        features.push(r * angle.cos());
        features.push(r * angle.sin());
    }
    UnlabeledDataset::new(features, 2)
}

/// Points at `radius` on `count` equally spaced angles, starting at 0°.
pub fn ring_points(radius: f64, count: usize) -> Vec<[f64; 2]> {
    (0..count)
        .map(|i| {
            let angle = 2.0 * PI * i as f64 / count as f64;
            [radius * angle.cos(), radius * angle.sin()]
        })
        .collect()
}

/// Row-major `resolution × resolution` lattice spanning both ranges
/// inclusively. Row `i` holds the points with the `i`-th y value, x varies
/// along the row.
pub fn grid_points(
    x_range: (f64, f64),
    y_range: (f64, f64),
    resolution: usize,
) -> Result<UnlabeledDataset> {
    if resolution < 2 {
        return Err(Error::invalid(
            "resolution",
            "need at least 2 points per axis",
        ));
    }
    for (lo, hi) in [x_range, y_range] {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(
                "range",
                alloc::format!("[{lo}, {hi}] is not a finite interval"),
            ));
        }
    }
    let xs = axis(x_range, resolution);
    let ys = axis(y_range, resolution);
    let mut features = Vec::with_capacity(2 * resolution * resolution);
    for &y in &ys {
        for &x in &xs {
            features.push(x);
            features.push(y);
        }
    }
    UnlabeledDataset::new(features, 2)
}

fn axis((lo, hi): (f64, f64), resolution: usize) -> Vec<f64> {
    let spacing = (hi - lo) / (resolution - 1) as f64;
    (0..resolution)
        .map(|i| {
            if i + 1 == resolution {
                hi
            } else {
                lo + i as f64 * spacing
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::LN_2;

    fn spec(sigma: f64) -> GaussianMixtureSpec {
        GaussianMixtureSpec::new(3, 4.0, sigma, 500).unwrap()
    }

    #[test]
    fn dataset_validation() {
        assert!(LabeledDataset::new(vec![], 2, vec![], 3).is_err());
        assert!(LabeledDataset::new(vec![1.0, 2.0], 2, vec![3], 3).is_err());
        assert!(LabeledDataset::new(vec![1.0, f64::NAN], 2, vec![0], 3).is_err());
        assert!(LabeledDataset::new(vec![1.0, 2.0, 3.0], 2, vec![0], 3).is_err());
        assert!(UnlabeledDataset::new(vec![1.0, 2.0, 3.0], 2).is_err());
        assert!(UnlabeledDataset::new(vec![1.0, 2.0, 3.0, 4.0], 2).is_ok());
    }

    #[test]
    fn spec_validation() {
        assert!(GaussianMixtureSpec::new(4, 4.0, 1.0, 10).is_err());
        assert!(GaussianMixtureSpec::new(3, 4.0, 0.0, 10).is_err());
        assert!(GaussianMixtureSpec::new(3, -1.0, 1.0, 10).is_err());
        assert!(GaussianMixtureSpec::new(3, 4.0, 1.0, 0).is_err());
    }

    #[test]
    fn means_are_equidistant() {
        for (k, r) in [(3, 4.0), (3, 0.5), (3, 123.0), (2, 7.0)] {
            let means = GaussianMixtureSpec::new(k, r, 1.0, 1).unwrap().means();
            let dist =
                |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            let d01 = dist(means[0], means[1]);
            for i in 0..k {
                for j in i + 1..k {
                    assert!((dist(means[i], means[j]) - d01).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn tiny_sigma_collapses_onto_means() {
        let s = GaussianMixtureSpec::new(3, 4.0, 1e-9, 50).unwrap();
        let data = generate_gaussian_classes(&s, 1).unwrap();
        let means = s.means();
        for (x, &c) in data.rows().zip(data.labels()) {
            assert!((x[0] - means[c][0]).abs() < 1e-6 && (x[1] - means[c][1]).abs() < 1e-6);
        }
    }

    #[test]
    fn class_sample_means_within_clt_bound() {
        let s = spec(4.0);
        let data = generate_gaussian_classes(&s, 2).unwrap();
        let bound = 5.0 * s.sigma / (s.per_class as f64).sqrt();
        for (c, mean) in s.means().iter().enumerate() {
            let rows: Vec<&[f64]> = data
                .rows()
                .zip(data.labels())
                .filter(|(_, &l)| l == c)
                .map(|(r, _)| r)
                .collect();
            assert_eq!(rows.len(), s.per_class);
            for axis in 0..2 {
                let m = rows.iter().map(|r| r[axis]).sum::<f64>() / rows.len() as f64;
                assert!((m - mean[axis]).abs() < bound);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_gaussian_classes(&spec(1.0), 7).unwrap();
        let b = generate_gaussian_classes(&spec(1.0), 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_gaussian_classes(&spec(1.0), 8).unwrap());
    }

    #[test]
    fn posterior_entropy_landmarks() {
        let s = spec(1.0);
        assert!((true_posterior_entropy(&s, &[0.0, 0.0]).unwrap() - 3.0_f64.ln()).abs() < 1e-14);
        let far = GaussianMixtureSpec::new(3, 40.0, 1.0, 1).unwrap();
        let m0 = far.means()[0];
        assert!(true_posterior_entropy(&far, &m0).unwrap() < 1e-12);
        // On the bisector of means 1 and 2, beyond their midpoint away from mean 0.
        let means = s.means();
        let mid = [
            0.5 * (means[1][0] + means[2][0]),
            0.5 * (means[1][1] + means[2][1]),
        ];
        let x = [mid[0], mid[1] - 3.0];
        assert!((true_posterior_entropy(&s, &x).unwrap() - LN_2).abs() < 1e-6);
    }

    #[test]
    fn posterior_entropy_is_bounded() {
        let s = spec(2.5);
        let grid = grid_points((-15.0, 15.0), (-15.0, 15.0), 41).unwrap();
        for x in grid.rows() {
            let h = true_posterior_entropy(&s, x).unwrap();
            assert!((0.0..=3.0_f64.ln() + 1e-15).contains(&h));
        }
    }

    #[test]
    fn annulus_samples() {
        let (inner, outer) = (7.0, 11.0);
        let n = 20_000;
        let data = sample_ood_annulus(inner, outer, n, 3).unwrap();
        assert_eq!(data.len(), n);
        let radii: Vec<f64> = data
            .rows()
            .map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt())
            .collect();
        assert!(radii
            .iter()
            .all(|&r| r >= inner - 1e-12 && r <= outer + 1e-12));
        let mean = radii.iter().sum::<f64>() / n as f64;
        let var = radii.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let analytic =
            2.0 / 3.0 * (outer.powi(3) - inner.powi(3)) / (outer.powi(2) - inner.powi(2));
        assert!((mean - analytic).abs() < 4.0 * (var / n as f64).sqrt());
        assert_eq!(data, sample_ood_annulus(inner, outer, n, 3).unwrap());
        assert!(sample_ood_annulus(3.0, 2.0, 10, 0).is_err());
        assert!(sample_ood_annulus(0.0, 2.0, 10, 0).is_err());
    }

    #[test]
    fn grid_layout() {
        let g = grid_points((-1.0, 1.0), (-1.0, 1.0), 3).unwrap();
        assert_eq!(g.len(), 9);
        let pts: Vec<&[f64]> = g.rows().collect();
        assert_eq!(pts[0], &[-1.0, -1.0]);
        assert_eq!(pts[2], &[1.0, -1.0]);
        assert_eq!(pts[4], &[0.0, 0.0]);
        assert_eq!(pts[6], &[-1.0, 1.0]);
        assert_eq!(pts[8], &[1.0, 1.0]);
        let g = grid_points((-12.0, 12.0), (0.0, 5.0), 200).unwrap();
        assert_eq!(g.len(), 40_000);
        let spacing = 24.0 / 199.0;
        assert!((g.row(1)[0] - g.row(0)[0] - spacing).abs() < 1e-12);
        assert!(grid_points((0.0, 1.0), (0.0, 1.0), 1).is_err());
        assert!(grid_points((1.0, 0.0), (0.0, 1.0), 5).is_err());
    }

    #[test]
    fn boundary_midpoints_have_two_class_ties() {
        let s = spec(4.0);
        for m in s.boundary_midpoints() {
            let post = true_posterior(&s, &m).unwrap();
            let mut sorted = post.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert!((sorted[0] - sorted[1]).abs() < 1e-12);
        }
    }
}
