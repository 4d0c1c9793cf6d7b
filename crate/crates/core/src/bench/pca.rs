//! Principal component projection via eigendecomposition of the covariance.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Pca {
    pub mean: Array1<f64>,
    /// Feature dim x components, orthonormal columns.
    pub components: Array2<f64>,
    /// Variance along each component, non-increasing.
    pub variances: Vec<f64>,
    pub projected: Array2<f64>,
}

impl Pca {
    pub fn reconstruct(&self) -> Array2<f64> {
        self.projected.dot(&self.components.t()) + &self.mean
    }
}

/// Projects mean-centered rows onto the top `dims` principal directions.
pub fn pca_project(x: &Array2<f64>, dims: usize) -> Result<Pca> {
    let (n, d) = x.dim();
    if dims > d {
        return Err(Error::InvalidArgument(format!("{dims} components requested from {d} features")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("no rows to project".into()));
    }
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let centered = x - &mean;
    let cov = centered.t().dot(&centered) / n as f64;
    let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[(i, j)]));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut components = Array2::zeros((d, dims));
    let mut variances = Vec::with_capacity(dims);
    let mut degenerate = 0;
    for (c, &k) in order.iter().take(dims).enumerate() {
        let v = eig.eigenvectors.column(k);
        // sign fixed so the largest-magnitude entry is positive
        let pivot = (0..d).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a))).unwrap_or(0);
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            components[(i, c)] = sign * v[i];
        }
        let lambda = eig.eigenvalues[k].max(0.0);
        if lambda <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            degenerate += 1;
        }
        variances.push(lambda);
    }
    if degenerate > 0 {
        warn!("{degenerate} of {dims} principal components have zero variance");
    }
    let projected = centered.dot(&components);
    Ok(Pca { mean, components, variances, projected })
}
