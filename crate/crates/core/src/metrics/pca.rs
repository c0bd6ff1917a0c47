//! Principal component analysis of small point clouds.
//!
//! Points are rows. The decomposition runs on whichever of the Gram matrix
//! `Xc·Xcᵀ/k` (k points) or the covariance `Xcᵀ·Xc/k` (m dimensions) is
//! smaller; both share the same non-zero spectrum. Variances use population
//! (`1/k`) normalization.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    /// `k × n` projections of the centred points onto the leading axes.
    pub reduced: DMatrix<f64>,
    /// Population variance along each retained axis, descending.
    pub variances: Vec<f64>,
}

impl PcaResult {
    pub fn total_variance(&self) -> f64 {
        self.variances.iter().sum()
    }
}

/// Builds a row-per-point matrix, checking that all points share one dimension.
pub fn points_to_matrix(points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let dim = points.first().map_or(0, Vec::len);
    if let Some(bad) = points.iter().position(|p| p.len() != dim) {
        return Err(Error::arg(format!(
            "point {bad} has dimension {}, expected {dim}",
            points[bad].len()
        )));
    }
    Ok(DMatrix::from_fn(points.len(), dim, |r, c| points[r][c]))
}

fn check_request(rows: usize, cols: usize, n_components: usize) -> Result<()> {
    if rows < 2 {
        return Err(Error::arg(format!("PCA needs at least 2 points, got {rows}")));
    }
    let limit = (rows - 1).min(cols);
    if n_components > limit {
        return Err(Error::arg(format!(
            "{n_components} components requested, at most {limit} available"
        )));
    }
    Ok(())
}

/// Subtracts the column means.
pub fn center(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut xc = x.clone();
    let k = x.nrows() as f64;
    for mut col in xc.column_iter_mut() {
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            // the rounded mean of a constant column need not equal the constant
            col.fill(0.0);
        } else {
            let mean = col.sum() / k;
            col.add_scalar_mut(-mean);
        }
    }
    xc
}

/// Symmetric matrix on the smaller side, and whether it is the Gram matrix.
fn second_moment(xc: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let k = xc.nrows() as f64;
    if xc.nrows() <= xc.ncols() {
        ((xc * xc.transpose()) / k, true)
    } else {
        ((xc.transpose() * xc) / k, false)
    }
}

fn sorted_desc(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.into_iter().map(|x| x.max(0.0)).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Centres `points` and projects them onto the top `n_components` principal axes.
pub fn pca_reduce(points: &[Vec<f64>], n_components: usize) -> Result<PcaResult> {
    pca_reduce_matrix(&points_to_matrix(points)?, n_components)
}

pub fn pca_reduce_matrix(x: &DMatrix<f64>, n_components: usize) -> Result<PcaResult> {
    check_request(x.nrows(), x.ncols(), n_components)?;
    let xc = center(x);
    let (moment, gram) = second_moment(&xc);
    let eig = SymmetricEigen::new(moment);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let k = x.nrows();
    let mut reduced = DMatrix::zeros(k, n_components);
    let mut variances = Vec::with_capacity(n_components);
    for (j, &idx) in order.iter().take(n_components).enumerate() {
        let var = eig.eigenvalues[idx].max(0.0);
        variances.push(var);
        let axis = eig.eigenvectors.column(idx);
        let mut scores = if gram {
            // Xc = U S Vᵀ, so the scores U S are eigenvectors of the Gram matrix scaled by √(k λ)
            axis * (k as f64 * var).sqrt()
        } else {
            &xc * axis
        };
        // fix the arbitrary eigenvector sign: largest-magnitude score positive
        if let Some(pivot) = scores.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())) {
            if pivot < 0.0 {
                scores.neg_mut();
            }
        }
        reduced.set_column(j, &scores);
    }
    Ok(PcaResult { reduced, variances })
}

/// Sum of the top `n_components` population variances, without forming projections.
pub fn retained_variance(x: &DMatrix<f64>, n_components: usize) -> Result<f64> {
    check_request(x.nrows(), x.ncols(), n_components)?;
    let (moment, _) = second_moment(&center(x));
    let spectrum = sorted_desc(moment.symmetric_eigenvalues().iter().copied());
    Ok(spectrum.iter().take(n_components).sum())
}

/// Total population variance of the raw points (trace of the covariance).
pub fn total_variance(x: &DMatrix<f64>) -> f64 {
    let xc = center(x);
    xc.iter().map(|v| v * v).sum::<f64>() / x.nrows() as f64
}
