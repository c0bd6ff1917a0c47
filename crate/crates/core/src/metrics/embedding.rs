//! Two-dimensional PCA coordinates of a point cloud, for external plotting.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::metrics::pca::{pca_reduce_matrix, points_to_matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub sample_id: String,
    pub c1: f64,
    pub c2: f64,
}

/// Projects `points` onto their first two principal axes. Missing axes (fewer than three
/// points or fewer than two dimensions) are reported as zero coordinates.
pub fn export_embedding(points: &[Vec<f64>], ids: &[String]) -> Result<Vec<EmbeddingRow>> {
    if points.len() != ids.len() {
        return Err(Error::arg(format!(
            "{} points but {} ids",
            points.len(),
            ids.len()
        )));
    }
    export_embedding_matrix(&points_to_matrix(points)?, ids)
}

pub fn export_embedding_matrix(x: &DMatrix<f64>, ids: &[String]) -> Result<Vec<EmbeddingRow>> {
    let k = x.nrows();
    let dims = 2.min(k.saturating_sub(1)).min(x.ncols());
    let coords = if dims == 0 {
        DMatrix::zeros(k, 0)
    } else {
        pca_reduce_matrix(x, dims)?.reduced
    };
    Ok(ids
        .iter()
        .enumerate()
        .map(|(i, id)| EmbeddingRow {
            sample_id: id.clone(),
            c1: if dims > 0 { coords[(i, 0)] } else { 0.0 },
            c2: if dims > 1 { coords[(i, 1)] } else { 0.0 },
        })
        .collect())
}

pub fn embedding_csv(rows: &[EmbeddingRow]) -> String {
    let mut out = String::from("sample_id,c1,c2\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.sample_id, r.c1, r.c2);
    }
    out
}

pub fn write_embedding_csv(path: &Path, rows: &[EmbeddingRow]) -> Result<()> {
    std::fs::write(path, embedding_csv(rows)).map_err(|e| Error::io(path, e))
}
