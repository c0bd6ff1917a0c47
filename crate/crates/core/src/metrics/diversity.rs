//! Augmentation-cloud diversity.
//!
//! For each anchor sample, `k` augmentations are generated and flattened into
//! points; the cloud is reduced with PCA and its retained variance (the trace
//! over the kept components) is the anchor's diversity. The dataset score is
//! the mean over anchors.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::pca::{center, retained_variance};
use crate::randms::{augment, Augmenter, CombinatorConfig};
use crate::raster::Sample;
use crate::rng::{tags, RngStream};
use crate::xforms::TransformPolicy;

/// Where the PCA axes come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PcaFit {
    /// Each cloud gets its own axes.
    #[default]
    PerCloud,
    /// Axes fitted once on points pooled from every cloud.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiversityParams {
    /// Cloud size per anchor.
    pub k: usize,
    /// Upper bound on retained components; the effective count is `min(this, k − 1, m)`.
    pub max_components: usize,
    pub seed: u64,
    /// Append label coordinates to every point.
    pub include_labels: bool,
    pub fit: PcaFit,
    /// Points pooled for the global fit.
    pub global_fit_points: usize,
}

impl Default for DiversityParams {
    fn default() -> Self {
        Self {
            k: 1000,
            max_components: 100,
            seed: 0,
            include_labels: false,
            fit: PcaFit::PerCloud,
            global_fit_points: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorVariance {
    pub anchor_id: u64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub method: Augmenter,
    pub k: usize,
    pub n_components: usize,
    pub fit: PcaFit,
    pub include_labels: bool,
    pub mean_variance: f64,
    pub per_anchor: Vec<AnchorVariance>,
}

impl DiversityReport {
    /// Averages per-anchor values after sorting them by anchor id.
    pub fn from_anchors(
        method: Augmenter,
        params: &DiversityParams,
        n_components: usize,
        mut per_anchor: Vec<AnchorVariance>,
    ) -> Result<Self> {
        if per_anchor.is_empty() {
            return Err(Error::arg("diversity report needs at least one anchor"));
        }
        per_anchor.sort_by_key(|a| a.anchor_id);
        let mean_variance =
            per_anchor.iter().map(|a| a.variance).sum::<f64>() / per_anchor.len() as f64;
        Ok(Self {
            method,
            k: params.k,
            n_components,
            fit: params.fit,
            include_labels: params.include_labels,
            mean_variance,
            per_anchor,
        })
    }

    /// `anchor_id,variance` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("anchor_id,variance\n");
        for a in &self.per_anchor {
            out.push_str(&format!("{},{}\n", a.anchor_id, a.variance));
        }
        out
    }

    /// Writes `<stem>.csv` and `<stem>.json` (summary without the per-anchor rows) into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let summary = serde_json::json!({
            "method": self.method,
            "k": self.k,
            "n_components": self.n_components,
            "fit": self.fit,
            "include_labels": self.include_labels,
            "anchors": self.per_anchor.len(),
            "mean_variance": self.mean_variance,
        });
        let json = dir.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        std::fs::write(&json, text + "\n").map_err(|e| Error::io(&json, e))
    }
}

/// Effective component count for a cloud of `k` points in `dim` dimensions.
pub fn effective_components(max_components: usize, k: usize, dim: usize) -> usize {
    max_components.min(k.saturating_sub(1)).min(dim)
}

/// Generates the `k × m` cloud of augmentations around `anchor`.
///
/// Mixing augmenters draw a partner uniformly (with replacement) from `pool` for every point.
#[allow(clippy::too_many_arguments)]
pub fn generate_cloud(
    anchor: &Sample,
    pool: &[Sample],
    aug: Augmenter,
    k: usize,
    include_labels: bool,
    rng: &RngStream,
    cfg: &CombinatorConfig,
    policy: &TransformPolicy,
) -> Result<DMatrix<f64>> {
    if aug.is_mixing() && pool.is_empty() {
        return Err(Error::arg(format!("augmenter {aug} needs a partner pool")));
    }
    let pixels = anchor.image.data().len();
    let dim = pixels + if include_labels { anchor.label.num_classes() } else { 0 };
    let mut cloud = DMatrix::zeros(k, dim);
    for draw in 0..k {
        let stream = rng.child(draw as u64);
        let partner = if aug.is_mixing() {
            &pool[stream.child(tags::PARTNER).below(pool.len())]
        } else {
            anchor
        };
        let (out, _) = augment(aug, anchor, partner, &mut stream.child(tags::AUGMENT), cfg, policy)?;
        let mut row = cloud.row_mut(draw);
        for (j, &v) in out.image.data().iter().enumerate() {
            row[j] = v as f64;
        }
        if include_labels {
            for (j, &p) in out.label.probs().iter().enumerate() {
                row[pixels + j] = p;
            }
        }
    }
    Ok(cloud)
}

fn anchor_stream(params: &DiversityParams, anchor: &Sample) -> RngStream {
    RngStream::derive(params.seed, &[tags::DIVERSITY, anchor.source_id])
}

/// Retained PCA variance of one anchor's augmentation cloud.
pub fn cloud_diversity(
    anchor: &Sample,
    pool: &[Sample],
    aug: Augmenter,
    params: &DiversityParams,
    cfg: &CombinatorConfig,
    policy: &TransformPolicy,
) -> Result<f64> {
    if params.k < 2 {
        return Err(Error::arg(format!("cloud size k = {} must be at least 2", params.k)));
    }
    let rng = anchor_stream(params, anchor);
    let cloud = generate_cloud(anchor, pool, aug, params.k, params.include_labels, &rng, cfg, policy)?;
    let n = effective_components(params.max_components, params.k, cloud.ncols());
    retained_variance(&cloud, n)
}

/// Mean cloud diversity over `anchors`, computed on `workers` threads.
pub fn dataset_diversity(
    anchors: &[Sample],
    pool: &[Sample],
    aug: Augmenter,
    params: &DiversityParams,
    cfg: &CombinatorConfig,
    policy: &TransformPolicy,
    workers: usize,
) -> Result<DiversityReport> {
    let first = anchors
        .first()
        .ok_or_else(|| Error::arg("diversity needs at least one anchor"))?;
    if params.k < 2 {
        return Err(Error::arg(format!("cloud size k = {} must be at least 2", params.k)));
    }
    let dim = first.image.data().len()
        + if params.include_labels { first.label.num_classes() } else { 0 };
    let n = effective_components(params.max_components, params.k, dim);
    let pool_threads = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let per_anchor = match params.fit {
        PcaFit::PerCloud => pool_threads.install(|| {
            anchors
                .par_iter()
                .map(|a| {
                    Ok(AnchorVariance {
                        anchor_id: a.source_id,
                        variance: cloud_diversity(a, pool, aug, params, cfg, policy)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })?,
        PcaFit::Global => pool_threads.install(|| global_fit(anchors, pool, aug, params, n, cfg, policy))?,
    };
    DiversityReport::from_anchors(aug, params, n, per_anchor)
}

/// Fits axes on a pooled subsample of every cloud, then measures each cloud's variance
/// (about its own mean) along those axes.
fn global_fit(
    anchors: &[Sample],
    pool: &[Sample],
    aug: Augmenter,
    params: &DiversityParams,
    n: usize,
    cfg: &CombinatorConfig,
    policy: &TransformPolicy,
) -> Result<Vec<AnchorVariance>> {
    let per_cloud = params.global_fit_points.div_ceil(anchors.len()).clamp(1, params.k);
    let clouds: Vec<DMatrix<f64>> = anchors
        .par_iter()
        .map(|a| {
            let rng = anchor_stream(params, a);
            generate_cloud(a, pool, aug, params.k, params.include_labels, &rng, cfg, policy)
        })
        .collect::<Result<_>>()?;
    let dim = clouds[0].ncols();
    let pooled_rows: Vec<_> = clouds
        .iter()
        .flat_map(|c| (0..per_cloud).map(move |r| c.row(r).into_owned()))
        .collect();
    let pooled = DMatrix::from_rows(&pooled_rows);
    let n = n.min(pooled.nrows().saturating_sub(1)).min(dim);
    let axes = principal_axes(&pooled, n);
    Ok(anchors
        .iter()
        .zip(&clouds)
        .map(|(a, cloud)| {
            let proj = center(cloud) * &axes;
            let variance = proj.iter().map(|v| v * v).sum::<f64>() / cloud.nrows() as f64;
            AnchorVariance {
                anchor_id: a.source_id,
                variance,
            }
        })
        .collect())
}

/// `m × n` orthonormal leading axes of `x`'s rows.
fn principal_axes(x: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let xc = center(x);
    let gram = &xc * xc.transpose();
    let eig = nalgebra::SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut axes = DMatrix::zeros(x.ncols(), n);
    for (j, &idx) in order.iter().take(n).enumerate() {
        let s = eig.eigenvalues[idx].max(0.0).sqrt();
        if s > 0.0 {
            // right singular vector v = Xcᵀ u / s
            let v = xc.transpose() * eig.eigenvectors.column(idx) / s;
            axes.set_column(j, &v);
        }
    }
    axes
}
