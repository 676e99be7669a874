//! Behavioral-trace aggregation.
//!
//! Each trained model leaves a bundle of traces: its internal feature
//! matrix, its predictions, and the area under its loss curve. This module
//! compresses those bundles (per-source PCA at a retained-variance
//! threshold), weighs them (uniformly or by softmax over negated AULC) and
//! concatenates the result onto the raw inputs to form the next round's
//! training matrix.

use crate::error::{Error, Result};
use crate::linalg::{eig_sym, Matrix};
use crate::nn::{forward, TrainedModel};
use rayon::prelude::*;

/// One model's behavioral trace.
#[derive(Debug, Clone)]
pub struct IMTBundle {
    pub model_id: usize,
    /// Feature matrix, one row per sample.
    pub features: Matrix,
    pub predictions: Matrix,
    pub aulc: f64,
}

/// Fitted per-source PCA basis.
#[derive(Debug, Clone)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Orthonormal columns, one per retained component. Sign convention:
    /// the largest-magnitude entry of each component is positive.
    pub components: Matrix,
    /// Explained-variance ratios of the retained components, descending.
    pub explained_ratios: Vec<f64>,
    pub retained: usize,
    /// Set when the fitted features had no variance at all; a single
    /// zero-variance component is kept so the transform still emits a
    /// column. Legal mid-collapse, not an error.
    pub zero_variance: bool,
}

/// How bundles are weighted during fusion.
#[derive(Debug, Clone, PartialEq)]
pub enum Weighting {
    Uniform,
    /// `w_j` proportional to `exp(-aulc_j / temperature)`: fast, smooth
    /// convergers dominate.
    SoftmaxNegAulc {
        temperature: f64,
    },
}

impl std::fmt::Display for Weighting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Weighting::Uniform => f.write_str("uniform"),
            Weighting::SoftmaxNegAulc { .. } => f.write_str("softmax-neg-aulc"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatorConfig {
    /// Cumulative explained-variance threshold in (0, 1].
    pub variance_threshold: f64,
    pub weighting: Weighting,
    /// Append each source's (weighted) predictions column.
    pub include_predictions: bool,
    /// Optional cap on retained components per source.
    pub max_components: Option<usize>,
}

impl Default for AggregatorConfig {
    fn default() -> Self {
        AggregatorConfig {
            variance_threshold: 0.20,
            weighting: Weighting::Uniform,
            include_predictions: true,
            max_components: None,
        }
    }
}

impl AggregatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.variance_threshold > 0.0 && self.variance_threshold <= 1.0) {
            return Err(Error::contract(format!(
                "variance_threshold must be in (0, 1], got {}",
                self.variance_threshold
            )));
        }
        if let Weighting::SoftmaxNegAulc { temperature } = self.weighting {
            if !(temperature > 0.0) {
                return Err(Error::contract(format!(
                    "softmax temperature must be > 0, got {temperature}"
                )));
            }
        }
        if self.max_components == Some(0) {
            return Err(Error::contract("max_components must be >= 1"));
        }
        Ok(())
    }
}

/// Fitted fusion transform: one PCA per source plus the source weights,
/// reusable on any row-aligned bundles from the same sources.
#[derive(Debug, Clone)]
pub struct RhoModel {
    pub pcas: Vec<PcaModel>,
    /// Probability vector over sources.
    pub weights: Vec<f64>,
    pub source_ids: Vec<usize>,
    pub include_predictions: bool,
}

impl RhoModel {
    /// Total number of columns this transform appends.
    pub fn appended_width(&self) -> usize {
        let pred = usize::from(self.include_predictions);
        self.pcas.iter().map(|p| p.retained + pred).sum()
    }
}

/// Harvests the behavioral trace of a trained model on `x`.
pub fn extract_imt(model_id: usize, trained: &TrainedModel, x: &Matrix) -> Result<IMTBundle> {
    let (predictions, features) = forward(&trained.spec, &trained.params, x)?;
    Ok(IMTBundle {
        model_id,
        features,
        predictions,
        aulc: trained.aulc,
    })
}

/// Fits PCA on column-mean-centered features, keeping the smallest number
/// of components whose cumulative explained-variance ratio reaches
/// `theta`, clamped to `[1, min(d, cap)]`.
pub fn fit_pca(features: &Matrix, theta: f64, cap: Option<usize>) -> Result<PcaModel> {
    if features.rows() < 2 {
        return Err(Error::contract(format!(
            "fit_pca needs at least 2 rows, got {}",
            features.rows()
        )));
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::contract(format!(
            "variance threshold must be in (0, 1], got {theta}"
        )));
    }
    let d = features.cols();
    let mean = features.col_means();
    let centered = features.sub_row(&mean)?;
    let cov = centered
        .transpose()
        .matmul(&centered)?
        .scale(1.0 / (features.rows() as f64 - 1.0))?;
    let eig = eig_sym(&cov)?;
    // covariance is PSD; clamp tiny negative eigenvalues from roundoff
    let lambdas: Vec<f64> = eig.values.iter().map(|&l| l.max(0.0)).collect();
    let total: f64 = lambdas.iter().sum();

    let zero_variance = total == 0.0;
    let ratios_full: Vec<f64> = if zero_variance {
        vec![0.0; d]
    } else {
        lambdas.iter().map(|&l| l / total).collect()
    };

    let mut retained = d;
    if !zero_variance {
        let mut cum = 0.0;
        for (i, r) in ratios_full.iter().enumerate() {
            cum += r;
            if cum >= theta {
                retained = i + 1;
                break;
            }
        }
    } else {
        retained = 1;
    }
    retained = retained.min(cap.unwrap_or(d)).max(1);

    // keep the retained columns, sign-fixed for run-to-run stability
    let mut components = Matrix::zeros(d, retained);
    for c in 0..retained {
        let mut pivot = 0;
        let mut best = 0.0;
        for r in 0..d {
            let v = eig.vectors.get(r, c).abs();
            if v > best {
                best = v;
                pivot = r;
            }
        }
        let flip = if eig.vectors.get(pivot, c) < 0.0 {
            -1.0
        } else {
            1.0
        };
        for r in 0..d {
            components.set(r, c, flip * eig.vectors.get(r, c));
        }
    }

    Ok(PcaModel {
        mean,
        components,
        explained_ratios: ratios_full[..retained].to_vec(),
        retained,
        zero_variance,
    })
}

/// Projects features onto the retained components: `(X - mean) * V`.
pub fn apply_pca(pca: &PcaModel, features: &Matrix) -> Result<Matrix> {
    if features.cols() != pca.mean.len() {
        return Err(Error::shape(
            "apply_pca",
            features.shape(),
            (features.rows(), pca.mean.len()),
        ));
    }
    features.sub_row(&pca.mean)?.matmul(&pca.components)
}

fn fuse_weights(aulcs: &[f64], weighting: &Weighting) -> Vec<f64> {
    match weighting {
        Weighting::Uniform => vec![1.0 / aulcs.len() as f64; aulcs.len()],
        Weighting::SoftmaxNegAulc { temperature } => {
            // shift by the minimum for numerical stability; the normalized
            // result is mathematically unchanged
            let min = aulcs.iter().cloned().fold(f64::INFINITY, f64::min);
            let exps: Vec<f64> = aulcs
                .iter()
                .map(|a| (-(a - min) / temperature).exp())
                .collect();
            let z: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / z).collect()
        }
    }
}

/// Fits the fusion transform over a set of row-aligned bundles.
pub fn build_rho(bundles: &[&IMTBundle], config: &AggregatorConfig) -> Result<RhoModel> {
    config.validate()?;
    let Some(first) = bundles.first() else {
        return Err(Error::contract("build_rho needs at least one bundle"));
    };
    let rows = first.features.rows();
    for b in bundles {
        if b.features.rows() != rows || b.predictions.rows() != rows {
            return Err(Error::contract(format!(
                "bundle {} row count differs from {rows}",
                b.model_id
            )));
        }
    }
    let pcas: Vec<PcaModel> = bundles
        .par_iter()
        .map(|b| {
            fit_pca(
                &b.features,
                config.variance_threshold,
                config.max_components,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let aulcs: Vec<f64> = bundles.iter().map(|b| b.aulc).collect();
    let weights = fuse_weights(&aulcs, &config.weighting);
    Ok(RhoModel {
        pcas,
        weights,
        source_ids: bundles.iter().map(|b| b.model_id).collect(),
        include_predictions: config.include_predictions,
    })
}

/// Builds the expanded input matrix: raw inputs followed by, per source,
/// the weighted projected features and (optionally) the weighted
/// predictions. Column order is deterministic: source order, then
/// component index, then the prediction column.
pub fn apply_rho(rho: &RhoModel, bundles: &[&IMTBundle], base_x: &Matrix) -> Result<Matrix> {
    if bundles.len() != rho.source_ids.len() {
        return Err(Error::Lineage(format!(
            "expected {} bundles, got {}",
            rho.source_ids.len(),
            bundles.len()
        )));
    }
    for (b, &id) in bundles.iter().zip(&rho.source_ids) {
        if b.model_id != id {
            return Err(Error::Lineage(format!(
                "bundle id {} does not match fitted source id {id}",
                b.model_id
            )));
        }
    }
    let mut blocks: Vec<Matrix> = Vec::with_capacity(1 + 2 * bundles.len());
    blocks.push(base_x.clone());
    for ((b, pca), &w) in bundles.iter().zip(&rho.pcas).zip(&rho.weights) {
        if b.features.rows() != base_x.rows() {
            return Err(Error::shape(
                "apply_rho",
                base_x.shape(),
                b.features.shape(),
            ));
        }
        blocks.push(apply_pca(pca, &b.features)?.scale(w)?);
        if rho.include_predictions {
            blocks.push(b.predictions.scale(w)?);
        }
    }
    let refs: Vec<&Matrix> = blocks.iter().collect();
    Matrix::hstack(&refs)
}
