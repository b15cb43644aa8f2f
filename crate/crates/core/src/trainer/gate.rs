use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::calibration::Calibrator;
use super::config::RidgeConfig;
use super::folds::{stratified_kfold, train_indices};
use super::ridge::{fit_ridge_weighted, RidgeFit};
use super::standardize::Standardizer;
use crate::error::{GateError, Result};
use crate::scalar::{compensated_sum, Scalar};

pub const CROSS_FIT_FOLDS: usize = 3;
pub const DEFAULT_SEED: u64 = 42;
pub const ARTIFACT_FORMAT: &str = "lppgate-model";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPipeline<T> {
    pub ridge: RidgeFit<T>,
    pub calibrator: Calibrator<T>,
}

impl<T: Scalar> FoldPipeline<T> {
    pub fn score(&self, row: &[T]) -> T {
        self.calibrator.apply(self.ridge.predict_row(row))
    }
}

pub(crate) fn select_rows<T: Scalar>(x: &DMatrix<T>, rows: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

/// Cross-fitted ensemble on an already standardized design matrix.
///
/// For each stratified fold the ridge is fitted on the remaining folds and
/// the calibrator on the held-out fold's raw ridge scores.
pub fn cross_fit_calibrated<T: Scalar>(
    x: &DMatrix<T>,
    z: &[bool],
    cfg: &RidgeConfig,
    seed: u64,
) -> Result<Vec<FoldPipeline<T>>> {
    cfg.validate()?;
    if x.nrows() != z.len() {
        return Err(GateError::LengthMismatch {
            left: x.nrows(),
            right: z.len(),
        });
    }
    let folds = stratified_kfold(z, CROSS_FIT_FOLDS, seed)?;
    folds
        .iter()
        .map(|held| {
            let train = train_indices(z.len(), held);
            let xt = select_rows(x, &train);
            let zt: Vec<bool> = train.iter().map(|&i| z[i]).collect();
            let targets: Vec<T> = zt
                .iter()
                .map(|&v| if v { T::one() } else { T::zero() })
                .collect();
            let weights: Vec<T> = cfg.class_weight.sample_weights(&zt);
            let ridge = fit_ridge_weighted(
                &xt,
                &targets,
                &weights,
                T::lit(cfg.alpha),
                cfg.solver,
                T::lit(cfg.tol),
                cfg.max_iter,
            )?;
            let xh = select_rows(x, held);
            let zh: Vec<bool> = held.iter().map(|&i| z[i]).collect();
            let raw = ridge.predict(&xh);
            let calibrator = Calibrator::fit(cfg.calibration, &raw, &zh);
            Ok(FoldPipeline { ridge, calibrator })
        })
        .collect()
}

pub(crate) fn ensemble_score<T: Scalar>(folds: &[FoldPipeline<T>], row: &[T]) -> T {
    let mean =
        compensated_sum(folds.iter().map(|f| f.score(row))) / T::from_count(folds.len().max(1));
    if mean.as_f64().is_nan() {
        return T::lit(0.5);
    }
    mean.max(T::zero()).min(T::one())
}

/// Standardizer, three calibrated fold pipelines and the routing threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedGate<T> {
    pub feature_names: Vec<String>,
    pub scaler: Standardizer<T>,
    pub folds: Vec<FoldPipeline<T>>,
    pub config: RidgeConfig,
    pub tau_star: Option<f64>,
}

impl<T: Scalar> TrainedGate<T> {
    /// Fits the scaler on `x` and the cross-fitted pipelines on the scaled data.
    pub fn fit(
        feature_names: Vec<String>,
        x: &DMatrix<T>,
        z: &[bool],
        cfg: &RidgeConfig,
        seed: u64,
    ) -> Result<Self> {
        if feature_names.len() != x.ncols() {
            return Err(GateError::LengthMismatch {
                left: feature_names.len(),
                right: x.ncols(),
            });
        }
        let scaler = Standardizer::fit(x);
        let folds = cross_fit_calibrated(&scaler.apply(x), z, cfg, seed)?;
        Ok(Self {
            feature_names,
            scaler,
            folds,
            config: *cfg,
            tau_star: None,
        })
    }

    /// Assembles a gate around a scaler fitted elsewhere.
    pub fn from_parts(
        feature_names: Vec<String>,
        scaler: Standardizer<T>,
        folds: Vec<FoldPipeline<T>>,
        config: RidgeConfig,
    ) -> Self {
        Self {
            feature_names,
            scaler,
            folds,
            config,
            tau_star: None,
        }
    }

    /// Score for a row already in training column order.
    pub fn predict_aligned(&self, row: &[T]) -> Result<T> {
        if row.len() != self.feature_names.len() {
            return Err(GateError::FeatureMismatch(format!(
                "expected {} features, got {}",
                self.feature_names.len(),
                row.len()
            )));
        }
        Ok(ensemble_score(&self.folds, &self.scaler.apply_row(row)))
    }

    /// Score for a row whose columns are identified by name.
    pub fn predict_score(&self, names: &[String], values: &[T]) -> Result<T> {
        let order = self.alignment(names)?;
        if values.len() != names.len() {
            return Err(GateError::LengthMismatch {
                left: names.len(),
                right: values.len(),
            });
        }
        let row: Vec<T> = order.iter().map(|&k| values[k]).collect();
        self.predict_aligned(&row)
    }

    /// Scores every row of `x`, whose columns are labelled by `names`.
    pub fn predict_matrix(&self, names: &[String], x: &DMatrix<T>) -> Result<Vec<T>> {
        let order = self.alignment(names)?;
        if x.ncols() != names.len() {
            return Err(GateError::LengthMismatch {
                left: names.len(),
                right: x.ncols(),
            });
        }
        Ok((0..x.nrows())
            .map(|i| {
                let row: Vec<T> = order.iter().map(|&k| x[(i, k)]).collect();
                ensemble_score(&self.folds, &self.scaler.apply_row(&row))
            })
            .collect())
    }

    /// For each training feature, its column position among `names`.
    pub fn alignment(&self, names: &[String]) -> Result<Vec<usize>> {
        let pos: HashMap<&str, usize> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        if pos.len() != names.len() {
            return Err(GateError::FeatureMismatch("duplicate feature names".into()));
        }
        let order: Vec<usize> = self
            .feature_names
            .iter()
            .map(|n| {
                pos.get(n.as_str())
                    .copied()
                    .ok_or_else(|| GateError::FeatureMismatch(format!("missing feature `{n}`")))
            })
            .collect::<Result<_>>()?;
        if names.len() != self.feature_names.len() {
            let extra: Vec<&String> = names
                .iter()
                .filter(|n| !self.feature_names.contains(n))
                .collect();
            return Err(GateError::FeatureMismatch(format!(
                "unexpected features {extra:?}"
            )));
        }
        Ok(order)
    }
}

/// On-disk model document: the gate plus a SHA-256 of its canonical JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact<T> {
    pub format: String,
    pub version: u32,
    pub content_hash: String,
    pub gate: TrainedGate<T>,
}

impl<T> TrainedGate<T>
where
    T: Scalar + Serialize + DeserializeOwned,
{
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("gate serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn to_artifact_json(&self) -> String {
        let artifact = ModelArtifact {
            format: ARTIFACT_FORMAT.to_string(),
            version: ARTIFACT_VERSION,
            content_hash: self.content_hash(),
            gate: self.clone(),
        };
        serde_json::to_string_pretty(&artifact).expect("artifact serializes")
    }

    pub fn from_artifact_json(text: &str) -> Result<Self> {
        let artifact: ModelArtifact<T> = serde_json::from_str(text)
            .map_err(|e| GateError::InvalidInput(format!("model artifact: {e}")))?;
        if artifact.format != ARTIFACT_FORMAT || artifact.version != ARTIFACT_VERSION {
            return Err(GateError::InvalidInput(format!(
                "unsupported model artifact {} v{}",
                artifact.format, artifact.version
            )));
        }
        let hash = artifact.gate.content_hash();
        if hash != artifact.content_hash {
            return Err(GateError::InvalidInput(
                "model artifact content hash mismatch".into(),
            ));
        }
        Ok(artifact.gate)
    }
}
