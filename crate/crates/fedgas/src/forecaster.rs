//! Linear gas-usage forecaster: deterministic full-batch gradient descent on
//! mean-squared error with an optional ridge penalty.
//!
//! Both federation tiers and the contribution scores are built on these
//! primitives. The model family is linear on purpose: split training over
//! feature blocks decomposes into exact per-participant partial sums, and
//! parameter averaging is well behaved.

use log::warn;
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::domain::TimeSeriesDataset;
use crate::error::{Error, Result};

/// Weight vector plus intercept of the linear forecaster, in raw feature
/// units (m³ per feature unit, m³).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecasterParams {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl ForecasterParams {
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        Self { weights, bias }
    }

    pub fn zeros(n_features: usize) -> Self {
        Self {
            weights: vec![0.0; n_features],
            bias: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }
}

/// Training hyperparameters. `epochs` counts full-batch gradient steps.
///
/// With `standardize` set, gradient descent runs on per-column standardized
/// features and the learned coefficients are folded back into raw feature
/// units before being returned, so `predict` always takes raw features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 200,
            l2: 0.0,
            seed: 0,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.l2 < 0.0 || !self.l2.is_finite() {
            return Err(Error::Config(format!(
                "l2 must be non-negative, got {}",
                self.l2
            )));
        }
        Ok(())
    }
}

/// Per-column location/scale fitted on a training set.
///
/// A column whose spread is negligible relative to its magnitude is flagged
/// degenerate: it standardizes to exactly zero, its weight stays fixed at 0,
/// and any raw-space weight on it is absorbed into the intercept (the column
/// is constant on this data, so the predictions are unchanged).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub degenerate: Vec<bool>,
}

impl Standardization {
    pub fn fit(features: ArrayView2<'_, f64>) -> Self {
        let n = features.nrows().max(1) as f64;
        let means: Vec<f64> = features
            .columns()
            .into_iter()
            .map(|c| c.sum() / n)
            .collect();
        let mut stds = Vec::with_capacity(means.len());
        let mut degenerate = Vec::with_capacity(means.len());
        for (c, &m) in features.columns().into_iter().zip(&means) {
            let var = c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let std = var.sqrt();
            if std <= 1e-12 * m.abs().max(1.0) {
                warn!("zero-variance feature column; its weight stays fixed at 0");
                stds.push(1.0);
                degenerate.push(true);
            } else {
                stds.push(std);
                degenerate.push(false);
            }
        }
        Self {
            means,
            stds,
            degenerate,
        }
    }

    pub fn apply(&self, features: ArrayView2<'_, f64>) -> ndarray::Array2<f64> {
        let mut out = features.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            if self.degenerate[j] {
                col.fill(0.0);
            } else {
                col.mapv_inplace(|v| (v - self.means[j]) / self.stds[j]);
            }
        }
        out
    }

    /// Rewrite standardized-space coefficients in raw feature units.
    pub fn fold(&self, params: &ForecasterParams) -> ForecasterParams {
        let mut weights = Vec::with_capacity(params.weights.len());
        let mut shift = 0.0;
        for (j, w) in params.weights.iter().enumerate() {
            if self.degenerate[j] {
                weights.push(0.0);
            } else {
                weights.push(w / self.stds[j]);
                shift += w * self.means[j] / self.stds[j];
            }
        }
        ForecasterParams::new(weights, params.bias - shift)
    }

    /// Inverse of [`Standardization::fold`]. A raw-space weight on a
    /// degenerate column moves into the intercept via the column's mean.
    pub fn lift(&self, params: &ForecasterParams) -> ForecasterParams {
        let mut weights = Vec::with_capacity(params.weights.len());
        let mut shift = 0.0;
        for (j, w) in params.weights.iter().enumerate() {
            shift += w * self.means[j];
            if self.degenerate[j] {
                weights.push(0.0);
            } else {
                weights.push(w * self.stds[j]);
            }
        }
        ForecasterParams::new(weights, params.bias + shift)
    }
}

/// Gradient of the loss with respect to every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// Train from scratch on a labeled dataset.
///
/// Full-batch gradient descent from zero-initialized parameters, a fixed
/// number of epochs, no stochasticity: identical inputs give bit-identical
/// parameters.
pub fn train(dataset: &TimeSeriesDataset, config: &TrainConfig) -> Result<ForecasterParams> {
    config.validate()?;
    let target = dataset
        .target()
        .ok_or_else(|| Error::Training("dataset has no target series".into()))?;
    if dataset.rows() < 2 {
        return Err(Error::Training(format!(
            "need at least 2 rows to train, got {}",
            dataset.rows()
        )));
    }

    let mut params = ForecasterParams::zeros(dataset.feature_names().len());
    if config.standardize {
        let stats = Standardization::fit(dataset.features());
        let standardized = stats.apply(dataset.features());
        gd_steps(
            &mut params,
            standardized.view(),
            target,
            config.learning_rate,
            config.l2,
            config.epochs,
        )?;
        params = stats.fold(&params);
    } else {
        gd_steps(
            &mut params,
            dataset.features(),
            target,
            config.learning_rate,
            config.l2,
            config.epochs,
        )?;
    }
    if !params.is_finite() {
        return Err(Error::Training(
            "gradient descent diverged; lower the learning rate".into(),
        ));
    }
    Ok(params)
}

/// Advance parameters in place by `steps` full-batch gradient steps on the
/// given (feature, target) pair. This is the warm-start kernel the
/// federation orchestrators share with [`train`].
pub fn gd_steps(
    params: &mut ForecasterParams,
    features: ArrayView2<'_, f64>,
    target: &[f64],
    learning_rate: f64,
    l2: f64,
    steps: usize,
) -> Result<()> {
    for _ in 0..steps {
        let grad = mse_gradient(params, features, target, l2)?;
        for (w, g) in params.weights.iter_mut().zip(&grad.weights) {
            *w -= learning_rate * g;
        }
        params.bias -= learning_rate * grad.bias;
    }
    Ok(())
}

/// Affine scores `X·w + b`, before the non-negativity clamp.
pub fn linear_scores(params: &ForecasterParams, features: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    if features.ncols() != params.weights.len() {
        return Err(Error::Shape(format!(
            "feature width {} does not match weight count {}",
            features.ncols(),
            params.weights.len()
        )));
    }
    Ok(features
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .zip(&params.weights)
                .map(|(x, w)| x * w)
                .sum::<f64>()
                + params.bias
        })
        .collect())
}

/// Forecast usage for each feature row. Gas usage cannot be negative, so
/// scores are clamped at zero from below.
pub fn predict(params: &ForecasterParams, features: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    Ok(linear_scores(params, features)?
        .into_iter()
        .map(|v| v.max(0.0))
        .collect())
}

/// Exact analytic gradient of `1/(2n) Σ (X·w + b − y)² + (l2/2)·‖w‖²`.
/// The intercept is not penalized.
pub fn mse_gradient(
    params: &ForecasterParams,
    features: ArrayView2<'_, f64>,
    target: &[f64],
    l2: f64,
) -> Result<Gradient> {
    if target.len() != features.nrows() {
        return Err(Error::Shape(format!(
            "target length {} does not match {} feature rows",
            target.len(),
            features.nrows()
        )));
    }
    let scores = linear_scores(params, features)?;
    let n = target.len() as f64;
    let residuals: Vec<f64> = scores.iter().zip(target).map(|(s, y)| s - y).collect();

    let mut weights = vec![0.0; params.weights.len()];
    for (j, col) in features.columns().into_iter().enumerate() {
        let dot: f64 = col.iter().zip(&residuals).map(|(x, r)| x * r).sum();
        weights[j] = dot / n + l2 * params.weights[j];
    }
    let bias = residuals.iter().sum::<f64>() / n;
    Ok(Gradient { weights, bias })
}

/// Training objective: `1/(2n) Σ (X·w + b − y)² + (l2/2)·‖w‖²`.
pub fn loss(
    params: &ForecasterParams,
    features: ArrayView2<'_, f64>,
    target: &[f64],
    l2: f64,
) -> Result<f64> {
    if target.len() != features.nrows() {
        return Err(Error::Shape(format!(
            "target length {} does not match {} feature rows",
            target.len(),
            features.nrows()
        )));
    }
    let scores = linear_scores(params, features)?;
    let n = target.len().max(1) as f64;
    let sq: f64 = scores
        .iter()
        .zip(target)
        .map(|(s, y)| (s - y) * (s - y))
        .sum();
    let penalty: f64 = params.weights.iter().map(|w| w * w).sum::<f64>() * l2 / 2.0;
    Ok(sq / (2.0 * n) + penalty)
}

/// Checkpoint document for parameters: feature names pin the column order the
/// weights refer to, and the standardization block records how coefficients
/// were folded back to raw units (absent when training ran on raw features).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsDocument {
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub standardization: Option<Standardization>,
}

impl ParamsDocument {
    pub fn new(
        feature_names: Vec<String>,
        params: &ForecasterParams,
        standardization: Option<Standardization>,
    ) -> Self {
        Self {
            feature_names,
            weights: params.weights.clone(),
            bias: params.bias,
            standardization,
        }
    }

    pub fn params(&self) -> ForecasterParams {
        ForecasterParams::new(self.weights.clone(), self.bias)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
