//! Contribution-aware reward engine.
//!
//! Every participant is scored on two dimensions and paid from two pools:
//!
//! - **Data quality**: how strongly the committed data correlates with the
//!   actual usage (horizontal cohorts additionally weight by the share of
//!   samples committed).
//! - **Model contribution**: the mean accuracy increment that participation
//!   in the federation produced for the *other* cohort members, where each
//!   member's increment is its global-model accuracy minus its local-model
//!   accuracy under the bounded SMAPE error.
//!
//! Both dimensions are clamped at zero, normalized to shares that sum to
//! one, and multiplied by the respective pool.

use std::collections::BTreeMap;

use log::warn;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::domain::ParticipantId;
use crate::error::{Error, Result};

/// Correlation score of a feature matrix against the target series.
///
/// A single column scores its signed Pearson correlation in [-1, 1]. With
/// several columns the score is the mean of the per-column absolute Pearson
/// correlations, so opposing-sign features cannot cancel and the result
/// stays in [0, 1]. Zero-variance columns contribute 0; a zero-variance
/// target makes the whole score 0 (with a warning).
pub fn corr_score(features: ArrayView2<'_, f64>, target: &[f64]) -> Result<f64> {
    if features.nrows() != target.len() {
        return Err(Error::Shape(format!(
            "{} feature rows vs {} target entries",
            features.nrows(),
            target.len()
        )));
    }
    if target.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "correlation needs at least 2 observations, got {}",
            target.len()
        )));
    }
    if features.ncols() == 0 {
        return Err(Error::Shape("feature matrix has no columns".into()));
    }
    let n = target.len() as f64;
    let mean_y = target.iter().sum::<f64>() / n;
    let var_y = target
        .iter()
        .map(|y| (y - mean_y) * (y - mean_y))
        .sum::<f64>()
        / n;
    if var_y == 0.0 {
        warn!("target series has zero variance; correlation score defined as 0");
        return Ok(0.0);
    }

    let column_corr = |col: ndarray::ArrayView1<'_, f64>| -> f64 {
        let mean_x = col.sum() / n;
        let var_x = col.iter().map(|x| (x - mean_x) * (x - mean_x)).sum::<f64>() / n;
        if var_x == 0.0 {
            return 0.0;
        }
        let cov = col
            .iter()
            .zip(target)
            .map(|(x, y)| (x - mean_x) * (y - mean_y))
            .sum::<f64>()
            / n;
        cov / (var_x * var_y).sqrt()
    };

    if features.ncols() == 1 {
        Ok(column_corr(features.column(0)))
    } else {
        let sum: f64 = features
            .columns()
            .into_iter()
            .map(|c| column_corr(c).abs())
            .sum();
        Ok(sum / features.ncols() as f64)
    }
}

/// Share of the cohort's samples a participant committed.
pub fn quant_score(n_i: usize, n_total: usize) -> Result<f64> {
    if n_total == 0 {
        return Err(Error::Config("total sample count is zero".into()));
    }
    if n_i > n_total {
        return Err(Error::Config(format!(
            "participant samples {n_i} exceed cohort total {n_total}"
        )));
    }
    Ok(n_i as f64 / n_total as f64)
}

/// Horizontal-tier data quality: correlation times quantity share. May be
/// negative for anti-correlated data; [`normalize`] clamps before sharing.
pub fn quality_hfl(corr: f64, quant: f64) -> f64 {
    corr * quant
}

/// Vertical-tier data quality: members hold feature blocks over shared
/// samples, so quality is the correlation score alone.
pub fn quality_vfl(corr: f64) -> f64 {
    corr
}

/// Symmetric mean absolute percentage error, in [0, 2]. A term where both
/// the forecast and the actual are 0 counts as 0 (perfect agreement).
pub fn smape(forecast: &[f64], actual: &[f64]) -> Result<f64> {
    smape_terms(forecast, actual, 0.5)
}

/// Bounded SMAPE variant in [0, 1]: the per-day denominator is `|F| + |A|`
/// instead of their mean.
pub fn smape_new(forecast: &[f64], actual: &[f64]) -> Result<f64> {
    smape_terms(forecast, actual, 1.0)
}

fn smape_terms(forecast: &[f64], actual: &[f64], denom_scale: f64) -> Result<f64> {
    if forecast.len() != actual.len() {
        return Err(Error::Shape(format!(
            "{} forecast entries vs {} actuals",
            forecast.len(),
            actual.len()
        )));
    }
    if forecast.is_empty() {
        return Err(Error::InsufficientData(
            "error metric needs at least 1 observation".into(),
        ));
    }
    let total: f64 = forecast
        .iter()
        .zip(actual)
        .map(|(f, a)| {
            let denom = (f.abs() + a.abs()) * denom_scale;
            if denom == 0.0 {
                0.0
            } else {
                (f - a).abs() / denom
            }
        })
        .sum();
    Ok(total / forecast.len() as f64)
}

/// Accuracy implied by a bounded SMAPE error.
pub fn accuracy(smape_new_value: f64) -> f64 {
    1.0 - smape_new_value
}

/// Benefit a participant received from federating: global-model accuracy
/// minus local-model accuracy, preserved even when negative.
pub fn increment(acc_global: f64, acc_local: f64) -> f64 {
    acc_global - acc_local
}

/// Contribution of `member` to the cohort: the mean increment of every
/// *other* participant.
pub fn contribution(
    increments: &BTreeMap<ParticipantId, f64>,
    member: &ParticipantId,
) -> Result<f64> {
    if increments.len() < 2 {
        return Err(Error::Config(format!(
            "contribution needs at least 2 participants, got {}",
            increments.len()
        )));
    }
    if !increments.contains_key(member) {
        return Err(Error::Config(format!("unknown participant `{member}`")));
    }
    let sum: f64 = increments
        .iter()
        .filter(|(id, _)| *id != member)
        .map(|(_, v)| v)
        .sum();
    Ok(sum / (increments.len() - 1) as f64)
}

/// Normalize values into shares that sum to 1, clamping negatives to zero
/// first. A cohort whose clamped values are all zero falls back to equal
/// shares (with a warning) so the pool still splits deterministically.
pub fn normalize(values: &BTreeMap<ParticipantId, f64>) -> Result<BTreeMap<ParticipantId, f64>> {
    if values.is_empty() {
        return Err(Error::Config("nothing to normalize".into()));
    }
    let clamped: Vec<(ParticipantId, f64)> = values
        .iter()
        .map(|(id, v)| (id.clone(), v.max(0.0)))
        .collect();
    let sum: f64 = clamped.iter().map(|(_, v)| v).sum();
    if sum <= 0.0 {
        warn!("all values non-positive after clamping; falling back to equal shares");
        let share = 1.0 / values.len() as f64;
        return Ok(clamped.into_iter().map(|(id, _)| (id, share)).collect());
    }
    Ok(clamped.into_iter().map(|(id, v)| (id, v / sum)).collect())
}

/// The two reward pools of one cohort.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardPools {
    pub r_data: f64,
    pub r_model: f64,
}

impl RewardPools {
    pub fn validate(&self) -> Result<()> {
        if self.r_data < 0.0 || self.r_model < 0.0 {
            return Err(Error::Config(format!(
                "reward pools must be non-negative, got {} / {}",
                self.r_data, self.r_model
            )));
        }
        Ok(())
    }
}

/// Split both pools over the cohort in proportion to the normalized shares.
/// Returns `(r_quality, r_contribution)` per participant.
pub fn allocate_rewards(
    pools: &RewardPools,
    quality_norms: &BTreeMap<ParticipantId, f64>,
    contribution_norms: &BTreeMap<ParticipantId, f64>,
) -> Result<BTreeMap<ParticipantId, (f64, f64)>> {
    pools.validate()?;
    if quality_norms.len() != contribution_norms.len()
        || quality_norms
            .keys()
            .zip(contribution_norms.keys())
            .any(|(a, b)| a != b)
    {
        return Err(Error::Config(
            "quality and contribution shares cover different participants".into(),
        ));
    }
    Ok(quality_norms
        .iter()
        .map(|(id, q)| {
            let c = contribution_norms[id];
            (id.clone(), (pools.r_data * q, pools.r_model * c))
        })
        .collect())
}

/// Everything the pipeline computes for one participant, in computation
/// order. Fields the cohort mode does not define stay `None` (the quantity
/// share outside the horizontal tier, the model metrics when scores were
/// supplied directly).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub participant: ParticipantId,
    pub corr_score: Option<f64>,
    pub quant_score: Option<f64>,
    pub quality: f64,
    pub smape_new_local: Option<f64>,
    pub smape_new_global: Option<f64>,
    pub acc_local: Option<f64>,
    pub acc_global: Option<f64>,
    pub increment: Option<f64>,
    pub contribution: f64,
    pub quality_norm: f64,
    pub contribution_norm: f64,
    pub r_quality: f64,
    pub r_contribution: f64,
}

/// Per-participant inputs to [`evaluate_cohort`]: the committed data the
/// quality score inspects, the sample count (horizontal cohorts only), and
/// the local/global forecasts over the participant's evaluation window.
#[derive(Debug, Clone)]
pub struct MemberEval {
    pub id: ParticipantId,
    pub quality_features: Array2<f64>,
    pub quality_target: Vec<f64>,
    pub sample_count: Option<usize>,
    pub local_forecast: Vec<f64>,
    pub global_forecast: Vec<f64>,
    pub actual: Vec<f64>,
}

/// Run the full scoring pipeline over a cohort: correlation (and quantity)
/// into quality, bounded SMAPE of both models into accuracies, increments,
/// contributions, normalization of both dimensions, and pool allocation.
/// Scorecards come back in ascending participant-id order.
pub fn evaluate_cohort(members: &[MemberEval], pools: &RewardPools) -> Result<Vec<ScoreCard>> {
    pools.validate()?;
    if members.len() < 2 {
        return Err(Error::Config(format!(
            "cohort evaluation needs at least 2 participants, got {}",
            members.len()
        )));
    }
    let mut ordered: Vec<&MemberEval> = members.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    if ordered.windows(2).any(|w| w[0].id == w[1].id) {
        return Err(Error::Config("duplicate participant id in cohort".into()));
    }
    let with_counts = ordered.iter().filter(|m| m.sample_count.is_some()).count();
    if with_counts != 0 && with_counts != ordered.len() {
        return Err(Error::Config(
            "sample counts must be given for every participant or none".into(),
        ));
    }
    let total_samples: usize = ordered.iter().filter_map(|m| m.sample_count).sum();

    struct Partial {
        corr: f64,
        quant: Option<f64>,
        quality: f64,
        smape_local: f64,
        smape_global: f64,
        acc_local: f64,
        acc_global: f64,
    }
    let mut partials = Vec::with_capacity(ordered.len());
    let mut increments = BTreeMap::new();
    let mut qualities = BTreeMap::new();
    for member in &ordered {
        let corr = corr_score(member.quality_features.view(), &member.quality_target)?;
        let (quant, quality) = match member.sample_count {
            Some(count) => {
                let quant = quant_score(count, total_samples)?;
                (Some(quant), quality_hfl(corr, quant))
            }
            None => (None, quality_vfl(corr)),
        };
        let smape_local = smape_new(&member.local_forecast, &member.actual)?;
        let smape_global = smape_new(&member.global_forecast, &member.actual)?;
        let acc_local = accuracy(smape_local);
        let acc_global = accuracy(smape_global);
        increments.insert(member.id.clone(), increment(acc_global, acc_local));
        qualities.insert(member.id.clone(), quality);
        partials.push(Partial {
            corr,
            quant,
            quality,
            smape_local,
            smape_global,
            acc_local,
            acc_global,
        });
    }

    let mut contributions = BTreeMap::new();
    for member in &ordered {
        contributions.insert(member.id.clone(), contribution(&increments, &member.id)?);
    }
    let quality_norms = normalize(&qualities)?;
    let contribution_norms = normalize(&contributions)?;
    let rewards = allocate_rewards(pools, &quality_norms, &contribution_norms)?;

    Ok(ordered
        .iter()
        .zip(partials)
        .map(|(member, p)| {
            let (r_quality, r_contribution) = rewards[&member.id];
            ScoreCard {
                participant: member.id.clone(),
                corr_score: Some(p.corr),
                quant_score: p.quant,
                quality: p.quality,
                smape_new_local: Some(p.smape_local),
                smape_new_global: Some(p.smape_global),
                acc_local: Some(p.acc_local),
                acc_global: Some(p.acc_global),
                increment: Some(increments[&member.id]),
                contribution: contributions[&member.id],
                quality_norm: quality_norms[&member.id],
                contribution_norm: contribution_norms[&member.id],
                r_quality,
                r_contribution,
            }
        })
        .collect())
}

/// Score a cohort from externally supplied quality and contribution values:
/// normalization and allocation only, no model metrics. Negative values are
/// clamped (with a warning) like everywhere else.
pub fn score_from_values(
    values: &[(ParticipantId, f64, f64)],
    pools: &RewardPools,
) -> Result<Vec<ScoreCard>> {
    pools.validate()?;
    if values.is_empty() {
        return Err(Error::Config("no score rows given".into()));
    }
    let mut qualities = BTreeMap::new();
    let mut contributions = BTreeMap::new();
    for (id, quality, contribution) in values {
        if *quality < 0.0 || *contribution < 0.0 {
            warn!("negative score for `{id}` will be clamped to 0 before normalization");
        }
        if qualities.insert(id.clone(), *quality).is_some() {
            return Err(Error::Config(format!("duplicate participant `{id}`")));
        }
        contributions.insert(id.clone(), *contribution);
    }
    let quality_norms = normalize(&qualities)?;
    let contribution_norms = normalize(&contributions)?;
    let rewards = allocate_rewards(pools, &quality_norms, &contribution_norms)?;

    Ok(qualities
        .keys()
        .map(|id| {
            let (r_quality, r_contribution) = rewards[id];
            ScoreCard {
                participant: id.clone(),
                corr_score: None,
                quant_score: None,
                quality: qualities[id],
                smape_new_local: None,
                smape_new_global: None,
                acc_local: None,
                acc_global: None,
                increment: None,
                contribution: contributions[id],
                quality_norm: quality_norms[id],
                contribution_norm: contribution_norms[id],
                r_quality,
                r_contribution,
            }
        })
        .collect())
}
