//! Vertical federation inside one company: the company (active party, label
//! holder) and its heating stations (passive parties, feature-block holders)
//! jointly fit one linear forecaster over the column-concatenation of their
//! blocks.
//!
//! Each gradient step exchanges exactly two things per passive: the passive's
//! partial score series (its block's contribution to the prediction) and the
//! active's residual series back. Raw features and labels never cross the
//! participant boundary. Because the model is linear and training is full
//! batch, the split procedure is algebraically identical to centralized
//! gradient descent on the concatenated dataset.

use std::collections::BTreeMap;

use ndarray::ArrayView2;

use crate::domain::{Participant, ParticipantId, Role, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::forecaster::{self, ForecasterParams, Standardization, TrainConfig};
use crate::simnet::{encode_series, MessageKind, Simnet};

/// One company-tier split-training group: one active member plus at least
/// one passive member, all covering identical dates.
#[derive(Debug, Clone)]
pub struct VflGroup {
    active: Participant,
    passives: Vec<Participant>,
    row_count: usize,
}

impl VflGroup {
    pub fn new(active: Participant, mut passives: Vec<Participant>) -> Result<Self> {
        if active.role() != Role::Active {
            return Err(Error::Config(format!(
                "group leader `{}` must hold the active role",
                active.id()
            )));
        }
        for p in &passives {
            if p.role() != Role::Passive {
                return Err(Error::Config(format!(
                    "group member `{}` must hold the passive role",
                    p.id()
                )));
            }
        }
        passives.sort_by(|a, b| a.id().cmp(b.id()));
        let mut ids: Vec<&ParticipantId> = passives.iter().map(Participant::id).collect();
        ids.push(active.id());
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate participant id in group".into()));
        }
        for p in &passives {
            if p.dataset().dates() != active.dataset().dates() {
                return Err(Error::Config(format!(
                    "member `{}` is not date-aligned with the active participant",
                    p.id()
                )));
            }
        }
        let row_count = active.dataset().rows();
        if row_count < 2 {
            return Err(Error::Config(format!(
                "group needs at least 2 aligned rows, got {row_count}"
            )));
        }
        Ok(Self {
            active,
            passives,
            row_count,
        })
    }

    pub fn active(&self) -> &Participant {
        &self.active
    }

    pub fn passives(&self) -> &[Participant] {
        &self.passives
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    /// Members in block order: active first, then passives ascending by id.
    pub fn members(&self) -> impl Iterator<Item = &Participant> {
        std::iter::once(&self.active).chain(self.passives.iter())
    }
}

/// A passive (or active) block's contribution to the shared prediction:
/// rowwise dot product of the block weights, no bias, no clamping. The
/// global bias lives in the active participant's block and is added by
/// [`combine_and_residual`].
pub fn forward_partial(
    block: &ForecasterParams,
    features: ArrayView2<'_, f64>,
) -> Result<Vec<f64>> {
    if features.ncols() != block.weights.len() {
        return Err(Error::Shape(format!(
            "feature width {} does not match block width {}",
            features.ncols(),
            block.weights.len()
        )));
    }
    Ok(features
        .rows()
        .into_iter()
        .map(|row| row.iter().zip(&block.weights).map(|(x, w)| x * w).sum())
        .collect())
}

/// Active-party combination step: prediction is the clamped sum of all
/// partial scores plus the global bias; the residual (what flows back to
/// every member) is computed before the clamp so gradients stay exact.
pub fn combine_and_residual(
    partials: &[Vec<f64>],
    bias: f64,
    target: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = target.len();
    for p in partials {
        if p.len() != n {
            return Err(Error::Shape(format!(
                "partial series of length {} vs target length {n}",
                p.len()
            )));
        }
    }
    let mut prediction = Vec::with_capacity(n);
    let mut residual = Vec::with_capacity(n);
    for t in 0..n {
        let score: f64 = partials.iter().map(|p| p[t]).sum::<f64>() + bias;
        prediction.push(score.max(0.0));
        residual.push(score - target[t]);
    }
    Ok((prediction, residual))
}

/// Gradient of the shared ½-scaled MSE restricted to one block's weights,
/// computed from the residual series alone: `Xᵀr/n + l2·w`.
pub fn backward_partial(
    residuals: &[f64],
    features: ArrayView2<'_, f64>,
    l2: f64,
    block: &ForecasterParams,
) -> Result<Vec<f64>> {
    if features.nrows() != residuals.len() {
        return Err(Error::Shape(format!(
            "{} residuals vs {} feature rows",
            residuals.len(),
            features.nrows()
        )));
    }
    if features.ncols() != block.weights.len() {
        return Err(Error::Shape(format!(
            "feature width {} does not match block width {}",
            features.ncols(),
            block.weights.len()
        )));
    }
    let n = residuals.len() as f64;
    Ok(features
        .columns()
        .into_iter()
        .zip(&block.weights)
        .map(|(col, w)| col.iter().zip(residuals).map(|(x, r)| x * r).sum::<f64>() / n + l2 * w)
        .collect())
}

/// Loss of one split-training round, recorded per round for plots.
#[derive(Debug, Clone, PartialEq)]
pub struct VflRoundLog {
    /// Local round number, consecutive from 1.
    pub round: usize,
    /// Group training objective after the round's updates.
    pub loss: f64,
}

/// Result of a vertical run.
#[derive(Debug, Clone, PartialEq)]
pub struct VflOutcome {
    /// Raw-space block parameters per member; the active member's block
    /// carries the global bias.
    pub blocks: BTreeMap<ParticipantId, ForecasterParams>,
    /// Per-member baselines: a model over that member's feature block alone,
    /// trained against the labels under the active party's evaluation
    /// protocol (the labels themselves never leave the active party).
    pub restricted_locals: BTreeMap<ParticipantId, ForecasterParams>,
    pub logs: Vec<VflRoundLog>,
}

impl VflOutcome {
    /// The centralized-equivalent model: block weights concatenated in
    /// member order (active first, passives ascending by id).
    pub fn combined(&self, group: &VflGroup) -> ForecasterParams {
        let mut weights = Vec::new();
        let mut bias = 0.0;
        for member in group.members() {
            let block = &self.blocks[member.id()];
            weights.extend_from_slice(&block.weights);
            bias += block.bias;
        }
        ForecasterParams::new(weights, bias)
    }
}

/// Run split training for `rounds` rounds of `config.epochs` full-batch
/// steps each. Every step exchanges partial scores (passive → active) and
/// residual shares (active → passives) through the harness.
pub fn run_vfl(
    net: &mut Simnet,
    group: &VflGroup,
    rounds: usize,
    config: &TrainConfig,
) -> Result<VflOutcome> {
    config.validate()?;
    if rounds == 0 {
        return Err(Error::Config("rounds must be at least 1".into()));
    }
    let target = group
        .active
        .dataset()
        .target()
        .expect("group invariant: active holds labels");

    net.register(group.active.id().as_str());
    for p in &group.passives {
        net.register(p.id().as_str());
    }

    struct Block<'a> {
        member: &'a Participant,
        stats: Option<Standardization>,
        features: ndarray::Array2<f64>,
        params: ForecasterParams,
    }
    let mut blocks: Vec<Block<'_>> = group
        .members()
        .map(|member| {
            let raw = member.dataset().features();
            let (stats, features) = if config.standardize {
                let stats = Standardization::fit(raw);
                let features = stats.apply(raw);
                (Some(stats), features)
            } else {
                (None, raw.to_owned())
            };
            let params = ForecasterParams::zeros(features.ncols());
            Block {
                member,
                stats,
                features,
                params,
            }
        })
        .collect();
    let mut bias = 0.0_f64;
    let active_id = group.active.id().clone();
    let n = group.row_count() as f64;

    let mut logs = Vec::with_capacity(rounds);
    for round in 1..=rounds {
        let wire_round = net.advance_round();
        for _ in 0..config.epochs {
            let mut partials = Vec::with_capacity(blocks.len());
            for block in &blocks {
                let partial = forward_partial(&block.params, block.features.view())?;
                if block.member.id() != &active_id {
                    net.send(
                        block.member.id().as_str(),
                        active_id.as_str(),
                        wire_round,
                        MessageKind::PartialScore,
                        &encode_series(&partial),
                    )?;
                }
                partials.push(partial);
            }
            let (_prediction, residual) = combine_and_residual(&partials, bias, target)?;
            for block in &blocks {
                if block.member.id() != &active_id {
                    net.send(
                        active_id.as_str(),
                        block.member.id().as_str(),
                        wire_round,
                        MessageKind::ResidualShare,
                        &encode_series(&residual),
                    )?;
                }
            }
            for block in &mut blocks {
                let grad =
                    backward_partial(&residual, block.features.view(), config.l2, &block.params)?;
                for (w, g) in block.params.weights.iter_mut().zip(&grad) {
                    *w -= config.learning_rate * g;
                }
            }
            bias -= config.learning_rate * residual.iter().sum::<f64>() / n;
        }

        let loss = group_loss(
            &blocks
                .iter()
                .map(|b| (&b.params, b.features.view()))
                .collect::<Vec<_>>(),
            bias,
            target,
            config.l2,
        )?;
        if !loss.is_finite() {
            return Err(Error::Training(format!(
                "split training diverged in round {round}; lower the learning rate"
            )));
        }
        logs.push(VflRoundLog { round, loss });
    }

    // Fold every block back into raw feature units. Folding a block with a
    // zero bias leaves the bias correction that block contributes to the
    // combined intercept, which belongs to the active party's block.
    let mut out_blocks = BTreeMap::new();
    let mut bias_correction = 0.0;
    for block in &blocks {
        let folded = match &block.stats {
            Some(stats) => {
                let folded = stats.fold(&ForecasterParams::new(block.params.weights.clone(), 0.0));
                bias_correction += folded.bias;
                ForecasterParams::new(folded.weights, 0.0)
            }
            None => block.params.clone(),
        };
        out_blocks.insert(block.member.id().clone(), folded);
    }
    let active_block = out_blocks.get_mut(&active_id).expect("active block exists");
    active_block.bias = bias + bias_correction;

    // Restricted per-member baselines for the contribution scores: each
    // member's own feature block against the labels, with the same total
    // step budget as the federated model.
    let standalone_config = TrainConfig {
        epochs: rounds * config.epochs,
        ..config.clone()
    };
    let mut restricted_locals = BTreeMap::new();
    for member in group.members() {
        let ds = member.dataset();
        let labeled = TimeSeriesDataset::new(
            ds.dates().to_vec(),
            ds.feature_names().to_vec(),
            ds.features().to_owned(),
            Some(target.to_vec()),
        )?;
        restricted_locals.insert(
            member.id().clone(),
            forecaster::train(&labeled, &standalone_config)?,
        );
    }

    Ok(VflOutcome {
        blocks: out_blocks,
        restricted_locals,
        logs,
    })
}

fn group_loss(
    blocks: &[(&ForecasterParams, ArrayView2<'_, f64>)],
    bias: f64,
    target: &[f64],
    l2: f64,
) -> Result<f64> {
    let partials: Vec<Vec<f64>> = blocks
        .iter()
        .map(|(params, features)| forward_partial(params, *features))
        .collect::<Result<_>>()?;
    let n = target.len() as f64;
    let mut sq = 0.0;
    for t in 0..target.len() {
        let score: f64 = partials.iter().map(|p| p[t]).sum::<f64>() + bias;
        let r = score - target[t];
        sq += r * r;
    }
    let penalty: f64 = blocks
        .iter()
        .flat_map(|(params, _)| params.weights.iter())
        .map(|w| w * w)
        .sum::<f64>()
        * l2
        / 2.0;
    Ok(sq / (2.0 * n) + penalty)
}
