//! Horizontal federation among gas companies: every round, each company
//! refines the current global forecaster on its own samples, submits the
//! result, and the server replaces the global model with the sample-count
//! weighted average of the submissions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{Participant, ParticipantId};
use crate::error::{Error, Result};
use crate::forecaster::{self, ForecasterParams, Standardization, TrainConfig};
use crate::simnet::{encode_params, MessageKind, Simnet};

/// Server endpoint id in transcripts.
pub const SERVER_ID: &str = "server";

/// Snapshot of one federation round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HflRoundLog {
    /// Local round number, consecutive from 1.
    pub round: usize,
    pub local_params: BTreeMap<ParticipantId, ForecasterParams>,
    pub global_params: ForecasterParams,
    pub local_loss: BTreeMap<ParticipantId, f64>,
}

/// Round logs as JSON lines, one record per round.
pub fn logs_to_jsonl(logs: &[HflRoundLog]) -> Result<String> {
    let mut out = String::new();
    for log in logs {
        out.push_str(&serde_json::to_string(log)?);
        out.push('\n');
    }
    Ok(out)
}

/// Result of a horizontal run: the federated model, each participant's
/// standalone local model, and the per-round logs.
#[derive(Debug, Clone, PartialEq)]
pub struct HflOutcome {
    pub global: ForecasterParams,
    pub locals: BTreeMap<ParticipantId, ForecasterParams>,
    pub logs: Vec<HflRoundLog>,
}

/// Elementwise mean of parameters weighted by each client's sample count.
pub fn aggregate_weighted(
    client_params: &[ForecasterParams],
    sample_counts: &[usize],
) -> Result<ForecasterParams> {
    if client_params.is_empty() || client_params.len() != sample_counts.len() {
        return Err(Error::Shape(format!(
            "{} parameter sets vs {} sample counts",
            client_params.len(),
            sample_counts.len()
        )));
    }
    let width = client_params[0].weights.len();
    if client_params.iter().any(|p| p.weights.len() != width) {
        return Err(Error::Shape("parameter sets differ in width".into()));
    }
    let total: usize = sample_counts.iter().sum();
    if total == 0 {
        return Err(Error::Config("all sample counts are zero".into()));
    }

    let mut out = ForecasterParams::zeros(width);
    for (params, &count) in client_params.iter().zip(sample_counts) {
        let share = count as f64 / total as f64;
        for (acc, w) in out.weights.iter_mut().zip(&params.weights) {
            *acc += share * w;
        }
        out.bias += share * params.bias;
    }
    Ok(out)
}

/// Run `rounds` of federated averaging over the given company-tier
/// participants. `config.epochs` is the number of local gradient steps per
/// round; the standalone local models in the outcome train from scratch with
/// the matching total budget (`rounds * config.epochs`).
///
/// Clients are processed in ascending id order regardless of input order, so
/// the run is deterministic under any scheduling.
pub fn run_hfl(
    net: &mut Simnet,
    participants: &[Participant],
    rounds: usize,
    config: &TrainConfig,
) -> Result<HflOutcome> {
    config.validate()?;
    if participants.is_empty() {
        return Err(Error::Config(
            "horizontal run needs at least one participant".into(),
        ));
    }
    if rounds == 0 {
        return Err(Error::Config("rounds must be at least 1".into()));
    }

    let mut order: Vec<&Participant> = participants.iter().collect();
    order.sort_by(|a, b| a.id().cmp(b.id()));
    for pair in order.windows(2) {
        if pair[0].id() == pair[1].id() {
            return Err(Error::Config(format!(
                "duplicate participant id `{}`",
                pair[0].id()
            )));
        }
    }

    let schema = order[0].dataset().feature_names();
    for p in &order {
        if p.dataset().feature_names() != schema {
            return Err(Error::Config(format!(
                "participant `{}` has a different feature schema",
                p.id()
            )));
        }
        if !p.dataset().has_target() {
            return Err(Error::Config(format!(
                "participant `{}` holds no target series",
                p.id()
            )));
        }
        if p.sample_count() < 2 {
            return Err(Error::Config(format!(
                "participant `{}` would contribute {} samples; at least 2 required",
                p.id(),
                p.sample_count()
            )));
        }
    }

    net.register(SERVER_ID);
    for p in &order {
        net.register(p.id().as_str());
    }

    // Per-client training views: standardized features when configured, with
    // parameters folded to raw units at the message boundary so aggregation
    // always happens in one shared space.
    struct Client<'a> {
        participant: &'a Participant,
        stats: Option<Standardization>,
        features: ndarray::Array2<f64>,
    }
    let clients: Vec<Client<'_>> = order
        .iter()
        .map(|p| {
            let raw = p.dataset().features();
            if config.standardize {
                let stats = Standardization::fit(raw);
                let features = stats.apply(raw);
                Client {
                    participant: p,
                    stats: Some(stats),
                    features,
                }
            } else {
                Client {
                    participant: p,
                    stats: None,
                    features: raw.to_owned(),
                }
            }
        })
        .collect();
    let counts: Vec<usize> = order.iter().map(|p| p.sample_count()).collect();

    let mut global = ForecasterParams::zeros(schema.len());
    let mut logs = Vec::with_capacity(rounds);
    for round in 1..=rounds {
        let wire_round = net.advance_round();
        let mut local_params = BTreeMap::new();
        let mut local_loss = BTreeMap::new();
        let mut updates = Vec::with_capacity(clients.len());
        for client in &clients {
            let target = client
                .participant
                .dataset()
                .target()
                .expect("validated above");
            let mut params = match &client.stats {
                Some(stats) => stats.lift(&global),
                None => global.clone(),
            };
            forecaster::gd_steps(
                &mut params,
                client.features.view(),
                target,
                config.learning_rate,
                config.l2,
                config.epochs,
            )?;
            let update = match &client.stats {
                Some(stats) => stats.fold(&params),
                None => params,
            };
            if !update.is_finite() {
                return Err(Error::Training(format!(
                    "client `{}` diverged in round {round}; lower the learning rate",
                    client.participant.id()
                )));
            }
            let raw_loss = forecaster::loss(
                &update,
                client.participant.dataset().features(),
                target,
                config.l2,
            )?;
            net.send(
                client.participant.id().as_str(),
                SERVER_ID,
                wire_round,
                MessageKind::ParameterUpdate,
                &encode_params(&update),
            )?;
            local_params.insert(client.participant.id().clone(), update.clone());
            local_loss.insert(client.participant.id().clone(), raw_loss);
            updates.push(update);
        }

        global = aggregate_weighted(&updates, &counts)?;
        for client in &clients {
            net.send(
                SERVER_ID,
                client.participant.id().as_str(),
                wire_round,
                MessageKind::GlobalBroadcast,
                &encode_params(&global),
            )?;
        }
        logs.push(HflRoundLog {
            round,
            local_params,
            global_params: global.clone(),
            local_loss,
        });
    }

    let standalone_config = TrainConfig {
        epochs: rounds * config.epochs,
        ..config.clone()
    };
    let mut locals = BTreeMap::new();
    for p in &order {
        locals.insert(
            p.id().clone(),
            forecaster::train(p.dataset(), &standalone_config)?,
        );
    }

    Ok(HflOutcome {
        global,
        locals,
        logs,
    })
}
