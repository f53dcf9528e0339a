//! Deterministic in-memory message harness.
//!
//! Every parameter update, broadcast, partial score, residual share, and
//! score report crosses this layer, which assigns a global sequence number,
//! records a payload digest and size, and enforces the synchronous round
//! barrier (round numbers never decrease in sequence order). The resulting
//! transcript is the audit surface: privacy checks and determinism checks
//! both run against it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecaster::ForecasterParams;

/// Closed set of message kinds the federation exchanges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageKind {
    ParameterUpdate,
    GlobalBroadcast,
    PartialScore,
    ResidualShare,
    ScoreReport,
}

/// One logged network message. Payloads are recorded as a 64-bit digest plus
/// size by default; the raw bytes ride along (hex) only when the harness was
/// opened in full-payload mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub seq: u64,
    pub round: u64,
    pub sender: String,
    pub receiver: String,
    pub kind: MessageKind,
    pub payload_digest: u64,
    pub payload_size: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub payload: Option<String>,
}

/// Append-only ordered log of every message in a scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub scenario: String,
    pub seed: u64,
    pub messages: Vec<Message>,
}

impl Transcript {
    /// One JSON document per line, in sequence order.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for message in &self.messages {
            out.push_str(&serde_json::to_string(message)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// The harness: endpoint registry, round barrier, and transcript writer.
#[derive(Debug)]
pub struct Simnet {
    endpoints: BTreeSet<String>,
    transcript: Transcript,
    current_round: u64,
    retain_payloads: bool,
}

impl Simnet {
    pub fn new(scenario: impl Into<String>, seed: u64) -> Self {
        Self::with_payload_retention(scenario, seed, false)
    }

    pub fn with_payload_retention(
        scenario: impl Into<String>,
        seed: u64,
        retain_payloads: bool,
    ) -> Self {
        Self {
            endpoints: BTreeSet::new(),
            transcript: Transcript {
                scenario: scenario.into(),
                seed,
                messages: Vec::new(),
            },
            current_round: 0,
            retain_payloads,
        }
    }

    /// Idempotent endpoint registration.
    pub fn register(&mut self, id: impl Into<String>) {
        self.endpoints.insert(id.into());
    }

    /// Open the next synchronous round and return its global number.
    /// Orchestrators tag every message of a round with this value, which
    /// keeps rounds monotone across sequential phases of one scenario.
    pub fn advance_round(&mut self) -> u64 {
        self.current_round += 1;
        self.current_round
    }

    pub fn current_round(&self) -> u64 {
        self.current_round
    }

    /// Log and "deliver" a message. Delivery order is enqueue order; the
    /// round barrier rejects any message tagged before the current round.
    pub fn send(
        &mut self,
        sender: &str,
        receiver: &str,
        round: u64,
        kind: MessageKind,
        payload: &[u8],
    ) -> Result<u64> {
        for endpoint in [sender, receiver] {
            if !self.endpoints.contains(endpoint) {
                return Err(Error::Routing(format!(
                    "unregistered endpoint `{endpoint}`"
                )));
            }
        }
        if let Some(last) = self.transcript.messages.last() {
            if round < last.round {
                return Err(Error::Routing(format!(
                    "round barrier violated: message for round {round} after round {}",
                    last.round
                )));
            }
        }
        let seq = self.transcript.messages.len() as u64 + 1;
        self.transcript.messages.push(Message {
            seq,
            round,
            sender: sender.to_string(),
            receiver: receiver.to_string(),
            kind,
            payload_digest: fingerprint(payload),
            payload_size: payload.len() as u64,
            payload: self.retain_payloads.then(|| hex(payload)),
        });
        Ok(seq)
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }
}

/// FNV-1a 64-bit digest: deterministic across platforms and runs.
pub fn fingerprint(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Canonical byte encoding of a value series (little-endian f64s).
pub fn encode_series(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Canonical byte encoding of forecaster parameters: weights then bias.
pub fn encode_params(params: &ForecasterParams) -> Vec<u8> {
    let mut out = encode_series(&params.weights);
    out.extend_from_slice(&params.bias.to_le_bytes());
    out
}

/// Result of scanning a transcript for leaked raw data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrivacyCheck {
    pub passed: bool,
    pub offending_seqs: Vec<u64>,
}

/// Fail iff any payload digest in the transcript matches a forbidden
/// fingerprint of raw data (feature columns, label series).
pub fn assert_privacy(transcript: &Transcript, forbidden: &BTreeSet<u64>) -> PrivacyCheck {
    let offending_seqs: Vec<u64> = transcript
        .messages
        .iter()
        .filter(|m| forbidden.contains(&m.payload_digest))
        .map(|m| m.seq)
        .collect();
    PrivacyCheck {
        passed: offending_seqs.is_empty(),
        offending_seqs,
    }
}

/// Fingerprints of everything in a dataset that must never cross the wire
/// raw: each feature column and the target series.
pub fn raw_data_fingerprints(dataset: &crate::domain::TimeSeriesDataset) -> BTreeSet<u64> {
    let mut out = BTreeSet::new();
    for column in dataset.features().columns() {
        out.insert(fingerprint(&encode_series(&column.to_vec())));
    }
    if let Some(target) = dataset.target() {
        out.insert(fingerprint(&encode_series(target)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net() -> Simnet {
        let mut net = Simnet::new("test", 1);
        net.register("a");
        net.register("b");
        net
    }

    #[test]
    fn sequence_numbers_follow_send_order() {
        let mut net = net();
        let round = net.advance_round();
        let s1 = net
            .send("a", "b", round, MessageKind::ParameterUpdate, b"one")
            .unwrap();
        let s2 = net
            .send("b", "a", round, MessageKind::GlobalBroadcast, b"two")
            .unwrap();
        assert_eq!((s1, s2), (1, 2));
        let t = net.transcript();
        assert_eq!(t.messages[0].payload_size, 3);
        assert_eq!(t.messages[0].seq, 1);
        assert_eq!(t.messages[1].seq, 2);
    }

    #[test]
    fn unknown_endpoint_is_a_routing_error() {
        let mut net = net();
        let round = net.advance_round();
        let err = net
            .send("a", "nobody", round, MessageKind::PartialScore, b"x")
            .unwrap_err();
        assert!(matches!(err, Error::Routing(_)));
    }

    #[test]
    fn round_barrier_rejects_stale_rounds() {
        let mut net = net();
        let r1 = net.advance_round();
        let r2 = net.advance_round();
        net.send("a", "b", r2, MessageKind::PartialScore, b"x")
            .unwrap();
        let err = net
            .send("a", "b", r1, MessageKind::PartialScore, b"y")
            .unwrap_err();
        assert!(matches!(err, Error::Routing(_)));
    }

    #[test]
    fn rounds_are_non_decreasing_in_transcript() {
        let mut net = net();
        for _ in 0..5 {
            let r = net.advance_round();
            net.send("a", "b", r, MessageKind::PartialScore, b"x")
                .unwrap();
            net.send("b", "a", r, MessageKind::ResidualShare, b"y")
                .unwrap();
        }
        let rounds: Vec<u64> = net.transcript().messages.iter().map(|m| m.round).collect();
        assert!(rounds.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn identical_runs_produce_identical_transcripts() {
        let run = || {
            let mut net = net();
            let r = net.advance_round();
            net.send(
                "a",
                "b",
                r,
                MessageKind::ParameterUpdate,
                &encode_series(&[1.0, 2.0, 3.0]),
            )
            .unwrap();
            net.into_transcript()
        };
        assert_eq!(run(), run());
        assert_eq!(run().to_jsonl().unwrap(), run().to_jsonl().unwrap());
    }

    #[test]
    fn privacy_check_flags_leaked_series() {
        let labels = vec![10.0, 11.0, 12.0];
        let forbidden = BTreeSet::from([fingerprint(&encode_series(&labels))]);

        let mut net = net();
        let r = net.advance_round();
        net.send(
            "a",
            "b",
            r,
            MessageKind::PartialScore,
            &encode_series(&[0.5]),
        )
        .unwrap();
        assert!(assert_privacy(net.transcript(), &forbidden).passed);

        let leak_seq = net
            .send(
                "a",
                "b",
                r,
                MessageKind::PartialScore,
                &encode_series(&labels),
            )
            .unwrap();
        let check = assert_privacy(net.transcript(), &forbidden);
        assert!(!check.passed);
        assert_eq!(check.offending_seqs, vec![leak_seq]);
    }

    #[test]
    fn privacy_check_passes_on_empty_transcript() {
        let net = Simnet::new("empty", 0);
        let forbidden = BTreeSet::from([fingerprint(b"anything")]);
        assert!(assert_privacy(net.transcript(), &forbidden).passed);
    }

    #[test]
    fn full_payload_mode_keeps_bytes() {
        let mut net = Simnet::with_payload_retention("test", 1, true);
        net.register("a");
        net.register("b");
        let r = net.advance_round();
        net.send("a", "b", r, MessageKind::ScoreReport, &[0xde, 0xad])
            .unwrap();
        assert_eq!(
            net.transcript().messages[0].payload.as_deref(),
            Some("dead")
        );
        let line = net.transcript().to_jsonl().unwrap();
        assert!(line.contains("\"payload\":\"dead\""));
    }
}
