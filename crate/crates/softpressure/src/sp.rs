//! Softpressure: queue lengths become softmax weights, local or coordinated
//! through one-round-delayed neighbor messages, and the weights feed the
//! schedule-driven DP as per-phase delay weights.
//!
//! The coordinated form replaces each incoming link's queue with an
//! *effective* queue: the local length, plus upstream mass weighted by the
//! sender's weights and routing proportions (pressure pushing jobs toward
//! the link), minus the analogous downstream mass (repulsion away from
//! congested exits).

use std::collections::BTreeMap;

use thiserror::Error;

use crate::topology::{LinkIdx, NetworkGraph, NodeIdx, Phase};
use crate::Slot;

/// Per-incoming-link softmax weights of one node. Entries are strictly
/// positive and sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    /// `(in-link, weight)` pairs, sorted by link index.
    pub weights: Vec<(LinkIdx, f64)>,
}

impl WeightVector {
    pub fn get(&self, link: LinkIdx) -> Option<f64> {
        self.weights.iter().find(|(l, _)| *l == link).map(|(_, w)| *w)
    }

    /// Uniform weights over the given links (the round-0 assumption).
    pub fn uniform(links: &[LinkIdx]) -> Self {
        let n = links.len().max(1);
        WeightVector { weights: links.iter().map(|&l| (l, 1.0 / n as f64)).collect() }
    }
}

/// State one node shares with its neighbors each round.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborMessage {
    pub sender: NodeIdx,
    pub slot: Slot,
    /// Queue length per incoming link of the sender.
    pub queues: Vec<(LinkIdx, u64)>,
    /// The sender's weights from the round the message was emitted.
    pub weights: WeightVector,
}

impl NeighborMessage {
    pub fn queue(&self, link: LinkIdx) -> u64 {
        self.queues.iter().find(|(l, _)| *l == link).map(|(_, q)| *q).unwrap_or(0)
    }
}

/// Effective queue length per incoming link; may be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveQueues {
    pub values: Vec<(LinkIdx, f64)>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SpError {
    #[error("no message available from neighbor node {0}")]
    StaleNeighbor(NodeIdx),
}

/// Numerically safe softmax: max-subtraction, with exact zeros clamped to
/// the smallest positive double so no link's influence vanishes entirely.
fn softmax(values: &[f64], temperature: f64) -> Vec<f64> {
    debug_assert!(temperature > 0.0);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut exps: Vec<f64> = values
        .iter()
        .map(|v| {
            let e = ((v - max) / temperature).exp();
            if e == 0.0 {
                f64::MIN_POSITIVE
            } else {
                e
            }
        })
        .collect();
    let sum: f64 = exps.iter().sum();
    for e in &mut exps {
        *e /= sum;
    }
    exps
}

/// Softmax weights from a node's own queue lengths.
pub fn local_weights(queues: &[(LinkIdx, u64)], temperature: f64) -> WeightVector {
    let values: Vec<f64> = queues.iter().map(|(_, q)| *q as f64).collect();
    let soft = softmax(&values, temperature);
    WeightVector {
        weights: queues.iter().zip(soft).map(|(&(l, _), w)| (l, w)).collect(),
    }
}

/// Effective queue length of every incoming link of `node`, from local
/// queues and the previous round's neighbor messages.
pub fn effective_queues(
    graph: &NetworkGraph,
    node: NodeIdx,
    local: &[(LinkIdx, u64)],
    messages: &BTreeMap<NodeIdx, NeighborMessage>,
) -> Result<EffectiveQueues, SpError> {
    let routing = graph.routing();
    let message_for = |n: NodeIdx| -> Result<Option<&NeighborMessage>, SpError> {
        if graph.in_links(n).is_empty() {
            // Source-only neighbor: no queues, nothing to report.
            Ok(None)
        } else {
            messages.get(&n).map(Some).ok_or(SpError::StaleNeighbor(n))
        }
    };

    let mut values = Vec::with_capacity(local.len());
    for &(in_link, q) in local {
        let upstream_node = graph.link(in_link).from;
        let mut effective = q as f64;

        // Pressure pushing jobs toward this link: the upstream node's own
        // weighted queues, scaled by how much of them routes over the link.
        if let Some(msg) = message_for(upstream_node)? {
            for &feeder in graph.in_links(upstream_node) {
                let eta = routing.fraction(feeder, in_link);
                if eta > 0.0 {
                    let w = msg.weights.get(feeder).unwrap_or(0.0);
                    effective += msg.queue(feeder) as f64 * w * eta;
                }
            }
        }

        // Repulsion from congested downstream links: this node's outgoing
        // queues, weighted by the receiving node and by the share of this
        // link's jobs that continue onto them.
        for &out_link in graph.out_links(node) {
            let eta = routing.fraction(in_link, out_link);
            if eta > 0.0 {
                let downstream_node = graph.link(out_link).to;
                if let Some(msg) = message_for(downstream_node)? {
                    let w = msg.weights.get(out_link).unwrap_or(0.0);
                    effective -= msg.queue(out_link) as f64 * w * eta;
                }
            }
        }
        values.push((in_link, effective));
    }
    Ok(EffectiveQueues { values })
}

/// Softmax weights over effective queue lengths (negative values allowed).
pub fn coordinated_weights(effective: &EffectiveQueues, temperature: f64) -> WeightVector {
    let values: Vec<f64> = effective.values.iter().map(|(_, v)| *v).collect();
    let soft = softmax(&values, temperature);
    WeightVector {
        weights: effective.values.iter().zip(soft).map(|(&(l, _), w)| (l, w)).collect(),
    }
}

/// Per-phase weight: sum of member link weights, renormalized over phases.
pub fn phase_weights(weights: &WeightVector, phases: &[Phase]) -> Vec<f64> {
    let sums: Vec<f64> = phases
        .iter()
        .map(|p| p.links.iter().filter_map(|&l| weights.get(l)).sum::<f64>())
        .collect();
    let total: f64 = sums.iter().sum();
    if total <= 0.0 {
        return vec![1.0 / phases.len().max(1) as f64; phases.len()];
    }
    sums.into_iter().map(|s| (s / total).max(f64::MIN_POSITIVE)).collect()
}

/// Result of one decentralized weight round at a node.
#[derive(Debug, Clone, PartialEq)]
pub struct SpRound {
    pub effective: EffectiveQueues,
    pub weights: WeightVector,
    /// Per-phase DP weights derived from `weights`.
    pub phase_weights: Vec<f64>,
    /// Message to publish for the neighbors' next round.
    pub message: NeighborMessage,
}

/// One weight-exchange round: effective queues from last round's messages,
/// coordinated softmax, phase aggregation, and the node's outgoing message.
pub fn sp_round(
    graph: &NetworkGraph,
    node: NodeIdx,
    slot: Slot,
    local: &[(LinkIdx, u64)],
    messages: &BTreeMap<NodeIdx, NeighborMessage>,
    temperature: f64,
) -> Result<SpRound, SpError> {
    let effective = effective_queues(graph, node, local, messages)?;
    let weights = coordinated_weights(&effective, temperature);
    let pw = phase_weights(&weights, graph.phases(node));
    let message = NeighborMessage {
        sender: node,
        slot,
        queues: local.to_vec(),
        weights: weights.clone(),
    };
    Ok(SpRound { effective, weights, phase_weights: pw, message })
}
