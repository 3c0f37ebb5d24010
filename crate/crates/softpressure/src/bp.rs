//! Backpressure: max-weight phase activation plus the signal-control variant
//! with minimum green and fixed-length green extensions.
//!
//! Phase pressure is the plain sum of the member queue lengths (no
//! downstream subtraction). At each decision point the controller either
//! extends the running phase or activates the next phase in the node's fixed
//! cyclic sequence, never jumping to the argmax phase directly.

use crate::Slot;

/// Per-node controller state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpState {
    pub current_phase: usize,
    /// Slots of green elapsed in the current phase.
    pub elapsed: u64,
    /// Next slot at which [`bp_signal_step`] must run.
    pub next_decision: Slot,
}

impl BpState {
    pub fn new(phase: usize) -> Self {
        BpState { current_phase: phase, elapsed: 0, next_decision: 0 }
    }
}

/// Outcome of one decision point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BpDecision {
    /// Keep the current phase green for `extension` more slots.
    Extend,
    /// Changeover, then green on the next phase in the cycle.
    Switch(usize),
}

/// Pressure of one phase: the queue mass it proposes to serve.
fn pressure(queue_lengths: &[u64], members: &[usize]) -> u64 {
    members.iter().map(|&i| queue_lengths[i]).sum()
}

/// Max-weight activation: the phase (as an index into `phases`) maximizing
/// the dot product of its activation vector with the queue vector. Ties
/// break toward the lowest phase index.
///
/// `phases[p]` lists the queue positions the phase serves.
pub fn select_activation(queue_lengths: &[u64], phases: &[Vec<usize>]) -> usize {
    assert!(!phases.is_empty(), "node must have at least one phase");
    let mut best = 0;
    let mut best_pressure = pressure(queue_lengths, &phases[0]);
    for (p, members) in phases.iter().enumerate().skip(1) {
        let w = pressure(queue_lengths, members);
        if w > best_pressure {
            best = p;
            best_pressure = w;
        }
    }
    best
}

/// One decision point of the signal variant: extend the current phase if it
/// (weakly) holds the maximum pressure, otherwise switch to the next phase
/// in the cycle. A tie, including all-empty queues, defaults to the current
/// phase to avoid changeover thrashing.
pub fn bp_signal_step(state: &BpState, queue_lengths: &[u64], phases: &[Vec<usize>]) -> BpDecision {
    let current = pressure(queue_lengths, &phases[state.current_phase]);
    let max = phases.iter().map(|m| pressure(queue_lengths, m)).max().unwrap_or(0);
    if current >= max || phases.len() == 1 {
        BpDecision::Extend
    } else {
        BpDecision::Switch((state.current_phase + 1) % phases.len())
    }
}
