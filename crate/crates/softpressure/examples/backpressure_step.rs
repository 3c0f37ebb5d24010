//! Walks the backpressure signal rule through a few decision points.
//!
//! The node has two phases; the rule extends the current phase while it
//! holds the (weak) maximum pressure and otherwise moves to the next phase
//! in the fixed cycle after a changeover.

use softpressure::bp::{bp_signal_step, select_activation, BpDecision, BpState};

fn main() {
    let phases = vec![vec![0, 1], vec![2]];

    println!("max-weight activation (pure backpressure):");
    for queues in [[3, 1, 2], [0, 1, 4], [2, 2, 4]] {
        let chosen = select_activation(&queues, &phases);
        println!("  queues {queues:?} -> phase {chosen}");
    }

    println!();
    println!("signal variant (extend-or-cycle):");
    let mut state = BpState::new(0);
    let snapshots: [[u64; 3]; 4] = [[5, 1, 2], [2, 1, 6], [0, 0, 4], [3, 3, 1]];
    for queues in snapshots {
        let decision = bp_signal_step(&state, &queues, &phases);
        println!("  phase {} with queues {queues:?} -> {decision:?}", state.current_phase);
        if let BpDecision::Switch(next) = decision {
            state = BpState::new(next);
        }
    }
}
