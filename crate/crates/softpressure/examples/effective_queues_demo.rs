//! Computes coordinated softpressure weights on the four-node ring.
//!
//! Node c hears from its upstream neighbor a (whose own feeder d->a holds 6
//! jobs, half of which route onward through a->c) and from its downstream
//! neighbor d (whose link c->d holds 2 jobs). The effective queue of a->c is
//! the local queue plus the upstream push minus the downstream repulsion.

use std::collections::BTreeMap;

use softpressure::sp::{sp_round, NeighborMessage, WeightVector};
use softpressure::topology::{build_network, four_node_example};

fn main() {
    let graph = build_network(&four_node_example()).unwrap();
    let a = graph.node_index("a").unwrap();
    let b = graph.node_index("b").unwrap();
    let c = graph.node_index("c").unwrap();
    let d = graph.node_index("d").unwrap();
    let ac = graph.link_index(a, c).unwrap();
    let bc = graph.link_index(b, c).unwrap();
    let da = graph.link_index(d, a).unwrap();
    let cd = graph.link_index(c, d).unwrap();

    let mut messages = BTreeMap::new();
    messages.insert(a, NeighborMessage {
        sender: a,
        slot: 0,
        queues: vec![(da, 6)],
        weights: WeightVector { weights: vec![(da, 1.0)] },
    });
    messages.insert(d, NeighborMessage {
        sender: d,
        slot: 0,
        queues: vec![(cd, 2)],
        weights: WeightVector { weights: vec![(cd, 1.0)] },
    });

    let local = vec![(ac, 4u64), (bc, 0u64)];
    let round = sp_round(&graph, c, 1, &local, &messages, 1.0).unwrap();

    println!("local queues at c:      a->c = 4, b->c = 0");
    for (link, value) in &round.effective.values {
        println!("effective queue {:<8} = {value}", graph.link_label(*link));
    }
    for (link, weight) in &round.weights.weights {
        println!("softmax weight  {:<8} = {weight:.6}", graph.link_label(*link));
    }
    println!("phase weights fed to the scheduler: {:?}", round.phase_weights);
}
