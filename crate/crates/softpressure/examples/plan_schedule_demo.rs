//! Solves one small scheduling instance and prints the resulting phase plan.
//!
//! Two phases compete: a platoon of 6 jobs already queued on phase 0 and two
//! smaller clusters arriving later on phase 1. The planner weighs the
//! changeover lost time against the waiting cost of each interleaving.

use softpressure::sdc::{enforce_max_green, plan_schedule, SchedulingInstance};
use softpressure::traffic::Cluster;

fn cluster(size: u32, arr: u64) -> Cluster {
    Cluster { size, arr, dep: arr + size as u64, jobs: Vec::new(), link: 0 }
}

fn main() {
    let instance = SchedulingInstance {
        sequences: vec![
            vec![cluster(6, 0), cluster(3, 25)],
            vec![cluster(2, 4), cluster(4, 12)],
        ],
        changeover: 4,
        min_green: 3,
        max_green: 20,
        saturation_rate: 1.0,
        current_phase: 0,
        elapsed_green: 2,
        weights: vec![1.0, 1.0],
    };

    let plan = plan_schedule(&instance, 1000);
    let (instance, plan) = enforce_max_green(instance, plan, 1000).unwrap();

    println!("total weighted delay: {}", plan.total_weighted_delay);
    println!("first decision: {:?}", plan.first_decision(&instance));
    println!();
    println!("{:>5} {:>5} {:>6} {:>8} {:>8}", "phase", "jobs", "start", "duration", "switch");
    for s in &plan.services {
        let cluster = &instance.sequences[s.phase][s.seq_index];
        println!(
            "{:>5} {:>5} {:>6} {:>8} {:>8}",
            s.phase, cluster.size, s.ast, s.duration, s.switched
        );
    }
    println!();
    println!("green intervals (slots from now):");
    for interval in plan.intervals(-(instance.elapsed_green as i64)) {
        println!(
            "  phase {} green from {} to {} ({} slots)",
            interval.phase,
            interval.start,
            interval.end,
            interval.length()
        );
    }
}
