//! Runs the bundled two-queue stability scenario under backpressure and
//! softpressure and checks the queue-length bound and Little's law.
//!
//! Two entry links at 0.4 jobs/slot each share one unit-rate server, leaving
//! slack 0.2; the time-averaged total queue must stay below N^2 / (2 * 0.2)
//! = 10, and the mean delay of exited jobs must agree with the mean queue
//! through Little's law.

use softpressure::engine::{run, ControllerKind};
use softpressure::metrics::littles_law_check;
use softpressure::scenario::parse_scenario;

const SCENARIO: &str = include_str!("../../../scenarios/two_queue.txt");

fn main() {
    let base = parse_scenario(SCENARIO).unwrap();
    for kind in [ControllerKind::Backpressure, ControllerKind::Softpressure] {
        let mut scenario = base.clone();
        scenario.controller.kind = kind;
        let report = run(&scenario.build().unwrap());
        println!(
            "{}: mean queue {:.3} (bound {:.1}), verdict {:?}",
            kind.label(),
            report.avg_total_queue,
            report.stability.bound.unwrap(),
            report.stability.verdict,
        );
        match littles_law_check(&report) {
            Ok(error) => println!("    Little's-law relative error {:.5}", error),
            Err(e) => println!("    Little's-law check unavailable: {e}"),
        }
    }
}
