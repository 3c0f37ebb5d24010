//! Runs a small controller-comparison matrix on a 2x2 grid and prints the
//! mean-delay table plus the pooled 90th-percentile delays at high demand.
//!
//! This is a fast, scaled-down version of the bundled 4x4 experiment
//! (`softpressure compare scenarios/grid4x4_pm.txt`).

use softpressure::compare::{compare, pm_rush_grid, DemandTier, ExperimentSpec};
use softpressure::engine::ControllerKind;

fn main() {
    let controllers = vec![
        ControllerKind::ScheduleDriven,
        ControllerKind::Backpressure,
        ControllerKind::Softpressure,
    ];
    let spec = ExperimentSpec {
        scenario: pm_rush_grid(2, 2, 2.0, 3600),
        controllers: controllers.clone(),
        tiers: DemandTier::standard(),
        seeds: vec![1, 2],
    };
    let output = compare(&spec).unwrap();

    print!("{}", output.delay_table_csv());
    println!();
    for kind in controllers {
        if let Some(p90) = output.pooled_percentile(kind, "high", 0.90) {
            println!("{} p90 delay at high demand: {p90}", kind.label());
        }
    }
}
