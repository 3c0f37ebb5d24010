//! Emits the bundled grid scenario to stdout in canonical form.
//!
//! Usage: make_grid_scenario [rows cols scale slots]

use softpressure::compare::pm_rush_grid;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let rows = args.first().map_or(4, |a| a.parse().expect("rows"));
    let cols = args.get(1).map_or(4, |a| a.parse().expect("cols"));
    let scale = args.get(2).map_or(1.0, |a| a.parse().expect("scale"));
    let slots = args.get(3).map_or(7200, |a| a.parse().expect("slots"));
    print!("{}", pm_rush_grid(rows, cols, scale, slots).serialize());
}
