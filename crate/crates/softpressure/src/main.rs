use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use softpressure::compare::{compare, CompareOutput, DemandTier, ExperimentSpec};
use softpressure::engine::{run_raw, ControllerKind, EventKind};
use softpressure::metrics::summarize;
use softpressure::scenario::{parse_scenario, ScenarioConfig};

#[derive(Parser)]
#[command(name = "softpressure", version, about = "Queueing-network signal control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario, optionally over several seeds.
    Run {
        scenario: PathBuf,
        /// Seeds to run; defaults to the scenario's seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Directory for summary, CDF and per-link CSV files.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario's burn-in slot count.
        #[arg(long)]
        burn_in: Option<u64>,
        /// Also write the per-slot event log (slot, kind, link, job).
        #[arg(long)]
        trace: bool,
    },
    /// Run the controller x demand-tier comparison matrix.
    Compare {
        scenario: PathBuf,
        /// Controllers to compare.
        #[arg(long, value_delimiter = ',', default_value = "sdc,bp,sp")]
        controllers: Vec<String>,
        /// Demand tiers, either names (high, medium, low) or name=scale.
        #[arg(long, value_delimiter = ',')]
        tiers: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        burn_in: Option<u64>,
        /// Queue-table filter: only links averaging above this many jobs.
        #[arg(long, default_value_t = 2.0)]
        queue_threshold: f64,
    },
    /// Parse and validate a scenario file, printing its canonical form.
    Validate { scenario: PathBuf },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn load(path: &Path) -> Result<ScenarioConfig, String> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse_scenario(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn dispatch(command: Command) -> Result<(), String> {
    match command {
        Command::Validate { scenario } => {
            let config = load(&scenario)?;
            print!("{}", config.serialize());
            Ok(())
        }
        Command::Run { scenario, seeds, out, burn_in, trace } => {
            let mut config = load(&scenario)?;
            if let Some(b) = burn_in {
                config.burn_in = b;
            }
            let seeds = if seeds.is_empty() { vec![config.seed] } else { seeds };
            for seed in seeds {
                config.seed = seed;
                let mut sim = config.build().map_err(|e| e.to_string())?;
                sim.record_events = trace;
                let raw = run_raw(&sim);
                let report = summarize(&raw, &sim);
                print!("{}", report.to_key_values());
                println!();
                if let Some(dir) = &out {
                    let tag = format!("{}_{seed}", report.controller);
                    write_file(dir, &format!("summary_{tag}.txt"), &report.to_key_values())?;
                    write_file(dir, &format!("cdf_{tag}.csv"), &report.cdf_csv())?;
                    write_file(dir, &format!("links_{tag}.csv"), &report.per_link_csv(&sim.graph))?;
                    if trace {
                        let mut log = String::from("slot,event,link,job\n");
                        for e in &raw.events {
                            let kind = match e.kind {
                                EventKind::Inject => "inject",
                                EventKind::Land => "land",
                                EventKind::Serve => "serve",
                                EventKind::Exit => "exit",
                            };
                            log.push_str(&format!(
                                "{},{kind},{},{}\n",
                                e.slot,
                                sim.graph.link_label(e.link),
                                e.job
                            ));
                        }
                        write_file(dir, &format!("events_{tag}.csv"), &log)?;
                    }
                }
            }
            Ok(())
        }
        Command::Compare {
            scenario,
            controllers,
            tiers,
            seeds,
            out,
            burn_in,
            queue_threshold,
        } => {
            let mut config = load(&scenario)?;
            if let Some(b) = burn_in {
                config.burn_in = b;
            }
            let controllers = controllers
                .iter()
                .map(|name| {
                    ControllerKind::parse(name)
                        .ok_or_else(|| format!("unknown controller {name:?} (sdc, bp, sp)"))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let tiers = parse_tiers(&tiers)?;
            let spec = ExperimentSpec { scenario: config, controllers, tiers, seeds };
            let output = compare(&spec).map_err(|e| e.to_string())?;
            print!("{}", output.delay_table_csv());
            if let Some(dir) = &out {
                write_outputs(dir, &output, queue_threshold)?;
            }
            Ok(())
        }
    }
}

fn parse_tiers(args: &[String]) -> Result<Vec<DemandTier>, String> {
    if args.is_empty() {
        return Ok(DemandTier::standard());
    }
    let standard = DemandTier::standard();
    args.iter()
        .map(|arg| match arg.split_once('=') {
            Some((name, scale)) => {
                let scale: f64 =
                    scale.parse().map_err(|_| format!("invalid tier scale {scale:?}"))?;
                Ok(DemandTier::new(name, scale))
            }
            None => standard
                .iter()
                .find(|t| t.name == *arg)
                .cloned()
                .ok_or_else(|| format!("unknown tier {arg:?} (high, medium, low or name=scale)")),
        })
        .collect()
}

fn write_outputs(dir: &Path, output: &CompareOutput, threshold: f64) -> Result<(), String> {
    write_file(dir, "delay_table.csv", &output.delay_table_csv())?;
    let mut tiers: Vec<String> = output.cells.iter().map(|c| c.tier.clone()).collect();
    tiers.sort();
    tiers.dedup();
    for tier in &tiers {
        write_file(
            dir,
            &format!("queue_table_{tier}.csv"),
            &output.queue_table_csv(tier, threshold),
        )?;
    }
    for cell in &output.cells {
        write_file(
            dir,
            &format!("cdf_{}_{}.csv", cell.controller.label(), cell.tier),
            &output.pooled_cdf_csv(cell.controller, &cell.tier),
        )?;
    }
    for record in &output.records {
        write_file(
            dir,
            &format!("run_{}_{}_{}.txt", record.controller.label(), record.tier, record.seed),
            &record.report.to_key_values(),
        )?;
    }
    Ok(())
}
