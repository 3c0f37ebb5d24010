//! Controller comparison experiments: a (controller x demand tier) matrix of
//! seeded replications, with delay tables, per-link queue tables and delay
//! CDFs as deterministic CSV strings.

use thiserror::Error;

use crate::engine::{run, ControllerKind};
use crate::metrics::{MetricsReport, PooledSummary};
use crate::scenario::{DemandEntrySpec, ScenarioConfig, ScenarioError};
use crate::topology::{entry_links, grid_network};
use crate::traffic::DemandSegment;

/// A named demand multiplier applied to every entry rate of the base
/// scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandTier {
    pub name: String,
    pub scale: f64,
}

impl DemandTier {
    pub fn new(name: &str, scale: f64) -> Self {
        DemandTier { name: name.to_string(), scale }
    }

    /// The three-tier layout used by the main comparison.
    pub fn standard() -> Vec<DemandTier> {
        vec![
            DemandTier::new("high", 1.0),
            DemandTier::new("medium", 0.75),
            DemandTier::new("low", 0.5),
        ]
    }
}

/// One comparison experiment: which controllers, which demand tiers, which
/// seeds, on which base scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub scenario: ScenarioConfig,
    pub controllers: Vec<ControllerKind>,
    pub tiers: Vec<DemandTier>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("experiment needs at least one controller")]
    NoControllers,
    #[error("experiment needs at least one seed")]
    NoSeeds,
    #[error("experiment needs at least one demand tier")]
    NoTiers,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// One completed run within the matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub controller: ControllerKind,
    pub tier: String,
    pub seed: u64,
    pub report: MetricsReport,
}

/// One cell of the delay table: pooled over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStat {
    pub controller: ControllerKind,
    pub tier: String,
    pub summary: PooledSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOutput {
    /// All runs, sorted by (controller, tier, seed).
    pub records: Vec<RunRecord>,
    /// Pooled cells, sorted by (controller, tier).
    pub cells: Vec<CellStat>,
    /// Link labels of the scenario network, by link index.
    pub link_labels: Vec<String>,
}

fn scaled(demand: &[DemandEntrySpec], factor: f64) -> Vec<DemandEntrySpec> {
    demand
        .iter()
        .map(|e| DemandEntrySpec {
            from: e.from.clone(),
            to: e.to.clone(),
            segments: e
                .segments
                .iter()
                .map(|s| DemandSegment {
                    start: s.start,
                    end: s.end,
                    jobs_per_hour: s.jobs_per_hour * factor,
                })
                .collect(),
        })
        .collect()
}

/// Runs the full matrix. Output assembly is sorted by controller label,
/// tier name and seed, so re-running the same spec reproduces every table
/// byte-identically.
pub fn compare(spec: &ExperimentSpec) -> Result<CompareOutput, CompareError> {
    if spec.controllers.is_empty() {
        return Err(CompareError::NoControllers);
    }
    if spec.seeds.is_empty() {
        return Err(CompareError::NoSeeds);
    }
    if spec.tiers.is_empty() {
        return Err(CompareError::NoTiers);
    }

    let mut controllers = spec.controllers.clone();
    controllers.sort_by_key(|c| c.label());
    controllers.dedup();
    let mut tiers = spec.tiers.clone();
    tiers.sort_by(|a, b| a.name.cmp(&b.name));
    let mut seeds = spec.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();

    let mut records = Vec::new();
    let mut cells = Vec::new();
    let mut link_labels = Vec::new();
    for controller in &controllers {
        for tier in &tiers {
            let mut scenario = spec.scenario.clone();
            scenario.controller.kind = *controller;
            scenario.demand = scaled(&scenario.demand, tier.scale);
            let mut reports = Vec::with_capacity(seeds.len());
            for &seed in &seeds {
                scenario.seed = seed;
                let config = scenario.build()?;
                if link_labels.is_empty() {
                    link_labels = (0..config.graph.link_count())
                        .map(|l| config.graph.link_label(l))
                        .collect();
                }
                let report = run(&config);
                reports.push(report.clone());
                records.push(RunRecord {
                    controller: *controller,
                    tier: tier.name.clone(),
                    seed,
                    report,
                });
            }
            cells.push(CellStat {
                controller: *controller,
                tier: tier.name.clone(),
                summary: PooledSummary::from_reports(&reports),
            });
        }
    }
    Ok(CompareOutput { records, cells, link_labels })
}

impl CompareOutput {
    pub fn cell(&self, controller: ControllerKind, tier: &str) -> Option<&CellStat> {
        self.cells.iter().find(|c| c.controller == controller && c.tier == tier)
    }

    fn tier_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.cells.iter().map(|c| c.tier.as_str()).collect();
        names.dedup();
        names
    }

    fn controllers(&self) -> Vec<ControllerKind> {
        let mut out: Vec<ControllerKind> = self.cells.iter().map(|c| c.controller).collect();
        out.dedup();
        out
    }

    /// Mean/std delay per (controller, tier), controllers as rows.
    pub fn delay_table_csv(&self) -> String {
        let tiers = {
            let mut t = self.tier_names();
            t.sort_unstable();
            t.dedup();
            t
        };
        let mut out = String::from("controller");
        for tier in &tiers {
            out.push_str(&format!(",{tier}_mean,{tier}_std"));
        }
        out.push('\n');
        for controller in self.controllers() {
            out.push_str(controller.label());
            for tier in &tiers {
                let cell = self.cell(controller, tier).expect("full matrix");
                out.push_str(&format!(
                    ",{:.6},{:.6}",
                    cell.summary.mean_delay, cell.summary.std_delay
                ));
            }
            out.push('\n');
        }
        out
    }

    /// Seed-averaged queue length of one link under one controller.
    pub fn avg_queue(&self, controller: ControllerKind, tier: &str, link: usize) -> f64 {
        let runs: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.controller == controller && r.tier == tier)
            .map(|r| r.report.per_link_avg_queue[link])
            .collect();
        runs.iter().sum::<f64>() / runs.len().max(1) as f64
    }

    /// Per-link queue table at one tier, restricted to links whose queue
    /// under any compared controller averages above `threshold` jobs.
    pub fn queue_table_csv(&self, tier: &str, threshold: f64) -> String {
        let controllers = self.controllers();
        let mut out = String::from("link");
        for c in &controllers {
            out.push_str(&format!(",{}", c.label()));
        }
        out.push('\n');
        for (link, label) in self.link_labels.iter().enumerate() {
            let row: Vec<f64> =
                controllers.iter().map(|&c| self.avg_queue(c, tier, link)).collect();
            if row.iter().any(|&q| q > threshold) {
                out.push_str(label);
                for q in row {
                    out.push_str(&format!(",{q:.6}"));
                }
                out.push('\n');
            }
        }
        out
    }

    /// Exited-job delays pooled over all seeds of one cell, ascending.
    pub fn pooled_delays(&self, controller: ControllerKind, tier: &str) -> Vec<u64> {
        let mut delays: Vec<u64> = self
            .records
            .iter()
            .filter(|r| r.controller == controller && r.tier == tier)
            .flat_map(|r| r.report.delays_sorted.iter().copied())
            .collect();
        delays.sort_unstable();
        delays
    }

    /// Nearest-rank quantile of the pooled delays.
    pub fn pooled_percentile(&self, controller: ControllerKind, tier: &str, q: f64) -> Option<f64> {
        let delays = self.pooled_delays(controller, tier);
        if delays.is_empty() {
            return None;
        }
        let rank = (q * delays.len() as f64).ceil() as usize;
        Some(delays[rank.clamp(1, delays.len()) - 1] as f64)
    }

    /// Pooled delay CDF of one cell as a two-column CSV.
    pub fn pooled_cdf_csv(&self, controller: ControllerKind, tier: &str) -> String {
        let delays = self.pooled_delays(controller, tier);
        let n = delays.len();
        let mut out = String::from("delay,fraction\n");
        let mut i = 0;
        while i < n {
            let d = delays[i];
            let mut j = i;
            while j < n && delays[j] == d {
                j += 1;
            }
            out.push_str(&format!("{d},{:.6}\n", j as f64 / n as f64));
            i = j;
        }
        out
    }
}

/// Rush-hour traffic is directional: cross-street entries carry this
/// fraction of the main-corridor volume.
const CROSS_STREET_FRACTION: f64 = 0.25;

/// The bundled main-experiment scenario: an `rows x cols` two-way grid with
/// boundary sources and a three-step rush ramp at every entry, scaled by
/// `scale` toward saturation.
///
/// The ramp holds each of 236, 354 and 528 jobs/hour for a third of the
/// run on the east-west corridors; north-south entries carry a quarter of
/// that (an evening peak is directional).
pub fn pm_rush_grid(rows: usize, cols: usize, scale: f64, slots: u64) -> ScenarioConfig {
    let topology = grid_network(rows, cols, true);
    let third = slots / 3;
    let ramp = [236.0, 354.0, 528.0];
    let demand = entry_links(&topology)
        .into_iter()
        .map(|(from, to)| {
            let side = if from.starts_with("src_n") || from.starts_with("src_s") {
                CROSS_STREET_FRACTION
            } else {
                1.0
            };
            DemandEntrySpec {
                from,
                to,
                segments: ramp
                    .iter()
                    .enumerate()
                    .map(|(i, rate)| DemandSegment {
                        start: i as u64 * third,
                        end: if i == 2 { slots } else { (i as u64 + 1) * third },
                        jobs_per_hour: rate * scale * side,
                    })
                    .collect(),
            }
        })
        .collect();
    ScenarioConfig {
        topology,
        demand,
        class_mix: vec![1.0],
        class_work: vec![1],
        controller: {
            // A 40-slot lookahead covers roughly two cycles on this grid and a
            // moderate temperature keeps the coordination weights from
            // saturating; both were tuned on the 4x4 rush scenario.
            let mut params =
                crate::engine::ControllerParams::defaults(ControllerKind::ScheduleDriven);
            params.horizon = 40;
            params.temperature = 20.0;
            params
        },
        slots,
        seed: 0,
        burn_in: 0,
        epsilon: None,
    }
}
