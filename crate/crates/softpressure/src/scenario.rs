//! The plain-text scenario format: parsing with line-numbered errors,
//! validation, and a canonical serializer whose output round-trips
//! byte-exactly.
//!
//! A scenario is a sectioned line format. Blank lines and `#` comments are
//! ignored; every other line is a whitespace-separated record inside the
//! most recent section header:
//!
//! ```text
//! [topology]
//! node <id> [rate]                    # rate in work units/slot, default 1
//! link <from> <to> [travel]           # travel in slots, default 10
//! [phases]
//! phase <node> <name> <from>...       # member links by upstream node
//! [routing]
//! turn <upstream> <via> <next> <fraction>
//! [demand]
//! entry <from> <to> <start> <end> <jobs_per_hour>
//! class_mix <p>...                    # optional, default "1"
//! class_work <w>...                   # optional, default "1"
//! [controller]
//! kind <sdc|bp|sp>                    # plus optional key/value overrides
//! [run]
//! slots <n>                           # plus seed, burn_in, epsilon
//! ```
//!
//! Unmatched routing mass is the exit probability of the in-link, so links
//! without turn records route every served job out of the network.

use std::fmt::Write as _;

use thiserror::Error;

use crate::engine::{ControllerKind, ControllerParams, SimConfig};
use crate::topology::{
    build_network, LinkSpec, NodeSpec, PhaseSpec, ServiceProfile, TopologyError, TopologySpec,
    TurnSpec,
};
use crate::traffic::{DemandError, DemandProfile, DemandSegment, EntryDemand};

/// Demand at one entry link, identified by node ids until the network is
/// built.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandEntrySpec {
    pub from: String,
    pub to: String,
    pub segments: Vec<DemandSegment>,
}

/// A parsed and validated scenario document with all defaults resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub topology: TopologySpec,
    pub demand: Vec<DemandEntrySpec>,
    pub class_mix: Vec<f64>,
    pub class_work: Vec<u32>,
    pub controller: ControllerParams,
    pub slots: u64,
    pub seed: u64,
    pub burn_in: u64,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: routing mass out of {upstream} via {via} reaches {total}")]
    RoutingMassExceeded { line: usize, upstream: String, via: String, total: f64 },
    #[error("missing [{0}] section")]
    MissingSection(&'static str),
    #[error("controller parameter out of range: {0}")]
    BadParameter(String),
    #[error("demand entry references unknown link {from}>{to}")]
    UnknownEntryLink { from: String, to: String },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Demand(#[from] DemandError),
}

fn err(line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse { line, message: message.into() }
}

fn parse_num<T: std::str::FromStr>(line: usize, token: &str, what: &str) -> Result<T, ScenarioError> {
    token.parse().map_err(|_| err(line, format!("invalid {what}: {token:?}")))
}

#[derive(PartialEq, Clone, Copy)]
enum Section {
    Topology,
    Phases,
    Routing,
    Demand,
    Controller,
    Run,
}

/// Parses and fully validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let mut topology = TopologySpec {
        nodes: Vec::new(),
        links: Vec::new(),
        phases: Vec::new(),
        turns: Vec::new(),
    };
    let mut demand: Vec<DemandEntrySpec> = Vec::new();
    let mut class_mix = vec![1.0];
    let mut class_work = vec![1u32];
    let mut kind: Option<ControllerKind> = None;
    let mut params = ControllerParams::defaults(ControllerKind::ScheduleDriven);
    let mut slots: Option<u64> = None;
    let mut seed = 0u64;
    let mut burn_in = 0u64;
    let mut epsilon: Option<f64> = None;

    let mut section: Option<Section> = None;
    // (upstream, via) -> (running turn mass) for per-line mass errors.
    let mut mass: Vec<(String, String, f64)> = Vec::new();

    for (i, raw_line) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = Some(match name {
                "topology" => Section::Topology,
                "phases" => Section::Phases,
                "routing" => Section::Routing,
                "demand" => Section::Demand,
                "controller" => Section::Controller,
                "run" => Section::Run,
                other => return Err(err(n, format!("unknown section [{other}]"))),
            });
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let Some(section) = section else {
            return Err(err(n, "record before the first section header"));
        };
        match (section, tokens[0]) {
            (Section::Topology, "node") => {
                if tokens.len() < 2 || tokens.len() > 3 {
                    return Err(err(n, "expected: node <id> [rate]"));
                }
                let rate = match tokens.get(2) {
                    Some(t) => parse_num(n, t, "rate")?,
                    None => 1.0,
                };
                topology.nodes.push(NodeSpec { id: tokens[1].to_string(), rate });
            }
            (Section::Topology, "link") => {
                if tokens.len() < 3 || tokens.len() > 4 {
                    return Err(err(n, "expected: link <from> <to> [travel]"));
                }
                let travel = match tokens.get(3) {
                    Some(t) => parse_num(n, t, "travel")?,
                    None => 10,
                };
                topology.links.push(LinkSpec {
                    from: tokens[1].to_string(),
                    to: tokens[2].to_string(),
                    travel,
                });
            }
            (Section::Phases, "phase") => {
                if tokens.len() < 4 {
                    return Err(err(n, "expected: phase <node> <name> <from>..."));
                }
                topology.phases.push(PhaseSpec {
                    node: tokens[1].to_string(),
                    name: tokens[2].to_string(),
                    from_nodes: tokens[3..].iter().map(|s| s.to_string()).collect(),
                });
            }
            (Section::Routing, "turn") => {
                if tokens.len() != 5 {
                    return Err(err(n, "expected: turn <upstream> <via> <next> <fraction>"));
                }
                let fraction: f64 = parse_num(n, tokens[4], "fraction")?;
                let (upstream, via) = (tokens[1].to_string(), tokens[2].to_string());
                let total = match mass.iter_mut().find(|(u, v, _)| *u == upstream && *v == via) {
                    Some(entry) => {
                        entry.2 += fraction;
                        entry.2
                    }
                    None => {
                        mass.push((upstream.clone(), via.clone(), fraction));
                        fraction
                    }
                };
                if total > 1.0 + 1e-9 {
                    return Err(ScenarioError::RoutingMassExceeded {
                        line: n,
                        upstream,
                        via,
                        total,
                    });
                }
                topology.turns.push(TurnSpec {
                    upstream,
                    via,
                    next: tokens[3].to_string(),
                    fraction,
                });
            }
            (Section::Demand, "entry") => {
                if tokens.len() != 6 {
                    return Err(err(n, "expected: entry <from> <to> <start> <end> <jobs_per_hour>"));
                }
                let segment = DemandSegment {
                    start: parse_num(n, tokens[3], "start slot")?,
                    end: parse_num(n, tokens[4], "end slot")?,
                    jobs_per_hour: parse_num(n, tokens[5], "rate")?,
                };
                let (from, to) = (tokens[1].to_string(), tokens[2].to_string());
                match demand.iter_mut().find(|e| e.from == from && e.to == to) {
                    Some(entry) => entry.segments.push(segment),
                    None => demand.push(DemandEntrySpec { from, to, segments: vec![segment] }),
                }
            }
            (Section::Demand, "class_mix") => {
                class_mix = tokens[1..]
                    .iter()
                    .map(|t| parse_num(n, t, "class probability"))
                    .collect::<Result<_, _>>()?;
            }
            (Section::Demand, "class_work") => {
                class_work = tokens[1..]
                    .iter()
                    .map(|t| parse_num(n, t, "class work"))
                    .collect::<Result<_, _>>()?;
            }
            (Section::Controller, key) => {
                if tokens.len() != 2 {
                    return Err(err(n, format!("expected: {key} <value>")));
                }
                let v = tokens[1];
                match key {
                    "kind" => {
                        kind = Some(ControllerKind::parse(v).ok_or_else(|| {
                            err(n, format!("unknown controller kind {v:?} (sdc, bp, sp)"))
                        })?)
                    }
                    "min_green" => params.min_green = parse_num(n, v, "min_green")?,
                    "max_green" => params.max_green = parse_num(n, v, "max_green")?,
                    "changeover" => params.changeover = parse_num(n, v, "changeover")?,
                    "horizon" => params.horizon = parse_num(n, v, "horizon")?,
                    "gap_threshold" => params.gap_threshold = parse_num(n, v, "gap_threshold")?,
                    "extension" => params.extension = parse_num(n, v, "extension")?,
                    "temperature" => params.temperature = parse_num(n, v, "temperature")?,
                    "replan_every" => params.replan_every = parse_num(n, v, "replan_every")?,
                    other => return Err(err(n, format!("unknown controller key {other:?}"))),
                }
            }
            (Section::Run, key) => {
                if tokens.len() != 2 {
                    return Err(err(n, format!("expected: {key} <value>")));
                }
                let v = tokens[1];
                match key {
                    "slots" => slots = Some(parse_num(n, v, "slots")?),
                    "seed" => seed = parse_num(n, v, "seed")?,
                    "burn_in" => burn_in = parse_num(n, v, "burn_in")?,
                    "epsilon" => epsilon = Some(parse_num(n, v, "epsilon")?),
                    other => return Err(err(n, format!("unknown run key {other:?}"))),
                }
            }
            (_, record) => return Err(err(n, format!("record {record:?} not valid here"))),
        }
    }

    params.kind = kind.ok_or(ScenarioError::MissingSection("controller"))?;
    let slots = slots.ok_or(ScenarioError::MissingSection("run"))?;

    let config = ScenarioConfig {
        topology,
        demand,
        class_mix,
        class_work,
        controller: params,
        slots,
        seed,
        burn_in,
        epsilon,
    };
    config.build()?;
    Ok(config)
}

impl ScenarioConfig {
    /// Resolves the document into a runnable [`SimConfig`], validating the
    /// topology, demand and controller parameters.
    pub fn build(&self) -> Result<SimConfig, ScenarioError> {
        let p = &self.controller;
        if p.min_green == 0 || p.min_green > p.max_green {
            return Err(ScenarioError::BadParameter(format!(
                "min_green {} must be in 1..=max_green {}",
                p.min_green, p.max_green
            )));
        }
        if p.horizon == 0 {
            return Err(ScenarioError::BadParameter("horizon must be at least 1".into()));
        }
        if p.replan_every == 0 {
            return Err(ScenarioError::BadParameter("replan_every must be at least 1".into()));
        }
        if !(p.temperature > 0.0) {
            return Err(ScenarioError::BadParameter(format!(
                "temperature {} must be positive",
                p.temperature
            )));
        }
        if self.class_work.iter().any(|&w| w == 0) {
            return Err(ScenarioError::BadParameter("class_work entries must be positive".into()));
        }
        if self.class_mix.len() != self.class_work.len() {
            return Err(ScenarioError::BadParameter(format!(
                "class_mix has {} classes but class_work has {}",
                self.class_mix.len(),
                self.class_work.len()
            )));
        }

        let graph = build_network(&self.topology)?;
        let mut node_rate = vec![1.0; graph.node_count()];
        for node in &self.topology.nodes {
            node_rate[graph.node_index(&node.id).expect("validated")] = node.rate;
        }
        let service = ServiceProfile { node_rate, class_work: self.class_work.clone() };

        let mut entries = Vec::with_capacity(self.demand.len());
        for entry in &self.demand {
            let link = graph
                .node_index(&entry.from)
                .zip(graph.node_index(&entry.to))
                .and_then(|(f, t)| graph.link_index(f, t))
                .ok_or_else(|| ScenarioError::UnknownEntryLink {
                    from: entry.from.clone(),
                    to: entry.to.clone(),
                })?;
            entries.push(EntryDemand { link, segments: entry.segments.clone() });
        }
        entries.sort_by_key(|e| e.link);
        let demand = DemandProfile { entries, class_mix: self.class_mix.clone() };
        demand.validate()?;

        Ok(SimConfig {
            graph,
            service,
            demand,
            controller: self.controller.clone(),
            slots: self.slots,
            seed: self.seed,
            burn_in: self.burn_in,
            epsilon: self.epsilon,
            record_events: false,
        })
    }

    /// Canonical text form: fixed section order, sorted records, every
    /// default written out. `parse(serialize(c))` equals `c` up to record
    /// order, and serializing again reproduces the bytes exactly.
    pub fn serialize(&self) -> String {
        let mut t = self.topology.clone();
        t.nodes.sort_by(|a, b| a.id.cmp(&b.id));
        t.links.sort_by(|a, b| (&a.from, &a.to).cmp(&(&b.from, &b.to)));
        t.phases.sort_by(|a, b| (&a.node, &a.name).cmp(&(&b.node, &b.name)));
        t.turns.sort_by(|a, b| (&a.upstream, &a.via, &a.next).cmp(&(&b.upstream, &b.via, &b.next)));
        let mut demand = self.demand.clone();
        demand.sort_by(|a, b| (&a.from, &a.to).cmp(&(&b.from, &b.to)));

        let mut out = String::new();
        out.push_str("[topology]\n");
        for n in &t.nodes {
            writeln!(out, "node {} {}", n.id, n.rate).unwrap();
        }
        for l in &t.links {
            writeln!(out, "link {} {} {}", l.from, l.to, l.travel).unwrap();
        }
        out.push_str("\n[phases]\n");
        for p in &t.phases {
            writeln!(out, "phase {} {} {}", p.node, p.name, p.from_nodes.join(" ")).unwrap();
        }
        out.push_str("\n[routing]\n");
        for turn in &t.turns {
            writeln!(out, "turn {} {} {} {}", turn.upstream, turn.via, turn.next, turn.fraction)
                .unwrap();
        }
        out.push_str("\n[demand]\n");
        for e in &demand {
            for s in &e.segments {
                writeln!(out, "entry {} {} {} {} {}", e.from, e.to, s.start, s.end, s.jobs_per_hour)
                    .unwrap();
            }
        }
        let join = |v: &[String]| v.join(" ");
        writeln!(out, "class_mix {}", join(&self.class_mix.iter().map(f64::to_string).collect::<Vec<_>>()))
            .unwrap();
        writeln!(out, "class_work {}", join(&self.class_work.iter().map(u32::to_string).collect::<Vec<_>>()))
            .unwrap();
        let p = &self.controller;
        out.push_str("\n[controller]\n");
        writeln!(out, "kind {}", p.kind.label()).unwrap();
        writeln!(out, "min_green {}", p.min_green).unwrap();
        writeln!(out, "max_green {}", p.max_green).unwrap();
        writeln!(out, "changeover {}", p.changeover).unwrap();
        writeln!(out, "horizon {}", p.horizon).unwrap();
        writeln!(out, "gap_threshold {}", p.gap_threshold).unwrap();
        writeln!(out, "extension {}", p.extension).unwrap();
        writeln!(out, "temperature {}", p.temperature).unwrap();
        writeln!(out, "replan_every {}", p.replan_every).unwrap();
        out.push_str("\n[run]\n");
        writeln!(out, "slots {}", self.slots).unwrap();
        writeln!(out, "seed {}", self.seed).unwrap();
        writeln!(out, "burn_in {}", self.burn_in).unwrap();
        if let Some(e) = self.epsilon {
            writeln!(out, "epsilon {e}").unwrap();
        }
        out
    }
}
