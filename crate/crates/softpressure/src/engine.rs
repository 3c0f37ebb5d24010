//! Slotted-time simulation loop: arrivals, controller decisions, service,
//! changeover lost time, stochastic routing, queue dynamics.
//!
//! Within one slot the order is fixed: (1) inject new jobs at entry links,
//! (2) land in-flight jobs whose travel time elapsed, (3) run the configured
//! controller at every node, (4) serve active links unless in changeover,
//! (5) route each served job onward or out of the network, (6) sample
//! metrics. One run is sequential and fully determined by `(config, seed)`;
//! replications only share the read-only network.

use std::collections::{BTreeMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bp::{bp_signal_step, BpDecision, BpState};
use crate::metrics::{summarize, MetricsReport, PooledSummary};
use crate::sdc::{enforce_max_green, plan_schedule, split_cluster, Decision, SchedulingInstance};
use crate::sp::{sp_round, NeighborMessage, WeightVector};
use crate::topology::{LinkIdx, NetworkGraph, NodeIdx, ServiceProfile};
use crate::traffic::{
    build_cluster_sequence, merge_nonconflicting, sample_arrivals, DemandProfile, Job,
};
use crate::Slot;

/// Which policy drives the signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    ScheduleDriven,
    Backpressure,
    Softpressure,
}

impl ControllerKind {
    pub fn label(&self) -> &'static str {
        match self {
            ControllerKind::ScheduleDriven => "sdc",
            ControllerKind::Backpressure => "bp",
            ControllerKind::Softpressure => "sp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sdc" => Some(ControllerKind::ScheduleDriven),
            "bp" => Some(ControllerKind::Backpressure),
            "sp" => Some(ControllerKind::Softpressure),
            _ => None,
        }
    }
}

/// Signal timing and policy parameters, shared by all nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerParams {
    pub kind: ControllerKind,
    pub min_green: u64,
    pub max_green: u64,
    pub changeover: u64,
    /// Sensing/planning look-ahead in slots.
    pub horizon: u64,
    /// Cluster gap threshold in slots.
    pub gap_threshold: u64,
    /// Backpressure green extension in slots.
    pub extension: u64,
    /// Softmax temperature for softpressure weights.
    pub temperature: f64,
    /// Re-plan cadence for the scheduled controllers (1 = every slot).
    pub replan_every: u64,
}

impl ControllerParams {
    pub fn defaults(kind: ControllerKind) -> Self {
        ControllerParams {
            kind,
            min_green: 5,
            max_green: 55,
            changeover: 5,
            horizon: 120,
            gap_threshold: 3,
            extension: 2,
            temperature: 1.0,
            replan_every: 1,
        }
    }
}

/// A fully resolved simulation configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub graph: NetworkGraph,
    pub service: ServiceProfile,
    pub demand: DemandProfile,
    pub controller: ControllerParams,
    /// Horizon T in slots.
    pub slots: u64,
    pub seed: u64,
    /// Slots excluded from delay and queue statistics.
    pub burn_in: u64,
    /// Capacity slack of the demand, when the scenario was constructed with
    /// a known margin; feeds the stability bound.
    pub epsilon: Option<f64>,
    /// Record the per-slot event log (used by tests and traces).
    pub record_events: bool,
}

/// One logged simulation event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// Job injected onto an entry link.
    Inject,
    /// Job joined the queue at the link's downstream node.
    Land,
    /// Job received service and left the queue.
    Serve,
    /// Job left the network.
    Exit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub slot: Slot,
    pub kind: EventKind,
    pub link: LinkIdx,
    pub job: usize,
}

/// Raw per-run data handed to [`summarize`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawRunData {
    /// Queueing delay of each exited job, in slots (jobs entering during
    /// burn-in excluded).
    pub exited_delays: Vec<u64>,
    /// Network time (entry to exit) of the same jobs.
    pub exited_system_times: Vec<u64>,
    /// Total queue length at the end of each slot.
    pub per_slot_total_queue: Vec<u64>,
    /// Per-link sum of end-of-slot queue lengths.
    pub per_link_queue_sum: Vec<u64>,
    /// `L(Q(t)) = Σ_i Q_i(t)²` at the end of each slot.
    pub per_slot_lyapunov: Vec<u64>,
    /// Slots contributing to the sums above.
    pub sampled_slots: u64,
    pub injected: u64,
    pub exited: u64,
    /// Jobs still in the network when the run ended.
    pub censored: u64,
    /// Softpressure weight computations that used an out-of-date message.
    pub stale_messages: u64,
    pub events: Vec<Event>,
}

/// Per-node signal execution state shared by all controllers.
#[derive(Debug, Clone)]
struct SignalState {
    active: usize,
    green_started: Slot,
    /// Set while in changeover: `(end_slot, next_phase)`.
    changeover: Option<(Slot, usize)>,
}

struct SimState<'a> {
    config: &'a SimConfig,
    t: Slot,
    jobs: Vec<Job>,
    queues: Vec<VecDeque<usize>>,
    /// Per link: `(landing slot, job)` in landing order.
    in_flight: Vec<VecDeque<(Slot, usize)>>,
    /// Partial service progress per link, in work units.
    budgets: Vec<f64>,
    signals: Vec<Option<SignalState>>,
    bp: Vec<Option<BpState>>,
    /// Previous-round softpressure messages, indexed by sender.
    sp_board: BTreeMap<NodeIdx, NeighborMessage>,
    arrivals_rng: ChaCha8Rng,
    routing_rng: ChaCha8Rng,
    raw: RawRunData,
}

impl<'a> SimState<'a> {
    fn new(config: &'a SimConfig) -> Self {
        let graph = &config.graph;
        let links = graph.link_count();
        let mut signals = Vec::with_capacity(graph.node_count());
        let mut bp = Vec::with_capacity(graph.node_count());
        let mut sp_board = BTreeMap::new();
        for node in 0..graph.node_count() {
            if graph.phases(node).is_empty() {
                signals.push(None);
                bp.push(None);
                continue;
            }
            signals.push(Some(SignalState { active: 0, green_started: 0, changeover: None }));
            bp.push(match config.controller.kind {
                ControllerKind::Backpressure => Some(BpState::new(0)),
                _ => None,
            });
            if config.controller.kind == ControllerKind::Softpressure {
                // Round 0: uniform weights, empty queues.
                sp_board.insert(node, NeighborMessage {
                    sender: node,
                    slot: 0,
                    queues: graph.in_links(node).iter().map(|&l| (l, 0)).collect(),
                    weights: WeightVector::uniform(graph.in_links(node)),
                });
            }
        }

        let mut arrivals_rng = ChaCha8Rng::seed_from_u64(config.seed);
        arrivals_rng.set_stream(0);
        let mut routing_rng = ChaCha8Rng::seed_from_u64(config.seed);
        routing_rng.set_stream(1);

        SimState {
            config,
            t: 0,
            jobs: Vec::new(),
            queues: vec![VecDeque::new(); links],
            in_flight: vec![VecDeque::new(); links],
            budgets: vec![0.0; links],
            signals,
            bp,
            sp_board,
            arrivals_rng,
            routing_rng,
            raw: RawRunData::default(),
        }
    }

    fn log(&mut self, kind: EventKind, link: LinkIdx, job: usize) {
        if self.config.record_events {
            self.raw.events.push(Event { slot: self.t, kind, link, job });
        }
    }

    fn saturation_rate(&self, node: NodeIdx) -> f64 {
        let service = &self.config.service;
        let mix_work: f64 = self
            .config
            .demand
            .class_mix
            .iter()
            .enumerate()
            .map(|(k, p)| p * service.class_work.get(k).copied().unwrap_or(1) as f64)
            .sum();
        service.node_rate[node] / mix_work.max(f64::MIN_POSITIVE)
    }

    fn inject_arrivals(&mut self) {
        let arrivals = sample_arrivals(self.t, &self.config.demand, &mut self.arrivals_rng);
        for (link, class) in arrivals {
            let id = self.jobs.len();
            let travel = self.config.graph.link(link).travel as u64;
            self.jobs.push(Job {
                id,
                class,
                entered: self.t,
                node_arrival: self.t,
                link,
                queue_delay: 0,
                exited: None,
            });
            self.in_flight[link].push_back((self.t + travel, id));
            self.raw.injected += 1;
            self.log(EventKind::Inject, link, id);
        }
    }

    fn land_jobs(&mut self) {
        for link in 0..self.in_flight.len() {
            while let Some(&(landing, id)) = self.in_flight[link].front() {
                if landing > self.t {
                    break;
                }
                self.in_flight[link].pop_front();
                self.jobs[id].node_arrival = self.t;
                self.jobs[id].link = link;
                self.queues[link].push_back(id);
                self.log(EventKind::Land, link, id);
            }
        }
    }

    /// Begin a changeover toward `next`; with zero changeover the phase
    /// flips immediately.
    fn start_switch(&mut self, node: NodeIdx, next: usize) {
        let changeover = self.config.controller.changeover;
        let t = self.t;
        let signal = self.signals[node].as_mut().expect("controlled node");
        if changeover == 0 {
            signal.active = next;
            signal.green_started = t;
        } else {
            signal.changeover = Some((t + changeover, next));
        }
    }

    /// Finish changeovers that end at the current slot.
    fn settle_changeovers(&mut self) {
        let t = self.t;
        for signal in self.signals.iter_mut().flatten() {
            if let Some((end, next)) = signal.changeover {
                if end <= t {
                    signal.changeover = None;
                    signal.active = next;
                    signal.green_started = t;
                }
            }
        }
    }

    fn decide_backpressure(&mut self, node: NodeIdx) {
        let t = self.t;
        let params = &self.config.controller;
        let in_changeover = self.signals[node].as_ref().unwrap().changeover.is_some();
        if in_changeover {
            return;
        }
        let state = self.bp[node].as_ref().unwrap();
        if t < state.next_decision {
            return;
        }
        let graph = &self.config.graph;
        let in_links = graph.in_links(node);
        let queue_lengths: Vec<u64> = in_links.iter().map(|&l| self.queues[l].len() as u64).collect();
        let phases: Vec<Vec<usize>> = graph
            .phases(node)
            .iter()
            .map(|p| p.links.iter().map(|l| in_links.iter().position(|x| x == l).unwrap()).collect())
            .collect();
        let decision = bp_signal_step(state, &queue_lengths, &phases);
        match decision {
            BpDecision::Extend => {
                self.bp[node].as_mut().unwrap().next_decision = t + params.extension.max(1);
            }
            BpDecision::Switch(next) => {
                self.start_switch(node, next);
                let end = t + params.changeover;
                let state = self.bp[node].as_mut().unwrap();
                state.current_phase = next;
                state.next_decision = end + params.min_green;
            }
        }
    }

    /// Builds the merged per-phase cluster sequences a node senses.
    fn sense_instance(&self, node: NodeIdx, weights: Vec<f64>) -> SchedulingInstance {
        let graph = &self.config.graph;
        let params = &self.config.controller;
        let rate = self.saturation_rate(node);
        let signal = self.signals[node].as_ref().unwrap();
        // Sensing range: a detector sees at most the jobs clearable within
        // the planning horizon; queue mass beyond that is invisible to the
        // scheduler (the schedule covers the feasible prefix only).
        let sensing_cap = (params.horizon as f64 * rate).ceil().max(1.0) as usize;
        let sequences = graph
            .phases(node)
            .iter()
            .map(|phase| {
                let per_link: Vec<_> = phase
                    .links
                    .iter()
                    .map(|&link| {
                        let queued: Vec<usize> =
                            self.queues[link].iter().copied().take(sensing_cap).collect();
                        // Relative stop-line arrival of in-flight jobs.
                        let approaching: Vec<(Slot, usize)> = self.in_flight[link]
                            .iter()
                            .map(|&(landing, id)| (landing.saturating_sub(self.t), id))
                            .collect();
                        build_cluster_sequence(
                            link,
                            &queued,
                            &approaching,
                            0,
                            params.horizon,
                            params.gap_threshold,
                            rate,
                        )
                    })
                    .collect();
                merge_nonconflicting(&per_link)
            })
            .collect();
        let mut sequences: Vec<Vec<_>> = sequences;
        // Give the DP the option of running the current green up to max
        // green before a reset: split the active phase's head cluster at
        // the remaining green time, else any oversize head forces an
        // immediate changeover at every replan.
        let elapsed = self.t - signal.green_started;
        let room = params.max_green.saturating_sub(elapsed);
        if room > 0 {
            let seq = &mut sequences[signal.active];
            if let Some(head) = seq.first() {
                let fit = (room as f64 * rate).floor() as u32;
                if head.service_slots(rate) > room && fit >= 1 && fit < head.size {
                    let head = seq.remove(0);
                    let (a, b) = split_cluster(&head, fit, rate).expect("fit in 1..size");
                    seq.insert(0, b);
                    seq.insert(0, a);
                }
            }
        }
        SchedulingInstance {
            sequences,
            changeover: params.changeover,
            min_green: params.min_green,
            max_green: params.max_green,
            saturation_rate: rate,
            current_phase: signal.active,
            elapsed_green: self.t - signal.green_started,
            weights,
        }
    }

    fn decide_scheduled(&mut self, node: NodeIdx, weights: Vec<f64>) {
        let params = &self.config.controller;
        if self.signals[node].as_ref().unwrap().changeover.is_some() {
            return;
        }
        if params.replan_every > 1 && self.t % params.replan_every != 0 {
            return;
        }
        let instance = self.sense_instance(node, weights);
        if instance.total_jobs() == 0 {
            return;
        }
        let plan = plan_schedule(&instance, params.horizon);
        let (instance, plan) = match enforce_max_green(instance, plan, params.horizon) {
            Ok(pair) => pair,
            // A single job larger than max green cannot be split further;
            // fall back to the unenforced plan.
            Err(_) => {
                let inst = self.sense_instance(node, self.unit_weights(node));
                let plan = plan_schedule(&inst, params.horizon);
                (inst, plan)
            }
        };
        match plan.first_decision(&instance) {
            Decision::Stay => {}
            Decision::SwitchTo(next) => self.start_switch(node, next),
        }
    }

    fn unit_weights(&self, node: NodeIdx) -> Vec<f64> {
        vec![1.0; self.config.graph.phases(node).len()]
    }

    fn run_controllers(&mut self) {
        self.settle_changeovers();
        let graph = &self.config.graph;
        match self.config.controller.kind {
            ControllerKind::Backpressure => {
                for node in 0..graph.node_count() {
                    if self.signals[node].is_some() {
                        self.decide_backpressure(node);
                    }
                }
            }
            ControllerKind::ScheduleDriven => {
                for node in 0..graph.node_count() {
                    if self.signals[node].is_some() {
                        let w = self.unit_weights(node);
                        self.decide_scheduled(node, w);
                    }
                }
            }
            ControllerKind::Softpressure => {
                // All nodes read the previous round's messages, then the
                // board flips to this round's messages at once.
                let mut next_board = BTreeMap::new();
                let temperature = self.config.controller.temperature;
                for node in 0..graph.node_count() {
                    if self.signals[node].is_none() {
                        continue;
                    }
                    let local: Vec<(LinkIdx, u64)> = graph
                        .in_links(node)
                        .iter()
                        .map(|&l| (l, self.queues[l].len() as u64))
                        .collect();
                    let round = sp_round(graph, node, self.t, &local, &self.sp_board, temperature)
                        .expect("board seeded for every controlled node");
                    let stale_limit = self.config.controller.replan_every.max(1);
                    for neighbor in graph
                        .in_neighbors(node)
                        .chain(graph.out_neighbors(node))
                    {
                        if let Some(msg) = self.sp_board.get(&neighbor) {
                            if self.t > 0 && msg.slot + stale_limit < self.t {
                                self.raw.stale_messages += 1;
                            }
                        }
                    }
                    next_board.insert(node, round.message.clone());
                    self.decide_scheduled(node, round.phase_weights);
                }
                for (node, msg) in next_board {
                    self.sp_board.insert(node, msg);
                }
            }
        }
    }

    fn serve_and_route(&mut self) {
        let graph = &self.config.graph;
        let mut served: Vec<(LinkIdx, usize)> = Vec::new();
        for node in 0..graph.node_count() {
            let Some(signal) = &self.signals[node] else { continue };
            if signal.changeover.is_some() {
                // Lost time: no service, partial progress is discarded.
                for &link in graph.in_links(node) {
                    self.budgets[link] = 0.0;
                }
                continue;
            }
            let active: Vec<LinkIdx> = graph.phases(node)[signal.active].links.clone();
            for &link in graph.in_links(node) {
                if !active.contains(&link) {
                    self.budgets[link] = 0.0;
                    continue;
                }
                self.budgets[link] += self.config.service.node_rate[node];
                while let Some(&job_id) = self.queues[link].front() {
                    let work = self
                        .config
                        .service
                        .class_work
                        .get(self.jobs[job_id].class)
                        .copied()
                        .unwrap_or(1) as f64;
                    if self.budgets[link] + 1e-9 < work {
                        break;
                    }
                    self.budgets[link] -= work;
                    self.queues[link].pop_front();
                    let wait = self.t - self.jobs[job_id].node_arrival;
                    self.jobs[job_id].queue_delay += wait;
                    served.push((link, job_id));
                    self.log(EventKind::Serve, link, job_id);
                }
                if self.queues[link].is_empty() {
                    self.budgets[link] = 0.0;
                }
            }
        }

        // Route each served job onward (or out) in service order.
        for (link, job_id) in served {
            let row = &graph.routing().rows[link];
            let u: f64 = rand::Rng::gen(&mut self.routing_rng);
            let mut acc = 0.0;
            let mut next: Option<LinkIdx> = None;
            for &(out_link, fraction) in &row.turns {
                acc += fraction;
                if u < acc {
                    next = Some(out_link);
                    break;
                }
            }
            match next {
                Some(out_link) => {
                    let travel = graph.link(out_link).travel as u64;
                    self.jobs[job_id].link = out_link;
                    self.in_flight[out_link].push_back((self.t + travel, job_id));
                }
                None => {
                    self.jobs[job_id].exited = Some(self.t);
                    self.log(EventKind::Exit, link, job_id);
                }
            }
        }
    }

    fn sample_metrics(&mut self) {
        if self.t < self.config.burn_in {
            return;
        }
        if self.raw.per_link_queue_sum.is_empty() {
            self.raw.per_link_queue_sum = vec![0; self.queues.len()];
        }
        let mut total = 0u64;
        let mut lyapunov = 0u64;
        for (link, queue) in self.queues.iter().enumerate() {
            let len = queue.len() as u64;
            total += len;
            lyapunov += len * len;
            self.raw.per_link_queue_sum[link] += len;
        }
        self.raw.per_slot_total_queue.push(total);
        self.raw.per_slot_lyapunov.push(lyapunov);
        self.raw.sampled_slots += 1;
    }

    /// Advances the simulation by one slot.
    fn step(&mut self) {
        self.inject_arrivals();
        self.land_jobs();
        self.run_controllers();
        self.serve_and_route();
        self.sample_metrics();
        self.t += 1;
    }

    fn finish(mut self) -> RawRunData {
        let burn_in = self.config.burn_in;
        for job in &self.jobs {
            if job.entered < burn_in {
                continue;
            }
            match job.exited {
                Some(exit) => {
                    self.raw.exited += 1;
                    self.raw.exited_delays.push(job.queue_delay);
                    self.raw.exited_system_times.push(exit - job.entered);
                }
                None => self.raw.censored += 1,
            }
        }
        self.raw
    }
}

/// Runs one simulation to completion and returns its metrics report.
pub fn run(config: &SimConfig) -> MetricsReport {
    let raw = run_raw(config);
    summarize(&raw, config)
}

/// Runs one simulation and returns the raw per-run data.
pub fn run_raw(config: &SimConfig) -> RawRunData {
    let mut state = SimState::new(config);
    for _ in 0..config.slots {
        state.step();
    }
    state.finish()
}

/// Independent replications over a seed list, plus the pooled mean/std of
/// the per-run average delay.
pub fn run_replications(config: &SimConfig, seeds: &[u64]) -> (Vec<MetricsReport>, PooledSummary) {
    assert!(!seeds.is_empty(), "at least one seed required");
    let reports: Vec<MetricsReport> = seeds
        .iter()
        .map(|&seed| {
            let mut c = config.clone();
            c.seed = seed;
            run(&c)
        })
        .collect();
    let summary = PooledSummary::from_reports(&reports);
    (reports, summary)
}
