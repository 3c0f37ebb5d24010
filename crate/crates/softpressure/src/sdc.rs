//! Schedule-driven control: forward-recursion dynamic programming over
//! phase-indexed cluster sequences, minimizing (optionally weighted)
//! cumulative delay.
//!
//! The DP interleaves the per-phase cluster sequences while preserving each
//! sequence's order. A phase change inserts one changeover of lost time; a
//! phase may only be left after `min_green` slots of green, and a contiguous
//! green interval may not exceed `max_green` (long clusters are made feasible
//! by [`enforce_max_green`], which splits the first offending cluster and
//! re-solves).
//!
//! All times are in slots relative to the planning instant (slot 0 = now).

use std::collections::BTreeMap;

use thiserror::Error;

use crate::traffic::Cluster;

/// One scheduling problem at a node: the merged virtual-queue cluster
/// sequence per phase plus the signal timing constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulingInstance {
    /// Ordered cluster sequence per phase, sorted by `arr`.
    pub sequences: Vec<Vec<Cluster>>,
    /// Yellow/all-red lost time inserted at every phase change, in slots.
    pub changeover: u64,
    pub min_green: u64,
    pub max_green: u64,
    /// Saturation service rate in jobs per slot.
    pub saturation_rate: f64,
    /// Phase currently holding green.
    pub current_phase: usize,
    /// Slots the current phase has already been green.
    pub elapsed_green: u64,
    /// Per-phase delay weight; all 1 for unweighted schedule-driven control.
    pub weights: Vec<f64>,
}

impl SchedulingInstance {
    /// Unweighted instance with uniform weights.
    pub fn unweighted(
        sequences: Vec<Vec<Cluster>>,
        changeover: u64,
        min_green: u64,
        max_green: u64,
        saturation_rate: f64,
        current_phase: usize,
    ) -> Self {
        let weights = vec![1.0; sequences.len()];
        SchedulingInstance {
            sequences,
            changeover,
            min_green,
            max_green,
            saturation_rate,
            current_phase,
            elapsed_green: 0,
            weights,
        }
    }

    pub fn total_jobs(&self) -> u64 {
        self.sequences.iter().flatten().map(|c| c.size as u64).sum()
    }

    fn service_slots(&self, cluster: &Cluster) -> i64 {
        (cluster.size as f64 / self.saturation_rate).ceil() as i64
    }
}

/// One served cluster in a schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledService {
    pub phase: usize,
    /// Position of the cluster within its phase's sequence.
    pub seq_index: usize,
    /// Actual start time of service, slots from now.
    pub ast: i64,
    pub duration: i64,
    /// True when a changeover precedes this service (phase change or
    /// max-green reset).
    pub switched: bool,
}

/// A contiguous green interval of one phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenInterval {
    pub phase: usize,
    pub start: i64,
    pub end: i64,
    /// Index range of the member services in `PhaseSchedule::services`.
    pub first_service: usize,
    pub last_service: usize,
}

impl GreenInterval {
    pub fn length(&self) -> i64 {
        self.end - self.start
    }
}

/// An ordered phase plan with per-cluster actual start times.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSchedule {
    pub services: Vec<ScheduledService>,
    pub total_weighted_delay: f64,
    /// Set when the schedule does not complete within the planning horizon;
    /// the prefix within the horizon is still valid.
    pub horizon_exceeded: bool,
}

impl PhaseSchedule {
    pub fn empty() -> Self {
        PhaseSchedule { services: Vec::new(), total_weighted_delay: 0.0, horizon_exceeded: false }
    }

    /// Green intervals implied by the service list. The first interval starts
    /// at `green_origin` (the running green's start, negative when the phase
    /// was already green) unless the schedule begins with a switch.
    pub fn intervals(&self, green_origin: i64) -> Vec<GreenInterval> {
        let mut out: Vec<GreenInterval> = Vec::new();
        for (idx, s) in self.services.iter().enumerate() {
            match out.last_mut() {
                Some(iv) if !s.switched => {
                    iv.end = s.ast + s.duration;
                    iv.last_service = idx;
                }
                _ => out.push(GreenInterval {
                    phase: s.phase,
                    start: if s.switched { s.ast } else { green_origin },
                    end: s.ast + s.duration,
                    first_service: idx,
                    last_service: idx,
                }),
            }
        }
        out
    }

    /// The action the schedule implies for the current slot.
    pub fn first_decision(&self, instance: &SchedulingInstance) -> Decision {
        match self.services.first() {
            None => Decision::Stay,
            Some(s) if !s.switched => Decision::Stay,
            Some(s) => {
                // The plan's switch happens once min green is satisfied; only
                // commit it when that is now.
                let earliest_switch = (instance.min_green as i64
                    - instance.elapsed_green as i64)
                    .max(0);
                if earliest_switch == 0 {
                    Decision::SwitchTo(s.phase)
                } else {
                    Decision::Stay
                }
            }
        }
    }
}

/// First decision of a rolling-horizon schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    /// Keep the current phase green this slot.
    Stay,
    /// Begin a changeover toward the given phase now.
    SwitchTo(usize),
}

#[derive(Debug, Error, PartialEq)]
pub enum SdcError {
    #[error("actual start {ast} precedes cluster arrival {arr}")]
    NegativeWait { ast: i64, arr: i64 },
    #[error("split point {at} outside 1..{size}")]
    InvalidSplit { at: u32, size: u32 },
    #[error("max-green enforcement did not terminate after {0} splits")]
    NonTermination(u64),
}

/// Weighted delay contributed by serving `cluster` at `ast` (Eq. form
/// `|c| * (ast - arr) * w`).
pub fn cluster_delay(cluster: &Cluster, ast: i64, weight: f64) -> Result<f64, SdcError> {
    let arr = cluster.arr as i64;
    if ast < arr {
        return Err(SdcError::NegativeWait { ast, arr });
    }
    Ok(cluster.size as f64 * (ast - arr) as f64 * weight)
}

/// DP label: cost and timing of one non-dominated partial schedule.
#[derive(Debug, Clone)]
struct Label {
    delay: f64,
    finish: i64,
    /// Start of the running green interval (ast of its first service);
    /// negative for the initial, already-running green.
    green_start: i64,
    parent: Option<(usize, StateKey, usize)>,
    via: Option<ScheduledService>,
}

type StateKey = (u64, usize);

fn counts_key(counts: &[usize], radices: &[usize]) -> u64 {
    let mut key = 0u64;
    for (c, r) in counts.iter().zip(radices) {
        key = key * (*r as u64 + 1) + *c as u64;
    }
    key
}

/// Returns a minimum-weighted-delay schedule over all interleavings that
/// preserve per-phase cluster order. Ties in delay break by earlier finish,
/// then lower phase index (enforced by deterministic expansion order).
pub fn plan_schedule(instance: &SchedulingInstance, horizon: u64) -> PhaseSchedule {
    let phases = instance.sequences.len();
    if phases == 0 || instance.sequences.iter().all(|s| s.is_empty()) {
        return PhaseSchedule::empty();
    }
    debug_assert!(instance.weights.iter().all(|&w| w > 0.0));
    debug_assert!(instance.min_green <= instance.max_green);

    let radices: Vec<usize> = instance.sequences.iter().map(|s| s.len()).collect();
    let total: usize = radices.iter().sum();
    let max_green = instance.max_green as i64;
    let min_green = instance.min_green as i64;
    let changeover = instance.changeover as i64;

    // layers[k]: states with k clusters consumed.
    let mut layers: Vec<BTreeMap<StateKey, Vec<Label>>> = vec![BTreeMap::new(); total + 1];
    let init_counts = vec![0usize; phases];
    layers[0].insert((counts_key(&init_counts, &radices), instance.current_phase), vec![Label {
        delay: 0.0,
        finish: 0,
        green_start: -(instance.elapsed_green as i64),
        parent: None,
        via: None,
    }]);

    for k in 0..total {
        let keys: Vec<StateKey> = layers[k].keys().copied().collect();
        for key in keys {
            let labels = layers[k][&key].clone();
            let counts = decode_counts(key.0, &radices);
            let last = key.1;
            for q in 0..phases {
                let idx = counts[q];
                if idx >= radices[q] {
                    continue;
                }
                let cluster = &instance.sequences[q][idx];
                let arr = cluster.arr as i64;
                let dur = instance.service_slots(cluster);
                let weight = instance.weights[q];
                let mut next_counts = counts.clone();
                next_counts[q] += 1;
                let next_key = (counts_key(&next_counts, &radices), q);

                for (label_idx, label) in labels.iter().enumerate() {
                    let parent = Some((k, key, label_idx));
                    // Continue the running green, if same phase and it fits.
                    if q == last {
                        let ast = label.finish.max(arr);
                        if ast + dur - label.green_start <= max_green {
                            push_label(
                                &mut layers[k + 1],
                                next_key,
                                Label {
                                    delay: label.delay
                                        + weight * cluster.size as f64 * (ast - arr) as f64,
                                    finish: ast + dur,
                                    green_start: label.green_start,
                                    parent,
                                    via: Some(ScheduledService {
                                        phase: q,
                                        seq_index: idx,
                                        ast,
                                        duration: dur,
                                        switched: false,
                                    }),
                                },
                            );
                        }
                    }
                    // Switch (or max-green reset of the same phase): one
                    // changeover after min green is satisfied. A cluster
                    // longer than max green is allowed here so a schedule
                    // always exists; enforce_max_green splits it.
                    let switch_time = label.finish.max(label.green_start + min_green);
                    let ast = (switch_time + changeover).max(arr);
                    push_label(
                        &mut layers[k + 1],
                        next_key,
                        Label {
                            delay: label.delay + weight * cluster.size as f64 * (ast - arr) as f64,
                            finish: ast + dur,
                            green_start: ast,
                            parent,
                            via: Some(ScheduledService {
                                phase: q,
                                seq_index: idx,
                                ast,
                                duration: dur,
                                switched: true,
                            }),
                        },
                    );
                }
            }
        }
    }

    // Best complete schedule: min delay, then earliest finish, then the
    // BTreeMap's phase order.
    let mut best: Option<(f64, i64, StateKey, usize)> = None;
    for (key, labels) in &layers[total] {
        for (i, label) in labels.iter().enumerate() {
            let candidate = (label.delay, label.finish, *key, i);
            if best.is_none()
                || (candidate.0, candidate.1) < (best.unwrap().0, best.unwrap().1)
            {
                best = Some(candidate);
            }
        }
    }
    let (delay, finish, mut key, mut label_idx) = best.expect("complete layer is non-empty");

    let mut services = Vec::with_capacity(total);
    let mut layer = total;
    loop {
        let label = &layers[layer][&key][label_idx];
        match (&label.via, label.parent) {
            (Some(step), Some((pl, pk, pi))) => {
                services.push(step.clone());
                layer = pl;
                key = pk;
                label_idx = pi;
            }
            _ => break,
        }
    }
    services.reverse();

    PhaseSchedule {
        services,
        total_weighted_delay: delay,
        horizon_exceeded: finish > horizon as i64,
    }
}

fn decode_counts(mut key: u64, radices: &[usize]) -> Vec<usize> {
    let mut counts = vec![0usize; radices.len()];
    for i in (0..radices.len()).rev() {
        let r = radices[i] as u64 + 1;
        counts[i] = (key % r) as usize;
        key /= r;
    }
    counts
}

/// Inserts `label` unless dominated; drops existing labels it dominates.
/// Labels are comparable only at equal `green_start` (a younger green admits
/// a longer continuation but delays the next switch).
fn push_label(layer: &mut BTreeMap<StateKey, Vec<Label>>, key: StateKey, label: Label) {
    let labels = layer.entry(key).or_default();
    for existing in labels.iter() {
        if existing.green_start == label.green_start
            && existing.delay <= label.delay
            && existing.finish <= label.finish
        {
            return;
        }
    }
    labels.retain(|existing| {
        !(existing.green_start == label.green_start
            && label.delay <= existing.delay
            && label.finish <= existing.finish)
    });
    labels.push(label);
}

/// Splits a cluster after `at_count` jobs. The head keeps `arr`; the tail
/// starts where the head clears, so concatenated service equals the original.
pub fn split_cluster(
    cluster: &Cluster,
    at_count: u32,
    rate: f64,
) -> Result<(Cluster, Cluster), SdcError> {
    if at_count == 0 || at_count >= cluster.size {
        return Err(SdcError::InvalidSplit { at: at_count, size: cluster.size });
    }
    let head_slots = (at_count as f64 / rate).ceil() as u64;
    let tail_size = cluster.size - at_count;
    let (head_jobs, tail_jobs) = if cluster.jobs.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        let split = (at_count as usize).min(cluster.jobs.len());
        (cluster.jobs[..split].to_vec(), cluster.jobs[split..].to_vec())
    };
    let head = Cluster {
        size: at_count,
        arr: cluster.arr,
        dep: cluster.arr + head_slots,
        jobs: head_jobs,
        link: cluster.link,
    };
    let tail_arr = head.dep;
    let tail = Cluster {
        size: tail_size,
        arr: tail_arr,
        dep: cluster.dep.max(tail_arr + ((tail_size as f64 / rate).ceil() as u64).saturating_sub(1)),
        jobs: tail_jobs,
        link: cluster.link,
    };
    Ok((head, tail))
}

/// Re-solves until no green interval exceeds `max_green`, splitting the
/// first offending cluster each round. Returns the (possibly modified)
/// instance together with the feasible schedule.
pub fn enforce_max_green(
    instance: SchedulingInstance,
    schedule: PhaseSchedule,
    horizon: u64,
) -> Result<(SchedulingInstance, PhaseSchedule), SdcError> {
    let mut instance = instance;
    let mut schedule = schedule;
    let cap = instance.total_jobs().max(1);
    let max_green = instance.max_green as i64;
    let green_origin = -(instance.elapsed_green as i64);

    for _ in 0..cap {
        let offending = schedule
            .intervals(green_origin)
            .into_iter()
            .find(|iv| iv.length() > max_green);
        let Some(interval) = offending else {
            return Ok((instance, schedule));
        };

        // First service whose end crosses the max-green boundary.
        let limit = interval.start + max_green;
        let service = schedule.services[interval.first_service..=interval.last_service]
            .iter()
            .find(|s| s.ast + s.duration > limit)
            .expect("offending interval contains a crossing service");
        let cluster = &instance.sequences[service.phase][service.seq_index];
        // Largest head that still fits the interval.
        let room = (limit - service.ast).max(0);
        let fit = (room as f64 * instance.saturation_rate).floor() as u32;
        let at = fit.clamp(1, cluster.size.saturating_sub(1));
        if cluster.size < 2 {
            return Err(SdcError::NonTermination(cap));
        }
        let (head, tail) = split_cluster(cluster, at, instance.saturation_rate)?;
        let seq = &mut instance.sequences[service.phase];
        seq.splice(service.seq_index..=service.seq_index, [head, tail]);

        schedule = plan_schedule(&instance, horizon);
    }
    Err(SdcError::NonTermination(cap))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cluster(size: u32, arr: u64) -> Cluster {
        Cluster { size, arr, dep: arr + size as u64 - 1, jobs: vec![], link: 0 }
    }

    fn simple_instance(sequences: Vec<Vec<Cluster>>, changeover: u64) -> SchedulingInstance {
        SchedulingInstance::unweighted(sequences, changeover, 0, u64::MAX / 8, 1.0, 0)
    }

    #[test]
    fn delay_formula() {
        let c = cluster(4, 10);
        assert_eq!(cluster_delay(&c, 10, 1.0).unwrap(), 0.0);
        assert_eq!(cluster_delay(&c, 15, 1.0).unwrap(), 20.0);
        assert_eq!(cluster_delay(&c, 15, 0.25).unwrap(), 5.0);
        assert_eq!(
            cluster_delay(&c, 9, 1.0),
            Err(SdcError::NegativeWait { ast: 9, arr: 10 })
        );
    }

    #[test]
    fn single_cluster_served_on_arrival() {
        let inst = simple_instance(vec![vec![cluster(3, 0)]], 3);
        let plan = plan_schedule(&inst, 1000);
        assert_eq!(plan.total_weighted_delay, 0.0);
        assert_eq!(plan.services.len(), 1);
        assert_eq!(plan.services[0].ast, 0);
        assert!(!plan.services[0].switched);
    }

    #[test]
    fn two_phase_ordering_prefers_large_cluster_first() {
        // Serving the five-job cluster first costs 1*(5+3)=8; the reverse
        // costs 5*(1+3)=20.
        let inst = simple_instance(vec![vec![cluster(5, 0)], vec![cluster(1, 0)]], 3);
        let plan = plan_schedule(&inst, 1000);
        assert_eq!(plan.total_weighted_delay, 8.0);
        assert_eq!(plan.services[0].phase, 0);
        assert_eq!(plan.services[1].phase, 1);
        assert_eq!(plan.services[1].ast, 8);
    }

    #[test]
    fn changeover_inserted_on_each_switch() {
        let inst = simple_instance(
            vec![vec![cluster(2, 0), cluster(2, 20)], vec![cluster(2, 0)]],
            4,
        );
        let plan = plan_schedule(&inst, 1000);
        for pair in plan.services.windows(2) {
            if pair[1].switched {
                assert!(pair[1].ast >= pair[0].ast + pair[0].duration + 4);
            }
        }
    }

    #[test]
    fn min_green_delays_switch() {
        let mut inst = simple_instance(vec![vec![], vec![cluster(1, 0)]], 2);
        inst.min_green = 10;
        inst.elapsed_green = 0;
        let plan = plan_schedule(&inst, 1000);
        // Switch cannot happen before min green of the running phase.
        assert_eq!(plan.services[0].ast, 12);
        // Already-elapsed green counts toward min green.
        inst.elapsed_green = 10;
        let plan = plan_schedule(&inst, 1000);
        assert_eq!(plan.services[0].ast, 2);
    }

    #[test]
    fn split_conserves_size_and_head_arr() {
        let c = cluster(10, 7);
        let (head, tail) = split_cluster(&c, 4, 1.0).unwrap();
        assert_eq!((head.size, tail.size), (4, 6));
        assert_eq!(head.arr, 7);
        assert_eq!(tail.arr, head.dep);
        assert_eq!(head.size + tail.size, c.size);
        assert!(matches!(split_cluster(&c, 0, 1.0), Err(SdcError::InvalidSplit { .. })));
        assert!(matches!(split_cluster(&c, 10, 1.0), Err(SdcError::InvalidSplit { .. })));
    }

    #[test]
    fn split_partitions_member_jobs() {
        let c = Cluster { size: 5, arr: 0, dep: 4, jobs: vec![10, 11, 12, 13, 14], link: 3 };
        let (head, tail) = split_cluster(&c, 2, 1.0).unwrap();
        assert_eq!(head.jobs, [10, 11]);
        assert_eq!(tail.jobs, [12, 13, 14]);
    }

    #[test]
    fn max_green_splits_long_cluster() {
        let mut inst = simple_instance(vec![vec![cluster(30, 0)], vec![]], 3);
        inst.max_green = 20;
        let plan = plan_schedule(&inst, 1000);
        let (inst, plan) = enforce_max_green(inst, plan, 1000).unwrap();
        for iv in plan.intervals(0) {
            assert!(iv.length() <= 20, "interval {iv:?}");
        }
        assert_eq!(inst.total_jobs(), 30);
    }

    #[test]
    fn feasible_schedule_is_fixpoint() {
        let inst = simple_instance(vec![vec![cluster(3, 0)], vec![cluster(2, 10)]], 3);
        let plan = plan_schedule(&inst, 1000);
        let (inst2, plan2) = enforce_max_green(inst.clone(), plan.clone(), 1000).unwrap();
        assert_eq!(inst, inst2);
        assert_eq!(plan, plan2);
    }

    #[test]
    fn max_green_equal_horizon_never_triggers() {
        let mut inst = simple_instance(vec![vec![cluster(8, 0)], vec![cluster(8, 0)]], 2);
        inst.max_green = 1000;
        let plan = plan_schedule(&inst, 1000);
        let (_, plan2) = enforce_max_green(inst, plan.clone(), 1000).unwrap();
        assert_eq!(plan, plan2);
    }

    #[test]
    fn ast_strictly_increasing_per_phase() {
        let inst = simple_instance(
            vec![
                vec![cluster(2, 0), cluster(3, 4), cluster(1, 30)],
                vec![cluster(4, 2), cluster(2, 12)],
            ],
            3,
        );
        let plan = plan_schedule(&inst, 1000);
        for phase in 0..2 {
            let asts: Vec<i64> =
                plan.services.iter().filter(|s| s.phase == phase).map(|s| s.ast).collect();
            assert!(asts.windows(2).all(|w| w[0] < w[1]), "{asts:?}");
        }
    }

    #[test]
    fn horizon_flagging() {
        let inst = simple_instance(vec![vec![cluster(50, 0)]], 0);
        assert!(plan_schedule(&inst, 10).horizon_exceeded);
        assert!(!plan_schedule(&inst, 100).horizon_exceeded);
    }

    #[test]
    fn uniform_weight_scaling_preserves_argmin() {
        let sequences =
            vec![vec![cluster(3, 0), cluster(2, 9)], vec![cluster(4, 1)], vec![cluster(1, 5)]];
        let base = simple_instance(sequences.clone(), 2);
        let mut scaled = base.clone();
        scaled.weights = vec![7.5; 3];
        let p1 = plan_schedule(&base, 1000);
        let p2 = plan_schedule(&scaled, 1000);
        assert_eq!(p1.services, p2.services);
        assert!((p2.total_weighted_delay - 7.5 * p1.total_weighted_delay).abs() < 1e-9);
    }

    #[test]
    fn first_decision_switches_only_when_due() {
        // Other phase dominates: the plan starts with an immediate switch.
        let inst = simple_instance(vec![vec![], vec![cluster(5, 0)]], 2);
        let plan = plan_schedule(&inst, 1000);
        assert_eq!(plan.first_decision(&inst), Decision::SwitchTo(1));

        // Current phase serves first: stay.
        let inst = simple_instance(vec![vec![cluster(5, 0)], vec![cluster(1, 0)]], 2);
        let plan = plan_schedule(&inst, 1000);
        assert_eq!(plan.first_decision(&inst), Decision::Stay);

        // Min green not yet satisfied: stay even though a switch is planned.
        let mut inst = simple_instance(vec![vec![], vec![cluster(5, 0)]], 2);
        inst.min_green = 8;
        inst.elapsed_green = 3;
        let plan = plan_schedule(&inst, 1000);
        assert_eq!(plan.first_decision(&inst), Decision::Stay);
    }

    #[test]
    fn empty_instance_plans_nothing() {
        let inst = simple_instance(vec![vec![], vec![]], 3);
        let plan = plan_schedule(&inst, 100);
        assert!(plan.services.is_empty());
        assert_eq!(plan.first_decision(&inst), Decision::Stay);
    }
}
