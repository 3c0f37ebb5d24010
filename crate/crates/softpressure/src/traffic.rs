//! Stochastic job arrivals and cluster aggregation.
//!
//! Arrivals are Poisson per slot with a piecewise-constant hourly rate per
//! entry link. Sensed jobs on a link (already queued plus approaching) are
//! aggregated into clusters: maximal runs of jobs whose inter-arrival gaps at
//! the stop line stay within a threshold. Clusters are the non-divisible
//! scheduling units the controllers sequence.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

use crate::topology::LinkIdx;
use crate::Slot;

pub const SLOTS_PER_HOUR: f64 = 3600.0;

/// A job traveling through the network. Delay accounting is in whole slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Job {
    pub id: usize,
    pub class: usize,
    /// Slot the job entered the network.
    pub entered: Slot,
    /// Arrival slot at the current node's queue; updated on every landing.
    pub node_arrival: Slot,
    /// Link whose queue currently holds the job (or that it is flying on).
    pub link: LinkIdx,
    /// Accumulated queueing delay over all visited nodes, in slots.
    pub queue_delay: u64,
    /// Exit slot, once the job leaves the network.
    pub exited: Option<Slot>,
}

/// One constant-rate stretch of demand on an entry link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandSegment {
    pub start: Slot,
    /// Exclusive end slot.
    pub end: Slot,
    pub jobs_per_hour: f64,
}

/// Demand on a single entry link.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryDemand {
    pub link: LinkIdx,
    pub segments: Vec<DemandSegment>,
}

/// Ramped demand over all entry links plus the global class mix.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandProfile {
    pub entries: Vec<EntryDemand>,
    /// Probability of each job class; must sum to 1.
    pub class_mix: Vec<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum DemandError {
    #[error("segments on entry link {0} overlap or leave gaps")]
    SegmentsNotContiguous(LinkIdx),
    #[error("negative rate {rate} on entry link {link}")]
    NegativeRate { link: LinkIdx, rate: f64 },
    #[error("class mix sums to {0}, expected 1")]
    ClassMixNotNormalized(f64),
}

impl DemandProfile {
    pub fn validate(&self) -> Result<(), DemandError> {
        for entry in &self.entries {
            for seg in &entry.segments {
                if seg.jobs_per_hour < 0.0 {
                    return Err(DemandError::NegativeRate {
                        link: entry.link,
                        rate: seg.jobs_per_hour,
                    });
                }
            }
            for pair in entry.segments.windows(2) {
                if pair[0].end != pair[1].start {
                    return Err(DemandError::SegmentsNotContiguous(entry.link));
                }
            }
        }
        let total: f64 = self.class_mix.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(DemandError::ClassMixNotNormalized(total));
        }
        Ok(())
    }

    /// Current rate on `link` at `slot`, in jobs per slot.
    pub fn rate_per_slot(&self, link: LinkIdx, slot: Slot) -> f64 {
        self.entries
            .iter()
            .find(|e| e.link == link)
            .and_then(|e| e.segments.iter().find(|s| s.start <= slot && slot < s.end))
            .map(|s| s.jobs_per_hour / SLOTS_PER_HOUR)
            .unwrap_or(0.0)
    }

    /// Expected total number of injected jobs over the whole horizon.
    pub fn expected_total(&self) -> f64 {
        self.entries
            .iter()
            .flat_map(|e| &e.segments)
            .map(|s| (s.end - s.start) as f64 * s.jobs_per_hour / SLOTS_PER_HOUR)
            .sum()
    }

    /// Scales every segment rate by `factor` (demand-tier override).
    pub fn scaled(&self, factor: f64) -> DemandProfile {
        let mut out = self.clone();
        for entry in &mut out.entries {
            for seg in &mut entry.segments {
                seg.jobs_per_hour *= factor;
            }
        }
        out
    }
}

/// New jobs at one slot: `(entry link, class)` per job, in entry-link order.
pub fn sample_arrivals<R: Rng>(
    slot: Slot,
    profile: &DemandProfile,
    rng: &mut R,
) -> Vec<(LinkIdx, usize)> {
    let mut out = Vec::new();
    for entry in &profile.entries {
        let rate = profile.rate_per_slot(entry.link, slot);
        if rate <= 0.0 {
            continue;
        }
        let count = Poisson::new(rate).expect("positive rate").sample(rng) as u64;
        for _ in 0..count {
            out.push((entry.link, sample_class(&profile.class_mix, rng)));
        }
    }
    out
}

fn sample_class<R: Rng>(mix: &[f64], rng: &mut R) -> usize {
    if mix.len() == 1 {
        return 0;
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, p) in mix.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    mix.len() - 1
}

/// The `(size, arr, dep)` job aggregate sequenced by the schedulers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub size: u32,
    /// Predicted stop-line arrival slot of the cluster head.
    pub arr: Slot,
    /// Predicted clearance slot if served without delay.
    pub dep: Slot,
    /// Member job ids; empty for synthetic instances.
    pub jobs: Vec<usize>,
    /// Link the cluster sits on (its queue identity).
    pub link: LinkIdx,
}

impl Cluster {
    /// Service duration at `rate` jobs/slot, in whole slots.
    pub fn service_slots(&self, rate: f64) -> u64 {
        (self.size as f64 / rate).ceil() as u64
    }
}

fn clearance(arr: Slot, size: u32, rate: f64) -> Slot {
    arr + ((size as f64 / rate).ceil() as u64).saturating_sub(1)
}

/// Aggregates the sensed jobs of one link into an ordered cluster sequence.
///
/// Queued jobs count as present at `now` and therefore form the head cluster;
/// approaching jobs join it (or start new clusters) by the gap rule:
/// consecutive stop-line arrivals at most `gap_threshold` slots apart merge.
/// Jobs predicted to arrive after `now + horizon` are ignored.
pub fn build_cluster_sequence(
    link: LinkIdx,
    queued: &[usize],
    approaching: &[(Slot, usize)],
    now: Slot,
    horizon: u64,
    gap_threshold: u64,
    service_rate: f64,
) -> Vec<Cluster> {
    debug_assert!(approaching.windows(2).all(|w| w[0].0 <= w[1].0));
    let mut events: Vec<(Slot, usize)> = queued.iter().map(|&id| (now, id)).collect();
    events.extend(
        approaching.iter().filter(|(t, _)| *t >= now && *t <= now + horizon).copied(),
    );

    let mut clusters: Vec<Cluster> = Vec::new();
    let mut last_event: Slot = 0;
    for (t, id) in events {
        match clusters.last_mut() {
            Some(c) if t - last_event <= gap_threshold => {
                c.size += 1;
                c.jobs.push(id);
                c.dep = clearance(c.arr, c.size, service_rate).max(t);
            }
            _ => clusters.push(Cluster {
                size: 1,
                arr: t,
                dep: clearance(t, 1, service_rate),
                jobs: vec![id],
                link,
            }),
        }
        last_event = t;
    }
    clusters
}

/// Merge-sorts per-link cluster sequences into one per-phase sequence,
/// preserving per-link order; ties on `arr` break by link index.
pub fn merge_nonconflicting(sequences: &[Vec<Cluster>]) -> Vec<Cluster> {
    let mut merged: Vec<Cluster> = sequences.iter().flatten().cloned().collect();
    merged.sort_by_key(|c| (c.arr, c.link));
    merged
}
