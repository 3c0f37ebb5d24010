//! Delay and queue statistics, the time-averaged stability estimator with
//! its theoretical bound, and the Little's-law self-consistency check.

use thiserror::Error;

use crate::engine::{RawRunData, SimConfig};

/// At most this many Lyapunov drift samples are retained per run.
const DRIFT_SAMPLE_CAP: usize = 1024;

/// Per-run summary statistics. Mean and percentiles cover exited jobs only;
/// jobs still in the network at the end of the run are reported as censored.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub controller: String,
    pub seed: u64,
    pub slots: u64,
    pub burn_in: u64,
    pub injected: u64,
    pub exited: u64,
    pub censored: u64,
    pub stale_messages: u64,
    /// Mean queueing delay of exited jobs, in slots.
    pub mean_delay: Option<f64>,
    /// Sample standard deviation of the same delays.
    pub std_delay: Option<f64>,
    pub median_delay: Option<f64>,
    pub p90_delay: Option<f64>,
    /// Mean entry-to-exit time of exited jobs, in slots.
    pub mean_system_time: Option<f64>,
    /// Time average of the end-of-slot total queue length.
    pub avg_total_queue: f64,
    /// Time-averaged queue length per link.
    pub per_link_avg_queue: Vec<f64>,
    /// Exited jobs per hour of simulated time.
    pub throughput_per_hour: f64,
    /// Exited-job delays, ascending (the CDF support).
    pub delays_sorted: Vec<u64>,
    pub stability: StabilityReport,
}

/// Boundedness verdict of the plateau heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Bounded,
    Unbounded,
}

/// Time-averaged queue estimate against the theoretical bound.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// `(1/T) Σ_t Σ_i Q_i(t)`.
    pub mean_total_queue: f64,
    /// Number of queues N in the bound.
    pub queue_count: usize,
    /// Capacity slack supplied by scenario construction, if known.
    pub epsilon: Option<f64>,
    /// `N² / (2ε)` when ε is known and positive.
    pub bound: Option<f64>,
    pub verdict: Verdict,
    /// Running average over the first half of the sampled slots.
    pub half_run_average: f64,
    /// Running average over the last quarter of the sampled slots.
    pub last_quarter_average: f64,
    /// Subsampled `L(Q(t+1)) - L(Q(t))` with `L(Q) = Σ_i Q_i²`.
    pub drift_samples: Vec<f64>,
}

/// Pooled replication summary: mean and sample std of the per-run average
/// delay.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledSummary {
    pub runs: usize,
    pub mean_delay: f64,
    pub std_delay: f64,
}

impl PooledSummary {
    pub fn from_reports(reports: &[MetricsReport]) -> Self {
        let means: Vec<f64> = reports.iter().filter_map(|r| r.mean_delay).collect();
        let n = means.len();
        if n == 0 {
            return PooledSummary { runs: reports.len(), mean_delay: 0.0, std_delay: 0.0 };
        }
        let mean = means.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        PooledSummary { runs: reports.len(), mean_delay: mean, std_delay: std }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("run did not reach steady state (unbounded queue verdict)")]
    NotSteady,
}

fn mean_u64(values: &[u64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<u64>() as f64 / values.len() as f64)
    }
}

fn sample_std(values: &[u64], mean: f64) -> Option<f64> {
    if values.len() < 2 {
        return values.first().map(|_| 0.0);
    }
    let var = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>()
        / (values.len() - 1) as f64;
    Some(var.sqrt())
}

/// Value at quantile `q` of an ascending slice (nearest-rank).
fn percentile(sorted: &[u64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1] as f64)
}

/// Condenses raw run data into a [`MetricsReport`].
pub fn summarize(raw: &RawRunData, config: &SimConfig) -> MetricsReport {
    let mut delays = raw.exited_delays.clone();
    delays.sort_unstable();
    let mean_delay = mean_u64(&delays);
    let hours = raw.sampled_slots as f64 / crate::traffic::SLOTS_PER_HOUR;
    let per_link_avg_queue = if raw.sampled_slots == 0 {
        vec![0.0; config.graph.link_count()]
    } else {
        let mut avg = vec![0.0; config.graph.link_count()];
        for (link, &sum) in raw.per_link_queue_sum.iter().enumerate() {
            avg[link] = sum as f64 / raw.sampled_slots as f64;
        }
        avg
    };
    let stability = stability_estimate(
        &raw.per_slot_total_queue,
        &raw.per_slot_lyapunov,
        config.graph.link_count(),
        config.epsilon,
    );

    MetricsReport {
        controller: config.controller.kind.label().to_string(),
        seed: config.seed,
        slots: config.slots,
        burn_in: config.burn_in,
        injected: raw.injected,
        exited: raw.exited,
        censored: raw.censored,
        stale_messages: raw.stale_messages,
        mean_delay,
        std_delay: mean_delay.and_then(|m| sample_std(&delays, m)),
        median_delay: percentile(&delays, 0.5),
        p90_delay: percentile(&delays, 0.9),
        mean_system_time: mean_u64(&raw.exited_system_times),
        avg_total_queue: stability.mean_total_queue,
        per_link_avg_queue,
        throughput_per_hour: if hours > 0.0 { raw.exited as f64 / hours } else { 0.0 },
        delays_sorted: delays,
        stability,
    }
}

/// Time-averaged total queue, plateau-heuristic verdict, and the
/// `N²/(2ε)` bound when the capacity slack is known.
///
/// The verdict is `Bounded` when the last-quarter running average does not
/// exceed the half-run average by more than 10% (plus one job of absolute
/// slack so empty and near-empty systems are not misjudged).
pub fn stability_estimate(
    per_slot_total_queue: &[u64],
    per_slot_lyapunov: &[u64],
    queue_count: usize,
    epsilon: Option<f64>,
) -> StabilityReport {
    let t = per_slot_total_queue.len();
    let mean_of = |slice: &[u64]| {
        if slice.is_empty() {
            0.0
        } else {
            slice.iter().sum::<u64>() as f64 / slice.len() as f64
        }
    };
    let mean_total_queue = mean_of(per_slot_total_queue);
    let half_run_average = mean_of(&per_slot_total_queue[..t / 2]);
    let last_quarter_average = mean_of(&per_slot_total_queue[t - t / 4..]);
    let verdict = if last_quarter_average <= half_run_average * 1.1 + 1.0 {
        Verdict::Bounded
    } else {
        Verdict::Unbounded
    };

    let mut drift_samples = Vec::new();
    if per_slot_lyapunov.len() >= 2 {
        let stride = (per_slot_lyapunov.len() - 1).div_ceil(DRIFT_SAMPLE_CAP);
        for i in (1..per_slot_lyapunov.len()).step_by(stride.max(1)) {
            drift_samples
                .push(per_slot_lyapunov[i] as f64 - per_slot_lyapunov[i - 1] as f64);
        }
    }

    let bound = epsilon
        .filter(|&e| e > 0.0)
        .map(|e| (queue_count as f64).powi(2) / (2.0 * e));

    StabilityReport {
        mean_total_queue,
        queue_count,
        epsilon,
        bound,
        verdict,
        half_run_average,
        last_quarter_average,
        drift_samples,
    }
}

/// Relative error of `Q̄ = λ_eff · W̄` over the run, with `λ_eff` the exit
/// rate and `W̄` the mean network time of exited jobs.
///
/// A run with no traffic (or no queueing at all) satisfies the law exactly
/// by convention.
pub fn littles_law_check(report: &MetricsReport) -> Result<f64, MetricsError> {
    if report.stability.verdict == Verdict::Unbounded {
        return Err(MetricsError::NotSteady);
    }
    let slots = report.slots.saturating_sub(report.burn_in);
    if report.exited == 0 || slots == 0 {
        return Ok(0.0);
    }
    let lambda = report.exited as f64 / slots as f64;
    let wait = report.mean_system_time.unwrap_or(0.0);
    let product = lambda * wait;
    if product == 0.0 {
        return Ok(if report.avg_total_queue == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok((report.avg_total_queue - product).abs() / product)
}

impl MetricsReport {
    /// Empirical CDF of exited-job delay as `(delay, fraction ≤ delay)`
    /// pairs, one per distinct delay value.
    pub fn delay_cdf(&self) -> Vec<(u64, f64)> {
        let n = self.delays_sorted.len();
        let mut out: Vec<(u64, f64)> = Vec::new();
        for (i, &d) in self.delays_sorted.iter().enumerate() {
            let frac = (i + 1) as f64 / n as f64;
            match out.last_mut() {
                Some(last) if last.0 == d => last.1 = frac,
                _ => out.push((d, frac)),
            }
        }
        out
    }

    /// Flat `key value` lines, one metric per line, deterministic order.
    pub fn to_key_values(&self) -> String {
        let opt = |v: Option<f64>| match v {
            Some(x) => format!("{x:.6}"),
            None => "absent".to_string(),
        };
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push(' ');
            out.push_str(&v);
            out.push('\n');
        };
        push("controller", self.controller.clone());
        push("seed", self.seed.to_string());
        push("slots", self.slots.to_string());
        push("burn_in", self.burn_in.to_string());
        push("injected", self.injected.to_string());
        push("exited", self.exited.to_string());
        push("censored", self.censored.to_string());
        push("stale_messages", self.stale_messages.to_string());
        push("mean_delay", opt(self.mean_delay));
        push("std_delay", opt(self.std_delay));
        push("median_delay", opt(self.median_delay));
        push("p90_delay", opt(self.p90_delay));
        push("mean_system_time", opt(self.mean_system_time));
        push("avg_total_queue", format!("{:.6}", self.avg_total_queue));
        push("throughput_per_hour", format!("{:.6}", self.throughput_per_hour));
        push("stability_verdict", match self.stability.verdict {
            Verdict::Bounded => "bounded".to_string(),
            Verdict::Unbounded => "unbounded".to_string(),
        });
        push("stability_epsilon", opt(self.stability.epsilon));
        push("stability_bound", opt(self.stability.bound));
        out
    }

    /// CDF as a two-column CSV (`delay,fraction`).
    pub fn cdf_csv(&self) -> String {
        let mut out = String::from("delay,fraction\n");
        for (d, f) in self.delay_cdf() {
            out.push_str(&format!("{d},{f:.6}\n"));
        }
        out
    }

    /// Per-link time-averaged queue lengths as CSV, labeled `from>to`.
    pub fn per_link_csv(&self, graph: &crate::topology::NetworkGraph) -> String {
        let mut out = String::from("link,avg_queue\n");
        for (link, avg) in self.per_link_avg_queue.iter().enumerate() {
            out.push_str(&format!("{},{avg:.6}\n", graph.link_label(link)));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report_with(delays: Vec<u64>, totals: Vec<u64>, slots: u64, exited: u64) -> MetricsReport {
        let mut sorted = delays.clone();
        sorted.sort_unstable();
        let mean = mean_u64(&sorted);
        MetricsReport {
            controller: "bp".into(),
            seed: 0,
            slots,
            burn_in: 0,
            injected: exited,
            exited,
            censored: 0,
            stale_messages: 0,
            mean_delay: mean,
            std_delay: mean.and_then(|m| sample_std(&sorted, m)),
            median_delay: percentile(&sorted, 0.5),
            p90_delay: percentile(&sorted, 0.9),
            mean_system_time: mean,
            avg_total_queue: if totals.is_empty() {
                0.0
            } else {
                totals.iter().sum::<u64>() as f64 / totals.len() as f64
            },
            per_link_avg_queue: vec![],
            throughput_per_hour: 0.0,
            delays_sorted: sorted,
            stability: stability_estimate(&totals, &[], 2, Some(0.2)),
        }
    }

    #[test]
    fn mean_and_median_of_three() {
        let r = report_with(vec![10, 20, 30], vec![0; 100], 100, 3);
        assert_eq!(r.mean_delay, Some(20.0));
        assert_eq!(r.median_delay, Some(20.0));
    }

    #[test]
    fn no_exited_jobs_mean_absent() {
        let r = report_with(vec![], vec![3; 10], 10, 0);
        assert_eq!(r.mean_delay, None);
        assert_eq!(r.p90_delay, None);
        assert!(r.to_key_values().contains("mean_delay absent"));
    }

    #[test]
    fn cdf_nondecreasing_ends_at_one() {
        let r = report_with(vec![5, 1, 3, 3, 9, 1], vec![], 10, 6);
        let cdf = r.delay_cdf();
        assert!(cdf.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
        assert_eq!(cdf.last().unwrap().1, 1.0);
        assert_eq!(cdf.first().unwrap(), &(1, 2.0 / 6.0));
    }

    #[test]
    fn all_zero_queues_bounded() {
        let s = stability_estimate(&vec![0; 1000], &[], 4, None);
        assert_eq!(s.mean_total_queue, 0.0);
        assert_eq!(s.verdict, Verdict::Bounded);
        assert_eq!(s.bound, None);
    }

    #[test]
    fn linear_growth_unbounded() {
        // Arrival of one job per slot, no service.
        let totals: Vec<u64> = (1..=1000).collect();
        let s = stability_estimate(&totals, &[], 1, Some(0.2));
        assert_eq!(s.verdict, Verdict::Unbounded);
        assert_eq!(s.bound, Some(2.5));
    }

    #[test]
    fn plateau_bounded_with_noise() {
        let totals: Vec<u64> = (0..2000).map(|t| 50 + (t % 7)).collect();
        let s = stability_estimate(&totals, &[], 2, Some(0.2));
        assert_eq!(s.verdict, Verdict::Bounded);
        assert_eq!(s.bound, Some(10.0));
    }

    #[test]
    fn drift_samples_from_lyapunov_series() {
        let lyap = vec![0, 1, 4, 9, 4, 4];
        let s = stability_estimate(&[0; 6], &lyap, 1, None);
        assert_eq!(s.drift_samples, vec![1.0, 3.0, 5.0, -5.0, 0.0]);
    }

    #[test]
    fn littles_law_exact_identity() {
        // Q̄·T = Σ delays by construction: 4 jobs, delay 5 each, T=20,
        // lambda = 0.2, W = 5, product = 1.0 = Q̄.
        let r = report_with(vec![5, 5, 5, 5], vec![1; 20], 20, 4);
        assert_eq!(littles_law_check(&r), Ok(0.0));
    }

    #[test]
    fn littles_law_zero_traffic_exact() {
        let r = report_with(vec![], vec![0; 10], 10, 0);
        assert_eq!(littles_law_check(&r), Ok(0.0));
    }

    #[test]
    fn littles_law_overload_not_steady() {
        let totals: Vec<u64> = (1..=1000).collect();
        let r = report_with(vec![2, 2], totals, 1000, 2);
        assert_eq!(littles_law_check(&r), Err(MetricsError::NotSteady));
    }

    #[test]
    fn pooled_summary_singleton_and_std() {
        let a = report_with(vec![10, 20], vec![], 10, 2);
        let b = report_with(vec![30, 40], vec![], 10, 2);
        let single = PooledSummary::from_reports(std::slice::from_ref(&a));
        assert_eq!(single.mean_delay, 15.0);
        assert_eq!(single.std_delay, 0.0);
        let pooled = PooledSummary::from_reports(&[a, b]);
        assert_eq!(pooled.mean_delay, 25.0);
        let expected = ((15.0f64 - 25.0).powi(2) + (35.0f64 - 25.0).powi(2)).sqrt();
        assert!((pooled.std_delay - expected / 1.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn percentile_nearest_rank() {
        let v = vec![1, 2, 3, 4, 5, 6, 7, 8, 9, 10];
        assert_eq!(percentile(&v, 0.9), Some(9.0));
        assert_eq!(percentile(&v, 0.5), Some(5.0));
        assert_eq!(percentile(&v, 1.0), Some(10.0));
    }
}
