//! Release acceptance suite: one test per criterion, each printing a single
//! `criterion N (<name>): pass` or `... FAIL — <measured detail>` line (run
//! with `cargo test --test acceptance -- --nocapture` to see the lines).
//!
//! Criteria 7-9 encode the expected policy ordering on the bundled 4x4
//! rush-hour grid. Where the measured ordering differs from the expectation,
//! the test reports the measured numbers and fails honestly rather than
//! loosening the threshold; see the README's "Known results" section.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use softpressure::bp::select_activation;
use softpressure::compare::{compare, CompareOutput, DemandTier, ExperimentSpec};
use softpressure::engine::ControllerKind;
use softpressure::metrics::{littles_law_check, MetricsReport, Verdict};
use softpressure::scenario::parse_scenario;
use softpressure::sdc::{plan_schedule, SchedulingInstance};
use softpressure::sp::{effective_queues, local_weights, NeighborMessage, WeightVector};
use softpressure::topology::{build_network, four_node_example};
use softpressure::traffic::Cluster;

const TWO_QUEUE_SCENARIO: &str = include_str!("../../../scenarios/two_queue.txt");
const GRID_SCENARIO: &str = include_str!("../../../scenarios/grid4x4_pm.txt");

// ---------------------------------------------------------------------------
// Criterion 1: DP optimality against a brute-force enumeration oracle.
// ---------------------------------------------------------------------------

/// Exhaustive minimum weighted delay over every order-preserving
/// interleaving, exploring both "continue the green" and "changeover"
/// transitions at each step. Branch-and-bound on the accumulated cost only
/// (costs are non-negative), so the minimum found is exact.
fn brute_force_min_delay(instance: &SchedulingInstance) -> f64 {
    struct Search<'a> {
        instance: &'a SchedulingInstance,
        best: f64,
    }

    impl Search<'_> {
        fn go(
            &mut self,
            counts: &mut [usize],
            remaining: usize,
            last: usize,
            finish: i64,
            green_start: i64,
            acc: f64,
        ) {
            if remaining == 0 {
                self.best = self.best.min(acc);
                return;
            }
            if acc >= self.best {
                return;
            }
            let inst = self.instance;
            let max_green = inst.max_green as i64;
            let min_green = inst.min_green as i64;
            let changeover = inst.changeover as i64;
            for q in 0..inst.sequences.len() {
                let idx = counts[q];
                if idx >= inst.sequences[q].len() {
                    continue;
                }
                let cluster = &inst.sequences[q][idx];
                let arr = cluster.arr as i64;
                let dur = (cluster.size as f64 / inst.saturation_rate).ceil() as i64;
                let cost = |ast: i64| {
                    inst.weights[q] * cluster.size as f64 * (ast - arr) as f64
                };
                counts[q] += 1;
                if q == last {
                    let ast = finish.max(arr);
                    if ast + dur - green_start <= max_green {
                        self.go(counts, remaining - 1, q, ast + dur, green_start, acc + cost(ast));
                    }
                }
                let switch_time = finish.max(green_start + min_green);
                let ast = (switch_time + changeover).max(arr);
                self.go(counts, remaining - 1, q, ast + dur, ast, acc + cost(ast));
                counts[q] -= 1;
            }
        }
    }

    let total: usize = instance.sequences.iter().map(|s| s.len()).sum();
    let mut search = Search { instance, best: f64::INFINITY };
    let mut counts = vec![0usize; instance.sequences.len()];
    search.go(
        &mut counts,
        total,
        instance.current_phase,
        0,
        -(instance.elapsed_green as i64),
        0.0,
    );
    search.best
}

fn random_instance(rng: &mut ChaCha8Rng) -> SchedulingInstance {
    let phases = rng.gen_range(1..=3);
    let total_clusters = rng.gen_range(1..=8);
    let mut sequences: Vec<Vec<Cluster>> = vec![Vec::new(); phases];
    for _ in 0..total_clusters {
        let phase = rng.gen_range(0..phases);
        let size = rng.gen_range(1..=6u32);
        // Keep each sequence sorted by arrival, as the sensing layer does.
        let prev_arr = sequences[phase].last().map_or(0, |c: &Cluster| c.arr);
        let arr = prev_arr + rng.gen_range(0..=8u64);
        sequences[phase].push(Cluster {
            size,
            arr,
            dep: arr + size as u64,
            jobs: Vec::new(),
            link: 0,
        });
    }
    let min_green = rng.gen_range(0..=3);
    SchedulingInstance {
        sequences,
        changeover: rng.gen_range(0..=5),
        min_green,
        max_green: rng.gen_range(10..=60).max(min_green),
        saturation_rate: 1.0,
        current_phase: rng.gen_range(0..phases),
        elapsed_green: rng.gen_range(0..=3),
        weights: (0..phases).map(|_| rng.gen_range(1..=3) as f64).collect(),
    }
}

#[test]
fn criterion_01_dp_optimality() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    for case in 0..500 {
        let instance = random_instance(&mut rng);
        let planned = plan_schedule(&instance, 1_000_000).total_weighted_delay;
        let oracle = brute_force_min_delay(&instance);
        if (planned - oracle).abs() > 1e-9 {
            println!(
                "criterion 1 (dp optimality): FAIL — case {case}: planned {planned}, \
                 brute force {oracle}"
            );
            panic!("plan_schedule is not optimal on case {case}: {planned} vs {oracle}");
        }
    }
    println!("criterion 1 (dp optimality): pass — 500 instances match the brute-force minimum");
}

// ---------------------------------------------------------------------------
// Criterion 2: backpressure activation is an exact argmax.
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_backpressure_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    for case in 0..1000 {
        let queues: Vec<u64> = (0..rng.gen_range(2..=6)).map(|_| rng.gen_range(0..50)).collect();
        let phase_count = rng.gen_range(1..=4);
        let phases: Vec<Vec<usize>> = (0..phase_count)
            .map(|_| {
                let mut members: Vec<usize> = (0..queues.len())
                    .filter(|_| rng.gen_bool(0.5))
                    .collect();
                if members.is_empty() {
                    members.push(rng.gen_range(0..queues.len()));
                }
                members
            })
            .collect();
        let chosen = select_activation(&queues, &phases);
        let weight = |members: &[usize]| members.iter().map(|&i| queues[i]).sum::<u64>();
        let chosen_weight = weight(&phases[chosen]);
        for (p, members) in phases.iter().enumerate() {
            let w = weight(members);
            let ok = w < chosen_weight || (w == chosen_weight && p >= chosen);
            assert!(
                ok,
                "case {case}: phase {p} (weight {w}) beats chosen {chosen} \
                 (weight {chosen_weight}) for queues {queues:?}, phases {phases:?}"
            );
        }
    }
    println!("criterion 2 (backpressure argmax): pass — 1000 exhaustive checks");
}

// ---------------------------------------------------------------------------
// Criterion 3: softmax weight properties.
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_softmax_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let weights_of = |queues: &[u64]| -> Vec<f64> {
        let pairs: Vec<(usize, u64)> = queues.iter().copied().enumerate().collect();
        local_weights(&pairs, 1.0).weights.into_iter().map(|(_, w)| w).collect()
    };
    for _ in 0..1000 {
        let queues: Vec<u64> = (0..rng.gen_range(2..=8)).map(|_| rng.gen_range(0..=30)).collect();
        let base = weights_of(&queues);

        // Normalization.
        let sum: f64 = base.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9, "sum {sum} for {queues:?}");

        // Shift invariance.
        let shift = rng.gen_range(1..=50);
        let shifted_queues: Vec<u64> = queues.iter().map(|q| q + shift).collect();
        let shifted = weights_of(&shifted_queues);
        for (a, b) in base.iter().zip(&shifted) {
            assert!((a - b).abs() < 1e-9, "shift by {shift} changed {a} to {b}");
        }

        // Strict monotonicity in the incremented coordinate.
        let bump = rng.gen_range(0..queues.len());
        let mut bumped_queues = queues.clone();
        bumped_queues[bump] += 1;
        let bumped = weights_of(&bumped_queues);
        assert!(
            bumped[bump] > base[bump],
            "weight of bumped coordinate {bump} did not increase for {queues:?}"
        );
        for (i, (a, b)) in base.iter().zip(&bumped).enumerate() {
            if i != bump {
                assert!(b < a, "other coordinate {i} did not decrease for {queues:?}");
            }
        }
    }
    println!("criterion 3 (softmax properties): pass — 1000 vectors each property");
}

// ---------------------------------------------------------------------------
// Criterion 4: effective-queue hand case on the four-node ring.
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_effective_queue_hand_case() {
    let graph = build_network(&four_node_example()).unwrap();
    let a = graph.node_index("a").unwrap();
    let b = graph.node_index("b").unwrap();
    let c = graph.node_index("c").unwrap();
    let d = graph.node_index("d").unwrap();
    let ac = graph.link_index(a, c).unwrap();
    let bc = graph.link_index(b, c).unwrap();
    let da = graph.link_index(d, a).unwrap();
    let cd = graph.link_index(c, d).unwrap();

    let mut messages = BTreeMap::new();
    messages.insert(a, NeighborMessage {
        sender: a,
        slot: 0,
        queues: vec![(da, 6)],
        weights: WeightVector { weights: vec![(da, 1.0)] },
    });
    messages.insert(d, NeighborMessage {
        sender: d,
        slot: 0,
        queues: vec![(cd, 2)],
        weights: WeightVector { weights: vec![(cd, 1.0)] },
    });

    let local = vec![(ac, 4u64), (bc, 0u64)];
    let effective = effective_queues(&graph, c, &local, &messages).unwrap();
    let q_ac = effective.values.iter().find(|(l, _)| *l == ac).unwrap().1;
    // Local 4, plus upstream push 6 * 1 * 0.5, minus downstream repulsion
    // 2 * 1 * 1.
    if q_ac != 5.0 {
        println!("criterion 4 (effective-queue hand case): FAIL — got {q_ac}, want 5");
        panic!("effective queue mismatch: {q_ac}");
    }
    println!("criterion 4 (effective-queue hand case): pass — 4 + 3 - 2 = 5 exactly");
}

// ---------------------------------------------------------------------------
// Criteria 5 and 6 share the two-queue runs.
// ---------------------------------------------------------------------------

fn two_queue_runs() -> &'static Vec<(ControllerKind, u64, MetricsReport)> {
    static RUNS: OnceLock<Vec<(ControllerKind, u64, MetricsReport)>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let base = parse_scenario(TWO_QUEUE_SCENARIO).unwrap();
        let mut out = Vec::new();
        for kind in [ControllerKind::Backpressure, ControllerKind::Softpressure] {
            for seed in 1..=5 {
                let mut scenario = base.clone();
                scenario.controller.kind = kind;
                scenario.seed = seed;
                let report = softpressure::engine::run(&scenario.build().unwrap());
                out.push((kind, seed, report));
            }
        }
        out
    })
}

#[test]
fn criterion_05_stability_bound() {
    let runs = two_queue_runs();
    let mut means: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (kind, seed, report) in runs {
        let bound = report.stability.bound.expect("scenario declares epsilon");
        assert!(
            report.avg_total_queue <= bound,
            "{} seed {seed}: mean queue {:.3} exceeds bound {bound}",
            kind.label(),
            report.avg_total_queue
        );
        assert_eq!(
            report.stability.verdict,
            Verdict::Bounded,
            "{} seed {seed} not bounded",
            kind.label()
        );
        means.entry(kind.label()).or_default().push(report.avg_total_queue);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let bp = mean(&means["bp"]);
    let sp = mean(&means["sp"]);
    assert!(
        sp <= bp * 1.1,
        "softpressure mean queue {sp:.3} is not within 10% of backpressure {bp:.3}"
    );
    println!(
        "criterion 5 (stability bound): pass — mean queue bp {bp:.3}, sp {sp:.3}, bound 10"
    );
}

#[test]
fn criterion_06_littles_law() {
    let mut worst: f64 = 0.0;
    for (kind, seed, report) in two_queue_runs() {
        if report.stability.verdict != Verdict::Bounded {
            continue;
        }
        let error = littles_law_check(report)
            .unwrap_or_else(|e| panic!("{} seed {seed}: {e}", kind.label()));
        assert!(
            error <= 0.05,
            "{} seed {seed}: Little's-law relative error {error:.4} > 5%",
            kind.label()
        );
        worst = worst.max(error);
    }
    println!("criterion 6 (little's law): pass — worst relative error {worst:.4}");
}

// ---------------------------------------------------------------------------
// Criteria 7-9 share the grid comparison matrix.
// ---------------------------------------------------------------------------

fn grid_matrix() -> &'static CompareOutput {
    static MATRIX: OnceLock<CompareOutput> = OnceLock::new();
    MATRIX.get_or_init(|| {
        let spec = ExperimentSpec {
            scenario: parse_scenario(GRID_SCENARIO).unwrap(),
            controllers: vec![
                ControllerKind::ScheduleDriven,
                ControllerKind::Backpressure,
                ControllerKind::Softpressure,
            ],
            tiers: DemandTier::standard(),
            seeds: vec![1, 2, 3, 4, 5],
        };
        compare(&spec).unwrap()
    })
}

fn cell_mean(out: &CompareOutput, kind: ControllerKind, tier: &str) -> f64 {
    out.cell(kind, tier).unwrap().summary.mean_delay
}

#[test]
fn criterion_07_main_comparison() {
    let out = grid_matrix();
    let sdc = cell_mean(out, ControllerKind::ScheduleDriven, "high");
    let bp = cell_mean(out, ControllerKind::Backpressure, "high");
    let sp = cell_mean(out, ControllerKind::Softpressure, "high");
    let sdc_low = cell_mean(out, ControllerKind::ScheduleDriven, "low");
    let sp_low = cell_mean(out, ControllerKind::Softpressure, "low");

    let sp_below_bp = sp < bp && sp <= 0.95 * bp;
    let bp_below_sdc = bp < sdc;
    let sp_quarter_below_sdc = sp <= 0.75 * sdc;
    let low_tier_close = sp_low <= 1.05 * sdc_low;

    let detail = format!(
        "high-demand mean delay sdc {sdc:.2}, bp {bp:.2}, sp {sp:.2}; \
         low-demand sdc {sdc_low:.2}, sp {sp_low:.2}. \
         sp>=5% below bp: {sp_below_bp}; bp below sdc: {bp_below_sdc}; \
         sp>=25% below sdc: {sp_quarter_below_sdc}; low-tier sp within 5% of sdc: \
         {low_tier_close}"
    );
    if sp_below_bp && bp_below_sdc && sp_quarter_below_sdc && low_tier_close {
        println!("criterion 7 (main comparison): pass — {detail}");
    } else {
        println!("criterion 7 (main comparison): FAIL — {detail}");
        panic!(
            "expected mean-delay ordering sp < bp < sdc with sp >= 25% below sdc; {detail}. \
             In this engine the exact-lookahead scheduler dominates the myopic \
             backpressure rule at every demand level (there is no spillback or \
             lost-time interaction to punish its long greens), so bp < sdc does \
             not occur; sp tracks sdc closely instead of sitting 25% below it. \
             See README \"Known results\"."
        );
    }
}

#[test]
fn criterion_08_cdf_dominance() {
    let out = grid_matrix();
    let p90 = |kind| out.pooled_percentile(kind, "high", 0.90).unwrap();
    let sdc = p90(ControllerKind::ScheduleDriven);
    let bp = p90(ControllerKind::Backpressure);
    let sp = p90(ControllerKind::Softpressure);
    let detail = format!("90th-percentile delay sp {sp:.0}, bp {bp:.0}, sdc {sdc:.0}");
    if sp <= bp && bp <= sdc {
        println!("criterion 8 (cdf dominance): pass — {detail}");
    } else {
        println!("criterion 8 (cdf dominance): FAIL — {detail}");
        panic!(
            "expected p90 ordering sp <= bp <= sdc; {detail}. The measured tail \
             order is sp <= sdc << bp, for the same reason criterion 7 fails: \
             backpressure's myopic extend-or-cycle rule produces long tails that \
             the lookahead schedulers avoid. See README \"Known results\"."
        );
    }
}

#[test]
fn criterion_09_queue_length_table() {
    let out = grid_matrix();
    let link_count = out.link_labels.len();
    let mut loaded = 0usize;
    let mut sp_not_worse = 0usize;
    for link in 0..link_count {
        let sdc = out.avg_queue(ControllerKind::ScheduleDriven, "high", link);
        if sdc > 2.0 {
            loaded += 1;
            if out.avg_queue(ControllerKind::Softpressure, "high", link) <= sdc {
                sp_not_worse += 1;
            }
        }
    }
    let fraction = sp_not_worse as f64 / loaded.max(1) as f64;
    let detail = format!(
        "sp average queue <= sdc's on {sp_not_worse} of {loaded} loaded links \
         ({:.0}%)",
        fraction * 100.0
    );
    if fraction >= 0.8 {
        println!("criterion 9 (queue-length table): pass — {detail}");
    } else {
        println!("criterion 9 (queue-length table): FAIL — {detail}");
        panic!(
            "expected sp <= sdc on at least 80% of links with sdc average > 2; {detail}. \
             The two policies' per-link queues are statistically tied (their mean \
             delays differ by ~3%), so roughly half the loaded links fall on \
             either side. See README \"Known results\"."
        );
    }
}

// ---------------------------------------------------------------------------
// Criterion 10: determinism of the artifacts.
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_determinism() {
    // Two-queue artifact: same seed, byte-identical report and CDF.
    let base = parse_scenario(TWO_QUEUE_SCENARIO).unwrap();
    let mut scenario = base.clone();
    scenario.controller.kind = ControllerKind::Softpressure;
    scenario.seed = 1;
    let first = softpressure::engine::run(&scenario.build().unwrap());
    let second = softpressure::engine::run(&scenario.build().unwrap());
    assert_eq!(first.to_key_values(), second.to_key_values());
    assert_eq!(first.cdf_csv(), second.cdf_csv());

    // Grid artifact: one high-demand cell, full table set byte-identical.
    let spec = ExperimentSpec {
        scenario: parse_scenario(GRID_SCENARIO).unwrap(),
        controllers: vec![ControllerKind::Softpressure],
        tiers: vec![DemandTier::new("high", 1.0)],
        seeds: vec![1],
    };
    let a = compare(&spec).unwrap();
    let b = compare(&spec).unwrap();
    assert_eq!(a.delay_table_csv(), b.delay_table_csv());
    assert_eq!(a.queue_table_csv("high", 0.0), b.queue_table_csv("high", 0.0));
    assert_eq!(
        a.pooled_cdf_csv(ControllerKind::Softpressure, "high"),
        b.pooled_cdf_csv(ControllerKind::Softpressure, "high")
    );
    assert_eq!(
        a.records[0].report.to_key_values(),
        b.records[0].report.to_key_values()
    );
    println!("criterion 10 (determinism): pass — repeated runs are byte-identical");
}
