use dap_core::mac::{pb_pmf, EvalOptions};
use dap_core::oracle::{
    exact_min_daps, pb_dp, pb_enumerate, simulate_des, simulate_trace, validate, Arrival, DelaySample, ExactLimits,
    ExactStatus, SimConfig, ValidationOptions,
};
use dap_core::placement::{check, fixed_solution, plan_with, CheckOptions, PlanContext, PlanOptions};
use dap_core::scenario::{
    generate_synthetic, ArrivalModel, MacParams, Node, Profile, RadioParams, RangeOverrides, TrafficCategory,
    TrafficClass,
};
use dap_core::{Error, NodeId, Scenario};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scenario_with(nodes: Vec<Node>, mac: MacParams, traffic: Vec<TrafficClass>, range: f64) -> Scenario {
    Scenario::new(
        nodes,
        RadioParams::default(),
        mac,
        traffic,
        0.9,
        0.3,
        RangeOverrides { sm_range: Some(range), pole_range: Some(range) },
    )
    .unwrap()
}

fn scenario(nodes: Vec<Node>, range: f64) -> Scenario {
    scenario_with(nodes, MacParams::default(), TrafficClass::defaults(), range)
}

fn all_meters(ctx: &PlanContext<'_>) -> Vec<bool> {
    (0..ctx.graph.len()).map(|i| ctx.graph.is_sm(i)).collect()
}

fn never() -> bool {
    false
}

#[test]
fn exact_single_meter_needs_one() {
    let s = scenario(vec![Node::smart_meter(1, 0.0, 0.0), Node::pole(2, 30.0, 0.0)], 200.0);
    let ctx = PlanContext::new(&s).unwrap();
    let r = exact_min_daps(&ctx, &ExactLimits::default(), &EvalOptions::default(), &never).unwrap();
    assert_eq!(r.count, 1);
    assert_eq!(r.daps, vec![NodeId(2)]);
    assert_eq!(r.status, ExactStatus::Optimal);
}

#[test]
fn exact_two_far_clusters_need_two() {
    let mut nodes = Vec::new();
    for (k, cx) in [0.0, 5000.0].into_iter().enumerate() {
        for j in 0..3 {
            nodes.push(Node::smart_meter((10 * k + j) as u32, cx + 20.0 * j as f64, 10.0));
        }
        nodes.push(Node::pole(100 + k as u32, cx, 0.0));
    }
    let s = scenario(nodes, 200.0);
    let ctx = PlanContext::new(&s).unwrap();
    let r = exact_min_daps(&ctx, &ExactLimits::default(), &EvalOptions::default(), &never).unwrap();
    assert_eq!(r.count, 2);
    assert_eq!(r.daps, vec![NodeId(100), NodeId(101)]);
    assert_eq!(r.lower_bound, 2);
    // Neither pole alone covers both clusters, so no single subset is evaluated.
    assert_eq!(r.pruned, 2);
}

#[test]
fn exact_refuses_oversize_instances() {
    let s = generate_synthetic(90, 10, 1.0, Profile::Urban, 1).unwrap();
    let ctx = PlanContext::new(&s).unwrap();
    let err = exact_min_daps(&ctx, &ExactLimits::default(), &EvalOptions::default(), &never).unwrap_err();
    assert!(matches!(err, Error::OversizeInstance(_)));
}

#[test]
fn exact_abort_reports_incomplete() {
    let s = generate_synthetic(30, 10, 1.0, Profile::Rural, 3).unwrap();
    let ctx = PlanContext::new(&s).unwrap();
    let r = exact_min_daps(&ctx, &ExactLimits::default(), &EvalOptions::default(), &|| true).unwrap();
    assert_eq!(r.status, ExactStatus::Incomplete);
}

fn small_instances() -> Vec<Scenario> {
    let mut out = Vec::new();
    for seed in 0..6u64 {
        let profile = [Profile::Rural, Profile::Suburban, Profile::Urban][seed as usize % 3];
        out.push(generate_synthetic(20 + 5 * seed as usize, 8 + seed as usize, 1.5, profile, seed).unwrap());
    }
    out
}

#[test]
fn exact_subsets_pass_the_checker_and_bound_the_heuristic() {
    for s in small_instances() {
        let ctx = PlanContext::new(&s).unwrap();
        let eval = EvalOptions::default();
        let r = exact_min_daps(&ctx, &ExactLimits::default(), &eval, &never).unwrap();
        assert_eq!(r.status, ExactStatus::Optimal);
        let daps: Vec<usize> = r.daps.iter().map(|&id| ctx.graph.index_of(id).unwrap()).collect();
        let mut active = vec![false; ctx.graph.len()];
        for id in &r.target {
            active[ctx.graph.index_of(*id).unwrap()] = true;
        }
        let sol = fixed_solution(&ctx, &daps, &active, &eval).unwrap();
        assert!(check(&ctx, &sol, &CheckOptions::default()).unwrap().is_empty());
        let heuristic = plan_with(&ctx, &PlanOptions::default()).unwrap();
        assert!(heuristic.dap_count() >= r.count, "heuristic {} < optimum {}", heuristic.dap_count(), r.count);
    }
}

/// Same layout with pole ids shuffled.
fn relabel_poles(s: &Scenario, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<u32> = s.poles().map(|p| p.id.0).collect();
    for i in (1..ids.len()).rev() {
        ids.swap(i, rng.random_range(0..=i));
    }
    let mut k = 0;
    let nodes = s
        .nodes
        .iter()
        .map(|n| {
            let mut n = n.clone();
            if n.kind == dap_core::NodeKind::Pole {
                n.id = NodeId(ids[k]);
                k += 1;
            }
            n
        })
        .collect();
    Scenario { nodes, ..s.clone() }
}

#[test]
fn exact_count_invariant_under_pole_relabelling() {
    for (i, s) in small_instances().into_iter().enumerate().take(4) {
        let eval = EvalOptions::default();
        let base = exact_min_daps(&PlanContext::new(&s).unwrap(), &ExactLimits::default(), &eval, &never).unwrap();
        let t = relabel_poles(&s, 100 + i as u64);
        let other = exact_min_daps(&PlanContext::new(&t).unwrap(), &ExactLimits::default(), &eval, &never).unwrap();
        assert_eq!(base.count, other.count);
    }
}

#[test]
fn pb_oracle_examples() {
    assert_eq!(pb_dp(&[1.0]), vec![0.0, 1.0]);
    assert_eq!(pb_enumerate(&[0.5, 0.5]).unwrap(), vec![0.25, 0.5, 0.25]);
    assert_eq!(pb_dp(&[0.5, 0.5]), vec![0.25, 0.5, 0.25]);
}

#[test]
fn pb_dp_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let n = rng.random_range(0..=15);
        let p: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let a = pb_dp(&p);
        let b = pb_enumerate(&p).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn pb_closed_form_matches_dp() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let n = rng.random_range(0..=25);
        let p: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let a = pb_pmf(&p).pmf;
        let b = pb_dp(&p);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}

fn star(n: usize, radius: f64) -> Vec<Node> {
    let mut v = vec![Node::pole(10_000, 0.0, 0.0)];
    for k in 0..n {
        let a = k as f64 * std::f64::consts::TAU / n as f64;
        v.push(Node::smart_meter(k as u32, radius * a.cos(), radius * a.sin()));
    }
    v
}

fn run_all(s: &Scenario, config: &SimConfig) -> (dap_core::oracle::SimSummary, Vec<DelaySample>) {
    let ctx = PlanContext::new(s).unwrap();
    let sol = fixed_solution(&ctx, &ctx.poles, &all_meters(&ctx), &EvalOptions::default()).unwrap();
    let mut samples = Vec::new();
    let summary = simulate_des(&ctx, &sol.forest, config, |d| samples.push(*d));
    (summary, samples)
}

#[test]
fn des_is_deterministic_per_seed() {
    let s = scenario(star(20, 150.0), 400.0);
    let config = SimConfig { duration: 20_000.0, warmup: 0.0, seed: 4 };
    let (a, sa) = run_all(&s, &config);
    let (b, sb) = run_all(&s, &config);
    assert_eq!(a, b);
    assert_eq!(sa, sb);
    let (c, _) = run_all(&s, &SimConfig { seed: 5, ..config });
    assert_ne!(a, c);
}

#[test]
fn des_seeds_agree_within_binomial_bounds() {
    let s = scenario(star(30, 150.0), 400.0);
    let mut rates = Vec::new();
    for seed in 0..4 {
        let (sum, _) = run_all(&s, &SimConfig { duration: 40_000.0, warmup: 0.0, seed });
        let generated: u64 = sum.tally.iter().map(|t| t[3].generated).sum();
        rates.push(generated as f64 / (30.0 * 40_000.0));
    }
    // Power-quality reports: Poisson, one per 300 s per meter.
    let expect: f64 = 1.0 / 300.0;
    let sd = (expect / (30.0 * 40_000.0)).sqrt();
    for r in rates {
        assert!((r - expect).abs() < 4.0 * sd, "{r} vs {expect}");
    }
}

#[test]
fn des_samples_are_consistent() {
    let s = scenario(star(25, 150.0), 400.0);
    let (sum, samples) = run_all(&s, &SimConfig { duration: 30_000.0, warmup: 0.0, seed: 9 });
    assert_eq!(samples.len() as u64, sum.packets);
    for d in &samples {
        if let Some(t) = d.delivered {
            assert!(t >= d.generated);
            assert!(!d.lost);
            assert_eq!(d.hops, 1);
        }
    }
}

fn lossless_pair(mac: MacParams, second: bool) -> Scenario {
    let mut nodes = vec![Node::pole(100, 0.0, 0.0), Node::smart_meter(1, 5.0, 0.0)];
    if second {
        nodes.push(Node::smart_meter(2, -5.0, 0.0));
    }
    let traffic = vec![TrafficClass::new("nc", TrafficCategory::Nc, 100, 1e6, 5.0, ArrivalModel::Poisson)];
    scenario_with(nodes, mac, traffic, 50.0)
}

fn trace_run(s: &Scenario, trace: &[Arrival]) -> Vec<DelaySample> {
    let ctx = PlanContext::new(s).unwrap();
    let sol = fixed_solution(&ctx, &ctx.poles, &all_meters(&ctx), &EvalOptions::default()).unwrap();
    let tree = sol.forest.route_tree(&ctx);
    assert!(tree.nodes.iter().all(|n| n.per == [0.0, 0.0]));
    let mut out = Vec::new();
    simulate_trace(&ctx, &sol.forest, &SimConfig { duration: 100.0, warmup: 0.0, seed: 1 }, trace, |d| out.push(*d));
    out
}

#[test]
fn lone_meter_delivers_in_the_first_cap() {
    let mac = MacParams::default();
    let s = lossless_pair(mac.clone(), false);
    let slot = mac.slot_duration();
    for k in 0..16 {
        let t = 10.0 + k as f64 * slot + slot / 3.0;
        let out = trace_run(&s, &[Arrival { time: t, meter: 0, class: 0 }]);
        assert_eq!(out.len(), 1);
        let d = out[0];
        let delivered = d.delivered.unwrap();
        // Backoff of at most W_0 CAP slots, two CCAs and the transmission,
        // plus one CFP when the countdown crosses it.
        let bound = (mac.window(0) as f64 + 3.0) * slot + 2.0 * mac.cfp_slots as f64 * slot;
        assert!(delivered - t <= bound, "{}", delivered - t);
    }
}

#[test]
fn simultaneous_transmissions_collide() {
    let mac = MacParams {
        max_retries: 1,
        max_backoff_stage: 0,
        backoff_windows: vec![1],
        ..MacParams::default()
    };
    let slot = mac.slot_duration();
    let one = lossless_pair(mac.clone(), false);
    let out = trace_run(&one, &[Arrival { time: slot * 0.5, meter: 0, class: 0 }]);
    assert!(out[0].delivered.is_some());

    let two = lossless_pair(mac, true);
    let trace = [
        Arrival { time: slot * 0.5, meter: 0, class: 0 },
        Arrival { time: slot * 0.5, meter: 1, class: 0 },
    ];
    let out = trace_run(&two, &trace);
    assert_eq!(out.len(), 2);
    assert!(out.iter().all(|d| d.lost && d.delivered.is_none() && d.hops == 0));
}

#[test]
fn busy_channel_defers_instead_of_colliding() {
    let mac = MacParams { max_retries: 1, ..MacParams::default() };
    let slot = mac.slot_duration();
    let two = lossless_pair(mac, true);
    // Second packet arrives once the first is already counting down.
    let trace = [
        Arrival { time: slot * 0.5, meter: 0, class: 0 },
        Arrival { time: slot * 200.5, meter: 1, class: 0 },
    ];
    let out = trace_run(&two, &trace);
    assert!(out.iter().all(|d| d.delivered.is_some()));
}

#[test]
fn zero_traffic_validates_with_zero_gaps() {
    let traffic = vec![
        TrafficClass::new("nc", TrafficCategory::Nc, 100, f64::INFINITY, 5.0, ArrivalModel::Poisson),
        TrafficClass::new("mc", TrafficCategory::Mc, 100, f64::INFINITY, 1.0, ArrivalModel::Deterministic),
    ];
    let s = scenario_with(star(8, 20.0), MacParams::default(), traffic, 100.0);
    let ctx = PlanContext::new(&s).unwrap();
    let sol = fixed_solution(&ctx, &ctx.poles, &all_meters(&ctx), &EvalOptions::default()).unwrap();
    let sum = simulate_des(&ctx, &sol.forest, &SimConfig { duration: 1000.0, warmup: 0.0, seed: 1 }, |_| {});
    assert_eq!(sum.packets, 0);
    let report = validate(&ctx, &sol.evaluation, &sum, &ValidationOptions::default());
    assert_eq!(report.rows.len(), 8 * 2);
    for r in &report.rows {
        assert!((r.analytic - 1.0).abs() < 1e-12);
        assert_eq!(r.gap, 0.0);
    }
    assert!(report.passed());
}

#[test]
fn validation_flags_a_corrupted_analytic_value() {
    let s = scenario(star(10, 100.0), 300.0);
    let ctx = PlanContext::new(&s).unwrap();
    let sol = fixed_solution(&ctx, &ctx.poles, &all_meters(&ctx), &EvalOptions::default()).unwrap();
    let sum = simulate_des(&ctx, &sol.forest, &SimConfig { duration: 200_000.0, warmup: 0.0, seed: 2 }, |_| {});
    let opts = ValidationOptions::default();
    let report = validate(&ctx, &sol.evaluation, &sum, &opts);
    assert!(report.passed());
    assert_eq!(report.rows.len(), 10 * s.traffic.len());

    let mut bad = sol.evaluation.clone();
    bad.class_reliability[0][0] -= 0.2;
    let report = validate(&ctx, &bad, &sum, &opts);
    assert!(!report.passed());
    assert_eq!(report.flagged().count(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pb_pmf_sums_to_one_and_matches_dp(p in prop::collection::vec(0.0f64..=1.0, 0..40)) {
        let dp = pb_dp(&p);
        prop_assert!((dp.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let closed = pb_pmf(&p).pmf;
        for (x, y) in closed.iter().zip(&dp) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn des_never_delivers_before_generation(seed in 0u64..1000, n in 1usize..12) {
        let s = scenario(star(n, 120.0), 400.0);
        let (_, samples) = run_all(&s, &SimConfig { duration: 5_000.0, warmup: 0.0, seed });
        for d in samples {
            if let Some(t) = d.delivered {
                prop_assert!(t >= d.generated);
            } else if d.lost {
                prop_assert_eq!(d.hops, 0);
            }
        }
    }
}
