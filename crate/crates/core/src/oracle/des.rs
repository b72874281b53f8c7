//! Slot-level simulation of the superframe MAC over a frozen routing forest.
//!
//! Each superframe is `N_C` contention slots followed by `N_T`
//! contention-free slots. Non-critical packets use slotted CSMA/CA on the
//! contention slots only: a uniform backoff of `1..=W_m` contention slots,
//! two clear-channel assessments in consecutive slots, then one
//! transmission slot. A CCA is busy when a neighbour transmits in that
//! slot, and neighbours transmitting in the same slot all fail. Mission
//! critical packets get contention-free slots from a scheduler that grants,
//! in order of waiting time, every node none of whose neighbours was
//! granted the same slot. Every transmission also fails independently with
//! the link PER. Propagation delay is zero.

use alloc::collections::{BinaryHeap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::mac::{RouteTree, Uplink};
use crate::math;
use crate::placement::{PlanContext, RoutingForest};
use crate::scenario::{ArrivalModel, NodeId, Scenario, TrafficCategory, TrafficClass};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Packets are generated during `[0, duration)` seconds.
    pub duration: f64,
    /// Packets generated before this time are simulated but not counted.
    pub warmup: f64,
    pub seed: u64,
}

/// Outcome of one generated packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelaySample {
    pub packet_id: u64,
    pub source: NodeId,
    /// Index into the scenario's traffic classes.
    pub class: usize,
    /// Seconds.
    pub generated: f64,
    /// Seconds; `None` if lost or still in flight when the run ended.
    pub delivered: Option<f64>,
    /// Hops completed.
    pub hops: u32,
    pub lost: bool,
}

impl DelaySample {
    pub fn delay(&self) -> Option<f64> {
        self.delivered.map(|d| d - self.generated)
    }
}

/// End-to-end counts for one source and class.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassTally {
    pub generated: u64,
    pub delivered: u64,
    /// Delivered within the class latency.
    pub on_time: u64,
    pub lost: u64,
    pub delay_sum: f64,
}

/// Queue statistics of one meter for one category, in absolute slots.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HopTally {
    pub arrivals: u64,
    pub services: u64,
    pub wait_sum: f64,
    pub service_sum: f64,
    pub service_sq_sum: f64,
}

impl HopTally {
    pub fn mean_wait(&self) -> Option<f64> {
        (self.services > 0).then(|| self.wait_sum / self.services as f64)
    }

    pub fn mean_service(&self) -> Option<f64> {
        (self.services > 0).then(|| self.service_sum / self.services as f64)
    }

    pub fn service_second_moment(&self) -> Option<f64> {
        (self.services > 0).then(|| self.service_sq_sum / self.services as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    pub classes: Vec<(TrafficCategory, f64)>,
    /// `[meter position][class]`.
    pub tally: Vec<Vec<ClassTally>>,
    /// `[meter position][category]`.
    pub hops: Vec<[HopTally; 2]>,
    /// Slots in the counting window `[warmup, duration)`.
    pub window_slots: u64,
    /// Slots simulated in total.
    pub slots: u64,
    pub packets: u64,
}

impl SimSummary {
    /// Fraction of counted packets of `class` from meter `slot` delivered
    /// within the class latency.
    pub fn on_time_ratio(&self, slot: usize, class: usize) -> Option<f64> {
        let t = &self.tally[slot][class];
        (t.generated > 0).then(|| t.on_time as f64 / t.generated as f64)
    }

    /// Arrivals per slot at a meter's queue during the counting window.
    pub fn arrival_rate(&self, slot: usize, category: TrafficCategory) -> f64 {
        self.hops[slot][category.index()].arrivals as f64 / self.window_slots.max(1) as f64
    }
}

#[derive(Debug, Clone, Copy)]
struct Packet {
    id: u64,
    src: usize,
    class: usize,
    generated: f64,
    eligible: u64,
    hops: u32,
    counted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Cca1,
    Cca2,
    Transmit,
}

#[derive(Debug, Clone, Copy)]
struct CsmaTx {
    pkt: Packet,
    attempt: u32,
    stage: u32,
    phase: Phase,
    /// Contention-slot index of the next action.
    at: u64,
    /// Contention-slot index of the current stage's first CCA.
    cca1: u64,
    started: u64,
}

#[derive(Debug, Clone, Copy)]
struct TdmaTx {
    pkt: Packet,
    attempt: u32,
    ready: u64,
    started: u64,
}

#[derive(Debug, Default)]
struct NodeState {
    queue: [VecDeque<Packet>; 2],
    nc: Option<CsmaTx>,
    mc: Option<TdmaTx>,
}

impl NodeState {
    fn is_idle(&self) -> bool {
        self.nc.is_none() && self.mc.is_none() && self.queue[0].is_empty() && self.queue[1].is_empty()
    }
}

struct Sim<'a, F: FnMut(&DelaySample)> {
    tree: &'a RouteTree,
    nodes: Vec<NodeState>,
    active: Vec<usize>,
    is_active: Vec<bool>,
    rng: ChaCha8Rng,
    slot: f64,
    windows: Vec<u32>,
    max_stage: u32,
    attempts: u32,
    cap: u64,
    frame: u64,
    warmup_slot: u64,
    end_slot: u64,
    latency: Vec<f64>,
    summary: SimSummary,
    sink: F,
}

const MC: usize = 0;
const NC: usize = 1;

impl<F: FnMut(&DelaySample)> Sim<'_, F> {
    fn activate(&mut self, i: usize) {
        if !self.is_active[i] {
            self.is_active[i] = true;
            self.active.push(i);
        }
    }

    fn in_window(&self, k: u64) -> bool {
        k >= self.warmup_slot && k < self.end_slot
    }

    fn enqueue(&mut self, i: usize, pkt: Packet, cat: usize) {
        if pkt.counted && self.in_window(pkt.eligible) {
            self.summary.hops[i][cat].arrivals += 1;
        }
        self.nodes[i].queue[cat].push_back(pkt);
        self.activate(i);
    }

    fn finish(&mut self, pkt: Packet, delivered: Option<f64>, lost: bool) {
        if pkt.counted {
            let t = &mut self.summary.tally[pkt.src][pkt.class];
            if lost {
                t.lost += 1;
            }
            if let Some(d) = delivered {
                let delay = d - pkt.generated;
                t.delivered += 1;
                t.delay_sum += delay;
                if delay <= self.latency[pkt.class] + 1e-9 {
                    t.on_time += 1;
                }
            }
        }
        (self.sink)(&DelaySample {
            packet_id: pkt.id,
            source: self.tree.nodes[pkt.src].id,
            class: pkt.class,
            generated: pkt.generated,
            delivered,
            hops: pkt.hops,
            lost,
        });
    }

    /// Packet finished its hop from `i` at the end of slot `k`.
    fn hop_done(&mut self, i: usize, mut pkt: Packet, cat: usize, started: u64, k: u64) {
        if pkt.counted && self.in_window(started) {
            let y = (k + 1 - started) as f64;
            let h = &mut self.summary.hops[i][cat];
            h.service_sum += y;
            h.service_sq_sum += y * y;
        }
        pkt.hops += 1;
        match self.tree.nodes[i].uplink {
            Uplink::Meter(j) => {
                pkt.eligible = k + 1;
                self.enqueue(j, pkt, cat);
            }
            _ => self.finish(pkt, Some((k + 1) as f64 * self.slot), false),
        }
    }

    /// Contention slots elapsed before absolute slot `k`.
    fn cap_before(&self, k: u64) -> u64 {
        (k / self.frame) * self.cap + (k % self.frame).min(self.cap)
    }

    fn start_services(&mut self, k: u64) {
        let in_cap = k % self.frame < self.cap;
        for a in 0..self.active.len() {
            let i = self.active[a];
            if self.nodes[i].mc.is_none() {
                if let Some(pkt) = self.nodes[i].queue[MC].pop_front() {
                    self.record_wait(i, MC, &pkt, k);
                    self.nodes[i].mc = Some(TdmaTx { pkt, attempt: 1, ready: k, started: k });
                }
            }
            if self.nodes[i].nc.is_none() {
                if let Some(pkt) = self.nodes[i].queue[NC].pop_front() {
                    self.record_wait(i, NC, &pkt, k);
                    // The start slot is time zero of the first backoff.
                    let origin = if in_cap { self.cap_before(k) } else { self.cap_before(k) - 1 };
                    let at = origin + self.draw_backoff(0);
                    self.nodes[i].nc =
                        Some(CsmaTx { pkt, attempt: 1, stage: 0, phase: Phase::Cca1, at, cca1: at, started: k });
                }
            }
        }
    }

    fn record_wait(&mut self, i: usize, cat: usize, pkt: &Packet, k: u64) {
        if pkt.counted && self.in_window(k) {
            let h = &mut self.summary.hops[i][cat];
            h.services += 1;
            h.wait_sum += (k - pkt.eligible) as f64;
        }
    }

    fn draw_backoff(&mut self, stage: u32) -> u64 {
        let w = self.windows[stage as usize].max(1);
        self.rng.random_range(1..=w) as u64
    }

    /// Failed attempt whose last first CCA was at `cca1`.
    fn csma_attempt_failed(&mut self, i: usize, mut tx: CsmaTx) {
        tx.attempt += 1;
        if tx.attempt > self.attempts {
            self.finish(tx.pkt, None, true);
            self.nodes[i].nc = None;
            return;
        }
        tx.stage = 0;
        tx.at = tx.cca1 + 2 + self.draw_backoff(0);
        tx.cca1 = tx.at;
        tx.phase = Phase::Cca1;
        self.nodes[i].nc = Some(tx);
    }

    fn csma_busy(&mut self, i: usize, mut tx: CsmaTx, busy_at: u64) {
        if tx.stage >= self.max_stage {
            self.csma_attempt_failed(i, tx);
            return;
        }
        tx.stage += 1;
        tx.at = busy_at + self.draw_backoff(tx.stage);
        tx.cca1 = tx.at;
        tx.phase = Phase::Cca1;
        self.nodes[i].nc = Some(tx);
    }

    fn cap_slot(&mut self, k: u64, c: u64, on_air: &mut [bool]) {
        let tree = self.tree;
        let mut tx_nodes = Vec::new();
        for &i in &self.active {
            if let Some(tx) = &self.nodes[i].nc {
                if tx.phase == Phase::Transmit && tx.at == c {
                    on_air[i] = true;
                    tx_nodes.push(i);
                }
            }
        }
        let busy = |i: usize, on_air: &[bool]| tree.nodes[i].neighbors.iter().any(|&j| on_air[j]);
        for a in 0..self.active.len() {
            let i = self.active[a];
            let Some(tx) = self.nodes[i].nc else { continue };
            if tx.at != c {
                continue;
            }
            match tx.phase {
                Phase::Cca1 if busy(i, on_air) => self.csma_busy(i, tx, c),
                Phase::Cca1 => self.nodes[i].nc = Some(CsmaTx { phase: Phase::Cca2, at: c + 1, ..tx }),
                Phase::Cca2 if busy(i, on_air) => self.csma_busy(i, tx, c),
                Phase::Cca2 => self.nodes[i].nc = Some(CsmaTx { phase: Phase::Transmit, at: c + 1, ..tx }),
                Phase::Transmit => {}
            }
        }
        for &i in &tx_nodes {
            let tx = self.nodes[i].nc.expect("transmitting");
            let collided = busy(i, on_air);
            let lost_on_link = self.rng.random::<f64>() < tree.nodes[i].per[NC];
            if !collided && !lost_on_link {
                self.nodes[i].nc = None;
                self.hop_done(i, tx.pkt, NC, tx.started, k);
            } else {
                self.csma_attempt_failed(i, tx);
            }
        }
        for &i in &tx_nodes {
            on_air[i] = false;
        }
    }

    fn cfp_slot(&mut self, k: u64, granted: &mut [bool]) {
        let tree = self.tree;
        let mut waiting: Vec<(u64, NodeId, usize)> = self
            .active
            .iter()
            .filter_map(|&i| self.nodes[i].mc.as_ref().map(|t| (t.ready, tree.nodes[i].id, i)))
            .collect();
        waiting.sort_unstable();
        let mut picked = Vec::new();
        for &(_, _, i) in &waiting {
            if !tree.nodes[i].neighbors.iter().any(|&j| granted[j]) {
                granted[i] = true;
                picked.push(i);
            }
        }
        for &i in &picked {
            granted[i] = false;
            let mut tx = self.nodes[i].mc.expect("granted");
            if self.rng.random::<f64>() >= tree.nodes[i].per[MC] {
                self.nodes[i].mc = None;
                self.hop_done(i, tx.pkt, MC, tx.started, k);
            } else {
                tx.attempt += 1;
                if tx.attempt > self.attempts {
                    self.nodes[i].mc = None;
                    self.finish(tx.pkt, None, true);
                } else {
                    tx.ready = k + 1;
                    self.nodes[i].mc = Some(tx);
                }
            }
        }
    }
}

/// One packet handed to the simulator by its source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    /// Seconds.
    pub time: f64,
    /// Meter position in [`PlanContext::meters`].
    pub meter: usize,
    /// Index into the scenario's traffic classes.
    pub class: usize,
}

/// Merges the per-meter, per-class generators in time order: periodic
/// classes start at a uniform random phase, the rest are Poisson.
struct Generators<'a> {
    traffic: &'a [TrafficClass],
    rng: ChaCha8Rng,
    heap: BinaryHeap<Reverse<(u64, usize, usize)>>,
    until: f64,
}

impl<'a> Generators<'a> {
    fn new(traffic: &'a [TrafficClass], sources: impl Iterator<Item = usize>, until: f64, seed: u64) -> Self {
        let mut g = Generators { traffic, rng: ChaCha8Rng::seed_from_u64(seed), heap: BinaryHeap::new(), until };
        for i in sources {
            for c in 0..traffic.len() {
                let t = g.next_time(c, None);
                g.push(t, i, c);
            }
        }
        g
    }

    fn next_time(&mut self, class: usize, prev: Option<f64>) -> Option<f64> {
        let t = &self.traffic[class];
        let rate = t.rate();
        if !(rate > 0.0 && rate.is_finite()) {
            return None;
        }
        Some(match (t.arrival, prev) {
            (ArrivalModel::Deterministic, None) => self.rng.random::<f64>() * t.arrival_interval,
            (ArrivalModel::Deterministic, Some(p)) => p + t.arrival_interval,
            (ArrivalModel::Poisson, p) => p.unwrap_or(0.0) + Exp::new(rate).expect("positive rate").sample(&mut self.rng),
        })
    }

    fn push(&mut self, t: Option<f64>, i: usize, c: usize) {
        if let Some(t) = t.filter(|&t| t < self.until) {
            // Non-negative finite floats order like their bit patterns.
            self.heap.push(Reverse((t.to_bits(), i, c)));
        }
    }
}

impl Iterator for Generators<'_> {
    type Item = Arrival;

    fn next(&mut self) -> Option<Arrival> {
        let Reverse((key, i, c)) = self.heap.pop()?;
        let t = f64::from_bits(key);
        let next = self.next_time(c, Some(t));
        self.push(next, i, c);
        Some(Arrival { time: t, meter: i, class: c })
    }
}

/// Runs the simulation with traffic drawn from the scenario's classes on
/// every connected meter, passing each packet outcome to `sink` in
/// completion order. Deterministic for a fixed `config.seed`.
pub fn simulate_des(
    ctx: &PlanContext<'_>,
    forest: &RoutingForest,
    config: &SimConfig,
    sink: impl FnMut(&DelaySample),
) -> SimSummary {
    let tree = forest.route_tree(ctx);
    let depth = tree.depths().unwrap_or_else(|_| vec![None; tree.nodes.len()]);
    let sources = (0..tree.nodes.len()).filter(|&i| depth[i].is_some());
    let arrivals = Generators::new(&ctx.scenario.traffic, sources, config.duration, config.seed);
    run(ctx.scenario, &tree, config, arrivals, sink)
}

/// Replays a fixed arrival trace, sorted by time; arrivals at unconnected
/// meters or at or after `config.duration` are ignored.
pub fn simulate_trace(
    ctx: &PlanContext<'_>,
    forest: &RoutingForest,
    config: &SimConfig,
    trace: &[Arrival],
    sink: impl FnMut(&DelaySample),
) -> SimSummary {
    let tree = forest.route_tree(ctx);
    let depth = tree.depths().unwrap_or_else(|_| vec![None; tree.nodes.len()]);
    let arrivals = trace
        .iter()
        .copied()
        .filter(|a| a.time < config.duration && depth.get(a.meter).is_some_and(Option::is_some));
    run(ctx.scenario, &tree, config, arrivals, sink)
}

fn run(
    s: &Scenario,
    tree: &RouteTree,
    config: &SimConfig,
    arrivals: impl Iterator<Item = Arrival>,
    sink: impl FnMut(&DelaySample),
) -> SimSummary {
    let n = tree.nodes.len();
    let mac = &s.mac;
    let slot = mac.slot_duration();
    let frame = mac.frame_slots() as u64;
    let slot_of = |t: f64| math::ceil(t / slot - 1e-9).max(0.0) as u64;
    let max_latency = s.traffic.iter().map(|t| t.latency).fold(0.0, f64::max);
    let drain = (10.0 * max_latency).max(60.0);
    let hard_end = slot_of(config.duration + drain);

    let mut sim = Sim {
        tree,
        nodes: (0..n).map(|_| NodeState::default()).collect(),
        active: Vec::new(),
        is_active: vec![false; n],
        rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15),
        slot,
        windows: mac.backoff_windows.clone(),
        max_stage: mac.max_backoff_stage,
        attempts: mac.max_retries,
        cap: mac.cap_slots as u64,
        frame,
        warmup_slot: slot_of(config.warmup),
        end_slot: slot_of(config.duration),
        latency: s.traffic.iter().map(|t| t.latency).collect(),
        summary: SimSummary {
            classes: s.traffic.iter().map(|t| (t.category, t.latency)).collect(),
            tally: vec![vec![ClassTally::default(); s.traffic.len()]; n],
            hops: vec![[HopTally::default(), HopTally::default()]; n],
            window_slots: slot_of(config.duration).saturating_sub(slot_of(config.warmup)),
            slots: 0,
            packets: 0,
        },
        sink,
    };

    let mut arrivals = arrivals.peekable();
    let mut on_air = vec![false; n];
    let mut granted = vec![false; n];
    let mut k = 0u64;
    loop {
        while let Some(a) = arrivals.next_if(|a| slot_of(a.time) <= k) {
            let pkt = Packet {
                id: sim.summary.packets,
                src: a.meter,
                class: a.class,
                generated: a.time,
                eligible: slot_of(a.time),
                hops: 0,
                counted: a.time >= config.warmup,
            };
            if pkt.counted {
                sim.summary.tally[a.meter][a.class].generated += 1;
            }
            sim.summary.packets += 1;
            sim.enqueue(a.meter, pkt, s.traffic[a.class].category.index());
        }
        if sim.active.is_empty() {
            match arrivals.peek() {
                Some(a) => {
                    k = k.max(slot_of(a.time));
                    continue;
                }
                None => break,
            }
        }
        if k >= hard_end {
            break;
        }
        sim.start_services(k);
        let pos = k % frame;
        if pos < sim.cap {
            let c = (k / frame) * sim.cap + pos;
            sim.cap_slot(k, c, &mut on_air);
        } else {
            sim.cfp_slot(k, &mut granted);
        }
        let Sim { active, is_active, nodes, .. } = &mut sim;
        active.retain(|&i| {
            let keep = !nodes[i].is_idle();
            is_active[i] = keep;
            keep
        });
        k += 1;
    }

    // Whatever is still queued or in service never arrived.
    for i in 0..n {
        let st = core::mem::take(&mut sim.nodes[i]);
        let pending = st.queue[MC]
            .iter()
            .chain(st.queue[NC].iter())
            .copied()
            .chain(st.mc.map(|t| t.pkt))
            .chain(st.nc.map(|t| t.pkt));
        for pkt in pending {
            sim.finish(pkt, None, false);
        }
    }
    sim.summary.slots = k;
    sim.summary
}
