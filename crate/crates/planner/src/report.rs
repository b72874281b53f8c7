//! Output artifacts: solution JSON and GeoJSON, CDF tables, summaries,
//! diagnostics and validation reports.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use dap_core::mac::queue_wait;
use dap_core::oracle::{DelaySample, ValidationReport};
use dap_core::placement::{Parent, PlacementSolution, PlanContext};
use dap_core::scenario::{to_lat_lon, GeoOrigin, MacParams, NodeKind, Point, RadioParams, TrafficClass};
use dap_core::NodeId;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::io::Header;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeterEntry {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub depth: Option<u32>,
    pub dap: Option<NodeId>,
    /// `[MC, NC]`.
    pub reliability: Option<[f64; 2]>,
    /// Scenario class order; empty when unconnected.
    pub class_reliability: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationEntry {
    pub daps: usize,
    pub added: usize,
    pub relocated: usize,
    pub connected: usize,
    pub satisfied: usize,
    pub low_reliability: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DapEntry {
    pub id: NodeId,
    /// Meters in the cluster.
    pub connections: usize,
    /// Meters attached directly.
    pub direct: usize,
    /// Weighted arrival rate, packets/s.
    pub load: f64,
}

/// Parameters the plan was computed with.
#[derive(Debug, Clone, Serialize)]
pub struct Params<'a> {
    pub radio: &'a RadioParams,
    pub mac: &'a MacParams,
    pub traffic: &'a [TrafficClass],
    pub reliability: f64,
    pub per_ceiling: f64,
    pub sm_range: f64,
    pub pole_range: f64,
}

/// Contents of `solution.json` read back by `validate` and `report`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SolutionFile {
    pub header: String,
    pub format_version: u32,
    pub daps: Vec<NodeId>,
    pub unconnected: Vec<NodeId>,
    pub pruned: Vec<NodeId>,
    pub phase1_daps: usize,
    pub iterations: Vec<IterationEntry>,
    pub stopped_by_guard: bool,
    pub meters: Vec<MeterEntry>,
}

impl SolutionFile {
    pub fn read(path: &Path) -> Result<SolutionFile> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: SolutionFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        anyhow::ensure!(
            file.format_version == FORMAT_VERSION,
            "{}: unsupported format version {}",
            path.display(),
            file.format_version
        );
        Ok(file)
    }
}

pub fn meter_entries(ctx: &PlanContext<'_>, sol: &PlacementSolution) -> Vec<MeterEntry> {
    let g = &ctx.graph;
    let f = &sol.forest;
    ctx.meters
        .iter()
        .enumerate()
        .map(|(slot, &i)| {
            let connected = f.is_connected(i);
            MeterEntry {
                id: g.id(i),
                parent: f.parent[i].map(|p| g.id(p.index())),
                depth: connected.then_some(f.depth[i]),
                dap: f.dap_of[i].map(|d| g.id(d)),
                reliability: sol.evaluation.category_reliability(slot),
                class_reliability: if connected { sol.evaluation.class_reliability[slot].clone() } else { Vec::new() },
            }
        })
        .collect()
}

pub fn dap_entries(ctx: &PlanContext<'_>, sol: &PlacementSolution) -> Vec<DapEntry> {
    let g = &ctx.graph;
    let f = &sol.forest;
    f.daps
        .iter()
        .zip(&f.load)
        .map(|(&d, &load)| DapEntry {
            id: g.id(d),
            connections: f.dap_of.iter().filter(|x| **x == Some(d)).count(),
            direct: f.parent.iter().filter(|p| **p == Some(Parent::Dap(d))).count(),
            load,
        })
        .collect()
}

pub fn solution_json(header: &Header, ctx: &PlanContext<'_>, sol: &PlacementSolution) -> Result<String> {
    let s = ctx.scenario;
    let iterations: Vec<IterationEntry> = sol
        .iterations
        .iter()
        .map(|r| IterationEntry {
            daps: r.daps,
            added: r.added,
            relocated: r.relocated,
            connected: r.connected,
            satisfied: r.satisfied,
            low_reliability: r.low_reliability,
        })
        .collect();
    let params = Params {
        radio: &s.radio,
        mac: &s.mac,
        traffic: &s.traffic,
        reliability: s.reliability,
        per_ceiling: s.per_ceiling,
        sm_range: s.sm_range,
        pole_range: s.pole_range,
    };
    let value = json!({
        "header": header.text(),
        "format_version": FORMAT_VERSION,
        "seed": header.seed,
        "config_hash": header.config_hash,
        "meters_total": ctx.meters.len(),
        "poles_total": ctx.poles.len(),
        "daps": sol.daps,
        "phase1_daps": sol.phase1_daps,
        "unconnected": sol.unconnected,
        "pruned": sol.pruned,
        "max_hops": sol.max_hops(),
        "iterations": iterations,
        "stopped_by_guard": sol.stopped_by_guard,
        "convergence_ratio": sol.convergence_ratio(),
        "fixed_point_residual": sol.evaluation.fixed_point_residual,
        "dap_clusters": dap_entries(ctx, sol),
        "meters": meter_entries(ctx, sol),
        // Non-finite values (an infinite arrival interval) come out as null.
        "params": serde_json::to_value(&params)?,
    });
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

fn coords(origin: Option<GeoOrigin>, p: Point) -> Value {
    match origin {
        Some(o) => {
            let (lat, lon) = to_lat_lon(o, p);
            json!([lon, lat])
        }
        None => json!([p.x, p.y]),
    }
}

/// Poles, meters and uplinks as a FeatureCollection. Coordinates are
/// longitude/latitude when the input was geographic, planar metres
/// otherwise (flagged by a top-level `planar` member).
pub fn solution_geojson(
    header: &Header,
    ctx: &PlanContext<'_>,
    sol: &PlacementSolution,
    origin: Option<GeoOrigin>,
) -> Result<String> {
    let g = &ctx.graph;
    let f = &sol.forest;
    let is_dap: Vec<bool> = (0..g.len()).map(|i| f.daps.contains(&i)).collect();
    let mut features = Vec::new();
    for (i, n) in ctx.scenario.nodes.iter().enumerate() {
        let props = match n.kind {
            NodeKind::Pole => json!({
                "id": n.id,
                "role": if is_dap[i] { "dap" } else { "pole" },
            }),
            NodeKind::SmartMeter => {
                let slot = ctx.meter_slot[i].expect("meter");
                let r = sol.evaluation.category_reliability(slot);
                json!({
                    "id": n.id,
                    "role": "sm",
                    "connected": f.is_connected(i),
                    "depth": f.is_connected(i).then_some(f.depth[i]),
                    "dap": f.dap_of[i].map(|d| g.id(d)),
                    "r_mc": r.map(|r| r[0]),
                    "r_nc": r.map(|r| r[1]),
                })
            }
        };
        features.push(json!({
            "type": "Feature",
            "geometry": { "type": "Point", "coordinates": coords(origin, n.position) },
            "properties": props,
        }));
    }
    for &i in &ctx.meters {
        if let Some(p) = f.parent[i] {
            let to = p.index();
            features.push(json!({
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [coords(origin, ctx.position(i)), coords(origin, ctx.position(to))],
                },
                "properties": { "role": "uplink", "from": g.id(i), "to": g.id(to) },
            }));
        }
    }
    let value = json!({
        "type": "FeatureCollection",
        "header": header.text(),
        "planar": origin.is_none(),
        "features": features,
    });
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

/// Empirical CDF of `values` at each distinct value, ascending.
pub fn ecdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (k, x) in v.iter().enumerate() {
        let c = (k + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *x => last.1 = c,
            _ => out.push((*x, c)),
        }
    }
    if let Some(last) = out.last_mut() {
        last.1 = 1.0;
    }
    out
}

/// Fraction of `sorted` (ascending) that is `<= x`.
fn cdf_at(sorted: &[f64], x: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    sorted.partition_point(|v| *v <= x) as f64 / sorted.len() as f64
}

pub fn hops_cdf(header: &Header, sol: &PlacementSolution, ctx: &PlanContext<'_>) -> String {
    let f = &sol.forest;
    let depths: Vec<u32> = ctx.meters.iter().filter(|&&i| f.is_connected(i)).map(|&i| f.depth[i]).collect();
    let mut out = header.line() + "hops,cdf\n";
    let max = depths.iter().copied().max().unwrap_or(0);
    let n = depths.len() as f64;
    for h in 1..=max {
        let c = if h == max { 1.0 } else { depths.iter().filter(|&&d| d <= h).count() as f64 / n };
        let _ = writeln!(out, "{h},{c}");
    }
    out
}

pub fn connections_cdf(header: &Header, sol: &PlacementSolution, ctx: &PlanContext<'_>) -> String {
    let counts: Vec<f64> = dap_entries(ctx, sol).iter().map(|d| d.connections as f64).collect();
    let mut out = header.line() + "connections,cdf\n";
    for (x, c) in ecdf(&counts) {
        let _ = writeln!(out, "{x},{c}");
    }
    out
}

/// Mean queueing delay of every connected meter per category, in
/// milliseconds, from the unrounded queueing formula.
pub fn queue_delays(sol: &PlacementSolution, mac: &MacParams) -> [Vec<f64>; 2] {
    let slot_ms = mac.slot_duration() * 1000.0;
    let mut out = [Vec::new(), Vec::new()];
    for ctx in sol.evaluation.contexts.iter().flatten() {
        for (k, c) in ctx.iter().enumerate() {
            if let Ok(w) = queue_wait(c.lambda, c.second_moment, c.mu) {
                out[k].push(w * slot_ms);
            }
        }
    }
    for v in &mut out {
        v.sort_by(f64::total_cmp);
    }
    out
}

pub fn queue_delay_cdf(header: &Header, sol: &PlacementSolution, mac: &MacParams) -> String {
    let [mc, nc] = queue_delays(sol, mac);
    let mut xs: Vec<f64> = mc.iter().chain(&nc).copied().collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut out = header.line() + "delay_ms,cdf_mc,cdf_nc\n";
    for x in xs {
        let _ = writeln!(out, "{x},{},{}", cdf_at(&mc, x), cdf_at(&nc, x));
    }
    out
}

pub fn summary_text(header: &Header, ctx: &PlanContext<'_>, sol: &PlacementSolution) -> String {
    let f = &sol.forest;
    let mut out = header.line();
    let connected: Vec<u32> = ctx.meters.iter().filter(|&&i| f.is_connected(i)).map(|&i| f.depth[i]).collect();
    let _ = writeln!(out, "meters: {}", ctx.meters.len());
    let _ = writeln!(out, "poles: {}", ctx.poles.len());
    let _ = writeln!(out, "sm range: {:.2} m, pole range: {:.2} m", ctx.scenario.sm_range, ctx.scenario.pole_range);
    let _ = writeln!(out, "reliability target: {}", ctx.scenario.reliability);
    let _ = writeln!(out, "daps: {} (phase 1: {})", sol.dap_count(), sol.phase1_daps);
    let _ = writeln!(out, "iterations:");
    let _ = writeln!(out, "  round daps added relocated connected satisfied low");
    for (k, r) in sol.iterations.iter().enumerate() {
        let _ = writeln!(
            out,
            "  {} {} {} {} {} {} {}",
            k + 1,
            r.daps,
            r.added,
            r.relocated,
            r.connected,
            r.satisfied,
            r.low_reliability
        );
    }
    let _ = writeln!(out, "stopped by guard: {}", sol.stopped_by_guard);
    match sol.convergence_ratio() {
        Some(r) => {
            let _ = writeln!(out, "convergence ratio: {r:.4}");
        }
        None => {
            let _ = writeln!(out, "convergence ratio: n/a");
        }
    }
    let _ = writeln!(out, "connected: {}", connected.len());
    let _ = writeln!(out, "unconnected: {} (pruned for reliability: {})", sol.unconnected.len(), sol.pruned.len());
    if !sol.unconnected.is_empty() {
        let ids: Vec<String> = sol.unconnected.iter().map(|id| id.0.to_string()).collect();
        let _ = writeln!(out, "unconnected ids: {}", ids.join(" "));
    }
    let _ = writeln!(out, "max hops: {}", sol.max_hops());
    if !connected.is_empty() {
        let mean = connected.iter().map(|&d| d as f64).sum::<f64>() / connected.len() as f64;
        let _ = writeln!(out, "mean hops: {mean:.3}");
    }
    let [mc, nc] = queue_delays(sol, &ctx.scenario.mac);
    for (name, v) in [("mc", &mc), ("nc", &nc)] {
        if let Some(max) = v.last() {
            let _ = writeln!(out, "max queueing delay {name}: {max:.4} ms");
        }
    }
    out
}

pub fn diagnostics_csv(header: &Header, ctx: &PlanContext<'_>, sol: &PlacementSolution) -> String {
    let tree = sol.forest.route_tree(ctx);
    let mut out = header.line() + "node,category,lambda,mu,p,alpha,xi,chi,TQ,S,R\n";
    for r in sol.evaluation.diagnostics(&tree) {
        let tq = r.t_q.map_or_else(|| "unstable".to_string(), |t| t.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.node.0,
            r.category.as_str(),
            r.lambda,
            r.mu,
            r.p,
            r.alpha,
            r.xi,
            r.chi,
            tq,
            r.budget,
            r.reliability
        );
    }
    out
}

/// Writes the full plan report set into `dir`.
pub fn write_plan_reports(
    dir: &Path,
    header: &Header,
    ctx: &PlanContext<'_>,
    sol: &PlacementSolution,
    origin: Option<GeoOrigin>,
) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let put = |name: &str, text: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    };
    put("solution.json", solution_json(header, ctx, sol)?)?;
    put("solution.geojson", solution_geojson(header, ctx, sol, origin)?)?;
    put("hops_cdf.csv", hops_cdf(header, sol, ctx))?;
    put("connections_cdf.csv", connections_cdf(header, sol, ctx))?;
    put("queue_delay_cdf.csv", queue_delay_cdf(header, sol, &ctx.scenario.mac))?;
    put("diagnostics.csv", diagnostics_csv(header, ctx, sol))?;
    put("summary.txt", summary_text(header, ctx, sol))?;
    Ok(())
}

/// Peak resident set size of this process in KiB, where the platform
/// reports it.
pub fn peak_rss_kib() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

/// Run statistics; kept apart from the deterministic outputs.
pub fn write_stats(dir: &Path, header: &Header, command: &str, wall_seconds: f64, threads: usize) -> Result<()> {
    let value = json!({
        "header": header.text(),
        "command": command,
        "wall_seconds": wall_seconds,
        "peak_rss_kib": peak_rss_kib(),
        "threads": threads,
    });
    fs::write(dir.join("stats.json"), serde_json::to_string_pretty(&value)? + "\n")?;
    Ok(())
}

pub fn validation_csv(header: &Header, report: &ValidationReport, classes: &[TrafficClass]) -> String {
    let mut out = header.line() + "node,class,category,analytic,empirical,samples,gap,flagged\n";
    for r in &report.rows {
        let emp = r.empirical.map_or(String::new(), |e| e.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.node.0,
            classes[r.class].name,
            r.category.as_str(),
            r.analytic,
            emp,
            r.samples,
            r.gap,
            r.flagged
        );
    }
    out
}

pub fn validation_pooled_csv(header: &Header, report: &ValidationReport, classes: &[TrafficClass]) -> String {
    let mut out = header.line() + "class,category,analytic,empirical,samples,gap,flagged\n";
    for r in &report.pooled {
        let emp = r.empirical.map_or(String::new(), |e| e.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            classes[r.class].name,
            r.category.as_str(),
            r.analytic,
            emp,
            r.samples,
            r.gap,
            r.flagged
        );
    }
    out
}

pub fn validation_summary(header: &Header, report: &ValidationReport, classes: &[TrafficClass], packets: u64) -> String {
    let mut out = header.line();
    let counted = report.rows.iter().filter(|r| r.samples >= report.options.min_samples).count();
    let _ = writeln!(out, "simulated packets: {packets}");
    let _ = writeln!(out, "rows: {} ({counted} with at least {} samples)", report.rows.len(), report.options.min_samples);
    let _ = writeln!(out, "threshold: {}", report.options.threshold);
    let _ = writeln!(out, "max gap: {:.4}", report.max_gap());
    for r in &report.pooled {
        let emp = r.empirical.map_or("n/a".to_string(), |e| format!("{e:.4}"));
        let _ = writeln!(
            out,
            "pooled {} ({}): analytic {:.4} simulated {} gap {:.4} over {} packets",
            classes[r.class].name,
            r.category.as_str(),
            r.analytic,
            emp,
            r.gap,
            r.samples
        );
    }
    let flagged: Vec<_> = report.flagged().collect();
    let _ = writeln!(out, "flagged rows: {}", flagged.len());
    for r in flagged {
        let _ = writeln!(
            out,
            "  node {} {}: analytic {:.4} simulated {:.4} gap {:.4}",
            r.node.0,
            classes[r.class].name,
            r.analytic,
            r.empirical.unwrap_or(f64::NAN),
            r.gap
        );
    }
    let _ = writeln!(out, "result: {}", if report.passed() { "pass" } else { "fail" });
    out
}

/// Streams per-packet DES outcomes as CSV.
pub struct SampleWriter<W: Write> {
    out: W,
    classes: Vec<String>,
}

impl<W: Write> SampleWriter<W> {
    pub fn new(mut out: W, header: &Header, classes: &[TrafficClass]) -> Result<Self> {
        out.write_all(header.line().as_bytes())?;
        out.write_all(b"packet_id,src,class,gen_t,del_t,hops,lost\n")?;
        Ok(SampleWriter { out, classes: classes.iter().map(|c| c.name.clone()).collect() })
    }

    pub fn write(&mut self, s: &DelaySample) -> std::io::Result<()> {
        let del = s.delivered.map_or(String::new(), |d| d.to_string());
        writeln!(
            self.out,
            "{},{},{},{},{},{},{}",
            s.packet_id, s.source.0, self.classes[s.class], s.generated, del, s.hops, s.lost
        )
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}
