//! Analytic reliability against simulated on-time delivery.

use alloc::vec::Vec;

use super::des::SimSummary;
use crate::mac::NetworkEvaluation;
use crate::placement::PlanContext;
use crate::scenario::{NodeId, TrafficCategory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    /// Largest accepted absolute gap between analytic and simulated reliability.
    pub threshold: f64,
    /// Rows with fewer counted packets are reported but never flagged.
    pub min_samples: u64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions { threshold: 0.05, min_samples: 100 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub node: NodeId,
    pub class: usize,
    pub category: TrafficCategory,
    pub analytic: f64,
    /// On-time fraction; `None` when no packet was counted.
    pub empirical: Option<f64>,
    pub samples: u64,
    pub gap: f64,
    pub flagged: bool,
}

/// All meters of one class pooled; the analytic side is the sample-weighted
/// mean of the per-meter values.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledRow {
    pub class: usize,
    pub category: TrafficCategory,
    pub analytic: f64,
    pub empirical: Option<f64>,
    pub samples: u64,
    pub gap: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub rows: Vec<ValidationRow>,
    pub pooled: Vec<PooledRow>,
    pub options: ValidationOptions,
}

impl ValidationReport {
    /// Largest gap over rows with enough samples.
    pub fn max_gap(&self) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.samples >= self.options.min_samples)
            .map(|r| r.gap)
            .fold(0.0, f64::max)
    }

    pub fn flagged(&self) -> impl Iterator<Item = &ValidationRow> + '_ {
        self.rows.iter().filter(|r| r.flagged)
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| !r.flagged) && self.pooled.iter().all(|r| !r.flagged)
    }
}

/// Compares `evaluation` (indexed by meter position, as returned by the
/// placement) with a simulation of the same forest.
pub fn validate(
    ctx: &PlanContext<'_>,
    evaluation: &NetworkEvaluation,
    summary: &SimSummary,
    options: &ValidationOptions,
) -> ValidationReport {
    let g = &ctx.graph;
    let mut rows = Vec::new();
    let nclass = evaluation.classes.len();
    let mut pool = Vec::from_iter((0..nclass).map(|_| (0.0f64, 0u64, 0u64)));
    for (slot, &i) in ctx.meters.iter().enumerate() {
        if evaluation.contexts[slot].is_none() {
            continue;
        }
        for (c, &(category, _)) in evaluation.classes.iter().enumerate() {
            let analytic = evaluation.class_reliability[slot][c];
            let t = &summary.tally[slot][c];
            let empirical = summary.on_time_ratio(slot, c);
            let gap = empirical.map_or(0.0, |e| (analytic - e).abs());
            pool[c].0 += analytic * t.generated as f64;
            pool[c].1 += t.on_time;
            pool[c].2 += t.generated;
            rows.push(ValidationRow {
                node: g.id(i),
                class: c,
                category,
                analytic,
                empirical,
                samples: t.generated,
                gap,
                flagged: t.generated >= options.min_samples && gap > options.threshold,
            });
        }
    }
    let pooled = pool
        .into_iter()
        .enumerate()
        .map(|(c, (weighted, on_time, n))| {
            let analytic = if n > 0 { weighted / n as f64 } else { 0.0 };
            let empirical = (n > 0).then(|| on_time as f64 / n as f64);
            let gap = empirical.map_or(0.0, |e| (analytic - e).abs());
            PooledRow {
                class: c,
                category: evaluation.classes[c].0,
                analytic,
                empirical,
                samples: n,
                gap,
                flagged: n >= options.min_samples && gap > options.threshold,
            }
        })
        .collect();
    ValidationReport { rows, pooled, options: *options }
}
