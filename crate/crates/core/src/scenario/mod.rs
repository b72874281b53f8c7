//! Nodes, parameter bundles and the validated [`Scenario`].

mod index;
mod projection;
mod synthetic;

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::link::{self, PathLossModel, PerCurve};
use crate::math;

pub use index::SpatialIndex;
pub use projection::{from_lat_lon, to_lat_lon, GeoOrigin, EARTH_RADIUS_M};
pub use synthetic::{generate_synthetic, Profile};

/// Default SM antenna height (m).
pub const DEFAULT_SM_HEIGHT: f64 = 2.0;
/// Default DAP (pole) antenna height (m).
pub const DEFAULT_DAP_HEIGHT: f64 = 10.0;
/// Default PER ceiling used to derive the effective coverage ranges.
pub const DEFAULT_PER_CEILING: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(transparent))]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum NodeKind {
    #[cfg_attr(feature = "serde", serde(rename = "sm"))]
    SmartMeter,
    Pole,
}

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance_sq(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn distance(&self, other: &Point) -> f64 {
        math::sqrt(self.distance_sq(other))
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub position: Point,
    /// Antenna height above ground (m).
    pub height: f64,
    /// Penetration loss applies to links touching this node.
    pub indoor: bool,
}

impl Node {
    pub fn smart_meter(id: u32, x: f64, y: f64) -> Self {
        Node {
            id: NodeId(id),
            kind: NodeKind::SmartMeter,
            position: Point::new(x, y),
            height: DEFAULT_SM_HEIGHT,
            indoor: false,
        }
    }

    pub fn pole(id: u32, x: f64, y: f64) -> Self {
        Node {
            id: NodeId(id),
            kind: NodeKind::Pole,
            position: Point::new(x, y),
            height: DEFAULT_DAP_HEIGHT,
            indoor: false,
        }
    }
}

/// Mission-critical traffic goes through the contention-free period (TDMA),
/// non-critical traffic through the contention access period (CSMA/CA).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum TrafficCategory {
    Mc,
    Nc,
}

impl TrafficCategory {
    pub const ALL: [TrafficCategory; 2] = [TrafficCategory::Mc, TrafficCategory::Nc];

    pub fn as_str(self) -> &'static str {
        match self {
            TrafficCategory::Mc => "mc",
            TrafficCategory::Nc => "nc",
        }
    }

    pub(crate) fn index(self) -> usize {
        match self {
            TrafficCategory::Mc => 0,
            TrafficCategory::Nc => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum ArrivalModel {
    /// Periodic with a random phase per node.
    Deterministic,
    Poisson,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrafficClass {
    pub name: String,
    pub category: TrafficCategory,
    /// Bytes.
    pub packet_size: u32,
    /// Mean time between packets of this class at one meter (s).
    pub arrival_interval: f64,
    /// Latency requirement L (s).
    pub latency: f64,
    pub arrival: ArrivalModel,
}

impl TrafficClass {
    pub fn new(
        name: &str,
        category: TrafficCategory,
        packet_size: u32,
        arrival_interval: f64,
        latency: f64,
        arrival: ArrivalModel,
    ) -> Self {
        TrafficClass {
            name: String::from(name),
            category,
            packet_size,
            arrival_interval,
            latency,
            arrival,
        }
    }

    /// Packets per second generated by one meter.
    pub fn rate(&self) -> f64 {
        1.0 / self.arrival_interval
    }

    /// The six smart-grid classes: three non-critical meter-reading flows and
    /// three mission-critical notification/control flows.
    pub fn defaults() -> Vec<TrafficClass> {
        use ArrivalModel::*;
        use TrafficCategory::*;
        const MIN: f64 = 60.0;
        const DAY: f64 = 86_400.0;
        vec![
            TrafficClass::new("mr_periodic", Nc, 250, 15.0 * MIN, 5.0, Deterministic),
            TrafficClass::new("mr_request", Nc, 50, 5.0 * DAY, 30.0, Poisson),
            TrafficClass::new("mr_response", Nc, 250, 5.0 * DAY, 30.0, Poisson),
            TrafficClass::new("power_quality", Mc, 100, 5.0 * MIN, 1.0, Poisson),
            TrafficClass::new("remote_control", Mc, 100, DAY, 1.0, Poisson),
            TrafficClass::new("alert", Mc, 50, 7.0 * DAY, 3.0, Poisson),
        ]
    }

    fn validate(&self) -> Result<()> {
        if !(self.latency > 0.0 && self.latency.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "traffic class {}: latency must be positive",
                self.name
            )));
        }
        if !(self.arrival_interval > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "traffic class {}: arrival interval must be positive",
                self.name
            )));
        }
        if self.packet_size == 0 || self.packet_size > MAX_SLOT_PAYLOAD {
            return Err(Error::InvalidParameter(format!(
                "traffic class {}: packet size {} outside 1..={MAX_SLOT_PAYLOAD} bytes (one slot)",
                self.name, self.packet_size
            )));
        }
        Ok(())
    }
}

/// Largest payload that still fits in one slot.
pub const MAX_SLOT_PAYLOAD: u32 = 250;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RadioParams {
    pub tx_power_dbm: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub bandwidth_hz: f64,
    pub interference_margin_db: f64,
    pub fading_margin_db: f64,
    pub penetration_loss_db: f64,
    pub carrier_freq_hz: f64,
    pub path_loss: PathLossModel,
    pub per_curve: PerCurve,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams {
            // 30 mW
            tx_power_dbm: math::linear_to_db(30.0),
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 7.0,
            bandwidth_hz: 281_000.0,
            interference_margin_db: 6.0,
            fading_margin_db: 12.3,
            penetration_loss_db: 10.0,
            carrier_freq_hz: 900e6,
            path_loss: PathLossModel::ErcegB,
            per_curve: PerCurve::default(),
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<()> {
        let margins = [
            ("noise_figure_db", self.noise_figure_db),
            ("interference_margin_db", self.interference_margin_db),
            ("fading_margin_db", self.fading_margin_db),
            ("penetration_loss_db", self.penetration_loss_db),
        ];
        for (name, v) in margins {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("radio {name} must be >= 0")));
            }
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(Error::InvalidParameter("radio bandwidth must be > 0".into()));
        }
        if !(self.carrier_freq_hz > 0.0) {
            return Err(Error::InvalidParameter("carrier frequency must be > 0".into()));
        }
        if !self.tx_power_dbm.is_finite() || !self.noise_psd_dbm_hz.is_finite() {
            return Err(Error::InvalidParameter("radio powers must be finite".into()));
        }
        self.per_curve.validate()
    }
}

/// Superframe and MAC constants. The frame is `cap_slots` contention slots
/// followed by `cfp_slots` contention-free slots.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MacParams {
    /// T_F (s).
    pub frame_duration: f64,
    /// N_T.
    pub cfp_slots: u32,
    /// N_C.
    pub cap_slots: u32,
    /// N_ARQ: transmission attempts per packet and hop.
    pub max_retries: u32,
    /// M: the last backoff stage index.
    pub max_backoff_stage: u32,
    /// W_0..W_M in slots.
    pub backoff_windows: Vec<u32>,
    /// Packets per second a DAP can absorb.
    pub dap_capacity: f64,
}

impl Default for MacParams {
    fn default() -> Self {
        let m = 4;
        MacParams {
            frame_duration: 0.16,
            cfp_slots: 6,
            cap_slots: 10,
            max_retries: 4,
            max_backoff_stage: m,
            backoff_windows: MacParams::standard_windows(m),
            dap_capacity: 50.0,
        }
    }
}

impl MacParams {
    /// `W_m = 2^min(3 + m, 5)`.
    pub fn standard_windows(max_stage: u32) -> Vec<u32> {
        (0..=max_stage).map(|m| 1u32 << core::cmp::min(3 + m, 5)).collect()
    }

    pub fn frame_slots(&self) -> u32 {
        self.cfp_slots + self.cap_slots
    }

    /// Duration of one slot (s).
    pub fn slot_duration(&self) -> f64 {
        self.frame_duration / self.frame_slots() as f64
    }

    /// Slots per frame available to the given category.
    pub fn class_slots(&self, category: TrafficCategory) -> u32 {
        match category {
            TrafficCategory::Mc => self.cfp_slots,
            TrafficCategory::Nc => self.cap_slots,
        }
    }

    pub fn window(&self, stage: usize) -> u32 {
        self.backoff_windows[stage]
    }

    pub fn validate(&self) -> Result<()> {
        if self.cfp_slots < 1 || self.cap_slots < 1 {
            return Err(Error::InvalidParameter("need at least one CFP and one CAP slot".into()));
        }
        if self.max_retries < 1 {
            return Err(Error::InvalidParameter("max_retries must be >= 1".into()));
        }
        if !(self.frame_duration > 0.0 && self.frame_duration.is_finite()) {
            return Err(Error::InvalidParameter("frame duration must be > 0".into()));
        }
        if self.backoff_windows.len() != self.max_backoff_stage as usize + 1 {
            return Err(Error::InvalidParameter(format!(
                "expected {} backoff windows, got {}",
                self.max_backoff_stage + 1,
                self.backoff_windows.len()
            )));
        }
        if self.backoff_windows.iter().any(|&w| w < 1)
            || self.backoff_windows.windows(2).any(|w| w[1] < w[0])
        {
            return Err(Error::InvalidParameter(
                "backoff windows must be >= 1 and non-decreasing".into(),
            ));
        }
        if !(self.dap_capacity > 0.0) {
            return Err(Error::InvalidParameter("dap capacity must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Scenario {
    pub nodes: Vec<Node>,
    pub radio: RadioParams,
    pub mac: MacParams,
    pub traffic: Vec<TrafficClass>,
    /// d_smax: SM-to-SM effective range (m).
    pub sm_range: f64,
    /// d_pmax: SM-to-pole effective range (m).
    pub pole_range: f64,
    /// Links with a higher PER than this are treated as absent.
    pub per_ceiling: f64,
    /// Required reliability rho.
    pub reliability: f64,
}

/// Optional explicit coverage ranges; missing ones are derived from the radio
/// budget at the PER ceiling.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RangeOverrides {
    pub sm_range: Option<f64>,
    pub pole_range: Option<f64>,
}

impl Scenario {
    /// Builds a scenario, deriving any missing coverage range with
    /// [`link::max_range`] and validating every invariant.
    pub fn new(
        nodes: Vec<Node>,
        radio: RadioParams,
        mac: MacParams,
        traffic: Vec<TrafficClass>,
        reliability: f64,
        per_ceiling: f64,
        ranges: RangeOverrides,
    ) -> Result<Scenario> {
        radio.validate()?;
        if !(per_ceiling > 0.0 && per_ceiling < 1.0) {
            return Err(Error::InvalidParameter("PER ceiling must lie in (0,1)".into()));
        }
        let payload = traffic.iter().map(|t| t.packet_size).max().unwrap_or(MAX_SLOT_PAYLOAD);
        let sm_range = match ranges.sm_range {
            Some(r) => r,
            None => link::max_range(&radio, per_ceiling, DEFAULT_SM_HEIGHT, DEFAULT_SM_HEIGHT, payload)?,
        };
        let pole_range = match ranges.pole_range {
            Some(r) => r,
            None => link::max_range(&radio, per_ceiling, DEFAULT_SM_HEIGHT, DEFAULT_DAP_HEIGHT, payload)?,
        };
        let scenario = Scenario {
            nodes,
            radio,
            mac,
            traffic,
            sm_range,
            pole_range,
            per_ceiling,
            reliability,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for n in &self.nodes {
            if !seen.insert(n.id) {
                return Err(Error::DuplicateNode(n.id));
            }
            if !n.position.is_finite() {
                return Err(Error::InvalidScenario(format!("node {}: non-finite position", n.id)));
            }
            if !(n.height > 0.0 && n.height.is_finite()) {
                return Err(Error::InvalidScenario(format!("node {}: height must be > 0", n.id)));
            }
        }
        let has_sm = self.nodes.iter().any(|n| n.kind == NodeKind::SmartMeter);
        let has_pole = self.nodes.iter().any(|n| n.kind == NodeKind::Pole);
        if has_sm && !has_pole {
            return Err(Error::InvalidScenario("smart meters present but no pole".into()));
        }
        if !(self.reliability > 0.0 && self.reliability < 1.0) {
            return Err(Error::InvalidParameter("reliability must lie in (0,1)".into()));
        }
        if !(self.sm_range >= 0.0 && self.pole_range >= 0.0) {
            return Err(Error::InvalidParameter("coverage ranges must be >= 0".into()));
        }
        if self.traffic.is_empty() {
            return Err(Error::InvalidParameter("at least one traffic class is required".into()));
        }
        for t in &self.traffic {
            t.validate()?;
        }
        self.radio.validate()?;
        self.mac.validate()
    }

    pub fn smart_meters(&self) -> impl Iterator<Item = &Node> + '_ {
        self.nodes.iter().filter(|n| n.kind == NodeKind::SmartMeter)
    }

    pub fn poles(&self) -> impl Iterator<Item = &Node> + '_ {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Pole)
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Sum of per-meter packet rates (packets/s) over all classes.
    pub fn total_rate(&self) -> f64 {
        self.traffic.iter().map(TrafficClass::rate).sum()
    }
}
