//! Flat `key = value` run configuration.
//!
//! Values are layered: built-in defaults, then the config file, then
//! environment variables, then `--set` arguments. An environment variable
//! `DAP_MAC__CAP_SLOTS=12` sets `mac.cap_slots`: strip the `DAP_` prefix,
//! lowercase, and read `__` as `.`. Unknown keys are errors at every layer.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use dap_core::link::{PathLossModel, PerCurve};
use dap_core::mac::EvalOptions;
use dap_core::oracle::{ExactLimits, ValidationOptions};
use dap_core::placement::{CapacityScope, PlanOptions};
use dap_core::scenario::{
    ArrivalModel, MacParams, Node, RadioParams, RangeOverrides, TrafficCategory, TrafficClass, DEFAULT_DAP_HEIGHT,
    DEFAULT_PER_CEILING, DEFAULT_SM_HEIGHT,
};
use dap_core::Scenario;
use sha2::{Digest, Sha256};

pub const ENV_PREFIX: &str = "DAP_";

/// Reliability target used when the config does not set one.
pub const DEFAULT_RELIABILITY: f64 = 0.98;

#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    /// Simulated seconds of traffic generation.
    pub duration: f64,
    pub warmup: f64,
    pub threshold: f64,
    pub min_samples: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSettings {
    pub max_poles: usize,
    pub max_sms: usize,
    /// Seconds; zero disables the limit.
    pub timeout: f64,
}

/// Every tunable of a run after layering.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub radio: RadioParams,
    pub mac: MacParams,
    pub traffic: Vec<TrafficClass>,
    pub reliability: f64,
    pub per_ceiling: f64,
    pub sm_range: Option<f64>,
    pub pole_range: Option<f64>,
    pub sm_height: f64,
    pub dap_height: f64,
    /// Node file coordinates are `x` = longitude, `y` = latitude in degrees.
    pub latlon: bool,
    /// Tabulated PER curve `sinr_db,per`; the analytic curve when unset.
    pub per_curve_file: Option<PathBuf>,
    pub relocate: bool,
    pub capacity_scope: CapacityScope,
    pub refresh_rounds: usize,
    pub sim: SimSettings,
    pub exact: ExactSettings,
    windows_set: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            radio: RadioParams::default(),
            mac: MacParams::default(),
            traffic: TrafficClass::defaults(),
            reliability: DEFAULT_RELIABILITY,
            per_ceiling: DEFAULT_PER_CEILING,
            sm_range: None,
            pole_range: None,
            sm_height: DEFAULT_SM_HEIGHT,
            dap_height: DEFAULT_DAP_HEIGHT,
            latlon: false,
            per_curve_file: None,
            relocate: true,
            capacity_scope: CapacityScope::Cluster,
            refresh_rounds: EvalOptions::default().refresh_rounds,
            sim: SimSettings { duration: 86_400.0, warmup: 600.0, threshold: 0.05, min_samples: 100 },
            exact: ExactSettings { max_poles: 20, max_sms: 80, timeout: 600.0 },
            windows_set: false,
        }
    }
}

/// Key names with a one-line description, in rendering order. Traffic keys
/// are listed once with `<class>` standing for each class name.
pub const KEYS: &[(&str, &str)] = &[
    ("reliability", "required reliability rho for both categories, in (0,1)"),
    ("per_ceiling", "largest usable link PER; also sets the derived ranges"),
    ("sm_range", "SM-SM range in m; derived from the link budget when unset"),
    ("pole_range", "SM-pole range in m; derived from the link budget when unset"),
    ("sm_height", "antenna height for meter rows without one (m)"),
    ("dap_height", "antenna height for pole rows without one (m)"),
    ("input.latlon", "node file x/y are longitude/latitude in degrees"),
    ("radio.tx_power_dbm", "transmit power"),
    ("radio.noise_psd_dbm_hz", "thermal noise density"),
    ("radio.noise_figure_db", "receiver noise figure"),
    ("radio.bandwidth_hz", "channel bandwidth"),
    ("radio.interference_margin_db", "interference margin"),
    ("radio.fading_margin_db", "fading margin"),
    ("radio.penetration_loss_db", "loss per indoor endpoint"),
    ("radio.carrier_freq_hz", "carrier frequency"),
    ("radio.path_loss", "erceg_b or log_distance"),
    ("radio.path_loss_exponent", "exponent for log_distance"),
    ("radio.coding_gain_db", "coding gain of the analytic PER curve"),
    ("radio.per_curve", "CSV file sinr_db,per replacing the analytic curve"),
    ("mac.frame_duration", "superframe length T_F (s)"),
    ("mac.cfp_slots", "contention-free slots N_T"),
    ("mac.cap_slots", "contention slots N_C"),
    ("mac.max_retries", "transmission attempts per hop N_ARQ"),
    ("mac.max_backoff_stage", "last backoff stage M"),
    ("mac.backoff_windows", "comma list W_0..W_M, or auto for 2^min(3+m,5)"),
    ("mac.dap_capacity", "packets per second one DAP absorbs"),
    ("traffic.<class>.category", "mc or nc"),
    ("traffic.<class>.packet_size", "bytes, at most one slot"),
    ("traffic.<class>.arrival_interval", "seconds between packets; inf disables"),
    ("traffic.<class>.latency", "latency requirement L (s)"),
    ("traffic.<class>.arrival", "deterministic or poisson"),
    ("traffic.<class>.enabled", "false drops the class"),
    ("plan.relocate", "run centroid relocation"),
    ("plan.capacity_scope", "cluster or direct"),
    ("plan.refresh_rounds", "extra CSMA refresh passes in the delay model"),
    ("sim.duration", "simulated seconds of traffic"),
    ("sim.warmup", "seconds excluded from statistics"),
    ("sim.threshold", "largest accepted analytic/simulated gap"),
    ("sim.min_samples", "packets needed before a row can be flagged"),
    ("exact.max_poles", "exact search pole limit"),
    ("exact.max_sms", "exact search meter limit"),
    ("exact.timeout", "exact search time limit (s), 0 for none"),
];

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>().with_context(|| format!("{key}: expected a number, got {v:?}"))
}

fn parse_opt_f64(key: &str, v: &str) -> Result<Option<f64>> {
    if v.is_empty() || v.eq_ignore_ascii_case("auto") {
        Ok(None)
    } else {
        parse_f64(key, v).map(Some)
    }
}

fn parse_u32(key: &str, v: &str) -> Result<u32> {
    v.parse::<u32>().with_context(|| format!("{key}: expected a non-negative integer, got {v:?}"))
}

pub fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Some(true),
        "false" | "no" | "0" | "off" | "" => Some(false),
        _ => None,
    }
}

fn parse_bool_key(key: &str, v: &str) -> Result<bool> {
    parse_bool(v).ok_or_else(|| anyhow!("{key}: expected true or false, got {v:?}"))
}

impl Settings {
    /// Applies one `key = value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let r = &mut self.radio;
        let m = &mut self.mac;
        match key {
            "reliability" => self.reliability = parse_f64(key, v)?,
            "per_ceiling" => self.per_ceiling = parse_f64(key, v)?,
            "sm_range" => self.sm_range = parse_opt_f64(key, v)?,
            "pole_range" => self.pole_range = parse_opt_f64(key, v)?,
            "sm_height" => self.sm_height = parse_f64(key, v)?,
            "dap_height" => self.dap_height = parse_f64(key, v)?,
            "input.latlon" => self.latlon = parse_bool_key(key, v)?,
            "radio.tx_power_dbm" => r.tx_power_dbm = parse_f64(key, v)?,
            "radio.noise_psd_dbm_hz" => r.noise_psd_dbm_hz = parse_f64(key, v)?,
            "radio.noise_figure_db" => r.noise_figure_db = parse_f64(key, v)?,
            "radio.bandwidth_hz" => r.bandwidth_hz = parse_f64(key, v)?,
            "radio.interference_margin_db" => r.interference_margin_db = parse_f64(key, v)?,
            "radio.fading_margin_db" => r.fading_margin_db = parse_f64(key, v)?,
            "radio.penetration_loss_db" => r.penetration_loss_db = parse_f64(key, v)?,
            "radio.carrier_freq_hz" => r.carrier_freq_hz = parse_f64(key, v)?,
            "radio.path_loss" => {
                r.path_loss = match v {
                    "erceg_b" => PathLossModel::ErcegB,
                    "log_distance" => match r.path_loss {
                        PathLossModel::LogDistance { exponent } => PathLossModel::LogDistance { exponent },
                        PathLossModel::ErcegB => PathLossModel::LogDistance { exponent: 3.5 },
                    },
                    _ => bail!("{key}: expected erceg_b or log_distance, got {v:?}"),
                }
            }
            "radio.path_loss_exponent" => {
                let exponent = parse_f64(key, v)?;
                r.path_loss = PathLossModel::LogDistance { exponent };
            }
            "radio.coding_gain_db" => {
                r.per_curve = PerCurve::Analytic { coding_gain_db: parse_f64(key, v)? };
            }
            "radio.per_curve" => self.per_curve_file = (!v.is_empty()).then(|| PathBuf::from(v)),
            "mac.frame_duration" => m.frame_duration = parse_f64(key, v)?,
            "mac.cfp_slots" => m.cfp_slots = parse_u32(key, v)?,
            "mac.cap_slots" => m.cap_slots = parse_u32(key, v)?,
            "mac.max_retries" => m.max_retries = parse_u32(key, v)?,
            "mac.max_backoff_stage" => m.max_backoff_stage = parse_u32(key, v)?,
            "mac.backoff_windows" if v.eq_ignore_ascii_case("auto") => self.windows_set = false,
            "mac.backoff_windows" => {
                m.backoff_windows =
                    v.split(',').map(|w| parse_u32(key, w.trim())).collect::<Result<Vec<_>>>()?;
                self.windows_set = true;
            }
            "mac.dap_capacity" => m.dap_capacity = parse_f64(key, v)?,
            "plan.relocate" => self.relocate = parse_bool_key(key, v)?,
            "plan.capacity_scope" => {
                self.capacity_scope = match v {
                    "cluster" => CapacityScope::Cluster,
                    "direct" => CapacityScope::Direct,
                    _ => bail!("{key}: expected cluster or direct, got {v:?}"),
                }
            }
            "plan.refresh_rounds" => self.refresh_rounds = parse_u32(key, v)? as usize,
            "sim.duration" => self.sim.duration = parse_f64(key, v)?,
            "sim.warmup" => self.sim.warmup = parse_f64(key, v)?,
            "sim.threshold" => self.sim.threshold = parse_f64(key, v)?,
            "sim.min_samples" => self.sim.min_samples = parse_u32(key, v)? as u64,
            "exact.max_poles" => self.exact.max_poles = parse_u32(key, v)? as usize,
            "exact.max_sms" => self.exact.max_sms = parse_u32(key, v)? as usize,
            "exact.timeout" => self.exact.timeout = parse_f64(key, v)?,
            _ => match key.strip_prefix("traffic.").and_then(|k| k.split_once('.')) {
                Some((class, field)) => self.set_traffic(key, class, field, v)?,
                None => bail!("unknown config key {key:?}"),
            },
        }
        if !self.windows_set {
            self.mac.backoff_windows = MacParams::standard_windows(self.mac.max_backoff_stage);
        }
        Ok(())
    }

    fn set_traffic(&mut self, key: &str, class: &str, field: &str, v: &str) -> Result<()> {
        if field == "enabled" {
            if parse_bool_key(key, v)? {
                if !self.traffic.iter().any(|t| t.name == class) {
                    let t = TrafficClass::defaults()
                        .into_iter()
                        .find(|t| t.name == class)
                        .ok_or_else(|| anyhow!("unknown traffic class {class:?} in {key}"))?;
                    self.traffic.push(t);
                }
            } else {
                self.traffic.retain(|t| t.name != class);
            }
            return Ok(());
        }
        let t = self
            .traffic
            .iter_mut()
            .find(|t| t.name == class)
            .ok_or_else(|| anyhow!("unknown or disabled traffic class {class:?} in {key}"))?;
        match field {
            "category" => {
                t.category = match v.to_ascii_lowercase().as_str() {
                    "mc" => TrafficCategory::Mc,
                    "nc" => TrafficCategory::Nc,
                    _ => bail!("{key}: expected mc or nc, got {v:?}"),
                }
            }
            "packet_size" => t.packet_size = parse_u32(key, v)?,
            "arrival_interval" => t.arrival_interval = parse_f64(key, v)?,
            "latency" => t.latency = parse_f64(key, v)?,
            "arrival" => {
                t.arrival = match v.to_ascii_lowercase().as_str() {
                    "deterministic" => ArrivalModel::Deterministic,
                    "poisson" => ArrivalModel::Poisson,
                    _ => bail!("{key}: expected deterministic or poisson, got {v:?}"),
                }
            }
            _ => bail!("unknown config key {key:?}"),
        }
        Ok(())
    }

    /// Applies a config file's text; errors carry `origin:line`.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{origin}:{}: expected `key = value`, got {raw:?}", n + 1))?;
            self.set(k.trim(), v).with_context(|| format!("{origin}:{}", n + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Applies every `DAP_*` variable from `vars`, in name order.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<()> {
        let mut found: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|rest| (env_key(rest), v)))
            .collect();
        found.sort();
        for (k, v) in found {
            self.set(&k, &v).with_context(|| format!("environment override for {k}"))?;
        }
        Ok(())
    }

    /// Applies `key=value` strings from the command line.
    pub fn apply_overrides(&mut self, sets: &[String]) -> Result<()> {
        for s in sets {
            let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("--set expects key=value, got {s:?}"))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// The effective configuration as config-file text that reproduces it.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let r = &self.radio;
        let m = &self.mac;
        let opt = |x: Option<f64>| x.map_or_else(|| "auto".to_string(), |v| v.to_string());
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("reliability", self.reliability.to_string());
        kv("per_ceiling", self.per_ceiling.to_string());
        kv("sm_range", opt(self.sm_range));
        kv("pole_range", opt(self.pole_range));
        kv("sm_height", self.sm_height.to_string());
        kv("dap_height", self.dap_height.to_string());
        kv("input.latlon", self.latlon.to_string());
        kv("radio.tx_power_dbm", r.tx_power_dbm.to_string());
        kv("radio.noise_psd_dbm_hz", r.noise_psd_dbm_hz.to_string());
        kv("radio.noise_figure_db", r.noise_figure_db.to_string());
        kv("radio.bandwidth_hz", r.bandwidth_hz.to_string());
        kv("radio.interference_margin_db", r.interference_margin_db.to_string());
        kv("radio.fading_margin_db", r.fading_margin_db.to_string());
        kv("radio.penetration_loss_db", r.penetration_loss_db.to_string());
        kv("radio.carrier_freq_hz", r.carrier_freq_hz.to_string());
        match r.path_loss {
            PathLossModel::ErcegB => kv("radio.path_loss", "erceg_b".into()),
            PathLossModel::LogDistance { exponent } => {
                kv("radio.path_loss", "log_distance".into());
                kv("radio.path_loss_exponent", exponent.to_string());
            }
        }
        if let PerCurve::Analytic { coding_gain_db } = r.per_curve {
            kv("radio.coding_gain_db", coding_gain_db.to_string());
        }
        if let Some(p) = &self.per_curve_file {
            kv("radio.per_curve", p.display().to_string());
        }
        kv("mac.frame_duration", m.frame_duration.to_string());
        kv("mac.cfp_slots", m.cfp_slots.to_string());
        kv("mac.cap_slots", m.cap_slots.to_string());
        kv("mac.max_retries", m.max_retries.to_string());
        kv("mac.max_backoff_stage", m.max_backoff_stage.to_string());
        let windows = if self.windows_set {
            m.backoff_windows.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
        } else {
            "auto".into()
        };
        kv("mac.backoff_windows", windows);
        kv("mac.dap_capacity", m.dap_capacity.to_string());
        for name in TrafficClass::defaults().iter().map(|t| t.name.clone()) {
            if !self.traffic.iter().any(|t| t.name == name) {
                kv(&format!("traffic.{name}.enabled"), "false".into());
            }
        }
        for t in &self.traffic {
            let p = format!("traffic.{}", t.name);
            kv(&format!("{p}.category"), t.category.as_str().to_ascii_lowercase());
            kv(&format!("{p}.packet_size"), t.packet_size.to_string());
            kv(&format!("{p}.arrival_interval"), t.arrival_interval.to_string());
            kv(&format!("{p}.latency"), t.latency.to_string());
            let arrival = match t.arrival {
                ArrivalModel::Deterministic => "deterministic",
                ArrivalModel::Poisson => "poisson",
            };
            kv(&format!("{p}.arrival"), arrival.into());
        }
        kv("plan.relocate", self.relocate.to_string());
        let scope = match self.capacity_scope {
            CapacityScope::Cluster => "cluster",
            CapacityScope::Direct => "direct",
        };
        kv("plan.capacity_scope", scope.into());
        kv("plan.refresh_rounds", self.refresh_rounds.to_string());
        kv("sim.duration", self.sim.duration.to_string());
        kv("sim.warmup", self.sim.warmup.to_string());
        kv("sim.threshold", self.sim.threshold.to_string());
        kv("sim.min_samples", self.sim.min_samples.to_string());
        kv("exact.max_poles", self.exact.max_poles.to_string());
        kv("exact.max_sms", self.exact.max_sms.to_string());
        kv("exact.timeout", self.exact.timeout.to_string());
        out
    }

    /// First 12 hex digits of the SHA-256 of [`Settings::render`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.render().as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    /// Radio parameters with the tabulated PER curve loaded, if configured.
    pub fn radio_params(&self) -> Result<RadioParams> {
        let mut radio = self.radio.clone();
        if let Some(path) = &self.per_curve_file {
            radio.per_curve = PerCurve::Tabulated(crate::io::read_per_curve(path)?);
        }
        Ok(radio)
    }

    pub fn scenario(&self, nodes: Vec<Node>) -> Result<Scenario> {
        Ok(Scenario::new(
            nodes,
            self.radio_params()?,
            self.mac.clone(),
            self.traffic.clone(),
            self.reliability,
            self.per_ceiling,
            RangeOverrides { sm_range: self.sm_range, pole_range: self.pole_range },
        )?)
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions { refresh_rounds: self.refresh_rounds }
    }

    pub fn plan_options(&self) -> PlanOptions {
        PlanOptions { relocate: self.relocate, eval: self.eval_options() }
    }

    pub fn validation_options(&self) -> ValidationOptions {
        ValidationOptions { threshold: self.sim.threshold, min_samples: self.sim.min_samples }
    }

    pub fn exact_limits(&self) -> ExactLimits {
        ExactLimits { max_poles: self.exact.max_poles, max_sms: self.exact.max_sms }
    }
}

fn env_key(rest: &str) -> String {
    rest.to_ascii_lowercase().replace("__", ".")
}

/// Defaults, then `file`, then the process environment, then `sets`.
pub fn load(file: Option<&Path>, sets: &[String]) -> Result<Settings> {
    let mut s = Settings::default();
    if let Some(f) = file {
        s.apply_file(f)?;
    }
    s.apply_env(std::env::vars())?;
    s.apply_overrides(sets)?;
    Ok(s)
}
