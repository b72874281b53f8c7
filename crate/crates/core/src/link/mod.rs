//! Link budget: path loss, SINR, packet error rate and the additive route cost.

mod graph;

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::scenario::RadioParams;

pub use graph::{Link, LinkGraph, ROUTE_PER_FLOOR};

/// Speed of light (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Reference distance d0 of the Erceg model (m).
pub const REFERENCE_DISTANCE: f64 = 100.0;

/// Terrain type B: intermediate path loss, moderate tree density.
const ERCEG_B: (f64, f64, f64) = (4.0, 0.0065, 17.1);
const ERCEG_RX_CORRECTION: f64 = 10.8;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PathLossModel {
    /// Erceg SUI, terrain type B, with frequency and receive-height corrections.
    ErcegB,
    /// Free space up to the reference distance, then `10 n log10(d/d0)`.
    LogDistance { exponent: f64 },
}

/// Derived Erceg quantities for one pair of antenna heights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErcegTerms {
    /// Base station height after clamping into the model's 10..80 m range.
    pub base_height: f64,
    pub receive_height: f64,
    /// Path loss exponent `a - b h_b + c / h_b`.
    pub exponent: f64,
    pub freq_correction_db: f64,
    pub height_correction_db: f64,
    /// Distance below which free space is used; keeps the curve continuous.
    pub breakpoint: f64,
}

impl ErcegTerms {
    pub fn new(carrier_freq_hz: f64, tx_height: f64, rx_height: f64) -> ErcegTerms {
        let (a, b, c) = ERCEG_B;
        let base_height = tx_height.max(rx_height).clamp(10.0, 80.0);
        let receive_height = tx_height.min(rx_height);
        let exponent = a - b * base_height + c / base_height;
        let freq_correction_db = 6.0 * math::log10(carrier_freq_hz / 2.0e9);
        let height_correction_db = -ERCEG_RX_CORRECTION * math::log10(receive_height / 2.0);
        let breakpoint = REFERENCE_DISTANCE
            * math::powf(10.0, -(freq_correction_db + height_correction_db) / (10.0 * exponent));
        ErcegTerms {
            base_height,
            receive_height,
            exponent,
            freq_correction_db,
            height_correction_db,
            breakpoint,
        }
    }
}

pub fn wavelength(carrier_freq_hz: f64) -> f64 {
    SPEED_OF_LIGHT / carrier_freq_hz
}

/// Free-space loss `20 log10(4 pi d / lambda)` in dB.
pub fn free_space_loss(d: f64, carrier_freq_hz: f64) -> f64 {
    20.0 * math::log10(4.0 * core::f64::consts::PI * d / wavelength(carrier_freq_hz))
}

/// Path loss in dB at distance `d` (m).
///
/// Below the Erceg breakpoint the loss is free space. Above it the Erceg slope
/// and corrections are anchored at the free-space value of the breakpoint, so
/// the curve is continuous and non-decreasing. At the default 900 MHz and a
/// 2 m receiver the breakpoint lies beyond `d0`, so `PL(d0) = A`.
pub fn path_loss(
    model: PathLossModel,
    d: f64,
    carrier_freq_hz: f64,
    tx_height: f64,
    rx_height: f64,
) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::NonPositiveDistance(d));
    }
    if !(tx_height > 0.0 && rx_height > 0.0) {
        return Err(Error::InvalidParameter("antenna heights must be > 0".into()));
    }
    match model {
        PathLossModel::ErcegB => {
            let t = ErcegTerms::new(carrier_freq_hz, tx_height, rx_height);
            if d <= t.breakpoint {
                Ok(free_space_loss(d, carrier_freq_hz))
            } else {
                Ok(free_space_loss(t.breakpoint, carrier_freq_hz)
                    + 10.0 * t.exponent * math::log10(d / REFERENCE_DISTANCE)
                    + t.freq_correction_db
                    + t.height_correction_db)
            }
        }
        PathLossModel::LogDistance { exponent } => {
            if d <= REFERENCE_DISTANCE {
                Ok(free_space_loss(d, carrier_freq_hz))
            } else {
                Ok(free_space_loss(REFERENCE_DISTANCE, carrier_freq_hz)
                    + 10.0 * exponent * math::log10(d / REFERENCE_DISTANCE))
            }
        }
    }
}

/// Thermal noise floor `N0 + F + 10 log10(B)` in dBm.
pub fn noise_floor_dbm(radio: &RadioParams) -> f64 {
    radio.noise_psd_dbm_hz + radio.noise_figure_db + math::linear_to_db(radio.bandwidth_hz)
}

/// SINR in dB over distance `d`. `penetrations` counts the indoor endpoints;
/// each one adds the penetration loss.
pub fn sinr(radio: &RadioParams, d: f64, tx_height: f64, rx_height: f64, penetrations: u32) -> Result<f64> {
    let pl = path_loss(radio.path_loss, d, radio.carrier_freq_hz, tx_height, rx_height)?;
    Ok(radio.tx_power_dbm
        - noise_floor_dbm(radio)
        - radio.interference_margin_db
        - pl
        - radio.fading_margin_db
        - penetrations as f64 * radio.penetration_loss_db)
}

/// Mapping from SINR to packet error rate.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PerCurve {
    /// Uncoded QPSK bit errors over AWGN shifted by a coding gain, raised to the
    /// packet length.
    Analytic { coding_gain_db: f64 },
    /// `(sinr_db, per)` points with strictly increasing SINR, linearly
    /// interpolated and clamped at both ends. The curve already refers to a
    /// packet length, so the size argument is ignored.
    Tabulated(Vec<(f64, f64)>),
}

impl Default for PerCurve {
    fn default() -> Self {
        PerCurve::Analytic { coding_gain_db: 4.0 }
    }
}

/// Gaussian tail `Q(x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * math::erfc(x / core::f64::consts::SQRT_2)
}

impl PerCurve {
    pub fn validate(&self) -> Result<()> {
        match self {
            PerCurve::Analytic { coding_gain_db } => {
                if coding_gain_db.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter("coding gain must be finite".into()))
                }
            }
            PerCurve::Tabulated(points) => {
                if points.is_empty() {
                    return Err(Error::InvalidParameter("PER table is empty".into()));
                }
                for (i, &(s, p)) in points.iter().enumerate() {
                    if !s.is_finite() || !(0.0..=1.0).contains(&p) {
                        return Err(Error::InvalidParameter(format!(
                            "PER table row {}: need finite SINR and PER in [0,1]",
                            i + 1
                        )));
                    }
                    if i > 0 {
                        let (s0, p0) = points[i - 1];
                        if s <= s0 {
                            return Err(Error::InvalidParameter(format!(
                                "PER table row {}: SINR must be strictly increasing",
                                i + 1
                            )));
                        }
                        if p > p0 {
                            return Err(Error::InvalidParameter(format!(
                                "PER table row {}: PER must not increase with SINR",
                                i + 1
                            )));
                        }
                    }
                }
                Ok(())
            }
        }
    }

    /// Bit error rate at `sinr_db`; only meaningful for the analytic curve.
    pub fn bit_error_rate(coding_gain_db: f64, sinr_db: f64) -> f64 {
        let eff = math::db_to_linear(sinr_db + coding_gain_db);
        q_function(math::sqrt(eff))
    }

    /// Packet error rate for a packet of `packet_size` bytes.
    pub fn per(&self, sinr_db: f64, packet_size: u32) -> f64 {
        if sinr_db.is_nan() {
            return 1.0;
        }
        match self {
            PerCurve::Analytic { coding_gain_db } => {
                if sinr_db == f64::INFINITY {
                    return 0.0;
                }
                let ber = Self::bit_error_rate(*coding_gain_db, sinr_db);
                let bits = 8.0 * packet_size as f64;
                // 1 - (1 - ber)^bits without cancellation for tiny BER.
                (-math::expm1(bits * math::ln_1p(-ber))).clamp(0.0, 1.0)
            }
            PerCurve::Tabulated(points) => interpolate(points, sinr_db),
        }
    }
}

fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    let (first, last) = (points[0], points[points.len() - 1]);
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let hi = points.partition_point(|&(s, _)| s <= x);
    let (x0, y0) = points[hi - 1];
    let (x1, y1) = points[hi];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Additive route cost `log(1/(1-eps))`; infinite for a dead link.
pub fn link_cost(per: f64) -> f64 {
    if per >= 1.0 {
        f64::INFINITY
    } else {
        -math::ln_1p(-per)
    }
}

/// PER at distance `d` for an outdoor link between antennas of the given heights.
pub fn per_at(radio: &RadioParams, d: f64, tx_height: f64, rx_height: f64, packet_size: u32) -> Result<f64> {
    Ok(radio.per_curve.per(sinr(radio, d, tx_height, rx_height, 0)?, packet_size))
}

/// Distances beyond this are treated as unbounded range.
pub const RANGE_CAP: f64 = 1.0e8;

/// Largest outdoor distance whose PER stays within `per_ceiling`, found by
/// bisection to 0.1 m.
pub fn max_range(
    radio: &RadioParams,
    per_ceiling: f64,
    tx_height: f64,
    rx_height: f64,
    packet_size: u32,
) -> Result<f64> {
    if !(per_ceiling > 0.0 && per_ceiling < 1.0) {
        return Err(Error::InvalidParameter("PER ceiling must lie in (0,1)".into()));
    }
    let ok = |d: f64| -> Result<bool> { Ok(per_at(radio, d, tx_height, rx_height, packet_size)? <= per_ceiling) };
    let mut lo = REFERENCE_DISTANCE;
    if !ok(lo)? {
        return Err(Error::RadioBudgetInfeasible(per_ceiling));
    }
    let mut hi = 2.0 * lo;
    while ok(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > RANGE_CAP {
            return Ok(RANGE_CAP);
        }
    }
    while hi - lo > 0.1 {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{DEFAULT_DAP_HEIGHT, DEFAULT_SM_HEIGHT};
    use alloc::vec;
    use proptest::prelude::*;

    const F: f64 = 900e6;

    fn radio() -> RadioParams {
        RadioParams::default()
    }

    #[test]
    fn reference_loss_is_free_space_constant() {
        let pl = path_loss(PathLossModel::ErcegB, 100.0, F, DEFAULT_SM_HEIGHT, DEFAULT_DAP_HEIGHT).unwrap();
        let a = 20.0 * math::log10(4.0 * core::f64::consts::PI * 100.0 / (SPEED_OF_LIGHT / F));
        assert!((pl - a).abs() < 1e-12);
        assert!((pl - 71.5).abs() < 0.05);
    }

    #[test]
    fn type_b_exponent() {
        let t = ErcegTerms::new(F, 2.0, 10.0);
        assert!((t.exponent - 5.645).abs() < 1e-12);
        assert_eq!(t.base_height, 10.0);
        assert_eq!(t.receive_height, 2.0);
        // SM to SM links use the model's minimum base height.
        assert_eq!(ErcegTerms::new(F, 2.0, 2.0).base_height, 10.0);
    }

    #[test]
    fn rejects_non_positive_distance() {
        assert!(path_loss(PathLossModel::ErcegB, 0.0, F, 2.0, 10.0).is_err());
        assert!(path_loss(PathLossModel::ErcegB, -1.0, F, 2.0, 10.0).is_err());
    }

    #[test]
    fn continuous_at_breakpoint() {
        let t = ErcegTerms::new(F, 2.0, 10.0);
        let below = path_loss(PathLossModel::ErcegB, t.breakpoint - 1e-9, F, 2.0, 10.0).unwrap();
        let above = path_loss(PathLossModel::ErcegB, t.breakpoint + 1e-9, F, 2.0, 10.0).unwrap();
        assert!((below - above).abs() < 1e-6);
    }

    #[test]
    fn sinr_at_reference_distance() {
        let g = sinr(&radio(), 100.0, 2.0, 10.0, 0).unwrap();
        let by_hand = 14.771 - (-174.0 + 7.0 + 10.0 * math::log10(281_000.0)) - 6.0 - 71.527 - 12.3;
        assert!((g - by_hand).abs() < 0.01, "{g} vs {by_hand}");
    }

    #[test]
    fn indoor_costs_exactly_delta() {
        let r = radio();
        let out = sinr(&r, 250.0, 2.0, 10.0, 0).unwrap();
        let inside = sinr(&r, 250.0, 2.0, 10.0, 1).unwrap();
        assert!((out - inside - r.penetration_loss_db).abs() < 1e-12);
    }

    #[test]
    fn doubling_distance_follows_slope() {
        let r = radio();
        let t = ErcegTerms::new(F, 2.0, 10.0);
        let d = 2.0 * t.breakpoint;
        let g1 = sinr(&r, d, 2.0, 10.0, 0).unwrap();
        let g2 = sinr(&r, 2.0 * d, 2.0, 10.0, 0).unwrap();
        assert!((g1 - g2 - 10.0 * t.exponent * math::log10(2.0)).abs() < 1e-9);
    }

    #[test]
    fn linear_domain_agrees() {
        let r = radio();
        for &d in &[30.0, 100.0, 150.0, 400.0, 2000.0] {
            let pl = path_loss(r.path_loss, d, F, 2.0, 10.0).unwrap();
            let lin = math::db_to_linear(r.tx_power_dbm)
                / (math::db_to_linear(r.noise_psd_dbm_hz + r.noise_figure_db) * r.bandwidth_hz
                    * math::db_to_linear(r.interference_margin_db)
                    * math::db_to_linear(pl)
                    * math::db_to_linear(r.fading_margin_db)
                    * math::db_to_linear(r.penetration_loss_db));
            let db = sinr(&r, d, 2.0, 10.0, 1).unwrap();
            assert!((math::linear_to_db(lin) - db).abs() < 1e-9);
        }
    }

    #[test]
    fn cost_examples() {
        assert_eq!(link_cost(0.0), 0.0);
        assert!((link_cost(0.5) - core::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(link_cost(1.0), f64::INFINITY);
        let two_hops = 2.0 * link_cost(0.1);
        assert!((two_hops - 0.2107).abs() < 1e-4);
        assert!(two_hops < link_cost(0.5));
    }

    #[test]
    fn per_curve_limits() {
        let c = PerCurve::default();
        assert_eq!(c.per(f64::NEG_INFINITY, 100), 1.0);
        assert_eq!(c.per(f64::INFINITY, 100), 0.0);
        assert!(c.per(-30.0, 100) > 0.999_999);
        assert!(c.per(40.0, 100) < 1e-12);
    }

    #[test]
    fn tabulated_interpolation_and_clamp() {
        let c = PerCurve::Tabulated(vec![(0.0, 1.0), (10.0, 0.5), (20.0, 0.0)]);
        c.validate().unwrap();
        assert_eq!(c.per(-5.0, 10), 1.0);
        assert!((c.per(5.0, 10) - 0.75).abs() < 1e-15);
        assert!((c.per(15.0, 10) - 0.25).abs() < 1e-15);
        assert_eq!(c.per(25.0, 10), 0.0);
        assert!(PerCurve::Tabulated(vec![(0.0, 0.5), (0.0, 0.1)]).validate().is_err());
        assert!(PerCurve::Tabulated(vec![(0.0, 0.5), (1.0, 0.6)]).validate().is_err());
    }

    #[test]
    fn per_monotone_on_grid() {
        let c = PerCurve::default();
        for size in [50, 100, 250] {
            let mut prev = 1.0;
            let mut s = -20.0;
            while s <= 40.0 {
                let p = c.per(s, size);
                assert!(p <= prev + 1e-15, "size {size} at {s} dB");
                prev = p;
                s += 0.1;
            }
        }
    }

    #[test]
    fn max_range_brackets() {
        let r = radio();
        let d = max_range(&r, 0.3, 2.0, 10.0, 250).unwrap();
        assert!(per_at(&r, d, 2.0, 10.0, 250).unwrap() <= 0.3);
        assert!(per_at(&r, d + 0.2, 2.0, 10.0, 250).unwrap() > 0.3);
        let tighter = max_range(&r, 0.01, 2.0, 10.0, 250).unwrap();
        assert!(tighter < d);
        let slack = max_range(&r, 1.0 - 1e-12, 2.0, 10.0, 250).unwrap();
        assert!(slack > d);
    }

    #[test]
    fn max_range_infeasible_budget() {
        let mut r = radio();
        r.tx_power_dbm = -40.0;
        assert_eq!(max_range(&r, 0.3, 2.0, 10.0, 250), Err(Error::RadioBudgetInfeasible(0.3)));
    }

    proptest! {
        #[test]
        fn path_loss_non_decreasing(d1 in 1.0f64..5000.0, extra in 0.0f64..5000.0, hr in 1.0f64..20.0, ht in 1.0f64..40.0) {
            for model in [PathLossModel::ErcegB, PathLossModel::LogDistance { exponent: 3.5 }] {
                let a = path_loss(model, d1, F, ht, hr).unwrap();
                let b = path_loss(model, d1 + extra, F, ht, hr).unwrap();
                prop_assert!(b >= a - 1e-9);
            }
        }

        #[test]
        fn cost_is_additive(pers in proptest::collection::vec(0.0f64..0.99, 1..12)) {
            let summed: f64 = pers.iter().map(|&e| link_cost(e)).sum();
            let product: f64 = pers.iter().map(|&e| 1.0 - e).product();
            prop_assert!((summed + libm::log(product)).abs() < 1e-12);
        }

        #[test]
        fn max_range_monotone_in_ceiling(a in 0.01f64..0.98, b in 0.01f64..0.98) {
            let r = radio();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let d_lo = max_range(&r, lo, 2.0, 2.0, 100).unwrap();
            let d_hi = max_range(&r, hi, 2.0, 2.0, 100).unwrap();
            prop_assert!(d_lo <= d_hi + 0.1);
        }
    }
}
