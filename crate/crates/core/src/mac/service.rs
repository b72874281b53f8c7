//! Service-time moments, M/G/1 waiting time and retransmission factors.

use crate::error::{Error, Result};
use crate::math;
use crate::scenario::{MacParams, TrafficCategory};

/// Mean CSMA/CA service time in slots: the wait for the CAP when arriving in
/// the CFP, the expected backoff `sum (1 - alpha)^m (W_m + 2) / 2`, a CFP
/// inserted when a busy stage runs past the CAP, and one transmission slot.
pub fn csma_mean_service(mac: &MacParams, alpha: f64) -> f64 {
    let (nt, nc) = (mac.cfp_slots as f64, mac.cap_slots as f64);
    let arrival = (1..=mac.cfp_slots).map(f64::from).sum::<f64>() / (nc + nt);
    let mut backoff = 0.0;
    let mut cfp = 0.0;
    for (m, &w) in mac.backoff_windows.iter().enumerate() {
        let weight = math::powi(1.0 - alpha, m as i32);
        let half = (w as f64 + 2.0) / 2.0;
        backoff += weight * half;
        if m >= 1 {
            cfp += weight * half * nt / nc;
        }
    }
    arrival + backoff + cfp + 1.0
}

/// Mean TDMA service time in slots. `demand` is `(1/2) sum lambda * L / H`
/// over the node and its neighbours, in packets: whole CFPs it fills cost a
/// full frame each, the remainder costs its own slots.
pub fn tdma_mean_service(mac: &MacParams, demand: f64) -> f64 {
    let (nt, nc) = (mac.cfp_slots as f64, mac.cap_slots as f64);
    let arrival = (1..=mac.cap_slots).map(f64::from).sum::<f64>() / (nc + nt);
    let frames = math::floor(demand / nt);
    arrival + frames * (nt + nc) + (demand - frames * nt)
}

/// `E[Y^2] = ((N_C + N_T) / N_x) sum_{k=1}^{S} (R(k) - R(k-1)) k^2` with
/// `r[k] = R(k)` for `k = 0..=S`.
pub fn second_moment(mac: &MacParams, category: TrafficCategory, r: &[f64]) -> f64 {
    let scale = mac.frame_slots() as f64 / mac.class_slots(category) as f64;
    let sum: f64 = r
        .windows(2)
        .enumerate()
        .map(|(k, w)| (w[1] - w[0]) * ((k + 1) as f64) * ((k + 1) as f64))
        .sum();
    scale * sum
}

/// Pollaczek-Khinchin mean wait `lambda E[Y^2] / (2 (1 - lambda/mu))`.
pub fn queue_wait(lambda: f64, second_moment: f64, mu: f64) -> Result<f64> {
    if !(mu > 0.0) || lambda / mu >= 1.0 {
        return Err(Error::UnstableQueue { lambda, mu });
    }
    Ok(lambda * second_moment / (2.0 * (1.0 - lambda / mu)))
}

/// Expected transmissions per delivered packet: `1/(1-eps)` on the CFP,
/// `1/((1-chi)(1-(1-alpha)^{M+1}))` on the CAP.
pub fn retransmission_factor(category: TrafficCategory, eps: f64, chi: f64, alpha: f64, max_stage: u32) -> Result<f64> {
    let denom = match category {
        TrafficCategory::Mc => 1.0 - eps,
        TrafficCategory::Nc => (1.0 - chi) * (1.0 - math::powi(1.0 - alpha, max_stage as i32 + 1)),
    };
    if denom > 0.0 {
        Ok(1.0 / denom)
    } else {
        Err(Error::UnreliableNode)
    }
}
