//! TDMA grant delay for mission-critical traffic with ARQ.

use alloc::vec;
use alloc::vec::Vec;

use super::csma::profile_at;
use super::poisson_binomial::pb_pmf_truncated;

/// Cumulative reliability `c[s] = sum_i P(L_i <= s) eps^{i-1} (1 - eps)` for
/// `s = 0..=cap`, where `L_i` is the total grant delay over `i` attempts and
/// one attempt waits `u` slots with probability `pmf(u - 1)` of the number of
/// neighbours holding a request. Support beyond `cap` is dropped.
pub fn tdma_profile(neighbour_p: &[f64], eps: f64, attempts: u32, cap: usize) -> Vec<f64> {
    let grant = pb_pmf_truncated(neighbour_p, cap);
    // one[u] = P(l = u)
    let mut one = vec![0.0; cap + 1];
    for (i, &v) in grant.pmf.iter().enumerate() {
        if i < cap {
            one[i + 1] = v;
        }
    }
    let mut cum = vec![0.0; cap + 1];
    let mut total = one.clone();
    let mut weight = 1.0 - eps;
    for attempt in 1..=attempts {
        if attempt > 1 {
            let mut next = vec![0.0; cap + 1];
            for (d, &a) in total.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (u, &b) in one.iter().enumerate().take(cap + 1 - d) {
                    next[d + u] += a * b;
                }
            }
            total = next;
            weight *= eps;
        }
        let mut acc = 0.0;
        for s in 0..=cap {
            acc += total[s];
            cum[s] += weight * acc;
        }
    }
    for v in &mut cum {
        *v = v.min(1.0);
    }
    cum
}

/// Per-hop reliability with the queueing delay taken off the budget.
pub fn tdma_reliability(neighbour_p: &[f64], eps: f64, attempts: u32, s: u32, t_q: u32) -> f64 {
    let k = s as i64 - t_q as i64;
    if k < 1 {
        return 0.0;
    }
    profile_at(&tdma_profile(neighbour_p, eps, attempts, k as usize), k)
}
