//! Slotted CSMA/CA for non-critical traffic: channel busy probabilities, the
//! network fixed point and the probability of finishing within a slot budget.

use alloc::vec;
use alloc::vec::Vec;

use super::markov::{csma_chain, stationary_distribution};
use super::{FIXED_POINT_DAMPING, FIXED_POINT_MAX_ITER, FIXED_POINT_TOLERANCE};
use crate::error::{Error, Result};
use crate::par;
use crate::scenario::MacParams;

/// Channel quantities seen by one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelState {
    /// Busy at the first CCA.
    pub beta1: f64,
    /// Busy at the second CCA after an idle first one.
    pub beta2: f64,
    /// Idle for both CCAs: `(1 - beta1)(1 - beta2)`.
    pub alpha: f64,
    /// Transmission fails after a clear channel (collision or link error).
    pub chi: f64,
}

impl ChannelState {
    /// A silent neighbourhood with a perfect link.
    pub const IDLE: ChannelState = ChannelState { beta1: 0.0, beta2: 0.0, alpha: 1.0, chi: 0.0 };
}

/// Solves the busy-probability equations for a node whose neighbours start a
/// first CCA in a slot with probability `q = 1 - prod(1 - xi_x)`, and whose
/// next-hop link has PER `eps`:
///
/// `beta2 = (1 - beta2) q`, `beta1 = (1 - beta1)(1 - beta2) q`,
/// `1 - chi = (1 - eps)(1 - q)`.
pub fn channel_state(neighbour_xi: impl IntoIterator<Item = f64>, eps: f64) -> ChannelState {
    let idle: f64 = neighbour_xi.into_iter().map(|x| 1.0 - x).product();
    let q = 1.0 - idle;
    let beta2 = q / (1.0 + q);
    let beta1 = (1.0 - beta2) * q / (1.0 + (1.0 - beta2) * q);
    ChannelState {
        beta1,
        beta2,
        alpha: (1.0 - beta1) * (1.0 - beta2),
        chi: 1.0 - (1.0 - eps) * idle,
    }
}

/// One contender in the fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct CsmaNode {
    /// Probability the node has a packet queued.
    pub p: f64,
    /// PER towards the next hop.
    pub eps: f64,
    /// Indices of contending neighbours in the same slice.
    pub neighbors: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsmaSolution {
    /// Probability of a first CCA in an arbitrary slot, per node.
    pub xi: Vec<f64>,
    pub state: Vec<ChannelState>,
    /// Stationary distribution of each node's chain.
    pub pi: Vec<Vec<f64>>,
    /// Last undamped step size, per node.
    pub node_residual: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl CsmaSolution {
    pub fn converged(&self) -> bool {
        self.residual < FIXED_POINT_TOLERANCE
    }
}

/// `xi = sum_{i,m} pi(i,m) / W_m`.
fn first_cca_probability(pi: &[f64], mac: &MacParams) -> f64 {
    let stages = mac.max_backoff_stage as usize + 1;
    pi[1..]
        .iter()
        .enumerate()
        .map(|(g, v)| v / mac.window(g % stages) as f64)
        .sum()
}

fn node_update(nodes: &[CsmaNode], xi: &[f64], i: usize, mac: &MacParams) -> Result<(ChannelState, Vec<f64>, f64)> {
    let n = &nodes[i];
    let state = channel_state(n.neighbors.iter().map(|&j| xi[j]), n.eps);
    if n.p <= 0.0 {
        let mut pi = vec![0.0; 1 + mac.max_retries as usize * (mac.max_backoff_stage as usize + 1)];
        pi[0] = 1.0;
        return Ok((state, pi, 0.0));
    }
    let chain = csma_chain(
        n.p.min(1.0),
        state.alpha,
        state.chi,
        mac.max_retries as usize,
        mac.max_backoff_stage as usize,
    );
    let pi = stationary_distribution(&chain)?;
    let x = first_cca_probability(&pi, mac);
    Ok((state, pi, x))
}

/// Damped fixed point over all nodes jointly, starting from `xi0` (or zeros).
/// Always returns the last iterate; check [`CsmaSolution::converged`].
pub(crate) fn solve(nodes: &[CsmaNode], mac: &MacParams, xi0: Option<&[f64]>) -> Result<CsmaSolution> {
    let n = nodes.len();
    let mut xi: Vec<f64> = match xi0 {
        Some(x) => x.to_vec(),
        None => vec![0.0; n],
    };
    let mut iterations = 0;
    loop {
        let updates = par::map_indexed(n, |i| node_update(nodes, &xi, i, mac));
        let mut node_residual = vec![0.0; n];
        let mut state = Vec::with_capacity(n);
        let mut pis = Vec::with_capacity(n);
        let mut new_xi = Vec::with_capacity(n);
        for (i, u) in updates.into_iter().enumerate() {
            let (s, pi, x) = u?;
            node_residual[i] = (x - xi[i]).abs();
            state.push(s);
            pis.push(pi);
            new_xi.push(x);
        }
        let residual = node_residual.iter().copied().fold(0.0, f64::max);
        iterations += 1;
        if residual < FIXED_POINT_TOLERANCE || iterations >= FIXED_POINT_MAX_ITER {
            // The reported state belongs to the iterate it was computed from.
            return Ok(CsmaSolution { xi, state, pi: pis, node_residual, residual, iterations });
        }
        for (x, nx) in xi.iter_mut().zip(&new_xi) {
            *x = (1.0 - FIXED_POINT_DAMPING) * *x + FIXED_POINT_DAMPING * nx;
        }
    }
}

/// Joint fixed point of busy probabilities and first-CCA rates for a set of
/// contending nodes. Fails with the last residual if it does not converge.
pub fn csma_fixed_point(nodes: &[CsmaNode], mac: &MacParams) -> Result<CsmaSolution> {
    let sol = solve(nodes, mac, None)?;
    if sol.converged() {
        Ok(sol)
    } else {
        Err(Error::NoConvergence { residual: sol.residual })
    }
}

/// `phi[m][k]`: probability that stage `m` performs its first CCA `k` slots
/// after the attempt started (`k >= 1`).
///
/// Stage 0 picks `k` uniformly in `1..=W_0`. Stage `m` follows a busy first
/// CCA at `j` (back off `1..=W_m` from `j`) or a busy second CCA at `j + 1`.
pub fn phi_table(windows: &[u32], beta1: f64, beta2: f64) -> Vec<Vec<f64>> {
    let mut table: Vec<Vec<f64>> = Vec::with_capacity(windows.len());
    let w0 = windows[0] as usize;
    let mut first = vec![0.0; w0 + 1];
    for v in first.iter_mut().skip(1) {
        *v = 1.0 / w0 as f64;
    }
    table.push(first);
    for (m, &w) in windows.iter().enumerate().skip(1) {
        let prev = &table[m - 1];
        let w = w as usize;
        let mut cur = vec![0.0; prev.len() + w + 1];
        let (busy1, busy2) = (beta1 / w as f64, (1.0 - beta1) * beta2 / w as f64);
        for (j, &pj) in prev.iter().enumerate() {
            if pj == 0.0 {
                continue;
            }
            for b in 1..=w {
                cur[j + b] += pj * busy1;
                cur[j + b + 1] += pj * busy2;
            }
        }
        table.push(cur);
    }
    table
}

fn convolve_shift2(a: &[f64], b: &[f64], cap: usize) -> Vec<f64> {
    let len = (a.len() + b.len() + 1).min(cap + 1);
    let mut out = vec![0.0; len];
    for (d, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (k, &y) in b.iter().enumerate() {
            let t = d + k + 2;
            if t >= len {
                break;
            }
            out[t] += x * y;
        }
    }
    out
}

/// Cumulative success probability `c[K] = sum_{k=1}^{K} theta(k) (1 - chi)`,
/// where `theta(k)` is the probability of a clear first CCA at slot `k` in any
/// attempt and stage. Indices run to `cap` at most; beyond the returned length
/// the value is constant.
///
/// Attempt `i > 1` restarts two slots after the last CCA of a failed attempt
/// `i - 1` (CCA, CCA, transmit). A failed attempt is a clear channel with a
/// failed transmission at any stage, or a busy channel at the last stage.
pub fn success_profile(state: &ChannelState, mac: &MacParams, cap: usize) -> Vec<f64> {
    let phi = phi_table(&mac.backoff_windows, state.beta1, state.beta2);
    let max_stage = phi.len() - 1;
    let support = phi.iter().map(Vec::len).max().unwrap_or(1);
    let mut any_stage = vec![0.0; support];
    let mut fail = vec![0.0; support];
    for (m, row) in phi.iter().enumerate() {
        let delta = state.alpha * state.chi + if m == max_stage { 1.0 - state.alpha } else { 0.0 };
        for (k, &v) in row.iter().enumerate() {
            any_stage[k] += v;
            fail[k] += v * delta;
        }
    }
    let mut sensed = any_stage.clone();
    sensed.truncate(cap + 1);
    let mut carry = fail.clone();
    carry.truncate(cap + 1);
    for _ in 2..=mac.max_retries {
        let z = convolve_shift2(&carry, &any_stage, cap);
        if z.len() > sensed.len() {
            sensed.resize(z.len(), 0.0);
        }
        for (k, v) in z.iter().enumerate() {
            sensed[k] += v;
        }
        carry = convolve_shift2(&carry, &fail, cap);
    }
    let ok = state.alpha * (1.0 - state.chi);
    let mut cum = Vec::with_capacity(sensed.len());
    let mut acc = 0.0;
    for (k, v) in sensed.iter().enumerate() {
        if k >= 1 {
            acc += v * ok;
        }
        cum.push(acc.min(1.0));
    }
    cum
}

/// Value of a cumulative profile at index `k`, constant past the end.
pub(crate) fn profile_at(cum: &[f64], k: i64) -> f64 {
    if k <= 0 || cum.is_empty() {
        0.0
    } else {
        cum[(k as usize).min(cum.len() - 1)]
    }
}

/// Per-hop reliability `R(S) = sum_{k=1}^{S - T_Q - 1} theta(k)(1 - chi)`.
pub fn csma_reliability(state: &ChannelState, mac: &MacParams, s: u32, t_q: u32) -> f64 {
    let k = s as i64 - t_q as i64 - 1;
    if k < 1 {
        return 0.0;
    }
    profile_at(&success_profile(state, mac, k as usize), k)
}
