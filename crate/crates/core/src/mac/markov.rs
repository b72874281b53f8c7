//! Slotted CSMA/CA attempt/backoff-stage Markov chain and a dense stationary
//! solver.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Row-stochastic chain over `(0,0)` followed by `(i, m)` for attempts
/// `i = 1..=N_ARQ` and backoff stages `m = 0..=M`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    pub attempts: usize,
    pub stages: usize,
    /// Row-major `n x n` transition matrix.
    pub t: Vec<f64>,
}

impl MarkovChain {
    pub fn size(&self) -> usize {
        1 + self.attempts * self.stages
    }

    /// Index of state `(i, m)` with `i >= 1`: `(i-1)(M+1) + m + 1`.
    pub fn state(&self, attempt: usize, stage: usize) -> usize {
        (attempt - 1) * self.stages + stage + 1
    }

    pub fn at(&self, from: usize, to: usize) -> f64 {
        self.t[from * self.size() + to]
    }

    /// `max_j |(pi T)_j - pi_j|`.
    pub fn residual(&self, pi: &[f64]) -> f64 {
        let n = self.size();
        (0..n)
            .map(|j| {
                let v: f64 = (0..n).map(|i| pi[i] * self.t[i * n + j]).sum();
                (v - pi[j]).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Builds the chain for a node that has a packet with probability `p`, finds
/// the channel idle for both CCAs with probability `alpha` and fails a
/// transmission (collision or link error) with probability `chi`.
///
/// - `(0,0)` starts attempt 1 at stage 0 with probability `p`.
/// - Idle channel: success returns to `(0,0)`, failure starts the next
///   attempt, or drops the packet after the last one.
/// - Busy channel moves to the next stage; a busy channel at the last stage
///   is an access failure and is treated like a failed transmission.
pub fn csma_chain(p: f64, alpha: f64, chi: f64, attempts: usize, max_stage: usize) -> MarkovChain {
    let stages = max_stage + 1;
    let n = 1 + attempts * stages;
    let mut t = vec![0.0; n * n];
    let idx = |i: usize, m: usize| (i - 1) * stages + m + 1;
    t[0] = 1.0 - p;
    t[idx(1, 0)] += p;
    for i in 1..=attempts {
        let next_attempt = if i < attempts { idx(i + 1, 0) } else { 0 };
        for m in 0..stages {
            let row = idx(i, m) * n;
            t[row] += alpha * (1.0 - chi);
            t[row + next_attempt] += alpha * chi;
            if m < max_stage {
                t[row + idx(i, m + 1)] += 1.0 - alpha;
            } else {
                t[row + next_attempt] += 1.0 - alpha;
            }
        }
    }
    MarkovChain { attempts, stages, t }
}

/// Solves `pi T = pi`, `sum pi = 1` by Gaussian elimination with partial
/// pivoting, falling back to averaged power iteration when the direct system
/// is singular or its answer is not accurate enough.
pub fn stationary_distribution(chain: &MarkovChain) -> Result<Vec<f64>> {
    if let Some(pi) = direct_solve(chain) {
        if chain.residual(&pi) < 1e-12 {
            return Ok(pi);
        }
    }
    power_iteration(chain).ok_or(Error::ChainNotErgodic)
}

fn direct_solve(chain: &MarkovChain) -> Option<Vec<f64>> {
    let n = chain.size();
    // Rows of (T^T - I) with the last equation replaced by normalisation.
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    for r in 0..n {
        for c in 0..n {
            a[r * n + c] = chain.t[c * n + r] - if r == c { 1.0 } else { 0.0 };
        }
    }
    for c in 0..n {
        a[(n - 1) * n + c] = 1.0;
    }
    b[n - 1] = 1.0;
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))?;
        if a[piv * n + col].abs() < 1e-14 {
            return None;
        }
        if piv != col {
            for c in 0..n {
                a.swap(piv * n + c, col * n + c);
            }
            b.swap(piv, col);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f != 0.0 {
                for c in col..n {
                    a[r * n + c] -= f * a[col * n + c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r * n + c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r * n + r];
    }
    if x.iter().any(|v| !v.is_finite() || *v < -1e-12) {
        return None;
    }
    for v in &mut x {
        *v = v.max(0.0);
    }
    let total: f64 = x.iter().sum();
    for v in &mut x {
        *v /= total;
    }
    Some(x)
}

/// Lazy power iteration on `(I + T) / 2`, which shares the stationary vector
/// of `T` but is aperiodic.
fn power_iteration(chain: &MarkovChain) -> Option<Vec<f64>> {
    let n = chain.size();
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..200_000 {
        for j in 0..n {
            let v: f64 = (0..n).map(|i| pi[i] * chain.t[i * n + j]).sum();
            next[j] = 0.5 * (pi[j] + v);
        }
        let delta = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        core::mem::swap(&mut pi, &mut next);
        if delta < 1e-15 {
            break;
        }
    }
    let total: f64 = pi.iter().sum();
    for v in &mut pi {
        *v /= total;
    }
    (chain.residual(&pi) < 1e-10).then_some(pi)
}
