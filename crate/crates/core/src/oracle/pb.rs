//! Reference Poisson-binomial distributions.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Largest `n` accepted by [`pb_enumerate`].
pub const ENUMERATION_LIMIT: usize = 20;

/// Pmf of the number of successes by sequential convolution with each
/// Bernoulli factor.
pub fn pb_dp(p: &[f64]) -> Vec<f64> {
    let mut pmf = vec![0.0; p.len() + 1];
    pmf[0] = 1.0;
    for (n, &pi) in p.iter().enumerate() {
        for k in (0..=n + 1).rev() {
            let stay = pmf[k] * (1.0 - pi);
            let up = if k > 0 { pmf[k - 1] * pi } else { 0.0 };
            pmf[k] = stay + up;
        }
    }
    pmf
}

/// Pmf by summing the probability of every one of the `2^n` outcomes.
pub fn pb_enumerate(p: &[f64]) -> Result<Vec<f64>> {
    let n = p.len();
    if n > ENUMERATION_LIMIT {
        return Err(Error::InvalidParameter(alloc::format!(
            "enumeration supports at most {ENUMERATION_LIMIT} trials, got {n}"
        )));
    }
    let mut pmf = vec![0.0; n + 1];
    for mask in 0u32..(1u32 << n) {
        let mut prob = 1.0;
        for (i, &pi) in p.iter().enumerate() {
            prob *= if mask >> i & 1 == 1 { pi } else { 1.0 - pi };
        }
        pmf[mask.count_ones() as usize] += prob;
    }
    Ok(pmf)
}
