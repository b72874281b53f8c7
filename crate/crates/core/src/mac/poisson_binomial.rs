//! Number of competing neighbours with a pending request, evaluated through
//! the discrete Fourier closed form.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::math;

/// Imaginary parts above this indicate a numerical problem rather than
/// round-off.
const IMAG_TOLERANCE: f64 = 1e-9;

/// Distribution of the number of successes among independent Bernoulli trials.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonBinomial {
    /// `pmf[i]` for `i = 0..=n`.
    pub pmf: Vec<f64>,
    /// Largest imaginary residue seen before clamping.
    pub max_imag: f64,
}

impl PoissonBinomial {
    /// `P(l <= s) = sum_{i < s} pmf(i)`: all earlier requests plus our own fit
    /// into `s` slots.
    pub fn grant_cdf(&self, s: usize) -> f64 {
        self.pmf.iter().take(s).sum::<f64>().min(1.0)
    }

    /// `P(l = u) = pmf(u - 1)` for `u >= 1`.
    pub fn grant_pmf(&self, u: usize) -> f64 {
        if u == 0 {
            0.0
        } else {
            self.pmf.get(u - 1).copied().unwrap_or(0.0)
        }
    }
}

/// Full pmf from the closed form
/// `pmf(i) = 1/(n+1) sum_k e^{-j w k i} prod_l (p_l e^{j w k} + 1 - p_l)` with
/// `w = 2 pi / (n + 1)`.
pub fn pb_pmf(p: &[f64]) -> PoissonBinomial {
    pb_pmf_truncated(p, p.len() + 1)
}

/// Only the first `len` pmf entries; the transform itself is still full size.
pub(crate) fn pb_pmf_truncated(p: &[f64], len: usize) -> PoissonBinomial {
    let n = p.len();
    let size = n + 1;
    let w = 2.0 * PI / size as f64;
    let roots: Vec<Complex64> = (0..size)
        .map(|k| Complex64::new(math::cos(w * k as f64), math::sin(w * k as f64)))
        .collect();
    // Products at each frequency; conjugate symmetry halves the work.
    let mut prods = Vec::with_capacity(size);
    for k in 0..size {
        if k > size / 2 {
            let c: Complex64 = prods[size - k];
            prods.push(c.conj());
            continue;
        }
        let z = roots[k];
        let mut acc = Complex64::new(1.0, 0.0);
        for &pl in p {
            acc *= z * pl + (1.0 - pl);
        }
        prods.push(acc);
    }
    let len = len.min(size);
    let mut pmf = Vec::with_capacity(len);
    let mut max_imag: f64 = 0.0;
    for i in 0..len {
        let mut sum = Complex64::new(0.0, 0.0);
        for (k, pk) in prods.iter().enumerate() {
            // Reduce the angle index first so large i*k stays exact.
            let idx = (i * k) % size;
            sum += roots[idx].conj() * pk;
        }
        let v = sum / size as f64;
        max_imag = max_imag.max(v.im.abs());
        pmf.push(v.re.clamp(0.0, 1.0));
    }
    debug_assert!(max_imag < IMAG_TOLERANCE, "imaginary residue {max_imag}");
    PoissonBinomial { pmf, max_imag }
}

/// `P(l <= s)` for competitor probabilities `p`.
pub fn pb_cdf(p: &[f64], s: usize) -> f64 {
    pb_pmf_truncated(p, s).grant_cdf(s)
}
