//! Gray-mapped QPSK: `(b0, b1) -> ((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2)`.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use num_complex::Complex64;

use crate::error::{invalid, Result};

/// LLR magnitude bound applied by the demapper.
pub const LLR_CLIP: f64 = 30.0;

pub fn qpsk_modulate(bits: &[u8]) -> Result<Vec<Complex64>> {
    if !bits.len().is_multiple_of(2) {
        return invalid(format!("QPSK needs an even bit count, got {}", bits.len()));
    }
    Ok(bits
        .chunks_exact(2)
        .map(|p| {
            Complex64::new(
                (1.0 - 2.0 * p[0] as f64) * FRAC_1_SQRT_2,
                (1.0 - 2.0 * p[1] as f64) * FRAC_1_SQRT_2,
            )
        })
        .collect())
}

/// Gaussian-approximation LLRs `(llr0, llr1)` of one soft symbol.
pub fn qpsk_llr(soft_symbol: Complex64, effective_gain: f64, noise_var: f64) -> Result<(f64, f64)> {
    if noise_var <= 0.0 || noise_var.is_nan() {
        return invalid(format!("noise variance must be positive, got {noise_var}"));
    }
    let scale = 2.0 * SQRT_2 * effective_gain / noise_var;
    Ok((clip(scale * soft_symbol.re), clip(scale * soft_symbol.im)))
}

/// Demaps a whole block into `out` (cleared first).
pub fn qpsk_llrs_into(symbols: &[Complex64], effective_gain: f64, noise_var: f64, out: &mut Vec<f64>) -> Result<()> {
    if noise_var <= 0.0 || noise_var.is_nan() {
        return invalid(format!("noise variance must be positive, got {noise_var}"));
    }
    let scale = 2.0 * SQRT_2 * effective_gain / noise_var;
    out.clear();
    out.reserve(2 * symbols.len());
    for s in symbols {
        out.push(clip(scale * s.re));
        out.push(clip(scale * s.im));
    }
    Ok(())
}

#[inline]
fn clip(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(-LLR_CLIP, LLR_CLIP)
    }
}
