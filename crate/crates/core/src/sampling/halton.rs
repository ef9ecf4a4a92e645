//! Radical-inverse (Halton) sequences.

use super::SamplingError;

/// Plain radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv_base = 1.0 / base as f64;
    let mut scale = inv_base;
    let mut value = 0.0;
    while index > 0 {
        value += (index % base) as f64 * scale;
        index /= base;
        scale *= inv_base;
    }
    value
}

/// `index`-th Halton value (1-based) for a prime `base`.
pub fn halton(index: u64, base: u64) -> Result<f64, SamplingError> {
    if index == 0 {
        return Err(SamplingError::InvalidConfig(
            "Halton index starts at 1".into(),
        ));
    }
    if !is_prime(base) {
        return Err(SamplingError::NonPrimeBase(base));
    }
    Ok(radical_inverse(index, base))
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// The first `count` primes.
pub fn first_primes(count: usize) -> Vec<u64> {
    (2..).filter(|&n| is_prime(n)).take(count).collect()
}

/// Radical inverse with every digit (including the implicit trailing zeros,
/// up to double precision) mapped through `perm`.
pub(crate) fn scrambled_radical_inverse(mut index: u64, base: u64, perm: &[u32]) -> f64 {
    let inv_base = 1.0 / base as f64;
    let mut scale = inv_base;
    let mut value = 0.0;
    while scale > 1e-17 {
        value += perm[(index % base) as usize] as f64 * scale;
        index /= base;
        scale *= inv_base;
    }
    value
}
