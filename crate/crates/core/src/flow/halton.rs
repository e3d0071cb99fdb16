//! Halton low-discrepancy sequence.

const PRIMES: [u64; 4] = [2, 3, 5, 7];

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while index > 0 {
        out += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    out
}

/// Point `index` of the 4-dimensional Halton sequence with bases 2, 3, 5, 7.
pub fn point4(index: u64) -> [f64; 4] {
    PRIMES.map(|b| radical_inverse(index, b))
}
