//! Small helpers on complex slices.

use crate::C64;

/// `⟨u, v⟩ = Σ conj(u_i) v_i`.
pub fn dot(u: &[C64], v: &[C64]) -> C64 {
    debug_assert_eq!(u.len(), v.len());
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn norm_inf(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

pub fn norm1(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm()).sum()
}

pub fn sub(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `‖a − b‖₂` without allocating.
pub fn dist2(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Lengths under 1 e-300 are treated as zero.
pub fn normalize(v: &mut [C64]) -> f64 {
    let n = norm2(v);
    if n > 1e-300 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}
