//! Measurable quantities behind the recovery guarantees, and sanity checks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::ReducedMatrix;
use crate::error::{check_len, Error, Result};
use crate::gelma::{support_of, RecoveryReport};
use crate::rng::{derive_seed, rng_from_seed};
use crate::wave_model::MeasurementMatrix;
use crate::{linalg, C64};

/// Columns materialized at once when scanning a Gram matrix.
const GRAM_BLOCK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    /// `μ = max_{i≠j} |⟨a_i, a_j⟩|`.
    pub mu: f64,
    /// `Δ = √N μ`.
    pub delta: f64,
    /// `max_{i≠j} |⟨t_i, t_j⟩|` for the reduced matrix, if supplied.
    pub mu_t: Option<f64>,
    /// Sparsity used for the incoherence margin.
    pub sparsity: usize,
    /// `1/(3M) − μ_T`; positive when the incoherence condition holds.
    pub incoherence_margin: Option<f64>,
    /// `√𝒩 / (2√ln 𝒩)` for the reduced system's row count.
    pub m_linear: Option<f64>,
    /// `N / √ln N`, the quadratic-data sparsity scale (up to a constant).
    pub m_quadratic_scale: f64,
    /// Set when `K = 1` and the coherences are undefined (reported as 0).
    pub single_column: bool,
}

/// The sparsity reference curve `√n / (2√ln n)`.
pub fn linear_sparsity_bound(n: usize) -> f64 {
    let n = n as f64;
    n.sqrt() / (2.0 * n.ln().sqrt())
}

/// `N / √ln N`.
pub fn quadratic_sparsity_scale(n: usize) -> f64 {
    let n = n as f64;
    n / n.ln().sqrt()
}

fn max_offdiag(ncols: usize, column: impl Fn(usize) -> Vec<C64> + Sync) -> f64 {
    let blocks: Vec<usize> = (0..ncols).step_by(GRAM_BLOCK).collect();
    let load = |start: usize| -> Vec<Vec<C64>> {
        (start..(start + GRAM_BLOCK).min(ncols)).map(&column).collect()
    };
    blocks
        .par_iter()
        .map(|&bi| {
            let left = load(bi);
            let mut worst: f64 = 0.0;
            for &bj in blocks.iter().filter(|&&bj| bj >= bi) {
                let right = if bj == bi { None } else { Some(load(bj)) };
                let right = right.as_ref().unwrap_or(&left);
                for (i, u) in left.iter().enumerate() {
                    for (j, v) in right.iter().enumerate() {
                        if bi + i < bj + j {
                            worst = worst.max(linalg::dot(u, v).norm());
                        }
                    }
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

/// Mutual coherence of `A` (and of the reduced `T` when given).
pub fn coherence_report(a: &MeasurementMatrix, t: Option<&ReducedMatrix>, sparsity: usize) -> CoherenceReport {
    use crate::operator::LinearOperator;
    let single_column = a.ncols() < 2;
    let mu = if single_column {
        0.0
    } else {
        max_offdiag(a.ncols(), |k| a.column(k).to_vec())
    };
    let mu_t = t.map(|t| {
        if single_column {
            0.0
        } else {
            max_offdiag(t.ncols(), |k| t.column(k))
        }
    });
    let m_linear = t.map(|t| linear_sparsity_bound(t.nrows()));
    CoherenceReport {
        mu,
        delta: (a.nrows() as f64).sqrt() * mu,
        mu_t,
        sparsity,
        incoherence_margin: mu_t.filter(|_| sparsity > 0).map(|m| 1.0 / (3.0 * sparsity as f64) - m),
        m_linear,
        m_quadratic_scale: quadratic_sparsity_scale(a.nrows()),
        single_column,
    }
}

/// `min_{i ∈ supp} |χ_i| / ‖χ‖_∞`; `None` for the zero vector.
pub fn gamma(chi: &[f64]) -> Option<f64> {
    let max = chi.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if max == 0.0 {
        return None;
    }
    let min = chi
        .iter()
        .map(|v| v.abs())
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min);
    Some(min / max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportMetrics {
    pub true_support: Vec<usize>,
    pub recovered: Vec<usize>,
    pub exact: bool,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// 1 for exact recovery, 0 otherwise.
    pub score: f64,
    pub gamma: Option<f64>,
}

/// Compares the support of `report.chi` (at `threshold`) with the nonzeros of `chi_true`.
pub fn support_metrics(chi_true: &[f64], report: &RecoveryReport, threshold: f64) -> Result<SupportMetrics> {
    check_len("true chi", report.chi.len(), chi_true.len())?;
    let recovered = support_of(&report.chi, threshold);
    Ok(compare_supports(chi_true, recovered))
}

pub fn compare_supports(chi_true: &[f64], recovered: Vec<usize>) -> SupportMetrics {
    let true_support: Vec<usize> = chi_true
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(k, _)| k)
        .collect();
    let false_positives = recovered.iter().filter(|k| chi_true[**k] == 0.0).count();
    let false_negatives = true_support.iter().filter(|k| !recovered.contains(k)).count();
    let exact = false_positives == 0 && false_negatives == 0;
    SupportMetrics {
        gamma: gamma(chi_true),
        true_support,
        recovered,
        exact,
        false_positives,
        false_negatives,
        score: if exact { 1.0 } else { 0.0 },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailVariable {
    /// Uniform on `{−1, +1}`.
    Rademacher,
    /// Uniform on the complex unit circle.
    UniformPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub t: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub bound: f64,
    /// `empirical ≤ bound + 3 · std_error`.
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub variable: TailVariable,
    pub samples: usize,
    pub frobenius: f64,
    pub rows: Vec<TailRow>,
}

impl TailCheck {
    pub fn all_hold(&self) -> bool {
        self.rows.iter().all(|r| r.holds)
    }
}

/// `2 exp(−t² / (32 K⁴ ‖M‖_F²))`; 2 when `‖M‖_F = 0`.
pub fn hanson_wright_bound(t: f64, frobenius: f64, bound_k: f64) -> f64 {
    let denom = 32.0 * bound_k.powi(4) * frobenius * frobenius;
    if denom == 0.0 {
        return if t > 0.0 { 0.0 } else { 2.0 };
    }
    2.0 * (-t * t / denom).exp()
}

const TAIL_CHUNK: usize = 4096;

/// Random real `size × size` Gaussian matrix with zero diagonal.
pub fn random_diagonal_free(size: usize, seed: u64) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rng_from_seed(seed);
    let mut m = vec![0.0; size * size];
    for j in 0..size {
        for i in 0..size {
            if i != j {
                m[j * size + i] = StandardNormal.sample(&mut rng);
            }
        }
    }
    m
}

/// Monte-Carlo tail of `Ξ = Σ_{i≠j} X_j X_i m_ij` against the bounded symmetric Hanson–Wright bound.
///
/// `matrix` is column-major `size × size`; its diagonal is ignored.
pub fn tail_check_with_matrix(
    matrix: &[f64],
    size: usize,
    samples: usize,
    t_grid: &[f64],
    seed: u64,
    variable: TailVariable,
) -> Result<TailCheck> {
    check_len("tail-check matrix", size * size, matrix.len())?;
    if samples < 10_000 {
        return Err(Error::domain("tail check needs at least 1e4 samples"));
    }
    let mut m = matrix.to_vec();
    for i in 0..size {
        m[i * size + i] = 0.0;
    }
    let frobenius = m.iter().map(|v| v * v).sum::<f64>().sqrt();
    let chunks = samples.div_ceil(TAIL_CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let n = TAIL_CHUNK.min(samples - c * TAIL_CHUNK);
            let mut rng = rng_from_seed(derive_seed(seed, &[c as u64]));
            let mut counts = vec![0usize; t_grid.len()];
            let mut x = vec![C64::default(); size];
            for _ in 0..n {
                for xi in x.iter_mut() {
                    *xi = match variable {
                        TailVariable::Rademacher => {
                            C64::new(if rand::Rng::random::<bool>(&mut rng) { 1.0 } else { -1.0 }, 0.0)
                        }
                        TailVariable::UniformPhase => C64::from_polar(
                            1.0,
                            rand::Rng::random_range(&mut rng, 0.0..std::f64::consts::TAU),
                        ),
                    };
                }
                let mut xi_sum = C64::default();
                for j in 0..size {
                    let col = &m[j * size..(j + 1) * size];
                    let inner: C64 = col.iter().zip(&x).map(|(mij, xi)| xi * *mij).sum();
                    xi_sum += inner * x[j];
                }
                let mag = xi_sum.norm();
                for (cnt, &t) in counts.iter_mut().zip(t_grid) {
                    if mag > t {
                        *cnt += 1;
                    }
                }
            }
            counts
        })
        .reduce(
            || vec![0usize; t_grid.len()],
            |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect(),
        );
    let rows = t_grid
        .iter()
        .zip(&counts)
        .map(|(&t, &count)| {
            let p = count as f64 / samples as f64;
            let std_error = (p * (1.0 - p) / samples as f64).sqrt();
            let bound = hanson_wright_bound(t, frobenius, 1.0);
            TailRow {
                t,
                empirical: p,
                std_error,
                bound,
                holds: p <= bound + 3.0 * std_error,
            }
        })
        .collect();
    Ok(TailCheck {
        variable,
        samples,
        frobenius,
        rows,
    })
}

/// Tail check on a freshly drawn diagonal-free Gaussian matrix.
pub fn hanson_wright_tail_check(
    size: usize,
    samples: usize,
    t_grid: &[f64],
    seed: u64,
    variable: TailVariable,
) -> Result<TailCheck> {
    let m = random_diagonal_free(size, derive_seed(seed, &[u64::MAX]));
    tail_check_with_matrix(&m, size, samples, t_grid, seed, variable)
}
